//! One function per task, each composing module operations into checks,
//! a JSON result tree and CSV tables.

use dominant::averaging::{dominance_check, TrigPolynomial};
use dominant::dynamics::{rescaled_deviation, SampleBox};
use dominant::family::FamilyMember;
use dominant::fit::log_log_slope;
use dominant::lattice::{adapted_basis, ResonanceLattice};
use dominant::nhic::{persistence_demo, Verdict};
use dominant::slowsys::{lagrangian_split_eval, ztilde_bound_check, BlockDecomposition, ConvexModel, MechanicalLagrangian};
use dominant::weakkam::{
    rotation_experiment, semicontinuity_experiment, solve_with, verify_alpha_relation, DiscreteActionConfig, LaxOleinik,
};
use nalgebra::DMatrix;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::config::{BasisParams, ExperimentConfig, ReportParams, Task};
use crate::report::{fmt, fmt_vec, CheckResult, Table, TaskOutput};
use crate::CliError;

fn to_value<T: serde::Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("results serialize")
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

pub fn run_task(cfg: &ExperimentConfig, seed: u64) -> Result<TaskOutput, CliError> {
    match cfg.task {
        Task::Basis => basis(cfg.basis.as_ref().expect("validated")),
        Task::Slow => slow(cfg, seed),
        Task::RescaleScan => rescale_scan(cfg, seed),
        Task::Weakkam => weakkam(cfg, seed),
        Task::Semicont => semicont(cfg, seed),
        Task::Nhic => nhic(cfg, seed),
        Task::Report => report(cfg.report.as_ref().expect("validated")),
    }
}

fn basis(p: &BasisParams) -> Result<TaskOutput, CliError> {
    let lat = ResonanceLattice::new(p.ambient_dim, p.generators.clone())?;
    let a = adapted_basis(&p.strong, &lat)?;
    let spans = ResonanceLattice::new(p.ambient_dim, a.basis.vectors().to_vec())?.same_lattice(&lat)?;
    let irreducible = a.basis.prefixes_irreducible()?;
    let excess = a.norm_bound_excess();
    let checks = vec![
        CheckResult::flag("basis_spans_lattice", spans),
        CheckResult::flag("prefixes_irreducible", irreducible),
        CheckResult::at_most("norm_bound_excess", excess as f64, 0.0),
    ];
    let m = a.basis.split_index();
    let mut t = Table::new("basis", &["index", "role", "vector", "norm", "minimum"]);
    for (i, k) in a.basis.vectors().iter().enumerate() {
        let (role, min) = if i < m { ("strong", String::new()) } else { ("weak", a.minima[i - m].to_string()) };
        t.push(vec![(i + 1).to_string(), role.into(), fmt_vec(&k.0), k.norm().to_string(), min]);
    }
    let results = json!({
        "adapted": to_value(&a),
        "strong_norm_sum": a.strong_norm_sum(),
        "norm_bound_excess": excess,
        "weak_norms": a.basis.weak().iter().map(|k| k.norm()).collect::<Vec<_>>(),
    });
    Ok(TaskOutput { checks, results, tables: vec![t] })
}

fn convexity(model: &ConvexModel) -> f64 {
    match model {
        ConvexModel::Constant { convexity, .. } | ConvexModel::Affine { convexity, .. } => *convexity,
    }
}

fn source_model(cfg: &ExperimentConfig, seed: u64) -> ConvexModel {
    match (&cfg.family, &cfg.system) {
        (Some(f), _) => f.rule(seed).model,
        (None, Some(s)) => s.model.clone(),
        _ => unreachable!("validated"),
    }
}

fn slow(cfg: &ExperimentConfig, seed: u64) -> Result<TaskOutput, CliError> {
    let p = cfg.slow_params();
    let members = cfg.members(seed)?;
    let big_d = convexity(&source_model(cfg, seed));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = Vec::new();
    let mut rows = Vec::new();
    let mut t = Table::new("slow", &["mu", "dominance_passed", "decomposition_residual", "split_residual", "z_tilde"]);
    for mb in &members {
        let sys = &mb.system;
        let d = sys.d();
        let dec = BlockDecomposition::new(sys)?;
        let decomposition = dec.diagonalization_residual(sys.s());
        let mut split: f64 = 0.0;
        for _ in 0..p.samples {
            let c: Vec<f64> = (0..d).map(|_| rng.random_range(-p.class_radius..p.class_radius)).collect();
            let phi: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..1.0)).collect();
            let v: Vec<f64> = (0..d).map(|_| rng.random_range(-p.velocity_radius..p.velocity_radius)).collect();
            split = split.max(lagrangian_split_eval(sys, &dec, &c, &phi, &v)?.residual);
        }
        let zt = ztilde_bound_check(sys, &dec, 1.0, big_d);
        let explicit = zt.iter().all(|r| r.z_tilde_inv <= r.explicit_bound);
        let mu = mb.mu;
        checks.push(CheckResult::flag(format!("mu={mu}:dominance"), mb.certificate.passed));
        checks.push(CheckResult::at_most(format!("mu={mu}:decomposition_residual"), decomposition, p.tolerance));
        checks.push(CheckResult::at_most(format!("mu={mu}:split_residual"), split, p.tolerance));
        checks.push(CheckResult::flag(format!("mu={mu}:z_tilde_explicit_bound"), explicit));
        t.push(vec![
            mu.to_string(),
            mb.certificate.passed.to_string(),
            fmt(decomposition),
            fmt(split),
            fmt_vec(&dec.z_tilde),
        ]);
        rows.push(json!({
            "mu": mu,
            "basis": mb.basis.vectors().iter().map(|k| k.0.clone()).collect::<Vec<_>>(),
            "certificate": to_value(&mb.certificate),
            "a": dec.a.iter().copied().collect::<Vec<f64>>(),
            "c_tilde": dec.c_tilde.iter().copied().collect::<Vec<f64>>(),
            "z_tilde": dec.z_tilde,
            "decomposition_residual": decomposition,
            "split_residual": split,
            "split_samples": p.samples,
            "z_tilde_rows": to_value(&zt),
        }));
    }
    Ok(TaskOutput { checks, results: json!({ "members": rows }), tables: vec![t] })
}

fn rescale_scan(cfg: &ExperimentConfig, seed: u64) -> Result<TaskOutput, CliError> {
    let p = cfg.rescale.as_ref().expect("validated");
    let q = p.q.or(cfg.source_q(seed)).expect("family present");
    let members = cfg.members(seed)?;
    if members.len() < 2 {
        return Err(invalid("rescale-scan needs at least two family members to fit slopes"));
    }
    let sb = SampleBox { angle_extent: p.sample_box.angle_extent, v_radius: p.sample_box.v_radius, i_radius: p.sample_box.i_radius };
    let mut reports = Vec::new();
    let mut t = Table::new("rescale", &["mu", "sigma", "c0_projected", "c1"]);
    for mb in &members {
        let dec = BlockDecomposition::new(&mb.system)?;
        let r = rescaled_deviation(&mb.system, &dec, q, sb, p.samples)?;
        t.push(vec![r.mu.to_string(), fmt_vec(&r.sigma), fmt(r.c0_projected), fmt(r.c1)]);
        reports.push(r);
    }
    let mus: Vec<f64> = reports.iter().map(|r| r.mu as f64).collect();
    let c0: Vec<f64> = reports.iter().map(|r| r.c0_projected).collect();
    let c1: Vec<f64> = reports.iter().map(|r| r.c1).collect();
    let slope_c0 = log_log_slope(&mus, &c0);
    let slope_c1 = log_log_slope(&mus, &c1);
    let bound_c0 = -(q - 1.0) + p.slack;
    let bound_c1 = -(q - 2.0) / 3.0 + p.slack;

    let control_sys = members[0].system.without_weak()?;
    let control_dec = BlockDecomposition::new(&control_sys)?;
    let control = rescaled_deviation(&control_sys, &control_dec, q, sb, p.samples)?;

    let checks = vec![
        CheckResult::at_most("slope_c0_projected", slope_c0, bound_c0),
        CheckResult::at_most("slope_c1", slope_c1, bound_c1),
        CheckResult::at_most("control_c0_projected", control.c0_projected, p.control_tolerance),
    ];
    let results = json!({
        "q": q,
        "rows": to_value(&reports),
        "slope_c0_projected": slope_c0,
        "slope_c1": slope_c1,
        "bound_c0_projected": bound_c0,
        "bound_c1": bound_c1,
        "control": to_value(&control),
    });
    Ok(TaskOutput { checks, results, tables: vec![t] })
}

fn grid_for(grid: &Option<DiscreteActionConfig>, d: usize) -> Result<DiscreteActionConfig, CliError> {
    let g = match grid {
        Some(g) => *g,
        None => DiscreteActionConfig::for_dim(d)?,
    };
    g.validate(d)?;
    Ok(g)
}

fn square(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, CliError> {
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != n) {
        return Err(invalid("weakkam.lagrangian.s must be a nonempty square matrix"));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn weakkam(cfg: &ExperimentConfig, seed: u64) -> Result<TaskOutput, CliError> {
    let p = cfg.weakkam.as_ref().expect("validated");
    if let Some(lp) = &p.lagrangian {
        let s = square(&lp.s)?;
        let d = s.nrows();
        let s_inv = s.clone().try_inverse().ok_or_else(|| invalid("weakkam.lagrangian.s is singular"))?;
        let potential = match &lp.potential {
            Some(u) => u.clone(),
            None => TrigPolynomial::zero(d),
        };
        let free = potential.terms().all(|(_, h)| h.norm() == 0.0);
        let lag = MechanicalLagrangian::new(s_inv, potential)?;
        let grid = grid_for(&p.grid, d)?;
        let s_norm = s.row_iter().map(|r| r.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max);
        let budget = 2.0 * s_norm * (1.0 / grid.resolution as f64 + grid.h);
        let mut checks = Vec::new();
        let mut rows = Vec::new();
        let mut t = Table::new("weakkam", &["c", "alpha", "alpha_lo", "alpha_hi", "iterations", "exact"]);
        for (i, c) in p.classes.iter().enumerate() {
            if c.len() != d {
                return Err(invalid(format!("class {i} has length {}, expected {d}", c.len())));
            }
            let op = LaxOleinik::new(&lag, c, &grid)?;
            let u = solve_with(&op, c, p.tolerance, p.max_iter)?;
            let cv = nalgebra::DVector::from_column_slice(c);
            let exact = free.then(|| 0.5 * cv.dot(&(&s * &cv)));
            if let Some(e) = exact {
                checks.push(CheckResult::at_most(format!("class={i}:free_alpha_error"), (u.alpha - e).abs(), budget));
            }
            t.push(vec![
                fmt_vec(c),
                fmt(u.alpha),
                fmt(u.alpha_bounds.0),
                fmt(u.alpha_bounds.1),
                u.stats.iterations.to_string(),
                exact.map(fmt).unwrap_or_default(),
            ]);
            rows.push(json!({
                "c": c,
                "alpha": u.alpha,
                "alpha_bounds": [u.alpha_bounds.0, u.alpha_bounds.1],
                "stats": to_value(&u.stats),
                "exact": exact,
                "oscillation": u.oscillation(),
            }));
        }
        let results = json!({ "grid": to_value(&grid), "free": free, "budget": budget, "rows": rows });
        return Ok(TaskOutput { checks, results, tables: vec![t] });
    }

    let rule = p.c_rule.as_ref().expect("validated");
    let members = cfg.members(seed)?;
    let grid = grid_for(&p.grid, members[0].system.d())?;
    let mut checks = Vec::new();
    let mut rows = Vec::new();
    let mut t = Table::new("alpha_relation", &["mu", "control", "c", "alpha_slow", "alpha_strong", "quadratic", "defect", "budget"]);
    let mut cases: Vec<(i64, bool, dominant::slowsys::SlowSystem)> =
        members.iter().map(|mb| (mb.mu, false, mb.system.clone())).collect();
    if p.control {
        cases.push((members[0].mu, true, members[0].system.without_weak()?));
    }
    for (mu, control, sys) in &cases {
        let dec = BlockDecomposition::new(sys)?;
        let c = rule.class(sys, &dec, &grid)?;
        let r = verify_alpha_relation(sys, &c, &grid, p.tolerance, p.max_iter)?;
        let tag = if *control { format!("mu={mu}:control") } else { format!("mu={mu}") };
        checks.push(CheckResult::at_most(format!("{tag}:alpha_relation"), r.defect, r.budget));
        t.push(vec![
            mu.to_string(),
            control.to_string(),
            fmt_vec(&c),
            fmt(r.alpha_slow),
            fmt(r.alpha_strong),
            fmt(r.quadratic),
            fmt(r.defect),
            fmt(r.budget),
        ]);
        rows.push(json!({ "mu": mu, "control": control, "report": to_value(&r) }));
    }
    Ok(TaskOutput { checks, results: json!({ "grid": to_value(&grid), "rows": rows }), tables: vec![t] })
}

fn semicont(cfg: &ExperimentConfig, seed: u64) -> Result<TaskOutput, CliError> {
    let p = cfg.semicont.as_ref().expect("validated");
    let members = cfg.members(seed)?;
    let q = p.q.or(cfg.source_q(seed)).expect("family present");
    let grid = grid_for(&p.grid, members[0].system.d())?;
    let sc = semicontinuity_experiment(&members, &p.c_rule, &grid, p.tolerance, p.max_iter, q)?;
    let rot = rotation_experiment(&members, &p.c_rule, &grid, p.tolerance, p.max_iter, p.steps, &p.beta_offsets)?;
    let mut checks = vec![
        CheckResult::flag("oscillation_nonincreasing", sc.oscillation_nonincreasing),
        CheckResult::flag("profile_gap_nonincreasing", sc.gap_nonincreasing),
    ];
    if let Some(s) = sc.slope {
        checks.push(CheckResult::at_most("oscillation_slope", s, sc.slope_bound));
    }
    checks.push(CheckResult::flag("rotation_residual_nonincreasing", rot.residual_nonincreasing));
    for r in &rot.rows {
        checks.push(CheckResult::at_most(format!("mu={}:fenchel_upper", r.mu), r.fenchel_defect, r.weak_sup_grid + rot.fenchel_tolerance));
        checks.push(CheckResult::at_most(format!("mu={}:fenchel_lower", r.mu), -r.fenchel_defect, rot.fenchel_tolerance));
    }
    let mut ts = Table::new("semicont", &["mu", "c", "alpha", "oscillation", "profile_gap", "weak_sup_grid"]);
    for r in &sc.rows {
        ts.push(vec![r.mu.to_string(), fmt_vec(&r.c), fmt(r.alpha), fmt(r.oscillation), fmt(r.profile_gap), fmt(r.weak_sup_grid)]);
    }
    let mut tr = Table::new("rotation", &["mu", "rho", "cycle_found", "residual", "beta_strong", "fenchel_defect"]);
    for r in &rot.rows {
        tr.push(vec![
            r.mu.to_string(),
            fmt_vec(&r.rho),
            r.cycle_found.to_string(),
            fmt(r.residual),
            fmt(r.beta_strong),
            fmt(r.fenchel_defect),
        ]);
    }
    let results = json!({ "grid": to_value(&grid), "q": q, "semicontinuity": to_value(&sc), "rotation": to_value(&rot) });
    Ok(TaskOutput { checks, results, tables: vec![ts, tr] })
}

fn nhic(cfg: &ExperimentConfig, seed: u64) -> Result<TaskOutput, CliError> {
    let p = cfg.nhic.as_ref().expect("validated");
    let members = cfg.members(seed)?;
    let q = p.q.or(cfg.source_q(seed)).expect("family present");
    let opts = p.witness.clone().unwrap_or_default();
    let rep = persistence_demo(&p.saddle, &members, q, &p.block, &opts, p.delta, p.dt)?;
    let mut checks = Vec::new();
    let mut t = Table::new(
        "nhic",
        &["mu", "verdict", "contraction", "expansion", "strong_distance", "invariance_defect", "integrator_error"],
    );
    for r in &rep.rows {
        let mu = r.mu;
        checks.push(CheckResult::flag(format!("mu={mu}:block"), r.block.overall == Verdict::Pass));
        checks.push(CheckResult::at_most(format!("mu={mu}:strong_distance"), r.strong_distance.unwrap_or(f64::INFINITY), p.delta));
        let defect = r.witness.as_ref().map_or(f64::INFINITY, |w| w.invariance_defect);
        checks.push(CheckResult::at_most(format!("mu={mu}:invariance_defect"), defect, 10.0 * opts.integrator_tolerance));
        checks.push(CheckResult::at_most(
            format!("mu={mu}:integrator_error"),
            r.integrator_error.unwrap_or(f64::INFINITY),
            opts.integrator_tolerance,
        ));
        t.push(vec![
            mu.to_string(),
            format!("{:?}", r.block.overall),
            fmt(r.block.forward.contraction),
            fmt(r.block.forward.expansion),
            r.strong_distance.map(fmt).unwrap_or_default(),
            r.witness.as_ref().map(|w| fmt(w.invariance_defect)).unwrap_or_default(),
            r.integrator_error.map(fmt).unwrap_or_default(),
        ]);
    }
    checks.push(CheckResult::flag("strong_distance_decreasing", rep.distance_decreasing));
    let mut control = Value::Null;
    if let Some(nc) = &p.negative_control {
        let base = &members[0];
        let system = base.system.with_weak_scaled(nc.weak_scale)?;
        let certificate = dominance_check(&base.basis, system.potentials(), base.certificate.kappa, base.certificate.q, false)?;
        let member = FamilyMember { mu: base.mu, basis: base.basis.clone(), system, certificate };
        let cr = persistence_demo(&p.saddle, std::slice::from_ref(&member), q, &p.block, &opts, p.delta, p.dt)?;
        let row = &cr.rows[0];
        checks.push(CheckResult::flag("negative_control_rejected", row.block.overall != Verdict::Pass));
        control = json!({
            "weak_scale": nc.weak_scale,
            "certificate_passed": row.certificate_passed,
            "verdict": to_value(&row.block.overall),
            "forward": to_value(&row.block.forward),
            "inverse": to_value(&row.block.inverse),
        });
    }
    let rows: Vec<Value> = rep
        .rows
        .iter()
        .map(|r| {
            json!({
                "mu": r.mu,
                "certificate_passed": r.certificate_passed,
                "lambdas": r.lambdas,
                "block": to_value(&r.block),
                "strong_distance": r.strong_distance,
                "within_delta": r.within_delta,
                "integrator_error": r.integrator_error,
                "invariance_defect": r.witness.as_ref().map(|w| w.invariance_defect),
                "witness_rounds": r.witness.as_ref().map(|w| w.rounds_used),
                "defect_ok": r.defect_ok,
                "diagnostics": r.diagnostics,
            })
        })
        .collect();
    let results = json!({
        "q": q,
        "delta": rep.delta,
        "dt": rep.dt,
        "witness_options": to_value(&opts),
        "rows": rows,
        "all_pass": rep.all_pass,
        "distance_decreasing": rep.distance_decreasing,
        "negative_control": control,
    });
    Ok(TaskOutput { checks, results, tables: vec![t] })
}

fn report(p: &ReportParams) -> Result<TaskOutput, CliError> {
    let mut checks = Vec::new();
    let mut rows = Vec::new();
    let mut t = Table::new("summary", &["input", "task", "config_hash", "version", "pass", "failed_checks"]);
    for path in &p.inputs {
        let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("reading {}: {e}", path.display())))?;
        let v: Value = serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        let field = |k: &str| v.get(k).cloned().ok_or_else(|| invalid(format!("{} lacks `{k}`", path.display())));
        let task = field("task")?;
        let hash = field("config_hash")?;
        let version = field("version")?;
        let pass = field("pass")?.as_bool().ok_or_else(|| invalid(format!("{}: `pass` is not a boolean", path.display())))?;
        let failed: Vec<String> = field("checks")?
            .as_array()
            .map(|a| {
                a.iter()
                    .filter(|c| c.get("pass") == Some(&Value::Bool(false)))
                    .filter_map(|c| c.get("name").and_then(Value::as_str).map(str::to_string))
                    .collect()
            })
            .unwrap_or_default();
        let name = format!("{}:{}", task.as_str().unwrap_or("?"), hash.as_str().unwrap_or("?"));
        checks.push(CheckResult::flag(name, pass));
        let input = path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        t.push(vec![
            input.clone(),
            task.as_str().unwrap_or("").into(),
            hash.as_str().unwrap_or("").into(),
            version.as_str().unwrap_or("").into(),
            pass.to_string(),
            failed.join(" "),
        ]);
        rows.push(json!({ "input": input, "task": task, "config_hash": hash, "version": version, "pass": pass, "failed_checks": failed }));
    }
    Ok(TaskOutput { checks, results: json!({ "inputs": rows }), tables: vec![t] })
}
