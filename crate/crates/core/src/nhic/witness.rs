use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_block_conditions, BlockMap, FlowBlockMap, IsolatingBlockReport, IsolatingBlockSpec, Verdict};
use crate::dynamics::{HalfLagrangianField, Rescaled, RescalingSigma};
use crate::error::{Error, Result};
use crate::family::FamilyMember;
use crate::slowsys::{BlockDecomposition, SlowSystem};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WitnessOptions {
    /// Center grid points per axis (inclusive of the box corners).
    pub points_per_axis: usize,
    pub bisection_tol: f64,
    /// Iterates allowed for an orbit to leave the block.
    pub max_steps: usize,
    /// Alternations between the stable and the unstable graph.
    pub rounds: usize,
    pub integrator_tolerance: f64,
}

impl Default for WitnessOptions {
    fn default() -> Self {
        WitnessOptions { points_per_axis: 5, bisection_tol: 1e-12, max_steps: 40, rounds: 20, integrator_tolerance: 1e-8 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct WitnessSample {
    pub z: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

/// Samples of `(x, y) = w^c(z)`, the points of the block whose forward and
/// backward orbits stay in it.
#[derive(Clone, Debug, Serialize)]
pub struct CylinderWitness {
    pub samples: Vec<WitnessSample>,
    /// `sup |π_{xy} F(P) - w^c(π_z F(P))|` over the samples `P`.
    pub invariance_defect: f64,
    pub rounds_used: usize,
}

/// Sign of `π_idx` when the orbit of `p` under `f` leaves `|·| <= r`, or 0
/// if it stays for `max_steps` iterates.
fn escape_sign(f: &dyn BlockMap, p: &[f64], idx: usize, r: f64, max_steps: usize) -> Result<f64> {
    let mut p = p.to_vec();
    for _ in 0..max_steps {
        p = f.eval(&p)?;
        if p[idx].abs() > r {
            return Ok(p[idx].signum());
        }
    }
    Ok(0.0)
}

/// The `t ∈ [-r, r]` where the escape sign of `at(t)` changes.
fn bisect(f: &dyn BlockMap, at: impl Fn(f64) -> Vec<f64>, idx: usize, r: f64, opts: &WitnessOptions) -> Result<f64> {
    let sign = |t: f64| escape_sign(f, &at(t), idx, r, opts.max_steps);
    let (mut lo, mut hi) = (-r, r);
    if sign(lo)? >= 0.0 || sign(hi)? <= 0.0 {
        return Err(Error::Convergence("boundary orbits of the block do not escape on opposite sides".into()));
    }
    while hi - lo > opts.bisection_tol {
        let mid = 0.5 * (lo + hi);
        let s = sign(mid)?;
        if s == 0.0 {
            return Ok(mid);
        }
        if s < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `w^c(z)` by alternating bisections: `y` on the forward-escape graph at
/// fixed `x`, then `x` on the backward-escape graph at fixed `y`.
fn graph_point(forward: &dyn BlockMap, backward: &dyn BlockMap, z: &[f64], r: f64, opts: &WitnessOptions) -> Result<(f64, f64, usize)> {
    let point = |x: f64, y: f64| -> Vec<f64> { [x, y].iter().chain(z).copied().collect() };
    let (mut x, mut y) = (0.0, 0.0);
    for round in 1..=opts.rounds {
        let y_new = bisect(forward, |t| point(x, t), 1, r, opts)?;
        let x_new = bisect(backward, |t| point(t, y_new), 0, r, opts)?;
        let moved = (x_new - x).abs().max((y_new - y).abs());
        x = x_new;
        y = y_new;
        if moved <= 2.0 * opts.bisection_tol {
            return Ok((x, y, round));
        }
    }
    Err(Error::Convergence(format!("center graph at z = {z:?} did not settle in {} rounds", opts.rounds)))
}

fn center_grid(spec: &IsolatingBlockSpec, k: usize) -> Vec<Vec<f64>> {
    let c = spec.center_dim();
    let total = k.pow(c as u32);
    (0..total)
        .map(|mut idx| {
            (0..c)
                .map(|a| {
                    let i = idx % k;
                    idx /= k;
                    let t = if k == 1 { 0.5 } else { i as f64 / (k - 1) as f64 };
                    spec.center_lo[a] + t * (spec.center_hi[a] - spec.center_lo[a])
                })
                .collect()
        })
        .collect()
}

/// Graph witness of the cylinder isolated by a block with `s = u = 1`.
pub fn cylinder_witness(forward: &dyn BlockMap, backward: &dyn BlockMap, spec: &IsolatingBlockSpec, opts: &WitnessOptions) -> Result<CylinderWitness> {
    spec.validate()?;
    if spec.s != 1 || spec.u != 1 {
        return Err(Error::Dimension("graph witness is implemented for s = u = 1".into()));
    }
    if opts.points_per_axis == 0 || !(opts.bisection_tol > 0.0) {
        return Err(Error::Model("witness needs a nonempty center grid and a positive bisection tolerance".into()));
    }
    let r = spec.r;
    let rows: Vec<(WitnessSample, f64, usize)> = center_grid(spec, opts.points_per_axis)
        .into_par_iter()
        .map(|z| {
            let (x, y, rounds) = graph_point(forward, backward, &z, r, opts)?;
            let p: Vec<f64> = [x, y].iter().chain(&z).copied().collect();
            let fp = forward.eval(&p)?;
            let (gx, gy, _) = graph_point(forward, backward, &fp[2..], r, opts)?;
            let defect = (fp[0] - gx).hypot(fp[1] - gy);
            Ok((WitnessSample { z, x: vec![x], y: vec![y] }, defect, rounds))
        })
        .collect::<Result<_>>()?;
    let invariance_defect = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    let rounds_used = rows.iter().map(|r| r.2).max().unwrap_or(0);
    Ok(CylinderWitness { samples: rows.into_iter().map(|r| r.0).collect(), invariance_defect, rounds_used })
}

/// Hyperbolic fixed point `φ*` of the strong system, the base of the
/// unperturbed cylinder `{(φ*, 0)} × R^{2(d-m)}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrongSaddle {
    pub phi: Vec<f64>,
}

impl StrongSaddle {
    /// Columns `(w_i, -λ_i w_i)` then `(w_i, λ_i w_i)`, normalised, with
    /// `A D²U^st(φ*) w_i = λ_i² w_i`; returns the frame and the `λ_i`.
    pub fn frame(&self, sys: &SlowSystem, dec: &BlockDecomposition) -> Result<(DMatrix<f64>, Vec<f64>)> {
        let m = sys.m();
        if self.phi.len() != m {
            return Err(Error::Dimension(format!("saddle of length {} for m = {m}", self.phi.len())));
        }
        // U^st lives on T^d but does not depend on the weak angles
        let strong = sys.strong_potential();
        let mut phi = self.phi.clone();
        phi.resize(strong.dim(), 0.0);
        if strong.gradient(&phi)[..m].iter().any(|g| g.abs() > 1e-9) {
            return Err(Error::Model(format!("φ* = {:?} is not a critical point of U^st", self.phi)));
        }
        let hess = strong.hessian(&phi).view((0, 0), (m, m)).into_owned();
        let a_half = SymmetricEigen::new(dec.a.clone());
        let root = &a_half.eigenvectors * DMatrix::from_diagonal(&a_half.eigenvalues.map(f64::sqrt)) * a_half.eigenvectors.transpose();
        let eig = SymmetricEigen::new(&root * hess * &root);
        if eig.eigenvalues.iter().any(|l| !(*l > 0.0)) {
            return Err(Error::Model(format!("φ* is not hyperbolic: A D²U^st has eigenvalues {:?}", eig.eigenvalues.as_slice())));
        }
        let mut frame = DMatrix::zeros(2 * m, 2 * m);
        let mut lambdas = Vec::with_capacity(m);
        for i in 0..m {
            let lam = eig.eigenvalues[i].sqrt();
            let w = &root * eig.eigenvectors.column(i);
            for (col, sgn) in [(i, -1.0), (m + i, 1.0)] {
                let v = DVector::from_iterator(2 * m, w.iter().copied().chain(w.iter().map(|c| sgn * lam * c)));
                frame.set_column(col, &v.normalize());
            }
            lambdas.push(lam);
        }
        Ok((frame, lambdas))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PersistenceRow {
    pub mu: i64,
    pub certificate_passed: bool,
    pub lambdas: Vec<f64>,
    pub block: IsolatingBlockReport,
    pub witness: Option<CylinderWitness>,
    /// `sup |(φ^st - φ*, v^st)|` over the witness samples.
    pub strong_distance: Option<f64>,
    pub within_delta: Option<bool>,
    /// Step-doubling estimate of the time-one map error on the witness.
    pub integrator_error: Option<f64>,
    pub defect_ok: Option<bool>,
    pub diagnostics: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct PersistenceReport {
    pub delta: f64,
    pub dt: f64,
    pub rows: Vec<PersistenceRow>,
    /// Every member passed the block check and produced a witness within
    /// `δ` whose invariance defect is at most ten integrator tolerances.
    pub all_pass: bool,
    /// Witness distances strictly decrease along the schedule.
    pub distance_decreasing: bool,
}

fn persistence_row(
    saddle: &StrongSaddle,
    member: &FamilyMember,
    q: f64,
    spec: &IsolatingBlockSpec,
    opts: &WitnessOptions,
    delta: f64,
    dt: f64,
) -> Result<PersistenceRow> {
    let sys = &member.system;
    let (m, d) = (sys.m(), sys.d());
    if spec.s != m || spec.u != m || spec.center_dim() != 2 * (d - m) {
        return Err(Error::Dimension(format!(
            "block (s, u, c) = ({}, {}, {}) does not fit m = {m}, d = {d}",
            spec.s,
            spec.u,
            spec.center_dim()
        )));
    }
    let dec = BlockDecomposition::new(sys)?;
    let (strong_frame, lambdas) = saddle.frame(sys, &dec)?;
    let sigma = RescalingSigma::for_basis(&member.basis, q)?;
    let field = Rescaled::new(HalfLagrangianField::new(sys, &dec), &sigma, m)?;
    let n = 2 * d;
    let mut frame = DMatrix::identity(n, n);
    frame.view_mut((0, 0), (2 * m, 2 * m)).copy_from(&strong_frame);
    let mut origin = vec![0.0; n];
    origin[..m].copy_from_slice(&saddle.phi);
    let forward = FlowBlockMap::new(&field, origin, frame, 1.0, dt)?;
    let backward = forward.inverse();
    let block = check_block_conditions(&forward, &backward, spec)?;
    let mut row = PersistenceRow {
        mu: member.mu,
        certificate_passed: member.certificate.passed,
        lambdas,
        block,
        witness: None,
        strong_distance: None,
        within_delta: None,
        integrator_error: None,
        defect_ok: None,
        diagnostics: vec![],
    };
    if row.block.overall != Verdict::Pass {
        row.diagnostics.push(format!("block check {:?}; witness skipped", row.block.overall));
        return Ok(row);
    }
    let witness = match cylinder_witness(&forward, &backward, spec, opts) {
        Ok(w) => w,
        Err(e) => {
            row.diagnostics.push(format!("witness extraction failed: {e}"));
            return Ok(row);
        }
    };
    let fine = forward.with_dt(0.5 * dt);
    let mut integ = 0.0f64;
    for smp in witness.samples.iter().take(8) {
        let p: Vec<f64> = smp.x.iter().chain(&smp.y).chain(&smp.z).copied().collect();
        let a = forward.eval(&p)?;
        let b = fine.eval(&p)?;
        integ = integ.max(a.iter().zip(&b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max));
    }
    let dist = witness
        .samples
        .iter()
        .map(|smp| {
            let xy = DVector::from_iterator(2 * m, smp.x.iter().chain(&smp.y).copied());
            (&strong_frame * xy).norm()
        })
        .fold(0.0, f64::max);
    if integ > opts.integrator_tolerance {
        row.diagnostics.push(format!("integrator error {integ:.2e} exceeds tolerance {:.2e}", opts.integrator_tolerance));
    }
    row.defect_ok = Some(witness.invariance_defect <= 10.0 * opts.integrator_tolerance && integ <= opts.integrator_tolerance);
    row.integrator_error = Some(integ);
    row.strong_distance = Some(dist);
    row.within_delta = Some(dist < delta);
    row.witness = Some(witness);
    Ok(row)
}

/// Block check and cylinder witness for the rescaled time-one map of each
/// member, around `{(φ*, 0)} ×` center.
pub fn persistence_demo(
    saddle: &StrongSaddle,
    members: &[FamilyMember],
    q: f64,
    spec: &IsolatingBlockSpec,
    opts: &WitnessOptions,
    delta: f64,
    dt: f64,
) -> Result<PersistenceReport> {
    if members.is_empty() {
        return Err(Error::Degenerate("persistence demo needs at least one member".into()));
    }
    let rows: Vec<PersistenceRow> =
        members.iter().map(|mb| persistence_row(saddle, mb, q, spec, opts, delta, dt)).collect::<Result<_>>()?;
    let all_pass = rows.iter().all(|r| r.block.overall == Verdict::Pass && r.within_delta == Some(true) && r.defect_ok == Some(true));
    let dists: Vec<Option<f64>> = rows.iter().map(|r| r.strong_distance).collect();
    let distance_decreasing = dists.iter().all(Option::is_some) && dists.windows(2).all(|w| w[1] < w[0]);
    Ok(PersistenceReport { delta, dt, rows, all_pass, distance_decreasing })
}
