use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{calibrated_curve, cycle_rotation_number, grid_values, rotation_number, solve_with, DiscreteActionConfig, GridValueFunction, LaxOleinik};
use crate::error::{Error, Result};
use crate::family::FamilyMember;
use crate::fit::log_log_slope;
use crate::slowsys::{BlockDecomposition, MechanicalLagrangian, SlowSystem};

/// Cohomology classes assigned to the members of a family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CRule {
    /// The same `c` for every member.
    Fixed { c: Vec<f64> },
    /// `c^wk = C̃^{-1} j / (N h)` and `c^st = c̄ - A^{-1} B c^wk`: the optimal
    /// weak step `h C̃ c^wk` is the grid vector `j / N`, and `c̄` is fixed.
    OnGrid { c_bar: Vec<f64>, steps: Vec<i64> },
}

impl CRule {
    pub fn class(&self, sys: &SlowSystem, dec: &BlockDecomposition, cfg: &DiscreteActionConfig) -> Result<Vec<f64>> {
        let (m, d) = (sys.m(), sys.d());
        match self {
            CRule::Fixed { c } => {
                if c.len() != d {
                    return Err(Error::Dimension(format!("class of length {} on T^{d}", c.len())));
                }
                Ok(c.clone())
            }
            CRule::OnGrid { c_bar, steps } => {
                if c_bar.len() != m || steps.len() != d - m {
                    return Err(Error::Dimension(format!("on-grid rule needs c̄ of length {m} and {} steps", d - m)));
                }
                let j = DVector::from_iterator(d - m, steps.iter().map(|&s| s as f64 / (cfg.resolution as f64 * cfg.h)));
                let cw = &dec.c_tilde_inv * j;
                let cs = DVector::from_column_slice(c_bar) - &dec.a_inv * &dec.b * &cw;
                Ok(cs.iter().chain(cw.iter()).copied().collect())
            }
        }
    }
}

fn solve(lag: &MechanicalLagrangian, c: &[f64], cfg: &DiscreteActionConfig, tol: f64, max_iter: usize) -> Result<(LaxOleinik, GridValueFunction)> {
    let op = LaxOleinik::new(lag, c, cfg)?;
    let u = solve_with(&op, c, tol, max_iter)?;
    Ok((op, u))
}

fn half_width(u: &GridValueFunction) -> f64 {
    0.5 * (u.alpha_bounds.1 - u.alpha_bounds.0)
}

fn sup_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

/// Comparison of the slow alpha function with the strong one plus the weak
/// kinetic term.
#[derive(Clone, Debug, Serialize)]
pub struct AlphaRelationReport {
    pub c: Vec<f64>,
    pub c_bar: Vec<f64>,
    pub c_weak: Vec<f64>,
    pub alpha_slow: f64,
    pub alpha_strong: f64,
    /// `½ c^wk·C̃ c^wk`
    pub quadratic: f64,
    /// `|α_s(c) - α_st(c̄) - ½ c^wk·C̃ c^wk|`
    pub defect: f64,
    /// `max |U^wk|` over the grid, used in the budget.
    pub weak_sup_grid: f64,
    /// Sum of `|U^wk|` Fourier coefficients, an upper bound for `‖U^wk‖_{C⁰}`.
    pub weak_c0_bound: f64,
    /// Largest alpha bracket half-width of the two solves.
    pub solver_tolerance: f64,
    pub budget: f64,
    pub pass: bool,
    /// Which sign of the quadratic term is tested.
    pub relation: String,
}

/// Solves the slow system at `c` and its strong system at `c̄` on the same
/// grid and checks `|α_s - α_st(c̄) - ½ c^wk·C̃ c^wk| <= max|U^wk| + 2 tol_α`.
pub fn verify_alpha_relation(
    sys: &SlowSystem,
    c: &[f64],
    cfg: &DiscreteActionConfig,
    tol: f64,
    max_iter: usize,
) -> Result<AlphaRelationReport> {
    let (m, d) = (sys.m(), sys.d());
    if c.len() != d {
        return Err(Error::Dimension(format!("class of length {} on T^{d}", c.len())));
    }
    let dec = BlockDecomposition::new(sys)?;
    let c_bar = dec.c_bar(c);
    let cw = DVector::from_column_slice(&c[m..]);
    let quadratic = 0.5 * cw.dot(&(&dec.c_tilde * &cw));
    let (_, us) = solve(&MechanicalLagrangian::of_system(sys)?, c, cfg, tol, max_iter)?;
    let strong = MechanicalLagrangian::of_system(&sys.strong_system()?)?;
    let (_, ust) = solve(&strong, &c_bar, cfg, tol, max_iter)?;
    let weak_sup_grid = sup_abs(&grid_values(sys.weak_potential(), cfg.resolution)?);
    let solver_tolerance = half_width(&us).max(half_width(&ust));
    let defect = (us.alpha - ust.alpha - quadratic).abs();
    let budget = weak_sup_grid + 2.0 * solver_tolerance;
    Ok(AlphaRelationReport {
        c: c.to_vec(),
        c_bar,
        c_weak: c[m..].to_vec(),
        alpha_slow: us.alpha,
        alpha_strong: ust.alpha,
        quadratic,
        defect,
        weak_sup_grid,
        weak_c0_bound: sys.weak_potential().c0_bound(),
        solver_tolerance,
        budget,
        pass: defect <= budget,
        relation: "alpha_s(c) = alpha_st(c_bar) + 1/2 c_wk . C~ c_wk".into(),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SemicontinuityRow {
    pub mu: i64,
    pub c: Vec<f64>,
    pub alpha: f64,
    /// `sup_{φ^st} (max - min over φ^wk of u)`
    pub oscillation: f64,
    /// `sup |u(·, φ^wk = 0) - u^st|`, both anchored at the origin.
    pub profile_gap: f64,
    pub weak_sup_grid: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SemicontinuityReport {
    pub rows: Vec<SemicontinuityRow>,
    pub c_bar: Vec<f64>,
    pub alpha_strong: f64,
    pub slack: f64,
    /// Values at or below this are treated as zero.
    pub floor: f64,
    pub oscillation_nonincreasing: bool,
    pub gap_nonincreasing: bool,
    /// Fitted slope of `log osc` against `log μ`, when at least two
    /// oscillations are above the floor.
    pub slope: Option<f64>,
    pub slope_bound: f64,
    pub pass: bool,
}

fn nonincreasing(v: &[f64], slack: f64, floor: f64) -> bool {
    v.windows(2).all(|w| w[1] <= (1.0 + slack) * w[0] + floor)
}

fn strong_reference(members: &[FamilyMember]) -> Result<&SlowSystem> {
    let first = &members.first().ok_or_else(|| Error::Model("empty family".into()))?.system;
    for mb in members {
        let s = &mb.system;
        if s.m() != first.m() || s.d() != first.d() || s.strong_potential() != first.strong_potential() {
            return Err(Error::Model(format!("member μ = {} has a different strong system", mb.mu)));
        }
        let a = s.s().view((0, 0), (s.m(), s.m())).into_owned();
        if (a - first.s().view((0, 0), (s.m(), s.m()))).amax() > 1e-12 {
            return Err(Error::Model(format!("member μ = {} has a different strong block A", mb.mu)));
        }
    }
    Ok(first)
}

fn common_c_bar(classes: &[(Vec<f64>, BlockDecomposition)]) -> Result<Vec<f64>> {
    let c_bar = classes[0].1.c_bar(&classes[0].0);
    for (c, dec) in classes {
        let other = dec.c_bar(c);
        if other.iter().zip(&c_bar).any(|(a, b)| (a - b).abs() > 1e-9) {
            return Err(Error::Model("the class rule does not keep c̄ fixed across the family".into()));
        }
    }
    Ok(c_bar)
}

/// Weak-angle oscillation and strong-profile gap of `u_i` across a family.
pub fn semicontinuity_experiment(
    members: &[FamilyMember],
    rule: &CRule,
    cfg: &DiscreteActionConfig,
    tol: f64,
    max_iter: usize,
    q: f64,
) -> Result<SemicontinuityReport> {
    let first = strong_reference(members)?;
    let (m, d) = (first.m(), first.d());
    let classes: Vec<(Vec<f64>, BlockDecomposition)> = members
        .iter()
        .map(|mb| {
            let dec = BlockDecomposition::new(&mb.system)?;
            Ok((rule.class(&mb.system, &dec, cfg)?, dec))
        })
        .collect::<Result<_>>()?;
    let c_bar = common_c_bar(&classes)?;
    let strong = MechanicalLagrangian::of_system(&first.strong_system()?)?;
    let (_, ust) = solve(&strong, &c_bar, cfg, tol, max_iter)?;
    let block = cfg.resolution.pow((d - m) as u32);
    let mut rows = Vec::with_capacity(members.len());
    for (mb, (c, _)) in members.iter().zip(&classes) {
        let (_, u) = solve(&MechanicalLagrangian::of_system(&mb.system)?, c, cfg, tol, max_iter)?;
        let mut oscillation: f64 = 0.0;
        let mut profile_gap: f64 = 0.0;
        for (s, chunk) in u.values.chunks(block).enumerate() {
            let (lo, hi) = chunk.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(*x), b.max(*x)));
            oscillation = oscillation.max(hi - lo);
            profile_gap = profile_gap.max((chunk[0] - ust.values[s]).abs());
        }
        rows.push(SemicontinuityRow {
            mu: mb.mu,
            c: c.clone(),
            alpha: u.alpha,
            oscillation,
            profile_gap,
            weak_sup_grid: sup_abs(&grid_values(mb.system.weak_potential(), cfg.resolution)?),
        });
    }
    let slack = 0.1;
    let floor = 10.0 * tol;
    let osc: Vec<f64> = rows.iter().map(|r| r.oscillation).collect();
    let gap: Vec<f64> = rows.iter().map(|r| r.profile_gap).collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = rows.iter().filter(|r| r.oscillation > floor).map(|r| (r.mu as f64, r.oscillation)).unzip();
    let slope = if xs.len() >= 2 { Some(log_log_slope(&xs, &ys)) } else { None };
    let slope_bound = -(q / 2.0 - (d - m) as f64) + 0.5;
    let oscillation_nonincreasing = nonincreasing(&osc, slack, floor);
    let gap_nonincreasing = nonincreasing(&gap, slack, floor);
    let pass = oscillation_nonincreasing && gap_nonincreasing && slope.is_none_or(|s| s <= slope_bound);
    Ok(SemicontinuityReport {
        rows,
        c_bar,
        alpha_strong: ust.alpha,
        slack,
        floor,
        oscillation_nonincreasing,
        gap_nonincreasing,
        slope,
        slope_bound,
        pass,
    })
}

/// `β(ρ) = max_i c_i·ρ - α(c_i)` over sampled classes.
pub fn legendre_dual(cs: &[Vec<f64>], alphas: &[f64], rhos: &[Vec<f64>]) -> Result<Vec<f64>> {
    if cs.len() != alphas.len() || cs.is_empty() {
        return Err(Error::Dimension("need one alpha value per sampled class".into()));
    }
    let d = cs[0].len();
    if cs.iter().chain(rhos).any(|v| v.len() != d) {
        return Err(Error::Dimension("classes and rotation vectors differ in length".into()));
    }
    Ok(rhos
        .iter()
        .map(|rho| {
            cs.iter()
                .zip(alphas)
                .map(|(c, a)| c.iter().zip(rho).map(|(x, y)| x * y).sum::<f64>() - a)
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect())
}

/// Smallest `½(a_{i-1} + a_{i+1}) - a_i` along equally spaced samples;
/// positive means strictly midpoint convex.
pub fn midpoint_convex(values: &[f64]) -> f64 {
    values.windows(3).map(|w| 0.5 * (w[0] + w[2]) - w[1]).fold(f64::INFINITY, f64::min)
}

#[derive(Clone, Debug, Serialize)]
pub struct RotationRow {
    pub mu: i64,
    pub c: Vec<f64>,
    pub rho: Vec<f64>,
    /// Rotation of the terminal cycle of the calibrated chain, when found.
    pub cycle_found: bool,
    /// `|ρ^wk - B^T A^{-1} ρ^st - C̃ c^wk|`
    pub residual: f64,
    /// `sup_k ‖v^st_k - A c̄‖`
    pub strong_velocity_deviation: f64,
    pub beta_strong: f64,
    /// `α_st(c̄) + β_st(ρ^st) - c̄·ρ^st`
    pub fenchel_defect: f64,
    pub weak_sup_grid: f64,
    pub fenchel_ok: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct RotationReport {
    pub rows: Vec<RotationRow>,
    pub c_bar: Vec<f64>,
    pub alpha_strong: f64,
    pub fenchel_tolerance: f64,
    pub slack: f64,
    pub floor: f64,
    pub residual_nonincreasing: bool,
    pub pass: bool,
}

/// Rotation vectors of calibrated chains across a family, the projected
/// relation between weak and strong rotation, and the Fenchel defect of the
/// strong part against a sampled `β_st`.
///
/// `beta_offsets` are added to each component of `c̄` to form the tensor
/// grid of strong classes on which `α_st` is sampled; `c̄` itself is always
/// included.
pub fn rotation_experiment(
    members: &[FamilyMember],
    rule: &CRule,
    cfg: &DiscreteActionConfig,
    tol: f64,
    max_iter: usize,
    steps: usize,
    beta_offsets: &[f64],
) -> Result<RotationReport> {
    let first = strong_reference(members)?;
    let m = first.m();
    let classes: Vec<(Vec<f64>, BlockDecomposition)> = members
        .iter()
        .map(|mb| {
            let dec = BlockDecomposition::new(&mb.system)?;
            Ok((rule.class(&mb.system, &dec, cfg)?, dec))
        })
        .collect::<Result<_>>()?;
    let c_bar = common_c_bar(&classes)?;
    let strong = MechanicalLagrangian::of_system(&first.strong_system()?)?;
    let mut grid: Vec<Vec<f64>> = vec![c_bar.clone()];
    let total = beta_offsets.len().pow(m as u32);
    for idx in 0..total {
        let mut r = idx;
        let mut c = c_bar.clone();
        for ck in c.iter_mut() {
            *ck += beta_offsets[r % beta_offsets.len()];
            r /= beta_offsets.len();
        }
        grid.push(c);
    }
    let alphas: Vec<f64> = grid.iter().map(|c| Ok(solve(&strong, c, cfg, tol, max_iter)?.1.alpha)).collect::<Result<_>>()?;
    let alpha_strong = alphas[0];
    let tol_alpha = tol / cfg.h;
    let fenchel_tolerance = 2.0 * tol_alpha;
    let mut rows = Vec::with_capacity(members.len());
    for (mb, (c, dec)) in members.iter().zip(&classes) {
        let (op, u) = solve(&MechanicalLagrangian::of_system(&mb.system)?, c, cfg, tol, max_iter)?;
        let origin = vec![0i64; mb.system.d()];
        let curve = calibrated_curve(&u, &op, &origin, steps)?;
        let cycle = cycle_rotation_number(&curve);
        let cycle_found = cycle.is_some();
        let rho = match cycle {
            Some(r) => r,
            None => rotation_number(&curve)?,
        };
        let rs = DVector::from_column_slice(&rho[..m]);
        let rw = DVector::from_column_slice(&rho[m..]);
        let cw = DVector::from_column_slice(&c[m..]);
        let resid = rw - dec.b.transpose() * &dec.a_inv * &rs - &dec.c_tilde * cw;
        let ac = &dec.a * DVector::from_column_slice(&c_bar);
        let strong_velocity_deviation = curve
            .velocities
            .iter()
            .map(|v| (DVector::from_column_slice(&v[..m]) - &ac).amax())
            .fold(0.0, f64::max);
        let beta_strong = legendre_dual(&grid, &alphas, &[rho[..m].to_vec()])?[0];
        let fenchel_defect = alpha_strong + beta_strong - c_bar.iter().zip(&rho).map(|(a, b)| a * b).sum::<f64>();
        let weak_sup_grid = sup_abs(&grid_values(mb.system.weak_potential(), cfg.resolution)?);
        rows.push(RotationRow {
            mu: mb.mu,
            c: c.clone(),
            rho,
            cycle_found,
            residual: resid.amax(),
            strong_velocity_deviation,
            beta_strong,
            fenchel_defect,
            weak_sup_grid,
            fenchel_ok: fenchel_defect >= -fenchel_tolerance && fenchel_defect <= weak_sup_grid + fenchel_tolerance,
        });
    }
    let slack = 0.1;
    let floor = 1e-9;
    let res: Vec<f64> = rows.iter().map(|r| r.residual).collect();
    let residual_nonincreasing = nonincreasing(&res, slack, floor);
    let pass = residual_nonincreasing && rows.iter().all(|r| r.fenchel_ok);
    Ok(RotationReport { rows, c_bar, alpha_strong, fenchel_tolerance, slack, floor, residual_nonincreasing, pass })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_duality() {
        let cs: Vec<Vec<f64>> = (-40..=40).map(|i| vec![i as f64 * 0.05]).collect();
        let alphas: Vec<f64> = cs.iter().map(|c| 0.5 * 2.0 * c[0] * c[0]).collect();
        let rhos: Vec<Vec<f64>> = (-5..=5).map(|i| vec![i as f64 * 0.3]).collect();
        let beta = legendre_dual(&cs, &alphas, &rhos).unwrap();
        for (b, r) in beta.iter().zip(&rhos) {
            assert!((b - 0.25 * r[0] * r[0]).abs() < 2.0 * 0.05 * 0.05, "{b} vs {}", r[0]);
        }
        assert!(midpoint_convex(&beta) > 0.0);
        assert!(midpoint_convex(&[0.0, 1.0, 0.0]) < 0.0);
    }
}
