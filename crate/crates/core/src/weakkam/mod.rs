//! Discrete weak KAM theory on torus grids.
//!
//! The backward Lax-Oleinik operator `T` of [`LaxOleinik`] is min-plus
//! linear, monotone, commutes with constants and is nonexpansive in the sup
//! norm. A weak KAM solution is a fixed point up to a constant:
//! `T u = u - α h`, and `α` is the discrete alpha function at `c`.
//!
//! [`solve_weak_kam`] runs value iteration. When the iterates become
//! periodic with period `p > 1` (a critical cycle of length `p`), min-plus
//! linearity gives an exact fixed point
//! `min_{0 <= j < p} (T^j u + j α h)`. If neither a fixed point nor a period
//! shows up, the solver falls back to averaged iteration
//! `u <- (u + T u) / 2`.

mod barrier;
mod experiments;
mod operator;

use std::collections::VecDeque;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::slowsys::MechanicalLagrangian;

pub use barrier::{aubry_set, mane_set, peierls_barrier, BarrierOptions, BarrierTable, GridSet};
pub use experiments::{
    legendre_dual, midpoint_convex, rotation_experiment, semicontinuity_experiment, verify_alpha_relation,
    AlphaRelationReport, CRule, RotationReport, RotationRow, SemicontinuityReport, SemicontinuityRow,
};
pub use operator::{grid_values, DiscreteActionConfig, LaxOleinik, Quadrature};

/// How the solver reached its fixed point.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolveStats {
    pub iterations: usize,
    /// Final `max(Tu - u) - min(Tu - u)`.
    pub residual: f64,
    /// Period of the iterates used to build the fixed point (1 when plain
    /// iteration converged).
    pub period: usize,
    /// Whether averaged iteration was needed.
    pub averaged: bool,
}

/// Weak KAM solution sampled on `(Z/N)^d`, anchored at the origin.
#[derive(Clone, Debug, Serialize)]
pub struct GridValueFunction {
    pub dim: usize,
    pub resolution: usize,
    /// Row-major, first angle slowest.
    pub values: Vec<f64>,
    pub alpha: f64,
    /// `[-max(Tu-u)/h, -min(Tu-u)/h]`, which always contains the discrete
    /// alpha value.
    pub alpha_bounds: (f64, f64),
    pub c: Vec<f64>,
    /// Constant subtracted by the last sweep to re-anchor (`≈ -α h`).
    pub shift: f64,
    pub h: f64,
    pub stats: SolveStats,
}

impl GridValueFunction {
    /// `u ≡ 0` on the grid of `op`.
    pub fn zero(op: &LaxOleinik, c: &[f64]) -> Self {
        GridValueFunction {
            dim: op.dim(),
            resolution: op.resolution(),
            values: vec![0.0; op.len()],
            alpha: f64::NAN,
            alpha_bounds: (f64::NEG_INFINITY, f64::INFINITY),
            c: c.to_vec(),
            shift: 0.0,
            h: op.h(),
            stats: SolveStats { iterations: 0, residual: f64::INFINITY, period: 0, averaged: false },
        }
    }

    pub fn oscillation(&self) -> f64 {
        let (lo, hi) = min_max(&self.values);
        hi - lo
    }

    /// Largest difference quotient between grid neighbours (sup norm).
    pub fn lipschitz_estimate(&self) -> f64 {
        let n = self.resolution;
        let mut best: f64 = 0.0;
        for x in 0..self.values.len() {
            let mut stride = 1;
            for _ in 0..self.dim {
                let coord = (x / stride) % n;
                let y = if coord + 1 == n { x + stride - n * stride } else { x + stride };
                best = best.max((self.values[y] - self.values[x]).abs() * n as f64);
                stride *= n;
            }
        }
        best
    }

    /// Value at integer grid coordinates (reduced mod `N`).
    pub fn at(&self, coords: &[i64]) -> f64 {
        let n = self.resolution as i64;
        let idx = coords.iter().fold(0usize, |acc, &c| acc * self.resolution + c.rem_euclid(n) as usize);
        self.values[idx]
    }

    /// `(coordinates / N, value)` rows for CSV output.
    pub fn rows(&self) -> Vec<(Vec<f64>, f64)> {
        let n = self.resolution;
        (0..self.values.len())
            .map(|x| {
                let mut r = x;
                let mut phi = vec![0.0; self.dim];
                for k in (0..self.dim).rev() {
                    phi[k] = (r % n) as f64 / n as f64;
                    r /= n;
                }
                (phi, self.values[x])
            })
            .collect()
    }
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(*x), b.max(*x)))
}

fn anchor(v: &mut [f64]) -> f64 {
    let s = v[0];
    v.iter_mut().for_each(|x| *x -= s);
    s
}

/// One sweep `T u`, re-anchored at the origin.
pub fn lax_oleinik_step(
    u: &GridValueFunction,
    lag: &MechanicalLagrangian,
    c: &[f64],
    cfg: &DiscreteActionConfig,
) -> Result<GridValueFunction> {
    let op = LaxOleinik::new(lag, c, cfg)?;
    if u.values.len() != op.len() || u.dim != op.dim() {
        return Err(Error::Dimension("value function does not match the grid".into()));
    }
    let mut out = vec![0.0; op.len()];
    op.apply(&u.values, &mut out);
    let (lo, hi) = out.iter().zip(&u.values).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (t, v)| {
        (a.min(t - v), b.max(t - v))
    });
    let shift = anchor(&mut out);
    Ok(GridValueFunction {
        dim: op.dim(),
        resolution: op.resolution(),
        values: out,
        alpha: -shift / op.h(),
        alpha_bounds: (-hi / op.h(), -lo / op.h()),
        c: c.to_vec(),
        shift,
        h: op.h(),
        stats: SolveStats { iterations: 1, residual: hi - lo, period: 0, averaged: false },
    })
}

/// Longest period searched for in the iterates.
const MAX_PERIOD: usize = 256;
/// Iterations without a new residual minimum before looking for a period.
const STALL: usize = 8;
/// Iterations without progress before switching to averaged iteration.
const AVERAGE_AFTER: usize = 4 * MAX_PERIOD;

/// Value iteration for `T u = u - α h` to `max(Tu-u) - min(Tu-u) < tol`.
pub fn solve_weak_kam(
    lag: &MechanicalLagrangian,
    c: &[f64],
    cfg: &DiscreteActionConfig,
    tol: f64,
    max_iter: usize,
) -> Result<GridValueFunction> {
    let op = LaxOleinik::new(lag, c, cfg)?;
    solve_with(&op, c, tol, max_iter)
}

/// [`solve_weak_kam`] with a prebuilt operator.
pub fn solve_with(op: &LaxOleinik, c: &[f64], tol: f64, max_iter: usize) -> Result<GridValueFunction> {
    if !(tol > 0.0) {
        return Err(Error::Model(format!("tolerance {tol} must be positive")));
    }
    let n = op.len();
    let h = op.h();
    let mut u = vec![0.0; n];
    let mut v = vec![0.0; n];
    // anchored iterates with the cumulative shift: raw = u + cum
    let mut history: VecDeque<(Vec<f64>, f64)> = VecDeque::with_capacity(MAX_PERIOD + 2);
    let mut cum = 0.0;
    let mut residuals = Vec::new();
    let mut best = f64::INFINITY;
    let mut since_best = 0;
    let mut averaged = false;
    let mut period = 1;
    history.push_back((u.clone(), cum));
    for it in 1..=max_iter {
        op.apply(&u, &mut v);
        let (lo, hi) = v.iter().zip(&u).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (t, x)| {
            (a.min(t - x), b.max(t - x))
        });
        let res = hi - lo;
        residuals.push(res);
        if res < tol {
            return Ok(GridValueFunction {
                dim: op.dim(),
                resolution: op.resolution(),
                values: u,
                alpha: -(lo + hi) / (2.0 * h),
                alpha_bounds: (-hi / h, -lo / h),
                c: c.to_vec(),
                shift: 0.5 * (lo + hi),
                h,
                stats: SolveStats { iterations: it, residual: res, period, averaged },
            });
        }
        if res < best {
            best = res;
            since_best = 0;
        } else {
            since_best += 1;
        }
        if averaged {
            for (a, b) in u.iter_mut().zip(&v) {
                *a = 0.5 * (*a + b);
            }
            anchor(&mut u);
            continue;
        }
        std::mem::swap(&mut u, &mut v);
        cum += anchor(&mut u);
        history.push_back((u.clone(), cum));
        if history.len() > MAX_PERIOD + 1 {
            history.pop_front();
        }
        if since_best >= STALL && since_best % STALL == 0 {
            if let Some((p, fixed)) = periodic_fixed_point(&history, tol) {
                u = fixed;
                period = p;
                history.clear();
                cum = 0.0;
                history.push_back((u.clone(), cum));
                best = f64::INFINITY;
                since_best = 0;
                continue;
            }
        }
        if since_best >= AVERAGE_AFTER {
            averaged = true;
        }
    }
    let tail: Vec<String> = residuals.iter().rev().take(10).rev().map(|r| format!("{r:.3e}")).collect();
    Err(Error::Convergence(format!(
        "weak KAM iteration did not reach {tol:e} in {max_iter} sweeps; best residual {best:.3e}, last residuals [{}]",
        tail.join(", ")
    )))
}

/// If the last iterate repeats (up to a constant) an iterate `p` steps back,
/// returns `p` and the min-plus fixed point built from one period.
fn periodic_fixed_point(history: &VecDeque<(Vec<f64>, f64)>, tol: f64) -> Option<(usize, Vec<f64>)> {
    let k = history.len() - 1;
    let (last, cum_last) = &history[k];
    for p in 2..=k {
        let (prev, cum_prev) = &history[k - p];
        let (lo, hi) = last.iter().zip(prev).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), (x, y)| {
            (a.min(x - y), b.max(x - y))
        });
        if hi - lo >= tol {
            continue;
        }
        let lambda = (cum_last - cum_prev + 0.5 * (lo + hi)) / p as f64;
        let mut fixed = vec![f64::INFINITY; last.len()];
        for j in 0..p {
            let (uj, cj) = &history[k - p + j];
            for (f, x) in fixed.iter_mut().zip(uj) {
                *f = f.min(x + cj - j as f64 * lambda);
            }
        }
        anchor(&mut fixed);
        return Some((p, fixed));
    }
    None
}

/// Backward calibrated chain on the grid.
#[derive(Clone, Debug, Serialize)]
pub struct CalibratedCurve {
    /// Grid points `y_0, y_1, ...` going backward in time, as angles.
    pub points: Vec<Vec<f64>>,
    /// Forward-time velocities `(y_k - y_{k+1} + w)/h` of each step.
    pub velocities: Vec<Vec<f64>>,
    /// Start and length of the terminal cycle of the chain, if reached.
    pub cycle: Option<(usize, usize)>,
    pub h: f64,
}

/// `y_{k+1} = argmin_y u(y) + h L(y, (y_k - y + w)/h) - c·(y_k - y + w)`.
pub fn calibrated_curve(u: &GridValueFunction, op: &LaxOleinik, x0: &[i64], steps: usize) -> Result<CalibratedCurve> {
    if x0.len() != op.dim() || u.values.len() != op.len() {
        return Err(Error::Dimension("start point or value function does not match the grid".into()));
    }
    let n = op.resolution() as f64;
    let mut x = op.index(x0);
    let mut indices = vec![x];
    let mut points = vec![op.coordinates(x).iter().map(|&c| c as f64 / n).collect()];
    let mut velocities = Vec::with_capacity(steps);
    let mut seen = std::collections::HashMap::new();
    seen.insert(x, 0usize);
    let mut cycle = None;
    for k in 0..steps {
        let (y, delta) = op.argmin(&u.values, x);
        velocities.push(delta.iter().map(|&d| d as f64 / n / op.h()).collect());
        points.push(op.coordinates(y).iter().map(|&c| c as f64 / n).collect());
        indices.push(y);
        x = y;
        if cycle.is_none() {
            if let Some(&first) = seen.get(&y) {
                cycle = Some((first, k + 1 - first));
            } else {
                seen.insert(y, k + 1);
            }
        }
    }
    Ok(CalibratedCurve { points, velocities, cycle, h: op.h() })
}

/// Time average of the discrete velocities (needs at least 100 steps).
pub fn rotation_number(curve: &CalibratedCurve) -> Result<Vec<f64>> {
    if curve.velocities.len() < 100 {
        return Err(Error::Degenerate(format!("rotation number needs >= 100 steps, got {}", curve.velocities.len())));
    }
    Ok(mean_velocity(&curve.velocities))
}

/// Average velocity over the terminal cycle of the chain, which is exact
/// for the invariant measure the chain converges to.
pub fn cycle_rotation_number(curve: &CalibratedCurve) -> Option<Vec<f64>> {
    let (start, len) = curve.cycle?;
    Some(mean_velocity(&curve.velocities[start..start + len]))
}

fn mean_velocity(vs: &[Vec<f64>]) -> Vec<f64> {
    let d = vs[0].len();
    let mut acc = vec![0.0; d];
    for v in vs {
        acc.iter_mut().zip(v).for_each(|(a, b)| *a += b);
    }
    acc.iter().map(|a| a / vs.len() as f64).collect()
}
