use serde::{Deserialize, Serialize};

use super::{GridValueFunction, LaxOleinik};
use crate::error::{Error, Result};

/// Barrier iteration settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BarrierOptions {
    /// Sweeps per barrier table; raised to three windows when shorter.
    pub iters: usize,
    /// Only base points whose coordinates are multiples of `stride` are
    /// tested (1 tests every grid point).
    pub stride: usize,
}

impl Default for BarrierOptions {
    fn default() -> Self {
        BarrierOptions { iters: 300, stride: 1 }
    }
}

/// `h(x, ·)` (or `h(·, z)` for a reverse table) on the grid.
#[derive(Clone, Debug, Serialize)]
pub struct BarrierTable {
    pub base: usize,
    pub reverse: bool,
    pub values: Vec<f64>,
    pub iterations: usize,
    /// Iterates the liminf is taken over.
    pub window: usize,
    /// Sup change of the windowed minimum over the last window.
    pub drift: f64,
}

/// Grid points selected by a barrier test.
#[derive(Clone, Debug, Serialize)]
pub struct GridSet {
    pub resolution: usize,
    pub indices: Vec<usize>,
    pub points: Vec<Vec<f64>>,
    /// Number of grid points examined.
    pub tested: usize,
    pub stride: usize,
}

impl GridSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

fn window_for(u: &GridValueFunction) -> usize {
    20.max(u.stats.period).max(u.resolution)
}

/// `h(x, y) = liminf_k (B_k(y))` with `B_0 = 0` at `x`, `+∞` elsewhere, and
/// `B_{k+1} = T B_k + α h`. The liminf is the minimum over a trailing window
/// of `max(20, p, N)` iterates, `p` the period seen by the solver; `N`
/// covers the return time of a rotating critical cycle.
pub fn peierls_barrier(op: &LaxOleinik, u: &GridValueFunction, x: &[i64], opts: &BarrierOptions) -> Result<BarrierTable> {
    check(op, u)?;
    if x.len() != op.dim() {
        return Err(Error::Dimension(format!("base point of length {} on T^{}", x.len(), op.dim())));
    }
    barrier_table(op, u, op.index(x), false, opts)
}

fn check(op: &LaxOleinik, u: &GridValueFunction) -> Result<()> {
    if u.values.len() != op.len() || !u.alpha.is_finite() {
        return Err(Error::Prerequisite("barrier needs a converged weak KAM solution on the same grid".into()));
    }
    Ok(())
}

fn barrier_table(op: &LaxOleinik, u: &GridValueFunction, base: usize, reverse: bool, opts: &BarrierOptions) -> Result<BarrierTable> {
    let window = window_for(u);
    let iters = opts.iters.max(3 * window);
    let lift = u.alpha * op.h();
    let floor = -(2.0 * u.oscillation() + 1.0);
    let n = op.len();
    let mut b = vec![f64::INFINITY; n];
    b[base] = 0.0;
    let mut next = vec![0.0; n];
    let mut recent: std::collections::VecDeque<Vec<f64>> = std::collections::VecDeque::with_capacity(2 * window);
    for _ in 0..iters {
        if reverse {
            op.apply_reverse(&b, &mut next);
        } else {
            op.apply(&b, &mut next);
        }
        next.iter_mut().for_each(|v| *v += lift);
        std::mem::swap(&mut b, &mut next);
        let lowest = b.iter().copied().fold(f64::INFINITY, f64::min);
        if lowest < floor {
            return Err(Error::Calibration(format!(
                "barrier value {lowest:.4} below -(2 osc(u) + 1) = {floor:.4}; alpha = {} is inconsistent with the operator",
                u.alpha
            )));
        }
        recent.push_back(b.clone());
        if recent.len() > 2 * window {
            recent.pop_front();
        }
    }
    let min_over = |range: std::ops::Range<usize>| -> Vec<f64> {
        let mut m = vec![f64::INFINITY; n];
        for it in range {
            m.iter_mut().zip(&recent[it]).for_each(|(a, b)| *a = a.min(*b));
        }
        m
    };
    let len = recent.len();
    let values = min_over(len - window..len);
    let earlier = min_over(len.saturating_sub(2 * window)..len - window);
    let drift = values
        .iter()
        .zip(&earlier)
        .filter(|(a, b)| a.is_finite() && b.is_finite())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(BarrierTable { base, reverse, values, iterations: iters, window, drift })
}

fn base_points(op: &LaxOleinik, stride: usize) -> Vec<usize> {
    let stride = stride.max(1);
    (0..op.len()).filter(|&x| op.coordinates(x).iter().all(|c| c % stride == 0)).collect()
}

fn grid_set(op: &LaxOleinik, indices: Vec<usize>, tested: usize, stride: usize) -> GridSet {
    let n = op.resolution() as f64;
    let points = indices.iter().map(|&x| op.coordinates(x).iter().map(|&c| c as f64 / n).collect()).collect();
    GridSet { resolution: op.resolution(), indices, points, tested, stride }
}

/// `{x : h(x, x) < tol}` over the (possibly strided) grid.
pub fn aubry_set(op: &LaxOleinik, u: &GridValueFunction, tol: f64, opts: &BarrierOptions) -> Result<GridSet> {
    check(op, u)?;
    let bases = base_points(op, opts.stride);
    let mut hits = Vec::new();
    for &x in &bases {
        let t = barrier_table(op, u, x, false, opts)?;
        if t.values[x] < tol {
            hits.push(x);
        }
    }
    Ok(grid_set(op, hits, bases.len(), opts.stride))
}

/// `{y : min_{x, z ∈ A} h(x, y) + h(y, z) - h(x, z) < tol}`.
///
/// Only the Aubry points passed in are used, so with a strided Aubry set
/// the result is a subset of the full Mañé set.
pub fn mane_set(op: &LaxOleinik, u: &GridValueFunction, aubry: &GridSet, tol: f64, opts: &BarrierOptions) -> Result<GridSet> {
    check(op, u)?;
    if aubry.is_empty() {
        return Err(Error::Prerequisite("Mañé set needs a nonempty Aubry set".into()));
    }
    let forward: Vec<BarrierTable> =
        aubry.indices.iter().map(|&x| barrier_table(op, u, x, false, opts)).collect::<Result<_>>()?;
    let backward: Vec<BarrierTable> =
        aubry.indices.iter().map(|&z| barrier_table(op, u, z, true, opts)).collect::<Result<_>>()?;
    let mut hits = Vec::new();
    for y in 0..op.len() {
        let mut best = f64::INFINITY;
        for f in &forward {
            for (bz, z) in backward.iter().zip(&aubry.indices) {
                best = best.min(f.values[y] + bz.values[y] - f.values[*z]);
            }
        }
        if best < tol {
            hits.push(y);
        }
    }
    Ok(grid_set(op, hits, op.len(), 1))
}
