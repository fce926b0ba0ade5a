use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::averaging::TrigPolynomial;
use crate::error::{Error, Result};
use crate::slowsys::MechanicalLagrangian;

/// How the potential enters the one-step action.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Quadrature {
    /// `h U(y)` at the departure point.
    #[default]
    Rectangle,
    /// `h (U(y) + U(x)) / 2`.
    Trapezoid,
}

/// Discretization of the action: step `h`, grid resolution and displacement
/// window.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscreteActionConfig {
    pub h: f64,
    /// Grid points per axis.
    pub resolution: usize,
    /// Displacements `Δ` with `|Δ|_∞ <= W` are searched. `None` picks 1,
    /// or 2 when `|S c|_∞ h > 0.5`.
    #[serde(default)]
    pub winding: Option<u32>,
    #[serde(default)]
    pub quadrature: Quadrature,
}

impl DiscreteActionConfig {
    /// Defaults by torus dimension: `N = 128, 48, 16` for `d = 1, 2, 3`,
    /// `h = 0.2`.
    pub fn for_dim(d: usize) -> Result<Self> {
        let resolution = match d {
            1 => 128,
            2 => 48,
            3 => 16,
            _ => return Err(Error::Dimension(format!("weak KAM grids support d <= 3, got {d}"))),
        };
        Ok(DiscreteActionConfig { h: 0.2, resolution, winding: None, quadrature: Quadrature::Rectangle })
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if d == 0 || d > 3 {
            return Err(Error::Dimension(format!("weak KAM grids support 1 <= d <= 3, got {d}")));
        }
        if !(self.h > 0.0 && self.h <= 1.0) {
            return Err(Error::Model(format!("time step h = {} outside (0, 1]", self.h)));
        }
        if self.resolution == 0 {
            return Err(Error::Model("grid resolution must be positive".into()));
        }
        if let Some(w) = self.winding {
            if !(1..=3).contains(&w) {
                return Err(Error::Model(format!("winding bound {w} outside 1..=3")));
            }
        }
        Ok(())
    }

    pub fn winding_for(&self, s: &DMatrix<f64>, c: &[f64]) -> u32 {
        self.winding.unwrap_or_else(|| {
            let sc = s * DVector::from_column_slice(c);
            if sc.amax() * self.h > 0.5 {
                2
            } else {
                1
            }
        })
    }
}

#[derive(Clone, Copy, Debug)]
struct Candidate {
    shift: [usize; 3],
    delta: [i64; 3],
    cost: f64,
}

/// The operator `(Tu)(x) = min_Δ u(x - Δ) + h L(x - Δ, Δ/h) - c·Δ` on the
/// grid `(Z/N)^d`, displacements `Δ ∈ Z^d / N` with `|Δ|_∞ <= W`.
///
/// With `g = u + h U` the operator is the min-plus convolution of `g` with
/// the kinetic kernel `K(Δ) = ½ Δ·S^{-1}Δ / h - c·Δ`. Candidates are sorted
/// by `K`, and the scan for a target stops once `K + min g` reaches the
/// best value found, which never discards a minimizer.
#[derive(Clone, Debug)]
pub struct LaxOleinik {
    dim: usize,
    n: usize,
    h: f64,
    quadrature: Quadrature,
    winding: u32,
    potential: Vec<f64>,
    candidates: Vec<Candidate>,
    /// `sub[x * n + s] = (x - s) mod n`
    sub: Vec<usize>,
}

impl LaxOleinik {
    pub fn new(lag: &MechanicalLagrangian, c: &[f64], cfg: &DiscreteActionConfig) -> Result<Self> {
        let d = lag.dim();
        cfg.validate(d)?;
        if c.len() != d {
            return Err(Error::Dimension(format!("cohomology class of length {} on T^{d}", c.len())));
        }
        let n = cfg.resolution;
        let s = crate::slowsys::spd_inverse(&lag.s_inv)?;
        let winding = cfg.winding_for(&s, c);
        let reach = (winding as i64) * n as i64;
        let span = (2 * reach + 1) as usize;
        let total = span.pow(d as u32);
        let mut candidates = Vec::with_capacity(total);
        let inv = &lag.s_inv;
        for idx in 0..total {
            let mut r = idx;
            let mut delta = [0i64; 3];
            let mut shift = [0usize; 3];
            for k in (0..d).rev() {
                delta[k] = (r % span) as i64 - reach;
                r /= span;
                shift[k] = delta[k].rem_euclid(n as i64) as usize;
            }
            let disp: Vec<f64> = delta[..d].iter().map(|&x| x as f64 / n as f64).collect();
            let mut quad = 0.0;
            for i in 0..d {
                for j in 0..d {
                    quad += disp[i] * inv[(i, j)] * disp[j];
                }
            }
            let lin: f64 = disp.iter().zip(c).map(|(a, b)| a * b).sum();
            candidates.push(Candidate { shift, delta, cost: 0.5 * quad / cfg.h - lin });
        }
        candidates.sort_by(|a, b| a.cost.total_cmp(&b.cost).then(a.delta.cmp(&b.delta)));
        let potential = grid_values(&lag.potential, n)?;
        let sub = (0..n * n).map(|i| (i / n + n - i % n) % n).collect();
        Ok(LaxOleinik { dim: d, n, h: cfg.h, quadrature: cfg.quadrature, winding, potential, candidates, sub })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn resolution(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn winding(&self) -> u32 {
        self.winding
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `U` on the grid.
    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    /// Smallest kernel value `min_Δ K(Δ)`.
    pub fn kernel_min(&self) -> f64 {
        self.candidates[0].cost
    }

    fn weights(&self) -> (f64, f64) {
        match self.quadrature {
            Quadrature::Rectangle => (self.h, 0.0),
            Quadrature::Trapezoid => (0.5 * self.h, 0.5 * self.h),
        }
    }

    fn coords(&self, x: usize) -> [usize; 3] {
        let mut c = [0usize; 3];
        let mut r = x;
        for k in (0..self.dim).rev() {
            c[k] = r % self.n;
            r /= self.n;
        }
        c
    }

    #[inline]
    fn source(&self, xc: &[usize; 3], shift: &[usize; 3]) -> usize {
        let n = self.n;
        let mut y = 0;
        for k in 0..self.dim {
            y = y * n + self.sub[xc[k] * n + shift[k]];
        }
        y
    }

    fn departure(&self, u: &[f64]) -> (Vec<f64>, f64) {
        let (wy, _) = self.weights();
        let g: Vec<f64> = u.iter().zip(&self.potential).map(|(a, p)| a + wy * p).collect();
        let gmin = g.iter().copied().fold(f64::INFINITY, f64::min);
        (g, gmin)
    }

    fn best_at(&self, g: &[f64], gmin: f64, x: usize) -> (f64, usize) {
        let xc = self.coords(x);
        let mut best = f64::INFINITY;
        let mut arg = 0;
        for (i, c) in self.candidates.iter().enumerate() {
            if c.cost + gmin >= best {
                break;
            }
            let v = g[self.source(&xc, &c.shift)] + c.cost;
            if v < best {
                best = v;
                arg = i;
            }
        }
        (best, arg)
    }

    /// One synchronous sweep `out = T u`. Values of `+∞` are allowed.
    pub fn apply(&self, u: &[f64], out: &mut [f64]) {
        let (g, gmin) = self.departure(u);
        let (_, wx) = self.weights();
        out.par_iter_mut().enumerate().for_each(|(x, o)| {
            *o = self.best_at(&g, gmin, x).0 + wx * self.potential[x];
        });
    }

    /// Forward-time dual sweep
    /// `out(y) = min_Δ v(y + Δ) + h L(y, Δ/h) - c·Δ`, the cost of leaving
    /// `y` plus the value at the arrival point.
    pub fn apply_reverse(&self, v: &[f64], out: &mut [f64]) {
        let (wy, wx) = self.weights();
        let g: Vec<f64> = v.iter().zip(&self.potential).map(|(a, p)| a + wx * p).collect();
        let gmin = g.iter().copied().fold(f64::INFINITY, f64::min);
        let n = self.n;
        out.par_iter_mut().enumerate().for_each(|(y, o)| {
            let yc = self.coords(y);
            let mut best = f64::INFINITY;
            for c in &self.candidates {
                if c.cost + gmin >= best {
                    break;
                }
                let mut x = 0;
                for k in 0..self.dim {
                    x = x * n + self.sub[yc[k] * n + (n - c.shift[k]) % n];
                }
                best = best.min(g[x] + c.cost);
            }
            *o = best + wy * self.potential[y];
        });
    }

    /// Minimizing source point and displacement (in grid units) for target
    /// `x`; ties go to the smallest kernel value, then the smallest
    /// displacement.
    pub fn argmin(&self, u: &[f64], x: usize) -> (usize, Vec<i64>) {
        let (g, gmin) = self.departure(u);
        let (_, arg) = self.best_at(&g, gmin, x);
        let c = &self.candidates[arg];
        (self.source(&self.coords(x), &c.shift), c.delta[..self.dim].to_vec())
    }

    /// Flat index of the grid point with the given integer coordinates
    /// (reduced mod `N`).
    pub fn index(&self, coords: &[i64]) -> usize {
        coords.iter().fold(0, |acc, &c| acc * self.n + c.rem_euclid(self.n as i64) as usize)
    }

    /// Grid coordinates of a flat index.
    pub fn coordinates(&self, x: usize) -> Vec<usize> {
        self.coords(x)[..self.dim].to_vec()
    }
}

/// Values of `p` at the grid points `i / n`, flat row-major with the first
/// angle slowest.
pub fn grid_values(p: &TrigPolynomial, n: usize) -> Result<Vec<f64>> {
    let d = p.dim();
    if d == 0 || d > 3 {
        return Err(Error::Dimension(format!("grid sampling supports 1 <= d <= 3, got {d}")));
    }
    let total = n.pow(d as u32);
    let mut phi = vec![0.0; d];
    let mut out = Vec::with_capacity(total);
    for x in 0..total {
        let mut r = x;
        for k in (0..d).rev() {
            phi[k] = (r % n) as f64 / n as f64;
            r /= n;
        }
        out.push(p.eval(&phi));
    }
    Ok(out)
}
