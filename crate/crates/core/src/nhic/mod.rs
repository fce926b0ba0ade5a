//! Isolating block conditions for maps `F(x, y, z)` with stable `x ∈ R^s`,
//! unstable `y ∈ R^u` and center `z`, and witnesses of the normally
//! hyperbolic cylinder they isolate.
//!
//! Every check samples the block; the verdicts are a sampled certificate,
//! not a proof. A margin within `resolution` of zero is reported as
//! inconclusive rather than pass or fail.

mod maps;
mod witness;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::halton;

pub use maps::{BlockMap, FlowBlockMap, LinearMap, Mollified, Swapped};
pub use witness::{
    cylinder_witness, persistence_demo, CylinderWitness, PersistenceReport, PersistenceRow, StrongSaddle,
    WitnessOptions, WitnessSample,
};

/// Geometry of `D = D^s × D^u × Ω` and the cone parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IsolatingBlockSpec {
    pub s: usize,
    pub u: usize,
    /// Center box `Ω` (sampled, not required to be invariant).
    pub center_lo: Vec<f64>,
    pub center_hi: Vec<f64>,
    /// Radius of the balls `D^s` and `D^u`.
    pub r: f64,
    /// Cone parameter `μ > 1` of `K^u_μ`.
    pub mu: f64,
    /// Required expansion `ν > 1`.
    pub nu: f64,
    /// Points of `D` for C1 and the differential tests.
    pub samples: usize,
    /// Points of `D^{sc} × ∂D^u` for C2.
    pub boundary_samples: usize,
    /// Pairs per separation scale for C3 and C4.
    pub pairs: usize,
    /// Margins in `[-resolution, resolution]` are inconclusive.
    pub resolution: f64,
}

impl IsolatingBlockSpec {
    pub fn center_dim(&self) -> usize {
        self.center_lo.len()
    }

    pub fn dim(&self) -> usize {
        self.s + self.u + self.center_dim()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r > 0.0) || !(self.mu > 1.0) || !(self.nu > 1.0) {
            return Err(Error::Model(format!("need r > 0, μ > 1, ν > 1; got r = {}, μ = {}, ν = {}", self.r, self.mu, self.nu)));
        }
        if self.center_lo.len() != self.center_hi.len() || self.center_lo.iter().zip(&self.center_hi).any(|(a, b)| !(a < b)) {
            return Err(Error::Model("center box bounds must satisfy lo < hi".into()));
        }
        if self.s == 0 || self.u == 0 {
            return Err(Error::Model("stable and unstable dimensions must be positive".into()));
        }
        if self.samples == 0 || self.boundary_samples == 0 || self.pairs == 0 {
            return Err(Error::Model("sample counts must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl Verdict {
    fn from_margin(margin: f64, resolution: f64) -> Verdict {
        if margin.is_nan() {
            Verdict::Inconclusive
        } else if margin > resolution {
            Verdict::Pass
        } else if margin < -resolution {
            Verdict::Fail
        } else {
            Verdict::Inconclusive
        }
    }

    /// Fail dominates, then inconclusive.
    pub fn and(self, other: Verdict) -> Verdict {
        match (self, other) {
            (Verdict::Fail, _) | (_, Verdict::Fail) => Verdict::Fail,
            (Verdict::Inconclusive, _) | (_, Verdict::Inconclusive) => Verdict::Inconclusive,
            _ => Verdict::Pass,
        }
    }
}

/// Worst margin of one check and the sample where it occurred.
#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub verdict: Verdict,
    pub margin: f64,
    pub witness: Vec<f64>,
}

impl Check {
    fn new(margin: f64, witness: Vec<f64>, resolution: f64) -> Check {
        Check { verdict: Verdict::from_margin(margin, resolution), margin, witness }
    }
}

/// The four conditions for one map.
#[derive(Clone, Debug, Serialize)]
pub struct SideReport {
    /// `r - max ‖π_s F(Z)‖` over `D`.
    pub c1: Check,
    /// `min ‖π_u F(Z)‖ - r` over `D^{sc} × ∂D^u`.
    pub c2_boundary: Check,
    /// `min ⟨π_u F(Z), y/‖y‖⟩` over the same set; positive means
    /// `π_u F|∂D^u` is homotopic to the inclusion, hence of degree one.
    pub c2_degree: Check,
    /// `min (μ‖Δy'‖² - ‖Δx'‖² - ‖Δz'‖²) / ‖ΔZ‖²` over cone pairs.
    pub c3_pairs: Check,
    /// `max_τ λ_min(DFᵀ J DF - τ J)` with `J = diag(-1, μ, -1)`.
    pub c3_differential: Check,
    /// `min ‖Δy'‖/‖Δy‖ - ν` over cone pairs.
    pub c4_pairs: Check,
    /// `max_τ λ_min(DF_uᵀ DF_u - ν² Π_u - τ J)`.
    pub c4_differential: Check,
    /// `max ‖D_x F^x‖` over the samples.
    pub contraction: f64,
    /// `min σ_min(D_y F^y)` over the samples.
    pub expansion: f64,
    pub pairs_tested: usize,
    pub pairs_skipped: usize,
}

impl SideReport {
    pub fn c1_verdict(&self) -> Verdict {
        self.c1.verdict
    }

    pub fn c2_verdict(&self) -> Verdict {
        self.c2_boundary.verdict.and(self.c2_degree.verdict)
    }

    pub fn c3_verdict(&self) -> Verdict {
        self.c3_pairs.verdict.and(self.c3_differential.verdict)
    }

    pub fn c4_verdict(&self) -> Verdict {
        self.c4_pairs.verdict.and(self.c4_differential.verdict)
    }

    pub fn verdict(&self) -> Verdict {
        self.c1_verdict().and(self.c2_verdict()).and(self.c3_verdict()).and(self.c4_verdict())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct IsolatingBlockReport {
    pub spec: IsolatingBlockSpec,
    pub forward: SideReport,
    /// Conditions for `inv(F) = I ∘ F^{-1} ∘ I`, `I(x, y, z) = (y, x, z)`.
    pub inverse: SideReport,
    /// Conjunction of the eight condition verdicts.
    pub overall: Verdict,
    pub kind: String,
}

/// Checks C1-C4 for `forward` and for `inv(F)` built from `backward = F^{-1}`.
pub fn check_block_conditions(forward: &dyn BlockMap, backward: &dyn BlockMap, spec: &IsolatingBlockSpec) -> Result<IsolatingBlockReport> {
    spec.validate()?;
    if spec.s != spec.u {
        return Err(Error::Dimension("the involution (x, y, z) -> (y, x, z) needs s = u".into()));
    }
    for f in [forward, backward] {
        if f.dim() != spec.dim() {
            return Err(Error::Dimension(format!("map on R^{} for a block of dimension {}", f.dim(), spec.dim())));
        }
    }
    let fwd = check_side(forward, spec)?;
    let inv = check_side(&Swapped::new(backward, spec.s), spec)?;
    let overall = fwd.verdict().and(inv.verdict());
    Ok(IsolatingBlockReport { spec: spec.clone(), forward: fwd, inverse: inv, overall, kind: "sampled certificate".into() })
}

/// Maps a point of `[-1, 1]^k` onto the Euclidean ball of radius `r`.
fn cube_to_ball(p: &[f64], r: f64) -> Vec<f64> {
    let sup = p.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let two = p.iter().map(|x| x * x).sum::<f64>().sqrt();
    if two == 0.0 {
        return vec![0.0; p.len()];
    }
    p.iter().map(|x| x * r * sup / two).collect()
}

fn to_sphere(p: &[f64], r: f64) -> Vec<f64> {
    let two = p.iter().map(|x| x * x).sum::<f64>().sqrt();
    if two == 0.0 {
        let mut e = vec![0.0; p.len()];
        e[0] = r;
        return e;
    }
    p.iter().map(|x| x * r / two).collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Sample `k` of `D`; `k mod 4` selects interior, `∂D^s`, `∂D^u` or both,
/// so the extreme radii are always hit.
fn block_point(spec: &IsolatingBlockSpec, k: usize, force_u_boundary: bool) -> Vec<f64> {
    let h = halton(k as u64, spec.dim());
    let (s, u) = (spec.s, spec.u);
    let unit: Vec<f64> = h.iter().map(|t| 2.0 * t - 1.0).collect();
    let kind = k % 4;
    let x = if kind == 1 || kind == 3 { to_sphere(&unit[..s], spec.r) } else { cube_to_ball(&unit[..s], spec.r) };
    let y = if force_u_boundary || kind >= 2 {
        if u == 1 {
            // alternate the two boundary points of D^u
            vec![if (k / 4) % 2 == 0 { spec.r } else { -spec.r }]
        } else {
            to_sphere(&unit[s..s + u], spec.r)
        }
    } else {
        cube_to_ball(&unit[s..s + u], spec.r)
    };
    let z = spec.center_lo.iter().zip(&spec.center_hi).zip(&h[s + u..]).map(|((lo, hi), t)| lo + (hi - lo) * t);
    x.into_iter().chain(y).chain(z).collect()
}

fn inside(spec: &IsolatingBlockSpec, z: &[f64]) -> bool {
    let eps = 1e-12 * spec.r;
    norm(&z[..spec.s]) <= spec.r + eps
        && norm(&z[spec.s..spec.s + spec.u]) <= spec.r + eps
        && z[spec.s + spec.u..].iter().zip(spec.center_lo.iter().zip(&spec.center_hi)).all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
}

/// `J = diag(-I_s, μ I_u, -I_c)`
fn cone_form(spec: &IsolatingBlockSpec) -> DVector<f64> {
    let n = spec.dim();
    DVector::from_fn(n, |i, _| if i >= spec.s && i < spec.s + spec.u { spec.mu } else { -1.0 })
}

fn lambda_min(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// `max_{0 <= τ <= hi} λ_min(base - τ diag(j))`; the objective is concave in
/// `τ`, so golden-section search finds the maximum.
fn s_lemma_margin(base: &DMatrix<f64>, j: &DVector<f64>, hi: f64) -> f64 {
    let f = |t: f64| {
        let mut m = base.clone();
        for i in 0..j.len() {
            m[(i, i)] -= t * j[i];
        }
        lambda_min(&m)
    };
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (0.0, hi);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..80 {
        if fc < fd {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        } else {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        }
    }
    f(0.0).max(f(hi)).max(fc.max(fd))
}

struct Worst {
    margin: f64,
    at: Vec<f64>,
}

impl Worst {
    fn new() -> Self {
        Worst { margin: f64::INFINITY, at: vec![] }
    }

    fn take(&mut self, margin: f64, at: &[f64]) {
        // NaN margins count as the worst case
        if margin < self.margin || (margin.is_nan() && !self.margin.is_nan()) {
            self.margin = margin;
            self.at = at.to_vec();
        }
    }
}

struct PointResult {
    z: Vec<f64>,
    c1: f64,
    c3d: f64,
    c4d: f64,
    contraction: f64,
    expansion: f64,
}

fn check_side(f: &dyn BlockMap, spec: &IsolatingBlockSpec) -> Result<SideReport> {
    let (s, u) = (spec.s, spec.u);
    let j = cone_form(spec);
    let res = spec.resolution;

    let points: Vec<PointResult> = (0..spec.samples)
        .into_par_iter()
        .map(|k| {
            let z = block_point(spec, k, false);
            let (fz, df) = f.eval_with_jacobian(&z)?;
            let c1 = spec.r - norm(&fz[..s]);
            let hi = 2.0 * (df.norm_squared() * spec.mu.max(1.0) + spec.nu * spec.nu + 1.0);
            let jdf = DMatrix::from_fn(df.nrows(), df.ncols(), |a, b| j[a] * df[(a, b)]);
            let c3d = s_lemma_margin(&(df.transpose() * jdf), &j, hi);
            let dfu = df.rows(s, u).into_owned();
            let mut base = dfu.transpose() * &dfu;
            for i in s..s + u {
                base[(i, i)] -= spec.nu * spec.nu;
            }
            let c4d = s_lemma_margin(&base, &j, hi);
            let contraction = df.view((0, 0), (s, s)).into_owned().singular_values().max();
            let expansion = df.view((s, s), (u, u)).into_owned().singular_values().min();
            Ok(PointResult { z, c1, c3d, c4d, contraction, expansion })
        })
        .collect::<Result<_>>()?;
    let (mut c1, mut c3d, mut c4d) = (Worst::new(), Worst::new(), Worst::new());
    let (mut contraction, mut expansion) = (0.0f64, f64::INFINITY);
    for p in &points {
        c1.take(p.c1, &p.z);
        c3d.take(p.c3d, &p.z);
        c4d.take(p.c4d, &p.z);
        contraction = contraction.max(p.contraction);
        expansion = expansion.min(p.expansion);
    }

    let boundary: Vec<(Vec<f64>, f64, f64)> = (0..spec.boundary_samples)
        .into_par_iter()
        .map(|k| {
            let z = block_point(spec, k, true);
            let fz = f.eval(&z)?;
            let fy = &fz[s..s + u];
            let y = &z[s..s + u];
            let deg = fy.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / norm(y);
            Ok((z, norm(fy) - spec.r, deg))
        })
        .collect::<Result<_>>()?;
    let (mut c2b, mut c2d) = (Worst::new(), Worst::new());
    for (z, m, d) in &boundary {
        c2b.take(*m, z);
        c2d.take(*d, z);
    }

    // cone pairs at three separations
    let n = spec.dim();
    let scales = [spec.r / 10.0, spec.r / 3.0, spec.r];
    let jobs: Vec<(usize, f64)> = scales.iter().flat_map(|&sc| (0..spec.pairs).map(move |k| (k, sc))).collect();
    let pairs: Vec<Option<(Vec<f64>, f64, f64)>> = jobs
        .par_iter()
        .enumerate()
        .map(|(idx, &(k, scale))| {
            let z1 = block_point(spec, k, false);
            let h = halton((spec.samples + idx) as u64, n + 1);
            // unstable part: unit direction; the rest inside the cone
            let dy = to_sphere(&h[s..s + u].iter().map(|t| 2.0 * t - 1.0).collect::<Vec<_>>(), 1.0);
            let rest: Vec<f64> = h[..s].iter().chain(&h[s + u..n]).map(|t| 2.0 * t - 1.0).collect();
            let rest = cube_to_ball(&rest, spec.mu.sqrt() * h[n]);
            let mut delta = vec![0.0; n];
            delta[..s].copy_from_slice(&rest[..s]);
            delta[s..s + u].copy_from_slice(&dy);
            delta[s + u..].copy_from_slice(&rest[s..]);
            let len = norm(&delta);
            let mut step = scale / len;
            for attempt in 0..8 {
                let sign = if attempt % 2 == 0 { 1.0 } else { -1.0 };
                let z2: Vec<f64> = z1.iter().zip(&delta).map(|(a, d)| a + sign * step * d).collect();
                if inside(spec, &z2) {
                    let f1 = f.eval(&z1)?;
                    let f2 = f.eval(&z2)?;
                    let dd: Vec<f64> = f2.iter().zip(&f1).map(|(a, b)| a - b).collect();
                    let dz: Vec<f64> = z2.iter().zip(&z1).map(|(a, b)| a - b).collect();
                    let q3 = spec.mu * norm(&dd[s..s + u]).powi(2) - norm(&dd[..s]).powi(2) - norm(&dd[s + u..]).powi(2);
                    let c3 = q3 / norm(&dz).powi(2);
                    let c4 = norm(&dd[s..s + u]) / norm(&dz[s..s + u]) - spec.nu;
                    return Ok(Some((z1.iter().chain(&z2).copied().collect(), c3, c4)));
                }
                if attempt % 2 == 1 {
                    step *= 0.5;
                }
            }
            Ok(None)
        })
        .collect::<Result<_>>()?;
    let (mut c3p, mut c4p) = (Worst::new(), Worst::new());
    let mut tested = 0;
    for (at, m3, m4) in pairs.iter().flatten() {
        tested += 1;
        c3p.take(*m3, at);
        c4p.take(*m4, at);
    }
    if tested == 0 {
        return Err(Error::Degenerate("no cone pair fits inside the block".into()));
    }
    Ok(SideReport {
        c1: Check::new(c1.margin, c1.at, res),
        c2_boundary: Check::new(c2b.margin, c2b.at, res),
        c2_degree: Check::new(c2d.margin, c2d.at, res),
        c3_pairs: Check::new(c3p.margin, c3p.at, res),
        c3_differential: Check::new(c3d.margin, c3d.at, res),
        c4_pairs: Check::new(c4p.margin, c4p.at, res),
        c4_differential: Check::new(c4d.margin, c4d.at, res),
        contraction,
        expansion,
        pairs_tested: tested,
        pairs_skipped: pairs.len() - tested,
    })
}
