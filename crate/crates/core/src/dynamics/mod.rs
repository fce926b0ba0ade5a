//! Slow vector fields in the Lagrangian, half-Lagrangian and rescaled charts.
//!
//! States are stored in block order `(φ^st, v^st, φ^wk, w)` where the last
//! block is `v^wk` in the Lagrangian chart and `I^wk` in the half-Lagrangian
//! chart. Inverting `v = S I` gives
//! `v^wk = B^T A^{-1} v^st + C̃ I^wk`, and the half-Lagrangian field is
//!
//! ```text
//! φ̇^st = v^st               v̇^st = A ∂_st U + B ∂_wk U
//! φ̇^wk = B^T A^{-1} v^st + C̃ I^wk     İ^wk = ∂_wk U
//! ```
//!
//! The rescaling `Φ_Σ` maps `(φ^wk, I^wk)` to `(Σ φ^wk, Σ^{-1} I^wk)`.

mod flow;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::OrderedBasis;
use crate::sampling::halton_box;
use crate::slowsys::{BlockDecomposition, SlowSystem};

pub use flow::{
    finite_difference_jacobian, flow_map, flow_map_with_jacobian, integrate_flow, time1_map_with_jacobian, LinearField,
    Trajectory, VectorField,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Chart {
    /// Last block is `v^wk`.
    Lagrangian,
    /// Last block is `I^wk`.
    HalfLagrangian,
}

/// A point of `R^m × R^m × R^{d-m} × R^{d-m}` with its chart tag.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PhasePoint {
    pub chart: Chart,
    pub m: usize,
    pub d: usize,
    pub state: Vec<f64>,
}

impl PhasePoint {
    pub fn new(chart: Chart, phi_st: &[f64], v_st: &[f64], phi_wk: &[f64], w: &[f64]) -> Result<Self> {
        let m = phi_st.len();
        let k = phi_wk.len();
        if v_st.len() != m || w.len() != k {
            return Err(Error::Dimension("blocks of a phase point have inconsistent sizes".into()));
        }
        let state = [phi_st, v_st, phi_wk, w].concat();
        Ok(PhasePoint { chart, m, d: m + k, state })
    }

    pub fn from_state(chart: Chart, m: usize, d: usize, state: Vec<f64>) -> Result<Self> {
        if state.len() != 2 * d || m > d {
            return Err(Error::Dimension(format!("state of length {} for d = {d}", state.len())));
        }
        Ok(PhasePoint { chart, m, d, state })
    }

    pub fn phi_st(&self) -> &[f64] {
        &self.state[..self.m]
    }

    pub fn v_st(&self) -> &[f64] {
        &self.state[self.m..2 * self.m]
    }

    pub fn phi_wk(&self) -> &[f64] {
        &self.state[2 * self.m..self.m + self.d]
    }

    /// `v^wk` or `I^wk` depending on the chart.
    pub fn second_wk(&self) -> &[f64] {
        &self.state[self.m + self.d..]
    }

    /// All `d` angles in basis order.
    pub fn angles(&self) -> Vec<f64> {
        Layout { m: self.m, d: self.d }.angles(&self.state)
    }

    fn check_dec(&self, dec: &BlockDecomposition) -> Result<()> {
        if dec.m != self.m || dec.a.nrows() + dec.c.nrows() != self.d {
            return Err(Error::Dimension("phase point and decomposition disagree on (m, d)".into()));
        }
        Ok(())
    }

    /// Lagrangian to half-Lagrangian: `I^wk = C̃^{-1}(v^wk - B^T A^{-1} v^st)`.
    pub fn to_half_lagrangian(&self, dec: &BlockDecomposition) -> Result<PhasePoint> {
        self.check_dec(dec)?;
        match self.chart {
            Chart::HalfLagrangian => Ok(self.clone()),
            Chart::Lagrangian => {
                let vs = DVector::from_column_slice(self.v_st());
                let vw = DVector::from_column_slice(self.second_wk());
                let i = &dec.c_tilde_inv * (vw - dec.b.transpose() * &dec.a_inv * vs);
                PhasePoint::new(Chart::HalfLagrangian, self.phi_st(), self.v_st(), self.phi_wk(), i.as_slice())
            }
        }
    }

    /// Half-Lagrangian to Lagrangian: `v^wk = B^T A^{-1} v^st + C̃ I^wk`.
    pub fn to_lagrangian(&self, dec: &BlockDecomposition) -> Result<PhasePoint> {
        self.check_dec(dec)?;
        match self.chart {
            Chart::Lagrangian => Ok(self.clone()),
            Chart::HalfLagrangian => {
                let vs = DVector::from_column_slice(self.v_st());
                let iw = DVector::from_column_slice(self.second_wk());
                let v = dec.b.transpose() * &dec.a_inv * vs + &dec.c_tilde * iw;
                PhasePoint::new(Chart::Lagrangian, self.phi_st(), self.v_st(), self.phi_wk(), v.as_slice())
            }
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Layout {
    m: usize,
    d: usize,
}

impl Layout {
    /// State index of angle `i`.
    fn pos(&self, i: usize) -> usize {
        if i < self.m {
            i
        } else {
            self.m + i
        }
    }

    /// State index of velocity or action `i`.
    fn vel(&self, i: usize) -> usize {
        if i < self.m {
            self.m + i
        } else {
            self.d + i
        }
    }

    fn angles(&self, x: &[f64]) -> Vec<f64> {
        (0..self.d).map(|i| x[self.pos(i)]).collect()
    }

    fn seconds(&self, x: &[f64]) -> Vec<f64> {
        (0..self.d).map(|i| x[self.vel(i)]).collect()
    }
}

fn potential_jet(sys: &SlowSystem, phi: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
    let mut g = sys.strong_potential().gradient(phi);
    let gw = sys.weak_potential().gradient(phi);
    g.iter_mut().zip(&gw).for_each(|(a, b)| *a += b);
    let h = sys.strong_potential().hessian(phi) + sys.weak_potential().hessian(phi);
    (g, h)
}

/// Euler-Lagrange field of `L = ½ v·S^{-1} v + U`: `φ̇ = v`, `v̇ = S ∇U`.
#[derive(Clone, Debug)]
pub struct LagrangianField<'a> {
    sys: &'a SlowSystem,
    layout: Layout,
}

impl<'a> LagrangianField<'a> {
    pub fn new(sys: &'a SlowSystem) -> Self {
        LagrangianField { sys, layout: Layout { m: sys.m(), d: sys.d() } }
    }

    /// `½ v·S^{-1} v - U(φ)`, conserved along the flow.
    pub fn energy(&self, x: &[f64]) -> f64 {
        let phi = self.layout.angles(x);
        let v = DVector::from_vec(self.layout.seconds(x));
        0.5 * v.dot(&(self.sys.s_inv() * &v)) - self.sys.potential(&phi)
    }
}

impl VectorField for LagrangianField<'_> {
    fn dim(&self) -> usize {
        2 * self.layout.d
    }

    fn eval(&self, x: &[f64], out: &mut [f64]) {
        let l = self.layout;
        let phi = l.angles(x);
        let mut g = self.sys.strong_potential().gradient(&phi);
        let gw = self.sys.weak_potential().gradient(&phi);
        g.iter_mut().zip(&gw).for_each(|(a, b)| *a += b);
        let s = self.sys.s();
        for i in 0..l.d {
            out[l.pos(i)] = x[l.vel(i)];
            out[l.vel(i)] = (0..l.d).map(|j| s[(i, j)] * g[j]).sum();
        }
    }

    fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let l = self.layout;
        let phi = l.angles(x);
        let (_, h) = potential_jet(self.sys, &phi);
        let sh = self.sys.s() * h;
        let mut jac = DMatrix::zeros(2 * l.d, 2 * l.d);
        for i in 0..l.d {
            jac[(l.pos(i), l.vel(i))] = 1.0;
            for j in 0..l.d {
                jac[(l.vel(i), l.pos(j))] = sh[(i, j)];
            }
        }
        jac
    }
}

/// The half-Lagrangian field `X^s`.
#[derive(Clone, Debug)]
pub struct HalfLagrangianField<'a> {
    sys: &'a SlowSystem,
    layout: Layout,
    /// `B^T A^{-1}`
    bta: DMatrix<f64>,
    c_tilde: DMatrix<f64>,
    a_inv: DMatrix<f64>,
    b: DMatrix<f64>,
}

impl<'a> HalfLagrangianField<'a> {
    pub fn new(sys: &'a SlowSystem, dec: &BlockDecomposition) -> Self {
        HalfLagrangianField {
            sys,
            layout: Layout { m: sys.m(), d: sys.d() },
            bta: dec.b.transpose() * &dec.a_inv,
            c_tilde: dec.c_tilde.clone(),
            a_inv: dec.a_inv.clone(),
            b: dec.b.clone(),
        }
    }

    /// `H^s = ½ I·S I - U` with `I^st = A^{-1}(v^st - B I^wk)`.
    pub fn energy(&self, x: &[f64]) -> f64 {
        let l = self.layout;
        let vs = DVector::from_column_slice(&x[l.m..2 * l.m]);
        let iw = DVector::from_column_slice(&x[l.m + l.d..]);
        let is = &self.a_inv * (vs - &self.b * &iw);
        let i = DVector::from_iterator(l.d, is.iter().chain(iw.iter()).copied());
        0.5 * i.dot(&(self.sys.s() * &i)) - self.sys.potential(&l.angles(x))
    }
}

impl VectorField for HalfLagrangianField<'_> {
    fn dim(&self) -> usize {
        2 * self.layout.d
    }

    fn eval(&self, x: &[f64], out: &mut [f64]) {
        let l = self.layout;
        let (m, d) = (l.m, l.d);
        let phi = l.angles(x);
        let mut g = self.sys.strong_potential().gradient(&phi);
        let gw = self.sys.weak_potential().gradient(&phi);
        g.iter_mut().zip(&gw).for_each(|(a, b)| *a += b);
        let s = self.sys.s();
        for i in 0..m {
            out[i] = x[m + i];
            out[m + i] = (0..d).map(|j| s[(i, j)] * g[j]).sum();
        }
        for i in 0..d - m {
            out[2 * m + i] = (0..m).map(|j| self.bta[(i, j)] * x[m + j]).sum::<f64>()
                + (0..d - m).map(|j| self.c_tilde[(i, j)] * x[m + d + j]).sum::<f64>();
            out[m + d + i] = g[m + i];
        }
    }

    fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let l = self.layout;
        let (m, d) = (l.m, l.d);
        let phi = l.angles(x);
        let (_, h) = potential_jet(self.sys, &phi);
        let sh = self.sys.s().rows(0, m) * &h;
        let mut jac = DMatrix::zeros(2 * d, 2 * d);
        for i in 0..m {
            jac[(i, m + i)] = 1.0;
            for j in 0..d {
                jac[(m + i, l.pos(j))] = sh[(i, j)];
            }
        }
        for i in 0..d - m {
            for j in 0..m {
                jac[(2 * m + i, m + j)] = self.bta[(i, j)];
            }
            for j in 0..d - m {
                jac[(2 * m + i, m + d + j)] = self.c_tilde[(i, j)];
            }
            for j in 0..d {
                jac[(m + d + i, l.pos(j))] = h[(m + i, j)];
            }
        }
        jac
    }
}

/// Trivial extension `X^st_L` of the strong Lagrangian field: weak blocks
/// are zero.
#[derive(Clone, Debug)]
pub struct StrongExtension<'a> {
    sys: &'a SlowSystem,
    layout: Layout,
    a: DMatrix<f64>,
}

impl<'a> StrongExtension<'a> {
    pub fn new(sys: &'a SlowSystem, dec: &BlockDecomposition) -> Self {
        StrongExtension { sys, layout: Layout { m: sys.m(), d: sys.d() }, a: dec.a.clone() }
    }
}

impl VectorField for StrongExtension<'_> {
    fn dim(&self) -> usize {
        2 * self.layout.d
    }

    fn eval(&self, x: &[f64], out: &mut [f64]) {
        let l = self.layout;
        let m = l.m;
        out.iter_mut().for_each(|o| *o = 0.0);
        let g = self.sys.strong_potential().gradient(&l.angles(x));
        for i in 0..m {
            out[i] = x[m + i];
            out[m + i] = (0..m).map(|j| self.a[(i, j)] * g[j]).sum();
        }
    }

    fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let l = self.layout;
        let m = l.m;
        let h = self.sys.strong_potential().hessian(&l.angles(x));
        let ah = &self.a * h.view((0, 0), (m, m));
        let mut jac = DMatrix::zeros(2 * l.d, 2 * l.d);
        for i in 0..m {
            jac[(i, m + i)] = 1.0;
            for j in 0..m {
                jac[(m + i, j)] = ah[(i, j)];
            }
        }
        jac
    }
}

/// `σ_1 >= ... >= σ_{d-m}` in `(0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RescalingSigma {
    sigma: Vec<f64>,
}

impl RescalingSigma {
    pub fn new(sigma: Vec<f64>) -> Result<Self> {
        if sigma.iter().any(|s| !(*s > 0.0 && *s <= 1.0)) {
            return Err(Error::Model(format!("rescaling factors {sigma:?} must lie in (0, 1]")));
        }
        if sigma.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::Model(format!("rescaling factors {sigma:?} must be nonincreasing")));
        }
        Ok(RescalingSigma { sigma })
    }

    /// `σ_j = |k_j^wk|^{-(q+1)/3}`.
    pub fn for_basis(basis: &OrderedBasis, q: f64) -> Result<Self> {
        Self::new(basis.weak().iter().map(|k| (k.norm() as f64).powf(-(q + 1.0) / 3.0)).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.sigma
    }

    /// Diagonal of `Φ_Σ` in block order.
    fn diagonal(&self, m: usize) -> Vec<f64> {
        let mut p = vec![1.0; 2 * m];
        p.extend(self.sigma.iter().copied());
        p.extend(self.sigma.iter().map(|s| 1.0 / s));
        p
    }

    /// `Φ_Σ(x)`
    pub fn forward(&self, m: usize, x: &[f64]) -> Vec<f64> {
        self.diagonal(m).iter().zip(x).map(|(p, v)| p * v).collect()
    }

    /// `Φ_Σ^{-1}(y)`
    pub fn inverse(&self, m: usize, y: &[f64]) -> Vec<f64> {
        self.diagonal(m).iter().zip(y).map(|(p, v)| v / p).collect()
    }
}

/// `X̃ = Φ_Σ X ∘ Φ_Σ^{-1}` for a field in block order.
#[derive(Clone, Debug)]
pub struct Rescaled<F> {
    inner: F,
    diag: Vec<f64>,
}

impl<F: VectorField> Rescaled<F> {
    pub fn new(inner: F, sigma: &RescalingSigma, m: usize) -> Result<Self> {
        let diag = sigma.diagonal(m);
        if diag.len() != inner.dim() {
            return Err(Error::Dimension("rescaling does not match the field".into()));
        }
        Ok(Rescaled { inner, diag })
    }

    pub fn inner(&self) -> &F {
        &self.inner
    }
}

impl<F: VectorField> VectorField for Rescaled<F> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn eval(&self, y: &[f64], out: &mut [f64]) {
        let x: Vec<f64> = y.iter().zip(&self.diag).map(|(v, p)| v / p).collect();
        self.inner.eval(&x, out);
        out.iter_mut().zip(&self.diag).for_each(|(o, p)| *o *= p);
    }

    fn jacobian(&self, y: &[f64]) -> DMatrix<f64> {
        let x: Vec<f64> = y.iter().zip(&self.diag).map(|(v, p)| v / p).collect();
        let mut j = self.inner.jacobian(&x);
        let n = j.nrows();
        for r in 0..n {
            for c in 0..n {
                j[(r, c)] *= self.diag[r] / self.diag[c];
            }
        }
        j
    }
}

/// `X^s` at a half-Lagrangian point.
pub fn eval_xs(sys: &SlowSystem, dec: &BlockDecomposition, pt: &PhasePoint) -> Result<Vec<f64>> {
    if pt.chart != Chart::HalfLagrangian {
        return Err(Error::Chart("X^s needs a half-Lagrangian point".into()));
    }
    pt.check_dec(dec)?;
    Ok(HalfLagrangianField::new(sys, dec).value(&pt.state))
}

/// `X^st_L` at any point (its weak blocks vanish in either chart).
pub fn eval_xst_l(sys: &SlowSystem, dec: &BlockDecomposition, pt: &PhasePoint) -> Result<Vec<f64>> {
    pt.check_dec(dec)?;
    Ok(StrongExtension::new(sys, dec).value(&pt.state))
}

/// Sampling region for deviation sups, in rescaled coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SampleBox {
    /// Angles range over `[0, angle_extent]`.
    pub angle_extent: f64,
    /// `|v^st|_∞ <= v_radius`
    pub v_radius: f64,
    /// `|I^wk|_∞ <= i_radius`
    pub i_radius: f64,
}

impl Default for SampleBox {
    fn default() -> Self {
        SampleBox { angle_extent: 1.0, v_radius: 2.0, i_radius: 2.0 }
    }
}

impl SampleBox {
    fn bounds(&self, m: usize, d: usize) -> (Vec<f64>, Vec<f64>) {
        let mut lo = Vec::with_capacity(2 * d);
        let mut hi = Vec::with_capacity(2 * d);
        let blocks = [(m, 0.0, self.angle_extent), (m, -self.v_radius, self.v_radius)];
        let weak = [(d - m, 0.0, self.angle_extent), (d - m, -self.i_radius, self.i_radius)];
        for (len, a, b) in blocks.into_iter().chain(weak) {
            lo.extend(std::iter::repeat_n(a, len));
            hi.extend(std::iter::repeat_n(b, len));
        }
        (lo, hi)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DeviationReport {
    pub mu: i64,
    pub q: f64,
    pub sigma: Vec<f64>,
    /// Sup of `|Π_(φst,vst)(X̃^s - X^st_L)|_∞`.
    pub c0_projected: f64,
    /// Sup of the induced `∞`-norm (max row sum) of `DX̃^s - DX^st_L`.
    pub c1: f64,
    pub sample_box: SampleBox,
    pub samples: usize,
}

/// Sup deviations between the rescaled slow field and the trivially
/// extended strong field over a Halton sample of `sample_box`.
pub fn rescaled_deviation(
    sys: &SlowSystem,
    dec: &BlockDecomposition,
    q: f64,
    sample_box: SampleBox,
    samples: usize,
) -> Result<DeviationReport> {
    if !(q > 2.0) {
        return Err(Error::Model(format!("rescaling estimates need q > 2, got {q}")));
    }
    let (m, d) = (sys.m(), sys.d());
    if d == m {
        return Err(Error::Degenerate("no weak variables to rescale".into()));
    }
    let sigma = RescalingSigma::for_basis(sys.basis(), q)?;
    let xs = Rescaled::new(HalfLagrangianField::new(sys, dec), &sigma, m)?;
    let xl = StrongExtension::new(sys, dec);
    let (lo, hi) = sample_box.bounds(m, d);
    let points = halton_box(samples, &lo, &hi);
    let per_point: Vec<(f64, f64)> = points
        .par_iter()
        .map(|y| {
            let a = xs.value(y);
            let b = xl.value(y);
            let c0 = (0..2 * m).map(|i| (a[i] - b[i]).abs()).fold(0.0, f64::max);
            let dj = xs.jacobian(y) - xl.jacobian(y);
            let c1 = dj.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
            (c0, c1)
        })
        .collect();
    let (c0_projected, c1) = per_point.iter().fold((0.0f64, 0.0f64), |(a, b), (x, y)| (a.max(*x), b.max(*y)));
    let mu = sys.basis().weak().iter().map(|k| k.norm()).min().unwrap_or(0);
    Ok(DeviationReport { mu, q, sigma: sigma.values().to_vec(), c0_projected, c1, sample_box, samples })
}

/// Sup over interior samples of `|v̇^st - A ∂_st U^st(φ^st)|_∞`, with `v̇^st`
/// from fourth order central differences of the recorded trajectory (either
/// chart; the strong blocks agree).
pub fn el_acceleration_residual(sys: &SlowSystem, dec: &BlockDecomposition, traj: &Trajectory) -> Result<f64> {
    let (m, d) = (sys.m(), sys.d());
    let n = traj.states.len();
    if n < 5 {
        return Err(Error::Degenerate("need at least five trajectory samples".into()));
    }
    if traj.states[0].len() != 2 * d {
        return Err(Error::Dimension("trajectory does not match the system".into()));
    }
    let l = Layout { m, d };
    let h = traj.dt;
    let mut worst: f64 = 0.0;
    for k in 2..n - 2 {
        let x = &traj.states[k];
        let g = sys.strong_potential().gradient(&l.angles(x));
        for i in 0..m {
            let c = m + i;
            let acc = (-traj.states[k + 2][c] + 8.0 * traj.states[k + 1][c] - 8.0 * traj.states[k - 1][c]
                + traj.states[k - 2][c])
                / (12.0 * h);
            let target: f64 = (0..m).map(|j| dec.a[(i, j)] * g[j]).sum();
            worst = worst.max((acc - target).abs());
        }
    }
    Ok(worst)
}
