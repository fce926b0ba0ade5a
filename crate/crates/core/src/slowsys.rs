//! The slow mechanical system `H^s(φ, I) = ½ I·S I - U(φ)` on `T^d × R^d`
//! and its Lagrangian `L(φ, v) = ½ v·S^{-1} v + U(φ)`.
//!
//! `S_ij = k̄_i·Q_0 k̄_j` where `k̄` is the spatial part of a basis vector.
//! Splitting the angles into strong (`1..=m`) and weak ones gives blocks
//! `S = [[A, B], [B^T, C]]` and the Schur complement `C̃ = C - B^T A^{-1} B`.
//! The fine decomposition repeats the Schur step one weak angle at a time:
//! with `E` upper unitriangular, `E^T S E = diag(A, z̃_1, ..., z̃_{d-m})`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::averaging::{split_potentials, FourierHamiltonian, SplitPotentials, TrigPolynomial};
use crate::error::{Error, Result};
use crate::lattice::OrderedBasis;

/// Condition number above which a symmetric positive matrix is rejected.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Inverse of a symmetric positive definite matrix, with a condition check.
pub fn spd_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if m.nrows() == 0 {
        return Ok(m.clone());
    }
    let eig = m.clone().symmetric_eigenvalues();
    let lo = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(lo > 0.0) {
        return Err(Error::Conditioning(format!("matrix is not positive definite (λ_min = {lo:e})")));
    }
    if hi / lo > CONDITION_LIMIT {
        return Err(Error::Conditioning(format!("condition number {:e} exceeds {CONDITION_LIMIT:e}", hi / lo)));
    }
    let ch = m.clone().cholesky().ok_or_else(|| Error::Conditioning("Cholesky failed".into()))?;
    Ok(ch.inverse())
}

/// Hessian of `H_0` on the action space, `D^{-1} Id <= Q_0(p) <= D Id`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConvexModel {
    /// `Q_0(p) = q0` (a quadratic `H_0`).
    Constant { q0: Vec<Vec<f64>>, convexity: f64 },
    /// `Q_0(p) = q0 + Σ_i p_i slopes[i]`.
    Affine { q0: Vec<Vec<f64>>, slopes: Vec<Vec<Vec<f64>>>, convexity: f64 },
}

pub(crate) fn to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::Dimension("matrix rows of unequal length".into()));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

pub(crate) fn from_matrix(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

impl ConvexModel {
    pub fn constant(q0: DMatrix<f64>, convexity: f64) -> Self {
        ConvexModel::Constant { q0: from_matrix(&q0), convexity }
    }

    pub fn n(&self) -> usize {
        match self {
            ConvexModel::Constant { q0, .. } | ConvexModel::Affine { q0, .. } => q0.len(),
        }
    }

    /// `Q_0(p)`, checked against the convexity bounds.
    pub fn hessian(&self, p: &[f64]) -> Result<DMatrix<f64>> {
        let (m, d) = match self {
            ConvexModel::Constant { q0, convexity } => (to_matrix(q0)?, *convexity),
            ConvexModel::Affine { q0, slopes, convexity } => {
                let mut m = to_matrix(q0)?;
                if slopes.len() != m.nrows() || p.len() != m.nrows() {
                    return Err(Error::Dimension("affine model needs one slope per action".into()));
                }
                for (pi, s) in p.iter().zip(slopes) {
                    m += to_matrix(s)? * *pi;
                }
                (m, *convexity)
            }
        };
        if p.len() != m.nrows() {
            return Err(Error::Dimension(format!("p has length {} but n = {}", p.len(), m.nrows())));
        }
        if (&m - m.transpose()).amax() > 1e-12 * m.amax().max(1.0) {
            return Err(Error::Model("Q_0(p) is not symmetric".into()));
        }
        let eig = m.clone().symmetric_eigenvalues();
        let lo = eig.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !(d > 1.0) || lo < 1.0 / d || hi > d {
            return Err(Error::Model(format!(
                "spectrum [{lo}, {hi}] of Q_0(p) outside [1/D, D] for D = {d}"
            )));
        }
        Ok(m)
    }
}

/// Slow system data: basis, `S`, and the split potentials.
#[derive(Clone, Debug)]
pub struct SlowSystem {
    basis: OrderedBasis,
    p0: Vec<f64>,
    q0: DMatrix<f64>,
    s: DMatrix<f64>,
    s_inv: DMatrix<f64>,
    potentials: SplitPotentials,
    strong_d: TrigPolynomial,
    weak_d: TrigPolynomial,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SlowJson {
    version: u32,
    basis: OrderedBasis,
    p0: Vec<f64>,
    q0: Vec<Vec<f64>>,
    strong: TrigPolynomial,
    weak: Vec<TrigPolynomial>,
}

impl SlowSystem {
    /// Averages `h1` over the lattice of `basis` at `p0`.
    pub fn from_hamiltonian(
        model: &ConvexModel,
        p0: &[f64],
        basis: &OrderedBasis,
        h1: &FourierHamiltonian,
    ) -> Result<Self> {
        let q0 = model.hessian(p0)?;
        let split = split_potentials(h1, basis)?;
        Self::from_parts(q0, p0.to_vec(), basis.clone(), split)
    }

    /// Direct construction from `Q_0(p_0)` and user supplied potentials.
    pub fn from_parts(
        q0: DMatrix<f64>,
        p0: Vec<f64>,
        basis: OrderedBasis,
        potentials: SplitPotentials,
    ) -> Result<Self> {
        let n = basis.ambient_dim() - 1;
        if q0.nrows() != n || q0.ncols() != n {
            return Err(Error::Dimension(format!("Q_0 must be {n}x{n}")));
        }
        if p0.len() != n {
            return Err(Error::Dimension(format!("p_0 must have length {n}")));
        }
        let m = basis.split_index();
        let d = basis.len();
        if potentials.m() != m || potentials.d() != d {
            return Err(Error::Dimension("potentials do not match the basis split".into()));
        }
        for (j, u) in potentials.weak.iter().enumerate() {
            if u.dim() != m + j + 1 {
                return Err(Error::Dimension(format!("weak level {} lives on T^{}", j + 1, m + j + 1)));
            }
        }
        let kb = DMatrix::from_fn(n, d, |i, j| basis.vectors()[j].0[i] as f64);
        let s = kb.transpose() * &q0 * &kb;
        let s_inv = spd_inverse(&s).map_err(|e| match e {
            Error::Conditioning(msg) => Error::Conditioning(format!("S: {msg}")),
            other => other,
        })?;
        let strong_d = potentials.strong.embed(d)?;
        let weak_d = potentials.weak_total()?;
        Ok(SlowSystem { basis, p0, q0, s, s_inv, potentials, strong_d, weak_d })
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let raw: SlowJson = serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        if raw.version != 1 {
            return Err(Error::Parse(format!("unsupported slow system version {}", raw.version)));
        }
        let q0 = to_matrix(&raw.q0)?;
        let pots = SplitPotentials { strong: raw.strong, weak: raw.weak };
        Self::from_parts(q0, raw.p0, raw.basis, pots)
    }

    pub fn to_json(&self) -> String {
        let raw = SlowJson {
            version: 1,
            basis: self.basis.clone(),
            p0: self.p0.clone(),
            q0: from_matrix(&self.q0),
            strong: self.potentials.strong.clone(),
            weak: self.potentials.weak.clone(),
        };
        serde_json::to_string(&raw).expect("slow system serializes")
    }

    pub fn d(&self) -> usize {
        self.basis.len()
    }

    pub fn m(&self) -> usize {
        self.basis.split_index()
    }

    pub fn basis(&self) -> &OrderedBasis {
        &self.basis
    }

    pub fn q0(&self) -> &DMatrix<f64> {
        &self.q0
    }

    pub fn p0(&self) -> &[f64] {
        &self.p0
    }

    pub fn s(&self) -> &DMatrix<f64> {
        &self.s
    }

    pub fn s_inv(&self) -> &DMatrix<f64> {
        &self.s_inv
    }

    pub fn potentials(&self) -> &SplitPotentials {
        &self.potentials
    }

    /// `U^st` on `T^d`.
    pub fn strong_potential(&self) -> &TrigPolynomial {
        &self.strong_d
    }

    /// `U^wk = Σ_j U^wk_j` on `T^d`.
    pub fn weak_potential(&self) -> &TrigPolynomial {
        &self.weak_d
    }

    pub fn potential(&self, phi: &[f64]) -> f64 {
        self.strong_d.eval(phi) + self.weak_d.eval(phi)
    }

    /// `H^s = ½ I·S I - U(φ)`.
    pub fn hamiltonian(&self, phi: &[f64], action: &[f64]) -> f64 {
        let i = DVector::from_column_slice(action);
        0.5 * i.dot(&(&self.s * &i)) - self.potential(phi)
    }

    /// `L = ½ v·S^{-1} v + U(φ)`.
    pub fn lagrangian(&self, phi: &[f64], v: &[f64]) -> f64 {
        let v = DVector::from_column_slice(v);
        0.5 * v.dot(&(&self.s_inv * &v)) + self.potential(phi)
    }

    /// The strong system on `T^m × R^m`: basis `B_m`, potential `U^st`.
    pub fn strong_system(&self) -> Result<SlowSystem> {
        let m = self.m();
        let basis = OrderedBasis::new(self.basis.strong().to_vec(), m)?;
        let pots = SplitPotentials { strong: self.potentials.strong.clone(), weak: vec![] };
        Self::from_parts(self.q0.clone(), self.p0.clone(), basis, pots)
    }

    /// Same system with `U^wk` removed.
    pub fn without_weak(&self) -> Result<SlowSystem> {
        let pots = SplitPotentials {
            strong: self.potentials.strong.clone(),
            weak: self.potentials.weak.iter().map(|u| TrigPolynomial::zero(u.dim())).collect(),
        };
        Self::from_parts(self.q0.clone(), self.p0.clone(), self.basis.clone(), pots)
    }

    /// Same system with `U^wk` multiplied by `s`.
    pub fn with_weak_scaled(&self, s: f64) -> Result<SlowSystem> {
        let pots = SplitPotentials {
            strong: self.potentials.strong.clone(),
            weak: self.potentials.weak.iter().map(|u| u.scale(s)).collect(),
        };
        Self::from_parts(self.q0.clone(), self.p0.clone(), self.basis.clone(), pots)
    }
}

/// `L(φ, v) = ½ v·S^{-1} v + U(φ)` on `T^d × R^d`.
#[derive(Clone, Debug)]
pub struct MechanicalLagrangian {
    pub s_inv: DMatrix<f64>,
    pub potential: TrigPolynomial,
}

impl MechanicalLagrangian {
    pub fn new(s_inv: DMatrix<f64>, potential: TrigPolynomial) -> Result<Self> {
        let d = potential.dim();
        if s_inv.nrows() != d || s_inv.ncols() != d {
            return Err(Error::Dimension(format!("S^{{-1}} must be {d}x{d}")));
        }
        spd_inverse(&s_inv)?;
        Ok(MechanicalLagrangian { s_inv, potential })
    }

    /// The Lagrangian of `sys` with the full potential `U^st + U^wk`.
    pub fn of_system(sys: &SlowSystem) -> Result<Self> {
        let u = sys.strong_potential().add(sys.weak_potential())?;
        Self::new(sys.s_inv().clone(), u)
    }

    pub fn dim(&self) -> usize {
        self.potential.dim()
    }

    pub fn eval(&self, phi: &[f64], v: &[f64]) -> f64 {
        let v = DVector::from_column_slice(v);
        0.5 * v.dot(&(&self.s_inv * &v)) + self.potential.eval(phi)
    }

    /// Fiber derivative `I = ∂_v L = S^{-1} v` and `H = I·v - L`.
    pub fn legendre(&self, phi: &[f64], v: &[f64]) -> (Vec<f64>, f64) {
        let vv = DVector::from_column_slice(v);
        let i = &self.s_inv * &vv;
        let h = i.dot(&vv) - self.eval(phi, v);
        (i.iter().copied().collect(), h)
    }
}

/// Coarse and fine block data of `S`.
#[derive(Clone, Debug)]
pub struct BlockDecomposition {
    pub m: usize,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub a_inv: DMatrix<f64>,
    /// `C̃ = C - B^T A^{-1} B`
    pub c_tilde: DMatrix<f64>,
    pub c_tilde_inv: DMatrix<f64>,
    /// `z̃_i = z_i - y_i^T X_i^{-1} y_i`
    pub z_tilde: Vec<f64>,
    /// Upper unitriangular, `E^T S E = diag(A, z̃)`.
    pub e: DMatrix<f64>,
    pub e_inv: DMatrix<f64>,
}

impl BlockDecomposition {
    pub fn new(sys: &SlowSystem) -> Result<Self> {
        let s = sys.s();
        let m = sys.m();
        let d = sys.d();
        let a = s.view((0, 0), (m, m)).into_owned();
        let b = s.view((0, m), (m, d - m)).into_owned();
        let c = s.view((m, m), (d - m, d - m)).into_owned();
        let a_inv = spd_inverse(&a)?;
        let c_tilde = &c - b.transpose() * &a_inv * &b;
        let c_tilde_inv = if d > m { spd_inverse(&c_tilde)? } else { c_tilde.clone() };
        let mut e = DMatrix::identity(d, d);
        let mut z_tilde = Vec::with_capacity(d - m);
        for i in 1..=d - m {
            let k = m + i - 1;
            let x = s.view((0, 0), (k, k)).into_owned();
            let y = s.view((0, k), (k, 1)).into_owned();
            let xi = spd_inverse(&x)?;
            let sol = &xi * &y;
            let zt = s[(k, k)] - (y.transpose() * &sol)[(0, 0)];
            if !(zt > 0.0) {
                return Err(Error::Conditioning(format!("z̃_{i} = {zt:e} is not positive")));
            }
            z_tilde.push(zt);
            for r in 0..k {
                e[(r, k)] = -sol[(r, 0)];
            }
        }
        let e_inv = e
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Conditioning("E is singular".into()))?;
        Ok(BlockDecomposition { m, a, b, c, a_inv, c_tilde, c_tilde_inv, z_tilde, e, e_inv })
    }

    /// `c̄ = c^st + A^{-1} B c^wk`
    pub fn c_bar(&self, c: &[f64]) -> Vec<f64> {
        let (cs, cw) = c.split_at(self.m);
        let v = DVector::from_column_slice(cs) + &self.a_inv * &self.b * DVector::from_column_slice(cw);
        v.iter().cloned().collect()
    }

    /// `η = E^{-1} c`; its strong part equals `c̄`.
    pub fn eta(&self, c: &[f64]) -> Vec<f64> {
        (&self.e_inv * DVector::from_column_slice(c)).iter().cloned().collect()
    }

    /// `E^T S E - diag(A, z̃)`, max entry.
    pub fn diagonalization_residual(&self, s: &DMatrix<f64>) -> f64 {
        let mut target = DMatrix::zeros(s.nrows(), s.ncols());
        target.view_mut((0, 0), (self.m, self.m)).copy_from(&self.a);
        for (i, z) in self.z_tilde.iter().enumerate() {
            target[(self.m + i, self.m + i)] = *z;
        }
        (self.e.transpose() * s * &self.e - target).amax()
    }
}

/// `L - c·v` evaluated three ways.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SplitEvaluation {
    pub direct: f64,
    pub coarse: f64,
    pub fine: f64,
    /// `max(|direct - coarse|, |direct - fine|)`
    pub residual: f64,
}

/// Evaluates `L(φ, v) - c·v` directly, through the coarse split
/// `L^st - c̄·v^st + ½(w - C̃c^wk)·C̃^{-1}(w - C̃c^wk) - ½ c^wk·C̃ c^wk + U^wk`
/// with `w = v^wk - B^T A^{-1} v^st`, and through the fine split
/// `L^st - η^st·v^st + Σ_i [½ (w_i - z̃_i η_i)^2 / z̃_i - ½ z̃_i η_i^2 + U^wk_i]`
/// with `w = E^T v`.
pub fn lagrangian_split_eval(
    sys: &SlowSystem,
    dec: &BlockDecomposition,
    c: &[f64],
    phi: &[f64],
    v: &[f64],
) -> Result<SplitEvaluation> {
    let d = sys.d();
    let m = sys.m();
    if c.len() != d || phi.len() != d || v.len() != d {
        return Err(Error::Dimension(format!("c, φ and v must have length {d}")));
    }
    let vv = DVector::from_column_slice(v);
    let cv = DVector::from_column_slice(c);
    let direct = sys.lagrangian(phi, v) - cv.dot(&vv);

    let vs = vv.rows(0, m).into_owned();
    let vw = vv.rows(m, d - m).into_owned();
    let cw = cv.rows(m, d - m).into_owned();
    let l_st = 0.5 * vs.dot(&(&dec.a_inv * &vs)) + sys.strong_potential().eval(phi);
    let u_wk = sys.weak_potential().eval(phi);
    let cbar = DVector::from_vec(dec.c_bar(c));

    let w = &vw - dec.b.transpose() * &dec.a_inv * &vs;
    let shift = &w - &dec.c_tilde * &cw;
    let coarse = l_st - cbar.dot(&vs) + 0.5 * shift.dot(&(&dec.c_tilde_inv * &shift))
        - 0.5 * cw.dot(&(&dec.c_tilde * &cw))
        + u_wk;

    let eta = dec.eta(c);
    let wf = dec.e.transpose() * &vv;
    let eta_st = DVector::from_column_slice(&eta[..m]);
    let mut fine = l_st - eta_st.dot(&vs);
    for (i, z) in dec.z_tilde.iter().enumerate() {
        let k = m + i;
        let wi = wf[k];
        let ei = eta[k];
        let level = &sys.potentials().weak[i];
        let ui = level.eval(&phi[..k + 1]);
        fine += 0.5 * (wi - z * ei).powi(2) / z - 0.5 * z * ei * ei + ui;
    }
    let residual = (direct - coarse).abs().max((direct - fine).abs());
    Ok(SplitEvaluation { direct, coarse, fine, residual })
}

/// One row of the `z̃_i^{-1}` bound check.
#[derive(Clone, Debug, Serialize)]
pub struct ZTildeRow {
    pub level: usize,
    pub z_tilde_inv: f64,
    /// `M* |k_i^wk|^{2i}`
    pub scaled_bound: f64,
    /// `D^{2(m+i)-1} n^{m+i-1} Π_{t<m+i} |k_t|^2`, valid for any basis.
    pub explicit_bound: f64,
    pub holds: bool,
}

/// Compares `z̃_i^{-1}` with `M* |k_i^wk|^{2i}` and with an explicit bound.
///
/// The explicit bound follows from `z̃_i = det S_{m+i} / det X_i`, the
/// integer Gram determinant `>= 1` and Hadamard's inequality.
pub fn ztilde_bound_check(
    sys: &SlowSystem,
    dec: &BlockDecomposition,
    m_star: f64,
    convexity: f64,
) -> Vec<ZTildeRow> {
    let m = sys.m();
    let n = sys.basis().ambient_dim() - 1;
    let ks = sys.basis().vectors();
    dec.z_tilde
        .iter()
        .enumerate()
        .map(|(idx, z)| {
            let i = idx + 1;
            let kn = ks[m + idx].norm() as f64;
            let scaled_bound = m_star * kn.powi(2 * i as i32);
            let prod: f64 = ks[..m + idx].iter().map(|k| (k.norm() as f64).powi(2)).product();
            let explicit_bound = convexity.powi(2 * (m + i) as i32 - 1) * (n as f64).powi((m + i - 1) as i32) * prod;
            let zi = 1.0 / z;
            ZTildeRow { level: i, z_tilde_inv: zi, scaled_bound, explicit_bound, holds: zi <= scaled_bound && zi <= explicit_bound }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::IntVector;

    fn system() -> SlowSystem {
        let basis = OrderedBasis::new(
            vec![IntVector(vec![1, 0, 0]), IntVector(vec![1, 7, 1])],
            1,
        )
        .unwrap();
        let q0 = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 1.0]);
        let pots = SplitPotentials {
            strong: TrigPolynomial::cosine(1, vec![1], 0.25, 0.0),
            weak: vec![TrigPolynomial::cosine(2, vec![1, 1], 1e-3, 0.1)],
        };
        SlowSystem::from_parts(q0, vec![0.0, 0.0], basis, pots).unwrap()
    }

    #[test]
    fn s_matrix_from_spatial_parts() {
        let sys = system();
        let s = sys.s();
        assert!((s[(0, 0)] - 1.0).abs() < 1e-15);
        assert!((s[(0, 1)] - (1.0 + 0.3 * 7.0)).abs() < 1e-12);
        assert!((s[(1, 1)] - (1.0 + 2.0 * 0.3 * 7.0 + 49.0)).abs() < 1e-12);
    }

    #[test]
    fn fine_decomposition_diagonalizes() {
        let sys = system();
        let dec = BlockDecomposition::new(&sys).unwrap();
        assert!(dec.diagonalization_residual(sys.s()) < 1e-10);
        let c = [0.3, -0.2];
        let eta = dec.eta(&c);
        let cbar = dec.c_bar(&c);
        assert!((eta[0] - cbar[0]).abs() < 1e-12);
        assert!((dec.z_tilde[0] - dec.c_tilde[(0, 0)]).abs() < 1e-10);
    }

    #[test]
    fn splits_agree() {
        let sys = system();
        let dec = BlockDecomposition::new(&sys).unwrap();
        let e = lagrangian_split_eval(&sys, &dec, &[0.2, 0.05], &[0.1, 0.7], &[0.4, -1.3]).unwrap();
        assert!(e.residual < 1e-10, "{e:?}");
    }

    #[test]
    fn json_round_trip() {
        let sys = system();
        let back = SlowSystem::from_json(&sys.to_json()).unwrap();
        assert_eq!(back.to_json(), sys.to_json());
        assert_eq!(back.s(), sys.s());
    }

    #[test]
    fn legendre_involution() {
        let sys = system();
        let lag = MechanicalLagrangian::of_system(&sys).unwrap();
        for t in 0..200 {
            let x = t as f64 * 0.618;
            let phi = [x.fract(), (1.7 * x).fract()];
            let v = [(3.1 * x).sin(), (2.3 * x).cos() * 2.0];
            let (i, h) = lag.legendre(&phi, &v);
            assert!((h - sys.hamiltonian(&phi, &i)).abs() < 1e-9);
            let back = sys.s() * DVector::from_column_slice(&i);
            assert!((back[0] - v[0]).abs() < 1e-9 && (back[1] - v[1]).abs() < 1e-9);
        }
    }

    #[test]
    fn convex_model_bounds() {
        let m = ConvexModel::constant(DMatrix::identity(2, 2) * 3.0, 2.0);
        assert!(matches!(m.hessian(&[0.0, 0.0]), Err(Error::Model(_))));
        let m = ConvexModel::constant(DMatrix::identity(2, 2), 2.0);
        assert!(m.hessian(&[0.0, 0.0]).is_ok());
    }
}
