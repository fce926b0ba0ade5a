//! Averaging a perturbation over a resonance lattice.
//!
//! For a basis `B = (k_1, ..., k_d)` the resonant part of `H_1` is
//! `Z_B(φ) = Σ_{l ∈ Z^d} h_{l_1 k_1 + ... + l_d k_d} exp(2πi l·φ)`. The
//! slow potentials are `U^st = -Z_{B_m}` and
//! `U^wk_j = -(Z_{B_{m+j}} - Z_{B_{m+j-1}})`: the weak level `j` collects
//! exactly the lattice frequencies whose last nonzero coordinate is `m + j`.

mod fourier;
mod trig;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{IntVector, OrderedBasis, ResonanceLattice};

pub use fourier::{FourierHamiltonian, HermitianPolicy, LoadOptions};
pub use trig::{C2Norm, TrigPolynomial};

/// `Z_B` for the given vectors, a polynomial on `T^{len}`.
pub fn project_to_lattice(h1: &FourierHamiltonian, basis: &[IntVector]) -> Result<TrigPolynomial> {
    let lat = ResonanceLattice::new(h1.ambient_dim(), basis.to_vec())?;
    let solver = lat.solver()?;
    let mut z = TrigPolynomial::zero(basis.len());
    for (k, h) in h1.coefficients() {
        if let Some(l) = solver.coordinates(&k.wide())? {
            let l = IntVector::from_wide(&l)?;
            z.insert_unchecked(l.0, *h);
        }
    }
    Ok(z)
}

/// Strong and weak potentials of a split basis.
#[derive(Clone, Debug, Serialize)]
pub struct SplitPotentials {
    /// On `T^m`.
    pub strong: TrigPolynomial,
    /// Level `j` lives on `T^{m+j}`.
    pub weak: Vec<TrigPolynomial>,
}

impl SplitPotentials {
    pub fn m(&self) -> usize {
        self.strong.dim()
    }

    pub fn d(&self) -> usize {
        self.m() + self.weak.len()
    }

    /// `U^wk = Σ_j U^wk_j` on `T^d`.
    pub fn weak_total(&self) -> Result<TrigPolynomial> {
        let d = self.d();
        let mut acc = TrigPolynomial::zero(d);
        for u in &self.weak {
            acc = acc.add(&u.embed(d)?)?;
        }
        Ok(acc)
    }

    /// `U^st + U^wk` on `T^d`.
    pub fn total(&self) -> Result<TrigPolynomial> {
        self.strong.embed(self.d())?.add(&self.weak_total()?)
    }
}

/// Splits `-Z_B` into the strong potential and the weak levels.
pub fn split_potentials(h1: &FourierHamiltonian, basis: &OrderedBasis) -> Result<SplitPotentials> {
    if basis.ambient_dim() != h1.ambient_dim() {
        return Err(Error::Dimension("basis and Hamiltonian in different dimensions".into()));
    }
    let m = basis.split_index();
    let d = basis.len();
    let solver = basis.lattice().solver()?;
    let mut strong = TrigPolynomial::zero(m);
    let mut weak: Vec<TrigPolynomial> = (1..=d - m).map(|j| TrigPolynomial::zero(m + j)).collect();
    for (k, h) in h1.coefficients() {
        let Some(l) = solver.coordinates(&k.wide())? else { continue };
        let l = IntVector::from_wide(&l)?.0;
        match l.iter().rposition(|&x| x != 0) {
            None => strong.insert_unchecked(vec![0; m], -*h),
            Some(t) if t < m => strong.insert_unchecked(l[..m].to_vec(), -*h),
            Some(t) => weak[t - m].insert_unchecked(l[..=t].to_vec(), -*h),
        }
    }
    Ok(SplitPotentials { strong, weak })
}

/// Exponent `q = r - n - 2(d - m) - 4` delivered by the averaging step for
/// a `C^r` perturbation.
pub fn pipeline_exponent(n: usize, r: u32, d: usize, m: usize) -> i64 {
    r as i64 - n as i64 - 2 * (d as i64 - m as i64) - 4
}

/// Tail estimate `C M^{-r + n + 4}` for the Fourier modes beyond `M`.
pub fn tail_bound(n: usize, r: u32, big_m: f64, constant: f64) -> Result<f64> {
    if (r as usize) < n + 4 {
        return Err(Error::Regularity(format!("regularity {r} below n + 4 = {}", n + 4)));
    }
    if big_m < 1.0 {
        return Err(Error::Degenerate("cutoff must be at least 1".into()));
    }
    Ok(constant * big_m.powf(-(r as f64) + n as f64 + 4.0))
}

#[derive(Clone, Debug, Serialize)]
pub struct LevelDecay {
    pub level: usize,
    pub norm_k: i64,
    pub c2: C2Norm,
    /// `κ |k_j^wk|^{-q}`
    pub allowed: f64,
    /// `allowed - coefficient_bound`; nonnegative when the level passes.
    pub margin: f64,
}

/// Check of the two dominance conditions for constants `(κ, q)`.
#[derive(Clone, Debug, Serialize)]
pub struct DominanceCertificate {
    pub kappa: f64,
    pub q: f64,
    /// `μ = min_j |k_j^wk|`
    pub mu: i64,
    /// `κ (1 + |k_j^wk|) - |k_i^wk|` for all `i < j`.
    pub ordering_margins: Vec<f64>,
    pub levels: Vec<LevelDecay>,
    pub passed: bool,
}

/// Certifies `|k_i^wk| <= κ(1 + |k_j^wk|)` for `i < j` and
/// `|U^wk_j|_{C^2} <= κ |k_j^wk|^{-q}`, using the coefficient bound for the
/// norm. With `with_grid` the grid lower bound is also recorded.
pub fn dominance_check(
    basis: &OrderedBasis,
    split: &SplitPotentials,
    kappa: f64,
    q: f64,
    with_grid: bool,
) -> Result<DominanceCertificate> {
    if kappa.is_nan() || kappa <= 1.0 {
        return Err(Error::Model(format!("κ = {kappa} must exceed 1")));
    }
    if q.is_nan() || q < 1.0 {
        return Err(Error::Model(format!("q = {q} must be at least 1")));
    }
    if split.weak.len() != basis.weak().len() || split.m() != basis.split_index() {
        return Err(Error::Dimension("potentials do not match the basis split".into()));
    }
    let norms: Vec<i64> = basis.weak().iter().map(|k| k.norm()).collect();
    let mu = norms.iter().copied().min().unwrap_or(0);
    let mut ordering_margins = Vec::new();
    for i in 0..norms.len() {
        for j in i + 1..norms.len() {
            ordering_margins.push(kappa * (1.0 + norms[j] as f64) - norms[i] as f64);
        }
    }
    let mut levels = Vec::new();
    for (j, u) in split.weak.iter().enumerate() {
        let c2 = if with_grid {
            u.c2_norm(None)
        } else {
            let mut c = u.c2_norm(Some(1));
            c.grid_sup = f64::NAN;
            c
        };
        let allowed = kappa * (norms[j] as f64).powf(-q);
        levels.push(LevelDecay { level: j + 1, norm_k: norms[j], c2, allowed, margin: allowed - c2.coefficient_bound });
    }
    let passed = ordering_margins.iter().all(|&x| x >= 0.0) && levels.iter().all(|l| l.margin >= 0.0);
    Ok(DominanceCertificate { kappa, q, mu, ordering_margins, levels, passed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    fn v(x: &[i64]) -> IntVector {
        IntVector(x.to_vec())
    }

    #[test]
    fn single_mode_projects_to_its_coordinates() {
        let mut h = FourierHamiltonian::new(3, 9);
        h.set_pair(v(&[1, 1, 0]), Complex64::new(0.5, 0.0)).unwrap();
        let z = project_to_lattice(&h, &[v(&[1, 0, 0]), v(&[0, 1, 0])]).unwrap();
        assert_eq!(z.coefficient(&[1, 1]), Complex64::new(0.5, 0.0));
        assert_eq!(z.len(), 2);
        let z1 = project_to_lattice(&h, &[v(&[1, 0, 0])]).unwrap();
        assert!(z1.is_empty());
    }

    #[test]
    fn tail_bound_requires_regularity() {
        assert!(matches!(tail_bound(2, 5, 10.0, 1.0), Err(Error::Regularity(_))));
        let a = tail_bound(2, 10, 10.0, 1.0).unwrap();
        assert!((a - 1e-4).abs() < 1e-16);
    }

    #[test]
    fn split_levels_partition_the_projection() {
        let basis = OrderedBasis::new(vec![v(&[1, 0, 0]), v(&[0, 5, 1])], 1).unwrap();
        let support = (-6..=6).flat_map(|a| (-12..=12).flat_map(move |b| (-2..=2).map(move |c| v(&[a, b, c]))));
        let h = FourierHamiltonian::decaying(3, 9, 1, support).unwrap();
        let s = split_potentials(&h, &basis).unwrap();
        let z = project_to_lattice(&h, basis.vectors()).unwrap();
        let total = s.total().unwrap();
        assert_eq!(total.scale(-1.0), z);
        for (l, _) in s.weak[0].terms() {
            assert_ne!(l[1], 0);
        }
    }
}
