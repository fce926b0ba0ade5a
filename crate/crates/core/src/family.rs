//! Families of dominant slow systems with growing `μ(B^wk)`.
//!
//! A rule fixes the strong basis and the convex model; member `μ` gets weak
//! vectors `offset_j + factor_j μ direction_j`. Potentials either come from
//! averaging a decaying Fourier perturbation over the member's lattice, or
//! are supplied directly with an exact `|k_j^wk|^{-q}` amplitude.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::averaging::{dominance_check, split_potentials, DominanceCertificate, FourierHamiltonian, SplitPotentials, TrigPolynomial};
use crate::error::{Error, Result};
use crate::lattice::{IntVector, OrderedBasis};
use crate::slowsys::{ConvexModel, SlowSystem};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeakTemplate {
    pub offset: Vec<i64>,
    pub direction: Vec<i64>,
    #[serde(default = "one")]
    pub factor: i64,
}

fn one() -> i64 {
    1
}

impl WeakTemplate {
    pub fn vector(&self, mu: i64) -> Result<IntVector> {
        if self.offset.len() != self.direction.len() {
            return Err(Error::Dimension("weak template offset and direction differ in length".into()));
        }
        let v: Option<Vec<i64>> = self
            .offset
            .iter()
            .zip(&self.direction)
            .map(|(o, d)| self.factor.checked_mul(mu)?.checked_mul(*d)?.checked_add(*o))
            .collect();
        v.map(IntVector).ok_or_else(|| Error::Overflow(format!("weak vector for μ = {mu}")))
    }
}

/// One weak mode `amplitude |k_j^wk|^{-q} cos 2π(l·φ + phase)` on `T^{m+j}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeakMode {
    pub level: usize,
    pub l: Vec<i64>,
    pub amplitude: f64,
    #[serde(default)]
    pub phase: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialRule {
    /// Strong potential given; weak levels built from modes scaled by
    /// `|k_j^wk|^{-exponent}`.
    Direct { strong: TrigPolynomial, weak_modes: Vec<WeakMode>, exponent: f64 },
    /// Average `|h_k| = (1 + |k|)^{-(r+n+1)}` over lattice points with
    /// `|k| <= radius_factor · max(|k_j|)`.
    Averaged { r: u32, seed: u64, radius_factor: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyRule {
    pub model: ConvexModel,
    pub p0: Vec<f64>,
    pub strong: Vec<IntVector>,
    pub weak: Vec<WeakTemplate>,
    pub schedule: Vec<i64>,
    pub potential: PotentialRule,
    pub kappa: f64,
    pub q: f64,
}

#[derive(Clone, Debug)]
pub struct FamilyMember {
    pub mu: i64,
    pub basis: OrderedBasis,
    pub system: SlowSystem,
    pub certificate: DominanceCertificate,
}

impl FamilyRule {
    pub fn basis(&self, mu: i64) -> Result<OrderedBasis> {
        let mut vs = self.strong.clone();
        for t in &self.weak {
            vs.push(t.vector(mu)?);
        }
        OrderedBasis::new(vs, self.strong.len())
    }

    fn potentials(&self, basis: &OrderedBasis) -> Result<SplitPotentials> {
        let m = basis.split_index();
        match &self.potential {
            PotentialRule::Direct { strong, weak_modes, exponent } => {
                if strong.dim() != m {
                    return Err(Error::Dimension(format!("strong potential must live on T^{m}")));
                }
                let mut weak: Vec<TrigPolynomial> = (1..=self.weak.len()).map(|j| TrigPolynomial::zero(m + j)).collect();
                for md in weak_modes {
                    if md.level == 0 || md.level > weak.len() {
                        return Err(Error::Model(format!("weak mode level {} out of range", md.level)));
                    }
                    let dim = m + md.level;
                    if md.l.len() != dim || md.l[dim - 1] == 0 {
                        return Err(Error::Model(format!(
                            "weak level {} modes need length {dim} with a nonzero last entry",
                            md.level
                        )));
                    }
                    let k = basis.weak()[md.level - 1].norm() as f64;
                    let amp = md.amplitude * k.powf(-exponent);
                    let term = TrigPolynomial::cosine(dim, md.l.clone(), amp, md.phase);
                    weak[md.level - 1] = weak[md.level - 1].add(&term)?;
                }
                Ok(SplitPotentials { strong: strong.clone(), weak })
            }
            PotentialRule::Averaged { r, seed, radius_factor } => {
                let reach = basis.vectors().iter().map(|k| k.norm()).max().unwrap_or(1) as f64;
                let radius = (radius_factor * reach).ceil() as i64;
                let support = FourierHamiltonian::lattice_support(&basis.lattice(), radius)?;
                let h1 = FourierHamiltonian::decaying(basis.ambient_dim(), *r, *seed, support)?;
                split_potentials(&h1, basis)
            }
        }
    }

    /// Builds the member for `μ` and certifies it, without rejecting it.
    pub fn member(&self, mu: i64) -> Result<FamilyMember> {
        let basis = self.basis(mu)?;
        let pots = self.potentials(&basis)?;
        let certificate = dominance_check(&basis, &pots, self.kappa, self.q, false)?;
        let system = SlowSystem::from_parts(self.model.hessian(&self.p0)?, self.p0.clone(), basis.clone(), pots)?;
        Ok(FamilyMember { mu, basis, system, certificate })
    }

    /// Sum of the strong basis norms.
    pub fn strong_norm(&self) -> i64 {
        self.strong.iter().map(|k| k.norm()).sum()
    }
}

/// Every member of the schedule, each required to pass the dominance check
/// and to have all weak vectors longer than the strong basis norm.
pub fn generate_family(rule: &FamilyRule) -> Result<Vec<FamilyMember>> {
    let bar = rule.strong_norm();
    let mut out = Vec::with_capacity(rule.schedule.len());
    for &mu in &rule.schedule {
        let member = rule.member(mu)?;
        if let Some(k) = member.basis.weak().iter().find(|k| k.norm() <= bar) {
            return Err(Error::Model(format!(
                "family member μ = {mu}: weak vector {k} is not longer than the strong basis norm {bar}"
            )));
        }
        if !member.certificate.passed {
            return Err(Error::Model(format!("family member μ = {mu} fails the dominance check")));
        }
        out.push(member);
    }
    Ok(out)
}

/// `ε (1 - cos 2πφ_1)` on `T^1`.
pub fn pendulum_potential(eps: f64) -> TrigPolynomial {
    TrigPolynomial::from_terms(1, [(vec![0], Complex64::new(eps, 0.0)), (vec![1], Complex64::new(-eps / 2.0, 0.0)), (vec![-1], Complex64::new(-eps / 2.0, 0.0))])
        .expect("pendulum potential is real")
}

/// The pendulum × rotator family used throughout the tests: `n = 2`,
/// `k^st = (1,0,0)`, `k^wk = (0, μ, 1)`, `Q_0 = [[1, 0.3], [0.3, 1]]`,
/// `U^st = ε(1 - cos 2πφ_1)` and `U^wk = a |k^wk|^{-q} cos 2π(φ_1 + φ_2)`.
pub fn pendulum_rotator(eps: f64, weak_amplitude: f64, q: f64, schedule: Vec<i64>) -> FamilyRule {
    FamilyRule {
        model: ConvexModel::Constant { q0: vec![vec![1.0, 0.3], vec![0.3, 1.0]], convexity: 2.0 },
        p0: vec![0.0, 0.0],
        strong: vec![IntVector(vec![1, 0, 0])],
        weak: vec![WeakTemplate { offset: vec![0, 0, 1], direction: vec![0, 1, 0], factor: 1 }],
        schedule,
        potential: PotentialRule::Direct {
            strong: pendulum_potential(eps),
            weak_modes: vec![WeakMode { level: 1, l: vec![1, 1], amplitude: weak_amplitude, phase: 0.0 }],
            exponent: q,
        },
        kappa: (1.0 + 2.0 * std::f64::consts::PI).powi(2) * weak_amplitude.abs() * 1.01 + 1.01,
        q,
    }
}

/// Pendulum × rotator with `Q_0 = Id` and `k^wk = (a, μ, 1)`: then `A = 1`,
/// `B = a`, `C̃ = μ²`, and `(φ^st, φ^wk) -> (φ^st, φ^wk - a φ^st)` maps the
/// weak KAM grid onto itself, so the kinetic kernel splits exactly into a
/// strong and a weak part on the grid.
pub fn sheared_pendulum_rotator(eps: f64, weak_amplitude: f64, q: f64, shear: i64, schedule: Vec<i64>) -> FamilyRule {
    let mut rule = pendulum_rotator(eps, weak_amplitude, q, schedule);
    rule.model = ConvexModel::Constant { q0: vec![vec![1.0, 0.0], vec![0.0, 1.0]], convexity: 2.0 };
    rule.weak = vec![WeakTemplate { offset: vec![shear, 0, 1], direction: vec![0, 1, 0], factor: 1 }];
    rule.kappa = (1.0 + 2.0 * std::f64::consts::PI).powi(2) * weak_amplitude.abs() * 1.01 + 1.01;
    rule
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sheared_blocks() {
        let fam = generate_family(&sheared_pendulum_rotator(0.25, 1.0, 4.0, 1, vec![5, 11])).unwrap();
        for m in &fam {
            let s = m.system.s();
            let mu = m.mu as f64;
            assert_eq!((s[(0, 0)], s[(0, 1)], s[(1, 1)]), (1.0, 1.0, 1.0 + mu * mu));
        }
    }

    #[test]
    fn schedule_builds_certified_members() {
        let fam = generate_family(&pendulum_rotator(0.25, 1.0, 5.0, vec![5, 11, 23, 47])).unwrap();
        assert_eq!(fam.len(), 4);
        for (m, mu) in fam.iter().zip([5, 11, 23, 47]) {
            assert_eq!(m.basis.weak()[0], IntVector(vec![0, mu, 1]));
            assert!(m.certificate.passed);
            assert!((m.system.s()[(0, 1)] - 0.3 * mu as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_and_short_schedules() {
        assert!(generate_family(&pendulum_rotator(0.25, 1.0, 5.0, vec![])).unwrap().is_empty());
        let e = generate_family(&pendulum_rotator(0.25, 1.0, 5.0, vec![1, 5])).unwrap_err();
        assert!(e.to_string().contains("μ = 1"), "{e}");
    }

    #[test]
    fn averaged_rule_certifies() {
        let mut rule = pendulum_rotator(0.25, 1.0, 1.0, vec![5, 11]);
        rule.potential = PotentialRule::Averaged { r: 9, seed: 3, radius_factor: 1.0 };
        rule.kappa = 10.0;
        let fam = generate_family(&rule).unwrap();
        assert!(fam.iter().all(|m| !m.system.potentials().weak[0].is_empty()));
    }
}
