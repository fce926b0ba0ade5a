use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{IntVector, ResonanceLattice};

/// Fourier data `h_k(p_0)` of the perturbation `H_1(θ, p_0, t)` for
/// `k = (k_1, ..., k_n, k_0) ∈ Z^{n+1}`, optionally with `∂_p h_k(p_0)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FourierHamiltonian {
    ambient_dim: usize,
    declared_regularity: u32,
    coefficients: BTreeMap<IntVector, Complex64>,
    gradients: BTreeMap<IntVector, Vec<Complex64>>,
}

/// What to do with coefficient lists that are not closed under `k -> -k`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum HermitianPolicy {
    /// Reject unless `h_{-k} = conj(h_k)` for every listed `k`.
    #[default]
    Enforce,
    /// Fill in missing partners with the conjugate; still reject conflicts.
    Complete,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct LoadOptions {
    pub hermitian: HermitianPolicy,
    /// Reject pure time indices `(0, ..., 0, k_0)`, which can never lie in a
    /// resonance lattice and usually indicate a misordered file.
    pub lattice_context: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CoefJson {
    k: Vec<i64>,
    re: f64,
    im: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    grad: Option<Vec<[f64; 2]>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HamJson {
    ambient_dim: usize,
    declared_regularity: u32,
    coefficients: Vec<CoefJson>,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic phase in `[0, 1)` attached to a frequency, independent of
/// which other frequencies are generated.
fn phase_of(seed: u64, k: &[i64]) -> f64 {
    let mut h = splitmix(seed);
    for &x in k {
        h = splitmix(h ^ (x as u64));
    }
    (h >> 11) as f64 / (1u64 << 53) as f64
}

impl FourierHamiltonian {
    pub fn new(ambient_dim: usize, declared_regularity: u32) -> Self {
        FourierHamiltonian {
            ambient_dim,
            declared_regularity,
            coefficients: BTreeMap::new(),
            gradients: BTreeMap::new(),
        }
    }

    /// Sets `h_k` and `h_{-k} = conj(h_k)`.
    pub fn set_pair(&mut self, k: IntVector, h: Complex64) -> Result<()> {
        if k.dim() != self.ambient_dim {
            return Err(Error::Dimension(format!("{k} in ambient dimension {}", self.ambient_dim)));
        }
        if k.is_zero() {
            if h.im != 0.0 {
                return Err(Error::Model("mean term must be real".into()));
            }
            self.coefficients.insert(k, h);
            return Ok(());
        }
        let neg = k.neg();
        self.coefficients.insert(k, h);
        self.coefficients.insert(neg, h.conj());
        Ok(())
    }

    /// `|h_k| = (1 + |k|)^{-(r + n + 1)}` with pseudo-random phases for every
    /// nonzero `k` in `support` (closed under negation on output).
    ///
    /// The exponent makes `Σ_k |k|^r |h_k|` converge, so the family is `C^r`.
    /// The phase of `h_k` depends only on `(seed, k)`.
    pub fn decaying(ambient_dim: usize, r: u32, seed: u64, support: impl IntoIterator<Item = IntVector>) -> Result<Self> {
        let mut h = FourierHamiltonian::new(ambient_dim, r);
        let n = ambient_dim as i32 - 1;
        for k in support {
            if k.is_zero() {
                continue;
            }
            let canon = {
                let mut c = k.clone();
                if c.0.iter().find(|&&x| x != 0).is_some_and(|&x| x < 0) {
                    c = c.neg();
                }
                c
            };
            if h.coefficients.contains_key(&canon) {
                continue;
            }
            let mag = (1.0 + canon.norm() as f64).powi(-(r as i32 + n + 1));
            let ph = phase_of(seed, &canon.0);
            h.set_pair(canon, Complex64::from_polar(mag, 2.0 * std::f64::consts::PI * ph))?;
        }
        Ok(h)
    }

    /// All lattice points of `lat` with `|k| <= radius`, as a support for
    /// [`FourierHamiltonian::decaying`].
    pub fn lattice_support(lat: &ResonanceLattice, radius: i64) -> Result<Vec<IntVector>> {
        lat.points_within(radius)
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn declared_regularity(&self) -> u32 {
        self.declared_regularity
    }

    pub fn coefficients(&self) -> impl Iterator<Item = (&IntVector, &Complex64)> {
        self.coefficients.iter()
    }

    pub fn coefficient(&self, k: &IntVector) -> Complex64 {
        self.coefficients.get(k).copied().unwrap_or_default()
    }

    pub fn gradient(&self, k: &IntVector) -> Option<&[Complex64]> {
        self.gradients.get(k).map(|v| v.as_slice())
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    pub fn from_json(s: &str, opts: LoadOptions) -> Result<Self> {
        let raw: HamJson = serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        let mut h = FourierHamiltonian::new(raw.ambient_dim, raw.declared_regularity);
        if raw.ambient_dim < 2 {
            return Err(Error::Dimension("ambient dimension must be at least 2".into()));
        }
        for c in raw.coefficients {
            let k = IntVector(c.k);
            if k.dim() != raw.ambient_dim {
                return Err(Error::Dimension(format!("index {k} has the wrong length")));
            }
            if opts.lattice_context && k.is_pure_time() {
                return Err(Error::Model(format!("pure time index {k} in a lattice context")));
            }
            if h.coefficients.contains_key(&k) {
                return Err(Error::Parse(format!("duplicate index {k}")));
            }
            if let Some(g) = c.grad {
                if g.len() + 1 != raw.ambient_dim {
                    return Err(Error::Dimension(format!("gradient at {k} has the wrong length")));
                }
                h.gradients.insert(k.clone(), g.iter().map(|[a, b]| Complex64::new(*a, *b)).collect());
            }
            h.coefficients.insert(k, Complex64::new(c.re, c.im));
        }
        let keys: Vec<IntVector> = h.coefficients.keys().cloned().collect();
        for k in keys {
            let a = h.coefficients[&k];
            let neg = k.neg();
            match h.coefficients.get(&neg) {
                Some(b) => {
                    if a != b.conj() {
                        return Err(Error::Model(format!("h at ±{k} are not conjugate")));
                    }
                }
                None => match opts.hermitian {
                    HermitianPolicy::Enforce => {
                        return Err(Error::Model(format!("missing conjugate partner of {k}")));
                    }
                    HermitianPolicy::Complete => {
                        h.coefficients.insert(neg.clone(), a.conj());
                        if let Some(g) = h.gradients.get(&k).cloned() {
                            h.gradients.insert(neg, g.iter().map(|z| z.conj()).collect());
                        }
                    }
                },
            }
        }
        Ok(h)
    }

    /// Serialises every stored coefficient; floats round-trip exactly.
    pub fn to_json(&self) -> String {
        let raw = HamJson {
            ambient_dim: self.ambient_dim,
            declared_regularity: self.declared_regularity,
            coefficients: self
                .coefficients
                .iter()
                .map(|(k, a)| CoefJson {
                    k: k.0.clone(),
                    re: a.re,
                    im: a.im,
                    grad: self.gradients.get(k).map(|g| g.iter().map(|z| [z.re, z.im]).collect()),
                })
                .collect(),
        };
        serde_json::to_string(&raw).expect("hamiltonian serializes")
    }
}
