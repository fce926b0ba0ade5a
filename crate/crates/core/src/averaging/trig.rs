use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Real trigonometric polynomial `f(φ) = Σ a_l exp(2πi l·φ)` on `T^dim`
/// with `a_{-l} = conj(a_l)`.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct TrigPolynomial {
    dim: usize,
    terms: BTreeMap<Vec<i64>, Complex64>,
}

/// Two routes to the `C^2` norm `max(sup|f|, max_i sup|∂_i f|, max_ij sup|∂_ij f|)`.
#[derive(Clone, Copy, Debug, Serialize, PartialEq)]
pub struct C2Norm {
    /// `Σ (1 + 2π|l|)^2 |a_l|`, an upper bound for the norm.
    pub coefficient_bound: f64,
    /// Maximum over a uniform grid, a lower bound for the norm.
    pub grid_sup: f64,
}

#[derive(Serialize, Deserialize)]
struct TermJson {
    l: Vec<i64>,
    re: f64,
    im: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct TrigJson {
    dim: usize,
    terms: Vec<TermJson>,
}

impl TrigPolynomial {
    pub fn zero(dim: usize) -> Self {
        TrigPolynomial { dim, terms: BTreeMap::new() }
    }

    /// Builds from a list of `(l, a_l)`; the list must be closed under
    /// `l -> -l` with conjugate coefficients (checked to 1e-12 relative).
    pub fn from_terms(dim: usize, terms: impl IntoIterator<Item = (Vec<i64>, Complex64)>) -> Result<Self> {
        let mut p = TrigPolynomial::zero(dim);
        for (l, a) in terms {
            if l.len() != dim {
                return Err(Error::Dimension(format!("frequency of length {} on T^{dim}", l.len())));
            }
            p.insert_unchecked(l, a);
        }
        p.check_real()?;
        p.prune();
        Ok(p)
    }

    /// `amp * cos(2π (l·φ + phase))`.
    pub fn cosine(dim: usize, l: Vec<i64>, amp: f64, phase: f64) -> Self {
        assert_eq!(l.len(), dim);
        let mut p = TrigPolynomial::zero(dim);
        if l.iter().all(|&x| x == 0) {
            p.terms.insert(l, Complex64::new(amp * (2.0 * PI * phase).cos(), 0.0));
            return p;
        }
        let a = Complex64::from_polar(amp / 2.0, 2.0 * PI * phase);
        let neg: Vec<i64> = l.iter().map(|x| -x).collect();
        p.terms.insert(l, a);
        p.terms.insert(neg, a.conj());
        p
    }

    pub(crate) fn insert_unchecked(&mut self, l: Vec<i64>, a: Complex64) {
        use std::collections::btree_map::Entry;
        match self.terms.entry(l) {
            Entry::Vacant(e) => {
                e.insert(a);
            }
            Entry::Occupied(mut e) => *e.get_mut() += a,
        }
    }

    fn check_real(&self) -> Result<()> {
        for (l, a) in &self.terms {
            let neg: Vec<i64> = l.iter().map(|x| -x).collect();
            let b = self.terms.get(&neg).copied().unwrap_or_default();
            let scale = a.norm().max(b.norm()).max(1e-300);
            if (a - b.conj()).norm() > 1e-12 * scale {
                return Err(Error::Model(format!("coefficients at ±{l:?} are not conjugate")));
            }
        }
        Ok(())
    }

    fn prune(&mut self) {
        self.terms.retain(|_, a| a.norm() != 0.0);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Vec<i64>, &Complex64)> {
        self.terms.iter()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coefficient(&self, l: &[i64]) -> Complex64 {
        self.terms.get(l).copied().unwrap_or_default()
    }

    /// Same polynomial viewed on `T^dim` for a larger `dim` (trailing
    /// angles do not appear).
    pub fn embed(&self, dim: usize) -> Result<Self> {
        if dim < self.dim {
            return Err(Error::Dimension(format!("cannot embed T^{} into T^{dim}", self.dim)));
        }
        let terms = self
            .terms
            .iter()
            .map(|(l, a)| {
                let mut l2 = l.clone();
                l2.resize(dim, 0);
                (l2, *a)
            })
            .collect();
        Ok(TrigPolynomial { dim, terms })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::Dimension("adding polynomials on different tori".into()));
        }
        let mut out = self.clone();
        for (l, a) in &other.terms {
            out.insert_unchecked(l.clone(), *a);
        }
        out.prune();
        Ok(out)
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = self.clone();
        for a in out.terms.values_mut() {
            *a *= s;
        }
        out.prune();
        out
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(-1.0))
    }

    /// Largest `|l|` in the support.
    pub fn degree(&self) -> i64 {
        self.terms.keys().map(|l| l.iter().map(|x| x.abs()).max().unwrap_or(0)).max().unwrap_or(0)
    }

    /// Sum of absolute coefficients, an upper bound for `sup |f|`.
    pub fn c0_bound(&self) -> f64 {
        self.terms.values().map(|a| a.norm()).sum()
    }

    fn phase(l: &[i64], phi: &[f64]) -> f64 {
        2.0 * PI * l.iter().zip(phi).map(|(&a, &b)| a as f64 * b).sum::<f64>()
    }

    pub fn eval(&self, phi: &[f64]) -> f64 {
        debug_assert_eq!(phi.len(), self.dim);
        self.terms
            .iter()
            .map(|(l, a)| {
                let t = Self::phase(l, phi);
                a.re * t.cos() - a.im * t.sin()
            })
            .sum()
    }

    pub fn gradient(&self, phi: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim];
        self.gradient_into(phi, &mut g);
        g
    }

    /// Writes `∇f(φ)` into `out` (overwriting).
    pub fn gradient_into(&self, phi: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        for (l, a) in &self.terms {
            let t = Self::phase(l, phi);
            // d/dφ Re(a e^{it}) = -2π l (a.re sin t + a.im cos t)
            let s = -2.0 * PI * (a.re * t.sin() + a.im * t.cos());
            for (o, &li) in out.iter_mut().zip(l) {
                *o += s * li as f64;
            }
        }
    }

    pub fn hessian(&self, phi: &[f64]) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(self.dim, self.dim);
        for (l, a) in &self.terms {
            let t = Self::phase(l, phi);
            let s = -4.0 * PI * PI * (a.re * t.cos() - a.im * t.sin());
            for i in 0..self.dim {
                if l[i] == 0 {
                    continue;
                }
                for j in 0..self.dim {
                    h[(i, j)] += s * (l[i] * l[j]) as f64;
                }
            }
        }
        h
    }

    /// Value, gradient and Hessian at one point.
    pub fn jet2(&self, phi: &[f64]) -> (f64, Vec<f64>, DMatrix<f64>) {
        (self.eval(phi), self.gradient(phi), self.hessian(phi))
    }

    /// Both routes to the `C^2` norm. The grid has `points_per_axis` nodes
    /// per angle (64 up to three angles, 32 beyond, when `None`).
    pub fn c2_norm(&self, points_per_axis: Option<usize>) -> C2Norm {
        let coefficient_bound = self
            .terms
            .iter()
            .map(|(l, a)| {
                let n = l.iter().map(|x| x.abs()).max().unwrap_or(0) as f64;
                (1.0 + 2.0 * PI * n).powi(2) * a.norm()
            })
            .sum();
        let per = points_per_axis.unwrap_or(if self.dim <= 3 { 64 } else { 32 });
        let total = per.pow(self.dim as u32);
        let mut grid_sup: f64 = 0.0;
        if !self.terms.is_empty() {
            let mut phi = vec![0.0; self.dim];
            for idx in 0..total {
                let mut r = idx;
                for x in phi.iter_mut() {
                    *x = (r % per) as f64 / per as f64;
                    r /= per;
                }
                let (v, g, h) = self.jet2(&phi);
                grid_sup = grid_sup.max(v.abs());
                grid_sup = g.iter().fold(grid_sup, |m, x| m.max(x.abs()));
                grid_sup = h.iter().fold(grid_sup, |m, x| m.max(x.abs()));
            }
        }
        C2Norm { coefficient_bound, grid_sup }
    }

    pub(crate) fn to_json_struct(&self) -> TrigJson {
        TrigJson {
            dim: self.dim,
            terms: self.terms.iter().map(|(l, a)| TermJson { l: l.clone(), re: a.re, im: a.im }).collect(),
        }
    }

    pub(crate) fn from_json_struct(j: TrigJson) -> Result<Self> {
        Self::from_terms(j.dim, j.terms.into_iter().map(|t| (t.l, Complex64::new(t.re, t.im))))
    }
}

impl Serialize for TrigPolynomial {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_json_struct().serialize(s)
    }
}

impl<'de> Deserialize<'de> for TrigPolynomial {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = TrigJson::deserialize(d)?;
        Self::from_json_struct(j).map_err(serde::de::Error::custom)
    }
}
