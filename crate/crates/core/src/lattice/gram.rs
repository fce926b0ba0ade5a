use nalgebra::DMatrix;
use serde::Serialize;

use super::intmat::rank;
use super::{column_matrix, IntVector};
use crate::error::{Error, Result};

/// Explicit constant `c` with `sigma_min(P) >= c^{-1} prod |k_i|^{-1}` for
/// `s` independent integer columns in `Z^N`.
///
/// The Gram determinant is a positive integer, so `|(P^T P)^{-1}|` is at
/// most the Frobenius norm of the adjugate. Each adjugate entry is bounded
/// by Cauchy-Schwarz and Hadamard by `prod_{t != i} |k_t|_2 prod_{t != j} |k_t|_2`,
/// which gives `|(P^T P)^{-1}| <= s N^s prod |k_t|^2` and hence
/// `c = sqrt(s N^s)`.
pub fn int_norm_constant(ambient: usize, s: usize) -> f64 {
    (s as f64 * (ambient as f64).powi(s as i32)).sqrt()
}

#[derive(Clone, Debug, Serialize)]
pub struct GramBound {
    /// `min_{|v|=1} |P v| = |(P^T P)^{-1}|^{-1/2}`
    pub sigma_min: f64,
    /// `c^{-1} prod |k_i|^{-1}`
    pub lower_bound: f64,
    pub constant: f64,
    pub holds: bool,
}

/// Smallest singular value of the integer matrix with the given columns,
/// compared with the product lower bound.
pub fn gram_inverse_bound(columns: &[IntVector]) -> Result<GramBound> {
    let Some(first) = columns.first() else {
        return Err(Error::Degenerate("no columns".into()));
    };
    let n = first.dim();
    if columns.iter().any(|c| c.dim() != n) {
        return Err(Error::Dimension("columns of different length".into()));
    }
    let s = columns.len();
    if rank(&column_matrix(n, columns))? < s {
        return Err(Error::Rank("columns are dependent".into()));
    }
    let p = DMatrix::from_fn(n, s, |i, j| columns[j].0[i] as f64);
    let g = p.transpose() * &p;
    let eig = g.symmetric_eigenvalues();
    let lmin = eig.iter().cloned().fold(f64::INFINITY, f64::min).max(0.0);
    let sigma_min = lmin.sqrt();
    let constant = int_norm_constant(n, s);
    let prod: f64 = columns.iter().map(|c| c.norm() as f64).product();
    let lower_bound = 1.0 / (constant * prod);
    Ok(GramBound { sigma_min, lower_bound, constant, holds: sigma_min >= lower_bound * (1.0 - 1e-12) })
}
