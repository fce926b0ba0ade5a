//! Short vector enumeration.
//!
//! The basis is LLL-reduced first (integer transforms, floating
//! Gram-Schmidt), then the ellipsoid `|x|_2^2 <= N R^2` containing the sup
//! ball of radius `R` is searched with Fincke-Pohst bounds. Bounds carry a
//! small relative slack and every leaf is checked exactly, so floating point
//! can only cost extra work, never a missed vector.

use crate::error::{Error, Result};

fn dot(a: &[i128], b: &[i128]) -> Result<i128> {
    a.iter().zip(b).try_fold(0i128, |acc, (x, y)| {
        x.checked_mul(*y)
            .and_then(|p| acc.checked_add(p))
            .ok_or_else(|| Error::Overflow("dot product".into()))
    })
}

fn axpy(y: &mut [i128], a: i128, x: &[i128]) -> Result<()> {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi = a
            .checked_mul(*xi)
            .and_then(|p| yi.checked_sub(p))
            .ok_or_else(|| Error::Overflow("basis reduction".into()))?;
    }
    Ok(())
}

fn gram_schmidt(b: &[Vec<i128>]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let n = b.len();
    let bf: Vec<Vec<f64>> = b.iter().map(|v| v.iter().map(|&x| x as f64).collect()).collect();
    let mut star: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut mu = vec![vec![0.0; n]; n];
    let mut norms = vec![0.0; n];
    for i in 0..n {
        let mut v = bf[i].clone();
        for j in 0..i {
            let m = bf[i].iter().zip(&star[j]).map(|(a, b)| a * b).sum::<f64>() / norms[j];
            mu[i][j] = m;
            for (vk, sk) in v.iter_mut().zip(&star[j]) {
                *vk -= m * sk;
            }
        }
        norms[i] = v.iter().map(|x| x * x).sum();
        star.push(v);
    }
    (mu, norms)
}

/// In-place LLL reduction with `delta = 0.99`.
pub(crate) fn lll(b: &mut [Vec<i128>]) -> Result<()> {
    let n = b.len();
    if n < 2 {
        return Ok(());
    }
    let delta = 0.99;
    let mut k = 1;
    let mut guard = 0usize;
    while k < n {
        guard += 1;
        if guard > 100_000 {
            return Err(Error::Convergence("lattice reduction did not terminate".into()));
        }
        for j in (0..k).rev() {
            let (mu, _) = gram_schmidt(b);
            let q = mu[k][j].round();
            if q != 0.0 {
                let bj = b[j].clone();
                axpy(&mut b[k], q as i128, &bj)?;
            }
        }
        let (mu, norms) = gram_schmidt(b);
        if norms[k] >= (delta - mu[k][k - 1] * mu[k][k - 1]) * norms[k - 1] {
            k += 1;
        } else {
            b.swap(k, k - 1);
            k = (k - 1).max(1);
        }
    }
    Ok(())
}

/// All nonzero lattice vectors with sup norm at most `radius`.
///
/// `basis` holds independent integer vectors of a common length `N`.
/// Output order is deterministic (lexicographic on coefficient search).
pub(crate) fn short_vectors(basis: &[Vec<i128>], radius: i128) -> Result<Vec<Vec<i128>>> {
    let d = basis.len();
    if d == 0 || radius <= 0 {
        return Ok(vec![]);
    }
    let ambient = basis[0].len();
    let mut b = basis.to_vec();
    lll(&mut b)?;

    let mut g = vec![vec![0f64; d]; d];
    for i in 0..d {
        for j in 0..d {
            g[i][j] = dot(&b[i], &b[j])? as f64;
        }
    }
    // Upper Cholesky factor: G = R^T R.
    let mut r = vec![vec![0f64; d]; d];
    for i in 0..d {
        let s = g[i][i] - (0..i).map(|k| r[k][i] * r[k][i]).sum::<f64>();
        if s <= 0.0 {
            return Err(Error::Rank("Gram matrix not positive definite".into()));
        }
        r[i][i] = s.sqrt();
        for j in i + 1..d {
            r[i][j] = (g[i][j] - (0..i).map(|k| r[k][i] * r[k][j]).sum::<f64>()) / r[i][i];
        }
    }
    let rf = radius as f64;
    let bound = ambient as f64 * rf * rf * (1.0 + 1e-9) + 1e-6;

    let mut out = Vec::new();
    let mut coeffs = vec![0i128; d];
    search(d, &r, bound, d, 0.0, &mut coeffs, &mut |a: &[i128]| {
        if a.iter().all(|&x| x == 0) {
            return Ok(());
        }
        let mut x = vec![0i128; ambient];
        for (ai, bi) in a.iter().zip(&b) {
            axpy(&mut x, -ai, bi)?;
        }
        if x.iter().all(|v| v.abs() <= radius) {
            out.push(x);
        }
        Ok(())
    })?;
    Ok(out)
}

fn search(
    d: usize,
    r: &[Vec<f64>],
    bound: f64,
    level: usize,
    partial: f64,
    coeffs: &mut [i128],
    visit: &mut dyn FnMut(&[i128]) -> Result<()>,
) -> Result<()> {
    if level == 0 {
        return visit(coeffs);
    }
    let i = level - 1;
    let shift: f64 = (i + 1..d).map(|j| r[i][j] / r[i][i] * coeffs[j] as f64).sum();
    let center = -shift;
    let rem = bound - partial;
    if rem < 0.0 {
        return Ok(());
    }
    let rad = rem.sqrt() / r[i][i];
    let lo = (center - rad - 1e-9).ceil() as i128;
    let hi = (center + rad + 1e-9).floor() as i128;
    for a in lo..=hi {
        let t = (a as f64 + shift) * r[i][i];
        let p = partial + t * t;
        if p > bound {
            continue;
        }
        coeffs[i] = a;
        search(d, r, bound, i, p, coeffs, visit)?;
    }
    coeffs[i] = 0;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_points_of_the_standard_lattice() {
        let basis = vec![vec![1, 0, 0], vec![0, 1, 0]];
        let pts = short_vectors(&basis, 2).unwrap();
        assert_eq!(pts.len(), 24);
    }

    #[test]
    fn skewed_basis_gives_same_points() {
        let a = vec![vec![1, 0, 0], vec![0, 1, 0]];
        let b = vec![vec![1, 0, 0], vec![37, 1, 0]];
        let mut pa = short_vectors(&a, 3).unwrap();
        let mut pb = short_vectors(&b, 3).unwrap();
        pa.sort();
        pb.sort();
        assert_eq!(pa, pb);
    }
}
