//! Relative norms, successive minima and the adapted basis.
//!
//! Minimisers are unique only up to sign and ties; ties are broken by sign
//! normalisation (first nonzero entry positive) followed by the
//! lexicographic order, so every routine here is deterministic.

use num_rational::Ratio;
use serde::Serialize;

use super::enumerate::short_vectors;
use super::intmat::{ext_gcd, integer_kernel, rank, sign_normalize, smith, IntMatrix};
use super::{column_matrix, IntVector, OrderedBasis, ResonanceLattice};
use crate::error::{Error, Result};

type Q = Ratio<i128>;

fn sup(v: &[i128]) -> i128 {
    v.iter().map(|x| x.abs()).max().unwrap_or(0)
}

/// Shortest vector of `lat` (sup norm) satisfying `keep`, with the
/// deterministic tie break. `witness` bounds the search radius.
fn shortest_with<F>(lat: &ResonanceLattice, witness: i128, mut keep: F) -> Result<Vec<i128>>
where
    F: FnMut(&[i128]) -> Result<bool>,
{
    let basis: Vec<Vec<i128>> = lat.generators().iter().map(|g| g.wide()).collect();
    let mut best: Option<(i128, Vec<i128>)> = None;
    for mut x in short_vectors(&basis, witness)? {
        if !keep(&x)? {
            continue;
        }
        sign_normalize(&mut x);
        let n = sup(&x);
        let better = match &best {
            None => true,
            Some((bn, bx)) => n < *bn || (n == *bn && x < *bx),
        };
        if better {
            best = Some((n, x));
        }
    }
    best.map(|(_, x)| x)
        .ok_or_else(|| Error::Degenerate("no lattice vector outside the sublattice".into()))
}

/// Annihilator rows: `x` lies in `span_R(vs)` iff `A x = 0`.
fn span_test(ambient: usize, vs: &[IntVector]) -> Result<IntMatrix> {
    if vs.is_empty() {
        return Ok(IntMatrix::identity(ambient));
    }
    let mut t = IntMatrix::zeros(vs.len(), ambient);
    for (i, v) in vs.iter().enumerate() {
        for (j, &x) in v.0.iter().enumerate() {
            t.set(i, j, x as i128);
        }
    }
    let ker = integer_kernel(&t)?;
    let mut a = IntMatrix::zeros(ker.len(), ambient);
    for (i, row) in ker.iter().enumerate() {
        for (j, &x) in row.iter().enumerate() {
            a.set(i, j, x);
        }
    }
    Ok(a)
}

fn in_span(a: &IntMatrix, x: &[i128]) -> Result<bool> {
    Ok(a.mul_vec(x)?.iter().all(|&y| y == 0))
}

/// `M(L | L_st) = min { |k| : k in L, k not in L_st }` with a minimiser.
///
/// Requires `L_st ⊂ L` and `rank L_st < rank L`.
pub fn relative_norm(
    lat: &ResonanceLattice,
    sub: &ResonanceLattice,
) -> Result<(i64, IntVector)> {
    if lat.ambient_dim() != sub.ambient_dim() {
        return Err(Error::Dimension("lattices live in different spaces".into()));
    }
    if sub.rank() >= lat.rank() {
        return Err(Error::Degenerate(format!(
            "sublattice rank {} is not below lattice rank {}",
            sub.rank(),
            lat.rank()
        )));
    }
    let solver = lat.solver()?;
    for g in sub.generators() {
        if !solver.contains(&g.wide())? {
            return Err(Error::Containment(format!("{g} is not in the lattice")));
        }
    }
    let sub_solver = sub.solver()?;
    let witness = lat
        .generators()
        .iter()
        .filter_map(|g| match sub_solver.contains(&g.wide()) {
            Ok(true) => None,
            Ok(false) => Some(Ok(g.norm() as i128)),
            Err(e) => Some(Err(e)),
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .min()
        .ok_or_else(|| Error::Degenerate("every generator lies in the sublattice".into()))?;
    let x = shortest_with(lat, witness, |x| Ok(!sub_solver.contains(x)?))?;
    let v = IntVector::from_wide(&x)?;
    Ok((v.norm(), v))
}

/// Adapted basis of a lattice together with the data it was built from.
#[derive(Clone, Debug, Serialize)]
pub struct AdaptedBasis {
    pub basis: OrderedBasis,
    /// Greedy successive minimisers `k'_1, ..., k'_d` (the first `m` are the
    /// strong basis).
    pub minimizers: Vec<IntVector>,
    /// `M_{m+1}, ..., M_d`.
    pub minima: Vec<i64>,
    /// Leading coefficients `c_j` of `k_j` on `k'_j`, as `(num, den)`.
    pub leading: Vec<(i128, i128)>,
}

impl AdaptedBasis {
    /// `sum_i |k_i^st|`.
    pub fn strong_norm_sum(&self) -> i64 {
        self.basis.strong().iter().map(|k| k.norm()).sum()
    }

    /// Largest violation of `|k_j| <= M̄ + (d-m) M_j` and of
    /// `|k_i| <= M̄ + (d-m) |k_j|` for `m < i <= j`; nonpositive when both hold.
    pub fn norm_bound_excess(&self) -> i64 {
        let m = self.basis.split_index();
        let d = self.basis.len() as i64;
        let mbar = self.strong_norm_sum();
        let ks = self.basis.vectors();
        let mut worst = i64::MIN;
        for (idx, mj) in self.minima.iter().enumerate() {
            let j = m + idx;
            worst = worst.max(ks[j].norm() - (mbar + (d - m as i64) * mj));
            for ki in &ks[m..=j] {
                worst = worst.max(ki.norm() - (mbar + (d - m as i64) * ks[j].norm()));
            }
        }
        worst
    }
}

/// Completes a basis of `L_st` to a basis of `L` adapted to the greedy
/// successive minima of `L` relative to `L_st`.
///
/// The strong vectors are kept. Each further vector realises the next
/// successive minimum up to a bounded correction, computed exactly: the
/// new vector has minimal positive leading coefficient on the current
/// minimiser and reduced coefficients on the earlier ones.
pub fn adapted_basis(strong: &[IntVector], lat: &ResonanceLattice) -> Result<AdaptedBasis> {
    let ambient = lat.ambient_dim();
    let d = lat.rank();
    let m = strong.len();
    if m == 0 {
        return Err(Error::Basis("empty strong basis".into()));
    }
    if strong.iter().any(|k| k.dim() != ambient) {
        return Err(Error::Dimension("strong basis in a different ambient space".into()));
    }
    let solver = lat.solver()?;
    let mut coords: Vec<Vec<i128>> = Vec::with_capacity(d);
    for k in strong {
        let c = solver
            .coordinates(&k.wide())?
            .ok_or_else(|| Error::Containment(format!("{k} is not in the lattice")))?;
        coords.push(c);
    }
    let cm = IntMatrix::from_columns(d, &coords);
    let sm = smith(&cm)?;
    if sm.rank < m {
        return Err(Error::Rank("strong vectors are dependent".into()));
    }
    if sm.diag.iter().any(|&x| x != 1) {
        return Err(Error::Basis(
            "strong basis is not a basis of its saturation in the lattice".into(),
        ));
    }
    if m > d {
        return Err(Error::Degenerate("strong basis larger than the lattice".into()));
    }

    // Greedy successive minima.
    let mut primes: Vec<IntVector> = strong.to_vec();
    let mut minima = Vec::new();
    while primes.len() < d {
        let ann = span_test(ambient, &primes)?;
        let mut witness = i128::MAX;
        for g in lat.generators() {
            if !in_span(&ann, &g.wide())? {
                witness = witness.min(g.norm() as i128);
            }
        }
        let x = shortest_with(lat, witness, |x| Ok(!in_span(&ann, x)?))?;
        let v = IntVector::from_wide(&x)?;
        minima.push(v.norm());
        coords.push(
            solver
                .coordinates(&x)?
                .ok_or_else(|| Error::Containment("minimiser outside lattice".into()))?,
        );
        primes.push(v);
    }

    // Siegel completion in lattice coordinates (L ≅ Z^d).
    let mut basis_coords: Vec<Vec<i128>> = coords[..m].to_vec();
    // t_rows[j][i]: coefficient of k_j on k'_i.
    let mut t_rows: Vec<Vec<Q>> = (0..m)
        .map(|j| (0..d).map(|i| Q::from_integer(if i == j { 1 } else { 0 })).collect())
        .collect();
    let mut leading: Vec<Q> = vec![Q::from_integer(1); m];
    for j in m..d {
        let a = IntMatrix::from_columns(d, &coords[..=j]);
        let s = smith(&a)?;
        // Saturation basis b_l = U^{-1} e_l with a-coordinates V e_l / d_l.
        let den = s.diag[..=j].iter().try_fold(1i128, |acc, &x| {
            let g = num_integer::Integer::lcm(&acc, &x);
            if g > (1i128 << 100) {
                Err(Error::Overflow("denominator".into()))
            } else {
                Ok(g)
            }
        })?;
        let nums: Vec<i128> = (0..=j).map(|l| s.v.get(j, l) * (den / s.diag[l])).collect();
        let mut g = 0i128;
        let mut bez = vec![0i128; j + 1];
        for (l, &n) in nums.iter().enumerate() {
            let (ng, x, y) = ext_gcd(g, n);
            for b in bez.iter_mut().take(l) {
                *b *= x;
            }
            bez[l] = y;
            g = ng;
        }
        if g == 0 {
            return Err(Error::Degenerate("minimiser has no new direction".into()));
        }
        let c_j = Q::new(g, den);
        let mut x = vec![0i128; d];
        let mut t = vec![Q::from_integer(0); d];
        for (l, &bl) in bez.iter().enumerate() {
            if bl == 0 {
                continue;
            }
            let col = s.u_inv.column(l);
            for (xi, ci) in x.iter_mut().zip(&col) {
                *xi += bl * ci;
            }
            for (i, ti) in t.iter_mut().enumerate().take(j + 1) {
                *ti += Q::new(bl * s.v.get(i, l), s.diag[l]);
            }
        }
        debug_assert_eq!(t[j], c_j);
        for i in (0..j).rev() {
            let q = (t[i] / leading[i]).floor().to_integer();
            if q != 0 {
                for (xk, bk) in x.iter_mut().zip(&basis_coords[i]) {
                    *xk -= q * bk;
                }
                for (tk, sk) in t.iter_mut().zip(&t_rows[i]) {
                    *tk -= Q::from_integer(q) * sk;
                }
            }
        }
        basis_coords.push(x);
        t_rows.push(t);
        leading.push(c_j);
    }

    let p = lat.matrix();
    let mut vectors = Vec::with_capacity(d);
    for c in &basis_coords {
        vectors.push(IntVector::from_wide(&p.mul_vec(c)?)?);
    }
    let check = smith(&IntMatrix::from_columns(d, &basis_coords))?;
    if check.rank != d || check.diag.iter().any(|&x| x != 1) {
        return Err(Error::Basis("completion is not a basis of the lattice".into()));
    }
    debug_assert_eq!(rank(&column_matrix(ambient, &vectors))?, d);
    let basis = OrderedBasis::new(vectors, m)?;
    Ok(AdaptedBasis {
        basis,
        minimizers: primes,
        minima,
        leading: leading.iter().map(|q| (*q.numer(), *q.denom())).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[i64]) -> IntVector {
        IntVector(x.to_vec())
    }

    #[test]
    fn relative_norm_of_dominant_pair() {
        let l = ResonanceLattice::new(4, vec![v(&[1, 0, 0, 0]), v(&[0, 17, 1, 0])]).unwrap();
        let s = ResonanceLattice::new(4, vec![v(&[1, 0, 0, 0])]).unwrap();
        let (m, k) = relative_norm(&l, &s).unwrap();
        assert_eq!(m, 17);
        assert_eq!(k.norm(), 17);
        assert!(l.contains(&k).unwrap() && !s.contains(&k).unwrap());
    }

    #[test]
    fn relative_norm_rejects_foreign_sublattice() {
        let l = ResonanceLattice::new(3, vec![v(&[1, 0, 0]), v(&[0, 1, 0])]).unwrap();
        let s = ResonanceLattice::new(3, vec![v(&[1, 1, 1])]).unwrap();
        assert!(matches!(relative_norm(&l, &s), Err(Error::Containment(_))));
    }

    #[test]
    fn full_strong_basis_is_returned_unchanged() {
        let strong = vec![v(&[1, 0, 0]), v(&[0, 1, 0])];
        let l = ResonanceLattice::new(3, strong.clone()).unwrap();
        let a = adapted_basis(&strong, &l).unwrap();
        assert_eq!(a.basis.vectors(), &strong[..]);
        assert_eq!(a.basis.split_index(), 2);
    }

    #[test]
    fn completion_of_standard_plane() {
        let strong = vec![v(&[1, 0, 0, 0])];
        let l = ResonanceLattice::new(4, vec![v(&[1, 0, 0, 0]), v(&[0, 1, 0, 0])]).unwrap();
        let a = adapted_basis(&strong, &l).unwrap();
        assert_eq!(a.basis.vectors(), &[v(&[1, 0, 0, 0]), v(&[0, 1, 0, 0])]);
        assert_eq!(a.minima, vec![1]);
    }
}
