//! Exact integer matrices with checked `i128` arithmetic.
//!
//! Smith normal form is computed with the transforms tracked on both sides
//! (`D = U A V`) together with `U^{-1}`. The columns of `U^{-1}` belonging to
//! the nonzero invariants span the saturation of the column lattice; the
//! trailing columns of `V` span the integer kernel.

use crate::error::{Error, Result};

/// Largest absolute entry accepted from user input.
pub const ENTRY_LIMIT: i128 = 1_000_000;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IntMatrix {
    rows: usize,
    cols: usize,
    data: Vec<i128>,
}

fn ovf(what: &str) -> Error {
    Error::Overflow(what.to_string())
}

fn mul(a: i128, b: i128) -> Result<i128> {
    a.checked_mul(b).ok_or_else(|| ovf("multiplication"))
}

fn sub(a: i128, b: i128) -> Result<i128> {
    a.checked_sub(b).ok_or_else(|| ovf("subtraction"))
}

fn add(a: i128, b: i128) -> Result<i128> {
    a.checked_add(b).ok_or_else(|| ovf("addition"))
}

impl IntMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        IntMatrix { rows, cols, data: vec![0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1);
        }
        m
    }

    /// Matrix whose columns are the given vectors (all of length `rows`).
    pub fn from_columns(rows: usize, cols: &[Vec<i128>]) -> Self {
        let mut m = Self::zeros(rows, cols.len());
        for (j, c) in cols.iter().enumerate() {
            assert_eq!(c.len(), rows, "column length");
            for (i, &x) in c.iter().enumerate() {
                m.set(i, j, x);
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> i128 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: i128) {
        self.data[i * self.cols + j] = v;
    }

    pub fn column(&self, j: usize) -> Vec<i128> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn mul_vec(&self, x: &[i128]) -> Result<Vec<i128>> {
        assert_eq!(x.len(), self.cols);
        let mut out = vec![0i128; self.rows];
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = 0i128;
            for (j, &xj) in x.iter().enumerate() {
                acc = add(acc, mul(self.get(i, j), xj)?)?;
            }
            *o = acc;
        }
        Ok(out)
    }

    pub fn mul_mat(&self, other: &IntMatrix) -> Result<IntMatrix> {
        assert_eq!(self.cols, other.rows);
        let mut out = IntMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for j in 0..other.cols {
                let mut acc = 0i128;
                for k in 0..self.cols {
                    acc = add(acc, mul(self.get(i, k), other.get(k, j))?)?;
                }
                out.set(i, j, acc);
            }
        }
        Ok(out)
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for j in 0..self.cols {
            self.data.swap(a * self.cols + j, b * self.cols + j);
        }
    }

    fn swap_cols(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for i in 0..self.rows {
            self.data.swap(i * self.cols + a, i * self.cols + b);
        }
    }

    /// row `dst` += c * row `src`
    fn add_row(&mut self, dst: usize, src: usize, c: i128) -> Result<()> {
        if c == 0 {
            return Ok(());
        }
        for j in 0..self.cols {
            let v = add(self.get(dst, j), mul(c, self.get(src, j))?)?;
            self.set(dst, j, v);
        }
        Ok(())
    }

    /// column `dst` += c * column `src`
    fn add_col(&mut self, dst: usize, src: usize, c: i128) -> Result<()> {
        if c == 0 {
            return Ok(());
        }
        for i in 0..self.rows {
            let v = add(self.get(i, dst), mul(c, self.get(i, src))?)?;
            self.set(i, dst, v);
        }
        Ok(())
    }

    fn negate_row(&mut self, r: usize) {
        for j in 0..self.cols {
            let v = -self.get(r, j);
            self.set(r, j, v);
        }
    }

    fn negate_col(&mut self, c: usize) {
        for i in 0..self.rows {
            let v = -self.get(i, c);
            self.set(i, c, v);
        }
    }

    pub fn max_abs(&self) -> i128 {
        self.data.iter().map(|x| x.abs()).max().unwrap_or(0)
    }
}

/// Result of [`smith`]: `diag = U * A * V` restricted to the diagonal.
#[derive(Clone, Debug)]
pub struct Smith {
    /// Invariant factors, nonnegative, each dividing the next; length `min(rows, cols)`.
    pub diag: Vec<i128>,
    pub u: IntMatrix,
    pub u_inv: IntMatrix,
    pub v: IntMatrix,
    pub rank: usize,
}

/// Smith normal form with transforms. Errors only on `i128` overflow.
pub fn smith(a: &IntMatrix) -> Result<Smith> {
    let (r, c) = (a.rows, a.cols);
    let mut m = a.clone();
    let mut u = IntMatrix::identity(r);
    let mut u_inv = IntMatrix::identity(r);
    let mut v = IntMatrix::identity(c);

    // Row and column operations applied simultaneously to the tracked transforms.
    macro_rules! row_swap {
        ($i:expr, $j:expr) => {{
            m.swap_rows($i, $j);
            u.swap_rows($i, $j);
            u_inv.swap_cols($i, $j);
        }};
    }
    macro_rules! row_add {
        ($dst:expr, $src:expr, $k:expr) => {{
            m.add_row($dst, $src, $k)?;
            u.add_row($dst, $src, $k)?;
            u_inv.add_col($src, $dst, -$k)?;
        }};
    }
    macro_rules! col_swap {
        ($i:expr, $j:expr) => {{
            m.swap_cols($i, $j);
            v.swap_cols($i, $j);
        }};
    }
    macro_rules! col_add {
        ($dst:expr, $src:expr, $k:expr) => {{
            m.add_col($dst, $src, $k)?;
            v.add_col($dst, $src, $k)?;
        }};
    }

    let steps = r.min(c);
    let mut rank = 0;
    for t in 0..steps {
        loop {
            let mut best: Option<(usize, usize, i128)> = None;
            for i in t..r {
                for j in t..c {
                    let x = m.get(i, j).abs();
                    if x != 0 && best.is_none_or(|(_, _, b)| x < b) {
                        best = Some((i, j, x));
                    }
                }
            }
            let Some((pi, pj, _)) = best else {
                break;
            };
            row_swap!(t, pi);
            col_swap!(t, pj);
            let p = m.get(t, t);
            let mut clean = true;
            for i in t + 1..r {
                let q = m.get(i, t) / p;
                if q != 0 {
                    row_add!(i, t, -q);
                }
                if m.get(i, t) != 0 {
                    clean = false;
                }
            }
            for j in t + 1..c {
                let q = m.get(t, j) / p;
                if q != 0 {
                    col_add!(j, t, -q);
                }
                if m.get(t, j) != 0 {
                    clean = false;
                }
            }
            if !clean {
                continue;
            }
            let mut offender = None;
            'scan: for i in t + 1..r {
                for j in t + 1..c {
                    if m.get(i, j) % p != 0 {
                        offender = Some(i);
                        break 'scan;
                    }
                }
            }
            match offender {
                Some(i) => row_add!(t, i, 1),
                None => break,
            }
        }
        if m.get(t, t) == 0 {
            break;
        }
        if m.get(t, t) < 0 {
            m.negate_row(t);
            u.negate_row(t);
            u_inv.negate_col(t);
        }
        rank += 1;
    }
    let diag = (0..steps).map(|t| m.get(t, t)).collect();
    Ok(Smith { diag, u, u_inv, v, rank })
}

/// Exact rank over the rationals.
pub fn rank(a: &IntMatrix) -> Result<usize> {
    Ok(smith(a)?.rank)
}

/// Canonical row Hermite normal form of the lattice spanned by `rows`.
///
/// Pivots are positive and entries above each pivot lie in `[0, pivot)`.
/// Zero rows are dropped, so the result is a basis in echelon form; two
/// generating sets span the same lattice iff their outputs agree.
pub fn hermite_rows(rows: &[Vec<i128>]) -> Result<Vec<Vec<i128>>> {
    if rows.is_empty() {
        return Ok(vec![]);
    }
    let ncols = rows[0].len();
    let mut m: Vec<Vec<i128>> = rows.to_vec();
    let mut pivot_row = 0;
    let mut pivots = Vec::new();
    for col in 0..ncols {
        if pivot_row == m.len() {
            break;
        }
        loop {
            let mut best: Option<(usize, i128)> = None;
            for (i, row) in m.iter().enumerate().skip(pivot_row) {
                let x = row[col].abs();
                if x != 0 && best.is_none_or(|(_, b)| x < b) {
                    best = Some((i, x));
                }
            }
            let Some((bi, _)) = best else { break };
            m.swap(pivot_row, bi);
            let p = m[pivot_row][col];
            let mut clean = true;
            for i in pivot_row + 1..m.len() {
                let q = m[i][col] / p;
                if q != 0 {
                    for j in 0..ncols {
                        m[i][j] = sub(m[i][j], mul(q, m[pivot_row][j])?)?;
                    }
                }
                if m[i][col] != 0 {
                    clean = false;
                }
            }
            if clean {
                break;
            }
        }
        if m[pivot_row][col] == 0 {
            continue;
        }
        if m[pivot_row][col] < 0 {
            for x in m[pivot_row].iter_mut() {
                *x = -*x;
            }
        }
        pivots.push((pivot_row, col));
        pivot_row += 1;
    }
    m.truncate(pivot_row);
    for &(pr, pc) in &pivots {
        let p = m[pr][pc];
        for i in 0..pr {
            let q = m[i][pc].div_euclid(p);
            if q != 0 {
                for j in 0..ncols {
                    m[i][j] = sub(m[i][j], mul(q, m[pr][j])?)?;
                }
            }
        }
    }
    Ok(m)
}

/// Exact integer linear solver for a full-column-rank matrix `P`.
///
/// Decides membership of a vector in the column lattice of `P` and returns
/// its (unique) integer coordinates.
#[derive(Clone, Debug)]
pub struct LatticeSolver {
    smith: Smith,
    rows: usize,
    cols: usize,
}

impl LatticeSolver {
    pub fn new(p: &IntMatrix) -> Result<Self> {
        let smith = smith(p)?;
        if smith.rank != p.cols() {
            return Err(Error::Rank(format!(
                "columns are dependent (rank {} < {})",
                smith.rank,
                p.cols()
            )));
        }
        Ok(LatticeSolver { smith, rows: p.rows(), cols: p.cols() })
    }

    /// Integer coordinates of `k` in the columns of `P`, or `None` if `k`
    /// is not in the column lattice.
    pub fn coordinates(&self, k: &[i128]) -> Result<Option<Vec<i128>>> {
        assert_eq!(k.len(), self.rows);
        let y = self.smith.u.mul_vec(k)?;
        let mut z = vec![0i128; self.cols];
        for i in 0..self.rows {
            if i < self.cols {
                let d = self.smith.diag[i];
                if y[i] % d != 0 {
                    return Ok(None);
                }
                z[i] = y[i] / d;
            } else if y[i] != 0 {
                return Ok(None);
            }
        }
        Ok(Some(self.smith.v.mul_vec(&z)?))
    }

    pub fn contains(&self, k: &[i128]) -> Result<bool> {
        Ok(self.coordinates(k)?.is_some())
    }

    pub fn smith(&self) -> &Smith {
        &self.smith
    }
}

/// Z-basis of the integer kernel `{x in Z^cols : A x = 0}` as columns.
pub fn integer_kernel(a: &IntMatrix) -> Result<Vec<Vec<i128>>> {
    let s = smith(a)?;
    Ok((s.rank..a.cols()).map(|j| s.v.column(j)).collect())
}

/// Flip the sign so that the first nonzero entry is positive.
pub fn sign_normalize(v: &mut [i128]) {
    if let Some(&first) = v.iter().find(|&&x| x != 0) {
        if first < 0 {
            for x in v.iter_mut() {
                *x = -*x;
            }
        }
    }
}

pub fn gcd(a: i128, b: i128) -> i128 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// Extended Euclid: returns `(g, x, y)` with `a x + b y = g = gcd(a, b) >= 0`.
pub fn ext_gcd(a: i128, b: i128) -> (i128, i128, i128) {
    let (mut r0, mut r1) = (a, b);
    let (mut s0, mut s1) = (1i128, 0i128);
    let (mut t0, mut t1) = (0i128, 1i128);
    while r1 != 0 {
        let q = r0 / r1;
        (r0, r1) = (r1, r0 - q * r1);
        (s0, s1) = (s1, s0 - q * s1);
        (t0, t1) = (t1, t0 - q * t1);
    }
    if r0 < 0 {
        (-r0, -s0, -t0)
    } else {
        (r0, s0, t0)
    }
}
