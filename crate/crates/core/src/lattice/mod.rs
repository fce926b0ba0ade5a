//! Resonance lattices in `Z^{n+1}` and their adapted bases.
//!
//! Vectors are written `k = (k_1, ..., k_n, k_0)` with the time frequency
//! last. A *resonance lattice* is a subgroup of `Z^{n+1}` spanned by
//! linearly independent vectors, none of whose real span contains a pure
//! time vector `(0, ..., 0, k_0)`. The norm throughout is the sup norm.
//!
//! All arithmetic here is exact (`i128`, checked); floating point is used
//! only to prune the short vector search, and every pruned candidate is
//! re-verified in integers.

mod enumerate;
mod gram;
pub mod intmat;
mod minima;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use intmat::{hermite_rows, integer_kernel, rank, smith, IntMatrix, LatticeSolver, ENTRY_LIMIT};

pub use gram::{gram_inverse_bound, int_norm_constant, GramBound};
pub use minima::{adapted_basis, relative_norm, AdaptedBasis};

/// Integer frequency vector with the sup norm.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IntVector(pub Vec<i64>);

impl IntVector {
    pub fn new(v: Vec<i64>) -> Self {
        IntVector(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// `|k| = max_i |k_i|`
    pub fn norm(&self) -> i64 {
        self.0.iter().map(|x| x.abs()).max().unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&x| x == 0)
    }

    /// Nonzero multiple of the time direction `(0, ..., 0, k_0)`.
    pub fn is_pure_time(&self) -> bool {
        let n = self.0.len();
        n > 0 && self.0[..n - 1].iter().all(|&x| x == 0) && self.0[n - 1] != 0
    }

    /// Spatial part `(k_1, ..., k_n)`.
    pub fn spatial(&self) -> &[i64] {
        &self.0[..self.0.len() - 1]
    }

    pub fn neg(&self) -> IntVector {
        IntVector(self.0.iter().map(|x| -x).collect())
    }

    pub(crate) fn wide(&self) -> Vec<i128> {
        self.0.iter().map(|&x| x as i128).collect()
    }

    pub(crate) fn from_wide(v: &[i128]) -> Result<IntVector> {
        v.iter()
            .map(|&x| i64::try_from(x).map_err(|_| Error::Overflow("entry exceeds i64".into())))
            .collect::<Result<Vec<_>>>()
            .map(IntVector)
    }
}

impl From<Vec<i64>> for IntVector {
    fn from(v: Vec<i64>) -> Self {
        IntVector(v)
    }
}

impl std::fmt::Display for IntVector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(")?;
        for (i, x) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{x}")?;
        }
        write!(f, ")")
    }
}

pub(crate) fn column_matrix(ambient: usize, vs: &[IntVector]) -> IntMatrix {
    let cols: Vec<Vec<i128>> = vs.iter().map(|v| v.wide()).collect();
    IntMatrix::from_columns(ambient, &cols)
}

fn check_entries(ambient: usize, vs: &[IntVector]) -> Result<()> {
    for v in vs {
        if v.dim() != ambient {
            return Err(Error::Dimension(format!(
                "vector {v} has length {} but ambient dimension is {ambient}",
                v.dim()
            )));
        }
        if v.0.iter().any(|&x| (x as i128).abs() > ENTRY_LIMIT) {
            return Err(Error::Overflow(format!("entry of {v} exceeds {ENTRY_LIMIT}")));
        }
    }
    Ok(())
}

/// Subgroup of `Z^{n+1}` given by linearly independent generators.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ResonanceLattice {
    ambient_dim: usize,
    generators: Vec<IntVector>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LatticeJson {
    ambient_dim: usize,
    generators: Vec<IntVector>,
}

impl<'de> Deserialize<'de> for ResonanceLattice {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = LatticeJson::deserialize(d)?;
        ResonanceLattice::new(raw.ambient_dim, raw.generators).map_err(serde::de::Error::custom)
    }
}

impl ResonanceLattice {
    /// Validates independence, entry size and the absence of pure time
    /// directions in the real span.
    pub fn new(ambient_dim: usize, generators: Vec<IntVector>) -> Result<Self> {
        if ambient_dim < 2 {
            return Err(Error::Dimension("ambient dimension must be at least 2".into()));
        }
        if generators.is_empty() {
            return Err(Error::Degenerate("a lattice needs at least one generator".into()));
        }
        check_entries(ambient_dim, &generators)?;
        let p = column_matrix(ambient_dim, &generators);
        let r = rank(&p)?;
        if r < generators.len() {
            return Err(Error::Rank(format!(
                "{} generators span a rank {r} lattice",
                generators.len()
            )));
        }
        let mut time = vec![0i64; ambient_dim];
        time[ambient_dim - 1] = 1;
        let mut with_time = generators.clone();
        with_time.push(IntVector(time));
        if rank(&column_matrix(ambient_dim, &with_time))? == r {
            return Err(Error::Degenerate(
                "the span contains a pure time frequency (0, ..., 0, k0)".into(),
            ));
        }
        Ok(ResonanceLattice { ambient_dim, generators })
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("lattice serializes")
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn rank(&self) -> usize {
        self.generators.len()
    }

    pub fn generators(&self) -> &[IntVector] {
        &self.generators
    }

    pub(crate) fn matrix(&self) -> IntMatrix {
        column_matrix(self.ambient_dim, &self.generators)
    }

    pub(crate) fn solver(&self) -> Result<LatticeSolver> {
        LatticeSolver::new(&self.matrix())
    }

    /// Integer coordinates of `k` in the generators, if `k` is a member.
    pub fn coordinates(&self, k: &IntVector) -> Result<Option<Vec<i64>>> {
        match self.solver()?.coordinates(&k.wide())? {
            Some(c) => Ok(Some(IntVector::from_wide(&c)?.0)),
            None => Ok(None),
        }
    }

    pub fn contains(&self, k: &IntVector) -> Result<bool> {
        if k.dim() != self.ambient_dim {
            return Err(Error::Dimension("membership query of wrong length".into()));
        }
        self.solver()?.contains(&k.wide())
    }

    /// True if `k` lies in the real span of the lattice.
    pub fn spans(&self, k: &IntVector) -> Result<bool> {
        let mut vs = self.generators.clone();
        vs.push(k.clone());
        Ok(rank(&column_matrix(self.ambient_dim, &vs))? == self.rank())
    }

    /// Canonical Hermite basis; equal for equal lattices.
    pub fn hermite_basis(&self) -> Result<Vec<IntVector>> {
        let rows: Vec<Vec<i128>> = self.generators.iter().map(|g| g.wide()).collect();
        hermite_rows(&rows)?.iter().map(|r| IntVector::from_wide(r)).collect()
    }

    pub fn same_lattice(&self, other: &ResonanceLattice) -> Result<bool> {
        Ok(self.ambient_dim == other.ambient_dim && self.hermite_basis()? == other.hermite_basis()?)
    }

    /// `span_R(L) ∩ Z^{n+1}` with a canonical Hermite basis.
    pub fn saturate(&self) -> Result<ResonanceLattice> {
        let s = smith(&self.matrix())?;
        let cols: Vec<Vec<i128>> = (0..self.rank()).map(|j| s.u_inv.column(j)).collect();
        let basis = hermite_rows(&cols)?
            .iter()
            .map(|r| IntVector::from_wide(r))
            .collect::<Result<Vec<_>>>()?;
        Ok(ResonanceLattice { ambient_dim: self.ambient_dim, generators: basis })
    }

    /// Saturated (irreducible) iff every Smith invariant equals one.
    pub fn is_irreducible(&self) -> Result<bool> {
        let s = smith(&self.matrix())?;
        Ok(s.diag.iter().all(|&d| d == 1))
    }

    /// Index `[saturate(L) : L]`, the product of the Smith invariants.
    pub fn index_in_saturation(&self) -> Result<i128> {
        let s = smith(&self.matrix())?;
        s.diag.iter().try_fold(1i128, |acc, &d| {
            acc.checked_mul(d).ok_or_else(|| Error::Overflow("index".into()))
        })
    }

    /// All nonzero members with `|k| <= radius`, sorted.
    pub fn points_within(&self, radius: i64) -> Result<Vec<IntVector>> {
        let basis: Vec<Vec<i128>> = self.generators.iter().map(|g| g.wide()).collect();
        let mut pts = enumerate::short_vectors(&basis, radius as i128)?
            .iter()
            .map(|x| IntVector::from_wide(x))
            .collect::<Result<Vec<_>>>()?;
        pts.sort();
        Ok(pts)
    }

    /// Sublattice spanned by the given members of this lattice.
    pub fn sublattice(&self, vs: Vec<IntVector>) -> Result<ResonanceLattice> {
        for v in &vs {
            if !self.contains(v)? {
                return Err(Error::Containment(format!("{v} is not in the lattice")));
            }
        }
        ResonanceLattice::new(self.ambient_dim, vs)
    }
}

/// Ordered basis `k_1, ..., k_d` split into strong (`1..=m`) and weak parts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OrderedBasis {
    vectors: Vec<IntVector>,
    split_index: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BasisJson {
    ambient_dim: usize,
    generators: Vec<IntVector>,
    split_index: usize,
}

impl<'de> Deserialize<'de> for OrderedBasis {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = BasisJson::deserialize(d)?;
        if raw.generators.iter().any(|g| g.dim() != raw.ambient_dim) {
            return Err(serde::de::Error::custom("generator length differs from ambient_dim"));
        }
        OrderedBasis::new(raw.generators, raw.split_index).map_err(serde::de::Error::custom)
    }
}

impl Serialize for BasisView<'_> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("OrderedBasis", 3)?;
        st.serialize_field("ambient_dim", &self.0.ambient_dim())?;
        st.serialize_field("generators", &self.0.vectors)?;
        st.serialize_field("split_index", &self.0.split_index)?;
        st.end()
    }
}

struct BasisView<'a>(&'a OrderedBasis);

impl Serialize for OrderedBasis {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        BasisView(self).serialize(s)
    }
}

impl OrderedBasis {
    /// Vectors must be independent, spatially nonzero and free of pure time
    /// directions; `split_index` must lie in `1..=len`.
    pub fn new(vectors: Vec<IntVector>, split_index: usize) -> Result<Self> {
        let Some(first) = vectors.first() else {
            return Err(Error::Basis("empty basis".into()));
        };
        if split_index == 0 || split_index > vectors.len() {
            return Err(Error::Basis(format!(
                "split index {split_index} outside 1..={}",
                vectors.len()
            )));
        }
        ResonanceLattice::new(first.dim(), vectors.clone())
            .map_err(|e| Error::Basis(e.to_string()))?;
        Ok(OrderedBasis { vectors, split_index })
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("basis serializes")
    }

    pub fn vectors(&self) -> &[IntVector] {
        &self.vectors
    }

    pub fn ambient_dim(&self) -> usize {
        self.vectors[0].dim()
    }

    /// Number of vectors `d`.
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Strong rank `m`.
    pub fn split_index(&self) -> usize {
        self.split_index
    }

    pub fn strong(&self) -> &[IntVector] {
        &self.vectors[..self.split_index]
    }

    pub fn weak(&self) -> &[IntVector] {
        &self.vectors[self.split_index..]
    }

    /// Prefix `B_j = (k_1, ..., k_j)`.
    pub fn prefix(&self, j: usize) -> &[IntVector] {
        &self.vectors[..j]
    }

    pub fn lattice(&self) -> ResonanceLattice {
        ResonanceLattice { ambient_dim: self.ambient_dim(), generators: self.vectors.clone() }
    }

    /// Every prefix `B_j` spans a saturated lattice.
    pub fn prefixes_irreducible(&self) -> Result<bool> {
        for j in 1..=self.len() {
            let l = ResonanceLattice::new(self.ambient_dim(), self.vectors[..j].to_vec())?;
            if !l.is_irreducible()? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Spatial parts `k̄_i` as rows of an `d x n` integer array.
    pub fn spatial_rows(&self) -> Vec<Vec<i64>> {
        self.vectors.iter().map(|v| v.spatial().to_vec()).collect()
    }
}

/// Primitive integer vector `h` in the coordinates of `sup` that annihilates
/// the coordinates of every member of `sub`.
///
/// `sub` holds `s - 1` vectors of the lattice spanned by the `s` vectors of
/// `sup`. The result is the homology class in `H_1(T^s)` carried by the
/// invariant circles left after averaging out `sub`. Sign: first nonzero
/// entry positive.
pub fn induced_homology(sub: &[IntVector], sup: &[IntVector]) -> Result<IntVector> {
    let Some(first) = sup.first() else {
        return Err(Error::Basis("empty super basis".into()));
    };
    let s = sup.len();
    if sub.len() + 1 != s {
        return Err(Error::Dimension(format!(
            "expected {} sub vectors for {s} super vectors, got {}",
            s - 1,
            sub.len()
        )));
    }
    let sup_lat = ResonanceLattice::new(first.dim(), sup.to_vec())?;
    let solver = sup_lat.solver()?;
    let mut m = IntMatrix::zeros(sub.len(), s);
    for (i, k) in sub.iter().enumerate() {
        if k.dim() != first.dim() {
            return Err(Error::Dimension(format!("{k} has the wrong length")));
        }
        let a = solver
            .coordinates(&k.wide())?
            .ok_or_else(|| Error::Containment(format!("{k} is not in the super lattice")))?;
        for (j, x) in a.into_iter().enumerate() {
            m.set(i, j, x);
        }
    }
    let ker = integer_kernel(&m)?;
    if ker.len() != 1 {
        return Err(Error::Rank(format!(
            "sub vectors have rank {} in the super lattice, expected {}",
            s - ker.len(),
            s - 1
        )));
    }
    let mut h = ker.into_iter().next().expect("one kernel vector");
    intmat::sign_normalize(&mut h);
    IntVector::from_wide(&h)
}
