use nalgebra::{DMatrix, DVector};

use crate::dynamics::{flow_map, flow_map_with_jacobian, VectorField};
use crate::error::{Error, Result};

/// A map of `R^n` in block coordinates `(x, y, z)`.
pub trait BlockMap: Sync {
    fn dim(&self) -> usize;

    fn eval_with_jacobian(&self, z: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>)>;

    fn eval(&self, z: &[f64]) -> Result<Vec<f64>> {
        Ok(self.eval_with_jacobian(z)?.0)
    }
}

impl<M: BlockMap + ?Sized> BlockMap for &M {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn eval_with_jacobian(&self, z: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>)> {
        (**self).eval_with_jacobian(z)
    }

    fn eval(&self, z: &[f64]) -> Result<Vec<f64>> {
        (**self).eval(z)
    }
}

#[derive(Clone, Debug)]
pub struct LinearMap {
    pub matrix: DMatrix<f64>,
}

impl LinearMap {
    pub fn new(matrix: DMatrix<f64>) -> Self {
        LinearMap { matrix }
    }

    pub fn inverse(&self) -> Result<LinearMap> {
        self.matrix
            .clone()
            .try_inverse()
            .map(LinearMap::new)
            .ok_or_else(|| Error::Conditioning("linear block map is singular".into()))
    }
}

impl BlockMap for LinearMap {
    fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn eval_with_jacobian(&self, z: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>)> {
        Ok((self.eval(z)?, self.matrix.clone()))
    }

    fn eval(&self, z: &[f64]) -> Result<Vec<f64>> {
        Ok((&self.matrix * DVector::from_column_slice(z)).iter().copied().collect())
    }
}

/// Time-`t` map of a field read in block coordinates: the state is
/// `origin + frame · Z`.
pub struct FlowBlockMap<'a, F: VectorField + ?Sized> {
    field: &'a F,
    origin: Vec<f64>,
    frame: DMatrix<f64>,
    frame_inv: DMatrix<f64>,
    pub time: f64,
    pub dt: f64,
}

impl<'a, F: VectorField + ?Sized> FlowBlockMap<'a, F> {
    pub fn new(field: &'a F, origin: Vec<f64>, frame: DMatrix<f64>, time: f64, dt: f64) -> Result<Self> {
        let n = field.dim();
        if origin.len() != n || frame.nrows() != n || frame.ncols() != n {
            return Err(Error::Dimension(format!("block frame must be {n}×{n} with an origin of length {n}")));
        }
        let frame_inv = frame.clone().try_inverse().ok_or_else(|| Error::Conditioning("block frame is singular".into()))?;
        Ok(FlowBlockMap { field, origin, frame, frame_inv, time, dt })
    }

    fn with(&self, time: f64, dt: f64) -> Self {
        FlowBlockMap { field: self.field, origin: self.origin.clone(), frame: self.frame.clone(), frame_inv: self.frame_inv.clone(), time, dt }
    }

    /// The same frame, flowing for `-time`.
    pub fn inverse(&self) -> Self {
        self.with(-self.time, self.dt)
    }

    /// Same map with step `dt`, for step-doubling error estimates.
    pub fn with_dt(&self, dt: f64) -> Self {
        self.with(self.time, dt)
    }

    pub fn to_state(&self, z: &[f64]) -> Vec<f64> {
        let x = &self.frame * DVector::from_column_slice(z);
        x.iter().zip(&self.origin).map(|(a, b)| a + b).collect()
    }

    pub fn to_block(&self, x: &[f64]) -> Vec<f64> {
        let d = DVector::from_iterator(x.len(), x.iter().zip(&self.origin).map(|(a, b)| a - b));
        (&self.frame_inv * d).iter().copied().collect()
    }

    pub fn frame(&self) -> &DMatrix<f64> {
        &self.frame
    }
}

impl<F: VectorField + ?Sized> BlockMap for FlowBlockMap<'_, F> {
    fn dim(&self) -> usize {
        self.field.dim()
    }

    fn eval_with_jacobian(&self, z: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>)> {
        let (x, psi) = flow_map_with_jacobian(self.field, &self.to_state(z), self.time, self.dt)?;
        Ok((self.to_block(&x), &self.frame_inv * psi * &self.frame))
    }

    fn eval(&self, z: &[f64]) -> Result<Vec<f64>> {
        Ok(self.to_block(&flow_map(self.field, &self.to_state(z), self.time, self.dt)?))
    }
}

/// `I ∘ F ∘ I` with `I(x, y, z) = (y, x, z)`; for `F = G^{-1}` this is the
/// map whose C1-C4 describe the center-unstable side of `G`.
pub struct Swapped<M> {
    inner: M,
    k: usize,
}

impl<M: BlockMap> Swapped<M> {
    /// `k = s = u`.
    pub fn new(inner: M, k: usize) -> Self {
        Swapped { inner, k }
    }

    fn swap(&self, z: &[f64]) -> Vec<f64> {
        let k = self.k;
        z[k..2 * k].iter().chain(&z[..k]).chain(&z[2 * k..]).copied().collect()
    }
}

impl<M: BlockMap> BlockMap for Swapped<M> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn eval_with_jacobian(&self, z: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>)> {
        let (f, j) = self.inner.eval_with_jacobian(&self.swap(z))?;
        let n = self.dim();
        let perm: Vec<usize> = self.swap(&(0..n).map(|i| i as f64).collect::<Vec<_>>()).iter().map(|&v| v as usize).collect();
        let jac = DMatrix::from_fn(n, n, |a, b| j[(perm[a], perm[b])]);
        Ok((self.swap(&f), jac))
    }

    fn eval(&self, z: &[f64]) -> Result<Vec<f64>> {
        Ok(self.swap(&self.inner.eval(&self.swap(z))?))
    }
}

/// `F̃ = F (1 - ρ) + L ρ` with `L(x, y, z) = (D_x F^x(0,0,z) x, D_y F^y(0,0,z) y,
/// F^z(0,0,z))` and `ρ` a cubic smoothstep in the strong center coordinates:
/// 0 while `max |z_i| <= inner`, 1 once it reaches `outer`.
pub struct Mollified<M> {
    inner: M,
    s: usize,
    u: usize,
    /// Positions of the strong center coordinates in `Z`.
    cutoff: Vec<usize>,
    pub inner_radius: f64,
    pub outer_radius: f64,
}

fn smoothstep(t: f64) -> (f64, f64) {
    if t <= 0.0 {
        (0.0, 0.0)
    } else if t >= 1.0 {
        (1.0, 0.0)
    } else {
        (t * t * (3.0 - 2.0 * t), 6.0 * t * (1.0 - t))
    }
}

impl<M: BlockMap> Mollified<M> {
    pub fn new(inner: M, s: usize, u: usize, cutoff: Vec<usize>, inner_radius: f64, outer_radius: f64) -> Result<Self> {
        if cutoff.iter().any(|&i| i < s + u || i >= inner.dim()) {
            return Err(Error::Dimension("cutoff coordinates must be center coordinates".into()));
        }
        if !(0.0 <= inner_radius && inner_radius < outer_radius) {
            return Err(Error::Model("mollifier radii must satisfy 0 <= inner < outer".into()));
        }
        Ok(Mollified { inner, s, u, cutoff, inner_radius, outer_radius })
    }

    /// `ρ` and its gradient.
    pub fn rho(&self, z: &[f64]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; z.len()];
        let Some(&arg) = self.cutoff.iter().max_by(|&&a, &&b| z[a].abs().total_cmp(&z[b].abs())) else {
            return (0.0, grad);
        };
        let w = self.outer_radius - self.inner_radius;
        let (r, dr) = smoothstep((z[arg].abs() - self.inner_radius) / w);
        grad[arg] = dr / w * z[arg].signum();
        (r, grad)
    }

    /// `L(Z)` and `DL(Z)`; the `z`-derivatives of the frozen blocks come
    /// from central differences of the inner Jacobian.
    fn linear_part(&self, z: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>)> {
        let (s, u, n) = (self.s, self.u, z.len());
        let at = |zc: &[f64]| -> Result<(Vec<f64>, DMatrix<f64>)> {
            let mut p = vec![0.0; s + u];
            p.extend_from_slice(&zc[s + u..]);
            self.inner.eval_with_jacobian(&p)
        };
        let apply = |f0: &[f64], j0: &DMatrix<f64>| -> Vec<f64> {
            let mut out = vec![0.0; n];
            for i in 0..s {
                out[i] = (0..s).map(|k| j0[(i, k)] * z[k]).sum();
            }
            for i in s..s + u {
                out[i] = (s..s + u).map(|k| j0[(i, k)] * z[k]).sum();
            }
            out[s + u..].copy_from_slice(&f0[s + u..]);
            out
        };
        let (f0, j0) = at(z)?;
        let l = apply(&f0, &j0);
        let mut dl = DMatrix::zeros(n, n);
        for i in 0..s {
            for k in 0..s {
                dl[(i, k)] = j0[(i, k)];
            }
        }
        for i in s..s + u {
            for k in s..s + u {
                dl[(i, k)] = j0[(i, k)];
            }
        }
        for c in s + u..n {
            for r in s + u..n {
                dl[(r, c)] = j0[(r, c)];
            }
            // x and y rows depend on z through the frozen blocks
            let step = 1e-6 * (1.0 + z[c].abs());
            let mut zp = z.to_vec();
            let mut zm = z.to_vec();
            zp[c] += step;
            zm[c] -= step;
            let (fp, jp) = at(&zp)?;
            let (fm, jm) = at(&zm)?;
            let lp = apply(&fp, &jp);
            let lm = apply(&fm, &jm);
            for r in 0..s + u {
                dl[(r, c)] = (lp[r] - lm[r]) / (2.0 * step);
            }
        }
        Ok((l, dl))
    }
}

impl<M: BlockMap> BlockMap for Mollified<M> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn eval_with_jacobian(&self, z: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>)> {
        let (rho, grad) = self.rho(z);
        let (f, df) = self.inner.eval_with_jacobian(z)?;
        if rho == 0.0 && grad.iter().all(|g| *g == 0.0) {
            return Ok((f, df));
        }
        let (l, dl) = self.linear_part(z)?;
        let n = z.len();
        let out: Vec<f64> = f.iter().zip(&l).map(|(a, b)| a * (1.0 - rho) + b * rho).collect();
        let mut jac = df * (1.0 - rho) + dl * rho;
        for r in 0..n {
            for c in 0..n {
                jac[(r, c)] += (l[r] - f[r]) * grad[c];
            }
        }
        Ok((out, jac))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `(x/2 + z² y/10, 2y + x z/10, z + x y)`
    struct Bent;

    impl BlockMap for Bent {
        fn dim(&self) -> usize {
            3
        }

        fn eval_with_jacobian(&self, p: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>)> {
            let (x, y, z) = (p[0], p[1], p[2]);
            let f = vec![x / 2.0 + z * z * y / 10.0, 2.0 * y + x * z / 10.0, z + x * y];
            let j = DMatrix::from_row_slice(3, 3, &[0.5, z * z / 10.0, z * y / 5.0, z / 10.0, 2.0, x / 10.0, y, x, 1.0]);
            Ok((f, j))
        }
    }

    fn fd(m: &dyn BlockMap, p: &[f64]) -> DMatrix<f64> {
        let n = p.len();
        DMatrix::from_fn(n, n, |r, c| {
            let h = 1e-6;
            let mut a = p.to_vec();
            let mut b = p.to_vec();
            a[c] += h;
            b[c] -= h;
            (m.eval(&a).unwrap()[r] - m.eval(&b).unwrap()[r]) / (2.0 * h)
        })
    }

    #[test]
    fn mollifier_interpolates_to_the_linearization() {
        let m = Mollified::new(Bent, 1, 1, vec![2], 1.0, 2.0).unwrap();
        // inside: F itself
        assert_eq!(m.eval(&[0.1, 0.2, 0.5]).unwrap(), Bent.eval(&[0.1, 0.2, 0.5]).unwrap());
        // outside: L(x, y, z) = (x/2, 2y, z)
        let far = m.eval(&[0.1, 0.2, 2.5]).unwrap();
        assert!((far[0] - 0.05).abs() < 1e-15 && (far[1] - 0.4).abs() < 1e-15 && (far[2] - 2.5).abs() < 1e-15);
        for p in [[0.1, -0.2, 1.3], [-0.3, 0.1, -1.7], [0.2, 0.2, 2.5]] {
            let (_, j) = m.eval_with_jacobian(&p).unwrap();
            assert!((j - fd(&m, &p)).amax() < 1e-6, "{p:?}");
        }
    }

    #[test]
    fn swap_is_an_involution() {
        let s = Swapped::new(Bent, 1);
        let p = [0.3, -0.1, 0.7];
        let (f, j) = s.eval_with_jacobian(&p).unwrap();
        // F(-0.1, 0.3, 0.7) = (-0.0353, 0.593, 0.67), then swapped
        let want = [0.593, -0.0353, 0.67];
        assert!(f.iter().zip(&want).all(|(a, b)| (a - b).abs() < 1e-15), "{f:?}");
        assert!((j - fd(&s, &p)).amax() < 1e-8);
    }
}
