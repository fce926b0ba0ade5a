use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};

/// Autonomous vector field on `R^dim` with an analytic Jacobian.
pub trait VectorField: Sync {
    fn dim(&self) -> usize;

    /// Writes the field at `x` into `out`.
    fn eval(&self, x: &[f64], out: &mut [f64]);

    fn jacobian(&self, x: &[f64]) -> DMatrix<f64>;

    fn value(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.eval(x, &mut out);
        out
    }
}

/// `ẋ = Λx`.
#[derive(Clone, Debug)]
pub struct LinearField {
    pub matrix: DMatrix<f64>,
}

impl VectorField for LinearField {
    fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn eval(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = (0..x.len()).map(|j| self.matrix[(i, j)] * x[j]).sum();
        }
    }

    fn jacobian(&self, _x: &[f64]) -> DMatrix<f64> {
        self.matrix.clone()
    }
}

/// States sampled at every integrator step.
#[derive(Clone, Debug, Serialize)]
pub struct Trajectory {
    /// Signed step (negative for backward integration).
    pub dt: f64,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn last(&self) -> &[f64] {
        self.states.last().expect("trajectory has the initial state")
    }
}

fn axpy(out: &mut [f64], x: &[f64], a: f64, k: &[f64]) {
    for ((o, xi), ki) in out.iter_mut().zip(x).zip(k) {
        *o = xi + a * ki;
    }
}

fn steps_for(t: f64, dt: f64) -> Result<(usize, f64)> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Degenerate(format!("time step {dt} must be positive")));
    }
    if !t.is_finite() {
        return Err(Error::Degenerate("integration time must be finite".into()));
    }
    let steps = (t.abs() / dt).round().max(1.0) as usize;
    Ok((steps, t / steps as f64))
}

fn rk4_step<F: VectorField + ?Sized>(field: &F, x: &mut [f64], h: f64, ws: &mut [Vec<f64>; 5]) {
    let [k1, k2, k3, k4, tmp] = ws;
    field.eval(x, k1);
    axpy(tmp, x, 0.5 * h, k1);
    field.eval(tmp, k2);
    axpy(tmp, x, 0.5 * h, k2);
    field.eval(tmp, k3);
    axpy(tmp, x, h, k3);
    field.eval(tmp, k4);
    for i in 0..x.len() {
        x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

/// Classical fourth order Runge-Kutta from `x0` over time `t` (either sign)
/// with step close to `dt`, adjusted so that an integer number of steps
/// lands on `t`.
pub fn integrate_flow<F: VectorField + ?Sized>(field: &F, x0: &[f64], t: f64, dt: f64) -> Result<Trajectory> {
    if x0.len() != field.dim() {
        return Err(Error::Dimension(format!("state of length {} for a field on R^{}", x0.len(), field.dim())));
    }
    let (steps, h) = steps_for(t, dt)?;
    let n = x0.len();
    let mut ws: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; n]);
    let mut x = x0.to_vec();
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    times.push(0.0);
    states.push(x.clone());
    for s in 1..=steps {
        rk4_step(field, &mut x, h, &mut ws);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp(format!("non-finite state after t = {}", (s - 1) as f64 * h)));
        }
        times.push(s as f64 * h);
        states.push(x.clone());
    }
    Ok(Trajectory { dt: h, times, states })
}

/// Endpoint of the flow only, without storing the path.
pub fn flow_map<F: VectorField + ?Sized>(field: &F, x0: &[f64], t: f64, dt: f64) -> Result<Vec<f64>> {
    let (steps, h) = steps_for(t, dt)?;
    let n = x0.len();
    let mut ws: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; n]);
    let mut x = x0.to_vec();
    for s in 1..=steps {
        rk4_step(field, &mut x, h, &mut ws);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp(format!("non-finite state after t = {}", (s - 1) as f64 * h)));
        }
    }
    Ok(x)
}

/// Time-`t` map and its Jacobian, integrating the variational equation
/// `Ψ' = DX(x) Ψ` with the same Runge-Kutta stages. The returned matrix is
/// the exact derivative of the discrete map.
pub fn flow_map_with_jacobian<F: VectorField + ?Sized>(
    field: &F,
    x0: &[f64],
    t: f64,
    dt: f64,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    if x0.len() != field.dim() {
        return Err(Error::Dimension(format!("state of length {} for a field on R^{}", x0.len(), field.dim())));
    }
    let (steps, h) = steps_for(t, dt)?;
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut psi = DMatrix::<f64>::identity(n, n);
    let mut ws: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; n]);
    for s in 1..=steps {
        let [k1, k2, k3, k4, tmp] = &mut ws;
        field.eval(&x, k1);
        let j1 = field.jacobian(&x) * &psi;
        axpy(tmp, &x, 0.5 * h, k1);
        field.eval(tmp, k2);
        let j2 = field.jacobian(tmp) * (&psi + &j1 * (0.5 * h));
        axpy(tmp, &x, 0.5 * h, k2);
        field.eval(tmp, k3);
        let j3 = field.jacobian(tmp) * (&psi + &j2 * (0.5 * h));
        axpy(tmp, &x, h, k3);
        field.eval(tmp, k4);
        let j4 = field.jacobian(tmp) * (&psi + &j3 * h);
        for i in 0..n {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        psi += (j1 + j2 * 2.0 + j3 * 2.0 + j4) * (h / 6.0);
        if x.iter().any(|v| !v.is_finite()) || psi.iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp(format!("non-finite state after t = {}", (s - 1) as f64 * h)));
        }
    }
    Ok((x, psi))
}

/// Time-one map with Jacobian.
pub fn time1_map_with_jacobian<F: VectorField + ?Sized>(field: &F, x0: &[f64], dt: f64) -> Result<(Vec<f64>, DMatrix<f64>)> {
    flow_map_with_jacobian(field, x0, 1.0, dt)
}

/// Jacobian of `x -> flow_map(x)` by central differences, for cross-checks.
pub fn finite_difference_jacobian<F: VectorField + ?Sized>(
    field: &F,
    x0: &[f64],
    t: f64,
    dt: f64,
    step: f64,
) -> Result<DMatrix<f64>> {
    let n = x0.len();
    let mut jac = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut xp = x0.to_vec();
        let mut xm = x0.to_vec();
        xp[j] += step;
        xm[j] -= step;
        let fp = flow_map(field, &xp, t, dt)?;
        let fm = flow_map(field, &xm, t, dt)?;
        for i in 0..n {
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * step);
        }
    }
    Ok(jac)
}
