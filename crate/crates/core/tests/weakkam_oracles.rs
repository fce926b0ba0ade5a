use dominant::averaging::TrigPolynomial;
use dominant::family::{generate_family, pendulum_potential, sheared_pendulum_rotator};
use dominant::slowsys::MechanicalLagrangian;
use dominant::weakkam::{
    aubry_set, calibrated_curve, cycle_rotation_number, mane_set, midpoint_convex, peierls_barrier, rotation_number,
    solve_with, verify_alpha_relation, BarrierOptions, DiscreteActionConfig, LaxOleinik, Quadrature,
};
use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;

const EPS: f64 = 0.25;

fn pendulum_lag() -> MechanicalLagrangian {
    MechanicalLagrangian::new(DMatrix::identity(1, 1), pendulum_potential(EPS)).unwrap()
}

fn cfg(n: usize) -> DiscreteActionConfig {
    DiscreteActionConfig { h: 0.2, resolution: n, winding: None, quadrature: Quadrature::Rectangle }
}

/// `(2√ε/π)(1 - |cos πφ|)`, the viscosity solution with `|u'| = √(2U)`.
fn pendulum_u(phi: f64) -> f64 {
    2.0 * EPS.sqrt() / std::f64::consts::PI * (1.0 - (std::f64::consts::PI * phi).cos().abs())
}

#[test]
fn free_system_alpha_oracle() {
    let s = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
    let lag = MechanicalLagrangian::new(s.clone().try_inverse().unwrap(), TrigPolynomial::zero(2)).unwrap();
    let cfg = cfg(24);
    let s_norm = s.row_iter().map(|r| r.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max);
    for c in [[0.0, 0.0], [0.5, 0.0], [0.3, -0.7], [-1.1, 0.4], [1.3, 1.0]] {
        let op = LaxOleinik::new(&lag, &c, &cfg).unwrap();
        let u = solve_with(&op, &c, 1e-9, 5000).unwrap();
        let cv = nalgebra::DVector::from_column_slice(&c);
        let exact = 0.5 * cv.dot(&(&s * &cv));
        assert!(exact >= u.alpha - 1e-9, "discrete alpha cannot exceed the continuous one");
        assert!((u.alpha - exact).abs() <= 2.0 * s_norm * (1.0 / 24.0 + 0.2), "c = {c:?}: {} vs {exact}", u.alpha);
    }
}

#[test]
fn free_rotation_is_sc() {
    let lag = MechanicalLagrangian::new(DMatrix::identity(1, 1), TrigPolynomial::zero(1)).unwrap();
    let cfg = cfg(40);
    // h S c = 3/40 lies on the grid
    let c = [0.375];
    let op = LaxOleinik::new(&lag, &c, &cfg).unwrap();
    let u = solve_with(&op, &c, 1e-10, 1000).unwrap();
    let curve = calibrated_curve(&u, &op, &[7], 200).unwrap();
    assert!(curve.velocities.iter().all(|v| (v[0] - 0.375).abs() < 1e-12));
    assert!((rotation_number(&curve).unwrap()[0] - 0.375).abs() <= 1.0 / 200.0);
    let a = aubry_set(&op, &u, 1e-8, &BarrierOptions::default()).unwrap();
    assert_eq!(a.len(), 40);
}

#[test]
fn pendulum_closed_form() {
    let n = 128;
    // the rectangle rule carries an O(h) bias of about 0.05 here
    let trap = DiscreteActionConfig { quadrature: Quadrature::Trapezoid, ..cfg(n) };
    let op = LaxOleinik::new(&pendulum_lag(), &[0.0], &trap).unwrap();
    let u = solve_with(&op, &[0.0], 1e-8, 20000).unwrap();
    assert!(u.alpha.abs() < 1e-3);
    let lip = u.lipschitz_estimate();
    let err = u.rows().iter().map(|(p, v)| (v - pendulum_u(p[0])).abs()).fold(0.0, f64::max);
    assert!(err <= 5.0 / n as f64 * lip, "sup error {err}, Lip {lip}");

    let t = peierls_barrier(&op, &u, &[0], &BarrierOptions::default()).unwrap();
    assert!(t.values[0].abs() < 1e-8);
    assert!((t.values[n / 2] - 2.0 * EPS.sqrt() / std::f64::consts::PI).abs() <= 5.0 / n as f64);

    let curve = calibrated_curve(&u, &op, &[(n / 4) as i64], 300).unwrap();
    let dist: Vec<f64> = curve.points.iter().map(|p| p[0].min(1.0 - p[0])).collect();
    assert!(dist.windows(2).all(|w| w[1] <= w[0] + 1e-12), "backward chain moves away from 0");
    assert!(dist.last().unwrap() < &(1.5 / n as f64));
    assert!(rotation_number(&curve).unwrap()[0].abs() < 0.01);
    assert_eq!(cycle_rotation_number(&curve), Some(vec![0.0]));
}

#[test]
fn pendulum_sets() {
    let n = 64;
    let op = LaxOleinik::new(&pendulum_lag(), &[0.0], &cfg(n)).unwrap();
    let u = solve_with(&op, &[0.0], 1e-9, 20000).unwrap();
    let opts = BarrierOptions::default();
    let a = aubry_set(&op, &u, 1e-6, &opts).unwrap();
    assert_eq!(a.indices, vec![0]);
    let m = mane_set(&op, &u, &a, 1e-6, &opts).unwrap();
    assert!(a.indices.iter().all(|x| m.indices.contains(x)));

    // at the critical class the separatrix carries calibrated curves both ways
    let c0 = 4.0 * EPS.sqrt() / std::f64::consts::PI;
    let opc = LaxOleinik::new(&pendulum_lag(), &[c0], &cfg(n)).unwrap();
    let uc = solve_with(&opc, &[c0], 1e-9, 20000).unwrap();
    let ac = aubry_set(&opc, &uc, 1e-6, &BarrierOptions { iters: 300, stride: 8 }).unwrap();
    assert!(ac.indices.contains(&0));
    for x in 0..n {
        let t = peierls_barrier(&opc, &uc, &[x as i64], &opts).unwrap();
        assert!(t.values[x] >= -1e-8);
    }
}

#[test]
fn two_wells_are_both_static() {
    // U = ε(1 - cos 4πφ): minima at 0 and ½
    let u2 = TrigPolynomial::from_terms(
        1,
        [(vec![0], Complex64::new(EPS, 0.0)), (vec![2], Complex64::new(-EPS / 2.0, 0.0)), (vec![-2], Complex64::new(-EPS / 2.0, 0.0))],
    )
    .unwrap();
    let lag = MechanicalLagrangian::new(DMatrix::identity(1, 1), u2).unwrap();
    let op = LaxOleinik::new(&lag, &[0.0], &cfg(32)).unwrap();
    let u = solve_with(&op, &[0.0], 1e-9, 20000).unwrap();
    let a = aubry_set(&op, &u, 1e-6, &BarrierOptions::default()).unwrap();
    assert_eq!(a.indices, vec![0, 16]);
    let t0 = peierls_barrier(&op, &u, &[0], &BarrierOptions::default()).unwrap();
    let t1 = peierls_barrier(&op, &u, &[16], &BarrierOptions::default()).unwrap();
    for y in 0..32 {
        assert!(t0.values[y] + t1.values[y] >= -2e-8);
    }
}

#[test]
fn rotation_regime_alpha_is_convex() {
    let op_cfg = cfg(64);
    let alphas: Vec<f64> = (0..7)
        .map(|i| {
            let c = [1.0 + 0.1 * i as f64];
            let op = LaxOleinik::new(&pendulum_lag(), &c, &op_cfg).unwrap();
            solve_with(&op, &c, 1e-9, 20000).unwrap().alpha
        })
        .collect();
    assert!(midpoint_convex(&alphas) > 0.0, "{alphas:?}");
}

#[test]
fn alpha_relation_exact_without_weak_potential() {
    let fam = generate_family(&sheared_pendulum_rotator(EPS, 1.0, 4.0, 1, vec![5])).unwrap();
    let sys = fam[0].system.without_weak().unwrap();
    let cfg = DiscreteActionConfig { h: 0.2, resolution: 24, winding: Some(1), quadrature: Quadrature::Rectangle };
    // c^wk = 2 / (N h C̃), c̄ = c^st + c^wk
    let cw = 2.0 / (24.0 * 0.2 * 25.0);
    let rep = verify_alpha_relation(&sys, &[0.3 - cw, cw], &cfg, 1e-10, 20000).unwrap();
    assert!(rep.weak_sup_grid == 0.0);
    assert!(rep.defect <= 2.0 * rep.solver_tolerance + 1e-12, "{rep:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn operator_is_monotone_nonexpansive_and_shift_equivariant(
        u in prop::collection::vec(-1.0f64..1.0, 16),
        bump in prop::collection::vec(0.0f64..0.5, 16),
        k in -3.0f64..3.0,
        c in -1.5f64..1.5,
    ) {
        let op = LaxOleinik::new(&pendulum_lag(), &[c], &cfg(16)).unwrap();
        let w: Vec<f64> = u.iter().zip(&bump).map(|(a, b)| a + b).collect();
        let (mut tu, mut tw, mut tk) = (vec![0.0; 16], vec![0.0; 16], vec![0.0; 16]);
        op.apply(&u, &mut tu);
        op.apply(&w, &mut tw);
        let shifted: Vec<f64> = u.iter().map(|x| x + k).collect();
        op.apply(&shifted, &mut tk);
        let sup_in = bump.iter().fold(0.0f64, |a, b| a.max(*b));
        for i in 0..16 {
            prop_assert!(tu[i] <= tw[i]);
            prop_assert!(tw[i] - tu[i] <= sup_in + 1e-12);
            prop_assert!((tk[i] - tu[i] - k).abs() <= 1e-12);
        }
    }
}

