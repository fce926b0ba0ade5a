use std::f64::consts::PI;

use dominant::dynamics::VectorField;
use dominant::family::{generate_family, pendulum_rotator, FamilyMember};
use dominant::nhic::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

const EPS: f64 = 0.25;

/// `φ' = v`, `v' = 2πε sin 2πφ`, the strong pendulum on its own.
struct Pendulum;

impl VectorField for Pendulum {
    fn dim(&self) -> usize {
        2
    }

    fn eval(&self, x: &[f64], out: &mut [f64]) {
        out[0] = x[1];
        out[1] = 2.0 * PI * EPS * (2.0 * PI * x[0]).sin();
    }

    fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 4.0 * PI * PI * EPS * (2.0 * PI * x[0]).cos(), 0.0])
    }
}

fn spec(center: usize, r: f64, nu: f64) -> IsolatingBlockSpec {
    IsolatingBlockSpec {
        s: 1,
        u: 1,
        center_lo: vec![-1.0; center],
        center_hi: vec![1.0; center],
        r,
        mu: 2.0,
        nu,
        samples: 128,
        boundary_samples: 64,
        pairs: 48,
        resolution: 1e-9,
    }
}

fn diag(v: &[f64]) -> LinearMap {
    LinearMap::new(DMatrix::from_diagonal(&DVector::from_column_slice(v)))
}

#[test]
fn pendulum_saddle_block() {
    // linearisation [[0, 1], [4π²ε, 0]]: λ = 2π√ε
    let lam = 2.0 * PI * EPS.sqrt();
    let n = (1.0 + lam * lam).sqrt();
    let frame = DMatrix::from_row_slice(2, 2, &[1.0 / n, 1.0 / n, -lam / n, lam / n]);
    let f = FlowBlockMap::new(&Pendulum, vec![0.0, 0.0], frame, 1.0, 0.01).unwrap();
    // the orbit grows by e^λ in one step, so the block must be small for ν = e^λ - 0.1
    let rep = check_block_conditions(&f, &f.inverse(), &spec(0, 1e-3, lam.exp() - 0.1)).unwrap();
    assert_eq!(rep.overall, Verdict::Pass, "{rep:#?}");
    assert!((rep.forward.expansion - lam.exp()).abs() < 0.1);
    assert!((rep.forward.contraction - (-lam).exp()).abs() < 0.01);

    // unstable direction demanded to expand faster than it does
    let rep = check_block_conditions(&f, &f.inverse(), &spec(0, 1e-3, lam.exp() + 1.0)).unwrap();
    assert_eq!(rep.forward.c4_verdict(), Verdict::Fail);
    assert_eq!(rep.overall, Verdict::Fail);
}

#[test]
fn linear_verdicts_and_involution() {
    let sp = spec(2, 0.1, 1.5);
    let good = diag(&[0.5, 2.0, 1.0, 1.0]);
    let rep = check_block_conditions(&good, &good.inverse().unwrap(), &sp).unwrap();
    assert_eq!(rep.forward.verdict(), Verdict::Pass);
    assert_eq!(rep.inverse.verdict(), Verdict::Pass);
    assert_eq!(rep.forward.contraction, 0.5);
    assert_eq!(rep.inverse.expansion, 2.0);

    let swapped = diag(&[2.0, 0.5, 1.0, 1.0]);
    let rep = check_block_conditions(&swapped, &swapped.inverse().unwrap(), &sp).unwrap();
    assert_eq!(rep.forward.c2_verdict(), Verdict::Fail);
    assert_eq!(rep.forward.c4_verdict(), Verdict::Fail);
    assert_eq!(rep.inverse.verdict(), Verdict::Fail);
    assert_eq!(rep.overall, Verdict::Fail);
    assert_eq!(rep.kind, "sampled certificate");
}

#[test]
fn product_member_has_the_unperturbed_cylinder() {
    let fam = generate_family(&pendulum_rotator(EPS, 1.0, 5.0, vec![11])).unwrap();
    let product = FamilyMember { system: fam[0].system.without_weak().unwrap(), ..fam[0].clone() };
    let mut sp = spec(2, 0.01, 2.0);
    sp.center_lo = vec![-2.0; 2];
    sp.center_hi = vec![2.0; 2];
    let opts = WitnessOptions { points_per_axis: 3, ..WitnessOptions::default() };
    let rep = persistence_demo(&StrongSaddle { phi: vec![0.0] }, &[product], 5.0, &sp, &opts, 0.05, 0.01).unwrap();
    let row = &rep.rows[0];
    assert_eq!(row.block.overall, Verdict::Pass);
    assert_eq!(row.strong_distance, Some(0.0));
    assert!(row.witness.as_ref().unwrap().invariance_defect == 0.0);
}

#[test]
fn saddle_must_be_hyperbolic() {
    let fam = generate_family(&pendulum_rotator(EPS, 1.0, 5.0, vec![11])).unwrap();
    let sp = IsolatingBlockSpec { center_lo: vec![-2.0; 2], center_hi: vec![2.0; 2], ..spec(0, 0.01, 2.0) };
    // φ = ½ is the elliptic point of the strong pendulum
    let err = persistence_demo(&StrongSaddle { phi: vec![0.5] }, &fam, 5.0, &sp, &WitnessOptions::default(), 0.05, 0.01).unwrap_err();
    assert!(err.to_string().contains("not hyperbolic"), "{err}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn diagonal_maps_match_the_analytic_classification(
        a in 0.1f64..3.0,
        b in 0.1f64..3.0,
        c in 0.9f64..1.1,
    ) {
        for edge in [(a, 1.0), (a, 2.0 / 3.0), (b, 1.5), (b, c), (a, c)] {
            prop_assume!((edge.0 - edge.1).abs() > 0.05);
        }
        let sp = spec(1, 0.1, 1.5);
        let f = diag(&[a, b, c]);
        let rep = check_block_conditions(&f, &f.inverse().unwrap(), &sp).unwrap();
        // forward: C1 a < 1, C2 b > 1, C3 b > max(a, c), C4 b > ν;
        // inverse diag(1/b, 1/a, 1/c): a < 1, a < min(b, c), 1/a > ν
        prop_assert_eq!(rep.forward.c1_verdict() == Verdict::Pass, a < 1.0);
        prop_assert_eq!(rep.forward.c4_verdict() == Verdict::Pass, b > 1.5);
        prop_assert_eq!(rep.forward.c3_verdict() == Verdict::Pass, b > a.max(c));
        let analytic = a < 1.0 && b > 1.5 && b > a.max(c) && a < b.min(c) && 1.0 / a > 1.5;
        prop_assert_eq!(rep.overall == Verdict::Pass, analytic);
    }
}
