use dominant::dynamics::{rescaled_deviation, SampleBox};
use dominant::family::{generate_family, pendulum_rotator};
use dominant::fit::log_log_slope;
use dominant::slowsys::BlockDecomposition;

#[test]
fn deviation_rates_over_mu_family() {
    let q = 5.0;
    let fam = generate_family(&pendulum_rotator(0.25, 1.0, q, vec![5, 11, 23, 47])).unwrap();
    let mut mus = vec![];
    let mut c0 = vec![];
    let mut c1 = vec![];
    for m in &fam {
        let dec = BlockDecomposition::new(&m.system).unwrap();
        let r = rescaled_deviation(&m.system, &dec, q, SampleBox::default(), 4096).unwrap();
        println!("mu {} c0 {:e} c1 {:e}", r.mu, r.c0_projected, r.c1);
        mus.push(r.mu as f64);
        c0.push(r.c0_projected);
        c1.push(r.c1);
    }
    let s0 = log_log_slope(&mus, &c0);
    let s1 = log_log_slope(&mus, &c1);
    println!("slopes c0 {s0} c1 {s1}");
    assert!(s0 <= -(q - 1.0) + 0.3);
    assert!(s1 <= -(q - 2.0) / 3.0 + 0.3);
}
