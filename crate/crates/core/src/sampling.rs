//! Deterministic low-discrepancy samples.

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}

/// Point `index` of the Halton sequence in `[0,1)^dim`. Index 0 is skipped
/// (it is the origin in every coordinate).
pub fn halton(index: u64, dim: usize) -> Vec<f64> {
    assert!(dim <= PRIMES.len(), "Halton sequence supports up to {} dimensions", PRIMES.len());
    (0..dim).map(|k| radical_inverse(index + 1, PRIMES[k])).collect()
}

/// `count` Halton points mapped affinely onto the box `lo..hi`.
pub fn halton_box(count: usize, lo: &[f64], hi: &[f64]) -> Vec<Vec<f64>> {
    (0..count as u64)
        .map(|i| {
            halton(i, lo.len())
                .into_iter()
                .zip(lo.iter().zip(hi))
                .map(|(u, (a, b))| a + u * (b - a))
                .collect()
        })
        .collect()
}
