use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::vector::norm2;

/// Power-iteration estimate of the spectral radius of a linear map on ℝ^m.
///
/// The estimate is the geometric mean of the per-iteration growth factors over
/// the second half of the run, which also settles for a dominant complex pair.
/// Returns 0 as soon as the iterate vanishes.
pub fn spectral_radius_estimate<F>(apply: F, m: usize, iters: usize, seed: u64) -> f64
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    assert!(iters >= 1, "power iteration needs at least one step");
    if m == 0 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let n0 = norm2(&v);
    v.iter_mut().for_each(|x| *x /= n0);

    let tail_start = iters / 2;
    let mut log_sum = 0.0;
    let mut count = 0usize;
    for k in 0..iters {
        let w = apply(&v);
        let growth = norm2(&w);
        if growth == 0.0 || !growth.is_finite() {
            return if growth == 0.0 { 0.0 } else { f64::INFINITY };
        }
        if k >= tail_start {
            log_sum += growth.ln();
            count += 1;
        }
        v = w.into_iter().map(|x| x / growth).collect();
    }
    (log_sum / count as f64).exp()
}
