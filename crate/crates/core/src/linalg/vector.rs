//! Small helpers on `&[f64]` state vectors.

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Euclidean distance ‖a − b‖₂.
pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Largest entrywise |a − b|.
pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |acc: f64, (x, y)| acc.max((x - y).abs()))
}

/// `y += a·x`
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Elementwise `w ⊙ x`.
pub fn weighted(w: &[f64], x: &[f64]) -> Vec<f64> {
    w.iter().zip(x).map(|(a, b)| a * b).collect()
}

/// `w1 ⊙ x1 + w2 ⊙ x2`, the diagonal-weight mixture of two iterates.
pub fn mix(w1: &[f64], x1: &[f64], w2: &[f64], x2: &[f64]) -> Vec<f64> {
    (0..x1.len()).map(|i| w1[i] * x1[i] + w2[i] * x2[i]).collect()
}
