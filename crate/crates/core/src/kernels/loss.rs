//! Fused classification losses with their gradients.

use crate::tensor::Real;

/// Mean over `rows` of `-log softmax(logits[r])[labels[r]]`.
///
/// Returns the loss and `dL/dlogits` for every entry (zero outside `rows`).
pub fn cross_entropy(
    logits: &[Real],
    classes: usize,
    labels: &[usize],
    rows: &[usize],
) -> (Real, Vec<Real>) {
    let mut grad = vec![0.0; logits.len()];
    let m = rows.len() as Real;
    let mut total = 0.0;
    for &r in rows {
        let row = &logits[r * classes..(r + 1) * classes];
        let max = row.iter().copied().fold(Real::NEG_INFINITY, Real::max);
        let sum: Real = row.iter().map(|v| (v - max).exp()).sum();
        let log_z = max + sum.ln();
        total += log_z - row[labels[r]];
        for c in 0..classes {
            let p = (row[c] - log_z).exp();
            grad[r * classes + c] = (p - if c == labels[r] { 1.0 } else { 0.0 }) / m;
        }
    }
    (total / m, grad)
}

/// Mean over `rows × labels` of the sigmoid cross-entropy
/// `max(x,0) - x·y + ln(1 + e^{-|x|})`.
pub fn binary_cross_entropy(
    logits: &[Real],
    width: usize,
    targets: &[Real],
    rows: &[usize],
) -> (Real, Vec<Real>) {
    let mut grad = vec![0.0; logits.len()];
    let m = (rows.len() * width) as Real;
    let mut total = 0.0;
    for &r in rows {
        for c in 0..width {
            let i = r * width + c;
            let (x, y) = (logits[i], targets[i]);
            total += x.max(0.0) - x * y + (-x.abs()).exp().ln_1p();
            grad[i] = (sigmoid(x) - y) / m;
        }
    }
    (total / m, grad)
}

pub fn sigmoid(x: Real) -> Real {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
