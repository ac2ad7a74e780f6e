//! Per-row standardization `(x - mean) / sqrt(var + eps)` with biased variance.

use crate::tensor::Real;

pub const EPS: Real = 1e-5;

pub struct Normalized {
    pub out: Vec<Real>,
    /// `1 / sqrt(var + eps)` per row.
    pub inv_std: Vec<Real>,
}

pub fn forward(x: &[Real], rows: usize, cols: usize, eps: Real) -> Normalized {
    let mut out = vec![0.0; rows * cols];
    let mut inv_std = vec![0.0; rows];
    let n = cols as Real;
    for r in 0..rows {
        let row = &x[r * cols..(r + 1) * cols];
        let mean = row.iter().sum::<Real>() / n;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<Real>() / n;
        let inv = 1.0 / (var + eps).sqrt();
        inv_std[r] = inv;
        for (o, v) in out[r * cols..(r + 1) * cols].iter_mut().zip(row) {
            *o = (v - mean) * inv;
        }
    }
    Normalized { out, inv_std }
}

/// `dx = inv_std · (g - mean(g) - x̂ · mean(g ⊙ x̂))` per row.
pub fn backward(grad_out: &[Real], fwd: &Normalized, rows: usize, cols: usize) -> Vec<Real> {
    let n = cols as Real;
    let mut gx = vec![0.0; rows * cols];
    for r in 0..rows {
        let g = &grad_out[r * cols..(r + 1) * cols];
        let xh = &fwd.out[r * cols..(r + 1) * cols];
        let mean_g = g.iter().sum::<Real>() / n;
        let mean_gx = g.iter().zip(xh).map(|(a, b)| a * b).sum::<Real>() / n;
        let inv = fwd.inv_std[r];
        for c in 0..cols {
            gx[r * cols + c] = inv * (g[c] - mean_g - xh[c] * mean_gx);
        }
    }
    gx
}
