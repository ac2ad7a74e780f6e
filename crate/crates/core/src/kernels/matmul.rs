use rayon::prelude::*;

use crate::tensor::Real;

/// Work size (m*k*n) below which the product stays on the calling thread.
const PAR_THRESHOLD: usize = 1 << 18;

/// `out[m×n] = a[m×k] · b[k×n]`.
///
/// Rows of `out` are computed independently with a fixed reduction order, so
/// the result does not depend on the thread count. Zero entries of `a` are
/// skipped, which makes sparse bag-of-words inputs cheap.
pub fn matmul(a: &[Real], b: &[Real], m: usize, k: usize, n: usize) -> Vec<Real> {
    let mut out = vec![0.0; m * n];
    if n == 0 {
        return out;
    }
    let row = |(i, out_row): (usize, &mut [Real])| {
        let a_row = &a[i * k..(i + 1) * k];
        for (p, &av) in a_row.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    };
    if m * k * n >= PAR_THRESHOLD {
        out.par_chunks_mut(n).enumerate().for_each(row);
    } else {
        out.chunks_mut(n).enumerate().for_each(row);
    }
    out
}

pub fn transpose(a: &[Real], rows: usize, cols: usize) -> Vec<Real> {
    let mut out = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = a[i * cols + j];
        }
    }
    out
}

/// `aᵀ · b` for `a[m×k]`, `b[m×n]`, giving `[k×n]`.
pub fn matmul_tn(a: &[Real], b: &[Real], m: usize, k: usize, n: usize) -> Vec<Real> {
    let at = transpose(a, m, k);
    matmul(&at, b, k, m, n)
}

/// `a · bᵀ` for `a[m×n]`, `b[k×n]`, giving `[m×k]`.
pub fn matmul_nt(a: &[Real], b: &[Real], m: usize, n: usize, k: usize) -> Vec<Real> {
    let bt = transpose(b, k, n);
    matmul(a, &bt, m, n, k)
}
