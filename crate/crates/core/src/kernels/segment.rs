//! Softmax over groups of edges that share a target node.

use crate::error::{GsanError, Result};
use crate::tensor::Real;

pub fn check_segments(segment_of: &[usize], segments: usize) -> Result<()> {
    if let Some(&s) = segment_of.iter().find(|&&s| s >= segments) {
        return Err(GsanError::OutOfRange {
            what: "segment id",
            index: s,
            len: segments,
        });
    }
    Ok(())
}

/// `out_e = exp(x_e - max_seg) / Σ_{e' in seg} exp(x_e' - max_seg)`.
pub fn softmax(scores: &[Real], segment_of: &[usize], segments: usize) -> Vec<Real> {
    let mut max = vec![Real::NEG_INFINITY; segments];
    for (&x, &s) in scores.iter().zip(segment_of) {
        if x > max[s] {
            max[s] = x;
        }
    }
    let mut out: Vec<Real> = scores
        .iter()
        .zip(segment_of)
        .map(|(&x, &s)| (x - max[s]).exp())
        .collect();
    let mut sum = vec![0.0; segments];
    for (&e, &s) in out.iter().zip(segment_of) {
        sum[s] += e;
    }
    for (o, &s) in out.iter_mut().zip(segment_of) {
        *o /= sum[s];
    }
    out
}

/// Jacobian-vector product of the per-segment softmax.
pub fn softmax_backward(
    grad_out: &[Real],
    out: &[Real],
    segment_of: &[usize],
    segments: usize,
) -> Vec<Real> {
    let mut dot = vec![0.0; segments];
    for ((&g, &y), &s) in grad_out.iter().zip(out).zip(segment_of) {
        dot[s] += g * y;
    }
    grad_out
        .iter()
        .zip(out)
        .zip(segment_of)
        .map(|((&g, &y), &s)| y * (g - dot[s]))
        .collect()
}
