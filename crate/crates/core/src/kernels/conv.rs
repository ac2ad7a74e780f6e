//! Depthwise causal 1-D convolution along the row (time) axis.
//!
//! `y[t,d] = bias[d] + Σ_k kernel[d,k] · x[t - K + 1 + k, d]`, with positions
//! before 0 read as zero. The last kernel tap multiplies the current step.

use crate::tensor::Real;

pub fn forward(
    x: &[Real],
    kernel: &[Real],
    bias: &[Real],
    steps: usize,
    channels: usize,
    width: usize,
) -> Vec<Real> {
    let mut y = vec![0.0; steps * channels];
    for t in 0..steps {
        for d in 0..channels {
            let mut acc = bias[d];
            for k in 0..width {
                // source index t - (width - 1) + k
                let back = width - 1 - k;
                if back > t {
                    continue;
                }
                acc += kernel[d * width + k] * x[(t - back) * channels + d];
            }
            y[t * channels + d] = acc;
        }
    }
    y
}

pub struct ConvGrads {
    pub x: Vec<Real>,
    pub kernel: Vec<Real>,
    pub bias: Vec<Real>,
}

pub fn backward(
    grad_out: &[Real],
    x: &[Real],
    kernel: &[Real],
    steps: usize,
    channels: usize,
    width: usize,
) -> ConvGrads {
    let mut gx = vec![0.0; steps * channels];
    let mut gk = vec![0.0; channels * width];
    let mut gb = vec![0.0; channels];
    for t in 0..steps {
        for d in 0..channels {
            let g = grad_out[t * channels + d];
            gb[d] += g;
            for k in 0..width {
                let back = width - 1 - k;
                if back > t {
                    continue;
                }
                let s = (t - back) * channels + d;
                gx[s] += kernel[d * width + k] * g;
                gk[d * width + k] += x[s] * g;
            }
        }
    }
    ConvGrads {
        x: gx,
        kernel: gk,
        bias: gb,
    }
}
