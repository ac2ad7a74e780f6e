//! Gated convolution plus selective scan over an ordered node sequence.

use std::sync::Arc;

use super::config::UMode;
use super::params::S3mParams;
use crate::error::{GsanError, Result};
use crate::kernels::scan;
use crate::tape::{softplus, ScanVars, Tape, Var};
use crate::tensor::{Real, Tensor};

/// Checks that `order` is a permutation of `0..n` and returns its inverse.
pub fn inverse_permutation(order: &[usize], n: usize) -> Result<Vec<usize>> {
    if order.len() != n {
        return Err(GsanError::Invalid(format!("scan order has {} entries for {} nodes", order.len(), n)));
    }
    let mut inv = vec![usize::MAX; n];
    for (pos, &node) in order.iter().enumerate() {
        if node >= n || inv[node] != usize::MAX {
            return Err(GsanError::Invalid(format!("scan order is not a permutation (node {})", node)));
        }
        inv[node] = pos;
    }
    Ok(inv)
}

/// `Z[n×F_model] -> Y[n×F_model]`. `order` lists nodes in scan order; `None`
/// keeps the natural order.
pub fn s3m_block(
    tape: &mut Tape,
    z: Var,
    p: &S3mParams<Var>,
    order: Option<&Arc<[usize]>>,
    u_mode: UMode,
    constant_steps: usize,
) -> Result<Var> {
    let zs = tape.shape(z).to_vec();
    if zs.len() != 2 {
        return Err(GsanError::shape("s3m_block", format!("input {:?}", zs)));
    }
    let (n, fm) = (zs[0], zs[1]);
    let proj = tape.shape(p.w_proj).to_vec();
    if proj.len() != 2 || proj[0] != fm || proj[1] % 2 != 0 {
        return Err(GsanError::shape("s3m_block", format!("W_proj {:?} for width {}", proj, fm)));
    }
    let fi = proj[1] / 2;
    if tape.shape(p.w_out) != [fi, fm] {
        return Err(GsanError::shape(
            "s3m_block",
            format!("W_out {:?}, expected [{}, {}]", tape.shape(p.w_out), fi, fm),
        ));
    }

    let inverse = match order {
        Some(o) => Some(Arc::<[usize]>::from(inverse_permutation(o, n)?)),
        None => None,
    };
    let seq = match order {
        Some(o) => tape.gather_rows(z, o.clone())?,
        None => z,
    };

    let zp = tape.matmul(seq, p.w_proj)?;
    let z1 = tape.slice(zp, 1, 0, fi)?;
    let z2 = tape.slice(zp, 1, fi, fi)?;
    let conv = tape.causal_conv1d(z1, p.conv_w, p.conv_b)?;
    let z1 = tape.silu(conv)?;
    let gate = tape.sigmoid(z2)?;
    let gated = tape.mul(z1, gate)?;
    let u = tape.matmul(gated, p.w_out)?;

    let delta = tape.softplus(p.delta_raw)?;
    let vars = ScanVars {
        u,
        delta,
        a: p.a,
        b: p.b,
        c: p.c,
        d: p.d,
    };
    let y = match u_mode {
        UMode::Sequence => tape.selective_scan(vars)?,
        UMode::Constant => tape.constant_input_scan(vars, constant_steps)?,
    };
    match inverse {
        Some(inv) => tape.gather_rows(y, inv),
        None => Ok(y),
    }
}

/// Direct evaluation of the recurrence on tensors: `U[T×D]`, with
/// `Δ = softplus(delta_raw)`.
pub fn selective_scan(u: &Tensor, p: &S3mParams<Tensor>) -> Result<Tensor> {
    let (steps, ch) = (u.rows(), u.cols());
    if steps == 0 {
        return Err(GsanError::Invalid("selective scan needs at least one step".into()));
    }
    let ks = p.a.cols();
    if p.delta_raw.numel() != ch || p.a.shape() != [ch, ks] || p.b.shape() != p.a.shape() || p.c.shape() != p.a.shape() || p.d.numel() != ch {
        return Err(GsanError::shape("selective_scan", format!("U {:?} vs A {:?}", u.shape(), p.a.shape())));
    }
    let delta: Vec<Real> = p.delta_raw.data().iter().map(|&r| softplus(r)).collect();
    let params = scan::ScanParams {
        delta: &delta,
        a: p.a.data(),
        b: p.b.data(),
        c: p.c.data(),
        d: p.d.data(),
        channels: ch,
        states: ks,
    };
    let out = scan::forward(u.data(), steps, &params)?;
    Tensor::new(vec![steps, ch], out.y)
}
