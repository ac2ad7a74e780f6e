//! Parameter containers, generic over storage so the same layout holds
//! tensors, tape handles or optimizer moments.

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::Serialize;

use super::config::{AttentionKind, GsanConfig};
use crate::error::{GsanError, Result};
use crate::tensor::{Real, Tensor};

/// Δ = softplus(delta_raw) ≈ 0.1 at init.
pub const DELTA_RAW_INIT: f64 = -2.252168;

/// Floor applied to `A` after optimizer steps so `exp(-ΔA)` stays in (0, 1].
pub const A_MIN: Real = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamKind {
    /// Weight matrices and attention vectors; the only kind regularized.
    Weight,
    Bias,
    Norm,
    Ssm,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GalParams<T> {
    /// Per-head `W^(h)` side by side: `F_in × heads·F_head`. Source side for gatv2.
    pub w: T,
    /// Target-side projection for gatv2, same shape as `w`.
    pub w_dst: Option<T>,
    /// One column per head: `[a_dst; a_src]` (`2·F_head × heads`), or
    /// `F_head × heads` for gatv2.
    pub att: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct S3mParams<T> {
    /// `F_model × 2·F_inner`
    pub w_proj: T,
    /// `F_inner × K_w`
    pub conv_w: T,
    /// `F_inner`
    pub conv_b: T,
    /// `F_inner × F_model`
    pub w_out: T,
    /// Recurrence parameters, one row per scanned channel (`F_model`).
    pub delta_raw: T,
    pub a: T,
    pub b: T,
    pub c: T,
    pub d: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams<T> {
    pub gal: GalParams<T>,
    pub s3m: S3mParams<T>,
    pub gamma: T,
    pub beta: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GsanParams<T> {
    pub layers: Vec<LayerParams<T>>,
    /// `F_embed × C`
    pub out_w: T,
    pub out_b: T,
}

impl<T> GsanParams<T> {
    /// Maps every parameter in canonical order.
    pub fn try_map<'a, U>(
        &'a self,
        mut f: impl FnMut(&str, ParamKind, &'a T) -> Result<U>,
    ) -> Result<GsanParams<U>> {
        use ParamKind::*;
        let mut layers = Vec::with_capacity(self.layers.len());
        for (l, lp) in self.layers.iter().enumerate() {
            let mut g = |name: &str, kind, t: &'a T| f(&format!("layers.{}.{}", l, name), kind, t);
            let gal = GalParams {
                w: g("gal.w", Weight, &lp.gal.w)?,
                w_dst: match &lp.gal.w_dst {
                    Some(t) => Some(g("gal.w_dst", Weight, t)?),
                    None => None,
                },
                att: g("gal.att", Weight, &lp.gal.att)?,
            };
            let s = &lp.s3m;
            let s3m = S3mParams {
                w_proj: g("s3m.w_proj", Weight, &s.w_proj)?,
                conv_w: g("s3m.conv_w", Weight, &s.conv_w)?,
                conv_b: g("s3m.conv_b", Bias, &s.conv_b)?,
                w_out: g("s3m.w_out", Weight, &s.w_out)?,
                delta_raw: g("s3m.delta_raw", Ssm, &s.delta_raw)?,
                a: g("s3m.a", Ssm, &s.a)?,
                b: g("s3m.b", Ssm, &s.b)?,
                c: g("s3m.c", Ssm, &s.c)?,
                d: g("s3m.d", Ssm, &s.d)?,
            };
            let gamma = g("norm.gamma", Norm, &lp.gamma)?;
            let beta = g("norm.beta", Norm, &lp.beta)?;
            layers.push(LayerParams { gal, s3m, gamma, beta });
        }
        Ok(GsanParams {
            layers,
            out_w: f("out.w", Weight, &self.out_w)?,
            out_b: f("out.b", Bias, &self.out_b)?,
        })
    }

    /// `(name, kind, value)` in canonical order.
    pub fn entries(&self) -> Vec<(String, ParamKind, &T)> {
        let mut out = Vec::new();
        self.try_map(|name, kind, t| {
            out.push((name.to_string(), kind, t));
            Ok(())
        })
        .expect("collecting entries cannot fail");
        out
    }

    pub fn len(&self) -> usize {
        self.entries().len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Rebuilds this layout from values listed in canonical order.
    pub fn with_values<U>(&self, values: Vec<U>) -> Result<GsanParams<U>> {
        let expected = self.len();
        if values.len() != expected {
            return Err(GsanError::Invalid(format!(
                "{} values for {} parameters",
                values.len(),
                expected
            )));
        }
        let mut it = values.into_iter();
        self.try_map(|_, _, _| Ok(it.next().expect("length checked")))
    }
}

impl<T: Clone> GsanParams<T> {
    pub fn flat(&self) -> Vec<T> {
        self.entries().into_iter().map(|(_, _, t)| t.clone()).collect()
    }
}

impl GsanParams<Tensor> {
    /// Fresh parameters for `config` on inputs of width `in_features` with
    /// `n_out` outputs.
    pub fn init<R: Rng + ?Sized>(
        config: &GsanConfig,
        in_features: usize,
        n_out: usize,
        rng: &mut R,
    ) -> Result<Self> {
        config.check()?;
        let (h, fh) = (config.heads, config.hidden);
        let k = config.state_size;
        let mut layers = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            let f_in = config.layer_input(l, in_features);
            let fm = config.layer_width(l);
            let fi = config.expansion * fm;
            let gatv2 = config.attention == AttentionKind::Gatv2;
            let att_rows = if gatv2 { fh } else { 2 * fh };
            let gal = GalParams {
                w: glorot(f_in, h * fh, rng),
                w_dst: gatv2.then(|| glorot(f_in, h * fh, rng)),
                att: glorot(att_rows, h, rng),
            };
            let std_bc = 1.0 / (k as f64).sqrt();
            let s3m = S3mParams {
                w_proj: glorot(fm, 2 * fi, rng),
                conv_w: glorot(fi, config.conv_width, rng),
                conv_b: Tensor::zeros(&[fi]),
                w_out: glorot(fi, fm, rng),
                delta_raw: Tensor::full(&[fm], DELTA_RAW_INIT as Real),
                a: normal(&[fm, k], 1.0, rng).map(|v| v.abs() + 0.5),
                b: normal(&[fm, k], std_bc, rng),
                c: normal(&[fm, k], std_bc, rng),
                d: Tensor::full(&[fm], 1.0),
            };
            layers.push(LayerParams {
                gal,
                s3m,
                gamma: Tensor::full(&[fm], 1.0),
                beta: Tensor::zeros(&[fm]),
            });
        }
        let fe = config.embedding_width();
        Ok(GsanParams {
            layers,
            out_w: glorot(fe, n_out, rng),
            out_b: Tensor::zeros(&[n_out]),
        })
    }

    /// Clamps every `A` entry to at least [`A_MIN`].
    pub fn project_decay(&mut self) {
        for layer in &mut self.layers {
            for a in layer.s3m.a.data_mut() {
                *a = a.max(A_MIN);
            }
        }
    }

    pub fn num_scalars(&self) -> usize {
        self.entries().iter().map(|(_, _, t)| t.numel()).sum()
    }
}

/// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
pub fn glorot<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let dist = Uniform::new_inclusive(-limit, limit).expect("finite bounds");
    let data = (0..fan_in * fan_out).map(|_| dist.sample(rng) as Real).collect();
    Tensor::new(vec![fan_in, fan_out], data).expect("shape matches data")
}

fn normal<R: Rng + ?Sized>(shape: &[usize], std: f64, rng: &mut R) -> Tensor {
    let dist = Normal::new(0.0, std).expect("positive std");
    let n = shape.iter().product();
    let data = (0..n).map(|_| dist.sample(rng) as Real).collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches data")
}
