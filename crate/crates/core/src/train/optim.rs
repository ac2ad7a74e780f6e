use serde::{Deserialize, Serialize};

use crate::error::{GsanError, Result};
use crate::model::{GsanParams, ParamKind};
use crate::tensor::{Real, Tensor};

use super::loss::PenaltyCoefs;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimConfig {
    pub lr: Real,
    /// Decoupled decay `lr·weight_decay·w`, weight matrices only.
    pub weight_decay: Real,
    pub beta1: Real,
    pub beta2: Real,
    pub eps: Real,
    pub l1: Real,
    pub l2: Real,
    pub smooth_l1: Real,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            lr: 0.005,
            weight_decay: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            l1: 0.0,
            l2: 0.0,
            smooth_l1: 0.0,
        }
    }
}

impl OptimConfig {
    pub fn penalty(&self) -> PenaltyCoefs {
        PenaltyCoefs {
            l1: self.l1,
            l2: self.l2,
            smooth_l1: self.smooth_l1,
        }
    }

    pub fn check(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && self.weight_decay >= 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0;
        if !ok {
            return Err(GsanError::Invalid(format!("bad optimizer settings {:?}", self)));
        }
        self.penalty().check()
    }
}

/// Adam moments for a fixed parameter layout.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub step: u64,
}

impl OptimState {
    pub fn new(params: &GsanParams<Tensor>) -> Self {
        let zeros: Vec<Tensor> = params
            .entries()
            .iter()
            .map(|(_, _, t)| Tensor::zeros(t.shape()))
            .collect();
        OptimState {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }
}

/// One bias-corrected Adam update with decoupled weight decay on `Weight`
/// parameters. `grads` follows the canonical order; `None` counts as zero.
pub fn adam_step(
    params: &mut GsanParams<Tensor>,
    grads: &[Option<Tensor>],
    state: &mut OptimState,
    cfg: &OptimConfig,
) -> Result<()> {
    let entries = params.entries();
    if grads.len() != entries.len() || state.m.len() != entries.len() {
        return Err(GsanError::Invalid(format!(
            "{} gradients and {} moments for {} parameters",
            grads.len(),
            state.m.len(),
            entries.len()
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let mut updated = Vec::with_capacity(entries.len());
    for (i, (name, kind, w)) in entries.into_iter().enumerate() {
        let mut w = w.clone();
        let decay = if kind == ParamKind::Weight { cfg.lr * cfg.weight_decay } else { 0.0 };
        if let Some(g) = &grads[i] {
            if g.shape() != w.shape() {
                return Err(GsanError::shape("adam_step", format!("gradient of {} is {:?}", name, g.shape())));
            }
        }
        let (m, v) = (state.m[i].data_mut(), state.v[i].data_mut());
        let g = grads[i].as_ref().map(|g| g.data());
        for (j, wj) in w.data_mut().iter_mut().enumerate() {
            let gj = g.map_or(0.0, |g| g[j]);
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * gj;
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * gj * gj;
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            *wj -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps) + decay * *wj;
        }
        updated.push(w);
    }
    *params = params.with_values(updated)?;
    Ok(())
}
