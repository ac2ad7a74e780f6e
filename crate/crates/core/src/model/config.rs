use serde::{Deserialize, Serialize};

use crate::error::{GsanError, Result};
use crate::tensor::Real;

/// How the heads of the last attention layer are combined.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadMode {
    Concat,
    #[default]
    Average,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttentionKind {
    /// `LeakyReLU(a · [W x_i ‖ W x_j])`
    #[default]
    Gat,
    /// `a · LeakyReLU(W_dst x_i + W_src x_j)`
    Gatv2,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Elu,
    LeakyRelu,
}

/// Node order along which the state-space block scans.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScanOrder {
    #[default]
    Natural,
    /// Descending degree, ties by node id.
    Degree,
    /// Fresh permutation per training forward; natural order at evaluation.
    Random,
}

/// Whether the scan input varies per step or each row is held constant.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UMode {
    #[default]
    Sequence,
    Constant,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskHead {
    /// Picked from the dataset: sigmoid for multilabel bundles, softmax otherwise.
    #[default]
    Auto,
    Softmax,
    Sigmoid,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GsanConfig {
    pub layers: usize,
    pub heads: usize,
    /// Hidden units per head.
    pub hidden: usize,
    /// `F_inner = expansion · F_model`.
    pub expansion: usize,
    pub state_size: usize,
    pub conv_width: usize,
    pub dropout: Real,
    pub attn_dropout: Real,
    pub leaky_slope: Real,
    pub final_heads: HeadMode,
    pub attention: AttentionKind,
    pub gal_activation: Activation,
    pub scan_order: ScanOrder,
    pub u_mode: UMode,
    /// Steps each row is held for when `u_mode` is constant.
    pub constant_u_steps: usize,
    pub residual: bool,
    pub task_head: TaskHead,
}

impl Default for GsanConfig {
    fn default() -> Self {
        GsanConfig {
            layers: 2,
            heads: 8,
            hidden: 8,
            expansion: 2,
            state_size: 16,
            conv_width: 4,
            dropout: 0.6,
            attn_dropout: 0.0,
            leaky_slope: 0.2,
            final_heads: HeadMode::Average,
            attention: AttentionKind::Gat,
            gal_activation: Activation::Elu,
            scan_order: ScanOrder::Natural,
            u_mode: UMode::Sequence,
            constant_u_steps: 8,
            residual: true,
            task_head: TaskHead::Auto,
        }
    }
}

impl GsanConfig {
    pub fn check(&self) -> Result<()> {
        let positive = [
            ("layers", self.layers),
            ("heads", self.heads),
            ("hidden", self.hidden),
            ("expansion", self.expansion),
            ("state_size", self.state_size),
            ("conv_width", self.conv_width),
            ("constant_u_steps", self.constant_u_steps),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(GsanError::Invalid(format!("{} must be positive", name)));
        }
        for (name, rate) in [("dropout", self.dropout), ("attn_dropout", self.attn_dropout)] {
            if !(0.0..1.0).contains(&rate) {
                return Err(GsanError::Invalid(format!("{} {} outside [0, 1)", name, rate)));
            }
        }
        if !(self.leaky_slope.is_finite() && self.leaky_slope >= 0.0) {
            return Err(GsanError::Invalid(format!("leaky_slope {} must be >= 0", self.leaky_slope)));
        }
        Ok(())
    }

    /// Width of layer `l`'s output (its `F_model`).
    pub fn layer_width(&self, l: usize) -> usize {
        if l + 1 == self.layers && self.final_heads == HeadMode::Average {
            self.hidden
        } else {
            self.heads * self.hidden
        }
    }

    pub fn layer_input(&self, l: usize, in_features: usize) -> usize {
        if l == 0 {
            in_features
        } else {
            self.layer_width(l - 1)
        }
    }

    /// Width of the penultimate representation fed to the output projection.
    pub fn embedding_width(&self) -> usize {
        self.layer_width(self.layers - 1)
    }

    /// Resolves `Auto` against the dataset and rejects contradictions.
    pub fn resolve_head(&self, multilabel: bool) -> Result<TaskHead> {
        match (self.task_head, multilabel) {
            (TaskHead::Auto, true) | (TaskHead::Sigmoid, true) => Ok(TaskHead::Sigmoid),
            (TaskHead::Auto, false) | (TaskHead::Softmax, false) => Ok(TaskHead::Softmax),
            (head, _) => Err(GsanError::Invalid(format!(
                "task head {:?} does not fit a {} dataset",
                head,
                if multilabel { "multilabel" } else { "single-label" }
            ))),
        }
    }
}
