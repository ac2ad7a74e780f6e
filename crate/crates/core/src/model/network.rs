use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;

use super::config::{GsanConfig, HeadMode, ScanOrder};
use super::gal::{gal_forward, GalSpec};
use super::params::GsanParams;
use super::s3m::s3m_block;
use crate::error::{GsanError, Result};
use crate::graph::Graph;
use crate::kernels::norm::EPS;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

pub struct ForwardOutput {
    /// `n × C`
    pub logits: Var,
    /// Penultimate representation, `n × embedding_width`.
    pub embeddings: Var,
}

/// `(x - mean) / sqrt(var + 1e-5) · γ + β` per row.
pub fn layer_norm(tape: &mut Tape, x: Var, gamma: Var, beta: Var) -> Result<Var> {
    let s = tape.standardize_rows(x, EPS)?;
    let s = tape.mul(s, gamma)?;
    tape.add(s, beta)
}

pub fn gal_spec(config: &GsanConfig, layer: usize) -> GalSpec {
    let last = layer + 1 == config.layers;
    GalSpec {
        heads: config.heads,
        hidden: config.hidden,
        attention: config.attention,
        activation: config.gal_activation,
        leaky_slope: config.leaky_slope,
        head_mode: if last { config.final_heads } else { HeadMode::Concat },
        attn_dropout: config.attn_dropout,
    }
}

/// Scan order for one forward pass; `None` means natural order.
pub fn scan_order<R: Rng + ?Sized>(
    g: &Graph,
    order: ScanOrder,
    rng: &mut R,
    training: bool,
) -> Option<Arc<[usize]>> {
    match order {
        ScanOrder::Natural => None,
        ScanOrder::Degree => {
            let mut nodes = g.all_nodes();
            nodes.sort_by_key(|&i| std::cmp::Reverse(g.degree(i)));
            Some(nodes.into())
        }
        ScanOrder::Random if training => {
            let mut nodes = g.all_nodes();
            nodes.shuffle(rng);
            Some(nodes.into())
        }
        ScanOrder::Random => None,
    }
}

fn in_layer<T>(index: usize, r: Result<T>) -> Result<T> {
    r.map_err(|e| GsanError::Layer {
        index,
        source: Box::new(e),
    })
}

/// Full stack: per layer attention, dropout, state-space block with a
/// residual connection, layer norm; then the output projection.
pub fn gsan_forward<R: Rng + ?Sized>(
    tape: &mut Tape,
    g: &Graph,
    features: Var,
    params: &GsanParams<Var>,
    config: &GsanConfig,
    rng: &mut R,
    training: bool,
) -> Result<ForwardOutput> {
    if params.layers.len() != config.layers {
        return Err(GsanError::Invalid(format!(
            "{} parameter layers for a {}-layer config",
            params.layers.len(),
            config.layers
        )));
    }
    let order = scan_order(g, config.scan_order, rng, training);
    let mut x = tape.dropout(features, config.dropout, rng, training)?;
    for (l, lp) in params.layers.iter().enumerate() {
        let spec = gal_spec(config, l);
        x = in_layer(l, (|| {
            let att = gal_forward(tape, g, x, &lp.gal, &spec, rng, training)?.z;
            let att = tape.dropout(att, config.dropout, rng, training)?;
            let y = s3m_block(tape, att, &lp.s3m, order.as_ref(), config.u_mode, config.constant_u_steps)?;
            let y = if config.residual { tape.add(att, y)? } else { y };
            layer_norm(tape, y, lp.gamma, lp.beta)
        })())?;
    }
    let logits = tape.matmul(x, params.out_w)?;
    let logits = tape.add(logits, params.out_b)?;
    Ok(ForwardOutput { logits, embeddings: x })
}

/// Registers `params` on `tape` as trainable leaves.
pub fn params_on_tape(tape: &mut Tape, params: &GsanParams<Tensor>) -> Result<GsanParams<Var>> {
    params.try_map(|_, _, t| tape.param(t.clone()))
}

/// Evaluation-mode logits and embeddings.
pub fn predict(g: &Graph, params: &GsanParams<Tensor>, config: &GsanConfig) -> Result<(Tensor, Tensor)> {
    let mut tape = Tape::new();
    let pv = params.try_map(|_, _, t| tape.constant(t.clone()))?;
    let fv = tape.constant(g.features().clone())?;
    // evaluation mode draws nothing from the generator
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
    let out = gsan_forward(&mut tape, g, fv, &pv, config, &mut rng, false)?;
    Ok((tape.value(out.logits).clone(), tape.value(out.embeddings).clone()))
}
