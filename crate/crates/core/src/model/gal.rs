//! Multi-head masked graph attention.
//!
//! Only existing edge slots (including self-loops) are scored, so a node can
//! never attend outside its neighbourhood.

use rand::Rng;

use super::config::{Activation, AttentionKind, HeadMode};
use super::params::GalParams;
use crate::error::{GsanError, Result};
use crate::graph::Graph;
use crate::tape::{Tape, Var};
use crate::tensor::{Real, Tensor};

/// Per-layer attention settings.
#[derive(Clone, Copy, Debug)]
pub struct GalSpec {
    pub heads: usize,
    pub hidden: usize,
    pub attention: AttentionKind,
    pub activation: Activation,
    pub leaky_slope: Real,
    pub head_mode: HeadMode,
    pub attn_dropout: Real,
}

pub struct GalOutput {
    /// `n × heads·F_head` (concat) or `n × F_head` (average).
    pub z: Var,
    /// Per head, the `E × 1` attention weights in edge-slot order.
    pub alpha: Vec<Var>,
}

pub fn gal_forward<R: Rng + ?Sized>(
    tape: &mut Tape,
    g: &Graph,
    h: Var,
    p: &GalParams<Var>,
    spec: &GalSpec,
    rng: &mut R,
    training: bool,
) -> Result<GalOutput> {
    let (heads, fh) = (spec.heads, spec.hidden);
    let n = g.num_nodes();
    let hs = tape.shape(h).to_vec();
    if hs.len() != 2 || hs[0] != n {
        return Err(GsanError::shape("gal_forward", format!("input {:?} for {} nodes", hs, n)));
    }
    let ws = tape.shape(p.w).to_vec();
    if ws != [hs[1], heads * fh] {
        return Err(GsanError::shape(
            "gal_forward",
            format!("W {:?} for input width {} and {}x{} heads", ws, hs[1], heads, fh),
        ));
    }
    let att_rows = match spec.attention {
        AttentionKind::Gat => 2 * fh,
        AttentionKind::Gatv2 => fh,
    };
    if tape.shape(p.att) != [att_rows, heads] {
        return Err(GsanError::shape(
            "gal_forward",
            format!("attention vectors {:?}, expected [{}, {}]", tape.shape(p.att), att_rows, heads),
        ));
    }
    let (src, dst) = (g.edge_src(), g.edge_dst());

    let proj = tape.matmul(h, p.w)?;
    let proj_dst = match (spec.attention, p.w_dst) {
        (AttentionKind::Gatv2, Some(w_dst)) => {
            if tape.shape(w_dst) != ws.as_slice() {
                return Err(GsanError::shape("gal_forward", "gatv2 target projection shape"));
            }
            Some(tape.matmul(h, w_dst)?)
        }
        (AttentionKind::Gatv2, None) => {
            return Err(GsanError::Invalid("gatv2 attention needs a target projection".into()))
        }
        (AttentionKind::Gat, _) => None,
    };

    let mut outs = Vec::with_capacity(heads);
    let mut alphas = Vec::with_capacity(heads);
    for k in 0..heads {
        let ph = tape.slice(proj, 1, k * fh, fh)?;
        let a = tape.slice(p.att, 1, k, 1)?;
        let scores = match proj_dst {
            None => {
                let a_dst = tape.slice(a, 0, 0, fh)?;
                let a_src = tape.slice(a, 0, fh, fh)?;
                let s = tape.matmul(ph, a_dst)?;
                let t = tape.matmul(ph, a_src)?;
                let s_e = tape.gather_rows(s, dst.clone())?;
                let t_e = tape.gather_rows(t, src.clone())?;
                let e = tape.add(s_e, t_e)?;
                tape.leaky_relu(e, spec.leaky_slope)?
            }
            Some(pd) => {
                let pdh = tape.slice(pd, 1, k * fh, fh)?;
                let x_i = tape.gather_rows(pdh, dst.clone())?;
                let x_j = tape.gather_rows(ph, src.clone())?;
                let m = tape.add(x_i, x_j)?;
                let m = tape.leaky_relu(m, spec.leaky_slope)?;
                tape.matmul(m, a)?
            }
        };
        let alpha = tape.segment_softmax(scores, dst.clone(), n)?;
        let weights = tape.dropout(alpha, spec.attn_dropout, rng, training)?;
        let agg = tape.edge_aggregate(weights, ph, src.clone(), dst.clone())?;
        let z = match spec.activation {
            Activation::Elu => tape.elu(agg)?,
            Activation::LeakyRelu => tape.leaky_relu(agg, spec.leaky_slope)?,
        };
        outs.push(z);
        alphas.push(alpha);
    }

    let z = match spec.head_mode {
        HeadMode::Concat => {
            if outs.len() == 1 {
                outs[0]
            } else {
                tape.concat(&outs, 1)?
            }
        }
        HeadMode::Average => {
            let mut acc = outs[0];
            for &o in &outs[1..] {
                acc = tape.add(acc, o)?;
            }
            tape.scale(acc, 1.0 / heads as Real)?
        }
    };
    Ok(GalOutput { z, alpha: alphas })
}

/// Per-head attention weights (one entry per edge slot, in CSR order) for
/// inputs `h`, in evaluation mode.
pub fn gal_attention_matrix(
    g: &Graph,
    h: &Tensor,
    p: &GalParams<Tensor>,
    spec: &GalSpec,
) -> Result<Vec<Vec<Real>>> {
    let mut tape = Tape::new();
    let hv = tape.constant(h.clone())?;
    let pv = GalParams {
        w: tape.constant(p.w.clone())?,
        w_dst: match &p.w_dst {
            Some(t) => Some(tape.constant(t.clone())?),
            None => None,
        },
        att: tape.constant(p.att.clone())?,
    };
    let spec = GalSpec {
        attn_dropout: 0.0,
        ..*spec
    };
    // evaluation mode draws nothing from the generator
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
    let out = gal_forward(&mut tape, g, hv, &pv, &spec, &mut rng, false)?;
    Ok(out.alpha.iter().map(|&a| tape.value(a).data().to_vec()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Labels, Split};
    use crate::model::params::glorot;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn graph(n: usize, edges: &[(usize, usize)], f: usize) -> Graph {
        Graph::from_edges(
            "t",
            n,
            edges,
            Tensor::zeros(&[n, f]),
            Labels::Classes(vec![0; n]),
            vec![Split::None; n],
        )
        .unwrap()
        .0
    }

    fn spec(heads: usize, hidden: usize) -> GalSpec {
        GalSpec {
            heads,
            hidden,
            attention: AttentionKind::Gat,
            activation: Activation::Elu,
            leaky_slope: 0.2,
            head_mode: HeadMode::Concat,
            attn_dropout: 0.0,
        }
    }

    fn run(g: &Graph, h: &Tensor, p: &GalParams<Tensor>, s: &GalSpec) -> Tensor {
        let mut tape = Tape::new();
        let hv = tape.constant(h.clone()).unwrap();
        let pv = GalParams {
            w: tape.constant(p.w.clone()).unwrap(),
            w_dst: p.w_dst.clone().map(|t| tape.constant(t).unwrap()),
            att: tape.constant(p.att.clone()).unwrap(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = gal_forward(&mut tape, g, hv, &pv, s, &mut rng, false).unwrap();
        tape.value(out.z).clone()
    }

    #[test]
    fn single_node_self_loop() {
        let g = graph(1, &[], 2);
        let h = Tensor::from_rows(&[vec![1.0, -2.0]]).unwrap();
        let p = GalParams {
            w: Tensor::from_rows(&[vec![0.5], vec![0.25]]).unwrap(),
            w_dst: None,
            att: Tensor::from_rows(&[vec![1.0], vec![1.0]]).unwrap(),
        };
        let s = spec(1, 1);
        let alpha = gal_attention_matrix(&g, &h, &p, &s).unwrap();
        assert_eq!(alpha, vec![vec![1.0]]);
        // W x = 0.5 - 0.5 = 0, ELU(0) = 0
        assert_eq!(run(&g, &h, &p, &s).data(), &[0.0]);
    }

    #[test]
    fn symmetric_pair_splits_evenly() {
        let g = graph(2, &[(0, 1)], 3);
        let h = Tensor::from_rows(&[vec![0.3, -0.1, 0.7], vec![0.3, -0.1, 0.7]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = GalParams {
            w: glorot(3, 4, &mut rng),
            w_dst: None,
            att: glorot(4, 2, &mut rng),
        };
        for a in gal_attention_matrix(&g, &h, &p, &spec(2, 2)).unwrap() {
            for v in a {
                assert!((v - 0.5).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn star_center_attends_uniformly() {
        let k = 5;
        let edges: Vec<_> = (1..=k).map(|j| (0, j)).collect();
        let g = graph(k + 1, &edges, 2);
        let h = Tensor::full(&[k + 1, 2], 0.4);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = GalParams {
            w: glorot(2, 3, &mut rng),
            w_dst: None,
            att: glorot(6, 1, &mut rng),
        };
        let alpha = &gal_attention_matrix(&g, &h, &p, &spec(1, 3)).unwrap()[0];
        let (lo, hi) = (g.offsets()[0], g.offsets()[1]);
        for &v in &alpha[lo..hi] {
            assert!((v - 1.0 / (k + 1) as Real).abs() < 1e-15);
        }
    }

    #[test]
    fn shape_errors() {
        let g = graph(2, &[(0, 1)], 3);
        let h = Tensor::zeros(&[2, 3]);
        let p = GalParams {
            w: Tensor::zeros(&[4, 2]),
            w_dst: None,
            att: Tensor::zeros(&[4, 1]),
        };
        assert!(gal_attention_matrix(&g, &h, &p, &spec(1, 2)).is_err());
        let p = GalParams {
            w: Tensor::zeros(&[3, 2]),
            w_dst: None,
            att: Tensor::zeros(&[3, 1]),
        };
        assert!(gal_attention_matrix(&g, &h, &p, &spec(1, 2)).is_err());
    }
}
