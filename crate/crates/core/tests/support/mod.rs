//! Reference implementations and helpers shared by the integration tests and
//! the acceptance suite. Everything here is written with plain loops and
//! touches the library only through its public API.

#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use gsan_core::graph::{Graph, Labels, Split};
use gsan_core::model::{
    gal_forward, gsan_forward, params_on_tape, s3m_block, GalParams, GalSpec, GsanConfig, GsanParams, S3mParams,
    UMode,
};
use gsan_core::tape::ScanVars;
use gsan_core::train::{masked_cross_entropy, penalty, PenaltyCoefs};
use gsan_core::{Real, Tape, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Checked-in bundles. Resolved through the workspace so other crates can
/// include this module too.
pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(name)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn randn(shape: &[usize], std: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let d = Normal::new(0.0, std).unwrap();
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| d.sample(rng) as Real).collect()).unwrap()
}

pub fn graph(n: usize, edges: &[(usize, usize)], features: Tensor, labels: Vec<usize>, masks: Vec<Split>) -> Graph {
    Graph::from_edges("t", n, edges, features, Labels::Classes(labels), masks).unwrap().0
}

/// 5 nodes, a triangle with a two-node tail, 3 training nodes.
pub fn toy5(in_features: usize, rng: &mut ChaCha8Rng) -> Graph {
    let masks = vec![Split::Train, Split::Train, Split::Val, Split::Train, Split::Test];
    graph(
        5,
        &[(0, 1), (1, 2), (2, 0), (2, 3), (3, 4)],
        randn(&[5, in_features], 1.0, rng),
        vec![0, 1, 2, 1, 0],
        masks,
    )
}

/// Closed neighbourhoods as a dense adjacency matrix.
pub fn dense_adjacency(g: &Graph) -> Vec<Vec<bool>> {
    let n = g.num_nodes();
    let mut adj = vec![vec![false; n]; n];
    for i in 0..n {
        for &j in g.neighbors(i).unwrap() {
            adj[i][j] = true;
        }
    }
    adj
}

// ---------------------------------------------------------------------------
// finite differences

pub struct GradCheck {
    pub name: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

impl GradCheck {
    /// `|a - n| / max(|a|, |n|, 1e-6)`; the floor keeps entries whose true
    /// gradient is zero from dividing round-off by round-off.
    pub fn rel_err(&self) -> f64 {
        rel_err(self.analytic, self.numeric)
    }
}

pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

fn network_loss(
    tape: &mut Tape,
    g: &Graph,
    cfg: &GsanConfig,
    params: &GsanParams<gsan_core::Var>,
    coefs: &PenaltyCoefs,
) -> gsan_core::Var {
    let x = tape.constant(g.features().clone()).unwrap();
    let out = gsan_forward(tape, g, x, params, cfg, &mut rng(0), false).unwrap();
    let Labels::Classes(classes) = g.labels() else { panic!("class labels expected") };
    let ce = masked_cross_entropy(tape, out.logits, classes, &g.nodes_in(Split::Train)).unwrap();
    match penalty(tape, params, coefs).unwrap() {
        Some(p) => tape.add(ce, p).unwrap(),
        None => ce,
    }
}

pub fn network_loss_value(g: &Graph, cfg: &GsanConfig, params: &GsanParams<Tensor>, coefs: &PenaltyCoefs) -> f64 {
    let mut tape = Tape::new();
    let pv = params.try_map(|_, _, t| tape.constant(t.clone())).unwrap();
    let loss = network_loss(&mut tape, g, cfg, &pv, coefs);
    tape.value(loss).item() as f64
}

/// Central-difference check of every scalar of every parameter against
/// reverse mode, on the masked cross-entropy plus `coefs` penalty.
pub fn full_stack_gradcheck(
    g: &Graph,
    cfg: &GsanConfig,
    params: &GsanParams<Tensor>,
    coefs: &PenaltyCoefs,
    h: f64,
) -> Vec<GradCheck> {
    let mut tape = Tape::new();
    let pv = params_on_tape(&mut tape, params).unwrap();
    let loss = network_loss(&mut tape, g, cfg, &pv, coefs);
    let grads = tape.backward(loss).unwrap();

    let entries = params.entries();
    let mut checks = Vec::new();
    for (pi, (name, _, value)) in entries.iter().enumerate() {
        let var = *pv.entries()[pi].2;
        let analytic = grads.get(var).cloned().unwrap_or_else(|| Tensor::zeros(value.shape()));
        for j in 0..value.numel() {
            let shifted = |delta: f64| {
                let mut flat: Vec<Tensor> = params.flat();
                flat[pi].data_mut()[j] += delta as Real;
                network_loss_value(g, cfg, &params.with_values(flat).unwrap(), coefs)
            };
            let numeric = (shifted(h) - shifted(-h)) / (2.0 * h);
            checks.push(GradCheck {
                name: name.clone(),
                index: j,
                analytic: analytic.data()[j] as f64,
                numeric,
            });
        }
    }
    checks
}

/// Op-level check: `loss = Σ build(inputs) ⊙ R` for a fixed random `R`.
pub fn op_gradcheck(
    inputs: &[Tensor],
    build: impl Fn(&mut Tape, &[gsan_core::Var]) -> gsan_core::Var,
    h: f64,
) -> f64 {
    let eval = |values: &[Tensor], track: bool| {
        let mut tape = Tape::new();
        let vars: Vec<_> = values
            .iter()
            .map(|t| if track { tape.param(t.clone()) } else { tape.constant(t.clone()) }.unwrap())
            .collect();
        let out = build(&mut tape, &vars);
        let shape = tape.shape(out).to_vec();
        let weights = randn(&shape, 1.0, &mut rng(99));
        let w = tape.constant(weights).unwrap();
        let prod = tape.mul(out, w).unwrap();
        let loss = tape.sum(prod).unwrap();
        let value = tape.value(loss).item() as f64;
        let grads = if track { Some(tape.backward(loss).unwrap()) } else { None };
        (value, vars, grads)
    };
    let (_, vars, grads) = eval(inputs, true);
    let grads = grads.unwrap();
    let mut worst: f64 = 0.0;
    for (i, t) in inputs.iter().enumerate() {
        let analytic = grads.get(vars[i]).cloned().unwrap_or_else(|| Tensor::zeros(t.shape()));
        for j in 0..t.numel() {
            let shifted = |delta: f64| {
                let mut vals = inputs.to_vec();
                vals[i].data_mut()[j] += delta as Real;
                eval(&vals, false).0
            };
            let numeric = (shifted(h) - shifted(-h)) / (2.0 * h);
            worst = worst.max(rel_err(analytic.data()[j] as f64, numeric));
        }
    }
    worst
}

// ---------------------------------------------------------------------------
// scan and block oracles

/// Scan through the tape op with Δ given directly.
pub fn scan_tape(u: &Tensor, delta: &[Real], a: &Tensor, b: &Tensor, c: &Tensor, d: &[Real]) -> Tensor {
    let mut tape = Tape::new();
    let k = a.cols();
    let f = u.cols();
    let vars = ScanVars {
        u: tape.constant(u.clone()).unwrap(),
        delta: tape.constant(Tensor::new(vec![f], delta.to_vec()).unwrap()).unwrap(),
        a: tape.constant(a.clone()).unwrap(),
        b: tape.constant(b.clone()).unwrap(),
        c: tape.constant(c.clone()).unwrap(),
        d: tape.constant(Tensor::new(vec![f], d.to_vec()).unwrap()).unwrap(),
    };
    assert_eq!(tape.shape(vars.a), [f, k]);
    let y = tape.selective_scan(vars).unwrap();
    tape.value(y).clone()
}

pub struct ScanCase {
    pub u: Tensor,
    pub delta: Vec<Real>,
    pub a: Tensor,
    pub b: Tensor,
    pub c: Tensor,
    pub d: Vec<Real>,
}

pub fn scan_case(seed: u64, t: usize, f: usize, k: usize) -> ScanCase {
    let mut r = rng(seed);
    ScanCase {
        u: randn(&[t, f], 1.0, &mut r),
        delta: randn(&[f], 1.0, &mut r).data().iter().map(|v| v.abs() + 1e-3).collect(),
        a: randn(&[f, k], 1.0, &mut r).map(|v| v.abs() + 0.5),
        b: randn(&[f, k], 0.25, &mut r),
        c: randn(&[f, k], 0.25, &mut r),
        d: randn(&[f], 1.0, &mut r).into_data(),
    }
}


/// Step loop over `u[T×F]` with explicit decay; Δ given directly.
pub fn naive_scan(u: &Tensor, delta: &[Real], a: &Tensor, b: &Tensor, c: &Tensor, d: &[Real]) -> Tensor {
    let (steps, f) = (u.rows(), u.cols());
    let k = a.cols();
    let mut x = vec![vec![0.0 as Real; k]; f];
    let mut y = Tensor::zeros(&[steps, f]);
    for t in 0..steps {
        for ch in 0..f {
            let mut out = d[ch] * u.get(t, ch);
            for s in 0..k {
                let decay = (-delta[ch] * a.get(ch, s)).exp();
                x[ch][s] = decay * x[ch][s] + b.get(ch, s) * u.get(t, ch);
                out += c.get(ch, s) * x[ch][s];
            }
            y.set(t, ch, out);
        }
    }
    y
}

fn sigmoid(x: Real) -> Real {
    1.0 / (1.0 + (-x).exp())
}

/// Line-by-line transcription of the gated block, natural order.
pub fn s3m_oracle(z: &Tensor, p: &S3mParams<Tensor>) -> Tensor {
    let (n, fm) = (z.rows(), z.cols());
    let fi = p.w_out.rows();
    let kw = p.conv_w.cols();
    // projection, then split along features
    let mut z1 = vec![vec![0.0; fi]; n];
    let mut z2 = vec![vec![0.0; fi]; n];
    for t in 0..n {
        for j in 0..2 * fi {
            let mut acc = 0.0;
            for m in 0..fm {
                acc += z.get(t, m) * p.w_proj.get(m, j);
            }
            if j < fi {
                z1[t][j] = acc;
            } else {
                z2[t][j - fi] = acc;
            }
        }
    }
    // causal depthwise conv, SiLU, gate, output projection
    let mut u = Tensor::zeros(&[n, fm]);
    for t in 0..n {
        let mut gated = vec![0.0; fi];
        for ch in 0..fi {
            let mut acc = p.conv_b.data()[ch];
            for tap in 0..kw {
                let lag = kw - 1 - tap;
                if t >= lag {
                    acc += p.conv_w.get(ch, tap) * z1[t - lag][ch];
                }
            }
            gated[ch] = acc * sigmoid(acc) * sigmoid(z2[t][ch]);
        }
        for m in 0..fm {
            let mut acc = 0.0;
            for ch in 0..fi {
                acc += gated[ch] * p.w_out.get(ch, m);
            }
            u.set(t, m, acc);
        }
    }
    let delta: Vec<Real> = p.delta_raw.data().iter().map(|&r| (1.0 + r.exp()).ln()).collect();
    naive_scan(&u, &delta, &p.a, &p.b, &p.c, p.d.data())
}

pub fn random_s3m(fm: usize, fi: usize, k: usize, kw: usize, rng: &mut ChaCha8Rng) -> S3mParams<Tensor> {
    S3mParams {
        w_proj: randn(&[fm, 2 * fi], 0.5, rng),
        conv_w: randn(&[fi, kw], 0.5, rng),
        conv_b: randn(&[fi], 0.5, rng),
        w_out: randn(&[fi, fm], 0.5, rng),
        delta_raw: randn(&[fm], 0.5, rng),
        a: randn(&[fm, k], 1.0, rng).map(|v| v.abs() + 0.1),
        b: randn(&[fm, k], 0.5, rng),
        c: randn(&[fm, k], 0.5, rng),
        d: randn(&[fm], 0.5, rng),
    }
}

pub fn s3m_via_tape(z: &Tensor, p: &S3mParams<Tensor>, order: Option<Vec<usize>>) -> Tensor {
    let mut tape = Tape::new();
    let zv = tape.constant(z.clone()).unwrap();
    let pv = S3mParams {
        w_proj: tape.constant(p.w_proj.clone()).unwrap(),
        conv_w: tape.constant(p.conv_w.clone()).unwrap(),
        conv_b: tape.constant(p.conv_b.clone()).unwrap(),
        w_out: tape.constant(p.w_out.clone()).unwrap(),
        delta_raw: tape.constant(p.delta_raw.clone()).unwrap(),
        a: tape.constant(p.a.clone()).unwrap(),
        b: tape.constant(p.b.clone()).unwrap(),
        c: tape.constant(p.c.clone()).unwrap(),
        d: tape.constant(p.d.clone()).unwrap(),
    };
    let order: Option<Arc<[usize]>> = order.map(Into::into);
    let y = s3m_block(&mut tape, zv, &pv, order.as_ref(), UMode::Sequence, 1).unwrap();
    tape.value(y).clone()
}

// ---------------------------------------------------------------------------
// attention oracle

fn leaky(x: Real, slope: Real) -> Real {
    if x >= 0.0 {
        x
    } else {
        slope * x
    }
}

fn elu(x: Real) -> Real {
    if x > 0.0 {
        x
    } else {
        x.exp() - 1.0
    }
}

/// Dense GAT-v1 layer with ELU and head concatenation. Returns the output and
/// the per-head `n×n` attention matrix (zero off the neighbourhood).
pub fn dense_gal(
    adj: &[Vec<bool>],
    h: &Tensor,
    w: &Tensor,
    att: &Tensor,
    heads: usize,
    fh: usize,
    slope: Real,
) -> (Tensor, Vec<Vec<Vec<Real>>>) {
    let n = h.rows();
    let fin = h.cols();
    let mut out = Tensor::zeros(&[n, heads * fh]);
    let mut alphas = Vec::new();
    for k in 0..heads {
        let mut p = vec![vec![0.0; fh]; n];
        for i in 0..n {
            for c in 0..fh {
                for m in 0..fin {
                    p[i][c] += h.get(i, m) * w.get(m, k * fh + c);
                }
            }
        }
        let mut alpha = vec![vec![0.0; n]; n];
        for i in 0..n {
            let mut e = vec![Real::NEG_INFINITY; n];
            for j in 0..n {
                if adj[i][j] {
                    let mut s = 0.0;
                    for c in 0..fh {
                        s += att.get(c, k) * p[i][c] + att.get(fh + c, k) * p[j][c];
                    }
                    e[j] = leaky(s, slope);
                }
            }
            let max = e.iter().copied().fold(Real::NEG_INFINITY, Real::max);
            let z: Real = e.iter().filter(|v| v.is_finite()).map(|v| (v - max).exp()).sum();
            for j in 0..n {
                if adj[i][j] {
                    alpha[i][j] = (e[j] - max).exp() / z;
                }
            }
            for c in 0..fh {
                let mut acc = 0.0;
                for j in 0..n {
                    acc += alpha[i][j] * p[j][c];
                }
                out.set(i, k * fh + c, elu(acc));
            }
        }
        alphas.push(alpha);
    }
    (out, alphas)
}

/// Evaluation-mode attention layer output.
pub fn gal_out(g: &Graph, h: &Tensor, p: &GalParams<Tensor>, spec: &GalSpec) -> Tensor {
    let mut tape = Tape::new();
    let hv = tape.constant(h.clone()).unwrap();
    let pv = GalParams {
        w: tape.constant(p.w.clone()).unwrap(),
        w_dst: p.w_dst.as_ref().map(|t| tape.constant(t.clone()).unwrap()),
        att: tape.constant(p.att.clone()).unwrap(),
    };
    let out = gal_forward(&mut tape, g, hv, &pv, spec, &mut rng(0), false).unwrap();
    tape.value(out.z).clone()
}
