//! Shared inputs for the benchmarks.

use gsan_core::graph::{Graph, Labels, Split};
use gsan_core::model::S3mParams;
use gsan_core::{Real, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(shape: &[usize], scale: Real, r: &mut impl Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| r.random_range(-scale..scale)).collect()).expect("shape matches")
}

/// `n` nodes, `features` columns and about `slots` directed edge slots.
pub fn random_graph(n: usize, slots: usize, features: usize, r: &mut impl Rng) -> Graph {
    let mut seen = std::collections::HashSet::new();
    while seen.len() < slots / 2 {
        let (u, v) = (r.random_range(0..n), r.random_range(0..n));
        if u != v {
            seen.insert((u.min(v), u.max(v)));
        }
    }
    let mut edges: Vec<_> = seen.into_iter().collect();
    edges.sort_unstable();
    let x = uniform(&[n, features], 1.0, r);
    Graph::from_edges("bench", n, &edges, x, Labels::Classes(vec![0; n]), vec![Split::None; n])
        .expect("valid graph")
        .0
}

pub fn scan_params(channels: usize, states: usize, r: &mut impl Rng) -> S3mParams<Tensor> {
    S3mParams {
        w_proj: uniform(&[channels, 2 * channels], 0.3, r),
        conv_w: uniform(&[channels, 4], 0.3, r),
        conv_b: Tensor::zeros(&[channels]),
        w_out: uniform(&[channels, channels], 0.3, r),
        delta_raw: Tensor::full(&[channels], -2.0),
        a: uniform(&[channels, states], 1.0, r).map(|v| v.abs() + 0.5),
        b: uniform(&[channels, states], 0.3, r),
        c: uniform(&[channels, states], 0.3, r),
        d: Tensor::full(&[channels], 1.0),
    }
}
