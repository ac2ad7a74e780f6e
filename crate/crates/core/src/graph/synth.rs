//! Synthetic graphs for tests, benchmarks and stand-ins for absent datasets.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{DatasetBundle, Graph, Labels, Split};
use crate::error::Result;
use crate::tensor::{Real, Tensor};

#[derive(Clone, Debug)]
pub struct SbmSpec {
    pub blocks: usize,
    pub block_size: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub n_features: usize,
    /// Mean shift added to feature `block` of every node in that block.
    pub signal: f64,
    pub seed: u64,
}

impl Default for SbmSpec {
    /// The 30-node, 2-block fixture.
    fn default() -> Self {
        SbmSpec {
            blocks: 2,
            block_size: 15,
            p_in: 0.4,
            p_out: 0.05,
            n_features: 8,
            signal: 1.0,
            seed: 0,
        }
    }
}

/// Stochastic block model with labels equal to block membership.
///
/// Within each block, positions 0,1 (mod 5) train, 2 validates, 3,4 test.
pub fn sbm(spec: &SbmSpec) -> Result<Graph> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.blocks * spec.block_size;
    let block = |i: usize| i / spec.block_size;
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let p = if block(u) == block(v) { spec.p_in } else { spec.p_out };
            if rng.random_bool(p) {
                edges.push((u, v));
            }
        }
    }
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let f = spec.n_features;
    let mut features = Tensor::zeros(&[n, f]);
    for i in 0..n {
        for j in 0..f {
            let mut v: f64 = noise.sample(&mut rng);
            if j == block(i) % f.max(1) {
                v += spec.signal;
            }
            features.set(i, j, v as Real);
        }
    }
    let masks = (0..n)
        .map(|i| match (i % spec.block_size) % 5 {
            0 | 1 => Split::Train,
            2 => Split::Val,
            _ => Split::Test,
        })
        .collect();
    let labels = Labels::Classes((0..n).map(block).collect());
    Ok(Graph::from_edges("sbm", n, &edges, features, labels, masks)?.0)
}

#[derive(Clone, Debug)]
pub struct SignSpec {
    /// At least 3: the last two graphs are validation and test.
    pub graphs: usize,
    pub nodes: usize,
    pub communities: usize,
    pub n_features: usize,
    pub n_labels: usize,
    pub p_in: f64,
    pub p_out: f64,
    /// Std of the Gaussian noise added to each community pattern.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SignSpec {
    fn default() -> Self {
        SignSpec {
            graphs: 10,
            nodes: 32,
            communities: 4,
            n_features: 6,
            n_labels: 4,
            p_in: 0.3,
            p_out: 0.02,
            noise: 0.7,
            seed: 0,
        }
    }
}

/// Inductive multilabel fixture. Each graph has its own communities, each with
/// a random ±1 feature pattern; node features are the pattern plus noise and
/// label `l` is 1 iff the pattern is positive at feature `l`.
pub fn sign_multilabel(spec: &SignSpec) -> Result<DatasetBundle> {
    assert!(spec.graphs >= 3, "need train, val and test graphs");
    assert!(spec.n_labels <= spec.n_features && spec.communities >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise).expect("finite noise");
    let (n, f, l) = (spec.nodes, spec.n_features, spec.n_labels);
    let community = |i: usize| i * spec.communities / n;
    let mut graphs = Vec::with_capacity(spec.graphs);
    let mut splits = Vec::with_capacity(spec.graphs);
    for gi in 0..spec.graphs {
        let patterns: Vec<Vec<Real>> = (0..spec.communities)
            .map(|_| (0..f).map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 }).collect())
            .collect();
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                let p = if community(u) == community(v) { spec.p_in } else { spec.p_out };
                if rng.random_bool(p) {
                    edges.push((u, v));
                }
            }
        }
        let mut features = Tensor::zeros(&[n, f]);
        let mut labels = Tensor::zeros(&[n, l]);
        for i in 0..n {
            let pat = &patterns[community(i)];
            for j in 0..f {
                let e: f64 = noise.sample(&mut rng);
                features.set(i, j, pat[j] + e as Real);
                if j < l && pat[j] > 0.0 {
                    labels.set(i, j, 1.0);
                }
            }
        }
        let name = format!("g{:02}", gi);
        let graph = Graph::from_edges(name, n, &edges, features, Labels::Multi(labels), vec![Split::None; n])?.0;
        graphs.push(graph);
        splits.push(if gi + 2 < spec.graphs {
            Split::Train
        } else if gi + 2 == spec.graphs {
            Split::Val
        } else {
            Split::Test
        });
    }
    DatasetBundle::inductive(graphs, splits, l)
}

#[derive(Clone, Debug)]
pub struct PlantedSpec {
    pub class_sizes: Vec<usize>,
    pub undirected_edges: usize,
    pub n_features: usize,
    /// Probability that an edge stays inside its source node's class.
    pub homophily: f64,
    /// Active words per node.
    pub words: usize,
    /// Probability that an active word is drawn from the node's class topic.
    pub topic_rate: f64,
    pub seed: u64,
}

impl PlantedSpec {
    /// Same node, edge, feature and class counts as the Cora citation graph.
    pub fn cora_scale(seed: u64) -> PlantedSpec {
        PlantedSpec {
            class_sizes: vec![351, 217, 418, 818, 426, 298, 180],
            undirected_edges: 5278,
            n_features: 1433,
            homophily: 0.8,
            words: 18,
            topic_rate: 0.35,
            seed,
        }
    }
}

/// Planted-partition citation stand-in with sparse binary bag-of-words
/// features. Classes are interleaved over node ids.
pub fn planted_partition(spec: &PlantedSpec) -> Result<Graph> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let c = spec.class_sizes.len();
    let n: usize = spec.class_sizes.iter().sum();

    // uniform permutation of the class multiset, so any index range has the
    // global class mix (planetoid masks take the last 1000 ids as test)
    let mut classes: Vec<usize> = spec.class_sizes.iter().enumerate().flat_map(|(k, &m)| vec![k; m]).collect();
    classes.shuffle(&mut rng);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); c];
    for (i, &k) in classes.iter().enumerate() {
        members[k].push(i);
    }

    let max_edges = n * (n - 1) / 2;
    let target = spec.undirected_edges.min(max_edges);
    let mut seen = HashSet::with_capacity(target);
    let mut edges = Vec::with_capacity(target);
    while edges.len() < target {
        let u = rng.random_range(0..n);
        let v = if rng.random_bool(spec.homophily) {
            let m = &members[classes[u]];
            m[rng.random_range(0..m.len())]
        } else {
            rng.random_range(0..n)
        };
        if u == v {
            continue;
        }
        let key = (u.min(v), u.max(v));
        if seen.insert(key) {
            edges.push(key);
        }
    }

    let f = spec.n_features;
    let topic = (f / c).max(1);
    let mut features = Tensor::zeros(&[n, f]);
    for (i, &k) in classes.iter().enumerate() {
        for _ in 0..spec.words {
            let w = if rng.random_bool(spec.topic_rate) {
                (k * topic + rng.random_range(0..topic)).min(f - 1)
            } else {
                rng.random_range(0..f)
            };
            features.set(i, w, 1.0);
        }
    }
    Ok(Graph::from_edges("planted", n, &edges, features, Labels::Classes(classes), vec![Split::None; n])?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{validate, DatasetBundle};

    #[test]
    fn sbm_fixture_shape() {
        let g = sbm(&SbmSpec::default()).unwrap();
        assert_eq!(g.num_nodes(), 30);
        assert_eq!(g.nodes_in(Split::Train).len(), 12);
        assert_eq!(g.nodes_in(Split::Val).len(), 6);
        assert_eq!(g.nodes_in(Split::Test).len(), 12);
        assert!(validate(&DatasetBundle::transductive(g, 2)).is_empty());
    }

    #[test]
    fn sign_fixture_shape() {
        let b = sign_multilabel(&SignSpec::default()).unwrap();
        assert_eq!(b.graphs.len(), 10);
        assert_eq!(b.graphs_in(Split::Val), vec![8]);
        assert_eq!(b.graphs_in(Split::Test), vec![9]);
        assert!(validate(&b).is_empty());
        for g in &b.graphs {
            let Labels::Multi(y) = g.labels() else { panic!() };
            // nodes of one community share a label row
            for i in 1..8 {
                assert_eq!(y.row(i), y.row(0));
            }
        }
    }

    #[test]
    fn cora_scale_counts() {
        let g = planted_partition(&PlantedSpec::cora_scale(0)).unwrap();
        assert_eq!(g.num_nodes(), 2708);
        assert_eq!(g.num_features(), 1433);
        assert_eq!(g.directed_edge_slots(), 10556);
        let degree_sum: usize = (0..2708).map(|i| g.degree(i)).sum();
        assert_eq!(degree_sum, 10556 + 2708);
        let Labels::Classes(cl) = g.labels() else { panic!() };
        // the tail holds every class in roughly its global share
        let spec = PlantedSpec::cora_scale(0);
        for (k, &m) in spec.class_sizes.iter().enumerate() {
            let tail = cl[2708 - 1000..].iter().filter(|&&x| x == k).count() as f64;
            let expected = 1000.0 * m as f64 / 2708.0;
            assert!((tail - expected).abs() < 0.35 * expected, "class {}: {} vs {}", k, tail, expected);
        }
        assert!(validate(&DatasetBundle::transductive(g.clone(), 7)).is_empty());
    }
}
