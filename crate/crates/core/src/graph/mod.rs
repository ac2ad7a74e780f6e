//! Graph data model.
//!
//! Adjacency is stored as CSR keyed by the *target* node: row `i` lists the
//! nodes `j` whose messages node `i` aggregates, i.e. its neighbourhood
//! `N(i)`. Graphs built through [`Graph::from_edges`] are symmetric, sorted
//! and contain every self-loop.

pub mod io;
pub mod splits;
pub mod synth;
pub mod validate;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{GsanError, Result};
use crate::tensor::{Real, Tensor};

pub use io::{load_bundle, save_bundle};
pub use splits::{standard_splits, SplitSpec};
pub use validate::{validate, Violation};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
    None,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
            Split::None => "none",
        }
    }

    pub fn parse(s: &str) -> Option<Split> {
        match s {
            "train" => Some(Split::Train),
            "val" => Some(Split::Val),
            "test" => Some(Split::Test),
            "none" => Some(Split::None),
            _ => None,
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Labels {
    /// One class id per node.
    Classes(Vec<usize>),
    /// `n × L` matrix of 0/1 entries.
    Multi(Tensor),
}

impl Labels {
    pub fn len(&self) -> usize {
        match self {
            Labels::Classes(c) => c.len(),
            Labels::Multi(t) => t.rows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_multilabel(&self) -> bool {
        matches!(self, Labels::Multi(_))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Transductive,
    Inductive,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    name: String,
    n: usize,
    offsets: Vec<usize>,
    targets: Vec<usize>,
    features: Tensor,
    labels: Labels,
    masks: Vec<Split>,
    /// Per edge slot: the neighbour `j` (message source).
    edge_src: Arc<[usize]>,
    /// Per edge slot: the aggregating node `i`.
    edge_dst: Arc<[usize]>,
}

/// Counts gathered while building a graph from an edge list.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EdgeStats {
    pub duplicates: usize,
    pub input_self_loops: usize,
}

impl Graph {
    /// Builds a symmetric, self-looped graph from undirected edges.
    pub fn from_edges(
        name: impl Into<String>,
        n: usize,
        edges: &[(usize, usize)],
        features: Tensor,
        labels: Labels,
        masks: Vec<Split>,
    ) -> Result<(Graph, EdgeStats)> {
        let mut stats = EdgeStats::default();
        let mut adj: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        for &(u, v) in edges {
            for w in [u, v] {
                if w >= n {
                    return Err(GsanError::OutOfRange {
                        what: "node",
                        index: w,
                        len: n,
                    });
                }
            }
            if u == v {
                stats.input_self_loops += 1;
                continue;
            }
            adj[u].push(v);
            adj[v].push(u);
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let mut targets = Vec::new();
        offsets.push(0);
        let mut removed = 0;
        for row in &mut adj {
            row.sort_unstable();
            let before = row.len();
            row.dedup();
            removed += before - row.len();
            targets.extend_from_slice(row);
            offsets.push(targets.len());
        }
        // each duplicated undirected edge shows up once per direction
        stats.duplicates = removed / 2;
        let graph = Graph::from_csr_unchecked(name, n, offsets, targets, features, labels, masks)?;
        Ok((graph, stats))
    }

    /// Builds a graph from raw CSR arrays without enforcing symmetry or
    /// self-loops. Only array lengths are checked; use
    /// [`validate`](crate::graph::validate) to inspect the rest.
    pub fn from_csr_unchecked(
        name: impl Into<String>,
        n: usize,
        offsets: Vec<usize>,
        targets: Vec<usize>,
        features: Tensor,
        labels: Labels,
        masks: Vec<Split>,
    ) -> Result<Graph> {
        if offsets.len() != n + 1 {
            return Err(GsanError::shape("graph", format!("{} offsets for {} nodes", offsets.len(), n)));
        }
        if features.ndim() != 2 || features.rows() != n {
            return Err(GsanError::shape("graph", format!("features {:?} for {} nodes", features.shape(), n)));
        }
        if labels.len() != n || masks.len() != n {
            return Err(GsanError::shape(
                "graph",
                format!("{} labels and {} masks for {} nodes", labels.len(), masks.len(), n),
            ));
        }
        let mut edge_dst = Vec::with_capacity(targets.len());
        for i in 0..n {
            let (lo, hi) = (offsets[i], offsets[i + 1]);
            if lo > hi || hi > targets.len() {
                return Err(GsanError::shape("graph", format!("bad CSR offsets at row {}", i)));
            }
            edge_dst.extend(std::iter::repeat(i).take(hi - lo));
        }
        if edge_dst.len() != targets.len() {
            return Err(GsanError::shape("graph", "offsets do not cover every edge slot"));
        }
        let edge_src: Arc<[usize]> = targets.clone().into();
        Ok(Graph {
            name: name.into(),
            n,
            offsets,
            targets,
            features,
            labels,
            masks,
            edge_src,
            edge_dst: edge_dst.into(),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    pub fn num_features(&self) -> usize {
        self.features.cols()
    }

    /// Directed edge slots including self-loops.
    pub fn num_edge_slots(&self) -> usize {
        self.targets.len()
    }

    /// Directed edge slots excluding self-loops (both directions of every
    /// undirected edge), the count citation benchmarks usually report.
    pub fn directed_edge_slots(&self) -> usize {
        (0..self.n)
            .map(|i| self.row(i).iter().filter(|&&j| j != i).count())
            .sum()
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    fn row(&self, i: usize) -> &[usize] {
        &self.targets[self.offsets[i]..self.offsets[i + 1]]
    }

    /// Sorted neighbourhood `N(i)`, including `i` itself.
    pub fn neighbors(&self, i: usize) -> Result<&[usize]> {
        if i >= self.n {
            return Err(GsanError::OutOfRange {
                what: "node",
                index: i,
                len: self.n,
            });
        }
        Ok(self.row(i))
    }

    pub fn degree(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    /// Message source of every edge slot.
    pub fn edge_src(&self) -> Arc<[usize]> {
        Arc::clone(&self.edge_src)
    }

    /// Aggregating node of every edge slot.
    pub fn edge_dst(&self) -> Arc<[usize]> {
        Arc::clone(&self.edge_dst)
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn labels(&self) -> &Labels {
        &self.labels
    }

    pub fn masks(&self) -> &[Split] {
        &self.masks
    }

    pub fn set_masks(&mut self, masks: Vec<Split>) -> Result<()> {
        if masks.len() != self.n {
            return Err(GsanError::shape("set_masks", format!("{} masks for {} nodes", masks.len(), self.n)));
        }
        self.masks = masks;
        Ok(())
    }

    pub fn nodes_in(&self, split: Split) -> Vec<usize> {
        (0..self.n).filter(|&i| self.masks[i] == split).collect()
    }

    pub fn all_nodes(&self) -> Vec<usize> {
        (0..self.n).collect()
    }

    /// Copy with each feature row scaled to sum to one (all-zero rows kept).
    pub fn row_normalized(&self) -> Graph {
        let mut g = self.clone();
        let cols = g.features.cols();
        for r in 0..g.n {
            let row = &mut g.features.data_mut()[r * cols..(r + 1) * cols];
            let s: Real = row.iter().sum();
            if s != 0.0 {
                for v in row {
                    *v /= s;
                }
            }
        }
        g
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BundleMeta {
    pub task: Task,
    pub n_features: usize,
    /// Class count, or label width for multilabel bundles.
    pub n_classes: usize,
    pub multilabel: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graphs: Option<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetBundle {
    pub meta: BundleMeta,
    pub graphs: Vec<Graph>,
    /// Per-graph split for inductive bundles; empty for transductive ones.
    pub graph_splits: Vec<Split>,
}

impl DatasetBundle {
    pub fn transductive(graph: Graph, n_classes: usize) -> DatasetBundle {
        DatasetBundle {
            meta: BundleMeta {
                task: Task::Transductive,
                n_features: graph.num_features(),
                n_classes,
                multilabel: graph.labels.is_multilabel(),
                graphs: None,
            },
            graphs: vec![graph],
            graph_splits: Vec::new(),
        }
    }

    pub fn inductive(graphs: Vec<Graph>, splits: Vec<Split>, n_labels: usize) -> Result<DatasetBundle> {
        if graphs.len() != splits.len() || graphs.is_empty() {
            return Err(GsanError::Invalid(format!(
                "{} graphs with {} split tags",
                graphs.len(),
                splits.len()
            )));
        }
        Ok(DatasetBundle {
            meta: BundleMeta {
                task: Task::Inductive,
                n_features: graphs[0].num_features(),
                n_classes: n_labels,
                multilabel: graphs[0].labels.is_multilabel(),
                graphs: Some(graphs.iter().map(|g| g.name.clone()).collect()),
            },
            graphs,
            graph_splits: splits,
        })
    }

    pub fn is_inductive(&self) -> bool {
        self.meta.task == Task::Inductive
    }

    /// Indices of the graphs tagged with `split`.
    pub fn graphs_in(&self, split: Split) -> Vec<usize> {
        self.graph_splits
            .iter()
            .enumerate()
            .filter(|(_, &s)| s == split)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn graph_by_name(&self, name: &str) -> Option<&Graph> {
        self.graphs.iter().find(|g| g.name == name)
    }
}
