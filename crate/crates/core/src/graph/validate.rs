use std::collections::HashSet;
use std::fmt;

use serde::Serialize;

use super::{DatasetBundle, Graph, Labels, Split, Task};

/// One failed invariant.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub graph: String,
    pub check: &'static str,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}: {}", self.graph, self.check, self.detail)
    }
}

/// Runs every graph and bundle invariant; an empty list means the bundle is valid.
pub fn validate(bundle: &DatasetBundle) -> Vec<Violation> {
    let mut out = Vec::new();
    let meta = &bundle.meta;
    let mut push = |graph: &str, check: &'static str, detail: String| {
        out.push(Violation {
            graph: graph.to_string(),
            check,
            detail,
        })
    };

    if bundle.graphs.is_empty() {
        push("", "bundle", "no graphs".into());
    }
    match meta.task {
        Task::Transductive => {
            if bundle.graphs.len() > 1 {
                push("", "bundle", format!("transductive bundle holds {} graphs", bundle.graphs.len()));
            }
        }
        Task::Inductive => {
            if bundle.graph_splits.len() != bundle.graphs.len() {
                push(
                    "",
                    "partition",
                    format!("{} split tags for {} graphs", bundle.graph_splits.len(), bundle.graphs.len()),
                );
            }
            for (g, s) in bundle.graphs.iter().zip(&bundle.graph_splits) {
                if *s == Split::None {
                    push(g.name(), "partition", "graph is not assigned to train, val or test".into());
                }
            }
            let mut names = HashSet::new();
            for g in &bundle.graphs {
                if !names.insert(g.name()) {
                    push(g.name(), "partition", "graph name appears twice".into());
                }
            }
            match &meta.graphs {
                Some(listed) if listed.iter().map(String::as_str).ne(bundle.graphs.iter().map(|g| g.name())) => {
                    push("", "meta", "graph list does not match the loaded graphs".into())
                }
                None => push("", "meta", "inductive bundle lists no graphs".into()),
                _ => {}
            }
            if bundle.graphs_in(Split::Train).is_empty() {
                push("", "partition", "no training graph".into());
            }
        }
    }

    for g in &bundle.graphs {
        check_graph(g, bundle, &mut push);
    }
    out
}

fn check_graph(g: &Graph, bundle: &DatasetBundle, push: &mut impl FnMut(&str, &'static str, String)) {
    let name = g.name();
    let n = g.num_nodes();
    let offsets = g.offsets();
    let targets = g.targets();

    if offsets.len() != n + 1 || offsets.first() != Some(&0) || offsets.last() != Some(&targets.len()) {
        push(name, "csr", "offsets must start at 0 and end at the edge slot count".into());
        return;
    }
    if let Some(i) = offsets.windows(2).position(|w| w[0] > w[1]) {
        push(name, "csr", format!("offsets decrease at row {}", i));
        return;
    }
    if let Some(&t) = targets.iter().find(|&&t| t >= n) {
        push(name, "range", format!("edge target {} out of range for {} nodes", t, n));
        return;
    }

    let row = |i: usize| &targets[offsets[i]..offsets[i + 1]];
    let mut missing_loops = 0;
    let mut asymmetric = Vec::new();
    let mut unsorted = 0;
    for i in 0..n {
        let r = row(i);
        if r.windows(2).any(|w| w[0] >= w[1]) {
            unsorted += 1;
        }
        if !r.contains(&i) {
            missing_loops += 1;
        }
        for &j in r {
            if !row(j).contains(&i) {
                asymmetric.push((i, j));
            }
        }
    }
    if unsorted > 0 {
        push(name, "csr", format!("{} rows are not strictly increasing", unsorted));
    }
    if missing_loops > 0 {
        push(name, "self_loop", format!("{} nodes lack a self-loop", missing_loops));
    }
    if let Some(&(i, j)) = asymmetric.first() {
        push(
            name,
            "symmetry",
            format!("{} one-way edges, e.g. {} -> {} without {} -> {}", asymmetric.len(), j, i, i, j),
        );
    }

    let f = g.features();
    if f.cols() != bundle.meta.n_features {
        push(name, "features", format!("{} feature columns, meta says {}", f.cols(), bundle.meta.n_features));
    }
    if !f.all_finite() {
        push(name, "features", "non-finite feature value".into());
    }

    let c = bundle.meta.n_classes;
    match g.labels() {
        Labels::Classes(classes) => {
            if bundle.meta.multilabel {
                push(name, "labels", "class labels in a multilabel bundle".into());
            }
            if let Some((i, &l)) = classes.iter().enumerate().find(|(_, &l)| l >= c) {
                push(name, "label_range", format!("node {} has label {} outside [0, {})", i, l, c));
            }
        }
        Labels::Multi(t) => {
            if !bundle.meta.multilabel {
                push(name, "labels", "label matrix in a single-label bundle".into());
            }
            if t.cols() != c {
                push(name, "labels", format!("label width {}, meta says {}", t.cols(), c));
            }
            if let Some(v) = t.data().iter().find(|&&v| v != 0.0 && v != 1.0) {
                push(name, "label_range", format!("multilabel entry {} is not 0 or 1", v));
            }
        }
    }

    if g.masks().len() != n {
        push(name, "masks", format!("{} mask entries for {} nodes", g.masks().len(), n));
    }
}
