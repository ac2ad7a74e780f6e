//! Canonical bundle directory format.
//!
//! ```text
//! meta.json     {"task","n_features","n_classes","multilabel",("graphs")}
//! edges.csv     src,dst        undirected, each pair once, no self-loops
//! features.csv  node,feat,value  sparse triplets
//! labels.csv    node,class | node,bitvector
//! masks.csv     node,split     (optional; unlisted nodes are unassigned)
//! splits.json   {graph name: "train"|"val"|"test"}   (inductive only)
//! ```
//!
//! Inductive bundles keep one sub-directory per graph holding the four CSV files.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;

use super::{BundleMeta, DatasetBundle, Graph, Labels, Split, Task};
use crate::error::{GsanError, Result};
use crate::tensor::{Real, Tensor};

pub const META_FILE: &str = "meta.json";
pub const SPLITS_FILE: &str = "splits.json";
pub const EDGES_FILE: &str = "edges.csv";
pub const FEATURES_FILE: &str = "features.csv";
pub const LABELS_FILE: &str = "labels.csv";
pub const MASKS_FILE: &str = "masks.csv";

pub const TRANSDUCTIVE_NAME: &str = "graph";

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| GsanError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| GsanError::format(path, e.to_string()))
}

/// Reads a headed CSV file, checking the header, and calls `row` for each
/// record with its 1-based line number.
fn read_csv(
    path: &Path,
    header: &[&str],
    mut row: impl FnMut(usize, &csv::StringRecord) -> std::result::Result<(), String>,
) -> Result<()> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => GsanError::io(path, io),
            other => GsanError::format(path, format!("{:?}", other)),
        })?;
    let found = reader
        .headers()
        .map_err(|e| GsanError::format(path, e.to_string()))?
        .clone();
    if found.len() != header.len() || found.iter().zip(header).any(|(a, b)| a != *b) {
        return Err(GsanError::format(
            path,
            format!("expected header {:?}, found {:?}", header.join(","), found.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| GsanError::format(path, format!("line {}: {}", line, e)))?;
        if rec.len() != header.len() {
            return Err(GsanError::format(
                path,
                format!("line {}: expected {} fields, found {}", line, header.len(), rec.len()),
            ));
        }
        row(line, &rec).map_err(|m| GsanError::format(path, format!("line {}: {}", line, m)))?;
    }
    Ok(())
}

fn parse_index(field: &str, what: &str, bound: usize) -> std::result::Result<usize, String> {
    let v: usize = field
        .parse()
        .map_err(|_| format!("{} {:?} is not a non-negative integer", what, field))?;
    if v >= bound {
        return Err(format!("{} {} out of range (< {})", what, v, bound));
    }
    Ok(v)
}

fn load_labels(path: &Path, meta: &BundleMeta) -> Result<Labels> {
    let mut rows: Vec<(usize, Vec<Real>, usize)> = Vec::new();
    let header: &[&str] = if meta.multilabel {
        &["node", "bitvector"]
    } else {
        &["node", "class"]
    };
    read_csv(path, header, |_, rec| {
        let node: usize = rec[0]
            .parse()
            .map_err(|_| format!("node {:?} is not a non-negative integer", &rec[0]))?;
        if meta.multilabel {
            let bits = &rec[1];
            if bits.len() != meta.n_classes {
                return Err(format!("bitvector has {} labels, expected {}", bits.len(), meta.n_classes));
            }
            let v = bits
                .chars()
                .map(|c| match c {
                    '0' => Ok(0.0),
                    '1' => Ok(1.0),
                    other => Err(format!("bitvector character {:?} is not 0 or 1", other)),
                })
                .collect::<std::result::Result<Vec<Real>, String>>()?;
            rows.push((node, v, 0));
        } else {
            let class = parse_index(&rec[1], "label", meta.n_classes)?;
            rows.push((node, Vec::new(), class));
        }
        Ok(())
    })?;
    let n = rows.len();
    let mut seen = vec![false; n];
    for (node, _, _) in &rows {
        if *node >= n || std::mem::replace(&mut seen[*node], true) {
            return Err(GsanError::format(
                path,
                format!("labelled nodes must be exactly 0..{} once each (node {})", n, node),
            ));
        }
    }
    rows.sort_by_key(|r| r.0);
    Ok(if meta.multilabel {
        let data = rows.into_iter().flat_map(|r| r.1).collect();
        Labels::Multi(Tensor::new(vec![n, meta.n_classes], data)?)
    } else {
        Labels::Classes(rows.into_iter().map(|r| r.2).collect())
    })
}

fn load_graph(dir: &Path, name: &str, meta: &BundleMeta) -> Result<Graph> {
    let labels = load_labels(&dir.join(LABELS_FILE), meta)?;
    let n = labels.len();

    let mut features = Tensor::zeros(&[n, meta.n_features]);
    let f = meta.n_features;
    read_csv(&dir.join(FEATURES_FILE), &["node", "feat", "value"], |_, rec| {
        let node = parse_index(&rec[0], "node", n)?;
        let feat = parse_index(&rec[1], "feature", f)?;
        let value: Real = rec[2]
            .parse()
            .map_err(|_| format!("value {:?} is not a number", &rec[2]))?;
        if !value.is_finite() {
            return Err(format!("value {} is not finite", value));
        }
        features.data_mut()[node * f + feat] = value;
        Ok(())
    })?;

    let mut edges = Vec::new();
    let edges_path = dir.join(EDGES_FILE);
    read_csv(&edges_path, &["src", "dst"], |_, rec| {
        let u = parse_index(&rec[0], "node", n)?;
        let v = parse_index(&rec[1], "node", n)?;
        edges.push((u, v));
        Ok(())
    })?;

    let mut masks = vec![Split::None; n];
    let masks_path = dir.join(MASKS_FILE);
    if masks_path.exists() {
        read_csv(&masks_path, &["node", "split"], |_, rec| {
            let node = parse_index(&rec[0], "node", n)?;
            masks[node] = Split::parse(&rec[1]).ok_or_else(|| format!("unknown split {:?}", &rec[1]))?;
            Ok(())
        })?;
    }

    let (graph, stats) = Graph::from_edges(name, n, &edges, features, labels, masks)
        .map_err(|e| GsanError::format(&edges_path, e.to_string()))?;
    if stats.duplicates > 0 {
        log::warn!("{}: dropped {} duplicate edges", edges_path.display(), stats.duplicates);
    }
    if stats.input_self_loops > 0 {
        log::warn!("{}: ignored {} explicit self-loops", edges_path.display(), stats.input_self_loops);
    }
    Ok(graph)
}

/// Loads and symmetrizes a bundle directory.
pub fn load_bundle(path: impl AsRef<Path>) -> Result<DatasetBundle> {
    let dir = path.as_ref();
    let meta: BundleMeta = read_json(&dir.join(META_FILE))?;
    match meta.task {
        Task::Transductive => {
            // the name is not stored on disk, so keep it fixed for round trips
            let graph = load_graph(dir, TRANSDUCTIVE_NAME, &meta)?;
            Ok(DatasetBundle {
                meta,
                graphs: vec![graph],
                graph_splits: Vec::new(),
            })
        }
        Task::Inductive => {
            let meta_path = dir.join(META_FILE);
            let names = meta
                .graphs
                .clone()
                .ok_or_else(|| GsanError::format(&meta_path, "inductive bundle lists no graphs"))?;
            let splits_path = dir.join(SPLITS_FILE);
            let tags: HashMap<String, String> = read_json(&splits_path)?;
            let mut graphs = Vec::with_capacity(names.len());
            let mut graph_splits = Vec::with_capacity(names.len());
            for name in &names {
                let tag = tags
                    .get(name)
                    .ok_or_else(|| GsanError::format(&splits_path, format!("graph {:?} has no split", name)))?;
                let split = match Split::parse(tag) {
                    Some(s @ (Split::Train | Split::Val | Split::Test)) => s,
                    _ => {
                        return Err(GsanError::format(
                            &splits_path,
                            format!("graph {:?} has invalid split {:?}", name, tag),
                        ))
                    }
                };
                graphs.push(load_graph(&dir.join(name), name, &meta)?);
                graph_splits.push(split);
            }
            if let Some(extra) = tags.keys().find(|k| !names.contains(k)) {
                return Err(GsanError::format(&splits_path, format!("unknown graph {:?}", extra)));
            }
            Ok(DatasetBundle {
                meta,
                graphs,
                graph_splits,
            })
        }
    }
}

/// Formats a value with at most 9 significant digits in plain decimal notation.
pub fn format_real(v: Real) -> String {
    let rounded: f64 = format!("{:.8e}", v as f64).parse().unwrap_or(v as f64);
    if rounded == rounded.trunc() && rounded.abs() < 1e15 {
        format!("{}", rounded as i64)
    } else {
        format!("{}", rounded)
    }
}

fn write_file(path: PathBuf, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    File::create(&path)
        .map(BufWriter::new)
        .and_then(|mut w| {
            body(&mut w)?;
            w.flush()
        })
        .map_err(|e| GsanError::io(path, e))
}

fn save_graph(dir: &Path, graph: &Graph, multilabel: bool) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| GsanError::io(dir, e))?;

    write_file(dir.join(EDGES_FILE), |w| {
        writeln!(w, "src,dst")?;
        for u in 0..graph.num_nodes() {
            for &v in graph.neighbors(u).unwrap_or(&[]) {
                if u < v {
                    writeln!(w, "{},{}", u, v)?;
                }
            }
        }
        Ok(())
    })?;

    write_file(dir.join(FEATURES_FILE), |w| {
        writeln!(w, "node,feat,value")?;
        let f = graph.features();
        for r in 0..f.rows() {
            for (c, &v) in f.row(r).iter().enumerate() {
                if v != 0.0 {
                    writeln!(w, "{},{},{}", r, c, format_real(v))?;
                }
            }
        }
        Ok(())
    })?;

    write_file(dir.join(LABELS_FILE), |w| {
        match graph.labels() {
            Labels::Classes(c) => {
                writeln!(w, "node,class")?;
                for (i, c) in c.iter().enumerate() {
                    writeln!(w, "{},{}", i, c)?;
                }
            }
            Labels::Multi(t) => {
                debug_assert!(multilabel);
                writeln!(w, "node,bitvector")?;
                for i in 0..t.rows() {
                    let bits: String = t.row(i).iter().map(|&v| if v != 0.0 { '1' } else { '0' }).collect();
                    writeln!(w, "{},{}", i, bits)?;
                }
            }
        }
        Ok(())
    })?;

    if graph.masks().iter().any(|&s| s != Split::None) {
        write_file(dir.join(MASKS_FILE), |w| {
            writeln!(w, "node,split")?;
            for (i, s) in graph.masks().iter().enumerate() {
                if *s != Split::None {
                    writeln!(w, "{},{}", i, s)?;
                }
            }
            Ok(())
        })?;
    }
    Ok(())
}

/// Writes `bundle` in the canonical format under `path`.
pub fn save_bundle(bundle: &DatasetBundle, path: impl AsRef<Path>) -> Result<()> {
    let dir = path.as_ref();
    fs::create_dir_all(dir).map_err(|e| GsanError::io(dir, e))?;
    let meta_path = dir.join(META_FILE);
    let text = serde_json::to_string_pretty(&bundle.meta)?;
    fs::write(&meta_path, text + "\n").map_err(|e| GsanError::io(&meta_path, e))?;
    match bundle.meta.task {
        Task::Transductive => {
            let graph = bundle
                .graphs
                .first()
                .ok_or_else(|| GsanError::Invalid("bundle has no graph".into()))?;
            save_graph(dir, graph, bundle.meta.multilabel)
        }
        Task::Inductive => {
            let mut tags = BTreeMap::new();
            for (graph, split) in bundle.graphs.iter().zip(&bundle.graph_splits) {
                save_graph(&dir.join(graph.name()), graph, bundle.meta.multilabel)?;
                tags.insert(graph.name().to_string(), split.as_str());
            }
            let splits_path = dir.join(SPLITS_FILE);
            let text = serde_json::to_string_pretty(&tags)?;
            fs::write(&splits_path, text + "\n").map_err(|e| GsanError::io(&splits_path, e))
        }
    }
}
