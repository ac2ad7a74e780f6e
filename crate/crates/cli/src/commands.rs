use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use gsan_core::graph::io::format_real;
use gsan_core::graph::{load_bundle, validate, DatasetBundle, Labels, Split};
use gsan_core::model::{load_checkpoint, predict, save_checkpoint, Checkpoint};
use gsan_core::train::{
    evaluate, prepare_bundle, run_repeats, sweep_csv, sweep_depth, train, RepeatSummary, SplitMetrics, SweepRow,
    TrainOutcome,
};
use gsan_core::{GsanError, Result, RunConfig};

use crate::svg::sweep_chart;

pub const REPORT_FILE: &str = "report.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const CKPT_FILE: &str = "ckpt";
pub const EMBEDDINGS_FILE: &str = "embeddings.csv";
pub const SWEEP_CSV: &str = "sweep.csv";
pub const SWEEP_SVG: &str = "sweep.svg";
pub const REPEATS_FILE: &str = "repeats.json";
pub const EVAL_FILE: &str = "eval.json";

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| GsanError::Invalid(format!("{}: {}", dir.display(), e)))?;
    }
    fs::write(path, contents).map_err(|e| GsanError::Invalid(format!("{}: {}", path.display(), e)))
}

fn pretty<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("artifact serializes");
    s.push('\n');
    s
}

fn dataset(cfg: &RunConfig) -> Result<DatasetBundle> {
    if cfg.dataset.is_empty() {
        return Err(GsanError::Invalid("no dataset given (use --dataset or the config file)".into()));
    }
    load_bundle(&cfg.dataset)
}

/// Returns the exit code: 0 for a clean bundle, 2 otherwise.
pub fn cmd_validate(dir: &Path, json: bool, out: &mut impl Write) -> Result<i32> {
    let bundle = load_bundle(dir)?;
    let violations = validate(&bundle);
    if json {
        let _ = writeln!(out, "{}", serde_json::to_string_pretty(&violations)?);
    } else if violations.is_empty() {
        let g = &bundle.graphs;
        let nodes: usize = g.iter().map(|g| g.num_nodes()).sum();
        let slots: usize = g.iter().map(|g| g.directed_edge_slots()).sum();
        let _ = writeln!(
            out,
            "ok: {} graph(s), {} nodes, {} directed edge slots, {} features, {} classes",
            g.len(),
            nodes,
            slots,
            bundle.meta.n_features,
            bundle.meta.n_classes
        );
    } else {
        for v in &violations {
            let _ = writeln!(out, "{}", v);
        }
    }
    Ok(if violations.is_empty() { 0 } else { 2 })
}

pub fn cmd_train(cfg: &RunConfig) -> Result<TrainOutcome> {
    let bundle = dataset(cfg)?;
    let out = train(&bundle, cfg)?;
    let dir = PathBuf::from(&cfg.out_dir);
    write(&dir.join(REPORT_FILE), &pretty(&out.report))?;
    write(&dir.join(METRICS_FILE), &out.report.metrics_csv())?;
    save_checkpoint(dir.join(CKPT_FILE), &out.report.config, &out.params, out.in_features, out.n_out)?;
    Ok(out)
}

/// Run config stored in a checkpoint.
pub fn checkpoint_config(ck: &Checkpoint) -> Result<RunConfig> {
    RunConfig::from_json(&ck.manifest.config.to_string())
}

fn check_shapes(ck: &Checkpoint, bundle: &DatasetBundle) -> Result<()> {
    let m = &ck.manifest;
    if m.in_features != bundle.meta.n_features || m.n_out != bundle.meta.n_classes {
        return Err(GsanError::Invalid(format!(
            "checkpoint expects {} features and {} outputs, dataset has {} and {}",
            m.in_features, m.n_out, bundle.meta.n_features, bundle.meta.n_classes
        )));
    }
    Ok(())
}

#[derive(Debug, Serialize, PartialEq)]
pub struct EvalReport {
    pub split: String,
    pub metric: String,
    pub metrics: SplitMetrics,
    pub seed: u64,
    pub config: serde_json::Value,
}

pub fn cmd_eval(ckpt: &Path, data: &Path, split: &str, out: Option<&Path>) -> Result<EvalReport> {
    let split = match Split::parse(split) {
        Some(s @ (Split::Train | Split::Val | Split::Test)) => s,
        _ => return Err(GsanError::Invalid(format!("split must be train, val or test, got {:?}", split))),
    };
    let ck = load_checkpoint(ckpt)?;
    let cfg = checkpoint_config(&ck)?;
    let bundle = load_bundle(data)?;
    check_shapes(&ck, &bundle)?;
    let prepared = prepare_bundle(&bundle, &cfg.train)?;
    let metrics = evaluate(&prepared, &ck.params, &ck.model, split)?;
    let head = ck.model.resolve_head(bundle.meta.multilabel)?;
    let report = EvalReport {
        split: split.to_string(),
        metric: if head == gsan_core::model::TaskHead::Sigmoid { "micro_f1" } else { "accuracy" }.into(),
        metrics,
        seed: cfg.seed,
        config: ck.manifest.config.clone(),
    };
    if let Some(dir) = out {
        write(&dir.join(EVAL_FILE), &pretty(&report))?;
    }
    Ok(report)
}

pub fn cmd_sweep(cfg: &RunConfig, depths: &[usize]) -> Result<Vec<SweepRow>> {
    let bundle = dataset(cfg)?;
    let rows = sweep_depth(&bundle, cfg, depths)?;
    let dir = PathBuf::from(&cfg.out_dir);
    write(&dir.join(SWEEP_CSV), &sweep_csv(&rows))?;
    let title = format!("{} by depth", Path::new(&cfg.dataset).file_name().and_then(|s| s.to_str()).unwrap_or("dataset"));
    write(&dir.join(SWEEP_SVG), &sweep_chart(&rows, &title, &cfg.to_value().to_string()))?;
    Ok(rows)
}

pub fn cmd_repeats(cfg: &RunConfig, k: usize) -> Result<RepeatSummary> {
    let bundle = dataset(cfg)?;
    let (summary, reports) = run_repeats(&bundle, cfg, k)?;
    let dir = PathBuf::from(&cfg.out_dir);
    for r in &reports {
        write(&dir.join(format!("runs/seed_{}", r.seed)).join(REPORT_FILE), &pretty(r))?;
    }
    write(&dir.join(REPEATS_FILE), &pretty(&summary))?;
    Ok(summary)
}

/// Writes `node,dim_0..dim_{F-1},label` and returns the row count.
pub fn cmd_embed(ckpt: &Path, data: &Path, graph: Option<&str>, out: Option<&Path>) -> Result<usize> {
    let ck = load_checkpoint(ckpt)?;
    let cfg = checkpoint_config(&ck)?;
    let bundle = load_bundle(data)?;
    check_shapes(&ck, &bundle)?;
    let prepared = prepare_bundle(&bundle, &cfg.train)?;
    let g = match (graph, prepared.is_inductive()) {
        (Some(name), _) => prepared
            .graph_by_name(name)
            .ok_or_else(|| GsanError::Invalid(format!("no graph named {:?}", name)))?,
        (None, false) => &prepared.graphs[0],
        (None, true) => {
            let first = *prepared
                .graphs_in(Split::Test)
                .first()
                .ok_or_else(|| GsanError::Invalid("bundle has no test graph; pass --graph".into()))?;
            &prepared.graphs[first]
        }
    };
    let (_, emb) = predict(g, &ck.params, &ck.model)?;
    let mut csv = String::from("node");
    for d in 0..emb.cols() {
        csv += &format!(",dim_{}", d);
    }
    csv += ",label\n";
    for i in 0..emb.rows() {
        csv += &i.to_string();
        for &v in emb.row(i) {
            csv.push(',');
            csv += &format_real(v);
        }
        let label = match g.labels() {
            Labels::Classes(c) => c[i].to_string(),
            Labels::Multi(t) => t.row(i).iter().map(|&v| if v != 0.0 { '1' } else { '0' }).collect(),
        };
        csv += &format!(",{}\n", label);
    }
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(&cfg.out_dir));
    write(&dir.join(EMBEDDINGS_FILE), &csv)?;
    Ok(emb.rows())
}
