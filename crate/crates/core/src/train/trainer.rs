//! Transductive and inductive training loops.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::early_stop::EarlyStop;
use super::loss::{masked_cross_entropy, multilabel_bce, penalty};
use super::metrics::{argmax, F1Counts};
use super::optim::{adam_step, OptimState};
use crate::config::{RunConfig, TrainConfig};
use crate::error::{GsanError, Result};
use crate::graph::{standard_splits, DatasetBundle, Graph, Labels, Split};
use crate::kernels::loss as fused;
use crate::model::{gsan_forward, params_on_tape, predict, GsanConfig, GsanParams, TaskHead};
use crate::tape::Tape;
use crate::tensor::{Real, Tensor};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitMetrics {
    pub loss: f64,
    /// Node accuracy, or per-label accuracy for multilabel heads.
    pub accuracy: f64,
    /// Micro-F1; equals accuracy for single-label heads.
    pub micro_f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_acc: f64,
    pub val_f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub task: String,
    /// `accuracy` or `micro_f1`: the metric used for early stopping and repeats.
    pub metric: String,
    pub seed: u64,
    pub n_params: usize,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stop_reason: String,
    pub val: SplitMetrics,
    pub test: SplitMetrics,
    pub wall_clock_secs: f64,
    pub config: serde_json::Value,
}

impl TrainReport {
    /// Test value of the headline metric.
    pub fn test_metric(&self) -> f64 {
        primary(&self.metric, &self.test)
    }

    pub fn val_metric(&self) -> f64 {
        primary(&self.metric, &self.val)
    }

    pub fn metrics_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss,val_acc,val_f1\n");
        for r in &self.epochs {
            out += &format!("{},{},{},{},{}\n", r.epoch, r.train_loss, r.val_loss, r.val_acc, r.val_f1);
        }
        out
    }
}

fn primary(metric: &str, m: &SplitMetrics) -> f64 {
    if metric == "micro_f1" {
        m.micro_f1
    } else {
        m.accuracy
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Train,
    Validate,
    Test,
}

/// One graph touched by the inductive loop.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GraphAccess {
    /// `None` for the final evaluation.
    pub epoch: Option<usize>,
    pub phase: Phase,
    pub graph: usize,
}

pub struct TrainOutcome {
    pub report: TrainReport,
    /// Restored best parameters.
    pub params: GsanParams<Tensor>,
    pub in_features: usize,
    pub n_out: usize,
    pub access_log: Vec<GraphAccess>,
}

/// Applies the split and feature preprocessing named in `cfg`.
pub fn prepare_bundle(bundle: &DatasetBundle, cfg: &TrainConfig) -> Result<DatasetBundle> {
    let mut out = standard_splits(bundle, &cfg.split)?;
    if cfg.row_normalize {
        for g in &mut out.graphs {
            *g = g.row_normalized();
        }
    }
    Ok(out)
}

/// Accumulates loss and metric counts over several graphs.
#[derive(Clone, Copy, Debug, Default)]
struct EvalStats {
    loss_sum: f64,
    loss_terms: usize,
    correct: usize,
    rows: usize,
    f1: F1Counts,
}

impl EvalStats {
    fn add(&mut self, logits: &Tensor, g: &Graph, rows: &[usize]) {
        if rows.is_empty() {
            return;
        }
        match g.labels() {
            Labels::Classes(classes) => {
                let (mean, _) = fused::cross_entropy(logits.data(), logits.cols(), classes, rows);
                self.loss_sum += mean as f64 * rows.len() as f64;
                self.loss_terms += rows.len();
                self.correct += rows.iter().filter(|&&r| argmax(logits.row(r)) == classes[r]).count();
                self.rows += rows.len();
            }
            Labels::Multi(targets) => {
                let (mean, _) = fused::binary_cross_entropy(logits.data(), logits.cols(), targets.data(), rows);
                let terms = rows.len() * logits.cols();
                self.loss_sum += mean as f64 * terms as f64;
                self.loss_terms += terms;
                self.f1 = self.f1.merge(F1Counts::count(logits, targets, rows, 0.5));
            }
        }
    }

    fn finish(&self, head: TaskHead) -> SplitMetrics {
        let loss = if self.loss_terms == 0 { 0.0 } else { self.loss_sum / self.loss_terms as f64 };
        match head {
            TaskHead::Sigmoid => SplitMetrics {
                loss,
                accuracy: self.f1.label_accuracy(),
                micro_f1: self.f1.f1(),
            },
            _ => {
                let acc = if self.rows == 0 { 0.0 } else { self.correct as f64 / self.rows as f64 };
                SplitMetrics {
                    loss,
                    accuracy: acc,
                    micro_f1: acc,
                }
            }
        }
    }
}

/// Metrics of `params` on one split of a prepared bundle.
pub fn evaluate(
    bundle: &DatasetBundle,
    params: &GsanParams<Tensor>,
    model: &GsanConfig,
    split: Split,
) -> Result<SplitMetrics> {
    let head = model.resolve_head(bundle.meta.multilabel)?;
    let mut stats = EvalStats::default();
    if bundle.is_inductive() {
        for gi in bundle.graphs_in(split) {
            let g = &bundle.graphs[gi];
            let (logits, _) = predict(g, params, model)?;
            stats.add(&logits, g, &g.all_nodes());
        }
    } else {
        let g = &bundle.graphs[0];
        let (logits, _) = predict(g, params, model)?;
        stats.add(&logits, g, &g.nodes_in(split));
    }
    Ok(stats.finish(head))
}

/// Aborts on non-finite losses or a sustained blow-up relative to the first epoch.
struct DivergenceGuard {
    factor: f64,
    limit: usize,
    initial: Option<f64>,
    streak: usize,
}

impl DivergenceGuard {
    fn check(&mut self, epoch: usize, loss: f64) -> Result<()> {
        if !loss.is_finite() {
            return Err(GsanError::Diverged {
                epoch,
                reason: format!("loss is {}", loss),
            });
        }
        let initial = *self.initial.get_or_insert(loss);
        if loss > self.factor * initial {
            self.streak += 1;
            if self.streak >= self.limit {
                return Err(GsanError::Diverged {
                    epoch,
                    reason: format!(
                        "loss {} above {}x its initial value {} for {} epochs",
                        loss, self.factor, initial, self.streak
                    ),
                });
            }
        } else {
            self.streak = 0;
        }
        Ok(())
    }
}

fn numerical_to_divergence(epoch: usize, e: GsanError) -> GsanError {
    if e.is_numerical() && !matches!(e, GsanError::Diverged { .. }) {
        GsanError::Diverged {
            epoch,
            reason: e.to_string(),
        }
    } else {
        e
    }
}

/// One forward/backward pass over `rows` of `g` followed by an Adam step.
fn train_step<R: Rng + ?Sized>(
    g: &Graph,
    rows: &[usize],
    params: &mut GsanParams<Tensor>,
    opt: &mut OptimState,
    cfg: &RunConfig,
    rng: &mut R,
) -> Result<f64> {
    let mut tape = Tape::new();
    let pv = params_on_tape(&mut tape, params)?;
    let fv = tape.constant(g.features().clone())?;
    let out = gsan_forward(&mut tape, g, fv, &pv, &cfg.model, rng, true)?;
    let data = match g.labels() {
        Labels::Classes(c) => masked_cross_entropy(&mut tape, out.logits, c, rows)?,
        Labels::Multi(t) => multilabel_bce(&mut tape, out.logits, t, rows)?,
    };
    let loss = match penalty(&mut tape, &pv, &cfg.optim.penalty())? {
        Some(p) => tape.add(data, p)?,
        None => data,
    };
    let value = tape.value(loss).item() as f64;
    let mut grads = tape.backward(loss)?;
    let flat: Vec<Option<Tensor>> = pv.entries().iter().map(|(_, _, &v)| grads.remove(v)).collect();
    adam_step(params, &flat, opt, &cfg.optim)?;
    params.project_decay();
    Ok(value)
}

struct Run {
    params: GsanParams<Tensor>,
    opt: OptimState,
    stop: EarlyStop,
    guard: DivergenceGuard,
    epochs: Vec<EpochRecord>,
    rng: ChaCha8Rng,
    head: TaskHead,
    started: Instant,
}

impl Run {
    fn new(cfg: &RunConfig, seed: u64, in_features: usize, n_out: usize, multilabel: bool) -> Result<Run> {
        cfg.check()?;
        let head = cfg.model.resolve_head(multilabel)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = GsanParams::init(&cfg.model, in_features, n_out, &mut rng)?;
        Ok(Run {
            opt: OptimState::new(&params),
            params,
            stop: EarlyStop::new(cfg.train.patience),
            guard: DivergenceGuard {
                factor: cfg.train.divergence_factor,
                limit: cfg.train.divergence_epochs,
                initial: None,
                streak: 0,
            },
            epochs: Vec::new(),
            rng,
            head,
            started: Instant::now(),
        })
    }

    fn metric_name(&self) -> &'static str {
        if self.head == TaskHead::Sigmoid {
            "micro_f1"
        } else {
            "accuracy"
        }
    }

    /// Records an epoch; returns true when training should stop.
    fn end_epoch(&mut self, epoch: usize, train_loss: f64, val: &SplitMetrics) -> Result<bool> {
        self.guard.check(epoch, train_loss)?;
        self.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss: val.loss,
            val_acc: val.accuracy,
            val_f1: val.micro_f1,
        });
        let metric = primary(self.metric_name(), val);
        self.stop.observe(epoch, metric, val.loss, &self.params);
        Ok(self.stop.should_stop())
    }

    fn finish(
        self,
        task: &str,
        cfg: &RunConfig,
        seed: u64,
        stopped: bool,
        test: impl FnOnce(&GsanParams<Tensor>) -> Result<SplitMetrics>,
        val: impl FnOnce(&GsanParams<Tensor>) -> Result<SplitMetrics>,
    ) -> Result<(TrainReport, GsanParams<Tensor>)> {
        let best_epoch = self.stop.best_epoch.expect("at least one epoch ran");
        let params = self.stop.best_params.expect("best params kept with best epoch");
        let val = val(&params)?;
        let test = test(&params)?;
        let mut config = cfg.to_value();
        config["seed"] = seed.into();
        let report = TrainReport {
            task: task.into(),
            metric: primary_name(self.head).into(),
            seed,
            n_params: params.num_scalars(),
            epochs: self.epochs,
            best_epoch,
            stop_reason: if stopped { "patience" } else { "max_epochs" }.into(),
            val,
            test,
            wall_clock_secs: self.started.elapsed().as_secs_f64(),
            config,
        };
        Ok((report, params))
    }
}

fn primary_name(head: TaskHead) -> &'static str {
    if head == TaskHead::Sigmoid {
        "micro_f1"
    } else {
        "accuracy"
    }
}

/// Full-graph training on one graph with node masks.
pub fn train_transductive(bundle: &DatasetBundle, cfg: &RunConfig, seed: u64) -> Result<TrainOutcome> {
    if bundle.is_inductive() || bundle.graphs.len() != 1 {
        return Err(GsanError::Invalid("transductive training needs a single-graph bundle".into()));
    }
    let prepared = prepare_bundle(bundle, &cfg.train)?;
    let g = &prepared.graphs[0];
    let train_rows = g.nodes_in(Split::Train);
    let val_rows = g.nodes_in(Split::Val);
    if train_rows.is_empty() || val_rows.is_empty() {
        return Err(GsanError::Invalid(format!(
            "{} training and {} validation nodes; both must be non-empty",
            train_rows.len(),
            val_rows.len()
        )));
    }
    let in_features = g.num_features();
    let n_out = prepared.meta.n_classes;
    let mut run = Run::new(cfg, seed, in_features, n_out, prepared.meta.multilabel)?;
    let mut stopped = false;
    for epoch in 0..cfg.train.max_epochs {
        let train_loss = train_step(g, &train_rows, &mut run.params, &mut run.opt, cfg, &mut run.rng)
            .map_err(|e| numerical_to_divergence(epoch, e))?;
        let (logits, _) = predict(g, &run.params, &cfg.model).map_err(|e| numerical_to_divergence(epoch, e))?;
        let mut stats = EvalStats::default();
        stats.add(&logits, g, &val_rows);
        if run.end_epoch(epoch, train_loss, &stats.finish(run.head))? {
            stopped = true;
            break;
        }
    }
    let (report, params) = run.finish(
        "transductive",
        cfg,
        seed,
        stopped,
        |p| evaluate(&prepared, p, &cfg.model, Split::Test),
        |p| evaluate(&prepared, p, &cfg.model, Split::Val),
    )?;
    Ok(TrainOutcome {
        report,
        params,
        in_features,
        n_out,
        access_log: Vec::new(),
    })
}

/// One optimizer step per training graph, graph order reshuffled every epoch.
/// Test graphs are read only once, after the best parameters are restored.
pub fn train_inductive(bundle: &DatasetBundle, cfg: &RunConfig, seed: u64) -> Result<TrainOutcome> {
    if !bundle.is_inductive() {
        return Err(GsanError::Invalid("inductive training needs a multi-graph bundle".into()));
    }
    let prepared = prepare_bundle(bundle, &cfg.train)?;
    let train_ids = prepared.graphs_in(Split::Train);
    let val_ids = prepared.graphs_in(Split::Val);
    let test_ids = prepared.graphs_in(Split::Test);
    if train_ids.is_empty() || val_ids.is_empty() {
        return Err(GsanError::Invalid("inductive training needs train and validation graphs".into()));
    }
    let in_features = prepared.meta.n_features;
    let n_out = prepared.meta.n_classes;
    let mut run = Run::new(cfg, seed, in_features, n_out, prepared.meta.multilabel)?;
    let mut log = Vec::new();
    let mut stopped = false;
    for epoch in 0..cfg.train.max_epochs {
        let mut order = train_ids.clone();
        order.shuffle(&mut run.rng);
        let mut loss_sum = 0.0;
        for &gi in &order {
            log.push(GraphAccess {
                epoch: Some(epoch),
                phase: Phase::Train,
                graph: gi,
            });
            let g = &prepared.graphs[gi];
            loss_sum += train_step(g, &g.all_nodes(), &mut run.params, &mut run.opt, cfg, &mut run.rng)
                .map_err(|e| numerical_to_divergence(epoch, e))?;
        }
        let mut stats = EvalStats::default();
        for &gi in &val_ids {
            log.push(GraphAccess {
                epoch: Some(epoch),
                phase: Phase::Validate,
                graph: gi,
            });
            let g = &prepared.graphs[gi];
            let (logits, _) = predict(g, &run.params, &cfg.model).map_err(|e| numerical_to_divergence(epoch, e))?;
            stats.add(&logits, g, &g.all_nodes());
        }
        let train_loss = loss_sum / order.len() as f64;
        if run.end_epoch(epoch, train_loss, &stats.finish(run.head))? {
            stopped = true;
            break;
        }
    }
    for &gi in &test_ids {
        log.push(GraphAccess {
            epoch: None,
            phase: Phase::Test,
            graph: gi,
        });
    }
    let (report, params) = run.finish(
        "inductive",
        cfg,
        seed,
        stopped,
        |p| evaluate(&prepared, p, &cfg.model, Split::Test),
        |p| evaluate(&prepared, p, &cfg.model, Split::Val),
    )?;
    Ok(TrainOutcome {
        report,
        params,
        in_features,
        n_out,
        access_log: log,
    })
}

/// Dispatches on the bundle's task using `cfg.seed`.
pub fn train(bundle: &DatasetBundle, cfg: &RunConfig) -> Result<TrainOutcome> {
    if bundle.is_inductive() {
        train_inductive(bundle, cfg, cfg.seed)
    } else {
        train_transductive(bundle, cfg, cfg.seed)
    }
}

/// Sum of squared weight-matrix entries, used by regularization checks.
pub fn weight_norm_sq(params: &GsanParams<Tensor>) -> Real {
    params
        .entries()
        .iter()
        .filter(|(_, k, _)| *k == crate::model::ParamKind::Weight)
        .map(|(_, _, t)| t.sum_squares())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn guard_trips_on_sustained_blowup() {
        let mut g = DivergenceGuard {
            factor: 10.0,
            limit: 3,
            initial: None,
            streak: 0,
        };
        g.check(0, 1.0).unwrap();
        g.check(1, 11.0).unwrap();
        g.check(2, 12.0).unwrap();
        g.check(3, 2.0).unwrap();
        g.check(4, 20.0).unwrap();
        g.check(5, 20.0).unwrap();
        assert!(matches!(g.check(6, 20.0), Err(GsanError::Diverged { epoch: 6, .. })));
        assert!(g.check(7, f64::NAN).is_err());
    }

    #[test]
    fn csv_header_and_rows() {
        let r = TrainReport {
            task: "transductive".into(),
            metric: "accuracy".into(),
            seed: 0,
            n_params: 1,
            epochs: vec![EpochRecord {
                epoch: 0,
                train_loss: 1.5,
                val_loss: 1.25,
                val_acc: 0.5,
                val_f1: 0.5,
            }],
            best_epoch: 0,
            stop_reason: "max_epochs".into(),
            val: SplitMetrics::default(),
            test: SplitMetrics::default(),
            wall_clock_secs: 0.0,
            config: serde_json::Value::Null,
        };
        assert_eq!(r.metrics_csv(), "epoch,train_loss,val_loss,val_acc,val_f1\n0,1.5,1.25,0.5,0.5\n");
    }
}
