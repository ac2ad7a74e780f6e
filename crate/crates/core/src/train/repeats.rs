//! Multi-seed repeats and depth sweeps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::trainer::{train, TrainReport};
use crate::config::RunConfig;
use crate::error::{GsanError, Result};
use crate::graph::DatasetBundle;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepeatSummary {
    pub k: usize,
    pub metric: String,
    pub seeds: Vec<u64>,
    /// Test metric per seed, in seed order.
    pub values: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation; 0 for a single run.
    pub std: f64,
    pub config: serde_json::Value,
}

/// Mean and sample (n-1) standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Trains `k` independent runs with seeds `cfg.seed .. cfg.seed + k`, in
/// parallel on the current rayon pool. Results come back in seed order.
pub fn run_repeats(bundle: &DatasetBundle, cfg: &RunConfig, k: usize) -> Result<(RepeatSummary, Vec<TrainReport>)> {
    if k == 0 {
        return Err(GsanError::Invalid("repeats needs k >= 1".into()));
    }
    let seeds: Vec<u64> = (0..k as u64).map(|i| cfg.seed + i).collect();
    let reports = seeds
        .par_iter()
        .map(|&seed| {
            let mut c = cfg.clone();
            c.seed = seed;
            train(bundle, &c).map(|o| o.report)
        })
        .collect::<Result<Vec<_>>>()?;
    let values: Vec<f64> = reports.iter().map(TrainReport::test_metric).collect();
    let (mean, std) = mean_std(&values);
    let summary = RepeatSummary {
        k,
        metric: reports[0].metric.clone(),
        seeds,
        values,
        mean,
        std,
        config: cfg.to_value(),
    };
    Ok((summary, reports))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub depth: usize,
    /// Headline metric (accuracy or micro-F1) at the restored best epoch.
    pub val_acc: f64,
    pub test_acc: f64,
}

/// Trains one model per depth, one after another, with everything else held fixed.
pub fn sweep_depth(bundle: &DatasetBundle, cfg: &RunConfig, depths: &[usize]) -> Result<Vec<SweepRow>> {
    if depths.is_empty() || depths.contains(&0) {
        return Err(GsanError::Invalid(format!("depths must be positive, got {:?}", depths)));
    }
    depths
        .iter()
        .map(|&depth| {
            let mut c = cfg.clone();
            c.model.layers = depth;
            let r = train(bundle, &c)?.report;
            Ok(SweepRow {
                depth,
                val_acc: r.val_metric(),
                test_acc: r.test_metric(),
            })
        })
        .collect()
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("depth,val_acc,test_acc\n");
    for r in rows {
        out += &format!("{},{},{}\n", r.depth, r.val_acc, r.test_acc);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_std() {
        let (m, s) = mean_std(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]);
        assert_eq!(m, 5.0);
        assert!((s - (32.0f64 / 7.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_std(&[3.0]), (3.0, 0.0));
    }
}
