use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use gsan_core::graph::SplitSpec;
use gsan_core::{GsanError, Result, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "gsan", version, about = "Train and evaluate graph attention networks with a selective state-space block")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Check a bundle directory and list every violation.
    Validate {
        dataset: PathBuf,
        /// Print violations as a JSON array.
        #[arg(long)]
        json: bool,
    },
    /// Train one model; writes report.json, metrics.csv and ckpt.
    Train(RunArgs),
    /// Score a checkpoint on one split of a bundle.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        /// Also write eval.json here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// One training run per depth; writes sweep.csv and sweep.svg.
    SweepDepth {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',', default_value = "2,4,8,16")]
        depths: Vec<usize>,
    },
    /// Independent runs with consecutive seeds; writes repeats.json.
    Repeats {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, short)]
        k: usize,
    },
    /// Export penultimate-layer node embeddings to embeddings.csv.
    Embed {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Graph to embed in a multi-graph bundle (default: first test graph).
        #[arg(long)]
        graph: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Config file plus per-field overrides. Precedence: flags, then file, then defaults.
#[derive(Args, Debug, Default)]
pub struct RunArgs {
    /// Flat JSON run config.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Args, Debug, Default, Serialize)]
pub struct Overrides {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<String>,
    #[arg(long = "out")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub layers: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub heads: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hidden: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expansion: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub state_size: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub conv_width: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dropout: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attn_dropout: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub leaky_slope: Option<f64>,
    /// concat | average
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_heads: Option<String>,
    /// gat | gatv2
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attention: Option<String>,
    /// elu | leaky_relu
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gal_activation: Option<String>,
    /// natural | degree | random
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scan_order: Option<String>,
    /// sequence | constant
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u_mode: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub constant_u_steps: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual: Option<bool>,
    /// auto | softmax | sigmoid
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub task_head: Option<String>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lr: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta1: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta2: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l1: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l2: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub smooth_l1: Option<f64>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub patience: Option<usize>,
    /// `standard`, or `random:SEED:TRAIN:VAL:TEST`
    #[arg(long, value_parser = parse_split)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split: Option<SplitSpec>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub row_normalize: Option<bool>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub divergence_factor: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub divergence_epochs: Option<usize>,
}

fn parse_split(s: &str) -> std::result::Result<SplitSpec, String> {
    if s == "standard" {
        return Ok(SplitSpec::Standard);
    }
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        ["random", seed, train, val, test] => {
            let num = |v: &str| v.parse::<usize>().map_err(|e| format!("{}: {}", v, e));
            Ok(SplitSpec::Random {
                seed: seed.parse().map_err(|e| format!("{}: {}", seed, e))?,
                train: num(train)?,
                val: num(val)?,
                test: num(test)?,
            })
        }
        _ => Err(format!("expected `standard` or `random:SEED:TRAIN:VAL:TEST`, got {:?}", s)),
    }
}

impl RunArgs {
    /// Defaults, overlaid with the config file, overlaid with flags.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut merged = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| GsanError::Invalid(format!("{}: {}", path.display(), e)))?;
                // parse once on its own so file errors name the file
                RunConfig::from_json(&text).map_err(|e| GsanError::Invalid(format!("{}: {}", path.display(), e)))?;
                serde_json::from_str::<serde_json::Map<String, serde_json::Value>>(&text)?
            }
            None => serde_json::Map::new(),
        };
        let flags = serde_json::to_value(&self.overrides)?;
        if let serde_json::Value::Object(flags) = flags {
            merged.extend(flags);
        }
        RunConfig::from_json(&serde_json::Value::Object(merged).to_string())
    }
}
