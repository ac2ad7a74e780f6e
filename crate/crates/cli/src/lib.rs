//! Command-line front end: validate, train, eval, sweep-depth, repeats, embed.
//!
//! Exit codes: 0 success, 2 input or validation error, 3 training divergence.

pub mod args;
pub mod commands;
pub mod svg;

use std::io::Write;

use gsan_core::GsanError;

pub use args::{Cli, Command, Overrides, RunArgs};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

pub fn exit_code(e: &GsanError) -> i32 {
    match e {
        GsanError::Diverged { .. } => EXIT_DIVERGED,
        _ => EXIT_INPUT,
    }
}

/// Runs one command, printing results to `out` and errors to `err`.
pub fn run(cli: Cli, out: &mut impl Write, err: &mut impl Write) -> i32 {
    match dispatch(cli, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e);
            exit_code(&e)
        }
    }
}

fn dispatch(cli: Cli, out: &mut impl Write) -> gsan_core::Result<i32> {
    match cli.command {
        Command::Validate { dataset, json } => commands::cmd_validate(&dataset, json, out),
        Command::Train(run) => {
            let cfg = run.resolve()?;
            let o = commands::cmd_train(&cfg)?;
            let r = &o.report;
            let _ = writeln!(
                out,
                "{} epochs ({}), best epoch {}: val {} {:.4}, test {} {:.4}; artifacts in {}",
                r.epochs.len(),
                r.stop_reason,
                r.best_epoch,
                r.metric,
                r.val_metric(),
                r.metric,
                r.test_metric(),
                cfg.out_dir
            );
            Ok(EXIT_OK)
        }
        Command::Eval { ckpt, dataset, split, out: dir } => {
            let report = commands::cmd_eval(&ckpt, &dataset, &split, dir.as_deref())?;
            let _ = writeln!(out, "{}", serde_json::to_string_pretty(&report)?);
            Ok(EXIT_OK)
        }
        Command::SweepDepth { run, depths } => {
            let cfg = run.resolve()?;
            let rows = commands::cmd_sweep(&cfg, &depths)?;
            let _ = write!(out, "{}", gsan_core::train::sweep_csv(&rows));
            Ok(EXIT_OK)
        }
        Command::Repeats { run, k } => {
            let cfg = run.resolve()?;
            let s = commands::cmd_repeats(&cfg, k)?;
            let _ = writeln!(out, "{} over {} runs: {:.4} ± {:.4}", s.metric, s.k, s.mean, s.std);
            Ok(EXIT_OK)
        }
        Command::Embed { ckpt, dataset, graph, out: dir } => {
            let rows = commands::cmd_embed(&ckpt, &dataset, graph.as_deref(), dir.as_deref())?;
            let _ = writeln!(out, "wrote {} embeddings", rows);
            Ok(EXIT_OK)
        }
    }
}
