//! Command-line front end: `train`, `evaluate`, `predict` and `bench`, each
//! driven by a TOML run config.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::{
    cmd_bench, cmd_evaluate, cmd_predict, cmd_train, create_run_dir, forecast_tail, BenchOutcome,
    EvalRecord, ForecastRow, TrainOutcome, TrainSummary,
};
pub use config::{DataConfig, DataSource, LoadedData, ModelSection, RunConfig};

use crate::data::Split;
use crate::error::Result;

#[derive(Debug, Parser)]
#[command(
    name = "twinformer",
    version,
    about = "Train, evaluate and benchmark the forecaster"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the config's output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write checkpoint, report and loss curve.
    Train(Common),
    /// Score a checkpoint on one split.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// `model.ckpt` written by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "test", value_parser = ["train", "val", "test"])]
        split: String,
    },
    /// Forecast the steps after the last window of a CSV file.
    Predict {
        #[command(flatten)]
        common: Common,
        /// `model.ckpt` written by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
        /// CSV with at least seq_len rows; defaults to the config's data.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Time the forward pass at three input lengths.
    Bench(Common),
}

impl Common {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::load(&self.config)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        Ok(cfg)
    }
}

fn fmt_r2(r2: Option<f64>) -> String {
    r2.map_or_else(
        || "undefined (constant targets)".into(),
        |v| format!("{v:.6}"),
    )
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(common) => {
            let out = cmd_train(&common.load()?)?;
            let r = &out.summary.report;
            println!("run directory: {}", out.run_dir.display());
            println!(
                "stopped after epoch {} (best {}, val loss {:.6e})",
                r.stopped_epoch, r.best_epoch, r.best_val_loss
            );
            println!("test MAE  {:.6}", r.test.mae);
            println!("test RMSE {:.6}", r.test.rmse);
            println!("test R²   {}", fmt_r2(r.test.r2));
            println!(
                "persistence test MAE {:.6}",
                out.summary.persistence_test.mae
            );
        }
        Command::Evaluate {
            common,
            checkpoint,
            split,
        } => {
            let split: Split = split.parse()?;
            let (dir, rec) = cmd_evaluate(&common.load()?, &checkpoint, split)?;
            println!("run directory: {}", dir.display());
            println!("{split} MAE  {:.6}", rec.metrics.mae);
            println!("{split} RMSE {:.6}", rec.metrics.rmse);
            println!("{split} R²   {}", fmt_r2(rec.metrics.r2));
        }
        Command::Predict {
            common,
            checkpoint,
            input,
        } => {
            let (dir, rows) = cmd_predict(&common.load()?, &checkpoint, input.as_deref())?;
            println!("run directory: {}", dir.display());
            for r in rows {
                println!("{},{}", r.step, r.value);
            }
        }
        Command::Bench(common) => {
            let out = cmd_bench(&common.load()?)?;
            println!("run directory: {}", out.run_dir.display());
            for r in &out.rows {
                println!("L = {:>6}: median {:.6} s", r.seq_len, r.median_seconds);
            }
            for (w, ratio) in out.rows.windows(2).zip(&out.ratios) {
                println!("t({})/t({}) = {ratio:.3}", w[1].seq_len, w[0].seq_len);
            }
        }
    }
    Ok(())
}

/// Parses `args`, runs the command and returns the process exit code:
/// 0 success, 1 usage or config error, 2 data error, 3 numeric failure.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
