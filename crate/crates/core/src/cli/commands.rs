use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::{DataSource, LoadedData, RunConfig};
use crate::bench::{doubling_ratios, run_bench, BenchRow};
use crate::checkpoint::{Checkpoint, DataBinding};
use crate::data::{load_csv, prepare_dataset, prepare_dataset_with_scaler, RawSeries, Split};
use crate::error::{Error, Result};
use crate::model::TwinFormer;
use crate::numerics::Tensor;
use crate::training::{evaluate, persistence_baseline, train, Metrics, TrainReport};

/// Creates `<out>/<command>-<UTC timestamp>-seed<seed>`, appending `-2`,
/// `-3`, … if that name is taken.
pub fn create_run_dir(out: &Path, command: &str, seed: u64) -> Result<PathBuf> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ");
    let base = format!("{command}-{stamp}-seed{seed}");
    for n in 1.. {
        let name = if n == 1 {
            base.clone()
        } else {
            format!("{base}-{n}")
        };
        let dir = out.join(name);
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(Error::io(&dir, e)),
        }
    }
    unreachable!("unbounded suffix search")
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Data(e.to_string()))?;
    text.push('\n');
    write(path, text)
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    for row in rows {
        w.serialize(row)
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Contents of `train_report.json`.
#[derive(Clone, Debug, Serialize)]
pub struct TrainSummary {
    #[serde(flatten)]
    pub report: TrainReport,
    /// Repeat-last-value forecaster on the same test windows.
    pub persistence_test: Metrics,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub run_dir: PathBuf,
    pub summary: TrainSummary,
}

/// Trains from scratch and writes `model.ckpt`, `train_report.json`,
/// `loss_curve.csv` and the resolved `config.toml`.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainOutcome> {
    let LoadedData {
        series,
        target_column,
        target_index,
    } = cfg.load_data()?;
    let model_cfg = cfg.model.resolve(series.n_features(), target_index)?;
    let dataset = prepare_dataset(
        &series,
        model_cfg.seq_len,
        model_cfg.horizon,
        target_index,
        cfg.fractions()?,
    )?;
    let mut model = TwinFormer::new(model_cfg, cfg.seed)?;
    let run_dir = create_run_dir(&cfg.out_dir, "train", cfg.seed)?;
    write(&run_dir.join("config.toml"), cfg.to_toml()?)?;
    log::info!(
        "training on {} windows ({} val, {} test), {} parameters",
        dataset.train.len(),
        dataset.val.len(),
        dataset.test.len(),
        model.params.num_parameters()
    );

    let report = train(&mut model, &dataset, &cfg.train_config())?;
    let persistence_test = persistence_baseline(&dataset.test, &dataset.scaler, target_index)?;
    let checkpoint = Checkpoint {
        model,
        data: Some(DataBinding {
            columns: series.columns.clone(),
            target_column,
            scaler: dataset.scaler.clone(),
        }),
    };
    checkpoint.save(&run_dir.join("model.ckpt"))?;
    write(&run_dir.join("loss_curve.csv"), report.loss_curve_csv())?;
    let summary = TrainSummary {
        report,
        persistence_test,
    };
    write_json(&run_dir.join("train_report.json"), &summary)?;
    Ok(TrainOutcome { run_dir, summary })
}

/// Checks that a checkpoint was trained on data shaped like `data`.
fn check_compatible(cfg: &RunConfig, data: &LoadedData, ck: &Checkpoint) -> Result<DataBinding> {
    let binding = ck.data.clone().ok_or_else(|| {
        Error::Checkpoint("checkpoint carries no data binding (columns and scaler)".into())
    })?;
    if data.series.columns != binding.columns {
        return Err(Error::Config(format!(
            "config/checkpoint mismatch in data.feature_columns: config gives {:?}, checkpoint has {:?}",
            data.series.columns, binding.columns
        )));
    }
    if data.target_column != binding.target_column {
        return Err(Error::Config(format!(
            "config/checkpoint mismatch in data.target_column: config gives '{}', checkpoint has '{}'",
            data.target_column, binding.target_column
        )));
    }
    let wanted = cfg
        .model
        .resolve(data.series.n_features(), data.target_index)?;
    if let Some((field, ours, theirs)) = wanted.first_difference(&ck.model.config) {
        return Err(Error::Config(format!(
            "config/checkpoint mismatch in model.{field}: config gives {ours}, checkpoint has {theirs}"
        )));
    }
    Ok(binding)
}

/// Contents of `metrics_<split>.json`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalRecord {
    pub split: Split,
    #[serde(flatten)]
    pub metrics: Metrics,
}

/// Scores a checkpoint on one split and writes `metrics_<split>.json`.
pub fn cmd_evaluate(
    cfg: &RunConfig,
    checkpoint: &Path,
    split: Split,
) -> Result<(PathBuf, EvalRecord)> {
    let ck = Checkpoint::load(checkpoint)?;
    let data = cfg.load_data()?;
    let binding = check_compatible(cfg, &data, &ck)?;
    let mc = ck.model.config;
    let dataset = prepare_dataset_with_scaler(
        &data.series,
        binding.scaler,
        mc.seq_len,
        mc.horizon,
        mc.target_index,
        cfg.fractions()?,
    )?;
    let metrics = evaluate(
        &ck.model,
        dataset.split(split),
        &dataset.scaler,
        mc.target_index,
    )?;
    let record = EvalRecord { split, metrics };
    let run_dir = create_run_dir(&cfg.out_dir, "evaluate", cfg.seed)?;
    write_json(&run_dir.join(format!("metrics_{split}.json")), &record)?;
    Ok((run_dir, record))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ForecastRow {
    pub step: usize,
    pub value: f64,
}

/// Forecasts the `H` steps after the last `L` rows of `input` (or of the
/// configured data source) and writes `forecast.csv` in original units.
pub fn cmd_predict(
    cfg: &RunConfig,
    checkpoint: &Path,
    input: Option<&Path>,
) -> Result<(PathBuf, Vec<ForecastRow>)> {
    let ck = Checkpoint::load(checkpoint)?;
    let series: RawSeries = match input {
        Some(path) => {
            let binding = ck.data.as_ref().ok_or_else(|| {
                Error::Checkpoint("checkpoint carries no data binding (columns and scaler)".into())
            })?;
            load_csv(path, &binding.columns)?
        }
        None => {
            let data = cfg.load_data()?;
            check_compatible(cfg, &data, &ck)?;
            data.series
        }
    };
    let forecast = forecast_tail(&ck, &series)?;
    let rows: Vec<ForecastRow> = forecast
        .into_iter()
        .enumerate()
        .map(|(i, value)| ForecastRow { step: i + 1, value })
        .collect();
    let run_dir = create_run_dir(&cfg.out_dir, "predict", cfg.seed)?;
    write_csv(&run_dir.join("forecast.csv"), &rows)?;
    Ok((run_dir, rows))
}

/// Forecast in original units from the last `L` rows of a raw series.
pub fn forecast_tail(ck: &Checkpoint, series: &RawSeries) -> Result<Vec<f64>> {
    let binding = ck.data.as_ref().ok_or_else(|| {
        Error::Checkpoint("checkpoint carries no data binding (columns and scaler)".into())
    })?;
    let mc = &ck.model.config;
    if series.len() < mc.seq_len {
        return Err(Error::Data(format!(
            "input has {} rows; the model needs at least seq_len = {} rows",
            series.len(),
            mc.seq_len
        )));
    }
    let scaled = binding.scaler.transform(&series.tail(mc.seq_len)?)?;
    let window = Tensor::new([mc.seq_len, mc.n_features], scaled.values)?;
    let y = ck.model.predict(&window)?;
    Ok(y.data()
        .iter()
        .map(|&v| binding.scaler.unscale_value(mc.target_index, v))
        .collect())
}

#[derive(Clone, Debug)]
pub struct BenchOutcome {
    pub run_dir: PathBuf,
    pub rows: Vec<BenchRow>,
    pub ratios: Vec<f64>,
}

/// Times the forward pass at `L`, `2L` and `4L` and writes `bench.csv`.
pub fn cmd_bench(cfg: &RunConfig) -> Result<BenchOutcome> {
    let n_features = match cfg.data.source {
        DataSource::Synthetic => 1,
        DataSource::Csv => cfg.load_data()?.series.n_features(),
    };
    // seq_len is replaced per bench length; run_bench validates each.
    let model = cfg.model.resolve(n_features, 0)?;
    let rows = run_bench(&model, &cfg.bench, cfg.seed)?;
    let ratios = doubling_ratios(&rows);
    let run_dir = create_run_dir(&cfg.out_dir, "bench", cfg.seed)?;
    write_csv(&run_dir.join("bench.csv"), &rows)?;
    Ok(BenchOutcome {
        run_dir,
        rows,
        ratios,
    })
}
