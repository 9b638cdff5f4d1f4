use serde::{Deserialize, Serialize};

use crate::data::{MinMaxScaler, Window};
use crate::error::{Error, Result};
use crate::model::TwinFormer;

/// Point-forecast accuracy pooled over every horizon step of every window.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mae: f64,
    pub rmse: f64,
    /// `None` (JSON `null`) when the targets have zero variance.
    pub r2: Option<f64>,
    pub count: usize,
}

pub fn compute_metrics(pred: &[f64], actual: &[f64]) -> Result<Metrics> {
    if pred.len() != actual.len() {
        return Err(Error::shape(
            "metrics",
            format!("{} predictions vs {} targets", pred.len(), actual.len()),
        ));
    }
    if pred.is_empty() {
        return Err(Error::Data("cannot compute metrics on zero values".into()));
    }
    let n = pred.len() as f64;
    let mut abs = 0.0;
    let mut sq = 0.0;
    for (p, y) in pred.iter().zip(actual) {
        let e = p - y;
        abs += e.abs();
        sq += e * e;
    }
    let mean = actual.iter().sum::<f64>() / n;
    let total: f64 = actual.iter().map(|y| (y - mean) * (y - mean)).sum();
    let r2 = if total > 0.0 {
        Some(1.0 - sq / total)
    } else {
        None
    };
    Ok(Metrics {
        mae: abs / n,
        rmse: (sq / n).sqrt(),
        r2,
        count: pred.len(),
    })
}

/// Forecasts every window and scores it in original units.
pub fn evaluate(
    model: &TwinFormer,
    windows: &[Window],
    scaler: &MinMaxScaler,
    target_index: usize,
) -> Result<Metrics> {
    if windows.is_empty() {
        return Err(Error::Data("cannot evaluate an empty split".into()));
    }
    let mut pred = Vec::new();
    let mut actual = Vec::new();
    for w in windows {
        let y = model.predict(&w.input)?;
        pred.extend(
            y.data()
                .iter()
                .map(|&v| scaler.unscale_value(target_index, v)),
        );
        actual.extend(
            w.target
                .iter()
                .map(|&v| scaler.unscale_value(target_index, v)),
        );
    }
    compute_metrics(&pred, &actual)
}

/// Scores the forecaster that repeats the last observed target value.
pub fn persistence_baseline(
    windows: &[Window],
    scaler: &MinMaxScaler,
    target_index: usize,
) -> Result<Metrics> {
    if windows.is_empty() {
        return Err(Error::Data("cannot evaluate an empty split".into()));
    }
    let mut pred = Vec::new();
    let mut actual = Vec::new();
    for w in windows {
        let [rows, f] = [w.input.shape()[0], w.input.shape()[1]];
        let last =
            scaler.unscale_value(target_index, w.input.data()[(rows - 1) * f + target_index]);
        pred.extend(std::iter::repeat_n(last, w.target.len()));
        actual.extend(
            w.target
                .iter()
                .map(|&v| scaler.unscale_value(target_index, v)),
        );
    }
    compute_metrics(&pred, &actual)
}
