use serde::{Deserialize, Serialize};

use super::series::RawSeries;
use crate::error::{Error, Result};

/// Per-feature min-max scaling onto `[0, 1]` over the fitted range.
///
/// Values outside the fitted range map outside `[0, 1]`; nothing is clamped.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl MinMaxScaler {
    /// Fits on the first `rows` timesteps of `series`.
    pub fn fit(series: &RawSeries, rows: usize) -> Result<Self> {
        if rows == 0 || rows > series.len() {
            return Err(Error::Data(format!(
                "cannot fit scaler on {rows} of {} rows",
                series.len()
            )));
        }
        let f = series.n_features();
        let mut min = vec![f64::INFINITY; f];
        let mut max = vec![f64::NEG_INFINITY; f];
        for row in series.rows(0, rows).chunks_exact(f) {
            for j in 0..f {
                min[j] = min[j].min(row[j]);
                max[j] = max[j].max(row[j]);
            }
        }
        for (j, name) in series.columns.iter().enumerate() {
            if max[j] == min[j] {
                log::warn!("feature '{name}' is constant on the training split; it scales to 0");
            }
        }
        Ok(MinMaxScaler { min, max })
    }

    pub fn n_features(&self) -> usize {
        self.min.len()
    }

    /// `(x − min) / (max − min)`, or 0 for a constant feature.
    pub fn scale_value(&self, j: usize, x: f64) -> f64 {
        let range = self.max[j] - self.min[j];
        if range == 0.0 {
            0.0
        } else {
            (x - self.min[j]) / range
        }
    }

    pub fn unscale_value(&self, j: usize, x: f64) -> f64 {
        x * (self.max[j] - self.min[j]) + self.min[j]
    }

    pub fn transform(&self, series: &RawSeries) -> Result<RawSeries> {
        self.check(series)?;
        let f = self.n_features();
        let values = series
            .values
            .iter()
            .enumerate()
            .map(|(i, &x)| self.scale_value(i % f, x))
            .collect();
        RawSeries::new(series.columns.clone(), values, series.source.clone())
    }

    pub fn inverse_transform(&self, series: &RawSeries) -> Result<RawSeries> {
        self.check(series)?;
        let f = self.n_features();
        let values = series
            .values
            .iter()
            .enumerate()
            .map(|(i, &x)| self.unscale_value(i % f, x))
            .collect();
        RawSeries::new(series.columns.clone(), values, series.source.clone())
    }

    fn check(&self, series: &RawSeries) -> Result<()> {
        if series.n_features() != self.n_features() {
            return Err(Error::Data(format!(
                "scaler fitted on {} features, series has {}",
                self.n_features(),
                series.n_features()
            )));
        }
        Ok(())
    }
}

/// Fits on the leading `train_fraction` of the series and scales all of it.
pub fn fit_transform(series: &RawSeries, train_fraction: f64) -> Result<(RawSeries, MinMaxScaler)> {
    let rows = ((series.len() as f64 * train_fraction + 1e-9).floor() as usize).min(series.len());
    if rows == 0 {
        return Err(Error::Data(format!(
            "training portion of {} rows at fraction {train_fraction} is empty",
            series.len()
        )));
    }
    let scaler = MinMaxScaler::fit(series, rows)?;
    Ok((scaler.transform(series)?, scaler))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(values: Vec<f64>, f: usize) -> RawSeries {
        let cols = (0..f).map(|j| format!("c{j}")).collect();
        RawSeries::new(cols, values, "test").unwrap()
    }

    #[test]
    fn scales_train_range_to_unit_interval() {
        let s = series((0..=10).map(f64::from).collect(), 1);
        let scaler = MinMaxScaler::fit(&s, 11).unwrap();
        assert_eq!(scaler.scale_value(0, 5.0), 0.5);
        assert_eq!(scaler.scale_value(0, 0.0), 0.0);
        assert_eq!(scaler.scale_value(0, 10.0), 1.0);
    }

    #[test]
    fn later_values_are_not_clamped() {
        let s = series(vec![0.0, 1.0, 2.0, 3.0, 4.0, 8.0, -4.0], 1);
        let (scaled, scaler) = fit_transform(&s, 5.0 / 7.0).unwrap();
        assert_eq!(scaler.max, vec![4.0]);
        assert_eq!(scaled.values[5], 2.0);
        assert_eq!(scaled.values[6], -1.0);
    }

    #[test]
    fn constant_feature_maps_to_zero() {
        let s = series(vec![3.0, 1.0, 3.0, 2.0, 3.0, 5.0], 2);
        let (scaled, _) = fit_transform(&s, 1.0).unwrap();
        assert_eq!(scaled.column(0), vec![0.0, 0.0, 0.0]);
        assert!(scaled.values.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn empty_training_portion_is_an_error() {
        let s = series(vec![1.0, 2.0], 1);
        assert!(fit_transform(&s, 0.4).is_err());
    }
}
