use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::scaler::MinMaxScaler;
use super::series::RawSeries;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!(
                "unknown split '{other}' (expected train, val or test)"
            ))),
        }
    }
}

/// Chronological train/val/test proportions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions {
            train: 0.7,
            val: 0.1,
            test: 0.2,
        }
    }
}

impl SplitFractions {
    pub fn new(train: f64, val: f64, test: f64) -> Result<Self> {
        let f = SplitFractions { train, val, test };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|&p| !(p > 0.0 && p.is_finite())) {
            return Err(Error::Config(format!(
                "split fractions must be positive, got {parts:?}"
            )));
        }
        let total: f64 = parts.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "split fractions must sum to 1, got {total}"
            )));
        }
        Ok(())
    }

    /// Timestep ranges `[0, a)`, `[a, b)`, `[b, T)` with
    /// `a = ⌊T·train⌋` and `b = ⌊T·(train + val)⌋`.
    pub fn bounds(&self, len: usize) -> [Range<usize>; 3] {
        // The tolerance keeps e.g. 1000·(0.7 + 0.1) from flooring to 799.
        let cut = |fraction: f64| ((len as f64 * fraction + 1e-9).floor() as usize).min(len);
        let a = cut(self.train);
        let b = cut(self.train + self.val).max(a);
        [0..a, a..b, b..len]
    }
}

/// One training example: `seq_len` input rows starting at `start`, and the
/// target column over the following `horizon` rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Window {
    pub start: usize,
    pub input: Tensor,
    pub target: Vec<f64>,
}

impl Window {
    /// Timesteps covered by the input.
    pub fn input_range(&self) -> Range<usize> {
        self.start..self.start + self.input.shape()[0]
    }

    /// Timesteps covered by the target.
    pub fn target_range(&self) -> Range<usize> {
        let end = self.input_range().end;
        end..end + self.target.len()
    }
}

/// Number of stride-1 windows that fit in `span` timesteps.
pub fn window_count(span: usize, seq_len: usize, horizon: usize) -> usize {
    (span + 1).saturating_sub(seq_len + horizon)
}

/// All stride-1 windows whose input and target lie inside `span`.
pub fn windows_in_span(
    series: &RawSeries,
    span: Range<usize>,
    seq_len: usize,
    horizon: usize,
    target_index: usize,
) -> Result<Vec<Window>> {
    if span.end > series.len() {
        return Err(Error::Data(format!(
            "span {span:?} exceeds series length {}",
            series.len()
        )));
    }
    if target_index >= series.n_features() {
        return Err(Error::Config(format!(
            "target index {target_index} out of range for {} features",
            series.n_features()
        )));
    }
    let f = series.n_features();
    let count = window_count(span.len(), seq_len, horizon);
    (0..count)
        .map(|offset| {
            let start = span.start + offset;
            let input = Tensor::new([seq_len, f], series.rows(start, seq_len).to_vec())?;
            let target = (start + seq_len..start + seq_len + horizon)
                .map(|t| series.row(t)[target_index])
                .collect();
            Ok(Window {
                start,
                input,
                target,
            })
        })
        .collect()
}

/// Scaled windows for all three splits, plus the scaler that produced them.
#[derive(Clone, Debug)]
pub struct WindowedDataset {
    pub train: Vec<Window>,
    pub val: Vec<Window>,
    pub test: Vec<Window>,
    pub bounds: [Range<usize>; 3],
    pub scaler: MinMaxScaler,
    pub seq_len: usize,
    pub horizon: usize,
    pub target_index: usize,
}

impl WindowedDataset {
    pub fn split(&self, split: Split) -> &[Window] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

/// Cuts `scaled` chronologically by `fractions` and windows each split
/// independently, so no window straddles a split boundary.
pub fn make_windows(
    scaled: &RawSeries,
    seq_len: usize,
    horizon: usize,
    target_index: usize,
    fractions: SplitFractions,
    scaler: MinMaxScaler,
) -> Result<WindowedDataset> {
    fractions.validate()?;
    if seq_len < 1 || horizon < 1 {
        return Err(Error::Config(
            "seq_len and horizon must be at least 1".into(),
        ));
    }
    let len = scaled.len();
    if len < seq_len + horizon {
        return Err(Error::Data(format!(
            "series of {len} rows is shorter than seq_len + horizon = {}",
            seq_len + horizon
        )));
    }
    let bounds = fractions.bounds(len);
    let mut splits = Vec::with_capacity(3);
    for (split, span) in Split::ALL.iter().zip(&bounds) {
        let windows = windows_in_span(scaled, span.clone(), seq_len, horizon, target_index)?;
        if windows.is_empty() {
            return Err(Error::Data(format!(
                "{split} split spans {} rows, too short for one window of seq_len + horizon = {}",
                span.len(),
                seq_len + horizon
            )));
        }
        splits.push(windows);
    }
    let test = splits.pop().unwrap_or_default();
    let val = splits.pop().unwrap_or_default();
    let train = splits.pop().unwrap_or_default();
    Ok(WindowedDataset {
        train,
        val,
        test,
        bounds,
        scaler,
        seq_len,
        horizon,
        target_index,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(len: usize, f: usize) -> RawSeries {
        let cols = (0..f).map(|j| format!("c{j}")).collect();
        let values = (0..len * f)
            .map(|i| (i / f) as f64 + (i % f) as f64 * 100.0)
            .collect();
        RawSeries::new(cols, values, "ramp").unwrap()
    }

    #[test]
    fn enumerates_windows_in_a_single_span() {
        let s = ramp(10, 1);
        let w = windows_in_span(&s, 0..10, 3, 2, 0).unwrap();
        assert_eq!(w.len(), 6);
        assert_eq!(w[0].input.data(), &[0.0, 1.0, 2.0]);
        assert_eq!(w[0].target, vec![3.0, 4.0]);
        assert_eq!(w[5].start, 5);
        assert_eq!(w[5].target_range(), 8..10);
    }

    #[test]
    fn exact_fit_yields_one_window() {
        let s = ramp(5, 1);
        assert_eq!(windows_in_span(&s, 0..5, 3, 2, 0).unwrap().len(), 1);
        assert_eq!(windows_in_span(&s, 0..4, 3, 2, 0).unwrap().len(), 0);
    }

    #[test]
    fn targets_follow_the_input_in_the_target_column() {
        let s = ramp(40, 3);
        for w in windows_in_span(&s, 0..40, 6, 4, 2).unwrap() {
            let want: Vec<f64> = w.target_range().map(|t| s.row(t)[2]).collect();
            assert_eq!(w.target, want);
            assert_eq!(w.input.data(), s.rows(w.start, 6));
        }
    }

    #[test]
    fn default_split_is_seventy_ten_twenty() {
        let b = SplitFractions::default().bounds(1000);
        assert_eq!(b, [0..700, 700..800, 800..1000]);
    }

    #[test]
    fn short_split_is_named_in_the_error() {
        let s = ramp(100, 1);
        let scaler = MinMaxScaler {
            min: vec![0.0],
            max: vec![1.0],
        };
        let err = make_windows(&s, 8, 4, 0, SplitFractions::default(), scaler).unwrap_err();
        assert!(err.to_string().contains("val split"), "{err}");
    }

    #[test]
    fn rejects_bad_fractions() {
        assert!(SplitFractions::new(0.5, 0.5, 0.0).is_err());
        assert!(SplitFractions::new(0.7, 0.2, 0.2).is_err());
        assert!("holdout".parse::<Split>().is_err());
        assert_eq!("val".parse::<Split>().unwrap(), Split::Val);
    }
}
