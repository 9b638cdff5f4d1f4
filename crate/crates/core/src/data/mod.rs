//! CSV ingestion, min-max scaling, chronological splits and windowing.

mod scaler;
mod series;
mod synth;
mod windows;

pub use scaler::{fit_transform, MinMaxScaler};
pub use series::{csv_headers, load_csv, RawSeries};
pub use synth::{synth_series, SynthKind};
pub use windows::{
    make_windows, window_count, windows_in_span, Split, SplitFractions, Window, WindowedDataset,
};

use crate::error::Result;

/// Scales with training-split statistics, then windows every split.
pub fn prepare_dataset(
    raw: &RawSeries,
    seq_len: usize,
    horizon: usize,
    target_index: usize,
    fractions: SplitFractions,
) -> Result<WindowedDataset> {
    fractions.validate()?;
    let train_rows = fractions.bounds(raw.len())[0].end;
    let scaler = MinMaxScaler::fit(raw, train_rows)?;
    prepare_dataset_with_scaler(raw, scaler, seq_len, horizon, target_index, fractions)
}

/// Windows every split using an already-fitted scaler, e.g. one restored
/// from a checkpoint.
pub fn prepare_dataset_with_scaler(
    raw: &RawSeries,
    scaler: MinMaxScaler,
    seq_len: usize,
    horizon: usize,
    target_index: usize,
    fractions: SplitFractions,
) -> Result<WindowedDataset> {
    let scaled = scaler.transform(raw)?;
    make_windows(&scaled, seq_len, horizon, target_index, fractions, scaler)
}
