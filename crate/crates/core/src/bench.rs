//! Forward-pass timing across input lengths.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelConfig, TwinFormer};
use crate::numerics::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    /// Smallest input length; the bench also runs 2× and 4× this.
    pub base_len: usize,
    pub repeats: usize,
    pub warmup: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            base_len: 480,
            repeats: 21,
            warmup: 3,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.base_len < 1 {
            return Err(Error::Config("bench base_len must be at least 1".into()));
        }
        if self.repeats < 20 {
            return Err(Error::Config(format!(
                "bench repeats must be at least 20, got {}",
                self.repeats
            )));
        }
        Ok(())
    }

    pub fn lengths(&self) -> [usize; 3] {
        [self.base_len, 2 * self.base_len, 4 * self.base_len]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub seq_len: usize,
    pub median_seconds: f64,
}

/// Median forward-pass wall time at each of the three lengths, with every
/// other model dimension taken from `model`.
///
/// Repetitions are interleaved across lengths so slow drift in machine
/// load affects all three alike.
pub fn run_bench(model: &ModelConfig, cfg: &BenchConfig, seed: u64) -> Result<Vec<BenchRow>> {
    cfg.validate()?;
    let mut cases = Vec::new();
    for seq_len in cfg.lengths() {
        let mc = ModelConfig { seq_len, ..*model };
        let net = TwinFormer::new(mc, seed)?;
        let data = (0..seq_len * model.n_features)
            .map(|i| (i as f64 * 0.37).sin() * 0.5 + 0.5)
            .collect();
        let window = Tensor::new([seq_len, model.n_features], data)?;
        for _ in 0..cfg.warmup {
            net.predict(&window)?;
        }
        cases.push((net, window, Vec::with_capacity(cfg.repeats)));
    }
    for _ in 0..cfg.repeats {
        for (net, window, times) in cases.iter_mut() {
            let t = Instant::now();
            let y = net.predict(window)?;
            times.push(t.elapsed().as_secs_f64());
            std::hint::black_box(y);
        }
    }
    Ok(cases
        .into_iter()
        .map(|(net, _, mut times)| {
            times.sort_by(f64::total_cmp);
            BenchRow {
                seq_len: net.config.seq_len,
                median_seconds: median(&times),
            }
        })
        .collect())
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// `t(2L)/t(L)` for consecutive rows.
pub fn doubling_ratios(rows: &[BenchRow]) -> Vec<f64> {
    rows.windows(2)
        .map(|w| w[1].median_seconds / w[0].median_seconds)
        .collect()
}
