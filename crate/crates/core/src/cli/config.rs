use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bench::BenchConfig;
use crate::data::{csv_headers, load_csv, synth_series, RawSeries, SplitFractions, SynthKind};
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::training::TrainConfig;

/// Everything one command needs, read from a single TOML file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    pub data: DataConfig,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub bench: BenchConfig,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    Synthetic,
    Csv,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub source: DataSource,
    /// Synthetic only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<SynthKind>,
    /// Synthetic only: number of timesteps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length: Option<usize>,
    /// Synthetic only: noise seed, independent of the run seed.
    #[serde(default)]
    pub seed: u64,
    /// CSV only. Relative paths resolve against the config file's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    /// CSV only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_column: Option<String>,
    /// CSV only. Defaults to every column except `timestamp_column`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_columns: Option<Vec<String>>,
    /// CSV only: a column to ignore.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp_column: Option<String>,
    /// Train, val and test fractions.
    #[serde(default = "default_split")]
    pub split: [f64; 3],
}

fn default_split() -> [f64; 3] {
    let f = SplitFractions::default();
    [f.train, f.val, f.test]
}

/// Architecture settings; feature count and target position come from the
/// data.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub seq_len: usize,
    pub patch_len: usize,
    pub d_model: usize,
    pub heads: usize,
    pub top_k: usize,
    pub ffn_mult: usize,
    pub horizon: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = ModelConfig::default();
        ModelSection {
            seq_len: m.seq_len,
            patch_len: m.patch_len,
            d_model: m.d_model,
            heads: m.heads,
            top_k: m.top_k,
            ffn_mult: m.ffn_mult,
            horizon: m.horizon,
        }
    }
}

impl ModelSection {
    pub fn resolve(&self, n_features: usize, target_index: usize) -> Result<ModelConfig> {
        let cfg = ModelConfig {
            seq_len: self.seq_len,
            patch_len: self.patch_len,
            d_model: self.d_model,
            heads: self.heads,
            top_k: self.top_k,
            ffn_mult: self.ffn_mult,
            horizon: self.horizon,
            n_features,
            target_index,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// A loaded series with its target column resolved.
#[derive(Clone, Debug)]
pub struct LoadedData {
    pub series: RawSeries,
    pub target_column: String,
    pub target_index: usize,
}

impl RunConfig {
    /// Parses `path`; relative data and output paths are made relative to its
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if let Some(dir) = path.parent() {
            if let Some(p) = cfg.data.path.as_mut().filter(|p| p.is_relative()) {
                *p = dir.join(&*p);
            }
            if cfg.out_dir.is_relative() {
                cfg.out_dir = dir.join(&cfg.out_dir);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        self.fractions()?;
        self.train.validate()?;
        self.bench.validate()?;
        // Feature count is not known yet; check everything else.
        self.model.resolve(1, 0)?;
        let d = &self.data;
        match d.source {
            DataSource::Synthetic => {
                if d.kind.is_none() || d.length.is_none() {
                    return Err(Error::Config(
                        "synthetic data needs data.kind and data.length".into(),
                    ));
                }
                if d.path.is_some() || d.target_column.is_some() || d.feature_columns.is_some() {
                    return Err(Error::Config(
                        "data.path, data.target_column and data.feature_columns apply to csv sources only".into(),
                    ));
                }
            }
            DataSource::Csv => {
                if d.path.is_none() || d.target_column.is_none() {
                    return Err(Error::Config(
                        "csv data needs data.path and data.target_column".into(),
                    ));
                }
                if d.kind.is_some() || d.length.is_some() {
                    return Err(Error::Config(
                        "data.kind and data.length apply to synthetic sources only".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn fractions(&self) -> Result<SplitFractions> {
        let [train, val, test] = self.data.split;
        SplitFractions::new(train, val, test)
    }

    /// The shuffling seed follows the run seed.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }

    pub fn load_data(&self) -> Result<LoadedData> {
        let d = &self.data;
        match d.source {
            DataSource::Synthetic => {
                let kind = d.kind.expect("validated");
                let series = synth_series(kind, d.length.expect("validated"), d.seed)?;
                Ok(LoadedData {
                    target_column: series.columns[0].clone(),
                    target_index: 0,
                    series,
                })
            }
            DataSource::Csv => {
                let path = d.path.as_deref().expect("validated");
                let target = d.target_column.clone().expect("validated");
                let columns = match &d.feature_columns {
                    Some(cols) => cols.clone(),
                    None => csv_headers(path)?
                        .into_iter()
                        .filter(|c| Some(c) != d.timestamp_column.as_ref())
                        .collect(),
                };
                let target_index = columns.iter().position(|c| *c == target).ok_or_else(|| {
                    Error::Config(format!(
                        "target column '{target}' is not among the feature columns {columns:?}"
                    ))
                })?;
                let series = load_csv(path, &columns)?;
                Ok(LoadedData {
                    series,
                    target_column: target,
                    target_index,
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SYNTH: &str = r#"
seed = 7
out_dir = "out"

[data]
source = "synthetic"
kind = "sines"
length = 400

[model]
seq_len = 24
patch_len = 6
horizon = 4
"#;

    #[test]
    fn parses_with_defaults() {
        let cfg = RunConfig::from_toml(SYNTH).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.model.d_model, 32);
        assert_eq!(cfg.train, TrainConfig::default());
        assert_eq!(cfg.train_config().seed, 7);
        assert_eq!(cfg.data.split, [0.7, 0.1, 0.2]);
        let data = cfg.load_data().unwrap();
        assert_eq!((data.series.len(), data.target_index), (400, 0));
    }

    #[test]
    fn serialized_config_parses_back() {
        let cfg = RunConfig::from_toml(SYNTH).unwrap();
        assert_eq!(RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap(), cfg);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        for (text, needle) in [
            (format!("{SYNTH}\n[extra]\nx = 1\n"), "extra"),
            (SYNTH.replace("patch_len = 6", "patch_len = 60"), "patch"),
            (SYNTH.replace("length = 400", ""), "data.length"),
            (
                format!("{SYNTH}\n[train]\nlearning_rate = 0.0\n"),
                "learning_rate",
            ),
            (format!("{SYNTH}\n[train]\nseed = 3\n"), "seed"),
            (format!("{SYNTH}\n[bench]\nrepeats = 3\n"), "repeats"),
        ] {
            let err = RunConfig::from_toml(&text).unwrap_err();
            assert!(matches!(err, Error::Config(_)), "{err}");
            assert!(err.to_string().contains(needle), "{needle}: {err}");
        }
    }

    #[test]
    fn csv_features_default_to_all_but_timestamp() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("d.csv"), "date,a,b\n1,1,2\n2,3,4\n").unwrap();
        let text = "[data]\nsource = \"csv\"\npath = \"d.csv\"\ntarget_column = \"b\"\ntimestamp_column = \"date\"\n";
        let cfg_path = dir.path().join("run.toml");
        std::fs::write(&cfg_path, text).unwrap();
        let cfg = RunConfig::load(&cfg_path).unwrap();
        let data = cfg.load_data().unwrap();
        assert_eq!(data.series.columns, vec!["a", "b"]);
        assert_eq!(data.target_index, 1);
    }

    #[test]
    fn target_outside_features_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("d.csv");
        std::fs::write(&csv, "a,b\n1,2\n").unwrap();
        let text = format!(
            "[data]\nsource = \"csv\"\npath = {:?}\ntarget_column = \"b\"\nfeature_columns = [\"a\"]\n",
            csv
        );
        let err = RunConfig::from_toml(&text)
            .unwrap()
            .load_data()
            .unwrap_err();
        assert!(
            matches!(err, Error::Config(_)) && err.to_string().contains("'b'"),
            "{err}"
        );
    }
}
