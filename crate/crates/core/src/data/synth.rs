use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::series::RawSeries;
use crate::error::{Error, Result};

/// Deterministic fixture series.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthKind {
    /// `sin(2πt/24) + 0.5·sin(2πt/96) + ε`, `ε ~ U(−0.05, 0.05)`.
    Sines,
    /// `t / T`.
    Ramp,
    /// All zeros.
    Const,
}

impl FromStr for SynthKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sines" => Ok(SynthKind::Sines),
            "ramp" => Ok(SynthKind::Ramp),
            "const" => Ok(SynthKind::Const),
            other => Err(Error::Config(format!(
                "unknown synthetic series kind '{other}' (expected sines, ramp or const)"
            ))),
        }
    }
}

impl fmt::Display for SynthKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SynthKind::Sines => "sines",
            SynthKind::Ramp => "ramp",
            SynthKind::Const => "const",
        })
    }
}

/// Single-column series named `value`.
pub fn synth_series(kind: SynthKind, len: usize, seed: u64) -> Result<RawSeries> {
    if len == 0 {
        return Err(Error::Config(
            "synthetic series length must be at least 1".into(),
        ));
    }
    let values: Vec<f64> = match kind {
        SynthKind::Sines => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..len)
                .map(|t| {
                    let t = t as f64;
                    (2.0 * PI * t / 24.0).sin()
                        + 0.5 * (2.0 * PI * t / 96.0).sin()
                        + rng.random_range(-0.05..0.05)
                })
                .collect()
        }
        SynthKind::Ramp => (0..len).map(|t| t as f64 / len as f64).collect(),
        SynthKind::Const => vec![0.0; len],
    };
    RawSeries::new(vec!["value".into()], values, format!("synthetic:{kind}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn const_is_all_zero() {
        let s = synth_series(SynthKind::Const, 7, 1).unwrap();
        assert_eq!(s.values, vec![0.0; 7]);
    }

    #[test]
    fn ramp_matches_definition() {
        let s = synth_series(SynthKind::Ramp, 5, 1).unwrap();
        assert_eq!(s.values, vec![0.0, 0.2, 0.4, 0.6, 0.8]);
    }

    #[test]
    fn sines_are_seed_deterministic() {
        let a = synth_series(SynthKind::Sines, 500, 7).unwrap();
        let b = synth_series(SynthKind::Sines, 500, 7).unwrap();
        let c = synth_series(SynthKind::Sines, 500, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.values, c.values);
        for (t, v) in a.values.iter().enumerate() {
            let t = t as f64;
            let clean = (2.0 * PI * t / 24.0).sin() + 0.5 * (2.0 * PI * t / 96.0).sin();
            assert!((v - clean).abs() <= 0.05);
        }
    }

    #[test]
    fn unknown_kind_and_empty_length_fail() {
        assert!("square".parse::<SynthKind>().is_err());
        assert!(synth_series(SynthKind::Ramp, 0, 0).is_err());
    }
}
