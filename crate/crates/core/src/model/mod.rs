//! The forecaster: embedding → patches → local block → pooling → global
//! block → GRU → linear head.

mod config;
mod forward;
mod infer;
mod params;


pub use config::ModelConfig;
pub use forward::{
    embed, forecast_head, forward, global_informer, gru_aggregate, local_informer, mean_pool,
    patchify, LAYER_NORM_EPS,
};
pub use infer::infer;
pub use params::{BlockWeights, GruWeights, TwinFormerParams, TwinFormerWeights};

use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor};

/// A configuration together with its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct TwinFormer {
    pub config: ModelConfig,
    pub params: TwinFormerParams,
}

impl TwinFormer {
    /// Validates `config` and draws seeded initial parameters.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let params = TwinFormerParams::init(&config, seed)?;
        Ok(TwinFormer { config, params })
    }

    /// Pairs `config` with existing parameters, checking every shape.
    pub fn from_parts(config: ModelConfig, params: TwinFormerParams) -> Result<Self> {
        config.validate()?;
        let shapes = TwinFormerWeights::shapes(&config);
        for ((name, t), (_, s)) in params.slots().into_iter().zip(shapes.slots()) {
            if t.shape() != s.as_slice() {
                return Err(Error::shape(
                    "parameters",
                    format!("{name} has shape {:?}, config requires {s:?}", t.shape()),
                ));
            }
        }
        Ok(TwinFormer { config, params })
    }

    /// Forecast for one normalized window `[L × F]`, without recording
    /// gradients.
    pub fn predict(&self, window: &Tensor) -> Result<Tensor> {
        infer(&self.params, &self.config, window)
    }

    /// Same forecast computed on a constants-only tape.
    pub fn predict_on_tape(&self, window: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let w = self.params.register(&mut tape, false);
        let x = tape.constant(window.clone());
        let y = forward(&mut tape, x, &w, &self.config)?;
        Ok(tape.value(y).clone())
    }
}
