//! Hierarchical top-k sparse-attention forecaster.
//!
//! Pipeline: linear embedding, non-overlapping patches, a shared
//! intra-patch attention block, patch mean pooling, an inter-patch
//! attention block, GRU aggregation over patch tokens, and a linear head
//! that emits the whole horizon at once.

pub mod attention;
pub mod bench;
pub mod checkpoint;
pub mod cli;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod model;
pub mod numerics;
pub mod training;

pub use error::{Error, Result};
pub use numerics::{Tape, Tensor, Var};
