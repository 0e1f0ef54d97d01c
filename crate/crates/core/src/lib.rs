//! Joint source-model selection, channel-coding rate and power allocation for
//! semantic communication over parallel Gaussian channels.
//!
//! The crate is organised bottom-up: [`numerics`] supplies the Gaussian tail
//! and channel-information quantities, [`models`] the data types, [`distortion`]
//! and [`ber`] the two model families, [`optimizer`] the allocation engine and
//! [`simulator`] the Monte Carlo check of its predictions. [`cli`] wires it all
//! to files and the `semcom-alloc` binary.

pub mod ber;
pub mod cli;
pub mod distortion;
pub mod error;
pub mod models;
pub mod numerics;
pub mod optimizer;
pub mod par;
pub mod simulator;

pub use error::{Error, Result};
pub use models::{
    Allocation, ChannelSpec, CodingScheme, LinkConfig, LogisticParams, ModelTable, PracticalCoeffs, SourceModel,
};
