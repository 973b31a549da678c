//! Real-time spatiotemporal crime forecasting.
//!
//! The crate is organised along the forecasting pipeline:
//!
//! * [`ingest`] parses event, weather and holiday inputs and generates seeded
//!   synthetic self-exciting event streams.
//! * [`grid`] bins events onto a rectangular lattice as hourly count cubes.
//! * [`signal`] holds the regularity-enhancing transforms (diurnal cumulative
//!   integration, corner-aligned bilinear super-resolution, target scaling) and
//!   the prediction postprocessor.
//! * [`nnet`] is a small differentiable layer set, the residual forecaster and
//!   its ADAM trainer and checkpoint format.
//! * [`ternary`] implements exact ternary projection, trit packing and the
//!   shadow-weight ternary trainer.
//! * [`baselines`] provides historical average, nearest-previous-steps and
//!   rolling ARIMA forecasters with ACF/PACF diagnostics.
//! * [`eval`] computes RMSE, hit-set counts and comparison reports.
//! * [`pipeline`] strings the pieces together into the end-to-end predictor.

pub mod baselines;
pub mod eval;
pub mod grid;
pub mod ingest;
pub mod nnet;
pub mod pipeline;
pub mod signal;
pub mod ternary;

pub use grid::{CrimeCube, CubeState, GridSpec};
pub use ingest::{EventRecord, FeatureTable, SynthConfig};
pub use nnet::{Model, ModelConfig, Tensor, TrainConfig, Variant};
pub use ternary::{ShadowState, TernaryTensor};
