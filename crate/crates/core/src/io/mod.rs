//! Loading, segmentation, synthetic data, model files and plot series.

pub mod dataset;
pub mod export;
pub mod model;
pub mod synth;
