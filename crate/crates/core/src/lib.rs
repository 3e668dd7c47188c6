//! Broomrape detection from multispectral satellite time series.

pub mod analysis;
pub mod dataset;
pub mod indices;
pub mod lstm;
pub mod masking;
pub mod phenology;
pub mod rng;
pub mod scene_store;
pub mod synth;
pub mod traits_mlp;
