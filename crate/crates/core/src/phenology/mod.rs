//! Thermal-time alignment: growing degree days, stage detection, and
//! resampling of per-pixel feature series onto a uniform GDD grid.

pub mod gdd;
pub mod resample;
pub mod stack;
pub mod stages;
pub mod weather;

pub use gdd::{cumulative_gdd, daily_gdd, GddCurve, DEFAULT_T_BASE};
pub use resample::{gdd_grid, resample, resample_to_gdd_grid};
pub use stack::{assemble_feature_stack, feature_names, scene_features, AlignedStack, FeaturePlanes, N_FEATURES};
pub use stages::{detect_stages, StageEstimate, StageParams};
pub use weather::{fetch_weather, read_weather_csv, write_weather_csv, DailyTemp, OpenMeteoClient, Transport, UreqTransport, WeatherSeries};

use chrono::NaiveDate;

pub const N_STEPS: usize = 48;

#[derive(Debug, thiserror::Error)]
pub enum PhenologyError {
    #[error("t_min {t_min} exceeds t_max {t_max}")]
    TempOrder { t_min: f64, t_max: f64 },
    #[error("weather does not cover {0}")]
    Coverage(NaiveDate),
    #[error("weather dates not consecutive after {0}")]
    Gap(NaiveDate),
    #[error("constant CCC curve: stages undefined")]
    Degenerate,
    #[error("season not covered: {0}")]
    Season(String),
    #[error("need at least {need} observations, got {have}")]
    TooFewObservations { have: usize, need: usize },
    #[error("no vegetation pixels with usable series")]
    NoVegetation,
    #[error("no clear scenes between transplant and harvest")]
    NoScenes,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("malformed weather data: {0}")]
    Malformed(String),
    #[error("network: {0}")]
    Network(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
