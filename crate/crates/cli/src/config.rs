//! Run configuration: one TOML file with flat dotted keys.
//!
//! ```toml
//! seed = 7
//! data.source = "synthetic"
//! train.epochs = 30
//! synth.offset = 1.0
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use broomscan_core::lstm::{LstmConfig, TrainConfig};
use broomscan_core::phenology::StageParams;
use broomscan_core::synth::{CampaignConfig, SynthConfig, Trapezoid};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const CACHE_ENV: &str = "BROOMSCAN_CACHE_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    /// Field registry and scene bundles on disk.
    Scenes,
    /// A generated scene campaign run through the full raster pipeline.
    Campaign,
    /// Labeled sequences drawn directly from the generative model.
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub source: DataSource,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            source: DataSource::Scenes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    pub registry: Option<PathBuf>,
    pub mlp_dir: Option<PathBuf>,
    pub cache_dir: PathBuf,
}

impl Default for PathsSection {
    fn default() -> Self {
        PathsSection {
            registry: None,
            mlp_dir: None,
            cache_dir: PathBuf::from(".cache/open-meteo"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestSection {
    /// Scenes with a cloud fraction at or above this are dropped.
    pub max_cloud: f64,
}

impl Default for IngestSection {
    fn default() -> Self {
        IngestSection { max_cloud: 0.10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhenologySection {
    pub t_base: f64,
    pub theta_low: f64,
    pub theta_high: f64,
    pub window: usize,
    pub n_steps: usize,
}

impl Default for PhenologySection {
    fn default() -> Self {
        let s = StageParams::default();
        PhenologySection {
            t_base: broomscan_core::phenology::DEFAULT_T_BASE,
            theta_low: s.theta_low,
            theta_high: s.theta_high,
            window: s.window,
            n_steps: broomscan_core::phenology::N_STEPS,
        }
    }
}

impl PhenologySection {
    pub fn stage_params(&self) -> StageParams {
        StageParams {
            theta_low: self.theta_low,
            theta_high: self.theta_high,
            window: self.window,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaskSection {
    pub variance_target: f64,
}

impl Default for MaskSection {
    fn default() -> Self {
        MaskSection {
            variance_target: broomscan_core::masking::vegetation::DEFAULT_VARIANCE_TARGET,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LstmSection {
    pub units: Vec<usize>,
    pub dropout: Vec<f64>,
    pub dense: Vec<usize>,
}

impl Default for LstmSection {
    fn default() -> Self {
        let c = LstmConfig::default();
        LstmSection {
            units: c.lstm_units,
            dropout: c.dropout,
            dense: c.dense_units,
        }
    }
}

impl LstmSection {
    pub fn config(&self, input_size: usize, sequence_length: usize) -> LstmConfig {
        LstmConfig {
            input_size,
            lstm_units: self.units.clone(),
            dropout: self.dropout.clone(),
            dense_units: self.dense.clone(),
            sequence_length,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub folds: usize,
    pub test_fraction: f64,
    pub validation_fraction: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub early_stopping: Option<usize>,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            epochs: t.epochs,
            folds: t.folds,
            test_fraction: t.test_fraction,
            validation_fraction: t.validation_fraction,
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            early_stopping: t.early_stopping,
        }
    }
}

impl TrainSection {
    pub fn config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            folds: self.folds,
            test_fraction: self.test_fraction,
            validation_fraction: self.validation_fraction,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            seed,
            early_stopping: self.early_stopping,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImportanceSet {
    Test,
    Train,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImportanceSection {
    pub repeats: usize,
    /// Which split the permutations are evaluated on.
    pub on: ImportanceSet,
}

impl Default for ImportanceSection {
    fn default() -> Self {
        ImportanceSection {
            repeats: 10,
            on: ImportanceSet::Test,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DensitySection {
    pub features: Vec<String>,
    pub grid_size: usize,
}

impl Default for DensitySection {
    fn default() -> Self {
        DensitySection {
            features: ["NDMI", "CCC", "FAPAR", "CHL_RED_EDGE"].map(String::from).to_vec(),
            grid_size: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub n_pixels_per_class: usize,
    pub informative: Vec<String>,
    pub offset: f64,
    pub noise_sd: f64,
    pub profile: Trapezoid,
    pub oracle_samples: usize,
    pub campaign: CampaignSection,
}

impl Default for SynthSection {
    fn default() -> Self {
        let s = SynthConfig::default();
        SynthSection {
            n_pixels_per_class: s.n_pixels_per_class,
            informative: s.informative,
            offset: s.offset,
            noise_sd: s.noise_sd,
            profile: s.profile,
            oracle_samples: 200_000,
            campaign: CampaignSection::default(),
        }
    }
}

impl SynthSection {
    pub fn config(&self, n_steps: usize, seed: u64) -> SynthConfig {
        SynthConfig {
            n_pixels_per_class: self.n_pixels_per_class,
            informative: self.informative.clone(),
            offset: self.offset,
            profile: self.profile,
            n_steps,
            noise_sd: self.noise_sd,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignSection {
    pub fields_per_class: usize,
    pub width: usize,
    pub height: usize,
    pub season_days: i64,
    pub revisit_days: i64,
    pub cloudy_every: usize,
    pub pixel_noise: f64,
    pub stress: f64,
}

impl Default for CampaignSection {
    fn default() -> Self {
        let c = CampaignConfig::default();
        CampaignSection {
            fields_per_class: c.fields_per_class,
            width: c.width,
            height: c.height,
            season_days: c.season_days,
            revisit_days: c.revisit_days,
            cloudy_every: c.cloudy_every,
            pixel_noise: c.pixel_noise,
            stress: c.stress,
        }
    }
}

impl CampaignSection {
    pub fn config(&self, seed: u64) -> CampaignConfig {
        CampaignConfig {
            fields_per_class: self.fields_per_class,
            width: self.width,
            height: self.height,
            season_days: self.season_days,
            revisit_days: self.revisit_days,
            cloudy_every: self.cloudy_every,
            pixel_noise: self.pixel_noise,
            stress: self.stress,
            seed,
            ..CampaignConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub data: DataSection,
    pub paths: PathsSection,
    pub ingest: IngestSection,
    pub phenology: PhenologySection,
    pub mask: MaskSection,
    pub lstm: LstmSection,
    pub train: TrainSection,
    pub importance: ImportanceSection,
    pub density: DensitySection,
    pub synth: SynthSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            out_dir: PathBuf::from("out"),
            data: DataSection::default(),
            paths: PathsSection::default(),
            ingest: IngestSection::default(),
            phenology: PhenologySection::default(),
            mask: MaskSection::default(),
            lstm: LstmSection::default(),
            train: TrainSection::default(),
            importance: ImportanceSection::default(),
            density: DensitySection::default(),
            synth: SynthSection::default(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Reads `path`; relative paths inside are resolved against its directory.
    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = RunConfig::parse(&text)?;
        cfg.resolve_relative(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    pub fn resolve_relative(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.out_dir);
        fix(&mut self.paths.cache_dir);
        if let Some(p) = &mut self.paths.registry {
            fix(p);
        }
        if let Some(p) = &mut self.paths.mlp_dir {
            fix(p);
        }
    }

    /// Applies the cache-dir environment override, if set.
    pub fn apply_env(&mut self) {
        if let Some(dir) = std::env::var_os(CACHE_ENV) {
            self.paths.cache_dir = PathBuf::from(dir);
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if !(self.ingest.max_cloud > 0.0 && self.ingest.max_cloud <= 1.0) {
            return bad(format!("ingest.max_cloud must be in (0, 1], got {}", self.ingest.max_cloud));
        }
        let p = &self.phenology;
        if !p.t_base.is_finite() {
            return bad("phenology.t_base must be finite".into());
        }
        if !(0.0 < p.theta_low && p.theta_low < 1.0 && 0.0 < p.theta_high && p.theta_high < 1.0) {
            return bad("phenology.theta_low and theta_high must lie in (0, 1)".into());
        }
        if p.window == 0 || p.n_steps < 2 {
            return bad("phenology.window must be >= 1 and n_steps >= 2".into());
        }
        if !(self.mask.variance_target > 0.0 && self.mask.variance_target <= 1.0) {
            return bad("mask.variance_target must be in (0, 1]".into());
        }
        self.lstm.config(1, 1).validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.train.config(self.seed).validate().map_err(|e| CliError::Config(e.to_string()))?;
        if self.importance.repeats == 0 {
            return bad("importance.repeats must be >= 1".into());
        }
        if self.density.grid_size < 2 {
            return bad("density.grid_size must be >= 2".into());
        }
        if self.synth.oracle_samples == 0 {
            return bad("synth.oracle_samples must be >= 1".into());
        }
        if self.data.source == DataSource::Scenes && self.paths.registry.is_none() {
            return bad("paths.registry is required when data.source = \"scenes\"".into());
        }
        if self.data.source == DataSource::Scenes && self.paths.mlp_dir.is_none() {
            return bad("paths.mlp_dir is required when data.source = \"scenes\"".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_all_defaults() {
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
    }

    #[test]
    fn dotted_keys_override() {
        let c = RunConfig::parse(
            "seed = 9\ndata.source = \"synthetic\"\ntrain.epochs = 30\nsynth.campaign.width = 16\nlstm.units = [8]\nlstm.dropout = [0.1]\n",
        )
        .unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.data.source, DataSource::Synthetic);
        assert_eq!(c.train.epochs, 30);
        assert_eq!(c.train.folds, 5);
        assert_eq!(c.synth.campaign.width, 16);
        assert_eq!(c.lstm.units, vec![8]);
    }

    #[test]
    fn unknown_key_is_config_error() {
        assert!(matches!(RunConfig::parse("train.epoch = 3"), Err(CliError::Config(_))));
    }

    #[test]
    fn scenes_source_needs_registry() {
        assert!(RunConfig::default().validate().is_err());
        let c = RunConfig {
            data: DataSection {
                source: DataSource::Synthetic,
            },
            ..RunConfig::default()
        };
        assert!(c.validate().is_ok());
    }

    #[test]
    fn relative_paths_follow_config_dir() {
        let mut c = RunConfig::parse("paths.registry = \"campaign/fields.json\"").unwrap();
        c.resolve_relative(Path::new("/data/run"));
        assert_eq!(c.paths.registry.unwrap(), PathBuf::from("/data/run/campaign/fields.json"));
        assert_eq!(c.out_dir, PathBuf::from("/data/run/out"));
    }
}
