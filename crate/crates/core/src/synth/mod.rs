//! Synthetic pixel sequences and scene campaigns with a known generative model.
//!
//! Every sample is `base[t][f] + offset[t][f] * [clean] + noise`, with the
//! offset nonzero only on the informative features during plateau steps.
//! Since the model is fully known, [`bayes_oracle`] can estimate the
//! accuracy of the optimal classifier directly.

mod campaign;

pub use campaign::{
    gen_campaign, gen_scene_series, linear_trait_spec, synth_trait_specs, Campaign, CampaignConfig, FieldSpec,
    FieldTruth, TRUTH_FILE,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, DatasetError, Label};
use crate::phenology::stack::feature_names;
use crate::phenology::N_STEPS;
use crate::rng::derive_seed;

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    Config(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Scene(#[from] crate::scene_store::SceneError),
    #[error(transparent)]
    Mlp(#[from] crate::traits_mlp::MlpError),
    #[error(transparent)]
    Phenology(#[from] crate::phenology::PhenologyError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

impl SynthError {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        SynthError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// Rise, plateau and fall breakpoints in steps; the profile is 0 before
/// `rise_start`, 1 on `plateau_start..plateau_end`, 0 again from `fall_end`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trapezoid {
    pub rise_start: usize,
    pub plateau_start: usize,
    pub plateau_end: usize,
    pub fall_end: usize,
}

impl Default for Trapezoid {
    fn default() -> Self {
        Trapezoid {
            rise_start: 2,
            plateau_start: 14,
            plateau_end: 26,
            fall_end: 47,
        }
    }
}

impl Trapezoid {
    pub fn value(&self, t: usize) -> f64 {
        let t = t as f64;
        let (a, b, c, d) = (
            self.rise_start as f64,
            self.plateau_start as f64,
            self.plateau_end as f64,
            self.fall_end as f64,
        );
        if t <= a || t >= d {
            0.0
        } else if t < b {
            (t - a) / (b - a)
        } else if t < c {
            1.0
        } else {
            (d - t) / (d - c + 1.0)
        }
    }

    pub fn on_plateau(&self, t: usize) -> bool {
        t >= self.plateau_start && t < self.plateau_end
    }

    pub fn validate(&self, n_steps: usize) -> Result<(), SynthError> {
        if !(self.rise_start < self.plateau_start
            && self.plateau_start < self.plateau_end
            && self.plateau_end <= self.fall_end
            && self.fall_end <= n_steps)
        {
            return Err(SynthError::Config(format!("trapezoid breakpoints out of order: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_pixels_per_class: usize,
    pub informative: Vec<String>,
    /// Clean-class mean shift on plateau steps, in units of `noise_sd`.
    pub offset: f64,
    pub profile: Trapezoid,
    pub n_steps: usize,
    pub noise_sd: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_pixels_per_class: 2000,
            informative: ["NDMI", "CCC", "FAPAR", "CHL_RED_EDGE"].map(String::from).to_vec(),
            offset: 1.0,
            profile: Trapezoid::default(),
            n_steps: N_STEPS,
            noise_sd: 1.0,
            seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n_pixels_per_class == 0 {
            return Err(SynthError::Config("n_pixels_per_class must be at least 1".into()));
        }
        if !self.offset.is_finite() {
            return Err(SynthError::Config("offset must be finite".into()));
        }
        if !(self.noise_sd > 0.0 && self.noise_sd.is_finite()) {
            return Err(SynthError::Config("noise_sd must be positive".into()));
        }
        let names = feature_names();
        for f in &self.informative {
            if !names.contains(f) {
                return Err(SynthError::Config(format!("unknown feature {f:?}")));
            }
        }
        self.profile.validate(self.n_steps)
    }

    fn informative_indices(&self) -> Vec<usize> {
        let names = feature_names();
        let mut idx: Vec<usize> = self
            .informative
            .iter()
            .filter_map(|f| names.iter().position(|n| n == f))
            .collect();
        idx.sort_unstable();
        idx.dedup();
        idx
    }
}

/// The exact generative parameters behind a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    pub config: SynthConfig,
    pub feature_names: Vec<String>,
    /// Shared mean, `(t, f)` row-major.
    pub base: Vec<f64>,
    /// Added to clean samples, `(t, f)` row-major.
    pub offset: Vec<f64>,
    pub labels: Vec<u8>,
}

impl SynthTruth {
    pub fn new(config: &SynthConfig) -> Result<SynthTruth, SynthError> {
        config.validate()?;
        let names = feature_names();
        let nf = names.len();
        let informative = config.informative_indices();
        let mut base = vec![0.0; config.n_steps * nf];
        let mut offset = vec![0.0; config.n_steps * nf];
        for t in 0..config.n_steps {
            let shape = config.profile.value(t);
            for f in 0..nf {
                // per-feature level and amplitude so features are not interchangeable
                let level = ((f * 37 % 11) as f64 - 5.0) * 0.3;
                let amp = 1.0 + (f % 5) as f64 * 0.5;
                base[t * nf + f] = level + amp * shape;
                if config.profile.on_plateau(t) && informative.contains(&f) {
                    offset[t * nf + f] = config.offset * config.noise_sd;
                }
            }
        }
        Ok(SynthTruth {
            config: config.clone(),
            feature_names: names,
            base,
            offset,
            labels: Vec::new(),
        })
    }

    /// Cells `(t * n_features + f)` where the class means differ.
    pub fn informative_cells(&self) -> Vec<usize> {
        (0..self.offset.len()).filter(|&i| self.offset[i] != 0.0).collect()
    }

    /// Log-likelihood ratio of clean against infested for one sample.
    pub fn log_likelihood_ratio(&self, sample: &[f64]) -> f64 {
        let var = self.config.noise_sd * self.config.noise_sd;
        self.informative_cells()
            .into_iter()
            .map(|i| self.offset[i] * (sample[i] - self.base[i] - 0.5 * self.offset[i]) / var)
            .sum()
    }
}

fn class_of(i: usize) -> Label {
    if i % 2 == 0 {
        Label::Infested
    } else {
        Label::Clean
    }
}

/// Labeled sequences for both classes, alternating infested and clean.
pub fn gen_dataset(config: &SynthConfig) -> Result<(Dataset, SynthTruth), SynthError> {
    let mut truth = SynthTruth::new(config)?;
    let nf = truth.feature_names.len();
    let per = config.n_steps * nf;
    let n = 2 * config.n_pixels_per_class;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 0x5E17));
    let mut inputs = Vec::with_capacity(n * per);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = class_of(i);
        for c in 0..per {
            let noise: f64 = rng.sample(StandardNormal);
            let shift = if label == Label::Clean { truth.offset[c] } else { 0.0 };
            inputs.push(truth.base[c] + shift + config.noise_sd * noise);
        }
        labels.push(label.as_u8());
    }
    let mut ds = Dataset::new(inputs, labels.clone(), config.n_steps, truth.feature_names.clone())?;
    ds.sample_ids = (0..n).map(|i| format!("synth/{i}")).collect();
    ds.peak_step = Some((config.profile.plateau_start + config.profile.plateau_end) / 2);
    truth.labels = labels;
    Ok((ds, truth))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleEstimate {
    pub accuracy: f64,
    /// Half-width of the 95% normal-approximation interval.
    pub half_width: f64,
    pub n_samples: usize,
}

impl OracleEstimate {
    pub fn ci(&self) -> (f64, f64) {
        (self.accuracy - self.half_width, self.accuracy + self.half_width)
    }
}

/// Monte-Carlo accuracy of the likelihood-ratio classifier on balanced
/// draws from the generative model of `config`.
///
/// Only cells where the class means differ enter the ratio, so only those
/// are sampled. Ties go to the infested class.
pub fn bayes_oracle(config: &SynthConfig, n_samples: usize, seed: u64) -> Result<OracleEstimate, SynthError> {
    if n_samples == 0 {
        return Err(SynthError::Config("n_samples must be at least 1".into()));
    }
    let truth = SynthTruth::new(config)?;
    let cells = truth.informative_cells();
    let sd = config.noise_sd;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x0AC1E));
    let mut correct = 0usize;
    for i in 0..n_samples {
        let label = class_of(i);
        let mut llr = 0.0;
        for &c in &cells {
            let noise: f64 = rng.sample(StandardNormal);
            let shift = if label == Label::Clean { truth.offset[c] } else { 0.0 };
            // base cancels in the ratio
            llr += truth.offset[c] * (shift + sd * noise - 0.5 * truth.offset[c]) / (sd * sd);
        }
        let guess = if llr > 0.0 { Label::Clean } else { Label::Infested };
        correct += usize::from(guess == label);
    }
    let n = n_samples as f64;
    let p = correct as f64 / n;
    Ok(OracleEstimate {
        accuracy: p,
        half_width: 1.96 * (p * (1.0 - p) / n).sqrt().max(0.5 / n),
        n_samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(offset: f64) -> SynthConfig {
        SynthConfig {
            n_pixels_per_class: 20,
            offset,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn shape_labels_and_seed() {
        let (a, truth) = gen_dataset(&small(1.0)).unwrap();
        assert_eq!(a.len(), 40);
        assert_eq!((a.seq_len, a.n_features), (48, 37));
        assert_eq!(a.class_counts(), [20, 20]);
        assert_eq!(truth.labels, a.labels);
        let (b, _) = gen_dataset(&small(1.0)).unwrap();
        assert_eq!(a, b);
        let (c, _) = gen_dataset(&SynthConfig { seed: 7, ..small(1.0) }).unwrap();
        assert_ne!(a.inputs, c.inputs);
    }

    #[test]
    fn offsets_only_on_plateau_and_informative() {
        let truth = SynthTruth::new(&SynthConfig::default()).unwrap();
        let cells = truth.informative_cells();
        assert_eq!(cells.len(), 4 * 12);
        let names = feature_names();
        for c in cells {
            let (t, f) = (c / 37, c % 37);
            assert!((14..26).contains(&t));
            assert!(["NDMI", "CCC", "FAPAR", "CHL_RED_EDGE"].contains(&names[f].as_str()));
        }
    }

    #[test]
    fn trapezoid_shape() {
        let p = Trapezoid::default();
        assert_eq!(p.value(0), 0.0);
        assert_eq!(p.value(14), 1.0);
        assert_eq!(p.value(25), 1.0);
        assert!(p.value(26) < 1.0 && p.value(26) > 0.9);
        assert_eq!(p.value(47), 0.0);
        assert_eq!((0..48).filter(|&t| p.on_plateau(t)).count(), 12);
    }

    #[test]
    fn bad_configs() {
        assert!(SynthConfig { noise_sd: 0.0, ..small(1.0) }.validate().is_err());
        assert!(SynthConfig { offset: f64::NAN, ..small(1.0) }.validate().is_err());
        assert!(SynthConfig { informative: vec!["XYZ".into()], ..small(1.0) }.validate().is_err());
    }

    #[test]
    fn zero_offset_oracle_is_chance() {
        let est = bayes_oracle(&small(0.0), 1000, 1).unwrap();
        assert_eq!(est.accuracy, 0.5);
    }

    #[test]
    fn large_offset_oracle_is_near_one() {
        let cfg = SynthConfig {
            informative: vec!["NDVI".into()],
            offset: 5.0,
            ..small(0.0)
        };
        let est = bayes_oracle(&cfg, 2000, 3).unwrap();
        assert!(est.accuracy > 0.999);
    }

    #[test]
    fn dataset_llr_agrees_with_labels() {
        let (ds, truth) = gen_dataset(&SynthConfig { n_pixels_per_class: 200, ..small(1.0) }).unwrap();
        let hits = (0..ds.len())
            .filter(|&i| {
                let clean = truth.log_likelihood_ratio(ds.sample(i)) > 0.0;
                clean == (ds.labels[i] == Label::Clean.as_u8())
            })
            .count();
        assert!(hits as f64 / ds.len() as f64 > 0.99);
    }
}
