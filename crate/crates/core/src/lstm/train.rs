//! Mini-batch Adam training, stratified splits, and cross-validation.

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::LstmConfig;
use super::network::{backward, forward, loss, predict_proba, Mode};
use super::params::LstmParams;
use super::LstmError;
use crate::analysis::{confusion, metrics, ConfusionMatrix, MetricSet};
use crate::dataset::{Dataset, Scaler};
pub use crate::rng::derive_seed;

/// Decision threshold: probabilities at or above it are labeled positive.
pub const THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub folds: usize,
    pub test_fraction: f64,
    /// Validation share of the non-test data; used when `folds == 1`.
    pub validation_fraction: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Stop after this many epochs without validation-loss improvement.
    pub early_stopping: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            folds: 5,
            test_fraction: 0.30,
            validation_fraction: 0.15 / 0.80,
            learning_rate: 1e-3,
            batch_size: 64,
            seed: 42,
            early_stopping: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), LstmError> {
        let bad = |m: &str| Err(LstmError::Config(m.to_string()));
        if self.epochs == 0 || self.batch_size == 0 || self.folds == 0 {
            return bad("epochs, batch_size and folds must be >= 1");
        }
        let open = |v: f64| v > 0.0 && v < 1.0;
        if !open(self.test_fraction) || !open(self.validation_fraction) {
            return bad("test and validation fractions must lie in (0, 1)");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        Ok(())
    }
}

const STREAM_INIT: u64 = 1;
const STREAM_SHUFFLE: u64 = 2;
const STREAM_DROPOUT: u64 = 3;
const STREAM_SPLIT: u64 = 4;

#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub learning_rate: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Adam {
    pub fn new(n: usize, learning_rate: f64) -> Adam {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            learning_rate,
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    pub fn update(&mut self, params: &mut [f64], grad: &[f64]) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= self.learning_rate * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Trained network plus the standardization fitted on its training data.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub params: LstmParams,
    pub scaler: Scaler,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub probabilities: Vec<f64>,
    pub labels: Vec<u8>,
}

pub fn label_for(p: f64) -> u8 {
    u8::from(p >= THRESHOLD)
}

impl Classifier {
    /// Probabilities and thresholded labels for raw (unstandardized) inputs.
    pub fn predict_inputs(&self, inputs: &[f64], n: usize) -> Result<Prediction, LstmError> {
        let mut x = inputs.to_vec();
        self.scaler.transform_in_place(&mut x);
        let probabilities = predict_proba(&self.params, &x, n)?;
        let labels = probabilities.iter().map(|&p| label_for(p)).collect();
        Ok(Prediction {
            probabilities,
            labels,
        })
    }

    pub fn predict(&self, data: &Dataset) -> Result<Prediction, LstmError> {
        check_shape(&self.params.config, data)?;
        self.predict_inputs(&data.inputs, data.len())
    }
}

pub fn predict(classifier: &Classifier, data: &Dataset) -> Result<Prediction, LstmError> {
    classifier.predict(data)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub classifier: Classifier,
    pub history: Vec<EpochStats>,
}

fn check_shape(cfg: &LstmConfig, data: &Dataset) -> Result<(), LstmError> {
    if data.n_features != cfg.input_size || data.seq_len != cfg.sequence_length {
        return Err(LstmError::Shape(format!(
            "dataset is {}x{}, network expects {}x{}",
            data.seq_len, data.n_features, cfg.sequence_length, cfg.input_size
        )));
    }
    Ok(())
}

fn accuracy(probs: &[f64], labels: &[u8]) -> f64 {
    let hits = probs
        .iter()
        .zip(labels)
        .filter(|(&p, &y)| label_for(p) == y)
        .count();
    hits as f64 / labels.len().max(1) as f64
}

/// Trains on `train`, optionally monitoring `validation` each epoch.
pub fn fit(
    train: &Dataset,
    validation: Option<&Dataset>,
    lstm: &LstmConfig,
    tc: &TrainConfig,
) -> Result<FitOutcome, LstmError> {
    lstm.validate()?;
    tc.validate()?;
    check_shape(lstm, train)?;
    let [neg, pos] = train.class_counts();
    if neg == 0 || pos == 0 {
        return Err(LstmError::SingleClass);
    }
    if let Some(v) = validation {
        check_shape(lstm, v)?;
    }

    let scaler = Scaler::fit(train);
    let x_train = scaler.transform(train);
    let x_val = validation.map(|v| scaler.transform(v));

    let mut params = LstmParams::init(lstm, derive_seed(tc.seed, STREAM_INIT))?;
    let mut adam = Adam::new(params.len(), tc.learning_rate);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(tc.seed, STREAM_SHUFFLE));
    let dropout_base = derive_seed(tc.seed, STREAM_DROPOUT);
    let per = x_train.sample_len();
    let mut batch_x = Vec::with_capacity(tc.batch_size * per);
    let mut batch_y = Vec::with_capacity(tc.batch_size);
    let mut history = Vec::with_capacity(tc.epochs);
    let mut step: u64 = 0;
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut since_best = 0;

    for epoch in 1..=tc.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut hits = 0usize;
        for chunk in order.chunks(tc.batch_size) {
            batch_x.clear();
            batch_y.clear();
            for &i in chunk {
                batch_x.extend_from_slice(x_train.sample(i));
                batch_y.push(x_train.labels[i]);
            }
            let cache = forward(
                &params,
                &batch_x,
                chunk.len(),
                Mode::Train {
                    seed: derive_seed(dropout_base, step),
                },
            )?;
            step += 1;
            let batch_loss = loss(&cache.probs, &batch_y);
            if !batch_loss.is_finite() {
                return Err(LstmError::Numeric(format!("non-finite loss at epoch {epoch}")));
            }
            loss_sum += batch_loss * chunk.len() as f64;
            hits += cache
                .probs
                .iter()
                .zip(&batch_y)
                .filter(|(&p, &y)| label_for(p) == y)
                .count();
            let grad = backward(&params, &cache, &batch_y)?;
            adam.update(&mut params.values, &grad);
        }
        if params.values.iter().any(|v| !v.is_finite()) {
            return Err(LstmError::Numeric(format!("non-finite parameters after epoch {epoch}")));
        }
        let n = train.len() as f64;
        let (val_loss, val_accuracy) = match &x_val {
            Some(v) if !v.is_empty() => {
                let p = predict_proba(&params, &v.inputs, v.len())?;
                (Some(loss(&p, &v.labels)), Some(accuracy(&p, &v.labels)))
            }
            _ => (None, None),
        };
        let stats = EpochStats {
            epoch,
            train_loss: loss_sum / n,
            train_accuracy: hits as f64 / n,
            val_loss,
            val_accuracy,
        };
        debug!(
            "epoch {epoch}: loss {:.4} acc {:.4} val_loss {:?} val_acc {:?}",
            stats.train_loss, stats.train_accuracy, stats.val_loss, stats.val_accuracy
        );
        history.push(stats);

        if let (Some(patience), Some(vl)) = (tc.early_stopping, val_loss) {
            if best.as_ref().is_none_or(|(b, _)| vl < *b) {
                best = Some((vl, params.values.clone()));
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= patience {
                    break;
                }
            }
        }
    }
    if let Some((_, values)) = best {
        params.values = values;
    }
    Ok(FitOutcome {
        classifier: Classifier { params, scaler },
        history,
    })
}

/// Held-out test indices plus a partition of the remaining indices into folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSplit {
    pub test: Vec<usize>,
    pub folds: Vec<Vec<usize>>,
}

impl CvSplit {
    pub fn non_test(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self.folds.iter().flatten().copied().collect();
        all.sort_unstable();
        all
    }
}

/// Stratified split: per class, a seeded shuffle, the first
/// `round(test_fraction * n_class)` go to test and the rest are dealt
/// round-robin into `folds` partitions.
pub fn stratified_split(labels: &[u8], test_fraction: f64, folds: usize, seed: u64) -> CvSplit {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_SPLIT));
    let mut test = Vec::new();
    let k = folds.max(1);
    let mut parts = vec![Vec::new(); k];
    let mut dealt = 0usize;
    for class in [0u8, 1u8] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        let n_test = (test_fraction * idx.len() as f64).round() as usize;
        test.extend_from_slice(&idx[..n_test]);
        for &i in &idx[n_test..] {
            parts[dealt % k].push(i);
            dealt += 1;
        }
    }
    test.sort_unstable();
    for p in &mut parts {
        p.sort_unstable();
    }
    CvSplit { test, folds: parts }
}

#[derive(Debug, Clone)]
pub struct FoldOutcome {
    pub fold: usize,
    pub validation: Vec<usize>,
    pub history: Vec<EpochStats>,
    pub val_accuracy: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone)]
pub struct CvOutcome {
    pub split: CvSplit,
    pub folds: Vec<FoldOutcome>,
    pub final_fit: FitOutcome,
    pub test_prediction: Prediction,
    pub test_confusion: ConfusionMatrix,
    pub test_metrics: MetricSet,
}

impl CvOutcome {
    pub fn mean_fold_accuracy(&self) -> f64 {
        self.folds.iter().map(|f| f.val_accuracy).sum::<f64>() / self.folds.len().max(1) as f64
    }

    /// Per-epoch mean over folds of the training and validation curves.
    pub fn mean_history(&self) -> Vec<EpochStats> {
        let epochs = self.folds.iter().map(|f| f.history.len()).min().unwrap_or(0);
        let k = self.folds.len() as f64;
        (0..epochs)
            .map(|e| {
                let mean = |g: &dyn Fn(&EpochStats) -> f64| {
                    self.folds.iter().map(|f| g(&f.history[e])).sum::<f64>() / k
                };
                EpochStats {
                    epoch: e + 1,
                    train_loss: mean(&|s| s.train_loss),
                    train_accuracy: mean(&|s| s.train_accuracy),
                    val_loss: Some(mean(&|s| s.val_loss.unwrap_or(f64::NAN))),
                    val_accuracy: Some(mean(&|s| s.val_accuracy.unwrap_or(f64::NAN))),
                }
            })
            .collect()
    }
}

/// Holds out a stratified test set, runs k-fold training with validation
/// monitoring on the remainder, then retrains on all non-test data and
/// evaluates once on the test set.
pub fn cross_validate(
    data: &Dataset,
    lstm: &LstmConfig,
    tc: &TrainConfig,
) -> Result<CvOutcome, LstmError> {
    tc.validate()?;
    if data.len() < 10 * tc.folds {
        return Err(LstmError::InsufficientSamples {
            have: data.len(),
            need: 10 * tc.folds,
        });
    }
    let split = stratified_split(&data.labels, tc.test_fraction, tc.folds, tc.seed);
    let mut folds = Vec::with_capacity(tc.folds);

    let fold_sets: Vec<(Vec<usize>, Vec<usize>)> = if tc.folds > 1 {
        (0..tc.folds)
            .map(|k| {
                let train: Vec<usize> = split
                    .folds
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != k)
                    .flat_map(|(_, f)| f.iter().copied())
                    .collect();
                (train, split.folds[k].clone())
            })
            .collect()
    } else {
        let inner = stratified_split(
            &split.folds[0].iter().map(|&i| data.labels[i]).collect::<Vec<_>>(),
            tc.validation_fraction,
            1,
            derive_seed(tc.seed, 99),
        );
        let map = |v: &[usize]| v.iter().map(|&i| split.folds[0][i]).collect::<Vec<_>>();
        vec![(map(&inner.folds[0]), map(&inner.test))]
    };

    for (k, (train_idx, val_idx)) in fold_sets.into_iter().enumerate() {
        info!("fold {}/{}: {} train, {} validation", k + 1, tc.folds, train_idx.len(), val_idx.len());
        let fold_tc = TrainConfig {
            seed: derive_seed(tc.seed, 100 + k as u64),
            ..tc.clone()
        };
        let train = data.subset(&train_idx);
        let val = data.subset(&val_idx);
        let out = fit(&train, Some(&val), lstm, &fold_tc)?;
        let last = out.history.last().expect("at least one epoch");
        folds.push(FoldOutcome {
            fold: k,
            validation: val_idx,
            val_accuracy: last.val_accuracy.unwrap_or(f64::NAN),
            val_loss: last.val_loss.unwrap_or(f64::NAN),
            history: out.history,
        });
    }

    info!("final fit on {} non-test samples", split.non_test().len());
    let final_train = data.subset(&split.non_test());
    let final_fit = fit(&final_train, None, lstm, tc)?;
    let test = data.subset(&split.test);
    let test_prediction = final_fit.classifier.predict(&test)?;
    let test_confusion = confusion(&test.labels, &test_prediction.labels)
        .map_err(|e| LstmError::Numeric(e.to_string()))?;
    let test_metrics = metrics(&test_confusion);
    Ok(CvOutcome {
        split,
        folds,
        final_fit,
        test_prediction,
        test_confusion,
        test_metrics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_partitions_and_stratifies() {
        let labels: Vec<u8> = (0..1000).map(|i| u8::from(i % 2 == 0)).collect();
        let s = stratified_split(&labels, 0.3, 5, 11);
        let mut seen = vec![0u8; labels.len()];
        for &i in s.test.iter().chain(s.folds.iter().flatten()) {
            seen[i] += 1;
        }
        assert!(seen.iter().all(|&c| c == 1), "disjoint and exhaustive");
        assert_eq!(s.test.len(), 300);
        for f in &s.folds {
            let pos = f.iter().filter(|&&i| labels[i] == 1).count() as f64 / f.len() as f64;
            assert!((pos - 0.5).abs() <= 0.02, "fold ratio {pos}");
        }
    }

    #[test]
    fn split_is_seeded() {
        let labels: Vec<u8> = (0..100).map(|i| u8::from(i % 3 == 0)).collect();
        assert_eq!(stratified_split(&labels, 0.3, 5, 1), stratified_split(&labels, 0.3, 5, 1));
        assert_ne!(stratified_split(&labels, 0.3, 5, 1), stratified_split(&labels, 0.3, 5, 2));
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        let mut adam = Adam::new(2, 0.01);
        let mut p = vec![1.0, -1.0];
        adam.update(&mut p, &[0.5, -3.0]);
        assert!((p[0] - 0.99).abs() < 1e-9);
        assert!((p[1] + 0.99).abs() < 1e-9);
    }

    #[test]
    fn threshold_tie_is_positive() {
        assert_eq!(label_for(0.5), 1);
        assert_eq!(label_for(0.4999999), 0);
    }

    #[test]
    fn config_fraction_checks() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            validation_fraction: 1.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn single_class_dataset_is_rejected() {
        let cfg = LstmConfig {
            input_size: 2,
            lstm_units: vec![2],
            dropout: vec![0.0],
            dense_units: vec![],
            sequence_length: 3,
        };
        let ds = Dataset::new(vec![0.0; 4 * 6], vec![1; 4], 3, vec!["a".into(), "b".into()]).unwrap();
        assert!(matches!(
            fit(&ds, None, &cfg, &TrainConfig::default()),
            Err(LstmError::SingleClass)
        ));
    }

    #[test]
    fn too_few_samples_for_cv() {
        let ds = Dataset::new(vec![0.0; 20 * 6], (0..20).map(|i| (i % 2) as u8).collect(), 3, vec!["a".into(), "b".into()]).unwrap();
        let cfg = LstmConfig {
            input_size: 2,
            lstm_units: vec![2],
            dropout: vec![0.0],
            dense_units: vec![],
            sequence_length: 3,
        };
        assert!(matches!(
            cross_validate(&ds, &cfg, &TrainConfig::default()),
            Err(LstmError::InsufficientSamples { have: 20, need: 50 })
        ));
    }

    fn separable(n: usize) -> (Dataset, LstmConfig) {
        let (t, f) = (8, 2);
        let mut x = Vec::with_capacity(n * t * f);
        let mut y = Vec::with_capacity(n);
        for i in 0..n {
            let label = (i % 2) as u8;
            let shift = if label == 1 { 1.0 } else { -1.0 };
            for s in 0..t {
                x.push(shift + 0.2 * ((i * 31 + s * 7) as f64).sin());
                x.push(0.3 * ((i * 13 + s) as f64).cos());
            }
            y.push(label);
        }
        let cfg = LstmConfig {
            input_size: f,
            lstm_units: vec![6],
            dropout: vec![0.0],
            dense_units: vec![4],
            sequence_length: t,
        };
        (Dataset::new(x, y, t, vec!["a".into(), "b".into()]).unwrap(), cfg)
    }

    fn small_tc() -> TrainConfig {
        TrainConfig {
            epochs: 30,
            learning_rate: 0.01,
            batch_size: 16,
            seed: 3,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn learns_separable_data() {
        let (ds, cfg) = separable(120);
        let out = fit(&ds, None, &cfg, &small_tc()).unwrap();
        let last = out.history.last().unwrap();
        assert!(last.train_accuracy >= 0.99, "{last:?}");
        assert!(last.train_loss < out.history[0].train_loss);
        let pred = out.classifier.predict(&ds).unwrap();
        assert_eq!(pred.labels, ds.labels);
    }

    #[test]
    fn fit_is_deterministic_per_seed() {
        let (ds, cfg) = separable(40);
        let tc = TrainConfig { epochs: 3, ..small_tc() };
        let a = fit(&ds, Some(&ds), &cfg, &tc).unwrap();
        let b = fit(&ds, Some(&ds), &cfg, &tc).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.classifier.params.values, b.classifier.params.values);
        let c = fit(&ds, Some(&ds), &cfg, &TrainConfig { seed: 4, ..tc }).unwrap();
        assert_ne!(a.classifier.params.values, c.classifier.params.values);
    }

    #[test]
    fn early_stopping_restores_best_weights() {
        let (ds, cfg) = separable(40);
        let tc = TrainConfig {
            epochs: 60,
            early_stopping: Some(2),
            ..small_tc()
        };
        let out = fit(&ds, Some(&ds), &cfg, &tc).unwrap();
        let best = out.history.iter().filter_map(|h| h.val_loss).fold(f64::INFINITY, f64::min);
        let p = predict_proba(&out.classifier.params, &out.classifier.scaler.transform(&ds).inputs, ds.len()).unwrap();
        assert!((loss(&p, &ds.labels) - best).abs() < 1e-12);
    }
}
