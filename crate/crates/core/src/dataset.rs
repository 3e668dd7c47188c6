//! Labeled pixel sequences and per-feature standardization.
//!
//! Inputs are stored sample-major, then time, then feature: element
//! `(n, t, f)` lives at `(n * seq_len + t) * n_features + f`.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed dataset header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("dataset shape mismatch: {0}")]
    Shape(String),
    #[error("label {0} is not binary")]
    Label(u8),
    #[error("non-finite value at sample {sample}, step {step}, feature {feature}")]
    NonFinite {
        sample: usize,
        step: usize,
        feature: usize,
    },
}

/// Binary class label. `Infested` is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Infested,
    Clean,
}

impl Label {
    pub fn as_u8(self) -> u8 {
        match self {
            Label::Infested => 1,
            Label::Clean => 0,
        }
    }

    pub fn from_u8(v: u8) -> Option<Label> {
        match v {
            1 => Some(Label::Infested),
            0 => Some(Label::Clean),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::Infested => "infested",
            Label::Clean => "clean",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Vec<f64>,
    pub labels: Vec<u8>,
    pub seq_len: usize,
    pub n_features: usize,
    pub feature_names: Vec<String>,
    /// Optional provenance per sample (e.g. `field/pixel`).
    pub sample_ids: Vec<String>,
    /// Grid step corresponding to the peak vegetation stage, when known.
    pub peak_step: Option<usize>,
}

#[derive(Serialize, Deserialize)]
struct DatasetHeader {
    n_samples: usize,
    seq_len: usize,
    n_features: usize,
    feature_names: Vec<String>,
    labels: Vec<u8>,
    #[serde(default)]
    sample_ids: Vec<String>,
    #[serde(default)]
    peak_step: Option<usize>,
}

impl Dataset {
    pub fn new(
        inputs: Vec<f64>,
        labels: Vec<u8>,
        seq_len: usize,
        feature_names: Vec<String>,
    ) -> Result<Self, DatasetError> {
        let n_features = feature_names.len();
        let ds = Dataset {
            inputs,
            labels,
            seq_len,
            n_features,
            feature_names,
            sample_ids: Vec::new(),
            peak_step: None,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample_len(&self) -> usize {
        self.seq_len * self.n_features
    }

    pub fn sample(&self, n: usize) -> &[f64] {
        let s = self.sample_len();
        &self.inputs[n * s..(n + 1) * s]
    }

    #[inline]
    pub fn get(&self, n: usize, t: usize, f: usize) -> f64 {
        self.inputs[(n * self.seq_len + t) * self.n_features + f]
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.n_features != self.feature_names.len() {
            return Err(DatasetError::Shape(format!(
                "{} feature names for {} features",
                self.feature_names.len(),
                self.n_features
            )));
        }
        if self.inputs.len() != self.labels.len() * self.sample_len() {
            return Err(DatasetError::Shape(format!(
                "{} values for {} samples of {}x{}",
                self.inputs.len(),
                self.labels.len(),
                self.seq_len,
                self.n_features
            )));
        }
        if !self.sample_ids.is_empty() && self.sample_ids.len() != self.labels.len() {
            return Err(DatasetError::Shape("sample id count differs from labels".into()));
        }
        if let Some(&bad) = self.labels.iter().find(|&&l| l > 1) {
            return Err(DatasetError::Label(bad));
        }
        if let Some(pos) = self.inputs.iter().position(|v| !v.is_finite()) {
            let per = self.sample_len();
            return Err(DatasetError::NonFinite {
                sample: pos / per,
                step: (pos % per) / self.n_features,
                feature: pos % self.n_features,
            });
        }
        Ok(())
    }

    /// Copy of the samples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let s = self.sample_len();
        let mut inputs = Vec::with_capacity(indices.len() * s);
        for &i in indices {
            inputs.extend_from_slice(self.sample(i));
        }
        Dataset {
            inputs,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            seq_len: self.seq_len,
            n_features: self.n_features,
            feature_names: self.feature_names.clone(),
            sample_ids: if self.sample_ids.is_empty() {
                Vec::new()
            } else {
                indices.iter().map(|&i| self.sample_ids[i].clone()).collect()
            },
            peak_step: self.peak_step,
        }
    }

    /// Appends all samples of `other`. Shapes and feature names must agree.
    pub fn extend(&mut self, other: &Dataset) -> Result<(), DatasetError> {
        if self.seq_len != other.seq_len || self.feature_names != other.feature_names {
            return Err(DatasetError::Shape("cannot concatenate datasets of different shape".into()));
        }
        let had_ids = !self.sample_ids.is_empty() || self.is_empty();
        self.inputs.extend_from_slice(&other.inputs);
        self.labels.extend_from_slice(&other.labels);
        if had_ids && !other.sample_ids.is_empty() {
            self.sample_ids.extend(other.sample_ids.iter().cloned());
        } else {
            self.sample_ids.clear();
        }
        Ok(())
    }

    pub fn class_counts(&self) -> [usize; 2] {
        let pos = self.labels.iter().filter(|&&l| l == 1).count();
        [self.labels.len() - pos, pos]
    }

    /// Writes `<stem>.json` (header) and `<stem>.bin` (little-endian f64 payload).
    pub fn save(&self, dir: &Path, stem: &str) -> Result<(), DatasetError> {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let header = DatasetHeader {
            n_samples: self.len(),
            seq_len: self.seq_len,
            n_features: self.n_features,
            feature_names: self.feature_names.clone(),
            labels: self.labels.clone(),
            sample_ids: self.sample_ids.clone(),
            peak_step: self.peak_step,
        };
        let hpath = dir.join(format!("{stem}.json"));
        fs::write(&hpath, serde_json::to_vec_pretty(&header)?).map_err(|e| io_err(&hpath, e))?;
        let bpath = dir.join(format!("{stem}.bin"));
        let mut buf = Vec::with_capacity(self.inputs.len() * 8);
        for v in &self.inputs {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        let mut f = fs::File::create(&bpath).map_err(|e| io_err(&bpath, e))?;
        f.write_all(&buf).map_err(|e| io_err(&bpath, e))?;
        Ok(())
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Dataset, DatasetError> {
        let hpath = dir.join(format!("{stem}.json"));
        let text = fs::read(&hpath).map_err(|e| io_err(&hpath, e))?;
        let header: DatasetHeader = serde_json::from_slice(&text)?;
        let bpath = dir.join(format!("{stem}.bin"));
        let mut raw = Vec::new();
        fs::File::open(&bpath)
            .and_then(|mut f| f.read_to_end(&mut raw))
            .map_err(|e| io_err(&bpath, e))?;
        let expected = header.n_samples * header.seq_len * header.n_features * 8;
        if raw.len() != expected {
            return Err(DatasetError::Shape(format!(
                "payload holds {} bytes, header declares {}",
                raw.len(),
                expected
            )));
        }
        if header.labels.len() != header.n_samples {
            return Err(DatasetError::Shape("label count differs from n_samples".into()));
        }
        let inputs = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let ds = Dataset {
            inputs,
            labels: header.labels,
            seq_len: header.seq_len,
            n_features: header.n_features,
            feature_names: header.feature_names,
            sample_ids: header.sample_ids,
            peak_step: header.peak_step,
        };
        ds.validate()?;
        Ok(ds)
    }
}

fn io_err(path: &Path, source: std::io::Error) -> DatasetError {
    DatasetError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Per-feature zero-mean, unit-variance transform (population variance).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Scaler {
    /// Statistics pooled over every sample and time step of `data`.
    /// Features with zero variance get scale 1.
    pub fn fit(data: &Dataset) -> Scaler {
        let f = data.n_features;
        let mut mean = vec![0.0; f];
        let rows = data.len() * data.seq_len;
        for row in data.inputs.chunks_exact(f) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        let denom = rows.max(1) as f64;
        mean.iter_mut().for_each(|m| *m /= denom);
        let mut var = vec![0.0; f];
        for row in data.inputs.chunks_exact(f) {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                let d = v - m;
                *s += d * d;
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / denom).sqrt();
                if sd > 0.0 && sd.is_finite() {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Scaler { mean, std }
    }

    pub fn identity(n_features: usize) -> Scaler {
        Scaler {
            mean: vec![0.0; n_features],
            std: vec![1.0; n_features],
        }
    }

    pub fn transform(&self, data: &Dataset) -> Dataset {
        let mut out = data.clone();
        self.transform_in_place(&mut out.inputs);
        out
    }

    pub fn transform_in_place(&self, inputs: &mut [f64]) {
        let f = self.mean.len();
        for row in inputs.chunks_exact_mut(f) {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Dataset {
        let inputs: Vec<f64> = (0..2 * 3 * 2).map(|v| v as f64).collect();
        Dataset::new(inputs, vec![0, 1], 3, vec!["a".into(), "b".into()]).unwrap()
    }

    #[test]
    fn indexing_is_sample_time_feature() {
        let ds = toy();
        assert_eq!(ds.get(1, 2, 1), 11.0);
        assert_eq!(ds.get(0, 1, 0), 2.0);
        assert_eq!(ds.sample(1).len(), 6);
    }

    #[test]
    fn rejects_non_binary_labels() {
        let err = Dataset::new(vec![0.0; 6], vec![2], 3, vec!["a".into(), "b".into()]);
        assert!(matches!(err, Err(DatasetError::Label(2))));
    }

    #[test]
    fn rejects_nan() {
        let mut v = vec![0.0; 6];
        v[3] = f64::NAN;
        let err = Dataset::new(v, vec![0], 3, vec!["a".into(), "b".into()]);
        assert!(matches!(err, Err(DatasetError::NonFinite { step: 1, feature: 1, .. })));
    }

    #[test]
    fn scaler_standardizes_each_feature() {
        let ds = toy();
        let sc = Scaler::fit(&ds);
        let t = sc.transform(&ds);
        let again = Scaler::fit(&t);
        for (m, s) in again.mean.iter().zip(&again.std) {
            assert!(m.abs() < 1e-12);
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_feature_keeps_unit_scale() {
        let ds = Dataset::new(vec![4.0; 6], vec![0, 1, 0], 1, vec!["a".into(), "b".into()]).unwrap();
        let sc = Scaler::fit(&ds);
        assert_eq!(sc.std, vec![1.0, 1.0]);
        assert_eq!(sc.mean, vec![4.0, 4.0]);
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut ds = toy();
        ds.sample_ids = vec!["f/0".into(), "f/1".into()];
        ds.peak_step = Some(1);
        ds.save(dir.path(), "dataset").unwrap();
        let back = Dataset::load(dir.path(), "dataset").unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        toy().save(dir.path(), "d").unwrap();
        let p = dir.path().join("d.bin");
        let bytes = fs::read(&p).unwrap();
        fs::write(&p, &bytes[..bytes.len() - 8]).unwrap();
        assert!(matches!(Dataset::load(dir.path(), "d"), Err(DatasetError::Shape(_))));
    }
}
