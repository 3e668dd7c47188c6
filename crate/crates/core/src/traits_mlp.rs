//! Plant-trait estimation with loadable feed-forward networks.
//!
//! Spec files are JSON:
//!
//! ```json
//! {
//!   "trait": "LAI",
//!   "input_names": ["B3", "B4", "cos_view_zenith"],
//!   "input_min": [0.0, 0.0, 0.9], "input_max": [0.3, 0.3, 1.0],
//!   "layers": [
//!     {"weights": [[...], ...], "biases": [...]},
//!     {"weights": [[...]], "biases": [0.0]}
//!   ],
//!   "output_min": 0.0, "output_max": 8.0,
//!   "valid_range": [0.0, 8.0]
//! }
//! ```
//!
//! Every layer but the last is `tanh`; the last has one linear output.
//! `weights[j]` holds row `j` (one entry per input of that layer).
//! `valid_range` may be omitted to use the per-trait default.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::scene_store::{BandId, Scene};

pub const GEOMETRY_INPUTS: [&str; 3] = ["cos_view_zenith", "cos_sun_zenith", "cos_rel_azimuth"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TraitKind {
    LAI,
    CAB,
    CCC,
    FAPAR,
    FCOVER,
}

impl TraitKind {
    pub const ALL: [TraitKind; 5] = [
        TraitKind::LAI,
        TraitKind::CAB,
        TraitKind::CCC,
        TraitKind::FAPAR,
        TraitKind::FCOVER,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TraitKind::LAI => "LAI",
            TraitKind::CAB => "CAB",
            TraitKind::CCC => "CCC",
            TraitKind::FAPAR => "FAPAR",
            TraitKind::FCOVER => "FCOVER",
        }
    }

    pub fn default_valid_range(self) -> [f64; 2] {
        match self {
            TraitKind::LAI => [0.0, 8.0],
            TraitKind::CAB | TraitKind::CCC => [0.0, 600.0],
            TraitKind::FAPAR | TraitKind::FCOVER => [0.0, 1.0],
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum MlpError {
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("malformed spec: {0}")]
    Parse(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("range error: {0}")]
    Range(String),
    #[error("unknown input {0:?}")]
    UnknownInput(String),
    #[error("expected one spec per trait in order LAI, CAB, CCC, FAPAR, FCOVER")]
    TraitSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    #[serde(rename = "trait")]
    pub trait_kind: TraitKind,
    pub input_names: Vec<String>,
    pub input_min: Vec<f64>,
    pub input_max: Vec<f64>,
    pub layers: Vec<Layer>,
    pub output_min: f64,
    pub output_max: f64,
    #[serde(default)]
    pub valid_range: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Copy)]
enum Source {
    Band(usize),
    Geometry(usize),
}

fn source(name: &str) -> Option<Source> {
    if let Some(b) = BandId::from_name(name) {
        return Some(Source::Band(b.index()));
    }
    GEOMETRY_INPUTS.iter().position(|g| *g == name).map(Source::Geometry)
}

/// Sun/sensor angles in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geometry {
    pub sun_zenith: f64,
    pub sun_azimuth: f64,
    pub view_zenith: f64,
    pub view_azimuth: f64,
}

impl Geometry {
    pub fn of(scene: &Scene) -> Geometry {
        let m = &scene.meta;
        Geometry {
            sun_zenith: m.sun_zenith,
            sun_azimuth: m.sun_azimuth,
            view_zenith: m.view_zenith,
            view_azimuth: m.view_azimuth,
        }
    }

    /// `[cos(view_zenith), cos(sun_zenith), cos(sun_azimuth - view_azimuth)]`.
    pub fn cosines(&self) -> [f64; 3] {
        [
            self.view_zenith.to_radians().cos(),
            self.sun_zenith.to_radians().cos(),
            (self.sun_azimuth - self.view_azimuth).to_radians().cos(),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraitValue {
    pub value: f64,
    pub valid: bool,
    pub plausible: bool,
}

impl MlpSpec {
    pub fn validate(&self) -> Result<(), MlpError> {
        let n = self.input_names.len();
        if n == 0 {
            return Err(MlpError::Shape("no inputs".into()));
        }
        for name in &self.input_names {
            source(name).ok_or_else(|| MlpError::UnknownInput(name.clone()))?;
        }
        if self.input_min.len() != n || self.input_max.len() != n {
            return Err(MlpError::Shape(format!(
                "{n} inputs but {} minima and {} maxima",
                self.input_min.len(),
                self.input_max.len()
            )));
        }
        for (i, (lo, hi)) in self.input_min.iter().zip(&self.input_max).enumerate() {
            if !(lo < hi) {
                return Err(MlpError::Range(format!("input {i}: min {lo} >= max {hi}")));
            }
        }
        if !(self.output_min < self.output_max) {
            return Err(MlpError::Range(format!(
                "output min {} >= max {}",
                self.output_min, self.output_max
            )));
        }
        if let Some([lo, hi]) = self.valid_range {
            if !(lo <= hi) {
                return Err(MlpError::Range(format!("valid_range [{lo}, {hi}]")));
            }
        }
        if self.layers.is_empty() {
            return Err(MlpError::Shape("no layers".into()));
        }
        let mut width = n;
        for (l, layer) in self.layers.iter().enumerate() {
            if layer.weights.is_empty() || layer.weights.len() != layer.biases.len() {
                return Err(MlpError::Shape(format!(
                    "layer {l}: {} weight rows, {} biases",
                    layer.weights.len(),
                    layer.biases.len()
                )));
            }
            if let Some(r) = layer.weights.iter().position(|row| row.len() != width) {
                return Err(MlpError::Shape(format!(
                    "layer {l} row {r}: width {} but layer input is {width}",
                    layer.weights[r].len()
                )));
            }
            width = layer.weights.len();
        }
        if width != 1 {
            return Err(MlpError::Shape(format!("output layer has {width} units, need 1")));
        }
        Ok(())
    }

    pub fn valid_range(&self) -> [f64; 2] {
        self.valid_range.unwrap_or_else(|| self.trait_kind.default_valid_range())
    }

    pub fn normalize(&self, i: usize, x: f64) -> f64 {
        2.0 * (x - self.input_min[i]) / (self.input_max[i] - self.input_min[i]) - 1.0
    }

    pub fn denormalize(&self, y: f64) -> f64 {
        (y + 1.0) * (self.output_max - self.output_min) / 2.0 + self.output_min
    }

    /// Runs the network on already-selected raw inputs.
    pub fn forward(&self, raw: &[f64]) -> f64 {
        let mut a: Vec<f64> = raw.iter().enumerate().map(|(i, &x)| self.normalize(i, x)).collect();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            a = layer
                .weights
                .iter()
                .zip(&layer.biases)
                .map(|(row, b)| {
                    let z = row.iter().zip(&a).map(|(w, x)| w * x).sum::<f64>() + b;
                    if l == last {
                        z
                    } else {
                        z.tanh()
                    }
                })
                .collect();
        }
        self.denormalize(a[0])
    }

    fn select(&self, spectrum: &[f64; 12], cosines: &[f64; 3]) -> Vec<f64> {
        self.input_names
            .iter()
            .map(|n| match source(n).expect("validated") {
                Source::Band(b) => spectrum[b],
                Source::Geometry(g) => cosines[g],
            })
            .collect()
    }
}

pub fn load_mlp(path: &Path) -> Result<MlpSpec, MlpError> {
    let text = fs::read_to_string(path)?;
    parse_mlp(&text)
}

pub fn parse_mlp(text: &str) -> Result<MlpSpec, MlpError> {
    let spec: MlpSpec = serde_json::from_str(text).map_err(|e| MlpError::Parse(e.to_string()))?;
    spec.validate()?;
    Ok(spec)
}

pub fn save_mlp(spec: &MlpSpec, path: &Path) -> Result<(), MlpError> {
    spec.validate()?;
    fs::write(path, serde_json::to_string_pretty(spec).expect("spec serializes"))?;
    Ok(())
}

pub fn infer_trait(spec: &MlpSpec, spectrum: &[f64; 12], valid: bool, geometry: &Geometry) -> TraitValue {
    if !valid {
        return TraitValue {
            value: f64::NAN,
            valid: false,
            plausible: false,
        };
    }
    let value = spec.forward(&spec.select(spectrum, &geometry.cosines()));
    let [lo, hi] = spec.valid_range();
    TraitValue {
        value,
        valid: value.is_finite(),
        plausible: value >= lo && value <= hi,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraitPlane {
    pub kind: TraitKind,
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
    pub plausible: Vec<bool>,
}

/// Loads the five specs from `dir/<trait>.json` (lowercase trait name).
pub fn load_trait_set(dir: &Path) -> Result<Vec<MlpSpec>, MlpError> {
    let specs = TraitKind::ALL
        .iter()
        .map(|k| load_mlp(&dir.join(format!("{}.json", k.name().to_lowercase()))))
        .collect::<Result<Vec<_>, _>>()?;
    check_trait_set(&specs)?;
    Ok(specs)
}

fn check_trait_set(specs: &[MlpSpec]) -> Result<(), MlpError> {
    let kinds: Vec<_> = specs.iter().map(|s| s.trait_kind).collect();
    if kinds != TraitKind::ALL {
        return Err(MlpError::TraitSet);
    }
    Ok(())
}

/// Applies the five specs (in [`TraitKind::ALL`] order) to every pixel.
pub fn infer_traits_plane(scene: &Scene, specs: &[MlpSpec]) -> Result<Vec<TraitPlane>, MlpError> {
    check_trait_set(specs)?;
    let geometry = Geometry::of(scene);
    let n = scene.meta.pixels();
    let mut out: Vec<TraitPlane> = specs
        .iter()
        .map(|s| TraitPlane {
            kind: s.trait_kind,
            width: scene.width(),
            height: scene.height(),
            values: Vec::with_capacity(n),
            valid: Vec::with_capacity(n),
            plausible: Vec::with_capacity(n),
        })
        .collect();
    let mut s = [0.0; 12];
    for i in 0..n {
        let ok = scene.pixel_valid(i);
        for (b, x) in s.iter_mut().enumerate() {
            *x = scene.planes[b][i];
        }
        for (spec, plane) in specs.iter().zip(out.iter_mut()) {
            let t = infer_trait(spec, &s, ok, &geometry);
            plane.values.push(t.value);
            plane.valid.push(t.valid);
            plane.plausible.push(t.plausible);
        }
    }
    Ok(out)
}
