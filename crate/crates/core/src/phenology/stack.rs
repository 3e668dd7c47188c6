//! Per-field assembly of vegetation-pixel feature series on the GDD grid.

use chrono::NaiveDate;

use super::gdd::GddCurve;
use super::resample::{gdd_grid, resample};
use super::stages::StageEstimate;
use super::PhenologyError;
use crate::dataset::{Dataset, DatasetError, Label};
use crate::indices::{compute_all, IndexKind};
use crate::scene_store::{BandId, FieldRecord, Scene};
use crate::traits_mlp::{infer_traits_plane, MlpError, MlpSpec, TraitKind};

pub const N_FEATURES: usize = 37;

/// `B1..B12`, the 20 indices, then the 5 traits.
pub fn feature_names() -> Vec<String> {
    BandId::ALL
        .iter()
        .map(|b| b.name())
        .chain(IndexKind::ALL.iter().map(|k| k.name()))
        .chain(TraitKind::ALL.iter().map(|t| t.name()))
        .map(str::to_string)
        .collect()
}

/// The 37 feature planes of one scene; invalid pixels hold NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePlanes {
    pub date: NaiveDate,
    pub width: usize,
    pub height: usize,
    pub planes: Vec<Vec<f64>>,
}

impl FeaturePlanes {
    pub fn plane(&self, name: &str) -> Option<&[f64]> {
        feature_names().iter().position(|n| n == name).map(|i| self.planes[i].as_slice())
    }
}

pub fn scene_features(scene: &Scene, specs: &[MlpSpec]) -> Result<FeaturePlanes, MlpError> {
    let mut planes: Vec<Vec<f64>> = scene
        .planes
        .iter()
        .zip(&scene.valid)
        .map(|(p, m)| p.iter().zip(m).map(|(&v, &ok)| if ok { v } else { f64::NAN }).collect())
        .collect();
    planes.extend(compute_all(scene).into_iter().map(|p| p.values));
    planes.extend(
        infer_traits_plane(scene, specs)?
            .into_iter()
            .map(|t| t.values.into_iter().zip(t.valid).map(|(v, ok)| if ok { v } else { f64::NAN }).collect()),
    );
    Ok(FeaturePlanes {
        date: scene.meta.acquisition_date,
        width: scene.width(),
        height: scene.height(),
        planes,
    })
}

/// Vegetation pixels of one field: `data[(p * steps + t) * 37 + f]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedStack {
    pub field_id: String,
    pub label: Label,
    pub pixel_ids: Vec<usize>,
    pub feature_names: Vec<String>,
    pub gdd_grid: Vec<f64>,
    pub peak_step: usize,
    pub data: Vec<f64>,
}

impl AlignedStack {
    pub fn n_pixels(&self) -> usize {
        self.pixel_ids.len()
    }

    pub fn n_steps(&self) -> usize {
        self.gdd_grid.len()
    }

    pub fn get(&self, p: usize, f: usize, t: usize) -> f64 {
        self.data[(p * self.n_steps() + t) * self.feature_names.len() + f]
    }

    pub fn to_dataset(&self) -> Result<Dataset, DatasetError> {
        let mut ds = Dataset::new(
            self.data.clone(),
            vec![self.label.as_u8(); self.n_pixels()],
            self.n_steps(),
            self.feature_names.clone(),
        )?;
        ds.sample_ids = self.pixel_ids.iter().map(|p| format!("{}/{p}", self.field_id)).collect();
        ds.peak_step = Some(self.peak_step);
        Ok(ds)
    }
}

/// Builds the stack for every masked pixel from scenes dated within the
/// season `[stages.transplant_date, stages.harvest_date]`.
///
/// Pixels lacking two valid observations for some feature are skipped; the
/// count of skipped pixels is returned alongside the stack.
pub fn assemble_feature_stack(
    field: &FieldRecord,
    scenes: &[FeaturePlanes],
    mask: &[bool],
    curve: &GddCurve,
    stages: &StageEstimate,
    n_steps: usize,
) -> Result<(AlignedStack, usize), PhenologyError> {
    let season: Vec<(&FeaturePlanes, f64)> = scenes
        .iter()
        .filter(|s| s.date >= stages.transplant_date && s.date <= stages.harvest_date)
        .map(|s| curve.at(s.date).map(|g| (s, g)).ok_or(PhenologyError::Coverage(s.date)))
        .collect::<Result<_, _>>()?;
    if season.len() < 2 {
        return Err(PhenologyError::NoScenes);
    }
    let n = season[0].0.width * season[0].0.height;
    if season.iter().any(|(s, _)| s.width * s.height != n || s.planes.len() != N_FEATURES) || mask.len() != n {
        return Err(PhenologyError::Shape(format!("scenes and mask must share {n} pixels and {N_FEATURES} features")));
    }
    let harvest = curve.at(stages.harvest_date).ok_or(PhenologyError::Coverage(stages.harvest_date))?;
    let peak = curve.at(stages.peak_date).ok_or(PhenologyError::Coverage(stages.peak_date))?;
    if !(harvest > 0.0) {
        return Err(PhenologyError::Season("no thermal time accumulated".into()));
    }
    let grid = gdd_grid(harvest, n_steps);
    let peak_step = ((peak / harvest) * (n_steps - 1) as f64).round() as usize;

    let mut pixel_ids = Vec::new();
    let mut data = Vec::new();
    let mut skipped = 0;
    let mut series = Vec::with_capacity(season.len());
    let mut block = vec![0.0; n_steps * N_FEATURES];
    'pixels: for p in (0..n).filter(|&p| mask[p]) {
        for f in 0..N_FEATURES {
            series.clear();
            series.extend(season.iter().map(|(s, g)| (*g, s.planes[f][p])));
            match resample(&series, &grid) {
                Ok(v) => {
                    for (t, x) in v.into_iter().enumerate() {
                        block[t * N_FEATURES + f] = x;
                    }
                }
                Err(_) => {
                    skipped += 1;
                    continue 'pixels;
                }
            }
        }
        pixel_ids.push(p);
        data.extend_from_slice(&block);
    }
    if pixel_ids.is_empty() {
        return Err(PhenologyError::NoVegetation);
    }
    Ok((
        AlignedStack {
            field_id: field.field_id.clone(),
            label: field.label,
            pixel_ids,
            feature_names: feature_names(),
            gdd_grid: grid,
            peak_step,
            data,
        },
        skipped,
    ))
}
