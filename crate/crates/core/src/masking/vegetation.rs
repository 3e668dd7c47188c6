use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::kmeans::kmeans;
use super::pca::{fit_pca, standardize};
use super::MaskingError;
use crate::traits_mlp::{TraitKind, TraitPlane};

pub const DEFAULT_VARIANCE_TARGET: f64 = 0.95;
const MAX_ITER: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MaskWarning {
    /// Traits carry no variance; clusters come from the empty-cluster repair.
    DegenerateClustering,
    /// Both clusters have the same mean CCC; the larger cluster was chosen.
    TiedClusterMeans,
}

impl MaskWarning {
    pub fn code(self) -> &'static str {
        match self {
            MaskWarning::DegenerateClustering => "W_MASK_DEGENERATE",
            MaskWarning::TiedClusterMeans => "W_MASK_TIE",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VegetationMask {
    pub width: usize,
    pub height: usize,
    pub vegetation: Vec<bool>,
    /// False where any trait was invalid; such pixels are never vegetation.
    pub defined: Vec<bool>,
    pub retained_components: usize,
    pub warnings: Vec<MaskWarning>,
}

impl VegetationMask {
    pub fn count(&self) -> usize {
        self.vegetation.iter().filter(|&&v| v).count()
    }
}

/// Standardize the five traits, project onto the retained principal
/// components, split with 2-means, and call the cluster with the higher
/// mean raw CCC vegetation. Tied means fall back to the larger cluster,
/// then the lower cluster index.
pub fn vegetation_mask(traits: &[TraitPlane], variance_target: f64, seed: u64) -> Result<VegetationMask, MaskingError> {
    if traits.len() != 5 || traits.iter().zip(TraitKind::ALL).any(|(t, k)| t.kind != k) {
        return Err(MaskingError::Shape("need the five trait planes in LAI, CAB, CCC, FAPAR, FCOVER order".into()));
    }
    let (width, height) = (traits[0].width, traits[0].height);
    let n = width * height;
    if traits.iter().any(|t| t.values.len() != n || t.valid.len() != n) {
        return Err(MaskingError::Shape("trait planes differ in size".into()));
    }
    let defined: Vec<bool> = (0..n).map(|i| traits.iter().all(|t| t.valid[i])).collect();
    let idx: Vec<usize> = (0..n).filter(|&i| defined[i]).collect();
    if idx.is_empty() {
        return Err(MaskingError::NoValidPixels);
    }
    let x: Vec<f64> = idx.iter().flat_map(|&i| traits.iter().map(move |t| t.values[i])).collect();
    let (z, _) = standardize(&x, 5)?;

    let mut warnings = Vec::new();
    let (points, dim, retained) = match fit_pca(&z, 5, variance_target) {
        Ok(p) => (p.project(&z), p.retained, p.retained),
        Err(MaskingError::Degenerate) => {
            warnings.push(MaskWarning::DegenerateClustering);
            (vec![0.0; idx.len()], 1, 0)
        }
        Err(MaskingError::TooFewPoints { .. }) => (z.clone(), 5, 5),
        Err(e) => return Err(e),
    };
    let model = kmeans(&points, dim, 2.min(idx.len()), seed, MAX_ITER)?;

    let ccc = &traits[2].values;
    let mut sum = [0.0; 2];
    let mut cnt = [0usize; 2];
    for (&a, &i) in model.assignments.iter().zip(&idx) {
        sum[a] += ccc[i];
        cnt[a] += 1;
    }
    let mean = |c: usize| if cnt[c] > 0 { sum[c] / cnt[c] as f64 } else { f64::NEG_INFINITY };
    let veg = if model.k == 1 || mean(0) > mean(1) {
        0
    } else if mean(1) > mean(0) {
        1
    } else {
        warnings.push(MaskWarning::TiedClusterMeans);
        usize::from(cnt[1] > cnt[0])
    };
    let mut vegetation = vec![false; n];
    for (&a, &i) in model.assignments.iter().zip(&idx) {
        vegetation[i] = a == veg;
    }
    Ok(VegetationMask {
        width,
        height,
        vegetation,
        defined,
        retained_components: retained,
        warnings,
    })
}

/// Binary PGM: 255 vegetation, 0 otherwise.
pub fn write_pgm(mask: &VegetationMask, path: &Path) -> Result<(), MaskingError> {
    let mut f = fs::File::create(path)?;
    write!(f, "P5\n{} {}\n255\n", mask.width, mask.height)?;
    let bytes: Vec<u8> = mask.vegetation.iter().map(|&v| if v { 255 } else { 0 }).collect();
    f.write_all(&bytes)?;
    Ok(())
}

/// `x,y,is_vegetation` for every defined pixel.
pub fn write_mask_csv(mask: &VegetationMask, path: &Path) -> Result<(), MaskingError> {
    let mut w = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(w, "x,y,is_vegetation")?;
    for i in (0..mask.vegetation.len()).filter(|&i| mask.defined[i]) {
        writeln!(w, "{},{},{}", i % mask.width, i / mask.width, u8::from(mask.vegetation[i]))?;
    }
    w.flush()?;
    Ok(())
}
