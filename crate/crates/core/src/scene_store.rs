//! Per-date raster scenes in a portable directory bundle.
//!
//! A bundle is a directory holding `meta.json` and `bands.bin`. The payload
//! is band-sequential, row-major, little-endian `f32` in stored units;
//! reflectance is `stored * reflectance_scale`. Pixels equal to the no-data
//! sentinel are invalid in that band.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::dataset::Label;

pub const META_FILE: &str = "meta.json";
pub const BANDS_FILE: &str = "bands.bin";
pub const REGISTRY_FILE: &str = "fields.json";
pub const DEFAULT_NODATA: f32 = -9999.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BandId {
    B1,
    B2,
    B3,
    B4,
    B5,
    B6,
    B7,
    B8,
    B8A,
    B9,
    B11,
    B12,
}

impl BandId {
    pub const ALL: [BandId; 12] = [
        BandId::B1,
        BandId::B2,
        BandId::B3,
        BandId::B4,
        BandId::B5,
        BandId::B6,
        BandId::B7,
        BandId::B8,
        BandId::B8A,
        BandId::B9,
        BandId::B11,
        BandId::B12,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        const NAMES: [&str; 12] = [
            "B1", "B2", "B3", "B4", "B5", "B6", "B7", "B8", "B8A", "B9", "B11", "B12",
        ];
        NAMES[self.index()]
    }

    pub fn wavelength_nm(self) -> u32 {
        const WL: [u32; 12] = [443, 490, 560, 665, 705, 740, 783, 842, 865, 945, 1610, 2190];
        WL[self.index()]
    }

    pub fn from_name(s: &str) -> Option<BandId> {
        Self::ALL.into_iter().find(|b| b.name() == s)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SceneError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed metadata: {msg}")]
    Meta { path: PathBuf, msg: String },
    #[error("payload holds {actual} bytes, header implies {expected}")]
    SizeMismatch { expected: u64, actual: u64 },
    #[error("expected 12 bands in fixed order, got {0:?}")]
    BandCount(Vec<String>),
    #[error("pixel ({x}, {y}) outside {width}x{height} scene")]
    OutOfBounds {
        x: usize,
        y: usize,
        width: usize,
        height: usize,
    },
    #[error("invalid scene: {0}")]
    Invalid(String),
}

impl SceneError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        SceneError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

fn default_nodata() -> f32 {
    DEFAULT_NODATA
}

fn default_bands() -> Vec<String> {
    BandId::ALL.iter().map(|b| b.name().to_string()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneMeta {
    pub acquisition_date: NaiveDate,
    pub cloud_fraction: f64,
    pub sun_zenith: f64,
    pub sun_azimuth: f64,
    pub view_zenith: f64,
    pub view_azimuth: f64,
    pub width: usize,
    pub height: usize,
    pub reflectance_scale: f64,
    #[serde(default = "default_nodata")]
    pub nodata: f32,
    #[serde(default = "default_bands")]
    pub bands: Vec<String>,
}

impl SceneMeta {
    pub fn validate(&self) -> Result<(), SceneError> {
        let bad = |m: String| Err(SceneError::Invalid(m));
        if !(0.0..=1.0).contains(&self.cloud_fraction) {
            return bad(format!("cloud_fraction {} not in [0, 1]", self.cloud_fraction));
        }
        for (name, z) in [("sun_zenith", self.sun_zenith), ("view_zenith", self.view_zenith)] {
            if !(0.0..90.0).contains(&z) {
                return bad(format!("{name} {z} not in [0, 90)"));
            }
        }
        for (name, a) in [("sun_azimuth", self.sun_azimuth), ("view_azimuth", self.view_azimuth)] {
            if !(0.0..360.0).contains(&a) {
                return bad(format!("{name} {a} not in [0, 360)"));
            }
        }
        if self.width == 0 || self.height == 0 {
            return bad(format!("empty raster {}x{}", self.width, self.height));
        }
        if !(self.reflectance_scale > 0.0 && self.reflectance_scale.is_finite()) {
            return bad(format!("reflectance_scale {}", self.reflectance_scale));
        }
        if self.bands != default_bands() {
            return Err(SceneError::BandCount(self.bands.clone()));
        }
        Ok(())
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }
}

/// One acquisition: 12 reflectance planes with per-band validity.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub meta: SceneMeta,
    /// `planes[band][y * width + x]`, reflectance units.
    pub planes: Vec<Vec<f64>>,
    pub valid: Vec<Vec<bool>>,
}

impl Scene {
    /// Builds a scene from reflectance planes; non-finite values are marked invalid.
    pub fn from_planes(meta: SceneMeta, planes: Vec<Vec<f64>>) -> Result<Scene, SceneError> {
        meta.validate()?;
        if planes.len() != 12 {
            return Err(SceneError::Invalid(format!("{} planes, need 12", planes.len())));
        }
        if planes.iter().any(|p| p.len() != meta.pixels()) {
            return Err(SceneError::Invalid("plane size differs from width*height".into()));
        }
        let valid = planes
            .iter()
            .map(|p| p.iter().map(|v| v.is_finite()).collect())
            .collect();
        Ok(Scene { meta, planes, valid })
    }

    pub fn width(&self) -> usize {
        self.meta.width
    }

    pub fn height(&self) -> usize {
        self.meta.height
    }

    pub fn band(&self, b: BandId) -> &[f64] {
        &self.planes[b.index()]
    }

    /// True where every band is valid.
    pub fn pixel_valid(&self, i: usize) -> bool {
        self.valid.iter().all(|m| m[i])
    }

    /// Reflectances at `(x, y)` ordered by [`BandId`], plus all-bands validity.
    pub fn pixel_spectrum(&self, x: usize, y: usize) -> Result<([f64; 12], bool), SceneError> {
        if x >= self.width() || y >= self.height() {
            return Err(SceneError::OutOfBounds {
                x,
                y,
                width: self.width(),
                height: self.height(),
            });
        }
        let i = y * self.width() + x;
        let mut s = [0.0; 12];
        for (b, v) in s.iter_mut().enumerate() {
            *v = self.planes[b][i];
        }
        Ok((s, self.pixel_valid(i)))
    }
}

pub fn load_scene(bundle: &Path) -> Result<Scene, SceneError> {
    let meta_path = bundle.join(META_FILE);
    let text = fs::read_to_string(&meta_path).map_err(|e| SceneError::io(&meta_path, e))?;
    let meta: SceneMeta = serde_json::from_str(&text).map_err(|e| SceneError::Meta {
        path: meta_path.clone(),
        msg: e.to_string(),
    })?;
    meta.validate()?;

    let bands_path = bundle.join(BANDS_FILE);
    let bytes = fs::read(&bands_path).map_err(|e| SceneError::io(&bands_path, e))?;
    let n = meta.pixels();
    let expected = (12 * n * 4) as u64;
    if bytes.len() as u64 != expected {
        return Err(SceneError::SizeMismatch {
            expected,
            actual: bytes.len() as u64,
        });
    }
    let mut planes = Vec::with_capacity(12);
    let mut valid = Vec::with_capacity(12);
    for b in 0..12 {
        let mut plane = Vec::with_capacity(n);
        let mut mask = Vec::with_capacity(n);
        for i in 0..n {
            let o = (b * n + i) * 4;
            let v = f32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
            let ok = v != meta.nodata && v.is_finite();
            mask.push(ok);
            plane.push(if ok { v as f64 * meta.reflectance_scale } else { f64::NAN });
        }
        planes.push(plane);
        valid.push(mask);
    }
    Ok(Scene { meta, planes, valid })
}

/// Writes `scene` as a bundle; invalid pixels become the no-data sentinel.
pub fn write_scene(scene: &Scene, bundle: &Path) -> Result<(), SceneError> {
    scene.meta.validate()?;
    fs::create_dir_all(bundle).map_err(|e| SceneError::io(bundle, e))?;
    let meta_path = bundle.join(META_FILE);
    let text = serde_json::to_string_pretty(&scene.meta).expect("meta serializes");
    fs::write(&meta_path, text).map_err(|e| SceneError::io(&meta_path, e))?;

    let n = scene.meta.pixels();
    let mut bytes = Vec::with_capacity(12 * n * 4);
    for (plane, mask) in scene.planes.iter().zip(&scene.valid) {
        for (v, &ok) in plane.iter().zip(mask) {
            let stored = if ok {
                (v / scene.meta.reflectance_scale) as f32
            } else {
                scene.meta.nodata
            };
            bytes.extend_from_slice(&stored.to_le_bytes());
        }
    }
    let bands_path = bundle.join(BANDS_FILE);
    fs::write(&bands_path, bytes).map_err(|e| SceneError::io(&bands_path, e))
}

/// Scenes with `cloud_fraction < max_cloud`, sorted by date.
pub fn filter_clear(mut scenes: Vec<Scene>, max_cloud: f64) -> Vec<Scene> {
    scenes.sort_by_key(|s| s.meta.acquisition_date);
    scenes.retain(|s| s.meta.cloud_fraction < max_cloud);
    scenes
}

/// Loads every bundle directly under `dir`, sorted by acquisition date.
pub fn load_scene_dir(dir: &Path) -> Result<Vec<Scene>, SceneError> {
    let mut bundles: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| SceneError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(META_FILE).is_file())
        .collect();
    bundles.sort();
    let mut scenes = bundles.iter().map(|b| load_scene(b)).collect::<Result<Vec<_>, _>>()?;
    scenes.sort_by_key(|s| s.meta.acquisition_date);
    Ok(scenes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeatherRef {
    Csv(PathBuf),
    OpenMeteo { latitude: f64, longitude: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldRecord {
    pub field_id: String,
    pub label: Label,
    pub transplant_date: NaiveDate,
    pub harvest_date: NaiveDate,
    pub scene_dir: PathBuf,
    pub weather: WeatherRef,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldRegistry {
    pub fields: Vec<FieldRecord>,
}

/// Reads `fields.json`; relative paths are resolved against its directory.
pub fn load_registry(path: &Path) -> Result<FieldRegistry, SceneError> {
    let text = fs::read_to_string(path).map_err(|e| SceneError::io(path, e))?;
    let mut reg: FieldRegistry = serde_json::from_str(&text).map_err(|e| SceneError::Meta {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    for f in &mut reg.fields {
        if f.transplant_date >= f.harvest_date {
            return Err(SceneError::Invalid(format!(
                "field {}: transplant {} not before harvest {}",
                f.field_id, f.transplant_date, f.harvest_date
            )));
        }
        if f.scene_dir.is_relative() {
            f.scene_dir = base.join(&f.scene_dir);
        }
        if let WeatherRef::Csv(p) = &mut f.weather {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
    Ok(reg)
}

pub fn write_registry(reg: &FieldRegistry, path: &Path) -> Result<(), SceneError> {
    let text = serde_json::to_string_pretty(reg).expect("registry serializes");
    fs::write(path, text).map_err(|e| SceneError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn meta(w: usize, h: usize, cloud: f64) -> SceneMeta {
        SceneMeta {
            acquisition_date: NaiveDate::from_ymd_opt(2023, 6, 1).unwrap(),
            cloud_fraction: cloud,
            sun_zenith: 30.0,
            sun_azimuth: 140.0,
            view_zenith: 5.0,
            view_azimuth: 100.0,
            width: w,
            height: h,
            reflectance_scale: 1e-4,
            nodata: DEFAULT_NODATA,
            bands: default_bands(),
        }
    }

    #[test]
    fn band_order_is_fixed() {
        assert_eq!(BandId::ALL.len(), 12);
        assert_eq!(BandId::B8A.index(), 8);
        assert_eq!(BandId::B11.wavelength_nm(), 1610);
        assert_eq!(BandId::from_name("B12"), Some(BandId::B12));
    }

    #[test]
    fn stored_value_is_scaled() {
        let dir = tempfile::tempdir().unwrap();
        let m = meta(2, 2, 0.0);
        fs::write(dir.path().join(META_FILE), serde_json::to_string(&m).unwrap()).unwrap();
        let payload: Vec<u8> = (0..48).flat_map(|_| 5000f32.to_le_bytes()).collect();
        fs::write(dir.path().join(BANDS_FILE), payload).unwrap();
        let s = load_scene(dir.path()).unwrap();
        assert!((s.planes[3][2] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn eleven_planes_is_size_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(META_FILE), serde_json::to_string(&meta(2, 2, 0.0)).unwrap()).unwrap();
        fs::write(dir.path().join(BANDS_FILE), vec![0u8; 11 * 4 * 4]).unwrap();
        assert!(matches!(
            load_scene(dir.path()),
            Err(SceneError::SizeMismatch { expected: 192, actual: 176 })
        ));
    }

    #[test]
    fn filter_is_strict_and_chronological() {
        let mk = |day: u32, c: f64| {
            let mut m = meta(1, 1, c);
            m.acquisition_date = NaiveDate::from_ymd_opt(2023, 6, day).unwrap();
            Scene::from_planes(m, vec![vec![0.1]; 12]).unwrap()
        };
        let kept = filter_clear(vec![mk(1, 0.05), mk(6, 0.12), mk(11, 0.09)], 0.10);
        let days: Vec<_> = kept.iter().map(|s| s.meta.acquisition_date.to_string()).collect();
        assert_eq!(days, ["2023-06-01", "2023-06-11"]);
        assert!(filter_clear(vec![mk(1, 0.0)], 0.0).is_empty());
        assert_eq!(filter_clear(vec![mk(3, 0.0), mk(1, 0.0)], 0.1).len(), 2);
        assert_eq!(filter_clear(vec![mk(1, 0.10)], 0.10).len(), 0);
    }

    #[test]
    fn spectrum_and_mask_propagation() {
        let mut s = Scene::from_planes(meta(2, 1, 0.0), vec![vec![0.3; 2]; 12]).unwrap();
        assert_eq!(s.pixel_spectrum(1, 0).unwrap(), ([0.3; 12], true));
        s.valid[BandId::B11.index()][0] = false;
        let (v, ok) = s.pixel_spectrum(0, 0).unwrap();
        assert!(!ok);
        assert_eq!(v.len(), 12);
        assert!(matches!(s.pixel_spectrum(2, 0), Err(SceneError::OutOfBounds { .. })));
    }

    #[test]
    fn angles_validated() {
        let mut m = meta(1, 1, 0.0);
        m.sun_zenith = 90.0;
        assert!(m.validate().is_err());
        let mut m = meta(1, 1, 0.0);
        m.bands.pop();
        assert!(matches!(m.validate(), Err(SceneError::BandCount(_))));
    }
}
