//! On-disk mini campaigns: scene bundles, weather, registry and trait networks.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{Datelike, Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::SynthError;
use crate::dataset::Label;
use crate::phenology::weather::{write_weather_csv, DailyTemp, WeatherSeries};
use crate::rng::derive_seed;
use crate::scene_store::{write_registry, write_scene, BandId, FieldRecord, FieldRegistry, Scene, SceneMeta, WeatherRef, REGISTRY_FILE};
use crate::traits_mlp::{save_mlp, Layer, MlpSpec, TraitKind, GEOMETRY_INPUTS};

pub const TRUTH_FILE: &str = "truth.json";

// B1..B12 in BandId order
const SOIL: [f64; 12] = [0.12, 0.14, 0.17, 0.22, 0.25, 0.27, 0.28, 0.30, 0.31, 0.32, 0.36, 0.33];
const CANOPY: [f64; 12] = [0.03, 0.04, 0.08, 0.04, 0.11, 0.28, 0.38, 0.45, 0.46, 0.45, 0.20, 0.10];
/// Relative change of the infested canopy at full stress.
const STRESS: [f64; 12] = [0.0, 0.0, 0.05, 0.25, 0.15, -0.05, -0.10, -0.12, -0.12, -0.10, 0.25, 0.30];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CampaignConfig {
    pub fields_per_class: usize,
    pub width: usize,
    pub height: usize,
    pub first_transplant: NaiveDate,
    pub season_days: i64,
    pub revisit_days: i64,
    /// Every `cloudy_every`-th acquisition is cloudy.
    pub cloudy_every: usize,
    pub pixel_noise: f64,
    /// Scales the infested canopy's spectral change.
    pub stress: f64,
    pub latitude: f64,
    pub longitude: f64,
    pub seed: u64,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            fields_per_class: 2,
            width: 24,
            height: 24,
            first_transplant: NaiveDate::from_ymd_opt(2023, 4, 20).expect("valid date"),
            season_days: 110,
            revisit_days: 5,
            cloudy_every: 5,
            pixel_noise: 0.01,
            stress: 1.0,
            latitude: 38.54,
            longitude: -121.74,
            seed: 42,
        }
    }
}

impl CampaignConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::Config(m.into()));
        if self.fields_per_class == 0 {
            return bad("fields_per_class must be at least 1");
        }
        if self.width < 8 || self.height < 8 {
            return bad("scenes must be at least 8x8");
        }
        if self.revisit_days < 1 || self.season_days < 12 * self.revisit_days {
            return bad("season must span at least 12 revisits");
        }
        if self.cloudy_every == 1 {
            return bad("cloudy_every = 1 leaves no clear scenes");
        }
        if !(self.pixel_noise >= 0.0 && self.pixel_noise < 0.05) {
            return bad("pixel_noise must be in [0, 0.05)");
        }
        if !self.stress.is_finite() || self.stress.abs() > 2.0 {
            return bad("stress must be in [-2, 2]");
        }
        Ok(())
    }

    pub fn fields(&self) -> Vec<FieldSpec> {
        (0..2 * self.fields_per_class)
            .map(|i| {
                let label = if i % 2 == 0 { Label::Infested } else { Label::Clean };
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, 1000 + i as u64));
                let transplant = self.first_transplant + Duration::days(rng.random_range(0..10));
                let margin_x = rng.random_range(1..=self.width / 4);
                let margin_y = rng.random_range(1..=self.height / 4);
                FieldSpec {
                    field_id: format!("field_{i:02}"),
                    label,
                    transplant_date: transplant,
                    harvest_date: transplant + Duration::days(self.season_days),
                    planted: [margin_x, margin_y, self.width - margin_x, self.height - margin_y],
                    seed: derive_seed(self.seed, 2000 + i as u64),
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSpec {
    pub field_id: String,
    pub label: Label,
    pub transplant_date: NaiveDate,
    pub harvest_date: NaiveDate,
    /// Planted rectangle `[x0, y0, x1, y1)`; everything else is bare soil.
    pub planted: [usize; 4],
    pub seed: u64,
}

impl FieldSpec {
    pub fn planted_mask(&self, width: usize, height: usize) -> Vec<bool> {
        let [x0, y0, x1, y1] = self.planted;
        (0..width * height)
            .map(|i| {
                let (x, y) = (i % width, i / width);
                x >= x0 && x < x1 && y >= y0 && y < y1
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldTruth {
    pub field_id: String,
    pub label: Label,
    pub width: usize,
    pub height: usize,
    pub vegetation: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Campaign {
    pub root: PathBuf,
    pub registry: PathBuf,
    pub mlp_dir: PathBuf,
    pub fields: Vec<FieldRecord>,
    pub truth: Vec<FieldTruth>,
}

/// Canopy development on `date`: trapezoid over the season, 0 outside it.
fn development(spec: &FieldSpec, date: NaiveDate) -> f64 {
    let len = (spec.harvest_date - spec.transplant_date).num_days() as f64;
    let d = (date - spec.transplant_date).num_days() as f64 / len;
    if d <= 0.05 || d >= 1.0 {
        0.0
    } else if d < 0.4 {
        (d - 0.05) / 0.35
    } else if d < 0.65 {
        1.0
    } else {
        (1.0 - d) / 0.35
    }
}

/// Stress grows with development, so infested fields diverge near the peak.
fn reflectance(band: usize, cover: f64, dev: f64, infested: bool, stress: f64) -> f64 {
    let mut canopy = CANOPY[band];
    if infested {
        canopy *= 1.0 + stress * STRESS[band] * dev;
    }
    let v = cover * dev;
    SOIL[band] * (1.0 - v) + canopy * v
}

fn weather_for(spec: &FieldSpec) -> Result<WeatherSeries, SynthError> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, 7));
    let start = spec.transplant_date - Duration::days(40);
    let end = spec.harvest_date + Duration::days(40);
    let mut days = Vec::new();
    for date in start.iter_days().take_while(|d| *d <= end) {
        let phase = 2.0 * std::f64::consts::PI * (date.ordinal() as f64 - 110.0) / 365.25;
        let noise: f64 = rng.sample(StandardNormal);
        // kept above any sensible base temperature so GDD accrues every day
        let mean = (20.0 + 6.0 * phase.sin() + 1.5 * noise).max(13.0);
        let range = 12.0 + 2.0 * rng.random::<f64>();
        days.push(DailyTemp {
            date,
            t_min: mean - range / 2.0,
            t_max: mean + range / 2.0,
        });
    }
    Ok(WeatherSeries::new(days)?)
}

/// Writes one field's scene bundles and weather CSV under `dir` and
/// returns its registry record with paths relative to the campaign root.
pub fn gen_scene_series(spec: &FieldSpec, cfg: &CampaignConfig, root: &Path) -> Result<FieldRecord, SynthError> {
    cfg.validate()?;
    let field_dir = root.join("fields").join(&spec.field_id);
    let scene_dir = field_dir.join("scenes");
    fs::create_dir_all(&scene_dir).map_err(|e| SynthError::io(&scene_dir, e))?;
    let weather_path = field_dir.join("weather.csv");
    write_weather_csv(&weather_for(spec)?, &weather_path)?;

    let (w, h) = (cfg.width, cfg.height);
    let planted = spec.planted_mask(w, h);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, 11));
    let cover: Vec<f64> = planted
        .iter()
        .map(|&p| if p { rng.random_range(0.85..1.0) } else { 0.0 })
        .collect();
    let infested = spec.label == Label::Infested;
    let first = spec.transplant_date - Duration::days(20);
    let last = spec.harvest_date + Duration::days(20);
    let mut date = first;
    let mut k = 0usize;
    while date <= last {
        let cloudy = cfg.cloudy_every > 1 && k % cfg.cloudy_every == cfg.cloudy_every - 1;
        let dev = development(spec, date);
        let mut planes = vec![Vec::with_capacity(w * h); 12];
        for &c in &cover {
            let haze = cloudy && rng.random::<f64>() < 0.6;
            let dropped = cloudy && rng.random::<f64>() < 0.05;
            for (b, plane) in planes.iter_mut().enumerate() {
                let noise: f64 = rng.sample(StandardNormal);
                let mut v = (reflectance(b, c, dev, infested, cfg.stress) + cfg.pixel_noise * noise).max(0.001);
                if haze {
                    v += 0.35;
                }
                plane.push(if dropped { f64::NAN } else { v });
            }
        }
        let meta = SceneMeta {
            acquisition_date: date,
            cloud_fraction: if cloudy { 0.6 } else { rng.random_range(0.0..0.05) },
            sun_zenith: 25.0 + 10.0 * ((date.ordinal() as f64 - 172.0) / 60.0).abs().min(1.5),
            sun_azimuth: 140.0 + rng.random_range(0.0..5.0),
            view_zenith: rng.random_range(2.0..9.0),
            view_azimuth: 105.0,
            width: w,
            height: h,
            reflectance_scale: 1e-4,
            nodata: crate::scene_store::DEFAULT_NODATA,
            bands: BandId::ALL.iter().map(|b| b.name().to_string()).collect(),
        };
        let scene = Scene::from_planes(meta, planes)?;
        write_scene(&scene, &scene_dir.join(date.format("%Y%m%d").to_string()))?;
        date += Duration::days(cfg.revisit_days);
        k += 1;
    }
    let rel = |p: &Path| p.strip_prefix(root).map(Path::to_path_buf).unwrap_or_else(|_| p.to_path_buf());
    Ok(FieldRecord {
        field_id: spec.field_id.clone(),
        label: spec.label,
        transplant_date: spec.transplant_date,
        harvest_date: spec.harvest_date,
        scene_dir: rel(&scene_dir),
        weather: WeatherRef::Csv(rel(&weather_path)),
    })
}

/// A single-layer network computing `intercept + sum(coef * band)` exactly.
///
/// Inputs are normalized over `[0, 1]` and outputs denormalized from
/// `[0, 2]`, so the weight is `coef / 2` and the bias absorbs the offsets.
pub fn linear_trait_spec(kind: TraitKind, terms: &[(&str, f64)], intercept: f64) -> MlpSpec {
    let n = terms.len();
    let weights: Vec<f64> = terms.iter().map(|(_, c)| c / 2.0).collect();
    let bias = intercept - 1.0 + terms.iter().map(|(_, c)| c / 2.0).sum::<f64>();
    MlpSpec {
        trait_kind: kind,
        input_names: terms.iter().map(|(n, _)| n.to_string()).collect(),
        input_min: vec![0.0; n],
        input_max: vec![1.0; n],
        layers: vec![Layer {
            weights: vec![weights],
            biases: vec![bias],
        }],
        output_min: 0.0,
        output_max: 2.0,
        valid_range: None,
    }
}

/// Stand-in trait networks for synthetic campaigns.
pub fn synth_trait_specs() -> Vec<MlpSpec> {
    let [cos_view, cos_sun, _] = GEOMETRY_INPUTS;
    vec![
        linear_trait_spec(TraitKind::LAI, &[("B8", 8.0), ("B4", -8.0)], 0.0),
        linear_trait_spec(TraitKind::CAB, &[("B7", 200.0), ("B5", -200.0)], 0.0),
        linear_trait_spec(TraitKind::CCC, &[("B8", 300.0), ("B4", -300.0), ("B11", -40.0)], 10.0),
        linear_trait_spec(TraitKind::FAPAR, &[("B8", 1.8), ("B4", -1.8), (cos_sun, 0.02)], -0.02),
        linear_trait_spec(TraitKind::FCOVER, &[("B8A", 2.0), ("B4", -2.0), (cos_view, 0.01)], -0.01),
    ]
}

/// Writes a full campaign under `root`: per-field scenes and weather, the
/// field registry, the trait networks in `mlp/`, and ground-truth masks.
pub fn gen_campaign(cfg: &CampaignConfig, root: &Path) -> Result<Campaign, SynthError> {
    cfg.validate()?;
    fs::create_dir_all(root).map_err(|e| SynthError::io(root, e))?;
    let mlp_dir = root.join("mlp");
    fs::create_dir_all(&mlp_dir).map_err(|e| SynthError::io(&mlp_dir, e))?;
    for spec in synth_trait_specs() {
        save_mlp(&spec, &mlp_dir.join(format!("{}.json", spec.trait_kind.name().to_lowercase())))?;
    }
    let specs = cfg.fields();
    let mut fields = Vec::with_capacity(specs.len());
    let mut truth = Vec::with_capacity(specs.len());
    for spec in &specs {
        fields.push(gen_scene_series(spec, cfg, root)?);
        truth.push(FieldTruth {
            field_id: spec.field_id.clone(),
            label: spec.label,
            width: cfg.width,
            height: cfg.height,
            vegetation: spec.planted_mask(cfg.width, cfg.height),
        });
    }
    let registry = root.join(REGISTRY_FILE);
    write_registry(&FieldRegistry { fields: fields.clone() }, &registry)?;
    let truth_path = root.join(TRUTH_FILE);
    fs::write(&truth_path, serde_json::to_string(&truth).expect("truth serializes"))
        .map_err(|e| SynthError::io(&truth_path, e))?;
    Ok(Campaign {
        root: root.to_path_buf(),
        registry,
        mlp_dir,
        fields,
        truth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phenology::{cumulative_gdd, read_weather_csv};
    use crate::scene_store::{load_registry, load_scene_dir};
    use crate::traits_mlp::{infer_trait, load_trait_set, Geometry};

    fn tiny() -> CampaignConfig {
        CampaignConfig {
            fields_per_class: 1,
            width: 10,
            height: 8,
            ..CampaignConfig::default()
        }
    }

    #[test]
    fn linear_spec_is_exact() {
        let spec = linear_trait_spec(TraitKind::LAI, &[("B8", 8.0), ("B4", -8.0)], 0.5);
        let mut s = [0.0; 12];
        s[BandId::B8.index()] = 0.45;
        s[BandId::B4.index()] = 0.05;
        let g = Geometry {
            sun_zenith: 30.0,
            sun_azimuth: 0.0,
            view_zenith: 0.0,
            view_azimuth: 0.0,
        };
        let v = infer_trait(&spec, &s, true, &g).value;
        assert!((v - (0.5 + 8.0 * 0.4)).abs() < 1e-12);
    }

    #[test]
    fn campaign_loads_back() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny();
        let c = gen_campaign(&cfg, dir.path()).unwrap();
        let reg = load_registry(&c.registry).unwrap();
        assert_eq!(reg.fields.len(), 2);
        assert_eq!(load_trait_set(&c.mlp_dir).unwrap().len(), 5);
        for f in &reg.fields {
            let scenes = load_scene_dir(&f.scene_dir).unwrap();
            assert!(scenes.iter().filter(|s| s.meta.cloud_fraction < 0.2).count() >= 12);
            assert!(scenes.iter().any(|s| s.meta.cloud_fraction > 0.5));
            let WeatherRef::Csv(p) = &f.weather else { panic!() };
            let w = read_weather_csv(p).unwrap();
            let curve = cumulative_gdd(&w, f.transplant_date, f.harvest_date, 10.0).unwrap();
            assert!(curve.points.windows(2).all(|p| p[1].1 > p[0].1));
        }
    }

    #[test]
    fn campaign_is_reproducible() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        gen_campaign(&tiny(), a.path()).unwrap();
        gen_campaign(&tiny(), b.path()).unwrap();
        let read = |root: &Path| fs::read(root.join("fields/field_01/scenes/20230509/bands.bin")).ok();
        let first = read(a.path());
        assert_eq!(first, read(b.path()));
        assert_eq!(
            fs::read(a.path().join("fields/field_00/weather.csv")).unwrap(),
            fs::read(b.path().join("fields/field_00/weather.csv")).unwrap()
        );
    }

    #[test]
    fn bad_config_rejected() {
        assert!(CampaignConfig { season_days: 30, ..tiny() }.validate().is_err());
        assert!(CampaignConfig { width: 4, ..tiny() }.validate().is_err());
    }

    #[test]
    fn stages_and_mask_recovered() {
        use crate::masking::vegetation_mask;
        use crate::phenology::{detect_stages, StageParams};
        use crate::scene_store::filter_clear;
        use crate::traits_mlp::infer_traits_plane;

        let dir = tempfile::tempdir().unwrap();
        let c = gen_campaign(&tiny(), dir.path()).unwrap();
        let specs = load_trait_set(&c.mlp_dir).unwrap();
        for (f, truth) in c.fields.iter().zip(&c.truth) {
            let scenes = filter_clear(load_scene_dir(&dir.path().join(&f.scene_dir)).unwrap(), 0.2);
            let traits: Vec<_> = scenes.iter().map(|s| infer_traits_plane(s, &specs).unwrap()).collect();
            let series: Vec<_> = scenes
                .iter()
                .zip(&traits)
                .map(|(s, t)| {
                    let ccc = &t[2];
                    let v: Vec<f64> = ccc.values.iter().zip(&ccc.valid).filter(|p| *p.1).map(|p| *p.0).collect();
                    (s.meta.acquisition_date, v.iter().sum::<f64>() / v.len() as f64)
                })
                .collect();
            let st = detect_stages(&series, &StageParams::default()).unwrap();
            assert!((st.transplant_date - f.transplant_date).num_days().abs() <= 15, "{st:?}");
            assert!((st.harvest_date - f.harvest_date).num_days().abs() <= 40, "{st:?}");
            let peak = scenes.iter().position(|s| s.meta.acquisition_date == st.peak_date).unwrap();
            let mask = vegetation_mask(&traits[peak], 0.95, 1).unwrap();
            let agree = mask.vegetation.iter().zip(&truth.vegetation).filter(|(a, b)| a == b).count();
            assert!(agree as f64 / truth.vegetation.len() as f64 >= 0.99, "{agree}");
        }
    }
}
