//! Pipeline stages. Each stage reads the portable outputs of earlier stages
//! from the run directory and writes its own under `<out>/<stage>/`.

use std::fs;
use std::path::{Path, PathBuf};

use broomscan_core::analysis::report::{write_confusion_csv, write_history_csv, write_importance_csv, write_metrics_csv};
use broomscan_core::analysis::{
    confusion, emit_report, kde, metrics, permutation_importance, AnalysisError, ConfusionMatrix, DensityCurve,
    ImportanceReport, MetricSet, ReportInputs,
};
use broomscan_core::dataset::{Dataset, Label};
use broomscan_core::indices::{compute_all, IndexKind};
use broomscan_core::lstm::{cross_validate, load_checkpoint_as, save_checkpoint, CvSplit, EpochStats};
use broomscan_core::masking::{vegetation_mask, write_mask_csv, write_pgm, VegetationMask};
use broomscan_core::phenology::{
    assemble_feature_stack, cumulative_gdd, detect_stages, feature_names, read_weather_csv, write_weather_csv,
    FeaturePlanes, OpenMeteoClient, StageEstimate, N_FEATURES,
};
use broomscan_core::rng::derive_seed;
use broomscan_core::scene_store::{
    filter_clear, load_registry, load_scene_dir, write_registry, write_scene, FieldRecord, FieldRegistry, Scene,
    WeatherRef, REGISTRY_FILE,
};
use broomscan_core::synth::{bayes_oracle, gen_campaign, gen_dataset, OracleEstimate};
use broomscan_core::traits_mlp::{infer_traits_plane, load_trait_set, TraitKind, TraitPlane};
use log::{info, warn};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{DataSource, ImportanceSet, RunConfig};
use crate::error::CliError;
use crate::manifest::{inputs_hash, list_outputs, Manifest, FORMAT_VERSION};
use crate::planes::{read_planes, write_planes};

// seed streams for stages that draw random numbers
const STREAM_MASK: u64 = 6;
const STREAM_IMPORTANCE: u64 = 5;
const STREAM_ORACLE: u64 = 8;

const DATASET_STEM: &str = "dataset";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    Synth,
    Ingest,
    Indices,
    Traits,
    Mask,
    Align,
    Train,
    Evaluate,
    Importance,
    Report,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Ingest => "ingest",
            Stage::Indices => "indices",
            Stage::Traits => "traits",
            Stage::Mask => "mask",
            Stage::Align => "align",
            Stage::Train => "train",
            Stage::Evaluate => "evaluate",
            Stage::Importance => "importance",
            Stage::Report => "report",
        }
    }

    /// Stages run by `pipeline` for a data source, in order.
    pub fn pipeline(source: DataSource) -> Vec<Stage> {
        use Stage::*;
        let tail = [Train, Evaluate, Importance, Report];
        let raster = [Ingest, Indices, Traits, Mask, Align];
        match source {
            DataSource::Scenes => raster.into_iter().chain(tail).collect(),
            DataSource::Campaign => [Synth].into_iter().chain(raster).chain(tail).collect(),
            DataSource::Synthetic => [Synth].into_iter().chain(tail).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageStatus {
    Ran,
    UpToDate,
}

pub struct Context {
    pub cfg: RunConfig,
    pub force: bool,
}

impl Context {
    pub fn new(cfg: RunConfig, force: bool) -> Context {
        Context { cfg, force }
    }

    pub fn out(&self) -> &Path {
        &self.cfg.out_dir
    }

    pub fn stage_dir(&self, stage: Stage) -> PathBuf {
        self.out().join(stage.name())
    }

    fn dataset_dir(&self) -> PathBuf {
        match self.cfg.data.source {
            DataSource::Synthetic => self.stage_dir(Stage::Synth),
            _ => self.stage_dir(Stage::Align),
        }
    }

    fn dataset_inputs(&self) -> Vec<PathBuf> {
        let d = self.dataset_dir();
        vec![d.join(format!("{DATASET_STEM}.json")), d.join(format!("{DATASET_STEM}.bin"))]
    }

    fn load_dataset(&self) -> Result<Dataset, CliError> {
        Ok(Dataset::load(&self.dataset_dir(), DATASET_STEM)?)
    }

    fn source_registry(&self) -> Result<PathBuf, CliError> {
        match self.cfg.data.source {
            DataSource::Campaign => Ok(self.stage_dir(Stage::Synth).join("campaign").join(REGISTRY_FILE)),
            _ => self
                .cfg
                .paths
                .registry
                .clone()
                .ok_or_else(|| CliError::Config("paths.registry is not set".into())),
        }
    }

    fn mlp_dir(&self) -> Result<PathBuf, CliError> {
        match self.cfg.data.source {
            DataSource::Campaign => Ok(self.stage_dir(Stage::Synth).join("campaign").join("mlp")),
            _ => self
                .cfg
                .paths
                .mlp_dir
                .clone()
                .ok_or_else(|| CliError::Config("paths.mlp_dir is not set".into())),
        }
    }

    /// Field registry written by `ingest`, paths resolved.
    fn ingested(&self) -> Result<FieldRegistry, CliError> {
        let p = self.stage_dir(Stage::Ingest).join(REGISTRY_FILE);
        if !p.is_file() {
            return Err(CliError::Data("no ingested registry; run `ingest` first".into()));
        }
        Ok(load_registry(&p)?)
    }

    fn execute(
        &self,
        stage: Stage,
        parameters: serde_json::Value,
        inputs: Vec<PathBuf>,
        body: impl FnOnce(&Path) -> Result<(), CliError>,
    ) -> Result<StageStatus, CliError> {
        let dir = self.stage_dir(stage);
        let hash = inputs_hash(stage.name(), &parameters, &inputs)?;
        if !self.force {
            if let Some(m) = Manifest::read(&dir) {
                if m.inputs_hash == hash && m.version == FORMAT_VERSION && m.outputs_present(&dir) {
                    info!("{}: up to date", stage.name());
                    return Ok(StageStatus::UpToDate);
                }
            }
        }
        if dir.exists() {
            fs::remove_dir_all(&dir)?;
        }
        fs::create_dir_all(&dir)?;
        info!("{}: running", stage.name());
        body(&dir)?;
        Manifest {
            stage: stage.name().to_string(),
            version: FORMAT_VERSION,
            inputs_hash: hash,
            parameters,
            outputs: list_outputs(&dir)?,
        }
        .write(&dir)?;
        Ok(StageStatus::Ran)
    }

    pub fn run(&self, stage: Stage) -> Result<StageStatus, CliError> {
        let r = match stage {
            Stage::Synth => self.synth(),
            Stage::Ingest => self.ingest(),
            Stage::Indices => self.indices(),
            Stage::Traits => self.traits(),
            Stage::Mask => self.mask(),
            Stage::Align => self.align(),
            Stage::Train => self.train(),
            Stage::Evaluate => self.evaluate(),
            Stage::Importance => self.importance(),
            Stage::Report => self.report(),
        };
        r.map_err(|e| e.in_stage(stage.name()))
    }

    pub fn pipeline(&self) -> Result<Vec<(Stage, StageStatus)>, CliError> {
        Stage::pipeline(self.cfg.data.source)
            .into_iter()
            .map(|s| self.run(s).map(|st| (s, st)))
            .collect()
    }

    fn synth(&self) -> Result<StageStatus, CliError> {
        let cfg = &self.cfg;
        let synthetic = cfg.data.source == DataSource::Synthetic;
        let params = json!({
            "seed": cfg.seed,
            "dataset": synthetic,
            "n_steps": cfg.phenology.n_steps,
            "synth": cfg.synth,
        });
        self.execute(Stage::Synth, params, vec![], |dir| {
            if synthetic {
                let sc = cfg.synth.config(cfg.phenology.n_steps, cfg.seed);
                let (ds, truth) = gen_dataset(&sc)?;
                ds.save(dir, DATASET_STEM)?;
                write_json(&dir.join("truth.json"), &truth)?;
                let oracle = bayes_oracle(&sc, cfg.synth.oracle_samples, derive_seed(cfg.seed, STREAM_ORACLE))?;
                info!(
                    "bayes oracle accuracy {:.4} +/- {:.4}",
                    oracle.accuracy, oracle.half_width
                );
                write_json(&dir.join("oracle.json"), &oracle)?;
            } else {
                gen_campaign(&cfg.synth.campaign.config(cfg.seed), &dir.join("campaign"))?;
            }
            Ok(())
        })
    }

    fn ingest(&self) -> Result<StageStatus, CliError> {
        let cfg = &self.cfg;
        let registry_path = self.source_registry()?;
        if !registry_path.is_file() {
            let msg = format!("field registry {} not found", registry_path.display());
            return Err(match cfg.data.source {
                DataSource::Campaign => CliError::Data(format!("{msg}; run `synth` first")),
                _ => CliError::Config(msg),
            });
        }
        let registry = load_registry(&registry_path)?;
        let mut inputs = vec![registry_path.clone()];
        for f in &registry.fields {
            inputs.push(f.scene_dir.clone());
            if let WeatherRef::Csv(p) = &f.weather {
                inputs.push(p.clone());
            }
        }
        let params = json!({ "max_cloud": cfg.ingest.max_cloud, "registry": registry });
        let cache_dir = cfg.paths.cache_dir.clone();
        self.execute(Stage::Ingest, params, inputs, |dir| {
            let mut records = Vec::new();
            let mut summary = Vec::new();
            for f in &registry.fields {
                let all = load_scene_dir(&f.scene_dir)?;
                let total = all.len();
                let clear = filter_clear(all, cfg.ingest.max_cloud);
                info!("{}: {} of {} scenes below cloud threshold", f.field_id, clear.len(), total);
                if clear.len() < 5 {
                    return Err(CliError::Data(format!(
                        "field {}: only {} clear scenes, need at least 5",
                        f.field_id,
                        clear.len()
                    )));
                }
                let field_dir = dir.join(&f.field_id);
                for s in &clear {
                    write_scene(s, &field_dir.join("scenes").join(date_key(s.meta.acquisition_date)))?;
                }
                let start = clear[0].meta.acquisition_date.min(f.transplant_date);
                let end = clear[clear.len() - 1].meta.acquisition_date.max(f.harvest_date);
                let weather = match &f.weather {
                    WeatherRef::Csv(p) => read_weather_csv(p)?,
                    WeatherRef::OpenMeteo { latitude, longitude } => {
                        OpenMeteoClient::new(&cache_dir).fetch(*latitude, *longitude, start, end)?
                    }
                };
                for d in [start, end] {
                    if weather.day(d).is_none() {
                        return Err(CliError::Data(format!("field {}: weather does not cover {d}", f.field_id)));
                    }
                }
                write_weather_csv(&weather, &field_dir.join("weather.csv"))?;
                records.push(FieldRecord {
                    scene_dir: PathBuf::from(&f.field_id).join("scenes"),
                    weather: WeatherRef::Csv(PathBuf::from(&f.field_id).join("weather.csv")),
                    ..f.clone()
                });
                summary.push(json!({ "field_id": f.field_id, "scenes": total, "clear": clear.len() }));
            }
            write_registry(&FieldRegistry { fields: records }, &dir.join(REGISTRY_FILE))?;
            write_json(&dir.join("summary.json"), &summary)
        })
    }

    fn indices(&self) -> Result<StageStatus, CliError> {
        let registry = self.ingested()?;
        let inputs = vec![self.stage_dir(Stage::Ingest)];
        self.execute(Stage::Indices, json!({}), inputs, |dir| {
            let names: Vec<&str> = IndexKind::ALL.iter().map(|k| k.name()).collect();
            for f in &registry.fields {
                fs::create_dir_all(dir.join(&f.field_id))?;
                for s in load_scene_dir(&f.scene_dir)? {
                    let planes = compute_all(&s);
                    let refs: Vec<&[f64]> = planes.iter().map(|p| p.values.as_slice()).collect();
                    let path = dir.join(&f.field_id).join(format!("{}.csv", date_key(s.meta.acquisition_date)));
                    write_planes(&path, s.width(), &names, &refs)?;
                }
            }
            Ok(())
        })
    }

    fn traits(&self) -> Result<StageStatus, CliError> {
        let registry = self.ingested()?;
        let mlp_dir = self.mlp_dir()?;
        if !mlp_dir.is_dir() {
            return Err(CliError::Config(format!("trait network directory {} not found", mlp_dir.display())));
        }
        let specs = load_trait_set(&mlp_dir)?;
        let inputs = vec![self.stage_dir(Stage::Ingest), mlp_dir];
        self.execute(Stage::Traits, json!({}), inputs, |dir| {
            let names: Vec<&str> = TraitKind::ALL.iter().map(|k| k.name()).collect();
            let mut summary = Vec::new();
            for f in &registry.fields {
                fs::create_dir_all(dir.join(&f.field_id))?;
                for s in load_scene_dir(&f.scene_dir)? {
                    let planes = infer_traits_plane(&s, &specs)?;
                    let implausible: usize = planes
                        .iter()
                        .map(|p| p.valid.iter().zip(&p.plausible).filter(|(v, ok)| **v && !**ok).count())
                        .sum();
                    let masked: Vec<Vec<f64>> = planes.iter().map(nan_invalid).collect();
                    let refs: Vec<&[f64]> = masked.iter().map(Vec::as_slice).collect();
                    let key = date_key(s.meta.acquisition_date);
                    write_planes(&dir.join(&f.field_id).join(format!("{key}.csv")), s.width(), &names, &refs)?;
                    summary.push(json!({ "field_id": f.field_id, "date": key, "implausible": implausible }));
                }
            }
            write_json(&dir.join("summary.json"), &summary)
        })
    }

    fn mask(&self) -> Result<StageStatus, CliError> {
        let cfg = &self.cfg;
        let registry = self.ingested()?;
        let traits_dir = self.stage_dir(Stage::Traits);
        let inputs = vec![traits_dir.clone()];
        let params = json!({
            "seed": cfg.seed,
            "variance_target": cfg.mask.variance_target,
            "stages": cfg.phenology.stage_params(),
        });
        self.execute(Stage::Mask, params, inputs, |dir| {
            for f in &registry.fields {
                let scenes = read_trait_scenes(&traits_dir.join(&f.field_id))?;
                let series: Vec<_> = scenes
                    .iter()
                    .map(|(date, planes)| {
                        let ccc = &planes[2];
                        let vals: Vec<f64> = ccc.values.iter().zip(&ccc.valid).filter(|p| *p.1).map(|p| *p.0).collect();
                        let mean = if vals.is_empty() {
                            f64::NAN
                        } else {
                            vals.iter().sum::<f64>() / vals.len() as f64
                        };
                        (*date, mean)
                    })
                    .filter(|p| p.1.is_finite())
                    .collect();
                let stages = detect_stages(&series, &cfg.phenology.stage_params())?;
                let peak = scenes
                    .iter()
                    .find(|(d, _)| *d == stages.peak_date)
                    .expect("peak is an observation date");
                let mask = vegetation_mask(&peak.1, cfg.mask.variance_target, derive_seed(cfg.seed, STREAM_MASK))?;
                for w in &mask.warnings {
                    warn!("{}: {} ({:?})", f.field_id, w.code(), w);
                }
                info!(
                    "{}: stages {} / {} / {}, {} vegetation pixels",
                    f.field_id,
                    stages.transplant_date,
                    stages.peak_date,
                    stages.harvest_date,
                    mask.count()
                );
                let fd = dir.join(&f.field_id);
                fs::create_dir_all(&fd)?;
                write_json(&fd.join("stages.json"), &stages)?;
                write_json(&fd.join("mask.json"), &mask)?;
                write_mask_csv(&mask, &fd.join("mask.csv"))?;
                write_pgm(&mask, &fd.join("mask.pgm"))?;
            }
            Ok(())
        })
    }

    fn align(&self) -> Result<StageStatus, CliError> {
        let cfg = &self.cfg;
        let registry = self.ingested()?;
        let dirs = [Stage::Ingest, Stage::Indices, Stage::Traits, Stage::Mask].map(|s| self.stage_dir(s));
        let params = json!({ "t_base": cfg.phenology.t_base, "n_steps": cfg.phenology.n_steps });
        self.execute(Stage::Align, params, dirs.to_vec(), |dir| {
            let [_, idx_dir, trait_dir, mask_dir] = &dirs;
            let mut all: Option<Dataset> = None;
            let mut peaks = Vec::new();
            let mut summary = Vec::new();
            for f in &registry.fields {
                let stages: StageEstimate = read_json(&mask_dir.join(&f.field_id).join("stages.json"))?;
                let mask: VegetationMask = read_json(&mask_dir.join(&f.field_id).join("mask.json"))?;
                let WeatherRef::Csv(wpath) = &f.weather else {
                    return Err(CliError::Data("ingested weather must be a CSV".into()));
                };
                let weather = read_weather_csv(wpath)?;
                let curve = cumulative_gdd(&weather, stages.transplant_date, stages.harvest_date, cfg.phenology.t_base)?;
                let features = load_scene_dir(&f.scene_dir)?
                    .iter()
                    .map(|s| feature_planes(s, &idx_dir.join(&f.field_id), &trait_dir.join(&f.field_id)))
                    .collect::<Result<Vec<_>, _>>()?;
                let (stack, skipped) =
                    assemble_feature_stack(f, &features, &mask.vegetation, &curve, &stages, cfg.phenology.n_steps)?;
                if skipped > 0 {
                    warn!("{}: skipped {skipped} pixels without enough valid observations", f.field_id);
                }
                info!("{}: {} pixels aligned, peak step {}", f.field_id, stack.n_pixels(), stack.peak_step);
                summary.push(json!({
                    "field_id": f.field_id,
                    "label": f.label,
                    "pixels": stack.n_pixels(),
                    "skipped": skipped,
                    "peak_step": stack.peak_step,
                    "harvest_gdd": curve.total(),
                }));
                peaks.push(stack.peak_step);
                let ds = stack.to_dataset()?;
                match &mut all {
                    Some(a) => a.extend(&ds)?,
                    None => all = Some(ds),
                }
            }
            let mut ds = all.ok_or_else(|| CliError::Data("registry has no fields".into()))?;
            peaks.sort_unstable();
            ds.peak_step = peaks.get(peaks.len() / 2).copied();
            ds.save(dir, DATASET_STEM)?;
            write_json(&dir.join("fields.json"), &summary)
        })
    }

    fn train(&self) -> Result<StageStatus, CliError> {
        let cfg = &self.cfg;
        let params = json!({ "seed": cfg.seed, "lstm": cfg.lstm, "train": cfg.train });
        self.execute(Stage::Train, params, self.dataset_inputs(), |dir| {
            let data = self.load_dataset()?;
            let lstm = cfg.lstm.config(data.n_features, data.seq_len);
            let tc = cfg.train.config(cfg.seed);
            info!(
                "training on {} samples ({} features x {} steps), {} folds, {} epochs",
                data.len(),
                data.n_features,
                data.seq_len,
                tc.folds,
                tc.epochs
            );
            let cv = cross_validate(&data, &lstm, &tc)?;
            save_checkpoint(&cv.final_fit.classifier, &dir.join("model.ckpt"))?;
            write_json(&dir.join("split.json"), &cv.split)?;
            let history = cv.mean_history();
            write_json(&dir.join("history.json"), &history)?;
            write_history_csv(&dir.join("history.csv"), &history)?;
            write_history_csv(&dir.join("final_history.csv"), &cv.final_fit.history)?;
            let folds: Vec<_> = cv
                .folds
                .iter()
                .map(|f| json!({ "fold": f.fold, "val_accuracy": f.val_accuracy, "val_loss": f.val_loss }))
                .collect();
            write_json(
                &dir.join("cv.json"),
                &json!({ "folds": folds, "mean_fold_accuracy": cv.mean_fold_accuracy() }),
            )
        })
    }

    fn trained(&self, data: &Dataset) -> Result<(broomscan_core::lstm::Classifier, CvSplit), CliError> {
        let dir = self.stage_dir(Stage::Train);
        let path = dir.join("model.ckpt");
        if !path.is_file() {
            return Err(CliError::Data("no trained model; run `train` first".into()));
        }
        let lstm = self.cfg.lstm.config(data.n_features, data.seq_len);
        let model = load_checkpoint_as(&path, &lstm)?;
        let split: CvSplit = read_json(&dir.join("split.json"))?;
        if split.test.iter().chain(split.folds.iter().flatten()).any(|&i| i >= data.len()) {
            return Err(CliError::Data("split does not match the dataset".into()));
        }
        Ok((model, split))
    }

    fn evaluate(&self) -> Result<StageStatus, CliError> {
        let mut inputs = self.dataset_inputs();
        inputs.push(self.stage_dir(Stage::Train));
        self.execute(Stage::Evaluate, json!({}), inputs, |dir| {
            let data = self.load_dataset()?;
            let (model, split) = self.trained(&data)?;
            let test = data.subset(&split.test);
            let pred = model.predict(&test)?;
            let cm = confusion(&test.labels, &pred.labels)?;
            let m = metrics(&cm);
            info!(
                "test accuracy {:.4}, precision {:?}, recall {:?}, f1 {:?}",
                m.accuracy, m.precision, m.recall, m.f1
            );
            write_metrics_csv(&dir.join("metrics.csv"), &m)?;
            write_confusion_csv(&dir.join("confusion.csv"), &cm)?;
            let mut w = csv::Writer::from_path(dir.join("predictions.csv"))?;
            w.write_record(["sample", "label", "probability", "predicted"])?;
            for (i, (&p, &l)) in pred.probabilities.iter().zip(&pred.labels).enumerate() {
                let id = test.sample_ids.get(i).cloned().unwrap_or_else(|| split.test[i].to_string());
                w.write_record([id, test.labels[i].to_string(), p.to_string(), l.to_string()])?;
            }
            w.flush()?;
            write_json(
                &dir.join("evaluation.json"),
                &Evaluation {
                    n_test: test.len(),
                    confusion: cm,
                    metrics: m,
                },
            )
        })
    }

    fn importance(&self) -> Result<StageStatus, CliError> {
        let cfg = &self.cfg;
        let mut inputs = self.dataset_inputs();
        inputs.push(self.stage_dir(Stage::Train));
        let params = json!({ "seed": cfg.seed, "importance": cfg.importance });
        self.execute(Stage::Importance, params, inputs, |dir| {
            let data = self.load_dataset()?;
            let (model, split) = self.trained(&data)?;
            let rows = match cfg.importance.on {
                ImportanceSet::Test => split.test.clone(),
                ImportanceSet::Train => split.non_test(),
            };
            let subset = data.subset(&rows);
            let rep = permutation_importance(
                &model,
                &subset,
                cfg.importance.repeats,
                derive_seed(cfg.seed, STREAM_IMPORTANCE),
            )?;
            info!("most important: {:?}", rep.top(5));
            write_importance_csv(&dir.join("importance.csv"), &rep)?;
            write_json(&dir.join("importance.json"), &rep)
        })
    }

    fn report(&self) -> Result<StageStatus, CliError> {
        let cfg = &self.cfg;
        let mut inputs = self.dataset_inputs();
        inputs.extend([Stage::Train, Stage::Evaluate, Stage::Importance].map(|s| self.stage_dir(s)));
        let params = json!({ "density": cfg.density });
        self.execute(Stage::Report, params, inputs, |dir| {
            let data = self.load_dataset()?;
            let eval: Evaluation = read_json(&self.stage_dir(Stage::Evaluate).join("evaluation.json"))?;
            let history: Vec<EpochStats> = read_json(&self.stage_dir(Stage::Train).join("history.json"))?;
            let importance: ImportanceReport = read_json(&self.stage_dir(Stage::Importance).join("importance.json"))?;
            let densities = peak_densities(&data, &cfg.density.features, cfg.density.grid_size)?;
            emit_report(
                &ReportInputs {
                    metrics: &eval.metrics,
                    confusion: &eval.confusion,
                    history: &history,
                    importance: Some(&importance),
                    densities: &densities,
                },
                dir,
            )?;
            if cfg.data.source == DataSource::Synthetic {
                let oracle: OracleEstimate = read_json(&self.stage_dir(Stage::Synth).join("oracle.json"))?;
                write_json(
                    &dir.join("oracle.json"),
                    &json!({
                        "oracle_accuracy": oracle.accuracy,
                        "oracle_half_width": oracle.half_width,
                        "test_accuracy": eval.metrics.accuracy,
                        "ratio": eval.metrics.accuracy / oracle.accuracy,
                    }),
                )?;
            }
            Ok(())
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Evaluation {
    pub n_test: usize,
    pub confusion: ConfusionMatrix,
    pub metrics: MetricSet,
}

fn date_key(d: chrono::NaiveDate) -> String {
    d.format("%Y%m%d").to_string()
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), CliError> {
    fs::write(path, serde_json::to_vec_pretty(value).expect("value serializes"))?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    serde_json::from_slice(&bytes).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn nan_invalid(p: &TraitPlane) -> Vec<f64> {
    p.values.iter().zip(&p.valid).map(|(&v, &ok)| if ok { v } else { f64::NAN }).collect()
}

/// Trait planes of every scene of one field, in date order.
fn read_trait_scenes(dir: &Path) -> Result<Vec<(chrono::NaiveDate, Vec<TraitPlane>)>, CliError> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .collect();
    files.sort();
    files
        .iter()
        .map(|p| {
            let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
            let date = chrono::NaiveDate::parse_from_str(stem, "%Y%m%d")
                .map_err(|_| CliError::Data(format!("{}: file name is not a date", p.display())))?;
            let t = read_planes(p)?;
            let names: Vec<&str> = TraitKind::ALL.iter().map(|k| k.name()).collect();
            if t.names != names {
                return Err(CliError::Data(format!("{}: unexpected trait columns", p.display())));
            }
            let planes = TraitKind::ALL
                .iter()
                .zip(t.planes)
                .map(|(&kind, values)| TraitPlane {
                    kind,
                    width: t.width,
                    height: t.height,
                    valid: values.iter().map(|v| v.is_finite()).collect(),
                    plausible: vec![true; values.len()],
                    values,
                })
                .collect();
            Ok((date, planes))
        })
        .collect()
}

/// Bands from the scene, indices and traits from the stage CSVs.
fn feature_planes(scene: &Scene, idx_dir: &Path, trait_dir: &Path) -> Result<FeaturePlanes, CliError> {
    let key = date_key(scene.meta.acquisition_date);
    let mut planes: Vec<Vec<f64>> = scene
        .planes
        .iter()
        .zip(&scene.valid)
        .map(|(p, m)| p.iter().zip(m).map(|(&v, &ok)| if ok { v } else { f64::NAN }).collect())
        .collect();
    for d in [idx_dir, trait_dir] {
        let t = read_planes(&d.join(format!("{key}.csv")))?;
        if t.width != scene.width() || t.height != scene.height() {
            return Err(CliError::Data(format!("{key}: raster size differs from scene")));
        }
        planes.extend(t.planes);
    }
    let names = feature_names();
    if planes.len() != N_FEATURES {
        return Err(CliError::Data(format!("{key}: {} feature planes, need {N_FEATURES}", planes.len())));
    }
    debug_assert_eq!(names.len(), N_FEATURES);
    Ok(FeaturePlanes {
        date: scene.meta.acquisition_date,
        width: scene.width(),
        height: scene.height(),
        planes,
    })
}

/// Class-wise densities of each feature at the dataset's peak step.
fn peak_densities(data: &Dataset, features: &[String], grid: usize) -> Result<Vec<DensityCurve>, CliError> {
    let t = data.peak_step.unwrap_or(data.seq_len / 2).min(data.seq_len - 1);
    let mut out = Vec::new();
    for name in features {
        let f = data
            .feature_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| CliError::Config(format!("density feature {name:?} not in dataset")))?;
        for label in [Label::Infested, Label::Clean] {
            let vals: Vec<f64> = (0..data.len())
                .filter(|&i| data.labels[i] == label.as_u8())
                .map(|i| data.get(i, t, f))
                .collect();
            match kde(name, label.name(), &vals, grid) {
                Ok(c) => out.push(c),
                Err(e @ (AnalysisError::DegenerateSpike | AnalysisError::TooFewValues(_))) => {
                    warn!("no density for {name} / {}: {e}", label.name())
                }
                Err(e) => return Err(e.into()),
            }
        }
    }
    Ok(out)
}
