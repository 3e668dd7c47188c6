//! Library-level runs from generated inputs to trained classifiers.

use broomscan_core::analysis::permutation_importance;
use broomscan_core::dataset::Dataset;
use broomscan_core::lstm::{cross_validate, LstmConfig, TrainConfig};
use broomscan_core::masking::vegetation_mask;
use broomscan_core::phenology::{
    assemble_feature_stack, cumulative_gdd, detect_stages, read_weather_csv, scene_features, StageParams,
    DEFAULT_T_BASE,
};
use broomscan_core::rng::derive_seed;
use broomscan_core::scene_store::{filter_clear, load_registry, load_scene_dir, WeatherRef};
use broomscan_core::synth::{bayes_oracle, gen_campaign, gen_dataset, CampaignConfig, SynthConfig};
use broomscan_core::traits_mlp::{infer_traits_plane, load_trait_set, TraitKind};

fn small_lstm(input: usize, steps: usize) -> LstmConfig {
    LstmConfig {
        input_size: input,
        lstm_units: vec![16],
        dropout: vec![0.0],
        dense_units: vec![8],
        sequence_length: steps,
    }
}

#[test]
fn campaign_to_classifier() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = CampaignConfig {
        width: 12,
        height: 12,
        ..CampaignConfig::default()
    };
    let c = gen_campaign(&cfg, dir.path()).unwrap();
    let specs = load_trait_set(&c.mlp_dir).unwrap();
    let registry = load_registry(&c.registry).unwrap();
    let ccc = TraitKind::ALL.iter().position(|k| *k == TraitKind::CCC).unwrap();

    let mut data: Option<Dataset> = None;
    for field in &registry.fields {
        let scenes = filter_clear(load_scene_dir(&field.scene_dir).unwrap(), 0.2);
        let traits: Vec<_> = scenes.iter().map(|s| infer_traits_plane(s, &specs).unwrap()).collect();
        let series: Vec<_> = scenes
            .iter()
            .zip(&traits)
            .map(|(s, t)| {
                let p = &t[ccc];
                let v: Vec<f64> = p.values.iter().zip(&p.valid).filter(|q| *q.1).map(|q| *q.0).collect();
                (s.meta.acquisition_date, v.iter().sum::<f64>() / v.len() as f64)
            })
            .collect();
        let stages = detect_stages(&series, &StageParams::default()).unwrap();
        let peak = scenes.iter().position(|s| s.meta.acquisition_date == stages.peak_date).unwrap();
        let mask = vegetation_mask(&traits[peak], 0.95, 1).unwrap();
        let WeatherRef::Csv(path) = &field.weather else {
            panic!("campaign weather should be a CSV")
        };
        let weather = read_weather_csv(path).unwrap();
        let curve = cumulative_gdd(&weather, stages.transplant_date, stages.harvest_date, DEFAULT_T_BASE).unwrap();
        let planes: Vec<_> = scenes.iter().map(|s| scene_features(s, &specs).unwrap()).collect();
        let (stack, _) = assemble_feature_stack(field, &planes, &mask.vegetation, &curve, &stages, 48).unwrap();
        let ds = stack.to_dataset().unwrap();
        match &mut data {
            Some(d) => d.extend(&ds).unwrap(),
            None => data = Some(ds),
        }
    }
    let data = data.unwrap();
    let [clean, infested] = data.class_counts();
    assert!(clean > 50 && infested > 50, "{clean} {infested}");

    let tc = TrainConfig {
        epochs: 8,
        folds: 2,
        batch_size: 16,
        learning_rate: 5e-3,
        seed: 3,
        ..TrainConfig::default()
    };
    let cv = cross_validate(&data, &small_lstm(data.n_features, 48), &tc).unwrap();
    assert!(cv.test_metrics.accuracy > 0.9, "test accuracy {}", cv.test_metrics.accuracy);
}

#[test]
fn synthetic_importance_finds_injected_features() {
    let sc = SynthConfig {
        n_pixels_per_class: 300,
        offset: 1.5,
        ..SynthConfig::default()
    };
    let (data, truth) = gen_dataset(&sc).unwrap();
    let tc = TrainConfig {
        epochs: 15,
        folds: 2,
        batch_size: 16,
        learning_rate: 3e-3,
        seed: 1,
        ..TrainConfig::default()
    };
    let cv = cross_validate(&data, &small_lstm(data.n_features, sc.n_steps), &tc).unwrap();
    let oracle = bayes_oracle(&sc, 50_000, derive_seed(1, 8)).unwrap();
    assert!(cv.test_metrics.accuracy >= 0.9 * oracle.accuracy, "{} vs {}", cv.test_metrics.accuracy, oracle.accuracy);

    let test = data.subset(&cv.split.test);
    let rep = permutation_importance(&cv.final_fit.classifier, &test, 3, 9).unwrap();
    let top: Vec<&str> = rep.top(4);
    for f in &truth.config.informative {
        assert!(top.contains(&f.as_str()), "{f} missing from {top:?}");
    }
}
