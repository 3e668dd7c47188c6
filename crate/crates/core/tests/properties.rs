use broomscan_core::analysis::{kde, metrics, ConfusionMatrix};
use broomscan_core::dataset::{Dataset, Scaler};
use broomscan_core::indices::{evaluate, IndexKind};
use broomscan_core::lstm::{decode, encode, Classifier, LstmConfig, LstmParams};
use broomscan_core::masking::{fit_pca, kmeans};
use broomscan_core::phenology::stages::smooth;
use broomscan_core::phenology::{cumulative_gdd, daily_gdd, gdd_grid, resample, DailyTemp, WeatherSeries};
use chrono::{Duration, NaiveDate};
use proptest::prelude::*;

fn spectrum() -> impl Strategy<Value = [f64; 12]> {
    prop::array::uniform12(0.0f64..1.0)
}

proptest! {
    #[test]
    fn normalized_differences_bounded_and_antisymmetric(s in spectrum()) {
        for k in IndexKind::ALL {
            let Some((a, b)) = k.normalized_difference() else { continue };
            if let Some(v) = evaluate(k, &s) {
                prop_assert!((-1.0..=1.0).contains(&v));
                let mut t = s;
                t.swap(a.index(), b.index());
                prop_assert_eq!(evaluate(k, &t), Some(-v));
            }
        }
    }

    #[test]
    fn indices_are_finite_or_absent(s in spectrum()) {
        for k in IndexKind::ALL {
            if let Some(v) = evaluate(k, &s) {
                prop_assert!(v.is_finite(), "{} gave {}", k.name(), v);
            }
        }
    }

    #[test]
    fn daily_gdd_nonnegative_and_monotone(lo in -20.0f64..30.0, spread in 0.0f64..20.0, bump in 0.0f64..5.0) {
        let g = daily_gdd(lo + spread, lo, 10.0).unwrap();
        prop_assert!(g >= 0.0);
        prop_assert!(daily_gdd(lo + spread + bump, lo, 10.0).unwrap() >= g);
    }

    #[test]
    fn cumulative_gdd_never_decreases(temps in prop::collection::vec((-10.0f64..30.0, 0.0f64..15.0), 2..120)) {
        let start = NaiveDate::from_ymd_opt(2023, 5, 1).unwrap();
        let days = temps
            .iter()
            .enumerate()
            .map(|(i, &(lo, d))| DailyTemp { date: start + Duration::days(i as i64), t_min: lo, t_max: lo + d })
            .collect();
        let w = WeatherSeries::new(days).unwrap();
        let end = start + Duration::days(temps.len() as i64 - 1);
        let v = cumulative_gdd(&w, start, end, 10.0).unwrap().values();
        prop_assert_eq!(v[0], 0.0);
        prop_assert!(v.windows(2).all(|p| p[1] >= p[0]));
    }

    #[test]
    fn resample_stays_within_observed_range(
        ys in prop::collection::vec(-100.0f64..100.0, 2..30),
        harvest in 100.0f64..2000.0,
    ) {
        let n = ys.len();
        let series: Vec<_> = ys.iter().enumerate().map(|(i, &y)| (harvest * i as f64 / (n - 1) as f64, y)).collect();
        let out = resample(&series, &gdd_grid(harvest, 48)).unwrap();
        let lo = ys.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(out.iter().all(|v| *v >= lo - 1e-9 && *v <= hi + 1e-9));
        prop_assert!((out[0] - ys[0]).abs() < 1e-9 && (out[47] - ys[n - 1]).abs() < 1e-9);
    }

    #[test]
    fn smoothing_stays_within_range(v in prop::collection::vec(-50.0f64..50.0, 1..40), w in 1usize..7) {
        let s = smooth(&v, w);
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert_eq!(s.len(), v.len());
        prop_assert!(s.iter().all(|x| *x >= lo - 1e-9 && *x <= hi + 1e-9));
    }

    #[test]
    fn metrics_are_bounded(tp in 0usize..500, fn_ in 0usize..500, fp in 0usize..500, tn in 0usize..500) {
        prop_assume!(tp + fn_ + fp + tn > 0);
        let m = metrics(&ConfusionMatrix { tp, fn_, fp, tn });
        prop_assert!((0.0..=1.0).contains(&m.accuracy));
        for v in [m.precision, m.recall, m.f1].into_iter().flatten() {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        if let (Some(p), Some(r), Some(f)) = (m.precision, m.recall, m.f1) {
            prop_assert!(f <= p.max(r) + 1e-12 && f >= p.min(r) - 1e-12);
        }
    }

    #[test]
    fn kmeans_objective_never_rises(
        pts in prop::collection::vec(-10.0f64..10.0, 20..200),
        k in 2usize..5,
        seed in any::<u64>(),
    ) {
        let dim = 2;
        let n = pts.len() / dim * dim;
        let m = kmeans(&pts[..n], dim, k, seed, 100).unwrap();
        prop_assert!(m.objective_history.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12) + 1e-12));
        prop_assert_eq!(m.assignments.len(), n / dim);
    }

    #[test]
    fn full_pca_reconstructs(rows in prop::collection::vec(prop::array::uniform3(-5.0f64..5.0), 6..60)) {
        let x: Vec<f64> = rows.iter().flatten().copied().collect();
        let m = fit_pca(&x, 3, 1.0).unwrap();
        let back = m.reconstruct(&m.project_k(&x, 3), 3);
        for (a, b) in x.iter().zip(back) {
            prop_assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn kde_has_unit_area(values in prop::collection::vec(-3.0f64..3.0, 2..50)) {
        prop_assume!(values.iter().any(|v| *v != values[0]));
        let c = kde("f", "c", &values, 200).unwrap();
        prop_assert!((c.trapezoid_integral() - 1.0).abs() < 1e-9);
        prop_assert!(c.points.iter().all(|p| p.1 >= 0.0));
    }

    #[test]
    fn checkpoint_round_trips(seed in any::<u64>(), mean in prop::collection::vec(-1e3f64..1e3, 3)) {
        let cfg = LstmConfig {
            input_size: 3,
            lstm_units: vec![4],
            dropout: vec![0.0],
            dense_units: vec![],
            sequence_length: 5,
        };
        let clf = Classifier {
            params: LstmParams::init(&cfg, seed).unwrap(),
            scaler: Scaler { mean, std: vec![1.0, 2.0, 0.5] },
        };
        let bytes = encode(&clf);
        let back = decode(&bytes).unwrap();
        prop_assert_eq!(&back, &clf);
        prop_assert_eq!(encode(&back), bytes);
    }

    #[test]
    fn scaler_centres_every_feature(vals in prop::collection::vec(-100.0f64..100.0, 24)) {
        let ds = Dataset::new(vals, vec![0, 1, 0, 1], 3, vec!["a".into(), "b".into()]).unwrap();
        let t = Scaler::fit(&ds).transform(&ds);
        for f in 0..2 {
            let col: Vec<f64> = (0..4).flat_map(|n| (0..3).map(move |s| (n, s))).map(|(n, s)| t.get(n, s, f)).collect();
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            prop_assert!(mean.abs() < 1e-9);
        }
    }
}
