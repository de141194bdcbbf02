use std::fs;
use std::path::PathBuf;

use ldenet::chaos::EmbeddingSpec;
use ldenet::lde_net::Normalization;
use ldenet::pipeline::{
    ar1_stable, baseline_persistence, fit_ar, horizon_sweep, load_csv, make_supervised, metrics, run_experiment,
    split_and_normalize, DataSource, ExperimentConfig, MetricsRow, NormalizationKind, SeriesDataset, SplitSpec,
    SyntheticSpec,
};
use ldenet::stable_rng::RngStream;
use ldenet::{stats, Error};
use proptest::prelude::*;

fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, body).unwrap();
    p
}

#[test]
fn csv_with_dates_is_parsed() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(&dir, "a.csv", "date,open,close\n2021-01-04,1,10.5\n2021-01-05,2,11\n2021-01-07,3,9.25\n");
    let ds = load_csv(&p, "close", Some("date")).unwrap();
    assert_eq!(ds.values, vec![10.5, 11.0, 9.25]);
    assert_eq!(ds.timestamps[1] - ds.timestamps[0], 1.0);
    assert_eq!(ds.timestamps[2] - ds.timestamps[1], 2.0);
}

#[test]
fn bad_rows_name_their_line() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(&dir, "nan.csv", "close\n1\n2\nNaN\n4\n");
    assert!(matches!(load_csv(&p, "close", None), Err(Error::Parse { row: 4, .. })));
    let p = write(&dir, "text.csv", "close\n1\nabc\n");
    assert!(matches!(load_csv(&p, "close", None), Err(Error::Parse { row: 3, .. })));
    let p = write(&dir, "dup.csv", "t,close\n1,1\n2,2\n2,3\n");
    assert!(matches!(load_csv(&p, "close", Some("t")), Err(Error::Ordering { row: 4 })));
    let p = write(&dir, "back.csv", "t,close\n1,1\n3,2\n2,3\n");
    assert!(matches!(load_csv(&p, "close", Some("t")), Err(Error::Ordering { row: 4 })));
    assert!(load_csv(&p, "price", None).is_err());
}

#[test]
fn least_squares_recovers_the_ar_coefficient() {
    let ds = ar1_stable(&SyntheticSpec::default(), &mut RngStream::new(1, 0)).unwrap();
    let ar = fit_ar(&ds.values, 1).unwrap();
    assert!((ar.coefficients[0] - 0.8).abs() < 0.05, "{ar:?}");
}

#[test]
fn collinear_design_is_rank_deficient() {
    assert!(matches!(fit_ar(&[2.0; 50], 1), Err(Error::Rank)));
}

#[test]
fn persistence_on_white_noise_costs_twice_the_variance() {
    let mut rng = RngStream::new(2, 0);
    let noise: Vec<f64> = (0..20_000).map(|_| rng.normal()).collect();
    let pairs = make_supervised(&noise, EmbeddingSpec { tau: 1, m: 2 }, 1).unwrap();
    let row = baseline_persistence(&pairs).unwrap();
    assert!((row.mse / (2.0 * stats::sample_variance(&noise)) - 1.0).abs() < 0.05);
}

#[test]
fn normalization_is_fitted_on_train_only() {
    let values: Vec<f64> = (0..100).map(|i| if i < 80 { (i % 7) as f64 } else { 1000.0 }).collect();
    let ds = SeriesDataset::from_values(values, "t").unwrap();
    let spec = SplitSpec {
        normalization: NormalizationKind::ZScore,
        ..SplitSpec::default()
    };
    let s = split_and_normalize(&ds, &spec).unwrap();
    assert!(stats::mean(&s.train).abs() < 1e-12);
    assert!((stats::sample_variance(&s.train) - 1.0).abs() < 1e-12);
    assert!(s.test.iter().all(|v| *v > 100.0));
    let flat = SeriesDataset::from_values(vec![3.0; 20], "t").unwrap();
    assert!(matches!(split_and_normalize(&flat, &SplitSpec::default()), Err(Error::ConstantSeries)));
}

#[test]
fn sweep_needs_three_horizons() {
    let row = |h, mse| MetricsRow { horizon: h, mse, rmse: f64::sqrt(mse), mae: 0.0 };
    assert!(horizon_sweep(&[row(1, 0.1), row(2, 0.2)]).is_err());
    let s = horizon_sweep(&[row(1, 0.1), row(2, 0.2), row(3, 0.3)]).unwrap();
    assert!((s.pearson - 1.0).abs() < 1e-12);
    assert!((s.slope - 0.1).abs() < 1e-12);
}

#[test]
fn small_experiment_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = ExperimentConfig {
        data: DataSource::Synthetic(SyntheticSpec { n: 400, ..SyntheticSpec::default() }),
        ..ExperimentConfig::default()
    };
    config.split.normalization = NormalizationKind::ZScore;
    config.chaos.m_max = 6;
    config.training.epochs = 2;
    config.integrator.n_paths = 20;
    let report = run_experiment(&config, dir.path()).unwrap();
    assert_eq!(report.horizons.len(), 4);
    for h in 1..=4 {
        assert!(dir.path().join(format!("checkpoints/horizon_{h}.json")).is_file());
    }
    for f in ["config.json", "report.json", "metrics.csv", "predictions.jsonl", "loss_curves.csv"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    let metrics_csv = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    assert!(metrics_csv.lines().count() > 4);
}

#[test]
fn invalid_config_is_rejected() {
    let mut config = ExperimentConfig::default();
    config.integrator.alpha = 2.5;
    assert!(config.validate().is_err());
}

proptest! {
    #[test]
    fn metric_identities(pairs in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 1..50)) {
        let (p, t): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let m = metrics(&p, &t).unwrap();
        prop_assert!((m.rmse - m.mse.sqrt()).abs() < 1e-9);
        prop_assert!(m.mae <= m.rmse + 1e-9);
        prop_assert_eq!(metrics(&t, &t).unwrap().mse, 0.0);
    }

    #[test]
    fn windows_never_see_their_label(
        series in prop::collection::vec(-10.0f64..10.0, 2..60),
        tau in 1usize..4,
        m in 1usize..5,
        h in 1usize..5,
    ) {
        let spec = EmbeddingSpec { tau, m };
        match make_supervised(&series, spec, h) {
            Ok(pairs) => {
                prop_assert_eq!(pairs.len(), series.len() - (m - 1) * tau - h);
                for (i, (x, y)) in pairs.inputs.iter().zip(&pairs.labels).enumerate() {
                    let li = pairs.label_index[i];
                    prop_assert_eq!(*y, series[li]);
                    let t = li - h;
                    for (j, v) in x.iter().enumerate() {
                        prop_assert_eq!(*v, series[t - (m - 1 - j) * tau]);
                    }
                }
            }
            Err(_) => prop_assert!(series.len() < (m - 1) * tau + h + 1),
        }
    }

    #[test]
    fn normalization_round_trips(v in -1e6f64..1e6, a in -100.0f64..100.0, w in 0.01f64..100.0) {
        for n in [Normalization::MinMax { min: a, max: a + w }, Normalization::ZScore { mean: a, std: w }] {
            prop_assert!((n.inverse(n.forward(v)) - v).abs() <= 1e-9 * v.abs().max(1.0));
        }
    }
}
