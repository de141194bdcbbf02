mod common;

use ldenet::chaos::EmbeddingSpec;
use ldenet::lde_net::{
    alpha_sweep, diffusion_score, em_with_increments, load_checkpoint, make_ood, predict, save_checkpoint,
    train_model, HorizonDataset, IntegratorConfig, LdeNetModel, ModelSpec, NoiseKind, Normalization, TrainConfig,
};
use ldenet::neural::Activation;
use ldenet::stable_rng::RngStream;
use ldenet::{stats, Error};

fn model(d: usize, integrator: IntegratorConfig, seed: u64) -> LdeNetModel {
    let spec = ModelSpec {
        drift_width: 8,
        diffusion_width: 8,
        activation: Activation::Tanh,
        ..ModelSpec::default()
    };
    LdeNetModel::init(
        &spec,
        integrator,
        EmbeddingSpec { tau: 1, m: d },
        1,
        Normalization::identity(),
        &mut RngStream::new(seed, 0),
    )
    .unwrap()
}

fn integrator(n_paths: usize) -> IntegratorConfig {
    IntegratorConfig {
        n_paths,
        ..IntegratorConfig::default()
    }
}

/// One-dimensional model whose drift is identically zero and whose readout
/// is the state itself.
fn driftless(n_paths: usize) -> LdeNetModel {
    let mut m = model(1, integrator(n_paths), 2);
    for net in &mut m.drift {
        net.outer.iter_mut().for_each(|w| *w = 0.0);
    }
    m.readout.weights = vec![1.0];
    m.readout.bias = 0.0;
    m
}

#[test]
fn gradients_match_finite_differences() {
    let mut rng = RngStream::new(55, 0);
    for c in 0..30 {
        let act = if c % 2 == 0 { Activation::Tanh } else { Activation::Relu };
        let case = common::random_grad_case(&mut rng, act);
        let r = common::check_gradients(&case);
        assert_eq!(r.failures, 0, "case {c}: worst {} in {}", r.worst_relative, r.worst_block);
        assert!(r.loss_gap < 1e-10);
    }
}

#[test]
fn zero_noise_gives_the_deterministic_chain() {
    let m = model(3, integrator(10), 1);
    let x = [0.3, -0.2, 0.9];
    let path = em_with_increments(&m, &x, &vec![0.0; 4 * 3]).unwrap();
    let mut min_pre = f64::INFINITY;
    let mut s = x.to_vec();
    for _ in 0..4 {
        let f = common::mlp_eval(&m.drift[0], &s, &mut min_pre);
        for i in 0..3 {
            s[i] += f[i] * 0.25;
        }
    }
    assert_eq!(path.terminal, s);
}

#[test]
fn predictions_are_bit_reproducible() {
    let m = model(2, integrator(200), 3);
    let a = predict(&m, &[0.1, 0.4], &RngStream::new(9, 1)).unwrap();
    let b = predict(&m, &[0.1, 0.4], &RngStream::new(9, 1)).unwrap();
    assert_eq!(a, b);
    let c = predict(&m, &[0.1, 0.4], &RngStream::new(9, 2)).unwrap();
    assert_ne!(a.samples, c.samples);
}

#[test]
fn diffusion_score_ignores_the_drift() {
    let mut m = model(2, integrator(10), 4);
    let before = diffusion_score(&m, &[0.5, -1.0]).unwrap();
    m.drift[0].outer.iter_mut().for_each(|w| *w *= -3.0);
    m.readout.bias = 10.0;
    assert_eq!(before, diffusion_score(&m, &[0.5, -1.0]).unwrap());
    assert!(before > 0.0 && before < 1.0);
}

#[test]
fn driftless_model_spreads_as_a_stable_law() {
    let m = driftless(3000);
    let x = 0.4;
    let g = diffusion_score(&m, &[x]).unwrap();
    let p = predict(&m, &[x], &RngStream::new(17, 0)).unwrap();
    assert_eq!(p.n_discarded, 0);
    let alpha = m.integrator.alpha;
    let scaled: Vec<f64> = p.samples.iter().map(|y| (y - x) / g).collect();
    let ks = common::ks_one_sample(&scaled, |z| common::stable_cdf(alpha, z));
    assert!(ks < 1.63 / (scaled.len() as f64).sqrt(), "KS {ks}");
}

fn iqr(xs: &[f64]) -> f64 {
    let mut s = xs.to_vec();
    s.sort_by(f64::total_cmp);
    s[s.len() * 3 / 4] - s[s.len() / 4]
}

fn mean_spread(m: &LdeNetModel, n_paths: usize, reps: u64) -> f64 {
    let m = LdeNetModel {
        integrator: IntegratorConfig { n_paths, ..m.integrator },
        ..m.clone()
    };
    let means: Vec<f64> = (0..reps).map(|r| predict(&m, &[0.2], &RngStream::new(r, 5)).unwrap().mean).collect();
    iqr(&means)
}

#[test]
fn monte_carlo_error_follows_the_stable_rate() {
    // The mean of n stable draws is stable with scale n^{1/α - 1}; at α → 2
    // this is the usual 1/√n.
    for alpha in [1.5, 1.95] {
        let mut m = driftless(1);
        m.integrator.alpha = alpha;
        let ratio = mean_spread(&m, 100, 300) / mean_spread(&m, 1600, 300);
        let expected = 16f64.powf(1.0 - 1.0 / alpha);
        assert!((ratio / expected - 1.0).abs() < 0.2, "alpha {alpha}: ratio {ratio}, expected {expected}");
    }
}

#[test]
fn single_path_prediction_is_flagged() {
    let m = model(2, integrator(1), 5);
    let p = predict(&m, &[0.0, 1.0], &RngStream::new(0, 0)).unwrap();
    assert!(p.single_sample);
    assert_eq!(p.variance, 0.0);
    assert_eq!(p.samples.len(), 1);
}

#[test]
fn near_gaussian_levy_matches_brownian() {
    let mut levy = model(2, integrator(100), 6);
    levy.integrator.alpha = 2.0 - 1e-6;
    let mut brown = levy.clone();
    brown.integrator.noise = NoiseKind::Brownian;
    let a = predict(&levy, &[0.3, 0.3], &RngStream::new(2, 2)).unwrap();
    let b = predict(&brown, &[0.3, 0.3], &RngStream::new(2, 2)).unwrap();
    for (x, y) in a.samples.iter().zip(&b.samples) {
        assert!((x - y).abs() < 1e-3, "{x} vs {y}");
    }
}

#[test]
fn runaway_drift_is_reported() {
    let mut m = model(1, integrator(50), 7);
    m.drift[0].inner.iter_mut().for_each(|w| *w = 0.0);
    m.drift[0].bias.iter_mut().for_each(|b| *b = 5.0);
    m.drift[0].outer.iter_mut().for_each(|w| *w = 1e14);
    match predict(&m, &[0.0], &RngStream::new(0, 0)) {
        Err(Error::PredictionUnstable { discarded, total }) => assert_eq!((discarded, total), (50, 50)),
        other => panic!("expected PredictionUnstable, got {other:?}"),
    }
}

#[test]
fn perturbed_inputs_have_the_expected_spread() {
    // ||ε||/σ for 3-dimensional Gaussian noise has mean 2·sqrt(2/π).
    let inputs = vec![vec![1.0, -2.0, 0.5]; 20_000];
    let sigma = 0.7;
    let ood = make_ood(&inputs, sigma, &mut RngStream::new(3, 3)).unwrap();
    let norms: Vec<f64> = ood.iter().zip(&inputs).map(|(o, x)| common::euclidean(o, x) / sigma).collect();
    let expected = 2.0 * (2.0 / std::f64::consts::PI).sqrt();
    assert!((stats::mean(&norms) - expected).abs() < 0.01);
    assert!(make_ood(&inputs, 0.0, &mut RngStream::new(3, 3)).is_err());
}

#[test]
fn checkpoints_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut m = model(3, integrator(50), 8);
    m.normalization = Normalization::ZScore { mean: 3.0, std: 2.0 };
    let path = dir.path().join("m.json");
    save_checkpoint(&m, &path).unwrap();
    let back = load_checkpoint(&path).unwrap();
    assert_eq!(back, m);
    let rng = RngStream::new(1, 1);
    assert_eq!(predict(&m, &[1.0, 2.0, 3.0], &rng).unwrap(), predict(&back, &[1.0, 2.0, 3.0], &rng).unwrap());
}

fn ar_dataset(n: usize, seed: u64) -> HorizonDataset {
    let mut rng = RngStream::new(seed, 0);
    let mut x = vec![0.0];
    for _ in 0..n + 2 {
        let v = 0.8 * x[x.len() - 1] + 0.5 * rng.normal();
        x.push(v);
    }
    HorizonDataset {
        horizon: 1,
        inputs: x.windows(2).take(n).map(|w| w.to_vec()).collect(),
        labels: (0..n).map(|i| x[i + 2]).collect(),
    }
}

#[test]
fn training_reduces_the_loss() {
    let ds = ar_dataset(256, 1);
    let m = model(2, integrator(1), 9);
    let config = TrainConfig {
        epochs: 30,
        batch_size: 32,
        learning_rate: 0.01,
        ..TrainConfig::default()
    };
    let out = train_model(m, &ds.inputs, &ds.labels, &config, &mut RngStream::new(4, 4)).unwrap();
    let curve = out.loss_curve();
    assert_eq!(curve.len(), 30);
    assert!(curve[29] < 0.8 * curve[0], "{curve:?}");
    assert_eq!(out.retries, 0);
}

#[test]
fn sweep_rejects_gaussian_alpha() {
    let ds = ar_dataset(16, 2);
    let r = alpha_sweep(
        &[ds.clone()],
        &[ds],
        &[1.5, 2.0],
        &ModelSpec::default(),
        integrator(10),
        EmbeddingSpec { tau: 1, m: 2 },
        Normalization::identity(),
        &TrainConfig::default(),
        &RngStream::new(0, 0),
    );
    assert!(r.is_err());
}
