use std::sync::Arc;

use super::*;
use crate::model::{
    Ar1Covariance, AttackNoiseModel, BernoulliSchedule, LinearObservation, MarkovNoiseModel,
};
use crate::presets::{carrier_model, CarrierScenario};

fn run(model: &Model, horizon: usize, seed: u64, idx: u64) -> Trajectory {
    simulate_run(
        &CarrierScenario::default().signal(),
        model,
        horizon,
        SimulationOptions::default(),
        &RngStream::new(seed, idx),
    )
    .unwrap()
}

#[test]
fn fully_attacked_channel_receives_attack_noise() {
    let model = carrier_model(0.7, 1.0).unwrap();
    let t = run(&model, 30, 1, 0);
    assert!(t.lambda.iter().all(|&l| l));
    for k in 0..30 {
        assert_eq!(t.y[k], t.w[k]);
    }
}

#[test]
fn clean_channel_receives_signal_plus_noise() {
    let model = carrier_model(1.0, 0.0).unwrap();
    let t = run(&model, 30, 2, 0);
    for k in 0..30 {
        let expected = model.observation.eval(k + 1, &t.x[k]) + &t.v[k];
        assert_eq!(t.y[k], expected);
    }
}

#[test]
fn assembly_identities_hold_exactly() {
    let model = carrier_model(0.5, 0.5).unwrap();
    for idx in 0..20 {
        let t = run(&model, 25, 3, idx);
        for k in 0..25 {
            let g = f64::from(u8::from(t.gamma[k]));
            let l = f64::from(u8::from(t.lambda[k]));
            let z = model.observation.eval(k + 1, &t.x[k]) * g + &t.v[k];
            assert_eq!(t.z[k], z);
            let y = &t.z[k] * (1.0 - l) + &t.w[k] * l;
            assert_eq!(t.y[k], y);
        }
    }
}

#[test]
fn same_address_reproduces_bitwise() {
    let model = carrier_model(0.7, 0.3).unwrap();
    assert_eq!(run(&model, 50, 9, 4), run(&model, 50, 9, 4));
    assert_ne!(run(&model, 50, 9, 4).x, run(&model, 50, 9, 5).x);
}

#[test]
fn bernoulli_frequency_within_binomial_interval() {
    let model = carrier_model(0.7, 0.3).unwrap();
    let n = 100_000usize;
    let t = run(&model, 1, 11, 0);
    assert_eq!(t.len(), 1);
    // one long run, counted across steps
    let long: usize = (0..10)
        .map(|i| run(&model, n / 10, 11, i).gamma.iter().filter(|&&g| g).count())
        .sum();
    let mean = long as f64 / n as f64;
    let bound = 3.0 * (0.21f64 / n as f64).sqrt();
    assert!((mean - 0.7).abs() <= bound, "mean {mean}");
}

#[test]
fn ar2_long_run_variance_matches_factorization() {
    let params = Ar2Params::default();
    let mut rng = RngStream::new(5, 0).substream(StreamLabel::Signal);
    let xs = SignalModel::Ar2(params)
        .generate(1_000_000, InitScheme::Stationary, NoiseDistribution::Gaussian, &mut rng)
        .unwrap();
    let n = xs.len() as f64;
    let mean = xs.iter().map(|x| x[0]).sum::<f64>() / n;
    let var = xs.iter().map(|x| (x[0] - mean).powi(2)).sum::<f64>() / n;
    let c = ar2_factorization(&params, Ar2Normalization::Exact).unwrap();
    assert!((var / c.variance() - 1.0).abs() < 0.01, "var {var} vs {}", c.variance());
    assert!((c.variance() - 0.347222).abs() < 1e-6);
}

#[test]
fn ar2_autocovariance_across_runs() {
    let params = Ar2Params::default();
    let c = ar2_factorization(&params, Ar2Normalization::Exact).unwrap();
    let runs = 100_000;
    let horizon = 8;
    let samples: Vec<Vec<f64>> = (0..runs)
        .map(|r| {
            let mut rng = RngStream::new(21, r).substream(StreamLabel::Signal);
            SignalModel::Ar2(params)
                .generate(horizon, InitScheme::Stationary, NoiseDistribution::Gaussian, &mut rng)
                .unwrap()
                .iter()
                .map(|x| x[0])
                .collect()
        })
        .collect();
    for lag in 0..=5 {
        let prods: Vec<f64> = samples.iter().map(|s| s[horizon - 1] * s[horizon - 1 - lag]).collect();
        let m = prods.iter().sum::<f64>() / runs as f64;
        let var = prods.iter().map(|p| (p - m).powi(2)).sum::<f64>() / (runs as f64 - 1.0);
        let se = (var / runs as f64).sqrt();
        let expected = c.autocovariance(lag);
        assert!((m - expected).abs() <= 3.0 * se, "lag {lag}: {m} vs {expected} (se {se})");
    }
}

#[test]
fn uniform_noise_keeps_second_moments() {
    let model = Model::new(
        Arc::new(Ar1Covariance::new(0.6, 1.0).unwrap()),
        Arc::new(LinearObservation::identity(1)),
        MarkovNoiseModel::scalar(0.5, 0.2, 0.3).unwrap(),
        BernoulliSchedule::constant(1.0, 0.0).unwrap(),
        AttackNoiseModel::scalar(1.0).unwrap(),
    )
    .unwrap();
    let opts = SimulationOptions {
        init: InitScheme::Stationary,
        distribution: NoiseDistribution::Uniform,
    };
    let signal = SignalModel::Ar1 { rho: 0.6, variance: 1.0 };
    let runs = 40_000;
    let mut sx = 0.0;
    let mut sv = 0.0;
    for r in 0..runs {
        let t = simulate_run(&signal, &model, 3, opts, &RngStream::new(3, r)).unwrap();
        sx += t.x[2][0].powi(2);
        sv += t.v[2][0].powi(2);
    }
    let sx = sx / runs as f64;
    let sv = sv / runs as f64;
    // Var[v_3]: 0.3 → 0.275 → 0.26875 → 0.2671875
    assert!((sx - 1.0).abs() < 0.03, "{sx}");
    assert!((sv - 0.2671875).abs() < 0.01, "{sv}");
}

#[test]
fn csv_has_header_and_one_row_per_step() {
    let model = carrier_model(0.7, 0.3).unwrap();
    let t = run(&model, 5, 1, 0);
    let mut buf = Vec::new();
    t.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "k,x,v,z,y,gamma,lambda");
    assert_eq!(lines.len(), 6);
    assert!(lines[1].starts_with("1,"));
    assert!(!text.contains('\r'));
}

#[test]
fn invalid_inputs_rejected() {
    let model = carrier_model(0.7, 0.3).unwrap();
    let sig = CarrierScenario::default().signal();
    let s = RngStream::new(0, 0);
    assert!(simulate_run(&sig, &model, 0, SimulationOptions::default(), &s).is_err());
    let wrong = SignalModel::StateSpace {
        transition: nalgebra::DMatrix::identity(2, 2) * 0.5,
        output: nalgebra::DMatrix::identity(2, 2),
        initial_cov: nalgebra::DMatrix::identity(2, 2),
        process_cov: nalgebra::DMatrix::identity(2, 2),
    };
    assert!(matches!(
        simulate_run(&wrong, &model, 3, SimulationOptions::default(), &s),
        Err(Error::Shape { .. })
    ));
}
