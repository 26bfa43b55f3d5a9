use faultbench_core::faults::{
    sample_activation_time, sample_exposure, Exposure, FaultEffect, FaultEvent, FaultSpec, FaultType, Injector, Phase,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const DT: f64 = 0.001;
/// Upper 1% point of chi-squared with one degree of freedom.
const CHI2_1DF_99: f64 = 6.634897;

fn moments(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[test]
fn mttf_sample_moments() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let ev = FaultEvent::MeanTimeToFailure { mttf_s: 1.0, sigma_s: 0.1 };
    let xs: Vec<f64> = (0..100_000).map(|_| sample_activation_time(&ev, 0.0, DT, &mut rng).unwrap()).collect();
    let (mean, sd) = moments(&xs);
    assert!((mean - 1.0).abs() < 0.002, "mean {mean}");
    assert!((sd - 0.1).abs() < 0.01, "sd {sd}");
}

#[test]
fn mttf_is_offset_from_arming_time() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let ev = FaultEvent::MeanTimeToFailure { mttf_s: 0.5, sigma_s: 0.0 };
    assert_eq!(sample_activation_time(&ev, 2.0, DT, &mut rng), Some(2.5));
}

#[test]
fn mttf_samples_never_precede_one_step() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let ev = FaultEvent::MeanTimeToFailure { mttf_s: 0.0005, sigma_s: 0.01 };
    assert!((0..100_000).all(|_| sample_activation_time(&ev, 0.0, DT, &mut rng).unwrap() >= DT));
}

#[test]
fn mttr_sample_moments() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let eff = FaultEffect::MeanTimeToRepair { mttr_s: 0.2, sigma_s: 0.02 };
    let xs: Vec<f64> = (0..100_000)
        .map(|_| match sample_exposure(&eff, DT, &mut rng) {
            Exposure::Duration(d) => d,
            other => panic!("unexpected {other:?}"),
        })
        .collect();
    let (mean, sd) = moments(&xs);
    assert!((mean - 0.2).abs() < 0.0004, "mean {mean}");
    assert!((sd - 0.02).abs() < 0.002, "sd {sd}");
}

/// Activations per armed step for a one-step re-arming injector.
fn activation_rate(p: f64, steps: u64, seed: u64) -> (u64, u64) {
    let spec = FaultSpec {
        name: "f".into(),
        target_signal: "x".into(),
        fault_type: FaultType::StuckAt,
        event: Some(FaultEvent::FailureProbability { p }),
        effect: FaultEffect::ConstantTime { duration_s: DT },
        enabled: true,
        chain_to: None,
    };
    let mut inj = Injector::new(spec, DT);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut armed = 0;
    for k in 0..steps {
        if inj.state().phase == Phase::Armed {
            armed += 1;
        }
        inj.step(0.0, k as f64 * DT, false, &mut rng);
    }
    (inj.state().activations(), armed)
}

#[test]
fn failure_probability_rate_per_armed_step() {
    let p = 0.0005;
    let (k, n) = activation_rate(p, 4_000_000, 15);
    let rate = k as f64 / n as f64;
    assert!((rate - p).abs() < 0.1 * p, "rate {rate}");
    let expected = n as f64 * p;
    let chi2 = (k as f64 - expected).powi(2) / (expected * (1.0 - p));
    assert!(chi2 < CHI2_1DF_99, "chi2 {chi2}");
}
