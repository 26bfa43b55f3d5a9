use faultbench_core::faults::{
    flip_bits, BitPositions, FaultEffect, FaultEvent, FaultSpec, FaultType, Injector, RandomKeyword,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const DT: f64 = 0.001;

fn spec(fault_type: FaultType, event: Option<FaultEvent>, effect: FaultEffect) -> FaultSpec {
    FaultSpec {
        name: "f".into(),
        target_signal: "x".into(),
        fault_type,
        event,
        effect,
        enabled: true,
        chain_to: None,
    }
}

struct Trace {
    out: Vec<f64>,
    active: Vec<bool>,
    /// Activation count after each step.
    activations: Vec<u64>,
}

impl Trace {
    /// `(first_step, len)` of every activation window.
    fn windows(&self) -> Vec<(usize, usize)> {
        let mut w: Vec<(usize, usize)> = Vec::new();
        let mut prev = 0;
        for (k, (&a, &n)) in self.active.iter().zip(&self.activations).enumerate() {
            if n != prev {
                w.push((k, 0));
                prev = n;
            }
            if a {
                w.last_mut().expect("active implies activated").1 += 1;
            }
        }
        w
    }
}

fn drive(spec: FaultSpec, inputs: &[f64], seed: u64) -> Trace {
    let mut inj = Injector::new(spec, DT);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Trace { out: Vec::new(), active: Vec::new(), activations: Vec::new() };
    for (k, &x) in inputs.iter().enumerate() {
        let (y, trig) = inj.step(x, k as f64 * DT, false, &mut rng);
        t.out.push(y);
        t.active.push(trig);
        t.activations.push(inj.state().activations());
    }
    t
}

fn fault_type() -> impl Strategy<Value = FaultType> {
    prop_oneof![
        Just(FaultType::StuckAt),
        (-10.0..10.0f64).prop_map(|replacement| FaultType::PackageDrop { replacement }),
        (-5.0..5.0f64).prop_map(|offset| FaultType::Bias { offset }),
        (0.0..50.0f64).prop_map(|boundary_pct| FaultType::Noise { boundary_pct }),
        (1u32..20).prop_map(|k| FaultType::TimeDelay { delay_s: f64::from(k) * DT }),
        (1u32..4).prop_map(|n_bits| FaultType::BitFlip {
            n_bits,
            bit_positions: BitPositions::Random(RandomKeyword::Random),
            bit_range: None,
        }),
    ]
}

fn event() -> impl Strategy<Value = FaultEvent> {
    prop_oneof![
        (0.0..0.2f64).prop_map(|p| FaultEvent::FailureProbability { p }),
        (0.001..0.2f64, 0.0..0.05f64).prop_map(|(mttf_s, sigma_s)| FaultEvent::MeanTimeToFailure { mttf_s, sigma_s }),
    ]
}

/// Effects with a deterministic window length.
fn fixed_effect() -> impl Strategy<Value = FaultEffect> {
    prop_oneof![
        Just(FaultEffect::Once),
        Just(FaultEffect::InfiniteTime),
        (1u32..40).prop_map(|k| FaultEffect::ConstantTime { duration_s: f64::from(k) * DT }),
        (1u32..40).prop_map(|k| FaultEffect::MeanTimeToRepair { mttr_s: f64::from(k) * DT, sigma_s: 0.0 }),
    ]
}

fn effect() -> impl Strategy<Value = FaultEffect> {
    prop_oneof![
        fixed_effect(),
        (0.002..0.04f64, 0.0..0.01f64).prop_map(|(mttr_s, sigma_s)| FaultEffect::MeanTimeToRepair { mttr_s, sigma_s }),
    ]
}

fn inputs() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-100.0..100.0f64, 1..300)
}

/// Multiples of 2^-10 in a small range, so sums and differences are exact.
fn dyadic() -> impl Strategy<Value = f64> {
    (-1_000_000i32..1_000_000).prop_map(|k| f64::from(k) / 1024.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn disabled_injector_is_identity(ft in fault_type(), ev in event(), eff in effect(), xs in inputs(), seed: u64) {
        let mut s = spec(ft, Some(ev), eff);
        s.enabled = false;
        let t = drive(s, &xs, seed);
        for (y, x) in t.out.iter().zip(&xs) {
            prop_assert_eq!(y.to_bits(), x.to_bits());
        }
        prop_assert!(t.active.iter().all(|a| !a));
    }

    #[test]
    fn armed_injector_is_identity(ft in fault_type(), ev in event(), eff in effect(), xs in inputs(), seed: u64) {
        let t = drive(spec(ft, Some(ev), eff), &xs, seed);
        for k in (0..xs.len()).filter(|&k| !t.active[k]) {
            prop_assert_eq!(t.out[k].to_bits(), xs[k].to_bits());
        }
    }

    #[test]
    fn stuck_at_is_constant_within_a_window(p in 0.005..0.1f64, eff in fixed_effect(), xs in inputs(), seed: u64) {
        let t = drive(spec(FaultType::StuckAt, Some(FaultEvent::FailureProbability { p }), eff), &xs, seed);
        for (start, len) in t.windows() {
            // Last input seen while armed; back-to-back windows keep the
            // value from before the first of them.
            let expected = (0..start).rev().find(|&k| !t.active[k]).map_or(xs[0], |k| xs[k]);
            for k in start..start + len {
                prop_assert_eq!(t.out[k].to_bits(), expected.to_bits());
            }
        }
    }

    #[test]
    fn bias_is_exact(offset in dyadic(), xs in prop::collection::vec(dyadic(), 1..300), p in 0.01..0.3f64, eff in fixed_effect(), seed: u64) {
        let t = drive(spec(FaultType::Bias { offset }, Some(FaultEvent::FailureProbability { p }), eff), &xs, seed);
        for k in (0..xs.len()).filter(|&k| t.active[k]) {
            prop_assert_eq!(t.out[k] - xs[k], offset);
        }
    }

    #[test]
    fn bias_matches_float_sum(offset in -1e6..1e6f64, xs in inputs(), seed: u64) {
        let t = drive(spec(FaultType::Bias { offset }, Some(FaultEvent::FailureProbability { p: 0.2 }), FaultEffect::InfiniteTime), &xs, seed);
        for k in (0..xs.len()).filter(|&k| t.active[k]) {
            prop_assert_eq!(t.out[k].to_bits(), (xs[k] + offset).to_bits());
        }
    }

    #[test]
    fn noise_is_bounded(pct in 0.0..200.0f64, xs in prop::collection::vec(-1e6..1e6f64, 1..300), seed: u64) {
        let t = drive(spec(FaultType::Noise { boundary_pct: pct }, Some(FaultEvent::FailureProbability { p: 0.3 }), FaultEffect::InfiniteTime), &xs, seed);
        for k in (0..xs.len()).filter(|&k| t.active[k]) {
            prop_assert!((t.out[k] - xs[k]).abs() <= pct / 100.0 * xs[k].abs(), "step {}: {} vs {}", k, t.out[k], xs[k]);
        }
    }

    #[test]
    fn bit_flip_is_an_involution(bits: u64, mask: u64) {
        let x = f64::from_bits(bits);
        prop_assert_eq!(flip_bits(flip_bits(x, mask), mask).to_bits(), bits);
    }

    #[test]
    fn bit_flip_window_reverts_with_same_mask(n_bits in 1u32..8, xs in inputs(), seed: u64) {
        let ft = FaultType::BitFlip { n_bits, bit_positions: BitPositions::Random(RandomKeyword::Random), bit_range: None };
        let mut inj = Injector::new(spec(ft, Some(FaultEvent::FailureProbability { p: 0.1 }), FaultEffect::ConstantTime { duration_s: 0.005 }), DT);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (k, &x) in xs.iter().enumerate() {
            let (y, active) = inj.step(x, k as f64 * DT, false, &mut rng);
            if active {
                let mask = inj.state().mask();
                prop_assert_eq!(mask.count_ones(), n_bits);
                prop_assert_eq!(flip_bits(y, mask).to_bits(), x.to_bits());
            }
        }
    }

    #[test]
    fn constant_time_window_has_exact_length(k in 1u32..60, p in 0.001..0.05f64, seed: u64) {
        let d = f64::from(k) * DT;
        let xs = vec![1.0; 2000];
        let t = drive(spec(FaultType::StuckAt, Some(FaultEvent::FailureProbability { p }), FaultEffect::ConstantTime { duration_s: d }), &xs, seed);
        let windows = t.windows();
        for &(start, len) in &windows {
            // Windows cut off by the end of the run are shorter.
            if start + k as usize <= xs.len() {
                prop_assert_eq!(len, k as usize);
            }
        }
    }

    #[test]
    fn chained_injector_is_active_exactly_when_upstream_triggers(
        p in 0.001..0.1f64,
        eff in fixed_effect(),
        up_ft in fault_type(),
        down_ft in fault_type(),
        n in 1usize..2000,
        seed: u64,
    ) {
        let mut up = Injector::new(spec(up_ft, Some(FaultEvent::FailureProbability { p }), eff), DT);
        let mut down = Injector::new(spec(down_ft, None, eff), DT);
        let mut rng_up = ChaCha8Rng::seed_from_u64(seed);
        let mut rng_down = ChaCha8Rng::seed_from_u64(!seed);
        for k in 0..n {
            let t = k as f64 * DT;
            let (_, trigger) = up.step(1.0, t, false, &mut rng_up);
            let (_, active) = down.step(2.0, t, trigger, &mut rng_down);
            prop_assert_eq!(active, trigger, "step {}", k);
        }
    }
}
