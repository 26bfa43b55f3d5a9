use faultbench_core::dmp::{
    dmp_step, gait_surrogate, learn_weights, replay, CanonicalSystem, Demo, DmpConfig, DmpParams, DmpState, DmpSystem,
};
use faultbench_core::scenario::presets;
use proptest::prelude::*;

const DT: f64 = 0.001;

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

fn rmse(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
}

/// Sign changes of `y - g`, ignoring samples exactly at the goal.
fn goal_crossings(ys: &[f64], g: f64) -> usize {
    let signs: Vec<f64> = ys.iter().map(|y| y - g).filter(|e| *e != 0.0).map(f64::signum).collect();
    signs.windows(2).filter(|w| w[0] != w[1]).count()
}

#[test]
fn unforced_primitive_converges_without_overshoot() {
    let config = DmpConfig::default();
    for &y0 in &linspace(-1.0, 1.0, 5) {
        for &g in &linspace(-1.3, 0.7, 5) {
            for &tau in &[0.5, 1.0, 2.0] {
                let p = DmpParams::new(&config, tau, y0, g);
                let horizon = 10.0 * tau / config.alpha_z * 4.0;
                let ys = replay(&p, 0.0, DT, (horizon / DT).round() as usize + 1);
                let end = *ys.last().unwrap();
                assert!((end - g).abs() < 1e-3, "y0 {y0} g {g} tau {tau}: end {end}");
                assert!(goal_crossings(&ys, g) <= 1, "y0 {y0} g {g} tau {tau}");
            }
        }
    }
}

fn min_jerk_demo(dt: f64) -> Vec<f64> {
    let n = (2.0 / dt) as usize + 1;
    (0..n)
        .map(|k| {
            let x = k as f64 / (n - 1) as f64;
            x * x * x * (10.0 - 15.0 * x + 6.0 * x * x)
        })
        .collect()
}

#[test]
fn doubling_tau_slows_the_trajectory_down() {
    let dt = 1e-4;
    let p = learn_weights(&min_jerk_demo(0.001), 0.001, &DmpConfig::default()).unwrap();
    let slow = DmpParams { tau: 2.0 * p.tau, ..p.clone() };
    let n = (p.tau / dt).round() as usize;
    let fast_y = replay(&p, 0.0, dt, n + 1);
    let slow_y = replay(&slow, 0.0, dt, 2 * n + 1);
    let worst = (0..=n).map(|k| (fast_y[k] - slow_y[2 * k]).abs()).fold(0.0, f64::max);
    assert!(worst < 1e-3, "max mismatch {worst}");
}

#[test]
fn joints_share_one_phase() {
    let demo = presets::gait_demo();
    let config = DmpConfig::default();
    let params: Vec<DmpParams> = demo.columns.iter().map(|c| learn_weights(c, demo.dt, &config).unwrap()).collect();
    let mut system = DmpSystem::new(params.clone(), &[0.0; 6]);
    let mut cs = CanonicalSystem::new(config.alpha_s, params[0].tau);
    let mut states: Vec<DmpState> = params.iter().map(|p| DmpState { y: p.y0, z: 0.0 }).collect();
    for _ in 0..2000 {
        let targets = system.step(DT);
        for ((p, st), t) in params.iter().zip(states.iter_mut()).zip(&targets) {
            let (next, expected) = dmp_step(p, st, cs.s, DT);
            assert_eq!(expected, *t);
            *st = next;
        }
        cs.step(DT);
        assert_eq!(system.canonical.s, cs.s);
    }
}

#[test]
fn shipped_demo_matches_the_surrogate_generator() {
    let shipped = presets::gait_demo();
    let generated = gait_surrogate(7.0, 0.01);
    assert_eq!(shipped.dt, generated.dt);
    assert_eq!(shipped.columns.len(), generated.columns.len());
    for (a, b) in shipped.columns.iter().zip(&generated.columns) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= 1e-8 * y.abs().max(1.0), "{x} vs {y}");
        }
    }
}

fn initial_slope(y: &[f64], dt: f64) -> f64 {
    (-3.0 * y[0] + 4.0 * y[1] - y[2]) / (2.0 * dt)
}

#[test]
fn shipped_demo_replays_within_one_percent_of_amplitude() {
    let demo = presets::gait_demo();
    let config = DmpConfig::default();
    let stride = (demo.dt / DT).round() as usize;
    for (j, col) in demo.columns.iter().enumerate() {
        let p = learn_weights(col, demo.dt, &config).unwrap();
        let ys = replay(&p, initial_slope(col, demo.dt), DT, (col.len() - 1) * stride + 1);
        let sampled: Vec<f64> = ys.iter().step_by(stride).copied().collect();
        let amplitude = col.iter().copied().fold(f64::NEG_INFINITY, f64::max) - col.iter().copied().fold(f64::INFINITY, f64::min);
        let err = rmse(&sampled, col);
        assert!(err < 0.01 * amplitude, "column {j}: rmse {err} amplitude {amplitude}");
        assert!(err < 0.02, "column {j}: rmse {err}");
    }
}

#[test]
fn demo_csv_from_disk_round_trips() {
    let demo = presets::gait_demo();
    let mut buf = Vec::new();
    demo.write_csv(&mut buf).unwrap();
    let back = Demo::read_csv(buf.as_slice()).unwrap();
    assert_eq!(back.columns.len(), 6);
    assert_eq!(back.len(), demo.len());
}

proptest! {
    #[test]
    fn velocity_is_scaled_state(y0 in -1.0..1.0f64, g in -1.0..1.0f64, tau in 0.2..3.0f64, z0 in -1.0..1.0f64) {
        let p = DmpParams::new(&DmpConfig::default(), tau, y0, g);
        let mut cs = CanonicalSystem::new(p.alpha_s, tau);
        let mut st = DmpState { y: y0, z: z0 };
        for _ in 0..200 {
            let (next, t) = dmp_step(&p, &st, cs.s, DT);
            prop_assert_eq!(t.yd, st.z / tau);
            prop_assert_eq!(t.y, st.y);
            st = next;
            let s_prev = cs.s;
            prop_assert!(cs.step(DT) < s_prev);
        }
    }

    #[test]
    fn goal_is_a_fixed_point(g in -2.0..2.0f64, tau in 0.2..3.0f64) {
        let p = DmpParams::new(&DmpConfig::default(), tau, g, g);
        let st = DmpState { y: g, z: 0.0 };
        let (next, _) = dmp_step(&p, &st, 0.7, DT);
        prop_assert_eq!(next, st);
    }
}
