//! Discrete dynamic movement primitives.
//!
//! Each joint runs the transformation system
//!
//! ```text
//! tau * z' = alpha_z * (beta_z * (g - y) - z) + f(s)
//! tau * y' = z
//! ```
//!
//! with `beta_z = alpha_z / 4` (critical damping). All joints of one system
//! share a canonical phase `s` obeying `tau * s' = -alpha_s * s`. The
//! forcing term is a normalized mixture of Gaussian basis functions in
//! phase space, gated by `s * (g - y0)` so it vanishes at the goal.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::engine::{format_g9, Block, PortSpec, PortValue, Signal, StepContext};
use crate::error::{Error, Result};

pub const DEFAULT_ALPHA_Z: f64 = 25.0;
/// Phase reaches 1% at `t = tau`.
pub const DEFAULT_ALPHA_S: f64 = 4.6;
pub const DEFAULT_N_BASIS: usize = 50;

/// `h * (gap / 2)^2 = ln 10`: adjacent Gaussians meet at 0.1.
const NEIGHBOUR_OVERLAP_H: f64 = 4.0 * std::f64::consts::LN_10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DmpConfig {
    pub alpha_z: f64,
    pub alpha_s: f64,
    pub n_basis: usize,
}

impl Default for DmpConfig {
    fn default() -> Self {
        Self { alpha_z: DEFAULT_ALPHA_Z, alpha_s: DEFAULT_ALPHA_S, n_basis: DEFAULT_N_BASIS }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DmpParams {
    pub alpha_z: f64,
    pub beta_z: f64,
    pub tau: f64,
    pub goal: f64,
    pub y0: f64,
    pub alpha_s: f64,
    pub centers: Vec<f64>,
    pub widths: Vec<f64>,
    pub weights: Vec<f64>,
}

impl DmpParams {
    /// Zero-weight primitive from `y0` to `goal` with the standard basis:
    /// centers evenly spaced in time over `[0, tau]` (so exponentially in
    /// phase), widths chosen so neighbouring basis functions cross at 0.1.
    pub fn new(config: &DmpConfig, tau: f64, y0: f64, goal: f64) -> Self {
        let n = config.n_basis;
        let centers: Vec<f64> = (0..n)
            .map(|i| {
                let frac = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 };
                (-config.alpha_s * frac).exp()
            })
            .collect();
        let widths: Vec<f64> = (0..n)
            .map(|i| {
                let gap = match (centers.get(i + 1), i.checked_sub(1)) {
                    (Some(next), _) => centers[i] - next,
                    (None, Some(prev)) => centers[prev] - centers[i],
                    (None, None) => 0.5,
                };
                NEIGHBOUR_OVERLAP_H / (gap * gap)
            })
            .collect();
        Self {
            alpha_z: config.alpha_z,
            beta_z: config.alpha_z / 4.0,
            tau,
            goal,
            y0,
            alpha_s: config.alpha_s,
            weights: vec![0.0; n],
            centers,
            widths,
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.alpha_z > 0.0) {
            v.push("dmp alpha_z must be > 0".to_string());
        }
        if self.beta_z != self.alpha_z / 4.0 {
            v.push(format!(
                "dmp beta_z = {} breaks critical damping: must equal alpha_z / 4 = {}",
                self.beta_z,
                self.alpha_z / 4.0
            ));
        }
        if !(self.tau > 0.0) {
            v.push("dmp tau must be > 0".to_string());
        }
        if !(self.alpha_s > 0.0) {
            v.push("dmp alpha_s must be > 0".to_string());
        }
        if self.widths.iter().any(|h| !(*h > 0.0)) {
            v.push("dmp basis widths must be > 0".to_string());
        }
        v
    }

    fn activations(&self, s: f64) -> impl Iterator<Item = f64> + '_ {
        self.centers
            .iter()
            .zip(&self.widths)
            .map(move |(c, h)| (-h * (s - c) * (s - c)).exp())
    }

    /// Normalized basis mixture at phase `s`, before gating.
    fn mixture(&self, s: f64) -> f64 {
        let (num, den) = self
            .activations(s)
            .zip(&self.weights)
            .fold((0.0, 0.0), |(num, den), (psi, w)| (num + psi * w, den + psi));
        if den > f64::MIN_POSITIVE {
            num / den
        } else {
            0.0
        }
    }

    pub fn forcing(&self, s: f64) -> f64 {
        self.mixture(s) * s * (self.goal - self.y0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DmpState {
    pub y: f64,
    /// Scaled velocity, `z = tau * y'`.
    pub z: f64,
}

/// Desired position, velocity and acceleration for one joint.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Targets {
    pub y: f64,
    pub yd: f64,
    pub ydd: f64,
}

/// One explicit Euler step. Returns the advanced state and the targets at
/// the current state.
pub fn dmp_step(params: &DmpParams, state: &DmpState, s: f64, dt: f64) -> (DmpState, Targets) {
    let f = params.forcing(s);
    let tau = params.tau;
    let zd = (params.alpha_z * (params.beta_z * (params.goal - state.y) - state.z) + f) / tau;
    let yd = state.z / tau;
    let next = DmpState { y: state.y + yd * dt, z: state.z + zd * dt };
    (next, Targets { y: state.y, yd, ydd: zd / tau })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CanonicalSystem {
    pub s: f64,
    pub alpha_s: f64,
    pub tau: f64,
}

impl CanonicalSystem {
    pub fn new(alpha_s: f64, tau: f64) -> Self {
        Self { s: 1.0, alpha_s, tau }
    }

    pub fn step(&mut self, dt: f64) -> f64 {
        self.s = canonical_step(self, dt);
        self.s
    }
}

/// Exact solution of the phase decay over `dt`.
pub fn canonical_step(cs: &CanonicalSystem, dt: f64) -> f64 {
    cs.s * (-cs.alpha_s * dt / cs.tau).exp()
}

/// First derivative with second-order central differences inside and
/// second-order one-sided differences at the ends.
fn gradient(y: &[f64], dt: f64) -> Vec<f64> {
    let n = y.len();
    (0..n)
        .map(|i| match i {
            0 => (-3.0 * y[0] + 4.0 * y[1] - y[2]) / (2.0 * dt),
            i if i == n - 1 => (3.0 * y[n - 1] - 4.0 * y[n - 2] + y[n - 3]) / (2.0 * dt),
            i => (y[i + 1] - y[i - 1]) / (2.0 * dt),
        })
        .collect()
}

/// Fits forcing-term weights to a uniformly sampled demonstration by
/// locally weighted regression. `tau` is the demo duration and the goal
/// its final sample.
pub fn learn_weights(demo: &[f64], dt: f64, config: &DmpConfig) -> Result<DmpParams> {
    if demo.len() < 3 {
        return Err(Error::DegenerateDemo(format!("need at least 3 samples, got {}", demo.len())));
    }
    if !(dt > 0.0) {
        return Err(Error::DegenerateDemo("sample spacing must be > 0".into()));
    }
    let tau = (demo.len() - 1) as f64 * dt;
    let y0 = demo[0];
    let goal = demo[demo.len() - 1];
    let mut params = DmpParams::new(config, tau, y0, goal);
    let span = goal - y0;
    let constant = demo.iter().all(|&y| y == y0);
    if constant {
        log::warn!("demonstration is constant at {y0}; forcing weights set to zero");
        return Ok(params);
    }
    if span == 0.0 {
        return Err(Error::DegenerateDemo(
            "demonstration returns to its start; the forcing term gate (g - y0) is zero".into(),
        ));
    }

    let yd = gradient(demo, dt);
    let ydd = gradient(&yd, dt);
    let (az, bz) = (params.alpha_z, params.beta_z);
    let mut num = vec![0.0; config.n_basis];
    let mut den = vec![0.0; config.n_basis];
    for (k, ((&y, &v), &a)) in demo.iter().zip(&yd).zip(&ydd).enumerate() {
        let s = (-params.alpha_s * k as f64 * dt / tau).exp();
        let f_target = tau * tau * a - az * (bz * (goal - y) - tau * v);
        let xi = s * span;
        for (i, psi) in params.activations(s).enumerate() {
            num[i] += psi * xi * f_target;
            den[i] += psi * xi * xi;
        }
    }
    params.weights = num
        .iter()
        .zip(&den)
        .map(|(n, d)| if *d > 0.0 { n / d } else { 0.0 })
        .collect();
    Ok(params)
}

/// Integrates one primitive from `y0` with initial velocity `yd0` over
/// `steps` ticks; returns the position at each tick.
pub fn replay(params: &DmpParams, yd0: f64, dt: f64, steps: usize) -> Vec<f64> {
    let mut cs = CanonicalSystem::new(params.alpha_s, params.tau);
    let mut state = DmpState { y: params.y0, z: params.tau * yd0 };
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        let (next, targets) = dmp_step(params, &state, cs.s, dt);
        out.push(targets.y);
        state = next;
        cs.step(dt);
    }
    out
}

/// Uniformly sampled multi-joint demonstration: `t, joint_0, ..., joint_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Demo {
    pub dt: f64,
    pub columns: Vec<Vec<f64>>,
}

impl Demo {
    pub fn len(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn duration(&self) -> f64 {
        self.len().saturating_sub(1) as f64 * self.dt
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(r);
        let width = reader.headers()?.len();
        if width < 2 {
            return Err(Error::Malformed("demo csv needs a t column and at least one joint".into()));
        }
        let mut times = Vec::new();
        let mut columns = vec![Vec::new(); width - 1];
        for record in reader.records() {
            let record = record?;
            let mut values = record.iter().map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Malformed(format!("demo value `{f}` is not a number")))
            });
            times.push(values.next().transpose()?.unwrap_or(f64::NAN));
            for col in columns.iter_mut() {
                col.push(values.next().transpose()?.ok_or_else(|| Error::Malformed("short demo row".into()))?);
            }
        }
        if times.len() < 3 {
            return Err(Error::DegenerateDemo(format!("need at least 3 samples, got {}", times.len())));
        }
        let dt = times[1] - times[0];
        let uniform = times
            .windows(2)
            .all(|w| ((w[1] - w[0]) - dt).abs() <= 1e-6 * dt.abs().max(1e-12));
        if !(dt > 0.0) || !uniform {
            return Err(Error::Malformed("demo time stamps must be uniformly spaced and increasing".into()));
        }
        Ok(Self { dt, columns })
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let header: Vec<String> = std::iter::once("t".to_string())
            .chain((0..self.columns.len()).map(|i| format!("joint_{i}")))
            .collect();
        writeln!(w, "{}", header.join(","))?;
        for k in 0..self.len() {
            let row: Vec<String> = std::iter::once(format_g9(k as f64 * self.dt))
                .chain(self.columns.iter().map(|c| format_g9(c[k])))
                .collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Shape of one joint in the synthetic gait: a minimum-jerk ramp from
/// `start` to `end` plus `cycles` raised-cosine swings of `swing` rad.
#[derive(Debug, Clone, Copy)]
struct GaitJoint {
    start: f64,
    end: f64,
    swing: f64,
    half_cycle_shift: bool,
}

/// Columns: hip, knee, ankle of the left leg, then of the right leg.
const GAIT: [GaitJoint; 6] = [
    GaitJoint { start: 0.0, end: 0.25, swing: 0.45, half_cycle_shift: true },
    GaitJoint { start: -0.2, end: -0.4, swing: -0.65, half_cycle_shift: true },
    GaitJoint { start: 0.05, end: -0.1, swing: -0.3, half_cycle_shift: true },
    GaitJoint { start: 0.0, end: 0.25, swing: 0.45, half_cycle_shift: false },
    GaitJoint { start: -0.2, end: -0.4, swing: -0.65, half_cycle_shift: false },
    GaitJoint { start: 0.05, end: -0.1, swing: -0.3, half_cycle_shift: false },
];

const GAIT_CYCLES: f64 = 4.0;

fn min_jerk(x: f64) -> f64 {
    x * x * x * (10.0 - 15.0 * x + 6.0 * x * x)
}

/// The smooth six-joint walking surrogate used by the case study, sampled
/// every `dt` over `[0, duration]`. Left and right legs swing half a cycle
/// apart; every joint starts and ends at rest.
pub fn gait_surrogate(duration: f64, dt: f64) -> Demo {
    let n = (duration / dt).round() as usize + 1;
    let columns = GAIT
        .iter()
        .map(|j| {
            (0..n)
                .map(|k| {
                    let x = k as f64 * dt / duration;
                    let mut phase = 2.0 * std::f64::consts::PI * GAIT_CYCLES * x;
                    if j.half_cycle_shift {
                        phase += std::f64::consts::PI;
                    }
                    let swing = 0.5 * (1.0 - phase.cos());
                    j.start + (j.end - j.start) * min_jerk(x) + j.swing * swing
                })
                .collect()
        })
        .collect();
    Demo { dt, columns }
}

/// Several primitives driven by one canonical system.
#[derive(Debug, Clone)]
pub struct DmpSystem {
    pub canonical: CanonicalSystem,
    pub joints: Vec<(DmpParams, DmpState)>,
}

impl DmpSystem {
    /// Joints start at their `y0` with the given initial velocities.
    pub fn new(params: Vec<DmpParams>, initial_velocity: &[f64]) -> Self {
        let tau = params.first().map_or(1.0, |p| p.tau);
        let alpha_s = params.first().map_or(DEFAULT_ALPHA_S, |p| p.alpha_s);
        let joints = params
            .into_iter()
            .zip(initial_velocity.iter().copied().chain(std::iter::repeat(0.0)))
            .map(|(p, v)| {
                let state = DmpState { y: p.y0, z: p.tau * v };
                (p, state)
            })
            .collect();
        Self { canonical: CanonicalSystem::new(alpha_s, tau), joints }
    }

    /// Targets for every joint at the current phase, then advance.
    pub fn step(&mut self, dt: f64) -> Vec<Targets> {
        let s = self.canonical.s;
        let targets = self
            .joints
            .iter_mut()
            .map(|(p, st)| {
                let (next, t) = dmp_step(p, st, s, dt);
                *st = next;
                t
            })
            .collect();
        self.canonical.step(dt);
        targets
    }
}

/// Engine block emitting `<joint>.y_target`, `<joint>.yd_target` and
/// `<joint>.ydd_target` for each joint.
pub struct DmpBlock {
    names: Vec<String>,
    initial: DmpSystem,
    system: DmpSystem,
    pending: Option<Vec<DmpState>>,
}

impl DmpBlock {
    pub fn new(names: Vec<String>, system: DmpSystem) -> Self {
        Self { names, initial: system.clone(), system, pending: None }
    }

    pub fn target_signals(joint: &str) -> [String; 3] {
        [format!("{joint}.y_target"), format!("{joint}.yd_target"), format!("{joint}.ydd_target")]
    }
}

impl Block for DmpBlock {
    fn inputs(&self) -> Vec<PortSpec> {
        Vec::new()
    }

    fn outputs(&self) -> Vec<PortSpec> {
        self.names
            .iter()
            .flat_map(|n| Self::target_signals(n))
            .map(PortSpec::signal)
            .collect()
    }

    fn reset(&mut self) {
        self.system = self.initial.clone();
        self.pending = None;
    }

    fn output(&mut self, ctx: &mut StepContext<'_>, _inputs: &[PortValue], outputs: &mut [PortValue]) {
        let s = self.system.canonical.s;
        let mut next = Vec::with_capacity(self.system.joints.len());
        for (j, (p, st)) in self.system.joints.iter().enumerate() {
            let (advanced, t) = dmp_step(p, st, s, ctx.dt);
            next.push(advanced);
            outputs[3 * j] = PortValue::Signal(Signal::new(t.y));
            outputs[3 * j + 1] = PortValue::Signal(Signal::new(t.yd));
            outputs[3 * j + 2] = PortValue::Signal(Signal::new(t.ydd));
        }
        self.pending = Some(next);
    }

    fn update(&mut self, ctx: &mut StepContext<'_>, _inputs: &[PortValue]) {
        if let Some(next) = self.pending.take() {
            for ((_, st), n) in self.system.joints.iter_mut().zip(next) {
                *st = n;
            }
        }
        self.system.canonical.step(ctx.dt);
    }
}
