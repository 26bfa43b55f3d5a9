//! Per-signal fault injector.
//!
//! An injector passes its input through unchanged until its fault event
//! fires (or its trigger input is raised by an upstream injector). It then
//! corrupts the signal according to its fault type for an exposure window
//! drawn from its fault effect, and raises its own trigger output for
//! exactly the steps it is active.

use std::collections::VecDeque;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::engine::{Block, EventKind, PortSpec, PortValue, Signal, StepContext};

/// Bit selection for [`FaultType::BitFlip`]: an explicit list or `"random"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BitPositions {
    Explicit(Vec<u8>),
    Random(RandomKeyword),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RandomKeyword {
    #[serde(rename = "random")]
    Random,
}

impl Default for BitPositions {
    fn default() -> Self {
        BitPositions::Random(RandomKeyword::Random)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FaultType {
    /// Holds the last value seen before activation.
    StuckAt,
    /// Replaces the signal with a fixed value.
    PackageDrop { replacement: f64 },
    Bias { offset: f64 },
    /// Adds uniform noise bounded by a percentage of the correct value.
    Noise { boundary_pct: f64 },
    /// Holds the pre-activation value for `delay_s`, then replays the input
    /// delayed by `delay_s` for the rest of the window.
    TimeDelay { delay_s: f64 },
    /// Inverts bits of the IEEE-754 binary64 representation. Bit 0 is the
    /// least significant mantissa bit, 63 the sign bit. Random positions are
    /// drawn without replacement from `bit_range` (inclusive, default
    /// `[0, 63]`) once per activation.
    BitFlip {
        n_bits: u32,
        #[serde(default)]
        bit_positions: BitPositions,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bit_range: Option<(u8, u8)>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FaultEvent {
    /// Independent activation chance on each armed step.
    FailureProbability { p: f64 },
    /// Activation time after arming ~ Normal(mttf, sigma^2), clamped to >= dt.
    MeanTimeToFailure { mttf_s: f64, sigma_s: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FaultEffect {
    Once,
    ConstantTime { duration_s: f64 },
    InfiniteTime,
    MeanTimeToRepair { mttr_s: f64, sigma_s: f64 },
}

impl FaultEffect {
    /// Whether the injector re-arms after the window closes.
    pub fn rearms(&self) -> bool {
        matches!(self, FaultEffect::ConstantTime { .. } | FaultEffect::MeanTimeToRepair { .. })
    }
}

fn default_enabled() -> bool {
    true
}

/// Configuration of one injector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub name: String,
    pub target_signal: String,
    pub fault_type: FaultType,
    /// `None` means the injector only activates through its trigger input.
    #[serde(default)]
    pub event: Option<FaultEvent>,
    pub effect: FaultEffect,
    #[serde(default = "default_enabled")]
    pub enabled: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain_to: Option<String>,
}

fn is_multiple_of(x: f64, dt: f64) -> bool {
    let r = x / dt;
    (r - r.round()).abs() < 1e-9 * r.abs().max(1.0)
}

impl FaultSpec {
    /// Self-contained checks. Cross-references (target signal, chain target
    /// existence) are checked by the scenario loader.
    pub fn violations(&self, dt: f64) -> Vec<String> {
        let mut v = Vec::new();
        let n = &self.name;
        if self.chain_to.as_deref() == Some(n.as_str()) {
            v.push(format!("injector `{n}` is chained to itself"));
        }
        match &self.fault_type {
            FaultType::Noise { boundary_pct } if !(*boundary_pct >= 0.0) => {
                v.push(format!("injector `{n}`: Noise boundary_pct must be >= 0"));
            }
            FaultType::TimeDelay { delay_s } => {
                if !(*delay_s > 0.0) {
                    v.push(format!("injector `{n}`: TimeDelay delay_s must be > 0"));
                } else if !is_multiple_of(*delay_s, dt) {
                    v.push(format!("injector `{n}`: TimeDelay delay_s must be a multiple of dt = {dt}"));
                }
            }
            FaultType::BitFlip { n_bits, bit_positions, bit_range } => {
                if !(1..=64).contains(n_bits) {
                    v.push(format!("injector `{n}`: BitFlip n_bits must be in 1..=64"));
                }
                match bit_positions {
                    BitPositions::Explicit(bits) => {
                        if bits.len() != *n_bits as usize {
                            v.push(format!("injector `{n}`: BitFlip lists {} positions for n_bits = {n_bits}", bits.len()));
                        }
                        if bits.iter().any(|&b| b > 63) {
                            v.push(format!("injector `{n}`: BitFlip positions must be in 0..=63"));
                        }
                        let mut sorted = bits.clone();
                        sorted.sort_unstable();
                        sorted.dedup();
                        if sorted.len() != bits.len() {
                            v.push(format!("injector `{n}`: BitFlip positions must be distinct"));
                        }
                    }
                    BitPositions::Random(_) => {
                        let (lo, hi) = bit_range.unwrap_or((0, 63));
                        if lo > hi || hi > 63 {
                            v.push(format!("injector `{n}`: BitFlip bit_range must satisfy lo <= hi <= 63"));
                        } else if u32::from(hi - lo) + 1 < *n_bits {
                            v.push(format!("injector `{n}`: BitFlip bit_range holds fewer than n_bits bits"));
                        }
                    }
                }
            }
            _ => {}
        }
        match self.event {
            Some(FaultEvent::FailureProbability { p }) if !(0.0..=1.0).contains(&p) => {
                v.push(format!("injector `{n}`: FailureProbability p must be in [0, 1]"));
            }
            Some(FaultEvent::MeanTimeToFailure { mttf_s, sigma_s }) => {
                if !(mttf_s > 0.0) {
                    v.push(format!("injector `{n}`: mttf_s must be > 0"));
                }
                if !(sigma_s >= 0.0) {
                    v.push(format!("injector `{n}`: MTTF sigma_s must be >= 0"));
                }
            }
            _ => {}
        }
        match self.effect {
            FaultEffect::ConstantTime { duration_s } if !(duration_s > 0.0) => {
                v.push(format!("injector `{n}`: ConstantTime duration_s must be > 0"));
            }
            FaultEffect::MeanTimeToRepair { mttr_s, sigma_s } => {
                if !(mttr_s > 0.0) {
                    v.push(format!("injector `{n}`: mttr_s must be > 0"));
                }
                if !(sigma_s >= 0.0) {
                    v.push(format!("injector `{n}`: MTTR sigma_s must be >= 0"));
                }
            }
            _ => {}
        }
        v
    }
}

/// How long an activation lasts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Exposure {
    OneStep,
    Duration(f64),
    UntilEnd,
}

impl Exposure {
    /// Window length in steps; `None` means until the end of the run.
    pub fn steps(&self, dt: f64) -> Option<u64> {
        match *self {
            Exposure::OneStep => Some(1),
            Exposure::Duration(d) => Some(((d / dt).round() as u64).max(1)),
            Exposure::UntilEnd => None,
        }
    }
}

fn normal_sample<R: Rng + ?Sized>(mean: f64, sd: f64, rng: &mut R) -> f64 {
    if sd == 0.0 {
        return mean;
    }
    Normal::new(mean, sd).expect("validated sd").sample(rng)
}

/// Next activation time for an MTTF event armed at `t_now`:
/// `t_now + max(dt, X)`, `X ~ Normal(mttf, sigma^2)`. `None` for
/// per-step probability events.
pub fn sample_activation_time<R: Rng + ?Sized>(event: &FaultEvent, t_now: f64, dt: f64, rng: &mut R) -> Option<f64> {
    match *event {
        FaultEvent::MeanTimeToFailure { mttf_s, sigma_s } => Some(t_now + normal_sample(mttf_s, sigma_s, rng).max(dt)),
        FaultEvent::FailureProbability { .. } => None,
    }
}

pub fn sample_exposure<R: Rng + ?Sized>(effect: &FaultEffect, dt: f64, rng: &mut R) -> Exposure {
    match *effect {
        FaultEffect::Once => Exposure::OneStep,
        FaultEffect::ConstantTime { duration_s } => Exposure::Duration(duration_s),
        FaultEffect::InfiniteTime => Exposure::UntilEnd,
        FaultEffect::MeanTimeToRepair { mttr_s, sigma_s } => Exposure::Duration(normal_sample(mttr_s, sigma_s, rng).max(dt)),
    }
}

/// Inverts the bits set in `mask` in the binary64 representation of `x`.
pub fn flip_bits(x: f64, mask: u64) -> f64 {
    f64::from_bits(x.to_bits() ^ mask)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Armed,
    Active,
    Expired,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InjectorState {
    pub phase: Phase,
    /// Last input observed while armed.
    pub held_value: Option<f64>,
    /// The most recent `delay_s / dt` inputs, oldest first.
    pub delay_buffer: VecDeque<f64>,
    pub activation_t: Option<f64>,
    /// End of the current window; `None` while active means until the end.
    pub deactivation_t: Option<f64>,
    pub trigger_out: bool,
    /// Pending MTTF activation step.
    next_event_step: Option<u64>,
    remaining_steps: Option<u64>,
    steps_active: u64,
    mask: u64,
    activations: u64,
}

impl InjectorState {
    fn new(delay_steps: usize) -> Self {
        Self {
            phase: Phase::Armed,
            held_value: None,
            delay_buffer: VecDeque::with_capacity(delay_steps),
            activation_t: None,
            deactivation_t: None,
            trigger_out: false,
            next_event_step: None,
            remaining_steps: None,
            steps_active: 0,
            mask: 0,
            activations: 0,
        }
    }

    pub fn activations(&self) -> u64 {
        self.activations
    }

    /// Bit mask applied during the current (or last) BitFlip window.
    pub fn mask(&self) -> u64 {
        self.mask
    }
}

#[derive(Debug, Clone)]
pub struct Injector {
    spec: FaultSpec,
    dt: f64,
    delay_steps: usize,
    state: InjectorState,
}

impl Injector {
    /// `spec` must already be validated against `dt`.
    pub fn new(spec: FaultSpec, dt: f64) -> Self {
        let delay_steps = match spec.fault_type {
            FaultType::TimeDelay { delay_s } => (delay_s / dt).round() as usize,
            _ => 0,
        };
        Self { state: InjectorState::new(delay_steps), spec, dt, delay_steps }
    }

    pub fn spec(&self) -> &FaultSpec {
        &self.spec
    }

    pub fn state(&self) -> &InjectorState {
        &self.state
    }

    pub fn reset(&mut self) {
        self.state = InjectorState::new(self.delay_steps);
    }

    /// Advances one step. Returns the (possibly corrupted) output and the
    /// trigger output.
    pub fn step<R: Rng + ?Sized>(&mut self, input: f64, t: f64, trigger_in: bool, rng: &mut R) -> (f64, bool) {
        if !self.spec.enabled {
            return (input, false);
        }
        let step = (t / self.dt).round() as u64;
        match self.state.phase {
            Phase::Expired => {
                self.record(input);
                self.state.trigger_out = false;
                return (input, false);
            }
            Phase::Armed => {
                if !(trigger_in || self.event_fires(step, t, rng)) {
                    self.state.held_value = Some(input);
                    self.record(input);
                    self.state.trigger_out = false;
                    return (input, false);
                }
                self.activate(t, input, rng);
            }
            Phase::Active => {}
        }

        let out = self.corrupt(input, rng);
        self.record(input);
        self.state.trigger_out = true;
        self.state.steps_active += 1;
        if let Some(left) = self.state.remaining_steps.as_mut() {
            *left -= 1;
            if *left == 0 {
                self.state.phase = if self.spec.effect.rearms() { Phase::Armed } else { Phase::Expired };
                self.state.remaining_steps = None;
                self.state.next_event_step = None;
            }
        }
        (out, true)
    }

    fn event_fires<R: Rng + ?Sized>(&mut self, step: u64, t: f64, rng: &mut R) -> bool {
        match self.spec.event {
            None => false,
            Some(FaultEvent::FailureProbability { p }) => rng.random::<f64>() < p,
            Some(ref event @ FaultEvent::MeanTimeToFailure { .. }) => {
                let due = match self.state.next_event_step {
                    Some(due) => due,
                    None => {
                        let at = sample_activation_time(event, t, self.dt, rng).expect("mttf event");
                        let due = step + (((at - t) / self.dt).round() as u64).max(1);
                        self.state.next_event_step = Some(due);
                        due
                    }
                };
                step >= due
            }
        }
    }

    fn activate<R: Rng + ?Sized>(&mut self, t: f64, input: f64, rng: &mut R) {
        let st = &mut self.state;
        st.phase = Phase::Active;
        st.activations += 1;
        st.activation_t = Some(t);
        st.steps_active = 0;
        if st.held_value.is_none() {
            st.held_value = Some(input);
        }
        st.remaining_steps = sample_exposure(&self.spec.effect, self.dt, rng).steps(self.dt);
        st.deactivation_t = st.remaining_steps.map(|n| t + n as f64 * self.dt);
        if let FaultType::BitFlip { n_bits, bit_positions, bit_range } = &self.spec.fault_type {
            st.mask = match bit_positions {
                BitPositions::Explicit(bits) => bits.iter().fold(0u64, |m, &b| m | (1u64 << b)),
                BitPositions::Random(_) => {
                    let (lo, hi) = bit_range.unwrap_or((0, 63));
                    let width = usize::from(hi - lo) + 1;
                    index::sample(rng, width, *n_bits as usize)
                        .iter()
                        .fold(0u64, |m, i| m | (1u64 << (usize::from(lo) + i)))
                }
            };
        }
    }

    fn corrupt<R: Rng + ?Sized>(&mut self, input: f64, rng: &mut R) -> f64 {
        let held = self.state.held_value.unwrap_or(input);
        match self.spec.fault_type {
            FaultType::StuckAt => held,
            FaultType::PackageDrop { replacement } => replacement,
            FaultType::Bias { offset } => input + offset,
            FaultType::Noise { boundary_pct } => {
                let bound = boundary_pct / 100.0 * input.abs();
                if bound > 0.0 {
                    let mut out = input + rng.random_range(-bound..=bound);
                    // Rounding of the sum can land one ulp past the bound.
                    while (out - input).abs() > bound {
                        out = if out > input { out.next_down() } else { out.next_up() };
                    }
                    out
                } else {
                    input
                }
            }
            FaultType::TimeDelay { .. } => {
                if (self.state.steps_active as usize) < self.delay_steps {
                    held
                } else {
                    // Full by now: at least delay_steps inputs were recorded
                    // since activation.
                    *self.state.delay_buffer.front().expect("delay buffer filled")
                }
            }
            FaultType::BitFlip { .. } => flip_bits(input, self.state.mask),
        }
    }

    fn record(&mut self, input: f64) {
        if self.delay_steps == 0 {
            return;
        }
        if self.state.delay_buffer.len() == self.delay_steps {
            self.state.delay_buffer.pop_front();
        }
        self.state.delay_buffer.push_back(input);
    }
}

/// Engine block wrapping an [`Injector`]. Input ports `in` and (when
/// chained into) `trigger_in`; outputs `<name>.out` and `<name>.trigger`.
pub struct InjectorBlock {
    injector: Injector,
    has_trigger_in: bool,
}

impl InjectorBlock {
    pub fn new(injector: Injector, has_trigger_in: bool) -> Self {
        Self { injector, has_trigger_in }
    }

    pub fn output_signal(name: &str) -> String {
        format!("{name}.out")
    }

    pub fn trigger_signal(name: &str) -> String {
        format!("{name}.trigger")
    }
}

impl Block for InjectorBlock {
    fn inputs(&self) -> Vec<PortSpec> {
        let mut ports = vec![PortSpec::signal("in")];
        if self.has_trigger_in {
            ports.push(PortSpec::trigger("trigger_in"));
        }
        ports
    }

    fn outputs(&self) -> Vec<PortSpec> {
        let name = &self.injector.spec.name;
        vec![
            PortSpec::signal(Self::output_signal(name)),
            PortSpec::trigger(Self::trigger_signal(name)),
        ]
    }

    fn reset(&mut self) {
        self.injector.reset();
    }

    fn output(&mut self, ctx: &mut StepContext<'_>, inputs: &[PortValue], outputs: &mut [PortValue]) {
        let input = inputs[0].as_f64();
        let trigger_in = self.has_trigger_in && inputs[1].as_bool();
        let before = self.injector.state.activations;
        let t = ctx.t;
        let (out, trig) = self.injector.step(input, t, trigger_in, ctx.rng());
        if self.injector.state.activations > before {
            ctx.emit(EventKind::FaultActivated);
        }
        if trig && self.injector.state.phase != Phase::Active {
            ctx.emit(EventKind::FaultCleared);
        }
        outputs[0] = PortValue::Signal(Signal::new(out));
        outputs[1] = PortValue::Trigger(trig);
    }
}
