//! Six-joint exoskeleton surrogate.
//!
//! Every joint is an independent rotational second-order system
//! `I * theta'' = tau - b * omega`, driven by a computed-torque + PD law and
//! watched by a constraint monitor built on the walking requirements table:
//! torque and speed excesses are errors, leaving the range of travel is a
//! failure.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dmp::Targets;
use crate::engine::{signal_at, Block, EventKind, PortSpec, PortValue, Signal, StepContext};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JointKind {
    Hip,
    Knee,
    Ankle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

/// Joint name such as `knee_right`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct JointId {
    pub kind: JointKind,
    pub side: Side,
}

impl JointId {
    pub const fn new(kind: JointKind, side: Side) -> Self {
        Self { kind, side }
    }

    /// Left leg hip, knee, ankle, then the right leg.
    pub const ALL: [JointId; 6] = [
        JointId::new(JointKind::Hip, Side::Left),
        JointId::new(JointKind::Knee, Side::Left),
        JointId::new(JointKind::Ankle, Side::Left),
        JointId::new(JointKind::Hip, Side::Right),
        JointId::new(JointKind::Knee, Side::Right),
        JointId::new(JointKind::Ankle, Side::Right),
    ];

    pub fn theta_signal(&self) -> String {
        format!("{self}.theta")
    }

    pub fn omega_signal(&self) -> String {
        format!("{self}.omega")
    }

    pub fn torque_signal(&self) -> String {
        format!("{self}.torque")
    }

    pub fn torque_cmd_signal(&self) -> String {
        format!("{self}.torque_cmd")
    }
}

impl fmt::Display for JointId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            JointKind::Hip => "hip",
            JointKind::Knee => "knee",
            JointKind::Ankle => "ankle",
        };
        let side = match self.side {
            Side::Left => "left",
            Side::Right => "right",
        };
        write!(f, "{kind}_{side}")
    }
}

impl FromStr for JointId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        JointId::ALL
            .into_iter()
            .find(|j| j.to_string() == s)
            .ok_or_else(|| format!("unknown joint `{s}` (expected hip|knee|ankle _ left|right)"))
    }
}

impl Serialize for JointId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for JointId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

pub fn rpm_to_rad_s(rpm: f64) -> f64 {
    rpm * 2.0 * std::f64::consts::PI / 60.0
}

pub fn rad_s_to_rpm(omega: f64) -> f64 {
    omega * 60.0 / (2.0 * std::f64::consts::PI)
}

/// Mechanical power `T * (2 pi / 60) * n` in watts for torque in N·m and
/// speed in rpm.
pub fn joint_power(torque: f64, speed_rpm: f64) -> f64 {
    torque * rpm_to_rad_s(speed_rpm)
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointParams {
    pub id: JointId,
    /// kg·m²
    pub inertia: f64,
    /// N·m·s/rad
    pub damping: f64,
    /// Range of travel, rad.
    pub rot_min: f64,
    pub rot_max: f64,
    /// N·m
    pub max_torque: f64,
    pub max_speed_rpm: f64,
}

impl JointParams {
    /// Limits from the walking requirements table with the built-in
    /// inertia and damping. The ankle uses a -30..30 deg range of travel.
    pub fn table1(id: JointId) -> Self {
        let (inertia, max_torque, max_speed_rpm, rot_deg) = match id.kind {
            JointKind::Hip => (1.2, 72.9, 23.4, (-30.0, 90.0)),
            JointKind::Knee => (0.8, 54.9, 65.2, (-90.0, 0.0)),
            JointKind::Ankle => (0.4, 128.7, 50.8, (-30.0, 30.0)),
        };
        Self {
            id,
            inertia,
            damping: 0.5,
            rot_min: f64::to_radians(rot_deg.0),
            rot_max: f64::to_radians(rot_deg.1),
            max_torque,
            max_speed_rpm,
        }
    }

    pub fn max_speed(&self) -> f64 {
        rpm_to_rad_s(self.max_speed_rpm)
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let j = self.id;
        if !(self.rot_min < self.rot_max) {
            v.push(format!("joint `{j}`: rot_min must be < rot_max"));
        }
        if !(self.inertia > 0.0) {
            v.push(format!("joint `{j}`: inertia must be > 0"));
        }
        if !(self.damping >= 0.0) {
            v.push(format!("joint `{j}`: damping must be >= 0"));
        }
        if !(self.max_torque > 0.0) {
            v.push(format!("joint `{j}`: max_torque must be > 0"));
        }
        if !(self.max_speed_rpm > 0.0) {
            v.push(format!("joint `{j}`: max_speed must be > 0"));
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct JointState {
    pub theta: f64,
    pub omega: f64,
    pub tau_applied: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gains {
    pub kp: f64,
    pub kd: f64,
}

impl Default for Gains {
    fn default() -> Self {
        Self { kp: 200.0, kd: 20.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Torque {
    /// Control law output before actuator saturation.
    pub commanded: f64,
    /// Clamped to ±max_torque.
    pub applied: f64,
}

/// `I * ydd + kp * (y - theta) + kd * (yd - omega)`, saturated at the
/// joint's torque limit. `theta`/`omega` are the measured (possibly faulty)
/// sensor values.
pub fn dynamic_control(params: &JointParams, target: &Targets, theta: f64, omega: f64, gains: &Gains) -> Torque {
    let commanded = params.inertia * target.ydd + gains.kp * (target.y - theta) + gains.kd * (target.yd - omega);
    Torque { commanded, applied: commanded.clamp(-params.max_torque, params.max_torque) }
}

/// Semi-implicit Euler: omega first, then theta with the new omega. No hard
/// stops; leaving the range of travel is only recorded.
pub fn joint_step(params: &JointParams, state: &JointState, tau: f64, dt: f64) -> JointState {
    let alpha = (tau - params.damping * state.omega) / params.inertia;
    let omega = state.omega + alpha * dt;
    JointState { theta: state.theta + omega * dt, omega, tau_applied: tau }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ViolationKind {
    TorqueError,
    SpeedError,
    AngleFailure,
}

impl ViolationKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ViolationKind::TorqueError => "TorqueError",
            ViolationKind::SpeedError => "SpeedError",
            ViolationKind::AngleFailure => "AngleFailure",
        }
    }

    pub fn is_failure(&self) -> bool {
        matches!(self, ViolationKind::AngleFailure)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationRecord {
    pub t: f64,
    pub joint: JointId,
    pub kind: ViolationKind,
    pub value: f64,
}

/// Writes records as CSV with columns `t, joint, kind, value`.
pub fn write_violations_csv<'a, W: std::io::Write>(
    records: impl IntoIterator<Item = &'a ViolationRecord>,
    w: W,
) -> crate::error::Result<()> {
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    writer.write_record(["t", "joint", "kind", "value"])?;
    for r in records {
        writer.serialize(r)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_violations_csv<R: std::io::Read>(r: R) -> crate::error::Result<Vec<ViolationRecord>> {
    csv::Reader::from_reader(r)
        .deserialize()
        .map(|row| row.map_err(crate::error::Error::from))
        .collect()
}

/// Checks one joint sample against its limits. `torque` is the commanded
/// torque: the applied torque can never exceed the limit.
pub fn check_joint(params: &JointParams, theta: f64, omega: f64, torque: f64, t: f64) -> Vec<ViolationRecord> {
    let mut out = Vec::new();
    let mut push = |kind, value| out.push(ViolationRecord { t, joint: params.id, kind, value });
    if torque.abs() > params.max_torque {
        push(ViolationKind::TorqueError, torque);
    }
    if omega.abs() > params.max_speed() {
        push(ViolationKind::SpeedError, omega);
    }
    if theta < params.rot_min || theta > params.rot_max {
        push(ViolationKind::AngleFailure, theta);
    }
    out
}

pub fn monitor(params: &[JointParams], states: &[JointState], commanded: &[f64], t: f64) -> Vec<ViolationRecord> {
    params
        .iter()
        .zip(states)
        .zip(commanded)
        .flat_map(|((p, s), &tau)| check_joint(p, s.theta, s.omega, tau, t))
        .collect()
}

/// Computed-torque controller for all joints. Inputs per joint (in order):
/// `y`, `yd`, `ydd`, `theta_meas`, `omega_meas`. Outputs `<joint>.torque_cmd`
/// and `<joint>.torque`.
pub struct ControllerBlock {
    joints: Vec<JointParams>,
    gains: Gains,
}

impl ControllerBlock {
    pub fn new(joints: Vec<JointParams>, gains: Gains) -> Self {
        Self { joints, gains }
    }

    pub fn input_ports(joint: &JointId) -> [String; 5] {
        ["y", "yd", "ydd", "theta_meas", "omega_meas"].map(|p| format!("{joint}.{p}"))
    }
}

impl Block for ControllerBlock {
    fn inputs(&self) -> Vec<PortSpec> {
        self.joints
            .iter()
            .flat_map(|j| Self::input_ports(&j.id))
            .map(PortSpec::signal)
            .collect()
    }

    fn outputs(&self) -> Vec<PortSpec> {
        self.joints
            .iter()
            .flat_map(|j| [j.id.torque_cmd_signal(), j.id.torque_signal()])
            .map(PortSpec::signal)
            .collect()
    }

    fn output(&mut self, _ctx: &mut StepContext<'_>, inputs: &[PortValue], outputs: &mut [PortValue]) {
        for (j, params) in self.joints.iter().enumerate() {
            let at = |k| signal_at(inputs, 5 * j + k);
            let target = Targets { y: at(0), yd: at(1), ydd: at(2) };
            let torque = dynamic_control(params, &target, at(3), at(4), &self.gains);
            outputs[2 * j] = PortValue::Signal(Signal::new(torque.commanded));
            outputs[2 * j + 1] = PortValue::Signal(Signal::new(torque.applied));
        }
    }
}

/// Joint dynamics. Outputs the current `<joint>.theta` / `<joint>.omega`;
/// the `<joint>.torque` input is consumed in the update phase only.
pub struct PlantBlock {
    joints: Vec<JointParams>,
    initial: Vec<JointState>,
    state: Vec<JointState>,
}

impl PlantBlock {
    pub fn new(joints: Vec<JointParams>, initial: Vec<JointState>) -> Self {
        Self { state: initial.clone(), joints, initial }
    }
}

impl Block for PlantBlock {
    fn inputs(&self) -> Vec<PortSpec> {
        self.joints
            .iter()
            .map(|j| PortSpec::signal(format!("{}.torque", j.id)).delayed())
            .collect()
    }

    fn outputs(&self) -> Vec<PortSpec> {
        self.joints
            .iter()
            .flat_map(|j| [j.id.theta_signal(), j.id.omega_signal()])
            .map(PortSpec::signal)
            .collect()
    }

    fn reset(&mut self) {
        self.state = self.initial.clone();
    }

    fn output(&mut self, _ctx: &mut StepContext<'_>, _inputs: &[PortValue], outputs: &mut [PortValue]) {
        for (j, st) in self.state.iter().enumerate() {
            outputs[2 * j] = PortValue::Signal(Signal::new(st.theta));
            outputs[2 * j + 1] = PortValue::Signal(Signal::new(st.omega));
        }
    }

    fn update(&mut self, ctx: &mut StepContext<'_>, inputs: &[PortValue]) {
        for (j, (params, st)) in self.joints.iter().zip(self.state.iter_mut()).enumerate() {
            *st = joint_step(params, st, signal_at(inputs, j), ctx.dt);
        }
    }
}

/// Constraint monitor. Inputs per joint: `theta`, `omega`, `torque_cmd`
/// (true plant values). Emits one violation event per limit breached per step.
pub struct MonitorBlock {
    joints: Vec<JointParams>,
}

impl MonitorBlock {
    pub fn new(joints: Vec<JointParams>) -> Self {
        Self { joints }
    }

    pub fn input_ports(joint: &JointId) -> [String; 3] {
        ["theta", "omega", "torque_cmd"].map(|p| format!("{joint}.{p}"))
    }
}

impl Block for MonitorBlock {
    fn inputs(&self) -> Vec<PortSpec> {
        self.joints
            .iter()
            .flat_map(|j| Self::input_ports(&j.id))
            .map(PortSpec::signal)
            .collect()
    }

    fn outputs(&self) -> Vec<PortSpec> {
        Vec::new()
    }

    fn output(&mut self, ctx: &mut StepContext<'_>, inputs: &[PortValue], _outputs: &mut [PortValue]) {
        let t = ctx.t;
        for (j, params) in self.joints.iter().enumerate() {
            let at = |k| signal_at(inputs, 3 * j + k);
            for record in check_joint(params, at(0), at(1), at(2), t) {
                ctx.emit(EventKind::Violation(record));
            }
        }
    }
}
