//! Scenario configuration and graph assembly.
//!
//! A scenario is a JSON document; field units are suffixed in the field
//! names. Joint entries override the built-in limits per field. Injectors
//! attach to a sensor line (`<joint>.theta`, `<joint>.omega`) between the
//! plant and the controller, or to the actuator line (`<joint>.torque`)
//! between the controller and the plant. Several injectors on one line are
//! stacked in declaration order.

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dmp::{self, Demo, DmpBlock, DmpConfig, DmpParams, DmpSystem};
use crate::engine::{BlockGraph, GraphBuilder, SimClock};
use crate::error::{Error, Result};
use crate::faults::{FaultEffect, FaultSpec, Injector, InjectorBlock};
use crate::plant::{ControllerBlock, Gains, JointId, JointParams, JointState, MonitorBlock, PlantBlock};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClockConfig {
    pub dt_s: f64,
    pub t_end_s: f64,
}

impl Default for ClockConfig {
    fn default() -> Self {
        Self { dt_s: 0.001, t_end_s: 7.0 }
    }
}

/// Per-joint overrides; unset fields take the built-in defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointConfig {
    pub name: JointId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inertia_kg_m2: Option<f64>,
    #[serde(default, rename = "damping_Nms_per_rad", skip_serializing_if = "Option::is_none")]
    pub damping_nms_per_rad: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rot_min_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rot_max_deg: Option<f64>,
    #[serde(default, rename = "max_torque_Nm", skip_serializing_if = "Option::is_none")]
    pub max_torque_nm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_speed_rpm: Option<f64>,
    /// Demo column (0-based, excluding `t`). Defaults to the joint's
    /// position in hip/knee/ankle left, hip/knee/ankle right order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demo_column: Option<usize>,
}

impl JointConfig {
    pub fn new(name: JointId) -> Self {
        Self {
            name,
            inertia_kg_m2: None,
            damping_nms_per_rad: None,
            rot_min_deg: None,
            rot_max_deg: None,
            max_torque_nm: None,
            max_speed_rpm: None,
            demo_column: None,
        }
    }

    pub fn params(&self) -> JointParams {
        let mut p = JointParams::table1(self.name);
        if let Some(v) = self.inertia_kg_m2 {
            p.inertia = v;
        }
        if let Some(v) = self.damping_nms_per_rad {
            p.damping = v;
        }
        if let Some(v) = self.rot_min_deg {
            p.rot_min = v.to_radians();
        }
        if let Some(v) = self.rot_max_deg {
            p.rot_max = v.to_radians();
        }
        if let Some(v) = self.max_torque_nm {
            p.max_torque = v;
        }
        if let Some(v) = self.max_speed_rpm {
            p.max_speed_rpm = v;
        }
        p
    }

    pub fn demo_column(&self) -> usize {
        self.demo_column
            .unwrap_or_else(|| JointId::ALL.iter().position(|j| *j == self.name).expect("joint in ALL"))
    }
}

fn default_alpha_z() -> f64 {
    dmp::DEFAULT_ALPHA_Z
}

fn default_alpha_s() -> f64 {
    dmp::DEFAULT_ALPHA_S
}

fn default_n_basis() -> usize {
    dmp::DEFAULT_N_BASIS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DmpSection {
    #[serde(default = "default_alpha_z")]
    pub alpha_z: f64,
    /// Must equal `alpha_z / 4` when given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_z: Option<f64>,
    #[serde(default = "default_alpha_s")]
    pub alpha_s: f64,
    #[serde(default = "default_n_basis")]
    pub n_basis: usize,
    /// CSV path relative to the scenario file; the built-in gait surrogate
    /// is used when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub demo_file: Option<String>,
}

impl Default for DmpSection {
    fn default() -> Self {
        Self {
            alpha_z: dmp::DEFAULT_ALPHA_Z,
            beta_z: None,
            alpha_s: dmp::DEFAULT_ALPHA_S,
            n_basis: dmp::DEFAULT_N_BASIS,
            demo_file: None,
        }
    }
}

impl DmpSection {
    pub fn config(&self) -> DmpConfig {
        DmpConfig { alpha_z: self.alpha_z, alpha_s: self.alpha_s, n_basis: self.n_basis }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonitorConfig {
    /// Signals recorded in the trace. Defaults to theta, omega and applied
    /// torque of every joint.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signals: Option<Vec<String>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedPolicy {
    /// Seed for single runs; sweeps derive cell seeds as `base + index`.
    #[serde(default)]
    pub base: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub clock: ClockConfig,
    pub joints: Vec<JointConfig>,
    #[serde(default)]
    pub dmp: DmpSection,
    #[serde(default)]
    pub control: Gains,
    #[serde(default)]
    pub injectors: Vec<FaultSpec>,
    #[serde(default)]
    pub monitors: MonitorConfig,
    #[serde(default)]
    pub seed: SeedPolicy,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn clock(&self) -> Result<SimClock> {
        SimClock::new(self.clock.dt_s, self.clock.t_end_s)
    }

    pub fn joint_params(&self) -> Vec<JointParams> {
        self.joints.iter().map(JointConfig::params).collect()
    }

    /// Signals an injector may target.
    pub fn injectable_signals(&self) -> Vec<String> {
        self.joints
            .iter()
            .flat_map(|j| [j.name.theta_signal(), j.name.omega_signal(), j.name.torque_signal()])
            .collect()
    }

    /// Every semantic violation; empty when the scenario is usable.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let c = &self.clock;
        if !(c.dt_s.is_finite() && c.dt_s > 0.0) {
            v.push(format!("clock.dt_s must be > 0, got {}", c.dt_s));
        }
        if !(c.t_end_s.is_finite() && c.t_end_s >= 0.0) {
            v.push(format!("clock.t_end_s must be >= 0, got {}", c.t_end_s));
        }
        let dt = if c.dt_s > 0.0 { c.dt_s } else { 0.001 };

        if self.joints.is_empty() {
            v.push("at least one joint is required".into());
        }
        let mut seen = HashSet::new();
        for j in &self.joints {
            if !seen.insert(j.name) {
                v.push(format!("joint `{}` declared twice", j.name));
            }
            v.extend(j.params().violations());
        }

        let d = &self.dmp;
        if !(d.alpha_z > 0.0) {
            v.push("dmp.alpha_z must be > 0".into());
        }
        if let Some(beta) = d.beta_z {
            if beta != d.alpha_z / 4.0 {
                v.push(format!(
                    "dmp.beta_z = {beta} violates the critical-damping constraint beta_z = alpha_z / 4 = {}",
                    d.alpha_z / 4.0
                ));
            }
        }
        if !(d.alpha_s > 0.0) {
            v.push("dmp.alpha_s must be > 0".into());
        }
        if d.n_basis == 0 {
            v.push("dmp.n_basis must be >= 1".into());
        }
        let g = &self.control;
        if !(g.kp.is_finite() && g.kp >= 0.0 && g.kd.is_finite() && g.kd >= 0.0) {
            v.push("control gains must be finite and >= 0".into());
        }

        let targets: HashSet<String> = self.injectable_signals().into_iter().collect();
        let mut names = HashSet::new();
        let mut chained_into: HashMap<&str, &str> = HashMap::new();
        for inj in &self.injectors {
            if !names.insert(inj.name.as_str()) {
                v.push(format!("injector `{}` declared twice", inj.name));
            }
            if !targets.contains(&inj.target_signal) {
                v.push(format!("injector `{}` targets unknown signal `{}`", inj.name, inj.target_signal));
            }
            v.extend(inj.violations(dt));
        }
        for inj in &self.injectors {
            let Some(to) = inj.chain_to.as_deref() else { continue };
            if to == inj.name {
                continue; // reported by FaultSpec::violations
            }
            if !names.contains(to) {
                v.push(format!("injector `{}` is chained to unknown injector `{to}`", inj.name));
            } else if let Some(prev) = chained_into.insert(to, &inj.name) {
                v.push(format!("injector `{to}` is chained from both `{prev}` and `{}`", inj.name));
            }
        }
        if let Some(cycle) = chain_cycle(&self.injectors) {
            v.push(format!("injector chain forms a cycle: {}", cycle.join(" -> ")));
        }

        if let Some(signals) = &self.monitors.signals {
            let mut known: HashSet<String> = self
                .joints
                .iter()
                .flat_map(|j| {
                    let mut s = vec![j.name.theta_signal(), j.name.omega_signal(), j.name.torque_signal(), j.name.torque_cmd_signal()];
                    s.extend(DmpBlock::target_signals(&j.name.to_string()));
                    s
                })
                .collect();
            for inj in &self.injectors {
                known.insert(InjectorBlock::output_signal(&inj.name));
                known.insert(InjectorBlock::trigger_signal(&inj.name));
            }
            for s in signals {
                if !known.contains(s) {
                    v.push(format!("monitors.signals names unknown signal `{s}`"));
                }
            }
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Invalid(v))
        }
    }

    /// Copy with every injector disabled; topology is unchanged.
    pub fn with_injectors_disabled(&self) -> Self {
        let mut c = self.clone();
        for inj in &mut c.injectors {
            inj.enabled = false;
        }
        c
    }

    /// Copy with the named injectors' effect set to `ConstantTime(duration_s)`.
    pub fn with_fault_duration(&self, injectors: &[String], duration_s: f64) -> Result<Self> {
        let mut c = self.clone();
        for name in injectors {
            let inj = c
                .injectors
                .iter_mut()
                .find(|i| &i.name == name)
                .ok_or_else(|| Error::Invalid(vec![format!("no injector named `{name}` to vary")]))?;
            inj.effect = FaultEffect::ConstantTime { duration_s };
        }
        Ok(c)
    }
}

fn chain_cycle(injectors: &[FaultSpec]) -> Option<Vec<String>> {
    let next: HashMap<&str, &str> = injectors
        .iter()
        .filter_map(|i| i.chain_to.as_deref().map(|to| (i.name.as_str(), to)))
        .filter(|(from, to)| from != to)
        .collect();
    for start in injectors.iter().map(|i| i.name.as_str()) {
        let mut path = vec![start];
        let mut cur = start;
        while let Some(&to) = next.get(cur) {
            if to == start {
                path.push(to);
                return Some(path.into_iter().map(String::from).collect());
            }
            if path.contains(&to) {
                break;
            }
            path.push(to);
            cur = to;
        }
    }
    None
}

/// A validated configuration together with its demonstration data.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub demo: Demo,
}

/// Sample spacing of the built-in gait surrogate.
pub const SURROGATE_DT: f64 = 0.01;
/// Duration of the built-in gait surrogate.
pub const SURROGATE_DURATION: f64 = 7.0;

impl Scenario {
    /// Validates `config` and resolves its demo file against `base_dir`.
    pub fn from_config(config: ScenarioConfig, base_dir: Option<&Path>) -> Result<Self> {
        config.validate()?;
        let demo = match &config.dmp.demo_file {
            Some(file) => {
                let path: PathBuf = base_dir.map_or_else(|| PathBuf::from(file), |d| d.join(file));
                let f = std::fs::File::open(&path).map_err(|e| Error::from(e).with_path(path.display().to_string()))?;
                Demo::read_csv(f).map_err(|e| e.with_path(path.display().to_string()))?
            }
            None => dmp::gait_surrogate(SURROGATE_DURATION, SURROGATE_DT),
        };
        Self::with_demo(config, demo)
    }

    pub fn with_demo(config: ScenarioConfig, demo: Demo) -> Result<Self> {
        config.validate()?;
        let missing: Vec<String> = config
            .joints
            .iter()
            .filter(|j| j.demo_column() >= demo.columns.len())
            .map(|j| format!("joint `{}` uses demo column {} but the demo has {}", j.name, j.demo_column(), demo.columns.len()))
            .collect();
        if !missing.is_empty() {
            return Err(Error::Invalid(missing));
        }
        Ok(Self { config, demo })
    }

    /// Reads and validates a scenario file. JSON syntax and schema errors
    /// surface as [`Error::Json`], semantic problems as [`Error::Invalid`].
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).with_path(path.display().to_string()))?;
        let config = ScenarioConfig::from_json(&text)?;
        Self::from_config(config, path.parent())
    }

    pub fn clock(&self) -> Result<SimClock> {
        self.config.clock()
    }

    pub fn map_config(&self, f: impl FnOnce(&ScenarioConfig) -> Result<ScenarioConfig>) -> Result<Self> {
        Self::with_demo(f(&self.config)?, self.demo.clone())
    }

    /// Learned primitive for each joint, in declaration order.
    pub fn dmp_params(&self) -> Result<Vec<DmpParams>> {
        let cfg = self.config.dmp.config();
        self.config
            .joints
            .iter()
            .map(|j| dmp::learn_weights(&self.demo.columns[j.demo_column()], self.demo.dt, &cfg))
            .collect()
    }

    /// Demo velocity at t = 0 for each joint (second-order forward difference).
    fn initial_velocities(&self) -> Vec<f64> {
        self.config
            .joints
            .iter()
            .map(|j| {
                let y = &self.demo.columns[j.demo_column()];
                (-3.0 * y[0] + 4.0 * y[1] - y[2]) / (2.0 * self.demo.dt)
            })
            .collect()
    }

    /// Wires DMP, injectors, controller, plant and monitor.
    pub fn build_graph(&self) -> Result<BlockGraph> {
        let cfg = &self.config;
        let dt = cfg.clock.dt_s;
        let joints = cfg.joint_params();
        let params = self.dmp_params()?;
        let velocities = self.initial_velocities();
        let initial: Vec<JointState> = params
            .iter()
            .zip(&velocities)
            .map(|(p, &v)| JointState { theta: p.y0, omega: v, tau_applied: 0.0 })
            .collect();
        let names: Vec<String> = cfg.joints.iter().map(|j| j.name.to_string()).collect();

        let mut b = GraphBuilder::new();
        b.add("dmp", Box::new(DmpBlock::new(names, DmpSystem::new(params, &velocities))))?;
        let plant = b.add("plant", Box::new(PlantBlock::new(joints.clone(), initial)))?;

        // Current source for each injectable line; injectors splice in.
        let mut line: HashMap<String, String> = cfg.injectable_signals().into_iter().map(|s| (s.clone(), s)).collect();
        let chained: HashSet<&str> = cfg.injectors.iter().filter_map(|i| i.chain_to.as_deref()).collect();
        let controller_id = {
            // The controller must exist before injectors on the torque line
            // can read from it.
            let controller = ControllerBlock::new(joints.clone(), cfg.control);
            b.add("controller", Box::new(controller))?
        };
        let mut injector_ids = HashMap::new();
        for spec in &cfg.injectors {
            let has_trigger_in = chained.contains(spec.name.as_str());
            let block = InjectorBlock::new(Injector::new(spec.clone(), dt), has_trigger_in);
            let id = b.add(spec.name.clone(), Box::new(block))?;
            let source = line
                .get_mut(&spec.target_signal)
                .ok_or_else(|| Error::Wiring(format!("injector `{}` reads unknown signal `{}`", spec.name, spec.target_signal)))?;
            b.connect(source, id, "in")?;
            *source = InjectorBlock::output_signal(&spec.name);
            injector_ids.insert(spec.name.as_str(), id);
        }
        for spec in &cfg.injectors {
            if let Some(to) = spec.chain_to.as_deref() {
                let sink = *injector_ids
                    .get(to)
                    .ok_or_else(|| Error::Wiring(format!("chain target `{to}` does not exist")))?;
                b.connect(&InjectorBlock::trigger_signal(&spec.name), sink, "trigger_in")?;
            }
        }

        let monitor = b.add("monitor", Box::new(MonitorBlock::new(joints.clone())))?;
        for j in &joints {
            let id = j.id;
            let [y, yd, ydd] = DmpBlock::target_signals(&id.to_string());
            let [py, pyd, pydd, ptheta, pomega] = ControllerBlock::input_ports(&id);
            b.connect(&y, controller_id, &py)?;
            b.connect(&yd, controller_id, &pyd)?;
            b.connect(&ydd, controller_id, &pydd)?;
            b.connect(&line[&id.theta_signal()], controller_id, &ptheta)?;
            b.connect(&line[&id.omega_signal()], controller_id, &pomega)?;
            b.connect(&line[&id.torque_signal()], plant, &id.torque_signal())?;
            let [mt, mo, mc] = MonitorBlock::input_ports(&id);
            b.connect(&id.theta_signal(), monitor, &mt)?;
            b.connect(&id.omega_signal(), monitor, &mo)?;
            b.connect(&id.torque_cmd_signal(), monitor, &mc)?;
        }

        let monitored = match &cfg.monitors.signals {
            Some(list) => list.clone(),
            None => joints
                .iter()
                .flat_map(|j| [j.id.theta_signal(), j.id.omega_signal(), j.id.torque_signal()])
                .collect(),
        };
        for s in &monitored {
            b.monitor(s)?;
        }
        b.build()
    }
}

/// Scenarios and demo data shipped with the crate.
pub mod presets {
    use super::*;

    pub const CASE_STUDY_JSON: &str = include_str!("../data/case_study.json");
    pub const MINIMAL_JSON: &str = include_str!("../data/minimal.json");
    pub const GAIT_DEMO_CSV: &str = include_str!("../data/gait_demo.csv");

    pub fn gait_demo() -> Demo {
        Demo::read_csv(GAIT_DEMO_CSV.as_bytes()).expect("shipped demo parses")
    }

    fn load(json: &str) -> Scenario {
        let config = ScenarioConfig::from_json(json).expect("shipped scenario parses");
        Scenario::with_demo(config, gait_demo()).expect("shipped scenario validates")
    }

    /// Six joints, chained stuck-at pair on the right knee sensors.
    pub fn case_study() -> Scenario {
        load(CASE_STUDY_JSON)
    }

    /// One joint, no injectors.
    pub fn minimal() -> Scenario {
        load(MINIMAL_JSON)
    }

    /// Injector pair varied by the duration sweeps.
    pub const CASE_STUDY_VARIED: [&str; 2] = ["knee_pos_stuck", "knee_vel_freeze"];
}
