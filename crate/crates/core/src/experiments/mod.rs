//! Fault-duration sweeps and robustness probes.
//!
//! Every sweep cell pairs a faulty run with a fault-free reference run of
//! the same scenario and seed (injectors disabled, topology unchanged), and
//! scores the damage as the RMSE between the two traces of the observed
//! joint's position, velocity and applied torque.

mod plot;

pub use plot::render_rmse_svg;

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::{EventKind, TraceLog};
use crate::error::{Error, Result};
use crate::faults::{FaultEffect, FaultEvent, FaultSpec, FaultType};
use crate::plant::{JointId, ViolationRecord};
use crate::scenario::Scenario;

/// Safety verdict of one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Classification {
    Nominal,
    Error,
    Failure,
}

impl Classification {
    pub fn as_str(&self) -> &'static str {
        match self {
            Classification::Nominal => "Nominal",
            Classification::Error => "Error",
            Classification::Failure => "Failure",
        }
    }
}

/// Failure if any angle left its range of travel, else Error if any torque
/// or speed limit was exceeded, else Nominal.
pub fn classify_run<'a>(violations: impl IntoIterator<Item = &'a ViolationRecord>) -> Classification {
    violations.into_iter().fold(Classification::Nominal, |worst, v| {
        let c = if v.kind.is_failure() { Classification::Failure } else { Classification::Error };
        worst.max(c)
    })
}

pub fn rmse(faulty: &[f64], reference: &[f64]) -> Result<f64> {
    if faulty.len() != reference.len() {
        return Err(Error::LengthMismatch(faulty.len(), reference.len()));
    }
    if faulty.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = faulty.iter().zip(reference).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((sum / faulty.len() as f64).sqrt())
}

/// `a * d^2 + b * d + c` with the RMS of the fit error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticFit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub residual: f64,
}

impl QuadraticFit {
    pub fn eval(&self, d: f64) -> f64 {
        (self.a * d + self.b) * d + self.c
    }
}

/// Least-squares quadratic through `(duration, value)` points, solved by SVD
/// of the Vandermonde matrix.
pub fn fit_quadratic(points: &[(f64, f64)]) -> Result<QuadraticFit> {
    let mut distinct: Vec<f64> = points.iter().map(|p| p.0).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::DegenerateFit(distinct.len()));
    }
    let n = points.len();
    let design = DMatrix::from_fn(n, 3, |i, j| points[i].0.powi(2 - j as i32));
    let rhs = DVector::from_iterator(n, points.iter().map(|p| p.1));
    let coeffs = design
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .map_err(|e| Error::Malformed(format!("quadratic fit failed: {e}")))?;
    let fit = QuadraticFit { a: coeffs[0], b: coeffs[1], c: coeffs[2], residual: 0.0 };
    let sq: f64 = points.iter().map(|&(d, y)| (fit.eval(d) - y).powi(2)).sum();
    Ok(QuadraticFit { residual: (sq / n as f64).sqrt(), ..fit })
}

/// First duration at which a failure fraction reaches 50%, linearly
/// interpolated between neighbouring durations.
pub fn failure_threshold(points: &[(f64, f64)]) -> Option<f64> {
    let first = points.first()?;
    if first.1 >= 0.5 {
        return Some(first.0);
    }
    points.windows(2).find_map(|w| {
        let ((d0, f0), (d1, f1)) = (w[0], w[1]);
        (f0 < 0.5 && f1 >= 0.5).then(|| d0 + (0.5 - f0) / (f1 - f0) * (d1 - d0))
    })
}

/// `0.05, 0.10, ..., 0.50` s.
pub fn fine_durations() -> Vec<f64> {
    (1..=10).map(|i| f64::from(i * 5) / 100.0).collect()
}

/// `0.50, 0.75, ..., 3.00` s.
pub fn coarse_durations() -> Vec<f64> {
    (2..=12).map(|i| f64::from(i) * 0.25).collect()
}

#[derive(Debug, Clone)]
pub struct SweepPlan {
    pub scenario: Scenario,
    /// Strictly increasing. A zero duration means no fault window at all.
    pub durations: Vec<f64>,
    pub seeds_per_duration: usize,
    /// Cell `(d, i)` runs with seed `base_seed + i` for every duration.
    pub base_seed: u64,
    /// Injectors whose `ConstantTime` window is set to the swept duration.
    /// The first one is the independent fault source used for timing
    /// analysis.
    pub varied_injectors: Vec<String>,
    pub observed_joint: JointId,
    /// Runs whose closest pair of fault windows is less than this apart
    /// count as consecutive-fault runs.
    pub consecutive_gap_s: f64,
    /// Worker threads; results do not depend on it.
    pub jobs: usize,
}

pub const DEFAULT_SEEDS_PER_DURATION: usize = 20;
pub const DEFAULT_CONSECUTIVE_GAP_S: f64 = 0.5;

impl SweepPlan {
    /// Sweep over the case-study injector pair on the right knee.
    pub fn new(scenario: Scenario, durations: Vec<f64>) -> Self {
        let base_seed = scenario.config.seed.base;
        Self {
            scenario,
            durations,
            seeds_per_duration: DEFAULT_SEEDS_PER_DURATION,
            base_seed,
            varied_injectors: crate::scenario::presets::CASE_STUDY_VARIED.iter().map(|s| s.to_string()).collect(),
            observed_joint: "knee_right".parse().expect("valid joint"),
            consecutive_gap_s: DEFAULT_CONSECUTIVE_GAP_S,
            jobs: 1,
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.durations.is_empty() {
            v.push("sweep needs at least one duration".into());
        }
        if self.durations.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            v.push("sweep durations must be finite and >= 0".into());
        }
        if self.durations.windows(2).any(|w| !(w[0] < w[1])) {
            v.push("sweep durations must be strictly increasing".into());
        }
        if self.seeds_per_duration == 0 {
            v.push("seeds per duration must be >= 1".into());
        }
        if self.varied_injectors.is_empty() {
            v.push("sweep needs at least one varied injector".into());
        }
        for name in &self.varied_injectors {
            if !self.scenario.config.injectors.iter().any(|i| &i.name == name) {
                v.push(format!("scenario has no injector `{name}` to vary"));
            }
        }
        if !self.scenario.config.joints.iter().any(|j| j.name == self.observed_joint) {
            v.push(format!("scenario has no joint `{}`", self.observed_joint));
        }
        v
    }
}

/// One line of `sweep_results.csv`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub duration_s: f64,
    pub seed: u64,
    pub rmse_pos_rad: f64,
    pub rmse_vel_rad_s: f64,
    #[serde(rename = "rmse_torque_Nm")]
    pub rmse_torque_nm: f64,
    pub classification: Classification,
}

/// Activation windows of the primary injector in one faulty run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FaultTiming {
    /// `(start, end)` in seconds, end exclusive.
    pub windows: Vec<(f64, f64)>,
}

impl FaultTiming {
    pub fn from_trace(trace: &TraceLog, injector: &str) -> Self {
        let mut windows = Vec::new();
        let mut open: Option<f64> = None;
        for e in trace.events().iter().filter(|e| e.block == injector) {
            match e.kind {
                EventKind::FaultActivated => open = Some(e.t),
                EventKind::FaultCleared => {
                    if let Some(start) = open.take() {
                        windows.push((start, e.t + trace.dt()));
                    }
                }
                EventKind::Violation(_) => {}
            }
        }
        if let Some(start) = open {
            windows.push((start, trace.len() as f64 * trace.dt()));
        }
        Self { windows }
    }

    /// Smallest idle time between consecutive windows.
    pub fn min_gap(&self) -> Option<f64> {
        self.windows.windows(2).map(|w| w[1].0 - w[0].1).min_by(f64::total_cmp)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub row: SweepRow,
    pub timing: FaultTiming,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl Stats {
    fn of(values: impl Iterator<Item = f64>) -> Self {
        let (n, sum, min, max) = values.fold((0usize, 0.0, f64::INFINITY, f64::NEG_INFINITY), |(n, s, lo, hi), v| {
            (n + 1, s + v, lo.min(v), hi.max(v))
        });
        if n == 0 {
            return Stats { mean: 0.0, min: 0.0, max: 0.0 };
        }
        Stats { mean: sum / n as f64, min, max }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DurationSummary {
    pub duration_s: f64,
    pub runs: usize,
    pub rmse_pos_rad: Stats,
    pub rmse_vel_rad_s: Stats,
    #[serde(rename = "rmse_torque_Nm")]
    pub rmse_torque_nm: Stats,
    pub nominal: usize,
    pub error: usize,
    pub failure: usize,
    pub failure_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinPoint {
    pub duration_s: f64,
    pub runs: usize,
    pub failures: usize,
    pub failure_fraction: f64,
}

/// Runs grouped by how closely their fault windows follow each other.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinSummary {
    pub label: String,
    pub points: Vec<BinPoint>,
    /// Duration where this bin's failure fraction first reaches 50%.
    pub d_star_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub seeds_per_duration: usize,
    pub base_seed: u64,
    pub observed_joint: JointId,
    pub durations: Vec<DurationSummary>,
    /// Quadratic through mean position RMSE vs duration (needs 3+ durations).
    pub fit: Option<QuadraticFit>,
    /// Duration where the overall failure fraction first reaches 50%.
    pub d_star_s: Option<f64>,
    /// Longest duration up to which every duration keeps >= 90% of runs
    /// out of Failure.
    pub max_safe_duration_s: Option<f64>,
    pub consecutive_gap_s: f64,
    pub consecutive: BinSummary,
    pub isolated: BinSummary,
}

impl SweepSummary {
    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn mean_position_rmse(&self) -> Vec<(f64, f64)> {
        self.durations.iter().map(|d| (d.duration_s, d.rmse_pos_rad.mean)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub cells: Vec<CellResult>,
    pub summary: SweepSummary,
}

impl SweepResult {
    pub fn rows(&self) -> Vec<SweepRow> {
        self.cells.iter().map(|c| c.row).collect()
    }
}

pub fn write_results_csv<W: Write>(rows: &[SweepRow], w: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(w);
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_results_csv<R: Read>(r: R) -> Result<Vec<SweepRow>> {
    csv::Reader::from_reader(r)
        .deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

struct RunOutcome {
    trace: TraceLog,
    classification: Classification,
}

fn simulate(scenario: &Scenario, seed: u64) -> Result<RunOutcome> {
    let clock = scenario.clock()?;
    let mut graph = scenario.build_graph()?;
    let trace = graph.run(&clock, seed)?;
    let classification = classify_run(trace.violations());
    Ok(RunOutcome { trace, classification })
}

fn column<'a>(trace: &'a TraceLog, name: &str) -> Result<&'a [f64]> {
    trace
        .column(name)
        .ok_or_else(|| Error::Malformed(format!("trace lacks signal `{name}`")))
}

fn score(faulty: &RunOutcome, reference: &RunOutcome, joint: JointId) -> Result<[f64; 3]> {
    let mut out = [0.0; 3];
    for (slot, signal) in out
        .iter_mut()
        .zip([joint.theta_signal(), joint.omega_signal(), joint.torque_signal()])
    {
        *slot = rmse(column(&faulty.trace, &signal)?, column(&reference.trace, &signal)?)?;
    }
    Ok(out)
}

fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Malformed(format!("cannot start worker pool: {e}")))
}

/// Runs every (duration, seed) cell. Output order is duration-major and
/// independent of `plan.jobs`.
pub fn run_sweep(plan: &SweepPlan) -> Result<SweepResult> {
    let problems = plan.violations();
    if !problems.is_empty() {
        return Err(Error::Invalid(problems));
    }
    let joint = plan.observed_joint;
    let mut base = plan.scenario.config.clone();
    base.monitors.signals = Some(vec![joint.theta_signal(), joint.omega_signal(), joint.torque_signal()]);
    let base = Scenario::with_demo(base, plan.scenario.demo.clone())?;
    let reference_scenario = Scenario::with_demo(base.config.with_injectors_disabled(), base.demo.clone())?;
    let seeds: Vec<u64> = (0..plan.seeds_per_duration as u64).map(|i| plan.base_seed.wrapping_add(i)).collect();
    let primary = plan.varied_injectors[0].clone();

    let pool = thread_pool(plan.jobs)?;
    let cells = pool.install(|| -> Result<Vec<CellResult>> {
        // The reference run does not depend on the fault duration.
        let references: Vec<RunOutcome> = seeds
            .par_iter()
            .map(|&seed| {
                simulate(&reference_scenario, seed).map_err(|e| Error::Cell { duration: 0.0, seed, source: Box::new(e) })
            })
            .collect::<Result<_>>()?;
        let jobs: Vec<(f64, usize)> = plan
            .durations
            .iter()
            .flat_map(|&d| (0..seeds.len()).map(move |i| (d, i)))
            .collect();
        jobs.par_iter()
            .map(|&(duration, i)| {
                let seed = seeds[i];
                let wrap = |e: Error| Error::Cell { duration, seed, source: Box::new(e) };
                let faulty_scenario = if duration == 0.0 {
                    reference_scenario.clone()
                } else {
                    base.map_config(|c| c.with_fault_duration(&plan.varied_injectors, duration)).map_err(wrap)?
                };
                let faulty = simulate(&faulty_scenario, seed).map_err(wrap)?;
                let [pos, vel, torque] = score(&faulty, &references[i], joint).map_err(wrap)?;
                Ok(CellResult {
                    row: SweepRow {
                        duration_s: duration,
                        seed,
                        rmse_pos_rad: pos,
                        rmse_vel_rad_s: vel,
                        rmse_torque_nm: torque,
                        classification: faulty.classification,
                    },
                    timing: FaultTiming::from_trace(&faulty.trace, &primary),
                })
            })
            .collect()
    })?;

    let summary = summarize(plan, &cells);
    Ok(SweepResult { cells, summary })
}

fn bin_summary(label: &str, plan: &SweepPlan, cells: &[CellResult], keep: impl Fn(&CellResult) -> bool) -> BinSummary {
    let points: Vec<BinPoint> = plan
        .durations
        .iter()
        .map(|&d| {
            let in_bin: Vec<&CellResult> = cells.iter().filter(|c| c.row.duration_s == d && keep(c)).collect();
            let failures = in_bin.iter().filter(|c| c.row.classification == Classification::Failure).count();
            let runs = in_bin.len();
            BinPoint {
                duration_s: d,
                runs,
                failures,
                failure_fraction: if runs > 0 { failures as f64 / runs as f64 } else { 0.0 },
            }
        })
        .collect();
    let curve: Vec<(f64, f64)> = points.iter().filter(|p| p.runs > 0).map(|p| (p.duration_s, p.failure_fraction)).collect();
    BinSummary { label: label.into(), d_star_s: failure_threshold(&curve), points }
}

fn summarize(plan: &SweepPlan, cells: &[CellResult]) -> SweepSummary {
    let durations: Vec<DurationSummary> = plan
        .durations
        .iter()
        .map(|&d| {
            let rows: Vec<&SweepRow> = cells.iter().map(|c| &c.row).filter(|r| r.duration_s == d).collect();
            let count = |k| rows.iter().filter(|r| r.classification == k).count();
            let failure = count(Classification::Failure);
            DurationSummary {
                duration_s: d,
                runs: rows.len(),
                rmse_pos_rad: Stats::of(rows.iter().map(|r| r.rmse_pos_rad)),
                rmse_vel_rad_s: Stats::of(rows.iter().map(|r| r.rmse_vel_rad_s)),
                rmse_torque_nm: Stats::of(rows.iter().map(|r| r.rmse_torque_nm)),
                nominal: count(Classification::Nominal),
                error: count(Classification::Error),
                failure,
                failure_fraction: if rows.is_empty() { 0.0 } else { failure as f64 / rows.len() as f64 },
            }
        })
        .collect();
    let means: Vec<(f64, f64)> = durations.iter().map(|d| (d.duration_s, d.rmse_pos_rad.mean)).collect();
    let curve: Vec<(f64, f64)> = durations.iter().map(|d| (d.duration_s, d.failure_fraction)).collect();
    let max_safe_duration_s = durations
        .iter()
        .take_while(|d| d.failure_fraction <= 0.1)
        .last()
        .map(|d| d.duration_s);
    let gap = plan.consecutive_gap_s;
    let consecutive = bin_summary("consecutive", plan, cells, |c| c.timing.min_gap().is_some_and(|g| g < gap));
    let isolated = bin_summary("isolated", plan, cells, |c| {
        !c.timing.windows.is_empty() && c.timing.min_gap().is_none_or(|g| g >= gap)
    });
    SweepSummary {
        seeds_per_duration: plan.seeds_per_duration,
        base_seed: plan.base_seed,
        observed_joint: plan.observed_joint,
        fit: fit_quadratic(&means).ok(),
        d_star_s: failure_threshold(&curve),
        max_safe_duration_s,
        consecutive_gap_s: gap,
        consecutive,
        isolated,
        durations,
    }
}

/// A small-fault probe: one injector placed on a signal, run over many seeds.
#[derive(Debug, Clone)]
pub struct ProbePlan {
    pub scenario: Scenario,
    pub label: String,
    pub target_signal: String,
    pub fault_type: FaultType,
    pub event: FaultEvent,
    pub effect: FaultEffect,
    pub seeds: usize,
    pub base_seed: u64,
    pub observed_joint: JointId,
    pub jobs: usize,
}

impl ProbePlan {
    /// One `Once` activation per run at a time drawn from N(3.5 s, 1 s),
    /// observed on the right knee over 100 seeds.
    pub fn new(scenario: Scenario, label: &str, target_signal: &str, fault_type: FaultType) -> Self {
        let base_seed = scenario.config.seed.base;
        Self {
            scenario,
            label: label.into(),
            target_signal: target_signal.into(),
            fault_type,
            event: FaultEvent::MeanTimeToFailure { mttf_s: 3.5, sigma_s: 1.0 },
            effect: FaultEffect::Once,
            seeds: 100,
            base_seed,
            observed_joint: "knee_right".parse().expect("valid joint"),
            jobs: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub label: String,
    pub runs: usize,
    pub nominal: usize,
    pub error: usize,
    pub failure: usize,
    /// Runs aborted by a non-finite signal (e.g. an exponent flip driving the
    /// controller output to infinity).
    pub diverged: usize,
    /// Runs in which the probe actually fired.
    pub activated: usize,
    pub max_rmse_pos_rad: f64,
}

/// Replaces the scenario's injectors with the probe and tallies outcomes.
pub fn run_probe(plan: &ProbePlan) -> Result<ProbeReport> {
    let joint = plan.observed_joint;
    let mut config = plan.scenario.config.clone();
    config.monitors.signals = Some(vec![joint.theta_signal(), joint.omega_signal(), joint.torque_signal()]);
    config.injectors = vec![FaultSpec {
        name: "probe".into(),
        target_signal: plan.target_signal.clone(),
        fault_type: plan.fault_type.clone(),
        event: Some(plan.event),
        effect: plan.effect,
        enabled: true,
        chain_to: None,
    }];
    let faulty_scenario = Scenario::with_demo(config, plan.scenario.demo.clone())?;
    let reference_scenario = Scenario::with_demo(faulty_scenario.config.with_injectors_disabled(), plan.scenario.demo.clone())?;

    let pool = thread_pool(plan.jobs)?;
    let outcomes: Vec<Result<Option<(Classification, f64, bool)>>> = pool.install(|| {
        (0..plan.seeds as u64)
            .into_par_iter()
            .map(|i| {
                let seed = plan.base_seed.wrapping_add(i);
                let reference = simulate(&reference_scenario, seed)?;
                match simulate(&faulty_scenario, seed) {
                    Ok(faulty) => {
                        let [pos, _, _] = score(&faulty, &reference, joint)?;
                        let fired = faulty.trace.events().iter().any(|e| e.kind == EventKind::FaultActivated);
                        Ok(Some((faulty.classification, pos, fired)))
                    }
                    Err(Error::NumericalDivergence { .. }) => Ok(None),
                    Err(e) => Err(e),
                }
            })
            .collect()
    });

    let mut report = ProbeReport {
        label: plan.label.clone(),
        runs: plan.seeds,
        nominal: 0,
        error: 0,
        failure: 0,
        diverged: 0,
        activated: 0,
        max_rmse_pos_rad: 0.0,
    };
    for outcome in outcomes {
        match outcome? {
            None => {
                report.diverged += 1;
                report.activated += 1;
            }
            Some((class, pos, fired)) => {
                match class {
                    Classification::Nominal => report.nominal += 1,
                    Classification::Error => report.error += 1,
                    Classification::Failure => report.failure += 1,
                }
                report.activated += usize::from(fired);
                report.max_rmse_pos_rad = report.max_rmse_pos_rad.max(pos);
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::ViolationKind;

    fn record(kind: ViolationKind) -> ViolationRecord {
        ViolationRecord { t: 0.0, joint: JointId::ALL[0], kind, value: 0.0 }
    }

    #[test]
    fn rmse_examples() {
        let r = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(rmse(&r, &r).unwrap(), 0.0);
        let shifted: Vec<f64> = r.iter().map(|x| x + 0.5).collect();
        assert!((rmse(&shifted, &r).unwrap() - 0.5).abs() < 1e-15);
        let half = [2.0, 3.0, 3.0, 4.0];
        assert!((rmse(&half, &r).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        assert!(matches!(rmse(&r[..3], &r), Err(Error::LengthMismatch(3, 4))));
    }

    #[test]
    fn classification_examples() {
        assert_eq!(classify_run(&[]), Classification::Nominal);
        assert_eq!(classify_run(&[record(ViolationKind::TorqueError)]), Classification::Error);
        let mixed = [
            record(ViolationKind::TorqueError),
            record(ViolationKind::AngleFailure),
            record(ViolationKind::TorqueError),
            record(ViolationKind::TorqueError),
        ];
        assert_eq!(classify_run(&mixed), Classification::Failure);
    }

    #[test]
    fn quadratic_fit_examples() {
        let pts: Vec<(f64, f64)> = [0.0, 0.5, 1.0, 2.0].iter().map(|&d| (d, d * d)).collect();
        let fit = fit_quadratic(&pts).unwrap();
        assert!((fit.a - 1.0).abs() < 1e-12 && fit.b.abs() < 1e-12 && fit.c.abs() < 1e-12);
        assert!(fit.residual < 1e-12);

        let line: Vec<(f64, f64)> = [0.1, 0.2, 0.3, 0.4].iter().map(|&d| (d, 3.0 * d - 1.0)).collect();
        let fit = fit_quadratic(&line).unwrap();
        assert!(fit.a.abs() < 1e-9);

        assert!(matches!(fit_quadratic(&[(1.0, 1.0), (1.0, 2.0), (2.0, 3.0)]), Err(Error::DegenerateFit(2))));
    }

    #[test]
    fn threshold_interpolates() {
        assert_eq!(failure_threshold(&[(0.1, 0.0), (0.2, 0.25), (0.3, 0.75)]), Some(0.25));
        assert_eq!(failure_threshold(&[(0.1, 0.6)]), Some(0.1));
        assert_eq!(failure_threshold(&[(0.1, 0.0), (0.2, 0.4)]), None);
        assert_eq!(failure_threshold(&[]), None);
    }

    #[test]
    fn presets_have_expected_grids() {
        let fine = fine_durations();
        assert_eq!(fine.len(), 10);
        assert_eq!(fine[0], 0.05);
        assert_eq!(fine[9], 0.5);
        let coarse = coarse_durations();
        assert_eq!(coarse.len(), 11);
        assert_eq!((coarse[0], coarse[10]), (0.5, 3.0));
    }

    #[test]
    fn gaps_between_windows() {
        let t = FaultTiming { windows: vec![(1.0, 1.2), (1.5, 1.7), (3.0, 3.2)] };
        assert!((t.min_gap().unwrap() - 0.3).abs() < 1e-12);
        assert_eq!(FaultTiming { windows: vec![(1.0, 2.0)] }.min_gap(), None);
    }

    #[test]
    fn results_csv_round_trip() {
        let rows = vec![
            SweepRow {
                duration_s: 0.05,
                seed: 3,
                rmse_pos_rad: 0.125,
                rmse_vel_rad_s: 1.0 / 3.0,
                rmse_torque_nm: 4.5,
                classification: Classification::Failure,
            },
            SweepRow {
                duration_s: 0.1,
                seed: 4,
                rmse_pos_rad: 0.0,
                rmse_vel_rad_s: 0.0,
                rmse_torque_nm: 0.0,
                classification: Classification::Nominal,
            },
        ];
        let mut buf = Vec::new();
        write_results_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("duration_s,seed,rmse_pos_rad,rmse_vel_rad_s,rmse_torque_Nm,classification\n"));
        assert_eq!(read_results_csv(buf.as_slice()).unwrap(), rows);
    }
}
