//! Fault-injection benchmark for a DMP-driven bipedal exoskeleton model.
//!
//! The [`engine`] runs a fixed-step block diagram. [`faults`] supplies the
//! injector blocks, [`dmp`] the trajectory generator and [`plant`] the joint
//! dynamics, controller and safety monitor. [`scenario`] wires them from a
//! JSON description and [`experiments`] runs duration sweeps over it.

// `!(x > 0.0)` style checks reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dmp;
pub mod engine;
pub mod error;
pub mod experiments;
pub mod faults;
pub mod plant;
pub mod scenario;

pub use engine::{BlockGraph, GraphBuilder, SimClock, TraceLog};
pub use error::{Error, Result};
pub use experiments::{run_probe, run_sweep, Classification, SweepPlan, SweepResult, SweepSummary};
pub use faults::{FaultEffect, FaultEvent, FaultSpec, FaultType};
pub use plant::{JointId, ViolationKind, ViolationRecord};
pub use scenario::{Scenario, ScenarioConfig};
