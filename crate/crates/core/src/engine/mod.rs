//! Fixed-step executor for a directed graph of blocks.
//!
//! Blocks expose named input and output ports. Output port names are global
//! signal names (e.g. `knee_right.theta`); input port names are local to the
//! block. Each tick runs in two phases, Simulink style:
//!
//! 1. `output` is called on every block in topological order over the
//!    feedthrough subgraph. Only feedthrough inputs carry current-tick values;
//!    non-feedthrough inputs are passed as invalid placeholders.
//! 2. `update` is called on every block in the same order with all inputs
//!    resolved to their current-tick values.
//!
//! Every stochastic draw comes from a ChaCha stream owned by the block,
//! derived from the run seed and the block name, so runs are reproducible and
//! independent of declaration order.

mod trace;

pub use trace::{format_g9, Event, EventKind, TraceLog};

use std::collections::{BTreeSet, HashMap};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Fixed-step simulation clock.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimClock {
    dt: f64,
    t_end: f64,
}

impl SimClock {
    pub fn new(dt: f64, t_end: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::Invalid(vec![format!("clock dt must be > 0, got {dt}")]));
        }
        if !(t_end.is_finite() && t_end >= 0.0) {
            return Err(Error::Invalid(vec![format!("clock t_end must be >= 0, got {t_end}")]));
        }
        Ok(Self { dt, t_end })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    /// Number of ticks, `round(t_end / dt)`.
    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    pub fn time_at(&self, step: usize) -> f64 {
        step as f64 * self.dt
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PortKind {
    Signal,
    Trigger,
}

/// Scalar signal sample. `value` is finite whenever `valid` is set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Signal {
    pub value: f64,
    pub valid: bool,
}

impl Signal {
    pub const INVALID: Signal = Signal { value: 0.0, valid: false };

    pub fn new(value: f64) -> Self {
        Self { value, valid: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PortValue {
    Signal(Signal),
    Trigger(bool),
}

impl PortValue {
    fn placeholder(kind: PortKind) -> Self {
        match kind {
            PortKind::Signal => PortValue::Signal(Signal::INVALID),
            PortKind::Trigger => PortValue::Trigger(false),
        }
    }

    /// Signal value; invalid signals and triggers read as NaN / 0-1.
    pub fn as_f64(&self) -> f64 {
        match *self {
            PortValue::Signal(s) if s.valid => s.value,
            PortValue::Signal(_) => f64::NAN,
            PortValue::Trigger(b) => f64::from(u8::from(b)),
        }
    }

    pub fn as_bool(&self) -> bool {
        match *self {
            PortValue::Trigger(b) => b,
            PortValue::Signal(s) => s.valid && s.value != 0.0,
        }
    }

    fn is_finite(&self) -> bool {
        match self {
            PortValue::Signal(s) => !s.valid || s.value.is_finite(),
            PortValue::Trigger(_) => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PortSpec {
    pub name: String,
    pub kind: PortKind,
    /// Input ports only: the block reads this input during `output`.
    pub feedthrough: bool,
}

impl PortSpec {
    pub fn signal(name: impl Into<String>) -> Self {
        Self { name: name.into(), kind: PortKind::Signal, feedthrough: true }
    }

    pub fn trigger(name: impl Into<String>) -> Self {
        Self { name: name.into(), kind: PortKind::Trigger, feedthrough: true }
    }

    /// Input that is only consumed in the `update` phase.
    pub fn delayed(mut self) -> Self {
        self.feedthrough = false;
        self
    }
}

/// Per-block view of the current tick.
pub struct StepContext<'a> {
    pub step: usize,
    pub t: f64,
    pub dt: f64,
    rng: &'a mut ChaCha8Rng,
    events: &'a mut Vec<Event>,
    block: &'a str,
}

impl StepContext<'_> {
    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        self.rng
    }

    pub fn emit(&mut self, kind: EventKind) {
        self.events.push(Event {
            t: self.t,
            step: self.step,
            block: self.block.to_string(),
            kind,
        });
    }
}

pub trait Block: Send {
    fn inputs(&self) -> Vec<PortSpec>;

    fn outputs(&self) -> Vec<PortSpec>;

    /// Restores the initial state so a graph can be run repeatedly.
    fn reset(&mut self) {}

    fn output(&mut self, ctx: &mut StepContext<'_>, inputs: &[PortValue], outputs: &mut [PortValue]);

    fn update(&mut self, _ctx: &mut StepContext<'_>, _inputs: &[PortValue]) {}
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BlockId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Slot {
    node: usize,
    port: usize,
}

struct Node {
    name: String,
    block: Box<dyn Block>,
    inputs: Vec<PortSpec>,
    outputs: Vec<PortSpec>,
    sources: Vec<Option<Slot>>,
}

/// Incrementally wires a [`BlockGraph`].
#[derive(Default)]
pub struct GraphBuilder {
    nodes: Vec<Node>,
    signals: HashMap<String, Slot>,
    monitored: Vec<String>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, block: Box<dyn Block>) -> Result<BlockId> {
        let name = name.into();
        if self.nodes.iter().any(|n| n.name == name) {
            return Err(Error::Wiring(format!("duplicate block name `{name}`")));
        }
        let inputs = block.inputs();
        let outputs = block.outputs();
        let node = self.nodes.len();
        for (port, spec) in outputs.iter().enumerate() {
            if self.signals.insert(spec.name.clone(), Slot { node, port }).is_some() {
                return Err(Error::Wiring(format!(
                    "signal `{}` is produced by more than one block",
                    spec.name
                )));
            }
        }
        self.nodes.push(Node {
            name,
            block,
            sources: vec![None; inputs.len()],
            inputs,
            outputs,
        });
        Ok(BlockId(node))
    }

    pub fn has_signal(&self, signal: &str) -> bool {
        self.signals.contains_key(signal)
    }

    /// Connects the global signal `signal` to input port `port` of `sink`.
    pub fn connect(&mut self, signal: &str, sink: BlockId, port: &str) -> Result<()> {
        let slot = *self
            .signals
            .get(signal)
            .ok_or_else(|| Error::Wiring(format!("no block produces signal `{signal}`")))?;
        let src_kind = self.nodes[slot.node].outputs[slot.port].kind;
        let node = self
            .nodes
            .get_mut(sink.0)
            .ok_or_else(|| Error::Wiring(format!("unknown block id {}", sink.0)))?;
        let idx = node
            .inputs
            .iter()
            .position(|p| p.name == port)
            .ok_or_else(|| Error::Wiring(format!("block `{}` has no input `{port}`", node.name)))?;
        if node.inputs[idx].kind != src_kind {
            return Err(Error::Wiring(format!(
                "port kind mismatch wiring `{signal}` into `{}.{port}`",
                node.name
            )));
        }
        if node.sources[idx].is_some() {
            return Err(Error::Wiring(format!("input `{}.{port}` already has a source", node.name)));
        }
        node.sources[idx] = Some(slot);
        Ok(())
    }

    /// Records `signal` in the trace on every tick.
    pub fn monitor(&mut self, signal: &str) -> Result<()> {
        if !self.signals.contains_key(signal) {
            return Err(Error::Wiring(format!("cannot monitor unknown signal `{signal}`")));
        }
        if !self.monitored.iter().any(|s| s == signal) {
            self.monitored.push(signal.to_string());
        }
        Ok(())
    }

    pub fn build(self) -> Result<BlockGraph> {
        for node in &self.nodes {
            for (spec, src) in node.inputs.iter().zip(&node.sources) {
                if src.is_none() {
                    return Err(Error::Wiring(format!(
                        "dangling input `{}.{}`",
                        node.name, spec.name
                    )));
                }
            }
        }
        let order = topological_order(&self.nodes)?;
        let monitored = self.monitored.iter().map(|s| self.signals[s]).collect();
        Ok(BlockGraph {
            nodes: self.nodes,
            order,
            monitored_names: self.monitored,
            monitored,
        })
    }
}

/// Kahn's algorithm over feedthrough edges; ties broken by declaration order.
fn topological_order(nodes: &[Node]) -> Result<Vec<usize>> {
    let n = nodes.len();
    let mut succ: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut indegree = vec![0usize; n];
    for (sink, node) in nodes.iter().enumerate() {
        for (spec, src) in node.inputs.iter().zip(&node.sources) {
            let src = src.expect("checked by build");
            if spec.feedthrough {
                succ[src.node].push(sink);
                indegree[sink] += 1;
            }
        }
    }
    let mut ready: BTreeSet<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(next) = ready.pop_first() {
        order.push(next);
        for &s in &succ[next] {
            indegree[s] -= 1;
            if indegree[s] == 0 {
                ready.insert(s);
            }
        }
    }
    if order.len() == n {
        return Ok(order);
    }
    Err(Error::AlgebraicLoop(find_cycle(nodes, &succ, &indegree)))
}

fn find_cycle(nodes: &[Node], succ: &[Vec<usize>], indegree: &[usize]) -> Vec<String> {
    // Every node left with indegree > 0 lies on or downstream of a cycle.
    // Walking predecessors inside that set must revisit a node.
    let remaining: Vec<bool> = indegree.iter().map(|&d| d > 0).collect();
    let mut pred: Vec<Option<usize>> = vec![None; nodes.len()];
    for (from, outs) in succ.iter().enumerate() {
        for &to in outs {
            if remaining[from] && remaining[to] && pred[to].is_none() {
                pred[to] = Some(from);
            }
        }
    }
    let start = remaining.iter().position(|&r| r).unwrap_or(0);
    let mut seen = vec![false; nodes.len()];
    let mut cur = start;
    while !seen[cur] {
        seen[cur] = true;
        match pred[cur] {
            Some(p) => cur = p,
            None => break,
        }
    }
    let anchor = cur;
    let mut cycle = vec![anchor];
    let mut walk = pred[anchor];
    while let Some(p) = walk {
        if p == anchor {
            break;
        }
        cycle.push(p);
        walk = pred[p];
    }
    cycle.reverse();
    cycle.push(cycle[0]);
    cycle.into_iter().map(|i| nodes[i].name.clone()).collect()
}

/// A wired, validated graph ready to run.
pub struct BlockGraph {
    nodes: Vec<Node>,
    order: Vec<usize>,
    monitored_names: Vec<String>,
    monitored: Vec<Slot>,
}

impl std::fmt::Debug for BlockGraph {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BlockGraph")
            .field("blocks", &self.block_names().collect::<Vec<_>>())
            .field("order", &self.order)
            .field("monitored", &self.monitored_names)
            .finish()
    }
}

impl BlockGraph {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn block_names(&self) -> impl Iterator<Item = &str> {
        self.nodes.iter().map(|n| n.name.as_str())
    }

    /// Block names in evaluation order.
    pub fn evaluation_order(&self) -> Vec<&str> {
        self.order.iter().map(|&i| self.nodes[i].name.as_str()).collect()
    }

    pub fn monitored(&self) -> &[String] {
        &self.monitored_names
    }

    /// Name of the signal feeding input `port` of block `block`.
    pub fn source_of(&self, block: &str, port: &str) -> Option<&str> {
        let node = self.nodes.iter().find(|n| n.name == block)?;
        let idx = node.inputs.iter().position(|p| p.name == port)?;
        let slot = node.sources[idx]?;
        Some(self.nodes[slot.node].outputs[slot.port].name.as_str())
    }

    /// Runs every tick of `clock`. Blocks are reset first, so repeated runs
    /// with the same seed are bit-identical.
    pub fn run(&mut self, clock: &SimClock, seed: u64) -> Result<TraceLog> {
        let steps = clock.steps();
        let dt = clock.dt();
        let mut rngs: Vec<ChaCha8Rng> = self.nodes.iter().map(|n| block_rng(seed, &n.name)).collect();
        for node in &mut self.nodes {
            node.block.reset();
        }
        let mut values: Vec<Vec<PortValue>> = self
            .nodes
            .iter()
            .map(|n| n.outputs.iter().map(|p| PortValue::placeholder(p.kind)).collect())
            .collect();
        let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(steps); self.monitored.len()];
        let mut events = Vec::new();
        let mut inputs: Vec<PortValue> = Vec::new();

        for step in 0..steps {
            let t = clock.time_at(step);
            for &i in &self.order {
                let node = &mut self.nodes[i];
                inputs.clear();
                inputs.extend(node.inputs.iter().zip(&node.sources).map(|(spec, src)| {
                    let src = src.expect("checked by build");
                    if spec.feedthrough {
                        values[src.node][src.port]
                    } else {
                        PortValue::placeholder(spec.kind)
                    }
                }));
                let mut ctx = StepContext {
                    step,
                    t,
                    dt,
                    rng: &mut rngs[i],
                    events: &mut events,
                    block: &node.name,
                };
                node.block.output(&mut ctx, &inputs, &mut values[i]);
                if values[i].iter().any(|v| !v.is_finite()) {
                    return Err(Error::NumericalDivergence { t, block: node.name.clone() });
                }
            }
            for (col, slot) in columns.iter_mut().zip(&self.monitored) {
                col.push(values[slot.node][slot.port].as_f64());
            }
            for &i in &self.order {
                let node = &mut self.nodes[i];
                inputs.clear();
                inputs.extend(node.sources.iter().map(|src| {
                    let src = src.expect("checked by build");
                    values[src.node][src.port]
                }));
                let mut ctx = StepContext {
                    step,
                    t,
                    dt,
                    rng: &mut rngs[i],
                    events: &mut events,
                    block: &node.name,
                };
                node.block.update(&mut ctx, &inputs);
            }
        }
        Ok(TraceLog::new(dt, self.monitored_names.clone(), columns, events))
    }
}

/// Stable 64-bit FNV-1a, used to derive per-block stream ids.
fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// The generator a block named `name` draws from in a run seeded with `seed`.
pub fn block_rng(seed: u64, name: &str) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a(name.as_bytes()));
    rng
}

/// Reads a signal input, treating invalid samples as NaN.
pub fn signal_at(inputs: &[PortValue], idx: usize) -> f64 {
    inputs[idx].as_f64()
}
