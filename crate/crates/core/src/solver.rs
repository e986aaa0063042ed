//! Resistive-network evaluation.
//!
//! Three routes to node voltages:
//! * [`divider_eval`], the closed form for a single summing junction whose
//!   branches all end on ideal sources,
//! * [`nodal_solve`], a general conductance-Laplacian solve with Dirichlet
//!   source nodes (used as the oracle for staged divider evaluation),
//! * [`transient_run`], which alternates a quasi-static nodal solve with an
//!   explicit memristor state update.

use std::collections::VecDeque;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::devices::{memristor_resistance, memristor_step, DeviceError, MemristorParams, MemristorState};

/// Relative residual every linear solve must meet.
pub const RESIDUAL_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("topology error: node `{node}` is not connected to any source")]
    Floating { node: String },
    #[error("numerical error: relative residual {0:e} exceeds tolerance")]
    Residual(f64),
    #[error(transparent)]
    Device(#[from] DeviceError),
}

/// Closed-form voltage of a junction fed by `(source volts, conductance)` branches.
pub fn divider_eval(branches: &[(f64, f64)]) -> Result<f64, SolverError> {
    if branches.is_empty() {
        return Err(SolverError::InvalidInput("divider needs at least one branch".into()));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for &(v, g) in branches {
        if !(g > 0.0 && g.is_finite()) {
            return Err(SolverError::InvalidInput(format!("branch conductance {g} must be positive and finite")));
        }
        num += g * v;
        den += g;
    }
    Ok(num / den)
}

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Branch {
    pub a: NodeId,
    pub b: NodeId,
    /// Siemens.
    pub g: f64,
}

#[derive(Debug, Clone, Default)]
pub struct ResistiveNetwork {
    names: Vec<String>,
    branches: Vec<Branch>,
    sources: Vec<(NodeId, f64)>,
    probes: Vec<NodeId>,
}

impl ResistiveNetwork {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the id of `name`, creating the node on first use.
    pub fn node(&mut self, name: &str) -> NodeId {
        if let Some(id) = self.node_id(name) {
            return id;
        }
        self.names.push(name.to_owned());
        self.names.len() - 1
    }

    pub fn node_id(&self, name: &str) -> Option<NodeId> {
        self.names.iter().position(|n| n == name)
    }

    pub fn name(&self, id: NodeId) -> &str {
        &self.names[id]
    }

    pub fn node_count(&self) -> usize {
        self.names.len()
    }

    pub fn add_branch(&mut self, a: NodeId, b: NodeId, g: f64) {
        self.branches.push(Branch { a, b, g });
    }

    pub fn add_resistor(&mut self, a: NodeId, b: NodeId, ohms: f64) {
        self.add_branch(a, b, 1.0 / ohms);
    }

    /// Pins `node` to `volts`, replacing any previous value.
    pub fn set_source(&mut self, node: NodeId, volts: f64) {
        match self.sources.iter_mut().find(|(n, _)| *n == node) {
            Some(s) => s.1 = volts,
            None => self.sources.push((node, volts)),
        }
    }

    pub fn add_probe(&mut self, node: NodeId) {
        if !self.probes.contains(&node) {
            self.probes.push(node);
        }
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn sources(&self) -> &[(NodeId, f64)] {
        &self.sources
    }

    pub fn probes(&self) -> &[NodeId] {
        &self.probes
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeVoltages {
    names: Vec<String>,
    volts: Vec<f64>,
}

impl NodeVoltages {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.volts[i])
    }

    pub fn by_id(&self, id: NodeId) -> f64 {
        self.volts[id]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.names.iter().map(String::as_str).zip(self.volts.iter().copied())
    }
}

pub fn nodal_solve(net: &ResistiveNetwork) -> Result<NodeVoltages, SolverError> {
    let volts = solve_raw(&net.names, net.branches.iter().copied(), &net.sources)?;
    Ok(NodeVoltages { names: net.names.clone(), volts })
}

fn solve_raw(
    names: &[String],
    branches: impl Iterator<Item = Branch> + Clone,
    sources: &[(NodeId, f64)],
) -> Result<Vec<f64>, SolverError> {
    let n = names.len();
    if sources.is_empty() {
        return Err(SolverError::InvalidInput("network has no sources".into()));
    }
    let mut fixed: Vec<Option<f64>> = vec![None; n];
    for &(node, v) in sources {
        if !v.is_finite() {
            return Err(SolverError::InvalidInput(format!("source at `{}` is not finite", names[node])));
        }
        fixed[node] = Some(v);
    }
    let mut adj: Vec<Vec<NodeId>> = vec![Vec::new(); n];
    for br in branches.clone() {
        if !(br.g > 0.0 && br.g.is_finite()) {
            return Err(SolverError::InvalidInput(format!(
                "branch {}-{} has conductance {}",
                names[br.a], names[br.b], br.g
            )));
        }
        adj[br.a].push(br.b);
        adj[br.b].push(br.a);
    }

    // every free node must reach a source
    let mut seen = vec![false; n];
    let mut queue: VecDeque<NodeId> = sources.iter().map(|&(s, _)| s).collect();
    for &(s, _) in sources {
        seen[s] = true;
    }
    while let Some(u) = queue.pop_front() {
        for &w in &adj[u] {
            if !seen[w] {
                seen[w] = true;
                queue.push_back(w);
            }
        }
    }
    if let Some(i) = (0..n).find(|&i| !seen[i]) {
        return Err(SolverError::Floating { node: names[i].clone() });
    }

    let mut index = vec![usize::MAX; n];
    let mut m = 0;
    for i in 0..n {
        if fixed[i].is_none() {
            index[i] = m;
            m += 1;
        }
    }
    let mut volts: Vec<f64> = fixed.iter().map(|v| v.unwrap_or(0.0)).collect();
    if m == 0 {
        return Ok(volts);
    }

    let mut g = DMatrix::<f64>::zeros(m, m);
    let mut rhs = DVector::<f64>::zeros(m);
    for br in branches {
        let (ia, ib) = (index[br.a], index[br.b]);
        match (fixed[br.a], fixed[br.b]) {
            (None, None) => {
                g[(ia, ia)] += br.g;
                g[(ib, ib)] += br.g;
                g[(ia, ib)] -= br.g;
                g[(ib, ia)] -= br.g;
            }
            (None, Some(vb)) => {
                g[(ia, ia)] += br.g;
                rhs[ia] += br.g * vb;
            }
            (Some(va), None) => {
                g[(ib, ib)] += br.g;
                rhs[ib] += br.g * va;
            }
            (Some(_), Some(_)) => {}
        }
    }

    let x =
        g.clone().lu().solve(&rhs).ok_or_else(|| SolverError::InvalidInput("singular conductance matrix".into()))?;
    let residual = (&g * &x - &rhs).amax();
    let scale = (g.amax() * x.amax()).max(rhs.amax()).max(f64::MIN_POSITIVE);
    let rel = residual / scale;
    if !(rel <= RESIDUAL_TOLERANCE) {
        return Err(SolverError::Residual(rel));
    }
    for i in 0..n {
        if index[i] != usize::MAX {
            volts[i] = x[index[i]];
        }
    }
    Ok(volts)
}

/// A memristor placed between two nodes of a [`ResistiveNetwork`]; positive
/// voltage is `V(a) - V(b)`.
#[derive(Debug, Clone)]
pub struct MemristorBranch {
    pub label: String,
    pub a: NodeId,
    pub b: NodeId,
    pub state: MemristorState,
    pub params: MemristorParams,
}

/// Piecewise-constant drive of one source node: `(start time, volts)` pairs in
/// ascending time. The node holds 0 V before the first segment.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceSchedule {
    pub node: NodeId,
    pub segments: Vec<(f64, f64)>,
}

impl SourceSchedule {
    pub fn constant(node: NodeId, volts: f64) -> Self {
        Self { node, segments: vec![(0.0, volts)] }
    }

    pub fn value_at(&self, t: f64, dt: f64) -> f64 {
        let eps = dt * 1e-6;
        self.segments.iter().take_while(|(start, _)| *start <= t + eps).last().map_or(0.0, |&(_, v)| v)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Stimulus {
    pub schedules: Vec<SourceSchedule>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub dt: f64,
    pub t0: f64,
    pub channels: Vec<(String, Vec<f64>)>,
}

impl Waveform {
    pub fn new(dt: f64, t0: f64, names: impl IntoIterator<Item = String>) -> Self {
        Self { dt, t0, channels: names.into_iter().map(|n| (n, Vec::new())).collect() }
    }

    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, |(_, v)| v.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channel(&self, name: &str) -> Option<&[f64]> {
        self.channels.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    pub fn time(&self, row: usize) -> f64 {
        self.t0 + row as f64 * self.dt
    }

    /// CSV with a `time` column followed by one column per channel.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("time");
        for (name, _) in &self.channels {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for row in 0..self.len() {
            let _ = write!(out, "{:e}", self.time(row));
            for (_, values) in &self.channels {
                let _ = write!(out, ",{}", values[row]);
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct TransientRun {
    pub waveform: Waveform,
    pub final_states: Vec<MemristorState>,
}

/// Fixed-step transient of a resistive network containing memristors.
///
/// Each step solves the network with memristor states frozen, records every
/// probe and state, then advances each memristor by one Euler step using the
/// voltage across it. The last row is the solution at `t_end`.
pub fn transient_run(
    net: &ResistiveNetwork,
    memristors: &[MemristorBranch],
    stimulus: &Stimulus,
    dt: f64,
    t_end: f64,
) -> Result<TransientRun, SolverError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(SolverError::InvalidInput(format!("dt must be > 0, got {dt}")));
    }
    if !(t_end >= dt) {
        return Err(SolverError::InvalidInput(format!("t_end {t_end} shorter than dt {dt}")));
    }
    for m in memristors {
        m.params.validate()?;
    }
    let steps = (t_end / dt).round() as usize;

    let names = net
        .probes
        .iter()
        .map(|&p| format!("v({})", net.names[p]))
        .chain(memristors.iter().map(|m| format!("x({})", m.label)));
    let mut waveform = Waveform::new(dt, 0.0, names);

    let mut sources = net.sources.clone();
    for sch in &stimulus.schedules {
        if !sources.iter().any(|(n, _)| *n == sch.node) {
            sources.push((sch.node, 0.0));
        }
    }
    let mut states: Vec<MemristorState> = memristors.iter().map(|m| m.state).collect();
    let mut conductances = vec![0.0; memristors.len()];

    for step in 0..=steps {
        let t = step as f64 * dt;
        for sch in &stimulus.schedules {
            let v = sch.value_at(t, dt);
            if let Some(s) = sources.iter_mut().find(|(n, _)| *n == sch.node) {
                s.1 = v;
            }
        }
        for (g, (m, s)) in conductances.iter_mut().zip(memristors.iter().zip(&states)) {
            *g = 1.0 / memristor_resistance(*s, &m.params);
        }
        let all = net
            .branches
            .iter()
            .copied()
            .chain(memristors.iter().zip(conductances.iter()).map(|(m, &g)| Branch { a: m.a, b: m.b, g }));
        let volts = solve_raw(&net.names, all, &sources)?;

        let mut col = 0;
        for &p in &net.probes {
            waveform.channels[col].1.push(volts[p]);
            col += 1;
        }
        for s in &states {
            waveform.channels[col].1.push(s.x());
            col += 1;
        }
        if step == steps {
            break;
        }
        for (s, m) in states.iter_mut().zip(memristors) {
            *s = memristor_step(*s, volts[m.a] - volts[m.b], dt, &m.params)?;
        }
    }

    Ok(TransientRun { waveform, final_states: states })
}
