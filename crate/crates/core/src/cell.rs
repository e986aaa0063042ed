//! The threshold-logic cell.
//!
//! Behavioral topology (both variants):
//!
//! ```text
//!  stage 1:  a --R1--+            stage 2:  a --R3--------------+
//!            b --R2--+-- N1 -> INV1 -> X     b --R4--------------+-- N2 -> INV2 -> out
//!           Vc --Rc1-+                       X --1/g_x--Rc2------+
//! ```
//!
//! R1..R4 stay at `r_off`. The full cell programs Rc1 and Rc2; the reduced
//! cell has Rc1 fixed at `r_off` and selects its gate with Rc2 and the Vc
//! level. With the read-switch context the control memristors are bracketed
//! by their read switches (S_r1/S_r2 around Rc1, S_r3/S_r4 around Rc2), which
//! add series resistance to those paths.
//!
//! Inverters are ideal sources, so each stage is a closed-form divider.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::devices::{
    inverter_eval, memristor_resistance, switch_pass, DeviceSet, InverterParams, MemristorParams, MemristorState,
    SwitchParams,
};
use crate::solver::{
    divider_eval, transient_run, MemristorBranch, NodeId, ResistiveNetwork, SolverError, SourceSchedule, Stimulus,
    TransientRun,
};

/// Control voltage shared by every full-cell configuration (V).
pub const VC_NOMINAL: f64 = 0.8;
/// Control voltage of the reduced NAND configuration (V).
pub const VC_REDUCED_NAND: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum GateKind {
    Nand,
    Nor,
    Xnor,
}

impl GateKind {
    pub const ALL: [GateKind; 3] = [GateKind::Nand, GateKind::Nor, GateKind::Xnor];

    pub fn eval(self, a: bool, b: bool) -> bool {
        match self {
            GateKind::Nand => !(a && b),
            GateKind::Nor => !(a || b),
            GateKind::Xnor => a == b,
        }
    }
}

impl fmt::Display for GateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GateKind::Nand => "NAND",
            GateKind::Nor => "NOR",
            GateKind::Xnor => "XNOR",
        })
    }
}

impl FromStr for GateKind {
    type Err = CellError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "NAND" => Ok(GateKind::Nand),
            "NOR" => Ok(GateKind::Nor),
            "XNOR" => Ok(GateKind::Xnor),
            _ => Err(CellError::UnknownGate(s.to_owned())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Full,
    Reduced,
}

impl Variant {
    pub const ALL: [Variant; 2] = [Variant::Full, Variant::Reduced];
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Full => "full",
            Variant::Reduced => "reduced",
        })
    }
}

impl FromStr for Variant {
    type Err = CellError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "full" => Ok(Variant::Full),
            "reduced" => Ok(Variant::Reduced),
            _ => Err(CellError::InvalidInput(format!("unknown variant `{s}`"))),
        }
    }
}

/// Programmed level of a control memristor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    ROn,
    ROff,
}

impl Level {
    pub fn ohms(self, p: &MemristorParams) -> f64 {
        match self {
            Level::ROn => p.r_on,
            Level::ROff => p.r_off,
        }
    }

    pub fn state(self) -> MemristorState {
        match self {
            Level::ROn => MemristorState::ON,
            Level::ROff => MemristorState::OFF,
        }
    }

    pub fn of_state(state: MemristorState) -> Self {
        if state.is_on() {
            Level::ROn
        } else {
            Level::ROff
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Level::ROn => "r_on",
            Level::ROff => "r_off",
        })
    }
}

/// One row of the control tables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellConfig {
    pub variant: Variant,
    pub gate: GateKind,
    /// Absent for the reduced cell, where Rc1 is not programmable.
    pub rc1: Option<Level>,
    pub rc2: Level,
    pub vc: f64,
}

impl fmt::Display for CellConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(rc1) = self.rc1 {
            write!(f, "rc1={rc1} ")?;
        }
        write!(f, "rc2={} vc={}", self.rc2, self.vc)
    }
}

pub fn configure(gate: GateKind, variant: Variant) -> CellConfig {
    use GateKind::*;
    use Level::*;
    let (rc1, rc2, vc) = match (variant, gate) {
        (Variant::Full, Nand) => (Some(ROn), ROff, VC_NOMINAL),
        (Variant::Full, Nor) => (Some(ROff), ROff, VC_NOMINAL),
        (Variant::Full, Xnor) => (Some(ROff), ROn, VC_NOMINAL),
        (Variant::Reduced, Nand) => (None, ROff, VC_REDUCED_NAND),
        (Variant::Reduced, Nor) => (None, ROff, VC_NOMINAL),
        (Variant::Reduced, Xnor) => (None, ROn, VC_NOMINAL),
    };
    CellConfig { variant, gate, rc1, rc2, vc }
}

/// Every (variant, gate) table row.
pub fn all_configs() -> impl Iterator<Item = CellConfig> {
    Variant::ALL.into_iter().flat_map(|v| GateKind::ALL.into_iter().map(move |g| configure(g, v)))
}

impl CellConfig {
    /// Recovers the table row realized by programmed control memristors and a
    /// control voltage, if any.
    pub fn from_programmed(variant: Variant, rc1: MemristorState, rc2: MemristorState, vc: f64) -> Option<Self> {
        GateKind::ALL.into_iter().map(|g| configure(g, variant)).find(|c| {
            let rc1_ok = match c.rc1 {
                Some(level) => level == Level::of_state(rc1),
                None => true,
            };
            rc1_ok && c.rc2 == Level::of_state(rc2) && (c.vc - vc).abs() < 1e-9
        })
    }

    pub fn bias(&self, p: &MemristorParams) -> CellBias {
        CellBias {
            variant: self.variant,
            rc1: self.rc1.map_or(p.r_off, |l| l.ohms(p)),
            rc2: self.rc2.ohms(p),
            vc: self.vc,
        }
    }
}

/// Electrical setting of a cell: actual control resistances and Vc.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellBias {
    pub variant: Variant,
    pub rc1: f64,
    pub rc2: f64,
    pub vc: f64,
}

impl CellBias {
    pub fn from_states(
        variant: Variant,
        rc1: MemristorState,
        rc2: MemristorState,
        vc: f64,
        p: &MemristorParams,
    ) -> Self {
        let rc1 = match variant {
            Variant::Full => memristor_resistance(rc1, p),
            Variant::Reduced => p.r_off,
        };
        Self { variant, rc1, rc2: memristor_resistance(rc2, p), vc }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibratedParams {
    pub v_th1: f64,
    pub v_th2: f64,
    /// Coupling conductance from the stage-1 output into the Rc2 path (S).
    pub g_x: f64,
    pub v_th_block: f64,
    /// Smallest distance between any comparator input and its threshold.
    pub noise_margin: f64,
}

/// Read switches bracketing the control memristors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReadSwitches {
    pub switch: SwitchParams,
    /// Gate drive of S_r1, S_r2 (V).
    pub gate_rc1: f64,
    /// Gate drive of S_r3, S_r4 (V).
    pub gate_rc2: f64,
}

impl ReadSwitches {
    pub fn from_devices(d: &DeviceSet) -> Self {
        Self { switch: d.switch, gate_rc1: d.read_gate_rc1, gate_rc2: d.read_gate_rc2 }
    }

    fn pair_resistance(&self, gate: f64) -> f64 {
        // the level passed is irrelevant for a linear-region switch
        2.0 * switch_pass(0.0, gate, &self.switch).r_series
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellReadout {
    pub n1: f64,
    pub x: f64,
    pub n2: f64,
    pub out: f64,
    pub margin: f64,
}

impl CellReadout {
    pub fn logic(&self, v_dd: f64) -> bool {
        self.out > 0.5 * v_dd
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub variant: Variant,
    pub gate: GateKind,
    pub a: bool,
    pub b: bool,
    pub with_read_switches: bool,
    pub expected: bool,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} inputs={}{} {}: expected {}",
            self.variant,
            self.gate,
            u8::from(self.a),
            u8::from(self.b),
            if self.with_read_switches { "read-switches" } else { "ideal" },
            u8::from(self.expected)
        )
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CellError {
    #[error("cell is not calibrated")]
    NotCalibrated,
    #[error("unknown gate `{0}` (expected NAND, NOR or XNOR)")]
    UnknownGate(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("calibration failed: {} violated constraint(s): {}", .violations.len(), join_violations(.violations))]
    CalibrationFailed { violations: Vec<Violation> },
    #[error(transparent)]
    Solver(#[from] SolverError),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

/// Raw stage node voltages for a bias point, before thresholds are applied.
struct Stages<'a> {
    bias: &'a CellBias,
    g_in: f64,
    g_rc1: f64,
    r_rc2_path: f64,
}

impl<'a> Stages<'a> {
    fn new(bias: &'a CellBias, p: &MemristorParams, read: Option<&ReadSwitches>) -> Self {
        let (s1, s2) = match read {
            Some(r) => {
                let s1 = if bias.variant == Variant::Full { r.pair_resistance(r.gate_rc1) } else { 0.0 };
                (s1, r.pair_resistance(r.gate_rc2))
            }
            None => (0.0, 0.0),
        };
        Self { bias, g_in: 1.0 / p.r_off, g_rc1: 1.0 / (bias.rc1 + s1), r_rc2_path: bias.rc2 + s2 }
    }

    fn n1(&self, a: f64, b: f64) -> f64 {
        divider_eval(&[(a, self.g_in), (b, self.g_in), (self.bias.vc, self.g_rc1)]).expect("positive conductances")
    }

    fn n2(&self, a: f64, b: f64, x: f64, g_x: f64) -> f64 {
        let g_path = 1.0 / (1.0 / g_x + self.r_rc2_path);
        divider_eval(&[(a, self.g_in), (b, self.g_in), (x, g_path)]).expect("positive conductances")
    }
}

fn check_input(v: f64, v_dd: f64) -> Result<(), CellError> {
    if (0.0..=v_dd).contains(&v) {
        Ok(())
    } else {
        Err(CellError::InvalidInput(format!("input {v} V outside [0, {v_dd}] V")))
    }
}

/// Staged read of a cell at an arbitrary electrical bias.
pub fn read_bias(
    bias: &CellBias,
    a: f64,
    b: f64,
    cal: Option<&CalibratedParams>,
    devices: &DeviceSet,
    read: Option<&ReadSwitches>,
) -> Result<CellReadout, CellError> {
    let cal = cal.ok_or(CellError::NotCalibrated)?;
    check_input(a, devices.v_dd)?;
    check_input(b, devices.v_dd)?;
    let stages = Stages::new(bias, &devices.memristor, read);
    let inv1 = InverterParams { v_threshold: cal.v_th1, v_dd: devices.v_dd };
    let inv2 = InverterParams { v_threshold: cal.v_th2, v_dd: devices.v_dd };
    let n1 = stages.n1(a, b);
    let x = inverter_eval(n1, &inv1);
    let n2 = stages.n2(a, b, x, cal.g_x);
    let out = inverter_eval(n2, &inv2);
    let margin = (n1 - cal.v_th1).abs().min((n2 - cal.v_th2).abs());
    Ok(CellReadout { n1, x, n2, out, margin })
}

pub fn cell_read(
    config: &CellConfig,
    a: f64,
    b: f64,
    cal: Option<&CalibratedParams>,
    devices: &DeviceSet,
    read: Option<&ReadSwitches>,
) -> Result<CellReadout, CellError> {
    read_bias(&config.bias(&devices.memristor), a, b, cal, devices, read)
}

/// Input vectors in table order 00, 01, 10, 11.
pub const INPUT_VECTORS: [(bool, bool); 4] = [(false, false), (false, true), (true, false), (true, true)];

pub fn truth_table(
    config: &CellConfig,
    cal: Option<&CalibratedParams>,
    devices: &DeviceSet,
    read: Option<&ReadSwitches>,
) -> Result<[bool; 4], CellError> {
    let rail = |bit: bool| if bit { devices.v_dd } else { 0.0 };
    let mut table = [false; 4];
    for (slot, (a, b)) in table.iter_mut().zip(INPUT_VECTORS) {
        *slot = cell_read(config, rail(a), rail(b), cal, devices, read)?.logic(devices.v_dd);
    }
    Ok(table)
}

/// Memristor labels of [`read_transient`] results, in state order.
pub const READ_LABELS: [&str; 6] = ["R1", "R2", "R3", "R4", "Rc1", "Rc2"];

/// Transient of the cell's resistive network while it is read: each input
/// vector is held for `hold` seconds. The stage-1 output is driven at the
/// value the staged read gives for that vector. Probes `n1` and `n2`; every
/// memristor state is recorded.
pub fn read_transient(
    config: &CellConfig,
    cal: &CalibratedParams,
    devices: &DeviceSet,
    read: Option<&ReadSwitches>,
    vectors: &[(f64, f64)],
    hold: f64,
    dt: f64,
) -> Result<TransientRun, CellError> {
    if vectors.is_empty() || !(hold > 0.0) {
        return Err(CellError::InvalidInput("need at least one vector and a positive hold time".into()));
    }
    let p = devices.memristor;
    let (s1, s2) = match read {
        Some(r) => (r.pair_resistance(r.gate_rc1) / 2.0, r.pair_resistance(r.gate_rc2) / 2.0),
        None => (0.0, 0.0),
    };
    let mut net = ResistiveNetwork::new();
    let [a, b, vc, x] = ["a", "b", "vc", "x"].map(|n| net.node(n));
    let n1 = net.node("n1");
    let n2 = net.node("n2");
    // a series element of zero resistance collapses onto the node it hangs from
    let behind = |net: &mut ResistiveNetwork, from: NodeId, name: &str, ohms: f64| {
        if ohms > 0.0 {
            let n = net.node(name);
            net.add_resistor(from, n, ohms);
            n
        } else {
            from
        }
    };
    let (rc1_a, rc1_b) = match config.variant {
        Variant::Full => {
            let c1p = behind(&mut net, vc, "c1p", s1);
            let c1n = behind(&mut net, n1, "c1n", s1);
            (c1p, c1n)
        }
        Variant::Reduced => (vc, n1),
    };
    let xg = behind(&mut net, x, "xg", 1.0 / cal.g_x);
    let c2p = behind(&mut net, xg, "c2p", s2);
    let c2n = behind(&mut net, n2, "c2n", s2);
    net.add_probe(n1);
    net.add_probe(n2);

    let rc1 = config.rc1.unwrap_or(Level::ROff).state();
    let ends = [(a, n1), (b, n1), (a, n2), (b, n2), (rc1_a, rc1_b), (c2p, c2n)];
    let states =
        [MemristorState::OFF, MemristorState::OFF, MemristorState::OFF, MemristorState::OFF, rc1, config.rc2.state()];
    let memristors: Vec<MemristorBranch> = READ_LABELS
        .iter()
        .zip(ends)
        .zip(states)
        .map(|((label, (na, nb)), state)| MemristorBranch {
            label: (*label).to_owned(),
            a: na,
            b: nb,
            state,
            params: p,
        })
        .collect();

    let mut sched = [a, b, vc, x].map(|n| SourceSchedule { node: n, segments: Vec::new() });
    for (k, &(va, vb)) in vectors.iter().enumerate() {
        let t = k as f64 * hold;
        let x_v = cell_read(config, va, vb, Some(cal), devices, read)?.x;
        for (s, v) in sched.iter_mut().zip([va, vb, config.vc, x_v]) {
            s.segments.push((t, v));
        }
    }
    let stimulus = Stimulus { schedules: sched.to_vec() };
    Ok(transient_run(&net, &memristors, &stimulus, dt, hold * vectors.len() as f64)?)
}

/// Bounds of the calibration search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchSpace {
    pub v_th1: (f64, f64),
    pub v_th2: (f64, f64),
    pub g_x: (f64, f64),
}

impl SearchSpace {
    pub fn for_devices(p: &MemristorParams) -> Self {
        Self { v_th1: (0.05, 0.95), v_th2: (0.05, 0.95), g_x: (1.0 / p.r_off, 1.0 / p.r_on) }
    }

    pub fn point(v_th1: f64, v_th2: f64, g_x: f64) -> Self {
        Self { v_th1: (v_th1, v_th1), v_th2: (v_th2, v_th2), g_x: (g_x, g_x) }
    }
}

/// One (config, input vector, read context) evaluation the calibration must satisfy.
struct Case {
    config: CellConfig,
    a: bool,
    b: bool,
    read: bool,
    want: bool,
}

fn cases() -> Vec<Case> {
    let mut out = Vec::with_capacity(48);
    for read in [false, true] {
        for config in all_configs() {
            for (a, b) in INPUT_VECTORS {
                out.push(Case { config, a, b, read, want: config.gate.eval(a, b) });
            }
        }
    }
    out
}

struct Candidate {
    v_th1: f64,
    v_th2: f64,
    g_x: f64,
    margin: f64,
    violations: usize,
}

struct Evaluator<'a> {
    devices: &'a DeviceSet,
    read: ReadSwitches,
    cases: Vec<Case>,
    biases: Vec<CellBias>,
    n1: Vec<f64>,
}

impl<'a> Evaluator<'a> {
    fn new(devices: &'a DeviceSet) -> Self {
        let read = ReadSwitches::from_devices(devices);
        let cases = cases();
        let biases: Vec<CellBias> = cases.iter().map(|c| c.config.bias(&devices.memristor)).collect();
        let rail = |bit: bool| if bit { devices.v_dd } else { 0.0 };
        let n1 = cases
            .iter()
            .zip(&biases)
            .map(|(c, bias)| {
                let ctx = c.read.then_some(&read);
                Stages::new(bias, &devices.memristor, ctx).n1(rail(c.a), rail(c.b))
            })
            .collect();
        Self { devices, read, cases, biases, n1 }
    }

    fn rail(&self, bit: bool) -> f64 {
        if bit {
            self.devices.v_dd
        } else {
            0.0
        }
    }

    /// Stage-2 node voltages for every case at a given stage-1 threshold and coupling.
    fn n2(&self, v_th1: f64, g_x: f64) -> Vec<f64> {
        self.cases
            .iter()
            .zip(&self.biases)
            .zip(&self.n1)
            .map(|((c, bias), &n1)| {
                let ctx = c.read.then_some(&self.read);
                let x = if n1 < v_th1 { self.devices.v_dd } else { 0.0 };
                Stages::new(bias, &self.devices.memristor, ctx).n2(self.rail(c.a), self.rail(c.b), x, g_x)
            })
            .collect()
    }

    fn margin1(&self, v_th1: f64) -> f64 {
        self.n1.iter().map(|n| (n - v_th1).abs()).fold(f64::INFINITY, f64::min)
    }

    /// Best stage-2 threshold for fixed `v_th1`, `g_x`: the centre of the gap
    /// between the highest node that must read 1 and the lowest that must read 0.
    fn candidate(&self, v_th1: f64, g_x: f64, bounds: (f64, f64)) -> Candidate {
        let n2 = self.n2(v_th1, g_x);
        let mut hi_of_ones = f64::NEG_INFINITY;
        let mut lo_of_zeros = f64::INFINITY;
        for (c, &v) in self.cases.iter().zip(&n2) {
            if c.want {
                hi_of_ones = hi_of_ones.max(v);
            } else {
                lo_of_zeros = lo_of_zeros.min(v);
            }
        }
        let v_th2 = (0.5 * (hi_of_ones + lo_of_zeros)).clamp(bounds.0, bounds.1);
        let violations = self.cases.iter().zip(&n2).filter(|(c, &v)| (v < v_th2) != c.want).count();
        let margin2 = n2.iter().map(|n| (n - v_th2).abs()).fold(f64::INFINITY, f64::min);
        Candidate { v_th1, v_th2, g_x, margin: self.margin1(v_th1).min(margin2), violations }
    }

    fn violations(&self, v_th1: f64, v_th2: f64, g_x: f64) -> Vec<Violation> {
        let n2 = self.n2(v_th1, g_x);
        self.cases
            .iter()
            .zip(&n2)
            .filter(|(c, &v)| (v < v_th2) != c.want)
            .map(|(c, _)| Violation {
                variant: c.config.variant,
                gate: c.config.gate,
                a: c.a,
                b: c.b,
                with_read_switches: c.read,
                expected: c.want,
            })
            .collect()
    }
}

/// Stage-1 threshold candidates: midpoints of the gaps between distinct node
/// voltages inside the bounds, plus the bounds themselves.
fn threshold_candidates(nodes: &[f64], bounds: (f64, f64)) -> Vec<f64> {
    let mut sorted: Vec<f64> = nodes.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let mut out = vec![bounds.0];
    for w in sorted.windows(2) {
        let mid = 0.5 * (w[0] + w[1]);
        if mid > bounds.0 && mid < bounds.1 {
            out.push(mid);
        }
    }
    if bounds.1 > bounds.0 {
        out.push(bounds.1);
    }
    out
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if hi <= lo || n < 2 {
        return vec![lo];
    }
    let (l, h) = (lo.ln(), hi.ln());
    (0..n).map(|i| (l + (h - l) * i as f64 / (n - 1) as f64).exp()).collect()
}

const GX_COARSE: usize = 65;
const GX_REFINE: usize = 65;
const REFINE_ROUNDS: usize = 3;

/// Fixes the free behavioral parameters (both inverter thresholds and the
/// stage coupling) so every table configuration realizes its gate with and
/// without read switches, maximizing the worst-case noise margin.
///
/// Thresholds are placed exactly at gap centres; the coupling is searched on a
/// log grid that is then refined around the best point. The search is fully
/// deterministic.
pub fn calibrate(space: &SearchSpace, devices: &DeviceSet) -> Result<CalibratedParams, CellError> {
    devices.validate().map_err(|e| CellError::InvalidInput(e.to_string()))?;
    let valid = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && lo <= hi;
    if !(valid(space.v_th1) && valid(space.v_th2) && valid(space.g_x)) || space.g_x.0 <= 0.0 {
        return Err(CellError::InvalidInput("malformed calibration bounds".into()));
    }
    let eval = Evaluator::new(devices);
    let th1 = threshold_candidates(&eval.n1, space.v_th1);

    let better = |c: &Candidate, best: &Option<Candidate>| match best {
        None => true,
        Some(b) => (c.violations, -c.margin) < (b.violations, -b.margin),
    };

    let mut best: Option<Candidate> = None;
    let mut grid = log_grid(space.g_x.0, space.g_x.1, GX_COARSE);
    for _ in 0..=REFINE_ROUNDS {
        for &g_x in &grid {
            for &v_th1 in &th1 {
                let c = eval.candidate(v_th1, g_x, space.v_th2);
                if better(&c, &best) {
                    best = Some(c);
                }
            }
        }
        let b = best.as_ref().expect("non-empty grid");
        let step = if grid.len() > 1 { (grid[1] / grid[0]).ln() } else { 0.0 };
        if step == 0.0 {
            break;
        }
        let lo = (b.g_x.ln() - step).exp().max(space.g_x.0);
        let hi = (b.g_x.ln() + step).exp().min(space.g_x.1);
        grid = log_grid(lo, hi, GX_REFINE);
    }

    let b = best.expect("non-empty grid");
    if b.violations > 0 || b.margin <= 0.0 {
        let mut violations = eval.violations(b.v_th1, b.v_th2, b.g_x);
        if violations.is_empty() {
            // a zero-margin tie: report the cases sitting on the threshold
            violations = eval.violations(b.v_th1, b.v_th2 + f64::EPSILON, b.g_x);
        }
        return Err(CellError::CalibrationFailed { violations });
    }
    Ok(CalibratedParams {
        v_th1: b.v_th1,
        v_th2: b.v_th2,
        g_x: b.g_x,
        v_th_block: devices.v_th_block,
        noise_margin: b.margin,
    })
}

/// Wraps externally supplied thresholds and coupling as calibrated parameters,
/// with the worst-case margin measured over every table configuration and
/// both read contexts. Fails if any configuration reads the wrong value.
pub fn assess(v_th1: f64, v_th2: f64, g_x: f64, devices: &DeviceSet) -> Result<CalibratedParams, CellError> {
    devices.validate().map_err(|e| CellError::InvalidInput(e.to_string()))?;
    if !(g_x > 0.0 && g_x.is_finite()) {
        return Err(CellError::InvalidInput(format!("g_x must be > 0, got {g_x}")));
    }
    let eval = Evaluator::new(devices);
    let violations = eval.violations(v_th1, v_th2, g_x);
    if !violations.is_empty() {
        return Err(CellError::CalibrationFailed { violations });
    }
    let margin2 = eval.n2(v_th1, g_x).iter().map(|n| (n - v_th2).abs()).fold(f64::INFINITY, f64::min);
    Ok(CalibratedParams {
        v_th1,
        v_th2,
        g_x,
        v_th_block: devices.v_th_block,
        noise_margin: eval.margin1(v_th1).min(margin2),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cal() -> CalibratedParams {
        calibrate(&SearchSpace::for_devices(&MemristorParams::default()), &DeviceSet::default()).unwrap()
    }

    #[test]
    fn table_rows() {
        let c = configure(GateKind::Nand, Variant::Full);
        assert_eq!((c.rc1, c.rc2, c.vc), (Some(Level::ROn), Level::ROff, 0.8));
        let c = configure(GateKind::Nor, Variant::Full);
        assert_eq!((c.rc1, c.rc2, c.vc), (Some(Level::ROff), Level::ROff, 0.8));
        let c = configure(GateKind::Xnor, Variant::Full);
        assert_eq!((c.rc1, c.rc2, c.vc), (Some(Level::ROff), Level::ROn, 0.8));
        let c = configure(GateKind::Nand, Variant::Reduced);
        assert_eq!((c.rc1, c.rc2, c.vc), (None, Level::ROff, 1.0));
        let c = configure(GateKind::Nor, Variant::Reduced);
        assert_eq!((c.rc1, c.rc2, c.vc), (None, Level::ROff, 0.8));
        let c = configure(GateKind::Xnor, Variant::Reduced);
        assert_eq!((c.rc1, c.rc2, c.vc), (None, Level::ROn, 0.8));
    }

    #[test]
    fn reduced_nand_and_nor_differ_only_in_vc() {
        let nand = configure(GateKind::Nand, Variant::Reduced);
        let nor = configure(GateKind::Nor, Variant::Reduced);
        assert_eq!((nand.rc1, nand.rc2), (nor.rc1, nor.rc2));
        assert_ne!(nand.vc, nor.vc);
    }

    #[test]
    fn display_matches_table_notation() {
        assert_eq!(configure(GateKind::Nand, Variant::Full).to_string(), "rc1=r_on rc2=r_off vc=0.8");
        assert_eq!(configure(GateKind::Xnor, Variant::Reduced).to_string(), "rc2=r_on vc=0.8");
    }

    #[test]
    fn gate_parsing() {
        assert_eq!("xnor".parse::<GateKind>().unwrap(), GateKind::Xnor);
        assert_eq!("AND".parse::<GateKind>(), Err(CellError::UnknownGate("AND".into())));
    }

    #[test]
    fn all_truth_tables_after_calibration() {
        let devices = DeviceSet::default();
        let cal = cal();
        let read = ReadSwitches::from_devices(&devices);
        for config in all_configs() {
            let want = INPUT_VECTORS.map(|(a, b)| config.gate.eval(a, b));
            assert_eq!(truth_table(&config, Some(&cal), &devices, None).unwrap(), want, "{config:?}");
            assert_eq!(truth_table(&config, Some(&cal), &devices, Some(&read)).unwrap(), want, "{config:?}");
        }
    }

    #[test]
    fn spot_values() {
        let devices = DeviceSet::default();
        let cal = cal();
        let nand = configure(GateKind::Nand, Variant::Full);
        assert_eq!(cell_read(&nand, 1.0, 1.0, Some(&cal), &devices, None).unwrap().out, 0.0);
        let xnor = configure(GateKind::Xnor, Variant::Full);
        assert_eq!(cell_read(&xnor, 1.0, 0.0, Some(&cal), &devices, None).unwrap().out, 0.0);
    }

    #[test]
    fn read_switches_shift_stage_one() {
        let devices = DeviceSet::default();
        let cal = cal();
        let read = ReadSwitches::from_devices(&devices);
        let nand = configure(GateKind::Nand, Variant::Full);
        let ideal = cell_read(&nand, 1.0, 1.0, Some(&cal), &devices, None).unwrap();
        let real = cell_read(&nand, 1.0, 1.0, Some(&cal), &devices, Some(&read)).unwrap();
        assert!((real.n1 - ideal.n1).abs() > 0.0);
        assert_eq!(real.out, ideal.out);
    }

    #[test]
    fn not_calibrated() {
        let c = configure(GateKind::Nor, Variant::Full);
        assert_eq!(cell_read(&c, 0.0, 0.0, None, &DeviceSet::default(), None), Err(CellError::NotCalibrated));
    }

    #[test]
    fn input_range_is_checked() {
        let c = configure(GateKind::Nor, Variant::Full);
        let cal = cal();
        assert!(matches!(
            cell_read(&c, 1.5, 0.0, Some(&cal), &DeviceSet::default(), None),
            Err(CellError::InvalidInput(_))
        ));
    }

    #[test]
    fn calibration_is_deterministic() {
        let a = cal();
        let b = cal();
        assert_eq!(a.v_th1.to_bits(), b.v_th1.to_bits());
        assert_eq!(a.v_th2.to_bits(), b.v_th2.to_bits());
        assert_eq!(a.g_x.to_bits(), b.g_x.to_bits());
        assert_eq!(a.noise_margin.to_bits(), b.noise_margin.to_bits());
    }

    #[test]
    fn assess_reproduces_calibrated_margin() {
        let d = DeviceSet::default();
        let c = cal();
        let again = assess(c.v_th1, c.v_th2, c.g_x, &d).unwrap();
        assert_eq!(again, c);
        assert!(matches!(assess(0.5, 0.5, 1.0 / 60e3, &d), Err(CellError::CalibrationFailed { .. })));
    }

    #[test]
    fn collapsed_infeasible_bounds_report_violations() {
        let err = calibrate(&SearchSpace::point(0.5, 0.5, 1.0 / 60e3), &DeviceSet::default()).unwrap_err();
        match err {
            CellError::CalibrationFailed { violations } => assert!(!violations.is_empty()),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn symmetric_in_inputs() {
        let devices = DeviceSet::default();
        let cal = cal();
        let read = ReadSwitches::from_devices(&devices);
        for config in all_configs() {
            for ctx in [None, Some(&read)] {
                let ab = cell_read(&config, 1.0, 0.0, Some(&cal), &devices, ctx).unwrap();
                let ba = cell_read(&config, 0.0, 1.0, Some(&cal), &devices, ctx).unwrap();
                assert_eq!(ab, ba);
            }
        }
    }

    #[test]
    fn read_transient_matches_staged_nodes_and_leaves_states() {
        let devices = DeviceSet::default();
        let cal = cal();
        let read = ReadSwitches::from_devices(&devices);
        let vectors: Vec<(f64, f64)> =
            INPUT_VECTORS.iter().map(|&(a, b)| (f64::from(u8::from(a)), f64::from(u8::from(b)))).collect();
        for config in all_configs() {
            for ctx in [None, Some(&read)] {
                let run = read_transient(&config, &cal, &devices, ctx, &vectors, 1e-6, 1e-7).unwrap();
                let n1 = run.waveform.channel("v(n1)").unwrap();
                let n2 = run.waveform.channel("v(n2)").unwrap();
                for (k, &(a, b)) in vectors.iter().enumerate() {
                    let staged = cell_read(&config, a, b, Some(&cal), &devices, ctx).unwrap();
                    let row = k * 10 + 5;
                    assert!((n1[row] - staged.n1).abs() < 1e-9, "{config:?}");
                    assert!((n2[row] - staged.n2).abs() < 1e-9, "{config:?}");
                }
                let want = [0.0, 0.0, 0.0, 0.0, config.rc1.unwrap_or(Level::ROff).state().x(), config.rc2.state().x()];
                let got: Vec<f64> = run.final_states.iter().map(|s| s.x()).collect();
                assert_eq!(got, want);
            }
        }
    }

    #[test]
    fn programmed_states_map_back_to_rows() {
        for config in all_configs() {
            let rc1 = config.rc1.unwrap_or(Level::ROff).state();
            let back = CellConfig::from_programmed(config.variant, rc1, config.rc2.state(), config.vc).unwrap();
            assert_eq!(back, config);
        }
        let odd = CellConfig::from_programmed(Variant::Full, MemristorState::ON, MemristorState::ON, 0.8);
        assert!(odd.is_none());
    }
}
