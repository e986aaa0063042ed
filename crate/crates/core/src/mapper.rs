//! Netlist parsing, placement onto the array, program emission and
//! end-to-end verification.
//!
//! Placement is greedy: gates are visited in level order and grouped by their
//! unordered operand pair. Each group takes one row whose two lines carry the
//! pair; its gates fill that row's columns left to right. Gate-produced
//! operands are routed from the producer's side-0 column through a threshold
//! block; primary outputs leave on side 1.

use std::collections::{BTreeMap, HashMap};
use std::fmt::{self, Write as _};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::array::{array_eval, build_array, plan, ArrayCells, ArrayError, ArrayTopology, RoutingState};
use crate::cell::{configure, CalibratedParams, CellConfig, CellError, GateKind, Variant};
use crate::devices::DeviceSet;
use crate::programmer::{apply_write, write_schedule_in, CellMemristors, ProgramError, PulseWindow, SwitchSchedule};

/// Largest primary-input count `verify` will enumerate.
pub const MAX_VERIFY_INPUTS: usize = 16;

/// Output column side used for routing gate signals to other rows.
const ROUTE_SIDE: usize = 0;
/// Output column side used for primary outputs.
const OUTPUT_SIDE: usize = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Gate {
    pub name: String,
    pub kind: GateKind,
    pub a: String,
    pub b: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Netlist {
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub gates: Vec<Gate>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MapError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("unknown gate `{name}` at line {line}, column {column} (expected NAND, NOR or XNOR)")]
    UnknownGate { line: usize, column: usize, name: String },
    #[error("`{name}` used before definition at line {line}")]
    UseBeforeDefinition { line: usize, name: String },
    #[error("`{name}` is undefined (line {line})")]
    Undefined { line: usize, name: String },
    #[error("gate `{name}` depends on itself at line {line}")]
    Cycle { line: usize, name: String },
    #[error("duplicate name `{name}` at line {line}")]
    Duplicate { line: usize, name: String },
    #[error("capacity exceeded at gate `{gate}`: {reason}")]
    CapacityExceeded { gate: String, reason: String },
    #[error("unroutable `{gate}`: {reason}")]
    Unroutable { gate: String, reason: String },
    #[error("verification needs at most {MAX_VERIFY_INPUTS} primary inputs, netlist has {0}")]
    TooManyInputs(usize),
    #[error("verification failed: inputs {counterexample} give {got}, expected {expected}")]
    VerificationFailed { counterexample: String, expected: String, got: String, report: Box<VerifyReport> },
    #[error(transparent)]
    Array(#[from] ArrayError),
    #[error(transparent)]
    Program(#[from] ProgramError),
    #[error(transparent)]
    Cell(#[from] CellError),
}

struct Cursor<'a> {
    text: &'a str,
    pos: usize,
    line: usize,
}

impl<'a> Cursor<'a> {
    fn column(&self) -> usize {
        self.text[..self.pos].chars().count() + 1
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.text[self.pos..].chars().next() {
            if !c.is_whitespace() {
                break;
            }
            self.pos += c.len_utf8();
        }
    }

    fn at_end(&mut self) -> bool {
        self.skip_ws();
        self.pos == self.text.len()
    }

    fn err(&self, message: impl Into<String>) -> MapError {
        MapError::Syntax { line: self.line, column: self.column(), message: message.into() }
    }

    fn ident(&mut self) -> Result<(&'a str, usize), MapError> {
        self.skip_ws();
        let start = self.pos;
        let col = self.column();
        let rest = &self.text[start..];
        let mut chars = rest.char_indices();
        match chars.next() {
            Some((_, c)) if c.is_ascii_alphabetic() || c == '_' => {}
            _ => return Err(self.err("expected an identifier")),
        }
        let len = chars.find(|(_, c)| !(c.is_ascii_alphanumeric() || *c == '_')).map_or(rest.len(), |(i, _)| i);
        self.pos += len;
        Ok((&rest[..len], col))
    }

    fn expect(&mut self, ch: char) -> Result<(), MapError> {
        self.skip_ws();
        if self.text[self.pos..].starts_with(ch) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(format!("expected `{ch}`")))
        }
    }

    fn finish(&mut self) -> Result<(), MapError> {
        if self.at_end() {
            Ok(())
        } else {
            Err(self.err("unexpected trailing text"))
        }
    }
}

enum Statement<'a> {
    Input(&'a str),
    Output(&'a str),
    Gate { name: &'a str, kind: GateKind, a: &'a str, b: &'a str },
}

fn parse_line<'a>(text: &'a str, line: usize) -> Result<Option<Statement<'a>>, MapError> {
    let mut cur = Cursor { text, pos: 0, line };
    if cur.at_end() {
        return Ok(None);
    }
    let (first, _) = cur.ident()?;
    let save = cur.pos;
    cur.skip_ws();
    let next_is_ident = cur.text[cur.pos..].starts_with(|c: char| c.is_ascii_alphabetic() || c == '_');
    if (first == "input" || first == "output") && next_is_ident {
        let (name, _) = cur.ident()?;
        cur.finish()?;
        return Ok(Some(if first == "input" { Statement::Input(name) } else { Statement::Output(name) }));
    }
    cur.pos = save;
    cur.expect('=')?;
    let (gate, gate_col) = cur.ident()?;
    let kind = gate.parse::<GateKind>().map_err(|_| MapError::UnknownGate {
        line,
        column: gate_col,
        name: gate.to_owned(),
    })?;
    cur.expect('(')?;
    let (a, _) = cur.ident()?;
    cur.expect(',')?;
    let (b, _) = cur.ident()?;
    cur.expect(')')?;
    cur.finish()?;
    Ok(Some(Statement::Gate { name: first, kind, a, b }))
}

/// Parses the line-oriented netlist format:
///
/// ```text
/// input a
/// input b
/// g1 = NAND(a, b)   # comment
/// output g1
/// ```
pub fn parse_netlist(text: &str) -> Result<Netlist, MapError> {
    let mut net = Netlist::default();
    // name -> line of definition
    let mut defined: HashMap<String, usize> = HashMap::new();
    let mut outputs: Vec<(String, usize)> = Vec::new();
    let mut pending: Vec<(usize, Statement)> = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("");
        if let Some(st) = parse_line(body, line)? {
            pending.push((line, st));
        }
    }
    // every name defined anywhere, to tell forward references from typos
    let all_names: HashMap<&str, usize> = pending
        .iter()
        .filter_map(|(l, st)| match st {
            Statement::Input(n) => Some((*n, *l)),
            Statement::Gate { name, .. } => Some((*name, *l)),
            Statement::Output(_) => None,
        })
        .collect();

    for (line, st) in &pending {
        let line = *line;
        match *st {
            Statement::Input(name) => {
                if defined.insert(name.to_owned(), line).is_some() {
                    return Err(MapError::Duplicate { line, name: name.to_owned() });
                }
                net.inputs.push(name.to_owned());
            }
            Statement::Output(name) => {
                if outputs.iter().any(|(n, _)| n == name) {
                    return Err(MapError::Duplicate { line, name: name.to_owned() });
                }
                outputs.push((name.to_owned(), line));
            }
            Statement::Gate { name, kind, a, b } => {
                for op in [a, b] {
                    if op == name {
                        return Err(MapError::Cycle { line, name: name.to_owned() });
                    }
                    if !defined.contains_key(op) {
                        return Err(if all_names.contains_key(op) {
                            MapError::UseBeforeDefinition { line, name: op.to_owned() }
                        } else {
                            MapError::Undefined { line, name: op.to_owned() }
                        });
                    }
                }
                if defined.insert(name.to_owned(), line).is_some() {
                    return Err(MapError::Duplicate { line, name: name.to_owned() });
                }
                net.gates.push(Gate { name: name.to_owned(), kind, a: a.to_owned(), b: b.to_owned() });
            }
        }
    }
    for (name, line) in outputs {
        if !defined.contains_key(&name) {
            return Err(MapError::Undefined { line, name });
        }
        net.outputs.push(name);
    }
    Ok(net)
}

impl Netlist {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for i in &self.inputs {
            let _ = writeln!(s, "input {i}");
        }
        for g in &self.gates {
            let _ = writeln!(s, "{} = {}({}, {})", g.name, g.kind, g.a, g.b);
        }
        for o in &self.outputs {
            let _ = writeln!(s, "output {o}");
        }
        s
    }

    /// Boolean value of every output for one assignment of the inputs (in
    /// declaration order).
    pub fn eval(&self, inputs: &[bool]) -> Vec<bool> {
        let mut values: HashMap<&str, bool> =
            self.inputs.iter().map(String::as_str).zip(inputs.iter().copied()).collect();
        for g in &self.gates {
            let v = g.kind.eval(values[g.a.as_str()], values[g.b.as_str()]);
            values.insert(&g.name, v);
        }
        self.outputs.iter().map(|o| values[o.as_str()]).collect()
    }

    fn levels(&self) -> HashMap<&str, usize> {
        let mut level: HashMap<&str, usize> = self.inputs.iter().map(|i| (i.as_str(), 0)).collect();
        for g in &self.gates {
            let l = 1 + level[g.a.as_str()].max(level[g.b.as_str()]);
            level.insert(&g.name, l);
        }
        level
    }
}

fn pair_key(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_owned(), b.to_owned())
    } else {
        (b.to_owned(), a.to_owned())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlacedCell {
    pub gate: String,
    pub row: usize,
    pub col: usize,
    pub config: CellConfig,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RowAssignment {
    pub row: usize,
    pub a: String,
    pub b: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OutputPin {
    pub name: String,
    pub row: usize,
    pub col: usize,
    pub side: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Mapping {
    pub rows: usize,
    pub cols: usize,
    pub variant: Variant,
    pub cells: Vec<PlacedCell>,
    pub row_inputs: Vec<RowAssignment>,
    pub routing: RoutingState,
    pub outputs: Vec<OutputPin>,
    #[serde(skip)]
    pub topology: ArrayTopology,
}

impl Mapping {
    pub fn configs(&self) -> BTreeMap<(usize, usize), CellConfig> {
        self.cells.iter().map(|c| ((c.row, c.col), c.config)).collect()
    }
}

/// Places and routes `netlist` onto a `rows × cols` array.
pub fn place_and_route(netlist: &Netlist, rows: usize, cols: usize, variant: Variant) -> Result<Mapping, MapError> {
    let topology = build_array(rows, cols, variant)?;
    let levels = netlist.levels();
    let mut order: Vec<(usize, usize)> =
        netlist.gates.iter().enumerate().map(|(i, g)| (levels[g.name.as_str()], i)).collect();
    order.sort_unstable();

    let mut groups: Vec<((String, String), Vec<usize>)> = Vec::new();
    for &(_, i) in &order {
        let g = &netlist.gates[i];
        let key = pair_key(&g.a, &g.b);
        let slot = match groups.iter().position(|(k, _)| *k == key) {
            Some(p) => p,
            None => {
                if groups.len() == rows {
                    return Err(MapError::CapacityExceeded {
                        gate: g.name.clone(),
                        reason: format!("needs operand pair ({}, {}) but all {rows} rows are taken", key.0, key.1),
                    });
                }
                groups.push((key.clone(), Vec::new()));
                groups.len() - 1
            }
        };
        if groups[slot].1.len() == cols {
            return Err(MapError::CapacityExceeded {
                gate: g.name.clone(),
                reason: format!("row for pair ({}, {}) already holds {cols} gates", key.0, key.1),
            });
        }
        groups[slot].1.push(i);
    }

    let mut cells = Vec::new();
    let mut location: HashMap<&str, (usize, usize)> = HashMap::new();
    for (row, (_, members)) in groups.iter().enumerate() {
        for (col, &i) in members.iter().enumerate() {
            let g = &netlist.gates[i];
            location.insert(&g.name, (row, col));
            cells.push(PlacedCell { gate: g.name.clone(), row, col, config: configure(g.kind, variant) });
        }
    }
    cells.sort_by_key(|c| (c.row, c.col));

    let mut routing = RoutingState::new();
    let mut row_inputs = Vec::new();
    for (row, ((a, b), members)) in groups.iter().enumerate() {
        for (side, signal) in [a, b].into_iter().enumerate() {
            let id = match location.get(signal.as_str()) {
                None => topology.input_switch(row, side),
                Some(&(r, c)) => {
                    routing.close(&topology, topology.cell_out_switch(r, c, ROUTE_SIDE).expect("in range"))?;
                    topology.route_switch(r, c, ROUTE_SIDE, row, side)
                }
            };
            let id = id.ok_or_else(|| MapError::Unroutable {
                gate: netlist.gates[members[0]].name.clone(),
                reason: format!("no switch path from `{signal}` to row {row}"),
            })?;
            routing.close(&topology, id)?;
        }
        row_inputs.push(RowAssignment { row, a: a.clone(), b: b.clone() });
    }

    let mut outputs = Vec::new();
    for name in &netlist.outputs {
        let &(row, col) = location.get(name.as_str()).ok_or_else(|| MapError::Unroutable {
            gate: name.clone(),
            reason: "primary inputs cannot drive an output column".into(),
        })?;
        routing.close(&topology, topology.cell_out_switch(row, col, OUTPUT_SIDE).expect("in range"))?;
        outputs.push(OutputPin { name: name.clone(), row, col, side: OUTPUT_SIDE });
    }

    Ok(Mapping { rows, cols, variant, cells, row_inputs, routing, outputs, topology })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSchedule {
    pub row: usize,
    pub col: usize,
    pub schedule: SwitchSchedule,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProgramBundle {
    pub mapping: Mapping,
    /// The single programming pulse shared by every cell.
    pub window: PulseWindow,
    pub schedules: Vec<CellSchedule>,
}

impl ProgramBundle {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data")
    }

    /// Every cell schedule as CSV rows prefixed by the cell position.
    pub fn schedules_csv(&self) -> String {
        let mut s = String::from("row,col,switch,gate_v,t_start,t_end\n");
        for cs in &self.schedules {
            for line in cs.schedule.to_csv().lines().skip(1) {
                let _ = writeln!(s, "{},{},{line}", cs.row, cs.col);
            }
        }
        s
    }
}

/// One write schedule per placed cell, from the factory state, all inside one
/// shared pulse window.
pub fn emit_program(mapping: &Mapping, devices: &DeviceSet) -> ProgramBundle {
    let window = PulseWindow::default_for(devices);
    let blank = CellMemristors::blank();
    let schedules = mapping
        .cells
        .iter()
        .map(|c| CellSchedule {
            row: c.row,
            col: c.col,
            schedule: write_schedule_in(&c.config, &blank, devices, window),
        })
        .collect();
    ProgramBundle { mapping: mapping.clone(), window, schedules }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VectorResult {
    pub inputs: String,
    pub expected: String,
    pub got: String,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub vectors: Vec<VectorResult>,
    pub mismatches: usize,
    pub noise_margin_v: f64,
}

impl VerifyReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data")
    }
}

fn bits(v: &[bool]) -> String {
    v.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

/// Input assignment number `k` of `n` inputs; the first input is the most
/// significant bit.
pub fn input_vector(n: usize, k: usize) -> Vec<bool> {
    (0..n).map(|i| (k >> (n - 1 - i)) & 1 == 1).collect()
}

/// Pin voltages for every row from a primary-input assignment. Row sides fed
/// by gates get 0 V; their input switches are open anyway.
pub fn row_voltages(
    mapping: &Mapping,
    netlist: &Netlist,
    assignment: &[bool],
    v_dd: f64,
) -> BTreeMap<usize, (f64, f64)> {
    let rail = |name: &str| {
        netlist.inputs.iter().position(|i| i == name).map_or(0.0, |i| if assignment[i] { v_dd } else { 0.0 })
    };
    mapping.row_inputs.iter().map(|r| (r.row, (rail(&r.a), rail(&r.b)))).collect()
}

/// Applies every schedule of the bundle to a blank cell and reads the
/// resulting memristor states back as electrical cell settings.
pub fn program_cells(bundle: &ProgramBundle, devices: &DeviceSet) -> Result<ArrayCells, MapError> {
    let vc: BTreeMap<(usize, usize), f64> =
        bundle.mapping.cells.iter().map(|c| ((c.row, c.col), c.config.vc)).collect();
    // identical schedules on blank cells give identical states
    let mut written: Vec<(&SwitchSchedule, CellMemristors)> = Vec::new();
    let mut cells = ArrayCells::new();
    for cs in &bundle.schedules {
        let states = match written.iter().find(|(s, _)| *s == &cs.schedule) {
            Some((_, st)) => *st,
            None => {
                let st = apply_write(&CellMemristors::blank(), &cs.schedule, devices)?.final_states;
                written.push((&cs.schedule, st));
                st
            }
        };
        let v = *vc.get(&(cs.row, cs.col)).ok_or_else(|| {
            MapError::Array(ArrayError::InvalidInput(format!("schedule for unplaced cell ({},{})", cs.row, cs.col)))
        })?;
        cells.insert((cs.row, cs.col), states.bias(cs.schedule.variant, v, devices));
    }
    Ok(cells)
}

/// Programs a blank array with the bundle's schedules, reads the resulting
/// memristor states back as cell biases, and compares the array against the
/// netlist on every input vector.
pub fn verify(
    bundle: &ProgramBundle,
    netlist: &Netlist,
    cal: &CalibratedParams,
    devices: &DeviceSet,
) -> Result<VerifyReport, MapError> {
    let n = netlist.inputs.len();
    if n > MAX_VERIFY_INPUTS {
        return Err(MapError::TooManyInputs(n));
    }
    let mapping = &bundle.mapping;
    let cells = program_cells(bundle, devices)?;
    plan(&mapping.topology, &mapping.routing, &cells)?;

    let mut report = VerifyReport { vectors: Vec::with_capacity(1 << n), mismatches: 0, noise_margin_v: f64::INFINITY };
    let mut first_bad: Option<usize> = None;
    for k in 0..(1usize << n) {
        let assignment = input_vector(n, k);
        let inputs = row_voltages(mapping, netlist, &assignment, devices.v_dd);
        let e = array_eval(&mapping.topology, &mapping.routing, &cells, &inputs, cal, devices)?;
        report.noise_margin_v = report.noise_margin_v.min(e.noise_margin);
        let got: Vec<bool> = mapping
            .outputs
            .iter()
            .map(|o| e.output(o.row, o.col, o.side).expect("output column routed") > 0.5 * devices.v_dd)
            .collect();
        let expected = netlist.eval(&assignment);
        let pass = got == expected;
        if !pass {
            report.mismatches += 1;
            first_bad.get_or_insert(report.vectors.len());
        }
        report.vectors.push(VectorResult {
            inputs: bits(&assignment),
            expected: bits(&expected),
            got: bits(&got),
            pass,
        });
    }
    if report.noise_margin_v.is_infinite() {
        report.noise_margin_v = 0.0;
    }
    match first_bad {
        None => Ok(report),
        Some(i) => {
            let v = report.vectors[i].clone();
            Err(MapError::VerificationFailed {
                counterexample: v.inputs,
                expected: v.expected,
                got: v.got,
                report: Box::new(report),
            })
        }
    }
}

/// Random netlist that fits a `rows × cols` array under the row rule.
pub fn random_netlist(seed: u64, max_gates: usize, max_inputs: usize, rows: usize, cols: usize) -> Netlist {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_inputs = rng.gen_range(2..=max_inputs.max(2));
    let n_gates = rng.gen_range(1..=max_gates.max(1).min(rows * cols));
    let inputs: Vec<String> = (0..n_inputs).map(|i| format!("x{i}")).collect();
    let mut signals = inputs.clone();
    let mut groups: Vec<((String, String), usize)> = Vec::new();
    let mut gates = Vec::new();

    for gi in 0..n_gates {
        let open: Vec<usize> = (0..groups.len()).filter(|&i| groups[i].1 < cols).collect();
        let reuse = !open.is_empty() && (groups.len() == rows || rng.gen_bool(0.4));
        let key = if reuse {
            let i = *open.choose(&mut rng).expect("non-empty");
            groups[i].1 += 1;
            groups[i].0.clone()
        } else if groups.len() < rows {
            // a fresh pair, preferring the newest signal so depth grows
            let key = loop {
                let a = if rng.gen_bool(0.5) {
                    signals.last().expect("inputs exist").clone()
                } else {
                    signals.choose(&mut rng).expect("inputs exist").clone()
                };
                let b = signals.choose(&mut rng).expect("inputs exist").clone();
                let k = pair_key(&a, &b);
                if !groups.iter().any(|(g, _)| *g == k) {
                    break k;
                }
            };
            groups.push((key.clone(), 1));
            key
        } else {
            break;
        };
        let kind = *GateKind::ALL.choose(&mut rng).expect("non-empty");
        let name = format!("g{gi}");
        let (a, b) = if rng.gen_bool(0.5) { (key.0, key.1) } else { (key.1, key.0) };
        gates.push(Gate { name: name.clone(), kind, a, b });
        signals.push(name);
    }

    let used: Vec<&str> = gates.iter().flat_map(|g| [g.a.as_str(), g.b.as_str()]).collect();
    let mut outputs: Vec<String> = gates
        .iter()
        .filter(|g| !used.contains(&g.name.as_str()) || rng.gen_bool(0.25))
        .map(|g| g.name.clone())
        .collect();
    if outputs.is_empty() {
        outputs.push(gates.last().expect("at least one gate").name.clone());
    }
    Netlist { inputs, outputs, gates }
}

impl fmt::Display for Mapping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.row_inputs {
            writeln!(f, "row {}: ({}, {})", r.row, r.a, r.b)?;
        }
        for c in &self.cells {
            writeln!(f, "cell ({},{}) {} = {} [{}]", c.row, c.col, c.gate, c.config.gate, c.config)?;
        }
        for o in &self.outputs {
            writeln!(f, "output {} <- col{}.{}.{}", o.name, o.row, o.col, o.side)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell::{calibrate, SearchSpace};
    use crate::programmer::{SwitchEvent, SwitchId};

    fn cal(d: &DeviceSet) -> CalibratedParams {
        calibrate(&SearchSpace::for_devices(&d.memristor), d).unwrap()
    }

    #[test]
    fn parses_one_gate() {
        let n = parse_netlist("input a\ninput b\ng1 = NAND(a, b)\noutput g1").unwrap();
        assert_eq!(n.inputs, ["a", "b"]);
        assert_eq!(n.outputs, ["g1"]);
        assert_eq!(n.gates, [Gate { name: "g1".into(), kind: GateKind::Nand, a: "a".into(), b: "b".into() }]);
    }

    #[test]
    fn comments_blank_lines_and_early_outputs() {
        let n = parse_netlist("# demo\noutput y\n\ninput a # first\ninput b\ny = xnor(a,b)\n").unwrap();
        assert_eq!(n.gates[0].kind, GateKind::Xnor);
        assert_eq!(n.outputs, ["y"]);
    }

    #[test]
    fn parse_errors() {
        assert_eq!(parse_netlist("input a\ng1 = NAND(a, g1)"), Err(MapError::Cycle { line: 2, name: "g1".into() }));
        assert_eq!(
            parse_netlist("input a\ninput b\ng1 = AND(a, b)"),
            Err(MapError::UnknownGate { line: 3, column: 6, name: "AND".into() })
        );
        assert_eq!(
            parse_netlist("input a\ng1 = NOR(a, g2)\ng2 = NOR(a, a)"),
            Err(MapError::UseBeforeDefinition { line: 2, name: "g2".into() })
        );
        assert_eq!(parse_netlist("input a\ninput a"), Err(MapError::Duplicate { line: 2, name: "a".into() }));
        assert_eq!(parse_netlist("input a\ng = NOR(a, zz)"), Err(MapError::Undefined { line: 2, name: "zz".into() }));
        assert_eq!(
            parse_netlist("input a\ng = NOR(a a)"),
            Err(MapError::Syntax { line: 2, column: 11, message: "expected `,`".into() })
        );
        assert!(matches!(parse_netlist("input a b"), Err(MapError::Syntax { line: 1, .. })));
    }

    #[test]
    fn text_round_trip() {
        for seed in 0..20 {
            let n = random_netlist(seed, 12, 6, 4, 4);
            assert_eq!(parse_netlist(&n.to_text()).unwrap(), n);
        }
    }

    fn shared_pairs_netlist() -> Netlist {
        let mut text = String::from("input a\ninput b\ninput c\n");
        let pairs = [("a", "b"), ("b", "c"), ("a", "c")];
        for i in 0..12 {
            let (x, y) = pairs[i % 3];
            let kind = GateKind::ALL[i % 3];
            text.push_str(&format!("g{i} = {kind}({x}, {y})\noutput g{i}\n"));
        }
        parse_netlist(&text).unwrap()
    }

    #[test]
    fn twelve_gates_three_pairs_fit() {
        let n = shared_pairs_netlist();
        let m = place_and_route(&n, 3, 4, Variant::Full).unwrap();
        assert_eq!(m.cells.len(), 12);
        let used: std::collections::BTreeSet<usize> = m.cells.iter().map(|c| c.row).collect();
        assert!(used.len() <= 3);
        let gates: HashMap<&str, &Gate> = n.gates.iter().map(|g| (g.name.as_str(), g)).collect();
        for c in &m.cells {
            let g = gates[c.gate.as_str()];
            let r = &m.row_inputs[c.row];
            assert_eq!(pair_key(&g.a, &g.b), pair_key(&r.a, &r.b));
        }
    }

    #[test]
    fn capacity_errors_name_the_gate() {
        let mut text = String::from("input a\ninput b\n");
        for i in 0..13 {
            text.push_str(&format!("g{i} = NOR(a, b)\n"));
        }
        match place_and_route(&parse_netlist(&text).unwrap(), 3, 4, Variant::Full) {
            Err(MapError::CapacityExceeded { gate, .. }) => assert_eq!(gate, "g4"),
            other => panic!("unexpected {other:?}"),
        }
        let n = parse_netlist("input a\ninput b\ninput c\nx = NOR(a, b)\ny = NOR(b, c)").unwrap();
        match place_and_route(&n, 1, 4, Variant::Full) {
            Err(MapError::CapacityExceeded { gate, .. }) => assert_eq!(gate, "y"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn single_gate_lands_at_origin() {
        let n = parse_netlist("input a\ninput b\ng = NAND(a, b)\noutput g").unwrap();
        let m = place_and_route(&n, 1, 1, Variant::Full).unwrap();
        assert_eq!((m.cells[0].row, m.cells[0].col), (0, 0));
    }

    #[test]
    fn emit_program_counts() {
        let d = DeviceSet::default();
        let n = parse_netlist("input a\ninput b\ng = XNOR(a, b)\noutput g").unwrap();
        let b = emit_program(&place_and_route(&n, 1, 1, Variant::Full).unwrap(), &d);
        let ids: Vec<SwitchId> = b.schedules[0].schedule.events.iter().map(|e| e.switch).collect();
        assert_eq!(ids, [SwitchId::Sw10, SwitchId::Sw13]);

        let empty = emit_program(&place_and_route(&Netlist::default(), 1, 1, Variant::Full).unwrap(), &d);
        assert!(empty.schedules.is_empty());

        let b = emit_program(&place_and_route(&shared_pairs_netlist(), 3, 4, Variant::Full).unwrap(), &d);
        assert_eq!(b.schedules.len(), 12);
        assert!(b.schedules.iter().all(|s| s.schedule.window == b.window));
    }

    #[test]
    fn verify_single_nand() {
        let d = DeviceSet::default();
        let n = parse_netlist("input a\ninput b\ng = NAND(a, b)\noutput g").unwrap();
        let b = emit_program(&place_and_route(&n, 1, 1, Variant::Full).unwrap(), &d);
        let r = verify(&b, &n, &cal(&d), &d).unwrap();
        assert_eq!((r.vectors.len(), r.mismatches), (4, 0));
        assert!(r.noise_margin_v > 0.0);
    }

    #[test]
    fn composed_xnor_of_nand_and_nor() {
        // oracle by hand: NAND and NOR agree exactly when a == b
        let d = DeviceSet::default();
        let n = parse_netlist("input a\ninput b\nu = NAND(a, b)\nv = NOR(a, b)\nf = XNOR(u, v)\noutput f").unwrap();
        let want = [true, false, false, true];
        for (k, w) in want.iter().enumerate() {
            assert_eq!(n.eval(&[k & 2 != 0, k & 1 != 0]), vec![*w]);
        }
        for variant in Variant::ALL {
            let b = emit_program(&place_and_route(&n, 2, 2, variant).unwrap(), &d);
            let r = verify(&b, &n, &cal(&d), &d).unwrap();
            assert_eq!(r.mismatches, 0);
            let got: Vec<&str> = r.vectors.iter().map(|v| v.got.as_str()).collect();
            assert_eq!(got, ["1", "0", "0", "1"]);
        }
    }

    #[test]
    fn wrong_switch_pair_is_caught() {
        let d = DeviceSet::default();
        let n = parse_netlist("input a\ninput b\ng = NAND(a, b)\noutput g").unwrap();
        let mut b = emit_program(&place_and_route(&n, 1, 1, Variant::Full).unwrap(), &d);
        let w = b.window;
        b.schedules[0].schedule.events = [SwitchId::Sw5, SwitchId::Sw6]
            .map(|switch| SwitchEvent { switch, gate_v: d.v_sc, t_start: w.t_start, t_end: w.t_end })
            .to_vec();
        match verify(&b, &n, &cal(&d), &d) {
            Err(MapError::VerificationFailed { counterexample, report, .. }) => {
                assert!(report.mismatches > 0);
                assert_eq!(counterexample.len(), 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bundle_bytes_are_deterministic() {
        let d = DeviceSet::default();
        let text = random_netlist(7, 12, 6, 4, 4).to_text();
        let once = emit_program(&place_and_route(&parse_netlist(&text).unwrap(), 4, 4, Variant::Full).unwrap(), &d);
        let twice = emit_program(&place_and_route(&parse_netlist(&text).unwrap(), 4, 4, Variant::Full).unwrap(), &d);
        assert_eq!(once.to_json(), twice.to_json());
    }

    #[test]
    fn random_netlists_are_mappable() {
        for seed in 0..50 {
            let n = random_netlist(seed, 12, 6, 4, 4);
            assert!(n.gates.len() <= 12 && n.inputs.len() <= 6);
            place_and_route(&n, 4, 4, Variant::Reduced).unwrap();
        }
    }

    #[test]
    fn report_json_shape() {
        let r = VerifyReport { vectors: vec![], mismatches: 0, noise_margin_v: 0.03 };
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert!(v.get("vectors").is_some() && v.get("mismatches").is_some() && v.get("noise_margin_v").is_some());
    }
}
