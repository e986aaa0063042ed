//! Crossbar of cells with row input lines, per-cell output columns, routing
//! switches and restoring threshold blocks.
//!
//! Signal path for a cell output: cell -> output switch -> column line ->
//! (route switch -> row line of another row) -> threshold block. The level
//! reaching the block is the pre-threshold value; the block restores it to a
//! rail.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};

use serde::Serialize;
use thiserror::Error;

use crate::cell::{read_bias, CalibratedParams, CellBias, CellConfig, CellError, CellReadout, ReadSwitches, Variant};
use crate::devices::{inverter_eval, switch_pass, DeviceSet, InverterParams};
use crate::solver::Waveform;

/// One line of the array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Line {
    /// External input pin feeding side `side` of a row.
    Input { row: usize, side: usize },
    /// Row line; side 0 carries a cell's first operand, side 1 its second.
    Row { row: usize, side: usize },
    /// Output column line of one cell.
    Column { row: usize, col: usize, side: usize },
}

impl fmt::Display for Line {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Line::Input { row, side } => write!(f, "in{row}{}", side_name(side)),
            Line::Row { row, side } => write!(f, "row{row}{}", side_name(side)),
            Line::Column { row, col, side } => write!(f, "col{row}.{col}.{side}"),
        }
    }
}

fn side_name(side: usize) -> char {
    if side == 0 {
        'A'
    } else {
        'B'
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum SwitchKind {
    /// External pin to row line.
    Input,
    /// Cell output to one of its column lines.
    CellOut,
    /// Column line to a row line of a different row.
    Route,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ArraySwitch {
    pub id: usize,
    pub kind: SwitchKind,
    pub from: Line,
    pub to: Line,
}

impl fmt::Display for ArraySwitch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{} {}->{}", self.id, self.from, self.to)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArrayTopology {
    pub rows: usize,
    pub cols: usize,
    pub variant: Variant,
    pub lines_per_row: usize,
    pub lines_per_column: usize,
    pub switches: Vec<ArraySwitch>,
    /// One restoring block per cell output.
    pub threshold_blocks: usize,
    #[serde(skip)]
    index: BTreeMap<(Line, Line), usize>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ArrayError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("unknown switch id {0}")]
    UnknownSwitch(usize),
    #[error("line {line} driven by more than one closed switch: {drivers}")]
    Contention { line: Line, drivers: String },
    #[error("routing cycle: {0}")]
    Cycle(String),
    #[error("line {line} feeds cell ({row},{col}) but nothing drives it")]
    Undriven { line: Line, row: usize, col: usize },
    #[error("cell ({row},{col}): {source}")]
    Cell { row: usize, col: usize, source: CellError },
}

/// Builds a `rows × cols` array with two lines per row and two output
/// columns per cell.
pub fn build_array(rows: usize, cols: usize, variant: Variant) -> Result<ArrayTopology, ArrayError> {
    if rows == 0 || cols == 0 {
        return Err(ArrayError::InvalidInput(format!("array must be at least 1x1, got {rows}x{cols}")));
    }
    let mut switches = Vec::new();
    let mut push = |kind, from, to| {
        let id = switches.len();
        switches.push(ArraySwitch { id, kind, from, to });
    };
    for row in 0..rows {
        for side in 0..2 {
            push(SwitchKind::Input, Line::Input { row, side }, Line::Row { row, side });
        }
    }
    for row in 0..rows {
        for col in 0..cols {
            for side in 0..2 {
                // the source is the cell itself; both ends name the column it drives
                push(SwitchKind::CellOut, Line::Column { row, col, side }, Line::Column { row, col, side });
            }
        }
    }
    for row in 0..rows {
        for col in 0..cols {
            for side in 0..2 {
                for to_row in (0..rows).filter(|&r| r != row) {
                    for to_side in 0..2 {
                        push(
                            SwitchKind::Route,
                            Line::Column { row, col, side },
                            Line::Row { row: to_row, side: to_side },
                        );
                    }
                }
            }
        }
    }
    let index = switches.iter().map(|s| ((s.from, s.to), s.id)).collect();
    Ok(ArrayTopology {
        rows,
        cols,
        variant,
        lines_per_row: 2,
        lines_per_column: 2,
        threshold_blocks: rows * cols,
        switches,
        index,
    })
}

impl ArrayTopology {
    pub fn cell_count(&self) -> usize {
        self.rows * self.cols
    }

    pub fn row_line_count(&self) -> usize {
        self.rows * self.lines_per_row
    }

    pub fn column_line_count(&self) -> usize {
        self.cell_count() * self.lines_per_column
    }

    pub fn input_switch(&self, row: usize, side: usize) -> Option<usize> {
        self.index.get(&(Line::Input { row, side }, Line::Row { row, side })).copied()
    }

    pub fn cell_out_switch(&self, row: usize, col: usize, side: usize) -> Option<usize> {
        let c = Line::Column { row, col, side };
        self.index.get(&(c, c)).copied()
    }

    pub fn route_switch(&self, row: usize, col: usize, side: usize, to_row: usize, to_side: usize) -> Option<usize> {
        self.index.get(&(Line::Column { row, col, side }, Line::Row { row: to_row, side: to_side })).copied()
    }

    fn check_cell(&self, row: usize, col: usize) -> Result<(), ArrayError> {
        if row < self.rows && col < self.cols {
            Ok(())
        } else {
            Err(ArrayError::InvalidInput(format!("cell ({row},{col}) outside {}x{}", self.rows, self.cols)))
        }
    }
}

/// Closed switches; every other switch is open.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RoutingState {
    closed: BTreeSet<usize>,
}

impl RoutingState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn close(&mut self, topology: &ArrayTopology, id: usize) -> Result<(), ArrayError> {
        if id >= topology.switches.len() {
            return Err(ArrayError::UnknownSwitch(id));
        }
        self.closed.insert(id);
        Ok(())
    }

    pub fn open(&mut self, id: usize) {
        self.closed.remove(&id);
    }

    pub fn is_closed(&self, id: usize) -> bool {
        self.closed.contains(&id)
    }

    pub fn closed(&self) -> impl Iterator<Item = usize> + '_ {
        self.closed.iter().copied()
    }
}

/// Two cascaded inverters: restores `v` to `v_dd` at or above the block
/// threshold and to 0 below it.
pub fn threshold_block(v: f64, cal: &CalibratedParams, v_dd: f64) -> f64 {
    let first = inverter_eval(v, &InverterParams { v_threshold: cal.v_th_block, v_dd });
    inverter_eval(first, &InverterParams { v_threshold: 0.5 * v_dd, v_dd })
}

/// Per-cell electrical setting, keyed by (row, col). Cells not present are unused.
pub type ArrayCells = BTreeMap<(usize, usize), CellBias>;

pub fn cells_from_configs<'a>(
    configs: impl IntoIterator<Item = (&'a (usize, usize), &'a CellConfig)>,
    devices: &DeviceSet,
) -> ArrayCells {
    configs.into_iter().map(|(&k, c)| (k, c.bias(&devices.memristor))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LineValue {
    pub pre: f64,
    pub post: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArrayEval {
    pub cells: BTreeMap<(usize, usize), CellReadout>,
    /// Values seen by cell inputs on every driven row line.
    pub row_lines: BTreeMap<(usize, usize), LineValue>,
    /// Output columns with a closed output switch, keyed by (row, col, side).
    pub columns: BTreeMap<(usize, usize, usize), LineValue>,
    /// Worst comparator margin over all evaluated cells.
    pub noise_margin: f64,
}

impl ArrayEval {
    pub fn output(&self, row: usize, col: usize, side: usize) -> Option<f64> {
        self.columns.get(&(row, col, side)).map(|v| v.post)
    }
}

enum Driver {
    Pin,
    Cell { row: usize, col: usize },
}

/// Evaluates the array for one set of row inputs.
///
/// `inputs` gives the (side A, side B) pin voltages of rows whose input
/// switches are closed. Rows are evaluated in dependency order of the routing.
pub fn array_eval(
    topology: &ArrayTopology,
    routing: &RoutingState,
    cells: &ArrayCells,
    inputs: &BTreeMap<usize, (f64, f64)>,
    cal: &CalibratedParams,
    devices: &DeviceSet,
) -> Result<ArrayEval, ArrayError> {
    let plan = plan(topology, routing, cells)?;
    evaluate(&plan, topology, cells, inputs, cal, devices)
}

/// Validated routing: drivers of every row line and the row evaluation order.
pub struct EvalPlan {
    drivers: BTreeMap<(usize, usize), Driver>,
    order: Vec<usize>,
    outputs: Vec<(usize, usize, usize)>,
}

pub fn plan(topology: &ArrayTopology, routing: &RoutingState, cells: &ArrayCells) -> Result<EvalPlan, ArrayError> {
    for (&(r, c), bias) in cells {
        topology.check_cell(r, c)?;
        if bias.variant != topology.variant {
            return Err(ArrayError::InvalidInput(format!(
                "cell ({r},{c}) is {} in a {} array",
                bias.variant, topology.variant
            )));
        }
    }

    let mut driven_by: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    let mut outputs = Vec::new();
    let mut column_open = BTreeSet::new();
    for id in routing.closed() {
        let sw = topology.switches.get(id).ok_or(ArrayError::UnknownSwitch(id))?;
        match (sw.kind, sw.to) {
            (SwitchKind::CellOut, Line::Column { row, col, side }) => {
                if !cells.contains_key(&(row, col)) {
                    return Err(ArrayError::InvalidInput(format!("output switch {sw} closed on unused cell")));
                }
                outputs.push((row, col, side));
                column_open.insert((row, col, side));
            }
            (_, Line::Row { row, side }) => driven_by.entry((row, side)).or_default().push(id),
            _ => unreachable!("switch table only targets rows and columns"),
        }
    }

    let mut drivers = BTreeMap::new();
    for (&(row, side), ids) in &driven_by {
        if ids.len() > 1 {
            let names: Vec<String> = ids.iter().map(|&i| topology.switches[i].to_string()).collect();
            return Err(ArrayError::Contention { line: Line::Row { row, side }, drivers: names.join(", ") });
        }
        let sw = &topology.switches[ids[0]];
        let driver = match sw.from {
            Line::Input { .. } => Driver::Pin,
            Line::Column { row: r, col: c, side: s } => {
                if !column_open.contains(&(r, c, s)) {
                    // a column with its output switch open carries nothing
                    continue;
                }
                Driver::Cell { row: r, col: c }
            }
            Line::Row { .. } => unreachable!("rows are never switch sources"),
        };
        drivers.insert((row, side), driver);
    }

    for &(row, col) in cells.keys() {
        for side in 0..2 {
            if !drivers.contains_key(&(row, side)) {
                return Err(ArrayError::Undriven { line: Line::Row { row, side }, row, col });
            }
        }
    }

    // Kahn over rows: an edge r -> r' whenever a cell in r drives a line of r'.
    let n = topology.rows;
    let mut succ: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for (&(row, _), d) in &drivers {
        if let Driver::Cell { row: from, .. } = *d {
            succ[from].insert(row);
        }
    }
    let mut indeg = vec![0usize; n];
    for s in &succ {
        for &t in s {
            indeg[t] += 1;
        }
    }
    let mut ready: Vec<usize> = (0..n).filter(|&r| indeg[r] == 0).rev().collect();
    let mut order = Vec::with_capacity(n);
    while let Some(r) = ready.pop() {
        order.push(r);
        for &t in succ[r].iter().rev() {
            indeg[t] -= 1;
            if indeg[t] == 0 {
                ready.push(t);
            }
        }
    }
    if order.len() < n {
        let stuck: BTreeSet<usize> = (0..n).filter(|&r| indeg[r] > 0).collect();
        return Err(ArrayError::Cycle(describe_cycle(&succ, &stuck, &drivers)));
    }
    outputs.sort_unstable();
    Ok(EvalPlan { drivers, order, outputs })
}

/// Walks forward inside the unresolved rows until a row repeats.
fn describe_cycle(
    succ: &[BTreeSet<usize>],
    stuck: &BTreeSet<usize>,
    drivers: &BTreeMap<(usize, usize), Driver>,
) -> String {
    let start = *stuck.iter().next().expect("cycle has members");
    let mut path = vec![start];
    loop {
        let cur = *path.last().expect("non-empty");
        let next = succ[cur].iter().copied().find(|t| stuck.contains(t)).expect("stuck rows keep a stuck successor");
        if let Some(pos) = path.iter().position(|&r| r == next) {
            let lp = &path[pos..];
            let hops: Vec<String> = lp
                .iter()
                .zip(lp.iter().skip(1).chain(std::iter::once(&next)))
                .map(|(&from, &to)| {
                    let cell = drivers
                        .iter()
                        .find_map(|(&(r, _), d)| match *d {
                            Driver::Cell { row, col } if row == from && r == to => Some(col),
                            _ => None,
                        })
                        .expect("edge has a driver");
                    format!("cell ({from},{cell}) -> row {to}")
                })
                .collect();
            return hops.join(", ");
        }
        path.push(next);
    }
}

fn evaluate(
    plan: &EvalPlan,
    topology: &ArrayTopology,
    cells: &ArrayCells,
    inputs: &BTreeMap<usize, (f64, f64)>,
    cal: &CalibratedParams,
    devices: &DeviceSet,
) -> Result<ArrayEval, ArrayError> {
    let read = ReadSwitches::from_devices(devices);
    let sw = &devices.switch;
    let mut out = ArrayEval {
        cells: BTreeMap::new(),
        row_lines: BTreeMap::new(),
        columns: BTreeMap::new(),
        noise_margin: f64::INFINITY,
    };
    // the cell's own output before and after its output switch
    let cell_column = |readout: &CellReadout| switch_pass(readout.out, devices.route_gate, sw).v_effective;

    for &row in &plan.order {
        for side in 0..2 {
            let Some(driver) = plan.drivers.get(&(row, side)) else { continue };
            let value = match *driver {
                Driver::Pin => {
                    let (a, b) = inputs
                        .get(&row)
                        .ok_or_else(|| ArrayError::InvalidInput(format!("no input voltages for row {row}")))?;
                    let pin = if side == 0 { *a } else { *b };
                    // pins are switched with the programming-level gate, so a logic level passes whole
                    let v = switch_pass(pin, devices.v_sc, sw).v_effective;
                    LineValue { pre: v, post: v }
                }
                Driver::Cell { row: r, col: c } => {
                    let readout = out.cells.get(&(r, c)).expect("producer rows evaluate first");
                    let pre = switch_pass(cell_column(readout), devices.route_gate, sw).v_effective;
                    LineValue { pre, post: threshold_block(pre, cal, devices.v_dd) }
                }
            };
            out.row_lines.insert((row, side), value);
        }
        for col in 0..topology.cols {
            let Some(bias) = cells.get(&(row, col)) else { continue };
            let a = out.row_lines[&(row, 0)].post;
            let b = out.row_lines[&(row, 1)].post;
            let readout = read_bias(bias, a, b, Some(cal), devices, Some(&read))
                .map_err(|source| ArrayError::Cell { row, col, source })?;
            out.noise_margin = out.noise_margin.min(readout.margin);
            out.cells.insert((row, col), readout);
        }
    }
    for &(row, col, side) in &plan.outputs {
        let pre = cell_column(&out.cells[&(row, col)]);
        out.columns.insert((row, col, side), LineValue { pre, post: threshold_block(pre, cal, devices.v_dd) });
    }
    Ok(out)
}

/// Evaluates a sequence of input vectors, one per `dt`, into a waveform with
/// pre- and post-threshold channels for every output column.
pub fn eval_waveform(
    topology: &ArrayTopology,
    routing: &RoutingState,
    cells: &ArrayCells,
    vectors: &[BTreeMap<usize, (f64, f64)>],
    cal: &CalibratedParams,
    devices: &DeviceSet,
    dt: f64,
) -> Result<Waveform, ArrayError> {
    let plan = plan(topology, routing, cells)?;
    let names =
        plan.outputs.iter().flat_map(|&(r, c, s)| [format!("pre(col{r}.{c}.{s})"), format!("post(col{r}.{c}.{s})")]);
    let mut wf = Waveform::new(dt, 0.0, names);
    for inputs in vectors {
        let e = evaluate(&plan, topology, cells, inputs, cal, devices)?;
        for (i, key) in plan.outputs.iter().enumerate() {
            let v = e.columns[key];
            wf.channels[2 * i].1.push(v.pre);
            wf.channels[2 * i + 1].1.push(v.post);
        }
    }
    Ok(wf)
}

/// Text dump: geometry, per-cell settings and closed switches.
pub fn dump(topology: &ArrayTopology, routing: &RoutingState, cells: &ArrayCells, devices: &DeviceSet) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "array {}x{} variant={} row_lines={} column_lines={} threshold_blocks={} switches={}",
        topology.rows,
        topology.cols,
        topology.variant,
        topology.row_line_count(),
        topology.column_line_count(),
        topology.threshold_blocks,
        topology.switches.len()
    );
    for (&(r, c), bias) in cells {
        let label = CellConfig::from_programmed(
            bias.variant,
            level_state(bias.rc1, devices),
            level_state(bias.rc2, devices),
            bias.vc,
        )
        .map_or_else(|| "custom".to_owned(), |cfg| format!("{} {cfg}", cfg.gate));
        let _ = writeln!(s, "cell ({r},{c}) {label} rc1={:.1} rc2={:.1} vc={}", bias.rc1, bias.rc2, bias.vc);
    }
    for id in routing.closed() {
        let _ = writeln!(s, "closed {}", topology.switches[id]);
    }
    s
}

fn level_state(ohms: f64, devices: &DeviceSet) -> crate::devices::MemristorState {
    let p = &devices.memristor;
    let x = ((p.r_off - ohms) / (p.r_off - p.r_on)).clamp(0.0, 1.0);
    crate::devices::MemristorState::new(x).expect("clamped")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell::{calibrate, configure, GateKind, SearchSpace};
    use proptest::prelude::*;

    fn cal(d: &DeviceSet) -> CalibratedParams {
        calibrate(&SearchSpace::for_devices(&d.memristor), d).unwrap()
    }

    #[test]
    fn geometry() {
        let t = build_array(3, 4, Variant::Full).unwrap();
        assert_eq!((t.cell_count(), t.row_line_count(), t.threshold_blocks), (12, 6, 12));
        assert_eq!(t.column_line_count(), 24);
        let t = build_array(1, 1, Variant::Full).unwrap();
        assert_eq!((t.cell_count(), t.row_line_count()), (1, 2));
        assert!(t.switches.iter().all(|s| s.kind != SwitchKind::Route));
        assert!(matches!(build_array(0, 4, Variant::Full), Err(ArrayError::InvalidInput(_))));
    }

    #[test]
    fn switch_ids_unique_and_inputs_stay_in_row() {
        let t = build_array(3, 4, Variant::Full).unwrap();
        let ids: BTreeSet<usize> = t.switches.iter().map(|s| s.id).collect();
        assert_eq!(ids.len(), t.switches.len());
        for s in &t.switches {
            if let (Line::Column { row, .. }, Line::Row { row: to, .. }) = (s.from, s.to) {
                assert_ne!(row, to);
            }
        }
    }

    #[test]
    fn block_levels() {
        let d = DeviceSet::default();
        let c = cal(&d);
        assert_eq!(threshold_block(0.35, &c, 1.0), 0.0);
        assert_eq!(threshold_block(0.45, &c, 1.0), 1.0);
        assert_eq!(threshold_block(0.0, &c, 1.0), 0.0);
    }

    proptest! {
        #[test]
        fn block_is_idempotent_rail(v in -0.5f64..1.5) {
            let c = CalibratedParams { v_th1: 0.6, v_th2: 0.6, g_x: 1e-4, v_th_block: 0.4, noise_margin: 0.1 };
            let once = threshold_block(v, &c, 1.0);
            prop_assert!(once == 0.0 || once == 1.0);
            prop_assert_eq!(threshold_block(once, &c, 1.0), once);
        }
    }

    fn nand_everywhere(t: &ArrayTopology, d: &DeviceSet) -> (RoutingState, ArrayCells) {
        let mut r = RoutingState::new();
        let mut cells = ArrayCells::new();
        for row in 0..t.rows {
            r.close(t, t.input_switch(row, 0).unwrap()).unwrap();
            r.close(t, t.input_switch(row, 1).unwrap()).unwrap();
            for col in 0..t.cols {
                cells.insert((row, col), configure(GateKind::Nand, Variant::Full).bias(&d.memristor));
                r.close(t, t.cell_out_switch(row, col, 1).unwrap()).unwrap();
            }
        }
        (r, cells)
    }

    #[test]
    fn all_nand_with_high_inputs_reads_zero() {
        let d = DeviceSet::default();
        let t = build_array(3, 4, Variant::Full).unwrap();
        let (r, cells) = nand_everywhere(&t, &d);
        let inputs = (0..3).map(|row| (row, (1.0, 1.0))).collect();
        let e = array_eval(&t, &r, &cells, &inputs, &cal(&d), &d).unwrap();
        assert_eq!(e.columns.len(), 12);
        for v in e.columns.values() {
            assert_eq!((v.pre, v.post), (0.0, 0.0));
        }
    }

    #[test]
    fn routed_high_degrades_then_restores() {
        let d = DeviceSet::default();
        let c = cal(&d);
        let t = build_array(2, 1, Variant::Full).unwrap();
        let mut r = RoutingState::new();
        r.close(&t, t.input_switch(0, 0).unwrap()).unwrap();
        r.close(&t, t.input_switch(0, 1).unwrap()).unwrap();
        r.close(&t, t.cell_out_switch(0, 0, 0).unwrap()).unwrap();
        r.close(&t, t.route_switch(0, 0, 0, 1, 0).unwrap()).unwrap();
        r.close(&t, t.input_switch(1, 1).unwrap()).unwrap();
        let mut cells = ArrayCells::new();
        cells.insert((0, 0), configure(GateKind::Nand, Variant::Full).bias(&d.memristor));
        cells.insert((1, 0), configure(GateKind::Nor, Variant::Full).bias(&d.memristor));
        let inputs = [(0, (0.0, 0.0)), (1, (0.0, 0.0))].into_iter().collect();
        let e = array_eval(&t, &r, &cells, &inputs, &c, &d).unwrap();
        let line = e.row_lines[&(1, 0)];
        // gate 1 V minus the 0.4 V drop
        assert!((line.pre - 0.6).abs() < 1e-12);
        assert_eq!(line.post, 1.0);
        assert_eq!(e.cells[&(1, 0)].out, 0.0);
    }

    #[test]
    fn ideal_switches_pass_rails() {
        let d = DeviceSet::default().with_ideal_switches();
        let t = build_array(1, 1, Variant::Full).unwrap();
        let mut r = RoutingState::new();
        for id in [t.input_switch(0, 0), t.input_switch(0, 1), t.cell_out_switch(0, 0, 1)] {
            r.close(&t, id.unwrap()).unwrap();
        }
        let cells: ArrayCells =
            [((0, 0), configure(GateKind::Nor, Variant::Full).bias(&d.memristor))].into_iter().collect();
        let inputs = [(0, (0.0, 0.0))].into_iter().collect();
        let e = array_eval(&t, &r, &cells, &inputs, &cal(&d), &d).unwrap();
        assert_eq!(e.columns[&(0, 0, 1)], LineValue { pre: 1.0, post: 1.0 });
    }

    #[test]
    fn contention_and_undriven() {
        let d = DeviceSet::default();
        let t = build_array(3, 1, Variant::Full).unwrap();
        let (mut r, cells) = nand_everywhere(&t, &d);
        r.close(&t, t.cell_out_switch(0, 0, 0).unwrap()).unwrap();
        r.close(&t, t.route_switch(0, 0, 0, 2, 1).unwrap()).unwrap();
        let inputs = (0..3).map(|row| (row, (1.0, 1.0))).collect();
        assert!(matches!(
            array_eval(&t, &r, &cells, &inputs, &cal(&d), &d),
            Err(ArrayError::Contention { line: Line::Row { row: 2, side: 1 }, .. })
        ));
        r.open(t.route_switch(0, 0, 0, 2, 1).unwrap());
        r.open(t.input_switch(1, 0).unwrap());
        assert!(matches!(array_eval(&t, &r, &cells, &inputs, &cal(&d), &d), Err(ArrayError::Undriven { row: 1, .. })));
    }

    #[test]
    fn cycle_is_listed() {
        let d = DeviceSet::default();
        let t = build_array(2, 1, Variant::Full).unwrap();
        let mut r = RoutingState::new();
        for (row, to) in [(0, 1), (1, 0)] {
            r.close(&t, t.cell_out_switch(row, 0, 0).unwrap()).unwrap();
            r.close(&t, t.route_switch(row, 0, 0, to, 0).unwrap()).unwrap();
            r.close(&t, t.input_switch(row, 1).unwrap()).unwrap();
        }
        let cells: ArrayCells =
            (0..2).map(|row| ((row, 0), configure(GateKind::Nand, Variant::Full).bias(&d.memristor))).collect();
        let inputs = [(0, (0.0, 1.0)), (1, (0.0, 1.0))].into_iter().collect();
        match array_eval(&t, &r, &cells, &inputs, &cal(&d), &d) {
            Err(ArrayError::Cycle(msg)) => assert_eq!(msg, "cell (0,0) -> row 1, cell (1,0) -> row 0"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_switch_is_rejected() {
        let t = build_array(1, 1, Variant::Full).unwrap();
        assert_eq!(RoutingState::new().close(&t, 999), Err(ArrayError::UnknownSwitch(999)));
    }

    #[test]
    fn dump_lists_cells_and_switches() {
        let d = DeviceSet::default();
        let t = build_array(1, 1, Variant::Full).unwrap();
        let (r, cells) = nand_everywhere(&t, &d);
        let text = dump(&t, &r, &cells, &d);
        assert!(text.starts_with("array 1x1 variant=full"));
        assert!(text.contains("cell (0,0) NAND rc1=r_on rc2=r_off vc=0.8"));
        assert!(text.contains("closed #0 in0A->row0A"));
    }

    #[test]
    fn waveform_channels() {
        let d = DeviceSet::default();
        let t = build_array(1, 1, Variant::Full).unwrap();
        let (r, cells) = nand_everywhere(&t, &d);
        let vectors: Vec<_> = [(0.0, 0.0), (1.0, 1.0)].iter().map(|&v| [(0, v)].into_iter().collect()).collect();
        let wf = eval_waveform(&t, &r, &cells, &vectors, &cal(&d), &d, 1e-6).unwrap();
        assert_eq!(wf.channel("post(col0.0.1)").unwrap(), &[1.0, 0.0]);
        assert_eq!(wf.channel("pre(col0.0.1)").unwrap()[0], 0.6);
    }
}
