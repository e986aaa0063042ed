//! Area and power accounting from per-component unit costs.
//!
//! Everything is held in integer nm² and nW so report totals are exact sums
//! of their line items.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::array::ArrayTopology;
use crate::cell::{CellConfig, GateKind, Variant};

/// nm² per µm².
pub const NM2_PER_UM2: i64 = 1_000_000;
/// nW per µW.
pub const NW_PER_UW: i64 = 1_000;

/// Published totals for the 3×4 array, for comparison only.
pub const REFERENCE_ARRAY_AREA_NM2: i64 = 1_462_672_800;
pub const REFERENCE_ARRAY_POWER_NW: i64 = 425_360;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ComponentKind {
    /// Cell core without programming switches.
    ModifiedCell,
    /// Full cell including its programming circuit.
    ProgrammableCell,
    ReducedCell,
    ThresholdBlock,
    Switch,
}

impl ComponentKind {
    pub const ALL: [ComponentKind; 5] =
        [Self::ModifiedCell, Self::ProgrammableCell, Self::ReducedCell, Self::ThresholdBlock, Self::Switch];

    pub fn name(self) -> &'static str {
        match self {
            Self::ModifiedCell => "modified_cell",
            Self::ProgrammableCell => "programmable_cell",
            Self::ReducedCell => "reduced_cell",
            Self::ThresholdBlock => "threshold_block",
            Self::Switch => "switch",
        }
    }

    /// The kind that accounts for one array cell of a variant.
    pub fn for_variant(variant: Variant) -> Self {
        match variant {
            Variant::Full => Self::ProgrammableCell,
            Variant::Reduced => Self::ReducedCell,
        }
    }
}

impl fmt::Display for ComponentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ComponentKind {
    type Err = MetricsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| MetricsError::UnknownComponent(s.to_owned()))
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("unknown component kind `{0}`")]
    UnknownComponent(String),
    #[error("cell {0} has no configuration")]
    Unconfigured(usize),
    #[error("{kind} has no power figure for {gate}")]
    MissingPower { kind: ComponentKind, gate: GateKind },
    #[error("invalid cost value `{0}`")]
    InvalidValue(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnitCost {
    pub area_nm2: i64,
    /// Maximum power per configured gate; absent for passive components.
    pub power_nw: BTreeMap<GateKind, i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnitCosts {
    pub units: BTreeMap<ComponentKind, UnitCost>,
    /// Added once to every power report.
    pub overhead_power_nw: i64,
}

fn cost(area_nm2: i64, nor: i64, nand: i64, xnor: i64) -> UnitCost {
    UnitCost {
        area_nm2,
        power_nw: [(GateKind::Nor, nor), (GateKind::Nand, nand), (GateKind::Xnor, xnor)].into_iter().collect(),
    }
}

impl Default for UnitCosts {
    fn default() -> Self {
        let units = [
            (ComponentKind::ModifiedCell, cost(7_863_000, 21_400, 21_400, 30_800)),
            (ComponentKind::ProgrammableCell, cost(69_466_200, 20_560, 20_480, 43_440)),
            (ComponentKind::ReducedCell, cost(28_428_100, 15_720, 10_420, 28_600)),
            (ComponentKind::ThresholdBlock, UnitCost { area_nm2: 7_977_600, power_nw: BTreeMap::new() }),
            (ComponentKind::Switch, UnitCost { area_nm2: 3_729_600, power_nw: BTreeMap::new() }),
        ]
        .into_iter()
        .collect();
        Self { units, overhead_power_nw: 0 }
    }
}

impl UnitCosts {
    pub fn unit(&self, kind: ComponentKind) -> &UnitCost {
        &self.units[&kind]
    }

    /// Overrides one value from a `kind.area` / `kind.power.GATE` / `overhead_power` key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), MetricsError> {
        if key == "overhead_power" {
            self.overhead_power_nw = parse_fixed(value, 3)?;
            return Ok(());
        }
        let (kind, field) = key.split_once('.').ok_or_else(|| MetricsError::UnknownComponent(key.to_owned()))?;
        let kind: ComponentKind = kind.parse()?;
        let unit = self.units.get_mut(&kind).expect("all kinds present");
        match field.split_once('.') {
            None if field == "area" => unit.area_nm2 = positive(parse_fixed(value, 6)?, value)?,
            Some(("power", gate)) => {
                let gate: GateKind = gate.parse().map_err(|_| MetricsError::InvalidValue(key.to_owned()))?;
                unit.power_nw.insert(gate, positive(parse_fixed(value, 3)?, value)?);
            }
            _ => return Err(MetricsError::InvalidValue(key.to_owned())),
        }
        Ok(())
    }
}

fn positive(v: i64, text: &str) -> Result<i64, MetricsError> {
    if v > 0 {
        Ok(v)
    } else {
        Err(MetricsError::InvalidValue(text.to_owned()))
    }
}

/// Parses a non-negative decimal into an integer scaled by `10^places`,
/// exactly. `parse_fixed("69.4662", 6) == 69_466_200`.
pub fn parse_fixed(text: &str, places: u32) -> Result<i64, MetricsError> {
    let bad = || MetricsError::InvalidValue(text.to_owned());
    let (int, frac) = text.trim().split_once('.').unwrap_or((text.trim(), ""));
    if int.is_empty() && frac.is_empty() {
        return Err(bad());
    }
    if frac.len() > places as usize || !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let int: i64 = if int.is_empty() { 0 } else { int.parse().map_err(|_| bad())? };
    let frac_val: i64 = if frac.is_empty() { 0 } else { frac.parse().map_err(|_| bad())? };
    let scale = 10i64.pow(places);
    let frac_scaled = frac_val * 10i64.pow(places - frac.len() as u32);
    int.checked_mul(scale).and_then(|v| v.checked_add(frac_scaled)).ok_or_else(bad)
}

/// Formats an integer scaled by `10^places` as a trimmed decimal.
pub fn format_fixed(value: i64, places: u32) -> String {
    let scale = 10i64.pow(places);
    let sign = if value < 0 { "-" } else { "" };
    let v = value.unsigned_abs();
    let (int, frac) = (v / scale as u64, v % scale as u64);
    if frac == 0 {
        return format!("{sign}{int}");
    }
    let frac = format!("{frac:0width$}", width = places as usize);
    format!("{sign}{int}.{}", frac.trim_end_matches('0'))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PowerMode {
    /// Every cell charged at its kind's largest per-gate figure.
    WorstCase,
    /// Every cell charged at the figure of its configured gate.
    PerConfig,
}

impl FromStr for PowerMode {
    type Err = MetricsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "worst-case" => Ok(Self::WorstCase),
            "per-config" => Ok(Self::PerConfig),
            _ => Err(MetricsError::InvalidValue(s.to_owned())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LineItem {
    pub kind: ComponentKind,
    pub count: u64,
    pub area_nm2: i64,
    pub power_nw: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Reference {
    pub area_nm2: i64,
    pub power_nw: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CostReport {
    pub items: Vec<LineItem>,
    pub overhead_power_nw: i64,
    pub total_area_nm2: i64,
    pub total_power_nw: i64,
    pub reference: Option<Reference>,
}

impl CostReport {
    fn from_items(items: Vec<LineItem>, overhead_power_nw: i64) -> Self {
        let total_area_nm2 = items.iter().map(|i| i.area_nm2).sum();
        let total_power_nw = items.iter().map(|i| i.power_nw).sum::<i64>() + overhead_power_nw;
        Self { items, overhead_power_nw, total_area_nm2, total_power_nw, reference: None }
    }

    pub fn with_reference(mut self, area_nm2: i64, power_nw: i64) -> Self {
        self.reference = Some(Reference { area_nm2, power_nw });
        self
    }

    pub fn total_area_um2(&self) -> String {
        format_fixed(self.total_area_nm2, 6)
    }

    pub fn total_power_uw(&self) -> String {
        format_fixed(self.total_power_nw, 3)
    }

    /// JSON with exact integer fields and µm² / µW decimal strings.
    pub fn to_json(&self) -> String {
        let items: Vec<serde_json::Value> = self
            .items
            .iter()
            .map(|i| {
                serde_json::json!({
                    "kind": i.kind.name(),
                    "count": i.count,
                    "area_nm2": i.area_nm2,
                    "area_um2": format_fixed(i.area_nm2, 6),
                    "power_nw": i.power_nw,
                    "power_uw": format_fixed(i.power_nw, 3),
                })
            })
            .collect();
        let mut v = serde_json::json!({
            "items": items,
            "overhead_power_nw": self.overhead_power_nw,
            "total_area_nm2": self.total_area_nm2,
            "total_area_um2": self.total_area_um2(),
            "total_power_nw": self.total_power_nw,
            "total_power_uw": self.total_power_uw(),
        });
        if let Some(r) = &self.reference {
            v["reference"] = serde_json::json!({
                "area_um2": format_fixed(r.area_nm2, 6),
                "power_uw": format_fixed(r.power_nw, 3),
                "delta_area_um2": format_fixed(self.total_area_nm2 - r.area_nm2, 6),
                "delta_power_uw": format_fixed(self.total_power_nw - r.power_nw, 3),
            });
        }
        serde_json::to_string_pretty(&v).expect("plain data")
    }
}

impl fmt::Display for CostReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in &self.items {
            writeln!(
                f,
                "{:<18} x{:<4} area {:>12} um2  power {:>9} uW",
                i.kind.name(),
                i.count,
                format_fixed(i.area_nm2, 6),
                format_fixed(i.power_nw, 3)
            )?;
        }
        if self.overhead_power_nw != 0 {
            writeln!(f, "overhead power {} uW", format_fixed(self.overhead_power_nw, 3))?;
        }
        writeln!(f, "total area {} um2, power {} uW", self.total_area_um2(), self.total_power_uw())?;
        if let Some(r) = &self.reference {
            writeln!(
                f,
                "reference area {} um2 (delta {}), power {} uW (delta {})",
                format_fixed(r.area_nm2, 6),
                format_fixed(self.total_area_nm2 - r.area_nm2, 6),
                format_fixed(r.power_nw, 3),
                format_fixed(self.total_power_nw - r.power_nw, 3)
            )?;
        }
        Ok(())
    }
}

/// Component counts of an array: one cell and one threshold block per
/// position, plus every switch in the routing fabric.
pub fn component_counts(topology: &ArrayTopology) -> Vec<(ComponentKind, u64)> {
    vec![
        (ComponentKind::for_variant(topology.variant), topology.cell_count() as u64),
        (ComponentKind::ThresholdBlock, topology.threshold_blocks as u64),
        (ComponentKind::Switch, topology.switches.len() as u64),
    ]
}

pub fn area_report(counts: &[(ComponentKind, u64)], costs: &UnitCosts) -> CostReport {
    let items = counts
        .iter()
        .map(|&(kind, count)| LineItem { kind, count, area_nm2: costs.unit(kind).area_nm2 * count as i64, power_nw: 0 })
        .collect();
    CostReport::from_items(items, 0)
}

fn cell_power(kind: ComponentKind, gate: GateKind, costs: &UnitCosts, mode: PowerMode) -> Result<i64, MetricsError> {
    let table = &costs.unit(kind).power_nw;
    match mode {
        PowerMode::WorstCase => table.values().copied().max(),
        PowerMode::PerConfig => table.get(&gate).copied(),
    }
    .ok_or(MetricsError::MissingPower { kind, gate })
}

/// Power of a set of cells of one kind, each identified by its configured gate.
pub fn power_report(
    kind: ComponentKind,
    gates: &[Option<GateKind>],
    costs: &UnitCosts,
    mode: PowerMode,
) -> Result<CostReport, MetricsError> {
    let mut power = 0;
    for (i, g) in gates.iter().enumerate() {
        let gate = g.ok_or(MetricsError::Unconfigured(i))?;
        power += cell_power(kind, gate, costs, mode)?;
    }
    let item = LineItem { kind, count: gates.len() as u64, area_nm2: 0, power_nw: power };
    Ok(CostReport::from_items(vec![item], costs.overhead_power_nw))
}

/// Area of the whole array plus power of its configured cells.
pub fn design_report(
    topology: &ArrayTopology,
    configs: &BTreeMap<(usize, usize), CellConfig>,
    costs: &UnitCosts,
    mode: PowerMode,
) -> Result<CostReport, MetricsError> {
    let cell_kind = ComponentKind::for_variant(topology.variant);
    let mut items = area_report(&component_counts(topology), costs).items;
    let mut power = 0;
    for c in configs.values() {
        power += cell_power(cell_kind, c.gate, costs, mode)?;
    }
    for item in &mut items {
        if item.kind == cell_kind {
            item.power_nw = power;
        }
    }
    Ok(CostReport::from_items(items, costs.overhead_power_nw))
}
