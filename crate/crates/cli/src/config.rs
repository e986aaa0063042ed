//! `key = value` run configuration with unit-suffixed quantities.

use std::path::{Path, PathBuf};

use thiserror::Error;
use tlg::cell::{SearchSpace, Variant};
use tlg::devices::{DeviceSet, WindowKind};
use tlg::metrics::{PowerMode, UnitCosts};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unit {
    Volt,
    Second,
    Ohm,
    Siemens,
    None,
}

impl Unit {
    fn symbols(self) -> &'static [&'static str] {
        match self {
            Unit::Volt => &["V"],
            Unit::Second => &["s"],
            Unit::Ohm => &["ohm", "Ohm", "Ω"],
            Unit::Siemens => &["S"],
            Unit::None => &[],
        }
    }
}

/// Parses a number with an optional SI prefix and an optional unit symbol,
/// e.g. `3k`, `60kohm`, `10us`, `0.8V`, `50uS`, `1.25e5`.
pub fn parse_quantity(text: &str, unit: Unit) -> Result<f64, String> {
    let t = text.trim();
    let bytes = t.as_bytes();
    let mut end = 0;
    if end < bytes.len() && (bytes[end] == b'+' || bytes[end] == b'-') {
        end += 1;
    }
    while end < bytes.len() && (bytes[end].is_ascii_digit() || bytes[end] == b'.') {
        end += 1;
    }
    // exponent only if digits follow, so `1e` never eats a unit
    if end < bytes.len() && (bytes[end] == b'e' || bytes[end] == b'E') {
        let mut k = end + 1;
        if k < bytes.len() && (bytes[k] == b'+' || bytes[k] == b'-') {
            k += 1;
        }
        if k < bytes.len() && bytes[k].is_ascii_digit() {
            while k < bytes.len() && bytes[k].is_ascii_digit() {
                k += 1;
            }
            end = k;
        }
    }
    let value: f64 = t[..end].parse().map_err(|_| format!("`{text}` is not a number"))?;
    let mut rest = t[end..].trim_start();
    if let Some(sym) = unit.symbols().iter().find(|s| rest.ends_with(*s)) {
        rest = &rest[..rest.len() - sym.len()];
    }
    let scale = match rest {
        "" => 1.0,
        "f" => 1e-15,
        "p" => 1e-12,
        "n" => 1e-9,
        "u" | "µ" => 1e-6,
        "m" => 1e-3,
        "k" => 1e3,
        "M" => 1e6,
        "G" => 1e9,
        other => return Err(format!("`{text}`: unknown suffix `{other}`")),
    };
    let v = value * scale;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{text}` is not finite"))
    }
}

fn parse_bool(text: &str) -> Result<bool, String> {
    match text.trim() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        other => Err(format!("`{other}` is not a boolean")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ManualCalibration {
    pub v_th1: Option<f64>,
    pub v_th2: Option<f64>,
    pub g_x: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub devices: DeviceSet,
    pub ideal_switches: bool,
    pub manual: ManualCalibration,
    pub calibration_file: Option<PathBuf>,
    pub search: Option<SearchSpace>,
    pub rows: usize,
    pub cols: usize,
    pub variant: Variant,
    /// Step for read transients and waveform sampling (s).
    pub dt: f64,
    /// Write pulse length; `None` uses twice the minimum.
    pub pulse: Option<f64>,
    pub out_dir: PathBuf,
    pub power_mode: PowerMode,
    pub costs: UnitCosts,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            devices: DeviceSet::default(),
            ideal_switches: false,
            manual: ManualCalibration::default(),
            calibration_file: None,
            search: None,
            rows: 3,
            cols: 4,
            variant: Variant::Full,
            dt: 10e-9,
            pulse: None,
            out_dir: PathBuf::from("out"),
            power_mode: PowerMode::PerConfig,
            costs: UnitCosts::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        let mut search = SearchSpace::for_devices(&cfg.devices.memristor);
        let mut search_set = false;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (key, value) = body
                .split_once('=')
                .ok_or_else(|| ConfigError::Line { line, message: format!("expected `key = value`, got `{body}`") })?;
            let (key, value) = (key.trim(), value.trim());
            let err = |message: String| ConfigError::Line { line, message: format!("{key}: {message}") };
            let q = |unit| parse_quantity(value, unit).map_err(err);
            let d = &mut cfg.devices;
            match key {
                "r_on" => d.memristor.r_on = q(Unit::Ohm)?,
                "r_off" => d.memristor.r_off = q(Unit::Ohm)?,
                "v_write_threshold" => d.memristor.v_write_threshold = q(Unit::Volt)?,
                "rate_k" => d.memristor.rate_k = q(Unit::None)?,
                "window" => {
                    d.memristor.window = match value {
                        "rectangular" => WindowKind::RectangularClip,
                        "parabolic" => WindowKind::Parabolic,
                        other => return Err(err(format!("unknown window `{other}`"))),
                    }
                }
                "switch_r_on" => d.switch.r_on_series = q(Unit::Ohm)?,
                "switch_r_off" => d.switch.r_off_series = q(Unit::Ohm)?,
                "switch_v_tn" => d.switch.v_tn = q(Unit::Volt)?,
                "switch_gate_on" => d.switch.gate_on_voltage = q(Unit::Volt)?,
                "v_dd" => d.v_dd = q(Unit::Volt)?,
                "v_sc" => d.v_sc = q(Unit::Volt)?,
                "read_gate_rc1" => d.read_gate_rc1 = q(Unit::Volt)?,
                "read_gate_rc2" => d.read_gate_rc2 = q(Unit::Volt)?,
                "route_gate" => d.route_gate = q(Unit::Volt)?,
                "v_th_block" => d.v_th_block = q(Unit::Volt)?,
                "ideal_switches" => cfg.ideal_switches = parse_bool(value).map_err(err)?,
                "v_th1" => cfg.manual.v_th1 = Some(q(Unit::Volt)?),
                "v_th2" => cfg.manual.v_th2 = Some(q(Unit::Volt)?),
                "g_x" => cfg.manual.g_x = Some(q(Unit::Siemens)?),
                "calibration" => cfg.calibration_file = Some(PathBuf::from(value)),
                "search_v_th1_min" => (search.v_th1.0, search_set) = (q(Unit::Volt)?, true),
                "search_v_th1_max" => (search.v_th1.1, search_set) = (q(Unit::Volt)?, true),
                "search_v_th2_min" => (search.v_th2.0, search_set) = (q(Unit::Volt)?, true),
                "search_v_th2_max" => (search.v_th2.1, search_set) = (q(Unit::Volt)?, true),
                "search_g_x_min" => (search.g_x.0, search_set) = (q(Unit::Siemens)?, true),
                "search_g_x_max" => (search.g_x.1, search_set) = (q(Unit::Siemens)?, true),
                "rows" => cfg.rows = value.parse().map_err(|_| err(format!("`{value}` is not a count")))?,
                "cols" => cfg.cols = value.parse().map_err(|_| err(format!("`{value}` is not a count")))?,
                "variant" => cfg.variant = value.parse().map_err(|e: tlg::cell::CellError| err(e.to_string()))?,
                "dt" => cfg.dt = q(Unit::Second)?,
                "pulse" => cfg.pulse = Some(q(Unit::Second)?),
                "out_dir" => cfg.out_dir = PathBuf::from(value),
                "power_mode" => cfg.power_mode = value.parse().map_err(|_| err(format!("unknown mode `{value}`")))?,
                k if k.starts_with("cost.") => cfg.costs.set(&k[5..], value).map_err(|e| err(e.to_string()))?,
                _ => return Err(ConfigError::Line { line, message: format!("unknown key `{key}`") }),
            }
        }
        if search_set {
            cfg.search = Some(search);
        }
        Ok(cfg)
    }

    /// Device set with the switch toggle applied, validated.
    pub fn effective_devices(&self) -> Result<DeviceSet, ConfigError> {
        let d = if self.ideal_switches { self.devices.with_ideal_switches() } else { self.devices };
        d.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.dt.is_nan() || self.dt <= 0.0 {
            return Err(ConfigError::Invalid("dt must be > 0".into()));
        }
        if let Some(p) = self.pulse {
            if p.is_nan() || p <= 0.0 {
                return Err(ConfigError::Invalid("pulse must be > 0".into()));
            }
        }
        Ok(d)
    }

    pub fn search_space(&self, devices: &DeviceSet) -> SearchSpace {
        self.search.unwrap_or_else(|| SearchSpace::for_devices(&devices.memristor))
    }
}
