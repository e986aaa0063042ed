//! Behavioral models for the three physical primitives of the array.
//!
//! * a threshold-type memristor whose normalized state `x` moves only when the
//!   applied voltage exceeds a write threshold,
//! * a single-NMOS pass switch that is either on (small series resistance,
//!   source-follower clamp on passed logic levels) or off (large series
//!   resistance),
//! * a CMOS inverter treated as an ideal comparator.
//!
//! Every function here is pure; simulations own their state explicitly.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Rate constant that makes a 10 µs pulse at 2.0 V complete a full
/// transition with the default 1.2 V write threshold. Reproduced by
/// [`calibrate_rate_k`] in the unit tests.
pub const DEFAULT_RATE_K: f64 = 1.25e5;

/// Effective write voltage used to calibrate `rate_k`.
pub const CALIBRATION_WRITE_VOLTAGE: f64 = 2.0;
/// Pulse length within which a full transition must complete at
/// [`CALIBRATION_WRITE_VOLTAGE`].
pub const CALIBRATION_SWITCH_TIME: f64 = 10e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DeviceError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid device parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WindowKind {
    /// No window; the state is clamped to `[0, 1]` after every step.
    RectangularClip,
    /// Biolek-style window `1 - (x - stp(-v))^2`.
    Parabolic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemristorParams {
    /// Low-resistance state (Ω).
    pub r_on: f64,
    /// High-resistance state (Ω).
    pub r_off: f64,
    /// Magnitude below which the state does not move (V).
    pub v_write_threshold: f64,
    /// State units per volt-second above threshold.
    pub rate_k: f64,
    pub window: WindowKind,
}

impl Default for MemristorParams {
    fn default() -> Self {
        Self {
            r_on: 3e3,
            r_off: 60e3,
            v_write_threshold: 1.2,
            rate_k: DEFAULT_RATE_K,
            window: WindowKind::RectangularClip,
        }
    }
}

impl MemristorParams {
    pub fn validate(&self) -> Result<(), DeviceError> {
        let finite = [self.r_on, self.r_off, self.v_write_threshold, self.rate_k].iter().all(|v| v.is_finite());
        if !finite {
            return Err(DeviceError::InvalidParams("memristor parameters must be finite".into()));
        }
        if !(self.r_on > 0.0 && self.r_on < self.r_off) {
            return Err(DeviceError::InvalidParams(format!(
                "need 0 < r_on < r_off, got r_on={} r_off={}",
                self.r_on, self.r_off
            )));
        }
        if self.v_write_threshold <= 0.0 {
            return Err(DeviceError::InvalidParams("v_write_threshold must be > 0".into()));
        }
        if self.rate_k <= 0.0 {
            return Err(DeviceError::InvalidParams("rate_k must be > 0".into()));
        }
        Ok(())
    }
}

/// Normalized memristor state: `x = 1` is fully on (`r_on`), `x = 0` fully off.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct MemristorState(f64);

impl MemristorState {
    pub const ON: Self = Self(1.0);
    pub const OFF: Self = Self(0.0);

    pub fn new(x: f64) -> Result<Self, DeviceError> {
        if (0.0..=1.0).contains(&x) {
            Ok(Self(x))
        } else {
            Err(DeviceError::InvalidInput(format!("state {x} outside [0, 1]")))
        }
    }

    pub fn x(self) -> f64 {
        self.0
    }

    /// Logic reading of the state: on when closer to `r_on`.
    pub fn is_on(self) -> bool {
        self.0 >= 0.5
    }
}

pub fn memristor_resistance(state: MemristorState, params: &MemristorParams) -> f64 {
    let x = state.x();
    params.r_on * x + params.r_off * (1.0 - x)
}

fn window(x: f64, v: f64, kind: WindowKind) -> f64 {
    match kind {
        WindowKind::RectangularClip => 1.0,
        WindowKind::Parabolic => {
            let stp = if v < 0.0 { 1.0 } else { 0.0 };
            1.0 - (x - stp).powi(2)
        }
    }
}

/// Right-hand side of the state equation, `dx/dt`.
pub fn state_derivative(x: f64, v: f64, params: &MemristorParams) -> f64 {
    let over = v.abs() - params.v_write_threshold;
    if over <= 0.0 {
        return 0.0;
    }
    v.signum() * params.rate_k * over * window(x, v, params.window)
}

/// One explicit Euler step of the threshold-type state equation.
///
/// Below the write threshold the state is returned untouched, so reads never
/// accumulate drift.
pub fn memristor_step(
    state: MemristorState,
    v: f64,
    dt: f64,
    params: &MemristorParams,
) -> Result<MemristorState, DeviceError> {
    if !v.is_finite() || !dt.is_finite() {
        return Err(DeviceError::InvalidInput(format!("non-finite stimulus v={v} dt={dt}")));
    }
    if dt <= 0.0 {
        return Err(DeviceError::InvalidInput(format!("dt must be > 0, got {dt}")));
    }
    if v.abs() <= params.v_write_threshold {
        return Ok(state);
    }
    let x = state.x() + state_derivative(state.x(), v, params) * dt;
    Ok(MemristorState(x.clamp(0.0, 1.0)))
}

/// Fine-step RK4 integration of the state under a constant voltage.
///
/// Used as the reference the fixed-step simulator is calibrated and checked
/// against.
pub fn reference_integrate(x0: f64, v: f64, duration: f64, params: &MemristorParams) -> f64 {
    const STEPS: usize = 20_000;
    let h = duration / STEPS as f64;
    let f = |x: f64| state_derivative(x.clamp(0.0, 1.0), v, params);
    let mut x = x0;
    for _ in 0..STEPS {
        let k1 = f(x);
        let k2 = f(x + 0.5 * h * k1);
        let k3 = f(x + 0.5 * h * k2);
        let k4 = f(x + h * k3);
        x = (x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)).clamp(0.0, 1.0);
    }
    x
}

/// Smallest `rate_k` for which a pulse of `v_eff` lasting `t_switch` drives the
/// state from 0 to within `1e-9` of 1, found by bisection on
/// [`reference_integrate`].
pub fn calibrate_rate_k(params: &MemristorParams, v_eff: f64, t_switch: f64) -> Result<f64, DeviceError> {
    if v_eff <= params.v_write_threshold {
        return Err(DeviceError::InvalidInput(format!(
            "calibration voltage {v_eff} V does not exceed the write threshold"
        )));
    }
    let reaches = |k: f64| {
        let p = MemristorParams { rate_k: k, ..*params };
        reference_integrate(0.0, v_eff, t_switch, &p) >= 1.0 - 1e-9
    };
    let mut lo = 0.0;
    let mut hi = 1.0 / ((v_eff - params.v_write_threshold) * t_switch);
    while !reaches(hi) {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if reaches(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= hi * 1e-12 {
            break;
        }
    }
    Ok(hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchParams {
    /// Channel resistance when on (Ω).
    pub r_on_series: f64,
    /// Leakage resistance when off (Ω).
    pub r_off_series: f64,
    /// Threshold drop of the pass transistor (V).
    pub v_tn: f64,
    /// Nominal gate drive; the switch is on above half of it.
    pub gate_on_voltage: f64,
}

impl Default for SwitchParams {
    fn default() -> Self {
        Self { r_on_series: 250.0, r_off_series: 1e9, v_tn: 0.4, gate_on_voltage: 1.0 }
    }
}

impl SwitchParams {
    /// A switch with no threshold drop and no series resistance.
    pub fn ideal() -> Self {
        Self { r_on_series: 0.0, r_off_series: f64::INFINITY, v_tn: 0.0, gate_on_voltage: 1.0 }
    }

    pub fn validate(&self) -> Result<(), DeviceError> {
        if !(self.r_on_series >= 0.0 && self.r_on_series < self.r_off_series) {
            return Err(DeviceError::InvalidParams(format!(
                "need 0 <= r_on_series < r_off_series, got {} / {}",
                self.r_on_series, self.r_off_series
            )));
        }
        if !(self.v_tn >= 0.0 && self.v_tn.is_finite()) {
            return Err(DeviceError::InvalidParams("v_tn must be >= 0".into()));
        }
        if !(self.gate_on_voltage > 0.0 && self.gate_on_voltage.is_finite()) {
            return Err(DeviceError::InvalidParams("gate_on_voltage must be > 0".into()));
        }
        Ok(())
    }

    pub fn is_on(&self, gate_v: f64) -> bool {
        gate_v >= 0.5 * self.gate_on_voltage
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchPass {
    pub v_effective: f64,
    pub r_series: f64,
    pub on: bool,
}

pub fn switch_pass(v_in: f64, gate_v: f64, params: &SwitchParams) -> SwitchPass {
    if params.is_on(gate_v) {
        let v_effective = if v_in >= 0.0 { v_in.min(gate_v - params.v_tn) } else { v_in };
        SwitchPass { v_effective, r_series: params.r_on_series, on: true }
    } else {
        SwitchPass { v_effective: v_in, r_series: params.r_off_series, on: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InverterParams {
    pub v_threshold: f64,
    pub v_dd: f64,
}

impl InverterParams {
    pub fn validate(&self) -> Result<(), DeviceError> {
        if !(self.v_threshold > 0.0 && self.v_threshold < self.v_dd) {
            return Err(DeviceError::InvalidParams(format!(
                "need 0 < v_threshold < v_dd, got {} / {}",
                self.v_threshold, self.v_dd
            )));
        }
        Ok(())
    }
}

/// Ideal comparator: high below threshold, low at or above it.
pub fn inverter_eval(v_in: f64, params: &InverterParams) -> f64 {
    if v_in < params.v_threshold {
        params.v_dd
    } else {
        0.0
    }
}

/// Device parameters shared by every cell in a design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceSet {
    pub memristor: MemristorParams,
    pub switch: SwitchParams,
    /// Inverter supply, also the logic-high rail (V).
    pub v_dd: f64,
    /// Programming source when on (V).
    pub v_sc: f64,
    /// Gate drive of read switches S_r1, S_r2 (V).
    pub read_gate_rc1: f64,
    /// Gate drive of read switches S_r3, S_r4 (V).
    pub read_gate_rc2: f64,
    /// Gate drive of array routing switches (V).
    pub route_gate: f64,
    /// Nominal threshold of the two-inverter restoring block (V).
    pub v_th_block: f64,
}

impl Default for DeviceSet {
    fn default() -> Self {
        Self {
            memristor: MemristorParams::default(),
            switch: SwitchParams::default(),
            v_dd: 1.0,
            v_sc: 2.5,
            read_gate_rc1: 1.0,
            read_gate_rc2: 0.7,
            route_gate: 1.0,
            v_th_block: 0.4,
        }
    }
}

impl DeviceSet {
    pub fn validate(&self) -> Result<(), DeviceError> {
        self.memristor.validate()?;
        self.switch.validate()?;
        if !(self.v_dd > 0.0 && self.v_dd.is_finite()) {
            return Err(DeviceError::InvalidParams("v_dd must be > 0".into()));
        }
        if !(self.v_sc > self.memristor.v_write_threshold) {
            return Err(DeviceError::InvalidParams("v_sc must exceed the write threshold".into()));
        }
        if self.v_dd > self.memristor.v_write_threshold {
            return Err(DeviceError::InvalidParams("read rail v_dd must not exceed the write threshold".into()));
        }
        InverterParams { v_threshold: self.v_th_block, v_dd: self.v_dd }.validate()?;
        Ok(())
    }

    pub fn with_ideal_switches(mut self) -> Self {
        self.switch = SwitchParams::ideal();
        self
    }
}
