//! Reduced-order APC dynamics with the normal / current-saturation automaton.

mod record;
mod simulate;

pub use record::{TrajectoryRecord, TrajectorySample};
pub use simulate::{simulate, simulate_detailed, SimOptions, SimulationOutput};

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::phasor::{
    inverter_side_current, saturated_power, saturated_terminal_voltage,
    saturated_voltage_with_capacitor, saturation_rhs, unsaturated_power, GridCondition, Phasor,
    SystemParams,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    Normal,
    Saturated,
}

impl Mode {
    /// Binary encoding used in CSV output: 0 = saturated, 1 = normal.
    pub fn as_binary(self) -> u8 {
        match self {
            Mode::Saturated => 0,
            Mode::Normal => 1,
        }
    }

    pub fn from_binary(n: u8) -> Result<Self> {
        match n {
            0 => Ok(Mode::Saturated),
            1 => Ok(Mode::Normal),
            other => Err(Error::Csv(format!("mode must be 0 or 1, got {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApcState {
    pub theta: f64,
    pub omega: f64,
    pub mode: Mode,
    pub time: f64,
}

impl ApcState {
    pub fn new(theta: f64, omega: f64, mode: Mode) -> Self {
        Self {
            theta,
            omega,
            mode,
            time: 0.0,
        }
    }

    pub fn delta_omega(&self) -> f64 {
        self.omega - 1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput {
    pub delta_p_ref: f64,
    /// Phase jump applied at this instant, rad.
    pub delta_theta_c: f64,
}

impl ControlInput {
    pub const ZERO: ControlInput = ControlInput {
        delta_p_ref: 0.0,
        delta_theta_c: 0.0,
    };

    pub fn new(delta_p_ref: f64, delta_theta_c: f64) -> Self {
        Self {
            delta_p_ref,
            delta_theta_c,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.delta_p_ref == 0.0 && self.delta_theta_c == 0.0
    }
}

/// Grid sequence of a single voltage-sag event. `t_fault_on == t_fault_clear`
/// describes an undisturbed run on the post-fault grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaultScenario {
    pub pre_fault: GridCondition,
    pub fault: GridCondition,
    pub post_fault: GridCondition,
    pub t_fault_on: f64,
    pub t_fault_clear: f64,
}

impl FaultScenario {
    /// Voltage sag to `v_fault` on an otherwise unchanged grid.
    pub fn voltage_sag(grid: GridCondition, v_fault: f64, t_fault_on: f64, duration: f64) -> Self {
        Self {
            pre_fault: grid,
            fault: grid.with_voltage(v_fault),
            post_fault: grid,
            t_fault_on,
            t_fault_clear: t_fault_on + duration,
        }
    }

    pub fn steady(grid: GridCondition) -> Self {
        Self {
            pre_fault: grid,
            fault: grid,
            post_fault: grid,
            t_fault_on: 0.0,
            t_fault_clear: 0.0,
        }
    }

    pub fn duration(&self) -> f64 {
        self.t_fault_clear - self.t_fault_on
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite("t_fault_on", self.t_fault_on)?;
        ensure_finite("t_fault_clear", self.t_fault_clear)?;
        if self.t_fault_clear < self.t_fault_on {
            return Err(Error::Parameter(format!(
                "fault clears at {} s before it starts at {} s",
                self.t_fault_clear, self.t_fault_on
            )));
        }
        self.pre_fault.validate()?;
        self.fault.validate()?;
        self.post_fault.validate()
    }

    pub fn grid_at(&self, time: f64) -> &GridCondition {
        if time < self.t_fault_on {
            &self.pre_fault
        } else if time < self.t_fault_clear {
            &self.fault
        } else {
            &self.post_fault
        }
    }
}

/// Source of the terminal voltage magnitude used in normal mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoltageReference {
    /// Constant `v0`.
    #[default]
    Static,
    /// Algebraic Q-V droop `v = v0 + d_q (q0 - Q)` solved against the line.
    Droop,
}

impl VoltageReference {
    pub fn v_ref(self, theta: f64, grid: &GridCondition, params: &SystemParams) -> f64 {
        match self {
            VoltageReference::Static => params.v0,
            VoltageReference::Droop => {
                // Q = (v^2 - v v_g cos(theta)) / X leads to a quadratic in v.
                let a = params.d_q / grid.x;
                let b = 1.0 - params.d_q * grid.v_g * theta.cos() / grid.x;
                let c = -(params.v0 + params.d_q * params.q0);
                if a <= 0.0 {
                    return -c / b;
                }
                (-b + (b * b - 4.0 * a * c).sqrt()) / (2.0 * a)
            }
        }
    }
}

/// Mode automaton and plant-structure switches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantOptions {
    /// Keep the device saturated while `cos(theta)` is below `hold_ratio * R`.
    pub hold_enabled: bool,
    pub hold_ratio: f64,
    /// Proportional gain of the voltage-controller current reference used for
    /// release when the hold is disabled.
    pub vc_gain: f64,
    /// `false` models a device without current limiting.
    pub saturation_enabled: bool,
    pub voltage_reference: VoltageReference,
}

impl Default for PlantOptions {
    fn default() -> Self {
        Self {
            hold_enabled: true,
            hold_ratio: 0.95,
            vc_gain: 1.0,
            saturation_enabled: true,
            voltage_reference: VoltageReference::Static,
        }
    }
}

impl PlantOptions {
    pub fn validate(&self) -> Result<()> {
        ensure_finite("hold_ratio", self.hold_ratio)?;
        ensure_finite("vc_gain", self.vc_gain)?;
        if !(self.hold_ratio > 0.0 && self.hold_ratio <= 1.0) {
            return Err(Error::Parameter("hold_ratio must lie in (0, 1]".into()));
        }
        if self.vc_gain < 0.0 {
            return Err(Error::Parameter("vc_gain must be non-negative".into()));
        }
        Ok(())
    }
}

/// Active power delivered in the current mode, using `v_ref` in normal mode.
pub fn electrical_power(
    state: &ApcState,
    grid: &GridCondition,
    params: &SystemParams,
    v_ref: f64,
) -> Result<f64> {
    match state.mode {
        Mode::Normal => unsaturated_power(state.theta, v_ref, grid),
        Mode::Saturated => saturated_power(state.theta, grid, params, state.omega),
    }
}

/// Terminal voltage `(v_d, v_q)` for logging.
pub fn terminal_voltage(
    state: &ApcState,
    grid: &GridCondition,
    params: &SystemParams,
    v_ref: f64,
) -> Result<(f64, f64)> {
    match state.mode {
        Mode::Normal => Ok((v_ref, 0.0)),
        Mode::Saturated if params.c_f == 0.0 => {
            saturated_terminal_voltage(state.theta, grid, params)
        }
        Mode::Saturated => {
            let i_s = Phasor::from_polar(params.i_s_max, params.beta);
            let v = saturated_voltage_with_capacitor(i_s, state.theta, grid, params, state.omega)?;
            Ok((v.re, v.im))
        }
    }
}

fn unsaturated_current(
    theta: f64,
    grid: &GridCondition,
    params: &SystemParams,
    v_ref: f64,
    omega: f64,
) -> Phasor {
    inverter_side_current(theta, v_ref, grid, params, omega)
        .unwrap_or(Phasor::new(f64::INFINITY, 0.0))
}

/// Current reference the voltage controller would issue from the saturated
/// operating point: the unsaturated current plus the proportional correction
/// of the terminal voltage error.
pub fn voltage_controller_current(
    state: &ApcState,
    grid: &GridCondition,
    params: &SystemParams,
    v_ref: f64,
    gain: f64,
) -> f64 {
    let i_unsat = unsaturated_current(state.theta, grid, params, v_ref, state.omega);
    let sat_state = ApcState {
        mode: Mode::Saturated,
        ..*state
    };
    match terminal_voltage(&sat_state, grid, params, v_ref) {
        Ok((vd, vq)) => {
            (i_unsat + (Phasor::new(v_ref, 0.0) - Phasor::new(vd, vq)).scale(gain)).norm()
        }
        Err(_) => f64::INFINITY,
    }
}

/// Next mode of the automaton at the given state.
pub fn mode_transition(
    state: &ApcState,
    grid: &GridCondition,
    params: &SystemParams,
    v_ref: f64,
    options: &PlantOptions,
) -> Mode {
    if !options.saturation_enabled {
        return Mode::Normal;
    }
    let cos = state.theta.cos();
    let rhs = saturation_rhs(v_ref, grid, params, state.omega);
    match state.mode {
        Mode::Normal => {
            let enter = match rhs {
                Ok(r) => cos <= r,
                Err(_) => {
                    unsaturated_current(state.theta, grid, params, v_ref, state.omega).norm()
                        >= params.i_s_max
                }
            };
            if enter {
                Mode::Saturated
            } else {
                Mode::Normal
            }
        }
        Mode::Saturated => {
            let release = if options.hold_enabled {
                let outside_hold = match rhs {
                    Ok(r) => cos >= options.hold_ratio * r,
                    Err(_) => false,
                };
                outside_hold
                    && unsaturated_current(state.theta, grid, params, v_ref, state.omega).norm()
                        <= params.i_s_max
            } else {
                voltage_controller_current(state, grid, params, v_ref, options.vc_gain)
                    <= params.i_s_max
            };
            if release {
                Mode::Normal
            } else {
                Mode::Saturated
            }
        }
    }
}

/// Integration context shared by the substeps of a run.
#[derive(Debug, Clone, Copy)]
pub struct StepContext<'a> {
    pub grid: &'a GridCondition,
    pub params: &'a SystemParams,
    pub v_ref: f64,
    pub options: &'a PlantOptions,
    /// Frequency band `|omega - 1| <= bound` enforced after the step.
    pub omega_bound: Option<f64>,
}

fn derivatives(
    theta: f64,
    omega: f64,
    mode: Mode,
    delta_p_ref: f64,
    grid: &GridCondition,
    params: &SystemParams,
    v_ref: f64,
) -> Result<(f64, f64)> {
    let p = match mode {
        Mode::Normal => unsaturated_power(theta, v_ref, grid)?,
        Mode::Saturated => saturated_power(theta, grid, params, omega)?,
    };
    let d_theta = params.omega_n * (omega - 1.0);
    let d_omega = (params.p0 + delta_p_ref - p - (omega - 1.0) / params.d_p) / (2.0 * params.h);
    Ok((d_theta, d_omega))
}

/// One fixed RK4 step with the mode frozen, followed by the optional frequency
/// clamp and the mode update. The phase jump `u.delta_theta_c` is added to
/// `theta` before integrating.
pub fn step_with(
    state: &ApcState,
    u: &ControlInput,
    dt: f64,
    ctx: &StepContext<'_>,
) -> Result<ApcState> {
    if !(dt > 0.0) {
        return Err(Error::Parameter(format!("dt = {dt} must be positive")));
    }
    if state.mode == Mode::Normal && !u.is_zero() {
        return Err(Error::Domain(format!(
            "corrective input {u:?} applied in normal mode at t = {}",
            state.time
        )));
    }
    let (grid, params, v) = (ctx.grid, ctx.params, ctx.v_ref);
    let dp = u.delta_p_ref;
    let mode = state.mode;
    let th = state.theta + u.delta_theta_c;
    let w = state.omega;
    let time = state.time + dt;
    let fail = |reason: String| Error::Integration {
        time,
        reason: format!("{reason} (from {state:?})"),
    };
    let f = |t: f64, o: f64| {
        derivatives(t, o, mode, dp, grid, params, v).map_err(|e| fail(e.to_string()))
    };
    let (k1t, k1w) = f(th, w)?;
    let (k2t, k2w) = f(th + 0.5 * dt * k1t, w + 0.5 * dt * k1w)?;
    let (k3t, k3w) = f(th + 0.5 * dt * k2t, w + 0.5 * dt * k2w)?;
    let (k4t, k4w) = f(th + dt * k3t, w + dt * k3w)?;
    let theta = th + dt / 6.0 * (k1t + 2.0 * k2t + 2.0 * k3t + k4t);
    let mut omega = w + dt / 6.0 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w);
    if let Some(bound) = ctx.omega_bound {
        omega = omega.clamp(1.0 - bound, 1.0 + bound);
    }
    if !theta.is_finite() || !omega.is_finite() {
        return Err(fail(format!(
            "non-finite state theta = {theta}, omega = {omega}"
        )));
    }
    let mut next = ApcState {
        theta,
        omega,
        mode,
        time,
    };
    next.mode = mode_transition(&next, grid, params, v, ctx.options);
    Ok(next)
}

/// Single step with default automaton options and no frequency clamp.
pub fn step(
    state: &ApcState,
    u: &ControlInput,
    grid: &GridCondition,
    params: &SystemParams,
    dt: f64,
    v_ref: f64,
) -> Result<ApcState> {
    let options = PlantOptions::default();
    step_with(
        state,
        u,
        dt,
        &StepContext {
            grid,
            params,
            v_ref,
            options: &options,
            omega_bound: None,
        },
    )
}
