//! Corrective strategies behind a common [`Controller`] interface.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mpc::{MpcConfig, RollingMpc, SolveLogRow};
use crate::phasor::{saturated_power, unsaturated_power, GridCondition, SystemParams};
use crate::plant::{ApcState, ControlInput, Mode};

/// Frequency band used by the bounded strategies, p.u.
pub const DEFAULT_DELTA_OMEGA_MAX: f64 = 0.0066;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MpcStrategy {
    pub config: MpcConfig,
    /// Plant-level frequency band active alongside the MPC; `None` disables it.
    pub delta_omega_max: Option<f64>,
    /// Multiplier applied to the grid impedance inside the prediction model.
    pub model_impedance_scale: f64,
}

impl Default for MpcStrategy {
    fn default() -> Self {
        Self {
            config: MpcConfig::default(),
            delta_omega_max: Some(DEFAULT_DELTA_OMEGA_MAX),
            model_impedance_scale: 1.0,
        }
    }
}

/// Strategy selection with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ControllerRef {
    Original,
    FrequencyBound { delta_omega_max: f64 },
    Compensation,
    Cl0 { delta_p_ref_max: f64 },
    Mpc(MpcStrategy),
}

impl ControllerRef {
    pub const NAMES: [&'static str; 5] =
        ["original", "frequency_bound", "compensation", "cl0", "mpc"];

    /// Strategy with default parameters; accepts the short aliases `b` and `c`.
    pub fn from_name(name: &str, params: &SystemParams) -> Result<Self> {
        Ok(match name.to_ascii_lowercase().as_str() {
            "original" => ControllerRef::Original,
            "frequency_bound" | "b" => ControllerRef::FrequencyBound {
                delta_omega_max: DEFAULT_DELTA_OMEGA_MAX,
            },
            "compensation" | "c" => ControllerRef::Compensation,
            "cl0" => ControllerRef::Cl0 {
                delta_p_ref_max: MpcConfig::default().delta_p_ref_max,
            },
            "mpc" => ControllerRef::Mpc(MpcStrategy {
                config: MpcConfig::for_params(params),
                ..Default::default()
            }),
            other => {
                return Err(Error::Config(format!(
                    "unknown strategy '{other}', expected one of {:?}",
                    Self::NAMES
                )))
            }
        })
    }

    pub fn label(&self) -> &'static str {
        match self {
            ControllerRef::Original => "original",
            ControllerRef::FrequencyBound { .. } => "frequency_bound",
            ControllerRef::Compensation => "compensation",
            ControllerRef::Cl0 { .. } => "cl0",
            ControllerRef::Mpc(_) => "mpc",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} = {v} must be positive")))
            }
        };
        match self {
            ControllerRef::FrequencyBound { delta_omega_max } => {
                positive("delta_omega_max", *delta_omega_max)
            }
            ControllerRef::Cl0 { delta_p_ref_max } => positive("delta_p_ref_max", *delta_p_ref_max),
            ControllerRef::Mpc(m) => {
                m.config.validate()?;
                if let Some(b) = m.delta_omega_max {
                    positive("delta_omega_max", b)?;
                }
                positive("model_impedance_scale", m.model_impedance_scale)
            }
            ControllerRef::Original | ControllerRef::Compensation => Ok(()),
        }
    }

    pub fn build(&self) -> Result<Box<dyn Controller>> {
        self.validate()?;
        Ok(match *self {
            ControllerRef::Original => Box::new(Original),
            ControllerRef::FrequencyBound { delta_omega_max } => {
                Box::new(FrequencyBound { delta_omega_max })
            }
            ControllerRef::Compensation => Box::new(Compensation),
            ControllerRef::Cl0 { delta_p_ref_max } => Box::new(Cl0 { delta_p_ref_max }),
            ControllerRef::Mpc(m) => Box::new(MpcController {
                rolling: RollingMpc::new(m.config, m.model_impedance_scale)?,
                delta_omega_max: m.delta_omega_max,
            }),
        })
    }
}

/// Everything a strategy may observe at a substep.
#[derive(Debug, Clone, Copy)]
pub struct DecisionContext<'a> {
    pub state: &'a ApcState,
    pub grid: &'a GridCondition,
    pub params: &'a SystemParams,
    pub v_ref: f64,
    /// The substep starts on the strategy's decision grid.
    pub tick: bool,
    pub post_fault: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Decision {
    /// Keep the held power correction, no phase jump.
    Hold,
    Apply(ControlInput),
}

pub trait Controller: Send {
    fn label(&self) -> &'static str;

    /// Decision interval in seconds; `None` decides at every substep.
    fn decision_interval(&self) -> Option<f64> {
        None
    }

    /// Plant frequency band `|omega - 1| <= bound` enforced under this strategy.
    fn omega_bound(&self) -> Option<f64> {
        None
    }

    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<Decision>;

    fn solve_log(&self) -> &[SolveLogRow] {
        &[]
    }

    fn errors(&self) -> &[String] {
        &[]
    }
}

pub fn original(_state: &ApcState) -> ControlInput {
    ControlInput::ZERO
}

/// Clamps `omega` into `[1 - delta_omega_max, 1 + delta_omega_max]`.
pub fn frequency_bound(state: &ApcState, delta_omega_max: f64) -> ApcState {
    ApcState {
        omega: state
            .omega
            .clamp(1.0 - delta_omega_max, 1.0 + delta_omega_max),
        ..*state
    }
}

/// Subtracts the gap between the unsaturated and saturated power curves.
pub fn compensation(
    state: &ApcState,
    grid: &GridCondition,
    params: &SystemParams,
    v_ref: f64,
) -> Result<ControlInput> {
    if state.mode == Mode::Normal {
        return Ok(ControlInput::ZERO);
    }
    let gap = unsaturated_power(state.theta, v_ref, grid)?
        - saturated_power(state.theta, grid, params, state.omega)?;
    Ok(ControlInput::new(-gap, 0.0))
}

pub fn cl0(state: &ApcState, _params: &SystemParams, delta_p_ref_max: f64) -> ControlInput {
    match state.mode {
        Mode::Saturated => ControlInput::new(-delta_p_ref_max, 0.0),
        Mode::Normal => ControlInput::ZERO,
    }
}

struct Original;

impl Controller for Original {
    fn label(&self) -> &'static str {
        "original"
    }

    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<Decision> {
        Ok(Decision::Apply(original(ctx.state)))
    }
}

struct FrequencyBound {
    delta_omega_max: f64,
}

impl Controller for FrequencyBound {
    fn label(&self) -> &'static str {
        "frequency_bound"
    }

    fn omega_bound(&self) -> Option<f64> {
        Some(self.delta_omega_max)
    }

    fn decide(&mut self, _ctx: &DecisionContext<'_>) -> Result<Decision> {
        Ok(Decision::Apply(ControlInput::ZERO))
    }
}

struct Compensation;

impl Controller for Compensation {
    fn label(&self) -> &'static str {
        "compensation"
    }

    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<Decision> {
        compensation(ctx.state, ctx.grid, ctx.params, ctx.v_ref).map(Decision::Apply)
    }
}

struct Cl0 {
    delta_p_ref_max: f64,
}

impl Controller for Cl0 {
    fn label(&self) -> &'static str {
        "cl0"
    }

    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<Decision> {
        if !ctx.post_fault {
            return Ok(Decision::Apply(ControlInput::ZERO));
        }
        Ok(Decision::Apply(cl0(
            ctx.state,
            ctx.params,
            self.delta_p_ref_max,
        )))
    }
}

struct MpcController {
    rolling: RollingMpc,
    delta_omega_max: Option<f64>,
}

impl Controller for MpcController {
    fn label(&self) -> &'static str {
        "mpc"
    }

    fn decision_interval(&self) -> Option<f64> {
        Some(self.rolling.config().step_td)
    }

    fn omega_bound(&self) -> Option<f64> {
        self.delta_omega_max
    }

    fn decide(&mut self, ctx: &DecisionContext<'_>) -> Result<Decision> {
        if !ctx.tick {
            return Ok(Decision::Hold);
        }
        if !ctx.post_fault {
            return Ok(Decision::Apply(ControlInput::ZERO));
        }
        Ok(Decision::Apply(
            self.rolling
                .rolling_step(ctx.state, ctx.grid, ctx.params, ctx.v_ref),
        ))
    }

    fn solve_log(&self) -> &[SolveLogRow] {
        self.rolling.log()
    }

    fn errors(&self) -> &[String] {
        self.rolling.errors()
    }
}
