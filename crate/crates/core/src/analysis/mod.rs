//! Landmark angles, stability classification, CCT, DOA and parameter sweeps.

mod cct;
mod doa;
mod sweep;

pub use cct::{cct, cct_bracket, fault_outcome, is_monotone, run_fault, CctResult, FaultSetup};
pub use doa::{doa_boundary, max_stable_angle, start_outcome, DoaBoundary, DoaOptions, DoaPoint};
pub use sweep::{sweep, CctRow, SweepConfig, SweepKind, SweepTable, TrajectoryRow};

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mpc::equilibrium_angle;
use crate::phasor::{theta_sat, GridCondition, SystemParams};
use crate::plant::{mode_transition, ApcState, Mode, PlantOptions, TrajectoryRecord};

/// Angle band around the equilibrium accepted as settled, rad.
pub const SETTLE_THETA_TOL: f64 = 0.01;
/// Frequency band accepted as settled, p.u.
pub const SETTLE_OMEGA_TOL: f64 = 1e-4;
/// Frequency excursion beyond which a run is considered divergent, p.u.
const OMEGA_GUARD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Landmarks {
    pub theta_eq: f64,
    pub theta_sat: f64,
    /// Unstable equilibrium of the saturated curve; absent when the saturated
    /// device cannot deliver `p0`.
    pub theta_ue_sat: Option<f64>,
    pub theta_zc_sat: f64,
    pub theta_ue_unsat: f64,
}

pub fn landmark_angles(
    params: &SystemParams,
    grid: &GridCondition,
    v_ref: f64,
) -> Result<Landmarks> {
    let theta_eq = equilibrium_angle(params, grid, v_ref)?;
    Ok(Landmarks {
        theta_eq,
        theta_sat: theta_sat(v_ref, grid, params, 1.0)?,
        theta_ue_sat: saturated_unstable_angle(params, grid),
        theta_zc_sat: params.theta_zero_crossing(),
        theta_ue_unsat: PI - theta_eq,
    })
}

/// Angle beyond the saturated power peak where the saturated curve returns
/// to `p0`, at nominal frequency.
pub fn saturated_unstable_angle(params: &SystemParams, grid: &GridCondition) -> Option<f64> {
    let kappa = grid.x * params.c_f * params.omega_n;
    let c = params.p0 * (1.0 - kappa) / (params.i_s_max * grid.v_g);
    (c.abs() <= 1.0).then(|| c.acos() - params.beta)
}

/// Equilibrium start state on `grid`, with the reference voltage of `plant`.
pub fn equilibrium_state(
    params: &SystemParams,
    grid: &GridCondition,
    plant: &PlantOptions,
) -> Result<ApcState> {
    let mut theta = equilibrium_angle(params, grid, params.v0)?;
    for _ in 0..100 {
        let v = plant.voltage_reference.v_ref(theta, grid, params);
        let next = equilibrium_angle(params, grid, v)?;
        let done = (next - theta).abs() < 1e-14;
        theta = next;
        if done {
            break;
        }
    }
    let v = plant.voltage_reference.v_ref(theta, grid, params);
    let mut state = ApcState::new(theta, 1.0, Mode::Normal);
    state.mode = mode_transition(&state, grid, params, v, plant);
    Ok(state)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Classification {
    StableSafe,
    StableAfterCorrection,
    UnsafeUnstable,
    Diverged,
}

impl Classification {
    pub fn is_stable(self) -> bool {
        matches!(
            self,
            Classification::StableSafe | Classification::StableAfterCorrection
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Classification::StableSafe => "stable_safe",
            Classification::StableAfterCorrection => "stable_after_correction",
            Classification::UnsafeUnstable => "unsafe_unstable",
            Classification::Diverged => "diverged",
        }
    }
}

impl std::str::FromStr for Classification {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "stable_safe" => Classification::StableSafe,
            "stable_after_correction" => Classification::StableAfterCorrection,
            "unsafe_unstable" => Classification::UnsafeUnstable,
            "diverged" => Classification::Diverged,
            other => return Err(Error::Csv(format!("unknown classification '{other}'"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityVerdict {
    pub classification: Classification,
    pub peak_theta: f64,
    /// Start of the final in-band interval, s.
    pub settle_time: Option<f64>,
}

/// Classifies a completed run against the post-fault landmarks.
pub fn classify(trajectory: &TrajectoryRecord, landmarks: &Landmarks) -> Result<StabilityVerdict> {
    let samples = &trajectory.samples;
    if samples.len() < 2 {
        return Err(Error::Indeterminate(
            "trajectory has fewer than two samples".into(),
        ));
    }
    let peak_theta = trajectory.peak_theta();
    let diverged = samples.iter().any(|s| {
        !(-PI..=2.0 * PI).contains(&s.theta)
            || (s.omega - 1.0).abs() > OMEGA_GUARD
            || !s.omega.is_finite()
    });
    let verdict = |classification, settle_time| StabilityVerdict {
        classification,
        peak_theta,
        settle_time,
    };
    if diverged {
        return Ok(verdict(Classification::Diverged, None));
    }
    if peak_theta > landmarks.theta_zc_sat {
        return Ok(verdict(Classification::UnsafeUnstable, None));
    }
    let settled = |s: &&crate::plant::TrajectorySample| {
        (s.theta - landmarks.theta_eq).abs() < SETTLE_THETA_TOL
            && (s.omega - 1.0).abs() < SETTLE_OMEGA_TOL
    };
    let tail = samples.iter().rev().take_while(settled).count();
    if tail == 0 {
        let last = samples.last().unwrap();
        return Err(Error::Indeterminate(format!(
            "not settled at t = {:.3} s: theta = {:.4}, omega = {:.6}",
            last.time, last.theta, last.omega
        )));
    }
    let settle_time = samples[samples.len() - tail].time;
    let corrected = landmarks.theta_ue_sat.is_some_and(|ue| peak_theta > ue);
    let class = if corrected {
        Classification::StableAfterCorrection
    } else {
        Classification::StableSafe
    };
    Ok(verdict(class, Some(settle_time)))
}
