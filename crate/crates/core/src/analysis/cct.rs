use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{classify, equilibrium_state, landmark_angles, StabilityVerdict};
use crate::controllers::ControllerRef;
use crate::error::{Error, Result};
use crate::phasor::{GridCondition, SystemParams};
use crate::plant::{simulate_detailed, FaultScenario, SimOptions, SimulationOutput};

/// Longest fault duration probed before a strategy is declared unbounded, s.
const MAX_FAULT_DURATION: f64 = 8.0;

/// Voltage-sag template whose duration is the analysis variable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FaultSetup {
    /// Pre- and post-fault grid.
    pub grid: GridCondition,
    /// Thevenin voltage while faulted.
    pub v_fault: f64,
    pub t_fault_on: f64,
    /// Simulated time after clearance, s.
    pub post_clear: f64,
    pub sim: SimOptions,
}

impl Default for FaultSetup {
    fn default() -> Self {
        Self {
            grid: GridCondition::from_grid_reactance(1.0, 0.3, &SystemParams::default()),
            v_fault: 0.05,
            t_fault_on: 0.1,
            post_clear: 3.0,
            sim: SimOptions::default(),
        }
    }
}

impl FaultSetup {
    pub fn scenario(&self, duration: f64) -> FaultScenario {
        FaultScenario::voltage_sag(self.grid, self.v_fault, self.t_fault_on, duration)
    }
}

/// Simulates a fault of `duration` and classifies the outcome.
pub fn run_fault(
    setup: &FaultSetup,
    strategy: &ControllerRef,
    params: &SystemParams,
    duration: f64,
) -> Result<(SimulationOutput, Result<StabilityVerdict>)> {
    let initial = equilibrium_state(params, &setup.grid, &setup.sim.plant)?;
    let landmarks = landmark_angles(params, &setup.grid, params.v0)?;
    let scenario = setup.scenario(duration);
    let options = SimOptions {
        t_end: scenario.t_fault_clear + setup.post_clear,
        abort_above_theta: Some(landmarks.theta_zc_sat + 0.01),
        ..setup.sim
    };
    let output = simulate_detailed(&initial, &scenario, strategy, params, &options)?;
    let verdict = classify(&output.trajectory, &landmarks);
    Ok((output, verdict))
}

/// Stable outcome of a fault of `duration`; indeterminate runs count as unstable.
pub fn fault_outcome(
    setup: &FaultSetup,
    strategy: &ControllerRef,
    params: &SystemParams,
    duration: f64,
) -> Result<bool> {
    let (_, verdict) = run_fault(setup, strategy, params, duration)?;
    Ok(verdict
        .map(|v| v.classification.is_stable())
        .unwrap_or(false))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CctResult {
    /// Longest duration confirmed stable, s.
    pub cct: f64,
    /// Shortest duration confirmed unstable, s.
    pub unstable_at: f64,
    pub probes: usize,
}

pub fn cct_bracket(
    setup: &FaultSetup,
    strategy: &ControllerRef,
    params: &SystemParams,
    tol: f64,
) -> Result<CctResult> {
    if !(tol >= setup.sim.dt) {
        return Err(Error::Parameter(format!(
            "tolerance {tol} s must be at least the plant step {} s",
            setup.sim.dt
        )));
    }
    let mut probes = 1;
    if !fault_outcome(setup, strategy, params, 0.0)? {
        return Err(Error::Degenerate(format!(
            "{} is unstable without a fault",
            strategy.label()
        )));
    }
    let mut lo = 0.0;
    let mut hi = 0.25;
    loop {
        probes += 1;
        if !fault_outcome(setup, strategy, params, hi)? {
            break;
        }
        lo = hi;
        hi *= 2.0;
        if hi > MAX_FAULT_DURATION {
            return Err(Error::Degenerate(format!(
                "{} stays stable for faults up to {lo} s",
                strategy.label()
            )));
        }
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        probes += 1;
        if fault_outcome(setup, strategy, params, mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(CctResult {
        cct: lo,
        unstable_at: hi,
        probes,
    })
}

/// Critical clearing time by bisection to within `tol`, s.
pub fn cct(
    setup: &FaultSetup,
    strategy: &ControllerRef,
    params: &SystemParams,
    tol: f64,
) -> Result<f64> {
    cct_bracket(setup, strategy, params, tol).map(|r| r.cct)
}

/// Whether the stable/unstable indicator changes at most once, from stable
/// to unstable, over increasing `durations`.
pub fn is_monotone(
    setup: &FaultSetup,
    strategy: &ControllerRef,
    params: &SystemParams,
    durations: &[f64],
) -> Result<bool> {
    let outcomes = durations
        .par_iter()
        .map(|&d| fault_outcome(setup, strategy, params, d))
        .collect::<Result<Vec<bool>>>()?;
    Ok(outcomes.windows(2).all(|w| w[0] || !w[1]))
}
