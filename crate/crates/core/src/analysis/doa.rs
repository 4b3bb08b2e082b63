use std::f64::consts::PI;
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{classify, landmark_angles, Landmarks};
use crate::controllers::ControllerRef;
use crate::error::{Error, Result};
use crate::phasor::{GridCondition, SystemParams};
use crate::plant::{mode_transition, simulate, ApcState, FaultScenario, Mode, SimOptions};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DoaOptions {
    pub theta_points: usize,
    /// Initial frequency deviations assumed stable and unstable, p.u.
    pub omega_bracket: (f64, f64),
    pub omega_tol: f64,
    /// Simulated time from each start state, s.
    pub horizon: f64,
    pub sim: SimOptions,
}

impl Default for DoaOptions {
    fn default() -> Self {
        Self {
            theta_points: 40,
            omega_bracket: (-0.02, 0.05),
            omega_tol: 1e-4,
            horizon: 3.0,
            sim: SimOptions::default(),
        }
    }
}

impl DoaOptions {
    /// Evenly spaced start angles on `[0, theta_max]`.
    pub fn theta_grid(&self, theta_max: f64) -> Vec<f64> {
        match self.theta_points {
            0 => Vec::new(),
            1 => vec![theta_max],
            n => (0..n)
                .map(|i| theta_max * i as f64 / (n - 1) as f64)
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoaPoint {
    pub theta: f64,
    pub delta_omega_boundary: f64,
    /// `false` when the bracket showed no sign change; the value is then the
    /// bracket edge.
    pub closed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DoaBoundary {
    pub strategy: String,
    pub points: Vec<DoaPoint>,
    pub params: SystemParams,
}

#[derive(Serialize, Deserialize)]
struct DoaRow {
    strategy: String,
    theta: f64,
    delta_omega_boundary: f64,
}

impl DoaBoundary {
    /// Writes `strategy,theta,delta_omega_boundary` rows for several curves.
    pub fn write_csv<W: Write>(curves: &[DoaBoundary], writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for c in curves {
            for p in &c.points {
                w.serialize(DoaRow {
                    strategy: c.strategy.clone(),
                    theta: p.theta,
                    delta_omega_boundary: p.delta_omega_boundary,
                })?;
            }
        }
        w.flush().map_err(|e| Error::Csv(e.to_string()))
    }

    /// Reads rows back as `(strategy, theta, delta_omega_boundary)`.
    pub fn read_csv<R: Read>(reader: R) -> Result<Vec<(String, f64, f64)>> {
        csv::Reader::from_reader(reader)
            .deserialize::<DoaRow>()
            .map(|r| {
                r.map(|r| (r.strategy, r.theta, r.delta_omega_boundary))
                    .map_err(Error::from)
            })
            .collect()
    }
}

fn landmarks_for(
    params: &SystemParams,
    grid: &GridCondition,
    opts: &DoaOptions,
) -> Result<Landmarks> {
    let mut l = landmark_angles(params, grid, params.v0)?;
    if !opts.sim.plant.saturation_enabled {
        l.theta_zc_sat = PI;
    }
    Ok(l)
}

/// Stable outcome of the undisturbed closed loop started at `(theta0, 1 + delta_omega0)`.
pub fn start_outcome(
    strategy: &ControllerRef,
    params: &SystemParams,
    grid: &GridCondition,
    theta0: f64,
    delta_omega0: f64,
    opts: &DoaOptions,
) -> Result<bool> {
    let landmarks = landmarks_for(params, grid, opts)?;
    let v_ref = opts.sim.plant.voltage_reference.v_ref(theta0, grid, params);
    let mut init = ApcState::new(theta0, 1.0 + delta_omega0, Mode::Normal);
    init.mode = mode_transition(&init, grid, params, v_ref, &opts.sim.plant);
    let sim = SimOptions {
        t_end: opts.horizon,
        abort_above_theta: Some(landmarks.theta_zc_sat + 0.01),
        ..opts.sim
    };
    let rec = simulate(&init, &FaultScenario::steady(*grid), strategy, params, &sim)?;
    Ok(classify(&rec, &landmarks)
        .map(|v| v.classification.is_stable())
        .unwrap_or(false))
}

fn boundary_at(
    strategy: &ControllerRef,
    params: &SystemParams,
    grid: &GridCondition,
    theta: f64,
    opts: &DoaOptions,
) -> Result<DoaPoint> {
    let (mut lo, mut hi) = opts.omega_bracket;
    let open = |value| DoaPoint {
        theta,
        delta_omega_boundary: value,
        closed: false,
    };
    if !start_outcome(strategy, params, grid, theta, lo, opts)? {
        return Ok(open(lo));
    }
    if start_outcome(strategy, params, grid, theta, hi, opts)? {
        return Ok(open(hi));
    }
    while hi - lo > opts.omega_tol {
        let mid = 0.5 * (lo + hi);
        if start_outcome(strategy, params, grid, theta, mid, opts)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(DoaPoint {
        theta,
        delta_omega_boundary: lo,
        closed: true,
    })
}

/// Largest stable initial frequency deviation at each start angle.
pub fn doa_boundary(
    strategy: &ControllerRef,
    params: &SystemParams,
    grid: &GridCondition,
    theta_grid: &[f64],
    opts: &DoaOptions,
) -> Result<DoaBoundary> {
    let landmarks = landmarks_for(params, grid, opts)?;
    if theta_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Parameter(
            "theta grid must be strictly increasing".into(),
        ));
    }
    if theta_grid
        .iter()
        .any(|&t| !(0.0..=landmarks.theta_zc_sat).contains(&t))
    {
        return Err(Error::Parameter(format!(
            "theta grid must lie in [0, {}]",
            landmarks.theta_zc_sat
        )));
    }
    if !(opts.omega_bracket.0 < opts.omega_bracket.1) || !(opts.omega_tol > 0.0) {
        return Err(Error::Parameter(
            "invalid frequency bracket or tolerance".into(),
        ));
    }
    let points = theta_grid
        .par_iter()
        .map(|&t| boundary_at(strategy, params, grid, t, opts))
        .collect::<Result<Vec<_>>>()?;
    let mut label = strategy.label().to_string();
    if let ControllerRef::Cl0 { delta_p_ref_max } = strategy {
        label = format!("cl0_{delta_p_ref_max}");
    }
    if !opts.sim.plant.saturation_enabled {
        label.push_str("_unsaturated");
    }
    Ok(DoaBoundary {
        strategy: label,
        points,
        params: *params,
    })
}

/// Largest start angle in `[lo, hi]` from which the loop with initial
/// deviation `delta_omega0` is stable, by bisection to `tol`.
#[allow(clippy::too_many_arguments)]
pub fn max_stable_angle(
    strategy: &ControllerRef,
    params: &SystemParams,
    grid: &GridCondition,
    delta_omega0: f64,
    lo: f64,
    hi: f64,
    tol: f64,
    opts: &DoaOptions,
) -> Result<f64> {
    let (mut lo, mut hi) = (lo, hi);
    if !start_outcome(strategy, params, grid, lo, delta_omega0, opts)? {
        return Err(Error::Degenerate(format!(
            "unstable already at theta = {lo}"
        )));
    }
    if start_outcome(strategy, params, grid, hi, delta_omega0, opts)? {
        return Ok(hi);
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if start_outcome(strategy, params, grid, mid, delta_omega0, opts)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}
