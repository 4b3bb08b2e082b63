//! Rolling-horizon corrective MPC.
//!
//! The mode binaries `n(k)` are nondecreasing, so the mixed-integer program is
//! solved exactly by enumerating the switch step `s` (`n(k) = 0` for `k < s`)
//! and solving one smooth program per branch.

mod inner;
mod rolling;
mod transcription;

pub use inner::{forward_gradient, minimize_box, BoxMinimum};
pub use rolling::{RollingMpc, SolveLogRow};
pub use transcription::{Rollout, Transcription};

use std::f64::consts::{PI, TAU};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::phasor::{GridCondition, SystemParams};

/// Start states this far above the zero-crossing bound are reported unsafe
/// instead of being clamped.
const UNSAFE_START_MARGIN: f64 = 0.01;
pub const FEASIBILITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpcConfig {
    /// Prediction horizon T, s.
    pub horizon_t: f64,
    /// Decision interval T_d, s.
    pub step_td: f64,
    pub delta_p_ref_max: f64,
    /// Largest phase-correction magnitude per step, rad.
    pub delta_theta_chg_max: f64,
    pub delta_theta_min: f64,
    pub delta_theta_max: f64,
    pub omega_min: f64,
    pub omega_max: f64,
    pub theta_zc: f64,
    pub big_m: f64,
    pub inner_tol: f64,
    pub inner_max_iter: usize,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            horizon_t: 0.2,
            step_td: 0.02,
            delta_p_ref_max: 1.5,
            delta_theta_chg_max: 0.15,
            delta_theta_min: -0.15,
            delta_theta_max: 0.15,
            omega_min: 0.99,
            omega_max: 1.02,
            theta_zc: 0.75 * PI,
            big_m: TAU,
            inner_tol: 1e-6,
            inner_max_iter: 200,
        }
    }
}

impl MpcConfig {
    /// Default configuration with the zero-crossing bound of `params`.
    pub fn for_params(params: &SystemParams) -> Self {
        Self {
            theta_zc: params.theta_zero_crossing(),
            ..Self::default()
        }
    }

    /// Horizon length `K = T / T_d`.
    pub fn steps(&self) -> Result<usize> {
        if !(self.step_td > 0.0) || !(self.horizon_t > 0.0) {
            return Err(Error::Config(
                "horizon_t and step_td must be positive".into(),
            ));
        }
        let ratio = self.horizon_t / self.step_td;
        let k = ratio.round();
        if k < 1.0 || (ratio - k).abs() > 1e-6 {
            return Err(Error::Config(format!(
                "horizon_t / step_td = {ratio} is not a positive integer"
            )));
        }
        Ok(k as usize)
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("horizon_t", self.horizon_t),
            ("step_td", self.step_td),
            ("delta_p_ref_max", self.delta_p_ref_max),
            ("delta_theta_chg_max", self.delta_theta_chg_max),
            ("delta_theta_min", self.delta_theta_min),
            ("delta_theta_max", self.delta_theta_max),
            ("omega_min", self.omega_min),
            ("omega_max", self.omega_max),
            ("theta_zc", self.theta_zc),
            ("big_m", self.big_m),
            ("inner_tol", self.inner_tol),
        ];
        for (name, value) in fields {
            ensure_finite(name, value).map_err(|e| Error::Config(e.to_string()))?;
        }
        self.steps()?;
        if !(self.omega_min < 1.0 && 1.0 < self.omega_max) {
            return Err(Error::Config(
                "omega_min < 1 < omega_max is required".into(),
            ));
        }
        if self.big_m < TAU {
            return Err(Error::Config(format!(
                "big_m = {} must be at least 2 pi",
                self.big_m
            )));
        }
        if self.delta_p_ref_max < 0.0 || self.delta_theta_chg_max < 0.0 {
            return Err(Error::Config("control limits must be non-negative".into()));
        }
        if !(self.delta_theta_min < 0.0 && 0.0 < self.delta_theta_max) {
            return Err(Error::Config(
                "delta_theta_min < 0 < delta_theta_max is required".into(),
            ));
        }
        if !(self.theta_zc > 0.0) || !(self.inner_tol > 0.0) || self.inner_max_iter == 0 {
            return Err(Error::Config(
                "theta_zc, inner_tol and inner_max_iter must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Initial conditions and frozen model data of one horizon solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MpcProblem {
    pub theta0: f64,
    pub omega0: f64,
    pub delta_theta_c0: f64,
    /// Power correction applied during the first interval; fixed.
    pub delta_p_ref0: f64,
    pub grid: GridCondition,
    pub params: SystemParams,
    pub v_ref: f64,
    pub config: MpcConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchReport {
    pub switch_step: usize,
    /// Best objective in this branch, infinite when infeasible.
    pub objective: f64,
    pub feasible: bool,
    pub iterations: usize,
    pub residual: f64,
    pub hit_iteration_cap: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SolveDiagnostics {
    pub branches: Vec<BranchReport>,
    pub iterations: usize,
    pub residual: f64,
    pub hit_iteration_cap: bool,
    /// The start angle was pulled back inside the zero-crossing bound.
    pub clamped_start: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcSolution {
    /// `theta(0..=K)`.
    pub theta: Vec<f64>,
    pub omega: Vec<f64>,
    /// `n(0..K)`: 1 = normal, 0 = saturated.
    pub n: Vec<u8>,
    /// `delta_p_ref(0..K)`.
    pub delta_p_ref: Vec<f64>,
    /// Cumulative phase correction `delta_theta_c(0..=K)`.
    pub delta_theta_c: Vec<f64>,
    pub objective: f64,
    pub switch_step: usize,
    pub theta_eq: f64,
    pub diagnostics: SolveDiagnostics,
}

impl MpcSolution {
    /// Input to apply one interval after the solve: `(delta_p_ref(1), delta_theta_c(1) - delta_theta_c(0))`.
    pub fn next_input(&self) -> (f64, f64) {
        let p = self.delta_p_ref.get(1).copied().unwrap_or(0.0);
        (p, self.delta_theta_c[1] - self.delta_theta_c[0])
    }
}

/// `arcsin(p0 X / (v_g v_ref))`.
pub fn equilibrium_angle(params: &SystemParams, grid: &GridCondition, v_ref: f64) -> Result<f64> {
    let arg = params.p0 * grid.x / (grid.v_g * v_ref);
    if !arg.is_finite() || arg.abs() > 1.0 {
        return Err(Error::NoEquilibrium(format!(
            "p0 X / (v_g v_ref) = {arg} lies outside [-1, 1]"
        )));
    }
    Ok(arg.asin())
}

pub fn transcribe(problem: &MpcProblem) -> Result<Transcription> {
    Transcription::new(problem)
}

pub fn solve(problem: &MpcProblem) -> Result<MpcSolution> {
    solve_warm(problem, None)
}

/// Branch-and-solve with an optional previous solution used as a shifted warm start.
pub fn solve_warm(problem: &MpcProblem, warm: Option<&MpcSolution>) -> Result<MpcSolution> {
    let mut problem = *problem;
    let mut clamped = false;
    let zc = problem.config.theta_zc;
    if problem.theta0 > zc {
        if problem.theta0 > zc + UNSAFE_START_MARGIN {
            return Err(Error::UnsafeStart {
                theta: problem.theta0,
                theta_zc: zc,
            });
        }
        problem.theta0 = zc - 1e-9;
        clamped = true;
    }
    let tr = Transcription::new(&problem)?;
    let k = tr.k;

    let reports: Vec<(BranchReport, Option<transcription::Controls>)> = (0..=k)
        .into_par_iter()
        .map(|s| tr.solve_branch(s, warm))
        .collect();

    let mut diagnostics = SolveDiagnostics {
        clamped_start: clamped,
        ..Default::default()
    };
    let mut best: Option<(usize, f64, Vec<f64>, Vec<f64>)> = None;
    for (report, controls) in reports {
        diagnostics.iterations += report.iterations;
        diagnostics.hit_iteration_cap |= report.hit_iteration_cap;
        if let Some((p, d)) = controls {
            if best.as_ref().is_none_or(|b| report.objective < b.1) {
                best = Some((report.switch_step, report.objective, p, d));
            }
        }
        diagnostics.branches.push(report);
    }
    let Some((s, objective, p, d)) = best else {
        return Err(Error::Infeasible(format!(
            "no switch step admits a feasible trajectory from theta = {}, omega = {}",
            problem.theta0, problem.omega0
        )));
    };
    let roll = tr.rollout(s, &p, &d);
    diagnostics.residual = tr.max_violation(s, &p, &d, &roll);
    let mut theta_c = Vec::with_capacity(k + 1);
    theta_c.push(problem.delta_theta_c0);
    for dk in &d {
        theta_c.push(theta_c.last().unwrap() + dk);
    }
    Ok(MpcSolution {
        theta: roll.theta,
        omega: roll.omega,
        n: (0..k).map(|i| u8::from(i >= s)).collect(),
        delta_p_ref: p,
        delta_theta_c: theta_c,
        objective,
        switch_step: s,
        theta_eq: tr.theta_eq,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strong() -> GridCondition {
        GridCondition::lossless(1.0, 0.46)
    }

    fn problem(theta0: f64, omega0: f64) -> MpcProblem {
        let params = SystemParams::default();
        MpcProblem {
            theta0,
            omega0,
            delta_theta_c0: 0.0,
            delta_p_ref0: 0.0,
            grid: strong(),
            params,
            v_ref: 1.01,
            config: MpcConfig::for_params(&params),
        }
    }

    #[test]
    fn equilibrium_angle_cases() {
        let p = SystemParams::default();
        assert!((equilibrium_angle(&p, &strong(), 1.01).unwrap() - 0.4079).abs() < 1e-4);
        let zero = SystemParams { p0: 0.0, ..p };
        assert_eq!(equilibrium_angle(&zero, &strong(), 1.01).unwrap(), 0.0);
        let heavy = SystemParams { p0: 3.0, ..p };
        assert!(matches!(
            equilibrium_angle(&heavy, &strong(), 1.01),
            Err(Error::NoEquilibrium(_))
        ));
    }

    #[test]
    fn config_validation() {
        assert_eq!(MpcConfig::default().steps().unwrap(), 10);
        assert!(MpcConfig::default().validate().is_ok());
        let bad = MpcConfig {
            horizon_t: 0.03,
            ..Default::default()
        };
        assert!(matches!(bad.steps(), Err(Error::Config(_))));
        let bad = MpcConfig {
            big_m: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = MpcConfig {
            omega_max: 0.999,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn equilibrium_needs_no_action() {
        let theta_eq = equilibrium_angle(&SystemParams::default(), &strong(), 1.01).unwrap();
        let sol = solve(&problem(theta_eq, 1.0)).unwrap();
        assert_eq!(sol.switch_step, 0);
        assert!(sol.objective < 1e-20);
        assert!(sol.delta_p_ref.iter().all(|&p| p == 0.0));
        assert!(sol.delta_theta_c.iter().all(|&c| c == 0.0));
    }

    #[test]
    fn post_fault_solve_decelerates() {
        let sol = solve(&problem(1.574, 1.0066)).unwrap();
        assert!(sol.switch_step >= 1);
        assert!(sol.delta_p_ref[1] < 0.0, "{:?}", sol.delta_p_ref);
        assert!(sol.delta_theta_c.windows(2).all(|w| w[1] <= w[0]));
        assert!(sol.diagnostics.residual <= FEASIBILITY_TOL);
        assert!(sol.n.windows(2).all(|w| w[0] <= w[1]));
        let zc = MpcConfig::default().theta_zc;
        assert!(sol.theta.iter().all(|&t| (0.0..=zc).contains(&t)));
    }

    #[test]
    fn unsafe_start_is_rejected() {
        let zc = MpcConfig::default().theta_zc;
        assert!(matches!(
            solve(&problem(zc + 0.05, 1.0)),
            Err(Error::UnsafeStart { .. })
        ));
        let sol = solve(&problem(zc + 0.001, 1.0)).unwrap();
        assert!(sol.diagnostics.clamped_start);
    }

    #[test]
    fn next_input_is_step_one() {
        let sol = solve(&problem(1.2, 1.004)).unwrap();
        let (p, d) = sol.next_input();
        assert_eq!(p, sol.delta_p_ref[1]);
        assert_eq!(d, sol.delta_theta_c[1] - sol.delta_theta_c[0]);
    }
}
