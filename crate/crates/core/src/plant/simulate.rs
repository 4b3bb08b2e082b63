use serde::{Deserialize, Serialize};

use super::{
    electrical_power, mode_transition, step_with, terminal_voltage, ApcState, ControlInput,
    FaultScenario, Mode, PlantOptions, StepContext, TrajectoryRecord, TrajectorySample,
};
use crate::controllers::{ControllerRef, Decision, DecisionContext};
use crate::error::{ensure_finite, Error, Result};
use crate::mpc::SolveLogRow;
use crate::phasor::SystemParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimOptions {
    /// Integration step, s.
    pub dt: f64,
    /// Final time, s.
    pub t_end: f64,
    pub plant: PlantOptions,
    /// Stop early once `theta` exceeds this angle.
    pub abort_above_theta: Option<f64>,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            dt: 5e-4,
            t_end: 2.0,
            plant: PlantOptions::default(),
            abort_above_theta: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimulationOutput {
    pub trajectory: TrajectoryRecord,
    pub solve_log: Vec<SolveLogRow>,
    /// Strategy failures; each one zeroed the corrective input.
    pub controller_errors: Vec<String>,
}

pub fn simulate(
    initial: &ApcState,
    scenario: &FaultScenario,
    strategy: &ControllerRef,
    params: &SystemParams,
    options: &SimOptions,
) -> Result<TrajectoryRecord> {
    simulate_detailed(initial, scenario, strategy, params, options).map(|o| o.trajectory)
}

fn steps_in(interval: f64, dt: f64) -> Result<usize> {
    let ratio = interval / dt;
    let n = ratio.round();
    if n < 1.0 || (ratio - n).abs() > 1e-6 * n.max(1.0) {
        return Err(Error::Config(format!(
            "dt = {dt} s does not divide the interval {interval} s"
        )));
    }
    Ok(n as usize)
}

/// Closed-loop run returning the trajectory, MPC solve log and any strategy errors.
pub fn simulate_detailed(
    initial: &ApcState,
    scenario: &FaultScenario,
    strategy: &ControllerRef,
    params: &SystemParams,
    options: &SimOptions,
) -> Result<SimulationOutput> {
    params.validate()?;
    scenario.validate()?;
    options.plant.validate()?;
    ensure_finite("theta", initial.theta)?;
    ensure_finite("omega", initial.omega)?;
    let dt = options.dt;
    if !(dt > 0.0) || !(options.t_end >= initial.time) {
        return Err(Error::Config(format!(
            "need dt > 0 and t_end >= start time, got dt = {dt}, t_end = {}",
            options.t_end
        )));
    }
    let mut controller = strategy.build()?;
    let tick_every = match controller.decision_interval() {
        Some(td) => steps_in(td, dt)?,
        None => 1,
    };
    let omega_bound = controller.omega_bound();

    // Event times are mapped to step indices on the absolute time grid.
    let index_of = |t: f64| (t / dt).round() as i64;
    let first = index_of(initial.time);
    let n_steps = (index_of(options.t_end) - first).max(0) as usize;
    let (on, clear) = (
        index_of(scenario.t_fault_on),
        index_of(scenario.t_fault_clear),
    );
    let grid_at = |idx: i64| {
        if idx < on {
            &scenario.pre_fault
        } else if idx < clear {
            &scenario.fault
        } else {
            &scenario.post_fault
        }
    };

    let mut state = *initial;
    state.time = first as f64 * dt;
    let vref_source = options.plant.voltage_reference;
    let mut held_p = 0.0;
    let mut theta_c = 0.0;
    let mut errors = Vec::new();
    let mut samples = Vec::with_capacity(n_steps + 1);

    let sample =
        |state: &ApcState, held_p: f64, theta_c: f64, idx: i64| -> Result<TrajectorySample> {
            let grid = grid_at(idx);
            let v_ref = vref_source.v_ref(state.theta, grid, params);
            let (v_d, v_q) = terminal_voltage(state, grid, params, v_ref)?;
            Ok(TrajectorySample {
                time: state.time,
                theta: state.theta,
                omega: state.omega,
                mode: state.mode,
                p_out: electrical_power(state, grid, params, v_ref)?,
                v_d,
                v_q,
                delta_p_ref: held_p,
                delta_theta_c: theta_c,
            })
        };
    samples.push(sample(&state, 0.0, 0.0, first)?);

    let mut prev_grid = None;
    for i in 0..n_steps {
        let idx = first + i as i64;
        let grid = grid_at(idx);
        let v_ref = vref_source.v_ref(state.theta, grid, params);
        if prev_grid != Some(grid) {
            state.mode = mode_transition(&state, grid, params, v_ref, &options.plant);
            prev_grid = Some(grid);
        }
        let ctx = DecisionContext {
            state: &state,
            grid,
            params,
            v_ref,
            tick: idx.rem_euclid(tick_every as i64) == 0,
            post_fault: idx >= clear,
        };
        let mut jump = 0.0;
        match controller.decide(&ctx) {
            Ok(Decision::Hold) => {}
            Ok(Decision::Apply(u)) => {
                held_p = u.delta_p_ref;
                jump = u.delta_theta_c;
            }
            Err(e) => {
                errors.push(format!("t = {:.4} s: {e}", state.time));
                held_p = 0.0;
            }
        }
        if state.mode == Mode::Normal {
            held_p = 0.0;
            jump = 0.0;
        }
        theta_c += jump;
        let step_ctx = StepContext {
            grid,
            params,
            v_ref,
            options: &options.plant,
            omega_bound,
        };
        let mut next = step_with(&state, &ControlInput::new(held_p, jump), dt, &step_ctx)?;
        next.time = (idx + 1) as f64 * dt;
        state = next;
        samples.push(sample(&state, held_p, theta_c, idx)?);
        if options
            .abort_above_theta
            .is_some_and(|limit| state.theta > limit)
        {
            break;
        }
    }
    errors.extend(controller.errors().iter().cloned());
    Ok(SimulationOutput {
        trajectory: TrajectoryRecord { samples },
        solve_log: controller.solve_log().to_vec(),
        controller_errors: errors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phasor::GridCondition;

    fn strong() -> GridCondition {
        GridCondition::lossless(1.0, 0.46)
    }

    fn theta_eq() -> f64 {
        (0.871f64 * 0.46 / 1.01).asin()
    }

    #[test]
    fn undisturbed_run_stays_put() {
        let p = SystemParams::default();
        let opts = SimOptions::default();
        let init = ApcState::new(theta_eq(), 1.0, Mode::Normal);
        let rec = simulate(
            &init,
            &FaultScenario::steady(strong()),
            &ControllerRef::Original,
            &p,
            &opts,
        )
        .unwrap();
        assert_eq!(rec.len(), 4001);
        assert!(rec
            .samples
            .iter()
            .all(|s| (s.theta - theta_eq()).abs() < 1e-6));
        assert!(rec.validate().is_ok());
    }

    #[test]
    fn deterministic() {
        let p = SystemParams::default();
        let opts = SimOptions {
            t_end: 1.0,
            ..Default::default()
        };
        let init = ApcState::new(theta_eq(), 1.0, Mode::Normal);
        let sc = FaultScenario::voltage_sag(strong(), 0.05, 0.1, 0.2);
        let strat = ControllerRef::from_name("mpc", &p).unwrap();
        let a = simulate_detailed(&init, &sc, &strat, &p, &opts).unwrap();
        let b = simulate_detailed(&init, &sc, &strat, &p, &opts).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bound_limits_rise_during_fault() {
        let p = SystemParams::default();
        let opts = SimOptions {
            t_end: 0.4,
            ..Default::default()
        };
        let init = ApcState::new(theta_eq(), 1.0, Mode::Normal);
        let sc = FaultScenario::voltage_sag(strong(), 0.05, 0.0, 0.4);
        let strat = ControllerRef::FrequencyBound {
            delta_omega_max: 0.0066,
        };
        let rec = simulate(&init, &sc, &strat, &p, &opts).unwrap();
        for s in &rec.samples {
            assert!((s.omega - 1.0).abs() <= 0.0066 + 1e-15);
            assert!(s.theta <= theta_eq() + p.omega_n * 0.0066 * s.time + 1e-12);
        }
    }

    #[test]
    fn rejects_non_dividing_step() {
        let p = SystemParams::default();
        let opts = SimOptions {
            dt: 0.003,
            ..Default::default()
        };
        let init = ApcState::new(theta_eq(), 1.0, Mode::Normal);
        let strat = ControllerRef::from_name("mpc", &p).unwrap();
        assert!(matches!(
            simulate(&init, &FaultScenario::steady(strong()), &strat, &p, &opts),
            Err(Error::Config(_))
        ));
    }
}
