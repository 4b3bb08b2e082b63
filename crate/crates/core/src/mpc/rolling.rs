use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{solve_warm, MpcConfig, MpcProblem, MpcSolution};
use crate::error::{Error, Result};
use crate::phasor::{GridCondition, SystemParams};
use crate::plant::{ApcState, ControlInput, Mode};

/// One row of `solve_log.csv`: a branch of one rolling solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveLogRow {
    pub tick: usize,
    pub switch_step: usize,
    pub objective: f64,
    pub feasible: bool,
    pub iterations: usize,
    pub residual: f64,
}

impl SolveLogRow {
    pub fn write_csv<W: Write>(rows: &[SolveLogRow], writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(writer);
        w.write_record([
            "tick",
            "switch_step",
            "objective",
            "feasible",
            "iterations",
            "residual",
        ])?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| Error::Csv(e.to_string()))
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Vec<SolveLogRow>> {
        csv::Reader::from_reader(reader)
            .deserialize()
            .map(|r| r.map_err(Error::from))
            .collect()
    }
}

struct Pending {
    solution: Option<MpcSolution>,
    solved_at: f64,
}

/// Receding-horizon driver with a one-interval computation delay: each tick
/// applies the input planned at the previous tick, then plans from the
/// current measurement.
pub struct RollingMpc {
    config: MpcConfig,
    /// Multiplier on the grid impedance seen by the prediction model.
    model_impedance_scale: f64,
    pending: Option<Pending>,
    applied_p: f64,
    theta_c: f64,
    tick: usize,
    log: Vec<SolveLogRow>,
    errors: Vec<String>,
}

impl RollingMpc {
    pub fn new(config: MpcConfig, model_impedance_scale: f64) -> Result<Self> {
        config.validate()?;
        if !(model_impedance_scale > 0.0 && model_impedance_scale.is_finite()) {
            return Err(Error::Config(
                "model_impedance_scale must be positive".into(),
            ));
        }
        Ok(Self {
            config,
            model_impedance_scale,
            pending: None,
            applied_p: 0.0,
            theta_c: 0.0,
            tick: 0,
            log: Vec::new(),
            errors: Vec::new(),
        })
    }

    pub fn config(&self) -> &MpcConfig {
        &self.config
    }

    /// Cumulative phase correction applied so far.
    pub fn theta_c(&self) -> f64 {
        self.theta_c
    }

    pub fn log(&self) -> &[SolveLogRow] {
        &self.log
    }

    pub fn errors(&self) -> &[String] {
        &self.errors
    }

    fn cl0(&self) -> ControlInput {
        ControlInput::new(-self.config.delta_p_ref_max, 0.0)
    }

    /// Called once per decision interval.
    pub fn rolling_step(
        &mut self,
        state: &ApcState,
        grid: &GridCondition,
        params: &SystemParams,
        v_ref: f64,
    ) -> ControlInput {
        if state.mode == Mode::Normal {
            self.pending = None;
            self.applied_p = 0.0;
            return ControlInput::ZERO;
        }
        let stale_after = 2.0 * self.config.step_td + 1e-9;
        let out = match &self.pending {
            None => ControlInput::ZERO,
            Some(p) if state.time - p.solved_at > stale_after => self.cl0(),
            Some(Pending { solution: None, .. }) => self.cl0(),
            Some(Pending {
                solution: Some(sol),
                ..
            }) => {
                let (dp, dth) = sol.next_input();
                let pmax = self.config.delta_p_ref_max;
                ControlInput::new(dp.clamp(-pmax, pmax), dth.min(0.0))
            }
        };
        self.theta_c += out.delta_theta_c;
        self.applied_p = out.delta_p_ref;

        let problem = MpcProblem {
            theta0: state.theta + out.delta_theta_c,
            omega0: state.omega,
            delta_theta_c0: self.theta_c,
            delta_p_ref0: self.applied_p,
            grid: grid.with_impedance_scale(self.model_impedance_scale),
            params: *params,
            v_ref,
            config: self.config,
        };
        let warm = self.pending.as_ref().and_then(|p| p.solution.as_ref());
        let result = solve_warm(&problem, warm);
        let solution = match result {
            Ok(sol) => {
                for b in &sol.diagnostics.branches {
                    self.log.push(SolveLogRow {
                        tick: self.tick,
                        switch_step: b.switch_step,
                        objective: b.objective,
                        feasible: b.feasible,
                        iterations: b.iterations,
                        residual: b.residual,
                    });
                }
                Some(sol)
            }
            Err(e) => {
                self.errors.push(format!(
                    "tick {} at t = {:.4} s: {e}",
                    self.tick, state.time
                ));
                None
            }
        };
        self.pending = Some(Pending {
            solution,
            solved_at: state.time,
        });
        self.tick += 1;
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (RollingMpc, GridCondition, SystemParams) {
        let params = SystemParams::default();
        (
            RollingMpc::new(MpcConfig::for_params(&params), 1.0).unwrap(),
            GridCondition::lossless(1.0, 0.46),
            params,
        )
    }

    #[test]
    fn first_tick_waits_then_applies_plan() {
        let (mut mpc, g, p) = setup();
        let mut s = ApcState::new(1.574, 1.0066, Mode::Saturated);
        s.time = 1.0;
        assert_eq!(mpc.rolling_step(&s, &g, &p, 1.01), ControlInput::ZERO);
        let planned = mpc
            .pending
            .as_ref()
            .unwrap()
            .solution
            .as_ref()
            .unwrap()
            .next_input();
        s.time += 0.02;
        s.theta += 0.05;
        let u = mpc.rolling_step(&s, &g, &p, 1.01);
        assert_eq!((u.delta_p_ref, u.delta_theta_c), planned);
        assert!(u.delta_p_ref < 0.0);
        assert!(!mpc.log().is_empty());
    }

    #[test]
    fn stale_plan_falls_back() {
        let (mut mpc, g, p) = setup();
        let mut s = ApcState::new(1.4, 1.005, Mode::Saturated);
        s.time = 0.5;
        mpc.rolling_step(&s, &g, &p, 1.01);
        s.time += 0.1;
        assert_eq!(
            mpc.rolling_step(&s, &g, &p, 1.01),
            ControlInput::new(-1.5, 0.0)
        );
    }

    #[test]
    fn normal_mode_resets_and_freezes_phase() {
        let (mut mpc, g, p) = setup();
        let mut s = ApcState::new(1.574, 1.0066, Mode::Saturated);
        for i in 0..4 {
            s.time = i as f64 * 0.02;
            mpc.rolling_step(&s, &g, &p, 1.01);
        }
        let frozen = mpc.theta_c();
        s.mode = Mode::Normal;
        assert_eq!(mpc.rolling_step(&s, &g, &p, 1.01), ControlInput::ZERO);
        assert_eq!(mpc.theta_c(), frozen);
        s.mode = Mode::Saturated;
        assert_eq!(mpc.rolling_step(&s, &g, &p, 1.01), ControlInput::ZERO);
    }

    #[test]
    fn solve_log_round_trip() {
        let rows = vec![
            SolveLogRow {
                tick: 0,
                switch_step: 3,
                objective: 1.25,
                feasible: true,
                iterations: 17,
                residual: 0.0,
            },
            SolveLogRow {
                tick: 0,
                switch_step: 4,
                objective: f64::INFINITY,
                feasible: false,
                iterations: 0,
                residual: f64::INFINITY,
            },
        ];
        let mut buf = Vec::new();
        SolveLogRow::write_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("tick,switch_step,objective,feasible,iterations,residual\n"));
        assert_eq!(SolveLogRow::read_csv(buf.as_slice()).unwrap(), rows);
    }
}
