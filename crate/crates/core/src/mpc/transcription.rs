use super::inner::augmented_lagrangian;
use super::{equilibrium_angle, BranchReport, MpcConfig, MpcProblem, MpcSolution, FEASIBILITY_TOL};
use crate::error::{ensure_finite, Error, Result};
use crate::phasor::{theta_sat, GridCondition, SystemParams};

/// Power and phase-jump sequences of one branch.
pub(crate) type Controls = (Vec<f64>, Vec<f64>);

/// Predicted states `theta(0..=K)`, `omega(0..=K)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub theta: Vec<f64>,
    pub omega: Vec<f64>,
}

/// Discrete-time horizon program for a frozen grid snapshot.
#[derive(Debug, Clone)]
pub struct Transcription {
    pub k: usize,
    pub theta0: f64,
    pub omega0: f64,
    pub delta_p_ref0: f64,
    pub theta_sat: f64,
    pub theta_eq: f64,
    pub grid: GridCondition,
    pub params: SystemParams,
    pub v_ref: f64,
    pub config: MpcConfig,
    /// `omega_n T_d`: converts frequency constraints to radians per step.
    omega_scale: f64,
}

impl Transcription {
    pub fn new(problem: &MpcProblem) -> Result<Self> {
        let config = problem.config;
        config.validate()?;
        let k = config.steps()?;
        for (name, value) in [
            ("theta0", problem.theta0),
            ("omega0", problem.omega0),
            ("delta_theta_c0", problem.delta_theta_c0),
            ("delta_p_ref0", problem.delta_p_ref0),
        ] {
            ensure_finite(name, value)?;
        }
        if problem.theta0 < 0.0 || problem.theta0 > config.theta_zc {
            return Err(Error::Infeasible(format!(
                "theta(0) = {} outside [0, {}]",
                problem.theta0, config.theta_zc
            )));
        }
        let theta_eq = equilibrium_angle(&problem.params, &problem.grid, problem.v_ref)?;
        let theta_sat = theta_sat(
            problem.v_ref,
            &problem.grid,
            &problem.params,
            problem.omega0,
        )?;
        Ok(Self {
            k,
            theta0: problem.theta0,
            omega0: problem.omega0,
            delta_p_ref0: problem.delta_p_ref0,
            theta_sat,
            theta_eq,
            grid: problem.grid,
            params: problem.params,
            v_ref: problem.v_ref,
            config,
            omega_scale: problem.params.omega_n * config.step_td,
        })
    }

    pub fn n_binary(&self) -> usize {
        self.k
    }

    /// `delta_p_ref(0..K)` and `delta_theta_c(1..=K)`.
    pub fn n_controls(&self) -> usize {
        2 * self.k
    }

    pub fn n_states(&self) -> usize {
        2 * (self.k + 1)
    }

    fn power(&self, theta: f64, omega: f64, normal: bool) -> f64 {
        let (g, p) = (&self.grid, &self.params);
        if normal {
            g.v_g * self.v_ref / g.x * theta.sin()
        } else {
            p.i_s_max * g.v_g * (theta + p.beta).cos() / (1.0 - g.x * p.c_f * p.omega_n * omega)
        }
    }

    /// Forward recursion of the discrete swing model for switch step `s`,
    /// power corrections `p(0..K)` and phase increments `d(0..K)`.
    pub fn rollout(&self, s: usize, p: &[f64], d: &[f64]) -> Rollout {
        let k = self.k;
        let td = self.config.step_td;
        let prm = &self.params;
        let mut theta = Vec::with_capacity(k + 1);
        let mut omega = Vec::with_capacity(k + 1);
        theta.push(self.theta0);
        omega.push(self.omega0);
        for i in 0..k {
            let (th, w) = (theta[i], omega[i]);
            let pe = self.power(th, w, i >= s);
            theta.push(th + d[i] + td * prm.omega_n * (w - 1.0));
            omega.push(w + td / (2.0 * prm.h) * (prm.p0 + p[i] - pe - (w - 1.0) / prm.d_p));
        }
        Rollout { theta, omega }
    }

    /// Sum of squared angle deviations over `k = 0..K-1`.
    pub fn objective(&self, roll: &Rollout) -> f64 {
        roll.theta[..self.k]
            .iter()
            .map(|t| (t - self.theta_eq).powi(2))
            .sum()
    }

    /// Coupled state constraints `c <= 0`, frequency rows in radians per step.
    pub fn path_constraints(&self, s: usize, roll: &Rollout, out: &mut Vec<f64>) {
        let cfg = &self.config;
        out.clear();
        for i in 0..self.k {
            let step = roll.theta[i + 1] - roll.theta[i];
            out.push(step - cfg.delta_theta_max);
            out.push(cfg.delta_theta_min - step);
        }
        for i in 1..=self.k {
            out.push((roll.omega[i] - cfg.omega_max) * self.omega_scale);
            out.push((cfg.omega_min - roll.omega[i]) * self.omega_scale);
            out.push(roll.theta[i] - cfg.theta_zc);
            out.push(-roll.theta[i]);
        }
        for i in 1..self.k {
            let n = f64::from(u8::from(i >= s));
            let gap = self.theta_sat - roll.theta[i];
            out.push(gap - cfg.big_m * n);
            out.push(-cfg.big_m * (1.0 - n) - gap);
        }
    }

    /// Largest violation, unscaled, of every horizon constraint including the
    /// big-M rows at `k = 0`, the control bounds and binary monotonicity.
    pub fn max_violation(&self, s: usize, p: &[f64], d: &[f64], roll: &Rollout) -> f64 {
        let cfg = &self.config;
        let mut v = 0.0f64;
        let mut upd = |x: f64| v = v.max(x);
        for i in 0..self.k {
            let n = f64::from(u8::from(i >= s));
            let gap = self.theta_sat - roll.theta[i];
            upd(gap - cfg.big_m * n);
            upd(-cfg.big_m * (1.0 - n) - gap);
            let step = roll.theta[i + 1] - roll.theta[i];
            upd(step - cfg.delta_theta_max);
            upd(cfg.delta_theta_min - step);
            upd(d[i]);
            upd(-cfg.delta_theta_chg_max * (1.0 - n) - d[i]);
            if i >= 1 {
                upd(p[i].abs() - cfg.delta_p_ref_max * (1.0 - n));
            }
        }
        for i in 1..=self.k {
            upd(roll.omega[i] - cfg.omega_max);
            upd(cfg.omega_min - roll.omega[i]);
            upd(roll.theta[i] - cfg.theta_zc);
            upd(-roll.theta[i]);
        }
        if (p[0] - self.delta_p_ref0).abs() > 0.0 {
            upd((p[0] - self.delta_p_ref0).abs());
        }
        v
    }

    /// Whether switch step `s` can satisfy the mode logic at all.
    fn reachable(&self, s: usize) -> bool {
        let tol = FEASIBILITY_TOL;
        if s == 0 {
            return self.theta0 <= self.theta_sat + tol;
        }
        if self.theta0 < self.theta_sat - tol {
            return false;
        }
        s == self.k || self.theta0 + s as f64 * self.config.delta_theta_min <= self.theta_sat + tol
    }

    /// Expands the free variables of branch `s` into full control sequences.
    fn unpack(&self, s: usize, z: &[f64], p: &mut [f64], d: &mut [f64]) {
        let (np, sp, sd) = self.layout(s);
        p.fill(0.0);
        d.fill(0.0);
        p[0] = self.delta_p_ref0;
        for j in 0..np {
            p[j + 1] = z[j] * sp;
        }
        for j in 0..s {
            d[j] = z[np + j] * sd;
        }
    }

    /// Number of free power corrections and the variable scales.
    fn layout(&self, s: usize) -> (usize, f64, f64) {
        let sp = if self.config.delta_p_ref_max > 0.0 {
            self.config.delta_p_ref_max
        } else {
            1.0
        };
        let sd = if self.config.delta_theta_chg_max > 0.0 {
            self.config.delta_theta_chg_max
        } else {
            1.0
        };
        (s.min(self.k).saturating_sub(1), sp, sd)
    }

    /// Scaled box bounds of branch `s`.
    fn bounds(&self, s: usize) -> (Vec<f64>, Vec<f64>) {
        let (np, _, _) = self.layout(s);
        let pmax = f64::from(u8::from(self.config.delta_p_ref_max > 0.0));
        let dmax = f64::from(u8::from(self.config.delta_theta_chg_max > 0.0));
        let mut lo = vec![-pmax; np];
        let mut hi = vec![pmax; np];
        lo.extend(std::iter::repeat_n(-dmax, s));
        hi.extend(std::iter::repeat_n(0.0, s));
        (lo, hi)
    }

    /// Control sequences of the feasible law: full negative power correction
    /// while saturated, no phase jump.
    pub fn cl0_controls(&self, s: usize) -> (Vec<f64>, Vec<f64>) {
        let mut p = vec![0.0; self.k];
        p[0] = self.delta_p_ref0;
        for pk in p.iter_mut().take(s.min(self.k)).skip(1) {
            *pk = -self.config.delta_p_ref_max;
        }
        (p, vec![0.0; self.k])
    }

    fn starts(&self, s: usize, warm: Option<&MpcSolution>) -> Vec<Vec<f64>> {
        let (np, sp, sd) = self.layout(s);
        let (lo, hi) = self.bounds(s);
        let mut starts = Vec::new();
        let mut cl0 = vec![0.0; np + s];
        cl0[..np]
            .iter_mut()
            .for_each(|v| *v = lo.first().copied().unwrap_or(-1.0));
        starts.push(cl0.clone());
        starts.push(vec![0.0; np + s]);
        let mut aggressive = cl0;
        aggressive[np..].iter_mut().for_each(|v| *v = -0.5);
        starts.push(aggressive);
        if let Some(w) = warm {
            let mut z = vec![0.0; np + s];
            for (j, zj) in z[..np].iter_mut().enumerate() {
                *zj = w.delta_p_ref.get(j + 2).copied().unwrap_or(0.0) / sp;
            }
            for j in 0..s {
                let inc = match (w.delta_theta_c.get(j + 2), w.delta_theta_c.get(j + 1)) {
                    (Some(a), Some(b)) => a - b,
                    _ => 0.0,
                };
                z[np + j] = inc / sd;
            }
            for (zi, (&l, &h)) in z.iter_mut().zip(lo.iter().zip(&hi)) {
                *zi = zi.clamp(l, h);
            }
            starts.push(z);
        }
        starts
    }

    /// Best feasible controls of branch `s`, or `None` with a diagnostic report.
    pub(crate) fn solve_branch(
        &self,
        s: usize,
        warm: Option<&MpcSolution>,
    ) -> (BranchReport, Option<Controls>) {
        let mut report = BranchReport {
            switch_step: s,
            objective: f64::INFINITY,
            feasible: false,
            iterations: 0,
            residual: f64::INFINITY,
            hit_iteration_cap: false,
        };
        if !self.reachable(s) {
            return (report, None);
        }
        let k = self.k;
        let mut best: Option<(f64, Vec<f64>, Vec<f64>)> = None;
        let mut consider = |p: Vec<f64>, d: Vec<f64>, report: &mut BranchReport| {
            let roll = self.rollout(s, &p, &d);
            let residual = self.max_violation(s, &p, &d, &roll);
            report.residual = report.residual.min(residual);
            if residual <= FEASIBILITY_TOL {
                let obj = self.objective(&roll);
                if best.as_ref().is_none_or(|b| obj < b.0) {
                    best = Some((obj, p, d));
                }
            }
        };

        let (cp, cd) = self.cl0_controls(s);
        consider(cp, cd, &mut report);

        let (lo, hi) = self.bounds(s);
        if !lo.is_empty() {
            let eval = |z: &[f64], c: &mut Vec<f64>| {
                let mut p = vec![0.0; k];
                let mut d = vec![0.0; k];
                self.unpack(s, z, &mut p, &mut d);
                let roll = self.rollout(s, &p, &d);
                self.path_constraints(s, &roll, c);
                self.objective(&roll)
            };
            for z0 in self.starts(s, warm) {
                let r = augmented_lagrangian(
                    &eval,
                    &z0,
                    &lo,
                    &hi,
                    self.config.inner_tol,
                    self.config.inner_max_iter,
                );
                report.iterations += r.iterations;
                report.hit_iteration_cap |= r.hit_cap;
                let mut p = vec![0.0; k];
                let mut d = vec![0.0; k];
                self.unpack(s, &r.x, &mut p, &mut d);
                consider(p, d, &mut report);
            }
        }
        match best {
            Some((obj, p, d)) => {
                report.objective = obj;
                report.feasible = true;
                let roll = self.rollout(s, &p, &d);
                report.residual = self.max_violation(s, &p, &d, &roll);
                (report, Some((p, d)))
            }
            None => (report, None),
        }
    }
}
