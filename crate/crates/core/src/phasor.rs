//! Quasi-static phasor algebra of the inverter / Thevenin-grid network.
//!
//! Frame convention: the device d-axis leads the grid D-axis by the APC angle
//! `theta`, so the inverter voltage is `v∠0` and the grid voltage is
//! `v_g∠-theta` in device coordinates. Electrical quantities are per-unit and
//! `omega` is the per-unit APC frequency; `omega_n` (rad/s) converts it.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

/// Per-unit constants of the equivalent grid-forming device.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemParams {
    /// Apparent power base in VA. Informational only.
    pub s_base: f64,
    /// Nominal angular frequency, rad/s.
    pub omega_n: f64,
    /// Reference active power.
    pub p0: f64,
    /// Reference reactive power.
    pub q0: f64,
    /// Virtual inertia constant H, s.
    pub h: f64,
    /// Active droop coefficient; the damping term is `(omega - 1) / d_p`.
    pub d_p: f64,
    /// Reactive droop coefficient.
    pub d_q: f64,
    /// Reactive power controller voltage set point.
    pub v0: f64,
    /// Inverter-side current limit.
    pub i_s_max: f64,
    /// Angle of the saturated current reference relative to the d-axis, rad.
    pub beta: f64,
    /// Filter capacitance; zero neglects the capacitor.
    pub c_f: f64,
    /// Transformer reactance.
    pub x_tr: f64,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self {
            s_base: 310.0e6,
            omega_n: 2.0 * PI * 60.0,
            p0: 0.871,
            q0: 0.0645,
            h: 2.0,
            d_p: 0.03,
            d_q: 0.1,
            v0: 1.01,
            i_s_max: 1.2,
            beta: -FRAC_PI_4,
            c_f: 0.0,
            x_tr: 0.16,
        }
    }
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("s_base", self.s_base),
            ("omega_n", self.omega_n),
            ("p0", self.p0),
            ("q0", self.q0),
            ("h", self.h),
            ("d_p", self.d_p),
            ("d_q", self.d_q),
            ("v0", self.v0),
            ("i_s_max", self.i_s_max),
            ("beta", self.beta),
            ("c_f", self.c_f),
            ("x_tr", self.x_tr),
        ];
        for (name, value) in fields {
            ensure_finite(name, value)?;
        }
        if self.i_s_max <= 0.0 {
            return Err(Error::Parameter("i_s_max must be positive".into()));
        }
        if self.h <= 0.0 || self.d_p <= 0.0 || self.omega_n <= 0.0 {
            return Err(Error::Parameter(
                "h, d_p and omega_n must be positive".into(),
            ));
        }
        if !(self.beta > -FRAC_PI_2 && self.beta <= 0.0) {
            return Err(Error::Parameter(format!(
                "beta = {} must lie in (-pi/2, 0]",
                self.beta
            )));
        }
        if self.c_f < 0.0 || self.x_tr < 0.0 || self.s_base < 0.0 || self.v0 < 0.0 {
            return Err(Error::Parameter(
                "c_f, x_tr, s_base and v0 must be non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Angle where the saturated power curve crosses zero: `pi/2 - beta`.
    pub fn theta_zero_crossing(&self) -> f64 {
        FRAC_PI_2 - self.beta
    }
}

/// Thevenin equivalent seen from the device terminals (grid plus transformer).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridCondition {
    /// Thevenin voltage magnitude.
    pub v_g: f64,
    /// Total impedance magnitude `|Z_g + Z_t|`.
    pub z: f64,
    /// Impedance angle, rad.
    pub phi: f64,
    /// Reactive part of the total impedance.
    pub x: f64,
}

impl GridCondition {
    /// Lossless grid with total reactance `x`.
    pub fn lossless(v_g: f64, x: f64) -> Self {
        Self {
            v_g,
            z: x,
            phi: FRAC_PI_2,
            x,
        }
    }

    /// Lossless grid described by its own reactance; the transformer is added.
    pub fn from_grid_reactance(v_g: f64, z_g: f64, params: &SystemParams) -> Self {
        Self::lossless(v_g, z_g + params.x_tr)
    }

    pub fn with_voltage(self, v_g: f64) -> Self {
        Self { v_g, ..self }
    }

    /// Same impedance angle, magnitude scaled (used to model estimation error).
    pub fn with_impedance_scale(self, scale: f64) -> Self {
        Self {
            z: self.z * scale,
            x: self.x * scale,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("v_g", self.v_g),
            ("z", self.z),
            ("phi", self.phi),
            ("x", self.x),
        ] {
            ensure_finite(name, value)?;
        }
        if self.v_g < 0.0 {
            return Err(Error::Parameter("v_g must be non-negative".into()));
        }
        if self.z <= 0.0 {
            return Err(Error::Parameter("z must be positive".into()));
        }
        if !(self.phi > 0.0 && self.phi <= FRAC_PI_2) {
            return Err(Error::Parameter(format!(
                "phi = {} must lie in (0, pi/2]",
                self.phi
            )));
        }
        if (self.x - self.z * self.phi.sin()).abs() > 1e-9 * self.z.max(1.0) {
            return Err(Error::Parameter(format!(
                "x = {} inconsistent with z sin(phi) = {}",
                self.x,
                self.z * self.phi.sin()
            )));
        }
        Ok(())
    }
}

/// Complex phasor in the device dq frame (`re` = d-axis, `im` = q-axis).
pub type Phasor = Complex64;

/// Capacitor coupling factor `X C omega_n omega` shared by the threshold,
/// voltage and power formulas.
fn capacitor_coupling(grid: &GridCondition, params: &SystemParams, omega: f64) -> f64 {
    grid.x * params.c_f * params.omega_n * omega
}

fn capacitor_denominator(grid: &GridCondition, params: &SystemParams, omega: f64) -> Result<f64> {
    let den = 1.0 - capacitor_coupling(grid, params, omega);
    if den <= 0.0 {
        return Err(Error::Parameter(format!(
            "1 - X C omega_n omega = {den} must be positive"
        )));
    }
    Ok(den)
}

/// Inverter-side current `I_s = (V - V_g)/Z + j C V omega_n omega` in the device frame.
pub fn inverter_side_current(
    theta: f64,
    v: f64,
    grid: &GridCondition,
    params: &SystemParams,
    omega: f64,
) -> Result<Phasor> {
    for (name, value) in [("theta", theta), ("v", v), ("omega", omega)] {
        ensure_finite(name, value)?;
    }
    if v <= 0.0 {
        return Err(Error::Domain(format!(
            "terminal voltage v = {v} must be positive"
        )));
    }
    grid.validate()?;
    let (vz, vgz) = (v / grid.z, grid.v_g / grid.z);
    let re = vz * grid.phi.cos() - vgz * (theta + grid.phi).cos();
    let im = params.c_f * v * params.omega_n * omega + vgz * (theta + grid.phi).sin()
        - vz * grid.phi.sin();
    Ok(Phasor::new(re, im))
}

/// Right-hand side `R` of the saturation criterion: the unsaturated current
/// reaches the limit iff `cos(theta) <= R`.
pub fn saturation_rhs(
    v: f64,
    grid: &GridCondition,
    params: &SystemParams,
    omega: f64,
) -> Result<f64> {
    for (name, value) in [("v", v), ("omega", omega)] {
        ensure_finite(name, value)?;
    }
    grid.validate()?;
    if grid.v_g == 0.0 {
        return Err(Error::DegenerateGrid(
            "v_g = 0 makes the threshold undefined".into(),
        ));
    }
    if v <= 0.0 {
        return Err(Error::Domain(format!(
            "terminal voltage v = {v} must be positive"
        )));
    }
    let den = capacitor_denominator(grid, params, omega)?;
    let (vg, z) = (grid.v_g, grid.z);
    let cw = params.c_f * params.omega_n * omega;
    let zi = z * params.i_s_max;
    let bracket = 0.5 * (vg / v + v / vg) - zi * zi / (2.0 * vg * v)
        + v * cw * cw * z * z / (2.0 * vg)
        - z * (v / vg) * cw * grid.phi.sin();
    Ok(bracket / den)
}

/// Saturation threshold angle, `arccos(R)` with `R` clamped to `[-1, 1]`:
/// 0 when the device saturates at every angle and `pi` when it never does.
pub fn theta_sat(v: f64, grid: &GridCondition, params: &SystemParams, omega: f64) -> Result<f64> {
    let r = saturation_rhs(v, grid, params, omega)?;
    Ok(r.clamp(-1.0, 1.0).acos())
}

/// Terminal voltage `(v_d, v_q)` while the current is held at `i_s_max∠beta`,
/// capacitor neglected.
pub fn saturated_terminal_voltage(
    theta: f64,
    grid: &GridCondition,
    params: &SystemParams,
) -> Result<(f64, f64)> {
    ensure_finite("theta", theta)?;
    grid.validate()?;
    let zi = grid.z * params.i_s_max;
    let ang = params.beta + grid.phi;
    Ok((
        grid.v_g * theta.cos() + zi * ang.cos(),
        -grid.v_g * theta.sin() + zi * ang.sin(),
    ))
}

/// Terminal voltage for a lossless grid including the filter capacitor:
/// `V = (jX I_s + V_g) / (1 - X C omega_n omega)`.
pub fn saturated_voltage_with_capacitor(
    i_s: Phasor,
    theta: f64,
    grid: &GridCondition,
    params: &SystemParams,
    omega: f64,
) -> Result<Phasor> {
    if !(i_s.re.is_finite() && i_s.im.is_finite()) {
        return Err(Error::Domain("inverter current is not finite".into()));
    }
    ensure_finite("theta", theta)?;
    grid.validate()?;
    let den = capacitor_denominator(grid, params, omega)?;
    let v_grid = Phasor::from_polar(grid.v_g, -theta);
    Ok((Complex64::i() * i_s.scale(grid.x) + v_grid).unscale(den))
}

/// Normal-mode power-angle curve `P = V_g V sin(theta) / X`.
pub fn unsaturated_power(theta: f64, v: f64, grid: &GridCondition) -> Result<f64> {
    ensure_finite("theta", theta)?;
    ensure_finite("v", v)?;
    if grid.x <= 0.0 || !grid.x.is_finite() {
        return Err(Error::DegenerateGrid(format!(
            "reactance x = {} must be positive",
            grid.x
        )));
    }
    Ok(grid.v_g * v / grid.x * theta.sin())
}

/// Saturated power-angle curve `P = I_s_max V_g cos(theta + beta) / (1 - X C omega_n omega)`.
pub fn saturated_power(
    theta: f64,
    grid: &GridCondition,
    params: &SystemParams,
    omega: f64,
) -> Result<f64> {
    ensure_finite("theta", theta)?;
    ensure_finite("omega", omega)?;
    let den = capacitor_denominator(grid, params, omega)?;
    Ok(params.i_s_max * grid.v_g * (theta + params.beta).cos() / den)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strong() -> GridCondition {
        GridCondition::lossless(1.0, 0.46)
    }

    #[test]
    fn identical_voltages_draw_no_current() {
        let p = SystemParams::default();
        let i = inverter_side_current(0.0, 1.0, &strong(), &p, 1.0).unwrap();
        assert!(i.norm() < 1e-15);
    }

    #[test]
    fn current_power_matches_power_angle_curve() {
        let p = SystemParams::default();
        let g = strong();
        let theta = 0.4073;
        let i = inverter_side_current(theta, 1.01, &g, &p, 1.0).unwrap();
        let vg = Phasor::from_polar(g.v_g, -theta);
        let p_phasor = (vg * i.conj()).re;
        let p_curve = unsaturated_power(theta, 1.01, &g).unwrap();
        assert!((p_phasor - p_curve).abs() < 1e-12);
        assert!((p_curve - 0.8699).abs() < 5e-4);
    }

    #[test]
    fn current_beyond_limit_at_large_angle() {
        let p = SystemParams::default();
        let i = inverter_side_current(1.574, 1.01, &strong(), &p, 1.0).unwrap();
        assert!(i.norm() > 1.2);
    }

    #[test]
    fn threshold_values() {
        let p = SystemParams::default();
        let r = saturation_rhs(1.01, &strong(), &p, 1.0).unwrap();
        let expected = 0.5 * (1.0 / 1.01 + 1.01) - 0.552f64.powi(2) / 2.02;
        assert!((r - expected).abs() < 1e-12);
        assert!((r - 0.8492).abs() < 1e-4);
        assert!((theta_sat(1.01, &strong(), &p, 1.0).unwrap() - 0.5563).abs() < 1e-4);

        let sag = GridCondition::lossless(0.05, 0.46);
        let r = saturation_rhs(1.01, &sag, &p, 1.0).unwrap();
        assert!((r - 7.11).abs() < 0.01, "{r}");
        assert_eq!(theta_sat(1.01, &sag, &p, 1.0).unwrap(), 0.0);

        let weak_sag = GridCondition::lossless(0.05, 1.06);
        assert!(saturation_rhs(1.01, &weak_sag, &p, 1.0).unwrap() < -1.0);
        assert_eq!(theta_sat(1.01, &weak_sag, &p, 1.0).unwrap(), PI);
    }

    #[test]
    fn threshold_errors() {
        let p = SystemParams::default();
        assert!(matches!(
            saturation_rhs(1.01, &GridCondition::lossless(0.0, 0.46), &p, 1.0),
            Err(Error::DegenerateGrid(_))
        ));
        let big_c = SystemParams { c_f: 1.0, ..p };
        assert!(matches!(
            saturation_rhs(1.01, &strong(), &big_c, 1.0),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            inverter_side_current(f64::NAN, 1.0, &strong(), &p, 1.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn saturated_voltage_closed_form() {
        let p = SystemParams::default();
        let (vd, vq) = saturated_terminal_voltage(0.0, &strong(), &p).unwrap();
        assert!((vd - 1.3903).abs() < 1e-4 && (vq - 0.3903).abs() < 1e-4);
        let (vd, vq) = saturated_terminal_voltage(FRAC_PI_2, &strong(), &p).unwrap();
        assert!((vd - 0.3903).abs() < 1e-4 && (vq + 0.6097).abs() < 1e-4);
        let zero = SystemParams {
            i_s_max: 1e-300,
            ..p
        };
        let (vd, vq) = saturated_terminal_voltage(0.3, &strong(), &zero).unwrap();
        assert!((vd - 0.3f64.cos()).abs() < 1e-15 && (vq + 0.3f64.sin()).abs() < 1e-15);
    }

    #[test]
    fn capacitor_voltage_reduces_to_kvl() {
        let p = SystemParams::default();
        let g = strong();
        let v = saturated_voltage_with_capacitor(Phasor::new(0.0, 0.0), 0.7, &g, &p, 1.0).unwrap();
        assert!((v - Phasor::from_polar(1.0, -0.7)).norm() < 1e-15);
        let i = Phasor::new(0.3, -0.2);
        let v = saturated_voltage_with_capacitor(i, 0.0, &g, &p, 1.0).unwrap();
        assert!((v - (Phasor::new(1.0, 0.0) + Phasor::new(0.0, 0.46) * i)).norm() < 1e-15);
    }

    #[test]
    fn power_curves() {
        let p = SystemParams::default();
        let g = strong();
        assert_eq!(unsaturated_power(0.0, 1.01, &g).unwrap(), 0.0);
        let half = GridCondition::lossless(1.0, 0.5);
        assert!((unsaturated_power(FRAC_PI_2, 1.0, &half).unwrap() - 2.0).abs() < 1e-15);
        assert!(saturated_power(3.0 * FRAC_PI_4, &g, &p, 1.0).unwrap().abs() < 1e-15);
        assert!((saturated_power(1.5447, &g, &p, 1.0).unwrap() - 0.871).abs() < 1e-3);
        assert!((saturated_power(FRAC_PI_4, &g, &p, 1.0).unwrap() - 1.2).abs() < 1e-15);
        assert!(unsaturated_power(0.3, 1.0, &GridCondition { x: 0.0, ..g }).is_err());
    }

    #[test]
    fn param_validation() {
        assert!(SystemParams::default().validate().is_ok());
        let bad = SystemParams {
            beta: 0.1,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = SystemParams {
            i_s_max: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        assert!((SystemParams::default().theta_zero_crossing() - 2.3562).abs() < 1e-4);
        assert!(GridCondition { x: 0.3, ..strong() }.validate().is_err());
    }
}
