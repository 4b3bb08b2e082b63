//! Scenario file: one TOML document with a table per concern.

use std::path::{Path, PathBuf};

use gridform_core::analysis::{DoaOptions, FaultSetup, SweepConfig};
use gridform_core::controllers::DEFAULT_DELTA_OMEGA_MAX;
use gridform_core::{
    ControllerRef, GridCondition, MpcConfig, MpcStrategy, PlantOptions, SimOptions, SystemParams,
};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub output_dir: PathBuf,
    pub params: SystemParams,
    pub grid: GridBlock,
    pub fault: FaultBlock,
    pub strategy: StrategyBlock,
    pub mpc: MpcConfig,
    pub run: RunBlock,
    pub cct: CctBlock,
    pub doa: DoaBlock,
    pub sweep: SweepBlock,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridBlock {
    pub v_g: f64,
    /// Grid Thevenin reactance; the transformer reactance is added to it.
    pub z_g: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FaultBlock {
    pub v_fault: f64,
    pub t_on: f64,
    /// Zero runs without a fault.
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrategyBlock {
    pub kind: String,
    /// Frequency band of `frequency_bound` and of the MPC plant clamp.
    pub delta_omega_max: f64,
    /// Whether the MPC runs with the plant frequency band.
    pub mpc_frequency_bound: bool,
    /// Power correction limit of `cl0`.
    pub delta_p_ref_max: f64,
    pub model_impedance_scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunBlock {
    pub dt: f64,
    /// Simulated time after fault clearance.
    pub post_clear: f64,
    /// Seed for randomized checks; every subcommand is deterministic.
    pub seed: u64,
    pub plant: PlantOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CctBlock {
    pub strategies: Vec<String>,
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DoaBlock {
    pub theta_points: usize,
    pub omega_min: f64,
    pub omega_max: f64,
    pub omega_tol: f64,
    pub horizon: f64,
    /// Power correction limits swept when the strategy is `cl0`.
    pub cl0_levels: Vec<f64>,
    /// Adds the same boundary for the plant without current saturation.
    pub compare_unsaturated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepBlock {
    /// Swept values; empty selects the built-in range of the sweep kind.
    pub values: Vec<f64>,
    /// Grid reactance override; negative keeps the default of the sweep kind.
    pub z_g: f64,
    /// Fault duration of the trajectory sweeps.
    pub fault_duration: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let params = SystemParams::default();
        Self {
            output_dir: PathBuf::from("out"),
            params,
            grid: GridBlock::default(),
            fault: FaultBlock::default(),
            strategy: StrategyBlock::default(),
            mpc: MpcConfig::for_params(&params),
            run: RunBlock::default(),
            cct: CctBlock::default(),
            doa: DoaBlock::default(),
            sweep: SweepBlock::default(),
        }
    }
}

impl Default for GridBlock {
    fn default() -> Self {
        Self { v_g: 1.0, z_g: 0.3 }
    }
}

impl Default for FaultBlock {
    fn default() -> Self {
        Self {
            v_fault: 0.05,
            t_on: 0.1,
            duration: 0.45,
        }
    }
}

impl Default for StrategyBlock {
    fn default() -> Self {
        Self {
            kind: "original".into(),
            delta_omega_max: DEFAULT_DELTA_OMEGA_MAX,
            mpc_frequency_bound: true,
            delta_p_ref_max: MpcConfig::default().delta_p_ref_max,
            model_impedance_scale: 1.0,
        }
    }
}

impl Default for RunBlock {
    fn default() -> Self {
        let sim = SimOptions::default();
        Self {
            dt: sim.dt,
            post_clear: 3.0,
            seed: 0,
            plant: sim.plant,
        }
    }
}

impl Default for CctBlock {
    fn default() -> Self {
        Self {
            strategies: ["original", "frequency_bound", "compensation", "mpc"]
                .map(String::from)
                .to_vec(),
            tol: 1e-3,
        }
    }
}

impl Default for DoaBlock {
    fn default() -> Self {
        let d = DoaOptions::default();
        Self {
            theta_points: d.theta_points,
            omega_min: d.omega_bracket.0,
            omega_max: d.omega_bracket.1,
            omega_tol: d.omega_tol,
            horizon: d.horizon,
            cl0_levels: vec![0.3, 0.6, 0.9, 1.2, 1.5],
            compare_unsaturated: false,
        }
    }
}

impl Default for SweepBlock {
    fn default() -> Self {
        Self {
            values: Vec::new(),
            z_g: -1.0,
            fault_duration: 0.45,
        }
    }
}

/// Units written next to each key by `--print-defaults`.
const UNITS: &[(&str, &str)] = &[
    ("output_dir", "path, relative to the working directory"),
    ("s_base", "VA"),
    ("omega_n", "rad/s"),
    ("p0", "p.u."),
    ("q0", "p.u."),
    ("h", "s"),
    ("d_p", "p.u."),
    ("d_q", "p.u."),
    ("v0", "p.u."),
    ("i_s_max", "p.u."),
    ("beta", "rad"),
    ("c_f", "p.u."),
    ("x_tr", "p.u."),
    ("v_g", "p.u."),
    ("z_g", "p.u."),
    ("v_fault", "p.u."),
    ("t_on", "s"),
    ("duration", "s"),
    (
        "kind",
        "original | frequency_bound | compensation | cl0 | mpc",
    ),
    ("delta_omega_max", "p.u."),
    ("delta_p_ref_max", "p.u."),
    ("horizon_t", "s"),
    ("step_td", "s"),
    ("delta_theta_chg_max", "rad"),
    ("delta_theta_min", "rad"),
    ("delta_theta_max", "rad"),
    ("omega_min", "p.u."),
    ("omega_max", "p.u."),
    ("theta_zc", "rad"),
    ("big_m", "rad"),
    ("dt", "s"),
    ("post_clear", "s"),
    ("hold_ratio", "fraction of the saturation threshold"),
    ("voltage_reference", "static | droop"),
    ("tol", "s"),
    ("omega_tol", "p.u."),
    ("horizon", "s"),
    ("fault_duration", "s"),
];

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Config(format!("cannot read configuration {}: {e}", path.display()))
        })?;
        let config = Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        Ok(config)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let config: Self = toml::from_str(text)
            .map_err(|e| CliError::Config(format!("invalid configuration: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    /// Default scenario as TOML with units annotated on each key.
    pub fn defaults_toml() -> String {
        let text = toml::to_string(&Self::default()).expect("defaults serialize");
        let mut out = String::from(
            "# gridform scenario; angles in rad, electrical quantities per unit, time in s.\n",
        );
        for line in text.lines() {
            let key = line.split('=').next().unwrap_or("").trim();
            match UNITS.iter().find(|(k, _)| *k == key) {
                Some((_, unit)) if line.contains('=') => {
                    out.push_str(&format!("{line} # {unit}\n"))
                }
                _ => {
                    out.push_str(line);
                    out.push('\n');
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.params.validate()?;
        self.grid_condition().validate()?;
        if !(self.fault.duration >= 0.0 && self.fault.t_on >= 0.0 && self.fault.v_fault >= 0.0) {
            return Err(CliError::Config(
                "invalid configuration: fault duration, onset and voltage must be non-negative"
                    .into(),
            ));
        }
        if !(self.run.dt > 0.0 && self.run.post_clear > 0.0) {
            return Err(CliError::Config(
                "invalid configuration: run.dt and run.post_clear must be positive".into(),
            ));
        }
        if !(self.cct.tol > 0.0) {
            return Err(CliError::Config(
                "invalid configuration: cct.tol must be positive".into(),
            ));
        }
        self.run.plant.validate()?;
        self.strategy()?.validate()?;
        for name in &self.cct.strategies {
            self.named_strategy(name)?.validate()?;
        }
        Ok(())
    }

    pub fn grid_condition(&self) -> GridCondition {
        GridCondition::from_grid_reactance(self.grid.v_g, self.grid.z_g, &self.params)
    }

    pub fn sim_options(&self) -> SimOptions {
        SimOptions {
            dt: self.run.dt,
            plant: self.run.plant,
            ..Default::default()
        }
    }

    pub fn fault_setup(&self) -> FaultSetup {
        FaultSetup {
            grid: self.grid_condition(),
            v_fault: self.fault.v_fault,
            t_fault_on: self.fault.t_on,
            post_clear: self.run.post_clear,
            sim: self.sim_options(),
        }
    }

    /// Strategy selected by the `[strategy]` table.
    pub fn strategy(&self) -> Result<ControllerRef, CliError> {
        self.named_strategy(&self.strategy.kind)
    }

    /// Named strategy with the parameters of the `[strategy]` and `[mpc]` tables.
    pub fn named_strategy(&self, name: &str) -> Result<ControllerRef, CliError> {
        let s = &self.strategy;
        Ok(match ControllerRef::from_name(name, &self.params)? {
            ControllerRef::FrequencyBound { .. } => ControllerRef::FrequencyBound {
                delta_omega_max: s.delta_omega_max,
            },
            ControllerRef::Cl0 { .. } => ControllerRef::Cl0 {
                delta_p_ref_max: s.delta_p_ref_max,
            },
            ControllerRef::Mpc(_) => ControllerRef::Mpc(MpcStrategy {
                config: self.mpc,
                delta_omega_max: s.mpc_frequency_bound.then_some(s.delta_omega_max),
                model_impedance_scale: s.model_impedance_scale,
            }),
            other => other,
        })
    }

    pub fn doa_options(&self) -> DoaOptions {
        DoaOptions {
            theta_points: self.doa.theta_points,
            omega_bracket: (self.doa.omega_min, self.doa.omega_max),
            omega_tol: self.doa.omega_tol,
            horizon: self.doa.horizon,
            sim: self.sim_options(),
        }
    }

    pub fn sweep_config(&self) -> Result<SweepConfig, CliError> {
        let strategies = self
            .cct
            .strategies
            .iter()
            .map(|n| self.named_strategy(n))
            .collect::<Result<Vec<_>, _>>()?;
        let ControllerRef::Mpc(mpc) = self.named_strategy("mpc")? else {
            unreachable!("mpc name resolves to the mpc strategy")
        };
        Ok(SweepConfig {
            params: self.params,
            strategies,
            values: self.sweep.values.clone(),
            z_g: (self.sweep.z_g >= 0.0).then_some(self.sweep.z_g),
            fault_duration: self.sweep.fault_duration,
            tol: self.cct.tol,
            setup: self.fault_setup(),
            mpc,
        })
    }
}
