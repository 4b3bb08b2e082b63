use std::io::{Read, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{cct, run_fault, Classification, FaultSetup};
use crate::controllers::{ControllerRef, MpcStrategy};
use crate::error::{Error, Result};
use crate::mpc::MpcConfig;
use crate::phasor::{GridCondition, SystemParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    /// CCT against the fault-on Thevenin voltage.
    FaultVoltage,
    /// CCT against the reference power.
    ReferencePower,
    /// Post-fault trajectory against the MPC horizon.
    Horizon,
    /// Trajectory with the MPC model impedance scaled.
    ImpedanceError,
}

impl FromStr for SweepKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "fault_voltage" => SweepKind::FaultVoltage,
            "reference_power" => SweepKind::ReferencePower,
            "horizon" => SweepKind::Horizon,
            "impedance_error" => SweepKind::ImpedanceError,
            other => return Err(Error::Config(format!("unknown sweep kind '{other}'"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub params: SystemParams,
    /// Strategies compared in the CCT sweeps.
    pub strategies: Vec<ControllerRef>,
    /// Swept values; empty selects the built-in range of the sweep kind.
    pub values: Vec<f64>,
    /// Grid reactance `Z_g`; `None` selects the default of the sweep kind.
    pub z_g: Option<f64>,
    /// Fault duration for the trajectory sweeps, s.
    pub fault_duration: f64,
    pub tol: f64,
    pub setup: FaultSetup,
    /// MPC settings used by the trajectory sweeps.
    pub mpc: MpcStrategy,
}

impl Default for SweepConfig {
    fn default() -> Self {
        let params = SystemParams::default();
        Self {
            params,
            strategies: ControllerRef::NAMES
                .iter()
                .filter(|n| **n != "cl0")
                .map(|n| ControllerRef::from_name(n, &params).expect("built-in strategy"))
                .collect(),
            values: Vec::new(),
            z_g: None,
            fault_duration: 0.45,
            tol: 1e-3,
            setup: FaultSetup::default(),
            mpc: MpcStrategy {
                config: MpcConfig::for_params(&params),
                ..Default::default()
            },
        }
    }
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
        .collect()
}

impl SweepConfig {
    pub fn values_for(&self, kind: SweepKind) -> Vec<f64> {
        if !self.values.is_empty() {
            return self.values.clone();
        }
        match kind {
            SweepKind::FaultVoltage => linspace(0.05, 0.3, 6),
            SweepKind::ReferencePower => linspace(0.4, 0.8, 6),
            SweepKind::Horizon => vec![0.06, 0.1, 0.2, 0.3, 0.4],
            SweepKind::ImpedanceError => vec![1.0, 1.1],
        }
    }

    pub fn z_g_for(&self, kind: SweepKind) -> f64 {
        self.z_g.unwrap_or(match kind {
            SweepKind::FaultVoltage | SweepKind::ImpedanceError => 0.3,
            SweepKind::ReferencePower => 0.4,
            SweepKind::Horizon => 0.7,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CctRow {
    pub param: f64,
    pub strategy: String,
    /// NaN when the cell failed.
    pub cct_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub param: f64,
    pub strategy: String,
    /// `None` when the run never settled.
    pub classification: Option<Classification>,
    pub peak_theta: f64,
    pub settle_time_s: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct TrajectoryCsvRow {
    param: f64,
    strategy: String,
    classification: String,
    peak_theta: f64,
    settle_time_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SweepTable {
    Cct {
        rows: Vec<CctRow>,
        failures: Vec<String>,
    },
    Trajectory {
        rows: Vec<TrajectoryRow>,
        failures: Vec<String>,
    },
}

impl SweepTable {
    pub fn failures(&self) -> &[String] {
        match self {
            SweepTable::Cct { failures, .. } | SweepTable::Trajectory { failures, .. } => failures,
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        match self {
            SweepTable::Cct { rows, .. } => {
                for r in rows {
                    w.serialize(r)?;
                }
            }
            SweepTable::Trajectory { rows, .. } => {
                for r in rows {
                    w.serialize(TrajectoryCsvRow {
                        param: r.param,
                        strategy: r.strategy.clone(),
                        classification: r
                            .classification
                            .map_or("indeterminate", |c| c.as_str())
                            .to_string(),
                        peak_theta: r.peak_theta,
                        settle_time_s: r.settle_time_s,
                    })?;
                }
            }
        }
        w.flush().map_err(|e| Error::Csv(e.to_string()))
    }

    pub fn read_cct_csv<R: Read>(reader: R) -> Result<Vec<CctRow>> {
        csv::Reader::from_reader(reader)
            .deserialize()
            .map(|r| r.map_err(Error::from))
            .collect()
    }

    pub fn read_trajectory_csv<R: Read>(reader: R) -> Result<Vec<TrajectoryRow>> {
        csv::Reader::from_reader(reader)
            .deserialize::<TrajectoryCsvRow>()
            .map(|r| {
                let r = r?;
                let classification = match r.classification.as_str() {
                    "indeterminate" => None,
                    s => Some(s.parse()?),
                };
                Ok(TrajectoryRow {
                    param: r.param,
                    strategy: r.strategy,
                    classification,
                    peak_theta: r.peak_theta,
                    settle_time_s: r.settle_time_s,
                })
            })
            .collect()
    }
}

/// Runs one sweep. Cells run in parallel; rows keep the order
/// (value, strategy) regardless of scheduling.
pub fn sweep(kind: SweepKind, config: &SweepConfig) -> Result<SweepTable> {
    let values = config.values_for(kind);
    let z_g = config.z_g_for(kind);
    let base = &config.params;
    let grid = GridCondition::from_grid_reactance(1.0, z_g, base);
    match kind {
        SweepKind::FaultVoltage | SweepKind::ReferencePower => {
            let cells: Vec<(f64, ControllerRef)> = values
                .iter()
                .flat_map(|&v| config.strategies.iter().map(move |s| (v, *s)))
                .collect();
            let results: Vec<(CctRow, Option<String>)> = cells
                .par_iter()
                .map(|&(value, strategy)| {
                    let mut params = *base;
                    let mut setup = FaultSetup {
                        grid,
                        ..config.setup
                    };
                    if kind == SweepKind::FaultVoltage {
                        setup.v_fault = value;
                    } else {
                        params.p0 = value;
                    }
                    let result = cct(&setup, &strategy, &params, config.tol);
                    let row = CctRow {
                        param: value,
                        strategy: strategy.label().to_string(),
                        cct_s: *result.as_ref().unwrap_or(&f64::NAN),
                    };
                    (
                        row,
                        result
                            .err()
                            .map(|e| format!("{} at {value}: {e}", strategy.label())),
                    )
                })
                .collect();
            let (rows, failures): (Vec<_>, Vec<_>) = results.into_iter().unzip();
            Ok(SweepTable::Cct {
                rows,
                failures: failures.into_iter().flatten().collect(),
            })
        }
        SweepKind::Horizon | SweepKind::ImpedanceError => {
            let results: Vec<(TrajectoryRow, Option<String>)> = values
                .par_iter()
                .map(|&value| {
                    let mut mpc = config.mpc;
                    if kind == SweepKind::Horizon {
                        mpc.config.horizon_t = value;
                    } else {
                        mpc.model_impedance_scale = value;
                    }
                    let strategy = ControllerRef::Mpc(mpc);
                    let setup = FaultSetup {
                        grid,
                        ..config.setup
                    };
                    let mut row = TrajectoryRow {
                        param: value,
                        strategy: strategy.label().to_string(),
                        classification: None,
                        peak_theta: f64::NAN,
                        settle_time_s: None,
                    };
                    match run_fault(&setup, &strategy, base, config.fault_duration) {
                        Ok((out, verdict)) => {
                            row.peak_theta = out.trajectory.peak_theta();
                            match verdict {
                                Ok(v) => {
                                    row.classification = Some(v.classification);
                                    row.settle_time_s = v.settle_time;
                                    (row, None)
                                }
                                Err(e) => (row, Some(format!("{value}: {e}"))),
                            }
                        }
                        Err(e) => (row, Some(format!("{value}: {e}"))),
                    }
                })
                .collect();
            let (rows, failures): (Vec<_>, Vec<_>) = results.into_iter().unzip();
            Ok(SweepTable::Trajectory {
                rows,
                failures: failures.into_iter().flatten().collect(),
            })
        }
    }
}
