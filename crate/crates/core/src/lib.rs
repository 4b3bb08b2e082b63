//! Transient-stability toolkit for a current-limited grid-forming inverter
//! behind a Thevenin grid.
//!
//! * [`phasor`]: network phasor algebra and the saturation threshold.
//! * [`plant`]: swing dynamics with the normal/saturated mode automaton.
//! * [`controllers`]: benchmark strategies and the MPC adapter.
//! * [`mpc`]: horizon program, branch enumeration and the rolling driver.
//! * [`analysis`]: landmarks, classification, CCT, DOA and sweeps.

pub mod analysis;
pub mod controllers;
mod error;
pub mod mpc;
pub mod phasor;
pub mod plant;

pub use analysis::{classify, landmark_angles, Classification, Landmarks, StabilityVerdict};
pub use controllers::{Controller, ControllerRef, MpcStrategy};
pub use error::{Error, Result};
pub use mpc::{MpcConfig, MpcProblem, MpcSolution};
pub use phasor::{GridCondition, Phasor, SystemParams};
pub use plant::{
    simulate, ApcState, ControlInput, FaultScenario, Mode, PlantOptions, SimOptions,
    TrajectoryRecord, VoltageReference,
};
