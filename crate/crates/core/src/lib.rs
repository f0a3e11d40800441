//! Simulation of spin-parity protocols in coupled quantum dots: QND Bell-state
//! measurement, Bell-state generation and n-party GHZ preparation, evaluated
//! by exact state-vector evolution, seeded Monte Carlo sampling and full
//! branch enumeration.
//!
//! Layers, bottom up:
//! - [`state`]: dense spin register, gates, parity projection, classifiers.
//! - [`outcome`]: pluggable decision sources for every stochastic event.
//! - [`device`]: dots, electron locations, gates and charge detectors.
//! - [`protocols`]: the measurement and preparation sequences.
//! - [`montecarlo`]: trial runner, enumeration oracle and statistics.

pub mod device;
pub mod montecarlo;
pub mod outcome;
pub mod protocols;
pub mod state;

pub use device::{DetectorSnapshot, DeviceLayout, DeviceState, DotId};
pub use montecarlo::{ExactStats, ProtocolSpec, RunStats, Scenario, Seed};
pub use protocols::{GrowthPlan, GrowthStrategy};
pub use state::{BellLabel, ParityOutcome, PureState};
