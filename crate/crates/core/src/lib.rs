//! Simulation and Monte Carlo verification toolkit for the stochastic
//! Lévy–Lorentz gas: a unit-speed particle on the line whose collisions
//! follow a random walk over a correlated array of scatterers.
//!
//! The modules mirror the pieces of the model:
//!
//! * [`environment`]: scatterer arrays with i.i.d. or Markov interdistances.
//! * [`walks`]: i.i.d.-jump and step-reinforced walks, exact laws, martingale diagnostics.
//! * [`gas`]: collision positions and times, continuous-time interpolation, rescaled paths.
//! * [`renewal`]: the auxiliary three-valued field, regeneration times and the η-field.
//! * [`cadlag`]: càdlàg path algebra and an explicit J1-Skorokhod metric.
//! * [`stats`]: mergeable accumulators and the tests used by experiments.
//! * [`engine`]: experiment configs, replica execution and reports.

pub mod cadlag;
pub mod engine;
pub mod environment;
pub mod error;
pub mod gas;
pub mod renewal;
pub mod rng;
pub mod stats;
pub mod walks;


pub use cadlag::{CadlagPath, TimeChange};
pub use environment::{DistanceLaw, Environment};
pub use error::{Error, Result};
pub use gas::{build_gas, GasTrajectory};
pub use rng::rng_for_replica;
pub use stats::{MomentAccumulator, PairAccumulator};
pub use walks::{JumpLaw, WalkPath};
