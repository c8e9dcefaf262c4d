//! Simulation and evolution of two-agent teams that carry a fragile object
//! along a reference path, each agent switching between a stabilizing and a
//! tracking controller.

pub mod agents;
pub mod analysis;
pub mod config;
pub mod error;
pub mod evolution;
pub mod objectives;
pub mod params;
pub mod rng;
pub mod simulator;
pub mod trajectory;

pub use agents::{
    Agent, Controller, ControllerId, ControllerKind, ControllerLibrary, Dyad, DyadId,
    FeatureVector, Role, SwitchPolicy,
};
pub use config::RunConfig;
pub use error::{Error, Result};
pub use evolution::{run_evolution, ArchivedDyad, Engine, HallOfFame, Population, RunOutcome};
pub use objectives::ObjectiveVector;
pub use params::EggParams;
pub use simulator::{InitSpec, Simulator, TrialRecord};
pub use trajectory::{Reference, ReferenceTrajectory, TrajectoryConfig, TrajectoryLibrary};
