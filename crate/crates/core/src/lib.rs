//! SIR epidemics two ways: a deterministic compartment model driven by
//! Monte-Carlo parameter draws, and a stochastic agent-based model on a
//! small-world contact network, plus the ensemble statistics used to compare
//! their variability against observed data.

pub mod abm;
pub mod cli;
pub mod data;
pub mod error;
pub mod monte_carlo;
pub mod network;
pub mod params;
pub mod rng;
pub mod sd;
pub mod stats;

pub use error::{Result, SimError};
pub use params::{CompartmentState, EnsembleResult, SirParams, Trajectory, WeeklySeries};

/// Package version plus `git describe` of the build tree.
pub fn version_string() -> String {
    format!("{} ({})", env!("CARGO_PKG_VERSION"), env!("SIRVAR_GIT_DESCRIBE"))
}
