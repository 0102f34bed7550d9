//! The semi-Markov transition kernel of the queueing race and the terminal
//! kernel of the race that outlasts maturity, tabulated for the solver.

pub mod scenarios;
pub mod tables;
pub mod terminal;
pub mod validate;

use thiserror::Error;

use crate::model::ReducedRaceKey;

#[derive(Debug, Error)]
pub enum KernelError {
    #[error(transparent)]
    Fpt(#[from] crate::fpt::FptError),
    #[error("{0}")]
    Config(String),
    #[error("grid too short: {} keys below mass 1 - 5e-3, worst {worst_mass:.6} at {worst_key:?}", failures.len())]
    GridTooShort {
        failures: Vec<(ReducedRaceKey, f64)>,
        worst_key: ReducedRaceKey,
        worst_mass: f64,
    },
}

pub use scenarios::assemble_outcomes;
pub use tables::{build_tables, full_kernel, KernelConfig, KernelEntry, KernelOutcome, KernelTables};
pub use terminal::terminal_probs;
pub use validate::{validate_against_simulator, ValidationConfig, ValidationReport};
