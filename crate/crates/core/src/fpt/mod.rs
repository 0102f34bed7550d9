//! First-passage-time engine: continued-fraction Laplace transforms of the
//! queue depletion times and their numerical inversion to sampled
//! density/CDF curves.

pub mod cache;
pub mod euler;
pub mod grid;
pub mod lentz;
pub mod process_a;
pub mod transforms;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FptError {
    #[error("continued fraction did not converge within {max_terms} terms")]
    NonConvergence { max_terms: usize },
    #[error("continued fraction pivot breakdown at term {term}")]
    PivotBreakdown { term: usize },
    #[error("Euler summation accuracy loss at t = {t}: oscillation estimate {estimate:e}")]
    AccuracyLoss { t: f64, estimate: f64 },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
}

pub use cache::{DirCurves, FptCache, GridSpec};
pub use euler::{invert_at, EulerParams};
pub use grid::{invert_to_grid, Curve, FptGrid, TimeGrid, UniformGrid};
pub use lentz::continued_fraction;
pub use process_a::{density_fpt_a, ADiagnostics};
pub use transforms::{
    laplace_fpt_b, laplace_fpt_b_prefix, laplace_fpt_c, occupancy_truncation, occupancy_weights,
    BirthDeathSpec, OccupancyWeights,
};
