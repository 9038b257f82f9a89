//! Power-law relaxation fits of post-halt excess dynamics.

mod bootstrap;
mod powerlaw;
mod table;

pub use bootstrap::{bootstrap_alpha_stderr, resample_indices, BootstrapResult};
pub use powerlaw::{
    fit_power_law, jacobian, make_excess, model, ExcessSeries, FitRange, PowerLawFit,
    PowerLawFitter,
};
pub use table::{fit_all_groups, ExponentEntry, FitConfig, FitFlag};

use thiserror::Error;

use crate::study::StudyError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error("no convergence after {iterations} iterations")]
    NonConvergence { iterations: usize },
    #[error("bootstrap needs at least 2 trajectories, got {0}")]
    TooFewTrajectories(usize),
    #[error(transparent)]
    Study(#[from] StudyError),
}
