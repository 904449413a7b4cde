//! Sequential-hurdle Bayesian tree ensembles for outcomes on `[0, 1]` with
//! point masses at 0 and 1.

pub mod data;
pub mod dist;
pub mod error;
pub mod forest;
pub mod inference;
pub mod io;
pub mod likelihood;
pub mod sampler;
pub mod simgen;

pub use data::{Category, Dataset, Matrix};
pub use error::{HobzError, Result};
pub use forest::{Forest, Hyperparams, LeafParams, SplitRule, Tree};
pub use sampler::{run_chain, PosteriorDraws, Schedule};
