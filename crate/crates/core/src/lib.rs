//! Weighted Group Lasso for group-sparse source recovery in underdetermined
//! linear inverse problems, with an EEG-style spherical dipole surrogate.
//!
//! The objective is `½‖Cx − Bb‖² + α Σ_g ‖C_g x_g‖` with `C = B·A`, where
//! each group collects the three moment components of one candidate dipole.

pub mod cli;
pub mod error;
pub mod experiment;
pub mod forward;
pub mod io;
pub mod metrics;
pub mod model;
pub mod solver;
pub mod theory;
pub mod weighting;

pub use error::{Error, Result};
