//! Singular curves in Carnot groups: free nilpotent Lie algebras, Chen
//! series and adjoint flows of piecewise-polynomial controls, the exact
//! singularity test, normal-form classification of the low-step systems and
//! the quadratic rank-2 step-5 system.

pub mod chen_flow;
pub mod cli;
pub mod error;
pub mod free_lie;
pub mod linalg;
pub mod poly;
pub mod quadratic_r2s5;
pub mod scalar;
pub mod singularity;
pub mod strata;

pub use error::{Error, Result};
pub use scalar::{Mode, Scalar};
