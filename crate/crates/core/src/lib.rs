//! Exact diagram-formula cumulants for Hermite and Chebyshev functionals of
//! stationary Gaussian and semicircular sequences, with simulation checks of
//! the classical and free central limit theorems.

pub mod breaking;
pub mod cli;
pub mod covariance;
pub mod diagram;
pub mod error;
pub mod numeric;
pub mod orthopoly;
pub mod partitions;
pub mod simulate;

pub use covariance::{CovarianceModel, World};
pub use error::{FcltError, Result};
pub use orthopoly::{Basis, FunctionalSeries};
pub use partitions::{EdgeMatrix, Partition, RowTable};
