//! Free Carnot group arithmetic, signatures of piecewise-linear paths,
//! fractional Brownian motion sampling, discrete Cameron–Martin norms,
//! horizontal path construction and Monte Carlo density experiments for
//! log-signatures of fBm.

pub mod cameron_martin;
pub mod chow;
pub mod density;
pub mod error;
pub mod fbm;
pub mod free_lie;
pub mod group;
pub mod penalty;
pub mod rng;
pub mod signature;
pub mod stats;
pub mod tensor;

pub use cameron_martin::GridFunction;
pub use error::{Error, Result};
pub use free_lie::{HallBasis, HallTree, LogCoordinates};
pub use group::GroupElement;
pub use signature::PLPath;
pub use tensor::TruncatedTensor;
