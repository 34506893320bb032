//! Recovery of sub-sampled multi-channel ultrasound RF data under a
//! low-rank plus joint-sparse spectral model.
//!
//! The RF frame `X` (fast time x channels) is written as `X = Y D`, where `Y`
//! synthesizes the in-band DFT bins and `D` holds their coefficients. Given
//! samples `B = P_Omega(X) + noise`, [`solver::solve`] minimizes
//! `||D||_* + alpha ||D||_{2,1} + 1/(2 mu) ||B - P_Omega(Y D)||_F^2` with a
//! three-block SDMM iteration.

pub mod cli;
pub mod config;
pub mod error;
pub mod imaging;
pub mod lrjs;
pub mod model;
pub mod operators;
pub mod prox;
pub mod solver;
pub mod synth;

pub use error::{Error, Result};
pub use model::{
    ComplexMatrix, FourierSupport, IterationRecord, Measurements, RealMatrix, RfFrame,
    SamplingPattern, SamplingScheme, SolverConfig, SolverTrace, SpectralCoefficients, Termination,
};
pub use operators::PartialFourierOp;
