//! Identification of Kronecker graphical models for autoregressive Gaussian
//! processes.

pub mod cli;
pub mod data;
pub mod error;
pub mod groups;
pub mod hyper;
pub mod io;
pub mod linalg;
pub mod montecarlo;
pub mod objective;
pub mod pipeline;
pub mod solver;
pub mod spectral;
pub mod synth;

pub use error::{ErrorKind, KgmError, Result};
