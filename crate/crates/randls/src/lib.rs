//! Adjoint-free randomized least-squares solvers.
//!
//! Solves min_v |Av - b|^2 when the operator A is only available through
//! forward products v -> Av. The two randomized methods are stochastic
//! gradient descent with adjoint sampling (SGDAS) and random descent with
//! exact linesearch (RD); Landweber, TFQMR and CGS are included as
//! baselines. The `analysis` module provides the spectral machinery behind
//! the convergence rates, `io` handles MatrixMarket parsing, problem
//! generation and trace export, and `experiment` drives the benchmark and
//! ill-posed study protocols used by the CLI.

pub mod analysis;
pub mod error;
pub mod experiment;
pub mod io;
pub mod linalg;
pub mod operator;
pub mod rng;
pub mod sampling;
pub mod solvers;

pub use error::{Error, Result};
