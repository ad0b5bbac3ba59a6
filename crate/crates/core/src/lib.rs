//! Maximum-likelihood drift estimation, Fisher information and optimal input
//! design for the ARX(1) model
//!
//! ```text
//! X_n = theta X_{n-1} + u(n) + xi_n,   X_0 = 0,
//! ```
//!
//! driven by a stationary Gaussian noise `xi` (fractional Gaussian noise,
//! AR(1), MA(1) or white).

// `!(x > 0.0)` guards deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod arx;
pub mod cli;
pub mod design;
pub mod error;
pub mod gaussian_sim;
pub mod innovations;
pub mod io;
pub mod laplace;
pub mod mc;
pub mod noise;
pub mod rng;

pub use arx::{
    asymptotic_fisher, fisher_empirical, fisher_exact, log_likelihood, mle_estimate, simulate_arx,
    ArxSpec, EstimationResult, FisherInformation, McEstimate, StateTrajectory,
};
pub use design::{optimal_input, InputDesign, SignProfile};
pub use error::{Error, Result};
pub use gaussian_sim::{build_embedding, CirculantEmbedding, DenseSampler};
pub use innovations::{InnovationCoefficients, InnovationSystem, LowerTriangular};
pub use laplace::{
    laplace_exact, laplace_mc, phi_chain_laplace_closed, phi_chain_laplace_eigen, spectral_gap,
};
pub use mc::{run_experiment, ExperimentConfig, SummaryReport};
pub use noise::NoiseModel;
