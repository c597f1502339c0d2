//! Exact marginal likelihoods for time-changed Lévy return models.
//!
//! Returns over intervals of width Δ follow
//!
//! ```text
//! X_i = μΔ + J_{i,1} + J_{i,2} + β(τ_i + γ_i) + ργ_i + √(τ_i + γ_i)·ε_i
//! ```
//!
//! where J_1, J_2 are pure-jump Lévy processes run on the random clocks
//! τ and γ, and the clocks are linear functionals of a Poisson random
//! measure (Γ-OU integrated variance by default). The joint density of
//! (X_1, …, X_n) is an n-dimensional Fourier integral of e^{−Λ(Ω_n + Υ_n)},
//! evaluated by [`likelihood::log_likelihood`]. [`montecarlo`] simulates the
//! same model exactly and serves as an independent oracle; [`estimate`] fits
//! parameters by maximum (composite) likelihood.

pub mod cli;
pub mod error;
pub mod estimate;
pub mod levy;
pub mod likelihood;
pub mod montecarlo;
pub mod prm;
pub mod quad;
pub mod timechange;

pub use error::{Error, Result};
