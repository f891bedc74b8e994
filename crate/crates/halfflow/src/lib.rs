//! Numerical core for the half-harmonic map flow from the real line into the
//! circle,
//!
//! ```text
//! u_t = -(-Δ)^{1/2} u + ( (1/2π) ∫ |u(x)-u(s)|²/|x-s|² ds ) u,   |u| = 1,
//! ```
//!
//! together with the machinery that surrounds it: closed-form bubble profiles
//! and their kernel fields, the half-Laplacian in spectral and principal-value
//! form, the Poisson semigroup and Duhamel integrals, linearized operators
//! around a bubble, energy and modulation diagnostics, and an inner-outer
//! gluing co-evolution with its parameter ODEs.
//!
//! Fields live on a uniform symmetric grid on `[-L, L]`; nonlocal integrals
//! carry analytic far-field corrections built from a fitted `c0 + c1/x` tail
//! model, so that maps converging to a constant at infinity are handled
//! without a huge domain.

pub mod diagnostics;
pub mod flow;
pub mod gluing;
pub mod grid;
pub mod linops;
pub mod nonlocal;
pub mod profiles;
pub mod quad;
pub mod spectral;

use thiserror::Error;

/// Errors shared by all modules.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("sign condition violated: {0}")]
    SignCondition(String),
    #[error("no bubble found: {0}")]
    NoBubble(String),
    #[error("insufficient resolution: {0}")]
    Resolution(String),
    #[error("consistency check failed: {0}")]
    Consistency(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub use grid::{GridSpec, ScalarField, SphereMapField, TangentField, VectorField};
pub use profiles::{BubbleParams, MobiusSpec, MultiBubble};
