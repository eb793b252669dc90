//! # hhlab
//!
//! A spectral numerical laboratory for horizontal half-harmonic maps into
//! plane distributions: exact Fourier-multiplier calculus on the circle,
//! the 3-commutator family with its multiplication-decomposition identities,
//! conservation-law gauge construction for nonlocal Schrödinger systems with
//! antisymmetric potentials, sub-Riemannian geodesic flow, Poisson extension
//! with Hopf-differential conformality checks, and a constrained solver for
//! the half-Dirichlet energy — all verified against the closed-form loop
//! `u(θ) = (e^{iθ}, e^{−iθ})/√2`.
//!
//! The crate's primary interface is the library plus the runnable programs
//! under `examples/`; a thin `hhlab` binary exposes the same machinery as
//! subcommands (`operators`, `commutators`, `gauge`, `geodesic`,
//! `halfharmonic`, `extend`, `verify`) for scripted runs.

pub mod error;
pub mod seeding;
pub mod spectral;
pub mod matrixfield;
pub mod distributions;
pub mod commutators;
pub mod extension;
pub mod geodesics;
pub mod halfharmonic;

pub use error::{Error, Result};
