//! Stochastic hierarchy equations of motion (SHEM) for a quantum system that is
//! strongly coupled to a non-Markovian Drude-Lorentz environment and
//! continuously monitored through a dispersively coupled, leaky cavity.
//!
//! The pipeline runs from the physical model to a detector spectrum:
//!
//! 1. [`dispersive::build_frame`] turns `(H_S, μ, {S_m}, ω_c)` into the
//!    dispersive-frame operators `X`, `O_S`, `Λ`, `H_S^D`, `S̃_m`, `Q_m`.
//! 2. [`bath::matsubara_expansion`] and [`bath::terminator`] expand each
//!    environment's correlation function into decaying exponentials.
//! 3. [`hierarchy::ShemSystem`] assembles the eliminated-cavity hierarchy;
//!    [`hierarchy::FullHeomSystem`] keeps the cavity for cross-checks.
//! 4. [`measurement::run_trajectory`] integrates one conditioned trajectory
//!    with [`sde`] and synthesizes the homodyne current.
//! 5. [`spectroscopy::ensemble_spectrum`] averages per-trajectory periodograms.
//!
//! [`validation`] holds the independent oracles behind the tests and the
//! `validate` command.
//!
//! ```
//! use shem::algebra::pauli;
//! use shem::dispersive::build_frame;
//!
//! let h = pauli::sigma_z().scale_real(0.5);
//! let mu = pauli::sigma_x().scale_real(0.1);
//! let frame = build_frame(&h, &mu, &[pauli::sigma_z()], 10.0, 0.0).unwrap();
//! // O_S = -2 g² Ω / (ω_c² - Ω²) σ_z
//! let chi = -2.0 * 0.01 / (100.0 - 1.0);
//! assert!((frame.o_s[(1, 1)].re - chi).abs() < 1e-12);
//! ```

pub mod algebra;
pub mod bath;
pub mod cli;
pub mod config;
pub mod dispersive;
mod error;
pub mod hierarchy;
pub mod io;
pub mod liouville;
pub mod measurement;
pub mod sde;
pub mod spectroscopy;
pub mod validation;

pub use algebra::Operator;
pub use error::{Error, Result};

pub type C64 = num_complex::Complex64;

/// Crate version, echoed into every output sidecar.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
