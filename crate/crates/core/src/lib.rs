//! Classical training framework for fermionic Born machines.
//!
//! A fermionic Born machine prepares `N` four-mode "magic" registers
//! `cos α|0000⟩ + sin α|1111⟩`, applies a parametrized fermionic linear optics
//! (FLO) transformation, and measures the occupation of the first three modes
//! of every register. Z-string expectation values of that state are computed
//! exactly on a classical machine by decomposing each register into Gaussian
//! operators and evaluating Pfaffians of evolved covariance matrices. Those
//! expectation values are all that the Gaussian-kernel MMD² loss needs, which
//! makes training classical while sampling stays a quantum task.
//!
//! Module map:
//!
//! - [`skewlin`]: skew-symmetric matrices and Pfaffians.
//! - [`flo`]: Givens-rotation ansatz, `SO(2d)` matrices, covariance evolution.
//! - [`magic`]: Gaussian decomposition of the magic input state.
//! - [`engine`]: exact Z-string expectation values and their adjoints.
//! - [`loss`]: kernel-weighted Z-string sampling and the MMD² estimate.
//! - [`trainer`]: gradients, Adam, the epoch loop, layer compilation.
//! - [`oracle`]: brute-force statevector reference for small systems.
//! - [`compiler`]: qubit gate-sequence export for sampling on hardware.
//! - [`baselines`]: Chow-Liu trees and covariance metrics.
//! - [`datagen`]: grid Markov networks, Game-of-Life equilibria, dataset I/O.
//! - [`cli`]: configuration, model persistence and command implementations.

// Index loops mirror the matrix formulas; `!(x > 0.0)` deliberately rejects NaN.
#![allow(
    clippy::needless_range_loop,
    clippy::neg_cmp_op_on_partial_ord,
    clippy::type_complexity
)]

pub mod baselines;
pub mod cli;
pub mod compiler;
pub mod datagen;
pub mod engine;
mod error;
pub mod flo;
pub mod loss;
pub mod magic;
pub mod oracle;
mod par;
pub mod skewlin;
pub mod trainer;

pub use error::{Error, Result};

pub use num_complex::Complex64;
