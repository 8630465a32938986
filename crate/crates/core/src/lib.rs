//! Globally convergent attitude and gyro-bias observers in matrix space.
//!
//! The observers estimate `A = G R ∈ ℝ³ˣ³` and the gyro bias `b` without
//! constraining the estimate to SO(3), which makes the error dynamics
//! globally exponentially stable. Modules:
//!
//! - [`matrix_lie`]: so(3)/SO(3) algebra, polar projection, eigenvalues.
//! - [`dynamics`]: ground-truth kinematics, gyro and vector sensor models.
//! - [`observers`]: the observer family and a Mahony baseline.
//! - [`lyapunov`]: the exponential-convergence certificate.
//! - [`harness`]: integration, metrics, Monte Carlo and comparison runs.
//! - [`selfcheck`]: the algebraic identity battery behind the proofs.
//! - [`cli`]: configuration files, CSV output and the `gyrobs` command.

// `!(x > 0.0)` is used deliberately so NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod dynamics;
pub mod harness;
pub mod lyapunov;
pub mod matrix_lie;
pub mod observers;
pub mod selfcheck;
