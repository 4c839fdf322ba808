//! Finite-difference solvers for the clamped-moment beam problem
//! `w'''' = f(x, w)` on `[a, b]` with a one-sided contact right-hand side.
//!
//! The discrete system is `A W = B̄ + h⁴ F(W)` with `A` the pentadiagonal
//! fourth-difference matrix. For the piecewise-linear contact law the
//! system is an absolute value equation solved by a contractive fixed-point
//! map; general monotone right-hand sides use a damped Picard iteration.
//! A Green's-function Picard solver on a quadrature grid serves as an
//! independent continuous reference.
//!
//! ```
//! use beamfd::{ave_solve, build_grid, BvpSpec, PiecewiseLinearContact};
//!
//! let spec = BvpSpec::new(0.0, 1.0, 0.0, 0.0, -20.0, -20.0)?;
//! let contact = PiecewiseLinearContact::new(1e4, |x| x / 2.0, |_| 0.5)?;
//! let grid = build_grid(&spec, 50)?;
//! let (w, report) = ave_solve(&spec, &contact, &grid, 1e-10, 100_000, None)?;
//! assert!(report.converged);
//! assert_eq!(w.len(), 50);
//! # Ok::<(), beamfd::Error>(())
//! ```

pub mod config;
pub mod discretize;
pub mod error;
pub mod expr;
pub mod greens;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod output;
pub mod solvers;
pub mod svg;

pub use discretize::{
    assemble_a, assemble_bbar, build_grid, eigenvalues_a, residual_discrete, DiscreteSystem, Grid,
};
pub use error::{Error, Result};
pub use model::{
    eval_rhs, validate_rhs, wbar, BvpSpec, GeneralMonotone, PiecewiseLinearContact, RightHandSide,
};
pub use solvers::{
    apriori_bound, ave_solve, ave_solve_z, contraction_constant, general_solve, IterationReport,
};
