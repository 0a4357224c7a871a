//! Linear boundary-value problems `y' + A(t;ε) y = f(t;ε)`, `B(ε) y = c(ε)` in
//! the Sobolev space `(W^n_∞)^m`, together with the continuity-in-ε checks.
//!
//! Module layout, bottom-up:
//!
//! - [`expr`]: coefficient expressions in `t` and `eps`, with exact derivatives.
//! - [`sobolev`]: grids, derivative jets and the `W^n_∞` norms.
//! - [`ode`]: fundamental matrix and Cauchy solution by compensated RK4.
//! - [`boundary`]: boundary operators and the characteristic matrix.
//! - [`bvp`]: solving a fixed-parameter problem.
//! - [`parametric`]: ε-families, condition checks and sweeps.
//! - [`cli`]: TOML configuration and the command-line driver.

pub mod boundary;
pub mod bvp;
pub mod cli;
pub mod error;
pub mod expr;
pub mod ode;
pub mod parametric;
pub mod sobolev;

pub use boundary::{BoundaryOperator, IntegralTerm, NonsingularityReport, PointTerm};
pub use bvp::{solve, Problem, SolveResult};
pub use error::{Error, Result};
pub use expr::{ComplexExpr, Expr};
pub use ode::CoefficientProvider;
pub use parametric::{BoundarySpec, BoundaryTermSpec, Family, LimitData, SweepReport};
pub use sobolev::{Grid, JetFunction, MatrixJet};
