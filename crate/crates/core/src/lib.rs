//! Bifurcation analysis for bounded entire solutions of parametrized
//! nonautonomous ODEs: exponential dichotomies, dichotomy spectra, Evans
//! functions, parity of the linearized operator path and homoclinic branches.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod dichotomy;
pub mod evans;
pub mod expr;
pub mod homoclinic;
pub mod linalg;
pub mod model;
pub mod ode;
pub mod quadrature;
pub mod spectrum;

pub use linalg::Frame;
pub use model::{load_model, JacobianSource, ModelError, ModelSpec};
pub use dichotomy::{DichotomyConfig, DichotomyProjector, HalfAxis};
pub use evans::{evans_curve, EvansConfig, EvansCurve, ParityResult};
pub use homoclinic::{solve_homoclinic, trace_branch, HomoclinicConfig, HomoclinicSolution};
pub use ode::{transition_matrix, IntegratorConfig, TransitionMatrix};
pub use spectrum::{dichotomy_spectrum, SpectralInterval, SpectralIntervalSet};
