//! Hybrid iterative solvers for Poisson problems.
//!
//! A classical smoother (or a multigrid V-cycle) removes high-frequency error
//! while a MIONet operator model, applied every `M` steps to the residual,
//! removes the low-frequency error the smoother cannot reach. The crate
//! contains the P1 discretization, smoothers, multigrid, random-field
//! sampling, the MIONet model with its trainer, the correction operators, the
//! hybrid driver, and the spectral and convergence-rate diagnostics used to
//! reason about the method.
//!
//! All numerical code is generic over [`Scalar`] (`f32` or `f64`); the `*64`
//! aliases below fix the precision used by the command-line front end.

pub mod container;
pub mod correctors;
pub mod error;
pub mod fem;
pub mod gp;
pub mod hybrid;
pub mod linalg;
pub mod mionet;
pub mod multigrid;
pub mod scalar;
pub mod smoothers;
pub mod spectral;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type CsrMatrix64 = linalg::CsrMatrix<f64>;
pub type DenseMatrix64 = linalg::DenseMatrix<f64>;
pub type Grid64 = fem::StructuredGrid<f64>;
pub type SmootherKind64 = smoothers::SmootherKind<f64>;
pub type MgHierarchy64 = multigrid::MgHierarchy<f64>;
pub type MionetModel64 = mionet::MionetModel<f64>;
pub type IterationTrace64 = hybrid::IterationTrace<f64>;
