//! Heterogeneous time-series PCA: a generative spiked-covariance model with
//! sample fluctuations, per-component kernels and heterogeneous noise; the
//! empirical PCA recovery pipeline; and replica-theory predictions of the
//! recovery errors obtained from a saddle point of the ground-state energy.

pub mod conv;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod io;
pub mod jet;
pub mod model;
pub mod rng;
pub mod scalar;
pub mod theory;

pub use error::{Error, Result};
pub use jet::Jet;
pub use scalar::{Mat, Scalar};

pub type Real = f64;
pub type Matrix = nalgebra::DMatrix<Real>;
pub type Vector = nalgebra::DVector<Real>;
