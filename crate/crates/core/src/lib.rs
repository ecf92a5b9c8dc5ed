//! Inertial-Itô drift for second-order stochastic systems driven by
//! Ornstein–Uhlenbeck noise.
//!
//! The crate covers three layers:
//!
//! * [`linalg`]: small dense matrix kernels (exponential, Lyapunov and
//!   Sylvester solvers, spectral abscissa).
//! * [`model`] and [`drift`]: coefficient fields, the OU driver and the
//!   matrices `M`, `L_α`, `N_α`, `Q_α` that assemble into the limit drift
//!   `f_α`, together with the turbulence-model specialisations.
//! * [`sde`] and [`harness`]: integrators for the inertial system and its
//!   first-order limit, coupled through a shared Brownian path, and the
//!   Monte Carlo experiments built on top of them.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod drift;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod sde;

pub use drift::{Alpha, DriftContext, DriftMatrices, MixingRate};
pub use error::{Error, Result};
pub use harness::{ExperimentReport, Verdict};
pub use linalg::{Matrix, Vector};
pub use model::{CoefficientModel, DerivativeBundle, NoiseSpec};
pub use sde::{MuRule, SimConfig};
