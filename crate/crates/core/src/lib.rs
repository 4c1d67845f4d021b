//! Finite-type supercritical superprocesses.
//!
//! The crate covers four layers that build on each other:
//!
//! - [`model`]: the motion chain and branching mechanism, loaded from JSON.
//! - [`spectral`]: eigendecomposition of the mean generator and the operators
//!   (semigroup, resolvent, inverse flow) acting on eigen-coefficients.
//! - [`limits`]: closed-form limit covariances and exact second moments.
//! - [`simulate`] and [`verify`]: Monte Carlo paths and statistical comparison
//!   of the fluctuation functionals against the closed forms.
//!
//! Replica loops run on rayon when the `parallel` feature is enabled (the
//! default) and sequentially otherwise; see [`par::Execution`].

pub mod error;
pub mod limits;
pub mod model;
pub mod par;
pub mod simulate;
pub mod spectral;
pub mod stats;
pub mod verify;

pub use error::{Error, Result};
pub use limits::{LimitContext, LimitCovariance, Regime};
pub use model::{
    check_grey_condition, derive_coefficients, load_model, serialize_model, DerivedCoefficients,
    FiniteTypeModel,
};
pub use spectral::{
    classify, decompose, i_operator, project_components, resolvent_apply, semigroup_apply,
    EigenClassification, SpectralDecomposition, TestFunction,
};
