//! Numerics for zero-curvature pairs of the matrix mKdV / skew-self-adjoint
//! Dirac system: rational spectral pencils, fundamental solutions and their
//! factorization, Weyl functions (direct computation and time evolution),
//! the structured-operator inverse problem, and the generalized
//! Backlund-Darboux transformation (GBDT).
//!
//! Every analytic identity handled here is exposed as a numerical residual so
//! that it can be checked on concrete data rather than assumed.

pub mod error;
pub mod gbdt;
pub mod inverse_problem;
pub mod linalg;
pub mod mkdv_weyl;
pub mod pencil;
pub mod propagator;

pub use error::{Error, Result};
pub use linalg::{C64, CMat};
