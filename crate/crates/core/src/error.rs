//! Shared error type for all numerical modules.

use num_complex::Complex64;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug, Clone)]
pub enum Error {
    #[error("spectral parameter z = {z} is within {tol:e} of the pole at {pole}")]
    PoleHit { z: Complex64, pole: Complex64, tol: f64 },

    #[error("point (x, t) = ({x}, {t}) lies outside the declared domain [0, {x_max}) x [0, {t_max})")]
    DomainError { x: f64, t: f64, x_max: f64, t_max: f64 },

    #[error("coefficient derivative requested on the domain boundary at (x, t) = ({x}, {t}) with one-sided differencing disabled")]
    DerivativeUnavailable { x: f64, t: f64 },

    #[error("fundamental solution norm {norm:e} exceeded the blow-up guard at coordinate {coordinate}")]
    StepOverflow { coordinate: f64, norm: f64 },

    #[error("z = {z} lies outside the sector Im z < -{m1}, 0 > arg z > -pi/4")]
    SectorError { z: Complex64, m1: f64 },

    #[error("Mobius denominator singular at z = {z} (|det| = {det:e})")]
    SingularDenominator { z: Complex64, det: f64 },

    #[error("Weyl limit did not converge at z = {z}; successive differences {diffs:?}")]
    NoConvergence { z: Complex64, diffs: Vec<f64> },

    #[error("doubling the Fourier truncation radius {a_trunc} moved an s-node by {change:e} (> {tol:e})")]
    TailTooFat { a_trunc: f64, change: f64, tol: f64 },

    #[error("contour height eta = {eta} violates eta < -2M = {bound}")]
    EtaViolation { eta: f64, bound: f64 },

    #[error("structured operator on [0, {l}] has minimum eigenvalue {min_eig} < {threshold}; refine the grid")]
    GridTooCoarse { l: f64, min_eig: f64, threshold: f64 },

    #[error("linear solve residual {residual:e} exceeds {tol:e}")]
    SolveFailure { residual: f64, tol: f64 },

    #[error("orthonormal-complement overlap dropped to {overlap:e} at node {index}; phase tracking lost")]
    PhaseJump { index: usize, overlap: f64 },

    #[error("pole at {pole} coincides with an eigenvalue of A{which} within {tol:e}")]
    SpectraClash { pole: Complex64, which: u8, tol: f64 },

    #[error("S is numerically singular at (x, t) = ({x}, {t}): |det S| = {det:e} below {tol:e}")]
    OutsideDS { x: f64, t: f64, det: f64, tol: f64 },

    #[error("resolvent (A1 - z I) is singular at z = {z}")]
    ResolventSingular { z: Complex64 },

    #[error("Kronecker compatibility check requires a polynomial pencil; {count} pole term(s) present")]
    PolesPresent { count: usize },

    #[error("transformed potential lost the mKdV block structure: ||lower_left + v~*|| = {defect:e}")]
    StructureBroken { defect: f64 },

    #[error("det S vanishes inside the requested domain (first at (x, t) = ({x}, {t}))")]
    DSViolation { x: f64, t: f64 },

    #[error("{0}")]
    InvalidInput(String),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
