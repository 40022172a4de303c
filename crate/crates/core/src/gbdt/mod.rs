//! Darboux-type dressing of first-order spectral pencils built from a
//! matrix triple (A1, A2, S) and a pair of generalized eigenfunction
//! blocks (Pi1, Pi2*).
//!
//! The central invariant is the coupling identity
//!
//! ```text
//!     A1 S - S A2 = Pi1 Pi2*,
//! ```
//!
//! which is preserved exactly by the x- and t-flows of the blocks and
//! lets a rational function of z built from the triple intertwine a seed
//! pencil with a transformed one.  Submodules:
//!
//! * [`flows`]: coupled evolution of (Pi1, Pi2*, S) driven by the
//!   coefficients of a pencil, plus closed-form evaluators;
//! * [`darboux`]: the dressing matrix, transformed coefficients, and the
//!   machine-checkable intertwining identities;
//! * [`soliton`]: the skew-self-adjoint reduction producing explicit
//!   matrix mKdV solutions together with their Weyl functions.

pub mod darboux;
pub mod flows;
pub mod soliton;

pub use darboux::{
    darboux_inverse, darboux_matrix, darboux_ode_residual_t, darboux_ode_residual_x,
    kronecker_compat_residual, kronecker_pencil, normalized_wave, transformed_eval,
    transformed_pencil, transformed_pole_coeffs, transformed_poly_coeffs,
    transformed_zero_curvature,
};
pub use flows::{flow_t, flow_x, relative_identity_drift, ClosedFormZeroSeed, FlowEvaluator, NodeEvaluator};
pub use soliton::{mkdv_soliton, one_soliton, GbdtWeyl, SolitonFamily};

use crate::error::{Error, Result};
use crate::linalg::{max_abs, max_abs_diff, solve_sylvester, CMat};

/// The constant pair of square parameter matrices shared by every node of a
/// dressing flow.  `a1` acts on the left block index, `a2` on the right.
#[derive(Debug, Clone)]
pub struct GBDTContext {
    a1: CMat,
    a2: CMat,
}

impl GBDTContext {
    pub fn new(a1: CMat, a2: CMat) -> Result<Self> {
        if !a1.is_square() || !a2.is_square() {
            return Err(Error::invalid("parameter matrices must be square"));
        }
        if a1.nrows() != a2.nrows() {
            return Err(Error::invalid(format!(
                "parameter matrices must share one size, got {} and {}",
                a1.nrows(),
                a2.nrows()
            )));
        }
        Ok(GBDTContext { a1, a2 })
    }

    pub fn n(&self) -> usize {
        self.a1.nrows()
    }

    pub fn a1(&self) -> &CMat {
        &self.a1
    }

    pub fn a2(&self) -> &CMat {
        &self.a2
    }
}

/// One point of a dressing flow: the blocks (Pi1, Pi2*, S) at (x, t).
///
/// `pi1` is n x m, `pi2_star` is m x n, and `s` is n x n, where m is the
/// pencil size being dressed.
#[derive(Debug, Clone)]
pub struct GBDTNode {
    pub x: f64,
    pub t: f64,
    pub pi1: CMat,
    pub pi2_star: CMat,
    pub s: CMat,
}

impl GBDTNode {
    /// Wrap explicit blocks after validating shapes and the coupling
    /// identity.  The identity must hold to near machine precision
    /// relative to the sizes involved.
    pub fn new(ctx: &GBDTContext, x: f64, t: f64, pi1: CMat, pi2_star: CMat, s: CMat) -> Result<Self> {
        let node = GBDTNode { x, t, pi1, pi2_star, s };
        node.check_shapes(ctx)?;
        let defect = node.identity_defect(ctx);
        let scale = 1.0
            + max_abs(&node.s) * max_abs(ctx.a1())
            + max_abs(&node.pi1) * max_abs(&node.pi2_star);
        if defect > 1e-12 * scale {
            return Err(Error::invalid(format!(
                "coupling identity violated: ||A1 S - S A2 - Pi1 Pi2*|| = {defect:e}"
            )));
        }
        Ok(node)
    }

    /// Build S from the blocks by solving the Sylvester equation
    /// A1 S - S A2 = Pi1 Pi2*.  Requires the spectra of A1 and A2 to be
    /// disjoint, in which case S is unique.
    pub fn from_sylvester(ctx: &GBDTContext, x: f64, t: f64, pi1: CMat, pi2_star: CMat) -> Result<Self> {
        let n = ctx.n();
        if pi1.nrows() != n || pi2_star.ncols() != n || pi1.ncols() != pi2_star.nrows() {
            return Err(Error::invalid(format!(
                "cannot pair Pi1 ({}x{}) with Pi2* ({}x{}) under a parameter of size {}",
                pi1.nrows(),
                pi1.ncols(),
                pi2_star.nrows(),
                pi2_star.ncols(),
                n
            )));
        }
        let rhs = &pi1 * &pi2_star;
        let s = solve_sylvester(ctx.a1(), ctx.a2(), &rhs)?;
        GBDTNode::new(ctx, x, t, pi1, pi2_star, s)
    }

    fn check_shapes(&self, ctx: &GBDTContext) -> Result<()> {
        let n = ctx.n();
        if self.pi1.nrows() != n || self.pi2_star.ncols() != n {
            return Err(Error::invalid(format!(
                "block row/column count {}x{} does not match parameter size {}",
                self.pi1.nrows(),
                self.pi2_star.ncols(),
                n
            )));
        }
        if self.pi1.ncols() != self.pi2_star.nrows() {
            return Err(Error::invalid(format!(
                "Pi1 has {} columns but Pi2* has {} rows",
                self.pi1.ncols(),
                self.pi2_star.nrows()
            )));
        }
        if self.s.nrows() != n || self.s.ncols() != n {
            return Err(Error::invalid("S must be square of the parameter size"));
        }
        Ok(())
    }

    /// Number of columns of Pi1, i.e. the size of the pencils this node
    /// can dress.
    pub fn m(&self) -> usize {
        self.pi1.ncols()
    }

    /// Absolute entry-wise residual of the coupling identity.
    pub fn identity_defect(&self, ctx: &GBDTContext) -> f64 {
        let lhs = ctx.a1() * &self.s - &self.s * ctx.a2();
        max_abs_diff(&lhs, &(&self.pi1 * &self.pi2_star))
    }
}
