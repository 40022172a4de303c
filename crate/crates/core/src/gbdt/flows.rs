//! Coupled evolution of the dressing blocks (Pi1, Pi2*, S) driven by the
//! coefficients of a spectral pencil.
//!
//! For a pencil evaluating to -(sum_k z^k q_k + sum_{s,k} (z-c_s)^{-k} q_{s,k})
//! the blocks move along the flow direction by
//!
//! ```text
//!     Pi1'   =  sum_k A1^k Pi1 q_k          + sum_{s,k} (A1-c_s)^{-k} Pi1 q_{s,k}
//!     Pi2*'  = -sum_k q_k Pi2* A2^k         - sum_{s,k} q_{s,k} Pi2* (A2-c_s)^{-k}
//!     S'     =  sum_k sum_{j=1..k} A1^{k-j} Pi1 q_k Pi2* A2^{j-1}
//!             - sum_{s,k} sum_{j=1..k} (A1-c_s)^{j-k-1} Pi1 q_{s,k} Pi2* (A2-c_s)^{-j}
//! ```
//!
//! These right-hand sides telescope so that d/du (A1 S - S A2 - Pi1 Pi2*) = 0:
//! the coupling identity is a first integral of the flow, which the tests
//! verify numerically.

use std::sync::Mutex;

use crate::error::{Error, Result};
use crate::linalg::{cr, expm, max_abs, op_norm, zeros, CMat, I};
use crate::pencil::SpectralPencil;
use crate::propagator::steps_for;

use super::{GBDTContext, GBDTNode};

const OVERFLOW_GUARD: f64 = 1e300;

/// Powers and pole resolvents of the parameter matrices, precomputed once
/// per flow call.
struct PencilFlowOps<'a> {
    pencil: &'a SpectralPencil,
    a1_pows: Vec<CMat>,
    a2_pows: Vec<CMat>,
    // One entry per pole block; index k holds (A - c)^{-k}, index 0 the identity.
    r1_pows: Vec<Vec<CMat>>,
    r2_pows: Vec<Vec<CMat>>,
}

pub(super) fn resolvent_at(a: &CMat, pole: crate::linalg::C64, which: u8) -> Result<CMat> {
    let n = a.nrows();
    let shifted = a - CMat::identity(n, n) * pole;
    let svd = shifted.clone().svd(false, false);
    let smax = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    let smin = svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
    let tol = 1e-8 * smax.max(1.0);
    if smin <= tol {
        return Err(Error::SpectraClash { pole, which, tol });
    }
    shifted
        .try_inverse()
        .ok_or(Error::SpectraClash { pole, which, tol })
}

impl<'a> PencilFlowOps<'a> {
    fn new(ctx: &GBDTContext, pencil: &'a SpectralPencil) -> Result<Self> {
        let n = ctx.n();
        let r = pencil.degree();
        let mut a1_pows = vec![CMat::identity(n, n)];
        let mut a2_pows = vec![CMat::identity(n, n)];
        for k in 1..=r {
            a1_pows.push(&a1_pows[k - 1] * ctx.a1());
            a2_pows.push(&a2_pows[k - 1] * ctx.a2());
        }
        let mut r1_pows = Vec::new();
        let mut r2_pows = Vec::new();
        for block in pencil.poles() {
            let c = block.location;
            let rho = block.coeffs.len();
            let b1 = resolvent_at(ctx.a1(), c, 1)?;
            let b2 = resolvent_at(ctx.a2(), c, 2)?;
            let mut p1 = vec![CMat::identity(n, n)];
            let mut p2 = vec![CMat::identity(n, n)];
            for k in 1..=rho {
                p1.push(&p1[k - 1] * &b1);
                p2.push(&p2[k - 1] * &b2);
            }
            r1_pows.push(p1);
            r2_pows.push(p2);
        }
        Ok(PencilFlowOps { pencil, a1_pows, a2_pows, r1_pows, r2_pows })
    }

    fn rhs(&self, x: f64, t: f64, pi1: &CMat, pi2s: &CMat, s: &CMat) -> (CMat, CMat, CMat) {
        let r = self.pencil.degree();
        let mut dpi1 = zeros(pi1.nrows(), pi1.ncols());
        let mut dpi2s = zeros(pi2s.nrows(), pi2s.ncols());
        let mut ds = zeros(s.nrows(), s.ncols());
        for k in 0..=r {
            let q = self.pencil.poly_coeff_at(k, x, t);
            dpi1 += &self.a1_pows[k] * pi1 * &q;
            dpi2s -= &q * pi2s * &self.a2_pows[k];
            for j in 1..=k {
                ds += &self.a1_pows[k - j] * pi1 * &q * pi2s * &self.a2_pows[j - 1];
            }
        }
        for (s_idx, block) in self.pencil.poles().iter().enumerate() {
            let rho = block.coeffs.len();
            for k in 1..=rho {
                let q = self.pencil.pole_coeff_at(s_idx, k, x, t);
                dpi1 += &self.r1_pows[s_idx][k] * pi1 * &q;
                dpi2s -= &q * pi2s * &self.r2_pows[s_idx][k];
                for j in 1..=k {
                    ds -= &self.r1_pows[s_idx][k + 1 - j] * pi1 * &q * pi2s * &self.r2_pows[s_idx][j];
                }
            }
        }
        (dpi1, dpi2s, ds)
    }
}

#[derive(Clone, Copy)]
enum FlowDir {
    X,
    T,
}

fn flow_span(
    ops: &PencilFlowOps,
    start: &GBDTNode,
    dir: FlowDir,
    u1: f64,
    steps: usize,
) -> Result<GBDTNode> {
    let u0 = match dir {
        FlowDir::X => start.x,
        FlowDir::T => start.t,
    };
    let point = |u: f64| match dir {
        FlowDir::X => (u, start.t),
        FlowDir::T => (start.x, u),
    };
    let h = (u1 - u0) / steps as f64;
    let mut pi1 = start.pi1.clone();
    let mut pi2s = start.pi2_star.clone();
    let mut s = start.s.clone();
    for i in 0..steps {
        let u = u0 + i as f64 * h;
        let (xa, ta) = point(u);
        let (xm, tm) = point(u + 0.5 * h);
        let (xb, tb) = point(u + h);
        let hh = cr(0.5 * h);
        let k1 = ops.rhs(xa, ta, &pi1, &pi2s, &s);
        let k2 = ops.rhs(xm, tm, &(&pi1 + &k1.0 * hh), &(&pi2s + &k1.1 * hh), &(&s + &k1.2 * hh));
        let k3 = ops.rhs(xm, tm, &(&pi1 + &k2.0 * hh), &(&pi2s + &k2.1 * hh), &(&s + &k2.2 * hh));
        let k4 = ops.rhs(xb, tb, &(&pi1 + &k3.0 * cr(h)), &(&pi2s + &k3.1 * cr(h)), &(&s + &k3.2 * cr(h)));
        let two = cr(2.0);
        let w = cr(h / 6.0);
        pi1 += (&k1.0 + &k2.0 * two + &k3.0 * two + &k4.0) * w;
        pi2s += (&k1.1 + &k2.1 * two + &k3.1 * two + &k4.1) * w;
        s += (&k1.2 + &k2.2 * two + &k3.2 * two + &k4.2) * w;
        let norm = max_abs(&pi1).max(max_abs(&pi2s)).max(max_abs(&s));
        if !norm.is_finite() || norm > OVERFLOW_GUARD {
            return Err(Error::StepOverflow { coordinate: u + h, norm });
        }
    }
    let (x, t) = point(u1);
    Ok(GBDTNode { x, t, pi1, pi2_star: pi2s, s })
}

/// Move a node along x at fixed t, driven by the x-direction pencil.
pub fn flow_x(
    ctx: &GBDTContext,
    g: &SpectralPencil,
    start: &GBDTNode,
    x1: f64,
    steps: usize,
) -> Result<GBDTNode> {
    let ops = PencilFlowOps::new(ctx, g)?;
    flow_span(&ops, start, FlowDir::X, x1, steps)
}

/// Move a node along t at fixed x, driven by the t-direction pencil.
pub fn flow_t(
    ctx: &GBDTContext,
    f: &SpectralPencil,
    start: &GBDTNode,
    t1: f64,
    steps: usize,
) -> Result<GBDTNode> {
    let ops = PencilFlowOps::new(ctx, f)?;
    flow_span(&ops, start, FlowDir::T, t1, steps)
}

/// Anything that can hand out the dressing blocks at a point of the plane.
pub trait NodeEvaluator: Send + Sync {
    fn context(&self) -> &GBDTContext;
    /// Size of the pencils this evaluator dresses.
    fn m(&self) -> usize;
    fn node_at(&self, x: f64, t: f64) -> Result<GBDTNode>;
}

/// Node evaluation by numerical integration of the block flows from a seed
/// node at the origin: first along t at x = 0, then along x at fixed t.
pub struct FlowEvaluator {
    ctx: GBDTContext,
    g: SpectralPencil,
    f: SpectralPencil,
    node0: GBDTNode,
    steps_per_unit: usize,
    memo: Mutex<Option<((u64, u64), GBDTNode)>>,
}

impl FlowEvaluator {
    pub fn new(
        ctx: GBDTContext,
        g: SpectralPencil,
        f: SpectralPencil,
        node0: GBDTNode,
        steps_per_unit: usize,
    ) -> Result<Self> {
        if node0.x != 0.0 || node0.t != 0.0 {
            return Err(Error::invalid("the seed node must sit at (x, t) = (0, 0)"));
        }
        if g.m() != node0.m() || f.m() != node0.m() {
            return Err(Error::invalid("pencil size does not match the seed node"));
        }
        Ok(FlowEvaluator { ctx, g, f, node0, steps_per_unit, memo: Mutex::new(None) })
    }
}

impl NodeEvaluator for FlowEvaluator {
    fn context(&self) -> &GBDTContext {
        &self.ctx
    }

    fn m(&self) -> usize {
        self.node0.m()
    }

    fn node_at(&self, x: f64, t: f64) -> Result<GBDTNode> {
        let key = (x.to_bits(), t.to_bits());
        if let Some((k, node)) = self.memo.lock().unwrap().as_ref() {
            if *k == key {
                return Ok(node.clone());
            }
        }
        let mut node = self.node0.clone();
        if t != 0.0 {
            node = flow_t(&self.ctx, &self.f, &node, t, steps_for(t, self.steps_per_unit))?;
        }
        if x != 0.0 {
            node = flow_x(&self.ctx, &self.g, &node, x, steps_for(x, self.steps_per_unit))?;
        }
        *self.memo.lock().unwrap() = Some((key, node.clone()));
        Ok(node)
    }
}

/// Exact nodes for the free matrix mKdV seed (zero potential).
///
/// With the x-pencil evaluating to izj and the t-pencil to -iz^3 j, the
/// column halves of Pi1 and the row halves of Pi2* decouple and move by
/// matrix exponentials of A1 and A2; S then follows from the coupling
/// identity by a Sylvester solve, which is exact at every point.
pub struct ClosedFormZeroSeed {
    ctx: GBDTContext,
    p: usize,
    pi1_0: CMat,
    pi2_star_0: CMat,
}

impl ClosedFormZeroSeed {
    pub fn new(ctx: GBDTContext, pi1_0: CMat, pi2_star_0: CMat, p: usize) -> Result<Self> {
        let n = ctx.n();
        if pi1_0.nrows() != n || pi1_0.ncols() != 2 * p {
            return Err(Error::invalid(format!(
                "Pi1 seed must be {} x {}, got {} x {}",
                n,
                2 * p,
                pi1_0.nrows(),
                pi1_0.ncols()
            )));
        }
        if pi2_star_0.nrows() != 2 * p || pi2_star_0.ncols() != n {
            return Err(Error::invalid("Pi2* seed has the wrong shape"));
        }
        let seed = ClosedFormZeroSeed { ctx, p, pi1_0, pi2_star_0 };
        // Fails here already if the spectra of A1 and A2 collide.
        seed.node_at(0.0, 0.0)?;
        Ok(seed)
    }

    pub fn p(&self) -> usize {
        self.p
    }
}

impl NodeEvaluator for ClosedFormZeroSeed {
    fn context(&self) -> &GBDTContext {
        &self.ctx
    }

    fn m(&self) -> usize {
        2 * self.p
    }

    fn node_at(&self, x: f64, t: f64) -> Result<GBDTNode> {
        let a1 = self.ctx.a1();
        let a2 = self.ctx.a2();
        let a1c = a1 * a1 * a1;
        let a2c = a2 * a2 * a2;
        let n = self.ctx.n();
        let p = self.p;
        // Pi1 column halves: Phi1' = -i A1 Phi1 in x, +i A1^3 Phi1 in t.
        let m1 = a1 * (-I * x) + &a1c * (I * t);
        let e1 = expm(&m1);
        let e2 = expm(&(-m1.clone()));
        let phi1 = &e1 * self.pi1_0.columns(0, p).clone_owned();
        let phi2 = &e2 * self.pi1_0.columns(p, p).clone_owned();
        let mut pi1 = zeros(n, 2 * p);
        pi1.view_mut((0, 0), (n, p)).copy_from(&phi1);
        pi1.view_mut((0, p), (n, p)).copy_from(&phi2);
        // Pi2* row halves move by exponentials of A2 on the right.
        let m2 = &a2c * (-I * t) + a2 * (I * x);
        let f1 = expm(&m2);
        let f2 = expm(&(-m2.clone()));
        let top = self.pi2_star_0.rows(0, p).clone_owned() * &f1;
        let bottom = self.pi2_star_0.rows(p, p).clone_owned() * &f2;
        let mut pi2s = zeros(2 * p, n);
        pi2s.view_mut((0, 0), (p, n)).copy_from(&top);
        pi2s.view_mut((p, 0), (p, n)).copy_from(&bottom);
        GBDTNode::from_sylvester(&self.ctx, x, t, pi1, pi2s)
    }
}

/// Relative drift of the coupling identity along a flow, normalized by the
/// sizes of the blocks involved.
pub fn relative_identity_drift(ctx: &GBDTContext, node: &GBDTNode) -> f64 {
    let scale = 1.0
        + op_norm(&node.s) * op_norm(ctx.a1())
        + op_norm(&node.pi1) * op_norm(&node.pi2_star);
    node.identity_defect(ctx) / scale
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, cr, max_abs_diff, solve_sylvester};
    use crate::mkdv_weyl::{build_mkdv_pair, wide_domain, MkdvPotential};
    use crate::pencil::{const_coeff, Domain2D, PoleBlock, SpectralPencil};

    fn adjoint_ctx(n: usize) -> (GBDTContext, CMat, CMat) {
        let a1 = match n {
            1 => CMat::from_row_slice(1, 1, &[c(0.0, 0.7)]),
            _ => CMat::from_row_slice(2, 2, &[c(0.3, 0.9), cr(0.0), cr(0.0), c(-0.1, 0.5)]),
        };
        let pi1_0 = match n {
            1 => CMat::from_row_slice(1, 2, &[cr(1.0), cr(2.0)]),
            _ => CMat::from_row_slice(2, 2, &[cr(1.0), c(0.4, 0.3), c(-0.2, 0.1), cr(1.5)]),
        };
        let pi2_star_0 = pi1_0.adjoint();
        let ctx = GBDTContext::new(a1.clone(), a1.adjoint()).unwrap();
        (ctx, pi1_0, pi2_star_0)
    }

    #[test]
    fn integrated_flow_matches_the_closed_form_for_the_free_seed() {
        let (ctx, pi1_0, pi2_star_0) = adjoint_ctx(2);
        let closed = ClosedFormZeroSeed::new(ctx.clone(), pi1_0, pi2_star_0, 1).unwrap();
        let (g, f) = build_mkdv_pair(&MkdvPotential::zero(1), wide_domain()).unwrap();
        let node0 = closed.node_at(0.0, 0.0).unwrap();
        let flowed = FlowEvaluator::new(ctx, g, f, node0, 400).unwrap();
        let (x, t) = (1.2, 0.3);
        let a = closed.node_at(x, t).unwrap();
        let b = flowed.node_at(x, t).unwrap();
        assert!(max_abs_diff(&a.pi1, &b.pi1) < 1e-8);
        assert!(max_abs_diff(&a.pi2_star, &b.pi2_star) < 1e-8);
        assert!(max_abs_diff(&a.s, &b.s) < 1e-8);
    }

    #[test]
    fn coupling_identity_is_a_first_integral_for_a_nonzero_seed() {
        let (ctx, pi1_0, pi2_star_0) = adjoint_ctx(2);
        let pot = MkdvPotential::constant_scalar(c(0.8, 0.3));
        let (g, f) = build_mkdv_pair(&pot, wide_domain()).unwrap();
        let node0 = GBDTNode::from_sylvester(&ctx, 0.0, 0.0, pi1_0, pi2_star_0).unwrap();
        let along_t = flow_t(&ctx, &f, &node0, 0.4, 200).unwrap();
        let node = flow_x(&ctx, &g, &along_t, 1.5, 600).unwrap();
        assert!(relative_identity_drift(&ctx, &node) < 1e-9);
        // With disjoint spectra the identity pins S: the integrated S must
        // agree with the Sylvester solution of the flowed blocks.
        let pinned = solve_sylvester(ctx.a1(), ctx.a2(), &(&node.pi1 * &node.pi2_star)).unwrap();
        assert!(max_abs_diff(&node.s, &pinned) < 1e-8);
    }

    #[test]
    fn x_and_t_flows_commute_for_a_compatible_pair() {
        let (ctx, pi1_0, pi2_star_0) = adjoint_ctx(2);
        let pot = MkdvPotential::constant_scalar(c(0.8, 0.0));
        let (g, f) = build_mkdv_pair(&pot, wide_domain()).unwrap();
        let node0 = GBDTNode::from_sylvester(&ctx, 0.0, 0.0, pi1_0, pi2_star_0).unwrap();
        let (x, t) = (1.0, 0.3);
        let tx = {
            let nt = flow_t(&ctx, &f, &node0, t, 300).unwrap();
            flow_x(&ctx, &g, &nt, x, 300).unwrap()
        };
        let xt = {
            let nx = flow_x(&ctx, &g, &node0, x, 300).unwrap();
            flow_t(&ctx, &f, &nx, t, 300).unwrap()
        };
        assert!(max_abs_diff(&tx.pi1, &xt.pi1) < 1e-7);
        assert!(max_abs_diff(&tx.s, &xt.s) < 1e-7);
    }

    #[test]
    fn runaway_block_growth_is_reported() {
        let a1 = CMat::from_row_slice(1, 1, &[c(0.0, 30.0)]);
        let ctx = GBDTContext::new(a1.clone(), a1.adjoint()).unwrap();
        let pi1_0 = CMat::from_row_slice(1, 2, &[cr(1.0), cr(1.0)]);
        let node0 = GBDTNode::from_sylvester(&ctx, 0.0, 0.0, pi1_0.clone(), pi1_0.adjoint()).unwrap();
        let domain = Domain2D::new(64.0, 4.0, 64, 4).unwrap();
        let (g, _f) = build_mkdv_pair(&MkdvPotential::zero(1), domain).unwrap();
        let err = flow_x(&ctx, &g, &node0, 30.0, 600).unwrap_err();
        assert!(matches!(err, Error::StepOverflow { .. }));
    }

    #[test]
    fn pole_sitting_on_a_parameter_eigenvalue_is_rejected() {
        let (ctx, pi1_0, pi2_star_0) = adjoint_ctx(2);
        let node0 = GBDTNode::from_sylvester(&ctx, 0.0, 0.0, pi1_0, pi2_star_0).unwrap();
        let domain = Domain2D::new(4.0, 1.0, 8, 4).unwrap();
        // Simple pole placed exactly on an eigenvalue of A1.
        let pencil = SpectralPencil::new(
            2,
            vec![const_coeff(zeros(2, 2))],
            vec![PoleBlock {
                location: c(0.3, 0.9),
                coeffs: vec![const_coeff(CMat::from_row_slice(2, 2, &[
                    cr(0.0), cr(0.2), cr(-0.2), cr(0.0),
                ]))],
            }],
            domain,
        )
        .unwrap();
        let err = flow_x(&ctx, &pencil, &node0, 1.0, 50).unwrap_err();
        assert!(matches!(err, Error::SpectraClash { which: 1, .. }));
    }
}
