//! The dressing matrix, the transformed pencil coefficients, and the
//! intertwining identities that certify them.
//!
//! For a node (Pi1, Pi2*, S) coupled to (A1, A2), the dressing matrix
//!
//! ```text
//!     w_A(z) = I - Pi2* S^{-1} (A1 - z)^{-1} Pi1
//! ```
//!
//! has the closed-form inverse I + Pi2* (A2 - z)^{-1} S^{-1} Pi1 and
//! intertwines the seed pencil G with a transformed pencil G~ through the
//! first-order identity (w_A)_x = G~ w_A - w_A G.  The transformed
//! polynomial coefficients follow from the moment matrices
//!
//! ```text
//!     Y_l = Pi2* S^{-1} A1^l Pi1,      X_l = Pi2* A2^l S^{-1} Pi1,
//! ```
//!
//! via q~_k = q_k + sum_{j>k} [ Y_l q_j - q_j X_l - sum_{a+b=l-1} Y_b q_j X_a ]
//! with l = j - k - 1; Laurent coefficients at a pole c use the resolvent
//! moments E_l = Pi2* S^{-1} (A1 - c)^{-l} Pi1 instead, and the top
//! coefficient of a pole conjugates by w_A(c).

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{determinant, eye, kron, op_norm, try_inverse, zeros, C64, CMat};
use crate::pencil::{Coeff, PoleBlock, SpectralPencil};
use crate::propagator::wave_function;

use super::flows::{resolvent_at, NodeEvaluator};
use super::{GBDTContext, GBDTNode};

/// Absolute threshold below which det S counts as a zero of the dressing
/// domain.  Scaled by ||S||^(n-1) so the gate tracks the size of S.
pub fn det_s_tolerance(s: &CMat) -> f64 {
    let n = s.nrows();
    1e-8 * op_norm(s).max(1e-300).powi(n as i32 - 1)
}

/// Inverse of S behind the det-S gate.
pub fn s_inverse(node: &GBDTNode) -> Result<CMat> {
    let det = determinant(&node.s).norm();
    let tol = det_s_tolerance(&node.s);
    if !det.is_finite() || det <= tol {
        return Err(Error::OutsideDS { x: node.x, t: node.t, det, tol });
    }
    try_inverse(&node.s, "S block of a dressing node")
}

fn resolvent_z(a: &CMat, z: C64) -> Result<CMat> {
    let n = a.nrows();
    let shifted = a - CMat::identity(n, n) * z;
    let svd = shifted.clone().svd(false, false);
    let smax = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    let smin = svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
    if smin <= 1e-12 * smax.max(1.0) {
        return Err(Error::ResolventSingular { z });
    }
    shifted.try_inverse().ok_or(Error::ResolventSingular { z })
}

/// The dressing matrix w_A(z) = I - Pi2* S^{-1} (A1 - z)^{-1} Pi1.
pub fn darboux_matrix(ctx: &GBDTContext, node: &GBDTNode, z: C64) -> Result<CMat> {
    let s_inv = s_inverse(node)?;
    let b = resolvent_z(ctx.a1(), z)?;
    Ok(eye(node.m()) - &node.pi2_star * s_inv * b * &node.pi1)
}

/// Closed-form inverse w_A(z)^{-1} = I + Pi2* (A2 - z)^{-1} S^{-1} Pi1.
///
/// This is an independent expression, not a numerical inversion of
/// [`darboux_matrix`]; their product collapsing to the identity is a
/// nontrivial consequence of the coupling identity.
pub fn darboux_inverse(ctx: &GBDTContext, node: &GBDTNode, z: C64) -> Result<CMat> {
    let s_inv = s_inverse(node)?;
    let b2 = resolvent_z(ctx.a2(), z)?;
    Ok(eye(node.m()) + &node.pi2_star * b2 * s_inv * &node.pi1)
}

/// Transformed polynomial coefficients of `base` at the node's (x, t).
pub fn transformed_poly_coeffs(
    ctx: &GBDTContext,
    node: &GBDTNode,
    base: &SpectralPencil,
) -> Result<Vec<CMat>> {
    let r = base.degree();
    let s_inv = s_inverse(node)?;
    let n = ctx.n();
    let mut a1_pows = vec![CMat::identity(n, n)];
    let mut a2_pows = vec![CMat::identity(n, n)];
    for l in 1..r {
        a1_pows.push(&a1_pows[l - 1] * ctx.a1());
        a2_pows.push(&a2_pows[l - 1] * ctx.a2());
    }
    let mut ys = Vec::new();
    let mut xs = Vec::new();
    for l in 0..r {
        ys.push(&node.pi2_star * &s_inv * &a1_pows[l] * &node.pi1);
        xs.push(&node.pi2_star * &a2_pows[l] * &s_inv * &node.pi1);
    }
    let qs: Vec<CMat> = (0..=r).map(|k| base.poly_coeff_at(k, node.x, node.t)).collect();
    let mut out = Vec::with_capacity(r + 1);
    for kappa in 0..=r {
        let mut qt = qs[kappa].clone();
        for k in (kappa + 1)..=r {
            let l = k - kappa - 1;
            qt += &ys[l] * &qs[k] - &qs[k] * &xs[l];
            for a in 0..l {
                let b = l - 1 - a;
                qt -= &ys[b] * &qs[k] * &xs[a];
            }
        }
        out.push(qt);
    }
    Ok(out)
}

/// Transformed Laurent coefficients at each pole of `base`.  Supports pole
/// orders one and two, which is all the rational pencils exercised here
/// need; higher orders are rejected.
pub fn transformed_pole_coeffs(
    ctx: &GBDTContext,
    node: &GBDTNode,
    base: &SpectralPencil,
) -> Result<Vec<Vec<CMat>>> {
    let s_inv = s_inverse(node)?;
    let mut out = Vec::new();
    for (s_idx, block) in base.poles().iter().enumerate() {
        let rho = block.coeffs.len();
        if rho > 2 {
            return Err(Error::invalid(format!(
                "pole order {rho} at {} exceeds the supported order 2",
                block.location
            )));
        }
        let b1 = resolvent_at(ctx.a1(), block.location, 1)?;
        let e1 = &node.pi2_star * &s_inv * &b1 * &node.pi1;
        let inv_ie1 = try_inverse(&(eye(node.m()) - &e1), "dressing matrix at a pole location")?;
        let q1 = base.pole_coeff_at(s_idx, 1, node.x, node.t);
        if rho == 1 {
            let d1 = (&q1 * &e1 - &e1 * &q1) * &inv_ie1;
            out.push(vec![q1 + d1]);
        } else {
            let e2 = &node.pi2_star * &s_inv * (&b1 * &b1) * &node.pi1;
            let q2 = base.pole_coeff_at(s_idx, 2, node.x, node.t);
            let d2 = (&q2 * &e1 - &e1 * &q2) * &inv_ie1;
            let d1 = ((&q1 * &e1 - &e1 * &q1) + (&q2 * &e2 - &e2 * &q2) + &d2 * &e2) * &inv_ie1;
            out.push(vec![q1 + d1, q2 + d2]);
        }
    }
    Ok(out)
}

/// Value of the transformed pencil at (node.x, node.t, z).
pub fn transformed_eval(
    ctx: &GBDTContext,
    node: &GBDTNode,
    base: &SpectralPencil,
    z: C64,
) -> Result<CMat> {
    let poly = transformed_poly_coeffs(ctx, node, base)?;
    let poles = transformed_pole_coeffs(ctx, node, base)?;
    let m = node.m();
    let mut acc = zeros(m, m);
    let mut zp = C64::new(1.0, 0.0);
    for q in &poly {
        acc += q * zp;
        zp *= z;
    }
    for (block, coeffs) in base.poles().iter().zip(&poles) {
        let dist = (z - block.location).norm();
        let tol = base.pole_tolerance(block.location);
        if dist <= tol {
            return Err(Error::PoleHit { z, pole: block.location, tol });
        }
        let w = C64::new(1.0, 0.0) / (z - block.location);
        let mut wp = w;
        for q in coeffs {
            acc += q * wp;
            wp *= w;
        }
    }
    Ok(-acc)
}

/// Wrap the transformed coefficients of `base` as a pencil of their own,
/// evaluating the dressing node on demand.  The coefficient providers
/// panic if the node cannot be produced (e.g. det S vanishes there), so
/// keep the requested domain inside the dressing domain.
pub fn transformed_pencil(
    evaluator: Arc<dyn NodeEvaluator>,
    base: &SpectralPencil,
) -> Result<SpectralPencil> {
    if evaluator.m() != base.m() {
        return Err(Error::invalid("evaluator and pencil sizes differ"));
    }
    let base_arc = Arc::new(base.clone());
    let r = base.degree();
    let mut poly: Vec<Coeff> = Vec::with_capacity(r + 1);
    for kappa in 0..=r {
        let ev = evaluator.clone();
        let b = base_arc.clone();
        poly.push(Arc::new(move |x: f64, t: f64| {
            let node = ev.node_at(x, t).expect("dressing node unavailable");
            let coeffs = transformed_poly_coeffs(ev.context(), &node, &b)
                .expect("transformed coefficient unavailable");
            coeffs[kappa].clone()
        }) as Coeff);
    }
    let mut pole_blocks: Vec<PoleBlock> = Vec::new();
    for (s_idx, block) in base.poles().iter().enumerate() {
        let mut coeffs: Vec<Coeff> = Vec::new();
        for k in 0..block.coeffs.len() {
            let ev = evaluator.clone();
            let b = base_arc.clone();
            coeffs.push(Arc::new(move |x: f64, t: f64| {
                let node = ev.node_at(x, t).expect("dressing node unavailable");
                let pole_coeffs = transformed_pole_coeffs(ev.context(), &node, &b)
                    .expect("transformed pole coefficient unavailable");
                pole_coeffs[s_idx][k].clone()
            }) as Coeff);
        }
        pole_blocks.push(PoleBlock { location: block.location, coeffs });
    }
    let (hx, ht) = base.h_fd();
    Ok(SpectralPencil::new(base.m(), poly, pole_blocks, base.domain().clone())?.with_h_fd(hx, ht))
}

/// Residual of (w_A)_x = G~ w_A - w_A G at one point, with the left side
/// taken by central differencing of the dressing matrix along x.
pub fn darboux_ode_residual_x(
    evaluator: &dyn NodeEvaluator,
    base_g: &SpectralPencil,
    x: f64,
    t: f64,
    z: C64,
    h: f64,
) -> Result<f64> {
    let ctx = evaluator.context();
    let node = evaluator.node_at(x, t)?;
    let w0 = darboux_matrix(ctx, &node, z)?;
    let wp = darboux_matrix(ctx, &evaluator.node_at(x + h, t)?, z)?;
    let wm = darboux_matrix(ctx, &evaluator.node_at(x - h, t)?, z)?;
    let lhs = (wp - wm) / crate::linalg::cr(2.0 * h);
    let g = base_g.eval(x, t, z)?;
    let gt = transformed_eval(ctx, &node, base_g, z)?;
    Ok(op_norm(&(lhs - (&gt * &w0 - &w0 * &g))))
}

/// Residual of (w_A)_t = F~ w_A - w_A F at one point.
pub fn darboux_ode_residual_t(
    evaluator: &dyn NodeEvaluator,
    base_f: &SpectralPencil,
    x: f64,
    t: f64,
    z: C64,
    h: f64,
) -> Result<f64> {
    let ctx = evaluator.context();
    let node = evaluator.node_at(x, t)?;
    let w0 = darboux_matrix(ctx, &node, z)?;
    let wp = darboux_matrix(ctx, &evaluator.node_at(x, t + h)?, z)?;
    let wm = darboux_matrix(ctx, &evaluator.node_at(x, t - h)?, z)?;
    let lhs = (wp - wm) / crate::linalg::cr(2.0 * h);
    let f = base_f.eval(x, t, z)?;
    let ft = transformed_eval(ctx, &node, base_f, z)?;
    Ok(op_norm(&(lhs - (&ft * &w0 - &w0 * &f))))
}

/// Zero-curvature residual of the dressed pair (G~, F~) at one point.
pub fn transformed_zero_curvature(
    evaluator: Arc<dyn NodeEvaluator>,
    base_g: &SpectralPencil,
    base_f: &SpectralPencil,
    x: f64,
    t: f64,
    z: C64,
) -> Result<f64> {
    let gt = transformed_pencil(evaluator.clone(), base_g)?;
    let ft = transformed_pencil(evaluator, base_f)?;
    crate::pencil::zero_curvature_residual(&gt, &ft, x, t, z)
}

/// Fundamental solution of the dressed pair, normalized to the identity at
/// the origin: w_A(x, t, z) w(x, t, z) w_A(0, 0, z)^{-1}, where w is the
/// seed's fundamental solution.
pub fn normalized_wave(
    evaluator: &dyn NodeEvaluator,
    base_g: &SpectralPencil,
    base_f: &SpectralPencil,
    x: f64,
    t: f64,
    z: C64,
    steps_per_unit: usize,
) -> Result<CMat> {
    let ctx = evaluator.context();
    let w = wave_function(base_g, base_f, x, t, z, steps_per_unit)?;
    let w_a = darboux_matrix(ctx, &evaluator.node_at(x, t)?, z)?;
    let w_a0_inv = darboux_inverse(ctx, &evaluator.node_at(0.0, 0.0)?, z)?;
    Ok(w_a * w * w_a0_inv)
}

/// Substitute a square matrix for the spectral parameter of a polynomial
/// pencil: gamma(x, t) = -(sum_k q_k^T (x, t) (x) A^k), acting on the
/// tensor product of coefficient and parameter spaces.
pub fn kronecker_pencil(pencil: &SpectralPencil, a: &CMat, x: f64, t: f64) -> Result<CMat> {
    if !pencil.poles().is_empty() {
        return Err(Error::PolesPresent { count: pencil.poles().len() });
    }
    let n = a.nrows();
    let m = pencil.m();
    let mut a_pow = CMat::identity(n, n);
    let mut acc = zeros(m * n, m * n);
    for k in 0..=pencil.degree() {
        let q = pencil.poly_coeff_at(k, x, t);
        acc += kron(&q.transpose(), &a_pow);
        if k < pencil.degree() {
            a_pow = &a_pow * a;
        }
    }
    Ok(-acc)
}

/// Compatibility of a pencil pair after substituting a matrix for z.
///
/// Because the substitution z^k -> q^T (x) A^k reverses products, the
/// vanishing combination inherited from G_t - F_x + GF - FG = 0 is
///
/// ```text
///     gamma_t - Gamma_x + Gamma gamma - gamma Gamma,
/// ```
///
/// with the quadratic part in the order opposite to the scalar identity.
/// Both time derivatives are taken by fourth-order central differences of
/// the substituted matrices.
pub fn kronecker_compat_residual(
    g: &SpectralPencil,
    f: &SpectralPencil,
    a: &CMat,
    x: f64,
    t: f64,
    h: f64,
) -> Result<f64> {
    let total = g.poles().len() + f.poles().len();
    if total > 0 {
        return Err(Error::PolesPresent { count: total });
    }
    let gamma = kronecker_pencil(g, a, x, t)?;
    let big_gamma = kronecker_pencil(f, a, x, t)?;
    let stencil = [(-2.0, 1.0), (-1.0, -8.0), (1.0, 8.0), (2.0, -1.0)];
    let mut gamma_t = zeros(gamma.nrows(), gamma.ncols());
    let mut big_gamma_x = zeros(gamma.nrows(), gamma.ncols());
    for (off, wgt) in stencil {
        gamma_t += kronecker_pencil(g, a, x, t + off * h)? * crate::linalg::cr(wgt / (12.0 * h));
        big_gamma_x += kronecker_pencil(f, a, x + off * h, t)? * crate::linalg::cr(wgt / (12.0 * h));
    }
    let resid = gamma_t - big_gamma_x + &big_gamma * &gamma - &gamma * &big_gamma;
    Ok(op_norm(&resid))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gbdt::flows::{ClosedFormZeroSeed, FlowEvaluator};
    use crate::linalg::{c, cr, max_abs_diff, I};
    use crate::mkdv_weyl::{build_mkdv_pair, sech_soliton, signature_matrix, wide_domain, MkdvPotential};
    use crate::pencil::{const_coeff, Domain2D, SpectralPencil};
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn soliton_seed() -> ClosedFormZeroSeed {
        let a1 = CMat::from_row_slice(1, 1, &[c(0.0, 0.7)]);
        let ctx = GBDTContext::new(a1.clone(), a1.adjoint()).unwrap();
        let pi1_0 = CMat::from_row_slice(1, 2, &[cr(1.0), cr(2.0)]);
        let pi2_star_0 = pi1_0.adjoint();
        ClosedFormZeroSeed::new(ctx, pi1_0, pi2_star_0, 1).unwrap()
    }

    #[test]
    fn dressing_matrix_times_its_closed_inverse_is_the_identity() {
        let seed = soliton_seed();
        let ctx = seed.context().clone();
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let mut checked = 0usize;
        while checked < 100 {
            let x = rng.random_range(0.0..4.0);
            let t = rng.random_range(0.0..1.0);
            let z = c(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            if (z - c(0.0, 0.7)).norm() < 0.3 || (z - c(0.0, -0.7)).norm() < 0.3 {
                continue;
            }
            let node = seed.node_at(x, t).unwrap();
            let w = darboux_matrix(&ctx, &node, z).unwrap();
            let w_inv = darboux_inverse(&ctx, &node, z).unwrap();
            assert!(op_norm(&(&w * &w_inv - eye(2))) < 1e-10);
            assert!(op_norm(&(&w_inv * &w - eye(2))) < 1e-10);
            checked += 1;
        }
    }

    #[test]
    fn transformed_coefficients_close_under_the_adjoint_reduction() {
        // With A2 = A1*, Pi2* = Pi1* and skew-Hermitian seed coefficients,
        // the dressed x-pencil must be izj + V~ with V~ = -2 [j-blocks of
        // i Y0 commutator]; spell both routes out and compare.
        let seed = soliton_seed();
        let ctx = seed.context().clone();
        let (g, _f) = build_mkdv_pair(&MkdvPotential::zero(1), wide_domain()).unwrap();
        let node = seed.node_at(1.3, 0.4).unwrap();
        let coeffs = transformed_poly_coeffs(&ctx, &node, &g).unwrap();
        // Leading coefficient is untouched.
        assert!(max_abs_diff(&coeffs[1], &(signature_matrix(1) * (-I))) < 1e-13);
        let s_inv = s_inverse(&node).unwrap();
        let y0 = &node.pi2_star * &s_inv * &node.pi1;
        let b = &y0 * I;
        let j = signature_matrix(1);
        let v_tilde = &b * &j - &j * &b;
        assert!(max_abs_diff(&coeffs[0], &(-v_tilde)) < 1e-12);
        // The off-diagonal entry is the dressed scalar potential; its
        // conjugate partner sits with the opposite sign.
        assert!((coeffs[0][(0, 1)] + coeffs[0][(1, 0)].conj()).norm() < 1e-12);
    }

    #[test]
    fn generic_cubic_pencil_satisfies_the_intertwining_identity() {
        // Constant, non-symmetric cubic coefficients: exercises the full
        // moment expansion including the second-order cross terms.
        let domain = Domain2D::new(4.0, 1.0, 8, 4).unwrap();
        let q0 = CMat::from_row_slice(2, 2, &[c(0.3, 0.1), cr(-0.2), c(0.0, 0.4), cr(-0.1)]);
        let q1 = CMat::from_row_slice(2, 2, &[cr(0.0), cr(0.5), cr(-0.5), c(0.0, 0.2)]);
        let q2 = CMat::from_row_slice(2, 2, &[cr(0.1), c(0.0, 0.3), cr(0.2), cr(-0.3)]);
        let q3 = CMat::from_row_slice(2, 2, &[c(0.0, 0.25), cr(0.0), cr(0.1), c(0.0, -0.15)]);
        let g = SpectralPencil::new(
            2,
            vec![const_coeff(q0), const_coeff(q1), const_coeff(q2), const_coeff(q3)],
            vec![],
            domain.clone(),
        )
        .unwrap();
        let f_unused = SpectralPencil::new(2, vec![const_coeff(zeros(2, 2))], vec![], domain).unwrap();
        let a1 = CMat::from_row_slice(2, 2, &[c(0.0, 0.9), cr(0.2), cr(0.0), c(0.4, 0.5)]);
        let a2 = CMat::from_row_slice(2, 2, &[c(0.0, -0.3), cr(0.0), cr(0.1), c(0.8, -0.2)]);
        let ctx = GBDTContext::new(a1, a2).unwrap();
        let pi1_0 = CMat::from_row_slice(2, 2, &[cr(1.0), cr(0.3), cr(-0.2), cr(1.1)]);
        let pi2_star_0 = CMat::from_row_slice(2, 2, &[cr(0.8), cr(0.1), cr(-0.4), cr(0.9)]);
        let node0 = GBDTNode::from_sylvester(&ctx, 0.0, 0.0, pi1_0, pi2_star_0).unwrap();
        let ev = FlowEvaluator::new(ctx, g.clone(), f_unused, node0, 400).unwrap();
        for z in [c(2.0, 1.0), c(-1.3, -0.8)] {
            let r = darboux_ode_residual_x(&ev, &g, 0.7, 0.0, z, 1e-4).unwrap();
            assert!(r < 1e-5, "intertwining residual {r:e} at z = {z}");
        }
    }

    #[test]
    fn rational_pencil_with_a_double_pole_satisfies_the_intertwining_identity() {
        let domain = Domain2D::new(4.0, 1.0, 8, 4).unwrap();
        let q0 = CMat::from_row_slice(2, 2, &[c(0.2, 0.1), cr(0.3), cr(-0.3), c(-0.2, 0.2)]);
        let p1 = CMat::from_row_slice(2, 2, &[cr(0.4), c(0.0, -0.2), c(0.0, 0.2), cr(-0.4)]);
        let p2 = CMat::from_row_slice(2, 2, &[cr(0.0), cr(0.25), cr(-0.25), c(0.0, 0.1)]);
        let g = SpectralPencil::new(
            2,
            vec![const_coeff(q0)],
            vec![crate::pencil::PoleBlock {
                location: c(1.5, -0.5),
                coeffs: vec![const_coeff(p1), const_coeff(p2)],
            }],
            domain.clone(),
        )
        .unwrap();
        let f_unused = SpectralPencil::new(2, vec![const_coeff(zeros(2, 2))], vec![], domain).unwrap();
        let a1 = CMat::from_row_slice(2, 2, &[c(0.0, 0.9), cr(0.2), cr(0.0), c(0.4, 0.5)]);
        let a2 = CMat::from_row_slice(2, 2, &[c(0.0, -0.3), cr(0.0), cr(0.1), c(0.8, -0.2)]);
        let ctx = GBDTContext::new(a1, a2).unwrap();
        let pi1_0 = CMat::from_row_slice(2, 2, &[cr(1.0), cr(0.3), cr(-0.2), cr(1.1)]);
        let pi2_star_0 = CMat::from_row_slice(2, 2, &[cr(0.8), cr(0.1), cr(-0.4), cr(0.9)]);
        let node0 = GBDTNode::from_sylvester(&ctx, 0.0, 0.0, pi1_0, pi2_star_0).unwrap();
        let ev = FlowEvaluator::new(ctx, g.clone(), f_unused, node0, 400).unwrap();
        for z in [c(2.5, 0.5), c(-1.0, 0.4)] {
            let r = darboux_ode_residual_x(&ev, &g, 0.6, 0.0, z, 1e-4).unwrap();
            assert!(r < 1e-5, "rational intertwining residual {r:e} at z = {z}");
        }
    }

    #[test]
    fn dressed_free_pair_keeps_zero_curvature() {
        let seed = Arc::new(soliton_seed());
        let (g, f) = build_mkdv_pair(&MkdvPotential::zero(1), wide_domain()).unwrap();
        for (x, t, z) in [(1.0, 0.2, c(1.0, -1.0)), (2.0, 0.5, c(0.0, -2.0))] {
            let r = transformed_zero_curvature(seed.clone(), &g, &f, x, t, z).unwrap();
            assert!(r < 1e-5, "dressed zero-curvature residual {r:e} at ({x}, {t}, {z})");
        }
    }

    #[test]
    fn dressing_intertwines_the_t_direction_as_well() {
        let seed = soliton_seed();
        let (_g, f) = build_mkdv_pair(&MkdvPotential::zero(1), wide_domain()).unwrap();
        for z in [c(1.0, -1.0), c(-0.8, 1.2)] {
            let r = darboux_ode_residual_t(&seed, &f, 1.1, 0.3, z, 1e-4).unwrap();
            assert!(r < 1e-5, "t-direction intertwining residual {r:e} at z = {z}");
        }
    }

    #[test]
    fn normalized_wave_solves_the_dressed_system_and_is_one_at_origin() {
        let seed = soliton_seed();
        let ctx = seed.context().clone();
        let (g, f) = build_mkdv_pair(&MkdvPotential::zero(1), wide_domain()).unwrap();
        let z = c(1.0, -1.0);
        let at_origin = normalized_wave(&seed, &g, &f, 0.0, 0.0, z, 400).unwrap();
        assert!(op_norm(&(at_origin - eye(2))) < 1e-10);
        let (x, t) = (1.0, 0.3);
        let h = 1e-3;
        let wp = normalized_wave(&seed, &g, &f, x + h, t, z, 400).unwrap();
        let wm = normalized_wave(&seed, &g, &f, x - h, t, z, 400).unwrap();
        let w0 = normalized_wave(&seed, &g, &f, x, t, z, 400).unwrap();
        let node = seed.node_at(x, t).unwrap();
        let g_dressed = transformed_eval(&ctx, &node, &g, z).unwrap();
        let resid = (wp - wm) / cr(2.0 * h) - &g_dressed * &w0;
        assert!(op_norm(&resid) < 1e-4, "dressed wave x-residual {:e}", op_norm(&resid));
    }

    #[test]
    fn matrix_substitution_respects_compatibility_in_reversed_order_only() {
        let pot = sech_soliton(0.7, 0.5);
        let (g, f) = build_mkdv_pair(&pot, wide_domain()).unwrap();
        let a = CMat::from_row_slice(2, 2, &[c(0.0, 0.9), cr(0.2), cr(0.0), c(0.4, 0.5)]);
        let (x, t, h) = (1.0, 0.4, 1e-3);
        let r = kronecker_compat_residual(&g, &f, &a, x, t, h).unwrap();
        assert!(r < 1e-5, "reversed-order substitution residual {r:e}");
        // The naive same-order commutator does not vanish: the substitution
        // anti-commutes with products, so this control stays large.
        let gamma = kronecker_pencil(&g, &a, x, t).unwrap();
        let big_gamma = kronecker_pencil(&f, &a, x, t).unwrap();
        let stencil = [(-2.0, 1.0), (-1.0, -8.0), (1.0, 8.0), (2.0, -1.0)];
        let mut gamma_t = zeros(4, 4);
        let mut big_gamma_x = zeros(4, 4);
        for (off, wgt) in stencil {
            gamma_t += kronecker_pencil(&g, &a, x, t + off * h).unwrap() * cr(wgt / (12.0 * h));
            big_gamma_x += kronecker_pencil(&f, &a, x + off * h, t).unwrap() * cr(wgt / (12.0 * h));
        }
        let naive = gamma_t - big_gamma_x + &gamma * &big_gamma - &big_gamma * &gamma;
        assert!(op_norm(&naive) > 1e-3, "naive-order control unexpectedly small");
    }

    #[test]
    fn incompatible_pair_fails_the_substitution_check() {
        // v = t x solves nothing; the substituted residual must stay large.
        let pot = MkdvPotential::from_v(
            1,
            Arc::new(|x: f64, t: f64| CMat::from_element(1, 1, cr(t * x))),
            8.0,
            1e-3,
        );
        let (g, f) = build_mkdv_pair(&pot, wide_domain()).unwrap();
        let a = CMat::from_row_slice(2, 2, &[c(0.0, 0.9), cr(0.2), cr(0.0), c(0.4, 0.5)]);
        let r = kronecker_compat_residual(&g, &f, &a, 1.0, 0.4, 1e-3).unwrap();
        assert!(r > 1e-3, "incompatible pair slipped through: {r:e}");
    }

    #[test]
    fn substitution_rejects_rational_pencils() {
        let domain = Domain2D::new(4.0, 1.0, 8, 4).unwrap();
        let q = CMat::from_row_slice(2, 2, &[cr(0.0), cr(0.2), cr(-0.2), cr(0.0)]);
        let with_pole = SpectralPencil::new(
            2,
            vec![const_coeff(zeros(2, 2))],
            vec![crate::pencil::PoleBlock { location: c(2.0, 0.0), coeffs: vec![const_coeff(q)] }],
            domain.clone(),
        )
        .unwrap();
        let plain = SpectralPencil::new(2, vec![const_coeff(zeros(2, 2))], vec![], domain).unwrap();
        let a = eye(2);
        let err = kronecker_compat_residual(&with_pole, &plain, &a, 1.0, 0.4, 1e-3).unwrap_err();
        assert!(matches!(err, Error::PolesPresent { count: 1 }));
    }

    #[test]
    fn vanishing_det_s_is_reported_with_location() {
        let seed = soliton_seed();
        let mut node = seed.node_at(1.0, 0.2).unwrap();
        node.s = CMat::from_element(1, 1, cr(0.0));
        let err = s_inverse(&node).unwrap_err();
        match err {
            Error::OutsideDS { x, t, .. } => {
                assert_eq!(x, 1.0);
                assert_eq!(t, 0.2);
            }
            other => panic!("expected OutsideDS, got {other}"),
        }
    }
}
