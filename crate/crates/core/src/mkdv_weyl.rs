//! The focusing matrix mKdV pair, its Weyl function, and the j-form
//! monotonicity checks.
//!
//! The auxiliary linear system is w_x = G w, w_t = F w with
//! G = izj + V, j = diag(I_p, -I_p), V = [[0, v], [-v*, 0]], and
//! F = -iz^3 j - z^2 V - (iz/2)(V^2 + V_x) j
//!     + (1/4)(V_xx - 2 V^3 + V V_x - V_x V).
//! The pair has zero curvature exactly when v solves
//! 4 v_t = v_xxx + 3 (v_x v* v + v v* v_x).

use crate::error::{Error, Result};
use crate::linalg::{block, c, determinant, eye, max_abs, op_norm, try_inverse, zeros, CMat, C64, I};
use crate::pencil::{Coeff, Domain2D, SpectralPencil};
use crate::propagator::{fundamental_t, fundamental_x, steps_for, transition_x};
use std::sync::Arc;

/// j = diag(I_p, -I_p).
pub fn signature_matrix(p: usize) -> CMat {
    CMat::from_fn(2 * p, 2 * p, |r, q| {
        if r != q {
            C64::new(0.0, 0.0)
        } else if r < p {
            C64::new(1.0, 0.0)
        } else {
            C64::new(-1.0, 0.0)
        }
    })
}

/// Default rectangle for mKdV runs, wide enough for the Weyl truncation
/// schedule in x and for moderate evolution spans in t.
pub fn wide_domain() -> Domain2D {
    Domain2D::new(128.0, 8.0, 128, 8).unwrap()
}

/// Potential block v(x, t) of size p x p together with its first two
/// x-derivatives and a sup-norm bound.
#[derive(Clone)]
pub struct MkdvPotential {
    p: usize,
    bound: f64,
    v: Coeff,
    vx: Coeff,
    vxx: Coeff,
}

impl MkdvPotential {
    pub fn zero(p: usize) -> Self {
        let z: Coeff = Arc::new(move |_, _| zeros(p, p));
        MkdvPotential { p, bound: 0.0, v: z.clone(), vx: z.clone(), vxx: z }
    }

    pub fn constant(v0: CMat) -> Self {
        let p = v0.nrows();
        assert_eq!(v0.ncols(), p, "constant potential block must be square");
        let bound = op_norm(&v0);
        let z: Coeff = Arc::new(move |_, _| zeros(p, p));
        MkdvPotential { p, bound, v: Arc::new(move |_, _| v0.clone()), vx: z.clone(), vxx: z }
    }

    pub fn constant_scalar(v0: C64) -> Self {
        Self::constant(CMat::from_element(1, 1, v0))
    }

    /// Build from a bare v provider; derivatives come from fourth-order
    /// centered differences at step h, so v must be defined a little beyond
    /// any point where derivatives are requested.
    pub fn from_v(p: usize, v: Coeff, bound: f64, h: f64) -> Self {
        let v1 = v.clone();
        let vx: Coeff = Arc::new(move |x, t| {
            (v1(x - 2.0 * h, t).map(|e| e * 1.0) - v1(x - h, t).map(|e| e * 8.0)
                + v1(x + h, t).map(|e| e * 8.0)
                - v1(x + 2.0 * h, t))
            .map(|e| e / (12.0 * h))
        });
        let v2 = v.clone();
        let vxx: Coeff = Arc::new(move |x, t| {
            (-v2(x - 2.0 * h, t) + v2(x - h, t).map(|e| e * 16.0) - v2(x, t).map(|e| e * 30.0)
                + v2(x + h, t).map(|e| e * 16.0)
                - v2(x + 2.0 * h, t))
            .map(|e| e / (12.0 * h * h))
        });
        MkdvPotential { p, bound, v, vx, vxx }
    }

    pub fn from_v_with_derivs(p: usize, v: Coeff, vx: Coeff, vxx: Coeff, bound: f64) -> Self {
        MkdvPotential { p, bound, v, vx, vxx }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn m(&self) -> usize {
        2 * self.p
    }

    /// Sup-norm bound M on v over the domain of interest.
    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn v_at(&self, x: f64, t: f64) -> CMat {
        (self.v)(x, t)
    }

    pub fn vx_at(&self, x: f64, t: f64) -> CMat {
        (self.vx)(x, t)
    }

    pub fn vxx_at(&self, x: f64, t: f64) -> CMat {
        (self.vxx)(x, t)
    }

    /// V = [[0, v], [-v*, 0]] of size 2p x 2p.
    pub fn big_v(&self, x: f64, t: f64) -> CMat {
        embed_block(&self.v_at(x, t))
    }

    pub fn big_vx(&self, x: f64, t: f64) -> CMat {
        embed_block(&self.vx_at(x, t))
    }

    pub fn big_vxx(&self, x: f64, t: f64) -> CMat {
        embed_block(&self.vxx_at(x, t))
    }
}

fn embed_block(v: &CMat) -> CMat {
    let p = v.nrows();
    let mut out = zeros(2 * p, 2 * p);
    out.view_mut((0, p), (p, p)).copy_from(v);
    out.view_mut((p, 0), (p, p)).copy_from(&(-v.adjoint()));
    out
}

/// Residual of 4 v_t = v_xxx + 3 (v_x v* v + v v* v_x) at (x, t), with the
/// time derivative and third derivative taken by second-order differences at
/// step h and v_x taken from the potential itself.
pub fn mkdv_residual(pot: &MkdvPotential, x: f64, t: f64, h: f64) -> f64 {
    let v = |xx: f64, tt: f64| pot.v_at(xx, tt);
    let vt = (v(x, t + h) - v(x, t - h)).map(|e| e / (2.0 * h));
    let vxxx = (-v(x - 2.0 * h, t) + v(x - h, t).map(|e| e * 2.0) - v(x + h, t).map(|e| e * 2.0)
        + v(x + 2.0 * h, t))
    .map(|e| e / (2.0 * h * h * h));
    let v0 = v(x, t);
    let vx = pot.vx_at(x, t);
    let vh = v0.adjoint();
    let nl = (&vx * &vh * &v0 + &v0 * &vh * &vx).map(|e| e * 3.0);
    max_abs(&(vt.map(|e| e * 4.0) - vxxx - nl))
}

/// Build the pencils of the pair (G, F) for the given potential.
pub fn build_mkdv_pair(pot: &MkdvPotential, domain: Domain2D) -> Result<(SpectralPencil, SpectralPencil)> {
    let p = pot.p();
    let m = 2 * p;
    let j = signature_matrix(p);

    let pot_g = pot.clone();
    let g_q0: Coeff = Arc::new(move |x, t| -pot_g.big_v(x, t));
    let jj = j.clone();
    let g_q1: Coeff = Arc::new(move |_, _| jj.map(|e| e * -I));
    let g = SpectralPencil::new(m, vec![g_q0, g_q1], vec![], domain.clone())?.with_h_fd(1e-4, 1e-4);

    // F = -(Q0 + z Q1 + z^2 Q2 + z^3 Q3) with
    // Q3 = ij, Q2 = V, Q1 = (i/2)(V^2 + V_x) j,
    // Q0 = -(1/4)(V_xx - 2 V^3 + V V_x - V_x V)
    let pot0 = pot.clone();
    let f_q0: Coeff = Arc::new(move |x, t| {
        let v = pot0.big_v(x, t);
        let vx = pot0.big_vx(x, t);
        let vxx = pot0.big_vxx(x, t);
        let v3 = &v * &v * &v;
        (vxx - v3.map(|e| e * 2.0) + &v * &vx - &vx * &v).map(|e| e * -0.25)
    });
    let pot1 = pot.clone();
    let j1 = j.clone();
    let f_q1: Coeff = Arc::new(move |x, t| {
        let v = pot1.big_v(x, t);
        let vx = pot1.big_vx(x, t);
        ((&v * &v + vx) * &j1).map(|e| e * 0.5 * I)
    });
    let pot2 = pot.clone();
    let f_q2: Coeff = Arc::new(move |x, t| pot2.big_v(x, t));
    let j3 = j.clone();
    let f_q3: Coeff = Arc::new(move |_, _| j3.map(|e| e * I));
    let f = SpectralPencil::new(m, vec![f_q0, f_q1, f_q2, f_q3], vec![], domain)?.with_h_fd(1e-4, 1e-4);
    Ok((g, f))
}

/// Norm of P(x, t, conj z)* + P(x, t, z); vanishes for pencils whose
/// coefficients are all skew-Hermitian, as both members of the pair are.
pub fn conjugate_symmetry_defect(pencil: &SpectralPencil, x: f64, t: f64, z: C64) -> Result<f64> {
    let a = pencil.eval(x, t, z.conj())?;
    let b = pencil.eval(x, t, z)?;
    Ok(op_norm(&(a.adjoint() + b)))
}

/// Norm of R(t, conj z)* R(t, z) - I at a fixed x-slice; zero curvature of the
/// conjugated pair makes R(t, conj z)* the inverse of R(t, z).
pub fn check_r_conjugate_inverse(
    f: &SpectralPencil,
    x: f64,
    z: C64,
    t: f64,
    steps_per_unit: usize,
) -> Result<f64> {
    let steps = steps_for(t, steps_per_unit);
    let r = fundamental_t(f, x, z, t, steps)?;
    let rc = fundamental_t(f, x, z.conj(), t, steps)?;
    Ok(op_norm(&(rc.adjoint() * r - eye(f.m()))))
}

/// True when z lies in the open sector Im z < -m1, 0 > arg z > -pi/4.
pub fn in_sector(z: C64, m1: f64) -> bool {
    z.im < -m1 && z.re > 0.0 && -z.im < z.re
}

pub fn require_sector(z: C64, m1: f64) -> Result<()> {
    if in_sector(z, m1) {
        Ok(())
    } else {
        Err(Error::SectorError { z, m1 })
    }
}

/// Smallest eigenvalue of W(x, t, z)* j W(x, t, z) - j for Im z below the
/// potential bound; the j-form of W grows in x there, so the value should be
/// nonnegative up to integration error.
pub fn check_w_j_expansive(
    g: &SpectralPencil,
    p: usize,
    m_bound: f64,
    t: f64,
    z: C64,
    x: f64,
    steps_per_unit: usize,
) -> Result<f64> {
    if z.im >= -m_bound {
        return Err(Error::SectorError { z, m1: m_bound });
    }
    let w = fundamental_x(g, t, z, x, steps_for(x, steps_per_unit))?;
    let j = signature_matrix(p);
    let h = w.adjoint() * &j * w - j;
    Ok(crate::linalg::hermitian_eig_range(&h).0)
}

/// Largest eigenvalue of R(x, t, z)* j R(x, t, z) - j for z in the sector;
/// the j-form of R shrinks in t there, so the value should be nonpositive up
/// to integration error.
pub fn check_r_j_contractive(
    f: &SpectralPencil,
    p: usize,
    m1: f64,
    x: f64,
    z: C64,
    t: f64,
    steps_per_unit: usize,
) -> Result<f64> {
    require_sector(z, m1)?;
    let r = fundamental_t(f, x, z, t, steps_for(t, steps_per_unit))?;
    let j = signature_matrix(p);
    let h = r.adjoint() * &j * r - j;
    Ok(crate::linalg::hermitian_eig_range(&h).1)
}

/// Truncation schedule and step density for the direct Weyl computation.
#[derive(Clone)]
pub struct WeylParams {
    /// Largest truncation radius tried; the schedule is 2, 4, 8, ... r_max.
    pub r_max: f64,
    pub steps_per_unit: usize,
    /// Stop once successive truncations differ by at most this much.
    pub tol: f64,
    /// Initial pair (P1, P2); None means (0, I).
    pub pair: Option<(CMat, CMat)>,
}

impl Default for WeylParams {
    fn default() -> Self {
        WeylParams { r_max: 64.0, steps_per_unit: 300, tol: 1e-6, pair: None }
    }
}

#[derive(Clone, Debug)]
pub struct WeylConvergence {
    pub r_used: f64,
    pub diffs: Vec<f64>,
}

fn mobius_blocks(a: &CMat, p: usize, p1: &CMat, p2: &CMat, z: C64) -> Result<CMat> {
    let num = block(a, 0, 0, p, p) * p1 + block(a, 0, p, p, p) * p2;
    let den = block(a, p, 0, p, p) * p1 + block(a, p, p, p, p) * p2;
    let det = determinant(&den);
    let scale = op_norm(&den).powi(p as i32).max(1.0);
    if !det.norm().is_finite() || det.norm() <= 1e-12 * scale {
        return Err(Error::SingularDenominator { z, det: det.norm() });
    }
    Ok(num * try_inverse(&den, "Moebius denominator")?)
}

/// Weyl function of the x-system at time t by truncation: with
/// A(r, z) = W(r, t, conj z)*, the value is the limit of
/// (A11 P1 + A12 P2)(A21 P1 + A22 P2)^{-1} as r grows.
pub fn weyl_direct(
    g: &SpectralPencil,
    p: usize,
    t: f64,
    z: C64,
    params: &WeylParams,
) -> Result<(CMat, WeylConvergence)> {
    if g.m() != 2 * p {
        return Err(Error::invalid(format!("pencil size {} does not match p = {p}", g.m())));
    }
    if z.im >= 0.0 {
        return Err(Error::invalid(format!("Weyl function needs Im z < 0, got z = {z}")));
    }
    let (p1, p2) = match &params.pair {
        Some((a, b)) => (a.clone(), b.clone()),
        None => (zeros(p, p), eye(p)),
    };
    if p1.shape() != (p, p) || p2.shape() != (p, p) {
        return Err(Error::invalid("initial pair blocks must be p x p"));
    }
    let zbar = z.conj();
    let mut w = eye(2 * p);
    let mut r_prev = 0.0_f64;
    let mut phi_prev: Option<CMat> = None;
    let mut diffs = Vec::new();
    let mut r = 2.0_f64;
    while r <= params.r_max * (1.0 + 1e-12) {
        let steps = steps_for(r - r_prev, params.steps_per_unit);
        w = transition_x(g, t, zbar, r_prev, r, steps)? * w;
        let a = w.adjoint();
        let phi = mobius_blocks(&a, p, &p1, &p2, z)?;
        if let Some(prev) = &phi_prev {
            let d = op_norm(&(&phi - prev));
            diffs.push(d);
            if d <= params.tol {
                return Ok((phi, WeylConvergence { r_used: r, diffs }));
            }
        }
        phi_prev = Some(phi);
        r_prev = r;
        r *= 2.0;
    }
    Err(Error::NoConvergence { z, diffs })
}

/// Evolve a Weyl function through the time flow at x = 0:
/// phi(t) = (R11 phi0 + R12)(R21 phi0 + R22)^{-1} with R = R(0, t, z).
pub fn weyl_evolve(
    f: &SpectralPencil,
    p: usize,
    phi0: &CMat,
    t: f64,
    z: C64,
    steps_per_unit: usize,
) -> Result<CMat> {
    if f.m() != 2 * p {
        return Err(Error::invalid(format!("pencil size {} does not match p = {p}", f.m())));
    }
    if phi0.shape() != (p, p) {
        return Err(Error::invalid("phi0 must be p x p"));
    }
    let r = fundamental_t(f, 0.0, z, t, steps_for(t, steps_per_unit))?;
    mobius_blocks(&r, p, phi0, &eye(p), z)
}

/// Interface handing out Weyl values for the inverse problem.
pub trait WeylProvider: Send + Sync {
    fn p(&self) -> usize;
    /// Sup-norm bound M of the potential; integration contours must stay
    /// below -2M.
    fn margin(&self) -> f64;
    fn phi(&self, t: f64, z: C64) -> Result<CMat>;
}

/// Weyl values computed on demand from a pencil by truncation.
pub struct DirectWeyl {
    pub g: SpectralPencil,
    pub p: usize,
    pub bound: f64,
    pub params: WeylParams,
}

impl WeylProvider for DirectWeyl {
    fn p(&self) -> usize {
        self.p
    }

    fn margin(&self) -> f64 {
        self.bound
    }

    fn phi(&self, t: f64, z: C64) -> Result<CMat> {
        weyl_direct(&self.g, self.p, t, z, &self.params).map(|(phi, _)| phi)
    }
}

/// Closed-form Weyl function of the constant scalar potential v = c:
/// phi(z) = c / (lambda - iz) with lambda = -i zeta and
/// zeta the square root of z^2 + |c|^2 with negative imaginary part.
pub struct AnalyticConstV {
    pub c: C64,
}

impl AnalyticConstV {
    pub fn phi_value(&self, z: C64) -> C64 {
        let mut zeta = (z * z + c(self.c.norm_sqr(), 0.0)).sqrt();
        if zeta.im > 0.0 {
            zeta = -zeta;
        }
        let lambda = -I * zeta;
        self.c / (lambda - I * z)
    }
}

impl WeylProvider for AnalyticConstV {
    fn p(&self) -> usize {
        1
    }

    fn margin(&self) -> f64 {
        self.c.norm()
    }

    fn phi(&self, _t: f64, z: C64) -> Result<CMat> {
        if z.im >= 0.0 {
            return Err(Error::invalid(format!("Weyl function needs Im z < 0, got z = {z}")));
        }
        Ok(CMat::from_element(1, 1, self.phi_value(z)))
    }
}

/// The analytic single-bump potential v(x, t) = 2 beta sech(2(beta x + beta^3 t - beta x0)),
/// an exact solution of the scalar focusing mKdV flow. Handy as a ground
/// truth profile independent of any transformation machinery.
pub fn sech_soliton(beta: f64, x0: f64) -> MkdvPotential {
    let v: Coeff = Arc::new(move |x, t| {
        let sigma = 2.0 * (beta * x + beta.powi(3) * t - beta * x0);
        CMat::from_element(1, 1, c(2.0 * beta / sigma.cosh(), 0.0))
    });
    MkdvPotential::from_v(1, v, 2.0 * beta, 1e-3)
}
