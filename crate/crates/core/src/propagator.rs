//! Fundamental solutions of W_x = G W and R_t = F R by fixed-step RK4,
//! the factorization residual W(x,t,z) R(t,z) - R(x,t,z) W(x,0,z), and the
//! mixed-derivative compatibility check on the joint wave function.

use crate::error::{Error, Result};
use crate::linalg::{eye, max_abs, op_norm, CMat, C64};
use crate::pencil::SpectralPencil;

/// Norm bound beyond which integration aborts instead of overflowing to inf.
const OVERFLOW_GUARD: f64 = 1e300;

/// Number of RK4 steps for a span at the requested resolution, at least one.
pub fn steps_for(span: f64, steps_per_unit: usize) -> usize {
    ((span.abs() * steps_per_unit as f64).ceil() as usize).max(1)
}

/// Integrate dY/du = A(u) Y from u0 to u1 with Y(u0) = y0.
fn rk4<A>(a: A, y0: CMat, u0: f64, u1: f64, steps: usize) -> Result<CMat>
where
    A: Fn(f64) -> Result<CMat>,
{
    if steps == 0 {
        return Err(Error::invalid("rk4 needs at least one step"));
    }
    let h = (u1 - u0) / steps as f64;
    let mut y = y0;
    for i in 0..steps {
        let u = u0 + i as f64 * h;
        let a1 = a(u)?;
        let a2 = a(u + 0.5 * h)?;
        let a4 = a(u + h)?;
        let k1 = &a1 * &y;
        let k2 = &a2 * (&y + k1.map(|e| e * 0.5 * h));
        let k3 = &a2 * (&y + k2.map(|e| e * 0.5 * h));
        let k4 = &a4 * (&y + k3.map(|e| e * h));
        y += (k1 + k2.map(|e| e * 2.0) + k3.map(|e| e * 2.0) + k4).map(|e| e * (h / 6.0));
        let norm = max_abs(&y);
        if !norm.is_finite() || norm > OVERFLOW_GUARD {
            return Err(Error::StepOverflow { coordinate: u + h, norm });
        }
    }
    Ok(y)
}

/// Transition matrix of W_x = G(x, t, z) W from x0 to x1 at fixed (t, z).
pub fn transition_x(g: &SpectralPencil, t: f64, z: C64, x0: f64, x1: f64, steps: usize) -> Result<CMat> {
    rk4(|x| g.eval(x, t, z), eye(g.m()), x0, x1, steps)
}

/// Transition matrix of R_t = F(x, t, z) R from t0 to t1 at fixed (x, z).
pub fn transition_t(f: &SpectralPencil, x: f64, z: C64, t0: f64, t1: f64, steps: usize) -> Result<CMat> {
    rk4(|t| f.eval(x, t, z), eye(f.m()), t0, t1, steps)
}

/// W(x, t, z): fundamental solution in x normalized to I at x = 0.
pub fn fundamental_x(g: &SpectralPencil, t: f64, z: C64, x: f64, steps: usize) -> Result<CMat> {
    transition_x(g, t, z, 0.0, x, steps)
}

/// R(x, t, z): fundamental solution in t normalized to I at t = 0.
pub fn fundamental_t(f: &SpectralPencil, x: f64, z: C64, t: f64, steps: usize) -> Result<CMat> {
    transition_t(f, x, z, 0.0, t, steps)
}

fn check_pair(g: &SpectralPencil, f: &SpectralPencil) -> Result<()> {
    if g.m() != f.m() {
        return Err(Error::invalid(format!("pencil sizes differ: {} vs {}", g.m(), f.m())));
    }
    Ok(())
}

/// Operator norm of W(x,t,z) R(t,z) - R(x,t,z) W(x,0,z) where R(t,z) = R(0,t,z).
pub fn factorization_residual(
    g: &SpectralPencil,
    f: &SpectralPencil,
    x: f64,
    t: f64,
    z: C64,
    steps_per_unit: usize,
) -> Result<f64> {
    check_pair(g, f)?;
    let sx = steps_for(x, steps_per_unit);
    let st = steps_for(t, steps_per_unit);
    let w_xt = fundamental_x(g, t, z, x, sx)?;
    let r_0t = fundamental_t(f, 0.0, z, t, st)?;
    let r_xt = fundamental_t(f, x, z, t, st)?;
    let w_x0 = fundamental_x(g, 0.0, z, x, sx)?;
    Ok(op_norm(&(w_xt * r_0t - r_xt * w_x0)))
}

/// Joint wave function w(x, t, z) = W(x, t, z) R(t, z); it solves both
/// w_x = G w and w_t = F w when the pair has zero curvature.
pub fn wave_function(
    g: &SpectralPencil,
    f: &SpectralPencil,
    x: f64,
    t: f64,
    z: C64,
    steps_per_unit: usize,
) -> Result<CMat> {
    check_pair(g, f)?;
    let r_0t = fundamental_t(f, 0.0, z, t, steps_for(t, steps_per_unit))?;
    let w_xt = fundamental_x(g, t, z, x, steps_for(x, steps_per_unit))?;
    Ok(w_xt * r_0t)
}

/// Equality of mixed partials of the wave function, checked through two
/// genuinely different routes:
/// route one is the central t-difference of G(x, t') w(x, t'), approximating
/// w_xt, and route two is the central x-difference of F(x', t) w(x', t),
/// approximating w_tx. Each probe value comes from a fresh path integration,
/// so the two routes share no cancelling algebra.
pub fn mixed_derivative_residual(
    g: &SpectralPencil,
    f: &SpectralPencil,
    x: f64,
    t: f64,
    z: C64,
    h: f64,
    steps_per_unit: usize,
) -> Result<f64> {
    check_pair(g, f)?;
    if h <= 0.0 {
        return Err(Error::invalid("mixed-derivative step must be positive"));
    }
    let probe = |xp: f64, tp: f64| wave_function(g, f, xp, tp, z, steps_per_unit);
    let gw = |tp: f64| -> Result<CMat> { Ok(g.eval(x, tp, z)? * probe(x, tp)?) };
    let fw = |xp: f64| -> Result<CMat> { Ok(f.eval(xp, t, z)? * probe(xp, t)?) };
    let route_t = (gw(t + h)? - gw(t - h)?).map(|e| e / (2.0 * h));
    let route_x = (fw(x + h)? - fw(x - h)?).map(|e| e / (2.0 * h));
    Ok(op_norm(&(route_t - route_x)))
}
