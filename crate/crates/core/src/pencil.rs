//! Rational spectral pencils in the spectral parameter z and the
//! zero-curvature residual G_t - F_x + GF - FG.
//!
//! A pencil stores matrix coefficient providers q_k(x, t) for the polynomial
//! part and q_{sk}(x, t) for each pole c_s, and evaluates to
//! -(sum_k z^k q_k + sum_{s,k} (z - c_s)^{-k} q_{sk}).

use crate::error::{Error, Result};
use crate::linalg::{op_norm, CMat, C64};
use std::sync::Arc;

/// Matrix-valued coefficient provider on the (x, t) rectangle.
pub type Coeff = Arc<dyn Fn(f64, f64) -> CMat + Send + Sync>;

pub fn const_coeff(m: CMat) -> Coeff {
    Arc::new(move |_, _| m.clone())
}

/// Rectangle [0, x_max) x [0, t_max) with uniform grid steps.
#[derive(Clone, Debug)]
pub struct Domain2D {
    pub x_max: f64,
    pub t_max: f64,
    pub nx: usize,
    pub nt: usize,
}

impl Domain2D {
    pub fn new(x_max: f64, t_max: f64, nx: usize, nt: usize) -> Result<Self> {
        if !(x_max > 0.0 && t_max > 0.0) || nx == 0 || nt == 0 {
            return Err(Error::invalid(format!(
                "domain must have positive extents and grid counts, got {x_max} x {t_max}, {nx} x {nt}"
            )));
        }
        Ok(Domain2D { x_max, t_max, nx, nt })
    }

    pub fn step_x(&self) -> f64 {
        self.x_max / self.nx as f64
    }

    pub fn step_t(&self) -> f64 {
        self.t_max / self.nt as f64
    }

    pub fn x_node(&self, i: usize) -> f64 {
        i as f64 * self.step_x()
    }

    pub fn t_node(&self, j: usize) -> f64 {
        j as f64 * self.step_t()
    }

    pub fn contains(&self, x: f64, t: f64) -> bool {
        (0.0..self.x_max).contains(&x) && (0.0..self.t_max).contains(&t)
    }

    pub fn require(&self, x: f64, t: f64) -> Result<()> {
        if self.contains(x, t) {
            Ok(())
        } else {
            Err(Error::DomainError { x, t, x_max: self.x_max, t_max: self.t_max })
        }
    }
}

/// Pole location together with its Laurent coefficients q_{s1}..q_{s r_s}.
#[derive(Clone)]
pub struct PoleBlock {
    pub location: C64,
    pub coeffs: Vec<Coeff>,
}

#[derive(Clone)]
pub struct SpectralPencil {
    m: usize,
    poly: Vec<Coeff>,
    poles: Vec<PoleBlock>,
    domain: Domain2D,
    h_fd_x: f64,
    h_fd_t: f64,
    one_sided_fd: bool,
    dt_poly: Option<Vec<Coeff>>,
    dt_poles: Option<Vec<Vec<Coeff>>>,
    dx_poly: Option<Vec<Coeff>>,
    dx_poles: Option<Vec<Vec<Coeff>>>,
}

impl SpectralPencil {
    /// `poly[k]` is the coefficient of z^k; `poly` must be non-empty.
    pub fn new(m: usize, poly: Vec<Coeff>, poles: Vec<PoleBlock>, domain: Domain2D) -> Result<Self> {
        if m == 0 || poly.is_empty() {
            return Err(Error::invalid("pencil needs m > 0 and at least the z^0 coefficient"));
        }
        for (i, p) in poles.iter().enumerate() {
            if p.coeffs.is_empty() {
                return Err(Error::invalid(format!("pole {i} has no Laurent coefficients")));
            }
            for q in poles.iter().skip(i + 1) {
                if (p.location - q.location).norm() < 1e-12 {
                    return Err(Error::invalid(format!("duplicate pole at {}", p.location)));
                }
            }
        }
        // sample every provider once so shape errors surface at construction
        for c in poly.iter().chain(poles.iter().flat_map(|p| p.coeffs.iter())) {
            let v = c(0.0, 0.0);
            if v.shape() != (m, m) {
                return Err(Error::invalid(format!(
                    "coefficient provider returned {:?}, expected ({m}, {m})",
                    v.shape()
                )));
            }
        }
        let h_fd_x = 1e-4 * domain.x_max;
        let h_fd_t = 1e-4 * domain.t_max;
        Ok(SpectralPencil {
            m,
            poly,
            poles,
            domain,
            h_fd_x,
            h_fd_t,
            one_sided_fd: true,
            dt_poly: None,
            dt_poles: None,
            dx_poly: None,
            dx_poles: None,
        })
    }

    pub fn with_h_fd(mut self, h_x: f64, h_t: f64) -> Self {
        self.h_fd_x = h_x;
        self.h_fd_t = h_t;
        self
    }

    pub fn with_one_sided_fd(mut self, enabled: bool) -> Self {
        self.one_sided_fd = enabled;
        self
    }

    /// Analytic t-derivatives of the coefficients, same layout as the coefficients.
    pub fn with_dt_providers(mut self, poly: Vec<Coeff>, poles: Vec<Vec<Coeff>>) -> Self {
        self.dt_poly = Some(poly);
        self.dt_poles = Some(poles);
        self
    }

    pub fn with_dx_providers(mut self, poly: Vec<Coeff>, poles: Vec<Vec<Coeff>>) -> Self {
        self.dx_poly = Some(poly);
        self.dx_poles = Some(poles);
        self
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn degree(&self) -> usize {
        self.poly.len() - 1
    }

    pub fn domain(&self) -> &Domain2D {
        self.domain_ref()
    }

    fn domain_ref(&self) -> &Domain2D {
        &self.domain
    }

    pub fn poles(&self) -> &[PoleBlock] {
        &self.poles
    }

    pub fn h_fd(&self) -> (f64, f64) {
        (self.h_fd_x, self.h_fd_t)
    }

    pub fn pole_tolerance(&self, pole: C64) -> f64 {
        1e-8 * pole.norm().max(1.0)
    }

    /// Value of the polynomial coefficient q_k at (x, t); no domain gate so the
    /// GBDT flows can probe it freely.
    pub fn poly_coeff_at(&self, k: usize, x: f64, t: f64) -> CMat {
        (self.poly[k])(x, t)
    }

    pub fn pole_coeff_at(&self, s: usize, k: usize, x: f64, t: f64) -> CMat {
        (self.poles[s].coeffs[k - 1])(x, t)
    }

    fn check_z(&self, z: C64) -> Result<()> {
        for p in &self.poles {
            let tol = self.pole_tolerance(p.location);
            if (z - p.location).norm() < tol {
                return Err(Error::PoleHit { z, pole: p.location, tol });
            }
        }
        Ok(())
    }

    fn assemble(&self, z: C64, poly: &[CMat], poles: &[Vec<CMat>]) -> CMat {
        let mut acc = CMat::zeros(self.m, self.m);
        let mut zk = C64::new(1.0, 0.0);
        for q in poly {
            acc += q.scale_c(zk);
            zk *= z;
        }
        for (block, vals) in self.poles.iter().zip(poles) {
            let w = (z - block.location).inv();
            let mut wk = w;
            for q in vals {
                acc += q.scale_c(wk);
                wk *= w;
            }
        }
        -acc
    }

    /// G(x, t, z) = -(sum_k z^k q_k + sum_{s,k} (z - c_s)^{-k} q_{sk}).
    pub fn eval(&self, x: f64, t: f64, z: C64) -> Result<CMat> {
        self.domain.require(x, t)?;
        self.check_z(z)?;
        let poly: Vec<CMat> = self.poly.iter().map(|c| c(x, t)).collect();
        let poles: Vec<Vec<CMat>> = self
            .poles
            .iter()
            .map(|p| p.coeffs.iter().map(|c| c(x, t)).collect())
            .collect();
        Ok(self.assemble(z, &poly, &poles))
    }

    /// d/dt of the pencil value at fixed z.
    pub fn eval_dt(&self, x: f64, t: f64, z: C64) -> Result<CMat> {
        self.domain.require(x, t)?;
        self.check_z(z)?;
        let (poly, poles) = self.coeff_derivatives(x, t, Direction::T)?;
        Ok(self.assemble(z, &poly, &poles))
    }

    /// d/dx of the pencil value at fixed z.
    pub fn eval_dx(&self, x: f64, t: f64, z: C64) -> Result<CMat> {
        self.domain.require(x, t)?;
        self.check_z(z)?;
        let (poly, poles) = self.coeff_derivatives(x, t, Direction::X)?;
        Ok(self.assemble(z, &poly, &poles))
    }

    fn coeff_derivatives(&self, x: f64, t: f64, dir: Direction) -> Result<(Vec<CMat>, Vec<Vec<CMat>>)> {
        let analytic = match dir {
            Direction::T => self.dt_poly.as_ref().zip(self.dt_poles.as_ref()),
            Direction::X => self.dx_poly.as_ref().zip(self.dx_poles.as_ref()),
        };
        if let Some((dp, dpole)) = analytic {
            let poly = dp.iter().map(|c| c(x, t)).collect();
            let poles = dpole
                .iter()
                .map(|blk| blk.iter().map(|c| c(x, t)).collect())
                .collect();
            return Ok((poly, poles));
        }
        let poly = self
            .poly
            .iter()
            .map(|c| self.fd_coeff(c, x, t, dir))
            .collect::<Result<Vec<_>>>()?;
        let poles = self
            .poles
            .iter()
            .map(|p| {
                p.coeffs
                    .iter()
                    .map(|c| self.fd_coeff(c, x, t, dir))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((poly, poles))
    }

    /// 4th-order finite difference of one coefficient, switching to an offset
    /// stencil when the centered one would leave the domain.
    fn fd_coeff(&self, coeff: &Coeff, x: f64, t: f64, dir: Direction) -> Result<CMat> {
        let (u, hi, h) = match dir {
            Direction::X => (x, self.domain.x_max, self.h_fd_x),
            Direction::T => (t, self.domain.t_max, self.h_fd_t),
        };
        let sample = |v: f64| match dir {
            Direction::X => coeff(v, t),
            Direction::T => coeff(x, v),
        };
        let centered_ok = u - 2.0 * h >= 0.0 && u + 2.0 * h < hi;
        let (offsets, weights): (&[f64], &[f64]) = if centered_ok {
            (&[-2.0, -1.0, 1.0, 2.0], &[1.0, -8.0, 8.0, -1.0])
        } else if !self.one_sided_fd {
            return Err(Error::DerivativeUnavailable { x, t });
        } else if u - 2.0 * h < 0.0 {
            (&[0.0, 1.0, 2.0, 3.0, 4.0], &[-25.0, 48.0, -36.0, 16.0, -3.0])
        } else {
            (&[0.0, -1.0, -2.0, -3.0, -4.0], &[25.0, -48.0, 36.0, -16.0, 3.0])
        };
        let mut acc = CMat::zeros(self.m, self.m);
        for (o, w) in offsets.iter().zip(weights) {
            acc += sample(u + o * h).scale_c(C64::new(w / (12.0 * h), 0.0));
        }
        Ok(acc)
    }
}

#[derive(Clone, Copy)]
enum Direction {
    X,
    T,
}

trait ScaleC {
    fn scale_c(&self, s: C64) -> CMat;
}

impl ScaleC for CMat {
    fn scale_c(&self, s: C64) -> CMat {
        self.map(|e| e * s)
    }
}

/// Operator norm of G_t - F_x + G F - F G at (x, t, z).
pub fn zero_curvature_residual(g: &SpectralPencil, f: &SpectralPencil, x: f64, t: f64, z: C64) -> Result<f64> {
    if g.m() != f.m() {
        return Err(Error::invalid(format!("pencil sizes differ: {} vs {}", g.m(), f.m())));
    }
    let gv = g.eval(x, t, z)?;
    let fv = f.eval(x, t, z)?;
    let gt = g.eval_dt(x, t, z)?;
    let fx = f.eval_dx(x, t, z)?;
    Ok(op_norm(&(gt - fx + &gv * &fv - &fv * &gv)))
}
