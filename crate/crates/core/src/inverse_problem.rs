//! Recovery of the potential on an interval from boundary spectral data.
//!
//! The pipeline has four stages, each exposed on its own so the
//! intermediate objects can be validated independently:
//!
//! 1. `fourier_s`: synthesize the impulse kernel s(x) and its derivative
//!    from Weyl-function samples along a damped horizontal contour,
//!
//!    ```text
//!        s(x)  = (i/2pi) e^{-eta x} Int e^{i xi x} z^{-1} phi(z/2) dxi,
//!        s'(x) = -(1/2pi) e^{-eta x} Int e^{i xi x} phi(z/2) dxi,
//!    ```
//!
//!    with z = xi + i eta and eta below twice the potential bound.  The
//!    slowly decaying part of phi is removed by fitting c/w + d/w^2 on the
//!    outermost nodes and integrating that model in closed form; the
//!    remainder is integrated by the trapezoid rule and certified by a
//!    truncation-doubling test.
//! 2. `build_sl` / `build_sl_family`: the structured operator
//!    (S_l f)(x) = f(x) + Int_0^l k(x, r) f(r) dr with the convolution-type
//!    kernel k(x, r) = (1/2) Int_{|x-r|}^{x+r} s'((u+x-r)/2) s'((u+r-x)/2)* du,
//!    discretized so every kernel evaluation lands on stored s' nodes.
//!    The assembled matrix must stay Hermitian and uniformly positive.
//! 3. `recover_omega2`: the lower block row
//!    omega2(l) = [0 I] - Int_0^l (S_l^{-1} s')(x)* [I s(x)] dx.
//! 4. `recover_omega1` and `recover_v`: complete omega2 to an orthonormal
//!    frame by projecting the previous node's complement into the new
//!    orthogonal subspace (discrete parallel transport), correct by the
//!    unitary flow u' = -u (omega1_hat' omega1_hat*), and read off the
//!    potential v = omega1' omega2*.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::{
    block, c, cr, expm, eye, hermitian_eig_range, hermiticity_defect, max_abs, max_abs_diff,
    op_norm, polar_unitary, try_inverse, zeros, C64, CMat, I, ZERO,
};
use crate::mkdv_weyl::WeylProvider;

/// Step of the frequency-domain trapezoid rule.  The integrands are
/// analytic in a strip of width about one around the contour, so the
/// trapezoid error decays like exp(-2 pi width / step); 0.05 puts it far
/// below the truncation error.
const XI_STEP: f64 = 0.05;

/// Maximum allowed node change when the truncation radius is doubled.
pub const FOURIER_TOL: f64 = 1e-4;

/// Relative residual allowed for the structured-operator solves.
const SOLVE_TOL: f64 = 1e-8;

/// Minimum eigenvalue the discretized operator must keep; below this the
/// grid has destroyed the operator inequality S_l >= I.
const EIG_FLOOR: f64 = 1.0 - 1e-2;

/// The impulse kernel s and its derivative on a uniform grid over [0, l].
#[derive(Clone)]
pub struct TransformKernel {
    pub l: f64,
    pub p: usize,
    pub grid: Vec<f64>,
    /// s at each node; s(0) = 0 by construction.
    pub s_values: Vec<CMat>,
    pub s_prime_values: Vec<CMat>,
    /// Magnitude of the raw s(0) before the normalizing subtraction.
    pub s0_defect: f64,
    pub eta: f64,
    pub a_trunc: f64,
}

impl TransformKernel {
    /// Wrap explicit node data (used by synthetic oracles and file input).
    /// Enforces s(0) = 0 by shifting, mirroring the spectral constructor.
    pub fn from_values(
        l: f64,
        p: usize,
        s_values: Vec<CMat>,
        s_prime_values: Vec<CMat>,
    ) -> Result<Self> {
        if !(l > 0.0) || s_values.len() < 5 || s_values.len() != s_prime_values.len() {
            return Err(Error::invalid(
                "kernel needs l > 0 and matching node lists with at least five nodes",
            ));
        }
        for m in s_values.iter().chain(s_prime_values.iter()) {
            if m.shape() != (p, p) {
                return Err(Error::invalid("kernel nodes must be p x p"));
            }
        }
        let n = s_values.len() - 1;
        let grid = (0..=n).map(|i| l * i as f64 / n as f64).collect();
        let s0 = s_values[0].clone();
        let s0_defect = max_abs(&s0);
        let shifted = s_values.into_iter().map(|v| v - &s0).collect();
        Ok(TransformKernel {
            l,
            p,
            grid,
            s_values: shifted,
            s_prime_values,
            s0_defect,
            eta: f64::NAN,
            a_trunc: f64::NAN,
        })
    }

    pub fn n(&self) -> usize {
        self.grid.len() - 1
    }

    pub fn h(&self) -> f64 {
        self.l / self.n() as f64
    }
}

/// Least-squares fit of phi(w) by c/w + d/w^2 on the six outermost
/// contour nodes; returns (c, d).
fn tail_fit(provider: &dyn WeylProvider, eta: f64, a_eff: f64) -> Result<(CMat, CMat)> {
    let p = provider.p();
    let mut m11 = ZERO;
    let mut m12 = ZERO;
    let mut m22 = ZERO;
    let mut r1 = zeros(p, p);
    let mut r2 = zeros(p, p);
    for &scale in &[1.0f64, 0.7, 0.4, -0.4, -0.7, -1.0] {
        let w = c(scale * a_eff, eta) * cr(0.5);
        let a1 = w.inv();
        let a2 = a1 * a1;
        let g = provider.phi(0.0, w)?;
        m11 += a1.conj() * a1;
        m12 += a1.conj() * a2;
        m22 += a2.conj() * a2;
        r1 += &g * a1.conj();
        r2 += &g * a2.conj();
    }
    let det = m11 * m22 - m12 * m12.conj();
    if det.norm() < 1e-30 {
        return Err(Error::invalid("degenerate tail-fit system"));
    }
    let c_fit = (&r1 * m22 - &r2 * m12) * det.inv();
    let d_fit = (&r2 * m11 - &r1 * m12.conj()) * det.inv();
    Ok((c_fit, d_fit))
}

/// Build the impulse kernel from Weyl samples phi(z/2) on the contour
/// Im z = eta, truncated at +-2 a (with the inner half used only for the
/// doubling test).  `n` is the number of grid intervals on [0, l].
pub fn fourier_s(
    provider: &dyn WeylProvider,
    l: f64,
    eta: f64,
    a_trunc: f64,
    n: usize,
) -> Result<TransformKernel> {
    let bound = -2.0 * provider.margin();
    if eta >= bound {
        return Err(Error::EtaViolation { eta, bound });
    }
    if !(l > 0.0) || n < 4 {
        return Err(Error::invalid("need l > 0 and at least five grid nodes"));
    }
    if a_trunc < 4.0 {
        return Err(Error::invalid("truncation radius too small for the tail fit"));
    }
    let p = provider.p();
    let half = (a_trunc / XI_STEP).ceil() as usize;
    let a_eff = half as f64 * XI_STEP;
    let (c_fit, d_fit) = tail_fit(provider, eta, a_eff)?;

    // Remainders phi(z/2) - model on the doubled window.
    let total = 4 * half + 1;
    let mut rho = Vec::with_capacity(total);
    let mut xis = Vec::with_capacity(total);
    for k in 0..total {
        let xi = (k as f64 - 2.0 * half as f64) * XI_STEP;
        let w = c(xi, eta) * cr(0.5);
        let g = provider.phi(0.0, w)?;
        let wi = w.inv();
        rho.push(g - &c_fit * wi - &d_fit * (wi * wi));
        xis.push(xi);
    }

    let h = l / n as f64;
    let mut s_inner = Vec::with_capacity(n + 1);
    let mut s_outer = Vec::with_capacity(n + 1);
    let mut sp_outer = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let x = i as f64 * h;
        let mut acc_s_in = zeros(p, p);
        let mut acc_s_out = zeros(p, p);
        let mut acc_sp_out = zeros(p, p);
        for k in 0..total {
            let xi = xis[k];
            let z = c(xi, eta);
            let phase = C64::from_polar(1.0, xi * x);
            let w_out = if k == 0 || k == total - 1 { 0.5 } else { 1.0 };
            let term_sp = &rho[k] * phase;
            let term_s = &term_sp * z.inv();
            acc_sp_out += &term_sp * cr(w_out);
            acc_s_out += &term_s * cr(w_out);
            let dist = (k as isize - 2 * half as isize).unsigned_abs();
            if dist <= half {
                let w_in = if dist == half { 0.5 } else { 1.0 };
                acc_s_in += &term_s * cr(w_in);
            }
        }
        let damp = (-eta * x).exp();
        let pref_s = I * cr(XI_STEP / (2.0 * PI) * damp);
        let pref_sp = cr(-XI_STEP / (2.0 * PI) * damp);
        let model_s = &c_fit * c(0.0, -2.0 * x) + &d_fit * cr(2.0 * x * x);
        let model_sp = &c_fit * c(0.0, -2.0) + &d_fit * cr(4.0 * x);
        s_inner.push(acc_s_in * pref_s + &model_s);
        s_outer.push(acc_s_out * pref_s + model_s);
        sp_outer.push(acc_sp_out * pref_sp + model_sp);
    }

    let mut change: f64 = 0.0;
    for i in 0..=n {
        change = change.max(max_abs_diff(&s_inner[i], &s_outer[i]));
    }
    if change > FOURIER_TOL {
        return Err(Error::TailTooFat { a_trunc: a_eff, change, tol: FOURIER_TOL });
    }

    let s0 = s_outer[0].clone();
    let s0_defect = max_abs(&s0);
    let s_values: Vec<CMat> = s_outer.into_iter().map(|v| v - &s0).collect();
    let grid = (0..=n).map(|i| i as f64 * h).collect();
    Ok(TransformKernel {
        l,
        p,
        grid,
        s_values,
        s_prime_values: sp_outer,
        s0_defect,
        eta,
        a_trunc: a_eff,
    })
}

/// The discretized structured operator on [0, l]: identity plus the
/// weighted kernel samples, symmetrized.
pub struct StructuredOperator {
    pub l: f64,
    pub p: usize,
    pub matrix: CMat,
    pub min_eig: f64,
}

/// Kernel sample matrix shared by every member of the operator family.
/// The inner integral in k(x_i, x_j) runs over nodes spaced 2h, so every
/// sample point is a stored s' node and no interpolation happens.
pub struct SlFamily {
    p: usize,
    h: f64,
    grid: Vec<f64>,
    k_blocks: CMat,
}

/// Block matrix of kernel values k(x_i, x_j); exactly Hermitian by
/// mirrored assembly.
pub fn kernel_samples(kernel: &TransformKernel) -> CMat {
    let n = kernel.n();
    let p = kernel.p;
    let h = kernel.h();
    let sp = &kernel.s_prime_values;
    let sp_adj: Vec<CMat> = sp.iter().map(|m| m.adjoint()).collect();
    let mut out = zeros((n + 1) * p, (n + 1) * p);
    for i in 0..=n {
        for j in 0..=i {
            // For i >= j: arguments s'(x_{i-j+m}) s'(x_m)* with m = 0..=j.
            let mu = j;
            if mu == 0 {
                continue;
            }
            let mut acc = zeros(p, p);
            for m in 0..=mu {
                let wgt = if m == 0 || m == mu { 0.5 * h } else { h };
                acc.gemm(cr(wgt), &sp[i - j + m], &sp_adj[m], cr(1.0));
            }
            out.view_mut((i * p, j * p), (p, p)).copy_from(&acc);
            if i != j {
                out.view_mut((j * p, i * p), (p, p)).copy_from(&acc.adjoint());
            }
        }
    }
    out
}

pub fn build_sl_family(kernel: &TransformKernel) -> Result<SlFamily> {
    if kernel.grid.len() < 5 {
        return Err(Error::invalid("operator family needs at least five nodes"));
    }
    Ok(SlFamily {
        p: kernel.p,
        h: kernel.h(),
        grid: kernel.grid.clone(),
        k_blocks: kernel_samples(kernel),
    })
}

impl SlFamily {
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    fn weights(&self, j: usize) -> Vec<f64> {
        (0..=j)
            .map(|i| if i == 0 || i == j { 0.5 * self.h } else { self.h })
            .collect()
    }

    /// Symmetrized Nystrom matrix I + D^{1/2} K D^{1/2} on [0, x_j].
    pub fn matrix_at(&self, j: usize) -> CMat {
        let p = self.p;
        if j == 0 {
            return eye(p);
        }
        let w = self.weights(j);
        let size = (j + 1) * p;
        let mut m = block(&self.k_blocks, 0, 0, size, size);
        for bi in 0..=j {
            for bj in 0..=j {
                let scale = cr((w[bi] * w[bj]).sqrt());
                for r in 0..p {
                    for cc in 0..p {
                        m[(bi * p + r, bj * p + cc)] *= scale;
                    }
                }
            }
        }
        let sym = (&m + m.adjoint()) * cr(0.5);
        sym + eye(size)
    }

    /// Apply S_{x_j}^{-1} to node data via a Hermitian positive-definite
    /// solve; returns one p x p block per node of [0, x_j].
    pub fn solve_at(&self, j: usize, rhs_nodes: &[CMat]) -> Result<Vec<CMat>> {
        let p = self.p;
        if rhs_nodes.len() != j + 1 {
            return Err(Error::invalid("one right-hand block per grid node is required"));
        }
        if j == 0 {
            return Ok(vec![rhs_nodes[0].clone()]);
        }
        let w = self.weights(j);
        let size = (j + 1) * p;
        let mut rhs = zeros(size, p);
        for (i, node) in rhs_nodes.iter().enumerate() {
            let scaled = node * cr(w[i].sqrt());
            rhs.view_mut((i * p, 0), (p, p)).copy_from(&scaled);
        }
        let matrix = self.matrix_at(j);
        let chol = matrix
            .clone()
            .cholesky()
            .ok_or(Error::SolveFailure { residual: f64::INFINITY, tol: SOLVE_TOL })?;
        let sol = chol.solve(&rhs);
        let scale = op_norm(&matrix) * op_norm(&sol) + op_norm(&rhs);
        let residual = op_norm(&(&matrix * &sol - &rhs)) / scale.max(1e-300);
        if residual > SOLVE_TOL {
            return Err(Error::SolveFailure { residual, tol: SOLVE_TOL });
        }
        let mut out = Vec::with_capacity(j + 1);
        for i in 0..=j {
            out.push(block(&sol, i * p, 0, p, p) * cr(1.0 / w[i].sqrt()));
        }
        Ok(out)
    }

    /// Package the operator at node j with its spectral floor checked.
    pub fn operator_at(&self, j: usize) -> Result<StructuredOperator> {
        let matrix = self.matrix_at(j);
        let defect = hermiticity_defect(&matrix);
        if defect > 1e-10 {
            return Err(Error::invalid(format!(
                "structured operator drifted from Hermitian by {defect:e}"
            )));
        }
        let (min_eig, _) = hermitian_eig_range(&matrix);
        if min_eig < EIG_FLOOR {
            return Err(Error::GridTooCoarse { l: self.grid[j], min_eig, threshold: EIG_FLOOR });
        }
        Ok(StructuredOperator { l: self.grid[j], p: self.p, matrix, min_eig })
    }
}

/// Full-interval structured operator with positivity certificate.
pub fn build_sl(kernel: &TransformKernel) -> Result<StructuredOperator> {
    let family = build_sl_family(kernel)?;
    family.operator_at(kernel.n())
}

/// Orthonormal block rows of the recovered frame on the grid.
pub struct BlockRows {
    pub grid: Vec<f64>,
    pub p: usize,
    /// Empty until the complement recovery has run.
    pub omega1: Vec<CMat>,
    pub omega2: Vec<CMat>,
}

fn zero_one_row(p: usize) -> CMat {
    let mut r = zeros(p, 2 * p);
    r.view_mut((0, p), (p, p)).copy_from(&eye(p));
    r
}

fn one_zero_row(p: usize) -> CMat {
    let mut r = zeros(p, 2 * p);
    r.view_mut((0, 0), (p, p)).copy_from(&eye(p));
    r
}

fn paired_row(p: usize, s: &CMat) -> CMat {
    let mut r = zeros(p, 2 * p);
    r.view_mut((0, 0), (p, p)).copy_from(&eye(p));
    r.view_mut((0, p), (p, p)).copy_from(s);
    r
}

/// Lower block row at every grid node:
/// omega2(l) = [0 I] - Int_0^l (S_l^{-1} s')(x)* [I s(x)] dx.
pub fn recover_omega2(kernel: &TransformKernel, family: &SlFamily) -> Result<BlockRows> {
    let n = kernel.n();
    let p = kernel.p;
    let h = kernel.h();
    let mut omega2 = Vec::with_capacity(n + 1);
    omega2.push(zero_one_row(p));
    for j in 1..=n {
        let g = family.solve_at(j, &kernel.s_prime_values[0..=j])?;
        let mut acc = zeros(p, 2 * p);
        for (i, gi) in g.iter().enumerate() {
            let wgt = if i == 0 || i == j { 0.5 * h } else { h };
            acc += gi.adjoint() * paired_row(p, &kernel.s_values[i]) * cr(wgt);
        }
        omega2.push(zero_one_row(p) - acc);
    }
    Ok(BlockRows { grid: kernel.grid.clone(), p, omega1: Vec::new(), omega2 })
}

/// Fourth-order derivative of node values (one-sided at the ends).
fn fd4(values: &[CMat], h: f64) -> Result<Vec<CMat>> {
    let n = values.len();
    if n < 5 {
        return Err(Error::invalid("need at least five nodes for the fourth-order derivative"));
    }
    let s = cr(1.0 / (12.0 * h));
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let d = if i == 0 {
            &values[0] * cr(-25.0)
                + &values[1] * cr(48.0)
                + &values[2] * cr(-36.0)
                + &values[3] * cr(16.0)
                + &values[4] * cr(-3.0)
        } else if i == 1 {
            &values[0] * cr(-3.0)
                + &values[1] * cr(-10.0)
                + &values[2] * cr(18.0)
                + &values[3] * cr(-6.0)
                + &values[4] * cr(1.0)
        } else if i == n - 2 {
            &values[n - 1] * cr(3.0)
                + &values[n - 2] * cr(10.0)
                + &values[n - 3] * cr(-18.0)
                + &values[n - 4] * cr(6.0)
                + &values[n - 5] * cr(-1.0)
        } else if i == n - 1 {
            &values[n - 1] * cr(25.0)
                + &values[n - 2] * cr(-48.0)
                + &values[n - 3] * cr(36.0)
                + &values[n - 4] * cr(-16.0)
                + &values[n - 5] * cr(3.0)
        } else {
            &values[i - 2] * cr(1.0)
                + &values[i - 1] * cr(-8.0)
                + &values[i + 1] * cr(8.0)
                + &values[i + 2] * cr(-1.0)
        };
        out.push(d * s);
    }
    Ok(out)
}

/// Complete omega2 to an orthonormal frame.  The complement at each node
/// is the previous node's complement projected into the new orthogonal
/// subspace and re-orthonormalized (discrete parallel transport); a left
/// unitary solving u' = -u (omega1_hat' omega1_hat*) then removes the
/// residual in-subspace rotation so that omega1' omega1* = 0, with u(0)
/// chosen to give omega1(0) = [I 0].
pub fn recover_omega1(rows: &BlockRows) -> Result<BlockRows> {
    let p = rows.p;
    let count = rows.grid.len();
    if rows.omega2.len() != count || count < 5 {
        return Err(Error::invalid("omega2 must be present at every node (at least five)"));
    }
    for (idx, w2) in rows.omega2.iter().enumerate() {
        let defect = max_abs_diff(&(w2 * w2.adjoint()), &eye(p));
        if defect > 1e-3 {
            return Err(Error::invalid(format!(
                "omega2 rows lost orthonormality at node {idx}: defect {defect:e}"
            )));
        }
    }
    let h = rows.grid[1] - rows.grid[0];
    let mut hat = Vec::with_capacity(count);
    let mut prev = one_zero_row(p);
    for (idx, w2) in rows.omega2.iter().enumerate() {
        let gram_inv = try_inverse(&(w2 * w2.adjoint()), "omega2 row Gram matrix")?;
        let comp = &prev - (&prev * w2.adjoint()) * gram_inv * w2;
        let svals = comp.clone().svd(false, false).singular_values;
        let overlap = svals.iter().cloned().fold(f64::INFINITY, f64::min);
        if overlap < 0.5 {
            return Err(Error::PhaseJump { index: idx, overlap });
        }
        let frame = polar_unitary(&comp);
        prev = frame.clone();
        hat.push(frame);
    }
    let hat_prime = fd4(&hat, h)?;
    let b: Vec<CMat> = hat_prime.iter().zip(hat.iter()).map(|(d, f)| d * f.adjoint()).collect();
    let mut u = polar_unitary(&(one_zero_row(p) * hat[0].adjoint()));
    let mut omega1 = Vec::with_capacity(count);
    omega1.push(&u * &hat[0]);
    for j in 0..count - 1 {
        let step = (&b[j] + &b[j + 1]) * cr(-0.5 * h);
        u *= expm(&step);
        omega1.push(&u * &hat[j + 1]);
    }
    Ok(BlockRows { grid: rows.grid.clone(), p, omega1, omega2: rows.omega2.clone() })
}

/// Largest per-node deviation from the frame relations
/// omega1 omega1* = I, omega1 omega2* = 0, omega2 omega2* = I.
pub fn orthonormality_defect(rows: &BlockRows) -> f64 {
    let p = rows.p;
    let mut worst: f64 = 0.0;
    for w2 in &rows.omega2 {
        worst = worst.max(max_abs_diff(&(w2 * w2.adjoint()), &eye(p)));
    }
    for (i, w1) in rows.omega1.iter().enumerate() {
        worst = worst.max(max_abs_diff(&(w1 * w1.adjoint()), &eye(p)));
        worst = worst.max(max_abs(&(w1 * rows.omega2[i].adjoint())));
    }
    worst
}

/// Read the potential off the frame: v = omega1' omega2*.
pub fn recover_v(rows: &BlockRows, h: f64) -> Result<Vec<CMat>> {
    if rows.omega1.len() != rows.grid.len() {
        return Err(Error::invalid("omega1 must be recovered before reading off v"));
    }
    let omega1_prime = fd4(&rows.omega1, h)?;
    Ok(omega1_prime
        .iter()
        .zip(rows.omega2.iter())
        .map(|(d, w2)| d * w2.adjoint())
        .collect())
}

/// Full pipeline output: kernel, operator certificate, frame, potential.
pub struct InversionOutput {
    pub kernel: TransformKernel,
    pub operator_min_eig: f64,
    pub rows: BlockRows,
    pub v: Vec<CMat>,
}

/// Run the whole recovery from a Weyl provider.
pub fn recover_potential(
    provider: &dyn WeylProvider,
    l: f64,
    n: usize,
    eta: f64,
    a_trunc: f64,
) -> Result<InversionOutput> {
    let kernel = fourier_s(provider, l, eta, a_trunc, n)?;
    let family = build_sl_family(&kernel)?;
    let full = family.operator_at(kernel.n())?;
    let partial = recover_omega2(&kernel, &family)?;
    let rows = recover_omega1(&partial)?;
    let v = recover_v(&rows, kernel.h())?;
    Ok(InversionOutput { kernel, operator_min_eig: full.min_eig, rows, v })
}
