//! Complex dense linear algebra helpers shared by all modules.

use crate::error::{Error, Result};
use nalgebra::DMatrix;
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;

pub const I: C64 = C64::new(0.0, 1.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const ZERO: C64 = C64::new(0.0, 0.0);

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn cr(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn eye(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn zeros(r: usize, c: usize) -> CMat {
    CMat::zeros(r, c)
}

/// Spectral norm (largest singular value).
pub fn op_norm(m: &CMat) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

/// Largest entry magnitude.
pub fn max_abs(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0_f64, f64::max)
}

pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    assert_eq!(a.shape(), b.shape(), "shape mismatch in max_abs_diff");
    max_abs(&(a - b))
}

/// Deviation from being Hermitian, in entry magnitude.
pub fn hermiticity_defect(m: &CMat) -> f64 {
    max_abs(&(m - m.adjoint()))
}

/// Eigenvalue range (min, max) of a Hermitian matrix.
/// The input is symmetrized first so tiny assembly asymmetry cannot leak in.
pub fn hermitian_eig_range(m: &CMat) -> (f64, f64) {
    let h = (m + m.adjoint()).scale(0.5);
    let eigs = h.symmetric_eigenvalues();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for e in eigs.iter() {
        lo = lo.min(*e);
        hi = hi.max(*e);
    }
    (lo, hi)
}

/// Eigenvalues of a general complex square matrix via its Schur form.
pub fn eigenvalues(m: &CMat) -> Vec<C64> {
    if m.nrows() == 1 {
        return vec![m[(0, 0)]];
    }
    // for a complex scalar field the Schur factor T is upper triangular,
    // so its diagonal carries the eigenvalues
    let (_, t) = m.clone().schur().unpack();
    (0..t.nrows()).map(|i| t[(i, i)]).collect()
}

/// Matrix exponential.
pub fn expm(m: &CMat) -> CMat {
    m.exp()
}

pub fn determinant(m: &CMat) -> C64 {
    m.clone().lu().determinant()
}

/// Inverse via LU; errors when the matrix is numerically singular.
pub fn try_inverse(m: &CMat, context: &str) -> Result<CMat> {
    m.clone()
        .try_inverse()
        .ok_or_else(|| Error::invalid(format!("singular matrix in {context}")))
}

/// Solve A X = B via LU with a residual check.
pub fn solve(a: &CMat, b: &CMat, tol: f64) -> Result<CMat> {
    let lu = a.clone().lu();
    let x = lu
        .solve(b)
        .ok_or(Error::SolveFailure { residual: f64::INFINITY, tol })?;
    let scale = op_norm(a) * op_norm(&x) + op_norm(b);
    let residual = op_norm(&(a * &x - b)) / scale.max(1e-300);
    if residual > tol {
        return Err(Error::SolveFailure { residual, tol });
    }
    Ok(x)
}

/// Kronecker product a (x) b.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[(i, j)];
            for k in 0..br {
                for l in 0..bc {
                    out[(i * br + k, j * bc + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    out
}

/// Unique solution S of the Sylvester equation A1 S - S A2 = C.
/// Requires the spectra of A1 and A2 to be disjoint.
pub fn solve_sylvester(a1: &CMat, a2: &CMat, c: &CMat) -> Result<CMat> {
    let n1 = a1.nrows();
    let n2 = a2.nrows();
    assert_eq!(c.shape(), (n1, n2), "Sylvester RHS shape mismatch");
    // column-stacking: vec(A1 S - S A2) = (I (x) A1 - A2^T (x) I) vec(S)
    let lhs = kron(&eye(n2), a1) - kron(&a2.transpose(), &eye(n1));
    let rhs = CMat::from_column_slice(n1 * n2, 1, c.as_slice());
    let lu = lhs.clone().lu();
    let s_vec = lu.solve(&rhs).ok_or_else(|| {
        Error::invalid("Sylvester system singular: spectra of A1 and A2 overlap")
    })?;
    let resid = op_norm(&(&lhs * &s_vec - &rhs)) / op_norm(&rhs).max(1e-300);
    if resid > 1e-8 {
        return Err(Error::SolveFailure { residual: resid, tol: 1e-8 });
    }
    Ok(CMat::from_column_slice(n1, n2, s_vec.as_slice()))
}

/// Unitary polar factor of a square matrix (the factor U in M = U P).
pub fn polar_unitary(m: &CMat) -> CMat {
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("svd requested u");
    let vt = svd.v_t.expect("svd requested v_t");
    u * vt
}

/// Block of a matrix: rows r0..r0+nr, cols c0..c0+nc.
pub fn block(m: &CMat, r0: usize, c0: usize, nr: usize, nc: usize) -> CMat {
    m.view((r0, c0), (nr, nc)).into_owned()
}

/// Assemble a 2x2 block matrix [[a, b], [c, d]].
pub fn block2x2(a: &CMat, b: &CMat, cm: &CMat, d: &CMat) -> CMat {
    let (ar, ac) = a.shape();
    let (dr, dc) = d.shape();
    assert_eq!(b.shape(), (ar, dc));
    assert_eq!(cm.shape(), (dr, ac));
    let mut out = zeros(ar + dr, ac + dc);
    out.view_mut((0, 0), (ar, ac)).copy_from(a);
    out.view_mut((0, ac), (ar, dc)).copy_from(b);
    out.view_mut((ar, 0), (dr, ac)).copy_from(cm);
    out.view_mut((ar, ac), (dr, dc)).copy_from(d);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn mat2(e: [[C64; 2]; 2]) -> CMat {
        CMat::from_row_slice(2, 2, &[e[0][0], e[0][1], e[1][0], e[1][1]])
    }

    #[test]
    fn op_norm_of_diagonal_is_largest_magnitude() {
        let m = mat2([[c(3.0, 4.0), ZERO], [ZERO, c(0.0, 1.0)]]);
        assert_relative_eq!(op_norm(&m), 5.0, epsilon = 1e-12);
    }

    #[test]
    fn hermitian_eig_range_on_pauli_like_matrix() {
        // [[1, i], [-i, 1]] has eigenvalues 0 and 2
        let m = mat2([[ONE, I], [-I, ONE]]);
        let (lo, hi) = hermitian_eig_range(&m);
        assert_relative_eq!(lo, 0.0, epsilon = 1e-12);
        assert_relative_eq!(hi, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn eigenvalues_of_complex_triangular_matrix() {
        let m = mat2([[c(1.0, 2.0), cr(5.0)], [ZERO, c(-3.0, 0.5)]]);
        let mut eigs = eigenvalues(&m);
        eigs.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap());
        assert!((eigs[0] - c(-3.0, 0.5)).norm() < 1e-10);
        assert!((eigs[1] - c(1.0, 2.0)).norm() < 1e-10);
    }

    #[test]
    fn expm_matches_scalar_exponential_on_diagonal() {
        let m = mat2([[c(0.0, 1.5), ZERO], [ZERO, c(-0.3, 0.0)]]);
        let e = expm(&m);
        assert!((e[(0, 0)] - c(0.0, 1.5).exp()).norm() < 1e-12);
        assert!((e[(1, 1)] - cr(-0.3).exp()).norm() < 1e-12);
        assert!(e[(0, 1)].norm() < 1e-14);
    }

    #[test]
    fn expm_of_skew_hermitian_is_unitary() {
        let a = mat2([[c(0.0, 0.7), c(0.3, 0.4)], [c(-0.3, 0.4), c(0.0, -1.1)]]);
        // a is skew-Hermitian by construction
        assert!(max_abs(&(&a + a.adjoint())) < 1e-15);
        let u = expm(&a);
        assert!(max_abs_diff(&(&u * u.adjoint()), &eye(2)) < 1e-12);
    }

    #[test]
    fn sylvester_solution_satisfies_equation() {
        let a1 = mat2([[c(1.0, 2.0), c(0.5, 0.0)], [ZERO, c(-1.0, 1.0)]]);
        let a2 = mat2([[c(0.0, -2.0), ZERO], [c(0.2, 0.1), c(2.0, -1.0)]]);
        let cmat = mat2([[ONE, c(0.0, 3.0)], [c(-2.0, 0.4), cr(0.6)]]);
        let s = solve_sylvester(&a1, &a2, &cmat).unwrap();
        let resid = max_abs(&(&a1 * &s - &s * &a2 - &cmat));
        assert!(resid < 1e-12, "residual {resid}");
    }

    #[test]
    fn kron_of_identities_is_identity() {
        assert_eq!(kron(&eye(2), &eye(3)), eye(6));
    }

    #[test]
    fn kron_mixed_product_rule() {
        let a = mat2([[ONE, I], [cr(2.0), ZERO]]);
        let b = mat2([[c(0.5, -1.0), ZERO], [ONE, c(1.0, 1.0)]]);
        let lhs = kron(&(&a * &b), &(&b * &a));
        let rhs = kron(&a, &b) * kron(&b, &a);
        assert!(max_abs_diff(&lhs, &rhs) < 1e-12);
    }

    #[test]
    fn polar_unitary_recovers_rotation() {
        let u0 = expm(&mat2([[c(0.0, 0.4), c(0.2, -0.1)], [c(-0.2, -0.1), c(0.0, -0.9)]]));
        let p = mat2([[cr(2.0), ZERO], [ZERO, cr(0.5)]]);
        let m = &u0 * &p;
        let u = polar_unitary(&m);
        assert!(max_abs_diff(&u, &u0) < 1e-10);
    }

    #[test]
    fn cholesky_solves_hermitian_positive_system() {
        let m = mat2([[cr(2.0), c(0.3, 0.4)], [c(0.3, -0.4), cr(3.0)]]);
        let chol = m.clone().cholesky().expect("HPD");
        let b = CMat::from_row_slice(2, 1, &[ONE, c(0.0, 2.0)]);
        let x = chol.solve(&b);
        assert!(max_abs(&(&m * &x - &b)) < 1e-12);
    }
}
