//! Reduced-space quantities: the sensitivity `∇w = [I; −∇_q g⁻¹ ∇_p g]` of
//! the implicit solution `q = q(p)`, the reduced Hessian
//! `∇wᵀ ∇²_z L ∇w`, and numerical elimination of the dependents.

use nalgebra::{DMatrix, DVector};

use super::lagrangian::lagrangian_hessian;
use super::problem::ConstrainedProblem;
use crate::error::{check_dim, Error, Result};
use crate::linalg::{CsrMatrix, SparseLu};

/// `∇w` at `z`, `(n + m) × n`, from the Jacobian `∇g(z)`.
pub fn sensitivity_from_jacobian(jac: &CsrMatrix, n: usize) -> Result<DMatrix<f64>> {
    let m = jac.nrows();
    check_dim("Jacobian columns", n + m, jac.ncols())?;
    let jq = SparseLu::factor(&jac.column_slice(n..n + m))?;
    let jp = jac.column_slice(0..n);
    let mut w = DMatrix::zeros(n + m, n);
    for j in 0..n {
        w[(j, j)] = 1.0;
    }
    // columns of ∇_p g, one solve each
    let jp_cols = jp.transpose();
    for j in 0..n {
        let mut col = DVector::zeros(m);
        for (i, v) in jp_cols.row(j) {
            col[i] = v;
        }
        let s = jq.solve(&col);
        for i in 0..m {
            w[(n + i, j)] = -s[i];
        }
    }
    Ok(w)
}

pub fn sensitivity<P: ConstrainedProblem + ?Sized>(
    problem: &P,
    z: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let jac = problem.constraint_jacobian(z).to_csr();
    sensitivity_from_jacobian(&jac, problem.n_independent())
}

/// `∇wᵀ [∇²ℓ + Σλᵢ∇²gᵢ] ∇w`, the Hessian of the reduced merit at a
/// stationary point.
pub fn reduced_hessian<P: ConstrainedProblem + ?Sized>(
    problem: &P,
    z: &DVector<f64>,
    lambda: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let w = sensitivity(problem, z)?;
    let lz = lagrangian_hessian(problem, z, lambda).to_csr();
    Ok(project(&lz, &w))
}

/// `Wᵀ A W` for sparse symmetric `A`.
pub fn project(a: &CsrMatrix, w: &DMatrix<f64>) -> DMatrix<f64> {
    let aw = a.mul_dense(w);
    let r = w.transpose() * aw;
    (&r + r.transpose()) * 0.5
}

/// Solves `g(p, q) = 0` for `q` by Newton's method starting at `q_guess`.
pub fn eliminate_dependents<P: ConstrainedProblem + ?Sized>(
    problem: &P,
    p: &DVector<f64>,
    q_guess: &DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<DVector<f64>> {
    let n = problem.n_independent();
    let m = problem.n_dependent();
    check_dim("p", n, p.len())?;
    check_dim("q", m, q_guess.len())?;
    let mut z = DVector::zeros(n + m);
    z.rows_mut(0, n).copy_from(p);
    z.rows_mut(n, m).copy_from(q_guess);
    for _ in 0..max_iter {
        let g = problem.constraints(&z);
        if !g.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("constraints during elimination"));
        }
        if g.amax() <= tol {
            return Ok(z.rows(n, m).into_owned());
        }
        let jq = problem.constraint_jacobian(&z).to_csr().column_slice(n..n + m);
        let dq = SparseLu::factor(&jq)?.solve(&g);
        let mut rows = z.rows_mut(n, m);
        rows -= dq;
    }
    let g = problem.constraints(&z);
    if g.amax() <= tol {
        Ok(z.rows(n, m).into_owned())
    } else {
        Err(Error::InvalidArgument(format!(
            "elimination did not converge: ‖g‖∞ = {:e}",
            g.amax()
        )))
    }
}

/// `ℓ̃(p) = ℓ(p, q(p))` with `q(p)` from [`eliminate_dependents`].
pub fn reduced_merit<P: ConstrainedProblem + ?Sized>(
    problem: &P,
    p: &DVector<f64>,
    q_guess: &DVector<f64>,
) -> Result<f64> {
    let q = eliminate_dependents(problem, p, q_guess, 1e-13, 50)?;
    let mut z = DVector::zeros(p.len() + q.len());
    z.rows_mut(0, p.len()).copy_from(p);
    z.rows_mut(p.len(), q.len()).copy_from(&q);
    Ok(problem.merit(&z))
}
