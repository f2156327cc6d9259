//! Central-difference verification of analytic derivative callbacks.

use nalgebra::DVector;
use serde::Serialize;

use super::problem::ConstrainedProblem;
use crate::error::{check_dim, Error, Result};
use crate::linalg::CsrMatrix;

const KEEP_WORST: usize = 8;

/// One mismatching entry: analytic value versus finite difference.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Discrepancy {
    pub row: usize,
    pub col: usize,
    pub analytic: f64,
    pub numeric: f64,
    /// `|analytic − numeric| / max(1, |numeric|)`
    pub relative_error: f64,
}

/// Worst entries of one derivative block.
#[derive(Debug, Clone, Default, Serialize)]
pub struct BlockCheck {
    pub max_relative_error: f64,
    pub worst: Vec<Discrepancy>,
}

impl BlockCheck {
    fn offer(&mut self, row: usize, col: usize, analytic: f64, numeric: f64) {
        let rel = (analytic - numeric).abs() / numeric.abs().max(1.0);
        let rel = if rel.is_nan() { f64::INFINITY } else { rel };
        if rel > self.max_relative_error {
            self.max_relative_error = rel;
        }
        if self.worst.len() < KEEP_WORST || rel > self.worst.last().unwrap().relative_error {
            self.worst.push(Discrepancy {
                row,
                col,
                analytic,
                numeric,
                relative_error: rel,
            });
            self.worst
                .sort_by(|a, b| b.relative_error.total_cmp(&a.relative_error));
            self.worst.truncate(KEEP_WORST);
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DerivativeReport {
    pub step: f64,
    pub merit_gradient: BlockCheck,
    pub constraint_jacobian: BlockCheck,
    pub merit_hessian: BlockCheck,
    pub constraint_hessian: BlockCheck,
}

impl DerivativeReport {
    pub fn max_relative_error(&self) -> f64 {
        [
            &self.merit_gradient,
            &self.constraint_jacobian,
            &self.merit_hessian,
            &self.constraint_hessian,
        ]
        .iter()
        .map(|b| b.max_relative_error)
        .fold(0.0, f64::max)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.max_relative_error() <= tol
    }
}

/// Compares every analytic derivative with central differences of the
/// next-lower-order callback, one coordinate direction at a time.
pub fn check_derivatives<P: ConstrainedProblem + ?Sized>(
    problem: &P,
    z: &DVector<f64>,
    lambda: &DVector<f64>,
    step: f64,
) -> Result<DerivativeReport> {
    check_dim("z", problem.n_vars(), z.len())?;
    check_dim("lambda", problem.n_dependent(), lambda.len())?;
    if !(step > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {step}")));
    }
    let nz = problem.n_vars();
    let m = problem.n_dependent();

    let grad = problem.merit_gradient(z);
    // column j of ∇g is row j of its transpose
    let jac_t: CsrMatrix = problem.constraint_jacobian(z).to_csr().transpose();
    let merit_hess = problem.merit_hessian(z).to_csr();
    let con_hess = problem.constraint_hessian_contraction(z, lambda).to_csr();

    let mut report = DerivativeReport {
        step,
        merit_gradient: BlockCheck::default(),
        constraint_jacobian: BlockCheck::default(),
        merit_hessian: BlockCheck::default(),
        constraint_hessian: BlockCheck::default(),
    };

    let mut zp = z.clone();
    let mut zm = z.clone();
    let mut col = DVector::zeros(m.max(nz));
    for j in 0..nz {
        zp[j] = z[j] + step;
        zm[j] = z[j] - step;
        let h2 = zp[j] - zm[j];

        let dmerit = (problem.merit(&zp) - problem.merit(&zm)) / h2;
        report.merit_gradient.offer(0, j, grad[j], dmerit);

        let dg = (problem.constraints(&zp) - problem.constraints(&zm)) / h2;
        col.fill(0.0);
        for (i, v) in jac_t.row(j) {
            col[i] = v;
        }
        for i in 0..m {
            report.constraint_jacobian.offer(i, j, col[i], dg[i]);
        }

        let dgrad = (problem.merit_gradient(&zp) - problem.merit_gradient(&zm)) / h2;
        col.fill(0.0);
        for (i, v) in merit_hess.row(j) {
            col[i] = v;
        }
        for i in 0..nz {
            report.merit_hessian.offer(i, j, col[i], dgrad[i]);
        }

        let jp = problem.constraint_jacobian(&zp).to_csr();
        let jm = problem.constraint_jacobian(&zm).to_csr();
        let dcon = (jp.tr_mul_vec(lambda) - jm.tr_mul_vec(lambda)) / h2;
        col.fill(0.0);
        for (i, v) in con_hess.row(j) {
            col[i] = v;
        }
        for i in 0..nz {
            report.constraint_hessian.offer(i, j, col[i], dcon[i]);
        }

        zp[j] = z[j];
        zm[j] = z[j];
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kkt::problem::{quadratic_toy, FnProblem};
    use nalgebra::DMatrix;

    #[test]
    fn toy_passes() {
        let r = check_derivatives(
            &quadratic_toy(),
            &DVector::from_vec(vec![0.3, -1.2]),
            &DVector::from_element(1, 0.7),
            1e-6,
        )
        .unwrap();
        assert!(r.passes(1e-6), "{}", r.max_relative_error());
    }

    #[test]
    fn corrupted_jacobian_entry_is_flagged() {
        let mut p: FnProblem = quadratic_toy();
        p.constraint_jacobian = Box::new(|_| DMatrix::from_row_slice(1, 2, &[1.0, 2.0]));
        let r = check_derivatives(&p, &DVector::zeros(2), &DVector::zeros(1), 1e-6).unwrap();
        let worst = r.constraint_jacobian.worst[0];
        assert_eq!((worst.row, worst.col), (0, 1));
        assert!(worst.relative_error > 0.5);
        assert!(r.merit_gradient.max_relative_error < 1e-6);
    }

    #[test]
    fn rejects_nonpositive_step() {
        assert!(check_derivatives(&quadratic_toy(), &DVector::zeros(2), &DVector::zeros(1), 0.0).is_err());
    }
}
