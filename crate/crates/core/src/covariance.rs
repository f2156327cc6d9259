//! Estimate uncertainty from the inverse bordered Hessian.
//!
//! At a strict constrained maximum, the leading `n × n` block of `H_L⁻¹` is
//! the inverse Hessian of the reduced merit, and the leading `(n+m) × (n+m)`
//! block is `∇w (∇²ℓ̃)⁻¹ ∇wᵀ`, the linearized covariance of every decision
//! variable (up to sign). Only requested columns of `H_L⁻¹` are formed, each
//! by one solve against a shared factorization.
//!
//! All public covariance outputs are blocks of `−H_L⁻¹`, which is positive
//! semidefinite on the decision variables.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kkt::{BorderedHessian, ConstrainedProblem, KktSolution};
use crate::linalg::{condest, Backend, SparseLu, SymmetricFactor};

/// Largest accepted `‖H_L x − eᵢ‖∞ / ‖x‖∞` after iterative refinement.
pub const COLUMN_RESIDUAL_TOL: f64 = 1e-9;
const MAX_REFINEMENT_STEPS: usize = 4;

/// A factorized bordered Hessian from which columns of the inverse are drawn.
///
/// Read-only after construction; columns may be extracted from several
/// threads at once.
#[derive(Debug)]
pub struct HessianInverse<'a> {
    hessian: &'a BorderedHessian,
    factor: SymmetricFactor,
}

impl<'a> HessianInverse<'a> {
    pub fn new(hessian: &'a BorderedHessian, backend: Backend) -> Result<Self> {
        let factor = SymmetricFactor::factor(hessian.matrix(), backend)?;
        Ok(Self { hessian, factor })
    }

    pub fn hessian(&self) -> &BorderedHessian {
        self.hessian
    }

    /// Column `index` of `H_L⁻¹` and its relative residual.
    pub fn column_with_residual(&self, index: usize) -> Result<(DVector<f64>, f64)> {
        let dim = self.hessian.dim();
        if index >= dim {
            return Err(Error::InvalidArgument(format!(
                "column {index} out of range for dimension {dim}"
            )));
        }
        let mut e = DVector::zeros(dim);
        e[index] = 1.0;
        let mut x = self.factor.solve(&e);
        let mut rel = f64::INFINITY;
        for _ in 0..=MAX_REFINEMENT_STEPS {
            let r = &e - self.hessian.matrix().mul_vec(&x);
            rel = r.amax() / x.amax().max(f64::MIN_POSITIVE);
            if rel <= COLUMN_RESIDUAL_TOL * 1e-3 {
                break;
            }
            x += self.factor.solve(&r);
        }
        let r = &e - self.hessian.matrix().mul_vec(&x);
        let final_rel = r.amax() / x.amax().max(f64::MIN_POSITIVE);
        rel = rel.min(final_rel);
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::Singular {
                context: "bordered Hessian column solve",
                pivot: index,
            });
        }
        Ok((x, rel))
    }

    /// Columns of `H_L⁻¹` at `indices`.
    pub fn inverse_columns(&self, indices: &[usize]) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(self.hessian.dim(), indices.len());
        for (k, &i) in indices.iter().enumerate() {
            let (col, rel) = self.column_with_residual(i)?;
            if rel > COLUMN_RESIDUAL_TOL {
                return Err(Error::Singular {
                    context: "bordered Hessian (column residual above tolerance)",
                    pivot: i,
                });
            }
            out.set_column(k, &col);
        }
        Ok(out)
    }

    /// The leading `n × n` block of `H_L⁻¹`, equal to `(∇²ℓ̃)⁻¹`.
    pub fn reduced_hessian_inverse(&self) -> Result<DMatrix<f64>> {
        let n = self.hessian.n();
        let cols = self.inverse_columns(&(0..n).collect::<Vec<_>>())?;
        let block = cols.rows(0, n).into_owned();
        Ok((&block + block.transpose()) * 0.5)
    }

    /// Columns `indices` of the leading `(n+m)` block of `−H_L⁻¹`.
    pub fn full_covariance_block(&self, indices: &[usize]) -> Result<DMatrix<f64>> {
        let nz = self.hessian.n() + self.hessian.m();
        if let Some(&bad) = indices.iter().find(|&&i| i >= nz) {
            return Err(Error::InvalidArgument(format!(
                "index {bad} is a multiplier row, not a decision variable"
            )));
        }
        let cols = self.inverse_columns(indices)?;
        Ok(-cols.rows(0, nz).into_owned())
    }

    /// `Σ̂ᵢ = sqrt([−H_L⁻¹]ᵢᵢ)` for each requested decision variable.
    pub fn standard_deviations(&self, indices: &[usize]) -> Result<DVector<f64>> {
        let block = self.full_covariance_block(indices)?;
        let mut out = DVector::zeros(indices.len());
        for (k, &i) in indices.iter().enumerate() {
            let v = block[(i, k)];
            if !(v > 0.0) {
                return Err(Error::Definiteness { index: i, value: v });
            }
            out[k] = v.sqrt();
        }
        Ok(out)
    }

    /// Reciprocal 1-norm condition estimate of `H_L`.
    pub fn rcond(&self) -> f64 {
        let n = self.hessian.dim();
        let solve = |x: &DVector<f64>| self.factor.solve(x);
        condest::rcond(self.hessian.matrix().norm_one(), n, solve, solve)
    }
}

/// Columns of `H_L⁻¹` at `indices` (factorizes `h` on every call).
pub fn inverse_columns(h: &BorderedHessian, indices: &[usize]) -> Result<DMatrix<f64>> {
    HessianInverse::new(h, Backend::Auto)?.inverse_columns(indices)
}

pub fn reduced_hessian_inverse(h: &BorderedHessian) -> Result<DMatrix<f64>> {
    HessianInverse::new(h, Backend::Auto)?.reduced_hessian_inverse()
}

pub fn full_covariance_block(h: &BorderedHessian, indices: &[usize]) -> Result<DMatrix<f64>> {
    HessianInverse::new(h, Backend::Auto)?.full_covariance_block(indices)
}

pub fn standard_deviations(h: &BorderedHessian, indices: &[usize]) -> Result<DVector<f64>> {
    HessianInverse::new(h, Backend::Auto)?.standard_deviations(indices)
}

/// `ρᵢⱼ = covᵢⱼ / √(covᵢᵢ covⱼⱼ)`, with an exact unit diagonal.
pub fn correlation_matrix(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let k = cov.nrows();
    if cov.ncols() != k {
        return Err(Error::Dimension {
            what: "covariance columns",
            expected: k,
            got: cov.ncols(),
        });
    }
    if let Some(i) = (0..k).find(|&i| !(cov[(i, i)] > 0.0)) {
        return Err(Error::Definiteness {
            index: i,
            value: cov[(i, i)],
        });
    }
    Ok(DMatrix::from_fn(k, k, |i, j| {
        if i == j {
            1.0
        } else {
            (cov[(i, j)] / (cov[(i, i)] * cov[(j, j)]).sqrt()).clamp(-1.0, 1.0)
        }
    }))
}

/// Reciprocal condition estimates backing the invertibility assumptions.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ConditionDiagnostics {
    /// `1 / (‖∇_q g‖₁ ‖∇_q g⁻¹‖₁)`; zero when `∇_q g` is singular.
    pub dependent_jacobian_rcond: f64,
    pub bordered_hessian_rcond: f64,
}

/// What to extract beyond the reduced covariance.
#[derive(Debug, Clone, Default)]
pub struct ReportRequest {
    /// Decision-variable indices whose Σ̂ is reported.
    pub targets: Vec<usize>,
    /// Also keep the full covariance columns of the targets.
    pub full_columns: bool,
    /// Correlations among the targets.
    pub correlations: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CovarianceReport {
    pub labels: Vec<String>,
    pub targets: Vec<usize>,
    pub estimates: Vec<f64>,
    /// `R = −(∇²ℓ̃)⁻¹`, `n × n`, over the independent variables.
    #[serde(serialize_with = "ser_matrix")]
    pub reduced_covariance: DMatrix<f64>,
    /// Columns `targets` of the leading `(n+m)` block of `−H_L⁻¹`.
    #[serde(serialize_with = "ser_opt_matrix")]
    pub full_covariance_columns: Option<DMatrix<f64>>,
    pub std_devs: Vec<f64>,
    #[serde(serialize_with = "ser_opt_matrix")]
    pub correlations: Option<DMatrix<f64>>,
    pub condition: ConditionDiagnostics,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn ser_matrix<S: serde::Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    rows_of(m).serialize(s)
}

fn ser_opt_matrix<S: serde::Serializer>(
    m: &Option<DMatrix<f64>>,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    m.as_ref().map(rows_of).serialize(s)
}

/// Reciprocal condition estimate of `∇_q g` from the bordered Hessian.
pub fn dependent_jacobian_rcond(h: &BorderedHessian) -> f64 {
    let jq = h.dependent_jacobian();
    if jq.nrows() == 0 {
        return 1.0;
    }
    match SparseLu::factor(&jq) {
        Ok(lu) => condest::rcond(
            jq.norm_one(),
            jq.nrows(),
            |x| lu.solve(x),
            |x| lu.solve_transpose(x),
        ),
        Err(_) => 0.0,
    }
}

impl CovarianceReport {
    pub fn build<P: ConstrainedProblem + ?Sized>(
        problem: &P,
        solution: &KktSolution,
        inverse: &HessianInverse<'_>,
        request: &ReportRequest,
    ) -> Result<Self> {
        let h = inverse.hessian();
        let reduced_covariance = -inverse.reduced_hessian_inverse()?;
        let block = inverse.full_covariance_block(&request.targets)?;
        let mut std_devs = Vec::with_capacity(request.targets.len());
        for (k, &i) in request.targets.iter().enumerate() {
            let v = block[(i, k)];
            if !(v > 0.0) {
                return Err(Error::Definiteness { index: i, value: v });
            }
            std_devs.push(v.sqrt());
        }
        let correlations = if request.correlations {
            let sub = DMatrix::from_fn(request.targets.len(), request.targets.len(), |a, b| {
                block[(request.targets[a], b)]
            });
            Some(correlation_matrix(&((&sub + sub.transpose()) * 0.5))?)
        } else {
            None
        };
        let condition = ConditionDiagnostics {
            dependent_jacobian_rcond: dependent_jacobian_rcond(h),
            bordered_hessian_rcond: inverse.rcond(),
        };
        if condition.dependent_jacobian_rcond < 1e3 * f64::EPSILON {
            log::warn!(
                "dependent-variable Jacobian is nearly singular (rcond {:e})",
                condition.dependent_jacobian_rcond
            );
        }
        Ok(Self {
            labels: problem.variable_labels(),
            targets: request.targets.clone(),
            estimates: request.targets.iter().map(|&i| solution.z_star[i]).collect(),
            reduced_covariance,
            full_covariance_columns: request.full_columns.then_some(block),
            std_devs,
            correlations,
            condition,
        })
    }

    /// `name,estimate,std` rows, one per target.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "name,estimate,std")?;
        for (k, &i) in self.targets.iter().enumerate() {
            writeln!(
                out,
                "{},{},{}",
                self.labels[i],
                crate::io::fmt_f64(self.estimates[k]),
                crate::io::fmt_f64(self.std_devs[k])
            )?;
        }
        Ok(())
    }

    /// `name_a,name_b,correlation` for each unordered target pair.
    pub fn write_correlation_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "name_a,name_b,correlation")?;
        if let Some(c) = &self.correlations {
            for a in 0..self.targets.len() {
                for b in (a + 1)..self.targets.len() {
                    writeln!(
                        out,
                        "{},{},{}",
                        self.labels[self.targets[a]],
                        self.labels[self.targets[b]],
                        crate::io::fmt_f64(c[(a, b)])
                    )?;
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
