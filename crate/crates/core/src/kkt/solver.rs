//! Newton–KKT method for equality-constrained maximization.
//!
//! Each iteration solves
//!
//! ```text
//! [ W − δI  ∇gᵀ ] [ Δz ]   [ −∇ℓ ]
//! [ ∇g      0   ] [ λ⁺ ] = [ −g  ]
//! ```
//!
//! with `W = ∇²ℓ + Σλᵢ∇²gᵢ` and the smallest `δ ∈ {0} ∪ {δ₀·10ᵏ}` for which
//! the matrix has `n + m` negative and `m` positive eigenvalues, then
//! backtracks on the exact penalty `ℓ(z) − ρ‖g(z)‖₁`, `ρ = 2‖λ⁺‖∞`.

use std::path::Path;

use log::{debug, trace};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::lagrangian::{lagrangian_hessian, BorderedHessian};
use super::problem::ConstrainedProblem;
use super::reduced::sensitivity_from_jacobian;
use crate::error::{check_dim, Error, Result};
use crate::linalg::{Backend, CsrMatrix, SparseLu, SymmetricFactor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    /// Bound on `‖∇ℓ + ∇gᵀλ‖∞` at convergence.
    pub tol_kkt: f64,
    /// Bound on `‖g‖∞` at convergence.
    pub tol_feas: f64,
    pub max_iter: usize,
    /// First nonzero z-block shift tried when the inertia is wrong.
    pub regularization_initial: f64,
    pub regularization_growth: f64,
    pub regularization_max: f64,
    pub max_backtracks: usize,
    pub backend: Backend,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol_kkt: 1e-8,
            tol_feas: 1e-8,
            max_iter: 200,
            regularization_initial: 1e-8,
            regularization_growth: 10.0,
            regularization_max: 1e12,
            max_backtracks: 30,
            backend: Backend::Auto,
        }
    }
}

impl SolverOptions {
    /// Parses `key = value` lines; unspecified keys keep their defaults.
    pub fn from_config_str(text: &str) -> Result<Self> {
        let opts: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        opts.validate()?;
        Ok(opts)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_config_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("tol_kkt", self.tol_kkt),
            ("tol_feas", self.tol_feas),
            ("regularization_initial", self.regularization_initial),
            ("regularization_max", self.regularization_max),
        ];
        for (key, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{key} must be positive, got {v}")));
            }
        }
        if !(self.regularization_growth > 1.0) {
            return Err(Error::Config("regularization_growth must exceed 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIter,
    SingularKkt,
    LineSearchFailure,
}

#[derive(Debug, Clone)]
pub struct KktSolution {
    pub z_star: DVector<f64>,
    pub lambda_star: DVector<f64>,
    pub merit_value: f64,
    /// `‖∇ℓ(z*) + ∇g(z*)ᵀλ*‖∞`
    pub kkt_residual: f64,
    /// `‖g(z*)‖∞`
    pub constraint_violation: f64,
    pub iterations: usize,
    pub status: SolveStatus,
    /// z-block shift used in the last Newton step.
    pub regularization: f64,
}

impl KktSolution {
    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }

    pub fn to_json(&self, labels: &[String]) -> serde_json::Value {
        serde_json::json!({
            "status": self.status,
            "iterations": self.iterations,
            "merit_value": self.merit_value,
            "kkt_residual": self.kkt_residual,
            "constraint_violation": self.constraint_violation,
            "regularization": self.regularization,
            "labels": labels,
            "z_star": self.z_star.as_slice(),
            "lambda_star": self.lambda_star.as_slice(),
        })
    }
}

/// Least-squares multipliers from the dependent block: `λ = −∇_q g⁻ᵀ ∇_q ℓ`.
fn initial_multipliers(jac: &CsrMatrix, grad: &DVector<f64>, n: usize, m: usize) -> DVector<f64> {
    if m == 0 {
        return DVector::zeros(0);
    }
    match SparseLu::factor(&jac.column_slice(n..n + m)) {
        Ok(lu) => {
            let lam = -lu.solve_transpose(&grad.rows(n, m).into_owned());
            if lam.iter().all(|v| v.is_finite()) {
                lam
            } else {
                DVector::zeros(m)
            }
        }
        Err(_) => DVector::zeros(m),
    }
}

struct NewtonStep {
    factor: SymmetricFactor,
    delta: f64,
    dz: DVector<f64>,
    lambda_plus: DVector<f64>,
}

/// Inertia check through the reduced Hessian: with `∇_q g` invertible,
/// `In(K) = In(∇wᵀ(W − δI)∇w) + (m, m, 0)`.
struct ReducedInertia {
    projected_w: nalgebra::DMatrix<f64>,
    gram: nalgebra::DMatrix<f64>,
}

impl ReducedInertia {
    fn new(h: &BorderedHessian, jac: &CsrMatrix) -> Option<Self> {
        let nz = h.n() + h.m();
        let w = sensitivity_from_jacobian(jac, h.n()).ok()?;
        let z_block = CsrMatrix::from_entries(
            nz,
            nz,
            h.matrix().iter().filter(|&(i, j, _)| i < nz && j < nz),
        );
        let projected_w = super::reduced::project(&z_block, &w);
        let gram = w.transpose() * &w;
        Some(Self { projected_w, gram })
    }

    fn negative_definite(&self, delta: f64) -> bool {
        if self.projected_w.nrows() == 0 {
            return true;
        }
        let r = &self.projected_w - &self.gram * delta;
        let r = (&r + r.transpose()) * 0.5;
        r.symmetric_eigenvalues().iter().all(|&v| v < 0.0)
    }
}

fn newton_step(
    h: &BorderedHessian,
    jac: &CsrMatrix,
    grad: &DVector<f64>,
    g: &DVector<f64>,
    options: &SolverOptions,
    delta_last: f64,
) -> Result<Option<NewtonStep>> {
    let nz = h.n() + h.m();
    let m = h.m();
    let mut reduced: Option<Option<ReducedInertia>> = None;
    let mut delta = 0.0;
    loop {
        let matrix = if delta == 0.0 {
            h.matrix().clone()
        } else {
            h.shifted(-delta)
        };
        match SymmetricFactor::factor(&matrix, options.backend) {
            Ok(factor) => {
                let ok = match factor.inertia() {
                    Some(inertia) => {
                        inertia.negative == nz && inertia.positive == m && inertia.zero == 0
                    }
                    None => reduced
                        .get_or_insert_with(|| ReducedInertia::new(h, jac))
                        .as_ref()
                        .is_some_and(|r| r.negative_definite(delta)),
                };
                if ok {
                    let mut rhs = DVector::zeros(nz + m);
                    rhs.rows_mut(0, nz).copy_from(&(-grad));
                    rhs.rows_mut(nz, m).copy_from(&(-g));
                    let mut sol = factor.solve(&rhs);
                    // one step of iterative refinement
                    let resid = &rhs - matrix.mul_vec(&sol);
                    sol += factor.solve(&resid);
                    if sol.iter().all(|v| v.is_finite()) {
                        return Ok(Some(NewtonStep {
                            dz: sol.rows(0, nz).into_owned(),
                            lambda_plus: sol.rows(nz, m).into_owned(),
                            factor,
                            delta,
                        }));
                    }
                }
                trace!("inertia rejected at delta = {delta:e}");
            }
            Err(Error::Singular { .. }) => trace!("singular KKT matrix at delta = {delta:e}"),
            Err(e) => return Err(e),
        }
        delta = if delta == 0.0 {
            if delta_last == 0.0 {
                options.regularization_initial
            } else {
                (delta_last / 3.0).max(options.regularization_initial)
            }
        } else {
            delta * options.regularization_growth
        };
        if delta > options.regularization_max {
            return Ok(None);
        }
    }
}

fn penalty<P: ConstrainedProblem + ?Sized>(problem: &P, z: &DVector<f64>, rho: f64) -> Option<f64> {
    let merit = problem.merit(z);
    let g = problem.constraints(z);
    let v = merit - rho * g.lp_norm(1);
    v.is_finite().then_some(v)
}

/// Maximizes `ℓ(z)` subject to `g(z) = 0` from `z0`.
pub fn solve_equality_constrained<P: ConstrainedProblem + ?Sized>(
    problem: &P,
    z0: &DVector<f64>,
    options: &SolverOptions,
) -> Result<KktSolution> {
    let n = problem.n_independent();
    let m = problem.n_dependent();
    let nz = n + m;
    check_dim("z0", nz, z0.len())?;
    if !z0.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("initial point"));
    }
    let positive = problem.positive_variables();
    if let Some(&i) = positive.iter().find(|&&i| z0[i] <= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "initial value of positive variable {i} is {}",
            z0[i]
        )));
    }

    let mut z = z0.clone();
    let mut grad = problem.merit_gradient(&z);
    let mut jac = problem.constraint_jacobian(&z).to_csr();
    let mut lambda = initial_multipliers(&jac, &grad, n, m);
    let mut delta_last = 0.0;
    let mut iterations = 0;

    let status = loop {
        let g = problem.constraints(&z);
        let kkt = (&grad + jac.tr_mul_vec(&lambda)).amax();
        let feas = if m > 0 { g.amax() } else { 0.0 };
        debug!("iter {iterations:3}: kkt {kkt:.3e} feas {feas:.3e} delta {delta_last:.1e}");
        if !(kkt.is_finite() && feas.is_finite()) {
            return Err(Error::NonFinite("KKT residual"));
        }
        if kkt <= options.tol_kkt && feas <= options.tol_feas {
            break SolveStatus::Converged;
        }
        if iterations >= options.max_iter {
            break SolveStatus::MaxIter;
        }

        let w = lagrangian_hessian(problem, &z, &lambda);
        let h = BorderedHessian::from_parts(problem.partition(), &w, &jac)?;
        let Some(step) = newton_step(&h, &jac, &grad, &g, options, delta_last)? else {
            break SolveStatus::SingularKkt;
        };
        delta_last = step.delta;

        let rho = 2.0 * step.lambda_plus.amax();
        let g_norm1 = g.lp_norm(1);
        let phi = problem.merit(&z) - rho * g_norm1;
        let slope = grad.dot(&step.dz) - rho * g_norm1;
        let slack = 10.0 * f64::EPSILON * phi.abs();
        let sufficient = |trial: f64, alpha: f64| trial >= phi + 1e-4 * alpha * slope - slack;
        let feasible_sign = |zt: &DVector<f64>| positive.iter().all(|&i| zt[i] > 0.0);

        let mut alpha = 1.0;
        let mut accepted: Option<(DVector<f64>, f64)> = None;
        for bt in 0..=options.max_backtracks {
            let trial = &z + &step.dz * alpha;
            if feasible_sign(&trial) {
                if let Some(v) = penalty(problem, &trial, rho) {
                    if sufficient(v, alpha) {
                        accepted = Some((trial, alpha));
                        break;
                    }
                    if bt == 0 && m > 0 {
                        // second-order correction against the Maratos effect
                        let gt = problem.constraints(&trial);
                        let mut rhs = DVector::zeros(nz + m);
                        rhs.rows_mut(nz, m).copy_from(&(-gt));
                        let corr = step.factor.solve(&rhs);
                        let soc = &trial + corr.rows(0, nz);
                        if feasible_sign(&soc) {
                            if let Some(vs) = penalty(problem, &soc, rho) {
                                if sufficient(vs, 1.0) {
                                    accepted = Some((soc, 1.0));
                                    break;
                                }
                            }
                        }
                    }
                }
            }
            alpha *= 0.5;
        }

        let Some((z_new, alpha)) = accepted else {
            break SolveStatus::LineSearchFailure;
        };
        z = z_new;
        lambda = &lambda + (&step.lambda_plus - &lambda) * alpha;
        grad = problem.merit_gradient(&z);
        jac = problem.constraint_jacobian(&z).to_csr();
        iterations += 1;
    };

    let g = problem.constraints(&z);
    Ok(KktSolution {
        merit_value: problem.merit(&z),
        kkt_residual: (&grad + jac.tr_mul_vec(&lambda)).amax(),
        constraint_violation: if m > 0 { g.amax() } else { 0.0 },
        z_star: z,
        lambda_star: lambda,
        iterations,
        status,
        regularization: delta_last,
    })
}
