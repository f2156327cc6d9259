//! Output-error experiments: data generation, initial guess, fitting, and
//! state-path bands.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::filter::{derivative, interpolate, lowpass_zero_phase};
use crate::covariance::{CovarianceReport, HessianInverse, ReportRequest};
use crate::error::{Error, Result};
use crate::kkt::{
    assemble_bordered_hessian, solve_equality_constrained, BorderedHessian, ConstrainedProblem, KktSolution,
    SolverOptions,
};
use crate::models::{measure, simulate_ode, LinearOde, MeshTrajectory, OdeModel, VanDerPol};
use crate::seed::{derive_seed, purpose};
use crate::transcribe::{transcribe_oem, CollocationMesh, NoiseScale, OemProblem, OemSpec};

/// The dynamics used to generate data and to fit it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OdeSystem {
    VanDerPol { mu: f64 },
    /// `ẋ = A x + B θ`, matrices given row by row.
    Linear {
        a: Vec<Vec<f64>>,
        #[serde(default)]
        b: Vec<Vec<f64>>,
        #[serde(default)]
        theta: Vec<f64>,
    },
}

fn matrix(rows: &[Vec<f64>], nrows: usize, what: &str) -> Result<DMatrix<f64>> {
    if rows.is_empty() {
        return Ok(DMatrix::zeros(nrows, 0));
    }
    let ncols = rows[0].len();
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Config(format!("{what} must be a {nrows}-row rectangular matrix")));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

impl OdeSystem {
    pub fn model(&self) -> Result<Arc<dyn OdeModel>> {
        Ok(match self {
            Self::VanDerPol { .. } => Arc::new(VanDerPol),
            Self::Linear { a, b, .. } => {
                let am = matrix(a, a.len(), "a")?;
                if am.nrows() != am.ncols() {
                    return Err(Error::Config("a must be square".into()));
                }
                let bm = matrix(b, am.nrows(), "b")?;
                Arc::new(LinearOde::new(am, bm))
            }
        })
    }

    pub fn theta(&self) -> Vec<f64> {
        match self {
            Self::VanDerPol { mu } => vec![*mu],
            Self::Linear { theta, .. } => theta.clone(),
        }
    }
}

fn default_true() -> bool {
    true
}
fn default_horizon() -> f64 {
    20.0
}
fn default_sample_period() -> f64 {
    0.1
}
fn default_mesh_spacing() -> f64 {
    0.02
}
fn default_substeps() -> usize {
    1
}
fn default_cutoff() -> f64 {
    4.0
}

/// A simulated output-error experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OemExperiment {
    pub system: OdeSystem,
    pub x0: Vec<f64>,
    /// Measurement noise standard deviation used to generate data.
    pub sigma: f64,
    #[serde(default = "default_true")]
    pub estimate_sigma: bool,
    #[serde(default)]
    pub observed: usize,
    #[serde(default)]
    pub t0: f64,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_sample_period")]
    pub sample_period: f64,
    #[serde(default = "default_mesh_spacing")]
    pub mesh_spacing: f64,
    /// Runge–Kutta steps per mesh interval when generating data.
    #[serde(default = "default_substeps")]
    pub sim_substeps: usize,
    /// Low-pass cutoff of the initial guess, rad per time unit.
    #[serde(default = "default_cutoff")]
    pub filter_cutoff: f64,
}

impl OemExperiment {
    /// Van der Pol with `μ = 2`, `σ = 0.1`, `x(0) = (0, 1)` on `[0, 20]`.
    pub fn van_der_pol() -> Self {
        Self {
            system: OdeSystem::VanDerPol { mu: 2.0 },
            x0: vec![0.0, 1.0],
            sigma: 0.1,
            estimate_sigma: true,
            observed: 0,
            t0: 0.0,
            horizon: 20.0,
            sample_period: 0.1,
            mesh_spacing: 0.02,
            sim_substeps: 1,
            filter_cutoff: default_cutoff(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let model = self.system.model()?;
        if self.x0.len() != model.n_states() {
            return Err(Error::Config(format!("x0 needs {} entries", model.n_states())));
        }
        if self.system.theta().len() != model.n_params() {
            return Err(Error::Config(format!("theta needs {} entries", model.n_params())));
        }
        if self.observed >= model.n_states() {
            return Err(Error::Config("observed state out of range".into()));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::Config("sigma must be positive".into()));
        }
        self.mesh()?;
        Ok(())
    }

    pub fn measurement_times(&self) -> Vec<f64> {
        let count = (self.horizon / self.sample_period).round() as usize;
        (0..=count).map(|k| self.t0 + k as f64 * self.sample_period).collect()
    }

    pub fn mesh(&self) -> Result<CollocationMesh> {
        CollocationMesh::uniform(self.t0, self.t0 + self.horizon, self.mesh_spacing)?
            .with_measurements(&self.measurement_times())
            .map_err(|e| Error::Config(e.to_string()))
    }

    /// Noise-free path on the mesh.
    pub fn true_trajectory(&self) -> Result<MeshTrajectory> {
        let mesh = self.mesh()?;
        simulate_ode(
            self.system.model()?.as_ref(),
            &self.system.theta(),
            &self.x0,
            mesh.node_times(),
            self.sim_substeps,
        )
    }

    /// Measurements for realization `index` of the experiment seeded by `master`.
    pub fn generate_data(&self, truth: &MeshTrajectory, master: u64, index: u64) -> Result<Vec<f64>> {
        let mesh = self.mesh()?;
        measure(
            truth,
            self.observed,
            mesh.measurement_nodes(),
            self.sigma,
            derive_seed(master, purpose::MEASUREMENT_NOISE, index),
        )
    }

    pub fn problem(&self, data: Vec<f64>) -> Result<OemProblem> {
        transcribe_oem(OemSpec {
            model: self.system.model()?,
            observed: self.observed,
            data,
            mesh: self.mesh()?,
            noise: if self.estimate_sigma {
                NoiseScale::Estimated
            } else {
                NoiseScale::Known(self.sigma)
            },
        })
    }

    /// The decision vector holding the true parameters and path.
    pub fn truth_vector(&self, problem: &OemProblem, truth: &MeshTrajectory) -> Result<DVector<f64>> {
        problem.pack(&self.system.theta(), self.sigma, &truth.states)
    }
}

/// Initial values of the output-error decision variables.
#[derive(Debug, Clone, PartialEq)]
pub struct OemGuess {
    pub theta: Vec<f64>,
    pub sigma: f64,
    /// `nodes × states`
    pub states: DMatrix<f64>,
}

/// Van der Pol guess: filtered measurements for `x₁`, their derivative for
/// `x₂`, and `μ` by least squares on the integrated `x₂` equation.
pub fn initial_guess_oem(data: &[f64], mesh: &CollocationMesh, cutoff: f64) -> Result<OemGuess> {
    if data.len() < 3 {
        return Err(Error::InvalidArgument("at least 3 measurements are needed".into()));
    }
    let times = mesh.measurement_times();
    let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
    let x1 = lowpass_zero_phase(data, dt, cutoff);
    let x2 = derivative(&x1, dt);
    let mu = integrated_mu(data, dt, MU_WINDOW).unwrap_or(1.0);

    let resid: Vec<f64> = data.iter().zip(&x1).map(|(y, x)| y - x).collect();
    let sigma = std_dev(&resid).max(1e-6);

    let nodes = mesh.node_times();
    let x1m = interpolate(&times, &x1, nodes);
    let x2m = interpolate(&times, &x2, nodes);
    let states = DMatrix::from_fn(nodes.len(), 2, |j, i| if i == 0 { x1m[j] } else { x2m[j] });
    Ok(OemGuess {
        theta: vec![mu],
        sigma,
        states,
    })
}

const MU_WINDOW: usize = 80;

/// `μ` from the twice-integrated `x₂` equation
/// `x₁(t) = a + c (t − s) + μ ∫ F(x₁) − ∬ x₁`, `F(x) = x − x³/3`, with `a`
/// and `c` free in each window of `window` samples.
/// `None` when the `μ` regressor vanishes after removing those nuisances.
fn integrated_mu(y: &[f64], dt: f64, window: usize) -> Option<f64> {
    let f = |x: f64| x - x * x * x / 3.0;
    let (mut num, mut den, mut scale) = (0.0, 0.0, 0.0);
    for seg in y.chunks(window.max(3)).filter(|c| c.len() >= 3) {
        let m = seg.len();
        let mut reg = vec![0.0; m];
        let mut c1 = vec![0.0; m];
        let mut c2 = vec![0.0; m];
        for k in 1..m {
            reg[k] = reg[k - 1] + 0.5 * dt * (f(seg[k - 1]) + f(seg[k]));
            c1[k] = c1[k - 1] + 0.5 * dt * (seg[k - 1] + seg[k]);
            c2[k] = c2[k - 1] + 0.5 * dt * (c1[k - 1] + c1[k]);
        }
        let lhs: Vec<f64> = seg.iter().zip(&c2).map(|(x, c)| x + c).collect();
        let ry = detrend(&lhs);
        let rg = detrend(&reg);
        num += ry.iter().zip(&rg).map(|(a, b)| a * b).sum::<f64>();
        den += rg.iter().map(|v| v * v).sum::<f64>();
        scale += reg.iter().map(|v| v * v).sum::<f64>();
    }
    let mu = num / den;
    (den > 1e-10 * scale && mu.is_finite()).then_some(mu)
}

/// Residual of the least-squares line through `(k, v[k])`.
fn detrend(v: &[f64]) -> Vec<f64> {
    let n = v.len() as f64;
    let tb = (n - 1.0) / 2.0;
    let vb = v.iter().sum::<f64>() / n;
    let sxx: f64 = (0..v.len()).map(|k| (k as f64 - tb).powi(2)).sum();
    let sxy: f64 = v.iter().enumerate().map(|(k, y)| (k as f64 - tb) * (y - vb)).sum();
    let slope = sxy / sxx;
    v.iter().enumerate().map(|(k, y)| y - vb - slope * (k as f64 - tb)).collect()
}

fn std_dev(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
}

impl OemExperiment {
    /// Starting point for the solver.
    pub fn initial_point(&self, problem: &OemProblem) -> Result<DVector<f64>> {
        let data = &problem.spec().data;
        let mesh = problem.mesh();
        match self.system {
            OdeSystem::VanDerPol { .. } => {
                let g = initial_guess_oem(data, mesh, self.filter_cutoff)?;
                problem.pack(&g.theta, g.sigma, &g.states)
            }
            OdeSystem::Linear { .. } => {
                let times = mesh.measurement_times();
                let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1).max(1) as f64;
                let smooth = lowpass_zero_phase(data, dt, self.filter_cutoff);
                let obs = interpolate(&times, &smooth, mesh.node_times());
                let ns = problem.n_states();
                let states = DMatrix::from_fn(mesh.n_nodes(), ns, |j, i| if i == self.observed { obs[j] } else { 0.0 });
                let resid: Vec<f64> = data.iter().zip(&smooth).map(|(y, x)| y - x).collect();
                problem.pack(&vec![0.0; problem.n_params()], std_dev(&resid).max(1e-6), &states)
            }
        }
    }
}

/// A converged fit with its factorized bordered Hessian.
#[derive(Debug)]
pub struct Fit<P> {
    pub problem: P,
    pub solution: KktSolution,
    pub hessian: Option<BorderedHessian>,
}

impl<P: ConstrainedProblem> Fit<P> {
    pub fn solve(problem: P, z0: &DVector<f64>, options: &SolverOptions) -> Result<Self> {
        let solution = solve_equality_constrained(&problem, z0, options)?;
        let hessian = if solution.converged() {
            Some(assemble_bordered_hessian(&problem, &solution.z_star, &solution.lambda_star)?)
        } else {
            None
        };
        Ok(Self {
            problem,
            solution,
            hessian,
        })
    }

    pub fn inverse(&self, options: &SolverOptions) -> Result<HessianInverse<'_>> {
        let h = self
            .hessian
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument(format!("solver status {:?}", self.solution.status)))?;
        HessianInverse::new(h, options.backend)
    }

    pub fn label_indices(&self, names: &[String]) -> Result<Vec<usize>> {
        let labels = self.problem.variable_labels();
        names
            .iter()
            .map(|name| {
                labels
                    .iter()
                    .position(|l| l == name)
                    .ok_or_else(|| Error::InvalidArgument(format!("unknown variable `{name}`")))
            })
            .collect()
    }

    pub fn report(&self, options: &SolverOptions, request: &ReportRequest) -> Result<CovarianceReport> {
        CovarianceReport::build(&self.problem, &self.solution, &self.inverse(options)?, request)
    }
}

/// One row of a state-path confidence band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BandRow {
    pub time: f64,
    pub lower: f64,
    pub estimate: f64,
    pub upper: f64,
}

/// `estimate ± multiplier·Σ̂` at each of `indices`.
pub fn state_band(
    inverse: &HessianInverse<'_>,
    z_star: &DVector<f64>,
    indices: &[usize],
    times: &[f64],
    multiplier: f64,
) -> Result<Vec<BandRow>> {
    crate::error::check_dim("band times", indices.len(), times.len())?;
    let sd = inverse.standard_deviations(indices)?;
    Ok(indices
        .iter()
        .zip(times)
        .zip(sd.iter())
        .map(|((&i, &time), &s)| {
            let est = z_star[i];
            BandRow {
                time,
                lower: est - multiplier * s,
                estimate: est,
                upper: est + multiplier * s,
            }
        })
        .collect())
}

/// Fraction of rows whose band contains `truth`.
pub fn band_coverage(band: &[BandRow], truth: &[f64]) -> f64 {
    let hits = band
        .iter()
        .zip(truth)
        .filter(|(r, &t)| r.lower <= t && t <= r.upper)
        .count();
    hits as f64 / band.len().max(1) as f64
}

pub fn write_band_csv<W: std::io::Write>(mut out: W, band: &[BandRow]) -> Result<()> {
    use crate::io::fmt_f64;
    writeln!(out, "time,lower,estimate,upper")?;
    for r in band {
        writeln!(
            out,
            "{},{},{},{}",
            fmt_f64(r.time),
            fmt_f64(r.lower),
            fmt_f64(r.estimate),
            fmt_f64(r.upper)
        )?;
    }
    Ok(())
}

/// Indices of state `component` at every mesh node.
pub fn state_path_indices(problem: &OemProblem, component: usize) -> Vec<usize> {
    (0..problem.mesh().n_nodes())
        .map(|j| problem.state_index(j, component))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_data_gives_zero_velocity_guess() {
        let mesh = CollocationMesh::uniform(0.0, 2.0, 0.02)
            .unwrap()
            .with_measurements(&(0..=20).map(|k| k as f64 * 0.1).collect::<Vec<_>>())
            .unwrap();
        let g = initial_guess_oem(&[0.7; 21], &mesh, 1.0).unwrap();
        assert!(g.states.column(1).iter().all(|v| v.abs() < 1e-12));
        assert_eq!(g.theta, vec![1.0]);
    }

    #[test]
    fn sigma_guess_on_pure_noise() {
        let exp = OemExperiment {
            system: OdeSystem::VanDerPol { mu: 0.0 },
            x0: vec![0.0, 0.0],
            horizon: 19.9,
            ..OemExperiment::van_der_pol()
        };
        let truth = exp.true_trajectory().unwrap();
        let data = exp.generate_data(&truth, 3, 0).unwrap();
        assert_eq!(data.len(), 200);
        let g = initial_guess_oem(&data, &exp.mesh().unwrap(), 1.0).unwrap();
        assert!((g.sigma / 0.1 - 1.0).abs() < 0.1, "{}", g.sigma);
    }

    #[test]
    fn noise_free_vdp_guess() {
        let exp = OemExperiment::van_der_pol();
        let truth = exp.true_trajectory().unwrap();
        let mesh = exp.mesh().unwrap();
        let data: Vec<f64> = mesh.measurement_nodes().iter().map(|&j| truth.states[(j, 0)]).collect();
        let g = initial_guess_oem(&data, &mesh, exp.filter_cutoff).unwrap();
        assert!((g.theta[0] - 2.0).abs() < 0.4, "mu guess {}", g.theta[0]);
    }

    #[test]
    fn zero_multiplier_band_collapses() {
        let exp = OemExperiment {
            horizon: 4.0,
            ..OemExperiment::van_der_pol()
        };
        let truth = exp.true_trajectory().unwrap();
        let data = exp.generate_data(&truth, 1, 0).unwrap();
        let problem = exp.problem(data).unwrap();
        let z0 = exp.truth_vector(&problem, &truth).unwrap();
        let opts = SolverOptions::default();
        let fit = Fit::solve(problem, &z0, &opts).unwrap();
        assert!(fit.solution.converged());
        let inv = fit.inverse(&opts).unwrap();
        let idx = state_path_indices(&fit.problem, 1);
        let band = state_band(&inv, &fit.solution.z_star, &idx, fit.problem.mesh().node_times(), 0.0).unwrap();
        assert!(band.iter().all(|r| r.lower == r.estimate && r.upper == r.estimate));
    }
}
