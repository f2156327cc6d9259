//! Hybrid Gibbs sampler: Metropolis-within-Gibbs coordinate sweeps scaled by
//! an approximate covariance, with a full random-walk step every few sweeps.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::io::fmt_f64;
use crate::kkt::ConstrainedProblem;
use crate::seed::{purpose, stream};
use crate::transcribe::JointMapProblem;

/// Unnormalized log density over the independent variables.
pub trait LogTarget: Sync {
    fn dim(&self) -> usize;

    /// `−∞` outside the support.
    fn log_target(&self, p: &DVector<f64>) -> f64;
}

/// Reduced merit of the joint MAP problem: dependents are solved forward
/// from `p`, so every evaluated point is feasible.
#[derive(Debug, Clone, Copy)]
pub struct JointMapTarget<'a> {
    problem: &'a JointMapProblem,
}

impl<'a> JointMapTarget<'a> {
    pub fn new(problem: &'a JointMapProblem) -> Self {
        Self { problem }
    }
}

impl LogTarget for JointMapTarget<'_> {
    fn dim(&self) -> usize {
        self.problem.n_independent()
    }

    fn log_target(&self, p: &DVector<f64>) -> f64 {
        if p[self.problem.sigma_y_index()] <= 0.0 {
            return f64::NEG_INFINITY;
        }
        match self.problem.eliminate(p) {
            Ok(z) => {
                let v = self.problem.merit(&z);
                if v.is_finite() {
                    v
                } else {
                    f64::NEG_INFINITY
                }
            }
            Err(_) => f64::NEG_INFINITY,
        }
    }
}

/// `−½ (p − m)ᵀ R⁻¹ (p − m)`.
#[derive(Debug, Clone)]
pub struct GaussianTarget {
    mean: DVector<f64>,
    precision: DMatrix<f64>,
}

impl GaussianTarget {
    pub fn new(mean: DVector<f64>, covariance: &DMatrix<f64>) -> Result<Self> {
        check_dim("mean", covariance.nrows(), mean.len())?;
        let chol = covariance
            .clone()
            .cholesky()
            .ok_or_else(|| Error::InvalidArgument("covariance is not positive definite".into()))?;
        Ok(Self {
            mean,
            precision: chol.inverse(),
        })
    }
}

impl LogTarget for GaussianTarget {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn log_target(&self, p: &DVector<f64>) -> f64 {
        let d = p - &self.mean;
        -0.5 * d.dot(&(&self.precision * &d))
    }
}

/// A closure as a target.
pub struct FnTarget<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&DVector<f64>) -> f64 + Sync> FnTarget<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&DVector<f64>) -> f64 + Sync> LogTarget for FnTarget<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn log_target(&self, p: &DVector<f64>) -> f64 {
        (self.f)(p)
    }
}

/// Accepts with probability `min(1, exp(log_cand − log_cur))`.
pub fn metropolis_accept<R: Rng + ?Sized>(log_cand: f64, log_cur: f64, rng: &mut R) -> bool {
    if log_cand.is_nan() || log_cand == f64::NEG_INFINITY {
        return false;
    }
    let diff = log_cand - log_cur;
    if diff >= 0.0 {
        return true;
    }
    rng.random::<f64>() < diff.exp()
}

fn default_cycles() -> usize {
    15
}
fn default_coordinate_scale() -> f64 {
    3.2
}
fn default_full_scale() -> f64 {
    1.8
}
fn default_burn_in() -> f64 {
    0.2
}
fn default_thinning() -> usize {
    1
}
fn default_diag_load() -> f64 {
    1e-10
}
fn default_chains() -> usize {
    1
}

/// Tunables of the sampler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSettings {
    /// Recorded samples, one per Gibbs cycle.
    pub chain_length: usize,
    #[serde(default = "default_cycles")]
    pub gibbs_cycles_per_full_step: usize,
    #[serde(default = "default_coordinate_scale")]
    pub coordinate_scale: f64,
    #[serde(default = "default_full_scale")]
    pub full_step_scale: f64,
    /// Set by the caller; configs never carry it.
    #[serde(skip_deserializing)]
    pub seed: u64,
    /// Leading fraction of samples dropped from summaries.
    #[serde(default = "default_burn_in")]
    pub burn_in: f64,
    #[serde(default = "default_thinning")]
    pub thinning: usize,
    #[serde(default = "default_diag_load")]
    pub diag_load: f64,
    #[serde(default = "default_chains")]
    pub chains: usize,
}

impl ChainSettings {
    pub fn new(chain_length: usize, seed: u64) -> Self {
        Self {
            chain_length,
            gibbs_cycles_per_full_step: default_cycles(),
            coordinate_scale: default_coordinate_scale(),
            full_step_scale: default_full_scale(),
            seed,
            burn_in: default_burn_in(),
            thinning: default_thinning(),
            diag_load: default_diag_load(),
            chains: default_chains(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.chain_length == 0 {
            return bad("chain_length must be at least 1");
        }
        if self.gibbs_cycles_per_full_step == 0 {
            return bad("gibbs_cycles_per_full_step must be at least 1");
        }
        if !(self.coordinate_scale > 0.0 && self.full_step_scale > 0.0) {
            return bad("scales must be positive");
        }
        if !(0.0..1.0).contains(&self.burn_in) {
            return bad("burn_in must lie in [0, 1)");
        }
        if self.thinning == 0 || self.chains == 0 {
            return bad("thinning and chains must be at least 1");
        }
        if !(self.diag_load >= 0.0) {
            return bad("diag_load must be nonnegative");
        }
        Ok(())
    }
}

/// Settings plus the starting point and proposal covariance `R`.
#[derive(Debug, Clone)]
pub struct ChainConfig {
    pub settings: ChainSettings,
    pub initial_point: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

/// Validated sampler with the factor of `R`.
#[derive(Debug, Clone)]
pub struct Sampler {
    settings: ChainSettings,
    coord_std: Vec<f64>,
    chol: DMatrix<f64>,
}

impl Sampler {
    pub fn new(settings: ChainSettings, covariance: &DMatrix<f64>) -> Result<Self> {
        settings.validate()?;
        let n = covariance.nrows();
        if covariance.ncols() != n || n == 0 {
            return Err(Error::Config("covariance must be square and nonempty".into()));
        }
        let asym = (covariance - covariance.transpose()).amax();
        if asym > 1e-10 * covariance.amax().max(f64::MIN_POSITIVE) {
            return Err(Error::Config("covariance is not symmetric".into()));
        }
        let mut loaded = covariance.clone();
        for i in 0..n {
            loaded[(i, i)] += settings.diag_load;
        }
        let chol = loaded
            .cholesky()
            .ok_or_else(|| Error::Config("covariance is not positive definite".into()))?
            .unpack();
        let coord_std = (0..n).map(|i| covariance[(i, i)].sqrt()).collect();
        Ok(Self {
            settings,
            coord_std,
            chol,
        })
    }

    pub fn dim(&self) -> usize {
        self.coord_std.len()
    }

    pub fn settings(&self) -> &ChainSettings {
        &self.settings
    }

    /// `p + L u`, `u` standard normal.
    pub fn perturb(&self, p: &DVector<f64>, rng: &mut ChaCha8Rng) -> DVector<f64> {
        let u = DVector::from_fn(self.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
        p + &self.chol * u
    }

    /// One sweep in ascending coordinate order.
    pub fn gibbs_cycle<T: LogTarget + ?Sized>(&self, state: &mut ChainState, target: &T, rng: &mut ChaCha8Rng) {
        for i in 0..self.dim() {
            let eps: f64 = rng.sample(StandardNormal);
            let old = state.p[i];
            state.p[i] = old + self.settings.coordinate_scale * self.coord_std[i] * eps;
            let cand = target.log_target(&state.p);
            state.coord_trials[i] += 1;
            if metropolis_accept(cand, state.log_target, rng) {
                state.log_target = cand;
                state.coord_accepts[i] += 1;
            } else {
                state.p[i] = old;
            }
        }
    }

    /// Joint proposal `p + (s/√n) L u`.
    pub fn full_rwm_step<T: LogTarget + ?Sized>(&self, state: &mut ChainState, target: &T, rng: &mut ChaCha8Rng) {
        let n = self.dim();
        let u = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let cand_p = &state.p + (&self.chol * u) * (self.settings.full_step_scale / (n as f64).sqrt());
        let cand = target.log_target(&cand_p);
        state.full_trials += 1;
        if metropolis_accept(cand, state.log_target, rng) {
            state.p = cand_p;
            state.log_target = cand;
            state.full_accepts += 1;
        }
    }
}

/// Current point and acceptance counters.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub p: DVector<f64>,
    pub log_target: f64,
    pub coord_accepts: Vec<u64>,
    pub coord_trials: Vec<u64>,
    pub full_accepts: u64,
    pub full_trials: u64,
}

impl ChainState {
    pub fn new<T: LogTarget + ?Sized>(p: DVector<f64>, target: &T) -> Result<Self> {
        check_dim("initial point", target.dim(), p.len())?;
        let log_target = target.log_target(&p);
        if !log_target.is_finite() {
            return Err(Error::InvalidArgument("initial point has no finite log target".into()));
        }
        let n = p.len();
        Ok(Self {
            p,
            log_target,
            coord_accepts: vec![0; n],
            coord_trials: vec![0; n],
            full_accepts: 0,
            full_trials: 0,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainResult {
    /// `chain_length × n`, burn-in included.
    pub samples: DMatrix<f64>,
    pub log_targets: Vec<f64>,
    pub coordinate_acceptance: Vec<f64>,
    pub full_acceptance: f64,
    pub overall_acceptance: f64,
    pub burn_in: usize,
    pub thinning: usize,
    pub seed: u64,
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        f64::NAN
    } else {
        a as f64 / b as f64
    }
}

/// Runs one chain from `config.initial_point` with the stream of `chain`.
pub fn run_chain<T: LogTarget + ?Sized>(config: &ChainConfig, target: &T, chain: u64) -> Result<ChainResult> {
    let sampler = Sampler::new(config.settings.clone(), &config.covariance)?;
    run_sampler(&sampler, config.initial_point.clone(), target, chain)
}

pub fn run_sampler<T: LogTarget + ?Sized>(
    sampler: &Sampler,
    start: DVector<f64>,
    target: &T,
    chain: u64,
) -> Result<ChainResult> {
    let s = sampler.settings();
    let mut rng = stream(s.seed, purpose::CHAIN, chain);
    let mut state = ChainState::new(start, target)?;
    let n = sampler.dim();
    let mut samples = DMatrix::zeros(s.chain_length, n);
    let mut log_targets = Vec::with_capacity(s.chain_length);
    for j in 0..s.chain_length {
        sampler.gibbs_cycle(&mut state, target, &mut rng);
        if (j + 1) % s.gibbs_cycles_per_full_step == 0 {
            sampler.full_rwm_step(&mut state, target, &mut rng);
        }
        samples.row_mut(j).copy_from(&state.p.transpose());
        log_targets.push(state.log_target);
    }
    let acc: u64 = state.coord_accepts.iter().sum::<u64>() + state.full_accepts;
    let trials: u64 = state.coord_trials.iter().sum::<u64>() + state.full_trials;
    Ok(ChainResult {
        samples,
        log_targets,
        coordinate_acceptance: state
            .coord_accepts
            .iter()
            .zip(&state.coord_trials)
            .map(|(&a, &b)| ratio(a, b))
            .collect(),
        full_acceptance: ratio(state.full_accepts, state.full_trials),
        overall_acceptance: ratio(acc, trials),
        burn_in: (s.burn_in * s.chain_length as f64).floor() as usize,
        thinning: s.thinning,
        seed: s.seed,
    })
}

/// Starting point `mode + L u` drawn from the `CHAIN_START` stream.
pub fn perturbed_mode(sampler: &Sampler, mode: &DVector<f64>, chain: u64) -> DVector<f64> {
    let mut rng = stream(sampler.settings().seed, purpose::CHAIN_START, chain);
    sampler.perturb(mode, &mut rng)
}

/// `settings.chains` chains from perturbations of `mode`, run in parallel.
pub fn run_chains<T: LogTarget + ?Sized>(sampler: &Sampler, mode: &DVector<f64>, target: &T) -> Result<Vec<ChainResult>> {
    (0..sampler.settings().chains as u64)
        .into_par_iter()
        .map(|c| {
            let mut start = perturbed_mode(sampler, mode, c);
            // fall back to the mode when the draw leaves the support
            if !target.log_target(&start).is_finite() {
                start = mode.clone();
            }
            run_sampler(sampler, start, target, c)
        })
        .collect()
}

impl ChainResult {
    /// Rows kept after burn-in and thinning.
    pub fn retained(&self) -> Vec<usize> {
        (self.burn_in..self.samples.nrows()).step_by(self.thinning).collect()
    }

    pub fn mean(&self) -> DVector<f64> {
        let rows = self.retained();
        let mut m = DVector::zeros(self.samples.ncols());
        for &r in &rows {
            m += self.samples.row(r).transpose();
        }
        m / rows.len().max(1) as f64
    }

    /// Sample covariance over the retained rows, `n − 1` normalized.
    pub fn covariance(&self) -> DMatrix<f64> {
        let rows = self.retained();
        let m = self.mean();
        let n = self.samples.ncols();
        let mut c = DMatrix::zeros(n, n);
        for &r in &rows {
            let d = self.samples.row(r).transpose() - &m;
            c += &d * d.transpose();
        }
        c / (rows.len().max(2) - 1) as f64
    }

    /// Retained rows: sample index, coordinates, log target.
    pub fn write_csv<W: Write>(&self, mut out: W, labels: &[String]) -> Result<()> {
        writeln!(out, "sample,{},log_target", labels.join(","))?;
        for r in self.retained() {
            let mut row = vec![r.to_string()];
            row.extend(self.samples.row(r).iter().map(|&v| fmt_f64(v)));
            row.push(fmt_f64(self.log_targets[r]));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn summary_json(&self, labels: &[String]) -> serde_json::Value {
        let num = |v: f64| {
            if v.is_finite() {
                serde_json::json!(v)
            } else {
                serde_json::Value::Null
            }
        };
        let mean = self.mean();
        serde_json::json!({
            "seed": self.seed,
            "chain_length": self.samples.nrows(),
            "burn_in": self.burn_in,
            "thinning": self.thinning,
            "overall_acceptance": num(self.overall_acceptance),
            "full_step_acceptance": num(self.full_acceptance),
            "coordinate_acceptance": labels.iter().zip(&self.coordinate_acceptance)
                .map(|(l, &a)| serde_json::json!({"name": l, "rate": num(a)})).collect::<Vec<_>>(),
            "posterior_mean": labels.iter().zip(mean.iter())
                .map(|(l, &m)| serde_json::json!({"name": l, "mean": num(m)})).collect::<Vec<_>>(),
        })
    }
}
