//! Subcommand bodies. Each returns `Ok(true)` when every artifact was
//! produced and every solve converged.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use hesscov::covariance::{CovarianceReport, ReportRequest};
use hesscov::experiments::{
    run_monte_carlo, state_band, state_path_indices, write_band_csv, Fit, MonteCarloConfig, OemExperiment,
};
use hesscov::io::{fmt_f64, read_time_series_file, write_time_series, TimeSeries};
use hesscov::kkt::{check_derivatives, ConstrainedProblem, SolverOptions};
use hesscov::mcmc::{run_chains, GaussianTarget, JointMapTarget, LogTarget, Sampler};
use hesscov::seed::{derive_seed, purpose, stream};
use log::info;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde_json::json;

use crate::config::{RunConfig, Study};
use crate::manifest::Run;
use crate::Usage;

/// Inputs shared by every subcommand.
pub struct Context_ {
    pub config: RunConfig,
    pub config_path: PathBuf,
    pub data: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub workers: Option<usize>,
    pub timings: bool,
    pub report_targets: Option<Vec<String>>,
    pub tol: f64,
}

impl Context_ {
    fn run(&self, command: &'static str) -> Result<Run> {
        let mut run = Run::new(command, &self.out_dir, self.timings)?;
        let mut resolved = self.config.clone();
        resolved.seed = self.seed;
        if let Some(c) = resolved.chain.as_mut() {
            c.seed = self.seed;
        }
        run.set_config(serde_json::to_value(&resolved)?);
        run.set_input("config", &self.config_path);
        if let Some(d) = &self.data {
            run.set_input("data", d);
        }
        run.set_seed("master", self.seed);
        Ok(run)
    }

    fn data_path(&self) -> Result<&Path> {
        self.data
            .as_deref()
            .ok_or_else(|| anyhow!(Usage("this command needs --data".into())))
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        Ok(rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers.unwrap_or(0))
            .build()?)
    }
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> hesscov::Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn path_csv(times: &[f64], labels: &[String], states: &DMatrix<f64>, rows: &[usize]) -> Vec<u8> {
    let mut out = format!("time,{}\n", labels.join(","));
    for (&t, &r) in times.iter().zip(rows) {
        let vals: Vec<String> = states.row(r).iter().map(|&v| fmt_f64(v)).collect();
        out.push_str(&format!("{},{}\n", fmt_f64(t), vals.join(",")));
    }
    out.into_bytes()
}

pub fn generate(ctx: &Context_) -> Result<bool> {
    let mut run = ctx.run("generate")?;
    match ctx.config.study()? {
        Study::Oem(exp) => {
            let truth = exp.true_trajectory()?;
            let values = exp.generate_data(&truth, ctx.seed, 0)?;
            run.set_seed("measurement_noise", derive_seed(ctx.seed, purpose::MEASUREMENT_NOISE, 0));
            let ts = TimeSeries {
                time: exp.measurement_times(),
                values,
            };
            run.write("data.csv", &csv_bytes(|b| write_time_series(b, &ts))?)?;
            let rows: Vec<usize> = (0..truth.len()).collect();
            run.write("truth_path.csv", &path_csv(&truth.times, &truth.state_labels, &truth.states, &rows))?;
            run.write_json(
                "truth.json",
                &json!({
                    "system": exp.system,
                    "theta": exp.system.theta(),
                    "sigma": exp.sigma,
                    "x0": exp.x0,
                    "observed": exp.observed,
                }),
            )?;
        }
        Study::Duffing(exp) => {
            let data = exp.generate(ctx.seed)?;
            run.set_seed("process_noise", derive_seed(ctx.seed, purpose::PROCESS_NOISE, 0));
            run.set_seed("measurement_noise", derive_seed(ctx.seed, purpose::MEASUREMENT_NOISE, 0));
            let ts = TimeSeries {
                time: data.times.clone(),
                values: data.values.clone(),
            };
            run.write("data.csv", &csv_bytes(|b| write_time_series(b, &ts))?)?;
            let every = (exp.model.ts / exp.sim_step).round() as usize;
            let rows: Vec<usize> = (0..data.path.len()).step_by(every).collect();
            let labels = vec!["x".to_string(), "z".to_string()];
            run.write("truth_path.csv", &path_csv(&data.times, &labels, &data.path.states, &rows))?;
            let m = &exp.model;
            run.write_json(
                "truth.json",
                &json!({
                    "a": m.a, "b": m.b, "d": m.d, "sigma_y": m.sigma_y,
                    "gamma": m.gamma, "sigma_d": m.sigma_d, "x0": m.x0, "z0": m.z0,
                }),
            )?;
        }
    }
    run.finish("ok")?;
    Ok(true)
}

fn read_data(ctx: &Context_, expected: &[f64]) -> Result<Vec<f64>> {
    let path = ctx.data_path()?;
    let ts = read_time_series_file(path).with_context(|| format!("cannot load data {}", path.display()))?;
    if ts.len() != expected.len() {
        bail!(Usage(format!(
            "data has {} rows but the config samples {} instants",
            ts.len(),
            expected.len()
        )));
    }
    for (k, (&t, &e)) in ts.time.iter().zip(expected).enumerate() {
        if (t - e).abs() > 1e-9 * e.abs().max(1.0) {
            bail!(Usage(format!("data row {} has time {t}, expected {e}", k + 2)));
        }
    }
    Ok(ts.values)
}

fn indices_or_usage<P: ConstrainedProblem>(fit: &Fit<P>, names: &[String]) -> Result<Vec<usize>> {
    fit.label_indices(names).map_err(|e| anyhow!(Usage(e.to_string())))
}

/// Solution, covariance report, and optional band for a finished solve.
fn write_fit<P: ConstrainedProblem>(
    ctx: &Context_,
    run: &mut Run,
    fit: &Fit<P>,
    default_targets: Vec<String>,
    band: Option<(Vec<usize>, &[f64])>,
) -> Result<bool> {
    let labels = fit.problem.variable_labels();
    run.write_json("solution.json", &fit.solution.to_json(&labels))?;
    if !fit.solution.converged() {
        log::error!("solver stopped with status {:?}", fit.solution.status);
        return Ok(false);
    }
    let names = ctx
        .report_targets
        .clone()
        .or_else(|| ctx.config.report.targets.clone())
        .unwrap_or(default_targets);
    let request = ReportRequest {
        targets: indices_or_usage(fit, &names)?,
        full_columns: ctx.config.report.full_columns,
        correlations: ctx.config.report.correlations,
    };
    let opts = &ctx.config.solver;
    let inverse = fit.inverse(opts)?;
    let report = CovarianceReport::build(&fit.problem, &fit.solution, &inverse, &request)?;
    run.write("covariance.csv", &csv_bytes(|b| report.write_csv(b))?)?;
    let mut text = report.to_json()?;
    text.push('\n');
    run.write("covariance.json", text.as_bytes())?;
    if request.correlations {
        run.write("correlations.csv", &csv_bytes(|b| report.write_correlation_csv(b))?)?;
    }
    if let (Some((idx, times)), Some(cfg)) = (band, &ctx.config.report.band) {
        let rows = state_band(&inverse, &fit.solution.z_star, &idx, times, cfg.multiplier)?;
        run.write("band.csv", &csv_bytes(|b| write_band_csv(b, &rows))?)?;
    }
    Ok(true)
}

fn band_component(ctx: &Context_, n_states: usize) -> Result<Option<usize>> {
    match &ctx.config.report.band {
        Some(b) if b.component >= n_states => {
            bail!(Usage(format!("band component {} out of range", b.component)))
        }
        Some(b) => Ok(Some(b.component)),
        None => Ok(None),
    }
}

fn solve_oem(exp: &OemExperiment, data: Vec<f64>, solver: &SolverOptions) -> Result<Fit<hesscov::transcribe::OemProblem>> {
    let problem = exp.problem(data)?;
    let z0 = exp.initial_point(&problem)?;
    Ok(Fit::solve(problem, &z0, solver)?)
}

fn solve_duffing(
    exp: &hesscov::experiments::DuffingExperiment,
    data: Vec<f64>,
    solver: &SolverOptions,
) -> Result<Fit<hesscov::transcribe::JointMapProblem>> {
    let problem = exp.problem(data)?;
    let z0 = exp.initial_point(&problem)?;
    Ok(Fit::solve(problem, &z0, solver)?)
}

fn log_solve<P>(fit: &Fit<P>) {
    let s = &fit.solution;
    info!(
        "solver: {:?} after {} iterations, kkt residual {:e}, constraint violation {:e}",
        s.status, s.iterations, s.kkt_residual, s.constraint_violation
    );
}

pub fn fit(ctx: &Context_) -> Result<bool> {
    let mut run = ctx.run("fit")?;
    let ok = match ctx.config.study()? {
        Study::Oem(exp) => {
            let data = read_data(ctx, &exp.measurement_times())?;
            let comp = band_component(ctx, exp.x0.len())?;
            let fit = solve_oem(exp, data, &ctx.config.solver)?;
            log_solve(&fit);
            let defaults = fit.problem.variable_labels()[..fit.problem.n_independent()].to_vec();
            let times = fit.problem.mesh().node_times().to_vec();
            let band = comp.map(|c| (state_path_indices(&fit.problem, c), times.as_slice()));
            write_fit(ctx, &mut run, &fit, defaults, band)?
        }
        Study::Duffing(exp) => {
            let data = read_data(ctx, &exp.measurement_times())?;
            let comp = band_component(ctx, 2)?;
            let fit = solve_duffing(exp, data, &ctx.config.solver)?;
            log_solve(&fit);
            let defaults = ["a", "b", "d", "sigma_y"].map(String::from).to_vec();
            let p = &fit.problem;
            let times = p.mesh().node_times().to_vec();
            let band = comp.map(|c| {
                let idx = (0..p.mesh().n_nodes())
                    .map(|j| if c == 0 { p.x_index(j) } else { p.z_index(j) })
                    .collect();
                (idx, times.as_slice())
            });
            write_fit(ctx, &mut run, &fit, defaults, band)?
        }
    };
    run.finish(if ok { "ok" } else { "not_converged" })?;
    Ok(ok)
}

pub fn montecarlo(ctx: &Context_) -> Result<bool> {
    let exp = match ctx.config.study()? {
        Study::Oem(e) => e.clone(),
        Study::Duffing(_) => bail!(Usage("montecarlo runs output-error [experiment] studies only".into())),
    };
    let section = ctx
        .config
        .montecarlo
        .clone()
        .ok_or_else(|| anyhow!(Usage("config needs a [montecarlo] section".into())))?;
    let mut cfg = MonteCarloConfig {
        realizations: section.realizations,
        master_seed: ctx.seed,
        experiment: exp,
        solver: ctx.config.solver.clone(),
        ..MonteCarloConfig::van_der_pol()
    };
    if let Some(t) = section.targets {
        cfg.targets = t;
    }
    let mut run = ctx.run("montecarlo")?;
    let report = run_monte_carlo(&cfg, ctx.workers)?;
    run.write("table.csv", &csv_bytes(|b| report.write_table_csv(b))?)?;
    run.write("records.csv", &csv_bytes(|b| report.write_records_csv(b))?)?;
    let mut text = report.to_json()?;
    text.push('\n');
    run.write("report.json", text.as_bytes())?;
    run.finish("ok")?;
    Ok(true)
}

pub fn mcmc(ctx: &Context_) -> Result<bool> {
    let mut settings = ctx
        .config
        .chain
        .clone()
        .ok_or_else(|| anyhow!(Usage("config needs a [chain] section".into())))?;
    settings.seed = ctx.seed;
    let mut run = ctx.run("mcmc")?;
    let pool = ctx.pool()?;

    let results = if let Some(g) = &ctx.config.gaussian {
        let n = g.mean.len();
        if g.covariance.len() != n || g.covariance.iter().any(|r| r.len() != n) {
            bail!(Usage("gaussian covariance must be square and match the mean".into()));
        }
        let cov = DMatrix::from_fn(n, n, |i, j| g.covariance[i][j]);
        let mean = DVector::from_vec(g.mean.clone());
        let target = GaussianTarget::new(mean.clone(), &cov)?;
        let sampler = Sampler::new(settings, &cov)?;
        let labels: Vec<String> = (0..n).map(|i| format!("p{i}")).collect();
        let chains = pool.install(|| run_chains(&sampler, &mean, &target))?;
        (chains, labels)
    } else {
        let exp = match ctx.config.study()? {
            Study::Duffing(e) => e,
            Study::Oem(_) => bail!(Usage("mcmc samples [duffing] or [gaussian] targets".into())),
        };
        let data = read_data(ctx, &exp.measurement_times())?;
        let fit = solve_duffing(exp, data, &ctx.config.solver)?;
        log_solve(&fit);
        let labels = fit.problem.variable_labels();
        run.write_json("solution.json", &fit.solution.to_json(&labels))?;
        if !fit.solution.converged() {
            run.finish("not_converged")?;
            return Ok(false);
        }
        let inverse = fit.inverse(&ctx.config.solver)?;
        let cov = -inverse.reduced_hessian_inverse()?;
        let n = fit.problem.n_independent();
        let mode = fit.solution.z_star.rows(0, n).into_owned();
        let target = JointMapTarget::new(&fit.problem);
        let sampler = Sampler::new(settings, &cov)?;
        info!("mode log target {}", target.log_target(&mode));
        let chains = pool.install(|| run_chains(&sampler, &mode, &target))?;
        (chains, labels[..n].to_vec())
    };
    let (chains, labels) = results;
    let mut summaries = Vec::new();
    for (c, chain) in chains.iter().enumerate() {
        run.set_seed(&format!("chain_{c}"), derive_seed(ctx.seed, purpose::CHAIN, c as u64));
        info!("chain {c}: overall acceptance {:.4}", chain.overall_acceptance);
        run.write(&format!("chain_{c}.csv"), &csv_bytes(|b| chain.write_csv(b, &labels))?)?;
        summaries.push(chain.summary_json(&labels));
    }
    run.write_json("chain_summary.json", &json!({ "chains": summaries }))?;
    run.finish("ok")?;
    Ok(true)
}

pub fn check_derivs(ctx: &Context_) -> Result<bool> {
    let mut run = ctx.run("check-derivs")?;
    let report = match ctx.config.study()? {
        Study::Oem(exp) => {
            let data = match ctx.data {
                Some(_) => read_data(ctx, &exp.measurement_times())?,
                None => exp.generate_data(&exp.true_trajectory()?, ctx.seed, 0)?,
            };
            let problem = exp.problem(data)?;
            let z0 = exp.initial_point(&problem)?;
            probe(ctx, &problem, z0)?
        }
        Study::Duffing(exp) => {
            let data = match ctx.data {
                Some(_) => read_data(ctx, &exp.measurement_times())?,
                None => exp.generate(ctx.seed)?.values,
            };
            let problem = exp.problem(data)?;
            let z0 = exp.initial_point(&problem)?;
            probe(ctx, &problem, z0)?
        }
    };
    let passes = report.passes(ctx.tol);
    run.set_seed("probe", derive_seed(ctx.seed, PROBE, 0));
    run.write_json(
        "derivatives.json",
        &json!({
            "tolerance": ctx.tol,
            "passes": passes,
            "max_relative_error": report.max_relative_error(),
            "report": report,
        }),
    )?;
    run.finish(if passes { "ok" } else { "derivative_mismatch" })?;
    Ok(passes)
}

/// Seed purpose of the derivative-check probe point.
const PROBE: u64 = 5;

/// Derivative check at a seed-controlled perturbation of `z0`; positive
/// variables are left alone.
fn probe<P: ConstrainedProblem>(ctx: &Context_, problem: &P, z0: DVector<f64>) -> Result<hesscov::kkt::DerivativeReport> {
    let mut rng = stream(ctx.seed, PROBE, 0);
    let fixed = problem.positive_variables();
    let mut z = z0;
    for i in 0..z.len() {
        let e: f64 = rng.sample(StandardNormal);
        if !fixed.contains(&i) {
            z[i] += 0.01 * (1.0 + z[i].abs()) * e;
        }
    }
    let lambda = DVector::from_fn(problem.n_dependent(), |_, _| rng.sample::<f64, _>(StandardNormal));
    Ok(check_derivatives(problem, &z, &lambda, 1e-6)?)
}
