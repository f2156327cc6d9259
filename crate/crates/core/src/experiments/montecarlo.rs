//! Repeated-realization study of estimate scatter versus Hessian-based
//! standard deviations.

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::oem::{Fit, OemExperiment};
use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::kkt::{SolveStatus, SolverOptions};

fn default_realizations() -> usize {
    500
}

fn default_targets() -> Vec<String> {
    ["mu", "sigma", "x1_0", "x2_0"].iter().map(|s| s.to_string()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloConfig {
    #[serde(default = "default_realizations")]
    pub realizations: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_targets")]
    pub targets: Vec<String>,
    pub experiment: OemExperiment,
    #[serde(default)]
    pub solver: SolverOptions,
}

impl MonteCarloConfig {
    pub fn van_der_pol() -> Self {
        Self {
            realizations: default_realizations(),
            master_seed: 0,
            targets: default_targets(),
            experiment: OemExperiment::van_der_pol(),
            solver: SolverOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.realizations == 0 {
            return Err(Error::Config("realizations must be at least 1".into()));
        }
        self.experiment.validate()?;
        self.solver.validate()
    }
}

/// Outcome of one realization.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RealizationRecord {
    pub index: usize,
    pub status: String,
    pub iterations: usize,
    /// Empty unless the realization converged with a usable covariance.
    pub estimates: Vec<f64>,
    pub std_devs: Vec<f64>,
}

impl RealizationRecord {
    pub fn ok(&self) -> bool {
        !self.estimates.is_empty()
    }
}

/// Aggregates for one target over the usable realizations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TargetSummary {
    pub name: String,
    pub truth: f64,
    pub mean_estimate: f64,
    /// Sample standard deviation of the estimate; NaN with one realization.
    pub sample_std: f64,
    pub mean_sigma_hat: f64,
    /// NaN with one realization.
    pub std_sigma_hat: f64,
    /// Fraction with `|estimate − truth| ≤ Σ̂`.
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloReport {
    pub realizations: usize,
    pub converged: usize,
    pub convergence_rate: f64,
    pub targets: Vec<TargetSummary>,
    pub records: Vec<RealizationRecord>,
}

fn run_one(config: &MonteCarloConfig, truth: &crate::models::MeshTrajectory, index: usize) -> Result<RealizationRecord> {
    let exp = &config.experiment;
    let data = exp.generate_data(truth, config.master_seed, index as u64)?;
    let problem = exp.problem(data)?;
    let z0 = exp.initial_point(&problem)?;
    let fit = Fit::solve(problem, &z0, &config.solver)?;
    let mut rec = RealizationRecord {
        index,
        status: status_name(fit.solution.status).into(),
        iterations: fit.solution.iterations,
        estimates: Vec::new(),
        std_devs: Vec::new(),
    };
    if fit.solution.converged() {
        let idx = fit.label_indices(&config.targets)?;
        match fit.inverse(&config.solver).and_then(|inv| inv.standard_deviations(&idx)) {
            Ok(sd) => {
                rec.estimates = idx.iter().map(|&i| fit.solution.z_star[i]).collect();
                rec.std_devs = sd.iter().copied().collect();
            }
            Err(e) => rec.status = format!("covariance_failure: {e}"),
        }
    }
    Ok(rec)
}

fn status_name(s: SolveStatus) -> &'static str {
    match s {
        SolveStatus::Converged => "converged",
        SolveStatus::MaxIter => "max_iter",
        SolveStatus::SingularKkt => "singular_kkt",
        SolveStatus::LineSearchFailure => "line_search_failure",
    }
}

/// Runs every realization on `workers` threads (all cores when `None`).
pub fn run_monte_carlo(config: &MonteCarloConfig, workers: Option<usize>) -> Result<MonteCarloReport> {
    config.validate()?;
    let truth = config.experiment.true_trajectory()?;
    let probe = config.experiment.problem(config.experiment.generate_data(&truth, config.master_seed, 0)?)?;
    let probe_fit_labels = crate::kkt::ConstrainedProblem::variable_labels(&probe);
    let truth_vec = config.experiment.truth_vector(&probe, &truth)?;
    let truth_values: Vec<f64> = config
        .targets
        .iter()
        .map(|name| {
            probe_fit_labels
                .iter()
                .position(|l| l == name)
                .map(|i| truth_vec[i])
                .ok_or_else(|| Error::Config(format!("unknown target `{name}`")))
        })
        .collect::<Result<_>>()?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let records: Vec<RealizationRecord> = pool.install(|| {
        (0..config.realizations)
            .into_par_iter()
            .map(|r| {
                run_one(config, &truth, r).unwrap_or_else(|e| RealizationRecord {
                    index: r,
                    status: format!("error: {e}"),
                    iterations: 0,
                    estimates: Vec::new(),
                    std_devs: Vec::new(),
                })
            })
            .collect()
    });

    for r in records.iter().filter(|r| !r.ok()) {
        warn!("realization {} excluded: {}", r.index, r.status);
    }
    let report = aggregate(&config.targets, &truth_values, records);
    info!(
        "{} of {} realizations usable",
        report.converged, report.realizations
    );
    Ok(report)
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let std = if v.len() > 1 {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        f64::NAN
    };
    (mean, std)
}

/// Deterministic reduction over records in realization order.
pub fn aggregate(names: &[String], truth: &[f64], records: Vec<RealizationRecord>) -> MonteCarloReport {
    let ok: Vec<&RealizationRecord> = records.iter().filter(|r| r.ok()).collect();
    let targets = names
        .iter()
        .enumerate()
        .map(|(t, name)| {
            let est: Vec<f64> = ok.iter().map(|r| r.estimates[t]).collect();
            let sd: Vec<f64> = ok.iter().map(|r| r.std_devs[t]).collect();
            let (mean_estimate, sample_std) = mean_std(&est);
            let (mean_sigma_hat, std_sigma_hat) = mean_std(&sd);
            let hits = est.iter().zip(&sd).filter(|(e, s)| (*e - truth[t]).abs() <= **s).count();
            TargetSummary {
                name: name.clone(),
                truth: truth[t],
                mean_estimate,
                sample_std,
                mean_sigma_hat,
                std_sigma_hat,
                coverage: hits as f64 / ok.len().max(1) as f64,
            }
        })
        .collect();
    MonteCarloReport {
        realizations: records.len(),
        converged: ok.len(),
        convergence_rate: ok.len() as f64 / records.len().max(1) as f64,
        targets,
        records,
    }
}

impl MonteCarloReport {
    /// `name,sample_std,mean_sigma_hat,std_sigma_hat,coverage` per target.
    pub fn write_table_csv<W: std::io::Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "name,sample_std,mean_sigma_hat,std_sigma_hat,coverage")?;
        for t in &self.targets {
            writeln!(
                out,
                "{},{},{},{},{}",
                t.name,
                fmt_f64(t.sample_std),
                fmt_f64(t.mean_sigma_hat),
                fmt_f64(t.std_sigma_hat),
                fmt_f64(t.coverage)
            )?;
        }
        Ok(())
    }

    /// One row per realization: index, status, then estimate and Σ̂ per target.
    pub fn write_records_csv<W: std::io::Write>(&self, mut out: W) -> Result<()> {
        let mut header = vec!["index".to_string(), "status".to_string()];
        for t in &self.targets {
            header.push(t.name.clone());
            header.push(format!("{}_std", t.name));
        }
        writeln!(out, "{}", header.join(","))?;
        for r in &self.records {
            let mut row = vec![r.index.to_string(), r.status.replace(',', ";")];
            for t in 0..self.targets.len() {
                if r.ok() {
                    row.push(fmt_f64(r.estimates[t]));
                    row.push(fmt_f64(r.std_devs[t]));
                } else {
                    row.push("NaN".into());
                    row.push("NaN".into());
                }
            }
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&serde_json::json!({
            "realizations": self.realizations,
            "converged": self.converged,
            "convergence_rate": self.convergence_rate,
            "targets": self.targets.iter().map(|t| serde_json::json!({
                "name": t.name,
                "truth": t.truth,
                "mean_estimate": finite_or_null(t.mean_estimate),
                "sample_std": finite_or_null(t.sample_std),
                "mean_sigma_hat": finite_or_null(t.mean_sigma_hat),
                "std_sigma_hat": finite_or_null(t.std_sigma_hat),
                "coverage": t.coverage,
            })).collect::<Vec<_>>(),
            "records": self.records,
        }))?)
    }
}

fn finite_or_null(v: f64) -> serde_json::Value {
    if v.is_finite() {
        serde_json::json!(v)
    } else {
        serde_json::Value::Null
    }
}
