//! End-to-end acceptance run: one PASS/FAIL line per criterion.
//!
//! Failures are reported but only fail the process when
//! `HESSCOV_ACCEPTANCE_STRICT` is set.

#[path = "../../core/tests/common/mod.rs"]
#[allow(dead_code)]
mod common;

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use common::{rel_frobenius, RandomCoefs};
use hesscov::covariance::HessianInverse;
use hesscov::experiments::{
    band_coverage, run_monte_carlo, state_band, state_path_indices, DuffingExperiment, Fit, MonteCarloConfig,
    OdeSystem, OemExperiment,
};
use hesscov::kkt::{
    assemble_bordered_hessian, check_derivatives, quadratic_toy, solve_equality_constrained, ConstrainedProblem,
    SolverOptions,
};
use hesscov::linalg::Backend;
use hesscov::mcmc::{run_chains, ChainSettings, GaussianTarget, JointMapTarget, Sampler};
use hesscov::models::DuffingModel;
use hesscov::seed::stream;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for seed in 0..20 {
        let c = RandomCoefs::draw(seed);
        let sol = c.solve();
        if !sol.converged() {
            return outcome(false, format!("problem {seed} did not converge"));
        }
        let h = assemble_bordered_hessian(&c.problem(), &sol.z_star, &sol.lambda_star).unwrap();
        let block = HessianInverse::new(&h, Backend::Dense)
            .unwrap()
            .reduced_hessian_inverse()
            .unwrap();
        let p = sol.z_star.rows(0, c.n).into_owned();
        let q = sol.z_star.rows(c.n, c.m).into_owned();
        let fd = c.fd_reduced_hessian(&p, &q, 1e-4).try_inverse().unwrap();
        worst = worst.max(rel_frobenius(&block, &fd));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-4 && secs < 10.0,
        format!("max rel Frobenius {worst:.2e} (tol 1e-4), {secs:.2} s (limit 10 s)"),
    )
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for seed in 100..120 {
        let c = RandomCoefs::draw(seed);
        let sol = c.solve();
        let z = &sol.z_star;
        let w = c.sensitivity(z);
        let lz = c.merit_hessian(z) + c.hessian_contraction(z, &sol.lambda_star);
        let r = -(w.transpose() * &lz * &w).try_inverse().unwrap();
        let expected = &w * r * w.transpose();
        let h = assemble_bordered_hessian(&c.problem(), z, &sol.lambda_star).unwrap();
        let idx: Vec<usize> = (0..c.n + c.m).collect();
        let full = HessianInverse::new(&h, Backend::Dense)
            .unwrap()
            .full_covariance_block(&idx)
            .unwrap();
        worst = worst.max(rel_frobenius(&full, &expected));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-8 && secs < 5.0,
        format!("max rel Frobenius {worst:.2e} (tol 1e-8), {secs:.2} s (limit 5 s)"),
    )
}

fn criterion_3() -> Outcome {
    let p = quadratic_toy();
    let sol = solve_equality_constrained(&p, &DVector::from_vec(vec![0.3, -0.4]), &SolverOptions::default()).unwrap();
    let h = assemble_bordered_hessian(&p, &sol.z_star, &sol.lambda_star).unwrap();
    let inv = HessianInverse::new(&h, Backend::Dense).unwrap();
    let reduced = -inv.reduced_hessian_inverse().unwrap()[(0, 0)];
    let full = inv.full_covariance_block(&[0, 1]).unwrap();
    let expected = DMatrix::from_row_slice(2, 2, &[0.5, -0.5, -0.5, 0.5]);
    let err = [
        (sol.z_star[0] - 1.0).abs(),
        (sol.z_star[1] - 1.0).abs(),
        (sol.lambda_star[0] - 1.0).abs(),
        (reduced - 0.5).abs(),
        (full - expected).amax(),
    ]
    .into_iter()
    .fold(0.0, f64::max);
    outcome(err <= 1e-12, format!("max abs error {err:.2e} (tol 1e-12)"))
}

/// Rows `∂x₁(tₖ)/∂[θ, x₀]` of the trapezoidal recursion.
fn design_matrix(exp: &OemExperiment, a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let h = exp.mesh_spacing;
    let i2 = DMatrix::<f64>::identity(2, 2);
    let left = (&i2 - a * (h / 2.0)).try_inverse().unwrap();
    let step_x = &left * (&i2 + a * (h / 2.0));
    let step_t = &left * b * h;
    let mut s = DMatrix::zeros(2, 3);
    s.view_mut((0, 1), (2, 2)).fill_with_identity();
    let per_sample = (exp.sample_period / h).round() as usize;
    let nodes = (exp.horizon / h).round() as usize;
    let mut rows = vec![s.row(0).into_owned()];
    for k in 1..=nodes {
        let mut next = &step_x * &s;
        let mut col = next.column_mut(0);
        col += &step_t;
        s = next;
        if k % per_sample == 0 {
            rows.push(s.row(0).into_owned());
        }
    }
    DMatrix::from_rows(&rows)
}

fn criterion_4() -> Outcome {
    let exp = OemExperiment {
        system: OdeSystem::Linear {
            a: vec![vec![0.0, 1.0], vec![-2.0, -0.3]],
            b: vec![vec![0.0], vec![1.0]],
            theta: vec![1.5],
        },
        x0: vec![1.0, 0.0],
        estimate_sigma: false,
        horizon: 5.0,
        mesh_spacing: 0.05,
        ..OemExperiment::van_der_pol()
    };
    let truth = exp.true_trajectory().unwrap();
    let data = exp.generate_data(&truth, 0, 0).unwrap();
    let problem = exp.problem(data).unwrap();
    let z0 = exp.initial_point(&problem).unwrap();
    let opts = SolverOptions::default();
    let fit = Fit::solve(problem, &z0, &opts).unwrap();
    if !fit.solution.converged() {
        return outcome(false, format!("solver status {:?}", fit.solution.status));
    }
    let reduced = -fit.inverse(&opts).unwrap().reduced_hessian_inverse().unwrap();
    let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -2.0, -0.3]);
    let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
    let x = design_matrix(&exp, &a, &b);
    let gls = (x.transpose() * &x).try_inverse().unwrap() * exp.sigma.powi(2);
    let err = rel_frobenius(&reduced, &gls);
    outcome(err <= 1e-8, format!("rel Frobenius vs GLS {err:.2e} (tol 1e-8)"))
}

fn criterion_5_and_6() -> (Outcome, Outcome) {
    let start = Instant::now();
    let cfg = MonteCarloConfig::van_der_pol();
    let rep = run_monte_carlo(&cfg, None).unwrap();
    let mut pass = rep.converged == cfg.realizations;
    let mut parts = vec![format!("{}/{} converged", rep.converged, rep.realizations)];
    for t in &rep.targets {
        let ratio = (t.sample_std - t.mean_sigma_hat).abs() / t.sample_std;
        let ok = ratio <= 0.15 && (0.63..=0.73).contains(&t.coverage);
        pass &= ok;
        parts.push(format!("{} ratio {ratio:.3} coverage {:.3}", t.name, t.coverage));
    }
    parts.push(format!("{:.0} s", start.elapsed().as_secs_f64()));
    let c5 = outcome(pass, parts.join("; "));

    // median realization by μ estimate
    let mu = cfg.targets.iter().position(|t| t == "mu").unwrap();
    let mut ok: Vec<_> = rep.records.iter().filter(|r| r.ok()).collect();
    ok.sort_by(|a, b| a.estimates[mu].total_cmp(&b.estimates[mu]));
    let median = ok[ok.len() / 2].index;
    let exp = &cfg.experiment;
    let truth = exp.true_trajectory().unwrap();
    let problem = exp.problem(exp.generate_data(&truth, cfg.master_seed, median as u64).unwrap()).unwrap();
    let z0 = exp.initial_point(&problem).unwrap();
    let fit = Fit::solve(problem, &z0, &cfg.solver).unwrap();
    let inv = fit.inverse(&cfg.solver).unwrap();
    let idx = state_path_indices(&fit.problem, 1);
    let band = state_band(&inv, &fit.solution.z_star, &idx, fit.problem.mesh().node_times(), 2.0).unwrap();
    let cov = band_coverage(&band, &truth.component(1));
    let c6 = outcome(
        cov >= 0.9,
        format!("realization {median}: x2 band covers {cov:.3} of nodes (need 0.90)"),
    );
    (c5, c6)
}

fn desk_duffing() -> DuffingExperiment {
    DuffingExperiment {
        model: DuffingModel {
            horizon: 20.0,
            ..DuffingModel::default()
        },
        ..DuffingExperiment::default()
    }
}

fn criterion_7_and_8() -> (Outcome, Outcome) {
    let exp = desk_duffing();
    let data = exp.generate(0).unwrap();
    let problem = exp.problem(data.values).unwrap();
    let z0 = exp.initial_point(&problem).unwrap();
    let opts = SolverOptions::default();
    let fit = Fit::solve(problem, &z0, &opts).unwrap();
    if !fit.solution.converged() {
        let fail = outcome(false, format!("solver status {:?}", fit.solution.status));
        let skip = outcome(false, "no mode to sample around".into());
        return (fail, skip);
    }
    let names: Vec<String> = ["a", "b", "d", "sigma_y"].map(String::from).to_vec();
    let idx = fit.label_indices(&names).unwrap();
    let inv = fit.inverse(&opts).unwrap();
    let sd = inv.standard_deviations(&idx).unwrap();
    let truth = exp.truth();
    let gnorm = fit.solution.constraint_violation;
    let mut pass = gnorm <= 1e-8;
    let mut parts = vec![format!("|g|inf {gnorm:.1e}")];
    for (k, &i) in idx.iter().enumerate() {
        let z = (fit.solution.z_star[i] - truth[k]) / sd[k];
        pass &= z.abs() <= 3.0;
        parts.push(format!("{} z {z:+.2}", names[k]));
    }
    let c7 = outcome(pass, parts.join("; "));

    let n = fit.problem.n_independent();
    let cov = -inv.reduced_hessian_inverse().unwrap();
    let mode = fit.solution.z_star.rows(0, n).into_owned();
    let target = JointMapTarget::new(&fit.problem);
    let sampler = Sampler::new(ChainSettings::new(3000, 0), &cov).unwrap();
    let chain = &run_chains(&sampler, &mode, &target).unwrap()[0];
    let duffing_ok = (0.15..=0.40).contains(&chain.overall_acceptance);

    let mean = DVector::from_vec(vec![1.0, -2.0, 0.5, 0.0]);
    let truth_cov = DMatrix::from_row_slice(
        4,
        4,
        &[2.0, 0.6, 0.0, 0.2, 0.6, 1.0, 0.3, 0.0, 0.0, 0.3, 0.5, 0.1, 0.2, 0.0, 0.1, 1.5],
    );
    let gauss = GaussianTarget::new(mean.clone(), &truth_cov).unwrap();
    let settings = ChainSettings {
        burn_in: 0.0,
        ..ChainSettings::new(100_000, 0)
    };
    let control = &run_chains(&Sampler::new(settings, &truth_cov).unwrap(), &mean, &gauss).unwrap()[0];
    let err = rel_frobenius(&control.covariance(), &truth_cov);
    let c8 = outcome(
        duffing_ok && err <= 0.15,
        format!(
            "Duffing overall acceptance {:.3} (band 0.15..0.40); Gaussian control rel Frobenius {err:.3} (tol 0.15)",
            chain.overall_acceptance
        ),
    );
    (c7, c8)
}

fn perturbed_check<P: ConstrainedProblem>(problem: &P, z0: DVector<f64>, seed: u64) -> f64 {
    let mut rng = stream(seed, 99, 0);
    let fixed = problem.positive_variables();
    let z = z0.map_with_location(|i, _, v| {
        let e: f64 = rng.sample(StandardNormal);
        if fixed.contains(&i) {
            v
        } else {
            v + 0.05 * (1.0 + v.abs()) * e
        }
    });
    let lambda = DVector::from_fn(problem.n_dependent(), |_, _| rng.sample::<f64, _>(StandardNormal));
    check_derivatives(problem, &z, &lambda, 1e-6).unwrap().max_relative_error()
}

fn criterion_9() -> Outcome {
    let vdp = OemExperiment::van_der_pol();
    let truth = vdp.true_trajectory().unwrap();
    let duff = desk_duffing();
    let mut worst_oem = 0.0f64;
    let mut worst_duff = 0.0f64;
    for seed in 0..3 {
        let p = vdp.problem(vdp.generate_data(&truth, seed, 0).unwrap()).unwrap();
        let z0 = vdp.initial_point(&p).unwrap();
        worst_oem = worst_oem.max(perturbed_check(&p, z0, seed));
        let p = duff.problem(duff.generate(seed).unwrap().values).unwrap();
        let z0 = duff.initial_point(&p).unwrap();
        worst_duff = worst_duff.max(perturbed_check(&p, z0, seed));
    }
    outcome(
        worst_oem <= 1e-5 && worst_duff <= 1e-5,
        format!("max rel error: output-error {worst_oem:.1e}, joint MAP {worst_duff:.1e} (tol 1e-5)"),
    )
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

fn criterion_10() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_hesscov");
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let vdp = root.join("vdp.toml");
    std::fs::write(
        &vdp,
        "[experiment]\nx0 = [0.0, 1.0]\nsigma = 0.1\n[experiment.system]\nkind = \"van_der_pol\"\nmu = 2.0\n\
         [report]\ncorrelations = true\n[report.band]\ncomponent = 1\n[montecarlo]\nrealizations = 6\n",
    )
    .unwrap();
    let duff = root.join("duffing.toml");
    std::fs::write(&duff, "[duffing.model]\nhorizon = 10.0\n[chain]\nchain_length = 300\n").unwrap();
    let gauss = root.join("gauss.toml");
    std::fs::write(
        &gauss,
        "[gaussian]\nmean = [0.0, 1.0]\ncovariance = [[1.0, 0.3], [0.3, 2.0]]\n[chain]\nchain_length = 2000\nchains = 2\n",
    )
    .unwrap();
    let run = |args: &[&str], out: &Path| {
        let status = Command::new(bin)
            .args(args)
            .arg("--out-dir")
            .arg(out)
            .arg("--seed")
            .arg("0")
            .status()
            .unwrap();
        status.success()
    };
    let s = |p: &Path| p.to_str().unwrap().to_owned();
    let vdp_data = root.join("vdp_data.csv");
    let duff_data = root.join("duff_data.csv");
    let mut pass = true;
    let mut compared = 0;
    for rep in 0..2 {
        let base = root.join(format!("run{rep}"));
        let jobs: Vec<(&str, Vec<String>)> = vec![
            ("gen_vdp", vec!["generate".into(), "--config".into(), s(&vdp)]),
            ("gen_duff", vec!["generate".into(), "--config".into(), s(&duff)]),
        ];
        for (name, args) in &jobs {
            let args: Vec<&str> = args.iter().map(String::as_str).collect();
            pass &= run(&args, &base.join(name));
        }
        if rep == 0 {
            std::fs::copy(base.join("gen_vdp/data.csv"), &vdp_data).unwrap();
            std::fs::copy(base.join("gen_duff/data.csv"), &duff_data).unwrap();
        }
        let jobs: Vec<(&str, Vec<String>)> = vec![
            ("fit_vdp", vec!["fit".into(), "--config".into(), s(&vdp), "--data".into(), s(&vdp_data)]),
            ("fit_duff", vec!["fit".into(), "--config".into(), s(&duff), "--data".into(), s(&duff_data)]),
            ("mc", vec!["montecarlo".into(), "--config".into(), s(&vdp)]),
            ("mcmc_duff", vec!["mcmc".into(), "--config".into(), s(&duff), "--data".into(), s(&duff_data)]),
            ("mcmc_gauss", vec!["mcmc".into(), "--config".into(), s(&gauss)]),
            ("derivs", vec!["check-derivs".into(), "--config".into(), s(&duff)]),
        ];
        for (name, args) in &jobs {
            let args: Vec<&str> = args.iter().map(String::as_str).collect();
            pass &= run(&args, &base.join(name));
        }
    }
    for name in ["gen_vdp", "gen_duff", "fit_vdp", "fit_duff", "mc", "mcmc_duff", "mcmc_gauss", "derivs"] {
        let a = snapshot(&root.join("run0").join(name));
        let b = snapshot(&root.join("run1").join(name));
        compared += a.len();
        pass &= !a.is_empty() && a == b;
    }
    outcome(pass, format!("8 commands, {compared} artifacts compared byte for byte"))
}

fn main() {
    let mut results = vec![
        (1, criterion_1()),
        (2, criterion_2()),
        (3, criterion_3()),
        (4, criterion_4()),
    ];
    let (c5, c6) = criterion_5_and_6();
    results.push((5, c5));
    results.push((6, c6));
    let (c7, c8) = criterion_7_and_8();
    results.push((7, c7));
    results.push((8, c8));
    results.push((9, criterion_9()));
    results.push((10, criterion_10()));

    let mut failed = 0;
    for (k, r) in &results {
        let tag = if r.pass { "PASS" } else { "FAIL" };
        println!("criterion {k:>2}: {tag}  {}", r.detail);
        failed += usize::from(!r.pass);
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 && std::env::var_os("HESSCOV_ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}
