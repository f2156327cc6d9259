mod common;

use common::rel_frobenius;
use hesscov::experiments::{run_monte_carlo, Fit, MonteCarloConfig, OdeSystem, OemExperiment};
use hesscov::kkt::SolverOptions;
use nalgebra::{DMatrix, DVector};

fn experiment() -> OemExperiment {
    OemExperiment {
        system: OdeSystem::Linear {
            a: vec![vec![0.0, 1.0], vec![-2.0, -0.3]],
            b: vec![vec![0.0], vec![1.0]],
            theta: vec![1.5],
        },
        x0: vec![1.0, 0.0],
        sigma: 0.1,
        estimate_sigma: false,
        observed: 0,
        t0: 0.0,
        horizon: 5.0,
        sample_period: 0.1,
        mesh_spacing: 0.05,
        sim_substeps: 4,
        filter_cutoff: 4.0,
    }
}

/// Rows `∂x₁(tₖ)/∂[θ, x₀]` of the trapezoidal recursion at the sampling
/// instants.
fn design_matrix(exp: &OemExperiment) -> DMatrix<f64> {
    let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -2.0, -0.3]);
    let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
    let h = exp.mesh_spacing;
    let i2 = DMatrix::<f64>::identity(2, 2);
    let left = (&i2 - &a * (h / 2.0)).try_inverse().unwrap();
    let step_x = &left * (&i2 + &a * (h / 2.0));
    let step_t = &left * &b * h;
    // sensitivity of the state to [θ, x₀]
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

#[test]
fn reduced_covariance_equals_gls() {
    let exp = experiment();
    let truth = exp.true_trajectory().unwrap();
    let data = exp.generate_data(&truth, 3, 0).unwrap();
    let problem = exp.problem(data).unwrap();
    let z0 = exp.initial_point(&problem).unwrap();
    let opts = SolverOptions::default();
    let fit = Fit::solve(problem, &z0, &opts).unwrap();
    assert!(fit.solution.converged());
    let inv = fit.inverse(&opts).unwrap();
    let reduced = -inv.reduced_hessian_inverse().unwrap();

    let x = design_matrix(&exp);
    assert_eq!(x.nrows(), 51);
    let gls = (x.transpose() * &x).try_inverse().unwrap() * exp.sigma.powi(2);
    let err = rel_frobenius(&reduced, &gls);
    assert!(err < 1e-8, "{err:e}");

    // the estimate itself is the GLS solution
    let y = DVector::from_vec(fit.problem.spec().data.clone());
    let beta = (x.transpose() * &x).try_inverse().unwrap() * x.transpose() * y;
    let est = fit.solution.z_star.rows(0, 3).into_owned();
    assert!((est - beta).amax() < 1e-7);
}

#[test]
fn monte_carlo_scatter_matches_gls() {
    let exp = experiment();
    let gls_sd: Vec<f64> = {
        let x = design_matrix(&exp);
        let c = (x.transpose() * &x).try_inverse().unwrap() * exp.sigma.powi(2);
        (0..3).map(|i| c[(i, i)].sqrt()).collect()
    };
    let cfg = MonteCarloConfig {
        realizations: 500,
        master_seed: 0,
        targets: vec!["theta1".into(), "x1_0".into(), "x2_0".into()],
        experiment: exp,
        solver: SolverOptions::default(),
    };
    let rep = run_monte_carlo(&cfg, None).unwrap();
    assert_eq!(rep.converged, 500);
    for (t, sd) in rep.targets.iter().zip(&gls_sd) {
        assert!((t.sample_std - sd).abs() / sd < 0.10, "{}: {} vs {}", t.name, t.sample_std, sd);
        assert!((t.mean_sigma_hat - sd).abs() / sd < 1e-8);
    }
}
