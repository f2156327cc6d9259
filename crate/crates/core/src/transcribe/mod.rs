//! Trapezoidal-collocation transcriptions of continuous-time estimation
//! problems into [`ConstrainedProblem`](crate::kkt::ConstrainedProblem)s.

pub mod joint_map;
pub mod mesh;
pub mod oem;

pub use joint_map::{transcribe_joint_map, JointMapProblem, JointMapSpec};
pub use mesh::CollocationMesh;
pub use oem::{transcribe_oem, NoiseScale, OemProblem, OemSpec};

/// `x_{k+1} − x_k − (h/2)(f_k + f_{k+1})`.
pub fn trapezoidal_defect(x_k: &[f64], x_k1: &[f64], f_k: &[f64], f_k1: &[f64], h: f64) -> Vec<f64> {
    debug_assert!(x_k.len() == x_k1.len() && f_k.len() == x_k.len() && f_k1.len() == x_k.len());
    (0..x_k.len())
        .map(|i| x_k1[i] - x_k[i] - 0.5 * h * (f_k[i] + f_k1[i]))
        .collect()
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use nalgebra::DVector;

    use super::*;
    use crate::kkt::{
        assemble_bordered_hessian, check_derivatives, solve_equality_constrained, ConstrainedProblem,
        SolverOptions,
    };
    use crate::models::{duffing_drift, simulate_ode, LinearOde, VanDerPol};

    #[test]
    fn defect_examples() {
        assert_eq!(trapezoidal_defect(&[0.0], &[1.0], &[0.0], &[1.0], 1.0), vec![0.5]);
        // constant derivative, exact step
        assert_eq!(trapezoidal_defect(&[1.0, 2.0], &[1.5, 1.0], &[2.5, -5.0], &[2.5, -5.0], 0.2), vec![0.0, 0.0]);
        // ẋ = t on [1, 1.5]: x goes from 0.5 to 1.125
        let d = trapezoidal_defect(&[0.5], &[1.125], &[1.0], &[1.5], 0.5)[0];
        assert!(d.abs() < 1e-15);
    }

    fn vdp_problem(h: f64, horizon: f64) -> OemProblem {
        let mesh = CollocationMesh::uniform(0.0, horizon, h).unwrap();
        let times: Vec<f64> = (0..=(horizon / 0.1).round() as usize).map(|k| k as f64 * 0.1).collect();
        let mesh = mesh.with_measurements(&times).unwrap();
        let data = vec![0.0; times.len()];
        transcribe_oem(OemSpec {
            model: Arc::new(VanDerPol),
            observed: 0,
            data,
            mesh,
            noise: NoiseScale::Estimated,
        })
        .unwrap()
    }

    #[test]
    fn oem_dimensions() {
        let p = vdp_problem(0.05, 2.0);
        assert_eq!(p.n_dependent(), 2 * 40);
        assert_eq!(p.n_independent(), 4);
        let labels = p.variable_labels();
        assert_eq!(&labels[..6], &["mu", "sigma", "x1_0", "x2_0", "x1_1", "x2_1"]);
        assert_eq!(p.positive_variables(), vec![1]);
    }

    #[test]
    fn oem_derivatives_at_random_point() {
        let p = vdp_problem(0.05, 2.0);
        let nz = p.n_vars();
        let z = DVector::from_fn(nz, |i, _| ((i * 7919) % 101) as f64 / 60.0 - 0.8);
        let mut z = z;
        z[1] = 0.3;
        let lam = DVector::from_fn(p.n_dependent(), |i, _| ((i * 31) % 17) as f64 / 8.0 - 1.0);
        let r = check_derivatives(&p, &z, &lam, 1e-6).unwrap();
        assert!(r.passes(1e-5), "{r:?}");
        let h = assemble_bordered_hessian(&p, &z, &lam).unwrap();
        assert!(h.structure_defect() < 1e-14);
    }

    #[test]
    fn vdp_defects_on_reference_path_are_third_order() {
        let err = |h: f64| {
            let mesh: Vec<f64> = (0..=(2.0 / h).round() as usize).map(|k| k as f64 * h).collect();
            let tr = simulate_ode(&VanDerPol, &[2.0], &[0.0, 1.0], &mesh, 20).unwrap();
            let mut worst = 0.0f64;
            for k in 0..mesh.len() - 1 {
                let (a, b) = (tr.state(k), tr.state(k + 1));
                let fa = crate::models::vdp_drift([a[0], a[1]], 2.0);
                let fb = crate::models::vdp_drift([b[0], b[1]], 2.0);
                for v in trapezoidal_defect(&a, &b, &fa, &fb, h) {
                    worst = worst.max(v.abs());
                }
            }
            worst
        };
        let ratio = err(0.02) / err(0.01);
        assert!(ratio > 6.5 && ratio < 10.0, "{ratio}");
    }

    #[test]
    fn constant_model_gives_gaussian_ml() {
        let y = [1.3, 0.7, 1.1, 0.4, 1.9, 1.0, 0.8];
        let times: Vec<f64> = (0..y.len()).map(|k| k as f64 * 0.5).collect();
        let mesh = CollocationMesh::uniform(0.0, 3.0, 0.25).unwrap().with_measurements(&times).unwrap();
        let p = transcribe_oem(OemSpec {
            model: Arc::new(LinearOde::constant(1)),
            observed: 0,
            data: y.to_vec(),
            mesh,
            noise: NoiseScale::Estimated,
        })
        .unwrap();
        let z0 = DVector::from_fn(p.n_vars(), |i, _| if i == 0 { 1.0 } else { 0.0 });
        let sol = solve_equality_constrained(&p, &z0, &SolverOptions::default()).unwrap();
        assert!(sol.converged());
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / y.len() as f64;
        assert!((sol.z_star[1] - mean).abs() < 1e-10);
        assert!((sol.z_star[0] - var.sqrt()).abs() < 1e-10);
    }

    fn duffing_problem(horizon: f64, ts: f64) -> JointMapProblem {
        let mesh = CollocationMesh::uniform(0.0, horizon, ts).unwrap();
        let times = mesh.node_times().to_vec();
        let mesh = mesh.with_measurements(&times).unwrap();
        let data = times.iter().map(|t| t.sin()).collect();
        transcribe_joint_map(JointMapSpec {
            gamma: 0.3,
            sigma_d: 0.1,
            data,
            mesh,
        })
        .unwrap()
    }

    fn duffing_point(p: &JointMapProblem) -> DVector<f64> {
        let nz = p.n_vars();
        let mut z = DVector::from_fn(nz, |i, _| ((i * 2654435761) % 1000) as f64 / 500.0 - 1.0);
        z[3] = 0.2;
        z
    }

    #[test]
    fn joint_map_derivatives() {
        let p = duffing_problem(2.0, 0.1);
        let z = duffing_point(&p);
        let lam = DVector::from_fn(p.n_dependent(), |i, _| (i as f64 * 0.37).sin());
        let r = check_derivatives(&p, &z, &lam, 1e-6).unwrap();
        assert!(r.passes(1e-5), "{r:?}");
    }

    #[test]
    fn joint_map_dependent_block_is_lower_triangular() {
        let p = duffing_problem(1.0, 0.1);
        let jac = p.constraint_jacobian(&duffing_point(&p)).to_dense();
        let n = p.n_independent();
        let jq = jac.columns(n, p.n_dependent()).into_owned();
        for r in 0..jq.nrows() {
            for c in (r + 1)..jq.ncols() {
                assert_eq!(jq[(r, c)], 0.0, "({r},{c})");
            }
            assert!(jq[(r, r)].abs() > 0.0);
        }
    }

    #[test]
    fn elimination_is_feasible() {
        let p = duffing_problem(3.0, 0.1);
        let z = duffing_point(&p);
        let w = p.eliminate(&z.rows(0, p.n_independent()).into_owned()).unwrap();
        assert!(p.constraints(&w).amax() < 1e-12);
    }

    #[test]
    fn zero_noise_path_recovers_ode_defects() {
        let p = duffing_problem(1.0, 0.1);
        let mut z = duffing_point(&p);
        for k in 0..p.mesh().n_intervals() {
            z[p.eta_index(k)] = 0.0;
        }
        let g = p.constraints(&z);
        let par = crate::models::DuffingParams {
            a: z[0],
            b: z[1],
            d: z[2],
            gamma: 0.3,
        };
        let t = p.mesh().node_times();
        for k in 0..p.mesh().n_intervals() {
            let node = |j: usize| {
                let (x, zz) = (z[p.x_index(j)], z[p.z_index(j)]);
                let (fx, fz) = duffing_drift(x, zz, t[j], &par);
                ([x, zz], [fx, fz])
            };
            let (a, fa) = node(k);
            let (b, fb) = node(k + 1);
            let d = trapezoidal_defect(&a, &b, &fa, &fb, 0.1);
            assert!((g[2 * k + 1] - d[0]).abs() < 1e-14);
            assert!((g[2 * k] - d[1]).abs() < 1e-14);
        }
    }

    #[test]
    fn drift_divergence_term_scales_with_horizon() {
        let short = duffing_problem(2.0, 0.1);
        let long = duffing_problem(4.0, 0.1);
        let term = |p: &JointMapProblem, d: f64| {
            let mut z = DVector::zeros(p.n_vars());
            z[3] = 1.0;
            let base = p.merit(&z);
            z[2] = d;
            p.merit(&z) - base
        };
        assert!((term(&long, 0.2) - 2.0 * term(&short, 0.2)).abs() < 1e-12);
        assert!((term(&short, 0.2) - 0.2).abs() < 1e-12);
    }
}
