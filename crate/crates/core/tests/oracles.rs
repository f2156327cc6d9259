mod common;

use common::{rel_frobenius, RandomCoefs};
use hesscov::covariance::HessianInverse;
use hesscov::kkt::reduced::reduced_hessian;
use hesscov::kkt::{assemble_bordered_hessian, check_derivatives};
use hesscov::linalg::Backend;
use nalgebra::DMatrix;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn top_left_block_inverts_reduced_hessian(seed in any::<u64>()) {
        let c = RandomCoefs::draw(seed);
        let sol = c.solve();
        prop_assert!(sol.converged(), "{:?}", sol.status);
        let h = assemble_bordered_hessian(&c.problem(), &sol.z_star, &sol.lambda_star).unwrap();
        let inv = HessianInverse::new(&h, Backend::Dense).unwrap();
        let block = inv.reduced_hessian_inverse().unwrap();
        let p = sol.z_star.rows(0, c.n).into_owned();
        let q = sol.z_star.rows(c.n, c.m).into_owned();
        let fd = c.fd_reduced_hessian(&p, &q, 1e-4);
        let err = rel_frobenius(&block, &fd.try_inverse().unwrap());
        prop_assert!(err < 1e-4, "relative error {err:e}");
    }

    #[test]
    fn projected_hessian_matches_differences(seed in any::<u64>()) {
        let c = RandomCoefs::draw(seed);
        let sol = c.solve();
        prop_assert!(sol.converged());
        let rh = reduced_hessian(&c.problem(), &sol.z_star, &sol.lambda_star).unwrap();
        let p = sol.z_star.rows(0, c.n).into_owned();
        let q = sol.z_star.rows(c.n, c.m).into_owned();
        let fd = c.fd_reduced_hessian(&p, &q, 1e-4);
        prop_assert!(rel_frobenius(&rh, &fd) < 1e-5);
    }

    #[test]
    fn full_block_is_propagated_reduced_covariance(seed in any::<u64>()) {
        let c = RandomCoefs::draw(seed);
        let sol = c.solve();
        prop_assert!(sol.converged());
        let z = &sol.z_star;
        let w = c.sensitivity(z);
        let lz = c.merit_hessian(z) + c.hessian_contraction(z, &sol.lambda_star);
        let r = -(w.transpose() * &lz * &w).try_inverse().unwrap();
        let expected = &w * r * w.transpose();
        let h = assemble_bordered_hessian(&c.problem(), z, &sol.lambda_star).unwrap();
        let idx: Vec<usize> = (0..c.n + c.m).collect();
        let full = HessianInverse::new(&h, Backend::Dense).unwrap().full_covariance_block(&idx).unwrap();
        prop_assert!(rel_frobenius(&full, &expected) < 1e-8);
    }

    #[test]
    fn bordered_hessian_structure(seed in any::<u64>()) {
        let c = RandomCoefs::draw(seed);
        let sol = c.solve();
        let h = assemble_bordered_hessian(&c.problem(), &sol.z_star, &sol.lambda_star).unwrap();
        let d = h.to_dense();
        prop_assert_eq!(&d, &d.transpose());
        let k = c.n + c.m;
        prop_assert_eq!(d.view((k, k), (c.m, c.m)).into_owned(), DMatrix::zeros(c.m, c.m));
        let jac = c.jacobian(&sol.z_star);
        prop_assert!((d.view((k, 0), (c.m, k)).into_owned() - jac).amax() < 1e-15);
        prop_assert!(sol.kkt_residual <= 1e-8);
    }

    #[test]
    fn extracted_columns_solve_the_system(seed in any::<u64>()) {
        let c = RandomCoefs::draw(seed);
        let sol = c.solve();
        let h = assemble_bordered_hessian(&c.problem(), &sol.z_star, &sol.lambda_star).unwrap();
        let inv = HessianInverse::new(&h, Backend::Auto).unwrap();
        for i in 0..h.dim() {
            let (x, _) = inv.column_with_residual(i).unwrap();
            let mut e = nalgebra::DVector::zeros(h.dim());
            e[i] = 1.0;
            let res = (h.to_dense() * &x - e).amax();
            prop_assert!(res <= 1e-9 * x.amax(), "column {i}: {res:e}");
        }
    }

    #[test]
    fn callbacks_pass_derivative_check(seed in any::<u64>(), scale in 0.1f64..2.0) {
        let c = RandomCoefs::draw(seed);
        let z = c.c.map(|v| v * scale);
        let lambda = nalgebra::DVector::from_fn(c.m, |i, _| 0.5 - i as f64 * 0.3);
        let rep = check_derivatives(&c.problem(), &z, &lambda, 1e-6).unwrap();
        prop_assert!(rep.passes(1e-5), "{}", rep.max_relative_error());
    }
}

#[test]
fn linear_quadratic_problem_converges_in_one_step() {
    let mut c = RandomCoefs::draw(7);
    c.kappa = 0.0;
    c.w.fill(0.0);
    let sol = c.solve();
    assert!(sol.converged());
    assert!(sol.iterations <= 1, "{}", sol.iterations);
}
