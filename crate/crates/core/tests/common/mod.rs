#![allow(dead_code)]

use hesscov::kkt::{solve_equality_constrained, FnProblem, KktSolution, SolverOptions};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Coefficients of a smooth random problem.
///
/// `ℓ(z) = −½ (z − c)ᵀ A (z − c) − Σ wᵢ zᵢ⁴ / 12`
/// `gᵢ(z) = (D q)ᵢ + (E p)ᵢ + κ sin(fᵢᵀ z) − rᵢ`
#[derive(Debug, Clone)]
pub struct RandomCoefs {
    pub n: usize,
    pub m: usize,
    pub a: DMatrix<f64>,
    pub c: DVector<f64>,
    pub w: DVector<f64>,
    pub d: DMatrix<f64>,
    pub e: DMatrix<f64>,
    pub kappa: f64,
    pub f: DMatrix<f64>,
    pub r: DVector<f64>,
}

impl RandomCoefs {
    pub fn draw(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(1..=4);
        let m = rng.random_range(1..=6);
        let k = n + m;
        let mut u = |lo: f64, hi: f64| rng.random_range(lo..hi);
        let b = DMatrix::from_fn(k, k, |_, _| u(-1.0, 1.0));
        let a = &b * b.transpose() + DMatrix::identity(k, k) * 0.5;
        let c = DVector::from_fn(k, |_, _| u(-1.0, 1.0));
        let w = DVector::from_fn(k, |_, _| u(0.0, 0.5));
        let d = DMatrix::from_fn(m, m, |i, j| if i == j { 2.0 + u(0.0, 1.0) } else { u(-0.3, 0.3) });
        let e = DMatrix::from_fn(m, n, |_, _| u(-1.0, 1.0));
        let kappa = u(0.05, 0.3);
        let f = DMatrix::from_fn(m, k, |_, _| u(-1.0, 1.0));
        let r = DVector::from_fn(m, |_, _| u(-1.0, 1.0));
        Self { n, m, a, c, w, d, e, kappa, f, r }
    }

    pub fn merit(&self, z: &DVector<f64>) -> f64 {
        let dz = z - &self.c;
        -0.5 * dz.dot(&(&self.a * &dz)) - z.iter().zip(self.w.iter()).map(|(x, w)| w * x.powi(4)).sum::<f64>() / 12.0
    }

    pub fn merit_gradient(&self, z: &DVector<f64>) -> DVector<f64> {
        -(&self.a * (z - &self.c)) - z.zip_map(&self.w, |x, w| w * x.powi(3) / 3.0)
    }

    pub fn merit_hessian(&self, z: &DVector<f64>) -> DMatrix<f64> {
        -&self.a - DMatrix::from_diagonal(&z.zip_map(&self.w, |x, w| w * x * x))
    }

    pub fn constraints(&self, z: &DVector<f64>) -> DVector<f64> {
        let (p, q) = (z.rows(0, self.n), z.rows(self.n, self.m));
        let s = (&self.f * z).map(f64::sin);
        &self.d * q + &self.e * p + s * self.kappa - &self.r
    }

    pub fn jacobian(&self, z: &DVector<f64>) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(self.m, self.n + self.m);
        j.view_mut((0, 0), (self.m, self.n)).copy_from(&self.e);
        j.view_mut((0, self.n), (self.m, self.m)).copy_from(&self.d);
        let cs = (&self.f * z).map(f64::cos);
        for i in 0..self.m {
            for k in 0..self.n + self.m {
                j[(i, k)] += self.kappa * cs[i] * self.f[(i, k)];
            }
        }
        j
    }

    pub fn hessian_contraction(&self, z: &DVector<f64>, lambda: &DVector<f64>) -> DMatrix<f64> {
        let sn = (&self.f * z).map(f64::sin);
        let mut h = DMatrix::zeros(self.n + self.m, self.n + self.m);
        for i in 0..self.m {
            let fi = self.f.row(i).transpose();
            h -= &fi * fi.transpose() * (self.kappa * sn[i] * lambda[i]);
        }
        h
    }

    pub fn problem(&self) -> FnProblem {
        let (a, b, c, d, e, f) = (self.clone(), self.clone(), self.clone(), self.clone(), self.clone(), self.clone());
        FnProblem {
            n: self.n,
            m: self.m,
            merit: Box::new(move |z| a.merit(z)),
            merit_gradient: Box::new(move |z| b.merit_gradient(z)),
            merit_hessian: Box::new(move |z| c.merit_hessian(z)),
            constraints: Box::new(move |z| d.constraints(z)),
            constraint_jacobian: Box::new(move |z| e.jacobian(z)),
            constraint_hessian_contraction: Box::new(move |z, l| f.hessian_contraction(z, l)),
            labels: None,
            positive: Vec::new(),
        }
    }

    /// Dense Newton solve of `g(p, q) = 0` for `q`.
    pub fn eliminate(&self, p: &DVector<f64>, q0: &DVector<f64>) -> DVector<f64> {
        let mut z = DVector::zeros(self.n + self.m);
        z.rows_mut(0, self.n).copy_from(p);
        z.rows_mut(self.n, self.m).copy_from(q0);
        for _ in 0..100 {
            let g = self.constraints(&z);
            if g.amax() < 1e-15 {
                break;
            }
            let jq = self.jacobian(&z).columns(self.n, self.m).into_owned();
            let dq = jq.lu().solve(&g).expect("invertible dependent Jacobian");
            let mut q = z.rows_mut(self.n, self.m);
            q -= dq;
        }
        z
    }

    pub fn reduced_merit(&self, p: &DVector<f64>, q0: &DVector<f64>) -> f64 {
        self.merit(&self.eliminate(p, q0))
    }

    /// Central second differences of the reduced merit.
    pub fn fd_reduced_hessian(&self, p: &DVector<f64>, q0: &DVector<f64>, h: f64) -> DMatrix<f64> {
        let n = self.n;
        let f = |dp: &[(usize, f64)]| {
            let mut pp = p.clone();
            for &(i, s) in dp {
                pp[i] += s;
            }
            self.reduced_merit(&pp, q0)
        };
        let f0 = f(&[]);
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                (f(&[(i, h)]) - 2.0 * f0 + f(&[(i, -h)])) / (h * h)
            } else {
                (f(&[(i, h), (j, h)]) - f(&[(i, h), (j, -h)]) - f(&[(i, -h), (j, h)]) + f(&[(i, -h), (j, -h)]))
                    / (4.0 * h * h)
            }
        })
    }

    /// `∇w = [I; −J_q⁻¹ J_p]`.
    pub fn sensitivity(&self, z: &DVector<f64>) -> DMatrix<f64> {
        let j = self.jacobian(z);
        let jp = j.columns(0, self.n).into_owned();
        let jq = j.columns(self.n, self.m).into_owned();
        let s = jq.lu().solve(&jp).expect("invertible dependent Jacobian");
        let mut w = DMatrix::zeros(self.n + self.m, self.n);
        w.view_mut((0, 0), (self.n, self.n)).fill_with_identity();
        w.view_mut((self.n, 0), (self.m, self.n)).copy_from(&(-s));
        w
    }

    pub fn solve(&self) -> KktSolution {
        let problem = self.problem();
        let mut z0 = self.c.clone();
        let q = self.eliminate(&self.c.rows(0, self.n).into_owned(), &self.c.rows(self.n, self.m).into_owned());
        z0.rows_mut(self.n, self.m).copy_from(&q.rows(self.n, self.m));
        solve_equality_constrained(&problem, &z0, &SolverOptions::default()).expect("solver runs")
    }
}

pub fn rel_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}
