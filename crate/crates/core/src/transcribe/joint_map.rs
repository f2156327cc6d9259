//! Joint MAP estimation of the Duffing state path, process-noise path and
//! parameters.
//!
//! Layout of `z`:
//!
//! ```text
//! p = [a, b, d, σ_y, z₀, x₀, …, x_K]
//! q = [z₁, η₀, z₂, η₁, …, z_K, η_{K−1}]
//! ```
//!
//! `η_k` is constant on interval `k`. Constraint `2k` is the trapezoidal
//! defect of `ż = x` on interval `k`, constraint `2k + 1` that of
//! `ẋ = −a z³ − b z − d x + γ cos t + σ_d η`. With this ordering `∇_q g` is
//! block lower bidiagonal with 2×2 diagonal blocks `[[1, 0], [·, −h σ_d]]`.

use nalgebra::DVector;

use super::mesh::CollocationMesh;
use crate::error::{check_dim, Error, Result};
use crate::kkt::ConstrainedProblem;
use crate::linalg::{SymTriplets, Triplets};
use crate::models::{duffing_drift, DuffingParams};

pub const N_THETA: usize = 4;
const A: usize = 0;
const B: usize = 1;
const D: usize = 2;
const SIGMA_Y: usize = 3;
const Z0: usize = 4;
const X0: usize = 5;

#[derive(Debug, Clone)]
pub struct JointMapSpec {
    pub gamma: f64,
    pub sigma_d: f64,
    /// Measurements of `z`, one per measurement node of the mesh.
    pub data: Vec<f64>,
    pub mesh: CollocationMesh,
}

#[derive(Debug, Clone)]
pub struct JointMapProblem {
    spec: JointMapSpec,
    k: usize,
    n: usize,
    m: usize,
}

pub fn transcribe_joint_map(spec: JointMapSpec) -> Result<JointMapProblem> {
    if spec.data.len() != spec.mesh.measurement_nodes().len() || spec.data.is_empty() {
        return Err(Error::Spec(format!(
            "{} data values for {} measurement instants",
            spec.data.len(),
            spec.mesh.measurement_nodes().len()
        )));
    }
    if !(spec.sigma_d > 0.0) {
        return Err(Error::Spec(format!("sigma_d must be positive, got {}", spec.sigma_d)));
    }
    let k = spec.mesh.n_intervals();
    Ok(JointMapProblem {
        n: X0 + k + 1,
        m: 2 * k,
        k,
        spec,
    })
}

impl JointMapProblem {
    pub fn spec(&self) -> &JointMapSpec {
        &self.spec
    }

    pub fn mesh(&self) -> &CollocationMesh {
        &self.spec.mesh
    }

    pub fn z_index(&self, node: usize) -> usize {
        if node == 0 {
            Z0
        } else {
            self.n + 2 * (node - 1)
        }
    }

    pub fn x_index(&self, node: usize) -> usize {
        X0 + node
    }

    pub fn eta_index(&self, interval: usize) -> usize {
        self.n + 2 * interval + 1
    }

    pub fn sigma_y_index(&self) -> usize {
        SIGMA_Y
    }

    fn params(&self, z: &DVector<f64>) -> DuffingParams {
        DuffingParams {
            a: z[A],
            b: z[B],
            d: z[D],
            gamma: self.spec.gamma,
        }
    }

    fn drift_x(&self, z: &DVector<f64>, node: usize, p: &DuffingParams) -> f64 {
        let t = self.spec.mesh.node_times()[node];
        duffing_drift(z[self.x_index(node)], z[self.z_index(node)], t, p).0
    }

    /// Builds `z` from `[a, b, d, σ_y]` and node/interval paths.
    pub fn pack(&self, theta: &[f64], zs: &[f64], xs: &[f64], eta: &[f64]) -> Result<DVector<f64>> {
        check_dim("parameters", N_THETA, theta.len())?;
        check_dim("z path", self.k + 1, zs.len())?;
        check_dim("x path", self.k + 1, xs.len())?;
        check_dim("noise path", self.k, eta.len())?;
        let mut z = DVector::zeros(self.n + self.m);
        z.rows_mut(0, N_THETA).copy_from_slice(theta);
        for j in 0..=self.k {
            z[self.z_index(j)] = zs[j];
            z[self.x_index(j)] = xs[j];
        }
        for (k, &e) in eta.iter().enumerate() {
            z[self.eta_index(k)] = e;
        }
        Ok(z)
    }

    pub fn z_path(&self, z: &DVector<f64>) -> Vec<f64> {
        (0..=self.k).map(|j| z[self.z_index(j)]).collect()
    }

    pub fn x_path(&self, z: &DVector<f64>) -> Vec<f64> {
        (0..=self.k).map(|j| z[self.x_index(j)]).collect()
    }

    pub fn eta_path(&self, z: &DVector<f64>) -> Vec<f64> {
        (0..self.k).map(|k| z[self.eta_index(k)]).collect()
    }

    /// `w(p)`: solves the constraints forward in time for `z₁…z_K` and
    /// `η₀…η_{K−1}`, returning the full decision vector.
    pub fn eliminate(&self, p: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("p", self.n, p.len())?;
        let mut z = DVector::zeros(self.n + self.m);
        z.rows_mut(0, self.n).copy_from(p);
        let par = self.params(&z);
        let hsd = self.spec.sigma_d;
        let mut f_prev = self.drift_x(&z, 0, &par);
        for k in 0..self.k {
            let h = self.spec.mesh.step(k);
            let (xk, xk1) = (z[self.x_index(k)], z[self.x_index(k + 1)]);
            z[self.z_index(k + 1)] = z[self.z_index(k)] + 0.5 * h * (xk + xk1);
            let f_next = self.drift_x(&z, k + 1, &par);
            z[self.eta_index(k)] = (xk1 - xk - 0.5 * h * (f_prev + f_next)) / (h * hsd);
            f_prev = f_next;
        }
        if !z.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("forward elimination"));
        }
        Ok(z)
    }
}

impl ConstrainedProblem for JointMapProblem {
    fn n_independent(&self) -> usize {
        self.n
    }

    fn n_dependent(&self) -> usize {
        self.m
    }

    fn merit(&self, z: &DVector<f64>) -> f64 {
        let s = z[SIGMA_Y];
        let mesh = &self.spec.mesh;
        let ss: f64 = mesh
            .measurement_nodes()
            .iter()
            .zip(&self.spec.data)
            .map(|(&j, y)| (y - z[self.z_index(j)]).powi(2))
            .sum();
        let noise: f64 = (0..self.k).map(|k| mesh.step(k) * z[self.eta_index(k)].powi(2)).sum();
        let horizon = mesh.end() - mesh.start();
        -0.5 * ss / (s * s) - self.spec.data.len() as f64 * s.ln() - 0.5 * noise + 0.5 * horizon * z[D]
    }

    fn merit_gradient(&self, z: &DVector<f64>) -> DVector<f64> {
        let s = z[SIGMA_Y];
        let mesh = &self.spec.mesh;
        let mut g = DVector::zeros(z.len());
        let mut ss = 0.0;
        for (&j, y) in mesh.measurement_nodes().iter().zip(&self.spec.data) {
            let i = self.z_index(j);
            let e = y - z[i];
            g[i] += e / (s * s);
            ss += e * e;
        }
        g[SIGMA_Y] = -(self.spec.data.len() as f64) / s + ss / (s * s * s);
        for k in 0..self.k {
            let i = self.eta_index(k);
            g[i] = -mesh.step(k) * z[i];
        }
        g[D] = 0.5 * (mesh.end() - mesh.start());
        g
    }

    fn merit_hessian(&self, z: &DVector<f64>) -> SymTriplets {
        let s = z[SIGMA_Y];
        let mesh = &self.spec.mesh;
        let mut h = SymTriplets::new(z.len());
        let mut ss = 0.0;
        for (&j, y) in mesh.measurement_nodes().iter().zip(&self.spec.data) {
            let i = self.z_index(j);
            let e = y - z[i];
            h.push(i, i, -1.0 / (s * s));
            h.push(i, SIGMA_Y, -2.0 * e / (s * s * s));
            ss += e * e;
        }
        let ny = self.spec.data.len() as f64;
        h.push(SIGMA_Y, SIGMA_Y, ny / (s * s) - 3.0 * ss / (s * s * s * s));
        for k in 0..self.k {
            let i = self.eta_index(k);
            h.push(i, i, -mesh.step(k));
        }
        h
    }

    fn constraints(&self, z: &DVector<f64>) -> DVector<f64> {
        let par = self.params(z);
        let mut g = DVector::zeros(self.m);
        let mut f_prev = self.drift_x(z, 0, &par);
        for k in 0..self.k {
            let h = self.spec.mesh.step(k);
            let f_next = self.drift_x(z, k + 1, &par);
            let (xk, xk1) = (z[self.x_index(k)], z[self.x_index(k + 1)]);
            let (zk, zk1) = (z[self.z_index(k)], z[self.z_index(k + 1)]);
            g[2 * k] = super::trapezoidal_defect(&[zk], &[zk1], &[xk], &[xk1], h)[0];
            g[2 * k + 1] = super::trapezoidal_defect(&[xk], &[xk1], &[f_prev], &[f_next], h)[0]
                - h * self.spec.sigma_d * z[self.eta_index(k)];
            f_prev = f_next;
        }
        g
    }

    fn constraint_jacobian(&self, z: &DVector<f64>) -> Triplets {
        let (a, b, d) = (z[A], z[B], z[D]);
        let mut out = Triplets::with_capacity(self.m, self.n + self.m, 13 * self.k);
        for k in 0..self.k {
            let h2 = 0.5 * self.spec.mesh.step(k);
            let (ik, ik1) = (self.z_index(k), self.z_index(k + 1));
            let (jk, jk1) = (self.x_index(k), self.x_index(k + 1));
            let (zk, zk1) = (z[ik], z[ik1]);
            let r = 2 * k;
            out.push(r, ik1, 1.0);
            out.push(r, ik, -1.0);
            out.push(r, jk, -h2);
            out.push(r, jk1, -h2);

            let r = 2 * k + 1;
            let fz = |zz: f64| -3.0 * a * zz * zz - b;
            out.push(r, jk1, 1.0 + h2 * d);
            out.push(r, jk, -1.0 + h2 * d);
            out.push(r, ik, -h2 * fz(zk));
            out.push(r, ik1, -h2 * fz(zk1));
            out.push(r, A, h2 * (zk.powi(3) + zk1.powi(3)));
            out.push(r, B, h2 * (zk + zk1));
            out.push(r, D, h2 * (z[jk] + z[jk1]));
            out.push(r, self.eta_index(k), -2.0 * h2 * self.spec.sigma_d);
        }
        out
    }

    fn constraint_hessian_contraction(&self, z: &DVector<f64>, lambda: &DVector<f64>) -> SymTriplets {
        let a = z[A];
        let mut out = SymTriplets::new(self.n + self.m);
        for j in 0..=self.k {
            let mut w = 0.0;
            if j > 0 {
                w -= 0.5 * self.spec.mesh.step(j - 1) * lambda[2 * (j - 1) + 1];
            }
            if j < self.k {
                w -= 0.5 * self.spec.mesh.step(j) * lambda[2 * j + 1];
            }
            let iz = self.z_index(j);
            let zj = z[iz];
            out.push(iz, iz, -6.0 * a * zj * w);
            out.push(iz, A, -3.0 * zj * zj * w);
            out.push(iz, B, -w);
            out.push(self.x_index(j), D, -w);
        }
        out
    }

    fn variable_labels(&self) -> Vec<String> {
        let mut l: Vec<String> = ["a", "b", "d", "sigma_y", "z_0"].iter().map(|s| s.to_string()).collect();
        l.extend((0..=self.k).map(|j| format!("x_{j}")));
        for k in 0..self.k {
            l.push(format!("z_{}", k + 1));
            l.push(format!("eta_{k}"));
        }
        l
    }

    fn positive_variables(&self) -> Vec<usize> {
        vec![SIGMA_Y]
    }
}
