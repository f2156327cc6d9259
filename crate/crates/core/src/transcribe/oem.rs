//! Output-error identification by trapezoidal collocation.
//!
//! Layout of `z`: `p = [θ, σ?, x(t₀)]`, `q = [x(t₁), …, x(t_K)]`, node-major.
//! Constraint block `k` is the defect of interval `[t_k, t_{k+1}]`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::mesh::CollocationMesh;
use crate::error::{Error, Result};
use crate::kkt::ConstrainedProblem;
use crate::linalg::{SymTriplets, Triplets};
use crate::models::OdeModel;

/// Treatment of the measurement noise standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseScale {
    /// `σ` is a decision variable.
    Estimated,
    Known(f64),
}

#[derive(Clone)]
pub struct OemSpec {
    pub model: Arc<dyn OdeModel>,
    /// Index of the measured state.
    pub observed: usize,
    /// One value per measurement node of the mesh.
    pub data: Vec<f64>,
    pub mesh: CollocationMesh,
    pub noise: NoiseScale,
}

impl std::fmt::Debug for OemSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OemSpec")
            .field("observed", &self.observed)
            .field("data_len", &self.data.len())
            .field("nodes", &self.mesh.n_nodes())
            .field("noise", &self.noise)
            .finish()
    }
}

#[derive(Debug, Clone)]
pub struct OemProblem {
    spec: OemSpec,
    ns: usize,
    np: usize,
    n: usize,
    m: usize,
}

pub fn transcribe_oem(spec: OemSpec) -> Result<OemProblem> {
    let ns = spec.model.n_states();
    let np = spec.model.n_params();
    if spec.observed >= ns {
        return Err(Error::Spec(format!("observed state {} out of range", spec.observed)));
    }
    if spec.data.len() != spec.mesh.measurement_nodes().len() {
        return Err(Error::Spec(format!(
            "{} data values for {} measurement instants",
            spec.data.len(),
            spec.mesh.measurement_nodes().len()
        )));
    }
    if spec.data.is_empty() {
        return Err(Error::Spec("no measurements".into()));
    }
    if let NoiseScale::Known(s) = spec.noise {
        if !(s > 0.0) {
            return Err(Error::Spec(format!("known noise scale must be positive, got {s}")));
        }
    }
    let est = usize::from(spec.noise == NoiseScale::Estimated);
    Ok(OemProblem {
        n: np + est + ns,
        m: spec.mesh.n_intervals() * ns,
        ns,
        np,
        spec,
    })
}

impl OemProblem {
    pub fn spec(&self) -> &OemSpec {
        &self.spec
    }

    pub fn mesh(&self) -> &CollocationMesh {
        &self.spec.mesh
    }

    pub fn n_states(&self) -> usize {
        self.ns
    }

    pub fn n_params(&self) -> usize {
        self.np
    }

    pub fn theta_index(&self, i: usize) -> usize {
        i
    }

    pub fn sigma_index(&self) -> Option<usize> {
        (self.spec.noise == NoiseScale::Estimated).then_some(self.np)
    }

    /// Position of state `i` at node `j`.
    pub fn state_index(&self, node: usize, i: usize) -> usize {
        if node == 0 {
            self.n - self.ns + i
        } else {
            self.n + (node - 1) * self.ns + i
        }
    }

    fn sigma(&self, z: &DVector<f64>) -> f64 {
        match self.spec.noise {
            NoiseScale::Estimated => z[self.np],
            NoiseScale::Known(s) => s,
        }
    }

    fn state<'a>(&self, z: &'a DVector<f64>, node: usize) -> &'a [f64] {
        let i = self.state_index(node, 0);
        &z.as_slice()[i..i + self.ns]
    }

    fn theta<'a>(&self, z: &'a DVector<f64>) -> &'a [f64] {
        &z.as_slice()[..self.np]
    }

    /// Builds `z` from parameters, `σ` (ignored when known) and a
    /// `nodes × states` path.
    pub fn pack(&self, theta: &[f64], sigma: f64, states: &DMatrix<f64>) -> Result<DVector<f64>> {
        crate::error::check_dim("parameters", self.np, theta.len())?;
        crate::error::check_dim("path nodes", self.spec.mesh.n_nodes(), states.nrows())?;
        crate::error::check_dim("path states", self.ns, states.ncols())?;
        let mut z = DVector::zeros(self.n + self.m);
        z.rows_mut(0, self.np).copy_from_slice(theta);
        if let Some(s) = self.sigma_index() {
            z[s] = sigma;
        }
        for j in 0..states.nrows() {
            for i in 0..self.ns {
                z[self.state_index(j, i)] = states[(j, i)];
            }
        }
        Ok(z)
    }

    /// The `nodes × states` path held in `z`.
    pub fn path(&self, z: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(self.spec.mesh.n_nodes(), self.ns, |j, i| z[self.state_index(j, i)])
    }

    fn residuals(&self, z: &DVector<f64>) -> impl Iterator<Item = (usize, f64)> + '_ {
        let obs = self.spec.observed;
        let nodes = self.spec.mesh.measurement_nodes();
        let idx: Vec<usize> = nodes.iter().map(|&j| self.state_index(j, obs)).collect();
        let e: Vec<f64> = idx.iter().zip(&self.spec.data).map(|(&i, y)| y - z[i]).collect();
        idx.into_iter().zip(e)
    }

    fn node_drifts(&self, z: &DVector<f64>) -> Vec<DVector<f64>> {
        let t = self.spec.mesh.node_times();
        let theta = self.theta(z);
        (0..t.len())
            .map(|j| self.spec.model.drift(t[j], self.state(z, j), theta))
            .collect()
    }
}

impl ConstrainedProblem for OemProblem {
    fn n_independent(&self) -> usize {
        self.n
    }

    fn n_dependent(&self) -> usize {
        self.m
    }

    fn merit(&self, z: &DVector<f64>) -> f64 {
        let s = self.sigma(z);
        let ss: f64 = self.residuals(z).map(|(_, e)| e * e).sum();
        let quad = -0.5 * ss / (s * s);
        match self.spec.noise {
            NoiseScale::Estimated => quad - self.spec.data.len() as f64 * s.ln(),
            NoiseScale::Known(_) => quad,
        }
    }

    fn merit_gradient(&self, z: &DVector<f64>) -> DVector<f64> {
        let s = self.sigma(z);
        let mut g = DVector::zeros(z.len());
        let mut ss = 0.0;
        for (i, e) in self.residuals(z) {
            g[i] += e / (s * s);
            ss += e * e;
        }
        if let Some(si) = self.sigma_index() {
            g[si] = -(self.spec.data.len() as f64) / s + ss / (s * s * s);
        }
        g
    }

    fn merit_hessian(&self, z: &DVector<f64>) -> SymTriplets {
        let s = self.sigma(z);
        let mut h = SymTriplets::new(z.len());
        let mut ss = 0.0;
        for (i, e) in self.residuals(z) {
            h.push(i, i, -1.0 / (s * s));
            if let Some(si) = self.sigma_index() {
                h.push(i, si, -2.0 * e / (s * s * s));
            }
            ss += e * e;
        }
        if let Some(si) = self.sigma_index() {
            let ny = self.spec.data.len() as f64;
            h.push(si, si, ny / (s * s) - 3.0 * ss / (s * s * s * s));
        }
        h
    }

    fn constraints(&self, z: &DVector<f64>) -> DVector<f64> {
        let f = self.node_drifts(z);
        let mut g = DVector::zeros(self.m);
        for k in 0..self.spec.mesh.n_intervals() {
            let d = super::trapezoidal_defect(
                self.state(z, k),
                self.state(z, k + 1),
                f[k].as_slice(),
                f[k + 1].as_slice(),
                self.spec.mesh.step(k),
            );
            g.rows_mut(k * self.ns, self.ns).copy_from_slice(&d);
        }
        g
    }

    fn constraint_jacobian(&self, z: &DVector<f64>) -> Triplets {
        let (ns, np) = (self.ns, self.np);
        let t = self.spec.mesh.node_times();
        let theta = self.theta(z);
        let jac: Vec<DMatrix<f64>> = (0..t.len())
            .map(|j| self.spec.model.drift_jacobian(t[j], self.state(z, j), theta))
            .collect();
        let mut out = Triplets::with_capacity(self.m, self.n + self.m, self.m * (2 * ns + np));
        for k in 0..self.spec.mesh.n_intervals() {
            let h2 = 0.5 * self.spec.mesh.step(k);
            for i in 0..ns {
                let r = k * ns + i;
                for c in 0..ns {
                    let eye = if i == c { 1.0 } else { 0.0 };
                    out.push(r, self.state_index(k, c), -eye - h2 * jac[k][(i, c)]);
                    out.push(r, self.state_index(k + 1, c), eye - h2 * jac[k + 1][(i, c)]);
                }
                for c in 0..np {
                    out.push(r, self.theta_index(c), -h2 * (jac[k][(i, ns + c)] + jac[k + 1][(i, ns + c)]));
                }
            }
        }
        out
    }

    fn constraint_hessian_contraction(&self, z: &DVector<f64>, lambda: &DVector<f64>) -> SymTriplets {
        let (ns, np) = (self.ns, self.np);
        let t = self.spec.mesh.node_times();
        let theta = self.theta(z);
        let kmax = self.spec.mesh.n_intervals();
        let mut out = SymTriplets::new(self.n + self.m);
        let global = |j: usize, a: usize| if a < ns { self.state_index(j, a) } else { self.theta_index(a - ns) };
        for j in 0..t.len() {
            let mut w = vec![0.0; ns];
            if j > 0 {
                let h2 = 0.5 * self.spec.mesh.step(j - 1);
                for i in 0..ns {
                    w[i] -= h2 * lambda[(j - 1) * ns + i];
                }
            }
            if j < kmax {
                let h2 = 0.5 * self.spec.mesh.step(j);
                for i in 0..ns {
                    w[i] -= h2 * lambda[j * ns + i];
                }
            }
            let c = self.spec.model.drift_hessian_contraction(t[j], self.state(z, j), theta, &w);
            for a in 0..ns + np {
                for b in 0..=a {
                    let v = c[(a, b)];
                    if v != 0.0 {
                        out.push(global(j, a), global(j, b), v);
                    }
                }
            }
        }
        out
    }

    fn variable_labels(&self) -> Vec<String> {
        let mut labels = self.spec.model.param_labels();
        if self.sigma_index().is_some() {
            labels.push("sigma".into());
        }
        let names = self.spec.model.state_labels();
        for j in 0..self.spec.mesh.n_nodes() {
            for name in &names {
                labels.push(format!("{name}_{j}"));
            }
        }
        labels
    }

    fn positive_variables(&self) -> Vec<usize> {
        self.sigma_index().into_iter().collect()
    }
}
