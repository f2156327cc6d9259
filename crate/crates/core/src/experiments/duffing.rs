//! Joint MAP experiment on the stochastic Duffing oscillator.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::filter::{derivative, interpolate, lowpass_zero_phase};
use crate::error::{Error, Result};
use crate::models::{duffing_drift, measure, simulate_duffing, DuffingModel, DuffingParams, MeshTrajectory};
use crate::seed::{derive_seed, purpose};
use crate::transcribe::{transcribe_joint_map, CollocationMesh, JointMapProblem, JointMapSpec};

fn default_sim_step() -> f64 {
    0.005
}
fn default_subdivision() -> usize {
    1
}
fn default_cutoff() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DuffingExperiment {
    #[serde(default)]
    pub model: DuffingModel,
    /// Step of the stochastic simulation that generates data.
    #[serde(default = "default_sim_step")]
    pub sim_step: f64,
    /// Collocation intervals per sampling period.
    #[serde(default = "default_subdivision")]
    pub mesh_subdivision: usize,
    /// Low-pass cutoff of the initial guess, rad per time unit.
    #[serde(default = "default_cutoff")]
    pub filter_cutoff: f64,
}

impl Default for DuffingExperiment {
    fn default() -> Self {
        Self {
            model: DuffingModel::default(),
            sim_step: default_sim_step(),
            mesh_subdivision: default_subdivision(),
            filter_cutoff: default_cutoff(),
        }
    }
}

/// A simulated dataset with the path that produced it.
#[derive(Debug, Clone)]
pub struct DuffingData {
    /// Path at the simulation step; columns `[x, z]`.
    pub path: MeshTrajectory,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl DuffingExperiment {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if !(self.sim_step > 0.0) {
            return Err(Error::Config("sim_step must be positive".into()));
        }
        let ratio = self.model.ts / self.sim_step;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio {
            return Err(Error::Config("ts must be a multiple of sim_step".into()));
        }
        self.mesh()?;
        Ok(())
    }

    pub fn measurement_times(&self) -> Vec<f64> {
        let count = (self.model.horizon / self.model.ts).round() as usize;
        (0..=count).map(|k| k as f64 * self.model.ts).collect()
    }

    pub fn mesh(&self) -> Result<CollocationMesh> {
        let coarse = CollocationMesh::uniform(0.0, self.model.horizon, self.model.ts)
            .and_then(|m| m.with_measurements(&self.measurement_times()))
            .map_err(|e| Error::Config(e.to_string()))?;
        coarse.refined(self.mesh_subdivision)
    }

    /// Simulates at `sim_step` and samples `z` every `ts` with noise.
    pub fn generate(&self, master: u64) -> Result<DuffingData> {
        self.validate()?;
        let path = simulate_duffing(
            &self.model,
            self.sim_step,
            derive_seed(master, purpose::PROCESS_NOISE, 0),
        )?;
        let every = (self.model.ts / self.sim_step).round() as usize;
        let nodes: Vec<usize> = (0..path.len()).step_by(every).collect();
        let values = measure(
            &path,
            1,
            &nodes,
            self.model.sigma_y,
            derive_seed(master, purpose::MEASUREMENT_NOISE, 0),
        )?;
        Ok(DuffingData {
            times: self.measurement_times(),
            values,
            path,
        })
    }

    pub fn problem(&self, data: Vec<f64>) -> Result<JointMapProblem> {
        transcribe_joint_map(JointMapSpec {
            gamma: self.model.gamma,
            sigma_d: self.model.sigma_d,
            data,
            mesh: self.mesh()?,
        })
    }

    /// Smoothed measurements for `z`, their derivative for `x`,
    /// least-squares `(a, b, d)` from the `ẋ` equation, and the noise path
    /// that makes the `x` defects vanish.
    pub fn initial_point(&self, problem: &JointMapProblem) -> Result<DVector<f64>> {
        let data = &problem.spec().data;
        let mesh = problem.mesh();
        let times = mesh.measurement_times();
        let dt = self.model.ts;
        let zf = lowpass_zero_phase(data, dt, self.filter_cutoff);
        let xf = derivative(&zf, dt);
        let xdot = derivative(&xf, dt);

        let gamma = self.model.gamma;
        let regress = DMatrix::from_fn(zf.len(), 3, |k, c| match c {
            0 => -zf[k].powi(3),
            1 => -zf[k],
            _ => -xf[k],
        });
        let target = DVector::from_fn(zf.len(), |k, _| xdot[k] - gamma * times[k].cos());
        let coef = regress
            .clone()
            .svd(true, true)
            .solve(&target, 1e-12)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let resid: f64 = data.iter().zip(&zf).map(|(y, z)| (y - z).powi(2)).sum::<f64>() / data.len() as f64;
        let theta = [coef[0], coef[1], coef[2], resid.sqrt().max(1e-3)];

        let nodes = mesh.node_times();
        let zs = interpolate(&times, &zf, nodes);
        let xs = interpolate(&times, &xf, nodes);
        let par = DuffingParams {
            a: theta[0],
            b: theta[1],
            d: theta[2],
            gamma,
        };
        let f: Vec<f64> = (0..nodes.len())
            .map(|j| duffing_drift(xs[j], zs[j], nodes[j], &par).0)
            .collect();
        let eta: Vec<f64> = (0..mesh.n_intervals())
            .map(|k| {
                let h = mesh.step(k);
                (xs[k + 1] - xs[k] - 0.5 * h * (f[k] + f[k + 1])) / (h * self.model.sigma_d)
            })
            .collect();
        problem.pack(&theta, &zs, &xs, &eta)
    }

    pub fn truth(&self) -> [f64; 4] {
        [self.model.a, self.model.b, self.model.d, self.model.sigma_y]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn data_counts() {
        let exp = DuffingExperiment {
            model: DuffingModel {
                horizon: 20.0,
                ..DuffingModel::default()
            },
            ..DuffingExperiment::default()
        };
        let d = exp.generate(1).unwrap();
        assert_eq!(d.values.len(), 201);
        assert_eq!(d.path.len(), 4001);
        assert_eq!(exp.mesh().unwrap().n_nodes(), 201);
        let full = DuffingExperiment::default();
        assert_eq!(full.measurement_times().len(), 2001);
    }
}
