use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{duffing_drift, DuffingModel, OdeModel};
use crate::error::{check_dim, Error, Result};
use crate::seed::rng_from_seed;

/// States sampled on a time grid, one row per node.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshTrajectory {
    pub times: Vec<f64>,
    pub states: DMatrix<f64>,
    pub state_labels: Vec<String>,
}

impl MeshTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn component(&self, i: usize) -> Vec<f64> {
        self.states.column(i).iter().copied().collect()
    }

    pub fn state(&self, node: usize) -> Vec<f64> {
        self.states.row(node).iter().copied().collect()
    }

    /// Every `every`-th node, starting from the first.
    pub fn subsample(&self, every: usize) -> Self {
        let idx: Vec<usize> = (0..self.len()).step_by(every.max(1)).collect();
        Self {
            times: idx.iter().map(|&k| self.times[k]).collect(),
            states: self.states.select_rows(idx.iter()),
            state_labels: self.state_labels.clone(),
        }
    }
}

fn rk4_step(f: &dyn Fn(f64, &DVector<f64>) -> DVector<f64>, t: f64, x: &DVector<f64>, h: f64) -> DVector<f64> {
    let k1 = f(t, x);
    let k2 = f(t + 0.5 * h, &(x + &k1 * (0.5 * h)));
    let k3 = f(t + 0.5 * h, &(x + &k2 * (0.5 * h)));
    let k4 = f(t + h, &(x + &k3 * h));
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

/// Classical Runge–Kutta on the given nodes, with `substeps` equal steps per
/// interval.
pub fn simulate_ode(
    model: &dyn OdeModel,
    theta: &[f64],
    x0: &[f64],
    times: &[f64],
    substeps: usize,
) -> Result<MeshTrajectory> {
    check_dim("initial state", model.n_states(), x0.len())?;
    check_dim("parameters", model.n_params(), theta.len())?;
    if times.is_empty() {
        return Err(Error::InvalidArgument("empty time grid".into()));
    }
    let sub = substeps.max(1);
    let f = |t: f64, x: &DVector<f64>| model.drift(t, x.as_slice(), theta);
    let mut states = DMatrix::zeros(times.len(), x0.len());
    let mut x = DVector::from_column_slice(x0);
    states.row_mut(0).copy_from(&x.transpose());
    for k in 1..times.len() {
        let h = (times[k] - times[k - 1]) / sub as f64;
        if !(h > 0.0) {
            return Err(Error::InvalidArgument("time grid must increase".into()));
        }
        for s in 0..sub {
            x = rk4_step(&f, times[k - 1] + s as f64 * h, &x, h);
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::BlowUp { time: times[k] });
        }
        states.row_mut(k).copy_from(&x.transpose());
    }
    Ok(MeshTrajectory {
        times: times.to_vec(),
        states,
        state_labels: model.state_labels(),
    })
}

/// Wiener increments `ΔW` and their time integrals `ΔZ = ∫(W_s − W_t) ds`
/// over consecutive steps of equal length.
#[derive(Debug, Clone, PartialEq)]
pub struct SdeIncrements {
    pub step: f64,
    pub dw: Vec<f64>,
    pub dz: Vec<f64>,
}

impl SdeIncrements {
    /// `ΔW = U₁√Δ`, `ΔZ = ½Δ^{3/2}(U₁ + U₂/√3)` with `U₁, U₂` independent
    /// standard normals.
    pub fn draw<R: Rng + ?Sized>(rng: &mut R, count: usize, step: f64) -> Self {
        let sq = step.sqrt();
        let mut dw = Vec::with_capacity(count);
        let mut dz = Vec::with_capacity(count);
        for _ in 0..count {
            let u1: f64 = rng.sample(StandardNormal);
            let u2: f64 = rng.sample(StandardNormal);
            dw.push(u1 * sq);
            dz.push(0.5 * step * sq * (u1 + u2 / 3f64.sqrt()));
        }
        Self { step, dw, dz }
    }

    pub fn len(&self) -> usize {
        self.dw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dw.is_empty()
    }

    /// The same Brownian path seen on a grid `factor` times coarser.
    pub fn coarsen(&self, factor: usize) -> Self {
        let coarse = self.len() / factor;
        let mut dw = Vec::with_capacity(coarse);
        let mut dz = Vec::with_capacity(coarse);
        for c in 0..coarse {
            let mut w = 0.0;
            let mut z = 0.0;
            for i in c * factor..(c + 1) * factor {
                z += self.dz[i] + w * self.step;
                w += self.dw[i];
            }
            dw.push(w);
            dz.push(z);
        }
        Self {
            step: self.step * factor as f64,
            dw,
            dz,
        }
    }
}

/// Explicit strong order-1.5 scheme for `dY = a(t, Y) dt + b dW` with constant
/// `b` and a scalar Wiener process.
pub fn order15_additive(
    drift: &dyn Fn(f64, &DVector<f64>) -> DVector<f64>,
    diffusion: &DVector<f64>,
    x0: &DVector<f64>,
    t0: f64,
    increments: &SdeIncrements,
) -> Result<Vec<DVector<f64>>> {
    let dt = increments.step;
    let sq = dt.sqrt();
    let mut out = Vec::with_capacity(increments.len() + 1);
    let mut y = x0.clone();
    out.push(y.clone());
    for k in 0..increments.len() {
        let t = t0 + k as f64 * dt;
        let a = drift(t, &y);
        let base = &y + &a * dt;
        let up = drift(t + dt, &(&base + diffusion * sq));
        let dn = drift(t + dt, &(&base - diffusion * sq));
        y = &y
            + diffusion * increments.dw[k]
            + (&up - &dn) * (increments.dz[k] / (2.0 * sq))
            + (&up + &a * 2.0 + &dn) * (0.25 * dt);
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::BlowUp { time: t + dt });
        }
        out.push(y.clone());
    }
    Ok(out)
}

/// Duffing path on the increments' grid from `t = 0`; columns `[x, z]`.
pub fn simulate_duffing_with_increments(model: &DuffingModel, increments: &SdeIncrements) -> Result<MeshTrajectory> {
    let p = model.params();
    let drift = |t: f64, y: &DVector<f64>| {
        let (dx, dz) = duffing_drift(y[0], y[1], t, &p);
        DVector::from_vec(vec![dx, dz])
    };
    let b = DVector::from_vec(vec![model.sigma_d, 0.0]);
    let path = order15_additive(&drift, &b, &DVector::from_vec(vec![model.x0, model.z0]), 0.0, increments)?;
    let mut states = DMatrix::zeros(path.len(), 2);
    for (k, y) in path.iter().enumerate() {
        states[(k, 0)] = y[0];
        states[(k, 1)] = y[1];
    }
    Ok(MeshTrajectory {
        times: (0..path.len()).map(|k| k as f64 * increments.step).collect(),
        states,
        state_labels: vec!["x".into(), "z".into()],
    })
}

/// Duffing path over `[0, horizon]` at `step`, driven by the stream `seed`.
pub fn simulate_duffing(model: &DuffingModel, step: f64, seed: u64) -> Result<MeshTrajectory> {
    if !(step > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {step}")));
    }
    let count = (model.horizon / step).round() as usize;
    let inc = SdeIncrements::draw(&mut rng_from_seed(seed), count, step);
    simulate_duffing_with_increments(model, &inc)
}

/// `y_k = traj[nodes[k], component] + N(0, noise_std²)`.
pub fn measure(
    traj: &MeshTrajectory,
    component: usize,
    nodes: &[usize],
    noise_std: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    if !(noise_std >= 0.0) {
        return Err(Error::InvalidArgument(format!("noise std must be nonnegative, got {noise_std}")));
    }
    let mut rng = rng_from_seed(seed);
    nodes
        .iter()
        .map(|&k| {
            if k >= traj.len() {
                return Err(Error::InvalidArgument(format!("node {k} beyond trajectory")));
            }
            let e: f64 = rng.sample(StandardNormal);
            Ok(traj.states[(k, component)] + noise_std * e)
        })
        .collect()
}
