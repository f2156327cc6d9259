use crate::error::{Error, Result};

/// Collocation nodes plus the node index of every measurement instant.
#[derive(Debug, Clone, PartialEq)]
pub struct CollocationMesh {
    node_times: Vec<f64>,
    measurement_nodes: Vec<usize>,
}

fn on_node(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

impl CollocationMesh {
    /// Nodes `t0, t0 + h, …, t1`; `t1 − t0` must be a whole number of steps.
    pub fn uniform(t0: f64, t1: f64, spacing: f64) -> Result<Self> {
        if !(spacing > 0.0 && t1 > t0) {
            return Err(Error::Spec(format!("invalid mesh [{t0}, {t1}] with spacing {spacing}")));
        }
        let count = ((t1 - t0) / spacing).round() as usize;
        if count == 0 || !on_node(t0 + count as f64 * spacing, t1) {
            return Err(Error::Spec(format!(
                "horizon {} is not a multiple of the spacing {spacing}",
                t1 - t0
            )));
        }
        let mut node_times: Vec<f64> = (0..=count).map(|k| t0 + k as f64 * spacing).collect();
        node_times[count] = t1;
        Self::new(node_times)
    }

    pub fn new(node_times: Vec<f64>) -> Result<Self> {
        if node_times.len() < 2 {
            return Err(Error::Spec("a mesh needs at least two nodes".into()));
        }
        if node_times.windows(2).any(|w| !(w[1] > w[0])) || !node_times.iter().all(|t| t.is_finite()) {
            return Err(Error::Spec("mesh nodes must be finite and strictly increasing".into()));
        }
        Ok(Self {
            node_times,
            measurement_nodes: Vec::new(),
        })
    }

    /// Maps each measurement instant to the node it coincides with.
    pub fn with_measurements(mut self, times: &[f64]) -> Result<Self> {
        let mut nodes = Vec::with_capacity(times.len());
        for &t in times {
            let k = self.node_times.partition_point(|&s| s < t);
            let hit = [k.checked_sub(1), Some(k)]
                .into_iter()
                .flatten()
                .filter(|&j| j < self.node_times.len())
                .find(|&j| on_node(self.node_times[j], t));
            match hit {
                Some(j) => {
                    if nodes.last().is_some_and(|&last| last >= j) {
                        return Err(Error::Spec(format!("measurement instants must increase (t = {t})")));
                    }
                    nodes.push(j);
                }
                None => return Err(Error::Spec(format!("measurement instant {t} is not a mesh node"))),
            }
        }
        self.measurement_nodes = nodes;
        Ok(self)
    }

    /// A mesh whose every interval is split into `factor` equal parts.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        let factor = factor.max(1);
        let mut t = Vec::with_capacity(self.n_intervals() * factor + 1);
        for w in self.node_times.windows(2) {
            for s in 0..factor {
                t.push(w[0] + (w[1] - w[0]) * s as f64 / factor as f64);
            }
        }
        t.push(self.end());
        let mut mesh = Self::new(t)?;
        mesh.measurement_nodes = self.measurement_nodes.iter().map(|&j| j * factor).collect();
        Ok(mesh)
    }

    pub fn node_times(&self) -> &[f64] {
        &self.node_times
    }

    pub fn measurement_nodes(&self) -> &[usize] {
        &self.measurement_nodes
    }

    pub fn measurement_times(&self) -> Vec<f64> {
        self.measurement_nodes.iter().map(|&j| self.node_times[j]).collect()
    }

    pub fn n_nodes(&self) -> usize {
        self.node_times.len()
    }

    pub fn n_intervals(&self) -> usize {
        self.node_times.len() - 1
    }

    /// Length of interval `k`.
    pub fn step(&self, k: usize) -> f64 {
        self.node_times[k + 1] - self.node_times[k]
    }

    pub fn start(&self) -> f64 {
        self.node_times[0]
    }

    pub fn end(&self) -> f64 {
        self.node_times[self.node_times.len() - 1]
    }
}
