//! Built-in dynamic models with analytic derivatives, and their simulators.

pub mod sim;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use sim::{
    measure, order15_additive, simulate_duffing, simulate_duffing_with_increments, simulate_ode,
    MeshTrajectory, SdeIncrements,
};

/// `ẋ = f(t, x, θ)` with derivatives with respect to the stacked `[x; θ]`.
pub trait OdeModel: Send + Sync {
    fn n_states(&self) -> usize;

    fn n_params(&self) -> usize;

    fn param_labels(&self) -> Vec<String>;

    fn state_labels(&self) -> Vec<String> {
        (1..=self.n_states()).map(|i| format!("x{i}")).collect()
    }

    fn drift(&self, t: f64, x: &[f64], theta: &[f64]) -> DVector<f64>;

    /// `∂f/∂[x; θ]`, `n_states × (n_states + n_params)`.
    fn drift_jacobian(&self, t: f64, x: &[f64], theta: &[f64]) -> DMatrix<f64>;

    /// `Σᵢ wᵢ ∇²fᵢ` over `[x; θ]`.
    fn drift_hessian_contraction(&self, t: f64, x: &[f64], theta: &[f64], w: &[f64])
        -> DMatrix<f64>;
}

/// `(x₂, μ(1 − x₁²)x₂ − x₁)`.
pub fn vdp_drift(x: [f64; 2], mu: f64) -> [f64; 2] {
    [x[1], mu * (1.0 - x[0] * x[0]) * x[1] - x[0]]
}

/// Van der Pol oscillator with `θ = [μ]`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct VanDerPol;

impl OdeModel for VanDerPol {
    fn n_states(&self) -> usize {
        2
    }

    fn n_params(&self) -> usize {
        1
    }

    fn param_labels(&self) -> Vec<String> {
        vec!["mu".into()]
    }

    fn drift(&self, _t: f64, x: &[f64], theta: &[f64]) -> DVector<f64> {
        let f = vdp_drift([x[0], x[1]], theta[0]);
        DVector::from_vec(f.to_vec())
    }

    fn drift_jacobian(&self, _t: f64, x: &[f64], theta: &[f64]) -> DMatrix<f64> {
        let (x1, x2, mu) = (x[0], x[1], theta[0]);
        DMatrix::from_row_slice(
            2,
            3,
            &[
                0.0,
                1.0,
                0.0,
                -2.0 * mu * x1 * x2 - 1.0,
                mu * (1.0 - x1 * x1),
                (1.0 - x1 * x1) * x2,
            ],
        )
    }

    fn drift_hessian_contraction(&self, _t: f64, x: &[f64], theta: &[f64], w: &[f64]) -> DMatrix<f64> {
        let (x1, x2, mu) = (x[0], x[1], theta[0]);
        let w = w[1];
        let a = -2.0 * mu * x2 * w;
        let b = -2.0 * mu * x1 * w;
        let c = -2.0 * x1 * x2 * w;
        let e = (1.0 - x1 * x1) * w;
        DMatrix::from_row_slice(3, 3, &[a, b, c, b, 0.0, e, c, e, 0.0])
    }
}

/// `ẋ = A x + B θ`; with `A = 0`, `B = 0` the states are constant.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearOde {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub param_labels: Vec<String>,
}

impl LinearOde {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>) -> Self {
        assert_eq!(a.nrows(), a.ncols(), "A must be square");
        assert_eq!(b.nrows(), a.nrows(), "B must have one row per state");
        let param_labels = (1..=b.ncols()).map(|i| format!("theta{i}")).collect();
        Self { a, b, param_labels }
    }

    /// A parameter-free model whose states never change.
    pub fn constant(n_states: usize) -> Self {
        Self::new(DMatrix::zeros(n_states, n_states), DMatrix::zeros(n_states, 0))
    }
}

impl OdeModel for LinearOde {
    fn n_states(&self) -> usize {
        self.a.nrows()
    }

    fn n_params(&self) -> usize {
        self.b.ncols()
    }

    fn param_labels(&self) -> Vec<String> {
        self.param_labels.clone()
    }

    fn drift(&self, _t: f64, x: &[f64], theta: &[f64]) -> DVector<f64> {
        &self.a * DVector::from_column_slice(x) + &self.b * DVector::from_column_slice(theta)
    }

    fn drift_jacobian(&self, _t: f64, _x: &[f64], _theta: &[f64]) -> DMatrix<f64> {
        let ns = self.n_states();
        let mut j = DMatrix::zeros(ns, ns + self.n_params());
        j.view_mut((0, 0), (ns, ns)).copy_from(&self.a);
        j.view_mut((0, ns), (ns, self.n_params())).copy_from(&self.b);
        j
    }

    fn drift_hessian_contraction(&self, _t: f64, _x: &[f64], _theta: &[f64], _w: &[f64]) -> DMatrix<f64> {
        let k = self.n_states() + self.n_params();
        DMatrix::zeros(k, k)
    }
}

/// Duffing coefficients entering the drift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DuffingParams {
    pub a: f64,
    pub b: f64,
    pub d: f64,
    pub gamma: f64,
}

/// `(ẋ, ż) = (−a z³ − b z − d x + γ cos t, x)`.
pub fn duffing_drift(x: f64, z: f64, t: f64, p: &DuffingParams) -> (f64, f64) {
    (-p.a * z * z * z - p.b * z - p.d * x + p.gamma * t.cos(), x)
}

/// The forced Duffing oscillator driven by additive noise on `x`, observed
/// through `z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DuffingModel {
    pub x0: f64,
    pub z0: f64,
    pub a: f64,
    pub b: f64,
    pub d: f64,
    pub sigma_y: f64,
    pub gamma: f64,
    pub sigma_d: f64,
    pub ts: f64,
    pub horizon: f64,
}

impl Default for DuffingModel {
    fn default() -> Self {
        Self {
            x0: 1.0,
            z0: 1.0,
            a: 1.0,
            b: -1.0,
            d: 0.2,
            sigma_y: 0.1,
            gamma: 0.3,
            sigma_d: 0.1,
            ts: 0.1,
            horizon: 200.0,
        }
    }
}

impl DuffingModel {
    pub fn params(&self) -> DuffingParams {
        DuffingParams {
            a: self.a,
            b: self.b,
            d: self.d,
            gamma: self.gamma,
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        for (k, v) in [
            ("sigma_d", self.sigma_d),
            ("sigma_y", self.sigma_y),
            ("ts", self.ts),
            ("horizon", self.horizon),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(crate::Error::Config(format!("{k} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}
