use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use crate::linalg::{SymTriplets, Triplets};

/// Equality-constrained maximization of a merit `ℓ(z)` subject to `g(z) = 0`.
///
/// The decision vector is ordered `z = [p; q]`: the `n` independent variables
/// come first, followed by the `m` dependent ones. There are exactly `m`
/// constraints, so the Jacobian block `∇_q g` is square.
///
/// Implementations must be deterministic and free of interior mutability so
/// that one problem can be evaluated from several threads.
pub trait ConstrainedProblem: Sync {
    /// `n`, the length of `p`.
    fn n_independent(&self) -> usize;

    /// `m`, the length of `q` and the number of constraints.
    fn n_dependent(&self) -> usize;

    fn n_vars(&self) -> usize {
        self.n_independent() + self.n_dependent()
    }

    fn merit(&self, z: &DVector<f64>) -> f64;

    fn merit_gradient(&self, z: &DVector<f64>) -> DVector<f64>;

    fn merit_hessian(&self, z: &DVector<f64>) -> SymTriplets;

    fn constraints(&self, z: &DVector<f64>) -> DVector<f64>;

    /// `∇g(z)`, `m × (n + m)`.
    fn constraint_jacobian(&self, z: &DVector<f64>) -> Triplets;

    /// `Σᵢ λᵢ ∇²gᵢ(z)`.
    fn constraint_hessian_contraction(&self, z: &DVector<f64>, lambda: &DVector<f64>)
        -> SymTriplets;

    fn variable_labels(&self) -> Vec<String> {
        (0..self.n_vars()).map(|i| format!("z{i}")).collect()
    }

    /// Indices that must stay strictly positive (noise scales).
    fn positive_variables(&self) -> Vec<usize> {
        Vec::new()
    }

    fn partition(&self) -> VariablePartition {
        VariablePartition {
            n: self.n_independent(),
            m: self.n_dependent(),
        }
    }
}

/// Split of `z` into the independent block `p` and dependent block `q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VariablePartition {
    pub n: usize,
    pub m: usize,
}

impl VariablePartition {
    pub fn independent(&self) -> Range<usize> {
        0..self.n
    }

    pub fn dependent(&self) -> Range<usize> {
        self.n..self.n + self.m
    }

    pub fn multipliers(&self) -> Range<usize> {
        self.n + self.m..self.n + 2 * self.m
    }
}

type ScalarFn = Box<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;
type VectorFn = Box<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
type MatrixFn = Box<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;
type ContractionFn = Box<dyn Fn(&DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync>;

/// A [`ConstrainedProblem`] assembled from dense closures; meant for small
/// problems and tests.
pub struct FnProblem {
    pub n: usize,
    pub m: usize,
    pub merit: ScalarFn,
    pub merit_gradient: VectorFn,
    pub merit_hessian: MatrixFn,
    pub constraints: VectorFn,
    pub constraint_jacobian: MatrixFn,
    pub constraint_hessian_contraction: ContractionFn,
    pub labels: Option<Vec<String>>,
    pub positive: Vec<usize>,
}

impl std::fmt::Debug for FnProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FnProblem")
            .field("n", &self.n)
            .field("m", &self.m)
            .finish_non_exhaustive()
    }
}

impl ConstrainedProblem for FnProblem {
    fn n_independent(&self) -> usize {
        self.n
    }

    fn n_dependent(&self) -> usize {
        self.m
    }

    fn merit(&self, z: &DVector<f64>) -> f64 {
        (self.merit)(z)
    }

    fn merit_gradient(&self, z: &DVector<f64>) -> DVector<f64> {
        (self.merit_gradient)(z)
    }

    fn merit_hessian(&self, z: &DVector<f64>) -> SymTriplets {
        SymTriplets::from_dense(&(self.merit_hessian)(z))
    }

    fn constraints(&self, z: &DVector<f64>) -> DVector<f64> {
        (self.constraints)(z)
    }

    fn constraint_jacobian(&self, z: &DVector<f64>) -> Triplets {
        Triplets::from_dense(&(self.constraint_jacobian)(z))
    }

    fn constraint_hessian_contraction(
        &self,
        z: &DVector<f64>,
        lambda: &DVector<f64>,
    ) -> SymTriplets {
        SymTriplets::from_dense(&(self.constraint_hessian_contraction)(z, lambda))
    }

    fn variable_labels(&self) -> Vec<String> {
        self.labels
            .clone()
            .unwrap_or_else(|| (0..self.n + self.m).map(|i| format!("z{i}")).collect())
    }

    fn positive_variables(&self) -> Vec<usize> {
        self.positive.clone()
    }
}

/// The worked example `ℓ = −½(p² + q²)`, `g = p + q − 2`, optimum `(1, 1)`
/// with multiplier `1`.
pub fn quadratic_toy() -> FnProblem {
    FnProblem {
        n: 1,
        m: 1,
        merit: Box::new(|z| -0.5 * (z[0] * z[0] + z[1] * z[1])),
        merit_gradient: Box::new(|z| -z.clone()),
        merit_hessian: Box::new(|_| -DMatrix::identity(2, 2)),
        constraints: Box::new(|z| DVector::from_element(1, z[0] + z[1] - 2.0)),
        constraint_jacobian: Box::new(|_| DMatrix::from_element(1, 2, 1.0)),
        constraint_hessian_contraction: Box::new(|_, _| DMatrix::zeros(2, 2)),
        labels: Some(vec!["p".into(), "q".into()]),
        positive: Vec::new(),
    }
}
