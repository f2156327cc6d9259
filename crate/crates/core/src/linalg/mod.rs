//! Linear algebra kernels: sparse storage, symmetric indefinite and banded
//! factorizations, and condition estimation.

pub mod band;
pub mod condest;
pub mod dense_ldl;
pub mod sparse;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

pub use band::{BandLu, BorderedBandLu, SparseLu};
pub use dense_ldl::DenseLdl;
pub use sparse::{CsrMatrix, SymTriplets, Triplets};

use crate::error::Result;

/// Eigenvalue sign counts of a symmetric matrix.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Inertia {
    pub positive: usize,
    pub negative: usize,
    pub zero: usize,
}

impl Inertia {
    pub(crate) fn record(&mut self, d: f64) {
        if d > 0.0 {
            self.positive += 1;
        } else if d < 0.0 {
            self.negative += 1;
        } else {
            self.zero += 1;
        }
    }
}

/// Which factorization backs symmetric solves.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    /// Dense Bunch–Kaufman LDLᵀ.
    Dense,
    /// Bordered band LU.
    Sparse,
    /// Dense below [`AUTO_DENSE_LIMIT`] unknowns, sparse above.
    #[default]
    Auto,
}

pub const AUTO_DENSE_LIMIT: usize = 400;

/// A factorization of a symmetric, possibly indefinite, matrix.
#[derive(Debug, Clone)]
pub enum SymmetricFactor {
    Dense(DenseLdl),
    Sparse(BorderedBandLu),
}

impl SymmetricFactor {
    /// `a` must hold both triangles.
    pub fn factor(a: &CsrMatrix, backend: Backend) -> Result<Self> {
        let dense = match backend {
            Backend::Dense => true,
            Backend::Sparse => false,
            Backend::Auto => a.nrows() <= AUTO_DENSE_LIMIT,
        };
        if dense {
            DenseLdl::factor(&a.to_dense()).map(Self::Dense)
        } else {
            BorderedBandLu::factor(a).map(Self::Sparse)
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Dense(f) => f.dim(),
            Self::Sparse(f) => f.dim(),
        }
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        match self {
            Self::Dense(f) => f.solve(b),
            Self::Sparse(f) => f.solve(b),
        }
    }

    /// Inertia read off the pivots; unavailable from the LU-based backend.
    pub fn inertia(&self) -> Option<Inertia> {
        match self {
            Self::Dense(f) => Some(f.inertia()),
            Self::Sparse(_) => None,
        }
    }
}
