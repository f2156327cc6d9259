use nalgebra::{DMatrix, DVector};

use super::problem::{ConstrainedProblem, VariablePartition};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{CsrMatrix, SymTriplets};

/// `L(z, λ) = ℓ(z) + g(z)ᵀλ`.
pub fn eval_lagrangian<P: ConstrainedProblem + ?Sized>(
    problem: &P,
    z: &DVector<f64>,
    lambda: &DVector<f64>,
) -> Result<f64> {
    check_dim("z", problem.n_vars(), z.len())?;
    check_dim("lambda", problem.n_dependent(), lambda.len())?;
    Ok(problem.merit(z) + problem.constraints(z).dot(lambda))
}

/// `∇_z L = ∇ℓ + ∇gᵀλ`.
pub fn lagrangian_gradient<P: ConstrainedProblem + ?Sized>(
    problem: &P,
    z: &DVector<f64>,
    lambda: &DVector<f64>,
) -> DVector<f64> {
    let jac = problem.constraint_jacobian(z).to_csr();
    problem.merit_gradient(z) + jac.tr_mul_vec(lambda)
}

/// `∇²_z L = ∇²ℓ + Σ λᵢ ∇²gᵢ` as symmetric triplets.
pub fn lagrangian_hessian<P: ConstrainedProblem + ?Sized>(
    problem: &P,
    z: &DVector<f64>,
    lambda: &DVector<f64>,
) -> SymTriplets {
    let mut w = problem.merit_hessian(z);
    w.extend_scaled(&problem.constraint_hessian_contraction(z, lambda), 1.0);
    w
}

/// Which block of the bordered Hessian a row belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowBlock {
    Independent,
    Dependent,
    Multiplier,
}

/// The Hessian of the Lagrangian with respect to `(z, λ)`:
///
/// ```text
/// H_L = [ ∇²ℓ + Σλᵢ∇²gᵢ   ∇gᵀ ]
///       [ ∇g              0   ]
/// ```
///
/// stored with both triangles, rows ordered `p`, `q`, `λ`.
#[derive(Debug, Clone)]
pub struct BorderedHessian {
    partition: VariablePartition,
    matrix: CsrMatrix,
}

impl BorderedHessian {
    /// Builds `H_L` from its z-block (symmetric) and the constraint Jacobian.
    pub fn from_parts(
        partition: VariablePartition,
        z_block: &SymTriplets,
        jacobian: &CsrMatrix,
    ) -> Result<Self> {
        let nz = partition.n + partition.m;
        check_dim("Hessian z-block", nz, z_block.dim())?;
        check_dim("Jacobian rows", partition.m, jacobian.nrows())?;
        check_dim("Jacobian columns", nz, jacobian.ncols())?;
        let dim = nz + partition.m;
        let mut entries = Vec::with_capacity(2 * z_block.lower_entries().len() + 2 * jacobian.nnz());
        for &(i, j, v) in z_block.lower_entries() {
            entries.push((i, j, v));
            if i != j {
                entries.push((j, i, v));
            }
        }
        for (r, c, v) in jacobian.iter() {
            entries.push((nz + r, c, v));
            entries.push((c, nz + r, v));
        }
        let matrix = CsrMatrix::from_entries(dim, dim, entries);
        if !matrix.all_finite() {
            return Err(Error::NonFinite("bordered Hessian"));
        }
        Ok(Self { partition, matrix })
    }

    pub fn partition(&self) -> VariablePartition {
        self.partition
    }

    /// `n`
    pub fn n(&self) -> usize {
        self.partition.n
    }

    /// `m`
    pub fn m(&self) -> usize {
        self.partition.m
    }

    /// `n + 2m`
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        self.matrix.to_dense()
    }

    pub fn row_block(&self, row: usize) -> RowBlock {
        let p = self.partition;
        if row < p.n {
            RowBlock::Independent
        } else if row < p.n + p.m {
            RowBlock::Dependent
        } else {
            RowBlock::Multiplier
        }
    }

    /// `∇g`, the lower-left border.
    pub fn jacobian(&self) -> CsrMatrix {
        let nz = self.partition.n + self.partition.m;
        CsrMatrix::from_entries(
            self.partition.m,
            nz,
            self.matrix
                .iter()
                .filter(|&(i, j, _)| i >= nz && j < nz)
                .map(|(i, j, v)| (i - nz, j, v)),
        )
    }

    /// `∇_q g`, the square dependent block of the Jacobian.
    pub fn dependent_jacobian(&self) -> CsrMatrix {
        self.jacobian().column_slice(self.partition.dependent())
    }

    /// The matrix with `shift` added to every diagonal entry of the z-block.
    pub fn shifted(&self, shift: f64) -> CsrMatrix {
        let nz = self.partition.n + self.partition.m;
        CsrMatrix::from_entries(
            self.dim(),
            self.dim(),
            self.matrix.iter().chain((0..nz).map(|i| (i, i, shift))),
        )
    }

    /// Largest deviation from the required structure: asymmetry, nonzero
    /// corner entries.
    pub fn structure_defect(&self) -> f64 {
        let nz = self.partition.n + self.partition.m;
        let corner = self
            .matrix
            .iter()
            .filter(|&(i, j, _)| i >= nz && j >= nz)
            .map(|(_, _, v)| v.abs())
            .fold(0.0, f64::max);
        self.matrix.asymmetry().max(corner)
    }
}

/// Assembles `H_L` at `(z, λ)`.
pub fn assemble_bordered_hessian<P: ConstrainedProblem + ?Sized>(
    problem: &P,
    z: &DVector<f64>,
    lambda: &DVector<f64>,
) -> Result<BorderedHessian> {
    check_dim("z", problem.n_vars(), z.len())?;
    check_dim("lambda", problem.n_dependent(), lambda.len())?;
    let w = lagrangian_hessian(problem, z, lambda);
    let jac = problem.constraint_jacobian(z).to_csr();
    BorderedHessian::from_parts(problem.partition(), &w, &jac)
}
