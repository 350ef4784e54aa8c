use crate::context::Context;
use crate::error::{Error, Result};
use crate::linalg::{vec_copy_async, vec_pointwise_mult_async, CsrMatrix, DenseVector};
use crate::runtime::Runtime;
use crate::solvers::PcType;

/// Diagonal scaling z = diag(A)^-1 r.
pub struct Jacobi {
    diag_inv: DenseVector,
}

impl Jacobi {
    pub fn new(rt: &Runtime, a: &CsrMatrix) -> Result<Jacobi> {
        Jacobi::from_diagonal(rt, &a.diagonal())
    }

    pub fn from_diagonal(rt: &Runtime, diag: &[f64]) -> Result<Jacobi> {
        if let Some(i) = diag.iter().position(|&d| d == 0.0) {
            return Err(Error::ZeroDiagonal(i));
        }
        let inv: Vec<f64> = diag.iter().map(|d| 1.0 / d).collect();
        Ok(Jacobi {
            diag_inv: DenseVector::from_values(rt, &inv),
        })
    }

    pub fn diag_inv(&self) -> &DenseVector {
        &self.diag_inv
    }

    pub fn apply(&self, r: &DenseVector, z: &DenseVector, ctx: &Context) -> Result<()> {
        pc_jacobi_apply(&self.diag_inv, r, z, ctx)
    }
}

/// z <- diag_inv .* r
pub fn pc_jacobi_apply(
    diag_inv: &DenseVector,
    r: &DenseVector,
    z: &DenseVector,
    ctx: &Context,
) -> Result<()> {
    vec_pointwise_mult_async(z, diag_inv, r, ctx)
}

pub(crate) enum Preconditioner {
    Jacobi(Jacobi),
    Identity,
}

impl Preconditioner {
    pub(crate) fn new(rt: &Runtime, a: &CsrMatrix, pc: PcType) -> Result<Preconditioner> {
        Ok(match pc {
            PcType::Jacobi => Preconditioner::Jacobi(Jacobi::new(rt, a)?),
            PcType::None => Preconditioner::Identity,
        })
    }

    pub(crate) fn apply(&self, r: &DenseVector, z: &DenseVector, ctx: &Context) -> Result<()> {
        match self {
            Preconditioner::Jacobi(j) => j.apply(r, z, ctx),
            Preconditioner::Identity => vec_copy_async(r, z, ctx),
        }
    }

    pub(crate) fn is_identity(&self) -> bool {
        matches!(self, Preconditioner::Identity)
    }
}
