//! Dense vectors, CSR matrices and their kernels.

mod csr;
pub mod io;
mod ops;
mod vector;

pub use csr::CsrMatrix;
pub use ops::{
    mat_mult, vec_aypx, vec_aypx_async, vec_axpy_async, vec_copy_async, vec_dot_async,
    vec_norm_async, vec_pointwise_mult_async, vec_scale_async, vec_set_async, vec_waxpy_async,
    NormType, ScalarArg,
};
pub use vector::{DenseVector, ReadView, WriteView};
