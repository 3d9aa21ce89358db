//! Dense and sparse kernels shared by every reducer.

mod eig;
mod lu;
mod lyapunov;
pub mod mat_serde;
mod orth;
mod sparse;

use nalgebra::{ComplexField, DMatrix};

pub use eig::{eigenvalues_dense, symmetric_extremes, Eigenvalues};
pub use lu::{lu_factor, LuFactors, DENSE_FALLBACK_DIM, PIVOT_THRESHOLD};
pub use lyapunov::{solve_lyapunov_small, solve_sylvester_small};
pub use orth::{orthonormalize, orthonormalize_against, Orthonormalized, DEFLATION_TOL};
pub use sparse::{CscMatrix, SparseMatrix};

pub type C64 = nalgebra::Complex<f64>;
pub type Mat = DMatrix<f64>;
pub type CMat = DMatrix<C64>;

/// Field types the sparse and dense kernels are generic over.
pub trait Scalar: ComplexField<RealField = f64> + Copy {}

impl Scalar for f64 {}
impl Scalar for C64 {}

pub fn max_abs<T: Scalar>(m: &DMatrix<T>) -> f64 {
    m.iter().fold(0.0, |acc, x| acc.max(x.modulus()))
}

pub fn to_complex(m: &Mat) -> CMat {
    m.map(|x| C64::new(x, 0.0))
}

pub fn block_diag(a: &Mat, b: &Mat) -> Mat {
    let mut out = Mat::zeros(a.nrows() + b.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((a.nrows(), a.ncols()), b.shape()).copy_from(b);
    out
}

pub fn hstack(a: &Mat, b: &Mat) -> Mat {
    assert_eq!(a.nrows(), b.nrows(), "hstack row mismatch");
    let mut out = Mat::zeros(a.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((0, a.ncols()), b.shape()).copy_from(b);
    out
}

pub fn vstack(a: &Mat, b: &Mat) -> Mat {
    assert_eq!(a.ncols(), b.ncols(), "vstack column mismatch");
    let mut out = Mat::zeros(a.nrows() + b.nrows(), a.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((a.nrows(), 0), b.shape()).copy_from(b);
    out
}

/// Infinity norm (max absolute row sum).
pub fn norm_inf(m: &Mat) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn is_finite(m: &Mat) -> bool {
    m.iter().all(|x| x.is_finite())
}
