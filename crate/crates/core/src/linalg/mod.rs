//! Dense and banded complex kernels.

pub mod band;
pub mod contour;
pub mod dense;
pub mod hermitian;
pub mod krylov;
pub mod schur;
pub mod tridiag;

use num_complex::Complex64 as C64;

pub use band::{BandLu, BandMatrix};
pub use contour::{contour_quadrature, ContourRule};
pub use dense::{dot, dotu, vec_norm, CMatrix, DenseLu};
pub use hermitian::eig_hermitian;
pub use schur::eig_general;

/// Eigenvalues with column eigenvectors and max residual ||Av - lambda v||.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub values: Vec<C64>,
    pub vectors: CMatrix,
    pub residual: f64,
}

pub(crate) fn residual(a: &CMatrix, values: &[C64], vectors: &CMatrix) -> f64 {
    let mut r: f64 = 0.0;
    for (j, &lam) in values.iter().enumerate() {
        let v = vectors.column(j);
        let av = a.matvec(&v);
        let d: Vec<C64> = av.iter().zip(&v).map(|(x, y)| x - lam * y).collect();
        r = r.max(vec_norm(&d));
    }
    r
}

/// Selfadjoint eigensolve; the input must be Hermitian.
pub fn eig_selfadjoint(a: &CMatrix) -> crate::error::Result<EigenDecomposition> {
    eig_hermitian(a)
}

pub fn solve(a: &CMatrix, b: &[C64]) -> crate::error::Result<Vec<C64>> {
    a.solve(b)
}

pub fn log_det(a: &CMatrix) -> C64 {
    a.log_det()
}
