//! Small dense linear algebra helpers: Hermitian square roots, polar factors
//! and norms for the `d x d` matrices that appear throughout the crate.

use nalgebra::{Complex, ComplexField, DMatrix, SymmetricEigen, SVD};

use crate::scalar::{lit, Real};

pub type CMatrix<T> = DMatrix<Complex<T>>;

/// Embeds a real matrix into the complex matrices.
pub fn to_complex<T: Real>(m: &DMatrix<T>) -> CMatrix<T> {
    m.map(|x| Complex::new(x, T::zero()))
}

/// Real part, elementwise.
pub fn real_part<T: Real>(m: &CMatrix<T>) -> DMatrix<T> {
    m.map(|z| z.re)
}

/// Largest absolute imaginary part of any entry.
pub fn max_imag<T: Real>(m: &CMatrix<T>) -> T {
    m.iter().fold(T::zero(), |acc, z| acc.max(z.im.abs()))
}

/// `(M + M*) / 2`.
pub fn hermitian_part<T: Real>(m: &CMatrix<T>) -> CMatrix<T> {
    let half = Complex::new(lit::<T>(0.5), T::zero());
    (m + m.adjoint()) * half
}

/// `(M + M^T) / 2` for real matrices.
pub fn symmetric_part<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    (m + m.transpose()) * lit::<T>(0.5)
}

/// Smallest eigenvalue of a Hermitian matrix (only the Hermitian part is used).
pub fn min_eigenvalue<T: Real>(m: &CMatrix<T>) -> T {
    if m.nrows() == 0 {
        return T::zero();
    }
    let eig = SymmetricEigen::new(hermitian_part(m));
    eig.eigenvalues
        .iter()
        .copied()
        .fold(T::max_value().unwrap(), |a, b| a.min(b))
}

/// Smallest eigenvalue of a real symmetric matrix.
pub fn min_eigenvalue_real<T: Real>(m: &DMatrix<T>) -> T {
    if m.nrows() == 0 {
        return T::zero();
    }
    let eig = SymmetricEigen::new(symmetric_part(m));
    eig.eigenvalues
        .iter()
        .copied()
        .fold(T::max_value().unwrap(), |a, b| a.min(b))
}

/// Hermitian positive semidefinite square root with eigenvalues clipped at
/// zero. Returns the root together with the smallest unclipped eigenvalue.
pub fn psd_sqrt<T: Real>(m: &CMatrix<T>) -> (CMatrix<T>, T) {
    let n = m.nrows();
    if n == 0 {
        return (m.clone(), T::zero());
    }
    let eig = SymmetricEigen::new(hermitian_part(m));
    let mut min = T::max_value().unwrap();
    let mut scaled = eig.eigenvectors.clone();
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        min = min.min(lambda);
        scaled.column_mut(j).scale_mut(lambda.max(T::zero()).sqrt());
    }
    let root = &scaled * eig.eigenvectors.adjoint();
    (hermitian_part(&root), min)
}

/// Real symmetric positive semidefinite square root with clipping.
pub fn psd_sqrt_real<T: Real>(m: &DMatrix<T>) -> (DMatrix<T>, T) {
    let n = m.nrows();
    if n == 0 {
        return (m.clone(), T::zero());
    }
    let eig = SymmetricEigen::new(symmetric_part(m));
    let mut min = T::max_value().unwrap();
    let mut scaled = eig.eigenvectors.clone();
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        min = min.min(lambda);
        scaled.column_mut(j).scale_mut(lambda.max(T::zero()).sqrt());
    }
    let root = &scaled * eig.eigenvectors.transpose();
    (symmetric_part(&root), min)
}

/// Largest singular value.
pub fn spectral_norm<T: Real>(m: &CMatrix<T>) -> T {
    if m.nrows() == 0 {
        return T::zero();
    }
    SVD::new(m.clone(), false, false)
        .singular_values
        .iter()
        .copied()
        .fold(T::zero(), |a, b| a.max(b))
}

/// Largest singular value of a real matrix.
pub fn spectral_norm_real<T: Real>(m: &DMatrix<T>) -> T {
    if m.nrows() == 0 {
        return T::zero();
    }
    SVD::new(m.clone(), false, false)
        .singular_values
        .iter()
        .copied()
        .fold(T::zero(), |a, b| a.max(b))
}

/// Smallest singular value of a complex matrix.
pub fn min_singular_value<T: Real>(m: &CMatrix<T>) -> T {
    if m.nrows() == 0 {
        return T::zero();
    }
    SVD::new(m.clone(), false, false)
        .singular_values
        .iter()
        .copied()
        .fold(T::max_value().unwrap(), |a, b| a.min(b))
}

/// Orthogonal factor `P` of the polar decomposition `M = P M0` with `M0`
/// symmetric positive semidefinite, computed from the SVD `M = U S V^T` as
/// `P = U V^T`. For singular `M` the singular vectors complete `P` to an
/// orthogonal matrix.
pub fn polar_orthogonal<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    let n = m.nrows();
    if n == 0 {
        return m.clone();
    }
    let svd = SVD::new(m.clone(), true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");
    u * v_t
}

/// Maximum absolute entry, used as the matrix norm in residual reports.
pub fn max_abs<T: Real>(m: &DMatrix<T>) -> T {
    m.iter().fold(T::zero(), |acc, x| acc.max(x.abs()))
}

/// Maximum modulus of any entry.
pub fn max_abs_complex<T: Real>(m: &CMatrix<T>) -> T {
    m.iter().fold(T::zero(), |acc, z| acc.max(z.modulus()))
}
