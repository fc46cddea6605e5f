//! Complex vector/matrix aliases and the handful of kernels the solvers share.

use nalgebra::{DMatrix, DVector};
pub use num_complex::Complex64 as C64;

pub type CVector = DVector<C64>;
pub type CMatrix = DMatrix<C64>;

/// Inner product `a^H b`.
#[inline]
pub fn hdot(a: &CVector, b: &CVector) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// Squared Euclidean norm.
#[inline]
pub fn norm_sqr(a: &CVector) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum()
}

/// `m += scale * a a^H` for Hermitian accumulation.
pub fn add_outer(m: &mut CMatrix, a: &CVector, scale: f64) {
    let n = a.len();
    for c in 0..n {
        let ac = a[c].conj() * scale;
        for r in 0..n {
            m[(r, c)] += a[r] * ac;
        }
    }
}

/// Largest entrywise deviation from Hermitian symmetry.
pub fn hermitian_defect(m: &CMatrix) -> f64 {
    let mut worst = 0.0f64;
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            worst = worst.max((m[(r, c)] - m[(c, r)].conj()).norm());
        }
    }
    worst
}

pub fn all_finite_vec(v: &CVector) -> bool {
    v.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

pub fn all_finite_mat(m: &CMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Nested `[b][k]` vector array filled with zeros.
pub fn zeros_grid(rows: usize, cols: usize, len: usize) -> Vec<Vec<CVector>> {
    (0..rows).map(|_| (0..cols).map(|_| CVector::zeros(len)).collect()).collect()
}
