//! Random test instances drawn from a seeded [`NormalStream`].

use crate::error::Result;
use crate::gaussian::Gaussian;
use crate::matrix::{controllability_rank, spectral_abscissa, Matrix, SpdMatrix, Vector};
use crate::propagation::LinearSystem;
use crate::rng::NormalStream;

pub fn normal_matrix(rng: &mut NormalStream, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.next_normal())
}

pub fn normal_vector(rng: &mut NormalStream, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| rng.next_normal())
}

/// Haar-distributed orthogonal matrix (QR of a Gaussian matrix with sign fix).
pub fn orthogonal(rng: &mut NormalStream, n: usize) -> Matrix {
    let qr = normal_matrix(rng, n, n).qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// SPD matrix with eigenvalues uniform on `[lo, hi]` and a random eigenbasis.
pub fn spd(rng: &mut NormalStream, n: usize, lo: f64, hi: f64) -> Result<SpdMatrix> {
    let q = orthogonal(rng, n);
    let d = Matrix::from_diagonal(&Vector::from_fn(n, |_, _| rng.uniform(lo, hi)));
    let m = &q * d * q.transpose();
    SpdMatrix::new((&m + m.transpose()) * 0.5)
}

pub fn gaussian(rng: &mut NormalStream, n: usize, lo: f64, hi: f64) -> Result<Gaussian> {
    let mean = normal_vector(rng, n);
    Gaussian::new(mean, spd(rng, n, lo, hi)?)
}

/// Controllable Hurwitz system with spectral abscissa in `[-2, -0.3]` and a
/// square, generically invertible `B`.
pub fn stable_system(rng: &mut NormalStream, n: usize) -> Result<LinearSystem> {
    loop {
        let g = normal_matrix(rng, n, n) / (n as f64).sqrt();
        let target = rng.uniform(0.3, 2.0);
        let shift = spectral_abscissa(&g)? + target;
        let a = g - Matrix::identity(n, n) * shift;
        let b = normal_matrix(rng, n, n) / (n as f64).sqrt();
        if controllability_rank(&a, &b)? == n {
            return LinearSystem::new(a, b);
        }
    }
}
