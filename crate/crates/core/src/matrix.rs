//! Dense small-matrix primitives.
//!
//! Symmetric matrix functions go through a symmetric eigendecomposition that
//! [`SpdMatrix`] caches at construction, so `sqrt`, `inv` and friends are a
//! single reconstruction `V f(Λ) Vᵀ`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative asymmetry accepted before symmetrizing: `‖A − Aᵀ‖_max ≤ 1e-9 (1 + ‖A‖_max)`.
pub const SYMMETRY_RTOL: f64 = 1e-9;

/// Relative positivity floor: `λ_min > 1e-12 (1 + λ_max)`.
pub const POSITIVITY_FLOOR: f64 = 1e-12;

/// Relative singular-value tolerance for the controllability rank test.
pub const RANK_RTOL: f64 = 1e-9;

pub fn max_abs(m: &Matrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub(crate) fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

pub(crate) fn check_square(m: &Matrix, what: &'static str) -> Result<usize> {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(Error::NotSquare(what));
    }
    Ok(m.nrows())
}

pub(crate) fn check_finite_matrix(m: &Matrix, what: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

pub(crate) fn check_finite_vector(v: &Vector, what: &'static str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// A symmetric matrix, symmetrized on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(Matrix);

impl SymMatrix {
    pub fn new(m: Matrix) -> Result<Self> {
        Self::named(m, "symmetric matrix")
    }

    /// Like [`SymMatrix::new`], naming the matrix in any error.
    pub fn named(m: Matrix, what: &'static str) -> Result<Self> {
        check_square(&m, what)?;
        check_finite_matrix(&m, what)?;
        let asymmetry = max_abs(&(&m - m.transpose()));
        let tolerance = SYMMETRY_RTOL * (1.0 + max_abs(&m));
        if asymmetry > tolerance {
            return Err(Error::NotSymmetric { what, asymmetry, tolerance });
        }
        Ok(SymMatrix(symmetrize(&m)))
    }

    /// Symmetric part of an arbitrary square matrix, skipping the tolerance check.
    pub(crate) fn symmetric_part(m: &Matrix) -> Self {
        SymMatrix(symmetrize(m))
    }

    pub fn zeros(n: usize) -> Self {
        SymMatrix(Matrix::zeros(n, n))
    }

    pub fn identity(n: usize) -> Self {
        SymMatrix(Matrix::identity(n, n))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vector {
        let mut values: Vec<f64> = self.0.clone().symmetric_eigenvalues().iter().copied().collect();
        values.sort_by(f64::total_cmp);
        Vector::from_vec(values)
    }
}

/// A symmetric positive-definite matrix with its eigendecomposition cached.
///
/// Every instance satisfies `λ_min > POSITIVITY_FLOOR · (1 + λ_max)`.
#[derive(Debug, Clone)]
pub struct SpdMatrix {
    mat: Matrix,
    eigenvalues: Vector,
    eigenvectors: Matrix,
}

impl PartialEq for SpdMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.mat == other.mat
    }
}

impl SpdMatrix {
    pub fn new(m: Matrix) -> Result<Self> {
        Self::named(m, "SPD matrix")
    }

    pub fn named(m: Matrix, what: &'static str) -> Result<Self> {
        Self::from_sym(SymMatrix::named(m, what)?, what)
    }

    pub fn from_sym(s: SymMatrix, what: &'static str) -> Result<Self> {
        let eig = s.0.clone().symmetric_eigen();
        Self::from_eigen(eig.eigenvalues, eig.eigenvectors, what)
    }

    pub fn identity(n: usize) -> Self {
        SpdMatrix {
            mat: Matrix::identity(n, n),
            eigenvalues: Vector::from_element(n, 1.0),
            eigenvectors: Matrix::identity(n, n),
        }
    }

    /// `value · I`.
    pub fn scaled_identity(n: usize, value: f64) -> Result<Self> {
        Self::diagonal(&vec![value; n])
    }

    pub fn diagonal(values: &[f64]) -> Result<Self> {
        let n = values.len();
        Self::from_eigen(Vector::from_column_slice(values), Matrix::identity(n, n), "diagonal matrix")
    }

    /// Reconstructs `V diag(values) Vᵀ`, enforcing the positivity floor.
    fn from_eigen(values: Vector, vectors: Matrix, what: &'static str) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::NotSquare(what));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("{what}: non-finite eigenvalue")));
        }
        let min = values.min();
        let max = values.max();
        let floor = POSITIVITY_FLOOR * (1.0 + max.max(0.0));
        if min <= floor {
            return Err(Error::Singular { what, min_eigenvalue: min, floor });
        }
        let mat = symmetrize(&(&vectors * Matrix::from_diagonal(&values) * vectors.transpose()));
        Ok(SpdMatrix { mat, eigenvalues: values, eigenvectors: vectors })
    }

    /// Applies a scalar function to the spectrum: `V f(Λ) Vᵀ`.
    pub fn map_spectrum(&self, f: impl Fn(f64) -> f64, what: &'static str) -> Result<Self> {
        let values = self.eigenvalues.map(f);
        Self::from_eigen(values, self.eigenvectors.clone(), what)
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.mat
    }

    pub fn into_matrix(self) -> Matrix {
        self.mat
    }

    pub fn as_sym(&self) -> SymMatrix {
        SymMatrix(self.mat.clone())
    }

    /// Eigenvalues in the order of [`SpdMatrix::eigenvectors`] columns (unsorted).
    pub fn eigenvalues(&self) -> &Vector {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &Matrix {
        &self.eigenvectors
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues.min()
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues.max()
    }

    pub fn trace(&self) -> f64 {
        self.mat.trace()
    }

    pub fn ln_det(&self) -> f64 {
        self.eigenvalues.iter().map(|v| v.ln()).sum()
    }

    pub fn scale(&self, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidArgument(format!("SPD scale factor must be positive, got {c}")));
        }
        self.map_spectrum(|v| c * v, "scaled SPD matrix")
    }

    /// `M · self · Mᵀ`, symmetrized.
    pub fn congruence(&self, m: &Matrix) -> Result<SymMatrix> {
        if m.ncols() != self.dim() {
            return Err(Error::dims("congruence", self.dim(), m.ncols()));
        }
        Ok(SymMatrix(symmetrize(&(m * &self.mat * m.transpose()))))
    }

    pub fn sqrt(&self) -> Result<Self> {
        sqrt_spd(self)
    }

    pub fn inv(&self) -> Result<Self> {
        inv_spd(self)
    }

    pub fn inv_sqrt(&self) -> Result<Self> {
        inv_sqrt_spd(self)
    }
}

/// Principal square root `S` with `S·S = P`.
pub fn sqrt_spd(p: &SpdMatrix) -> Result<SpdMatrix> {
    p.map_spectrum(f64::sqrt, "matrix square root")
}

pub fn inv_spd(p: &SpdMatrix) -> Result<SpdMatrix> {
    p.map_spectrum(f64::recip, "matrix inverse")
}

/// `P^{-1/2}`.
pub fn inv_sqrt_spd(p: &SpdMatrix) -> Result<SpdMatrix> {
    p.map_spectrum(|v| v.sqrt().recip(), "inverse matrix square root")
}

/// Matrix exponential `e^{A t}` (scaling and squaring with Padé approximants).
pub fn expm(a: &Matrix, t: f64) -> Result<Matrix> {
    check_square(a, "expm argument")?;
    check_finite_matrix(a, "expm argument")?;
    if !t.is_finite() {
        return Err(Error::InvalidArgument(format!("expm time must be finite, got {t}")));
    }
    let e = (a * t).exp();
    if e.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("matrix exponential overflowed".into()));
    }
    Ok(e)
}

/// Largest real part over the spectrum of a general square matrix.
pub fn spectral_abscissa(a: &Matrix) -> Result<f64> {
    check_square(a, "drift matrix")?;
    check_finite_matrix(a, "drift matrix")?;
    let eig = a.clone().complex_eigenvalues();
    Ok(eig.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max))
}

pub fn check_hurwitz(a: &Matrix) -> Result<()> {
    let max_real_part = spectral_abscissa(a)?;
    if max_real_part < 0.0 {
        Ok(())
    } else {
        Err(Error::NotHurwitz { max_real_part })
    }
}

/// Numerical rank of `[B, AB, …, A^{n−1}B]`.
pub fn controllability_rank(a: &Matrix, b: &Matrix) -> Result<usize> {
    let n = check_square(a, "drift matrix")?;
    if b.nrows() != n || b.ncols() == 0 {
        return Err(Error::dims("diffusion matrix rows", n, b.nrows()));
    }
    let p = b.ncols();
    let mut ctrb = Matrix::zeros(n, n * p);
    let mut block = b.clone();
    for k in 0..n {
        ctrb.view_mut((0, k * p), (n, p)).copy_from(&block);
        block = a * block;
    }
    let sv = ctrb.singular_values();
    let largest = sv.max();
    if largest == 0.0 {
        return Ok(0);
    }
    Ok(sv.iter().filter(|&&s| s > RANK_RTOL * largest).count())
}

/// Solves `A X + X Aᵀ + Q = 0` by Kronecker vectorization.
///
/// Requires `A` Hurwitz. The result is positive semidefinite for PSD `Q` and
/// positive definite when `(A, Q^{1/2})` is controllable; promote it with
/// [`SpdMatrix::from_sym`] where definiteness is needed.
pub fn lyapunov_solve(a: &Matrix, q: &SymMatrix) -> Result<SymMatrix> {
    let n = check_square(a, "drift matrix")?;
    if q.dim() != n {
        return Err(Error::dims("lyapunov right-hand side", n, q.dim()));
    }
    check_hurwitz(a)?;

    // vec(A X) = (I ⊗ A) vec X, vec(X Aᵀ) = (A ⊗ I) vec X, column-major vec.
    let eye = Matrix::identity(n, n);
    let kron = eye.kronecker(a) + a.kronecker(&eye);
    let rhs = -Vector::from_column_slice(q.matrix().as_slice());
    let x =
        kron.lu().solve(&rhs).ok_or_else(|| Error::Numeric("singular Kronecker system in Lyapunov solve".into()))?;
    let x = Matrix::from_column_slice(n, n, x.as_slice());

    let residual = max_abs(&(a * &x + &x * a.transpose() + q.matrix()));
    let scale = 1.0 + max_abs(q.matrix()) + max_abs(a) * max_abs(&x);
    if !residual.is_finite() || residual > 1e-8 * scale {
        return Err(Error::Numeric(format!("Lyapunov residual {residual:e} too large")));
    }
    Ok(SymMatrix(symmetrize(&x)))
}

/// Unique SPD root of `Z² + c Z − c R = 0` for `c > 0` and SPD `R`.
///
/// In the eigenbasis of `R` each eigenvalue solves the scalar quadratic; the
/// positive root `(c/2)(−1 + √(1 + 4r/c))` is evaluated as `2r / (1 + √(1 + 4r/c))`
/// to avoid cancellation when `c` is large.
pub fn quadratic_matrix_solve(c: f64, rhs: &SpdMatrix) -> Result<SpdMatrix> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidArgument(format!("quadratic matrix equation needs c > 0, got {c}")));
    }
    rhs.map_spectrum(|r| 2.0 * r / (1.0 + (1.0 + 4.0 * r / c).sqrt()), "quadratic matrix root")
}

/// `(A + Aᵀ)/2` and `(A − Aᵀ)/2`.
pub fn sym_skew_split(a: &Matrix) -> Result<(SymMatrix, Matrix)> {
    check_square(a, "matrix to split")?;
    check_finite_matrix(a, "matrix to split")?;
    let sym = symmetrize(a);
    let skew = (a - a.transpose()) * 0.5;
    Ok((SymMatrix(sym), skew))
}
