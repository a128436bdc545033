//! Gaussian densities and the functionals the proximal recursions are built from.
//!
//! A set of densities sharing a mean and covariance is always represented by
//! its Gaussian member: it simultaneously minimizes the Wasserstein distance to
//! a Gaussian anchor and the negative entropy, so every recursion in this crate
//! closes on Gaussians.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::matrix::{check_finite_vector, inv_spd, inv_sqrt_spd, sqrt_spd, Matrix, SpdMatrix, SymMatrix, Vector};

#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    mean: Vector,
    cov: SpdMatrix,
}

impl Gaussian {
    pub fn new(mean: Vector, cov: SpdMatrix) -> Result<Self> {
        if mean.len() != cov.dim() {
            return Err(Error::dims("gaussian mean", cov.dim(), mean.len()));
        }
        check_finite_vector(&mean, "gaussian mean")?;
        Ok(Gaussian { mean, cov })
    }

    /// One-dimensional `N(mean, variance)`.
    pub fn scalar(mean: f64, variance: f64) -> Result<Self> {
        Self::new(Vector::from_element(1, mean), SpdMatrix::diagonal(&[variance])?)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &Vector {
        &self.mean
    }

    pub fn cov(&self) -> &SpdMatrix {
        &self.cov
    }

    fn same_dim(&self, other: &Gaussian, context: &'static str) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::dims(context, self.dim(), other.dim()));
        }
        Ok(())
    }
}

/// Affine map `x ↦ M x + m`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap {
    pub linear: Matrix,
    pub offset: Vector,
}

impl AffineMap {
    pub fn apply(&self, x: &Vector) -> Vector {
        &self.linear * x + &self.offset
    }

    /// Push-forward of a Gaussian: `N(M μ + m, M P Mᵀ)`.
    pub fn push_forward(&self, g: &Gaussian) -> Result<Gaussian> {
        let cov = SpdMatrix::from_sym(g.cov.congruence(&self.linear)?, "push-forward covariance")?;
        Gaussian::new(self.apply(&g.mean), cov)
    }

    /// `E‖x − T(x)‖²` for `x ~ g`, in closed moment form.
    pub fn transport_cost(&self, g: &Gaussian) -> Result<f64> {
        let n = g.dim();
        if self.linear.nrows() != n || self.linear.ncols() != n || self.offset.len() != n {
            return Err(Error::dims("transport map", n, self.linear.nrows()));
        }
        let residual = Matrix::identity(n, n) - &self.linear;
        let shift = &residual * &g.mean - &self.offset;
        let spread = (&residual * g.cov.matrix() * residual.transpose()).trace();
        Ok(shift.norm_squared() + spread)
    }
}

/// `tr((P2^{1/2} P1 P2^{1/2})^{1/2})`, the cross term of the Gaussian W2 distance.
pub fn w2_cross_term(p1: &SpdMatrix, p2: &SpdMatrix) -> Result<f64> {
    if p1.dim() != p2.dim() {
        return Err(Error::dims("W2 cross term", p2.dim(), p1.dim()));
    }
    let root = sqrt_spd(p2)?;
    let inner = SymMatrix::symmetric_part(&(root.matrix() * p1.matrix() * root.matrix()));
    Ok(inner.eigenvalues().iter().map(|v| v.max(0.0).sqrt()).sum())
}

/// Squared Wasserstein-2 distance between Gaussians.
pub fn w2_squared(g1: &Gaussian, g2: &Gaussian) -> Result<f64> {
    g1.same_dim(g2, "W2 distance")?;
    let shift = (&g1.mean - &g2.mean).norm_squared();
    let cross = w2_cross_term(&g1.cov, &g2.cov)?;
    Ok((shift + g1.cov.trace() + g2.cov.trace() - 2.0 * cross).max(0.0))
}

pub fn w2_gaussian(g1: &Gaussian, g2: &Gaussian) -> Result<f64> {
    w2_squared(g1, g2).map(f64::sqrt)
}

/// Optimal transport map pushing `from` onto `to`:
/// `M = P^{1/2}(P^{1/2} P0 P^{1/2})^{-1/2} P^{1/2}`, `m = μ − M μ0`.
pub fn transport_map(from: &Gaussian, to: &Gaussian) -> Result<AffineMap> {
    from.same_dim(to, "transport map")?;
    let root = sqrt_spd(&to.cov)?;
    let inner = SpdMatrix::from_sym(from.cov.congruence(root.matrix())?, "transport inner matrix")?;
    let inner_inv_root = inv_sqrt_spd(&inner)?;
    let linear = root.matrix() * inner_inv_root.matrix() * root.matrix();
    let linear = (&linear + linear.transpose()) * 0.5;
    let offset = &to.mean - &linear * &from.mean;
    Ok(AffineMap { linear, offset })
}

/// `D_KL(g1 ‖ g2)` in closed form.
pub fn kl_gaussian(g1: &Gaussian, g2: &Gaussian) -> Result<f64> {
    g1.same_dim(g2, "KL divergence")?;
    let n = g1.dim() as f64;
    let prec = inv_spd(&g2.cov)?;
    let diff = &g2.mean - &g1.mean;
    let quad = diff.dot(&(prec.matrix() * &diff));
    let tr = (prec.matrix() * g1.cov.matrix()).trace();
    let log_det_ratio = g1.cov.ln_det() - g2.cov.ln_det();
    Ok((0.5 * (tr + quad - n - log_det_ratio)).max(0.0))
}

/// Negative differential entropy `∫ρ log ρ` of a Gaussian.
pub fn neg_entropy(g: &Gaussian) -> f64 {
    let n = g.dim() as f64;
    -0.5 * (n + n * (2.0 * PI).ln() + g.cov.ln_det())
}

/// `E[½ xᵀ Γ x] = ½(μᵀΓμ + tr(ΓP))`.
pub fn energy_quadratic(g: &Gaussian, gamma: &SpdMatrix) -> Result<f64> {
    if gamma.dim() != g.dim() {
        return Err(Error::dims("energy weight Γ", g.dim(), gamma.dim()));
    }
    let gm = gamma.matrix();
    Ok(0.5 * (g.mean.dot(&(gm * &g.mean)) + (gm * g.cov.matrix()).trace()))
}

/// Free energy `E + β⁻¹ S`.
pub fn free_energy(g: &Gaussian, gamma: &SpdMatrix, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    Ok(energy_quadratic(g, gamma)? + neg_entropy(g) / beta)
}

pub(crate) fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("inverse temperature must be positive, got {beta}")))
    }
}

/// `½ E[(y − Cx)ᵀ R⁻¹ (y − Cx)] = ½[(y − Cμ)ᵀR⁻¹(y − Cμ) + tr(CᵀR⁻¹CP)]`.
pub fn phi_expectation(g: &Gaussian, c: &Matrix, r_inv: &SpdMatrix, y: &Vector) -> Result<f64> {
    let m = r_inv.dim();
    if c.nrows() != m || c.ncols() != g.dim() {
        return Err(Error::dims(
            "observation matrix",
            format!("{m}x{}", g.dim()),
            format!("{}x{}", c.nrows(), c.ncols()),
        ));
    }
    if y.len() != m {
        return Err(Error::dims("measurement", m, y.len()));
    }
    let resid = y - c * &g.mean;
    let ri = r_inv.matrix();
    let spread = (c.transpose() * ri * c * g.cov.matrix()).trace();
    Ok(0.5 * (resid.dot(&(ri * &resid)) + spread))
}

/// Gradient in `P` of `tr((P0^{1/2} P P0^{1/2})^{1/2})`:
/// `½ P0^{1/2} (P0^{-1/2} P^{-1} P0^{-1/2})^{1/2} P0^{1/2}`.
pub fn grad_w2_cross(p: &SpdMatrix, p0: &SpdMatrix) -> Result<SymMatrix> {
    if p.dim() != p0.dim() {
        return Err(Error::dims("W2 cross-term gradient", p0.dim(), p.dim()));
    }
    let root0 = sqrt_spd(p0)?;
    let inv_root0 = inv_sqrt_spd(p0)?;
    let inner = SpdMatrix::from_sym(inv_spd(p)?.congruence(inv_root0.matrix())?, "gradient inner matrix")?;
    let mid = sqrt_spd(&inner)?;
    Ok(SymMatrix::symmetric_part(&(root0.matrix() * mid.matrix() * root0.matrix() * 0.5)))
}

/// Closest Gaussian in W2 among those with mean `mu` and covariance trace `tau`.
///
/// Returns the distance `√((√τ − √τ0)² + ‖μ − μ0‖²)` and the minimizer
/// `N(μ, (τ/τ0) P0)`.
pub fn trace_projection(g0: &Gaussian, mu: &Vector, tau: f64) -> Result<(f64, Gaussian)> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidArgument(format!("trace constraint must be positive, got {tau}")));
    }
    if mu.len() != g0.dim() {
        return Err(Error::dims("projection mean", g0.dim(), mu.len()));
    }
    let tau0 = g0.cov.trace();
    let w2sq = (tau.sqrt() - tau0.sqrt()).powi(2) + (mu - &g0.mean).norm_squared();
    let g = Gaussian::new(mu.clone(), g0.cov.scale(tau / tau0)?)?;
    Ok((w2sq.sqrt(), g))
}
