//! JKO proximal propagation of linear Gaussian systems `dx = A x dt + √2 B dw`.
//!
//! Two regimes:
//!
//! * symmetric drift with isotropic noise (`A = −Γ`, `BBᵀ = β⁻¹ I`), where one
//!   Wasserstein-proximal step of the free energy has an exact closed form;
//! * general Hurwitz drift, handled through the equipartition frame (stationary
//!   covariance mapped to `θ I`) followed by a time-varying orthogonal change of
//!   coordinates that makes the drift symmetric at every instant.

use crate::error::{Error, Result};
use crate::gaussian::{check_beta, Gaussian};
use crate::matrix::{
    check_finite_matrix, check_square, controllability_rank, expm, inv_sqrt_spd, lyapunov_solve, max_abs,
    quadratic_matrix_solve, sqrt_spd, sym_skew_split, symmetrize, Matrix, SpdMatrix, SymMatrix, Vector, SYMMETRY_RTOL,
};

/// Residual tolerance for the frame invariants.
pub const FRAME_TOL: f64 = 1e-9;

/// Linear SDE `dx = A x dt + √2 B dw`; the Fokker-Planck diffusion term is `2BBᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    a: Matrix,
    b: Matrix,
}

impl LinearSystem {
    /// Validates that `A` is Hurwitz and `(A, B)` controllable.
    pub fn new(a: Matrix, b: Matrix) -> Result<Self> {
        let n = check_square(&a, "drift matrix A")?;
        check_finite_matrix(&a, "drift matrix A")?;
        check_finite_matrix(&b, "diffusion matrix B")?;
        if b.nrows() != n {
            return Err(Error::dims("diffusion matrix B rows", n, b.nrows()));
        }
        crate::matrix::check_hurwitz(&a)?;
        let rank = controllability_rank(&a, &b)?;
        if rank < n {
            return Err(Error::Uncontrollable { rank, n });
        }
        Ok(LinearSystem { a, b })
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    /// `BBᵀ`.
    pub fn bbt(&self) -> Matrix {
        symmetrize(&(&self.b * self.b.transpose()))
    }

    /// Stationary covariance solving `A P + P Aᵀ + 2BBᵀ = 0`.
    pub fn stationary_cov(&self) -> Result<SpdMatrix> {
        let q = SymMatrix::symmetric_part(&(self.bbt() * 2.0));
        SpdMatrix::from_sym(lyapunov_solve(&self.a, &q)?, "stationary covariance")
    }

    /// `(Γ, β)` when the system is a gradient flow `A = −Γ`, `BBᵀ = β⁻¹ I`.
    pub fn gibbs_form(&self) -> Option<(SpdMatrix, f64)> {
        let n = self.dim();
        let a = &self.a;
        if max_abs(&(a - a.transpose())) > SYMMETRY_RTOL * (1.0 + max_abs(a)) {
            return None;
        }
        let bbt = self.bbt();
        let sigma = bbt.trace() / n as f64;
        if !(sigma > 0.0 && sigma.is_finite()) {
            return None;
        }
        if max_abs(&(&bbt - Matrix::identity(n, n) * sigma)) > SYMMETRY_RTOL * (1.0 + sigma) {
            return None;
        }
        let gamma = SpdMatrix::named(-a, "Γ = −A").ok()?;
        Some((gamma, 1.0 / sigma))
    }
}

/// Discretization contract: step size, step count, and optional inverse temperature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepConfig {
    pub h: f64,
    pub steps: usize,
    pub beta: Option<f64>,
}

impl StepConfig {
    pub fn new(h: f64, steps: usize, beta: Option<f64>) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidArgument(format!("step size must be positive, got {h}")));
        }
        if let Some(beta) = beta {
            check_beta(beta)?;
        }
        Ok(StepConfig { h, steps, beta })
    }

    /// Step count covering `horizon`; fails unless `horizon / h` is an integer within rounding.
    pub fn for_horizon(h: f64, horizon: f64, beta: Option<f64>) -> Result<Self> {
        let ratio = horizon / h;
        let steps = ratio.round();
        if !(ratio.is_finite() && steps >= 0.0) || (ratio - steps).abs() > 1e-6 * ratio.max(1.0) {
            return Err(Error::InvalidArgument(format!("horizon {horizon} is not an integer multiple of step {h}")));
        }
        Self::new(h, steps as usize, beta)
    }

    pub fn horizon(&self) -> f64 {
        self.h * self.steps as f64
    }
}

/// Equipartition coordinates `x_ep = √θ P∞^{-1/2} x` and the pieces of the
/// symmetrizing transform.
#[derive(Debug, Clone)]
pub struct EquipartitionFrame {
    pub pinf: SpdMatrix,
    pub pinf_sqrt: SpdMatrix,
    pub pinf_inv_sqrt: SpdMatrix,
    /// Thermodynamic temperature `tr(P∞)/n`.
    pub theta: f64,
    pub aep: Matrix,
    pub bep: Matrix,
    pub aep_sym: SymMatrix,
    pub aep_skew: Matrix,
}

pub fn make_equipartition(sys: &LinearSystem) -> Result<EquipartitionFrame> {
    let n = sys.dim();
    let pinf = sys.stationary_cov()?;
    let pinf_sqrt = sqrt_spd(&pinf)?;
    let pinf_inv_sqrt = inv_sqrt_spd(&pinf)?;
    let theta = pinf.trace() / n as f64;
    let aep = pinf_inv_sqrt.matrix() * sys.a() * pinf_sqrt.matrix();
    let bep = pinf_inv_sqrt.matrix() * sys.b();
    let (aep_sym, aep_skew) = sym_skew_split(&aep)?;

    let frame = EquipartitionFrame { pinf, pinf_sqrt, pinf_inv_sqrt, theta, aep, bep, aep_sym, aep_skew };
    frame.check_invariants(sys)?;
    Ok(frame)
}

impl EquipartitionFrame {
    /// Residuals of the stationary Lyapunov equation in original and
    /// equipartition coordinates: `(‖A P∞ + P∞ Aᵀ + 2BBᵀ‖, ‖θ(A_ep + A_epᵀ) + 2θ B_ep B_epᵀ‖)`.
    pub fn residuals(&self, sys: &LinearSystem) -> (f64, f64) {
        let p = self.pinf.matrix();
        let orig = sys.a() * p + p * sys.a().transpose() + sys.bbt() * 2.0;
        let ep =
            (&self.aep + self.aep.transpose()) * self.theta + &self.bep * self.bep.transpose() * (2.0 * self.theta);
        (max_abs(&orig), max_abs(&ep))
    }

    fn check_invariants(&self, sys: &LinearSystem) -> Result<()> {
        let (orig, ep) = self.residuals(sys);
        let scale = 1.0 + max_abs(self.pinf.matrix()) * max_abs(sys.a());
        if orig > FRAME_TOL * scale || ep > FRAME_TOL * scale {
            return Err(Error::Numeric(format!("equipartition frame residuals too large ({orig:e}, {ep:e})")));
        }
        Ok(())
    }
}

/// `F(t) = e^{−S t} A_ep^sym e^{S t}` and `G(t) = e^{−S t} B_ep`, `S = A_ep^skew`.
pub fn symmetrized_pair(frame: &EquipartitionFrame, t: f64) -> Result<(SymMatrix, Matrix)> {
    let back = expm(&frame.aep_skew, -t)?;
    let fwd = expm(&frame.aep_skew, t)?;
    let f = SymMatrix::symmetric_part(&(&back * frame.aep_sym.matrix() * fwd));
    let g = back * &frame.bep;
    Ok((f, g))
}

/// One exact JKO step for `U(x) = ½ xᵀΓx` at inverse temperature `β`.
///
/// Mean: `(I + hΓ)^{-1} μ0`. Covariance: with `Z` the SPD root of
/// `Z² + (β/h) Z − (β/h) P0^{-1/2}(I + hΓ)P0^{-1/2} = 0`,
/// `P = P0^{-1/2} Z^{-2} P0^{-1/2}`.
pub fn jko_step_symmetric(g_prev: &Gaussian, gamma: &SpdMatrix, beta: f64, h: f64) -> Result<Gaussian> {
    check_beta(beta)?;
    check_step(h)?;
    let n = g_prev.dim();
    if gamma.dim() != n {
        return Err(Error::dims("potential Γ", n, gamma.dim()));
    }
    let resolvent = gamma.map_spectrum(|l| 1.0 / (1.0 + h * l), "(I + hΓ)^{-1}")?;
    let mean = resolvent.matrix() * g_prev.mean();

    let p0_inv_sqrt = inv_sqrt_spd(g_prev.cov())?;
    let shifted = Matrix::identity(n, n) + gamma.matrix() * h;
    let rhs = SpdMatrix::from_sym(
        SymMatrix::symmetric_part(&(p0_inv_sqrt.matrix() * shifted * p0_inv_sqrt.matrix())),
        "quadratic equation right-hand side",
    )?;
    let z = quadratic_matrix_solve(beta / h, &rhs)?;
    let z_inv_sq = z.map_spectrum(|v| 1.0 / (v * v), "Z^{-2}")?;
    let cov = SpdMatrix::from_sym(z_inv_sq.congruence(p0_inv_sqrt.matrix())?, "JKO covariance")?;
    Gaussian::new(mean, cov)
}

fn check_step(h: f64) -> Result<()> {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("step size must be positive, got {h}")))
    }
}

/// JKO mean recursion in original coordinates for a general Hurwitz drift:
/// `μ_k = P∞^{1/2} e^{S kh} (I − hF(kh))^{-1} e^{S h} e^{−S kh} P∞^{-1/2} μ_{k−1}`.
pub fn jko_step_general_mean(mu_prev: &Vector, frame: &EquipartitionFrame, k: usize, h: f64) -> Result<Vector> {
    check_step(h)?;
    let n = frame.aep.nrows();
    if mu_prev.len() != n {
        return Err(Error::dims("mean", n, mu_prev.len()));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("step index k must be at least 1".into()));
    }
    let t = k as f64 * h;
    let (f, _) = symmetrized_pair(frame, t)?;
    let s = &frame.aep_skew;
    // F ⪯ 0 so I − hF ⪰ I and the solve cannot fail.
    let implicit = Matrix::identity(n, n) - f.matrix() * h;
    let rotated = expm(s, h)? * expm(s, -t)? * (frame.pinf_inv_sqrt.matrix() * mu_prev);
    let solved = implicit.lu().solve(&rotated).ok_or_else(|| Error::Numeric("I − hF(t) is singular".into()))?;
    Ok(frame.pinf_sqrt.matrix() * expm(s, t)? * solved)
}

/// First-order covariance recursion `P_k = P_{k−1} + h(A P + P Aᵀ + 2BBᵀ)`.
pub fn jko_step_general_cov(p_prev: &SpdMatrix, sys: &LinearSystem, h: f64) -> Result<SpdMatrix> {
    if !(h >= 0.0 && h.is_finite()) {
        return Err(Error::InvalidArgument(format!("step size must be nonnegative, got {h}")));
    }
    if p_prev.dim() != sys.dim() {
        return Err(Error::dims("covariance", sys.dim(), p_prev.dim()));
    }
    let p = p_prev.matrix();
    let drift = sys.a() * p + p * sys.a().transpose() + sys.bbt() * 2.0;
    let next = SymMatrix::symmetric_part(&(p + drift * h));
    SpdMatrix::from_sym(next, "propagated covariance").map_err(|e| match e {
        Error::Singular { .. } => Error::StepSize { h },
        other => other,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PropagationMode {
    /// Exact proximal steps; needs `A` symmetric and `BBᵀ = β⁻¹ I`.
    SymmetricExact,
    /// Mean via the symmetrized-frame recursion, covariance via the first-order recursion.
    GeneralFirstOrder,
}

/// Iterates the JKO recursion; returns `(time, density)` for `k = 0..=K`.
pub fn propagate(
    sys: &LinearSystem,
    g0: &Gaussian,
    cfg: &StepConfig,
    mode: PropagationMode,
) -> Result<Vec<(f64, Gaussian)>> {
    if g0.dim() != sys.dim() {
        return Err(Error::dims("initial density", sys.dim(), g0.dim()));
    }
    let h = cfg.h;
    let mut path = Vec::with_capacity(cfg.steps + 1);
    path.push((0.0, g0.clone()));
    match mode {
        PropagationMode::SymmetricExact => {
            let (gamma, beta) = symmetric_parameters(sys, cfg.beta)?;
            let mut g = g0.clone();
            for k in 1..=cfg.steps {
                g = jko_step_symmetric(&g, &gamma, beta, h)?;
                path.push((k as f64 * h, g.clone()));
            }
        }
        PropagationMode::GeneralFirstOrder => {
            let frame = make_equipartition(sys)?;
            let mut mean = g0.mean().clone();
            let mut cov = g0.cov().clone();
            for k in 1..=cfg.steps {
                mean = jko_step_general_mean(&mean, &frame, k, h)?;
                cov = jko_step_general_cov(&cov, sys, h)?;
                path.push((k as f64 * h, Gaussian::new(mean.clone(), cov.clone())?));
            }
        }
    }
    Ok(path)
}

/// `(Γ, β)` for symmetric-exact mode, checking any configured `β` against `BBᵀ`.
pub fn symmetric_parameters(sys: &LinearSystem, beta: Option<f64>) -> Result<(SpdMatrix, f64)> {
    let (gamma, implied) = sys.gibbs_form().ok_or_else(|| {
        Error::ModeMismatch(
            "symmetric-exact propagation needs a symmetric drift A and isotropic noise BBᵀ = β⁻¹I".into(),
        )
    })?;
    match beta {
        Some(beta) if (beta - implied).abs() > 1e-9 * (1.0 + implied) => {
            Err(Error::ModeMismatch(format!("configured β = {beta} disagrees with BBᵀ = β⁻¹I (β = {implied})")))
        }
        _ => Ok((gamma, implied)),
    }
}
