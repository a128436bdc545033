//! Proximal measurement updates and the predict/update filters built from them.
//!
//! * LMMR: KL-proximal step of the measurement surprise functional. Composed
//!   with the JKO predict step it converges to the Kalman-Bucy filter.
//! * Wasserstein: W2-proximal step of the same functional. Its small-step limit
//!   is a Luenberger-type observer with static gain `CᵀR⁻¹`.
//!
//! Measurements enter as increments `Δz_k`; the filters use `y_k = Δz_k / h`.

use crate::error::{Error, Result};
use crate::gaussian::Gaussian;
use crate::matrix::{check_finite_matrix, Matrix, SpdMatrix, SymMatrix, Vector};
use crate::oracles::{exact_cov, exact_mean, OdeConfig};
use crate::propagation::{
    jko_step_general_cov, jko_step_general_mean, jko_step_symmetric, make_equipartition, LinearSystem, StepConfig,
};

/// Observation model `dz = C x dt + dv`, `E[dv dvᵀ] = R dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementModel {
    c: Matrix,
    r: SpdMatrix,
    r_inv: SpdMatrix,
}

impl MeasurementModel {
    pub fn new(c: Matrix, r: SpdMatrix) -> Result<Self> {
        check_finite_matrix(&c, "observation matrix C")?;
        if c.nrows() != r.dim() {
            return Err(Error::dims("observation matrix C rows", r.dim(), c.nrows()));
        }
        if c.ncols() == 0 {
            return Err(Error::dims("observation matrix C columns", "at least 1", 0));
        }
        let r_inv = r.inv()?;
        Ok(MeasurementModel { c, r, r_inv })
    }

    pub fn c(&self) -> &Matrix {
        &self.c
    }

    pub fn r(&self) -> &SpdMatrix {
        &self.r
    }

    pub fn r_inv(&self) -> &SpdMatrix {
        &self.r_inv
    }

    pub fn obs_dim(&self) -> usize {
        self.c.nrows()
    }

    pub fn state_dim(&self) -> usize {
        self.c.ncols()
    }

    /// `CᵀR⁻¹C`.
    pub fn information(&self) -> SymMatrix {
        SymMatrix::symmetric_part(&(self.c.transpose() * self.r_inv.matrix() * &self.c))
    }

    /// Static observer gain `L = CᵀR⁻¹`.
    pub fn static_gain(&self) -> Matrix {
        self.c.transpose() * self.r_inv.matrix()
    }

    fn check(&self, prior: &Gaussian, y: &Vector, h: f64) -> Result<()> {
        if prior.dim() != self.state_dim() {
            return Err(Error::dims("prior density", self.state_dim(), prior.dim()));
        }
        if y.len() != self.obs_dim() {
            return Err(Error::dims("measurement", self.obs_dim(), y.len()));
        }
        if !(h >= 0.0 && h.is_finite()) {
            return Err(Error::InvalidArgument(format!("step size must be nonnegative, got {h}")));
        }
        Ok(())
    }
}

/// KL-proximal measurement update.
///
/// Solves `(I + h P⁻CᵀR⁻¹C) μ⁺ = μ⁻ + h P⁻CᵀR⁻¹ y` and sets
/// `(P⁺)⁻¹ = (P⁻)⁻¹ + h CᵀR⁻¹C`.
pub fn lmmr_update(prior: &Gaussian, meas: &MeasurementModel, y: &Vector, h: f64) -> Result<Gaussian> {
    meas.check(prior, y, h)?;
    let n = prior.dim();
    let p = prior.cov().matrix();
    let info = meas.information();

    let precision = SymMatrix::symmetric_part(&(prior.cov().inv()?.matrix() + info.matrix() * h));
    let cov = SpdMatrix::from_sym(precision, "posterior precision")?.inv()?;

    let lhs = Matrix::identity(n, n) + p * info.matrix() * h;
    let rhs = prior.mean() + p * meas.static_gain() * y * h;
    let mean = lhs.lu().solve(&rhs).ok_or_else(|| Error::Numeric("LMMR mean system is singular".into()))?;
    Gaussian::new(mean, cov)
}

/// W2-proximal measurement update.
///
/// With `M = I + h CᵀR⁻¹C`: `μ⁺ = M⁻¹(μ⁻ + h CᵀR⁻¹ y)`, `P⁺ = M⁻¹ P⁻ M⁻¹`.
/// Unlike the LMMR update, `P⁺ ⪯ P⁻` only holds when `M` and `P⁻` commute
/// (always in one dimension).
pub fn wasserstein_update(prior: &Gaussian, meas: &MeasurementModel, y: &Vector, h: f64) -> Result<Gaussian> {
    meas.check(prior, y, h)?;
    let n = prior.dim();
    let info = meas.information();
    let m =
        SpdMatrix::from_sym(SymMatrix::symmetric_part(&(Matrix::identity(n, n) + info.matrix() * h)), "I + hCᵀR⁻¹C")?;
    let m_inv = m.inv()?;
    let mean = m_inv.matrix() * (prior.mean() + meas.static_gain() * y * h);
    let cov = SpdMatrix::from_sym(prior.cov().congruence(m_inv.matrix())?, "Wasserstein posterior covariance")?;
    Gaussian::new(mean, cov)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateKind {
    Lmmr,
    Wasserstein,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictKind {
    /// JKO step: exact proximal step when the system is a gradient flow with
    /// isotropic noise, otherwise the general-frame mean recursion with the
    /// first-order covariance recursion.
    Jko,
    /// Exact mean/covariance propagation over each step.
    Exact,
}

#[derive(Debug, Clone)]
pub struct FilterRun {
    /// Posterior densities at `t = k h`, `k = 0..=K`.
    pub posterior: Vec<Gaussian>,
    /// Innovations `y_k − C μ_k⁻`, `k = 1..=K`.
    pub innovations: Vec<Vector>,
    pub config: StepConfig,
}

impl FilterRun {
    pub fn times(&self) -> Vec<f64> {
        (0..self.posterior.len()).map(|k| k as f64 * self.config.h).collect()
    }

    pub fn terminal(&self) -> &Gaussian {
        self.posterior.last().expect("a filter run always holds the initial density")
    }
}

enum Predictor {
    Symmetric { gamma: SpdMatrix, beta: f64 },
    General(Box<crate::propagation::EquipartitionFrame>),
    Exact(OdeConfig),
}

impl Predictor {
    fn new(sys: &LinearSystem, kind: PredictKind, h: f64) -> Result<Self> {
        Ok(match kind {
            PredictKind::Jko => match sys.gibbs_form() {
                Some((gamma, beta)) => Predictor::Symmetric { gamma, beta },
                None => Predictor::General(Box::new(make_equipartition(sys)?)),
            },
            PredictKind::Exact => Predictor::Exact(OdeConfig::for_step(h)?),
        })
    }

    fn step(&self, sys: &LinearSystem, g: &Gaussian, k: usize, h: f64) -> Result<Gaussian> {
        match self {
            Predictor::Symmetric { gamma, beta } => jko_step_symmetric(g, gamma, *beta, h),
            Predictor::General(frame) => {
                Gaussian::new(jko_step_general_mean(g.mean(), frame, k, h)?, jko_step_general_cov(g.cov(), sys, h)?)
            }
            Predictor::Exact(ode) => Gaussian::new(exact_mean(sys, g.mean(), h)?, exact_cov(sys, g.cov(), h, ode)?),
        }
    }
}

/// Runs `K = cfg.steps` predict/update cycles on the increments `dz`.
pub fn run_filter(
    sys: &LinearSystem,
    meas: &MeasurementModel,
    g0: &Gaussian,
    dz: &[Vector],
    cfg: &StepConfig,
    update: UpdateKind,
    predict: PredictKind,
) -> Result<FilterRun> {
    if dz.len() != cfg.steps {
        return Err(Error::dims("measurement increments", cfg.steps, dz.len()));
    }
    if meas.state_dim() != sys.dim() || g0.dim() != sys.dim() {
        return Err(Error::dims("filter state", sys.dim(), meas.state_dim()));
    }
    let h = cfg.h;
    let predictor = Predictor::new(sys, predict, h)?;
    let mut posterior = Vec::with_capacity(cfg.steps + 1);
    let mut innovations = Vec::with_capacity(cfg.steps);
    posterior.push(g0.clone());
    let mut g = g0.clone();
    for (k, dz_k) in dz.iter().enumerate() {
        let prior = predictor.step(sys, &g, k + 1, h)?;
        let y = dz_k / h;
        innovations.push(&y - meas.c() * prior.mean());
        g = match update {
            UpdateKind::Lmmr => lmmr_update(&prior, meas, &y, h)?,
            UpdateKind::Wasserstein => wasserstein_update(&prior, meas, &y, h)?,
        };
        posterior.push(g.clone());
    }
    Ok(FilterRun { posterior, innovations, config: *cfg })
}

/// Estimation error of one run against its true state path.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorMetrics {
    /// `‖μ_k − x_k‖²` for each time.
    pub squared_errors: Vec<f64>,
    /// Root mean squared error over the path.
    pub rmse: f64,
    pub terminal_squared_error: f64,
}

pub fn error_metrics(run: &FilterRun, truth: &[Vector]) -> Result<ErrorMetrics> {
    if truth.len() != run.posterior.len() {
        return Err(Error::dims("truth path length", run.posterior.len(), truth.len()));
    }
    let squared_errors = run
        .posterior
        .iter()
        .zip(truth)
        .map(|(g, x)| {
            if x.len() != g.dim() {
                return Err(Error::dims("truth state", g.dim(), x.len()));
            }
            Ok((g.mean() - x).norm_squared())
        })
        .collect::<Result<Vec<f64>>>()?;
    let rmse = (squared_errors.iter().sum::<f64>() / squared_errors.len() as f64).sqrt();
    let terminal_squared_error = *squared_errors.last().expect("non-empty path");
    Ok(ErrorMetrics { squared_errors, rmse, terminal_squared_error })
}

/// Root of the mean terminal squared error over repeated runs.
pub fn terminal_rmse(runs: &[ErrorMetrics]) -> Option<f64> {
    if runs.is_empty() {
        return None;
    }
    let mean = runs.iter().map(|m| m.terminal_squared_error).sum::<f64>() / runs.len() as f64;
    Some(mean.sqrt())
}
