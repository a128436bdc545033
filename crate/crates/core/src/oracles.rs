//! Reference solutions the proximal recursions are checked against.
//!
//! Everything here integrates the continuous-time equations directly (matrix
//! exponential, integrating-factor closed form, fixed-step RK4) or minimizes a
//! proximal objective numerically. None of it calls the closed-form step
//! implementations it is used to verify.

use crate::error::{Error, Result};
use crate::filtering::MeasurementModel;
use crate::gaussian::{check_beta, free_energy, kl_gaussian, phi_expectation, w2_squared, Gaussian};
use crate::matrix::{expm, symmetrize, Matrix, SpdMatrix, SymMatrix, Vector};
use crate::propagation::LinearSystem;

/// Fixed-step RK4 settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeConfig {
    pub substep: f64,
    /// Accuracy target, checked by the self-consistency tests.
    pub tolerance: f64,
}

impl OdeConfig {
    pub fn new(substep: f64, tolerance: f64) -> Result<Self> {
        if !(substep > 0.0 && substep.is_finite()) {
            return Err(Error::InvalidArgument(format!("ODE substep must be positive, got {substep}")));
        }
        Ok(OdeConfig { substep, tolerance })
    }

    /// Default for a scheme with step `h`: substep `h/20`.
    pub fn for_step(h: f64) -> Result<Self> {
        Self::new(h / 20.0, 1e-8)
    }

    fn substeps(&self, span: f64) -> (usize, f64) {
        let n = (span / self.substep).ceil().max(1.0) as usize;
        (n, span / n as f64)
    }
}

fn rk4_step(p: &Matrix, dt: f64, f: &impl Fn(&Matrix) -> Matrix) -> Matrix {
    let k1 = f(p);
    let k2 = f(&(p + &k1 * (dt / 2.0)));
    let k3 = f(&(p + &k2 * (dt / 2.0)));
    let k4 = f(&(p + &k3 * dt));
    symmetrize(&(p + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)))
}

fn check_time(t: f64) -> Result<()> {
    if t >= 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("time must be nonnegative, got {t}")))
    }
}

/// `μ(t) = e^{At} μ0`.
pub fn exact_mean(sys: &LinearSystem, mu0: &Vector, t: f64) -> Result<Vector> {
    if mu0.len() != sys.dim() {
        return Err(Error::dims("initial mean", sys.dim(), mu0.len()));
    }
    check_time(t)?;
    Ok(expm(sys.a(), t)? * mu0)
}

/// Covariance solving `Ṗ = AP + PAᵀ + 2BBᵀ`, `P(0) = P0`.
///
/// Uses the integrating-factor closed form when the system is a gradient flow
/// with isotropic noise, RK4 otherwise.
pub fn exact_cov(sys: &LinearSystem, p0: &SpdMatrix, t: f64, cfg: &OdeConfig) -> Result<SpdMatrix> {
    match sys.gibbs_form() {
        Some((gamma, beta)) => exact_cov_closed_form(&gamma, beta, p0, t),
        None => exact_cov_rk4(sys, p0, t, cfg),
    }
}

/// `P(t) = β⁻¹Γ⁻¹(I − e^{−2Γt}) + e^{−Γt} P0 e^{−Γt}`.
pub fn exact_cov_closed_form(gamma: &SpdMatrix, beta: f64, p0: &SpdMatrix, t: f64) -> Result<SpdMatrix> {
    check_beta(beta)?;
    check_time(t)?;
    if gamma.dim() != p0.dim() {
        return Err(Error::dims("initial covariance", gamma.dim(), p0.dim()));
    }
    let stationary_part = gamma.map_spectrum(|l| -(-2.0 * l * t).exp_m1() / (beta * l), "β⁻¹Γ⁻¹(I − e^{−2Γt})");
    let decay = gamma.map_spectrum(|l| (-l * t).exp(), "e^{−Γt}")?;
    let transient = p0.congruence(decay.matrix())?;
    let total = match stationary_part {
        Ok(s) => s.matrix() + transient.matrix(),
        // t = 0: the stationary part vanishes
        Err(Error::Singular { .. }) => transient.matrix().clone(),
        Err(e) => return Err(e),
    };
    SpdMatrix::named(total, "propagated covariance")
}

/// RK4 integration of the covariance ODE.
pub fn exact_cov_rk4(sys: &LinearSystem, p0: &SpdMatrix, t: f64, cfg: &OdeConfig) -> Result<SpdMatrix> {
    check_time(t)?;
    if p0.dim() != sys.dim() {
        return Err(Error::dims("initial covariance", sys.dim(), p0.dim()));
    }
    let a = sys.a();
    let q = sys.bbt() * 2.0;
    let f = |p: &Matrix| a * p + p * a.transpose() + &q;
    let (n, dt) = cfg.substeps(t);
    let mut p = p0.matrix().clone();
    if t > 0.0 {
        for _ in 0..n {
            p = rk4_step(&p, dt, &f);
        }
    }
    SpdMatrix::named(p, "propagated covariance")
}

fn check_run_inputs(sys: &LinearSystem, meas: &MeasurementModel, g0: &Gaussian, dz: &[Vector], h: f64) -> Result<()> {
    if meas.state_dim() != sys.dim() || g0.dim() != sys.dim() {
        return Err(Error::dims("filter state", sys.dim(), meas.state_dim()));
    }
    if let Some(bad) = dz.iter().find(|d| d.len() != meas.obs_dim()) {
        return Err(Error::dims("measurement increment", meas.obs_dim(), bad.len()));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidArgument(format!("step size must be positive, got {h}")));
    }
    Ok(())
}

/// Shared integrator: covariance by RK4, mean by Euler, both on a substep grid
/// with each data increment spread evenly over its interval.
#[allow(clippy::too_many_arguments)]
fn continuous_filter(
    sys: &LinearSystem,
    meas: &MeasurementModel,
    g0: &Gaussian,
    dz: &[Vector],
    h: f64,
    cfg: &OdeConfig,
    gain: impl Fn(&Matrix) -> Matrix,
    cov_rhs: impl Fn(&Matrix) -> Matrix,
) -> Result<Vec<Gaussian>> {
    check_run_inputs(sys, meas, g0, dz, h)?;
    let a = sys.a();
    let c = meas.c();
    let (n_sub, dt) = cfg.substeps(h);
    let mut mean = g0.mean().clone();
    let mut p = g0.cov().matrix().clone();
    let mut out = Vec::with_capacity(dz.len() + 1);
    out.push(g0.clone());
    for dz_k in dz {
        let dz_sub = dz_k / n_sub as f64;
        for _ in 0..n_sub {
            let k = gain(&p);
            mean = &mean + a * &mean * dt + k * (&dz_sub - c * &mean * dt);
            p = rk4_step(&p, dt, &cov_rhs);
        }
        out.push(Gaussian::new(mean.clone(), SpdMatrix::named(p.clone(), "filter covariance")?)?);
    }
    Ok(out)
}

/// Kalman-Bucy filter: `dμ = Aμ dt + K(dz − Cμ dt)`,
/// `Ṗ = AP + PAᵀ + 2BBᵀ − K R Kᵀ`, `K = PCᵀR⁻¹`.
pub fn kalman_bucy_run(
    sys: &LinearSystem,
    meas: &MeasurementModel,
    g0: &Gaussian,
    dz: &[Vector],
    h: f64,
    cfg: &OdeConfig,
) -> Result<Vec<Gaussian>> {
    let a = sys.a();
    let q = sys.bbt() * 2.0;
    let gain_t = meas.static_gain();
    let info = meas.information().into_matrix();
    continuous_filter(sys, meas, g0, dz, h, cfg, |p| p * &gain_t, |p| a * p + p * a.transpose() + &q - p * &info * p)
}

/// Luenberger-type observer with static gain `L = CᵀR⁻¹`:
/// `Ṗ = (A − LC)P + P(A − LC)ᵀ + 2BBᵀ`.
pub fn luenberger_run(
    sys: &LinearSystem,
    meas: &MeasurementModel,
    g0: &Gaussian,
    dz: &[Vector],
    h: f64,
    cfg: &OdeConfig,
) -> Result<Vec<Gaussian>> {
    let l = meas.static_gain();
    let closed = sys.a() - &l * meas.c();
    let q = sys.bbt() * 2.0;
    continuous_filter(sys, meas, g0, dz, h, cfg, |_| l.clone(), |p| &closed * p + p * closed.transpose() + &q)
}

/// Two-step proximal objectives, evaluated on the Gaussian representative.
#[derive(Debug, Clone)]
pub enum ProxObjective {
    /// `½W²(ρ, anchor) + h F(ρ)`, `F = E + β⁻¹S` with `U(x) = ½xᵀΓx`.
    JkoFreeEnergy { anchor: Gaussian, gamma: SpdMatrix, beta: f64 },
    /// `KL(ρ ‖ anchor) + h Φ(ρ)`.
    LmmrKl { anchor: Gaussian, meas: MeasurementModel, y: Vector },
    /// `½W²(ρ, anchor) + h Φ(ρ)`.
    WassersteinFilter { anchor: Gaussian, meas: MeasurementModel, y: Vector },
}

impl ProxObjective {
    pub fn anchor(&self) -> &Gaussian {
        match self {
            ProxObjective::JkoFreeEnergy { anchor, .. }
            | ProxObjective::LmmrKl { anchor, .. }
            | ProxObjective::WassersteinFilter { anchor, .. } => anchor,
        }
    }

    fn validate(&self) -> Result<()> {
        let n = self.anchor().dim();
        match self {
            ProxObjective::JkoFreeEnergy { gamma, beta, .. } => {
                check_beta(*beta)?;
                if gamma.dim() != n {
                    return Err(Error::dims("potential Γ", n, gamma.dim()));
                }
            }
            ProxObjective::LmmrKl { meas, y, .. } | ProxObjective::WassersteinFilter { meas, y, .. } => {
                if meas.state_dim() != n {
                    return Err(Error::dims("observation matrix columns", n, meas.state_dim()));
                }
                if y.len() != meas.obs_dim() {
                    return Err(Error::dims("measurement", meas.obs_dim(), y.len()));
                }
            }
        }
        Ok(())
    }

    /// Objective value at `g` for step `h`.
    pub fn value(&self, g: &Gaussian, h: f64) -> Result<f64> {
        Ok(match self {
            ProxObjective::JkoFreeEnergy { anchor, gamma, beta } => {
                0.5 * w2_squared(g, anchor)? + h * free_energy(g, gamma, *beta)?
            }
            ProxObjective::LmmrKl { anchor, meas, y } => {
                kl_gaussian(g, anchor)? + h * phi_expectation(g, meas.c(), meas.r_inv(), y)?
            }
            ProxObjective::WassersteinFilter { anchor, meas, y } => {
                0.5 * w2_squared(g, anchor)? + h * phi_expectation(g, meas.c(), meas.r_inv(), y)?
            }
        })
    }

    /// Scalar form of [`ProxObjective::value`], written out independently.
    fn scalar_value(&self, mu: f64, p: f64, h: f64) -> f64 {
        use std::f64::consts::PI;
        let am = self.anchor().mean()[0];
        let ap = self.anchor().cov().matrix()[(0, 0)];
        let w2sq = (mu - am).powi(2) + (p.sqrt() - ap.sqrt()).powi(2);
        let phi = |meas: &MeasurementModel, y: &Vector| {
            let c = meas.c()[(0, 0)];
            let r = meas.r().matrix()[(0, 0)];
            0.5 * ((y[0] - c * mu).powi(2) + c * c * p) / r
        };
        match self {
            ProxObjective::JkoFreeEnergy { gamma, beta, .. } => {
                let g = gamma.matrix()[(0, 0)];
                let energy = 0.5 * g * (mu * mu + p);
                let entropy = -0.5 * (1.0 + (2.0 * PI).ln() + p.ln());
                0.5 * w2sq + h * (energy + entropy / beta)
            }
            ProxObjective::LmmrKl { meas, y, .. } => {
                let kl = 0.5 * (p / ap + (mu - am).powi(2) / ap - 1.0 - (p / ap).ln());
                kl + h * phi(meas, y)
            }
            ProxObjective::WassersteinFilter { meas, y, .. } => 0.5 * w2sq + h * phi(meas, y),
        }
    }

    /// Bracket `(μ_lo, μ_hi, P_lo, P_hi)` for the scalar grid, built from the
    /// problem data only: the minimizer lies between the anchor and the
    /// minimizer of the functional alone.
    fn scalar_window(&self) -> (f64, f64, f64, f64) {
        let am = self.anchor().mean()[0];
        let ap = self.anchor().cov().matrix()[(0, 0)];
        let (mu_target, p_lo, p_hi) = match self {
            ProxObjective::JkoFreeEnergy { gamma, beta, .. } => {
                let g = gamma.matrix()[(0, 0)];
                let stationary = 1.0 / (beta * g);
                (0.0, ap.min(stationary), ap.max(stationary))
            }
            ProxObjective::LmmrKl { meas, y, .. } | ProxObjective::WassersteinFilter { meas, y, .. } => {
                let c = meas.c()[(0, 0)];
                let target = if c != 0.0 { y[0] / c } else { am };
                (target, 0.0, ap)
            }
        };
        let (mu_lo, mu_hi) = (am.min(mu_target), am.max(mu_target));
        let mu_pad = 0.5 * (mu_hi - mu_lo) + 0.1 * (1.0 + am.abs());
        let p_pad = 0.5 * (p_hi - p_lo) + 0.1 * p_hi;
        (mu_lo - mu_pad, mu_hi + mu_pad, (p_lo - p_pad).max(1e-3 * p_lo.max(1e-6 * p_hi)), p_hi + p_pad)
    }
}

/// Search settings for [`brute_force_prox`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchConfig {
    /// Points per axis of the scalar grid.
    pub grid_points: usize,
    /// Zoom rounds after the coarse scalar grid.
    pub refine_rounds: usize,
    /// Iteration cap for the two-dimensional gradient descent.
    pub max_iterations: usize,
    /// Gradient-norm stopping threshold for the gradient descent.
    pub gradient_tolerance: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig { grid_points: 200, refine_rounds: 3, max_iterations: 200_000, gradient_tolerance: 1e-7 }
    }
}

/// Numerically minimizes the proximal objective over `(μ, P)`.
///
/// One dimension: coarse grid then zoomed grids. Two dimensions: gradient
/// descent with central-difference gradients and backtracking, with
/// `P = L Lᵀ` parameterized by a Cholesky factor with log-diagonal.
pub fn brute_force_prox(obj: &ProxObjective, h: f64, search: &SearchConfig) -> Result<(Gaussian, f64)> {
    obj.validate()?;
    if !(h >= 0.0 && h.is_finite()) {
        return Err(Error::InvalidArgument(format!("step size must be nonnegative, got {h}")));
    }
    match obj.anchor().dim() {
        1 => grid_search(obj, h, search),
        2 => descent_search(obj, h, search),
        n => Err(Error::InvalidArgument(format!("brute-force oracle supports dimensions 1 and 2, got {n}"))),
    }
}

fn grid_search(obj: &ProxObjective, h: f64, search: &SearchConfig) -> Result<(Gaussian, f64)> {
    let n = search.grid_points.max(5);
    let (mut mu_lo, mut mu_hi, mut p_lo, mut p_hi) = obj.scalar_window();
    let mut best = (0.0, 0.0, f64::INFINITY);
    for round in 0..=search.refine_rounds {
        let dmu = (mu_hi - mu_lo) / (n - 1) as f64;
        let dp = (p_hi - p_lo) / (n - 1) as f64;
        let mut arg = (0, 0);
        best.2 = f64::INFINITY;
        for i in 0..n {
            let mu = mu_lo + i as f64 * dmu;
            for j in 0..n {
                let p = p_lo + j as f64 * dp;
                let v = obj.scalar_value(mu, p, h);
                if v < best.2 {
                    best = (mu, p, v);
                    arg = (i, j);
                }
            }
        }
        if round == 0 && (arg.0 == 0 || arg.0 == n - 1 || arg.1 == 0 || arg.1 == n - 1) {
            return Err(Error::OracleFailure(format!(
                "grid minimum on the boundary of the search window at (μ, P) = ({}, {})",
                best.0, best.1
            )));
        }
        mu_lo = best.0 - 2.0 * dmu;
        mu_hi = best.0 + 2.0 * dmu;
        p_lo = (best.1 - 2.0 * dp).max(0.5 * best.1);
        p_hi = best.1 + 2.0 * dp;
    }
    let g = Gaussian::scalar(best.0, best.1)?;
    let value = obj.value(&g, h)?;
    Ok((g, value))
}

fn params_to_gaussian(theta: &[f64; 5]) -> Result<Gaussian> {
    let l = Matrix::from_row_slice(2, 2, &[theta[2].exp(), 0.0, theta[3], theta[4].exp()]);
    let cov = SpdMatrix::from_sym(SymMatrix::symmetric_part(&(&l * l.transpose())), "oracle covariance")?;
    Gaussian::new(Vector::from_column_slice(&theta[..2]), cov)
}

fn descent_search(obj: &ProxObjective, h: f64, search: &SearchConfig) -> Result<(Gaussian, f64)> {
    let f =
        |theta: &[f64; 5]| -> f64 { params_to_gaussian(theta).and_then(|g| obj.value(&g, h)).unwrap_or(f64::INFINITY) };
    let anchor = obj.anchor();
    let chol = anchor
        .cov()
        .matrix()
        .clone()
        .cholesky()
        .ok_or_else(|| Error::OracleFailure("anchor covariance has no Cholesky factor".into()))?
        .l();
    let mut theta = [anchor.mean()[0], anchor.mean()[1], chol[(0, 0)].ln(), chol[(1, 0)], chol[(1, 1)].ln()];
    let grad = |theta: &[f64; 5]| -> [f64; 5] {
        let mut g = [0.0; 5];
        for i in 0..5 {
            let step = 1e-5 * (1.0 + theta[i].abs());
            let mut up = *theta;
            let mut down = *theta;
            up[i] += step;
            down[i] -= step;
            g[i] = (f(&up) - f(&down)) / (2.0 * step);
        }
        g
    };

    let mut value = f(&theta);
    let mut g = grad(&theta);
    let mut step = 1.0;
    let mut prev: Option<([f64; 5], [f64; 5])> = None;
    for _ in 0..search.max_iterations {
        let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gnorm < search.gradient_tolerance {
            let g = params_to_gaussian(&theta)?;
            let v = obj.value(&g, h)?;
            return Ok((g, v));
        }
        // Barzilai-Borwein trial step, then Armijo backtracking.
        if let Some((tp, gp)) = prev {
            let s: Vec<f64> = (0..5).map(|i| theta[i] - tp[i]).collect();
            let y: Vec<f64> = (0..5).map(|i| g[i] - gp[i]).collect();
            let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
            let ss: f64 = s.iter().map(|a| a * a).sum();
            if sy > 0.0 {
                step = (ss / sy).clamp(1e-8, 1e4);
            }
        }
        let mut accepted = false;
        for _ in 0..60 {
            let mut trial = theta;
            for i in 0..5 {
                trial[i] -= step * g[i];
            }
            let tv = f(&trial);
            if tv <= value - 1e-4 * step * gnorm * gnorm {
                prev = Some((theta, g));
                theta = trial;
                value = tv;
                g = grad(&theta);
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // no further decrease is resolvable at double precision
            if gnorm < 1e-6 {
                let g = params_to_gaussian(&theta)?;
                let v = obj.value(&g, h)?;
                return Ok((g, v));
            }
            return Err(Error::OracleFailure(format!("line search stalled with gradient norm {gnorm:e}")));
        }
    }
    Err(Error::OracleFailure(format!("gradient descent did not converge in {} iterations", search.max_iterations)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::{dmatrix, dvector};

    fn scalar_system() -> LinearSystem {
        LinearSystem::new(dmatrix![-1.0], dmatrix![1.0]).unwrap()
    }

    fn scalar_meas(c: f64) -> MeasurementModel {
        MeasurementModel::new(dmatrix![c], SpdMatrix::identity(1)).unwrap()
    }

    #[test]
    fn exact_mean_examples() {
        let sys = scalar_system();
        assert_eq!(exact_mean(&sys, &dvector![2.0], 0.0).unwrap(), dvector![2.0]);
        assert_abs_diff_eq!(exact_mean(&sys, &dvector![2.0], 0.2).unwrap()[0], 1.637462, epsilon = 1e-6);
        assert_eq!(exact_mean(&sys, &dvector![0.0], 3.0).unwrap(), dvector![0.0]);
    }

    #[test]
    fn exact_cov_examples() {
        let sys = scalar_system();
        let p0 = SpdMatrix::diagonal(&[2.0]).unwrap();
        let ode = OdeConfig::new(1e-3, 1e-10).unwrap();
        assert_abs_diff_eq!(exact_cov(&sys, &p0, 0.0, &ode).unwrap().matrix()[(0, 0)], 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(exact_cov(&sys, &p0, 0.1, &ode).unwrap().matrix()[(0, 0)], 1.818731, epsilon = 1e-6);
        assert_abs_diff_eq!(exact_cov(&sys, &p0, 20.0, &ode).unwrap().matrix()[(0, 0)], 1.0, epsilon = 1e-8);
        let rk = exact_cov_rk4(&sys, &p0, 0.1, &ode).unwrap();
        assert_abs_diff_eq!(rk.matrix()[(0, 0)], 1.0 + (-0.2f64).exp(), epsilon = 1e-12);
    }

    #[test]
    fn closed_form_matches_rk4_in_several_dimensions() {
        let gamma = SpdMatrix::new(dmatrix![2.0, 0.4; 0.4, 0.8]).unwrap();
        let beta: f64 = 0.5;
        let p0 = SpdMatrix::new(dmatrix![1.0, -0.3; -0.3, 3.0]).unwrap();
        let sys = LinearSystem::new(-gamma.matrix().clone(), Matrix::identity(2, 2) * (1.0 / beta).sqrt()).unwrap();
        let ode = OdeConfig::new(1e-3, 1e-10).unwrap();
        let closed = exact_cov_closed_form(&gamma, beta, &p0, 1.3).unwrap();
        let rk = exact_cov_rk4(&sys, &p0, 1.3, &ode).unwrap();
        assert!((closed.matrix() - rk.matrix()).amax() < 1e-11);
    }

    #[test]
    fn kalman_bucy_reaches_riccati_root() {
        let sys = scalar_system();
        let meas = scalar_meas(1.0);
        let g0 = Gaussian::scalar(0.0, 1.0).unwrap();
        let h = 0.01;
        let dz = vec![dvector![0.0]; 2000];
        let ode = OdeConfig::for_step(h).unwrap();
        let run = kalman_bucy_run(&sys, &meas, &g0, &dz, h, &ode).unwrap();
        assert_eq!(run.len(), 2001);
        assert_abs_diff_eq!(run[2000].cov().matrix()[(0, 0)], 3f64.sqrt() - 1.0, epsilon = 1e-6);
    }

    #[test]
    fn luenberger_reaches_lyapunov_root() {
        let sys = scalar_system();
        let meas = scalar_meas(1.0);
        let g0 = Gaussian::scalar(0.0, 1.0).unwrap();
        let h = 0.01;
        let dz = vec![dvector![0.0]; 2000];
        let run = luenberger_run(&sys, &meas, &g0, &dz, h, &OdeConfig::for_step(h).unwrap()).unwrap();
        assert_abs_diff_eq!(run[2000].cov().matrix()[(0, 0)], 0.5, epsilon = 1e-6);
    }

    #[test]
    fn uninformative_filter_is_plain_propagation() {
        let sys = LinearSystem::new(dmatrix![-1.0, 2.0; 0.0, -3.0], Matrix::identity(2, 2)).unwrap();
        let meas = MeasurementModel::new(Matrix::zeros(1, 2), SpdMatrix::identity(1)).unwrap();
        let g0 = Gaussian::new(dvector![1.0, -1.0], SpdMatrix::diagonal(&[2.0, 0.5]).unwrap()).unwrap();
        let h = 0.05;
        let dz = vec![dvector![0.3]; 20];
        let ode = OdeConfig::for_step(h).unwrap();
        let exact = exact_cov(&sys, g0.cov(), 1.0, &OdeConfig::new(1e-3, 1e-10).unwrap()).unwrap();
        for run in [
            kalman_bucy_run(&sys, &meas, &g0, &dz, h, &ode).unwrap(),
            luenberger_run(&sys, &meas, &g0, &dz, h, &ode).unwrap(),
        ] {
            assert!((run[20].cov().matrix() - exact.matrix()).amax() < 1e-9);
        }
    }

    #[test]
    fn noise_free_data_tracks_the_mean_ode() {
        // dz built from the exact mean path: the innovation is O(h²)
        let sys = scalar_system();
        let meas = scalar_meas(1.0);
        let g0 = Gaussian::scalar(2.0, 0.5).unwrap();
        let h = 0.001;
        let dz: Vec<Vector> = (0..1000)
            .map(|k| {
                let t0 = k as f64 * h;
                dvector![2.0 * ((-t0).exp() - (-(t0 + h)).exp())]
            })
            .collect();
        let run = kalman_bucy_run(&sys, &meas, &g0, &dz, h, &OdeConfig::for_step(h).unwrap()).unwrap();
        assert!((run[1000].mean()[0] - 2.0 * (-1.0f64).exp()).abs() < 1e-3);
    }

    #[test]
    fn brute_force_matches_worked_examples() {
        let search = SearchConfig::default();
        let obj = ProxObjective::JkoFreeEnergy {
            anchor: Gaussian::scalar(2.0, 2.0).unwrap(),
            gamma: SpdMatrix::identity(1),
            beta: 1.0,
        };
        let (g, _) = brute_force_prox(&obj, 0.1, &search).unwrap();
        assert_abs_diff_eq!(g.mean()[0], 1.818182, epsilon = 1e-4);
        assert_abs_diff_eq!(g.cov().matrix()[(0, 0)], 1.830195, epsilon = 1e-4);

        let obj = ProxObjective::LmmrKl {
            anchor: Gaussian::scalar(0.0, 1.0).unwrap(),
            meas: scalar_meas(1.0),
            y: dvector![1.0],
        };
        let (g, _) = brute_force_prox(&obj, 0.1, &search).unwrap();
        assert_abs_diff_eq!(g.mean()[0], 0.090909, epsilon = 1e-4);
        assert_abs_diff_eq!(g.cov().matrix()[(0, 0)], 0.909091, epsilon = 1e-4);

        let (g, _) = brute_force_prox(&obj, 0.0, &search).unwrap();
        assert_abs_diff_eq!(g.mean()[0], 0.0, epsilon = 1e-4);
        assert_abs_diff_eq!(g.cov().matrix()[(0, 0)], 1.0, epsilon = 1e-4);
    }

    #[test]
    fn brute_force_rejects_large_dimensions() {
        let obj = ProxObjective::JkoFreeEnergy {
            anchor: Gaussian::new(dvector![0.0, 0.0, 0.0], SpdMatrix::identity(3)).unwrap(),
            gamma: SpdMatrix::identity(3),
            beta: 1.0,
        };
        assert!(brute_force_prox(&obj, 0.1, &SearchConfig::default()).is_err());
    }
}
