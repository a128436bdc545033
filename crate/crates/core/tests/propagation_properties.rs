use nalgebra::{dmatrix, dvector};
use proxflow::gaussian::{grad_w2_cross, Gaussian};
use proxflow::matrix::{inv_spd, max_abs, Matrix, SpdMatrix, Vector};
use proxflow::oracles::{exact_cov, exact_mean, OdeConfig};
use proxflow::propagation::{
    jko_step_general_mean, jko_step_symmetric, make_equipartition, propagate, symmetrized_pair, LinearSystem,
    PropagationMode, StepConfig,
};
use proxflow::rng::NormalStream;
use proxflow::sampling;

fn terminal_errors(sys: &LinearSystem, g0: &Gaussian, mode: PropagationMode, h: f64, horizon: f64) -> (f64, f64) {
    let cfg = StepConfig::for_horizon(h, horizon, None).unwrap();
    let path = propagate(sys, g0, &cfg, mode).unwrap();
    let (_, last) = path.last().unwrap();
    let ode = OdeConfig::new(1e-4, 1e-12).unwrap();
    let mean = exact_mean(sys, g0.mean(), horizon).unwrap();
    let cov = exact_cov(sys, g0.cov(), horizon, &ode).unwrap();
    ((last.mean() - mean).amax(), max_abs(&(last.cov().matrix() - cov.matrix())))
}

fn assert_ratios(errors: &[f64], lo: f64, hi: f64, what: &str) {
    for w in errors.windows(2) {
        let ratio = w[0] / w[1];
        assert!((lo..=hi).contains(&ratio), "{what}: ratio {ratio} from errors {errors:?}");
    }
}

#[test]
fn gibbs_density_is_a_fixed_point() {
    let mut rng = NormalStream::new(1);
    for k in 0..100 {
        let n = 1 + k % 4;
        let gamma = sampling::spd(&mut rng, n, 0.1, 10.0).unwrap();
        let beta = rng.uniform(0.1, 10.0);
        let h = rng.uniform(1e-3, 0.1);
        let gibbs = Gaussian::new(Vector::zeros(n), inv_spd(&gamma).unwrap().scale(1.0 / beta).unwrap()).unwrap();
        let next = jko_step_symmetric(&gibbs, &gamma, beta, h).unwrap();
        assert!(next.mean().amax() < 1e-10);
        let dev = max_abs(&(next.cov().matrix() - gibbs.cov().matrix()));
        assert!(dev < 1e-10, "deviation {dev:e}");
    }
}

#[test]
fn symmetric_scalar_benchmark_is_first_order() {
    let sys = LinearSystem::new(dmatrix![-1.0], dmatrix![1.0]).unwrap();
    let g0 = Gaussian::scalar(2.0, 2.0).unwrap();
    let (mean_err, cov_err): (Vec<f64>, Vec<f64>) = [0.04, 0.02, 0.01, 0.005]
        .iter()
        .map(|&h| terminal_errors(&sys, &g0, PropagationMode::SymmetricExact, h, 1.0))
        .unzip();
    assert_ratios(&mean_err, 1.7, 2.3, "mean");
    assert_ratios(&cov_err, 1.7, 2.3, "covariance");
}

#[test]
fn general_case_is_first_order() {
    let sys = LinearSystem::new(dmatrix![-1.0, 2.0; 0.0, -3.0], Matrix::identity(2, 2)).unwrap();
    let g0 = Gaussian::new(dvector![1.0, -1.0], SpdMatrix::diagonal(&[2.0, 0.5]).unwrap()).unwrap();
    let (mean_err, cov_err): (Vec<f64>, Vec<f64>) = [0.04, 0.02, 0.01, 0.005]
        .iter()
        .map(|&h| terminal_errors(&sys, &g0, PropagationMode::GeneralFirstOrder, h, 1.0))
        .unzip();
    assert_ratios(&mean_err, 1.7, 2.3, "mean");
    assert_ratios(&cov_err, 1.7, 2.3, "covariance");
}

#[test]
fn covariance_step_matches_matrix_drift_to_second_order() {
    let mut rng = NormalStream::new(16);
    for k in 0..50 {
        let n = 1 + k % 4;
        let gamma = sampling::spd(&mut rng, n, 0.2, 3.0).unwrap();
        let beta = rng.uniform(0.3, 3.0);
        let g0 = sampling::gaussian(&mut rng, n, 0.2, 3.0).unwrap();
        let p = g0.cov().matrix();
        let drift = -(gamma.matrix() * p) - p * gamma.matrix() + Matrix::identity(n, n) * (2.0 / beta);
        let local = |h: f64| {
            let next = jko_step_symmetric(&g0, &gamma, beta, h).unwrap();
            max_abs(&(next.cov().matrix() - p - &drift * h))
        };
        let ratio = local(2e-3) / local(1e-3);
        assert!((3.5..=4.5).contains(&ratio), "local covariance error ratio {ratio}");
    }
}

#[test]
fn general_mean_step_matches_euler_to_second_order() {
    let mut rng = NormalStream::new(24);
    for k in 0..50 {
        let n = 1 + k % 4;
        let sys = sampling::stable_system(&mut rng, n).unwrap();
        let frame = make_equipartition(&sys).unwrap();
        let mu = sampling::normal_vector(&mut rng, n);
        let step = 1 + k % 7;
        let local = |h: f64| {
            let next = jko_step_general_mean(&mu, &frame, step, h).unwrap();
            (next - &mu - sys.a() * &mu * h).amax()
        };
        let (e1, e2) = (local(2e-3), local(1e-3));
        if e1 < 1e-13 {
            continue;
        }
        let ratio = e1 / e2;
        assert!((3.5..=4.5).contains(&ratio), "local mean error ratio {ratio}");
    }
}

#[test]
fn jko_step_satisfies_first_order_optimality() {
    let mut rng = NormalStream::new(31);
    for k in 0..100 {
        let n = 1 + k % 4;
        let gamma = sampling::spd(&mut rng, n, 0.2, 5.0).unwrap();
        let beta = rng.uniform(0.2, 5.0);
        let h = rng.uniform(1e-3, 0.1);
        let g0 = sampling::gaussian(&mut rng, n, 0.2, 5.0).unwrap();
        let g = jko_step_symmetric(&g0, &gamma, beta, h).unwrap();

        let grad_mean = (g.mean() - g0.mean()) + gamma.matrix() * g.mean() * h;
        let cross = grad_w2_cross(g.cov(), g0.cov()).unwrap();
        let p_inv = inv_spd(g.cov()).unwrap();
        let grad_cov = Matrix::identity(n, n) * 0.5 - cross.matrix() + gamma.matrix() * (0.5 * h)
            - p_inv.matrix() * (0.5 * h / beta);
        assert!(grad_mean.amax() < 1e-8, "mean gradient {:e}", grad_mean.amax());
        assert!(max_abs(&grad_cov) < 1e-8, "covariance gradient {:e}", max_abs(&grad_cov));
    }
}

#[test]
fn frame_invariants_on_random_systems() {
    let mut rng = NormalStream::new(200);
    for k in 0..200 {
        let n = 1 + k % 5;
        let sys = sampling::stable_system(&mut rng, n).unwrap();
        let frame = make_equipartition(&sys).unwrap();
        let (orig, ep) = frame.residuals(&sys);
        let scale = 1.0 + max_abs(frame.pinf.matrix()) * max_abs(sys.a());
        assert!(orig < 1e-9 * scale && ep < 1e-9 * scale, "residuals {orig:e} {ep:e}");
        assert!((frame.theta - frame.pinf.trace() / n as f64).abs() < 1e-12 * frame.theta);
        assert!(max_abs(&(&frame.aep_skew + frame.aep_skew.transpose())) < 1e-12);
        for t in [0.0, 0.3, 1.0, 5.0] {
            let (f, g) = symmetrized_pair(&frame, t).unwrap();
            let gg = &g * g.transpose();
            assert!(max_abs(&(&gg + f.matrix())) < 1e-9 * (1.0 + max_abs(&gg)));
            assert!(f.eigenvalues().max() <= 1e-9 * (1.0 + max_abs(f.matrix())));
        }
    }
}
