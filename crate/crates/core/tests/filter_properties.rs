use nalgebra::{dmatrix, dvector};
use proxflow::filtering::{lmmr_update, run_filter, wasserstein_update, MeasurementModel, PredictKind, UpdateKind};
use proxflow::gaussian::Gaussian;
use proxflow::matrix::{max_abs, Matrix, SpdMatrix, SymMatrix, Vector};
use proxflow::oracles::{kalman_bucy_run, luenberger_run, OdeConfig};
use proxflow::propagation::{jko_step_symmetric, LinearSystem, StepConfig};
use proxflow::rng::NormalStream;
use proxflow::sampling;

fn random_measurement(rng: &mut NormalStream, n: usize, m: usize) -> MeasurementModel {
    MeasurementModel::new(sampling::normal_matrix(rng, m, n), sampling::spd(rng, m, 0.2, 3.0).unwrap()).unwrap()
}

fn min_gap_eigenvalue(prior: &Gaussian, post: &Gaussian) -> f64 {
    SymMatrix::new(prior.cov().matrix() - post.cov().matrix()).unwrap().eigenvalues().min()
}

#[test]
fn lmmr_update_is_information_monotone() {
    let mut rng = NormalStream::new(9);
    for k in 0..1000 {
        let n = 1 + k % 4;
        let m = 1 + k % 3;
        let prior = sampling::gaussian(&mut rng, n, 0.05, 5.0).unwrap();
        let meas = random_measurement(&mut rng, n, m);
        let y = sampling::normal_vector(&mut rng, m);
        let h = rng.uniform(1e-3, 0.5);
        let post = lmmr_update(&prior, &meas, &y, h).unwrap();
        assert!(min_gap_eigenvalue(&prior, &post) >= -1e-12);
    }
}

#[test]
fn scalar_wasserstein_update_is_information_monotone() {
    // with commuting scalars M⁻¹PM⁻¹ ≤ P always holds
    let mut rng = NormalStream::new(10);
    for _ in 0..1000 {
        let prior = sampling::gaussian(&mut rng, 1, 0.05, 5.0).unwrap();
        let meas = random_measurement(&mut rng, 1, 1);
        let y = sampling::normal_vector(&mut rng, 1);
        let post = wasserstein_update(&prior, &meas, &y, rng.uniform(1e-3, 0.5)).unwrap();
        assert!(min_gap_eigenvalue(&prior, &post) >= -1e-12);
    }
}

#[test]
fn wasserstein_update_can_inflate_uncertainty_in_some_direction() {
    let prior = Gaussian::new(dvector![0.0, 0.0], SpdMatrix::new(dmatrix![1.0, 0.99; 0.99, 1.0]).unwrap()).unwrap();
    let meas = MeasurementModel::new(dmatrix![0.0, 3.0], SpdMatrix::identity(1)).unwrap();
    let post = wasserstein_update(&prior, &meas, &dvector![0.0], 1.0).unwrap();
    assert!(min_gap_eigenvalue(&prior, &post) < -0.1);
}

#[test]
fn lmmr_scalar_update_expands_to_first_order() {
    let mut rng = NormalStream::new(12);
    for _ in 0..50 {
        let prior = sampling::gaussian(&mut rng, 1, 0.2, 3.0).unwrap();
        let meas = random_measurement(&mut rng, 1, 1);
        let y = sampling::normal_vector(&mut rng, 1);
        let p = prior.cov().matrix()[(0, 0)];
        let q = meas.information().matrix()[(0, 0)];
        let local = |h: f64| {
            let post = lmmr_update(&prior, &meas, &y, h).unwrap();
            (post.cov().matrix()[(0, 0)] - (p - h * p * q * p)).abs()
        };
        let ratio = local(2e-3) / local(1e-3);
        assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
    }
}

fn random_gradient_system(rng: &mut NormalStream, n: usize) -> (LinearSystem, SpdMatrix, f64) {
    let gamma = sampling::spd(rng, n, 0.3, 3.0).unwrap();
    let beta = rng.uniform(0.3, 3.0);
    let sys = LinearSystem::new(-gamma.matrix().clone(), Matrix::identity(n, n) / beta.sqrt()).unwrap();
    (sys, gamma, beta)
}

#[test]
fn predict_then_update_matches_filter_odes_to_first_order() {
    let mut rng = NormalStream::new(33);
    for k in 0..60 {
        let n = 1 + k % 3;
        let (sys, gamma, beta) = random_gradient_system(&mut rng, n);
        let meas = random_measurement(&mut rng, n, 1 + k % 2);
        let y = sampling::normal_vector(&mut rng, meas.obs_dim());
        let g = sampling::gaussian(&mut rng, n, 0.3, 3.0).unwrap();
        let p = g.cov().matrix();
        let a = sys.a();
        let q = meas.information().into_matrix();
        let noise = sys.bbt() * 2.0;
        let riccati = a * p + p * a.transpose() + &noise - p * &q * p;
        let closed = a - &q;
        let lyapunov = &closed * p + p * closed.transpose() + &noise;

        for (kind, drift) in [(UpdateKind::Lmmr, &riccati), (UpdateKind::Wasserstein, &lyapunov)] {
            let local = |h: f64| {
                let prior = jko_step_symmetric(&g, &gamma, beta, h).unwrap();
                let post = match kind {
                    UpdateKind::Lmmr => lmmr_update(&prior, &meas, &y, h).unwrap(),
                    UpdateKind::Wasserstein => wasserstein_update(&prior, &meas, &y, h).unwrap(),
                };
                max_abs(&(post.cov().matrix() - p - drift * h))
            };
            let ratio = local(2e-3) / local(1e-3);
            assert!((3.5..=4.5).contains(&ratio), "{kind:?}: ratio {ratio}");
        }
    }
}

fn steady_state_error(update: UpdateKind, h: f64) -> f64 {
    let sys = LinearSystem::new(dmatrix![-1.0], dmatrix![1.0]).unwrap();
    let meas = MeasurementModel::new(dmatrix![1.0], SpdMatrix::identity(1)).unwrap();
    let cfg = StepConfig::for_horizon(h, 20.0, None).unwrap();
    let dz = vec![dvector![0.0]; cfg.steps];
    let run =
        run_filter(&sys, &meas, &Gaussian::scalar(0.0, 1.0).unwrap(), &dz, &cfg, update, PredictKind::Jko).unwrap();
    let target = match update {
        UpdateKind::Lmmr => 3f64.sqrt() - 1.0,
        UpdateKind::Wasserstein => 0.5,
    };
    (run.terminal().cov().matrix()[(0, 0)] - target).abs()
}

#[test]
fn filter_covariances_converge_at_first_order() {
    for update in [UpdateKind::Lmmr, UpdateKind::Wasserstein] {
        let errors: Vec<f64> = [0.02, 0.01, 0.005].iter().map(|&h| steady_state_error(update, h)).collect();
        for w in errors.windows(2) {
            let ratio = w[0] / w[1];
            assert!((1.6..=2.4).contains(&ratio), "{update:?}: ratio {ratio} from {errors:?}");
        }
    }
}

#[test]
fn exact_predict_filter_converges_at_first_order() {
    let sys = LinearSystem::new(dmatrix![-1.0, 2.0; 0.0, -3.0], Matrix::identity(2, 2)).unwrap();
    let meas = MeasurementModel::new(dmatrix![1.0, 0.0], SpdMatrix::identity(1)).unwrap();
    let g0 = Gaussian::new(dvector![1.0, -1.0], SpdMatrix::diagonal(&[2.0, 0.5]).unwrap()).unwrap();
    let error = |h: f64| {
        let cfg = StepConfig::for_horizon(h, 1.0, None).unwrap();
        let dz = vec![dvector![0.0]; cfg.steps];
        let run = run_filter(&sys, &meas, &g0, &dz, &cfg, UpdateKind::Lmmr, PredictKind::Exact).unwrap();
        let kb = kalman_bucy_run(&sys, &meas, &g0, &dz, h, &OdeConfig::for_step(h).unwrap()).unwrap();
        max_abs(&(run.terminal().cov().matrix() - kb[cfg.steps].cov().matrix()))
    };
    let ratio = error(0.01) / error(0.005);
    assert!((1.7..=2.3).contains(&ratio), "ratio {ratio}");
}

#[test]
fn rk4_substep_halving_is_stable() {
    let sys = LinearSystem::new(dmatrix![-1.0, 2.0; 0.0, -3.0], Matrix::identity(2, 2)).unwrap();
    let meas = MeasurementModel::new(dmatrix![1.0, 1.0], SpdMatrix::identity(1)).unwrap();
    let g0 = Gaussian::new(dvector![1.0, -1.0], SpdMatrix::diagonal(&[2.0, 0.5]).unwrap()).unwrap();
    let dz: Vec<Vector> = (0..200).map(|k| dvector![0.01 * (k as f64 * 0.1).sin()]).collect();
    let h = 0.01;
    let coarse = OdeConfig::new(h / 20.0, 1e-8).unwrap();
    let fine = OdeConfig::new(h / 40.0, 1e-8).unwrap();
    let a = kalman_bucy_run(&sys, &meas, &g0, &dz, h, &coarse).unwrap();
    let b = kalman_bucy_run(&sys, &meas, &g0, &dz, h, &fine).unwrap();
    let cov_change = max_abs(&(a[200].cov().matrix() - b[200].cov().matrix()));
    assert!(cov_change < coarse.tolerance, "covariance change {cov_change:e}");

    let a = luenberger_run(&sys, &meas, &g0, &dz, h, &coarse).unwrap();
    let b = luenberger_run(&sys, &meas, &g0, &dz, h, &fine).unwrap();
    assert!(max_abs(&(a[200].cov().matrix() - b[200].cov().matrix())) < coarse.tolerance);
}

#[test]
fn riccati_approaches_steady_state_monotonically() {
    let sys = LinearSystem::new(dmatrix![-1.0], dmatrix![1.0]).unwrap();
    let meas = MeasurementModel::new(dmatrix![1.0], SpdMatrix::identity(1)).unwrap();
    let root = 3f64.sqrt() - 1.0;
    let h = 0.01;
    let dz = vec![dvector![0.0]; 1000];
    for (p0, sign) in [(3.0, -1.0), (0.05, 1.0)] {
        let run =
            kalman_bucy_run(&sys, &meas, &Gaussian::scalar(0.0, p0).unwrap(), &dz, h, &OdeConfig::for_step(h).unwrap())
                .unwrap();
        let covs: Vec<f64> = run.iter().map(|g| g.cov().matrix()[(0, 0)]).collect();
        for w in covs.windows(2) {
            assert!(sign * (w[1] - w[0]) >= 0.0);
        }
        assert!(covs.iter().all(|&p| sign * (root - p) >= -1e-12));
        assert!((covs[1000] - root).abs() < 1e-6);
    }
}
