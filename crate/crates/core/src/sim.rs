//! Euler–Maruyama simulation of the state SDE and observation increments.

use crate::error::{Error, Result};
use crate::filtering::MeasurementModel;
use crate::gaussian::Gaussian;
use crate::matrix::{sqrt_spd, Vector};
use crate::propagation::{LinearSystem, StepConfig};
use crate::rng::{NormalStream, SplitMix64};

/// A simulated truth path and its measurement increments.
#[derive(Debug, Clone, PartialEq)]
pub struct SimPath {
    pub states: Vec<Vector>,
    pub increments: Vec<Vector>,
    pub h: f64,
    pub seed: u64,
}

impl SimPath {
    pub fn len(&self) -> usize {
        self.increments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.increments.is_empty()
    }

    /// The same realization on a grid `factor` times coarser: states are
    /// subsampled, increments are exact partial sums.
    pub fn coarsen(&self, factor: usize) -> Result<SimPath> {
        if factor == 0 || !self.increments.len().is_multiple_of(factor) {
            return Err(Error::InvalidArgument(format!(
                "cannot coarsen {} steps by a factor of {factor}",
                self.increments.len()
            )));
        }
        let increments = self
            .increments
            .chunks(factor)
            .map(|chunk| chunk.iter().skip(1).fold(chunk[0].clone(), |acc, d| acc + d))
            .collect();
        let states = self.states.iter().step_by(factor).cloned().collect();
        Ok(SimPath { states, increments, h: self.h * factor as f64, seed: self.seed })
    }
}

/// How the initial state is chosen.
#[derive(Debug, Clone)]
pub enum InitialState {
    Exact(Vector),
    /// One draw from the given Gaussian, taken from its own stream.
    Sample(Gaussian),
}

/// Multipliers on the process and measurement noise; `1.0` is the model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseScale {
    pub process: f64,
    pub measurement: f64,
}

impl Default for NoiseScale {
    fn default() -> Self {
        NoiseScale { process: 1.0, measurement: 1.0 }
    }
}

/// The three independent normal streams used by one path.
#[derive(Debug, Clone)]
pub struct PathStreams {
    pub process: NormalStream,
    pub measurement: NormalStream,
    pub initial: NormalStream,
}

impl PathStreams {
    pub fn new(seed: u64) -> Self {
        let mut sm = SplitMix64::new(seed);
        PathStreams {
            process: NormalStream::new(sm.next_u64()),
            measurement: NormalStream::new(sm.next_u64()),
            initial: NormalStream::new(sm.next_u64()),
        }
    }
}

/// `x_{k+1} = x_k + hAx_k + √(2h)Bξ_k`, `Δz_k = hCx_k + √h R^{1/2}η_k`.
pub fn simulate(
    sys: &LinearSystem,
    meas: &MeasurementModel,
    init: &InitialState,
    cfg: &StepConfig,
    seed: u64,
) -> Result<SimPath> {
    simulate_scaled(sys, meas, init, cfg, seed, NoiseScale::default())
}

/// [`simulate`] with the noise terms multiplied by `scale`.
pub fn simulate_scaled(
    sys: &LinearSystem,
    meas: &MeasurementModel,
    init: &InitialState,
    cfg: &StepConfig,
    seed: u64,
    scale: NoiseScale,
) -> Result<SimPath> {
    let n = sys.dim();
    if meas.state_dim() != n {
        return Err(Error::dims("observation matrix columns", n, meas.state_dim()));
    }
    let mut streams = PathStreams::new(seed);
    let x0 = match init {
        InitialState::Exact(x) => {
            if x.len() != n {
                return Err(Error::dims("initial state", n, x.len()));
            }
            x.clone()
        }
        InitialState::Sample(g) => {
            if g.dim() != n {
                return Err(Error::dims("initial distribution", n, g.dim()));
            }
            let mut z = Vector::zeros(n);
            streams.initial.fill(z.as_mut_slice());
            g.mean() + sqrt_spd(g.cov())?.matrix() * z
        }
    };

    let h = cfg.h;
    let m = meas.obs_dim();
    let a = sys.a();
    let b_scaled = sys.b() * ((2.0 * h).sqrt() * scale.process);
    let r_sqrt_scaled = sqrt_spd(meas.r())?.into_matrix() * (h.sqrt() * scale.measurement);
    let c = meas.c();
    let mut xi = Vector::zeros(sys.b().ncols());
    let mut eta = Vector::zeros(m);

    let mut states = Vec::with_capacity(cfg.steps + 1);
    let mut increments = Vec::with_capacity(cfg.steps);
    let mut x = x0;
    for _ in 0..cfg.steps {
        streams.process.fill(xi.as_mut_slice());
        streams.measurement.fill(eta.as_mut_slice());
        increments.push(c * &x * h + &r_sqrt_scaled * &eta);
        let next = &x + a * &x * h + &b_scaled * &xi;
        states.push(std::mem::replace(&mut x, next));
    }
    states.push(x);
    Ok(SimPath { states, increments, h, seed })
}

/// `y_k = Δz_k / h`.
pub fn increments_to_y(path: &SimPath) -> Result<Vec<Vector>> {
    if !(path.h > 0.0 && path.h.is_finite()) {
        return Err(Error::InvalidArgument(format!("step size must be positive, got {}", path.h)));
    }
    Ok(path.increments.iter().map(|dz| dz / path.h).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{Matrix, SpdMatrix};
    use nalgebra::{dmatrix, dvector};

    fn scalar_setup() -> (LinearSystem, MeasurementModel) {
        (
            LinearSystem::new(dmatrix![-1.0], dmatrix![1.0]).unwrap(),
            MeasurementModel::new(dmatrix![1.0], SpdMatrix::identity(1)).unwrap(),
        )
    }

    #[test]
    fn zero_noise_is_euler_ode() {
        let sys = LinearSystem::new(dmatrix![-1.0, 2.0; 0.0, -3.0], Matrix::identity(2, 2)).unwrap();
        let meas = MeasurementModel::new(dmatrix![1.0, 0.0], SpdMatrix::identity(1)).unwrap();
        let cfg = StepConfig::new(0.1, 10, None).unwrap();
        let x0 = dvector![1.0, -1.0];
        let path = simulate_scaled(
            &sys,
            &meas,
            &InitialState::Exact(x0.clone()),
            &cfg,
            5,
            NoiseScale { process: 0.0, measurement: 0.0 },
        )
        .unwrap();
        let step = Matrix::identity(2, 2) + sys.a() * 0.1;
        let mut x = x0;
        for k in 0..10 {
            assert!((&path.states[k] - &x).amax() < 1e-15);
            assert!((&path.increments[k] - meas.c() * &x * 0.1).amax() < 1e-15);
            x = &step * x;
        }
        assert!((&path.states[10] - x).amax() < 1e-15);
    }

    #[test]
    fn lengths_and_reproducibility() {
        let (sys, meas) = scalar_setup();
        let cfg = StepConfig::new(0.01, 50, None).unwrap();
        let init = InitialState::Sample(Gaussian::scalar(0.0, 1.0).unwrap());
        let a = simulate(&sys, &meas, &init, &cfg, 11).unwrap();
        let b = simulate(&sys, &meas, &init, &cfg, 11).unwrap();
        let c = simulate(&sys, &meas, &init, &cfg, 12).unwrap();
        assert_eq!(a.states.len(), a.increments.len() + 1);
        assert_eq!(a, b);
        assert_ne!(a.states, c.states);
    }

    #[test]
    fn zero_steps() {
        let (sys, meas) = scalar_setup();
        let cfg = StepConfig::new(0.01, 0, None).unwrap();
        let path = simulate(&sys, &meas, &InitialState::Exact(dvector![3.0]), &cfg, 1).unwrap();
        assert_eq!(path.states, vec![dvector![3.0]]);
        assert!(path.is_empty());
    }

    #[test]
    fn y_from_increments() {
        let path = SimPath {
            states: vec![dvector![0.0], dvector![0.0], dvector![0.0]],
            increments: vec![dvector![0.2], dvector![0.0]],
            h: 0.1,
            seed: 0,
        };
        let y = increments_to_y(&path).unwrap();
        assert!((y[0][0] - 2.0).abs() < 1e-15);
        assert_eq!(y[1][0], 0.0);
        for (yk, dz) in y.iter().zip(&path.increments) {
            assert!((yk * path.h - dz).amax() <= 1e-16);
        }
    }

    #[test]
    fn coarsening_sums_increments() {
        let (sys, meas) = scalar_setup();
        let cfg = StepConfig::new(0.01, 12, None).unwrap();
        let fine = simulate(&sys, &meas, &InitialState::Exact(dvector![1.0]), &cfg, 3).unwrap();
        let coarse = fine.coarsen(4).unwrap();
        assert_eq!(coarse.len(), 3);
        assert_eq!(coarse.states.len(), 4);
        assert!((coarse.h - 0.04).abs() < 1e-15);
        let sum: f64 = fine.increments[4..8].iter().map(|d| d[0]).sum();
        assert!((coarse.increments[1][0] - sum).abs() < 1e-15);
        assert_eq!(coarse.states[2], fine.states[8]);
        assert!(fine.coarsen(5).is_err());
    }

    #[test]
    fn dimension_errors() {
        let (sys, meas) = scalar_setup();
        let cfg = StepConfig::new(0.01, 3, None).unwrap();
        assert!(simulate(&sys, &meas, &InitialState::Exact(dvector![1.0, 2.0]), &cfg, 0).is_err());
    }
}
