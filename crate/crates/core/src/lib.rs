//! Gaussian proximal recursions for linear diffusions and filters.
//!
//! Closed-form Wasserstein (JKO) propagation steps, KL and Wasserstein
//! proximal measurement updates, continuous-time reference solutions and a
//! reproducible Euler–Maruyama simulator.

pub mod error;
pub mod filtering;
pub mod gaussian;
pub mod matrix;
pub mod oracles;
pub mod propagation;
pub mod rng;
pub mod sampling;
pub mod sim;

pub use error::{Error, Result};
pub use filtering::{
    error_metrics, lmmr_update, run_filter, terminal_rmse, wasserstein_update, ErrorMetrics, FilterRun,
    MeasurementModel, PredictKind, UpdateKind,
};
pub use gaussian::{kl_gaussian, transport_map, w2_gaussian, w2_squared, AffineMap, Gaussian};
pub use matrix::{Matrix, SpdMatrix, SymMatrix, Vector};
pub use oracles::{brute_force_prox, exact_cov, exact_mean, kalman_bucy_run, luenberger_run, OdeConfig};
pub use propagation::{
    jko_step_symmetric, make_equipartition, propagate, EquipartitionFrame, LinearSystem, PropagationMode, StepConfig,
};
pub use sim::{increments_to_y, simulate, InitialState, SimPath};
