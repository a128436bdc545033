//! TOML experiment configuration.
//!
//! ```toml
//! [system]
//! a = [[-1.0]]
//! b = [[1.0]]
//!
//! [measurement]          # required by the filter commands
//! c = [[1.0]]
//! r = [[1.0]]
//!
//! [initial]
//! mean = [2.0]
//! cov = [[2.0]]
//!
//! [run]
//! h = [0.04, 0.02, 0.01, 0.005]
//! horizon = 1.0
//! seeds = [1]                          # required by the filter commands
//! mode = "symmetric-exact"             # or "general-first-order"; default picks from the system
//! update = "lmmr"                      # or "wasserstein"
//! predict = "jko"                      # or "exact"
//! master_substeps = 4
//!
//! [output]                             # optional, relative to the config file
//! csv = "results.csv"
//! json = "results.json"
//! paths = "paths"                      # directory for simulated path CSVs
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;
use sha2::{Digest, Sha256};

use proxflow::{
    Gaussian, LinearSystem, Matrix, MeasurementModel, PredictKind, PropagationMode, SpdMatrix, UpdateKind, Vector,
};

use crate::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    system: RawSystem,
    measurement: Option<RawMeasurement>,
    initial: RawInitial,
    run: RawRun,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystem {
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMeasurement {
    c: Vec<Vec<f64>>,
    r: Vec<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInitial {
    mean: Vec<f64>,
    cov: Vec<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    h: Vec<f64>,
    horizon: f64,
    #[serde(default)]
    seeds: Vec<u64>,
    mode: Option<RawMode>,
    #[serde(default)]
    update: RawUpdate,
    #[serde(default)]
    predict: RawPredict,
    #[serde(default = "default_master_substeps")]
    master_substeps: usize,
}

fn default_master_substeps() -> usize {
    4
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    csv: Option<PathBuf>,
    json: Option<PathBuf>,
    paths: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum RawMode {
    SymmetricExact,
    GeneralFirstOrder,
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum RawUpdate {
    #[default]
    Lmmr,
    Wasserstein,
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum RawPredict {
    #[default]
    Jko,
    Exact,
}

/// Output destinations resolved against the config file location.
#[derive(Debug, Clone, Default)]
pub struct OutputPaths {
    pub csv: Option<PathBuf>,
    pub json: Option<PathBuf>,
    pub paths: Option<PathBuf>,
}

/// A parsed and validated experiment.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub system: LinearSystem,
    pub measurement: Option<MeasurementModel>,
    pub initial: Gaussian,
    pub steps: Vec<f64>,
    pub horizon: f64,
    pub seeds: Vec<u64>,
    pub mode: PropagationMode,
    pub update: UpdateKind,
    pub predict: PredictKind,
    pub master_substeps: usize,
    pub output: OutputPaths,
    /// SHA-256 over the raw config bytes and any seed override.
    pub hash: String,
}

fn field_error(field: &str, err: impl std::fmt::Display) -> CliError {
    CliError::Validation(format!("{field}: {err}"))
}

fn parse_matrix(field: &str, rows: &[Vec<f64>]) -> Result<Matrix, CliError> {
    let nrows = rows.len();
    if nrows == 0 {
        return Err(field_error(field, "matrix has no rows"));
    }
    let ncols = rows[0].len();
    if ncols == 0 {
        return Err(field_error(field, "matrix has no columns"));
    }
    if let Some((i, row)) = rows.iter().enumerate().find(|(_, r)| r.len() != ncols) {
        return Err(field_error(field, format!("row {} has {} entries, expected {ncols}", i + 1, row.len())));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(field_error(field, "entries must be finite"));
    }
    Ok(Matrix::from_row_iterator(nrows, ncols, rows.iter().flatten().copied()))
}

fn resolve(base: &Path, path: Option<PathBuf>) -> Option<PathBuf> {
    path.map(|p| if p.is_absolute() { p } else { base.join(p) })
}

pub fn config_hash(bytes: &[u8], seed_override: Option<u64>) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    if let Some(seed) = seed_override {
        hasher.update(b"\nseed-override=");
        hasher.update(seed.to_string().as_bytes());
    }
    hex::encode(hasher.finalize())
}

impl ExperimentConfig {
    pub fn load(path: &Path, seed_override: Option<u64>) -> Result<Self, CliError> {
        let bytes = std::fs::read(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        let text = std::str::from_utf8(&bytes)
            .map_err(|e| CliError::Validation(format!("config {} is not UTF-8: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(text, base, seed_override)
    }

    /// Parses config text; relative output paths are resolved against `base`.
    pub fn parse(text: &str, base: &Path, seed_override: Option<u64>) -> Result<Self, CliError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| CliError::Validation(format!("invalid config: {e}")))?;
        let hash = config_hash(text.as_bytes(), seed_override);

        let a = parse_matrix("system.a", &raw.system.a)?;
        let b = parse_matrix("system.b", &raw.system.b)?;
        let system = LinearSystem::new(a, b).map_err(|e| field_error("system", e))?;
        let n = system.dim();

        let measurement = match raw.measurement {
            Some(m) => {
                let c = parse_matrix("measurement.c", &m.c)?;
                let r = parse_matrix("measurement.r", &m.r)?;
                if c.nrows() != r.nrows() {
                    return Err(field_error(
                        "measurement",
                        format!("c has {} rows but r is {}x{}", c.nrows(), r.nrows(), r.ncols()),
                    ));
                }
                if c.ncols() != n {
                    return Err(field_error(
                        "measurement.c",
                        format!("has {} columns, expected the state dimension {n}", c.ncols()),
                    ));
                }
                let r =
                    SpdMatrix::named(r, "measurement noise covariance").map_err(|e| field_error("measurement.r", e))?;
                Some(MeasurementModel::new(c, r).map_err(|e| field_error("measurement", e))?)
            }
            None => None,
        };

        if raw.initial.mean.len() != n {
            return Err(field_error(
                "initial.mean",
                format!("has {} entries, expected the state dimension {n}", raw.initial.mean.len()),
            ));
        }
        let cov = parse_matrix("initial.cov", &raw.initial.cov)?;
        let cov = SpdMatrix::named(cov, "initial covariance").map_err(|e| field_error("initial.cov", e))?;
        let initial = Gaussian::new(Vector::from_vec(raw.initial.mean), cov).map_err(|e| field_error("initial", e))?;

        let run = raw.run;
        if run.h.is_empty() {
            return Err(field_error("run.h", "at least one step size is required"));
        }
        if !(run.horizon > 0.0 && run.horizon.is_finite()) {
            return Err(field_error("run.horizon", format!("must be positive, got {}", run.horizon)));
        }
        for &h in &run.h {
            proxflow::StepConfig::for_horizon(h, run.horizon, None).map_err(|e| field_error("run.h", e))?;
        }
        if run.master_substeps == 0 {
            return Err(field_error("run.master_substeps", "must be at least 1"));
        }
        let mut steps = run.h;
        steps.sort_by(|x, y| y.total_cmp(x));
        steps.dedup();

        let mode = match run.mode {
            Some(RawMode::SymmetricExact) => PropagationMode::SymmetricExact,
            Some(RawMode::GeneralFirstOrder) => PropagationMode::GeneralFirstOrder,
            None if system.gibbs_form().is_some() => PropagationMode::SymmetricExact,
            None => PropagationMode::GeneralFirstOrder,
        };
        if mode == PropagationMode::SymmetricExact {
            proxflow::propagation::symmetric_parameters(&system, None).map_err(|e| field_error("run.mode", e))?;
        }

        let seeds = match seed_override {
            Some(seed) => vec![seed],
            None => run.seeds,
        };

        Ok(ExperimentConfig {
            system,
            measurement,
            initial,
            steps,
            horizon: run.horizon,
            seeds,
            mode,
            update: match run.update {
                RawUpdate::Lmmr => UpdateKind::Lmmr,
                RawUpdate::Wasserstein => UpdateKind::Wasserstein,
            },
            predict: match run.predict {
                RawPredict::Jko => PredictKind::Jko,
                RawPredict::Exact => PredictKind::Exact,
            },
            master_substeps: run.master_substeps,
            output: OutputPaths {
                csv: resolve(base, raw.output.csv),
                json: resolve(base, raw.output.json),
                paths: resolve(base, raw.output.paths),
            },
            hash,
        })
    }

    /// The measurement model, required by the filter commands.
    pub fn require_measurement(&self) -> Result<&MeasurementModel, CliError> {
        self.measurement
            .as_ref()
            .ok_or_else(|| field_error("measurement", "section is required for filter experiments"))
    }

    pub fn require_seeds(&self) -> Result<&[u64], CliError> {
        if self.seeds.is_empty() {
            return Err(field_error("run.seeds", "at least one seed is required for filter experiments"));
        }
        Ok(&self.seeds)
    }

    pub fn finest_step(&self) -> f64 {
        *self.steps.last().expect("validated non-empty")
    }
}
