//! Randomized checks of the Gaussian optimal-transport identities the
//! recursions are built on.
//!
//! Each check yields a slack that is nonnegative when the identity or
//! inequality holds exactly; a trial passes when `slack ≥ −tolerance`.

use rayon::prelude::*;

use proxflow::gaussian::{grad_w2_cross, trace_projection, transport_map, w2_cross_term, w2_gaussian, w2_squared};
use proxflow::matrix::{max_abs, sqrt_spd, Matrix, SpdMatrix};
use proxflow::rng::{NormalStream, SplitMix64};
use proxflow::sampling;

use crate::config::config_hash;
use crate::table::{ResultTable, Row};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Check {
    /// `tr((X^{1/2} Y X^{1/2})^{1/2}) ≤ √(tr X · tr Y)`.
    TraceInequality,
    /// The affine map pushes the source onto the target at cost `W²`.
    PushForward,
    /// The trace-constrained projection distance agrees with `W`.
    Projection,
    /// The cross-term gradient agrees with central differences, relative to
    /// its largest entry.
    Gradient,
}

impl Check {
    pub const ALL: [Check; 4] = [Check::TraceInequality, Check::PushForward, Check::Projection, Check::Gradient];

    pub fn name(self) -> &'static str {
        match self {
            Check::TraceInequality => "lemma1_trace_inequality",
            Check::PushForward => "lemma2_push_forward",
            Check::Projection => "corollary1_projection",
            Check::Gradient => "lemma4_gradient",
        }
    }

    pub fn tolerance(self) -> f64 {
        match self {
            Check::TraceInequality => 1e-12,
            Check::PushForward | Check::Projection => 1e-10,
            Check::Gradient => 1e-6,
        }
    }

    fn slack(self, rng: &mut NormalStream, n: usize) -> proxflow::Result<f64> {
        match self {
            Check::TraceInequality => {
                let x = sampling::spd(rng, n, 0.01, 10.0)?;
                let y = sampling::spd(rng, n, 0.01, 10.0)?;
                let root = sqrt_spd(&x)?;
                let lhs: f64 = y.congruence(root.matrix())?.eigenvalues().iter().map(|v| v.max(0.0).sqrt()).sum();
                Ok((x.trace() * y.trace()).sqrt() - lhs)
            }
            Check::PushForward => {
                let g0 = sampling::gaussian(rng, n, 0.1, 5.0)?;
                let g1 = sampling::gaussian(rng, n, 0.1, 5.0)?;
                let map = transport_map(&g0, &g1)?;
                let pushed = map.push_forward(&g0)?;
                let w2sq = w2_squared(&g0, &g1)?;
                let err = (pushed.mean() - g1.mean())
                    .amax()
                    .max(max_abs(&(pushed.cov().matrix() - g1.cov().matrix())))
                    .max((map.transport_cost(&g0)? - w2sq).abs() / (1.0 + w2sq));
                Ok(-err)
            }
            Check::Projection => {
                let g0 = sampling::gaussian(rng, n, 0.1, 5.0)?;
                let mu = sampling::normal_vector(rng, n);
                let tau = rng.uniform(0.1, 20.0);
                let (dist, proj) = trace_projection(&g0, &mu, tau)?;
                Ok(-(w2_gaussian(&g0, &proj)? - dist).abs())
            }
            Check::Gradient => {
                let p = sampling::spd(rng, n, 0.3, 3.0)?;
                let p0 = sampling::spd(rng, n, 0.3, 3.0)?;
                let grad = grad_w2_cross(&p, &p0)?;
                let step = 1e-5;
                let scale = max_abs(grad.matrix());
                let mut worst: f64 = 0.0;
                for i in 0..n {
                    for j in i..n {
                        let mut e = Matrix::zeros(n, n);
                        e[(i, j)] += 1.0;
                        e[(j, i)] += 1.0;
                        let f = |s: f64| -> proxflow::Result<f64> {
                            w2_cross_term(&SpdMatrix::new(p.matrix() + &e * s)?, &p0)
                        };
                        let fd = (f(step)? - f(-step)?) / (2.0 * step);
                        let analytic = (grad.matrix() * &e).trace();
                        worst = worst.max((fd - analytic).abs() / scale);
                    }
                }
                Ok(-worst)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckSummary {
    pub check: Check,
    pub passed: usize,
    pub failed: usize,
    pub worst_slack: f64,
}

/// Runs `trials` instances of every check, cycling through `dims`.
///
/// Trial `i` draws from its own stream seeded by the `i`-th SplitMix64 output
/// of `seed`, so results do not depend on the thread count.
pub fn run_checks(trials: usize, dims: &[usize], seed: u64) -> Result<Vec<CheckSummary>, CliError> {
    if trials == 0 {
        return Err(CliError::Validation("--trials must be at least 1".into()));
    }
    if dims.is_empty() || dims.contains(&0) {
        return Err(CliError::Validation("--dims must list positive dimensions".into()));
    }
    let mut sm = SplitMix64::new(seed);
    let trial_seeds: Vec<u64> = (0..trials).map(|_| sm.next_u64()).collect();

    Check::ALL
        .iter()
        .map(|&check| {
            let slacks = trial_seeds
                .par_iter()
                .enumerate()
                .map(|(i, &s)| {
                    let mut rng = NormalStream::new(s);
                    check.slack(&mut rng, dims[i % dims.len()])
                })
                .collect::<proxflow::Result<Vec<f64>>>()?;
            let passed = slacks.iter().filter(|&&s| s >= -check.tolerance()).count();
            Ok(CheckSummary {
                check,
                passed,
                failed: slacks.len() - passed,
                worst_slack: slacks.iter().copied().fold(f64::INFINITY, f64::min),
            })
        })
        .collect()
}

pub fn lemma_checks(trials: usize, dims: &[usize], seed: u64) -> Result<ResultTable, CliError> {
    let summaries = run_checks(trials, dims, seed)?;
    let hash = config_hash(format!("lemma-checks trials={trials} dims={dims:?}").as_bytes(), Some(seed));
    let mut table = ResultTable::new(hash);
    for s in summaries {
        let name = s.check.name();
        table.push(Row::new(None, Some(seed), format!("{name}_passed"), s.passed as f64));
        table.push(Row::new(None, Some(seed), format!("{name}_failed"), s.failed as f64));
        table.push(Row::new(None, Some(seed), format!("{name}_worst_slack"), s.worst_slack));
    }
    Ok(table)
}

/// Parses `"1..5"` (inclusive) or a comma list such as `"1,2,4"`.
pub fn parse_dims(text: &str) -> Result<Vec<usize>, CliError> {
    let bad = || CliError::Validation(format!("--dims: cannot parse {text:?}; use \"1..5\" or \"1,2,3\""));
    let dims: Vec<usize> = match text.split_once("..") {
        Some((lo, hi)) => {
            let lo: usize = lo.trim().parse().map_err(|_| bad())?;
            let hi: usize = hi.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
            (lo..=hi).collect()
        }
        None => text.split(',').map(|d| d.trim().parse().map_err(|_| bad())).collect::<Result<_, _>>()?,
    };
    if dims.is_empty() {
        return Err(bad());
    }
    Ok(dims)
}
