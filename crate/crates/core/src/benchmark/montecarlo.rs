//! Replications over seeds and the per-stamp statistics built from them.

use rayon::prelude::*;
use serde::Serialize;

use super::sim::{Experiment, SimulationTrace};
use crate::bounds::{theorem2_bounds, theorem2_bounds_per_entry};
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, CVector, C64};

/// Seeds `base, base + 1, …`.
pub fn replication_seeds(base: u64, count: usize) -> Vec<u64> {
    (0..count as u64).map(|r| base.wrapping_add(r)).collect()
}

/// Runs one replication per seed and reduces each trace with `reduce`.
///
/// Results come back in seed order regardless of scheduling. `jobs` caps
/// the worker count; `None` uses the global pool.
pub fn map_replications<T, F>(exp: &Experiment, seeds: &[u64], jobs: Option<usize>, reduce: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(SimulationTrace) -> T + Sync,
{
    let work = || seeds.par_iter().map(|&s| exp.run(s).map(&reduce)).collect::<Result<Vec<T>>>();
    match jobs {
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build()
            .map_err(|e| Error::Numerical(format!("cannot start worker pool: {e}")))?
            .install(work),
        None => work(),
    }
}

/// Fused estimation errors of a trace, one vector per stamp.
pub fn fused_errors(trace: &SimulationTrace) -> Vec<CVector> {
    trace.records.iter().map(|r| r.error()).collect()
}

/// Sample statistics of error vectors across runs at each stamp index.
#[derive(Debug, Clone)]
pub struct ErrorStats {
    pub runs: usize,
    pub mean: Vec<CVector>,
    /// Per-coordinate sample variance `Σ|e − ē|² / (R − 1)`.
    pub variance: Vec<Vec<f64>>,
    /// Spectral radius of the sample covariance.
    pub cov_radius: Vec<f64>,
}

impl ErrorStats {
    /// `samples[r][k]` is run `r`'s error at stamp `k`. Only the stamp
    /// indices every run reached are used. A single run has zero spread.
    pub fn from_samples(samples: &[Vec<CVector>]) -> Result<Self> {
        let runs = samples.len();
        if runs == 0 {
            return Err(Error::Empty);
        }
        let len = samples.iter().map(|s| s.len()).min().unwrap_or(0);
        let mut out = ErrorStats { runs, mean: Vec::with_capacity(len), variance: Vec::with_capacity(len), cov_radius: Vec::with_capacity(len) };
        for k in 0..len {
            let n = samples[0][k].len();
            let mut mean = CVector::zeros(n);
            for s in samples {
                mean += &s[k];
            }
            mean /= C64::new(runs as f64, 0.0);
            let mut cov = CMatrix::zeros(n, n);
            for s in samples {
                let d = &s[k] - &mean;
                cov += &d * d.adjoint();
            }
            if runs > 1 {
                cov /= C64::new((runs - 1) as f64, 0.0);
            }
            out.variance.push((0..n).map(|j| cov[(j, j)].re).collect());
            out.cov_radius.push(linalg::hermitian_spectral_radius(&cov));
            out.mean.push(mean);
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn mean_inf(&self, k: usize) -> f64 {
        linalg::vec_max_abs(&self.mean[k])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SummaryRow {
    pub k: usize,
    pub mean_err_inf: f64,
    pub cov_radius: f64,
    pub bound_e: f64,
    pub bound_cov: f64,
    pub bound_e_entry: f64,
    pub bound_cov_entry: f64,
}

impl SummaryRow {
    pub const STATISTICS: [&'static str; 6] =
        ["mean_err_inf", "cov_radius", "bound_e", "bound_cov", "bound_e_entry", "bound_cov_entry"];

    pub fn values(&self) -> [f64; 6] {
        [self.mean_err_inf, self.cov_radius, self.bound_e, self.bound_cov, self.bound_e_entry, self.bound_cov_entry]
    }
}

/// Fused-error statistics next to the fused bounds, per stamp index.
pub fn summarize(exp: &Experiment, stats: &ErrorStats) -> Vec<SummaryRow> {
    (0..stats.len())
        .map(|k| {
            let (bound_e, bound_cov) = theorem2_bounds(k, &exp.constants);
            let (bound_e_entry, bound_cov_entry) = theorem2_bounds_per_entry(k, &exp.constants);
            SummaryRow {
                k,
                mean_err_inf: stats.mean_inf(k),
                cov_radius: stats.cov_radius[k],
                bound_e,
                bound_cov,
                bound_e_entry,
                bound_cov_entry,
            }
        })
        .collect()
}
