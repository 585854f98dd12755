//! Two-sample permutation testing and the correlation/regression
//! statistics used by the proxy analysis.
//!
//! The permutation test pools both sample sets and, per replicate, draws
//! a random balanced split of `s = min(n_x, n_y)` points per side without
//! replacement (leftover pool points are excluded for that replicate).
//! The p-value uses the add-one estimator with inclusive ties:
//! `p = (#{b : d_b >= d} + 1) / (B + 1)`, so `p >= 1/(B+1)` always.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::divergence::{DivergenceError, SampleSet};
use crate::rng::{child_seed, rng_from};
use crate::special::student_t_two_tailed;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("input vectors have different lengths: {x} vs {y}")]
    LengthMismatch { x: usize, y: usize },
    #[error("need at least {need} points, got {n}")]
    TooFewPoints { n: usize, need: usize },
    #[error("constant input vector `{0}`")]
    ConstantInput(&'static str),
    #[error("number of permutations must be at least 1")]
    ZeroPermutations,
    #[error("pool of {pool} points cannot form two balanced groups of {s}")]
    PoolTooSmall { pool: usize, s: usize },
    #[error("statistic failed on {}: {source}", match .permutation {
        Some(b) => format!("permutation {b}"),
        None => "the observed data".to_string(),
    })]
    Statistic {
        permutation: Option<usize>,
        #[source]
        source: DivergenceError,
    },
}

/// Outcome of a two-sample permutation test.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PermutationTestResult {
    pub observed: f64,
    pub null_samples: Vec<f64>,
    pub p_value: f64,
    pub b: usize,
    pub seed: u64,
    pub statistic_kind: String,
}

/// Two-sample permutation test of H0: both sets share one distribution.
///
/// `statistic(a, b, seed)` must be a symmetric divergence; larger values
/// mean more separation. The observed statistic is computed on the full
/// sets; each replicate `b` re-splits the pool using the derived stream
/// `child(seed, b + 1)`, so replicates are independent of evaluation
/// order.
pub fn permutation_test<F>(
    x: &SampleSet,
    y: &SampleSet,
    statistic: F,
    statistic_kind: &str,
    b: usize,
    seed: u64,
) -> Result<PermutationTestResult, StatsError>
where
    F: Fn(&SampleSet, &SampleSet, u64) -> Result<f64, DivergenceError>,
{
    if b == 0 {
        return Err(StatsError::ZeroPermutations);
    }
    let s = x.n().min(y.n());
    let pool_n = x.n() + y.n();
    if pool_n < 2 * s {
        return Err(StatsError::PoolTooSmall { pool: pool_n, s });
    }
    let observed = statistic(x, y, child_seed(seed, 0)).map_err(|source| StatsError::Statistic {
        permutation: None,
        source,
    })?;

    let d = x.dim();
    let mut pool = Vec::with_capacity(pool_n);
    for i in 0..x.n() {
        pool.push(x.row(i).to_vec());
    }
    for i in 0..y.n() {
        pool.push(y.row(i).to_vec());
    }

    let mut null_samples = Vec::with_capacity(b);
    let mut count_ge = 0usize;
    for rep in 0..b {
        let stream = child_seed(seed, rep as u64 + 1);
        let mut rng = rng_from(child_seed(stream, 0));
        let chosen = rand::seq::index::sample(&mut rng, pool_n, 2 * s);
        let mut rows_a = Vec::with_capacity(s);
        let mut rows_b = Vec::with_capacity(s);
        for (k, idx) in chosen.into_iter().enumerate() {
            if k < s {
                rows_a.push(pool[idx].clone());
            } else {
                rows_b.push(pool[idx].clone());
            }
        }
        debug_assert_eq!(rows_a[0].len(), d);
        let a = SampleSet::from_rows(&rows_a).expect("pool rows are finite");
        let bset = SampleSet::from_rows(&rows_b).expect("pool rows are finite");
        let value = statistic(&a, &bset, child_seed(stream, 1)).map_err(|source| {
            StatsError::Statistic {
                permutation: Some(rep),
                source,
            }
        })?;
        if value >= observed {
            count_ge += 1;
        }
        null_samples.push(value);
    }
    let p_value = (count_ge as f64 + 1.0) / (b as f64 + 1.0);
    Ok(PermutationTestResult {
        observed,
        null_samples,
        p_value,
        b,
        seed,
        statistic_kind: statistic_kind.to_string(),
    })
}

fn check_paired(x: &[f64], y: &[f64], need: usize) -> Result<(), StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch {
            x: x.len(),
            y: y.len(),
        });
    }
    if x.len() < need {
        return Err(StatsError::TooFewPoints { n: x.len(), need });
    }
    Ok(())
}

fn is_constant(v: &[f64]) -> bool {
    v.iter().all(|&a| a == v[0])
}

fn centered_sums(x: &[f64], y: &[f64]) -> (f64, f64, f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (a, b) in x.iter().zip(y.iter()) {
        let dx = a - mx;
        let dy = b - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    (mx, my, sxx, syy, sxy)
}

/// Pearson correlation with a two-tailed p-value from the Student-t
/// transform `t = r sqrt((n-2) / (1-r^2))`. Perfect correlation returns
/// `p = 0` exactly.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<(f64, f64), StatsError> {
    check_paired(x, y, 3)?;
    if is_constant(x) {
        return Err(StatsError::ConstantInput("x"));
    }
    if is_constant(y) {
        return Err(StatsError::ConstantInput("y"));
    }
    let (_, _, sxx, syy, sxy) = centered_sums(x, y);
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let n = x.len() as f64;
    let one_minus_r2 = 1.0 - r * r;
    let p = if one_minus_r2 <= 0.0 {
        0.0
    } else {
        let t = r * ((n - 2.0) / one_minus_r2).sqrt();
        student_t_two_tailed(t, n - 2.0)
    };
    Ok((r, p))
}

/// Average ranks, ties sharing the mean of their rank positions.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        // Positions i..=j (0-based) share rank mean((i+1)..=(j+1)).
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            out[idx[k]] = avg;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation; p-value via the same t approximation as
/// [`pearson`] applied to the ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<(f64, f64), StatsError> {
    check_paired(x, y, 3)?;
    if is_constant(x) {
        return Err(StatsError::ConstantInput("x"));
    }
    if is_constant(y) {
        return Err(StatsError::ConstantInput("y"));
    }
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Ordinary least squares fit `y = slope * x + intercept`.
pub fn ols_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64), StatsError> {
    check_paired(x, y, 2)?;
    if is_constant(x) {
        return Err(StatsError::ConstantInput("x"));
    }
    let (mx, my, sxx, _, sxy) = centered_sums(x, y);
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Pearson + Spearman + OLS over one paired sample.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub pearson_r: f64,
    pub pearson_p: f64,
    pub spearman_rho: f64,
    pub spearman_p: f64,
    pub ols_slope: f64,
    pub ols_intercept: f64,
    pub n: usize,
}

impl CorrelationReport {
    pub fn from_paired(x: &[f64], y: &[f64]) -> Result<Self, StatsError> {
        let (pearson_r, pearson_p) = pearson(x, y)?;
        let (spearman_rho, spearman_p) = spearman(x, y)?;
        let (ols_slope, ols_intercept) = ols_fit(x, y)?;
        Ok(CorrelationReport {
            pearson_r,
            pearson_p,
            spearman_rho,
            spearman_p,
            ols_slope,
            ols_intercept,
            n: x.len(),
        })
    }
}
