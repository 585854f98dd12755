//! Distributional distance estimators between two sample sets.
//!
//! Energy distance and squared MMD share a pair-sampling contract: each
//! expectation is estimated from `pair_budget` uniformly random index
//! pairs (within-set pairs drawn with distinct indices), and the exact
//! plug-in is used automatically whenever the budget covers every
//! distinct pair of every term. The exact path evaluates the statistic
//! between the two empirical measures (within-set terms average over all
//! ordered pairs, self-pairs included), which keeps it non-negative; the
//! Monte-Carlo path may dip slightly negative and is recorded as-is.
//! Estimates are deterministic in `(inputs, seed, pair_budget)`.
//!
//! Both statistics are symmetric in their arguments; internally the two
//! sets are put in a canonical order before evaluation so the symmetry
//! holds bit-for-bit on both the exact and Monte-Carlo paths.

mod knn;
mod pca;

pub use knn::knn_kl;
pub use pca::{pca_fit, pca_project, PcaModel};

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::Rng;
use thiserror::Error;

use crate::rng::{child_seed, rng_from};

/// Monte-Carlo pair budget for observed statistics.
pub const OBSERVED_PAIR_BUDGET: usize = 500_000;
/// Monte-Carlo pair budget per permutation replicate.
pub const PERMUTATION_PAIR_BUDGET: usize = 200_000;

#[derive(Debug, Error)]
pub enum DivergenceError {
    #[error("sample set is empty")]
    EmptySet,
    #[error("sample set has {n} rows but at least {need} are required")]
    SetTooSmall { n: usize, need: usize },
    #[error("sample sets have different dimensions: {x} vs {y}")]
    DimensionMismatch { x: usize, y: usize },
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("pair budget must be at least 1")]
    ZeroPairBudget,
    #[error("bandwidth must be positive, got {0}")]
    NonPositiveBandwidth(f64),
    #[error("median pairwise distance is zero: all subsampled points identical")]
    ZeroMedian,
    #[error("subsample size must be at least 2, got {0}")]
    InvalidSubsample(usize),
    #[error("k = {k} requires n > k within-set points (n = {n}) and m >= k cross points (m = {m})")]
    InvalidK { k: usize, n: usize, m: usize },
    #[error("duplicate points: a k-th nearest-neighbour distance is zero")]
    DuplicatePoints,
    #[error("pca requires n > q >= 1, got n = {n}, q = {q}")]
    InvalidComponents { n: usize, q: usize },
    #[error("covariance rank {rank} is smaller than requested q = {q}")]
    RankDeficient { rank: usize, q: usize },
}

/// An n x d matrix of i.i.d. draws from an unknown distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    data: Array2<f64>,
}

impl SampleSet {
    /// Wrap a matrix; rejects empty sets and non-finite entries.
    pub fn new(data: Array2<f64>) -> Result<Self, DivergenceError> {
        if data.nrows() == 0 {
            return Err(DivergenceError::EmptySet);
        }
        for ((r, c), v) in data.indexed_iter() {
            if !v.is_finite() {
                return Err(DivergenceError::NonFinite { row: r, col: c });
            }
        }
        Ok(SampleSet { data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, DivergenceError> {
        if rows.is_empty() {
            return Err(DivergenceError::EmptySet);
        }
        let d = rows[0].len();
        let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        if flat.len() != rows.len() * d {
            return Err(DivergenceError::DimensionMismatch {
                x: d,
                y: flat.len() / rows.len(),
            });
        }
        SampleSet::new(Array2::from_shape_vec((rows.len(), d), flat).expect("shape"))
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.data.row(i)
    }

    /// Add uniform noise of magnitude `1e-9 * max_abs_entry` to every
    /// entry. Opt-in de-duplication for the kNN KL estimator.
    pub fn uniform_jitter(&self, seed: u64) -> SampleSet {
        let scale = self
            .data
            .iter()
            .fold(0.0_f64, |acc, v| acc.max(v.abs()))
            .max(1.0)
            * 1e-9;
        let mut rng = rng_from(seed);
        let mut data = self.data.clone();
        for v in data.iter_mut() {
            *v += rng.random_range(-scale..scale);
        }
        SampleSet { data }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum EstimatorKind {
    /// Energy distance.
    Ed,
    /// Squared maximum mean discrepancy, RBF kernel.
    Mmd2,
    /// kNN Kullback-Leibler divergence.
    Kl,
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EstimatorKind::Ed => "ED",
            EstimatorKind::Mmd2 => "MMD2",
            EstimatorKind::Kl => "KL",
        })
    }
}

/// One divergence estimate with the settings that produced it.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DivergenceEstimate {
    pub value: f64,
    pub estimator: EstimatorKind,
    pub pair_budget: usize,
    pub seed: u64,
    /// True when the exact all-pairs plug-in was used.
    pub exact: bool,
    pub bandwidth: Option<f64>,
    pub k: Option<usize>,
}

fn check_pair(x: &SampleSet, y: &SampleSet) -> Result<(), DivergenceError> {
    if x.dim() != y.dim() {
        return Err(DivergenceError::DimensionMismatch {
            x: x.dim(),
            y: y.dim(),
        });
    }
    for s in [x, y] {
        if s.n() < 2 {
            return Err(DivergenceError::SetTooSmall { n: s.n(), need: 2 });
        }
    }
    Ok(())
}

pub(crate) fn euclidean(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(p, q)| (p - q) * (p - q))
        .sum::<f64>()
        .sqrt()
}

/// Order the two sets canonically (row count, then data bits) so that
/// symmetric statistics evaluate identically under argument swap.
fn canonical<'a>(x: &'a SampleSet, y: &'a SampleSet) -> (&'a SampleSet, &'a SampleSet) {
    let ord = x.n().cmp(&y.n()).then_with(|| {
        for (a, b) in x.data.iter().zip(y.data.iter()) {
            let c = a.total_cmp(b);
            if c != std::cmp::Ordering::Equal {
                return c;
            }
        }
        std::cmp::Ordering::Equal
    });
    if ord == std::cmp::Ordering::Greater {
        (y, x)
    } else {
        (x, y)
    }
}

/// Number of distinct pairs per term: cross, within-first, within-second.
fn pair_counts(a: &SampleSet, b: &SampleSet) -> (usize, usize, usize) {
    (
        a.n() * b.n(),
        a.n() * (a.n() - 1) / 2,
        b.n() * (b.n() - 1) / 2,
    )
}

/// Mean of `f` over all cross pairs.
fn exact_cross(a: &SampleSet, b: &SampleSet, f: impl Fn(f64) -> f64) -> f64 {
    let mut sum = 0.0;
    for i in 0..a.n() {
        for j in 0..b.n() {
            sum += f(euclidean(a.row(i), b.row(j)));
        }
    }
    sum / (a.n() * b.n()) as f64
}

/// Plug-in within-set mean of `f`: all n^2 ordered pairs, self-pairs
/// included (each contributing `f(0)`).
fn exact_within(a: &SampleSet, f: impl Fn(f64) -> f64) -> f64 {
    let mut sum = 0.0;
    for i in 0..a.n() {
        for j in (i + 1)..a.n() {
            sum += f(euclidean(a.row(i), a.row(j)));
        }
    }
    let n = a.n() as f64;
    (2.0 * sum + n * f(0.0)) / (n * n)
}

/// Monte-Carlo mean of `f` over `budget` uniform cross pairs.
fn mc_cross(a: &SampleSet, b: &SampleSet, budget: usize, seed: u64, f: impl Fn(f64) -> f64) -> f64 {
    let mut rng = rng_from(seed);
    let mut sum = 0.0;
    for _ in 0..budget {
        let i = rng.random_range(0..a.n());
        let j = rng.random_range(0..b.n());
        sum += f(euclidean(a.row(i), b.row(j)));
    }
    sum / budget as f64
}

/// Monte-Carlo mean of `f` over `budget` uniform distinct within-set pairs.
fn mc_within(a: &SampleSet, budget: usize, seed: u64, f: impl Fn(f64) -> f64) -> f64 {
    let mut rng = rng_from(seed);
    let n = a.n();
    let mut sum = 0.0;
    for _ in 0..budget {
        let i = rng.random_range(0..n);
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        sum += f(euclidean(a.row(i), a.row(j)));
    }
    sum / budget as f64
}

fn three_term_estimate(
    x: &SampleSet,
    y: &SampleSet,
    pair_budget: usize,
    seed: u64,
    f: impl Fn(f64) -> f64 + Copy,
) -> Result<(f64, f64, f64, bool), DivergenceError> {
    check_pair(x, y)?;
    if pair_budget == 0 {
        return Err(DivergenceError::ZeroPairBudget);
    }
    let (a, b) = canonical(x, y);
    let (n_cross, n_a, n_b) = pair_counts(a, b);
    let exact = pair_budget >= n_cross && pair_budget >= n_a && pair_budget >= n_b;
    let (cross, within_a, within_b) = if exact {
        (
            exact_cross(a, b, f),
            exact_within(a, f),
            exact_within(b, f),
        )
    } else {
        (
            mc_cross(a, b, pair_budget, child_seed(seed, 0), f),
            mc_within(a, pair_budget, child_seed(seed, 1), f),
            mc_within(b, pair_budget, child_seed(seed, 2), f),
        )
    };
    Ok((cross, within_a, within_b, exact))
}

/// Energy distance `2 E||X-Y|| - E||X-X'|| - E||Y-Y'||`.
pub fn energy_distance(
    x: &SampleSet,
    y: &SampleSet,
    pair_budget: usize,
    seed: u64,
) -> Result<DivergenceEstimate, DivergenceError> {
    let (cross, wa, wb, exact) = three_term_estimate(x, y, pair_budget, seed, |d| d)?;
    Ok(DivergenceEstimate {
        value: 2.0 * cross - wa - wb,
        estimator: EstimatorKind::Ed,
        pair_budget,
        seed,
        exact,
        bandwidth: None,
        k: None,
    })
}

/// Squared MMD with the RBF kernel `k(x,y) = exp(-||x-y||^2 / (2 sigma^2))`.
pub fn mmd_rbf(
    x: &SampleSet,
    y: &SampleSet,
    bandwidth: f64,
    pair_budget: usize,
    seed: u64,
) -> Result<DivergenceEstimate, DivergenceError> {
    if !(bandwidth > 0.0) {
        return Err(DivergenceError::NonPositiveBandwidth(bandwidth));
    }
    let two_sigma_sq = 2.0 * bandwidth * bandwidth;
    let kernel = move |d: f64| (-(d * d) / two_sigma_sq).exp();
    let (cross, wa, wb, exact) = three_term_estimate(x, y, pair_budget, seed, kernel)?;
    Ok(DivergenceEstimate {
        value: wa + wb - 2.0 * cross,
        estimator: EstimatorKind::Mmd2,
        pair_budget,
        seed,
        exact,
        bandwidth: Some(bandwidth),
        k: None,
    })
}

/// Median pairwise Euclidean distance over a without-replacement subsample
/// of `min(subsample, n)` points. Even pair counts average the two middle
/// order statistics.
pub fn median_heuristic_bandwidth(
    x: &SampleSet,
    subsample: usize,
    seed: u64,
) -> Result<f64, DivergenceError> {
    if x.n() < 2 {
        return Err(DivergenceError::SetTooSmall { n: x.n(), need: 2 });
    }
    if subsample < 2 {
        return Err(DivergenceError::InvalidSubsample(subsample));
    }
    let m = subsample.min(x.n());
    let mut rng = rng_from(seed);
    let chosen: Vec<usize> = if m == x.n() {
        (0..x.n()).collect()
    } else {
        rand::seq::index::sample(&mut rng, x.n(), m).into_vec()
    };
    let mut dists = Vec::with_capacity(m * (m - 1) / 2);
    for i in 0..m {
        for j in (i + 1)..m {
            dists.push(euclidean(x.row(chosen[i]), x.row(chosen[j])));
        }
    }
    dists.sort_by(f64::total_cmp);
    let mid = dists.len() / 2;
    let median = if dists.len() % 2 == 1 {
        dists[mid]
    } else {
        0.5 * (dists[mid - 1] + dists[mid])
    };
    if median <= 0.0 {
        return Err(DivergenceError::ZeroMedian);
    }
    Ok(median)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn constant_set(point: &[f64], n: usize) -> SampleSet {
        SampleSet::from_rows(&vec![point.to_vec(); n]).unwrap()
    }

    #[test]
    fn point_masses_have_closed_form_ed() {
        let x = constant_set(&[0.0, 0.0], 10);
        let y = constant_set(&[3.0, 4.0], 10);
        let est = energy_distance(&x, &y, usize::MAX, 0).unwrap();
        assert!(est.exact);
        assert_eq!(est.value, 10.0);
    }

    #[test]
    fn identical_constant_sets_have_zero_ed() {
        let x = constant_set(&[1.5, -2.0], 8);
        let est = energy_distance(&x, &x.clone(), usize::MAX, 0).unwrap();
        assert_eq!(est.value, 0.0);
    }

    #[test]
    fn ed_symmetry_is_exact_on_both_paths() {
        use rand::Rng;
        let mut rng = crate::rng::rng_from(5);
        let rows_x: Vec<Vec<f64>> = (0..40)
            .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let rows_y: Vec<Vec<f64>> = (0..55)
            .map(|_| (0..3).map(|_| rng.random_range(-0.5..1.5)).collect())
            .collect();
        let x = SampleSet::from_rows(&rows_x).unwrap();
        let y = SampleSet::from_rows(&rows_y).unwrap();
        for budget in [usize::MAX, 200] {
            let a = energy_distance(&x, &y, budget, 7).unwrap();
            let b = energy_distance(&y, &x, budget, 7).unwrap();
            assert_eq!(a.value.to_bits(), b.value.to_bits());
        }
    }

    #[test]
    fn ed_scales_linearly() {
        use rand::Rng;
        let mut rng = crate::rng::rng_from(11);
        let rows: Vec<Vec<f64>> = (0..30)
            .map(|_| (0..2).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let rows2: Vec<Vec<f64>> = (0..30)
            .map(|_| (0..2).map(|_| rng.random_range(0.0..2.0)).collect())
            .collect();
        let c = 3.7;
        let scale = |rs: &[Vec<f64>]| -> Vec<Vec<f64>> {
            rs.iter()
                .map(|r| r.iter().map(|v| v * c).collect())
                .collect()
        };
        let x = SampleSet::from_rows(&rows).unwrap();
        let y = SampleSet::from_rows(&rows2).unwrap();
        let xs = SampleSet::from_rows(&scale(&rows)).unwrap();
        let ys = SampleSet::from_rows(&scale(&rows2)).unwrap();
        let base = energy_distance(&x, &y, usize::MAX, 0).unwrap().value;
        let scaled = energy_distance(&xs, &ys, usize::MAX, 0).unwrap().value;
        assert!((scaled - c * base).abs() < 1e-12 * scaled.abs());
    }

    #[test]
    fn estimates_are_deterministic() {
        use rand::Rng;
        let mut rng = crate::rng::rng_from(2);
        let rows: Vec<Vec<f64>> = (0..100)
            .map(|_| vec![rng.random::<f64>(), rng.random::<f64>()])
            .collect();
        let rows2: Vec<Vec<f64>> = (0..90)
            .map(|_| vec![rng.random::<f64>() + 0.3, rng.random::<f64>()])
            .collect();
        let x = SampleSet::from_rows(&rows).unwrap();
        let y = SampleSet::from_rows(&rows2).unwrap();
        let a = energy_distance(&x, &y, 500, 42).unwrap();
        let b = energy_distance(&x, &y, 500, 42).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert!(!a.exact);
        let c = energy_distance(&x, &y, 500, 43).unwrap();
        assert_ne!(a.value.to_bits(), c.value.to_bits());
    }

    #[test]
    fn mmd_identical_sets_is_zero() {
        let x = constant_set(&[2.0], 6);
        let est = mmd_rbf(&x, &x.clone(), 1.0, usize::MAX, 0).unwrap();
        assert_eq!(est.value, 0.0);
    }

    #[test]
    fn mmd_point_masses_closed_form() {
        // Two point masses at distance r: MMD^2 = 2 - 2 exp(-r^2 / 2 sigma^2).
        let x = constant_set(&[0.0, 0.0], 5);
        let y = constant_set(&[3.0, 4.0], 7);
        let sigma = 2.0;
        let est = mmd_rbf(&x, &y, sigma, usize::MAX, 0).unwrap();
        let want = 2.0 - 2.0 * (-(25.0) / (2.0 * sigma * sigma)).exp();
        assert!((est.value - want).abs() < 1e-15);
    }

    #[test]
    fn mmd_rejects_bad_bandwidth() {
        let x = constant_set(&[0.0], 3);
        assert!(matches!(
            mmd_rbf(&x, &x.clone(), 0.0, 10, 0),
            Err(DivergenceError::NonPositiveBandwidth(_))
        ));
    }

    #[test]
    fn median_heuristic_small_cases() {
        let x = SampleSet::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        assert_eq!(median_heuristic_bandwidth(&x, 100, 0).unwrap(), 1.0);
        let x = SampleSet::from_rows(&[vec![0.0], vec![1.0], vec![2.0]]).unwrap();
        // Pairwise distances {1, 1, 2}: median 1.
        assert_eq!(median_heuristic_bandwidth(&x, 100, 0).unwrap(), 1.0);
    }

    #[test]
    fn median_of_identical_points_is_an_error() {
        let x = constant_set(&[4.0, 4.0], 10);
        assert!(matches!(
            median_heuristic_bandwidth(&x, 10, 0),
            Err(DivergenceError::ZeroMedian)
        ));
    }

    #[test]
    fn median_subsample_is_deterministic() {
        use rand::Rng;
        let mut rng = crate::rng::rng_from(1);
        let rows: Vec<Vec<f64>> = (0..200).map(|_| vec![rng.random::<f64>()]).collect();
        let x = SampleSet::from_rows(&rows).unwrap();
        let a = median_heuristic_bandwidth(&x, 50, 9).unwrap();
        let b = median_heuristic_bandwidth(&x, 50, 9).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let x = constant_set(&[0.0, 1.0], 4);
        let y = constant_set(&[0.0], 4);
        assert!(matches!(
            energy_distance(&x, &y, 10, 0),
            Err(DivergenceError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn empty_and_tiny_sets_are_rejected() {
        assert!(matches!(
            SampleSet::new(array![[1.0_f64]].slice(ndarray::s![0..0, ..]).to_owned()),
            Err(DivergenceError::EmptySet)
        ));
        let x = constant_set(&[0.0], 1);
        let y = constant_set(&[1.0], 5);
        assert!(matches!(
            energy_distance(&x, &y, 10, 0),
            Err(DivergenceError::SetTooSmall { .. })
        ));
    }

    #[test]
    fn exact_path_nonnegative_on_same_distribution() {
        use rand::Rng;
        for seed in 0..10_u64 {
            let mut rng = crate::rng::rng_from(seed);
            let draw: Vec<Vec<f64>> = (0..60)
                .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect();
            let draw2: Vec<Vec<f64>> = (0..60)
                .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect();
            let x = SampleSet::from_rows(&draw).unwrap();
            let y = SampleSet::from_rows(&draw2).unwrap();
            let ed = energy_distance(&x, &y, usize::MAX, 0).unwrap();
            assert!(ed.exact && ed.value >= -1e-10);
            let sigma = median_heuristic_bandwidth(&x, 60, 0).unwrap();
            let mmd = mmd_rbf(&x, &y, sigma, usize::MAX, 0).unwrap();
            assert!(mmd.exact && mmd.value >= -1e-10);
        }
    }

    #[test]
    fn jitter_breaks_duplicates_but_stays_tiny() {
        let x = constant_set(&[5.0, -3.0], 20);
        let j = x.uniform_jitter(3);
        let mut distinct = std::collections::HashSet::new();
        for i in 0..j.n() {
            distinct.insert(j.row(i).iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        }
        assert!(distinct.len() > 1);
        for (a, b) in x.data().iter().zip(j.data().iter()) {
            assert!((a - b).abs() <= 5.0 * 1e-9);
        }
    }
}
