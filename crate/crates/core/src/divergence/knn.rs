//! k-nearest-neighbour Kullback-Leibler divergence estimator.

use super::{DivergenceError, DivergenceEstimate, EstimatorKind, SampleSet};

/// Estimate `D_KL(F_X || F_Y)` from k-th nearest-neighbour distances:
///
/// ```text
/// D = (d / n) * sum_i log(nu_k(x_i) / rho_k(x_i)) + log(m / (n - 1))
/// ```
///
/// where `rho_k` is the distance from `x_i` to its k-th nearest neighbour
/// within X (excluding itself) and `nu_k` the distance to its k-th nearest
/// neighbour in Y. The estimator is asymmetric; callers choose the
/// direction. Ties at distance zero are an error — see
/// [`SampleSet::uniform_jitter`] for opt-in de-duplication.
pub fn knn_kl(x: &SampleSet, y: &SampleSet, k: usize) -> Result<DivergenceEstimate, DivergenceError> {
    if x.dim() != y.dim() {
        return Err(DivergenceError::DimensionMismatch {
            x: x.dim(),
            y: y.dim(),
        });
    }
    let n = x.n();
    let m = y.n();
    if k == 0 || n <= k || m < k {
        return Err(DivergenceError::InvalidK { k, n, m });
    }
    let d = x.dim() as f64;
    let sq_dist = |a: ndarray::ArrayView1<'_, f64>, b: ndarray::ArrayView1<'_, f64>| {
        a.iter().zip(b.iter()).map(|(p, q)| (p - q) * (p - q)).sum::<f64>()
    };
    let mut log_sum = 0.0;
    let mut within = Vec::with_capacity(n - 1);
    let mut cross = Vec::with_capacity(m);
    for i in 0..n {
        // Selecting on squared distances is order-equivalent and avoids
        // n^2 square roots.
        within.clear();
        for j in 0..n {
            if j != i {
                within.push(sq_dist(x.row(i), x.row(j)));
            }
        }
        let (_, rho_sq, _) = within.select_nth_unstable_by(k - 1, f64::total_cmp);
        let rho = rho_sq.sqrt();
        cross.clear();
        for j in 0..m {
            cross.push(sq_dist(x.row(i), y.row(j)));
        }
        let (_, nu_sq, _) = cross.select_nth_unstable_by(k - 1, f64::total_cmp);
        let nu = nu_sq.sqrt();
        if rho == 0.0 || nu == 0.0 {
            return Err(DivergenceError::DuplicatePoints);
        }
        log_sum += (nu / rho).ln();
    }
    let value = d / n as f64 * log_sum + (m as f64 / (n as f64 - 1.0)).ln();
    Ok(DivergenceEstimate {
        value,
        estimator: EstimatorKind::Kl,
        pair_budget: 0,
        seed: 0,
        exact: true,
        bandwidth: None,
        k: Some(k),
    })
}
