//! Principal component analysis for small dimensions via cyclic Jacobi
//! eigen-decomposition of the sample covariance matrix.

use ndarray::{Array1, Array2};

use super::{DivergenceError, SampleSet};

/// Fitted PCA basis.
#[derive(Debug, Clone)]
pub struct PcaModel {
    mean: Array1<f64>,
    /// d x q, orthonormal columns sorted by decreasing eigenvalue. The
    /// largest-magnitude entry of each component is positive.
    components: Array2<f64>,
    explained_variance_ratio: Vec<f64>,
}

impl PcaModel {
    pub fn mean(&self) -> &Array1<f64> {
        &self.mean
    }

    pub fn components(&self) -> &Array2<f64> {
        &self.components
    }

    pub fn q(&self) -> usize {
        self.components.ncols()
    }

    /// Fraction of total variance captured by each retained component.
    pub fn explained_variance_ratio(&self) -> &[f64] {
        &self.explained_variance_ratio
    }

    /// Project one point: subtract the fitted mean, then apply the basis.
    pub fn project_point(&self, point: &[f64]) -> Vec<f64> {
        let centered: Vec<f64> = point
            .iter()
            .zip(self.mean.iter())
            .map(|(v, m)| v - m)
            .collect();
        (0..self.q())
            .map(|c| {
                centered
                    .iter()
                    .zip(self.components.column(c))
                    .map(|(v, w)| v * w)
                    .sum()
            })
            .collect()
    }
}

/// Cyclic Jacobi diagonalisation of a symmetric matrix.
/// Returns (eigenvalues, eigenvectors-in-columns), unsorted.
fn jacobi_eigen(mut a: Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let d = a.nrows();
    let mut v = Array2::eye(d);
    let frob: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let tol = 1e-14 * frob.max(1e-300);
    for _sweep in 0..100 {
        let off: f64 = {
            let mut s = 0.0;
            for p in 0..d {
                for q in (p + 1)..d {
                    s += a[(p, q)] * a[(p, q)];
                }
            }
            s.sqrt()
        };
        if off <= tol {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                if a[(p, q)].abs() <= tol / (d * d) as f64 {
                    continue;
                }
                let tau = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..d {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..d {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..d {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let eigenvalues = (0..d).map(|i| a[(i, i)]).collect();
    (eigenvalues, v)
}

/// Fit the top-q principal components of `x` (n > q >= 1).
pub fn pca_fit(x: &SampleSet, q: usize) -> Result<PcaModel, DivergenceError> {
    let n = x.n();
    let d = x.dim();
    if q == 0 || q >= n || q > d {
        return Err(DivergenceError::InvalidComponents { n, q });
    }
    let data = x.data();
    let mean: Array1<f64> = data.mean_axis(ndarray::Axis(0)).expect("n >= 1");
    let mut cov = Array2::<f64>::zeros((d, d));
    for row in data.outer_iter() {
        for i in 0..d {
            let di = row[i] - mean[i];
            for j in i..d {
                cov[(i, j)] += di * (row[j] - mean[j]);
            }
        }
    }
    let denom = (n - 1) as f64;
    for i in 0..d {
        for j in i..d {
            cov[(i, j)] /= denom;
            cov[(j, i)] = cov[(i, j)];
        }
    }

    let (eigenvalues, vectors) = jacobi_eigen(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| eigenvalues[j].total_cmp(&eigenvalues[i]));
    let sorted: Vec<f64> = order.iter().map(|&i| eigenvalues[i].max(0.0)).collect();
    let total: f64 = sorted.iter().sum();
    let max_ev = sorted[0];
    let rank = sorted.iter().filter(|&&l| l > 1e-12 * max_ev.max(1e-300)).count();
    if q > rank {
        return Err(DivergenceError::RankDeficient { rank, q });
    }

    let mut components = Array2::<f64>::zeros((d, q));
    for (c, &i) in order.iter().take(q).enumerate() {
        let col = vectors.column(i);
        // Sign convention: largest-magnitude entry positive.
        let lead = col
            .iter()
            .copied()
            .fold(0.0_f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
        let flip = if lead < 0.0 { -1.0 } else { 1.0 };
        for r in 0..d {
            components[(r, c)] = flip * col[r];
        }
    }
    let explained_variance_ratio = sorted
        .iter()
        .take(q)
        .map(|&l| if total > 0.0 { l / total } else { 0.0 })
        .collect();
    Ok(PcaModel {
        mean,
        components,
        explained_variance_ratio,
    })
}

/// Project a sample set onto a fitted basis.
pub fn pca_project(model: &PcaModel, x: &SampleSet) -> Result<SampleSet, DivergenceError> {
    if x.dim() != model.mean.len() {
        return Err(DivergenceError::DimensionMismatch {
            x: x.dim(),
            y: model.mean.len(),
        });
    }
    let n = x.n();
    let q = model.q();
    let mut out = Array2::<f64>::zeros((n, q));
    for (i, row) in x.data().outer_iter().enumerate() {
        let projected = model.project_point(row.as_slice().expect("contiguous row"));
        for (c, v) in projected.into_iter().enumerate() {
            out[(i, c)] = v;
        }
    }
    SampleSet::new(out)
}
