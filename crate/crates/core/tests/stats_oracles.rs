//! Oracle checks for the statistics module: exhaustive permutation
//! enumeration on a tiny instance, adaptive-quadrature t-distribution
//! tail probabilities, a normal-equations OLS cross-check, and the
//! uniformity of p-values under the null.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use shiftlab_core::divergence::{DivergenceError, SampleSet};
use shiftlab_core::rng::{child_seed, rng_from};
use shiftlab_core::stats::{ols_fit, pearson, permutation_test};

fn set_1d(vals: &[f64]) -> SampleSet {
    SampleSet::from_rows(&vals.iter().map(|&v| vec![v]).collect::<Vec<_>>()).unwrap()
}

fn abs_mean_diff(a: &SampleSet, b: &SampleSet, _seed: u64) -> Result<f64, DivergenceError> {
    let ma = a.data().iter().sum::<f64>() / a.n() as f64;
    let mb = b.data().iter().sum::<f64>() / b.n() as f64;
    Ok((ma - mb).abs())
}

/// Exact permutation p-value over every balanced split of the pool,
/// inclusive ties, no add-one correction.
fn exhaustive_balanced_p(pool: &[f64], s: usize, observed: f64) -> f64 {
    let n = pool.len();
    let mut count_ge = 0usize;
    let mut total = 0usize;
    // Enumerate s-subsets as side A via bitmask.
    for mask in 0..(1u32 << n) {
        if mask.count_ones() as usize != s {
            continue;
        }
        let mut sum_a = 0.0;
        let mut sum_b = 0.0;
        let mut n_b = 0usize;
        for (i, &v) in pool.iter().enumerate() {
            if mask & (1 << i) != 0 {
                sum_a += v;
            } else {
                sum_b += v;
                n_b += 1;
            }
        }
        // Balanced splits only use s points per side; drop the rest.
        // With n == 2s every point is used and n_b == s.
        assert_eq!(n_b, n - s);
        total += 1;
        let d = (sum_a / s as f64 - sum_b / n_b as f64).abs();
        if d >= observed {
            count_ge += 1;
        }
    }
    count_ge as f64 / total as f64
}

#[test]
fn sampled_p_converges_to_exhaustive_enumeration() {
    let x = set_1d(&[0.0, 0.0, 0.0]);
    let y = set_1d(&[1.0, 1.0, 1.0]);
    let pool = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
    let exact = exhaustive_balanced_p(&pool, 3, 1.0);
    // 20 balanced splits, 2 of which recover the separation: p = 0.1.
    assert!((exact - 0.1).abs() < 1e-15);

    let b = 999;
    let mut acc = 0.0;
    let trials = 30;
    for seed in 0..trials as u64 {
        let res = permutation_test(&x, &y, abs_mean_diff, "mean-diff", b, seed).unwrap();
        acc += res.p_value;
    }
    let mean_p = acc / trials as f64;
    // E[p_hat] = (0.1 B + 1) / (B + 1) ~= 0.1009 at B = 999.
    assert!(
        (mean_p - exact).abs() < 0.02,
        "mean sampled p {mean_p} vs exact {exact}"
    );
}

// ---------------------------------------------------------------------
// Student-t tail oracle by adaptive Simpson quadrature on the
// unnormalised density, so no gamma-function code is shared with the
// implementation.
// ---------------------------------------------------------------------

fn simpson<F: Fn(f64) -> f64 + Copy>(f: F, a: f64, b: f64, fa: f64, fb: f64, fm: f64, eps: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * eps {
        left + right + delta / 15.0
    } else {
        simpson(f, a, m, fa, fm, flm, eps / 2.0, depth - 1)
            + simpson(f, m, b, fm, fb, frm, eps / 2.0, depth - 1)
    }
}

fn integrate<F: Fn(f64) -> f64 + Copy>(f: F, a: f64, b: f64, eps: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    simpson(f, a, b, fa, fb, fm, eps, 48)
}

/// Two-tailed t probability by quadrature of the unnormalised density
/// g(s) = (1 + s^2/nu)^(-(nu+1)/2), using the substitution
/// s = t + u/(1-u) for the tail.
fn quadrature_t_two_tailed(t: f64, nu: f64) -> f64 {
    let g = move |s: f64| (1.0 + s * s / nu).powf(-(nu + 1.0) / 2.0);
    let t = t.abs();
    let tail = move |u: f64| {
        let one_minus = 1.0 - u;
        let s = t + u / one_minus;
        g(s) / (one_minus * one_minus)
    };
    let half = move |u: f64| {
        let one_minus = 1.0 - u;
        let s = u / one_minus;
        g(s) / (one_minus * one_minus)
    };
    let upper = integrate(tail, 0.0, 1.0 - 1e-9, 1e-13);
    let total_half = integrate(half, 0.0, 1.0 - 1e-9, 1e-13);
    upper / total_half
}

#[test]
fn pearson_p_matches_quadrature_oracle() {
    let mut rng = rng_from(314);
    for trial in 0..12_u64 {
        let n = 20;
        let x: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let y: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let (r, p) = pearson(&x, &y).unwrap();
        let t = r * ((n as f64 - 2.0) / (1.0 - r * r)).sqrt();
        let want = quadrature_t_two_tailed(t, n as f64 - 2.0);
        assert!(
            (p - want).abs() < 1e-6,
            "trial {trial}: p {p} vs quadrature {want}"
        );
    }
}

#[test]
fn ols_matches_normal_equations() {
    let mut rng = rng_from(9);
    for _ in 0..10 {
        let n = 40;
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-4.0..4.0)).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|v| 0.8 * v - 2.0 + rng.random_range(-0.5..0.5))
            .collect();
        let (slope, intercept) = ols_fit(&x, &y).unwrap();
        // Normal equations: [n, Sx; Sx, Sxx] [b0, b1]^T = [Sy, Sxy]^T,
        // solved directly by Cramer's rule.
        let nf = n as f64;
        let sx: f64 = x.iter().sum();
        let sy: f64 = y.iter().sum();
        let sxx: f64 = x.iter().map(|v| v * v).sum();
        let sxy: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        let det = nf * sxx - sx * sx;
        let b0 = (sy * sxx - sx * sxy) / det;
        let b1 = (nf * sxy - sx * sy) / det;
        assert!((slope - b1).abs() <= 1e-10 * b1.abs().max(1.0));
        assert!((intercept - b0).abs() <= 1e-10 * b0.abs().max(1.0));
    }
}

/// Kolmogorov-Smirnov distance between a sample and Uniform(0, 1).
fn ks_to_uniform(mut p: Vec<f64>) -> f64 {
    p.sort_by(f64::total_cmp);
    let n = p.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &v) in p.iter().enumerate() {
        let hi = (i as f64 + 1.0) / n - v;
        let lo = v - i as f64 / n;
        d = d.max(hi).max(lo);
    }
    d
}

#[test]
fn null_p_values_are_uniform() {
    // Both samples from the same normal; p over 200 trials should be
    // close to Uniform(0, 1).
    let trials = 200;
    let b = 200;
    let mut pvals = Vec::with_capacity(trials);
    for trial in 0..trials as u64 {
        let mut rng = rng_from(child_seed(5000, trial));
        let x: Vec<f64> = (0..30).map(|_| StandardNormal.sample(&mut rng)).collect();
        let y: Vec<f64> = (0..30).map(|_| StandardNormal.sample(&mut rng)).collect();
        let res = permutation_test(
            &set_1d(&x),
            &set_1d(&y),
            abs_mean_diff,
            "mean-diff",
            b,
            child_seed(6000, trial),
        )
        .unwrap();
        pvals.push(res.p_value);
    }
    let d = ks_to_uniform(pvals);
    assert!(d < 0.12, "KS distance to uniform was {d}");
}
