//! Random hyperparameter search space and the training-RMSE quality
//! filter.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Activation, MlpConfig, MlpError};
use crate::rng::rng_from;

/// Declarative random-search space. Defaults: 2-6 hidden layers, width
/// log-uniform in [64, 1024], dropout uniform in [0, 0.25], weight decay
/// log-uniform in [1e-5, 1e-2], learning rate log-uniform in
/// [5e-4, 1e-2], activation uniform over ReLU/GELU/Tanh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub hidden_layers: Vec<usize>,
    pub width_range: (f64, f64),
    pub dropout_range: (f64, f64),
    pub weight_decay_range: (f64, f64),
    pub learning_rate_range: (f64, f64),
    pub activations: Vec<Activation>,
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            hidden_layers: vec![2, 3, 4, 5, 6],
            width_range: (64.0, 1024.0),
            dropout_range: (0.0, 0.25),
            weight_decay_range: (1e-5, 1e-2),
            learning_rate_range: (5e-4, 1e-2),
            activations: vec![Activation::Relu, Activation::Gelu, Activation::Tanh],
        }
    }
}

fn log_uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    (rng.random_range(lo.ln()..=hi.ln())).exp()
}

/// Draw one configuration; deterministic per seed. Field draw order is
/// fixed (layers, width, dropout, weight decay, learning rate,
/// activation).
pub fn sample_hyperparams(
    space: &SearchSpace,
    input_dim: usize,
    output_dim: usize,
    seed: u64,
) -> Result<MlpConfig, MlpError> {
    if space.hidden_layers.is_empty() {
        return Err(MlpError::EmptySearchSpace("hidden_layers"));
    }
    if space.activations.is_empty() {
        return Err(MlpError::EmptySearchSpace("activations"));
    }
    let mut rng = rng_from(seed);
    let hidden_layers = space.hidden_layers[rng.random_range(0..space.hidden_layers.len())];
    let width = log_uniform(&mut rng, space.width_range).round() as usize;
    let dropout = rng.random_range(space.dropout_range.0..=space.dropout_range.1);
    let weight_decay = log_uniform(&mut rng, space.weight_decay_range);
    let learning_rate = log_uniform(&mut rng, space.learning_rate_range);
    let activation = space.activations[rng.random_range(0..space.activations.len())];
    let config = MlpConfig {
        hidden_layers,
        width,
        activation,
        dropout,
        weight_decay,
        learning_rate,
        input_dim,
        output_dim,
    };
    config.validate()?;
    Ok(config)
}

/// Linear-interpolation percentile between order statistics (the
/// `(n-1) * p/100` rank convention).
pub fn percentile_interpolated(values: &[f64], percentile: f64) -> Result<f64, MlpError> {
    if !(0.0 < percentile && percentile < 100.0) {
        return Err(MlpError::InvalidPercentile(percentile));
    }
    if values.is_empty() {
        return Err(MlpError::TooFewRecords { n: 0, need: 1 });
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = percentile / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    Ok(sorted[lo] + frac * (sorted[hi] - sorted[lo]))
}

/// Indices of architectures whose training RMSE stays at or below the
/// percentile threshold in BOTH splits; exceeding the threshold in either
/// split (strictly) excludes the architecture.
pub fn quality_filter(
    rmse_pairs: &[(f64, f64)],
    percentile: f64,
) -> Result<Vec<usize>, MlpError> {
    if rmse_pairs.len() < 2 {
        return Err(MlpError::TooFewRecords {
            n: rmse_pairs.len(),
            need: 2,
        });
    }
    let split_a: Vec<f64> = rmse_pairs.iter().map(|p| p.0).collect();
    let split_b: Vec<f64> = rmse_pairs.iter().map(|p| p.1).collect();
    let thr_a = percentile_interpolated(&split_a, percentile)?;
    let thr_b = percentile_interpolated(&split_b, percentile)?;
    Ok(rmse_pairs
        .iter()
        .enumerate()
        .filter(|(_, (a, b))| *a <= thr_a && *b <= thr_b)
        .map(|(i, _)| i)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layer_counts_are_uniform() {
        let space = SearchSpace::default();
        let mut counts = [0usize; 5];
        let draws = 10_000;
        for seed in 0..draws as u64 {
            let cfg = sample_hyperparams(&space, 3, 1, seed).unwrap();
            counts[cfg.hidden_layers - 2] += 1;
        }
        for &c in &counts {
            let freq = c as f64 / draws as f64;
            assert!((freq - 0.2).abs() < 0.02, "layer frequency {freq}");
        }
    }

    #[test]
    fn widths_are_log_uniform_in_range() {
        let space = SearchSpace::default();
        let draws = 10_000;
        let mut below_256 = 0usize;
        for seed in 0..draws as u64 {
            let cfg = sample_hyperparams(&space, 3, 1, seed).unwrap();
            assert!((64..=1024).contains(&cfg.width));
            if cfg.width < 256 {
                below_256 += 1;
            }
            assert!((0.0..=0.25).contains(&cfg.dropout));
            assert!((1e-5..=1e-2).contains(&cfg.weight_decay));
            assert!((5e-4..=1e-2).contains(&cfg.learning_rate));
        }
        // log-uniform: P(width < 256) = ln(256/64) / ln(1024/64) = 0.5.
        let frac = below_256 as f64 / draws as f64;
        assert!((frac - 0.5).abs() < 0.02, "fraction below 256 was {frac}");
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let space = SearchSpace::default();
        let a = sample_hyperparams(&space, 4, 2, 99).unwrap();
        let b = sample_hyperparams(&space, 4, 2, 99).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_space_is_rejected() {
        let space = SearchSpace {
            hidden_layers: vec![],
            ..SearchSpace::default()
        };
        assert!(matches!(
            sample_hyperparams(&space, 3, 1, 0),
            Err(MlpError::EmptySearchSpace("hidden_layers"))
        ));
    }

    #[test]
    fn percentile_uses_linear_interpolation() {
        let values: Vec<f64> = (1..=10).map(|v| v as f64).collect();
        let p90 = percentile_interpolated(&values, 90.0).unwrap();
        assert!((p90 - 9.1).abs() < 1e-12);
    }

    #[test]
    fn filter_excludes_above_percentile_in_either_split() {
        // Split A RMSEs 1..10; split B all equal.
        let pairs: Vec<(f64, f64)> = (1..=10).map(|v| (v as f64, 1.0)).collect();
        let kept = quality_filter(&pairs, 90.0).unwrap();
        // Threshold 9.1 excludes only the architecture with RMSE 10.
        assert_eq!(kept, (0..9).collect::<Vec<_>>());

        // Either-split rule: failing only split B still excludes.
        let mut pairs2 = vec![(1.0, 1.0); 10];
        pairs2[3].1 = 50.0;
        let kept2 = quality_filter(&pairs2, 90.0).unwrap();
        assert!(!kept2.contains(&3));
        assert_eq!(kept2.len(), 9);
    }

    #[test]
    fn equal_rmses_exclude_nothing() {
        let pairs = vec![(2.5, 3.5); 8];
        let kept = quality_filter(&pairs, 90.0).unwrap();
        assert_eq!(kept.len(), 8);
    }

    #[test]
    fn bad_percentile_is_rejected() {
        let pairs = vec![(1.0, 1.0), (2.0, 2.0)];
        assert!(matches!(
            quality_filter(&pairs, 0.0),
            Err(MlpError::InvalidPercentile(_))
        ));
        assert!(matches!(
            quality_filter(&pairs, 100.0),
            Err(MlpError::InvalidPercentile(_))
        ));
    }
}
