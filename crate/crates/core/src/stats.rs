//! Deterministic reductions and batch-means standard errors.

use serde::Serialize;

/// Pairwise (tree) summation in index order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if values.len() <= LEAF {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    pairwise_sum(values) / values.len() as f64
}

/// Default number of contiguous replica batches.
pub const DEFAULT_BATCHES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
    pub count: usize,
}

/// Mean of per-replica values with a batch-means standard error.
///
/// Replicas are split into `batches` contiguous blocks (fewer if there are
/// not enough replicas); the SE is the standard deviation of block means over
/// `sqrt(blocks)`. Block sizes differ by at most one.
pub fn batch_estimate(values: &[f64], batches: usize) -> Estimate {
    let n = values.len();
    if n == 0 {
        return Estimate {
            mean: f64::NAN,
            se: f64::NAN,
            count: 0,
        };
    }
    let b = batches.clamp(1, n);
    let block_means: Vec<f64> = (0..b)
        .map(|i| mean(&values[i * n / b..(i + 1) * n / b]))
        .collect();
    let overall = mean(values);
    let se = if b < 2 {
        f64::INFINITY
    } else {
        let dev: Vec<f64> = block_means.iter().map(|m| (m - overall).powi(2)).collect();
        (pairwise_sum(&dev) / (b as f64 - 1.0) / b as f64).sqrt()
    };
    Estimate {
        mean: overall,
        se,
        count: n,
    }
}

/// Sample variance with its delta-method standard error
/// (`sqrt((m4 - s^4) / n)`).
pub fn variance_estimate(values: &[f64]) -> Estimate {
    let n = values.len();
    let mu = mean(values);
    let centered2: Vec<f64> = values.iter().map(|v| (v - mu).powi(2)).collect();
    let centered4: Vec<f64> = centered2.iter().map(|v| v * v).collect();
    let var = pairwise_sum(&centered2) / (n as f64 - 1.0);
    let m4 = mean(&centered4);
    Estimate {
        mean: var,
        se: ((m4 - var * var).max(0.0) / n as f64).sqrt(),
        count: n,
    }
}
