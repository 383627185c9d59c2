//! Minority-class oversampling in feature space.
//!
//! Synthetic samples are drawn on the segments between a minority vector
//! and one of its k nearest minority neighbours, so every synthetic point
//! is a convex combination of exactly two real ones. Feature matrices are
//! flattened row-major before oversampling; the caller owns reshaping.

use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug)]
pub struct SmoteConfig {
    /// Neighbours considered per sample; clipped to the minority size - 1.
    pub k_neighbors: usize,
    /// Desired minority count after augmentation.
    pub target_count: usize,
    pub seed: u64,
}

impl SmoteConfig {
    pub fn new(target_count: usize, seed: u64) -> Self {
        SmoteConfig {
            k_neighbors: 5,
            target_count,
            seed,
        }
    }
}

/// Generates `target_count - minority.len()` synthetic vectors.
///
/// Each synthetic vector is `x + u * (n - x)` for a uniformly chosen
/// minority vector `x`, one of its k nearest minority neighbours `n`
/// (Euclidean, ties broken by index) and `u` uniform in [0, 1].
/// Deterministic for a given seed.
pub fn smote(minority: &[Vec<f64>], cfg: &SmoteConfig) -> Result<Vec<Vec<f64>>> {
    if minority.len() < 2 {
        return Err(Error::Validation(
            "smote needs at least 2 minority samples (no neighbour exists)".into(),
        ));
    }
    if cfg.k_neighbors == 0 {
        return Err(Error::Validation("smote k_neighbors must be >= 1".into()));
    }
    let dim = minority[0].len();
    if minority.iter().any(|v| v.len() != dim) {
        return Err(Error::Validation(
            "smote minority vectors must share one dimension".into(),
        ));
    }
    if cfg.target_count < minority.len() {
        return Err(Error::Validation(format!(
            "smote target_count {} below current minority count {}",
            cfg.target_count,
            minority.len()
        )));
    }

    let n_synthetic = cfg.target_count - minority.len();
    if n_synthetic == 0 {
        return Ok(Vec::new());
    }

    let k = cfg.k_neighbors.min(minority.len() - 1);
    // Nearest minority neighbours per sample, by (distance, index).
    let neighbours: Vec<Vec<usize>> = (0..minority.len())
        .map(|i| {
            let mut dists: Vec<(f64, usize)> = (0..minority.len())
                .filter(|&j| j != i)
                .map(|j| (sq_dist(&minority[i], &minority[j]), j))
                .collect();
            dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
            dists.into_iter().take(k).map(|(_, j)| j).collect()
        })
        .collect();

    let mut rng = Rng::seed_from(cfg.seed);
    let mut out = Vec::with_capacity(n_synthetic);
    for _ in 0..n_synthetic {
        let i = rng.below(minority.len());
        let j = neighbours[i][rng.below(k)];
        let u = rng.next_f64();
        let x = &minority[i];
        let n = &minority[j];
        out.push(
            x.iter()
                .zip(n)
                .map(|(&a, &b)| a + u * (b - a))
                .collect(),
        );
    }
    Ok(out)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
