use ndarray::ArrayView2;

use crate::coder::{evaluate_batch, CoderConfig, CoderParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStats {
    pub fire_count: Vec<u64>,
    pub firing_rate: Vec<f64>,
    pub tokens_evaluated: u64,
}

impl FeatureStats {
    /// From per-token lists of active latents; zero values don't count.
    pub fn from_active(n_latents: usize, active: &[Vec<(u32, f32)>]) -> Self {
        let mut fire_count = vec![0u64; n_latents];
        for row in active {
            for &(i, v) in row {
                if v != 0.0 {
                    fire_count[i as usize] += 1;
                }
            }
        }
        Self::from_counts(fire_count, active.len() as u64)
    }

    pub fn from_counts(fire_count: Vec<u64>, tokens_evaluated: u64) -> Self {
        let firing_rate = fire_count
            .iter()
            .map(|&c| {
                if tokens_evaluated == 0 {
                    0.0
                } else {
                    c as f64 / tokens_evaluated as f64
                }
            })
            .collect();
        Self {
            fire_count,
            firing_rate,
            tokens_evaluated,
        }
    }

    pub fn n_latents(&self) -> usize {
        self.fire_count.len()
    }

    pub fn dead(&self) -> Vec<usize> {
        (0..self.n_latents())
            .filter(|&i| self.fire_count[i] == 0)
            .collect()
    }
}

/// Counts, per latent, the tokens on which its post-activation value is
/// nonzero.
pub fn firing_stats(
    cfg: &CoderConfig,
    params: &CoderParams<f32>,
    x: ArrayView2<f32>,
) -> Result<FeatureStats> {
    if x.nrows() == 0 {
        return Err(Error::invalid("firing stats need at least one token"));
    }
    let eval = evaluate_batch(cfg, params, x, None)?;
    Ok(FeatureStats::from_active(cfg.n_latents, &eval.active))
}

/// Latents whose firing rate exceeds `threshold`.
pub fn flag_ultra_high(stats: &FeatureStats, threshold: f64) -> Result<Vec<usize>> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::invalid("threshold must be in (0, 1)"));
    }
    Ok(stats
        .firing_rate
        .iter()
        .enumerate()
        .filter(|(_, &r)| r > threshold)
        .map(|(i, _)| i)
        .collect())
}

/// Default ultra-high-frequency threshold.
pub const ULTRA_HIGH_THRESHOLD: f64 = 0.1;
/// Second, fixed threshold reported alongside the default.
pub const MAJORITY_THRESHOLD: f64 = 0.5;
