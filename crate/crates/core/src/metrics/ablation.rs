//! Zero-ablating groups of latents binned by interpretability score.

use ndarray::ArrayView2;

use crate::coder::{evaluate_batch, CoderConfig, CoderParams};
use crate::error::{Error, Result};

use super::{FeatureStats, Readout};

/// Loss the ablation deltas are measured in.
#[derive(Debug, Clone, Copy)]
pub enum Downstream<'a> {
    /// Mean squared reconstruction error per token.
    Mse,
    /// Mean readout cross-entropy on the reconstruction.
    Readout {
        readout: &'a Readout,
        labels: &'a [usize],
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationBin {
    pub score_lo: f64,
    pub score_hi: f64,
    pub features: Vec<usize>,
    pub fire_count: u64,
    pub delta_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationCurve {
    /// Live-feature bins, in ascending score order.
    pub bins: Vec<AblationBin>,
    /// Features that never fired; ablating them is reported separately.
    pub dead: Option<AblationBin>,
    pub base_loss: f64,
}

impl AblationCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("# features sorted ascending by score\n");
        out.push_str("bin_index,score_lo,score_hi,fire_count,delta_loss\n");
        for (i, b) in self.bins.iter().enumerate() {
            out.push_str(&format!(
                "{i},{},{},{},{}\n",
                b.score_lo, b.score_hi, b.fire_count, b.delta_loss
            ));
        }
        if let Some(d) = &self.dead {
            out.push_str(&format!("dead,,,{},{}\n", d.fire_count, d.delta_loss));
        }
        out
    }
}

/// Mean per-token downstream loss with the masked latents forced to zero.
pub fn ablation_loss(
    cfg: &CoderConfig,
    params: &CoderParams<f32>,
    x: ArrayView2<f32>,
    y: ArrayView2<f32>,
    ablate: Option<&[bool]>,
    downstream: Downstream<'_>,
) -> Result<f64> {
    if x.nrows() == 0 {
        return Err(Error::Empty("ablation evaluation set".into()));
    }
    if x.nrows() != y.nrows() {
        return Err(Error::DimMismatch(format!(
            "{} inputs but {} targets",
            x.nrows(),
            y.nrows()
        )));
    }
    let y_hat = evaluate_batch(cfg, params, x, ablate)?.y_hat;
    match downstream {
        Downstream::Mse => {
            let sse: f64 = y_hat
                .iter()
                .zip(y.iter())
                .map(|(&a, &b)| {
                    let d = a as f64 - b as f64;
                    d * d
                })
                .sum();
            Ok(sse / x.nrows() as f64)
        }
        Downstream::Readout { readout, labels } => readout.cross_entropy(y_hat.view(), labels),
    }
}

/// Splits fire counts, in the given order, into `n_bins` contiguous runs
/// whose totals land as close as possible to equal shares. Returns run
/// lengths.
pub fn equal_count_partition(counts: &[u64], n_bins: usize) -> Result<Vec<usize>> {
    let n = counts.len();
    if n_bins == 0 || n_bins > n {
        return Err(Error::invalid(format!(
            "cannot split {n} features into {n_bins} bins"
        )));
    }
    let mut cum = vec![0u64; n + 1];
    for i in 0..n {
        cum[i + 1] = cum[i] + counts[i];
    }
    let total = cum[n] as f64;
    let mut cuts = vec![0usize];
    for b in 1..n_bins {
        let target = total * b as f64 / n_bins as f64;
        let lo = cuts[b - 1] + 1;
        let hi = n - (n_bins - b);
        let mut best = lo;
        for p in lo..=hi {
            if (cum[p] as f64 - target).abs() < (cum[best] as f64 - target).abs() {
                best = p;
            }
        }
        cuts.push(best);
    }
    cuts.push(n);
    Ok(cuts.windows(2).map(|w| w[1] - w[0]).collect())
}

/// Sorts live latents by ascending score, partitions them into bins of
/// roughly equal total fire count and measures the loss increase from
/// zero-ablating each bin.
pub fn binned_ablation(
    cfg: &CoderConfig,
    params: &CoderParams<f32>,
    scores: &[Option<f64>],
    stats: &FeatureStats,
    x: ArrayView2<f32>,
    y: ArrayView2<f32>,
    n_bins: usize,
    downstream: Downstream<'_>,
) -> Result<AblationCurve> {
    if scores.len() != cfg.n_latents || stats.n_latents() != cfg.n_latents {
        return Err(Error::DimMismatch(format!(
            "{} scores and {} stats for {} latents",
            scores.len(),
            stats.n_latents(),
            cfg.n_latents
        )));
    }
    let live: Vec<usize> = (0..cfg.n_latents)
        .filter(|&i| stats.fire_count[i] > 0)
        .collect();
    let missing: Vec<usize> = live.iter().copied().filter(|&i| scores[i].is_none()).collect();
    if !missing.is_empty() {
        return Err(Error::invalid(format!(
            "live features without a score: {missing:?}"
        )));
    }
    let mut order = live;
    order.sort_by(|&a, &b| scores[a].unwrap().total_cmp(&scores[b].unwrap()).then(a.cmp(&b)));
    let counts: Vec<u64> = order.iter().map(|&i| stats.fire_count[i]).collect();
    let sizes = equal_count_partition(&counts, n_bins)?;

    let base_loss = ablation_loss(cfg, params, x, y, None, downstream)?;
    let measure = |features: &[usize]| -> Result<f64> {
        let mut mask = vec![false; cfg.n_latents];
        for &i in features {
            mask[i] = true;
        }
        Ok(ablation_loss(cfg, params, x, y, Some(&mask), downstream)? - base_loss)
    };

    let mut bins = Vec::with_capacity(n_bins);
    let mut start = 0;
    for size in sizes {
        let features = order[start..start + size].to_vec();
        start += size;
        bins.push(AblationBin {
            score_lo: scores[features[0]].unwrap(),
            score_hi: scores[*features.last().unwrap()].unwrap(),
            fire_count: features.iter().map(|&i| stats.fire_count[i]).sum(),
            delta_loss: measure(&features)?,
            features,
        });
    }
    let dead_features: Vec<usize> = (0..cfg.n_latents)
        .filter(|&i| stats.fire_count[i] == 0)
        .collect();
    let dead = if dead_features.is_empty() {
        None
    } else {
        Some(AblationBin {
            score_lo: f64::NAN,
            score_hi: f64::NAN,
            fire_count: 0,
            delta_loss: measure(&dead_features)?,
            features: dead_features,
        })
    };
    Ok(AblationCurve {
        bins,
        dead,
        base_loss,
    })
}
