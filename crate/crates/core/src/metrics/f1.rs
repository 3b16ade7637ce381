//! Classification scores of learned latents against their matched
//! ground-truth features.

use crate::datagen::SparseCodes;
use crate::error::{Error, Result};

use super::FeatureStats;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureF1 {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    /// `None` when `2·tp + fp + fn == 0` or the feature is unmatched.
    pub f1: Option<f64>,
    pub matched_true_feature: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct F1Result {
    pub features: Vec<FeatureF1>,
}

impl F1Result {
    pub fn scores(&self) -> Vec<Option<f64>> {
        self.features.iter().map(|f| f.f1).collect()
    }

    pub fn scorable(&self) -> usize {
        self.features.iter().filter(|f| f.f1.is_some()).count()
    }
}

pub fn f1_score(tp: u64, fp: u64, fn_: u64) -> Option<f64> {
    let denom = 2 * tp + fp + fn_;
    (denom > 0).then(|| 2.0 * tp as f64 / denom as f64)
}

/// Scores every learned latent as a classifier for the ground-truth feature
/// it was matched to, counting over the whole token stream.
///
/// `active[t]` lists the learned latents that fire on token `t`; `codes` row
/// `t` lists the true features that fire on it.
pub fn oracle_f1(
    active: &[Vec<(u32, f32)>],
    codes: &SparseCodes,
    matching: &[Option<usize>],
) -> Result<F1Result> {
    if active.is_empty() {
        return Err(Error::invalid("oracle F1 needs at least one token"));
    }
    if active.len() != codes.n_rows() {
        return Err(Error::DimMismatch(format!(
            "{} tokens of activations but {} rows of codes",
            active.len(),
            codes.n_rows()
        )));
    }
    let n = matching.len();
    let mut fire = vec![0u64; n];
    let mut tp = vec![0u64; n];
    let mut true_fire = codes.fire_counts();
    let m_true = true_fire.len();
    if let Some(j) = matching.iter().flatten().find(|&&j| j >= m_true) {
        return Err(Error::invalid(format!(
            "matching refers to true feature {j} but there are only {m_true}"
        )));
    }
    let mut fires_true = vec![false; m_true];
    for (t, row) in active.iter().enumerate() {
        let (idx, vals) = codes.row(t);
        for (&j, &v) in idx.iter().zip(vals) {
            if v != 0.0 {
                fires_true[j as usize] = true;
            }
        }
        for &(i, v) in row {
            let i = i as usize;
            if i >= n {
                return Err(Error::invalid(format!(
                    "latent {i} outside matching of length {n}"
                )));
            }
            if v == 0.0 {
                continue;
            }
            fire[i] += 1;
            if let Some(j) = matching[i] {
                if fires_true[j] {
                    tp[i] += 1;
                }
            }
        }
        for &j in idx {
            fires_true[j as usize] = false;
        }
    }
    // rows may list a true feature with zero amplitude; don't count it
    for t in 0..codes.n_rows() {
        let (idx, vals) = codes.row(t);
        for (&j, &v) in idx.iter().zip(vals) {
            if v == 0.0 {
                true_fire[j as usize] -= 1;
            }
        }
    }
    let features = (0..n)
        .map(|i| match matching[i] {
            Some(j) => {
                let fp = fire[i] - tp[i];
                let fn_ = true_fire[j] - tp[i];
                FeatureF1 {
                    tp: tp[i],
                    fp,
                    fn_,
                    f1: f1_score(tp[i], fp, fn_),
                    matched_true_feature: Some(j),
                }
            }
            None => FeatureF1 {
                tp: 0,
                fp: fire[i],
                fn_: 0,
                f1: None,
                matched_true_feature: None,
            },
        })
        .collect();
    Ok(F1Result { features })
}

/// Mean score over scorable features, optionally weighted by fire count.
pub fn aggregate(scores: &[Option<f64>], stats: &FeatureStats, weighted: bool) -> Result<f64> {
    if scores.len() != stats.n_latents() {
        return Err(Error::DimMismatch(format!(
            "{} scores for {} features",
            scores.len(),
            stats.n_latents()
        )));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (s, &c) in scores.iter().zip(&stats.fire_count) {
        if let Some(s) = s {
            let w = if weighted { c as f64 } else { 1.0 };
            num += w * s;
            den += w;
        }
    }
    if den == 0.0 {
        return Err(Error::Empty("no scorable features to aggregate".into()));
    }
    Ok(num / den)
}
