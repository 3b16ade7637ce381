//! Matching learned directions to ground-truth dictionary directions.

use ndarray::{Array2, ArrayView2};

use crate::coder::{CoderConfig, CoderKind, CoderParams};
use crate::datagen::GroundTruth;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MatchStrategy {
    /// Pairs taken in order of descending similarity.
    #[default]
    Greedy,
    /// Maximum total similarity (Hungarian algorithm).
    Optimal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recovery {
    /// Mean cosine similarity over matched learned directions.
    pub mmcs: f64,
    /// Learned index → ground-truth index.
    pub matching: Vec<Option<usize>>,
    /// Cosine similarity of each learned direction with its match (0 if
    /// unmatched).
    pub similarity: Vec<f64>,
}

fn normalized_rows(w: ArrayView2<f32>) -> Array2<f64> {
    let mut out = w.mapv(|v| v as f64);
    for mut row in out.rows_mut() {
        let n = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 0.0 {
            row.mapv_inplace(|v| v / n);
        }
    }
    out
}

/// Cosine similarity matrix `[learned, true]`; zero rows give similarity 0.
pub fn cosine_matrix(learned: ArrayView2<f32>, truth: ArrayView2<f32>) -> Result<Array2<f64>> {
    if learned.ncols() != truth.ncols() {
        return Err(Error::DimMismatch(format!(
            "learned directions have {} dims, dictionary {}",
            learned.ncols(),
            truth.ncols()
        )));
    }
    Ok(normalized_rows(learned).dot(&normalized_rows(truth).t()))
}

/// Rows compared against the dictionary: decoder rows for autoencoders,
/// encoder rows for transcoders (their decoders live in output space).
pub fn learned_directions<'a>(cfg: &CoderConfig, params: &'a CoderParams<f32>) -> ArrayView2<'a, f32> {
    match cfg.kind {
        CoderKind::Sae => params.w_dec.view(),
        _ => params.w_enc.view(),
    }
}

/// Greedy one-to-one recovery of `gt`'s dictionary by the rows of `learned`.
pub fn recovery(gt: &GroundTruth, learned: ArrayView2<f32>) -> Result<Recovery> {
    recovery_with(gt, learned, MatchStrategy::Greedy)
}

pub fn recovery_with(
    gt: &GroundTruth,
    learned: ArrayView2<f32>,
    strategy: MatchStrategy,
) -> Result<Recovery> {
    let sim = cosine_matrix(learned, gt.dictionary.view())?;
    let matching = match strategy {
        MatchStrategy::Greedy => greedy_matching(&sim),
        MatchStrategy::Optimal => optimal_matching(&sim),
    };
    let similarity: Vec<f64> = matching
        .iter()
        .enumerate()
        .map(|(i, m)| m.map_or(0.0, |j| sim[[i, j]]))
        .collect();
    let matched: Vec<f64> = matching
        .iter()
        .zip(&similarity)
        .filter(|(m, _)| m.is_some())
        .map(|(_, &s)| s)
        .collect();
    let mmcs = if matched.is_empty() {
        0.0
    } else {
        matched.iter().sum::<f64>() / matched.len() as f64
    };
    Ok(Recovery {
        mmcs,
        matching,
        similarity,
    })
}

/// Pairs in order of descending similarity, skipping already-used rows or
/// columns. Ties go to the lower (row, column).
pub fn greedy_matching(sim: &Array2<f64>) -> Vec<Option<usize>> {
    let (n, m) = sim.dim();
    let mut pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..m).map(move |j| (i, j))).collect();
    pairs.sort_by(|a, b| {
        sim[[b.0, b.1]]
            .total_cmp(&sim[[a.0, a.1]])
            .then(a.cmp(b))
    });
    let mut row_used = vec![None; n];
    let mut col_used = vec![false; m];
    let mut left = n.min(m);
    for (i, j) in pairs {
        if left == 0 {
            break;
        }
        if row_used[i].is_none() && !col_used[j] {
            row_used[i] = Some(j);
            col_used[j] = true;
            left -= 1;
        }
    }
    row_used
}

/// Assignment maximizing total similarity.
pub fn optimal_matching(sim: &Array2<f64>) -> Vec<Option<usize>> {
    let (n, m) = sim.dim();
    if n <= m {
        hungarian_min(&sim.mapv(|s| -s))
            .into_iter()
            .map(Some)
            .collect()
    } else {
        let cols = hungarian_min(&sim.t().mapv(|s| -s));
        let mut rows = vec![None; n];
        for (j, i) in cols.into_iter().enumerate() {
            rows[i] = Some(j);
        }
        rows
    }
}

/// Minimum-cost assignment of every row to a distinct column
/// (rows ≤ columns), O(rows² · columns) with potentials.
fn hungarian_min(cost: &Array2<f64>) -> Vec<usize> {
    let (n, m) = cost.dim();
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1]; // column -> row (1-based, 0 = free)
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost[[i0 - 1, j - 1]] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=m {
        if p[j] != 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}
