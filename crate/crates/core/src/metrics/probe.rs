//! Sparse probing: a logistic classifier on a handful of selected latents.

use ndarray::{Array2, ArrayView2};

use crate::coder::{evaluate_batch, CoderConfig, CoderParams};
use crate::datagen::SparseCodes;
use crate::error::{Error, Result};

/// Dense `[tokens, n_latents]` post-activation latents.
pub fn dense_latents(
    cfg: &CoderConfig,
    params: &CoderParams<f32>,
    x: ArrayView2<f32>,
) -> Result<Array2<f32>> {
    let eval = evaluate_batch(cfg, params, x, None)?;
    let mut out = Array2::zeros((x.nrows(), cfg.n_latents));
    for (t, row) in eval.active.iter().enumerate() {
        for &(i, v) in row {
            out[[t, i as usize]] = v;
        }
    }
    Ok(out)
}

/// True on tokens where any of `features` fires.
pub fn labels_from_codes(codes: &SparseCodes, features: &[usize]) -> Vec<bool> {
    (0..codes.n_rows())
        .map(|t| {
            let (idx, vals) = codes.row(t);
            idx.iter()
                .zip(vals)
                .any(|(&j, &v)| v != 0.0 && features.contains(&(j as usize)))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeConfig {
    pub n_selected: usize,
    pub folds: usize,
    pub iterations: usize,
    pub lr: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            n_selected: 1,
            folds: 5,
            iterations: 200,
            lr: 0.5,
        }
    }
}

/// Latents ranked by |mean over positives − mean over negatives| on `rows`.
pub fn select_latents(
    latents: ArrayView2<f32>,
    labels: &[bool],
    rows: &[usize],
    n_selected: usize,
) -> Vec<usize> {
    let d = latents.ncols();
    let mut sum = [vec![0.0f64; d], vec![0.0f64; d]];
    let mut count = [0usize; 2];
    for &r in rows {
        let c = labels[r] as usize;
        count[c] += 1;
        for (s, &v) in sum[c].iter_mut().zip(latents.row(r)) {
            *s += v as f64;
        }
    }
    let mean = |c: usize, i: usize| {
        if count[c] == 0 {
            0.0
        } else {
            sum[c][i] / count[c] as f64
        }
    };
    let mut order: Vec<usize> = (0..d).collect();
    let score: Vec<f64> = (0..d).map(|i| (mean(1, i) - mean(0, i)).abs()).collect();
    order.sort_by(|&a, &b| score[b].total_cmp(&score[a]).then(a.cmp(&b)));
    order.truncate(n_selected);
    order
}

/// Mean held-out accuracy over contiguous folds.
pub fn sparse_probe(latents: ArrayView2<f32>, labels: &[bool], cfg: ProbeConfig) -> Result<f64> {
    let n = latents.nrows();
    if labels.len() != n {
        return Err(Error::DimMismatch(format!(
            "{} labels for {n} rows",
            labels.len()
        )));
    }
    if cfg.n_selected == 0 || cfg.n_selected > latents.ncols() {
        return Err(Error::invalid(format!(
            "n_selected {} must be in 1..={}",
            cfg.n_selected,
            latents.ncols()
        )));
    }
    if cfg.folds < 2 || cfg.folds > n {
        return Err(Error::invalid(format!(
            "folds {} must be in 2..={n}",
            cfg.folds
        )));
    }
    if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
        return Err(Error::invalid("probe labels contain a single class"));
    }
    let mut total = 0.0;
    for f in 0..cfg.folds {
        let (lo, hi) = (f * n / cfg.folds, (f + 1) * n / cfg.folds);
        let train: Vec<usize> = (0..lo).chain(hi..n).collect();
        let sel = select_latents(latents, labels, &train, cfg.n_selected);
        let feats = |r: usize| -> Vec<f64> { sel.iter().map(|&i| latents[[r, i]] as f64).collect() };

        let k = sel.len();
        let mut mu = vec![0.0; k];
        let mut sd = vec![0.0; k];
        for &r in &train {
            for (m, v) in mu.iter_mut().zip(feats(r)) {
                *m += v;
            }
        }
        mu.iter_mut().for_each(|m| *m /= train.len() as f64);
        for &r in &train {
            for ((s, v), m) in sd.iter_mut().zip(feats(r)).zip(&mu) {
                *s += (v - m) * (v - m);
            }
        }
        for s in sd.iter_mut() {
            *s = (*s / train.len() as f64).sqrt();
            if *s == 0.0 {
                *s = 1.0;
            }
        }
        let standard = |r: usize| -> Vec<f64> {
            feats(r)
                .iter()
                .zip(mu.iter().zip(&sd))
                .map(|(v, (m, s))| (v - m) / s)
                .collect()
        };
        let xs: Vec<Vec<f64>> = train.iter().map(|&r| standard(r)).collect();

        let mut w = vec![0.0; k];
        let mut b = 0.0;
        for _ in 0..cfg.iterations {
            let mut gw = vec![0.0; k];
            let mut gb = 0.0;
            for (xr, &r) in xs.iter().zip(&train) {
                let z = b + xr.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>();
                let e = 1.0 / (1.0 + (-z).exp()) - labels[r] as u8 as f64;
                gb += e;
                for (g, a) in gw.iter_mut().zip(xr) {
                    *g += e * a;
                }
            }
            let inv = cfg.lr / train.len() as f64;
            b -= gb * inv;
            for (wi, g) in w.iter_mut().zip(&gw) {
                *wi -= g * inv;
            }
        }
        let correct = (lo..hi)
            .filter(|&r| {
                let z = b + standard(r).iter().zip(&w).map(|(a, c)| a * c).sum::<f64>();
                (z > 0.0) == labels[r]
            })
            .count();
        total += correct as f64 / (hi - lo) as f64;
    }
    Ok(total / cfg.folds as f64)
}
