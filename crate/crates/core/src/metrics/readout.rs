//! Linear-softmax head over teacher outputs, used as the downstream loss for
//! patching and ablation.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::coder::{evaluate_batch, CoderConfig, CoderKind, CoderParams};
use crate::datagen::{GroundTruth, SparseCodes};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Readout {
    /// `[n_classes, d]`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReadoutFit {
    pub iterations: usize,
    pub lr: f64,
}

impl Default for ReadoutFit {
    fn default() -> Self {
        Self {
            iterations: 300,
            lr: 0.5,
        }
    }
}

/// The `n` most frequent ground-truth features, most frequent first.
pub fn designate_features(gt: &GroundTruth, n: usize) -> Result<Vec<usize>> {
    if n == 0 || n > gt.m_true() {
        return Err(Error::invalid(format!(
            "cannot designate {n} of {} features",
            gt.m_true()
        )));
    }
    let mut order: Vec<usize> = (0..gt.m_true()).collect();
    order.sort_by(|&a, &b| gt.firing_prob[b].total_cmp(&gt.firing_prob[a]).then(a.cmp(&b)));
    order.truncate(n);
    Ok(order)
}

/// Class per token: 0 when no designated feature fires, otherwise 1 + the
/// position of the designated feature with the largest amplitude.
pub fn class_labels(codes: &SparseCodes, designated: &[usize]) -> Vec<usize> {
    (0..codes.n_rows())
        .map(|t| {
            let (idx, vals) = codes.row(t);
            let mut best: Option<(usize, f32)> = None;
            for (pos, &f) in designated.iter().enumerate() {
                if let Some(k) = idx.iter().position(|&j| j as usize == f) {
                    let v = vals[k];
                    if v != 0.0 && best.is_none_or(|(_, b)| v > b) {
                        best = Some((pos, v));
                    }
                }
            }
            best.map_or(0, |(pos, _)| pos + 1)
        })
        .collect()
}

fn check_labels(n_rows: usize, labels: &[usize], n_classes: usize) -> Result<()> {
    if labels.len() != n_rows {
        return Err(Error::DimMismatch(format!(
            "{} labels for {n_rows} rows",
            labels.len()
        )));
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= n_classes) {
        return Err(Error::invalid(format!("label {l} with {n_classes} classes")));
    }
    Ok(())
}

fn log_softmax_at(logits: &mut [f64], label: usize) -> f64 {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for l in logits.iter_mut() {
        *l = (*l - max).exp();
        z += *l;
    }
    for l in logits.iter_mut() {
        *l /= z;
    }
    logits[label].ln()
}

impl Readout {
    pub fn n_classes(&self) -> usize {
        self.bias.len()
    }

    pub fn dim(&self) -> usize {
        self.weight.ncols()
    }

    /// Full-batch gradient descent on mean cross-entropy from zero weights.
    pub fn fit(
        y: ArrayView2<f32>,
        labels: &[usize],
        n_classes: usize,
        fit: ReadoutFit,
    ) -> Result<Self> {
        if n_classes < 2 {
            return Err(Error::invalid("readout needs at least two classes"));
        }
        if y.nrows() == 0 {
            return Err(Error::Empty("readout training set".into()));
        }
        check_labels(y.nrows(), labels, n_classes)?;
        let y = y.mapv(|v| v as f64);
        let n = y.nrows() as f64;
        let mut r = Readout {
            weight: Array2::zeros((n_classes, y.ncols())),
            bias: Array1::zeros(n_classes),
        };
        for _ in 0..fit.iterations {
            let mut probs = y.dot(&r.weight.t()) + &r.bias;
            for (mut row, &l) in probs.rows_mut().into_iter().zip(labels) {
                let row = row.as_slice_mut().unwrap();
                log_softmax_at(row, l);
                row[l] -= 1.0;
            }
            let gw = probs.t().dot(&y) / n;
            let gb = probs.sum_axis(ndarray::Axis(0)) / n;
            r.weight.scaled_add(-fit.lr, &gw);
            r.bias.scaled_add(-fit.lr, &gb);
        }
        Ok(r)
    }

    pub fn logits(&self, y: ArrayView1<f32>) -> Vec<f64> {
        self.weight
            .rows()
            .into_iter()
            .zip(&self.bias)
            .map(|(w, b)| b + w.iter().zip(y).map(|(a, &v)| a * v as f64).sum::<f64>())
            .collect()
    }

    /// Mean cross-entropy over rows.
    pub fn cross_entropy(&self, y: ArrayView2<f32>, labels: &[usize]) -> Result<f64> {
        if y.ncols() != self.dim() {
            return Err(Error::DimMismatch(format!(
                "readout over {} dims applied to {}",
                self.dim(),
                y.ncols()
            )));
        }
        if y.nrows() == 0 {
            return Err(Error::Empty("cross-entropy evaluation set".into()));
        }
        check_labels(y.nrows(), labels, self.n_classes())?;
        let total: f64 = y
            .rows()
            .into_iter()
            .zip(labels)
            .map(|(row, &l)| -log_softmax_at(&mut self.logits(row), l))
            .sum();
        Ok(total / y.nrows() as f64)
    }

    pub fn accuracy(&self, y: ArrayView2<f32>, labels: &[usize]) -> f64 {
        let hits = y
            .rows()
            .into_iter()
            .zip(labels)
            .filter(|(row, &l)| {
                let lg = self.logits(row.view());
                let arg = (0..lg.len()).fold(0, |a, i| if lg[i] > lg[a] { i } else { a });
                arg == l
            })
            .count();
        hits as f64 / labels.len().max(1) as f64
    }
}

/// Cross-entropy of the readout on the coder's reconstruction minus that on
/// the true targets.
pub fn patch_loss_increase(
    cfg: &CoderConfig,
    params: &CoderParams<f32>,
    readout: &Readout,
    x: ArrayView2<f32>,
    y: ArrayView2<f32>,
    labels: &[usize],
) -> Result<f64> {
    if cfg.kind == CoderKind::Sae {
        return Err(Error::Unsupported(
            "patched loss is defined for transcoder targets only".into(),
        ));
    }
    if x.nrows() != y.nrows() {
        return Err(Error::DimMismatch(format!(
            "{} inputs but {} targets",
            x.nrows(),
            y.nrows()
        )));
    }
    let y_hat = evaluate_batch(cfg, params, x, None)?.y_hat;
    Ok(readout.cross_entropy(y_hat.view(), labels)? - readout.cross_entropy(y, labels)?)
}
