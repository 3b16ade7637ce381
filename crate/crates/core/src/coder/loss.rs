use ndarray::ArrayView2;

use crate::error::{Error, Result};
use crate::real::Real;

/// Sum of squared residuals for one sample.
pub fn mse_loss<T: Real>(y_hat: &[T], y: &[T]) -> T {
    y_hat
        .iter()
        .zip(y)
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum()
}

/// Gradient of [`mse_loss`] with respect to `y_hat`.
pub fn mse_grad<T: Real>(y_hat: &[T], y: &[T]) -> Vec<T> {
    let two = T::one() + T::one();
    y_hat.iter().zip(y).map(|(&a, &b)| two * (a - b)).collect()
}

/// Fraction of variance unexplained over all samples and coordinates.
pub fn fvu<T: Real>(y_hats: ArrayView2<T>, ys: ArrayView2<T>) -> Result<f64> {
    if y_hats.dim() != ys.dim() {
        return Err(Error::DimMismatch(format!(
            "predictions {:?} vs targets {:?}",
            y_hats.dim(),
            ys.dim()
        )));
    }
    let n = ys.nrows();
    if n == 0 {
        return Err(Error::DegenerateTarget);
    }
    let mut mean = vec![0f64; ys.ncols()];
    for row in ys.rows() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v.f64();
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let (mut sse, mut sst) = (0f64, 0f64);
    for (yh, y) in y_hats.rows().into_iter().zip(ys.rows()) {
        for ((a, b), m) in yh.iter().zip(y).zip(&mean) {
            sse += (a.f64() - b.f64()).powi(2);
            sst += (b.f64() - m).powi(2);
        }
    }
    if sst <= 0.0 {
        return Err(Error::DegenerateTarget);
    }
    Ok(sse / sst)
}

/// Streaming FVU using per-coordinate first and second moments.
#[derive(Debug, Clone, Default)]
pub struct FvuAccumulator {
    n: u64,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    sse: f64,
}

impl FvuAccumulator {
    pub fn push<T: Real>(&mut self, y_hat: &[T], y: &[T]) {
        if self.sum.is_empty() {
            self.sum = vec![0.0; y.len()];
            self.sum_sq = vec![0.0; y.len()];
        }
        self.n += 1;
        for (i, (&a, &b)) in y_hat.iter().zip(y).enumerate() {
            let b = b.f64();
            self.sse += (a.f64() - b).powi(2);
            self.sum[i] += b;
            self.sum_sq[i] += b * b;
        }
    }

    pub fn sse(&self) -> f64 {
        self.sse
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn finish(&self) -> Result<f64> {
        let n = self.n as f64;
        let sst: f64 = self
            .sum
            .iter()
            .zip(&self.sum_sq)
            .map(|(s, s2)| s2 - s * s / n)
            .sum();
        if self.n == 0 || sst <= 0.0 {
            return Err(Error::DegenerateTarget);
        }
        Ok(self.sse / sst)
    }
}
