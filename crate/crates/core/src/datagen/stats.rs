use ndarray::ArrayView2;

use crate::error::{Error, Result};
use crate::real::Real;

/// Arithmetic mean of a stream of equal-length vectors, accumulated in f64.
pub fn empirical_mean<'a, T, I>(rows: I) -> Result<Vec<f64>>
where
    T: Real,
    I: IntoIterator<Item = &'a [T]>,
{
    let mut sum: Vec<f64> = Vec::new();
    let mut n = 0u64;
    for row in rows {
        if n == 0 {
            sum = vec![0.0; row.len()];
        } else if row.len() != sum.len() {
            return Err(Error::DimMismatch(format!(
                "row length {} vs {}",
                row.len(),
                sum.len()
            )));
        }
        for (s, v) in sum.iter_mut().zip(row) {
            *s += v.f64();
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::invalid("empirical mean of an empty stream"));
    }
    Ok(sum.into_iter().map(|s| s / n as f64).collect())
}

pub fn summed_distance<T: Real>(points: ArrayView2<T>, center: &[f64]) -> f64 {
    points
        .rows()
        .into_iter()
        .map(|p| {
            p.iter()
                .zip(center)
                .map(|(a, c)| (a.f64() - c).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .sum()
}

/// Weiszfeld iteration started from the arithmetic mean.
///
/// Returns a data point directly if an iterate lands within 1e-12 of it.
pub fn geometric_median<T: Real>(points: ArrayView2<T>, max_iter: usize, tol: f64) -> Result<Vec<f64>> {
    if points.nrows() == 0 {
        return Err(Error::invalid("geometric median of an empty set"));
    }
    if !(tol > 0.0) {
        return Err(Error::invalid("tol must be positive"));
    }
    let d = points.ncols();
    let mut current = vec![0.0; d];
    for r in points.rows() {
        for (a, v) in current.iter_mut().zip(r) {
            *a += v.f64();
        }
    }
    current.iter_mut().for_each(|a| *a /= points.nrows() as f64);
    for _ in 0..max_iter {
        let mut num = vec![0.0; d];
        let mut den = 0.0;
        for p in points.rows() {
            let dist = p
                .iter()
                .zip(&current)
                .map(|(a, c)| (a.f64() - c).powi(2))
                .sum::<f64>()
                .sqrt();
            if dist < 1e-12 {
                return Ok(p.iter().map(|a| a.f64()).collect());
            }
            let w = 1.0 / dist;
            den += w;
            for (n, a) in num.iter_mut().zip(p) {
                *n += w * a.f64();
            }
        }
        let next: Vec<f64> = num.into_iter().map(|n| n / den).collect();
        let step = next
            .iter()
            .zip(&current)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        current = next;
        if step < tol {
            break;
        }
    }
    Ok(current)
}
