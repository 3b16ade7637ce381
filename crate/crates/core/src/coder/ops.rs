//! Sparsifying activations and the binarisation step.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::real::Real;

/// Orders by value descending, then index ascending. NaN sorts last.
#[inline]
fn rank<T: Real>(v: &[T], a: usize, b: usize) -> Ordering {
    let (x, y) = (v[a], v[b]);
    match (x.is_nan(), y.is_nan()) {
        (false, false) => y.partial_cmp(&x).unwrap_or(Ordering::Equal),
        (true, false) => Ordering::Greater,
        (false, true) => Ordering::Less,
        (true, true) => Ordering::Equal,
    }
    .then(a.cmp(&b))
}

/// Sorted indices of the `k` largest entries, ties to the lowest index.
pub fn topk_indices<T: Real>(v: &[T], k: usize) -> Result<Vec<usize>> {
    if k > v.len() {
        return Err(Error::invalid(format!("k={k} exceeds length {}", v.len())));
    }
    if k == 0 {
        return Ok(Vec::new());
    }
    let mut idx: Vec<usize> = (0..v.len()).collect();
    if k < v.len() {
        idx.select_nth_unstable_by(k - 1, |&a, &b| rank(v, a, b));
        idx.truncate(k);
    }
    idx.sort_unstable();
    Ok(idx)
}

/// Argmax of each of `k` contiguous equal groups, ties to the lowest index.
pub fn groupmax_indices<T: Real>(v: &[T], k: usize) -> Result<Vec<usize>> {
    if k == 0 || v.len() % k != 0 {
        return Err(Error::invalid(format!(
            "length {} not divisible into {k} groups",
            v.len()
        )));
    }
    let size = v.len() / k;
    Ok((0..k)
        .map(|g| {
            let start = g * size;
            (start..start + size)
                .min_by(|&a, &b| rank(v, a, b))
                .expect("non-empty group")
        })
        .collect())
}

fn mask<T: Real>(v: &[T], idx: &[usize]) -> Vec<T> {
    let mut out = vec![T::zero(); v.len()];
    for &i in idx {
        out[i] = v[i];
    }
    out
}

/// Keeps the `k` largest values (by value, not magnitude) and zeros the rest.
pub fn topk<T: Real>(v: &[T], k: usize) -> Result<(Vec<T>, Vec<usize>)> {
    let idx = topk_indices(v, k)?;
    Ok((mask(v, &idx), idx))
}

/// Keeps the largest value in each of `k` contiguous groups.
pub fn groupmax<T: Real>(v: &[T], k: usize) -> Result<(Vec<T>, Vec<usize>)> {
    let idx = groupmax_indices(v, k)?;
    Ok((mask(v, &idx), idx))
}

#[inline]
pub fn binarise_scalar<T: Real>(a: T) -> T {
    if a > T::zero() {
        T::one()
    } else {
        T::zero()
    }
}

/// 1 for strictly positive entries, 0 otherwise.
pub fn binarise<T: Real>(v: &[T]) -> Vec<T> {
    v.iter().map(|&a| binarise_scalar(a)).collect()
}

#[inline]
pub fn sigmoid<T: Real>(a: T) -> T {
    if a >= T::zero() {
        T::one() / (T::one() + (-a).exp())
    } else {
        let e = a.exp();
        e / (T::one() + e)
    }
}

/// Derivative of `σ(a / τ)` with respect to `a`.
#[inline]
pub fn sigmoid_ste_slope<T: Real>(a: T, temperature: T) -> T {
    let s = sigmoid(a / temperature);
    s * (T::one() - s) / temperature
}
