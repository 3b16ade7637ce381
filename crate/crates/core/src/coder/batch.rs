use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;

use super::forward::{decode, encode};
use super::{CoderConfig, CoderParams};
use crate::error::Result;

/// Rows per parallel work item. Fixed so reductions do not depend on the
/// thread count.
pub const ROW_CHUNK: usize = 256;

/// Eval-mode outputs for a batch of inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchEval {
    pub y_hat: Array2<f32>,
    /// Nonzero latents per row, as (latent index, value).
    pub active: Vec<Vec<(u32, f32)>>,
}

/// Runs the eval-mode forward pass over every row of `x`, optionally forcing
/// the latents flagged in `ablate` to zero.
pub fn evaluate_batch(
    cfg: &CoderConfig,
    params: &CoderParams<f32>,
    x: ArrayView2<f32>,
    ablate: Option<&[bool]>,
) -> Result<BatchEval> {
    let n = x.nrows();
    let x = x.as_standard_layout();
    let xs = x.as_slice().expect("standard layout");
    let d_in = cfg.d_in.max(1);
    let rows: Vec<Result<Vec<(Vec<f32>, Vec<(u32, f32)>)>>> = xs
        .par_chunks(ROW_CHUNK * d_in)
        .map(|chunk| {
            chunk
                .chunks_exact(d_in)
                .map(|row| {
                    let cache = encode(cfg, params, row, None, false)?;
                    let y = decode(cfg, params, &cache, ablate);
                    let active = cache
                        .active_idx
                        .iter()
                        .zip(&cache.active_vals)
                        .filter(|(&i, &v)| v != 0.0 && !ablate.is_some_and(|a| a[i]))
                        .map(|(&i, &v)| (i as u32, v))
                        .collect();
                    Ok((y, active))
                })
                .collect()
        })
        .collect();
    let mut y_hat = Array2::zeros((n, cfg.d_out));
    let mut active = Vec::with_capacity(n);
    let mut r = 0;
    for chunk in rows {
        for (y, a) in chunk? {
            y_hat
                .row_mut(r)
                .as_slice_mut()
                .unwrap()
                .copy_from_slice(&y);
            active.push(a);
            r += 1;
        }
    }
    Ok(BatchEval { y_hat, active })
}
