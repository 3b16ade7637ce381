//! Per-vector forward and analytic backward passes.
//!
//! Batched callers loop over rows with these functions, so batched and
//! per-vector results are identical.

use super::ops::{binarise_scalar, groupmax_indices, sigmoid_ste_slope, topk_indices};
use super::{Activation, CoderConfig, CoderParams};
use crate::error::{Error, Result};
use crate::real::{axpy, dot, Real};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCache<T> {
    /// `w_enc · x + b_enc`
    pub preacts: Vec<T>,
    /// Strictly increasing, exactly `k` entries.
    pub active_idx: Vec<usize>,
    /// Post-activation values at `active_idx`; in {0, 1} for binary coders.
    pub active_vals: Vec<T>,
    /// Row-major `[k, group_size]` softmax of the perturbed group logits,
    /// present only for Gumbel training passes.
    pub gumbel_soft: Option<Vec<T>>,
    pub x: Vec<T>,
}

impl<T: Real> ForwardCache<T> {
    /// Dense latent vector.
    pub fn latents(&self) -> Vec<T> {
        let mut z = vec![T::zero(); self.preacts.len()];
        for (&i, &v) in self.active_idx.iter().zip(&self.active_vals) {
            z[i] = v;
        }
        z
    }
}

/// Encoder half: preactivations, sparse selection and latent values.
pub fn encode<T: Real>(
    cfg: &CoderConfig,
    params: &CoderParams<T>,
    x: &[T],
    rng: Option<&mut Rng>,
    train_mode: bool,
) -> Result<ForwardCache<T>> {
    if x.len() != cfg.d_in {
        return Err(Error::DimMismatch(format!(
            "input length {} vs d_in {}",
            x.len(),
            cfg.d_in
        )));
    }
    let w_enc = params.w_enc.as_slice().expect("contiguous w_enc");
    let preacts: Vec<T> = w_enc
        .chunks_exact(cfg.d_in)
        .zip(params.b_enc.iter())
        .map(|(w, &b)| dot(w, x) + b)
        .collect();

    let (active_idx, gumbel_soft) = if cfg.uses_gumbel() && train_mode {
        let rng = rng.ok_or_else(|| Error::invalid("gumbel training pass needs an rng"))?;
        let (idx, soft) = gumbel_select(&preacts, cfg.k, T::of(cfg.gumbel_temperature), rng);
        (idx, Some(soft))
    } else {
        let idx = match cfg.activation {
            Activation::TopK => topk_indices(&preacts, cfg.k)?,
            Activation::GroupMax => groupmax_indices(&preacts, cfg.k)?,
        };
        (idx, None)
    };

    let active_vals = active_idx
        .iter()
        .map(|&i| {
            if cfg.binary {
                binarise_scalar(preacts[i])
            } else {
                preacts[i]
            }
        })
        .collect();

    Ok(ForwardCache {
        preacts,
        active_idx,
        active_vals,
        gumbel_soft,
        x: x.to_vec(),
    })
}

/// Samples one survivor per group with the Gumbel-max trick and returns the
/// per-group softmax of the perturbed logits.
fn gumbel_select<T: Real>(preacts: &[T], k: usize, temperature: T, rng: &mut Rng) -> (Vec<usize>, Vec<T>) {
    let size = preacts.len() / k;
    let mut idx = Vec::with_capacity(k);
    let mut soft = Vec::with_capacity(preacts.len());
    let mut logits = vec![T::zero(); size];
    for g in 0..k {
        let group = &preacts[g * size..(g + 1) * size];
        for (l, &a) in logits.iter_mut().zip(group) {
            *l = (a + T::of(rng.gumbel())) / temperature;
        }
        let mut best = 0;
        for (j, &l) in logits.iter().enumerate() {
            if l > logits[best] {
                best = j;
            }
        }
        idx.push(g * size + best);
        let max = logits[best];
        let exps: Vec<T> = logits.iter().map(|&l| (l - max).exp()).collect();
        let z: T = exps.iter().copied().sum();
        soft.extend(exps.into_iter().map(|e| e / z));
    }
    (idx, soft)
}

/// Decoder half. Latents flagged in `ablate` are forced to zero.
pub fn decode<T: Real>(
    cfg: &CoderConfig,
    params: &CoderParams<T>,
    cache: &ForwardCache<T>,
    ablate: Option<&[bool]>,
) -> Vec<T> {
    let mut y = params.b_dec.to_vec();
    if let Some(w_skip) = &params.w_skip {
        let w = w_skip.as_slice().expect("contiguous w_skip");
        for (yo, row) in y.iter_mut().zip(w.chunks_exact(cfg.d_in)) {
            *yo = *yo + dot(row, &cache.x);
        }
    }
    let w_dec = params.w_dec.as_slice().expect("contiguous w_dec");
    for (&i, &v) in cache.active_idx.iter().zip(&cache.active_vals) {
        if ablate.is_some_and(|a| a[i]) || v == T::zero() {
            continue;
        }
        axpy(v, &w_dec[i * cfg.d_out..(i + 1) * cfg.d_out], &mut y);
    }
    y
}

/// Full forward pass returning the reconstruction and the cache for backward.
pub fn forward<T: Real>(
    cfg: &CoderConfig,
    params: &CoderParams<T>,
    x: &[T],
    rng: Option<&mut Rng>,
    train_mode: bool,
) -> Result<(Vec<T>, ForwardCache<T>)> {
    let cache = encode(cfg, params, x, rng, train_mode)?;
    Ok((decode(cfg, params, &cache, None), cache))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub params: CoderParams<T>,
    pub x: Vec<T>,
}

/// Gradients of a loss with respect to all parameters and the input, given
/// the gradient with respect to the reconstruction.
pub fn backward<T: Real>(
    cfg: &CoderConfig,
    params: &CoderParams<T>,
    cache: &ForwardCache<T>,
    grad_out: &[T],
) -> Result<Gradients<T>> {
    let mut grads = params.zeros_like();
    let mut gx = vec![T::zero(); cfg.d_in];
    backward_into(cfg, params, cache, grad_out, &mut grads, Some(&mut gx))?;
    Ok(Gradients { params: grads, x: gx })
}

/// Accumulates parameter gradients into `grads` (and the input gradient
/// into `grad_x` when given).
pub fn backward_into<T: Real>(
    cfg: &CoderConfig,
    params: &CoderParams<T>,
    cache: &ForwardCache<T>,
    grad_out: &[T],
    grads: &mut CoderParams<T>,
    mut grad_x: Option<&mut [T]>,
) -> Result<()> {
    let (d_in, d_out) = (cfg.d_in, cfg.d_out);
    if grad_out.len() != d_out
        || cache.preacts.len() != cfg.n_latents
        || cache.x.len() != d_in
        || cache.active_idx.len() != cache.active_vals.len()
    {
        return Err(Error::invalid("forward cache does not match coder dims"));
    }
    let gumbel = cfg.uses_gumbel();
    if gumbel && cache.gumbel_soft.is_none() {
        return Err(Error::invalid(
            "gumbel backward needs a cache from a training-mode forward",
        ));
    }

    for (b, &g) in grads.b_dec.iter_mut().zip(grad_out) {
        *b = *b + g;
    }
    if let (Some(gw), Some(w)) = (&mut grads.w_skip, &params.w_skip) {
        let gw = gw.as_slice_mut().unwrap();
        for (row, &g) in gw.chunks_exact_mut(d_in).zip(grad_out) {
            axpy(g, &cache.x, row);
        }
        if let Some(gx) = grad_x.as_deref_mut() {
            let w = w.as_slice().unwrap();
            for (row, &g) in w.chunks_exact(d_in).zip(grad_out) {
                axpy(g, row, gx);
            }
        }
    }

    let w_dec = params.w_dec.as_slice().unwrap();
    let gw_dec = grads.w_dec.as_slice_mut().unwrap();
    for (&i, &v) in cache.active_idx.iter().zip(&cache.active_vals) {
        if v != T::zero() {
            axpy(v, grad_out, &mut gw_dec[i * d_out..(i + 1) * d_out]);
        }
    }

    let dec_row = |i: usize| &w_dec[i * d_out..(i + 1) * d_out];
    // (latent index, gradient w.r.t. its preactivation)
    let mut pre_grads: Vec<(usize, T)> = Vec::with_capacity(cache.active_idx.len());
    if gumbel {
        // straight-through: hard one-hot forward, softmax Jacobian backward
        let soft = cache.gumbel_soft.as_ref().unwrap();
        let size = cfg.group_size();
        let tau = T::of(cfg.gumbel_temperature);
        let mut g_lat = vec![T::zero(); size];
        for g in 0..cfg.k {
            let s = &soft[g * size..(g + 1) * size];
            for (j, gl) in g_lat.iter_mut().enumerate() {
                *gl = dot(dec_row(g * size + j), grad_out);
            }
            let mean: T = s.iter().zip(&g_lat).map(|(&p, &gl)| p * gl).sum();
            for j in 0..size {
                pre_grads.push((g * size + j, s[j] * (g_lat[j] - mean) / tau));
            }
        }
    } else {
        let tau = T::of(cfg.ste_temperature);
        for &i in &cache.active_idx {
            let g_lat = dot(dec_row(i), grad_out);
            let g = if cfg.binary {
                g_lat * sigmoid_ste_slope(cache.preacts[i], tau)
            } else {
                g_lat
            };
            pre_grads.push((i, g));
        }
    }

    let gw_enc = grads.w_enc.as_slice_mut().unwrap();
    let w_enc = params.w_enc.as_slice().unwrap();
    for &(i, g) in &pre_grads {
        grads.b_enc[i] = grads.b_enc[i] + g;
        axpy(g, &cache.x, &mut gw_enc[i * d_in..(i + 1) * d_in]);
        if let Some(gx) = grad_x.as_deref_mut() {
            axpy(g, &w_enc[i * d_in..(i + 1) * d_in], gx);
        }
    }
    Ok(())
}
