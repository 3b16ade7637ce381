//! Reference implementations used as test oracles. Written with plain loops
//! over `Vec<f64>` and no library numerics, so they can disagree with the
//! library.
#![allow(dead_code)]

use sparse_coders::coder::{
    backward, encode, CoderConfig, CoderKind, CoderParams, ForwardCache,
};
use sparse_coders::rng::Rng;

pub fn naive_topk(v: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    // stable sort by value descending keeps lower indices first among ties
    order.sort_by(|&a, &b| v[b].partial_cmp(&v[a]).unwrap());
    let mut idx = order[..k].to_vec();
    idx.sort();
    idx
}

pub fn naive_groupmax(v: &[f64], k: usize) -> Vec<usize> {
    let size = v.len() / k;
    let mut idx = Vec::new();
    for g in 0..k {
        let mut best = g * size;
        for i in g * size..(g + 1) * size {
            if v[i] > v[best] {
                best = i;
            }
        }
        idx.push(best);
    }
    idx
}

pub fn naive_binarise(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&a| if a > 0.0 { 1.0 } else { 0.0 }).collect()
}

pub fn naive_sigmoid(a: f64) -> f64 {
    1.0 / (1.0 + (-a).exp())
}

pub fn softmax(v: &[f64]) -> Vec<f64> {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|a| (a - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.iter().map(|x| x / z).collect()
}

/// Parameters as nested vectors.
#[derive(Debug, Clone)]
pub struct Flat {
    pub w_enc: Vec<Vec<f64>>,
    pub b_enc: Vec<f64>,
    pub w_dec: Vec<Vec<f64>>,
    pub b_dec: Vec<f64>,
    pub w_skip: Option<Vec<Vec<f64>>>,
}

fn rows(a: &ndarray::Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

impl Flat {
    pub fn from_params(p: &CoderParams<f64>) -> Self {
        Self {
            w_enc: rows(&p.w_enc),
            b_enc: p.b_enc.to_vec(),
            w_dec: rows(&p.w_dec),
            b_dec: p.b_dec.to_vec(),
            w_skip: p.w_skip.as_ref().map(rows),
        }
    }

    /// Every scalar parameter, in the library's tensor order.
    pub fn entries_mut(&mut self) -> Vec<&mut f64> {
        let mut out: Vec<&mut f64> = Vec::new();
        out.extend(self.w_enc.iter_mut().flatten());
        out.extend(self.b_enc.iter_mut());
        out.extend(self.w_dec.iter_mut().flatten());
        out.extend(self.b_dec.iter_mut());
        if let Some(w) = &mut self.w_skip {
            out.extend(w.iter_mut().flatten());
        }
        out
    }

    pub fn preacts(&self, x: &[f64]) -> Vec<f64> {
        self.w_enc
            .iter()
            .zip(&self.b_enc)
            .map(|(w, b)| w.iter().zip(x).map(|(a, c)| a * c).sum::<f64>() + b)
            .collect()
    }
}

pub fn flat_grads(p: &CoderParams<f64>) -> Vec<f64> {
    let mut f = Flat::from_params(p);
    f.entries_mut().into_iter().map(|v| *v).collect()
}

/// The non-differentiable parts of one forward pass, frozen at a base point.
#[derive(Debug, Clone)]
pub struct Frozen {
    pub selected: Vec<usize>,
    /// Hard latent value minus its smooth surrogate at the base point.
    pub offsets: Vec<f64>,
    /// Gumbel noise per latent (Gumbel estimator only).
    pub noise: Option<Vec<f64>>,
}

/// Freezes the selection the oracle itself derives at `x`. For Gumbel
/// passes the noise is recovered from the library cache's softmax (it is
/// only identifiable up to a per-group constant, which softmax ignores).
pub fn freeze(cfg: &CoderConfig, p: &Flat, x: &[f64], cache: &ForwardCache<f64>) -> Frozen {
    let a = p.preacts(x);
    if cfg.uses_gumbel() {
        let soft = cache.gumbel_soft.as_ref().expect("gumbel cache");
        let tau = cfg.gumbel_temperature;
        let noise: Vec<f64> = soft
            .iter()
            .zip(&a)
            .map(|(s, a)| tau * s.ln() - a)
            .collect();
        let perturbed: Vec<f64> = a.iter().zip(&noise).map(|(a, g)| a + g).collect();
        let selected = naive_groupmax(&perturbed, cfg.k);
        let size = cfg.n_latents / cfg.k;
        let mut offsets = Vec::new();
        for g in 0..cfg.k {
            let group: Vec<f64> = (g * size..(g + 1) * size).map(|i| perturbed[i] / tau).collect();
            let s = softmax(&group);
            for (j, sj) in s.iter().enumerate() {
                let i = g * size + j;
                let hard = if i == selected[g] && a[i] > 0.0 { 1.0 } else { 0.0 };
                offsets.push(hard - sj);
            }
        }
        return Frozen {
            selected,
            offsets,
            noise: Some(noise),
        };
    }
    let selected = match cfg.activation {
        sparse_coders::coder::Activation::TopK => naive_topk(&a, cfg.k),
        sparse_coders::coder::Activation::GroupMax => naive_groupmax(&a, cfg.k),
    };
    let offsets = selected
        .iter()
        .map(|&i| {
            if cfg.binary {
                let hard = if a[i] > 0.0 { 1.0 } else { 0.0 };
                hard - naive_sigmoid(a[i] / cfg.ste_temperature)
            } else {
                0.0
            }
        })
        .collect();
    Frozen {
        selected,
        offsets,
        noise: None,
    }
}

/// Smooth surrogate of the coder output with the frozen selection.
pub fn surrogate_output(cfg: &CoderConfig, p: &Flat, x: &[f64], fz: &Frozen) -> Vec<f64> {
    let a = p.preacts(x);
    let mut latents = vec![0.0; cfg.n_latents];
    if let Some(noise) = &fz.noise {
        let size = cfg.n_latents / cfg.k;
        let tau = cfg.gumbel_temperature;
        for g in 0..cfg.k {
            let group: Vec<f64> = (g * size..(g + 1) * size)
                .map(|i| (a[i] + noise[i]) / tau)
                .collect();
            for (j, sj) in softmax(&group).iter().enumerate() {
                let i = g * size + j;
                latents[i] = sj + fz.offsets[i];
            }
        }
    } else {
        for (&i, &off) in fz.selected.iter().zip(&fz.offsets) {
            latents[i] = if cfg.binary {
                naive_sigmoid(a[i] / cfg.ste_temperature) + off
            } else {
                a[i]
            };
        }
    }
    let mut y = p.b_dec.clone();
    if let Some(ws) = &p.w_skip {
        for (o, row) in y.iter_mut().zip(ws) {
            *o += row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
    }
    for (i, z) in latents.iter().enumerate() {
        for (o, w) in y.iter_mut().zip(&p.w_dec[i]) {
            *o += z * w;
        }
    }
    y
}

pub fn sq_loss(y_hat: &[f64], y: &[f64]) -> f64 {
    y_hat.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

pub fn random_params(cfg: &CoderConfig, rng: &mut Rng) -> CoderParams<f64> {
    let mut p = CoderParams::<f64>::zeros(cfg);
    p.w_enc.mapv_inplace(|_| rng.normal());
    p.b_enc.mapv_inplace(|_| 0.3 * rng.normal());
    p.w_dec.mapv_inplace(|_| rng.normal() * 0.5);
    p.b_dec.mapv_inplace(|_| 0.3 * rng.normal());
    if let Some(w) = &mut p.w_skip {
        w.mapv_inplace(|_| 0.5 * rng.normal());
    }
    p
}

/// Result of comparing analytic gradients against central differences.
#[derive(Debug, Clone)]
pub struct GradCheck {
    pub param_rel_err: f64,
    pub input_rel_err: f64,
    pub hard_output_matches: bool,
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Checks the library's backward pass for squared error against central
/// differences of the oracle surrogate, for parameters and the input.
pub fn check_gradients(cfg: &CoderConfig, seed: u64, h: f64) -> GradCheck {
    let mut rng = Rng::new(seed);
    let params = random_params(cfg, &mut rng);
    let x: Vec<f64> = (0..cfg.d_in).map(|_| rng.normal()).collect();
    let y: Vec<f64> = (0..cfg.d_out).map(|_| rng.normal()).collect();

    let mut noise_rng = Rng::new(seed ^ 0xabc);
    let cache = encode(cfg, &params, &x, Some(&mut noise_rng), true).unwrap();
    let y_hat = sparse_coders::coder::decode(cfg, &params, &cache, None);
    let grad_out: Vec<f64> = y_hat.iter().zip(&y).map(|(a, b)| 2.0 * (a - b)).collect();
    let grads = backward(cfg, &params, &cache, &grad_out).unwrap();

    let flat = Flat::from_params(&params);
    let fz = freeze(cfg, &flat, &x, &cache);
    let oracle_hard = surrogate_output(cfg, &flat, &x, &fz);
    let hard_output_matches = oracle_hard
        .iter()
        .zip(&y_hat)
        .all(|(a, b)| (a - b).abs() <= 1e-9 * (1.0 + b.abs()));

    let loss = |p: &Flat, x: &[f64]| sq_loss(&surrogate_output(cfg, p, x, &fz), &y);
    let n = flat.clone().entries_mut().len();
    let mut numeric = Vec::with_capacity(n);
    for i in 0..n {
        let mut plus = flat.clone();
        *plus.entries_mut()[i] += h;
        let mut minus = flat.clone();
        *minus.entries_mut()[i] -= h;
        numeric.push((loss(&plus, &x) - loss(&minus, &x)) / (2.0 * h));
    }
    let mut numeric_x = Vec::with_capacity(cfg.d_in);
    for i in 0..cfg.d_in {
        let (mut xp, mut xm) = (x.clone(), x.clone());
        xp[i] += h;
        xm[i] -= h;
        numeric_x.push((loss(&flat, &xp) - loss(&flat, &xm)) / (2.0 * h));
    }
    GradCheck {
        param_rel_err: rel_err(&flat_grads(&grads.params), &numeric),
        input_rel_err: rel_err(&grads.x, &numeric_x),
        hard_output_matches,
    }
}

/// Every architecture × activation combination, plus the Gumbel variants,
/// at gradient-check size.
pub fn gradient_variants() -> Vec<CoderConfig> {
    let mut out = Vec::new();
    for kind in [CoderKind::Sae, CoderKind::Transcoder, CoderKind::SkipTranscoder] {
        let d_out = if kind == CoderKind::Sae { 5 } else { 4 };
        for binary in [false, true] {
            let mut topk = CoderConfig::new(kind, 5, d_out, 8, 3);
            let mut gm = CoderConfig::new(kind, 5, d_out, 8, 2).groupmax();
            if binary {
                topk = topk.binary();
                gm = gm.binary();
            }
            out.push(topk);
            out.push(gm);
        }
        out.push(CoderConfig::new(kind, 5, d_out, 8, 2).gumbel());
    }
    out
}

/// Hand recurrence of bias-corrected Adam with a per-step learning rate.
pub struct AdamOracle {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: i32,
}

impl AdamOracle {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, p: &mut [f64], g: &[f64], lr: f64) {
        self.t += 1;
        for i in 0..p.len() {
            self.m[i] = 0.9 * self.m[i] + 0.1 * g[i];
            self.v[i] = 0.999 * self.v[i] + 0.001 * g[i] * g[i];
            let mh = self.m[i] / (1.0 - 0.9f64.powi(self.t));
            let vh = self.v[i] / (1.0 - 0.999f64.powi(self.t));
            p[i] -= lr * mh / (vh.sqrt() + 1e-8);
        }
    }
}

/// Linear warmup then linear decay to zero.
pub fn warmup_decay(t: u64, peak: f64, warmup: u64, total: u64) -> f64 {
    if t < warmup {
        peak * t as f64 / warmup as f64
    } else {
        peak * (total - t) as f64 / (total - warmup) as f64
    }
}

/// Gradient of `Σ c_i (p_i − target_i)^4 + (p_i − target_i)^2`, a smooth
/// non-quadratic test objective.
pub fn test_objective_grad(p: &[f64], target: &[f64], c: &[f64]) -> Vec<f64> {
    p.iter()
        .zip(target)
        .zip(c)
        .map(|((p, t), c)| {
            let d = p - t;
            4.0 * c * d * d * d + 2.0 * d
        })
        .collect()
}

/// Relative difference, with an absolute floor near zero.
pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}
