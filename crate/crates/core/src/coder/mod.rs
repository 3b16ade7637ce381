//! Sparse coders: SAEs, transcoders and skip-transcoders, each with
//! continuous or binary latents selected by TopK or GroupMax.

mod batch;
mod forward;
mod loss;
mod ops;

pub use batch::{evaluate_batch, BatchEval, ROW_CHUNK};
pub use forward::{backward, backward_into, decode, encode, forward, ForwardCache, Gradients};
pub use loss::{fvu, mse_grad, mse_loss, FvuAccumulator};
pub use ops::{
    binarise, groupmax, groupmax_indices, sigmoid, sigmoid_ste_slope, topk, topk_indices,
};

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CoderKind {
    Sae,
    Transcoder,
    SkipTranscoder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    TopK,
    GroupMax,
}

/// Gradient rule used through the binarisation step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Estimator {
    SigmoidSte,
    GumbelSoftmax,
}

macro_rules! str_enum {
    ($ty:ident { $($variant:ident => $name:literal),+ $(,)? }) => {
        impl $ty {
            pub fn as_str(self) -> &'static str {
                match self { $($ty::$variant => $name),+ }
            }

            pub(crate) fn code(self) -> u8 {
                [$($ty::$variant),+].iter().position(|v| *v == self).unwrap() as u8
            }

            pub(crate) fn from_code(c: u8) -> Option<Self> {
                [$($ty::$variant),+].get(c as usize).copied()
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok($ty::$variant),)+
                    other => Err(Error::invalid(format!(
                        concat!("unknown ", stringify!($ty), " `{}`"), other
                    ))),
                }
            }
        }
    };
}

str_enum!(CoderKind { Sae => "sae", Transcoder => "transcoder", SkipTranscoder => "skip_transcoder" });
str_enum!(Activation { TopK => "topk", GroupMax => "groupmax" });
str_enum!(Estimator { SigmoidSte => "sigmoid_ste", GumbelSoftmax => "gumbel_softmax" });

#[derive(Debug, Clone, PartialEq)]
pub struct CoderConfig {
    pub kind: CoderKind,
    pub activation: Activation,
    pub binary: bool,
    /// Only consulted for binary coders.
    pub estimator: Estimator,
    pub d_in: usize,
    pub d_out: usize,
    pub n_latents: usize,
    pub k: usize,
    pub ste_temperature: f64,
    pub gumbel_temperature: f64,
}

impl CoderConfig {
    pub fn new(kind: CoderKind, d_in: usize, d_out: usize, n_latents: usize, k: usize) -> Self {
        Self {
            kind,
            activation: Activation::TopK,
            binary: false,
            estimator: Estimator::SigmoidSte,
            d_in,
            d_out,
            n_latents,
            k,
            ste_temperature: 2.0,
            gumbel_temperature: 1.0,
        }
    }

    pub fn sae(d: usize, n_latents: usize, k: usize) -> Self {
        Self::new(CoderKind::Sae, d, d, n_latents, k)
    }

    pub fn binary(mut self) -> Self {
        self.binary = true;
        self
    }

    pub fn groupmax(mut self) -> Self {
        self.activation = Activation::GroupMax;
        self
    }

    /// Binary GroupMax coder trained through the Gumbel-Softmax estimator.
    pub fn gumbel(mut self) -> Self {
        self.binary = true;
        self.activation = Activation::GroupMax;
        self.estimator = Estimator::GumbelSoftmax;
        self
    }

    pub fn unit_norm_decoder(&self) -> bool {
        self.kind == CoderKind::Sae
    }

    pub fn has_skip(&self) -> bool {
        self.kind == CoderKind::SkipTranscoder
    }

    pub fn uses_gumbel(&self) -> bool {
        self.binary && self.estimator == Estimator::GumbelSoftmax
    }

    pub fn group_size(&self) -> usize {
        self.n_latents / self.k.max(1)
    }

    /// Short label such as `binary-skip_transcoder-topk`.
    pub fn variant_name(&self) -> String {
        let mut s = format!(
            "{}-{}-{}",
            if self.binary { "binary" } else { "continuous" },
            self.kind,
            self.activation
        );
        if self.uses_gumbel() {
            s.push_str("-gumbel");
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_in == 0 || self.d_out == 0 || self.n_latents == 0 {
            return Err(Error::invalid("coder dims must be positive"));
        }
        if self.k == 0 || self.k > self.n_latents {
            return Err(Error::invalid(format!(
                "k={} must be in 1..={}",
                self.k, self.n_latents
            )));
        }
        if self.activation == Activation::GroupMax && self.n_latents % self.k != 0 {
            return Err(Error::invalid(format!(
                "groupmax needs n_latents={} divisible by k={}",
                self.n_latents, self.k
            )));
        }
        if self.kind == CoderKind::Sae && self.d_in != self.d_out {
            return Err(Error::invalid("an SAE needs d_in == d_out"));
        }
        if self.binary
            && self.estimator == Estimator::GumbelSoftmax
            && self.activation != Activation::GroupMax
        {
            return Err(Error::invalid("gumbel_softmax requires groupmax"));
        }
        if !(self.ste_temperature > 0.0 && self.ste_temperature.is_finite()) {
            return Err(Error::invalid("ste_temperature must be positive"));
        }
        if !(self.gumbel_temperature > 0.0 && self.gumbel_temperature.is_finite()) {
            return Err(Error::invalid("gumbel_temperature must be positive"));
        }
        Ok(())
    }
}

/// All trainable tensors of one coder. Decoder rows are per latent.
#[derive(Debug, Clone, PartialEq)]
pub struct CoderParams<T> {
    /// `[n_latents, d_in]`
    pub w_enc: Array2<T>,
    pub b_enc: Array1<T>,
    /// `[n_latents, d_out]`
    pub w_dec: Array2<T>,
    pub b_dec: Array1<T>,
    /// `[d_out, d_in]`, skip-transcoders only.
    pub w_skip: Option<Array2<T>>,
}

pub const TENSOR_NAMES: [&str; 5] = ["w_enc", "b_enc", "w_dec", "b_dec", "w_skip"];

/// Index of `w_dec` in [`CoderParams::slices`].
pub const W_DEC_SLOT: usize = 2;

impl<T: Real> CoderParams<T> {
    pub fn zeros(cfg: &CoderConfig) -> Self {
        Self {
            w_enc: Array2::zeros((cfg.n_latents, cfg.d_in)),
            b_enc: Array1::zeros(cfg.n_latents),
            w_dec: Array2::zeros((cfg.n_latents, cfg.d_out)),
            b_dec: Array1::zeros(cfg.d_out),
            w_skip: cfg.has_skip().then(|| Array2::zeros((cfg.d_out, cfg.d_in))),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            w_enc: Array2::zeros(self.w_enc.raw_dim()),
            b_enc: Array1::zeros(self.b_enc.raw_dim()),
            w_dec: Array2::zeros(self.w_dec.raw_dim()),
            b_dec: Array1::zeros(self.b_dec.raw_dim()),
            w_skip: self.w_skip.as_ref().map(|w| Array2::zeros(w.raw_dim())),
        }
    }

    pub fn check(&self, cfg: &CoderConfig) -> Result<()> {
        let ok = self.w_enc.dim() == (cfg.n_latents, cfg.d_in)
            && self.b_enc.len() == cfg.n_latents
            && self.w_dec.dim() == (cfg.n_latents, cfg.d_out)
            && self.b_dec.len() == cfg.d_out
            && match &self.w_skip {
                Some(w) => cfg.has_skip() && w.dim() == (cfg.d_out, cfg.d_in),
                None => !cfg.has_skip(),
            };
        if ok {
            Ok(())
        } else {
            Err(Error::DimMismatch(format!(
                "parameters do not match coder {} (d_in={}, d_out={}, n_latents={})",
                cfg.variant_name(),
                cfg.d_in,
                cfg.d_out,
                cfg.n_latents
            )))
        }
    }

    /// Named flat views in checkpoint order; `w_skip` last when present.
    pub fn named(&self) -> Vec<(&'static str, &[T])> {
        let mut v = vec![
            ("w_enc", self.w_enc.as_slice().unwrap()),
            ("b_enc", self.b_enc.as_slice().unwrap()),
            ("w_dec", self.w_dec.as_slice().unwrap()),
            ("b_dec", self.b_dec.as_slice().unwrap()),
        ];
        if let Some(w) = &self.w_skip {
            v.push(("w_skip", w.as_slice().unwrap()));
        }
        v
    }

    pub fn slices(&self) -> Vec<&[T]> {
        self.named().into_iter().map(|(_, s)| s).collect()
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [T]> {
        let mut v = vec![
            self.w_enc.as_slice_mut().unwrap(),
            self.b_enc.as_slice_mut().unwrap(),
            self.w_dec.as_slice_mut().unwrap(),
            self.b_dec.as_slice_mut().unwrap(),
        ];
        if let Some(w) = &mut self.w_skip {
            v.push(w.as_slice_mut().unwrap());
        }
        v
    }

    /// `self += other`
    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.slices_mut().into_iter().zip(other.slices()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x = *x + *y;
            }
        }
    }

    pub fn scale(&mut self, s: T) {
        for a in self.slices_mut() {
            a.iter_mut().for_each(|x| *x = *x * s);
        }
    }

    pub fn cast<U: Real>(&self) -> CoderParams<U> {
        let c2 = |a: &Array2<T>| a.mapv(|v| U::of(v.f64()));
        let c1 = |a: &Array1<T>| a.mapv(|v| U::of(v.f64()));
        CoderParams {
            w_enc: c2(&self.w_enc),
            b_enc: c1(&self.b_enc),
            w_dec: c2(&self.w_dec),
            b_dec: c1(&self.b_dec),
            w_skip: self.w_skip.as_ref().map(c2),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }
}
