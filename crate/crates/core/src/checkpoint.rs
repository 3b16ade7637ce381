//! Checkpoint container.
//!
//! Layout (little-endian): `"SBCK"`, version `u16`, the coder config in fixed
//! field order (kind, activation, binary, estimator, unit_norm_decoder as
//! `u8`; d_in, d_out, n_latents, k as `u32`; STE and Gumbel temperatures as
//! `f64`), step and token counters (`u64`), optimizer scalars, then a `u32`
//! tensor count followed by tensors, each as a `u32`-length name tag, `u32`
//! rows, `u32` cols and row-major `f32` data. Parameters come first
//! (`w_enc`, `b_enc`, `w_dec`, `b_dec`, `w_skip`), optimizer state after
//! (`adam.m.*`, `adam.v.*` or `signum.z.*`, `signum.x_avg.*`).

use std::path::Path;

use crate::binio::{read_file, LeReader, LeWriter};
use crate::coder::{Activation, CoderConfig, CoderKind, CoderParams, Estimator};
use crate::error::{Error, Result};
use crate::optim::{Adam, LrSchedule, Optimizer, Signum};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"SBCK";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: CoderConfig,
    /// Parameters at the optimizer's current iterate.
    pub params: CoderParams<f32>,
    pub step: u64,
    pub tokens: u64,
    pub optimizer: Option<Optimizer<f32>>,
}

impl Checkpoint {
    /// Parameters to evaluate (the schedule-free average under Signum).
    pub fn eval_params(&self) -> CoderParams<f32> {
        match &self.optimizer {
            Some(opt) => opt.eval_params(&self.params),
            None => self.params.clone(),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.params.check(&self.config)?;
        let mut w = LeWriter::default();
        w.bytes(&CHECKPOINT_MAGIC);
        w.u16(CHECKPOINT_VERSION);
        let c = &self.config;
        w.u8(c.kind.code());
        w.u8(c.activation.code());
        w.u8(c.binary as u8);
        w.u8(c.estimator.code());
        w.u8(c.unit_norm_decoder() as u8);
        for d in [c.d_in, c.d_out, c.n_latents, c.k] {
            w.u32(d as u32);
        }
        w.f64(c.ste_temperature);
        w.f64(c.gumbel_temperature);
        w.u64(self.step);
        w.u64(self.tokens);

        let names: Vec<&'static str> = self.params.named().iter().map(|(n, _)| *n).collect();
        let shapes = tensor_shapes(&self.params);
        let mut tensors: Vec<(String, (usize, usize), &[f32])> = self
            .params
            .named()
            .into_iter()
            .zip(&shapes)
            .map(|((n, s), &sh)| (n.to_string(), sh, s))
            .collect();

        match &self.optimizer {
            None => w.u8(0),
            Some(Optimizer::Adam(a)) => {
                w.u8(1);
                w.u64(a.t);
                w.f64(a.beta1);
                w.f64(a.beta2);
                w.f64(a.eps);
                match a.schedule {
                    LrSchedule::Constant(lr) => {
                        w.u8(0);
                        w.f64(lr);
                    }
                    LrSchedule::WarmupDecay {
                        peak_lr,
                        warmup_steps,
                        total_steps,
                    } => {
                        w.u8(1);
                        w.f64(peak_lr);
                        w.u64(warmup_steps);
                        w.u64(total_steps);
                    }
                }
                for (prefix, state) in [("adam.m", &a.m), ("adam.v", &a.v)] {
                    for ((n, sh), s) in names.iter().zip(&shapes).zip(state) {
                        tensors.push((format!("{prefix}.{n}"), *sh, s));
                    }
                }
            }
            Some(Optimizer::Signum(s)) => {
                w.u8(2);
                w.u64(s.t);
                w.f64(s.lr);
                w.f64(s.momentum);
                for (prefix, state) in [("signum.z", &s.z), ("signum.x_avg", &s.x_avg)] {
                    for ((n, sh), t) in names.iter().zip(&shapes).zip(state) {
                        tensors.push((format!("{prefix}.{n}"), *sh, t));
                    }
                }
            }
        }

        w.u32(tensors.len() as u32);
        for (name, (rows, cols), data) in tensors {
            w.u32(name.len() as u32);
            w.bytes(name.as_bytes());
            w.u32(rows as u32);
            w.u32(cols as u32);
            w.f32s(data.iter().copied());
        }
        w.save(path.as_ref())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = read_file(path.as_ref())?;
        let mut r = LeReader::new(&bytes, "checkpoint");
        r.magic(&CHECKPOINT_MAGIC)?;
        let version = r.u16()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let bad = |what: &str| Error::invalid(format!("checkpoint: bad {what} code"));
        let kind = CoderKind::from_code(r.u8()?).ok_or_else(|| bad("kind"))?;
        let activation = Activation::from_code(r.u8()?).ok_or_else(|| bad("activation"))?;
        let binary = r.u8()? != 0;
        let estimator = Estimator::from_code(r.u8()?).ok_or_else(|| bad("estimator"))?;
        let unit_norm = r.u8()? != 0;
        let d_in = r.u32()? as usize;
        let d_out = r.u32()? as usize;
        let n_latents = r.u32()? as usize;
        let k = r.u32()? as usize;
        let config = CoderConfig {
            kind,
            activation,
            binary,
            estimator,
            d_in,
            d_out,
            n_latents,
            k,
            ste_temperature: r.f64()?,
            gumbel_temperature: r.f64()?,
        };
        config.validate()?;
        if unit_norm != config.unit_norm_decoder() {
            return Err(Error::invalid("checkpoint: unit_norm_decoder flag disagrees with kind"));
        }
        let step = r.u64()?;
        let tokens = r.u64()?;

        enum OptHeader {
            None,
            Adam(u64, f64, f64, f64, LrSchedule),
            Signum(u64, f64, f64),
        }
        let header = match r.u8()? {
            0 => OptHeader::None,
            1 => {
                let t = r.u64()?;
                let (b1, b2, eps) = (r.f64()?, r.f64()?, r.f64()?);
                let schedule = match r.u8()? {
                    0 => LrSchedule::Constant(r.f64()?),
                    1 => LrSchedule::WarmupDecay {
                        peak_lr: r.f64()?,
                        warmup_steps: r.u64()?,
                        total_steps: r.u64()?,
                    },
                    _ => return Err(bad("schedule")),
                };
                OptHeader::Adam(t, b1, b2, eps, schedule)
            }
            2 => OptHeader::Signum(r.u64()?, r.f64()?, r.f64()?),
            _ => return Err(bad("optimizer")),
        };

        let n_tensors = r.u32()? as usize;
        let mut tensors: Vec<(String, usize, usize, Vec<f32>)> = Vec::with_capacity(n_tensors);
        for _ in 0..n_tensors {
            let len = r.u32()? as usize;
            let name = String::from_utf8(r.take(len)?.to_vec())
                .map_err(|_| Error::invalid("checkpoint: tensor name is not UTF-8"))?;
            let rows = r.u32()? as usize;
            let cols = r.u32()? as usize;
            let data = r.f32s(rows * cols)?;
            if data.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("checkpoint tensor {name}")));
            }
            tensors.push((name, rows, cols, data));
        }
        if r.remaining() != 0 {
            return Err(Error::DimMismatch("trailing bytes in checkpoint".into()));
        }

        let mut take = |name: &str, shape: (usize, usize)| -> Result<Vec<f32>> {
            let pos = tensors
                .iter()
                .position(|t| t.0 == name)
                .ok_or_else(|| Error::invalid(format!("checkpoint: missing tensor {name}")))?;
            let (_, rows, cols, data) = tensors.remove(pos);
            if (rows, cols) != shape {
                return Err(Error::DimMismatch(format!(
                    "tensor {name} is {rows}x{cols}, expected {}x{}",
                    shape.0, shape.1
                )));
            }
            Ok(data)
        };

        let mut params = CoderParams::<f32>::zeros(&config);
        let shapes = tensor_shapes(&params);
        let names: Vec<&'static str> = params.named().iter().map(|(n, _)| *n).collect();
        for ((dst, name), &sh) in params.slices_mut().into_iter().zip(&names).zip(&shapes) {
            dst.copy_from_slice(&take(name, sh)?);
        }
        let mut state = |prefix: &str| -> Result<Vec<Vec<f32>>> {
            names
                .iter()
                .zip(&shapes)
                .map(|(n, &sh)| take(&format!("{prefix}.{n}"), sh))
                .collect()
        };
        let optimizer = match header {
            OptHeader::None => None,
            OptHeader::Adam(t, beta1, beta2, eps, schedule) => Some(Optimizer::Adam(Adam {
                m: state("adam.m")?,
                v: state("adam.v")?,
                t,
                beta1,
                beta2,
                eps,
                schedule,
            })),
            OptHeader::Signum(t, lr, momentum) => Some(Optimizer::Signum(Signum {
                z: state("signum.z")?,
                x_avg: state("signum.x_avg")?,
                t,
                lr,
                momentum,
            })),
        };
        if let Some((name, ..)) = tensors.first() {
            return Err(Error::invalid(format!("checkpoint: unexpected tensor {name}")));
        }
        Ok(Self {
            config,
            params,
            step,
            tokens,
            optimizer,
        })
    }
}

fn tensor_shapes(p: &CoderParams<f32>) -> Vec<(usize, usize)> {
    let mut v = vec![
        p.w_enc.dim(),
        (1, p.b_enc.len()),
        p.w_dec.dim(),
        (1, p.b_dec.len()),
    ];
    if let Some(w) = &p.w_skip {
        v.push(w.dim());
    }
    v
}
