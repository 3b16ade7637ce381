//! Adam with a linear warmup/decay schedule, schedule-free Signum, and the
//! unit-norm projection for SAE decoders.
//!
//! Optimizers work on lists of flat tensors so they apply equally to coder
//! parameters and to scalar test problems.

use crate::coder::{CoderParams, W_DEC_SLOT};
use crate::error::{Error, Result};
use crate::real::Real;

/// Linear ramp `0 → peak` over `warmup_steps`, then linear decay to 0 at
/// `total_steps`.
pub fn adam_lr(t: u64, peak_lr: f64, warmup_steps: u64, total_steps: u64) -> Result<f64> {
    if warmup_steps >= total_steps {
        return Err(Error::invalid(format!(
            "warmup_steps={warmup_steps} must be below total_steps={total_steps}"
        )));
    }
    if t > total_steps {
        return Err(Error::invalid(format!("step {t} beyond total {total_steps}")));
    }
    Ok(if t < warmup_steps {
        peak_lr * t as f64 / warmup_steps as f64
    } else {
        peak_lr * (total_steps - t) as f64 / (total_steps - warmup_steps) as f64
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LrSchedule {
    Constant(f64),
    WarmupDecay {
        peak_lr: f64,
        warmup_steps: u64,
        total_steps: u64,
    },
}

impl LrSchedule {
    pub fn at(&self, t: u64) -> Result<f64> {
        match *self {
            LrSchedule::Constant(lr) => Ok(lr),
            LrSchedule::WarmupDecay {
                peak_lr,
                warmup_steps,
                total_steps,
            } => adam_lr(t.min(total_steps), peak_lr, warmup_steps, total_steps),
        }
    }
}

fn check_shapes<T>(params: &[&mut [T]], grads: &[&[T]], state: &[Vec<T>]) -> Result<()> {
    let ok = params.len() == grads.len()
        && params.len() == state.len()
        && params
            .iter()
            .zip(grads)
            .zip(state)
            .all(|((p, g), s)| p.len() == g.len() && p.len() == s.len());
    if ok {
        Ok(())
    } else {
        Err(Error::DimMismatch(
            "parameter, gradient and optimizer state shapes differ".into(),
        ))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub schedule: LrSchedule,
}

impl<T: Real> Adam<T> {
    pub fn new(shapes: &[usize], schedule: LrSchedule) -> Self {
        Self {
            m: shapes.iter().map(|&n| vec![T::zero(); n]).collect(),
            v: shapes.iter().map(|&n| vec![T::zero(); n]).collect(),
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            schedule,
        }
    }

    /// Learning rate the next step will use.
    pub fn next_lr(&self) -> Result<f64> {
        self.schedule.at(self.t + 1)
    }

    /// One bias-corrected Adam step; the step counter is advanced first, so
    /// the first update uses the schedule at `t = 1`.
    pub fn step(&mut self, params: &mut [&mut [T]], grads: &[&[T]]) -> Result<f64> {
        check_shapes(params, grads, &self.m)?;
        self.t += 1;
        let lr = self.schedule.at(self.t)?;
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let (c1, c2) = (T::one() - b1, T::one() - b2);
        let bc1 = T::of(1.0 - self.beta1.powi(self.t as i32));
        let bc2 = T::of(1.0 - self.beta2.powi(self.t as i32));
        let (lr_t, eps) = (T::of(lr), T::of(self.eps));
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + c1 * g[i];
                v[i] = b2 * v[i] + c2 * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] = p[i] - lr_t * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(lr)
    }
}

/// Schedule-free Signum.
///
/// Gradients are taken at `y = (1 − β)·z + β·x_avg`; `z` moves by
/// `−lr·sign(g)` and `x_avg` is the uniform running average of the `z`
/// iterates. `x_avg` is the point to evaluate and checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Signum<T> {
    pub z: Vec<Vec<T>>,
    pub x_avg: Vec<Vec<T>>,
    pub t: u64,
    pub lr: f64,
    pub momentum: f64,
}

#[inline]
fn sign<T: Real>(g: T) -> T {
    if g > T::zero() {
        T::one()
    } else if g < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

impl<T: Real> Signum<T> {
    /// Starts with `z = x_avg = y = initial`.
    pub fn new(initial: &[&[T]], lr: f64, momentum: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::invalid("momentum must be in [0, 1)"));
        }
        Ok(Self {
            z: initial.iter().map(|s| s.to_vec()).collect(),
            x_avg: initial.iter().map(|s| s.to_vec()).collect(),
            t: 0,
            lr,
            momentum,
        })
    }

    /// Updates `z` and `x_avg` from gradients taken at the current `params`
    /// (the interpolation point), then writes the next interpolation point
    /// into `params`.
    pub fn step(&mut self, params: &mut [&mut [T]], grads: &[&[T]]) -> Result<f64> {
        check_shapes(params, grads, &self.z)?;
        self.t += 1;
        let lr = T::of(self.lr);
        let c = T::of(1.0 / self.t as f64);
        for ((z, x), g) in self.z.iter_mut().zip(&mut self.x_avg).zip(grads) {
            for i in 0..z.len() {
                z[i] = z[i] - lr * sign(g[i]);
                x[i] = (T::one() - c) * x[i] + c * z[i];
            }
        }
        self.write_interpolation(params);
        Ok(self.lr)
    }

    pub fn write_interpolation(&self, params: &mut [&mut [T]]) {
        let beta = T::of(self.momentum);
        for ((p, z), x) in params.iter_mut().zip(&self.z).zip(&self.x_avg) {
            for i in 0..p.len() {
                p[i] = (T::one() - beta) * z[i] + beta * x[i];
            }
        }
    }
}

/// Divides every row of a row-major `[rows, cols]` buffer by its norm.
pub fn project_rows<T: Real>(w: &mut [T], cols: usize) -> Result<()> {
    for (r, row) in w.chunks_exact_mut(cols).enumerate() {
        let norm = row.iter().map(|v| v.f64() * v.f64()).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return Err(Error::DegenerateRow(r));
        }
        let norm = T::of(norm);
        row.iter_mut().for_each(|v| *v = *v / norm);
    }
    Ok(())
}

pub fn project_unit_norm<T: Real>(w_dec: &mut ndarray::Array2<T>) -> Result<()> {
    let cols = w_dec.ncols();
    project_rows(w_dec.as_slice_mut().expect("contiguous decoder"), cols)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Adam,
    Signum,
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adam" => Ok(Self::Adam),
            "signum" => Ok(Self::Signum),
            other => Err(Error::invalid(format!("unknown optimizer `{other}`"))),
        }
    }
}

impl OptimizerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Adam => "adam",
            Self::Signum => "signum",
        }
    }
}

/// Optimizer bound to a coder's parameter layout.
#[derive(Debug, Clone, PartialEq)]
pub enum Optimizer<T> {
    Adam(Adam<T>),
    Signum(Signum<T>),
}

impl<T: Real> Optimizer<T> {
    pub fn kind(&self) -> OptimizerKind {
        match self {
            Optimizer::Adam(_) => OptimizerKind::Adam,
            Optimizer::Signum(_) => OptimizerKind::Signum,
        }
    }

    pub fn step_count(&self) -> u64 {
        match self {
            Optimizer::Adam(a) => a.t,
            Optimizer::Signum(s) => s.t,
        }
    }

    pub fn next_lr(&self) -> Result<f64> {
        match self {
            Optimizer::Adam(a) => a.next_lr(),
            Optimizer::Signum(s) => Ok(s.lr),
        }
    }

    /// Applies one update and, when `unit_norm_decoder` is set, renormalizes
    /// decoder rows of every iterate the optimizer keeps. Returns the
    /// learning rate used.
    pub fn apply(
        &mut self,
        params: &mut CoderParams<T>,
        grads: &CoderParams<T>,
        unit_norm_decoder: bool,
    ) -> Result<f64> {
        let d_out = params.w_dec.ncols();
        let grads = grads.slices();
        match self {
            Optimizer::Adam(adam) => {
                let lr = adam.step(&mut params.slices_mut(), &grads)?;
                if unit_norm_decoder {
                    project_unit_norm(&mut params.w_dec)?;
                }
                Ok(lr)
            }
            Optimizer::Signum(s) => {
                let lr = s.step(&mut params.slices_mut(), &grads)?;
                if unit_norm_decoder {
                    project_rows(&mut s.z[W_DEC_SLOT], d_out)?;
                    project_rows(&mut s.x_avg[W_DEC_SLOT], d_out)?;
                    s.write_interpolation(&mut params.slices_mut());
                    project_unit_norm(&mut params.w_dec)?;
                }
                Ok(lr)
            }
        }
    }

    /// Parameters to evaluate or export: the current iterate for Adam, the
    /// running average for Signum.
    pub fn eval_params(&self, params: &CoderParams<T>) -> CoderParams<T> {
        match self {
            Optimizer::Adam(_) => params.clone(),
            Optimizer::Signum(s) => {
                let mut out = params.clone();
                for (dst, src) in out.slices_mut().into_iter().zip(&s.x_avg) {
                    dst.copy_from_slice(src);
                }
                out
            }
        }
    }
}
