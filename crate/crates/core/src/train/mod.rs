//! Initialization, the training loop and dead-latent tracking.

mod source;

pub use source::{shard_paths, BatchSource, ShardSource, SyntheticSource};

use std::collections::VecDeque;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::Array1;
use rayon::prelude::*;

use crate::checkpoint::Checkpoint;
use crate::coder::{
    backward_into, decode, encode, CoderConfig, CoderKind, CoderParams, ROW_CHUNK,
};
use crate::datagen::{empirical_mean, geometric_median, DataBatch, GroundTruth};
use crate::error::{Error, Result};
use crate::metrics::{learned_directions, recovery};
use crate::optim::{project_unit_norm, Adam, LrSchedule, Optimizer, OptimizerKind, Signum};
use crate::real::dot;
use crate::rng::{mix64, Rng};

/// How the decoder bias is initialized from the targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BiasInit {
    Mean,
    GeometricMedian,
}

impl std::str::FromStr for BiasInit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Self::Mean),
            "geometric_median" | "median" => Ok(Self::GeometricMedian),
            other => Err(Error::invalid(format!("unknown bias init `{other}`"))),
        }
    }
}

/// Input mean and target center used by [`init_params`].
#[derive(Debug, Clone, PartialEq)]
pub struct DataStats {
    pub mean_x: Vec<f64>,
    pub target_center: Vec<f64>,
}

impl DataStats {
    pub fn from_batch(batch: &DataBatch, bias_init: BiasInit) -> Result<Self> {
        let rows = |a: &ndarray::Array2<f32>| -> Vec<Vec<f32>> {
            a.rows().into_iter().map(|r| r.to_vec()).collect()
        };
        let xs = rows(&batch.x);
        let mean_x = empirical_mean(xs.iter().map(|r| r.as_slice()))?;
        let target_center = match bias_init {
            BiasInit::Mean => {
                let ys = rows(&batch.y);
                empirical_mean(ys.iter().map(|r| r.as_slice()))?
            }
            BiasInit::GeometricMedian => geometric_median(batch.y.view(), 200, 1e-6)?,
        };
        Ok(Self {
            mean_x,
            target_center,
        })
    }
}

/// Initial parameters.
///
/// SAEs get a Gaussian encoder whose transpose, row-normalized, becomes the
/// decoder; the encoder is then re-tied to the normalized decoder. Transcoder
/// variants get a zero decoder and skip matrix and an encoder bias that
/// centers preactivations at the mean input. `b_dec` is the target center.
pub fn init_params(cfg: &CoderConfig, stats: &DataStats, seed: u64) -> Result<CoderParams<f32>> {
    cfg.validate()?;
    if stats.mean_x.len() != cfg.d_in || stats.target_center.len() != cfg.d_out {
        return Err(Error::invalid(format!(
            "stats dims ({}, {}) do not match coder ({}, {})",
            stats.mean_x.len(),
            stats.target_center.len(),
            cfg.d_in,
            cfg.d_out
        )));
    }
    let mut rng = Rng::stream(seed, 0x696e_6974);
    let mut p = CoderParams::<f32>::zeros(cfg);
    let scale = 1.0 / (cfg.d_in as f64).sqrt();
    p.w_enc.iter_mut().for_each(|v| *v = (rng.normal() * scale) as f32);
    p.b_dec = stats.target_center.iter().map(|&c| c as f32).collect();
    match cfg.kind {
        CoderKind::Sae => {
            p.w_dec.assign(&p.w_enc);
            project_unit_norm(&mut p.w_dec)?;
            p.w_enc.assign(&p.w_dec);
        }
        CoderKind::Transcoder | CoderKind::SkipTranscoder => {
            let mean: Vec<f32> = stats.mean_x.iter().map(|&m| m as f32).collect();
            p.b_enc = p
                .w_enc
                .rows()
                .into_iter()
                .map(|w| -dot(w.as_slice().unwrap(), &mean))
                .collect::<Array1<f32>>();
        }
    }
    Ok(p)
}

/// Binary SAEs and large coders default to schedule-free Signum.
pub fn default_optimizer(cfg: &CoderConfig, large: bool) -> OptimizerKind {
    if large || (cfg.binary && cfg.kind == CoderKind::Sae) {
        OptimizerKind::Signum
    } else {
        OptimizerKind::Adam
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub coder: CoderConfig,
    pub optimizer: OptimizerKind,
    /// Peak rate for Adam, constant rate for Signum.
    pub lr: f64,
    pub warmup_steps: u64,
    pub momentum: f64,
    pub batch_size: usize,
    pub total_tokens: u64,
    pub log_every: u64,
    pub dead_window_tokens: u64,
    pub seed: u64,
    pub bias_init: BiasInit,
    pub init_samples: usize,
    pub checkpoint_dir: Option<PathBuf>,
    /// Generate the next batch on a second thread while training.
    pub prefetch: bool,
}

impl TrainConfig {
    /// Desk-scale defaults: 4096-token batches, 5000 steps.
    pub fn new(coder: CoderConfig) -> Self {
        let optimizer = default_optimizer(&coder, false);
        let steps = 5000u64;
        let mut cfg = Self {
            optimizer,
            lr: 0.0,
            warmup_steps: 0,
            momentum: 0.95,
            batch_size: 4096,
            total_tokens: steps * 4096,
            log_every: 100,
            dead_window_tokens: 1_000_000,
            seed: 0,
            bias_init: BiasInit::Mean,
            init_samples: 10_000,
            checkpoint_dir: None,
            prefetch: false,
            coder,
        };
        cfg.lr = cfg.default_lr();
        cfg.warmup_steps = cfg.default_warmup();
        cfg
    }

    pub fn with_steps(mut self, steps: u64, batch_size: usize) -> Self {
        self.batch_size = batch_size;
        self.total_tokens = steps * batch_size as u64;
        self.warmup_steps = self.default_warmup();
        self
    }

    pub fn with_optimizer(mut self, kind: OptimizerKind) -> Self {
        self.optimizer = kind;
        self.lr = self.default_lr();
        self
    }

    /// Adam: 5e-3 for SAEs, 3e-3 for transcoders. Signum: 3e-3.
    pub fn default_lr(&self) -> f64 {
        match (self.optimizer, self.coder.kind) {
            (OptimizerKind::Adam, CoderKind::Sae) => 5e-3,
            _ => 3e-3,
        }
    }

    /// 1000 steps, capped at a tenth of the run.
    pub fn default_warmup(&self) -> u64 {
        1000.min(self.steps() / 10)
    }

    pub fn steps(&self) -> u64 {
        self.total_tokens / self.batch_size.max(1) as u64
    }

    pub fn validate(&self) -> Result<()> {
        self.coder.validate()?;
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be at least 1"));
        }
        if self.dead_window_tokens < self.batch_size as u64 {
            return Err(Error::invalid("dead_window_tokens must be >= batch_size"));
        }
        if self.log_every == 0 {
            return Err(Error::invalid("log_every must be at least 1"));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid("lr must be finite and non-negative"));
        }
        if self.optimizer == OptimizerKind::Adam
            && self.steps() > 0
            && self.warmup_steps >= self.steps()
        {
            return Err(Error::invalid("warmup_steps must be below the step count"));
        }
        Ok(())
    }

    pub fn new_optimizer(&self, params: &CoderParams<f32>) -> Result<Optimizer<f32>> {
        Ok(match self.optimizer {
            OptimizerKind::Adam => {
                let shapes: Vec<usize> = params.slices().iter().map(|s| s.len()).collect();
                let schedule = if self.steps() == 0 {
                    LrSchedule::Constant(self.lr)
                } else {
                    LrSchedule::WarmupDecay {
                        peak_lr: self.lr,
                        warmup_steps: self.warmup_steps,
                        total_steps: self.steps(),
                    }
                };
                Optimizer::Adam(Adam::new(&shapes, schedule))
            }
            OptimizerKind::Signum => {
                Optimizer::Signum(Signum::new(&params.slices(), self.lr, self.momentum)?)
            }
        })
    }
}

/// Fraction of latents with a zero count.
pub fn dead_fraction(counts: &[u64]) -> f64 {
    if counts.is_empty() {
        return 0.0;
    }
    counts.iter().filter(|&&c| c == 0).count() as f64 / counts.len() as f64
}

/// Per-latent fire counts over a trailing token window.
#[derive(Debug, Clone)]
pub struct DeadTracker {
    window_tokens: u64,
    batches: VecDeque<(u64, Vec<u64>)>,
    totals: Vec<u64>,
    tokens: u64,
}

impl DeadTracker {
    pub fn new(n_latents: usize, window_tokens: u64) -> Self {
        Self {
            window_tokens,
            batches: VecDeque::new(),
            totals: vec![0; n_latents],
            tokens: 0,
        }
    }

    pub fn push(&mut self, tokens: u64, counts: Vec<u64>) {
        for (t, c) in self.totals.iter_mut().zip(&counts) {
            *t += c;
        }
        self.tokens += tokens;
        self.batches.push_back((tokens, counts));
        while let Some((front_tokens, _)) = self.batches.front() {
            if self.tokens - front_tokens < self.window_tokens {
                break;
            }
            let (t, c) = self.batches.pop_front().unwrap();
            self.tokens -= t;
            for (tot, v) in self.totals.iter_mut().zip(&c) {
                *tot -= v;
            }
        }
    }

    pub fn counts(&self) -> &[u64] {
        &self.totals
    }

    pub fn dead_fraction(&self) -> f64 {
        dead_fraction(&self.totals)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainRecord {
    /// Completed optimizer steps.
    pub step: u64,
    pub tokens: u64,
    pub loss: f64,
    pub fvu: f64,
    pub dead_fraction: f64,
    pub lr: f64,
    /// Recovery against the ground truth, when one was supplied.
    pub mmcs: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<TrainRecord>,
}

impl TrainLog {
    pub fn last(&self) -> Option<&TrainRecord> {
        self.records.last()
    }

    pub fn first(&self) -> Option<&TrainRecord> {
        self.records.first()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,tokens,loss,fvu,dead_fraction,lr\n");
        for r in &self.records {
            s.push_str(&format!(
                "{},{},{:.9e},{:.9e},{:.9e},{:.9e}\n",
                r.step, r.tokens, r.loss, r.fvu, r.dead_fraction, r.lr
            ));
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_csv().as_bytes())
            .map_err(|e| Error::io(path, e))
    }
}

pub struct TrainOutcome {
    /// Parameters to evaluate (the running average under Signum).
    pub params: CoderParams<f32>,
    pub log: TrainLog,
    pub checkpoints: Vec<PathBuf>,
    pub final_checkpoint: Checkpoint,
    /// Per-step batch losses, for convergence diagnostics.
    pub losses: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct StepResult {
    /// Gradient of the mean per-token squared error.
    pub grads: CoderParams<f32>,
    pub sse: f64,
    pub fire_counts: Vec<u64>,
}

/// Forward, MSE loss (mean over rows) and backward for one batch. Gumbel
/// noise for row chunk `c` comes from `Rng::stream(gumbel_seed, c)`.
pub fn batch_gradients(
    cfg: &CoderConfig,
    params: &CoderParams<f32>,
    batch: &DataBatch,
    gumbel_seed: u64,
) -> Result<StepResult> {
    let n = batch.len();
    let x = batch.x.as_slice().expect("standard layout");
    let y = batch.y.as_slice().expect("standard layout");
    let (d_in, d_out) = (cfg.d_in, cfg.d_out);
    let scale = 2.0 / n as f32;

    let chunks: Vec<Result<StepResult>> = x
        .par_chunks(ROW_CHUNK * d_in)
        .zip(y.par_chunks(ROW_CHUNK * d_out))
        .enumerate()
        .map(|(c, (xc, yc))| {
            let mut rng = cfg
                .uses_gumbel()
                .then(|| Rng::stream(gumbel_seed, c as u64));
            let mut grads = params.zeros_like();
            let mut fire_counts = vec![0u64; cfg.n_latents];
            let mut sse = 0f64;
            let mut g = vec![0f32; d_out];
            for (xr, yr) in xc.chunks_exact(d_in).zip(yc.chunks_exact(d_out)) {
                let cache = encode(cfg, params, xr, rng.as_mut(), true)?;
                let y_hat = decode(cfg, params, &cache, None);
                for ((gi, &a), &b) in g.iter_mut().zip(&y_hat).zip(yr) {
                    let r = a - b;
                    sse += (r as f64) * (r as f64);
                    *gi = scale * r;
                }
                for (&i, &v) in cache.active_idx.iter().zip(&cache.active_vals) {
                    if v != 0.0 {
                        fire_counts[i] += 1;
                    }
                }
                backward_into(cfg, params, &cache, &g, &mut grads, None)?;
            }
            Ok(StepResult {
                grads,
                sse,
                fire_counts,
            })
        })
        .collect();

    let mut iter = chunks.into_iter();
    let mut total = iter.next().expect("non-empty batch")?;
    for r in iter {
        let r = r?;
        total.grads.add_assign(&r.grads);
        total.sse += r.sse;
        for (a, b) in total.fire_counts.iter_mut().zip(&r.fire_counts) {
            *a += b;
        }
    }
    Ok(total)
}

fn total_variance(batch: &DataBatch) -> f64 {
    let n = batch.len() as f64;
    batch
        .y
        .columns()
        .into_iter()
        .map(|c| {
            let mean = c.iter().map(|&v| v as f64).sum::<f64>() / n;
            c.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>()
        })
        .sum()
}

/// Trains a coder on `source`, or continues from `resume`.
///
/// Each step runs forward, the batch-mean MSE loss, backward, an optimizer
/// update and (for SAEs) decoder renormalization. Results are bit-identical
/// for identical configs and seeds.
pub fn train(
    cfg: &TrainConfig,
    source: &mut dyn BatchSource,
    gt: Option<&GroundTruth>,
    resume: Option<Checkpoint>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let coder = &cfg.coder;
    if source.dims() != (coder.d_in, coder.d_out) {
        return Err(Error::DimMismatch(format!(
            "data dims {:?} vs coder ({}, {})",
            source.dims(),
            coder.d_in,
            coder.d_out
        )));
    }
    let (mut params, mut optimizer, start_step, mut tokens) = match resume {
        Some(ck) => {
            if &ck.config != coder {
                return Err(Error::invalid("checkpoint coder config differs from training config"));
            }
            let opt = ck
                .optimizer
                .ok_or_else(|| Error::invalid("checkpoint carries no optimizer state"))?;
            if opt.kind() != cfg.optimizer {
                return Err(Error::invalid("checkpoint optimizer differs from training config"));
            }
            (ck.params, opt, ck.step, ck.tokens)
        }
        None => {
            let stats_batch = source.stats_batch(cfg.init_samples.max(1))?;
            let stats = DataStats::from_batch(&stats_batch, cfg.bias_init)?;
            let params = init_params(coder, &stats, cfg.seed)?;
            let opt = cfg.new_optimizer(&params)?;
            (params, opt, 0, 0)
        }
    };

    let steps = cfg.steps();
    let ckpt_every = cfg.log_every.saturating_mul(10);
    let mut log = TrainLog::default();
    let mut losses = Vec::new();
    let mut checkpoints = Vec::new();
    let mut dead = DeadTracker::new(coder.n_latents, cfg.dead_window_tokens);
    let gumbel_base = mix64(cfg.seed ^ 0x6775_6d62);

    let save = |name: String,
                params: &CoderParams<f32>,
                opt: &Optimizer<f32>,
                step: u64,
                tokens: u64|
     -> Result<Option<PathBuf>> {
        let Some(dir) = &cfg.checkpoint_dir else {
            return Ok(None);
        };
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(name);
        Checkpoint {
            config: coder.clone(),
            params: params.clone(),
            step,
            tokens,
            optimizer: Some(opt.clone()),
        }
        .save(&path)?;
        Ok(Some(path))
    };

    let mut run_step = |step: u64, batch: DataBatch| -> Result<()> {
        let n = batch.len();
        let res = batch_gradients(coder, &params, &batch, mix64(gumbel_base ^ step))?;
        let loss = res.sse / n as f64;
        if !loss.is_finite() || !res.grads.is_finite() {
            let path = save("diagnostic.sbck".into(), &params, &optimizer, step, tokens)?;
            return Err(Error::NumericAbort {
                step,
                checkpoint: path,
            });
        }
        let lr = optimizer.apply(&mut params, &res.grads, coder.unit_norm_decoder())?;
        tokens += n as u64;
        dead.push(n as u64, res.fire_counts);
        losses.push(loss);

        let done = step + 1;
        if step == start_step || done % cfg.log_every == 0 || done == steps {
            let sst = total_variance(&batch);
            let mmcs = gt.map(|g| {
                let eval = optimizer.eval_params(&params);
                recovery(g, learned_directions(coder, &eval)).map(|r| r.mmcs)
            });
            log.records.push(TrainRecord {
                step: done,
                tokens,
                loss,
                fvu: if sst > 0.0 { res.sse / sst } else { f64::NAN },
                dead_fraction: dead.dead_fraction(),
                lr,
                mmcs: mmcs.transpose()?,
            });
        }
        if done % ckpt_every == 0 && done != steps {
            if let Some(p) = save(format!("checkpoint_step{done:08}.sbck"), &params, &optimizer, done, tokens)? {
                checkpoints.push(p);
            }
        }
        Ok(())
    };

    if cfg.prefetch && steps > start_step + 1 {
        std::thread::scope(|scope| -> Result<()> {
            let (tx, rx) = std::sync::mpsc::sync_channel::<Result<DataBatch>>(2);
            let bs = cfg.batch_size;
            let producer = scope.spawn(move || {
                for step in start_step..steps {
                    if tx.send(source.batch(step, bs)).is_err() {
                        break;
                    }
                }
            });
            let mut result = Ok(());
            for step in start_step..steps {
                let batch = match rx.recv() {
                    Ok(b) => b,
                    Err(_) => break,
                };
                if let Err(e) = batch.and_then(|b| run_step(step, b)) {
                    result = Err(e);
                    break;
                }
            }
            drop(rx);
            producer.join().expect("producer thread panicked");
            result
        })?;
    } else {
        for step in start_step..steps {
            let batch = source.batch(step, cfg.batch_size)?;
            run_step(step, batch)?;
        }
    }

    let final_step = steps.max(start_step);
    if let Some(p) = save("checkpoint.sbck".into(), &params, &optimizer, final_step, tokens)? {
        checkpoints.push(p);
    }
    let final_checkpoint = Checkpoint {
        config: coder.clone(),
        params: params.clone(),
        step: final_step,
        tokens,
        optimizer: Some(optimizer.clone()),
    };
    Ok(TrainOutcome {
        params: optimizer.eval_params(&params),
        log,
        checkpoints,
        final_checkpoint,
        losses,
    })
}
