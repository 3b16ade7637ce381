//! Synthetic superposition data with a known ground-truth dictionary.
//!
//! A token's code activates each ground-truth feature independently with its
//! own firing probability. The observed activation is the sum of the active
//! dictionary directions scaled by their amplitudes, plus isotropic Gaussian
//! noise. In transcoder mode the target is a fixed random MLP applied to that
//! activation.

mod shard;
mod stats;

pub use shard::{
    read_codes, read_ground_truth, read_shard, write_codes, write_ground_truth, write_shard,
    ActivationShard, CODES_MAGIC, GROUND_TRUTH_MAGIC, SHARD_MAGIC, SHARD_VERSION,
};
pub use stats::{empirical_mean, geometric_median, summed_distance};

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::real::dot;
use crate::rng::Rng;

/// Parameters for [`GroundTruth::generate`].
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub m_true: usize,
    pub d_in: usize,
    /// Expected number of active features per token.
    pub k_true: f64,
    /// Firing probabilities are log-uniform over this many decades.
    pub freq_decades: f64,
    pub binary_codes: bool,
    pub amplitude_low: f64,
    pub amplitude_high: f64,
    pub noise_sigma: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            m_true: 512,
            d_in: 64,
            k_true: 8.0,
            freq_decades: 2.0,
            binary_codes: false,
            amplitude_low: 0.5,
            amplitude_high: 1.5,
            noise_sigma: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// `[m_true, d_in]`, unit-norm rows.
    pub dictionary: Array2<f32>,
    pub firing_prob: Vec<f64>,
    pub amplitude_low: f64,
    pub amplitude_high: f64,
    pub binary_codes: bool,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl GroundTruth {
    pub fn generate(spec: &SyntheticSpec) -> Result<Self> {
        let SyntheticSpec {
            seed,
            m_true,
            d_in,
            k_true,
            freq_decades,
            ..
        } = *spec;
        if m_true == 0 || d_in == 0 {
            return Err(Error::invalid("m_true and d_in must be positive"));
        }
        if d_in < 2 || m_true < d_in {
            return Err(Error::invalid(format!(
                "need m_true >= d_in >= 2, got m_true={m_true}, d_in={d_in}"
            )));
        }
        if !freq_decades.is_finite() || freq_decades < 0.0 {
            return Err(Error::invalid("freq_decades must be finite and >= 0"));
        }
        if !spec.noise_sigma.is_finite() || spec.noise_sigma < 0.0 {
            return Err(Error::invalid("noise_sigma must be finite and >= 0"));
        }
        if !(spec.amplitude_low.is_finite()
            && spec.amplitude_high.is_finite()
            && spec.amplitude_low <= spec.amplitude_high)
        {
            return Err(Error::invalid("need amplitude_low <= amplitude_high"));
        }
        if !(k_true > 0.0) {
            return Err(Error::invalid("k_true must be positive"));
        }

        let mut rng = Rng::stream(seed, 0x6774);
        let mut dictionary = Array2::<f32>::zeros((m_true, d_in));
        for mut row in dictionary.rows_mut() {
            let v: Vec<f64> = (0..d_in).map(|_| rng.normal()).collect();
            let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            for (dst, a) in row.iter_mut().zip(&v) {
                *dst = (a / norm) as f32;
            }
        }

        // relative log-uniform profile, then scale so the probabilities sum to k_true
        let profile: Vec<f64> = (0..m_true)
            .map(|_| 10f64.powf(-freq_decades * rng.uniform()))
            .collect();
        let p_max = k_true / profile.iter().sum::<f64>();
        if p_max > 1.0 {
            return Err(Error::invalid(format!(
                "k_true={k_true} unreachable with m_true={m_true} over {freq_decades} decades"
            )));
        }
        let firing_prob = profile.iter().map(|r| r * p_max).collect();

        Ok(Self {
            dictionary,
            firing_prob,
            amplitude_low: spec.amplitude_low,
            amplitude_high: spec.amplitude_high,
            binary_codes: spec.binary_codes,
            noise_sigma: spec.noise_sigma,
            seed,
        })
    }

    pub fn m_true(&self) -> usize {
        self.dictionary.nrows()
    }

    pub fn d_in(&self) -> usize {
        self.dictionary.ncols()
    }

    /// Draws one token's code into `idx`/`amp` (cleared first).
    fn sample_code(&self, rng: &mut Rng, idx: &mut Vec<u32>, amp: &mut Vec<f32>) {
        idx.clear();
        amp.clear();
        for (j, &p) in self.firing_prob.iter().enumerate() {
            if rng.bernoulli(p) {
                let a = if self.binary_codes {
                    1.0
                } else {
                    rng.uniform_range(self.amplitude_low, self.amplitude_high)
                };
                idx.push(j as u32);
                amp.push(a as f32);
            }
        }
    }
}

/// Single-hidden-layer ReLU MLP standing in for a model's feedforward block.
#[derive(Debug, Clone, PartialEq)]
pub struct Teacher {
    /// `[hidden, d_in]`
    pub w1: Array2<f32>,
    pub b1: Array1<f32>,
    /// `[d_out, hidden]`
    pub w2: Array2<f32>,
    pub b2: Array1<f32>,
    pub seed: u64,
}

impl Teacher {
    pub fn new(seed: u64, d_in: usize, hidden: usize, d_out: usize) -> Result<Self> {
        if d_in == 0 || hidden == 0 || d_out == 0 {
            return Err(Error::invalid("teacher dims must be positive"));
        }
        let mut rng = Rng::stream(seed, 0x7465_6163);
        let mut gauss = |rows: usize, cols: usize, scale: f64| {
            Array2::from_shape_fn((rows, cols), |_| (rng.normal() * scale) as f32)
        };
        let w1 = gauss(hidden, d_in, 1.0 / (d_in as f64).sqrt());
        let b1 = gauss(1, hidden, 0.1).row(0).to_owned();
        let w2 = gauss(d_out, hidden, 1.0 / (hidden as f64).sqrt());
        let b2 = gauss(1, d_out, 0.1).row(0).to_owned();
        Ok(Self {
            w1,
            b1,
            w2,
            b2,
            seed,
        })
    }

    pub fn d_in(&self) -> usize {
        self.w1.ncols()
    }

    pub fn hidden(&self) -> usize {
        self.w1.nrows()
    }

    pub fn d_out(&self) -> usize {
        self.w2.nrows()
    }

    /// `w2 · relu(w1 · x + b1) + b2`
    pub fn forward(&self, x: ArrayView1<f32>) -> Array1<f32> {
        let x = x.as_slice().expect("contiguous input");
        let h: Vec<f32> = self
            .w1
            .rows()
            .into_iter()
            .zip(self.b1.iter())
            .map(|(w, b)| (dot(w.as_slice().unwrap(), x) + b).max(0.0))
            .collect();
        self.w2
            .rows()
            .into_iter()
            .zip(self.b2.iter())
            .map(|(w, b)| dot(w.as_slice().unwrap(), &h) + b)
            .collect()
    }
}

/// Row-compressed sparse ground-truth codes, one row per token.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseCodes {
    pub m_true: usize,
    offsets: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<f32>,
}

impl SparseCodes {
    pub fn new(m_true: usize) -> Self {
        Self {
            m_true,
            offsets: vec![0],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn push_row(&mut self, idx: &[u32], vals: &[f32]) {
        debug_assert_eq!(idx.len(), vals.len());
        self.indices.extend_from_slice(idx);
        self.values.extend_from_slice(vals);
        self.offsets.push(self.indices.len());
    }

    pub fn n_rows(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn row(&self, i: usize) -> (&[u32], &[f32]) {
        let (a, b) = (self.offsets[i], self.offsets[i + 1]);
        (&self.indices[a..b], &self.values[a..b])
    }

    pub fn append(&mut self, other: &SparseCodes) {
        for i in 0..other.n_rows() {
            let (idx, vals) = other.row(i);
            self.push_row(idx, vals);
        }
    }

    /// Rows `start..end` as a new code set.
    pub fn slice(&self, start: usize, end: usize) -> SparseCodes {
        let mut out = SparseCodes::new(self.m_true);
        for i in start..end {
            let (idx, vals) = self.row(i);
            out.push_row(idx, vals);
        }
        out
    }

    /// Per-feature number of rows where the feature is active.
    pub fn fire_counts(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.m_true];
        for &j in &self.indices {
            counts[j as usize] += 1;
        }
        counts
    }
}

/// Activations, targets and (for synthetic data) the codes that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct DataBatch {
    pub x: Array2<f32>,
    pub y: Array2<f32>,
    pub codes: Option<SparseCodes>,
}

impl DataBatch {
    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }
}

/// Draws `n` tokens. Targets equal inputs without a teacher (SAE mode),
/// otherwise they are the teacher's output.
pub fn sample_batch(
    gt: &GroundTruth,
    teacher: Option<&Teacher>,
    n: usize,
    rng: &mut Rng,
) -> Result<DataBatch> {
    if n == 0 {
        return Err(Error::invalid("batch size must be at least 1"));
    }
    if let Some(t) = teacher {
        if t.d_in() != gt.d_in() {
            return Err(Error::DimMismatch(format!(
                "teacher d_in {} vs ground truth d_in {}",
                t.d_in(),
                gt.d_in()
            )));
        }
    }
    let d = gt.d_in();
    let mut x = Array2::<f32>::zeros((n, d));
    let mut codes = SparseCodes::new(gt.m_true());
    let (mut idx, mut amp) = (Vec::new(), Vec::new());
    let mut acc = vec![0f64; d];
    for mut row in x.rows_mut() {
        gt.sample_code(rng, &mut idx, &mut amp);
        acc.iter_mut().for_each(|a| *a = 0.0);
        for (&j, &a) in idx.iter().zip(&amp) {
            for (dst, &w) in acc.iter_mut().zip(gt.dictionary.row(j as usize)) {
                *dst += a as f64 * w as f64;
            }
        }
        if gt.noise_sigma > 0.0 {
            for dst in acc.iter_mut() {
                *dst += gt.noise_sigma * rng.normal();
            }
        }
        for (dst, a) in row.iter_mut().zip(&acc) {
            *dst = *a as f32;
        }
        codes.push_row(&idx, &amp);
    }
    let y = match teacher {
        None => x.clone(),
        Some(t) => {
            let mut y = Array2::<f32>::zeros((n, t.d_out()));
            for (xr, mut yr) in x.rows().into_iter().zip(y.rows_mut()) {
                yr.assign(&t.forward(xr));
            }
            y
        }
    };
    Ok(DataBatch {
        x,
        y,
        codes: Some(codes),
    })
}
