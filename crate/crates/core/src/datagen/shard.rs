//! On-disk containers for activation shards, ground-truth codes and the
//! ground-truth dictionary. All little-endian, no padding.
//!
//! Shard layout: `"SBSH"`, version `u16 = 1`, flags `u16` (bit 0: SAE shard,
//! targets omitted and equal to inputs), `d_in u32`, `d_out u32`,
//! `count u64`, then `count` records of `d_in` f32 inputs followed by
//! `d_out` f32 targets (absent when bit 0 is set).

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2};

use super::{GroundTruth, SparseCodes, Teacher};
use crate::binio::{read_file, LeReader, LeWriter};
use crate::error::{Error, Result};

pub const SHARD_MAGIC: [u8; 4] = *b"SBSH";
pub const CODES_MAGIC: [u8; 4] = *b"SBCD";
pub const GROUND_TRUTH_MAGIC: [u8; 4] = *b"SBGT";
pub const SHARD_VERSION: u16 = 1;

const FLAG_SAE: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ActivationShard {
    pub x: Array2<f32>,
    /// `None` for SAE shards, whose targets are the inputs.
    pub y: Option<Array2<f32>>,
}

impl ActivationShard {
    pub fn sae(x: Array2<f32>) -> Self {
        Self { x, y: None }
    }

    pub fn transcoder(x: Array2<f32>, y: Array2<f32>) -> Result<Self> {
        if x.nrows() != y.nrows() {
            return Err(Error::DimMismatch(format!(
                "{} inputs vs {} targets",
                x.nrows(),
                y.nrows()
            )));
        }
        Ok(Self { x, y: Some(y) })
    }

    pub fn is_sae(&self) -> bool {
        self.y.is_none()
    }

    pub fn d_in(&self) -> usize {
        self.x.ncols()
    }

    pub fn d_out(&self) -> usize {
        self.y.as_ref().map_or(self.x.ncols(), |y| y.ncols())
    }

    pub fn count(&self) -> usize {
        self.x.nrows()
    }

    pub fn targets(&self) -> ArrayView2<'_, f32> {
        self.y.as_ref().unwrap_or(&self.x).view()
    }
}

fn check_finite(a: &Array2<f32>, what: &str) -> Result<()> {
    if let Some(pos) = a.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!(
            "{what} record {}",
            pos / a.ncols().max(1)
        )));
    }
    Ok(())
}

pub fn write_shard(path: impl AsRef<Path>, shard: &ActivationShard) -> Result<()> {
    let path = path.as_ref();
    if shard.d_in() == 0 || shard.d_out() == 0 {
        return Err(Error::invalid("shard dims must be positive"));
    }
    check_finite(&shard.x, "shard input")?;
    if let Some(y) = &shard.y {
        check_finite(y, "shard target")?;
    }
    let rec = shard.d_in() + if shard.is_sae() { 0 } else { shard.d_out() };
    let mut w = LeWriter::with_capacity(24 + shard.count() * rec * 4);
    w.bytes(&SHARD_MAGIC);
    w.u16(SHARD_VERSION);
    w.u16(if shard.is_sae() { FLAG_SAE } else { 0 });
    w.u32(shard.d_in() as u32);
    w.u32(shard.d_out() as u32);
    w.u64(shard.count() as u64);
    match &shard.y {
        None => w.f32s(shard.x.iter().copied()),
        Some(y) => {
            for (xr, yr) in shard.x.rows().into_iter().zip(y.rows()) {
                w.f32s(xr.iter().copied());
                w.f32s(yr.iter().copied());
            }
        }
    }
    w.save(path)
}

pub fn read_shard(path: impl AsRef<Path>) -> Result<ActivationShard> {
    let bytes = read_file(path.as_ref())?;
    let mut r = LeReader::new(&bytes, "activation shard");
    r.magic(&SHARD_MAGIC)?;
    let version = r.u16()?;
    if version != SHARD_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let flags = r.u16()?;
    let d_in = r.u32()? as usize;
    let d_out = r.u32()? as usize;
    let count = r.u64()? as usize;
    let sae = flags & FLAG_SAE != 0;
    if d_in == 0 || d_out == 0 {
        return Err(Error::DimMismatch("zero dimension in shard header".into()));
    }
    if sae && d_in != d_out {
        return Err(Error::DimMismatch(format!(
            "SAE shard with d_in={d_in} != d_out={d_out}"
        )));
    }
    let rec = d_in + if sae { 0 } else { d_out };
    let expected = count
        .checked_mul(rec * 4)
        .ok_or_else(|| Error::DimMismatch("record count overflows".into()))?;
    if r.remaining() < expected {
        return Err(Error::Truncated(format!(
            "header declares {count} records ({expected} bytes), {} bytes present",
            r.remaining()
        )));
    }
    if r.remaining() > expected {
        return Err(Error::DimMismatch(format!(
            "{} trailing bytes beyond the {count} records declared",
            r.remaining() - expected
        )));
    }
    let shard = if sae {
        let x = Array2::from_shape_vec((count, d_in), r.f32s(count * d_in)?).unwrap();
        ActivationShard::sae(x)
    } else {
        let mut x = Array2::zeros((count, d_in));
        let mut y = Array2::zeros((count, d_out));
        for i in 0..count {
            let xs = r.f32s(d_in)?;
            let ys = r.f32s(d_out)?;
            x.row_mut(i).assign(&Array1::from(xs));
            y.row_mut(i).assign(&Array1::from(ys));
        }
        ActivationShard { x, y: Some(y) }
    };
    check_finite(&shard.x, "shard input")?;
    if let Some(y) = &shard.y {
        check_finite(y, "shard target")?;
    }
    Ok(shard)
}

/// Codes sidecar: `"SBCD"`, version, flags (0), `m_true u32`, `count u64`,
/// then per token `nnz u32` and `nnz` pairs of (`index u32`, `value f32`).
pub fn write_codes(path: impl AsRef<Path>, codes: &SparseCodes) -> Result<()> {
    let mut w = LeWriter::default();
    w.bytes(&CODES_MAGIC);
    w.u16(SHARD_VERSION);
    w.u16(0);
    w.u32(codes.m_true as u32);
    w.u64(codes.n_rows() as u64);
    for i in 0..codes.n_rows() {
        let (idx, vals) = codes.row(i);
        w.u32(idx.len() as u32);
        for (&j, &v) in idx.iter().zip(vals) {
            w.u32(j);
            w.f32(v);
        }
    }
    w.save(path.as_ref())
}

pub fn read_codes(path: impl AsRef<Path>) -> Result<SparseCodes> {
    let bytes = read_file(path.as_ref())?;
    let mut r = LeReader::new(&bytes, "code sidecar");
    r.magic(&CODES_MAGIC)?;
    let version = r.u16()?;
    if version != SHARD_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let _flags = r.u16()?;
    let m_true = r.u32()? as usize;
    let count = r.u64()?;
    let mut codes = SparseCodes::new(m_true);
    let (mut idx, mut vals) = (Vec::new(), Vec::new());
    for _ in 0..count {
        let nnz = r.u32()? as usize;
        idx.clear();
        vals.clear();
        for _ in 0..nnz {
            let j = r.u32()?;
            if j as usize >= m_true {
                return Err(Error::DimMismatch(format!(
                    "code index {j} >= m_true {m_true}"
                )));
            }
            idx.push(j);
            vals.push(r.f32()?);
        }
        codes.push_row(&idx, &vals);
    }
    if r.remaining() != 0 {
        return Err(Error::DimMismatch("trailing bytes in code sidecar".into()));
    }
    Ok(codes)
}

const GT_FLAG_BINARY: u16 = 1;
const GT_FLAG_TEACHER: u16 = 2;

/// Ground-truth sidecar: dictionary, firing probabilities, sampling
/// parameters and the optional teacher MLP.
pub fn write_ground_truth(
    path: impl AsRef<Path>,
    gt: &GroundTruth,
    teacher: Option<&Teacher>,
) -> Result<()> {
    let mut w = LeWriter::default();
    w.bytes(&GROUND_TRUTH_MAGIC);
    w.u16(SHARD_VERSION);
    let mut flags = 0;
    if gt.binary_codes {
        flags |= GT_FLAG_BINARY;
    }
    if teacher.is_some() {
        flags |= GT_FLAG_TEACHER;
    }
    w.u16(flags);
    w.u32(gt.m_true() as u32);
    w.u32(gt.d_in() as u32);
    w.u64(gt.seed);
    w.f64(gt.amplitude_low);
    w.f64(gt.amplitude_high);
    w.f64(gt.noise_sigma);
    for &p in &gt.firing_prob {
        w.f64(p);
    }
    w.f32s(gt.dictionary.iter().copied());
    if let Some(t) = teacher {
        w.u32(t.hidden() as u32);
        w.u32(t.d_out() as u32);
        w.u64(t.seed);
        w.f32s(t.w1.iter().copied());
        w.f32s(t.b1.iter().copied());
        w.f32s(t.w2.iter().copied());
        w.f32s(t.b2.iter().copied());
    }
    w.save(path.as_ref())
}

pub fn read_ground_truth(path: impl AsRef<Path>) -> Result<(GroundTruth, Option<Teacher>)> {
    let bytes = read_file(path.as_ref())?;
    let mut r = LeReader::new(&bytes, "ground truth");
    r.magic(&GROUND_TRUTH_MAGIC)?;
    let version = r.u16()?;
    if version != SHARD_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let flags = r.u16()?;
    let m = r.u32()? as usize;
    let d = r.u32()? as usize;
    let seed = r.u64()?;
    let amplitude_low = r.f64()?;
    let amplitude_high = r.f64()?;
    let noise_sigma = r.f64()?;
    let firing_prob = (0..m).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    let dictionary = Array2::from_shape_vec((m, d), r.f32s(m * d)?).unwrap();
    let teacher = if flags & GT_FLAG_TEACHER != 0 {
        let h = r.u32()? as usize;
        let d_out = r.u32()? as usize;
        let tseed = r.u64()?;
        let w1 = Array2::from_shape_vec((h, d), r.f32s(h * d)?).unwrap();
        let b1 = Array1::from(r.f32s(h)?);
        let w2 = Array2::from_shape_vec((d_out, h), r.f32s(d_out * h)?).unwrap();
        let b2 = Array1::from(r.f32s(d_out)?);
        Some(Teacher {
            w1,
            b1,
            w2,
            b2,
            seed: tseed,
        })
    } else {
        None
    };
    if r.remaining() != 0 {
        return Err(Error::DimMismatch("trailing bytes in ground truth".into()));
    }
    Ok((
        GroundTruth {
            dictionary,
            firing_prob,
            amplitude_low,
            amplitude_high,
            binary_codes: flags & GT_FLAG_BINARY != 0,
            noise_sigma,
            seed,
        },
        teacher,
    ))
}
