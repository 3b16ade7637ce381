use std::path::{Path, PathBuf};

use ndarray::{s, Array2};

use crate::datagen::{
    read_codes, read_shard, sample_batch, DataBatch, GroundTruth, SparseCodes, Teacher,
};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Random-access supplier of training batches.
///
/// `batch(i, n)` must be a pure function of `(i, n)` so that training is
/// reproducible and resumable.
pub trait BatchSource: Send {
    /// `(d_in, d_out)`
    fn dims(&self) -> (usize, usize);

    fn batch(&mut self, index: u64, n: usize) -> Result<DataBatch>;

    /// Sample used for initialization statistics.
    fn stats_batch(&mut self, n: usize) -> Result<DataBatch>;
}

/// Endless synthetic stream; batch `i` is drawn from its own rng stream.
#[derive(Debug, Clone)]
pub struct SyntheticSource {
    pub gt: GroundTruth,
    pub teacher: Option<Teacher>,
    pub seed: u64,
}

impl SyntheticSource {
    pub fn new(gt: GroundTruth, teacher: Option<Teacher>, seed: u64) -> Self {
        Self { gt, teacher, seed }
    }
}

impl BatchSource for SyntheticSource {
    fn dims(&self) -> (usize, usize) {
        let d = self.gt.d_in();
        (d, self.teacher.as_ref().map_or(d, |t| t.d_out()))
    }

    fn batch(&mut self, index: u64, n: usize) -> Result<DataBatch> {
        let mut rng = Rng::stream(self.seed, index.wrapping_add(1));
        sample_batch(&self.gt, self.teacher.as_ref(), n, &mut rng)
    }

    fn stats_batch(&mut self, n: usize) -> Result<DataBatch> {
        let mut rng = Rng::stream(self.seed, 0);
        sample_batch(&self.gt, self.teacher.as_ref(), n, &mut rng)
    }
}

/// All tokens of a shard directory held in memory and served cyclically.
#[derive(Debug, Clone)]
pub struct ShardSource {
    x: Array2<f32>,
    y: Array2<f32>,
    codes: Option<SparseCodes>,
    sae: bool,
}

/// Shard files (`*.sbsh`) in a directory, sorted by name.
pub fn shard_paths(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "sbsh"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Empty(format!("no .sbsh shards in {}", dir.display())));
    }
    Ok(paths)
}

impl ShardSource {
    /// Loads every shard in `dir`; code sidecars (`*.sbcd` next to each
    /// shard) are attached when all of them exist.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let paths = shard_paths(dir.as_ref())?;
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        let mut codes: Option<SparseCodes> = None;
        let mut all_codes = true;
        let mut dims = None;
        let mut sae = true;
        for p in &paths {
            let shard = read_shard(p)?;
            sae &= shard.is_sae();
            let d = (shard.d_in(), shard.d_out());
            if *dims.get_or_insert(d) != d {
                return Err(Error::DimMismatch(format!(
                    "{} has dims {:?}, earlier shards {:?}",
                    p.display(),
                    d,
                    dims.unwrap()
                )));
            }
            let cp = p.with_extension("sbcd");
            if all_codes && cp.exists() {
                let c = read_codes(&cp)?;
                if c.n_rows() != shard.count() {
                    return Err(Error::DimMismatch(format!(
                        "{} has {} rows, shard has {}",
                        cp.display(),
                        c.n_rows(),
                        shard.count()
                    )));
                }
                codes.get_or_insert_with(|| SparseCodes::new(c.m_true)).append(&c);
            } else {
                all_codes = false;
            }
            ys.push(shard.targets().to_owned());
            xs.push(shard.x);
        }
        let views: Vec<_> = xs.iter().map(|a| a.view()).collect();
        let x = ndarray::concatenate(ndarray::Axis(0), &views).expect("equal widths");
        let views: Vec<_> = ys.iter().map(|a| a.view()).collect();
        let y = ndarray::concatenate(ndarray::Axis(0), &views).expect("equal widths");
        if x.nrows() == 0 {
            return Err(Error::Empty(format!("shards in {} hold no tokens", dir.as_ref().display())));
        }
        Ok(Self {
            x,
            y,
            codes: if all_codes { codes } else { None },
            sae,
        })
    }

    pub fn from_batch(batch: DataBatch) -> Result<Self> {
        if batch.is_empty() {
            return Err(Error::Empty("empty batch".into()));
        }
        Ok(Self {
            sae: batch.x == batch.y,
            x: batch.x,
            y: batch.y,
            codes: batch.codes,
        })
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    /// True when targets are the inputs themselves.
    pub fn is_sae(&self) -> bool {
        self.sae
    }

    pub fn has_codes(&self) -> bool {
        self.codes.is_some()
    }

    /// Tokens `start..start + n`, wrapping around the end.
    pub fn window(&self, start: usize, n: usize) -> DataBatch {
        let total = self.len();
        let mut x = Array2::zeros((n, self.x.ncols()));
        let mut y = Array2::zeros((n, self.y.ncols()));
        let mut codes = self.codes.as_ref().map(|c| SparseCodes::new(c.m_true));
        let mut filled = 0;
        let mut pos = start % total;
        while filled < n {
            let take = (total - pos).min(n - filled);
            x.slice_mut(s![filled..filled + take, ..])
                .assign(&self.x.slice(s![pos..pos + take, ..]));
            y.slice_mut(s![filled..filled + take, ..])
                .assign(&self.y.slice(s![pos..pos + take, ..]));
            if let (Some(dst), Some(src)) = (&mut codes, &self.codes) {
                dst.append(&src.slice(pos, pos + take));
            }
            filled += take;
            pos = (pos + take) % total;
        }
        DataBatch { x, y, codes }
    }

    /// Everything, in file order.
    pub fn all(&self) -> DataBatch {
        self.window(0, self.len())
    }
}

impl BatchSource for ShardSource {
    fn dims(&self) -> (usize, usize) {
        (self.x.ncols(), self.y.ncols())
    }

    fn batch(&mut self, index: u64, n: usize) -> Result<DataBatch> {
        let start = (index as u128 * n as u128 % self.len() as u128) as usize;
        Ok(self.window(start, n))
    }

    fn stats_batch(&mut self, n: usize) -> Result<DataBatch> {
        Ok(self.window(0, n.min(self.len())))
    }
}
