//! Generate a synthetic dataset with a known dictionary, write it as shards
//! and read it back.
//!
//! cargo run --release --example synthetic_data -- [out_dir]

use std::path::PathBuf;

use sparse_coders::datagen::{
    read_codes, read_shard, sample_batch, write_codes, write_shard, ActivationShard, GroundTruth,
    SyntheticSpec, Teacher,
};
use sparse_coders::rng::Rng;

fn main() -> sparse_coders::error::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("sparse-coders-synthetic"));
    std::fs::create_dir_all(&out).expect("create output dir");

    let spec = SyntheticSpec {
        seed: 3,
        m_true: 512,
        d_in: 64,
        ..SyntheticSpec::default()
    };
    let gt = GroundTruth::generate(&spec)?;
    let teacher = Teacher::new(4, 64, 256, 48)?;

    let (lo, hi) = gt
        .firing_prob
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &p| (lo.min(p), hi.max(p)));
    println!(
        "{} features in {} dims, firing probabilities {lo:.2e}..{hi:.2e}, expected {:.2} active per token",
        gt.m_true(),
        gt.d_in(),
        gt.firing_prob.iter().sum::<f64>()
    );

    let batch = sample_batch(&gt, Some(&teacher), 10_000, &mut Rng::new(5))?;
    let codes = batch.codes.as_ref().expect("synthetic batches carry codes");
    let active: u64 = codes.fire_counts().iter().sum();
    println!(
        "sampled {} tokens, {:.2} active features per token, x {:?} -> y {:?}",
        batch.len(),
        active as f64 / batch.len() as f64,
        batch.x.dim(),
        batch.y.dim()
    );

    let shard = ActivationShard::transcoder(batch.x.clone(), batch.y.clone())?;
    let shard_path = out.join("shard_000.sbsh");
    let codes_path = out.join("shard_000.sbcd");
    write_shard(&shard_path, &shard)?;
    write_codes(&codes_path, codes)?;
    let back = read_shard(&shard_path)?;
    assert_eq!(back, shard);
    assert_eq!(&read_codes(&codes_path)?, codes);
    println!(
        "wrote and re-read {} ({} tokens, d_in {}, d_out {})",
        shard_path.display(),
        back.count(),
        back.d_in(),
        back.d_out()
    );
    Ok(())
}
