//! Train a continuous TopK SAE on noiseless synthetic data and measure how
//! well it recovers the generating dictionary.
//!
//! cargo run --release --example train_topk_sae -- [steps] [batch]

use std::time::Instant;

use sparse_coders::coder::CoderConfig;
use sparse_coders::datagen::{GroundTruth, SyntheticSpec};
use sparse_coders::metrics::{recovery, MatchStrategy, recovery_with};
use sparse_coders::train::{train, SyntheticSource, TrainConfig};

fn main() -> sparse_coders::error::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<u64>().expect("integer argument"));
    let steps = args.next().unwrap_or(5000);
    let batch = args.next().unwrap_or(1024) as usize;

    let gt = GroundTruth::generate(&SyntheticSpec {
        seed: 1,
        m_true: 256,
        d_in: 64,
        k_true: 8.0,
        noise_sigma: 0.0,
        ..SyntheticSpec::default()
    })?;
    let mut source = SyntheticSource::new(gt.clone(), None, 7);

    let mut cfg = TrainConfig::new(CoderConfig::sae(64, 256, 8)).with_steps(steps, batch);
    cfg.log_every = (steps / 10).max(1);

    let start = Instant::now();
    let out = train(&cfg, &mut source, Some(&gt), None)?;
    for r in &out.log.records {
        println!(
            "step {:>5}  fvu {:.4}  dead {:.3}  mmcs {:.4}",
            r.step,
            r.fvu,
            r.dead_fraction,
            r.mmcs.unwrap_or(f64::NAN)
        );
    }
    let greedy = recovery(&gt, out.params.w_dec.view())?;
    let optimal = recovery_with(&gt, out.params.w_dec.view(), MatchStrategy::Optimal)?;
    println!("greedy mmcs {:.4}, optimal mmcs {:.4}", greedy.mmcs, optimal.mmcs);
    println!("trained in {:.1?}", start.elapsed());
    Ok(())
}
