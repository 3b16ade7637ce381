//! Train a continuous and a binary TopK SAE on the same data and compare
//! reconstruction error and firing-rate tails.
//!
//! cargo run --release --example binary_vs_continuous -- [steps]

use sparse_coders::coder::{evaluate_batch, fvu, CoderConfig};
use sparse_coders::datagen::{sample_batch, GroundTruth, SyntheticSpec};
use sparse_coders::metrics::{flag_ultra_high, FeatureStats, MAJORITY_THRESHOLD, ULTRA_HIGH_THRESHOLD};
use sparse_coders::rng::Rng;
use sparse_coders::train::{train, SyntheticSource, TrainConfig};

fn main() -> sparse_coders::error::Result<()> {
    let steps = std::env::args().nth(1).map_or(2000, |s| s.parse().expect("steps"));
    let gt = GroundTruth::generate(&SyntheticSpec {
        seed: 11,
        m_true: 256,
        d_in: 48,
        k_true: 6.0,
        ..SyntheticSpec::default()
    })?;
    let held_out = sample_batch(&gt, None, 16_384, &mut Rng::new(99))?;

    for coder in [CoderConfig::sae(48, 384, 8), CoderConfig::sae(48, 384, 8).binary()] {
        let mut source = SyntheticSource::new(gt.clone(), None, 1);
        let mut cfg = TrainConfig::new(coder.clone()).with_steps(steps, 512);
        cfg.log_every = steps;
        let out = train(&cfg, &mut source, None, None)?;

        let eval = evaluate_batch(&coder, &out.params, held_out.x.view(), None)?;
        let stats = FeatureStats::from_active(coder.n_latents, &eval.active);
        let mut rates = stats.firing_rate.clone();
        rates.sort_by(|a, b| b.total_cmp(a));
        println!(
            "{:<24} fvu {:.4}  dead {:>3}  rate>{ULTRA_HIGH_THRESHOLD} {:>3}  rate>{MAJORITY_THRESHOLD} {:>2}  top rates {:.3?}",
            coder.variant_name(),
            fvu(eval.y_hat.view(), held_out.y.view())?,
            stats.dead().len(),
            flag_ultra_high(&stats, ULTRA_HIGH_THRESHOLD)?.len(),
            flag_ultra_high(&stats, MAJORITY_THRESHOLD)?.len(),
            &rates[..4]
        );
    }
    Ok(())
}
