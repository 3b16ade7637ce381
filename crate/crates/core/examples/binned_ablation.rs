//! Sort live latents by F1, split them into bins of equal total fire count,
//! zero-ablate one bin at a time and report the loss increase.
//!
//! cargo run --release --example binned_ablation -- [steps] [bins]

use sparse_coders::coder::{evaluate_batch, CoderConfig, CoderKind};
use sparse_coders::datagen::{sample_batch, GroundTruth, SyntheticSpec, Teacher};
use sparse_coders::metrics::{binned_ablation, learned_directions, oracle_f1, recovery, Downstream, FeatureStats};
use sparse_coders::rng::Rng;
use sparse_coders::train::{train, SyntheticSource, TrainConfig};

fn main() -> sparse_coders::error::Result<()> {
    let mut args = std::env::args().skip(1);
    let steps = args.next().map_or(1500, |s| s.parse().expect("steps"));
    let bins = args.next().map_or(8, |s| s.parse().expect("bins"));

    let gt = GroundTruth::generate(&SyntheticSpec {
        seed: 41,
        m_true: 256,
        d_in: 32,
        k_true: 6.0,
        ..SyntheticSpec::default()
    })?;
    let teacher = Teacher::new(42, 32, 128, 32)?;
    let coder = CoderConfig::new(CoderKind::SkipTranscoder, 32, 32, 256, 8);
    let mut source = SyntheticSource::new(gt.clone(), Some(teacher.clone()), 43);
    let mut tc = TrainConfig::new(coder.clone()).with_steps(steps, 512);
    tc.log_every = steps;
    let params = train(&tc, &mut source, None, None)?.params;

    let data = sample_batch(&gt, Some(&teacher), 16_384, &mut Rng::new(44))?;
    let eval = evaluate_batch(&coder, &params, data.x.view(), None)?;
    let stats = FeatureStats::from_active(coder.n_latents, &eval.active);
    let rec = recovery(&gt, learned_directions(&coder, &params))?;
    let mut scores = oracle_f1(&eval.active, data.codes.as_ref().unwrap(), &rec.matching)?.scores();
    // every live latent needs a score; unmatched ones get the worst
    for (s, &c) in scores.iter_mut().zip(&stats.fire_count) {
        if s.is_none() && c > 0 {
            *s = Some(0.0);
        }
    }

    let curve = binned_ablation(
        &coder,
        &params,
        &scores,
        &stats,
        data.x.view(),
        data.y.view(),
        bins,
        Downstream::Mse,
    )?;
    print!("{}", curve.to_csv());
    Ok(())
}
