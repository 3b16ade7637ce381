//! Score each learned latent against the true feature it was matched to:
//! precision, recall and F1 over a token stream, then aggregate.
//!
//! cargo run --release --example interpretability_scores -- [steps]

use sparse_coders::coder::{evaluate_batch, CoderConfig};
use sparse_coders::datagen::{sample_batch, GroundTruth, SyntheticSpec};
use sparse_coders::metrics::{aggregate, oracle_f1, recovery, FeatureStats};
use sparse_coders::rng::Rng;
use sparse_coders::train::{train, SyntheticSource, TrainConfig};

fn main() -> sparse_coders::error::Result<()> {
    let steps = std::env::args().nth(1).map_or(2000, |s| s.parse().expect("steps"));
    let gt = GroundTruth::generate(&SyntheticSpec {
        seed: 31,
        m_true: 192,
        d_in: 48,
        k_true: 5.0,
        ..SyntheticSpec::default()
    })?;
    let held_out = sample_batch(&gt, None, 20_000, &mut Rng::new(32))?;
    let codes = held_out.codes.as_ref().unwrap();

    for coder in [CoderConfig::sae(48, 192, 6), CoderConfig::sae(48, 192, 6).binary()] {
        let mut source = SyntheticSource::new(gt.clone(), None, 33);
        let mut tc = TrainConfig::new(coder.clone()).with_steps(steps, 512);
        tc.log_every = steps;
        let params = train(&tc, &mut source, None, None)?.params;

        let rec = recovery(&gt, params.w_dec.view())?;
        let eval = evaluate_batch(&coder, &params, held_out.x.view(), None)?;
        let stats = FeatureStats::from_active(coder.n_latents, &eval.active);
        let f1 = oracle_f1(&eval.active, codes, &rec.matching)?;
        let scores = f1.scores();
        println!(
            "{}: mmcs {:.3}, {} scorable latents, F1 unweighted {:.3}, weighted by fire count {:.3}",
            coder.variant_name(),
            rec.mmcs,
            f1.scorable(),
            aggregate(&scores, &stats, false)?,
            aggregate(&scores, &stats, true)?
        );

        let mut ranked: Vec<usize> = (0..coder.n_latents).filter(|&i| scores[i].is_some()).collect();
        ranked.sort_by(|&a, &b| scores[b].unwrap().total_cmp(&scores[a].unwrap()));
        for &i in ranked.iter().take(3).chain(ranked.iter().rev().take(3)) {
            let f = &f1.features[i];
            println!(
                "  latent {i:>3} -> feature {:>3}: tp {:>5} fp {:>5} fn {:>5}  f1 {:.3}  cos {:.3}",
                f.matched_true_feature.unwrap(),
                f.tp,
                f.fp,
                f.fn_,
                f.f1.unwrap(),
                rec.similarity[i]
            );
        }
    }
    Ok(())
}
