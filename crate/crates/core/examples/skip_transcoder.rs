//! Transcoders approximate a teacher MLP from its input. Compare a plain
//! transcoder with a skip-transcoder, in reconstruction and in the loss a
//! downstream readout suffers when the teacher output is patched.
//!
//! cargo run --release --example skip_transcoder -- [steps]

use sparse_coders::coder::{evaluate_batch, fvu, CoderConfig, CoderKind};
use sparse_coders::datagen::{sample_batch, GroundTruth, SyntheticSpec, Teacher};
use sparse_coders::metrics::{class_labels, designate_features, patch_loss_increase, Readout, ReadoutFit};
use sparse_coders::rng::Rng;
use sparse_coders::train::{train, SyntheticSource, TrainConfig};

fn main() -> sparse_coders::error::Result<()> {
    let steps = std::env::args().nth(1).map_or(2000, |s| s.parse().expect("steps"));
    let gt = GroundTruth::generate(&SyntheticSpec {
        seed: 21,
        m_true: 256,
        d_in: 32,
        k_true: 6.0,
        ..SyntheticSpec::default()
    })?;
    let teacher = Teacher::new(22, 32, 128, 32)?;
    let held_out = sample_batch(&gt, Some(&teacher), 8192, &mut Rng::new(23))?;

    // A readout that predicts which frequent feature dominates the token.
    let classes = designate_features(&gt, 4)?;
    let labels = class_labels(held_out.codes.as_ref().unwrap(), &classes);
    let readout = Readout::fit(held_out.y.view(), &labels, classes.len() + 1, ReadoutFit::default())?;
    println!(
        "readout on teacher outputs: accuracy {:.3}, cross-entropy {:.4}",
        readout.accuracy(held_out.y.view(), &labels),
        readout.cross_entropy(held_out.y.view(), &labels)?
    );

    for kind in [CoderKind::Transcoder, CoderKind::SkipTranscoder] {
        for binary in [false, true] {
            let mut coder = CoderConfig::new(kind, 32, 32, 256, 8);
            if binary {
                coder = coder.binary();
            }
            let mut source = SyntheticSource::new(gt.clone(), Some(teacher.clone()), 24);
            let mut tc = TrainConfig::new(coder.clone()).with_steps(steps, 512);
            tc.log_every = steps;
            let out = train(&tc, &mut source, None, None)?;
            let eval = evaluate_batch(&coder, &out.params, held_out.x.view(), None)?;
            let inc = patch_loss_increase(
                &coder,
                &out.params,
                &readout,
                held_out.x.view(),
                held_out.y.view(),
                &labels,
            )?;
            println!(
                "{:<36} fvu {:.4}  patched loss increase {inc:+.4}",
                coder.variant_name(),
                fvu(eval.y_hat.view(), held_out.y.view())?
            );
        }
    }
    Ok(())
}
