//! Predict whether a frequent true feature is present from a single latent,
//! chosen by class-mean difference, with a cross-validated logistic probe.
//! A single raw input dimension is the baseline.
//!
//! cargo run --release --example sparse_probing -- [steps]

use sparse_coders::coder::CoderConfig;
use sparse_coders::datagen::{sample_batch, GroundTruth, SyntheticSpec};
use sparse_coders::metrics::{dense_latents, designate_features, labels_from_codes, sparse_probe, ProbeConfig};
use sparse_coders::rng::Rng;
use sparse_coders::train::{train, SyntheticSource, TrainConfig};

fn main() -> sparse_coders::error::Result<()> {
    let steps = std::env::args().nth(1).map_or(1500, |s| s.parse().expect("steps"));
    let gt = GroundTruth::generate(&SyntheticSpec {
        seed: 51,
        m_true: 192,
        d_in: 48,
        k_true: 5.0,
        ..SyntheticSpec::default()
    })?;
    let data = sample_batch(&gt, None, 6000, &mut Rng::new(52))?;
    let codes = data.codes.as_ref().unwrap();
    let targets = designate_features(&gt, 5)?;

    let mut coders = Vec::new();
    for coder in [CoderConfig::sae(48, 256, 6), CoderConfig::sae(48, 256, 6).binary()] {
        let mut source = SyntheticSource::new(gt.clone(), None, 53);
        let mut tc = TrainConfig::new(coder.clone()).with_steps(steps, 512);
        tc.log_every = steps;
        let params = train(&tc, &mut source, None, None)?.params;
        let z = dense_latents(&coder, &params, data.x.view())?;
        coders.push((coder.variant_name(), z));
    }

    let cfg = ProbeConfig::default();
    println!("feature  p(fire)  raw input  {}", coders.iter().map(|(n, _)| n.as_str()).collect::<Vec<_>>().join("  "));
    for &f in &targets {
        let labels = labels_from_codes(codes, &[f]);
        let mut line = format!(
            "{f:>7}  {:>7.3}  {:>9.3}",
            gt.firing_prob[f],
            sparse_probe(data.x.view(), &labels, cfg)?
        );
        for (name, z) in &coders {
            line.push_str(&format!("  {:>w$.3}", sparse_probe(z.view(), &labels, cfg)?, w = name.len()));
        }
        println!("{line}");
    }
    Ok(())
}
