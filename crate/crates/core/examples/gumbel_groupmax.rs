//! Binary GroupMax SAEs: the straight-through Gumbel-Softmax estimator
//! against the sigmoid straight-through estimator, plus a look at the
//! sampling law of a single group.
//!
//! cargo run --release --example gumbel_groupmax -- [steps]

use sparse_coders::coder::{encode, evaluate_batch, fvu, CoderConfig, CoderParams};
use sparse_coders::datagen::{sample_batch, GroundTruth, SyntheticSpec};
use sparse_coders::metrics::recovery;
use sparse_coders::rng::Rng;
use sparse_coders::train::{train, SyntheticSource, TrainConfig};

fn main() -> sparse_coders::error::Result<()> {
    let steps = std::env::args().nth(1).map_or(1500, |s| s.parse().expect("steps"));

    // In training mode each group picks member j with probability softmax(a / tau)_j.
    let mut cfg = CoderConfig::sae(2, 4, 1).gumbel();
    cfg.gumbel_temperature = 1.0;
    let mut p = CoderParams::<f64>::zeros(&cfg);
    p.b_enc.assign(&ndarray::arr1(&[1.0, 0.0, -1.0, 0.5]));
    let mut counts = [0u32; 4];
    let mut rng = Rng::new(1);
    let draws = 50_000;
    for _ in 0..draws {
        let c = encode(&cfg, &p, &[0.0, 0.0], Some(&mut rng), true)?;
        counts[c.active_idx[0]] += 1;
    }
    let z: f64 = p.b_enc.iter().map(|a| a.exp()).sum();
    for (j, &c) in counts.iter().enumerate() {
        println!(
            "member {j}: sampled {:.4}, softmax {:.4}",
            c as f64 / draws as f64,
            p.b_enc[j].exp() / z
        );
    }

    let gt = GroundTruth::generate(&SyntheticSpec {
        seed: 2,
        m_true: 256,
        d_in: 48,
        k_true: 6.0,
        binary_codes: true,
        ..SyntheticSpec::default()
    })?;
    let held_out = sample_batch(&gt, None, 8192, &mut Rng::new(3))?;
    for coder in [
        CoderConfig::sae(48, 512, 16).binary().groupmax(),
        CoderConfig::sae(48, 512, 16).gumbel(),
    ] {
        let mut source = SyntheticSource::new(gt.clone(), None, 4);
        let mut tc = TrainConfig::new(coder.clone()).with_steps(steps, 512);
        tc.log_every = steps;
        let out = train(&tc, &mut source, None, None)?;
        let eval = evaluate_batch(&coder, &out.params, held_out.x.view(), None)?;
        println!(
            "{:<32} fvu {:.4}  mmcs {:.4}",
            coder.variant_name(),
            fvu(eval.y_hat.view(), held_out.y.view())?,
            recovery(&gt, out.params.w_dec.view())?.mmcs
        );
    }
    Ok(())
}
