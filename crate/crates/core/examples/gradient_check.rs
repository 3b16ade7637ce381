//! Compare analytic gradients of the squared reconstruction error with
//! central finite differences, in f64.
//!
//! Continuous TopK coders are piecewise smooth, so the two agree away from
//! selection ties. Binary coders use a surrogate gradient, shown separately.
//!
//! cargo run --release --example gradient_check

use sparse_coders::coder::{
    backward, forward, mse_grad, mse_loss, sigmoid_ste_slope, CoderConfig, CoderKind, CoderParams,
};
use sparse_coders::rng::Rng;

fn loss(cfg: &CoderConfig, p: &CoderParams<f64>, x: &[f64], y: &[f64]) -> f64 {
    let (y_hat, _) = forward(cfg, p, x, None, false).unwrap();
    mse_loss(&y_hat, y)
}

fn check(cfg: &CoderConfig, seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let mut p = CoderParams::<f64>::zeros(cfg);
    for s in p.slices_mut() {
        for v in s {
            *v = 0.5 * rng.normal();
        }
    }
    let x: Vec<f64> = (0..cfg.d_in).map(|_| rng.normal()).collect();
    let y: Vec<f64> = (0..cfg.d_out).map(|_| rng.normal()).collect();

    let (y_hat, cache) = forward(cfg, &p, &x, None, false).unwrap();
    let g = backward(cfg, &p, &cache, &mse_grad(&y_hat, &y)).unwrap();
    let analytic: Vec<f64> = g.params.slices().iter().flat_map(|s| s.to_vec()).collect();

    let h = 1e-6;
    let mut worst: f64 = 0.0;
    let mut flat = 0;
    for s in 0..p.slices().len() {
        for i in 0..p.slices()[s].len() {
            let orig = p.slices()[s][i];
            p.slices_mut()[s][i] = orig + h;
            let up = loss(cfg, &p, &x, &y);
            p.slices_mut()[s][i] = orig - h;
            let down = loss(cfg, &p, &x, &y);
            p.slices_mut()[s][i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[flat];
            worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8));
            flat += 1;
        }
    }
    worst
}

fn main() {
    for cfg in [
        CoderConfig::sae(6, 16, 3),
        CoderConfig::new(CoderKind::Transcoder, 6, 4, 16, 3),
        CoderConfig::new(CoderKind::SkipTranscoder, 6, 4, 16, 3),
        CoderConfig::sae(6, 16, 4).groupmax(),
    ] {
        let worst = (0..5).map(|s| check(&cfg, s)).fold(0.0, f64::max);
        println!("{:<32} max relative error {worst:.2e}", cfg.variant_name());
    }

    println!("sigmoid straight-through slope at temperature 2:");
    for a in [-4.0, -1.0, 0.0, 1.0, 4.0] {
        println!("  a = {a:>4}: {:.4}", sigmoid_ste_slope(a, 2.0f64));
    }
}
