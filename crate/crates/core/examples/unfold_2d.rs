//! Detector unfolding on a 2D toy: truth is a correlated Gaussian, the
//! detector adds independent N(0, 0.3²) noise. A conditional velocity network
//! learns the truth given the detector event, and the unfolded sample is
//! compared with the truth both as a distribution and event by event.
//!
//! `cargo run --release --example unfold_2d [epochs]`

use kinflow::datasets::{apply_preprocess, fit_preprocess, FeatureMatrix, Space};
use kinflow::metrics::{correlation_distance, wasserstein_1d};
use kinflow::odeint::{unfold, SolverConfig};
use kinflow::train::{train, TrainConfig, TrainData};
use kinflow::velocity::{NetConfig, NetMode};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const RHO: f64 = 0.8;
const NOISE: f64 = 0.3;

fn toy(n: usize, seed: u64) -> kinflow::Result<(FeatureMatrix, FeatureMatrix)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut truth = Vec::with_capacity(n);
    let mut det = Vec::with_capacity(n);
    for _ in 0..n {
        let z: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
        let t = [z[0], RHO * z[0] + (1.0 - RHO * RHO).sqrt() * z[1]];
        det.push(vec![t[0] + NOISE * z[2], t[1] + NOISE * z[3]]);
        truth.push(t.to_vec());
    }
    Ok((
        FeatureMatrix::from_rows_f64(&truth, Space::Physical)?,
        FeatureMatrix::from_rows_f64(&det, Space::Physical)?,
    ))
}

fn rms_residual(a: &FeatureMatrix, b: &FeatureMatrix) -> f64 {
    let (x, y) = (a.matrix().values(), b.matrix().values());
    let ss: f64 = x.iter().zip(y).map(|(p, q)| (*p as f64 - *q as f64).powi(2)).sum();
    (ss / x.len() as f64).sqrt()
}

fn main() -> kinflow::Result<()> {
    let epochs = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(30);
    let (truth, det) = toy(50_000, 1)?;
    let stats = fit_preprocess(&truth, 1.0)?;
    let data = TrainData::paired(apply_preprocess(&truth, &stats)?, apply_preprocess(&det, &stats)?, stats);

    let cfg = TrainConfig { max_epochs: epochs, ..TrainConfig::desk_scale() };
    let net = NetConfig::miniature(2, 64, 2, NetMode::Conditional);
    let out = train(net, &data, &cfg, 1, |e| {
        let l = e.log;
        println!("epoch {:>3}  loss {:.5}  val {:.5}  W1 {:.4}  lr {:.1e}", l.epoch, l.train_loss, l.val_loss, l.wasserstein_mean, l.lr);
        Ok(())
    })?;

    let best = out.best.expect("fresh run has a best record");
    let (test_truth, test_det) = toy(20_000, 2)?;
    let u = unfold(&best.network()?, &best.stats, &test_det, &SolverConfig::relaxed(), 5, 1)?;
    for j in 0..2 {
        let w_det = wasserstein_1d(&test_det.column_f64(j), &test_truth.column_f64(j))?;
        let w_unf = wasserstein_1d(&u.events.column_f64(j), &test_truth.column_f64(j))?;
        println!("feature {j}: W1 detector {w_det:.4}, unfolded {w_unf:.4}");
    }
    println!(
        "D_corr detector {:.4}, unfolded {:.4}",
        correlation_distance(&test_det, &test_truth)?,
        correlation_distance(&u.events, &test_truth)?
    );
    println!(
        "per-event RMS residual: detector {:.4}, unfolded draw {:.4}; mean NFE {:.1}",
        rms_residual(&test_det, &test_truth),
        rms_residual(&u.events, &test_truth),
        u.nfe_mean
    );
    Ok(())
}
