//! Physics-informed validation metrics on samples with known differences:
//! binned χ², Wasserstein-1, the 2D χ² and correlation distance, and the
//! nearest-neighbour memorisation ratio.
//!
//! `cargo run --release --example metrics`

use kinflow::datasets::{FeatureMatrix, Space};
use kinflow::metrics::{evaluate, nn_memorization, EvalOptions, NnConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn correlated(n: usize, rho: f64, shift: f64, seed: u64) -> kinflow::Result<FeatureMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = Normal::new(0.0, 1.0).unwrap();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let (a, b): (f64, f64) = (z.sample(&mut rng), z.sample(&mut rng));
            vec![a + shift, rho * a + (1.0 - rho * rho).sqrt() * b]
        })
        .collect();
    FeatureMatrix::from_rows_f64(&rows, Space::Physical)
}

fn main() -> kinflow::Result<()> {
    let truth = correlated(50_000, 0.8, 0.0, 1)?;
    let train = correlated(50_000, 0.8, 0.0, 2)?;
    let cases = [
        ("independent draw", correlated(50_000, 0.8, 0.0, 3)?),
        ("shifted by 0.1", correlated(50_000, 0.8, 0.1, 4)?),
        ("decorrelated", correlated(50_000, 0.0, 0.0, 5)?),
        ("copy of train", train.clone()),
    ];
    println!("{:<18} {:>9} {:>9} {:>9} {:>7} {:>7}", "generated", "chi2", "W1", "chi2 2D", "D_corr", "R_NN");
    for (name, gen) in &cases {
        let r = evaluate(gen, &truth, Some(&train), &EvalOptions::default())?;
        let nn = r.nn.as_ref().and_then(|n| n.nn_ratio).unwrap_or(f64::NAN);
        println!(
            "{name:<18} {:>9.2} {:>9.2e} {:>9.2} {:>7.3} {:>7.3}",
            r.chi2_mean.unwrap_or(f64::NAN),
            r.wasserstein_mean,
            r.chi2_2d_mean.unwrap_or(f64::NAN),
            r.correlation_distance.unwrap_or(f64::NAN),
            nn
        );
    }

    let m = train.matrix().cast::<f64>();
    let report = nn_memorization(&m, &m, &NnConfig::default())?;
    println!("\ntrain against itself: {report:?}");
    Ok(())
}
