//! Trains a miniature velocity network on the 1D gaussian mock and reports
//! the per-epoch loss and physics metrics.
//!
//! `cargo run --release --example train_gaussian [epochs]`

use kinflow::datasets::{apply_preprocess, fit_preprocess, sample_mock, MockFamily, MockSpec};
use kinflow::metrics::wasserstein_1d;
use kinflow::odeint::{generate, SolverConfig};
use kinflow::train::{train, TrainConfig, TrainData};
use kinflow::velocity::{NetConfig, NetMode};

fn main() -> kinflow::Result<()> {
    let epochs = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(40);
    let raw = sample_mock(&MockSpec::new(MockFamily::Gaussian, 100_000, 1))?;
    let stats = fit_preprocess(&raw, 1.0)?;
    let data = TrainData::generative(apply_preprocess(&raw, &stats)?, stats);

    let cfg = TrainConfig { max_epochs: epochs, ..TrainConfig::desk_scale() };
    let net = NetConfig::miniature(1, 64, 2, NetMode::Unconditional);
    let out = train(net, &data, &cfg, 1, |e| {
        let l = e.log;
        println!(
            "epoch {:>3}  loss {:.5}  val {:.5}  chi2 {:>8.3}  W1 {:.4}  nfe {:>5.1}  lr {:.1e}  {:.1}s",
            l.epoch, l.train_loss, l.val_loss, l.chi2_mean.unwrap_or(f64::NAN), l.wasserstein_mean, l.nfe_mean, l.lr, l.seconds
        );
        Ok(())
    })?;

    let best = out.best.expect("fresh run has a best record");
    let fresh = sample_mock(&MockSpec::new(MockFamily::Gaussian, 100_000, 2))?;
    let gen = generate(&best.network()?, &best.stats, 20_000, &SolverConfig::generation(), 3, 1)?;
    let w1 = wasserstein_1d(&gen.events.column_f64(0), &fresh.column_f64(0))?;
    println!("best epoch {}: W1 vs fresh truth {w1:.4e}, mean NFE {:.1}", best.epoch, gen.nfe_mean);
    Ok(())
}
