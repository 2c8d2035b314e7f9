use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::dopri5::{dopri5, IntegrationResult, SolverConfig, Stepping};
use crate::datasets::{apply_preprocess, invert_preprocess, FeatureMatrix, PreprocessStats, Space};
use crate::error::{Error, Result};
use crate::numerics::{derive_seed, Matrix};
use crate::velocity::{NetMode, VelocityNet};

/// Events produced by integrating a trained field, in physical units.
#[derive(Clone, Debug, PartialEq)]
pub struct Sampled {
    pub events: FeatureMatrix,
    /// Mean number of field evaluations seen by each event's trajectory.
    pub nfe_mean: f64,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

/// Prior draw `x₀ ~ N(0, I)` for one event, keyed so it does not depend on
/// which other events are sampled alongside it.
pub fn prior_row(seed: u64, key: u64, dim: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, key));
    (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect()
}

fn prior(seed: u64, keys: &[u64], dim: usize) -> Matrix<f64> {
    let values = keys.iter().flat_map(|&k| prior_row(seed, k, dim)).collect();
    Matrix::from_vec(keys.len(), dim, values).expect("sized")
}

/// Integrates the network's field from `t = 0` to `1` starting at `x0`
/// (standardized space), with an optional fixed condition per row.
pub fn integrate_field(
    net: &VelocityNet<f32>,
    x0: &Matrix<f64>,
    cond: Option<&Matrix<f32>>,
    cfg: &SolverConfig,
) -> Result<IntegrationResult> {
    let field = |t: f64, x: &Matrix<f64>| -> Result<Matrix<f64>> {
        let times = vec![t; x.rows()];
        Ok(net.forward(&x.cast(), &times, cond)?.cast())
    };
    dopri5(field, x0, (0.0, 1.0), cfg)
}

struct ChunkOut {
    state: Matrix<f64>,
    nfe_total: usize,
    accepted: usize,
    rejected: usize,
}

fn run_chunk(net: &VelocityNet<f32>, x0: &Matrix<f64>, cond: Option<&Matrix<f32>>, cfg: &SolverConfig) -> Result<ChunkOut> {
    match cfg.stepping {
        Stepping::Shared => {
            let r = integrate_field(net, x0, cond, cfg)?;
            Ok(ChunkOut {
                nfe_total: r.nfe * x0.rows(),
                state: r.state,
                accepted: r.accepted_steps,
                rejected: r.rejected_steps,
            })
        }
        Stepping::PerTrajectory => {
            let mut out = ChunkOut {
                state: Matrix::zeros(x0.rows(), x0.cols()),
                nfe_total: 0,
                accepted: 0,
                rejected: 0,
            };
            for i in 0..x0.rows() {
                let xi = x0.select_rows(&[i]);
                let ci = cond.map(|c| c.select_rows(&[i]));
                let r = integrate_field(net, &xi, ci.as_ref(), cfg)?;
                out.state.row_mut(i).copy_from_slice(r.state.values());
                out.nfe_total += r.nfe;
                out.accepted += r.accepted_steps;
                out.rejected += r.rejected_steps;
            }
            Ok(out)
        }
    }
}

/// Integrates `x0` in fixed-size chunks, spread over `threads` workers.
fn integrate_chunked(
    net: &VelocityNet<f32>,
    x0: &Matrix<f64>,
    cond: Option<&Matrix<f32>>,
    cfg: &SolverConfig,
    threads: usize,
) -> Result<(Matrix<f64>, f64, usize, usize)> {
    cfg.validate()?;
    let n = x0.rows();
    let starts: Vec<usize> = (0..n).step_by(cfg.chunk_rows).collect();
    let work = |start: usize| -> Result<ChunkOut> {
        let idx: Vec<usize> = (start..(start + cfg.chunk_rows).min(n)).collect();
        let c = cond.map(|c| c.select_rows(&idx));
        run_chunk(net, &x0.select_rows(&idx), c.as_ref(), cfg)
    };
    let threads = threads.max(1).min(starts.len().max(1));
    let results: Vec<Result<ChunkOut>> = if threads == 1 {
        starts.iter().map(|&s| work(s)).collect()
    } else {
        let mut slots: Vec<Option<Result<ChunkOut>>> = (0..starts.len()).map(|_| None).collect();
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..threads)
                .map(|w| {
                    let starts = &starts;
                    let work = &work;
                    scope.spawn(move || {
                        (w..starts.len())
                            .step_by(threads)
                            .map(|k| (k, work(starts[k])))
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            for h in handles {
                for (k, r) in h.join().expect("sampling worker panicked") {
                    slots[k] = Some(r);
                }
            }
        });
        slots.into_iter().map(|s| s.expect("every chunk ran")).collect()
    };
    let mut values = Vec::with_capacity(n * x0.cols());
    let (mut nfe, mut acc, mut rej) = (0usize, 0, 0);
    for r in results {
        let c = r?;
        values.extend_from_slice(c.state.values());
        nfe += c.nfe_total;
        acc += c.accepted;
        rej += c.rejected;
    }
    let nfe_mean = if n == 0 { 0.0 } else { nfe as f64 / n as f64 };
    Ok((Matrix::from_vec(n, x0.cols(), values)?, nfe_mean, acc, rej))
}

fn finish(state: Matrix<f64>, stats: &PreprocessStats, nfe_mean: f64, acc: usize, rej: usize) -> Result<Sampled> {
    let z = FeatureMatrix::new(state.cast(), Space::Standardized)?;
    Ok(Sampled {
        events: invert_preprocess(&z, stats)?,
        nfe_mean,
        accepted_steps: acc,
        rejected_steps: rej,
    })
}

/// Draws `n` events from an unconditional model. Row `i` starts from the
/// prior draw keyed by `i`.
pub fn generate(
    net: &VelocityNet<f32>,
    stats: &PreprocessStats,
    n: usize,
    cfg: &SolverConfig,
    seed: u64,
    threads: usize,
) -> Result<Sampled> {
    let keys: Vec<u64> = (0..n as u64).collect();
    generate_keyed(net, stats, &keys, cfg, seed, threads)
}

pub fn generate_keyed(
    net: &VelocityNet<f32>,
    stats: &PreprocessStats,
    keys: &[u64],
    cfg: &SolverConfig,
    seed: u64,
    threads: usize,
) -> Result<Sampled> {
    if net.mode() != NetMode::Unconditional {
        return Err(Error::Mode("generation needs an unconditional model; use unfold".into()));
    }
    check_stats(net, stats)?;
    let x0 = prior(seed, keys, net.config().dim);
    let (state, nfe, a, r) = integrate_chunked(net, &x0, None, cfg, threads)?;
    finish(state, stats, nfe, a, r)
}

/// Unfolds physical detector-level events: each output row is a draw from the
/// model's truth posterior given the matching input row.
pub fn unfold(
    net: &VelocityNet<f32>,
    stats: &PreprocessStats,
    detector: &FeatureMatrix,
    cfg: &SolverConfig,
    seed: u64,
    threads: usize,
) -> Result<Sampled> {
    let keys: Vec<u64> = (0..detector.n_events() as u64).collect();
    unfold_keyed(net, stats, detector, &keys, cfg, seed, threads)
}

/// As [`unfold`], with caller-chosen prior keys per row.
pub fn unfold_keyed(
    net: &VelocityNet<f32>,
    stats: &PreprocessStats,
    detector: &FeatureMatrix,
    keys: &[u64],
    cfg: &SolverConfig,
    seed: u64,
    threads: usize,
) -> Result<Sampled> {
    if net.mode() != NetMode::Conditional {
        return Err(Error::Mode("unfolding needs a conditional model; use generate".into()));
    }
    check_stats(net, stats)?;
    if detector.n_features() != net.config().dim {
        return Err(Error::Shape(format!(
            "detector events have {} features, model expects {}",
            detector.n_features(),
            net.config().dim
        )));
    }
    if keys.len() != detector.n_events() {
        return Err(Error::Shape(format!("{} keys for {} events", keys.len(), detector.n_events())));
    }
    let c = match detector.space() {
        Space::Physical => apply_preprocess(detector, stats)?,
        Space::Standardized => detector.clone(),
    };
    let x0 = prior(seed, keys, net.config().dim);
    let (state, nfe, a, r) = integrate_chunked(net, &x0, Some(c.matrix()), cfg, threads)?;
    finish(state, stats, nfe, a, r)
}

fn check_stats(net: &VelocityNet<f32>, stats: &PreprocessStats) -> Result<()> {
    if stats.n_features() != net.config().dim {
        return Err(Error::Shape(format!(
            "preprocessing covers {} features, model has {}",
            stats.n_features(),
            net.config().dim
        )));
    }
    Ok(())
}
