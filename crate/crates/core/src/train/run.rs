use std::time::Instant;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adamw::{adamw_step, OptimizerState};
use super::cfm::{cfm_batch_for_rows, cfm_loss, CfmBatch};
use super::checkpoint::{rng_digest, CheckpointRecord};
use super::config::{EpochLog, TrainConfig};
use super::scheduler::PlateauScheduler;
use crate::datasets::{invert_preprocess, FeatureMatrix, PreprocessStats, Space};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, EvalOptions};
use crate::numerics::derive_seed;
use crate::odeint::{generate_keyed, unfold_keyed, SolverConfig};
use crate::velocity::{ActivationCache, NetConfig, NetMode, VelocityNet};

// Random streams hanging off the run seed; epochs use their own number.
const STREAM_INIT: u64 = u64::MAX;
const STREAM_VAL_ROWS: u64 = u64::MAX - 1;
const STREAM_VAL_NOISE: u64 = u64::MAX - 2;
const STREAM_VAL_PRIOR: u64 = u64::MAX - 3;

/// Standardized training data: truth events plus, for unfolding, the
/// row-aligned detector-level partners.
#[derive(Clone, Debug)]
pub struct TrainData {
    pub truth: FeatureMatrix,
    pub detector: Option<FeatureMatrix>,
    pub stats: PreprocessStats,
}

impl TrainData {
    pub fn generative(truth: FeatureMatrix, stats: PreprocessStats) -> Self {
        Self { truth, detector: None, stats }
    }

    pub fn paired(truth: FeatureMatrix, detector: FeatureMatrix, stats: PreprocessStats) -> Self {
        Self { truth, detector: Some(detector), stats }
    }

    pub fn mode(&self) -> NetMode {
        match self.detector {
            Some(_) => NetMode::Conditional,
            None => NetMode::Unconditional,
        }
    }

    fn check(&self) -> Result<()> {
        self.truth.require_space(Space::Standardized)?;
        if self.stats.n_features() != self.truth.n_features() {
            return Err(Error::Shape(format!(
                "statistics cover {} features, data has {}",
                self.stats.n_features(),
                self.truth.n_features()
            )));
        }
        if let Some(d) = &self.detector {
            d.require_space(Space::Standardized)?;
            if d.n_events() != self.truth.n_events() || d.n_features() != self.truth.n_features() {
                return Err(Error::Validation("detector block is not row-aligned with the truth block".into()));
            }
        }
        if self.truth.n_events() == 0 {
            return Err(Error::Argument("training data is empty".into()));
        }
        Ok(())
    }
}

/// Mutable state of a training run.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub net: VelocityNet<f32>,
    pub stats: PreprocessStats,
    pub config: TrainConfig,
    pub optimizer: OptimizerState,
    pub scheduler: PlateauScheduler,
    pub epoch: usize,
    pub monitored: Option<f64>,
    pub best_monitored: Option<f64>,
}

impl TrainState {
    pub fn fresh(net: NetConfig, stats: PreprocessStats, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let net = VelocityNet::init(net, derive_seed(config.seed, STREAM_INIT))?;
        Ok(Self {
            optimizer: OptimizerState::for_params(net.params()),
            scheduler: PlateauScheduler::new(
                config.learning_rate,
                config.lr_decay_factor,
                config.lr_patience_epochs,
                config.lr_floor,
            ),
            net,
            stats,
            config,
            epoch: 0,
            monitored: None,
            best_monitored: None,
        })
    }

    /// Continues from a checkpoint. `max_epochs` (and only it) may differ
    /// from the recorded configuration.
    pub fn resume(record: CheckpointRecord, max_epochs: usize) -> Result<Self> {
        let (Some(optimizer), Some(scheduler)) = (record.optimizer.clone(), record.scheduler.clone()) else {
            return Err(Error::Checkpoint {
                field: "optimizer".into(),
                reason: "weights-only checkpoint cannot be resumed".into(),
            });
        };
        if record.rng_digest != rng_digest(record.train.seed, record.epoch) {
            return Err(Error::Checkpoint {
                field: "rng_digest".into(),
                reason: "does not match the recorded seed and epoch".into(),
            });
        }
        let net = record.network()?;
        let config = TrainConfig { max_epochs, ..record.train };
        Ok(Self {
            net,
            stats: record.stats,
            config,
            optimizer,
            scheduler,
            epoch: record.epoch,
            monitored: record.monitored,
            best_monitored: record.best_monitored,
        })
    }

    pub fn snapshot(&self) -> CheckpointRecord {
        CheckpointRecord {
            net: self.net.config().clone(),
            params: self.net.params().clone(),
            stats: self.stats.clone(),
            train: self.config.clone(),
            epoch: self.epoch,
            monitored: self.monitored,
            best_monitored: self.best_monitored,
            rng_digest: rng_digest(self.config.seed, self.epoch),
            optimizer: Some(self.optimizer.clone()),
            scheduler: Some(self.scheduler.clone()),
        }
    }
}

/// Passed to the per-epoch observer.
pub struct EpochEnd<'a> {
    pub log: &'a EpochLog,
    /// True when this epoch set a new best monitored value.
    pub improved: bool,
    pub state: &'a TrainState,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Record with the lowest monitored value reached in this run. For a
    /// fresh run without epochs this is the initial model; a resumed run
    /// that never improves on its recorded best yields `None`.
    pub best: Option<CheckpointRecord>,
    pub last: CheckpointRecord,
    pub log: Vec<EpochLog>,
}

/// Fixed validation material, drawn once per run.
struct Validation {
    keys: Vec<u64>,
    truth_phys: FeatureMatrix,
    detector: Option<FeatureMatrix>,
    loss_batch: CfmBatch<f32>,
}

impl Validation {
    fn new(data: &TrainData, cfg: &TrainConfig) -> Result<Self> {
        let n = data.truth.n_events();
        if cfg.validation_subset > n {
            return Err(Error::Config(format!(
                "validation_subset {} exceeds the {n} training events",
                cfg.validation_subset
            )));
        }
        let mut rows = if cfg.validation_subset == n {
            (0..n).collect()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, STREAM_VAL_ROWS));
            index::sample(&mut rng, n, cfg.validation_subset).into_vec()
        };
        rows.sort_unstable();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, STREAM_VAL_NOISE));
        let loss_batch = cfm_batch_for_rows(&data.truth, data.detector.as_ref(), &rows, &mut rng)?;
        Ok(Self {
            keys: rows.iter().map(|&r| r as u64).collect(),
            truth_phys: invert_preprocess(&data.truth.select_rows(&rows), &data.stats)?,
            detector: data.detector.as_ref().map(|d| d.select_rows(&rows)),
            loss_batch,
        })
    }

    fn loss(&self, net: &VelocityNet<f32>, chunk: usize) -> Result<f64> {
        let b = &self.loss_batch;
        let n = b.len();
        let mut total = 0.0;
        for start in (0..n).step_by(chunk.max(1)) {
            let idx: Vec<usize> = (start..(start + chunk).min(n)).collect();
            let part = CfmBatch {
                x_t: b.x_t.select_rows(&idx),
                t: idx.iter().map(|&i| b.t[i]).collect(),
                u_t: b.u_t.select_rows(&idx),
                c: b.c.as_ref().map(|c| c.select_rows(&idx)),
            };
            total += cfm_loss(net, &part)? * idx.len() as f64;
        }
        Ok(total / n as f64)
    }
}

/// Trains a fresh model.
pub fn train<F>(net: NetConfig, data: &TrainData, config: &TrainConfig, threads: usize, observer: F) -> Result<TrainOutcome>
where
    F: FnMut(&EpochEnd) -> Result<()>,
{
    if net.mode != data.mode() {
        return Err(Error::Mode(format!(
            "{} network for {} data",
            net.mode.as_str(),
            data.mode().as_str()
        )));
    }
    let state = TrainState::fresh(net, data.stats.clone(), config.clone())?;
    run(state, data, threads, observer, true)
}

/// Continues training from `state` until `state.config.max_epochs`.
pub fn train_from<F>(state: TrainState, data: &TrainData, threads: usize, observer: F) -> Result<TrainOutcome>
where
    F: FnMut(&EpochEnd) -> Result<()>,
{
    if state.net.mode() != data.mode() {
        return Err(Error::Mode(format!(
            "checkpoint model is {} but the data is for a {} model",
            state.net.mode().as_str(),
            data.mode().as_str()
        )));
    }
    if state.stats != data.stats {
        return Err(Error::Validation("data was standardized with different statistics than the checkpoint".into()));
    }
    run(state, data, threads, observer, false)
}

fn run<F>(mut state: TrainState, data: &TrainData, threads: usize, mut observer: F, fresh: bool) -> Result<TrainOutcome>
where
    F: FnMut(&EpochEnd) -> Result<()>,
{
    data.check()?;
    state.config.validate()?;
    if state.net.config().dim != data.truth.n_features() {
        return Err(Error::Shape(format!(
            "network dimension {} for {} features",
            state.net.config().dim,
            data.truth.n_features()
        )));
    }
    let cfg = state.config.clone();
    let n = data.truth.n_events();
    let solver = SolverConfig::with_tolerance(cfg.validation_tolerance);
    let val_seed = derive_seed(cfg.seed, STREAM_VAL_PRIOR);
    let mut best = (fresh && cfg.max_epochs == 0).then(|| state.snapshot());
    let mut log = Vec::new();
    let mut val: Option<Validation> = None;
    let mut cache = ActivationCache::new();
    while state.epoch < cfg.max_epochs {
        let val = match &val {
            Some(v) => v,
            None => val.insert(Validation::new(data, &cfg)?),
        };
        let epoch = state.epoch + 1;
        let start = Instant::now();
        let lr = state.scheduler.lr;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, epoch as u64));
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let mut weighted = 0.0;
        for (b, rows) in order.chunks(cfg.batch_size).enumerate() {
            let batch = cfm_batch_for_rows(&data.truth, data.detector.as_ref(), rows, &mut rng)?;
            let (loss, grads) = super::cfm::cfm_loss_and_grad(&state.net, &batch, &mut cache)?;
            if !loss.is_finite() || !grads.all_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            adamw_step(state.net.params_mut(), &grads, &mut state.optimizer, lr, cfg.weight_decay)?;
            weighted += loss * rows.len() as f64;
        }
        let train_loss = weighted / n as f64;
        let val_loss = val.loss(&state.net, cfg.batch_size)?;
        if !val_loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, batch: usize::MAX });
        }
        let sampled = match &val.detector {
            None => generate_keyed(&state.net, &data.stats, &val.keys, &solver, val_seed, threads)?,
            Some(det) => unfold_keyed(&state.net, &data.stats, det, &val.keys, &solver, val_seed, threads)?,
        };
        let opts = EvalOptions { skip_pairwise: true, ..Default::default() };
        let report = evaluate(&sampled.events, &val.truth_phys, None, &opts)?;
        state.scheduler.step(val_loss);
        let entry = EpochLog {
            epoch,
            train_loss,
            val_loss,
            chi2_mean: report.chi2_mean,
            wasserstein_mean: report.wasserstein_mean,
            correlation_distance: report.correlation_distance,
            nfe_mean: sampled.nfe_mean,
            lr,
            seconds: start.elapsed().as_secs_f64(),
        };
        let monitored = entry.monitored(cfg.checkpoint_monitor);
        state.epoch = epoch;
        state.monitored = Some(monitored);
        let improved = state.best_monitored.is_none_or(|b| monitored < b);
        if improved {
            state.best_monitored = Some(monitored);
            best = Some(state.snapshot());
        }
        observer(&EpochEnd { log: &entry, improved, state: &state })?;
        log.push(entry);
    }
    Ok(TrainOutcome { best, last: state.snapshot(), log })
}
