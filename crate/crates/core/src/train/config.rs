use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Quantity minimised when choosing the best checkpoint.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckpointMonitor {
    /// Mean per-feature χ² of the validation generation (mean W₁ when χ² is
    /// undefined, e.g. on a delta-function truth).
    #[default]
    Chi2Mean,
    /// Validation CFM loss.
    Loss,
    /// Mean per-feature W₁ of the validation generation. Unbinned, so it
    /// still resolves small shifts when the validation subset is small.
    WassersteinMean,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    #[serde(alias = "lr")]
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub lr_decay_factor: f64,
    pub lr_patience_epochs: usize,
    pub lr_floor: f64,
    /// Events generated (or unfolded) for the per-epoch metrics.
    pub validation_subset: usize,
    pub checkpoint_monitor: CheckpointMonitor,
    /// Solver tolerance for the per-epoch validation pass.
    pub validation_tolerance: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            weight_decay: 1e-5,
            batch_size: 20_000,
            max_epochs: 800,
            lr_decay_factor: 0.5,
            lr_patience_epochs: 50,
            lr_floor: 1e-7,
            validation_subset: 50_000,
            checkpoint_monitor: CheckpointMonitor::Chi2Mean,
            validation_tolerance: 1e-3,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("learning_rate", self.learning_rate),
            ("lr_floor", self.lr_floor),
            ("validation_tolerance", self.validation_tolerance),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config(format!("weight_decay must be nonnegative, got {}", self.weight_decay)));
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor < 1.0) {
            return Err(Error::Config(format!(
                "lr_decay_factor must lie in (0, 1), got {}",
                self.lr_decay_factor
            )));
        }
        if self.batch_size == 0 || self.validation_subset == 0 || self.lr_patience_epochs == 0 {
            return Err(Error::Config(
                "batch_size, validation_subset and lr_patience_epochs must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Settings used by the small demonstrations and tests: miniature batches,
    /// a faster schedule and a short validation pass.
    pub fn desk_scale() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 2_000,
            max_epochs: 200,
            lr_patience_epochs: 10,
            validation_subset: 5_000,
            checkpoint_monitor: CheckpointMonitor::WassersteinMean,
            ..Self::default()
        }
    }
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub chi2_mean: Option<f64>,
    pub wasserstein_mean: f64,
    pub correlation_distance: Option<f64>,
    pub nfe_mean: f64,
    /// Learning rate used during this epoch.
    pub lr: f64,
    pub seconds: f64,
}

impl EpochLog {
    pub fn monitored(&self, monitor: CheckpointMonitor) -> f64 {
        match monitor {
            CheckpointMonitor::Chi2Mean => self.chi2_mean.unwrap_or(self.wasserstein_mean),
            CheckpointMonitor::Loss => self.val_loss,
            CheckpointMonitor::WassersteinMean => self.wasserstein_mean,
        }
    }

    /// The record as one JSON line, without the trailing newline.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("log records serialize")
    }
}
