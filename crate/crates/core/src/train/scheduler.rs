use serde::{Deserialize, Serialize};

/// Halves (by `factor`) the learning rate after `patience` epochs without a
/// relative improvement of `threshold` in the monitored value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlateauScheduler {
    pub lr: f64,
    pub factor: f64,
    pub patience: usize,
    pub floor: f64,
    pub threshold: f64,
    /// Best value seen so far; `None` before the first step.
    pub best: Option<f64>,
    pub bad_epochs: usize,
}

impl PlateauScheduler {
    pub fn new(lr: f64, factor: f64, patience: usize, floor: f64) -> Self {
        Self {
            lr,
            factor,
            patience,
            floor,
            threshold: 1e-4,
            best: None,
            bad_epochs: 0,
        }
    }

    fn improves(&self, value: f64) -> bool {
        match self.best {
            None => !value.is_nan(),
            Some(best) => value < best - self.threshold * best.abs(),
        }
    }

    /// Records one epoch's monitored value and returns the learning rate for
    /// the next epoch.
    pub fn step(&mut self, value: f64) -> f64 {
        if self.improves(value) {
            self.best = Some(value);
            self.bad_epochs = 0;
        } else {
            self.bad_epochs += 1;
        }
        if self.bad_epochs >= self.patience {
            self.lr = (self.lr * self.factor).max(self.floor);
            self.bad_epochs = 0;
        }
        self.lr
    }
}
