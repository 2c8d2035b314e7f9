use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::kinematics::N_FEATURES;
use super::{FeatureMatrix, Space};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Feature columns holding pion momentum components.
pub const PION_COLUMNS: std::ops::Range<usize> = 4..10;

/// Gaussian track smearing with width `k · sigma_smear · p²` per component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SmearConfig {
    pub sigma_smear: f64,
    /// GeV⁻¹.
    pub k: f64,
    pub seed: u64,
}

impl Default for SmearConfig {
    fn default() -> Self {
        Self {
            sigma_smear: 1.0,
            k: 0.01,
            seed: 0,
        }
    }
}

impl SmearConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_smear >= 0.0 && self.sigma_smear.is_finite()) {
            return Err(Error::Config(format!("sigma_smear must be >= 0, got {}", self.sigma_smear)));
        }
        if !(self.k > 0.0 && self.k.is_finite()) {
            return Err(Error::Config(format!("k must be > 0, got {}", self.k)));
        }
        Ok(())
    }
}

/// Smears the six pion components of one 10-feature event.
///
/// One normal deviate is drawn per pion component regardless of its width, so
/// runs with different `sigma_smear` share noise draws.
pub fn smear_event<R: rand::Rng>(truth: &[f64], cfg: &SmearConfig, rng: &mut R) -> Result<Vec<f64>> {
    if truth.len() != N_FEATURES {
        return Err(Error::Shape(format!("expected {N_FEATURES} features, got {}", truth.len())));
    }
    let mut out = truth.to_vec();
    for p in &mut out[PION_COLUMNS] {
        let z: f64 = StandardNormal.sample(rng);
        let width = cfg.k * cfg.sigma_smear * *p * *p;
        if width != 0.0 {
            *p += width * z;
        }
    }
    Ok(out)
}

/// Smears every event of a physical 10-feature matrix with a stream seeded
/// from `cfg.seed`.
pub fn smear_matrix(truth: &FeatureMatrix, cfg: &SmearConfig) -> Result<FeatureMatrix> {
    cfg.validate()?;
    truth.require_space(Space::Physical)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut values = Vec::with_capacity(truth.n_events() * N_FEATURES);
    for i in 0..truth.n_events() {
        let row = truth.row_f64(i);
        values.extend(smear_event(&row, cfg, &mut rng)?.into_iter().map(|v| v as f32));
    }
    FeatureMatrix::physical(Matrix::from_vec(truth.n_events(), N_FEATURES, values)?)
}
