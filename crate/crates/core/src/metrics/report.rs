use serde::{Deserialize, Serialize};

use super::binned::{chi2_1d, chi2_2d, BINS_1D, BINS_2D};
use super::distance::{correlation_distance, wasserstein_1d};
use super::nn::{nn_memorization, NnConfig, NnReport};
use crate::datasets::{apply_preprocess, FeatureMatrix, PreprocessStats, Space};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Aggregate fidelity report. Metrics that are undefined for the data (χ² on
/// a zero-width truth, pairwise χ² on one feature) are `None`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub chi2_mean: Option<f64>,
    pub chi2_sum: Option<f64>,
    pub wasserstein_mean: f64,
    pub chi2_2d_mean: Option<f64>,
    pub correlation_distance: Option<f64>,
    #[serde(flatten, skip_serializing_if = "Option::is_none", default)]
    pub nn: Option<NnReport>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub nfe_mean: Option<f64>,
    pub chi2_per_feature: Vec<Option<f64>>,
    pub wasserstein_per_feature: Vec<f64>,
}

impl MetricsReport {
    /// The value checkpoint selection minimises: `chi2_mean`, or the mean W₁
    /// where χ² is undefined.
    pub fn monitor_value(&self) -> f64 {
        self.chi2_mean.unwrap_or(self.wasserstein_mean)
    }
}

#[derive(Clone, Debug, Default)]
pub struct EvalOptions {
    pub nn: NnConfig,
    /// When given, nearest-neighbour distances are measured in standardized
    /// space; all other metrics use physical units.
    pub stats: Option<PreprocessStats>,
    pub nfe_mean: Option<f64>,
    /// Skip the pairwise χ² (it dominates the cost for wide data).
    pub skip_pairwise: bool,
}

fn to_nn_space(m: &FeatureMatrix, stats: Option<&PreprocessStats>) -> Result<Matrix<f64>> {
    let m = match (stats, m.space()) {
        (Some(s), Space::Physical) => apply_preprocess(m, s)?,
        _ => m.clone(),
    };
    Ok(m.matrix().cast())
}

/// Compares generated events against truth; the nearest-neighbour block is
/// added only when a training set is given.
pub fn evaluate(
    gen: &FeatureMatrix,
    truth: &FeatureMatrix,
    train: Option<&FeatureMatrix>,
    opts: &EvalOptions,
) -> Result<MetricsReport> {
    if gen.n_features() != truth.n_features() {
        return Err(Error::Shape(format!(
            "gen has {} features, truth {}",
            gen.n_features(),
            truth.n_features()
        )));
    }
    if gen.space() != truth.space() {
        return Err(Error::State("gen and truth are in different spaces".into()));
    }
    let d = truth.n_features();
    let mut chi2 = Vec::with_capacity(d);
    let mut w1 = Vec::with_capacity(d);
    for j in 0..d {
        let (g, t) = (gen.column_f64(j), truth.column_f64(j));
        chi2.push(match chi2_1d(&g, &t, BINS_1D) {
            Ok(v) => Some(v),
            Err(Error::DegenerateSupport { .. }) => None,
            Err(e) => return Err(e),
        });
        w1.push(wasserstein_1d(&g, &t)?);
    }
    let (chi2_mean, chi2_sum) = if chi2.iter().all(Option::is_some) && d > 0 {
        let s: f64 = chi2.iter().flatten().sum();
        (Some(s / d as f64), Some(s))
    } else {
        (None, None)
    };
    let chi2_2d_mean = if d >= 2 && !opts.skip_pairwise {
        match chi2_2d(gen, truth, BINS_2D) {
            Ok(p) => Some(p.mean),
            Err(Error::DegenerateSupport { .. }) => None,
            Err(e) => return Err(e),
        }
    } else {
        None
    };
    let correlation_distance = match correlation_distance(gen, truth) {
        Ok(v) => Some(v),
        Err(Error::DegenerateFeature { .. }) => None,
        Err(e) => return Err(e),
    };
    let nn = match train {
        Some(train) => {
            if train.n_features() != d {
                return Err(Error::Shape(format!("train has {} features, truth {d}", train.n_features())));
            }
            let g = to_nn_space(gen, opts.stats.as_ref())?;
            let t = to_nn_space(train, opts.stats.as_ref())?;
            Some(nn_memorization(&g, &t, &opts.nn)?)
        }
        None => None,
    };
    Ok(MetricsReport {
        chi2_mean,
        chi2_sum,
        wasserstein_mean: w1.iter().sum::<f64>() / d.max(1) as f64,
        chi2_2d_mean,
        correlation_distance,
        nn,
        nfe_mean: opts.nfe_mean,
        chi2_per_feature: chi2,
        wasserstein_per_feature: w1,
    })
}
