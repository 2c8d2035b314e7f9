use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Real};

/// Solver stages may probe a hair outside the unit interval.
const TIME_SLACK: f64 = 1e-9;

/// Sinusoidal time features followed by a learned linear projection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeEmbedConfig {
    pub n_frequencies: usize,
    pub omega_min: f64,
    pub omega_max: f64,
    pub projected_dim: usize,
}

impl Default for TimeEmbedConfig {
    fn default() -> Self {
        Self {
            n_frequencies: 32,
            omega_min: 1.0,
            omega_max: 64.0,
            projected_dim: 64,
        }
    }
}

impl TimeEmbedConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_frequencies == 0 || self.projected_dim == 0 {
            return Err(Error::Config(
                "time embedding needs at least one frequency and one output".into(),
            ));
        }
        if !(self.omega_min > 0.0 && self.omega_max >= self.omega_min) {
            return Err(Error::Config(format!(
                "time embedding frequencies must satisfy 0 < omega_min <= omega_max (got {} .. {})",
                self.omega_min, self.omega_max
            )));
        }
        if self.n_frequencies > 1 && self.omega_max == self.omega_min {
            return Err(Error::Config(
                "several frequencies need omega_max > omega_min".into(),
            ));
        }
        Ok(())
    }

    /// Width of the sin/cos feature vector before projection.
    pub fn raw_dim(&self) -> usize {
        2 * self.n_frequencies
    }

    /// `ω_k = ω_min · (ω_max/ω_min)^(k/(n−1))`, k = 0..n.
    pub fn frequencies(&self) -> Vec<f64> {
        let n = self.n_frequencies;
        if n == 1 {
            return vec![self.omega_min];
        }
        let ratio = self.omega_max / self.omega_min;
        (0..n)
            .map(|k| self.omega_min * ratio.powf(k as f64 / (n - 1) as f64))
            .collect()
    }
}

/// Checks `t` against the unit interval, clamping values within the solver slack.
pub fn clamp_time(t: f64) -> Result<f64> {
    if !(-TIME_SLACK..=1.0 + TIME_SLACK).contains(&t) {
        return Err(Error::Domain { t });
    }
    Ok(t.clamp(0.0, 1.0))
}

/// Raw features `[sin(ω₁t)..sin(ω_nt), cos(ω₁t)..cos(ω_nt)]`, one row per time.
pub fn fourier_features<T: Real>(times: &[f64], cfg: &TimeEmbedConfig) -> Result<Matrix<T>> {
    let freqs = cfg.frequencies();
    let n = freqs.len();
    let mut out = Matrix::zeros(times.len(), 2 * n);
    for (r, &t) in times.iter().enumerate() {
        let t = clamp_time(t)?;
        let row = out.row_mut(r);
        for (k, &w) in freqs.iter().enumerate() {
            let (s, c) = (w * t).sin_cos();
            row[k] = T::from_f64(s);
            row[n + k] = T::from_f64(c);
        }
    }
    Ok(out)
}
