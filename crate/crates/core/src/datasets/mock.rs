//! Synthetic one-dimensional benchmark densities.
//!
//! Each family is a finite mixture of simple components. The presets below fix
//! concrete parameters for every family; a spec may override them with an
//! explicit component list and shift the whole density with `shift`.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use super::FeatureMatrix;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MockFamily {
    Gaussian,
    BimodalAsym,
    ExponentialDecay,
    GaussCutoff,
    NarrowWideOverlap,
    #[serde(rename = "noise-3spikes")]
    Noise3Spikes,
    #[serde(rename = "noise-10spikes")]
    Noise10Spikes,
    TallFlatFar,
    TripleFlatSpread,
    TripleMixed,
    UniformFlat,
    Delta,
}

impl MockFamily {
    pub const ALL: [MockFamily; 12] = [
        MockFamily::Gaussian,
        MockFamily::BimodalAsym,
        MockFamily::ExponentialDecay,
        MockFamily::GaussCutoff,
        MockFamily::NarrowWideOverlap,
        MockFamily::Noise3Spikes,
        MockFamily::Noise10Spikes,
        MockFamily::TallFlatFar,
        MockFamily::TripleFlatSpread,
        MockFamily::TripleMixed,
        MockFamily::UniformFlat,
        MockFamily::Delta,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MockFamily::Gaussian => "gaussian",
            MockFamily::BimodalAsym => "bimodal-asym",
            MockFamily::ExponentialDecay => "exponential-decay",
            MockFamily::GaussCutoff => "gauss-cutoff",
            MockFamily::NarrowWideOverlap => "narrow-wide-overlap",
            MockFamily::Noise3Spikes => "noise-3spikes",
            MockFamily::Noise10Spikes => "noise-10spikes",
            MockFamily::TallFlatFar => "tall-flat-far",
            MockFamily::TripleFlatSpread => "triple-flat-spread",
            MockFamily::TripleMixed => "triple-mixed",
            MockFamily::UniformFlat => "uniform-flat",
            MockFamily::Delta => "delta",
        }
    }

    /// Default mixture for the family.
    pub fn preset(self) -> Vec<Component> {
        use Component::*;
        let normal = |weight, mean, sd| Normal { weight, mean, sd };
        match self {
            MockFamily::Gaussian => vec![normal(1.0, 0.0, 1.0)],
            MockFamily::BimodalAsym => vec![normal(0.7, -2.0, 0.5), normal(0.3, 2.0, 1.0)],
            MockFamily::ExponentialDecay => vec![Exponential { weight: 1.0, rate: 1.0, start: 0.0 }],
            MockFamily::GaussCutoff => vec![TruncatedNormal {
                weight: 1.0,
                mean: 0.0,
                sd: 1.0,
                lower: -0.5,
            }],
            MockFamily::NarrowWideOverlap => vec![normal(0.4, 0.0, 0.2), normal(0.6, 0.3, 1.2)],
            MockFamily::Noise3Spikes => spikes(3, 2.0),
            MockFamily::Noise10Spikes => spikes(10, 3.0),
            // peak heights 0.6/0.3 : 0.4/1.0 = 5 : 1
            MockFamily::TallFlatFar => vec![normal(0.6, -3.0, 0.3), normal(0.4, 4.0, 1.0)],
            MockFamily::TripleFlatSpread => {
                let w = 1.0 / 3.0;
                vec![normal(w, -2.5, 0.6), normal(w, 0.0, 0.6), normal(1.0 - 2.0 * w, 2.5, 0.6)]
            }
            MockFamily::TripleMixed => vec![
                normal(0.5, -2.0, 0.4),
                normal(0.3, 0.5, 0.8),
                normal(0.2, 3.0, 0.3),
            ],
            MockFamily::UniformFlat => vec![Uniform { weight: 1.0, low: -1.0, high: 1.0 }],
            MockFamily::Delta => vec![Delta { weight: 1.0, loc: 0.0 }],
        }
    }
}

/// Broad `N(0, 1.5²)` base plus `k` narrow `N(c_j, 0.05²)` spikes of weight
/// 0.05 at evenly spaced `c_j ∈ [−half_span, half_span]`.
fn spikes(k: usize, half_span: f64) -> Vec<Component> {
    let spike_w = 0.05;
    let mut out = vec![Component::Normal {
        weight: 1.0 - spike_w * k as f64,
        mean: 0.0,
        sd: 1.5,
    }];
    for j in 0..k {
        let c = -half_span + 2.0 * half_span * j as f64 / (k - 1) as f64;
        out.push(Component::Normal { weight: spike_w, mean: c, sd: 0.05 });
    }
    out
}

impl fmt::Display for MockFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MockFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MockFamily::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown mock family `{s}`")))
    }
}

/// One weighted mixture component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Component {
    Normal { weight: f64, mean: f64, sd: f64 },
    /// Normal restricted to `x > lower`.
    TruncatedNormal { weight: f64, mean: f64, sd: f64, lower: f64 },
    Uniform { weight: f64, low: f64, high: f64 },
    /// `start + Exp(rate)`.
    Exponential { weight: f64, rate: f64, start: f64 },
    Delta { weight: f64, loc: f64 },
}

impl Component {
    pub fn weight(&self) -> f64 {
        match *self {
            Component::Normal { weight, .. }
            | Component::TruncatedNormal { weight, .. }
            | Component::Uniform { weight, .. }
            | Component::Exponential { weight, .. }
            | Component::Delta { weight, .. } => weight,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Component::Normal { sd, .. } => sd > 0.0,
            Component::TruncatedNormal { mean, sd, lower, .. } => {
                // keep the rejection sampler's acceptance rate sane
                sd > 0.0 && (lower - mean) / sd < 6.0
            }
            Component::Uniform { low, high, .. } => high > low,
            Component::Exponential { rate, .. } => rate > 0.0,
            Component::Delta { .. } => true,
        };
        if !ok || !(self.weight() >= 0.0) {
            return Err(Error::Config(format!("invalid mock component {self:?}")));
        }
        Ok(())
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            Component::Normal { mean, sd, .. } => Normal::new(mean, sd).expect("validated").sample(rng),
            Component::TruncatedNormal { mean, sd, lower, .. } => {
                let d = Normal::new(mean, sd).expect("validated");
                loop {
                    let x = d.sample(rng);
                    if x > lower {
                        break x;
                    }
                }
            }
            Component::Uniform { low, high, .. } => rng.random_range(low..high),
            Component::Exponential { rate, start, .. } => start + Exp::new(rate).expect("validated").sample(rng),
            Component::Delta { loc, .. } => loc,
        }
    }
}

/// A reproducible request for synthetic samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockSpec {
    pub family: MockFamily,
    pub n: usize,
    pub seed: u64,
    /// Added to every sample (the location of a delta mock).
    #[serde(default)]
    pub shift: f64,
    /// Overrides the family preset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub components: Option<Vec<Component>>,
}

impl MockSpec {
    pub fn new(family: MockFamily, n: usize, seed: u64) -> Self {
        Self {
            family,
            n,
            seed,
            shift: 0.0,
            components: None,
        }
    }

    pub fn with_shift(mut self, shift: f64) -> Self {
        self.shift = shift;
        self
    }

    pub fn components(&self) -> Vec<Component> {
        self.components.clone().unwrap_or_else(|| self.family.preset())
    }

    pub fn validate(&self) -> Result<()> {
        let comps = self.components();
        if comps.is_empty() {
            return Err(Error::Config("mock needs at least one component".into()));
        }
        for c in &comps {
            c.validate()?;
        }
        let total: f64 = comps.iter().map(Component::weight).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!("mixture weights sum to {total}, not 1")));
        }
        if !self.shift.is_finite() {
            return Err(Error::Config("shift must be finite".into()));
        }
        Ok(())
    }

    /// Draws the samples in `f64`.
    pub fn sample_values(&self) -> Result<Vec<f64>> {
        self.validate()?;
        let comps = self.components();
        let mut cumulative = Vec::with_capacity(comps.len());
        let mut acc = 0.0;
        for c in &comps {
            acc += c.weight();
            cumulative.push(acc);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let out = (0..self.n)
            .map(|_| {
                let u: f64 = rng.random::<f64>() * acc;
                let k = cumulative.partition_point(|&c| c <= u).min(comps.len() - 1);
                comps[k].draw(&mut rng) + self.shift
            })
            .collect();
        Ok(out)
    }
}

/// `n x 1` physical feature matrix drawn from the spec's density.
pub fn sample_mock(spec: &MockSpec) -> Result<FeatureMatrix> {
    FeatureMatrix::from_column(&spec.sample_values()?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid() {
        for f in MockFamily::ALL {
            MockSpec::new(f, 1, 0).validate().unwrap_or_else(|e| panic!("{f}: {e}"));
            assert_eq!(f.name().parse::<MockFamily>().unwrap(), f);
        }
    }

    #[test]
    fn unknown_family() {
        assert!(matches!("lorentzian".parse::<MockFamily>(), Err(Error::Config(_))));
    }

    #[test]
    fn delta_is_exact() {
        let xs = sample_mock(&MockSpec::new(MockFamily::Delta, 1000, 1).with_shift(0.3)).unwrap();
        assert!(xs.matrix().values().iter().all(|&v| v == 0.3f32));
    }

    #[test]
    fn uniform_support() {
        let xs = MockSpec::new(MockFamily::UniformFlat, 100_000, 2).sample_values().unwrap();
        assert!(xs.iter().all(|&v| (-1.0..=1.0).contains(&v)));
    }

    #[test]
    fn cutoff_respected() {
        let xs = MockSpec::new(MockFamily::GaussCutoff, 100_000, 2).sample_values().unwrap();
        assert!(xs.iter().all(|&v| v > -0.5));
    }

    #[test]
    fn bimodal_occupancy() {
        // Split at the density valley; the far tail of the wide mode leaks ~0.3%.
        let xs = MockSpec::new(MockFamily::BimodalAsym, 1_000_000, 5).sample_values().unwrap();
        let left = xs.iter().filter(|&&v| v < -0.6).count() as f64 / xs.len() as f64;
        assert!((left - 0.7).abs() < 0.02, "{left}");
        assert!(((1.0 - left) - 0.3).abs() < 0.02);
    }

    #[test]
    fn weights_must_sum_to_one() {
        let mut spec = MockSpec::new(MockFamily::Gaussian, 10, 0);
        spec.components = Some(vec![Component::Normal { weight: 0.9, mean: 0.0, sd: 1.0 }]);
        assert!(spec.validate().is_err());
        spec.components = Some(vec![Component::Normal { weight: 1.0, mean: 0.0, sd: 0.0 }]);
        assert!(spec.validate().is_err());
    }

    #[test]
    fn pure_in_seed() {
        for f in MockFamily::ALL {
            let a = MockSpec::new(f, 500, 77).sample_values().unwrap();
            let b = MockSpec::new(f, 500, 77).sample_values().unwrap();
            let c = MockSpec::new(f, 500, 78).sample_values().unwrap();
            assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
            if f != MockFamily::Delta {
                assert_ne!(a, c);
            }
        }
    }

    #[test]
    fn spec_round_trips_through_toml_like_json() {
        let spec = MockSpec::new(MockFamily::Noise10Spikes, 3, 4);
        let s = serde_json::to_string(&spec).unwrap();
        assert!(s.contains("noise-10spikes"));
        assert_eq!(serde_json::from_str::<MockSpec>(&s).unwrap(), spec);
    }
}
