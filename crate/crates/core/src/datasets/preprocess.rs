use serde::{Deserialize, Serialize};

use super::{FeatureMatrix, Space};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

const MIN_STD: f64 = 1e-12;

/// Per-feature standardisation followed by a global scale factor.
///
/// Forward: `scale · (x − mean) / std`. Standard deviations use the
/// population (1/N) convention.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreprocessStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub scale: f64,
}

impl PreprocessStats {
    pub fn n_features(&self) -> usize {
        self.mean.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.mean.len() != self.std.len() {
            return Err(Error::Shape(format!(
                "{} means for {} standard deviations",
                self.mean.len(),
                self.std.len()
            )));
        }
        if let Some(index) = self.std.iter().position(|&s| !(s > MIN_STD)) {
            return Err(Error::DegenerateFeature { index });
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::Config(format!("scale must be positive, got {}", self.scale)));
        }
        Ok(())
    }

    fn check_width(&self, data: &FeatureMatrix) -> Result<()> {
        if data.n_features() != self.n_features() {
            return Err(Error::Shape(format!(
                "data has {} features, statistics cover {}",
                data.n_features(),
                self.n_features()
            )));
        }
        Ok(())
    }
}

pub fn fit_preprocess(data: &FeatureMatrix, scale: f64) -> Result<PreprocessStats> {
    data.require_space(Space::Physical)?;
    let n = data.n_events();
    if n < 2 {
        return Err(Error::Argument(format!(
            "need at least 2 events to fit preprocessing, got {n}"
        )));
    }
    let d = data.n_features();
    let m = data.matrix();
    let mut mean = vec![0.0f64; d];
    for i in 0..n {
        for (acc, &v) in mean.iter_mut().zip(m.row(i)) {
            *acc += v as f64;
        }
    }
    for v in &mut mean {
        *v /= n as f64;
    }
    let mut var = vec![0.0f64; d];
    for i in 0..n {
        for ((acc, &v), mu) in var.iter_mut().zip(m.row(i)).zip(&mean) {
            let dv = v as f64 - mu;
            *acc += dv * dv;
        }
    }
    let std: Vec<f64> = var.iter().map(|v| (v / n as f64).sqrt()).collect();
    let stats = PreprocessStats { mean, std, scale };
    stats.validate()?;
    Ok(stats)
}

fn transform(data: &FeatureMatrix, f: impl Fn(usize, f64) -> f64, space: Space) -> Result<FeatureMatrix> {
    let m = data.matrix();
    let d = m.cols();
    let mut out = Matrix::<f32>::zeros(m.rows(), d);
    for (k, (o, &v)) in out.values_mut().iter_mut().zip(m.values()).enumerate() {
        *o = f(k % d, v as f64) as f32;
    }
    FeatureMatrix::new(out, space)
}

pub fn apply_preprocess(data: &FeatureMatrix, stats: &PreprocessStats) -> Result<FeatureMatrix> {
    data.require_space(Space::Physical)?;
    stats.check_width(data)?;
    transform(
        data,
        |j, x| stats.scale * (x - stats.mean[j]) / stats.std[j],
        Space::Standardized,
    )
}

pub fn invert_preprocess(data: &FeatureMatrix, stats: &PreprocessStats) -> Result<FeatureMatrix> {
    data.require_space(Space::Standardized)?;
    stats.check_width(data)?;
    transform(
        data,
        |j, z| z / stats.scale * stats.std[j] + stats.mean[j],
        Space::Physical,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn col(v: &[f64]) -> FeatureMatrix {
        FeatureMatrix::from_column(v).unwrap()
    }

    #[test]
    fn two_point_population_moments() {
        let s = fit_preprocess(&col(&[0.0, 2.0]), 5.0).unwrap();
        assert_eq!(s.mean, vec![1.0]);
        assert_eq!(s.std, vec![1.0]);
        assert_eq!(s.scale, 5.0);
    }

    #[test]
    fn shifted_normal_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let xs: Vec<f64> = (0..200_000)
            .map(|_| { let z: f64 = StandardNormal.sample(&mut rng); 3.0 + z })
            .collect();
        let s = fit_preprocess(&col(&xs), 1.0).unwrap();
        assert!((s.mean[0] - 3.0).abs() < 0.01);
        assert!((s.std[0] - 1.0).abs() < 0.01);
    }

    #[test]
    fn hand_evaluated_forward() {
        let stats = PreprocessStats { mean: vec![1.0], std: vec![2.0], scale: 5.0 };
        let z = apply_preprocess(&col(&[3.0, 1.0]), &stats).unwrap();
        assert_eq!(z.matrix().values(), &[5.0, 0.0]);
        assert_eq!(z.space(), Space::Standardized);
    }

    #[test]
    fn degenerate_feature_named() {
        let rows = vec![vec![1.0, 4.0], vec![2.0, 4.0], vec![3.0, 4.0]];
        let data = FeatureMatrix::from_rows_f64(&rows, Space::Physical).unwrap();
        assert!(matches!(fit_preprocess(&data, 5.0), Err(Error::DegenerateFeature { index: 1 })));
        assert!(fit_preprocess(&col(&[1.0]), 5.0).is_err());
    }

    #[test]
    fn wrong_space_is_state_error() {
        let stats = PreprocessStats { mean: vec![0.0], std: vec![1.0], scale: 5.0 };
        let x = col(&[1.0, 2.0]);
        assert!(matches!(invert_preprocess(&x, &stats), Err(Error::State(_))));
        let z = apply_preprocess(&x, &stats).unwrap();
        assert!(matches!(apply_preprocess(&z, &stats), Err(Error::State(_))));
    }

    #[test]
    fn fitted_data_is_centred_and_scaled() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let rows: Vec<Vec<f64>> = (0..50_000)
            .map(|_| {
                let a: f64 = StandardNormal.sample(&mut rng);
                let b: f64 = StandardNormal.sample(&mut rng);
                vec![10.0 + 3.0 * a, -0.5 + 0.01 * b, a * b]
            })
            .collect();
        let data = FeatureMatrix::from_rows_f64(&rows, Space::Physical).unwrap();
        let s = 5.0;
        let stats = fit_preprocess(&data, s).unwrap();
        let z = apply_preprocess(&data, &stats).unwrap();
        let refit = fit_preprocess(&FeatureMatrix::physical(z.matrix().clone()).unwrap(), 1.0).unwrap();
        for j in 0..3 {
            assert!(refit.mean[j].abs() < 1e-6 * s, "mean {j}: {}", refit.mean[j]);
            assert!((refit.std[j] - s).abs() < 1e-4, "std {j}: {}", refit.std[j]);
        }
    }

    proptest! {
        // f32 storage bounds the error relative to the feature's own scale.
        #[test]
        fn round_trip(
            xs in prop::collection::vec(-1e4f64..1e4, 1..40),
            mean in -1e3f64..1e3,
            std in 1e-3f64..1e3,
            scale in 0.5f64..10.0,
        ) {
            let stats = PreprocessStats { mean: vec![mean], std: vec![std], scale };
            let data = col(&xs);
            let back = invert_preprocess(&apply_preprocess(&data, &stats).unwrap(), &stats).unwrap();
            for (a, b) in data.column_f64(0).iter().zip(back.column_f64(0)) {
                let tol = 1e-5 * (a.abs() + mean.abs() + std);
                prop_assert!((a - b).abs() <= tol, "{a} -> {b}");
            }
        }
    }
}
