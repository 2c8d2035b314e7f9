use crate::datasets::FeatureMatrix;
use crate::error::{Error, Result};

/// Sum of values in ascending order, so the result ignores input order.
pub(crate) fn sorted_sum(mut v: Vec<f64>) -> f64 {
    v.sort_unstable_by(f64::total_cmp);
    v.iter().sum()
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_unstable_by(f64::total_cmp);
    v
}

/// Exact `∫|F − G| dx` between two empirical distributions.
pub fn wasserstein_1d(gen: &[f64], truth: &[f64]) -> Result<f64> {
    if gen.is_empty() || truth.is_empty() {
        return Err(Error::Argument("Wasserstein distance needs two nonempty samples".into()));
    }
    let a = sorted(gen);
    let b = sorted(truth);
    if a.len() == b.len() {
        let diffs = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).collect();
        return Ok(sorted_sum(diffs) / a.len() as f64);
    }
    // walk the merged support; between consecutive points both CDFs are flat
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut pieces = Vec::with_capacity(a.len() + b.len());
    let mut x = a[0].min(b[0]);
    while i < a.len() || j < b.len() {
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        let next = match (a.get(i), b.get(j)) {
            (Some(&p), Some(&q)) => p.min(q),
            (Some(&p), None) => p,
            (None, Some(&q)) => q,
            (None, None) => break,
        };
        pieces.push((i as f64 / na - j as f64 / nb).abs() * (next - x));
        x = next;
    }
    Ok(sorted_sum(pieces))
}

/// Population Pearson correlation matrix, with an exact unit diagonal.
pub fn correlation_matrix(data: &FeatureMatrix) -> Result<Vec<Vec<f64>>> {
    let n = data.n_events();
    if n < 2 {
        return Err(Error::Argument(format!("correlation needs at least 2 events, got {n}")));
    }
    let cols = data.columns_f64();
    let centred: Vec<Vec<f64>> = cols
        .iter()
        .map(|c| {
            let mu = sorted_sum(c.clone()) / n as f64;
            c.iter().map(|v| v - mu).collect()
        })
        .collect();
    let d = cols.len();
    let mut cov = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in i..d {
            let prods = centred[i].iter().zip(&centred[j]).map(|(a, b)| a * b).collect();
            let c = sorted_sum(prods) / n as f64;
            cov[i][j] = c;
            cov[j][i] = c;
        }
    }
    if let Some(index) = (0..d).find(|&i| !(cov[i][i] > 0.0)) {
        return Err(Error::DegenerateFeature { index });
    }
    let sd: Vec<f64> = (0..d).map(|i| cov[i][i].sqrt()).collect();
    Ok((0..d)
        .map(|i| {
            (0..d)
                .map(|j| if i == j { 1.0 } else { cov[i][j] / (sd[i] * sd[j]) })
                .collect()
        })
        .collect())
}

/// `‖corr(truth) − corr(gen)‖_F`.
pub fn correlation_distance(gen: &FeatureMatrix, truth: &FeatureMatrix) -> Result<f64> {
    if gen.n_features() != truth.n_features() {
        return Err(Error::Shape(format!(
            "gen has {} features, truth {}",
            gen.n_features(),
            truth.n_features()
        )));
    }
    let a = correlation_matrix(truth)?;
    let b = correlation_matrix(gen)?;
    let sq = a
        .iter()
        .zip(&b)
        .flat_map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| (x - y) * (x - y)))
        .collect();
    Ok(sorted_sum(sq).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::Space;
    use proptest::prelude::*;

    fn fm(rows: &[Vec<f64>]) -> FeatureMatrix {
        FeatureMatrix::from_rows_f64(rows, Space::Physical).unwrap()
    }

    #[test]
    fn hand_evaluated_w1() {
        assert_eq!(wasserstein_1d(&[0.0, 1.0], &[0.5, 1.5]).unwrap(), 0.5);
        assert_eq!(wasserstein_1d(&[3.0, -1.0], &[3.0, -1.0]).unwrap(), 0.0);
    }

    #[test]
    fn unequal_sizes_by_cdf() {
        // F: mass 1 at 0; G: half at 0, half at 1 -> area 0.5
        assert!((wasserstein_1d(&[0.0], &[0.0, 1.0]).unwrap() - 0.5).abs() < 1e-15);
        // {0, 1, 2} vs {0, 2}: |F − G| = 1/6 on [0, 2]
        assert!((wasserstein_1d(&[0.0, 1.0, 2.0], &[0.0, 2.0]).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(wasserstein_1d(&[], &[1.0]).is_err());
    }

    #[test]
    fn unequal_matches_replicated_equal() {
        // replicating samples does not change the empirical distribution
        let a = [0.3, -1.2, 2.5];
        let b = [0.0, 1.0];
        let w = wasserstein_1d(&a, &b).unwrap();
        let a2: Vec<f64> = a.iter().flat_map(|&v| [v, v]).collect();
        let b3: Vec<f64> = b.iter().flat_map(|&v| [v, v, v]).collect();
        assert!((wasserstein_1d(&a2, &b3).unwrap() - w).abs() < 1e-12);
    }

    #[test]
    fn perfectly_correlated_vs_identity() {
        let truth = fm(&[vec![1.0, 1.0], vec![-1.0, 1.0], vec![1.0, -1.0], vec![-1.0, -1.0]]);
        let gen = fm(&[vec![1.0, 2.0], vec![2.0, 4.0], vec![3.0, 6.0]]);
        let d = correlation_distance(&gen, &truth).unwrap();
        assert!((d - 2f64.sqrt()).abs() < 1e-9, "{d}");
        assert_eq!(correlation_distance(&truth, &truth).unwrap(), 0.0);
    }

    #[test]
    fn zero_variance_feature() {
        let m = fm(&[vec![1.0, 5.0], vec![2.0, 5.0]]);
        assert!(matches!(correlation_distance(&m, &m), Err(Error::DegenerateFeature { index: 1 })));
    }

    fn rows_strategy() -> impl Strategy<Value = Vec<Vec<f64>>> {
        prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 3), 5..40)
    }

    proptest! {
        #[test]
        fn w1_triangle(a in prop::collection::vec(-5.0f64..5.0, 20), b in prop::collection::vec(-5.0f64..5.0, 20), c in prop::collection::vec(-5.0f64..5.0, 20)) {
            let ac = wasserstein_1d(&a, &c).unwrap();
            let ab = wasserstein_1d(&a, &b).unwrap();
            let bc = wasserstein_1d(&b, &c).unwrap();
            prop_assert!(ac <= ab + bc + 1e-12);
        }

        #[test]
        fn w1_translation(xs in prop::collection::vec(-5.0f64..5.0, 1..50), c in -3.0f64..3.0) {
            let shifted: Vec<f64> = xs.iter().map(|x| x + c).collect();
            prop_assert!((wasserstein_1d(&shifted, &xs).unwrap() - c.abs()).abs() < 1e-12);
        }

        #[test]
        fn dcorr_symmetric_and_scale_free(a in rows_strategy(), b in rows_strategy(), s in 0.1f64..10.0, shift in -5.0f64..5.0) {
            let (ma, mb) = (fm(&a), fm(&b));
            let ab = correlation_distance(&ma, &mb);
            prop_assume!(ab.is_ok());
            let ab = ab.unwrap();
            prop_assert_eq!(ab, correlation_distance(&mb, &ma).unwrap());
            let scaled: Vec<Vec<f64>> = a.iter().map(|r| vec![r[0] * s + shift, r[1], r[2] * s]).collect();
            prop_assert!((correlation_distance(&fm(&scaled), &mb).unwrap() - ab).abs() < 1e-4);
        }

        #[test]
        fn dcorr_row_order(a in rows_strategy(), b in rows_strategy(), seed in 0u64..50) {
            use rand::{seq::SliceRandom, SeedableRng};
            let (ma, mb) = (fm(&a), fm(&b));
            let ab = correlation_distance(&ma, &mb);
            prop_assume!(ab.is_ok());
            let mut shuffled = a.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(correlation_distance(&fm(&shuffled), &mb).unwrap(), ab.unwrap());
        }
    }
}
