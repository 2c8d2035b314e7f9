use serde::{Deserialize, Serialize};

use crate::datasets::FeatureMatrix;
use crate::error::{Error, Result};

pub const BINS_1D: usize = 50;
pub const BINS_2D: usize = 20;

/// Uniform bins over `[lo, hi]`, bounds taken from the truth sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Binning {
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
}

impl Binning {
    pub fn from_truth(truth: &[f64], bins: usize) -> Result<Self> {
        if truth.is_empty() {
            return Err(Error::Argument("truth sample is empty".into()));
        }
        if bins == 0 {
            return Err(Error::Argument("need at least one bin".into()));
        }
        let lo = truth.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = truth.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(lo < hi) {
            return Err(Error::DegenerateSupport { value: lo });
        }
        Ok(Self { lo, hi, bins })
    }

    /// Bin of `x`, or `None` outside `[lo, hi]`; `hi` falls in the last bin.
    pub fn index(&self, x: f64) -> Option<usize> {
        if !(x >= self.lo && x <= self.hi) {
            return None;
        }
        let k = ((x - self.lo) / (self.hi - self.lo) * self.bins as f64) as usize;
        Some(k.min(self.bins - 1))
    }

    pub fn counts(&self, xs: &[f64]) -> Vec<u64> {
        let mut c = vec![0u64; self.bins];
        for &x in xs {
            if let Some(k) = self.index(x) {
                c[k] += 1;
            }
        }
        c
    }
}

/// `Σ (O − E)²/E` over bins with `E > 0`, after rescaling `O` to the truth total.
pub fn chi2_from_counts(observed: &[u64], expected: &[u64]) -> f64 {
    let o_total: u64 = observed.iter().sum();
    let e_total: u64 = expected.iter().sum();
    let mut acc = 0.0;
    for (&o, &e) in observed.iter().zip(expected) {
        if e == 0 {
            continue;
        }
        let o = if o_total == 0 {
            0.0
        } else {
            o as f64 * e_total as f64 / o_total as f64
        };
        let e = e as f64;
        acc += (o - e) * (o - e) / e;
    }
    acc
}

pub fn chi2_1d(gen: &[f64], truth: &[f64], bins: usize) -> Result<f64> {
    let b = Binning::from_truth(truth, bins)?;
    Ok(chi2_from_counts(&b.counts(gen), &b.counts(truth)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Chi2Pairs {
    pub mean: f64,
    pub pairs_evaluated: usize,
    /// Feature pairs left out because a truth axis has zero width.
    pub skipped: Vec<(usize, usize)>,
}

fn joint_counts(a: &[f64], b: &[f64], ba: &Binning, bb: &Binning) -> Vec<u64> {
    let mut c = vec![0u64; ba.bins * bb.bins];
    for (&x, &y) in a.iter().zip(b) {
        if let (Some(i), Some(j)) = (ba.index(x), bb.index(y)) {
            c[i * bb.bins + j] += 1;
        }
    }
    c
}

/// Mean 2D χ² over every unordered feature pair.
pub fn chi2_2d(gen: &FeatureMatrix, truth: &FeatureMatrix, bins: usize) -> Result<Chi2Pairs> {
    let d = truth.n_features();
    if d < 2 {
        return Err(Error::Argument("pairwise chi2 needs at least two features".into()));
    }
    if gen.n_features() != d {
        return Err(Error::Shape(format!("gen has {} features, truth {d}", gen.n_features())));
    }
    let tc = truth.columns_f64();
    let gc = gen.columns_f64();
    let binnings: Vec<Option<Binning>> = tc.iter().map(|c| Binning::from_truth(c, bins).ok()).collect();
    let mut values = Vec::new();
    let mut skipped = Vec::new();
    for i in 0..d {
        for j in i + 1..d {
            match (&binnings[i], &binnings[j]) {
                (Some(bi), Some(bj)) => {
                    let o = joint_counts(&gc[i], &gc[j], bi, bj);
                    let e = joint_counts(&tc[i], &tc[j], bi, bj);
                    values.push(chi2_from_counts(&o, &e));
                }
                _ => skipped.push((i, j)),
            }
        }
    }
    if values.is_empty() {
        return Err(Error::DegenerateSupport { value: f64::NAN });
    }
    Ok(Chi2Pairs {
        mean: values.iter().sum::<f64>() / values.len() as f64,
        pairs_evaluated: values.len(),
        skipped,
    })
}

/// Raw 50-bin counts per feature for external plotting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureHistogram {
    pub feature: usize,
    pub lo: f64,
    pub hi: f64,
    pub gen_counts: Vec<u64>,
    pub truth_counts: Vec<u64>,
    pub gen_out_of_range: u64,
}

pub fn histogram_dump(gen: &FeatureMatrix, truth: &FeatureMatrix, bins: usize) -> Result<Vec<FeatureHistogram>> {
    if gen.n_features() != truth.n_features() {
        return Err(Error::Shape(format!(
            "gen has {} features, truth {}",
            gen.n_features(),
            truth.n_features()
        )));
    }
    let mut out = Vec::new();
    for j in 0..truth.n_features() {
        let t = truth.column_f64(j);
        let g = gen.column_f64(j);
        let b = match Binning::from_truth(&t, bins) {
            Ok(b) => b,
            // zero-width truth: one bin around the point
            Err(Error::DegenerateSupport { value }) => Binning { lo: value - 0.5, hi: value + 0.5, bins },
            Err(e) => return Err(e),
        };
        let gen_counts = b.counts(&g);
        let inside: u64 = gen_counts.iter().sum();
        out.push(FeatureHistogram {
            feature: j,
            lo: b.lo,
            hi: b.hi,
            truth_counts: b.counts(&t),
            gen_out_of_range: g.len() as u64 - inside,
            gen_counts,
        });
    }
    Ok(out)
}
