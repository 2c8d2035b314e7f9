use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::distance::sorted_sum;
use crate::error::{Error, Result};
use crate::numerics::Matrix;

const LEAF_SIZE: usize = 16;
/// Below this mean train→train distance the ratio is dominated by its
/// denominator (duplicated or extremely dense training points).
pub const ARTIFACT_FLOOR: f64 = 1e-12;

/// Squared Euclidean distance, summed in feature order.
#[inline]
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        acc += d * d;
    }
    acc
}

enum Node {
    Leaf { start: usize, end: usize },
    Split { dim: usize, value: f64, left: Box<Node>, right: Box<Node> },
}

/// Static k-d tree answering exact nearest-neighbour queries. Distances are
/// computed with [`squared_distance`], so results equal a brute-force scan
/// bit for bit.
pub struct KdTree<'a> {
    points: &'a Matrix<f64>,
    order: Vec<usize>,
    root: Node,
}

impl<'a> KdTree<'a> {
    pub fn build(points: &'a Matrix<f64>) -> Self {
        let mut order: Vec<usize> = (0..points.rows()).collect();
        let n = order.len();
        let root = Self::build_node(points, &mut order, 0, n);
        Self { points, order, root }
    }

    fn build_node(points: &Matrix<f64>, order: &mut [usize], start: usize, end: usize) -> Node {
        if end - start <= LEAF_SIZE || points.cols() == 0 {
            return Node::Leaf { start, end };
        }
        let slice = &mut order[start..end];
        let dim = (0..points.cols())
            .map(|j| {
                let (lo, hi) = slice.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                    let v = points.get(i, j);
                    (lo.min(v), hi.max(v))
                });
                (j, hi - lo)
            })
            .fold((0, -1.0), |best, (j, s)| if s > best.1 { (j, s) } else { best })
            .0;
        let mid = slice.len() / 2;
        slice.select_nth_unstable_by(mid, |&a, &b| points.get(a, dim).total_cmp(&points.get(b, dim)));
        let value = points.get(slice[mid], dim);
        let split = start + mid;
        Node::Split {
            dim,
            value,
            left: Box::new(Self::build_node(points, order, start, split)),
            right: Box::new(Self::build_node(points, order, split, end)),
        }
    }

    /// Squared distance to the nearest point whose index is not `exclude`.
    pub fn nearest_squared(&self, query: &[f64], exclude: Option<usize>) -> Option<f64> {
        let mut best = f64::INFINITY;
        self.search(&self.root, query, exclude, &mut best);
        best.is_finite().then_some(best)
    }

    fn search(&self, node: &Node, q: &[f64], exclude: Option<usize>, best: &mut f64) {
        match node {
            Node::Leaf { start, end } => {
                for &i in &self.order[*start..*end] {
                    if Some(i) == exclude {
                        continue;
                    }
                    let d = squared_distance(q, self.points.row(i));
                    if d < *best {
                        *best = d;
                    }
                }
            }
            Node::Split { dim, value, left, right } => {
                let diff = q[*dim] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, exclude, best);
                // every far-side point is at least |diff| away along `dim`
                if diff * diff <= *best {
                    self.search(far, q, exclude, best);
                }
            }
        }
    }
}

/// Exhaustive reference for [`KdTree::nearest_squared`].
pub fn brute_force_nearest_squared(points: &Matrix<f64>, query: &[f64], exclude: Option<usize>) -> Option<f64> {
    (0..points.rows())
        .filter(|&i| Some(i) != exclude)
        .map(|i| squared_distance(query, points.row(i)))
        .fold(None, |acc: Option<f64>, d| Some(acc.map_or(d, |a| a.min(d))))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NnConfig {
    /// Generated points queried against the training set.
    pub gen_probe: usize,
    /// Training points queried against the rest of the training set.
    pub train_probe: usize,
    pub seed: u64,
    pub threads: usize,
}

impl Default for NnConfig {
    fn default() -> Self {
        Self {
            gen_probe: 80_000,
            train_probe: 10_000,
            seed: 0,
            threads: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NnReport {
    /// `mean d(gen→train) / mean d(train→train)`; `None` when the denominator
    /// is exactly zero.
    pub nn_ratio: Option<f64>,
    pub d_gen_to_train_mean: f64,
    pub d_gen_to_train_min: f64,
    pub d_train_to_train_mean: f64,
    pub d_train_to_train_min: f64,
    /// Set when the denominator is below the artifact floor.
    pub nn_denominator_artifact: bool,
}

fn probe(n: usize, size: usize, seed: u64) -> Vec<usize> {
    if size >= n {
        return (0..n).collect();
    }
    let mut idx = sample(&mut ChaCha8Rng::seed_from_u64(seed), n, size).into_vec();
    idx.sort_unstable();
    idx
}

fn distances(tree: &KdTree, queries: &Matrix<f64>, rows: &[usize], self_match: bool, threads: usize) -> Vec<f64> {
    let one = |i: usize| {
        let exclude = self_match.then_some(i);
        tree.nearest_squared(queries.row(i), exclude).map_or(f64::NAN, f64::sqrt)
    };
    let threads = threads.max(1);
    if threads == 1 || rows.len() < 2 * threads {
        return rows.iter().map(|&i| one(i)).collect();
    }
    let chunk = rows.len().div_ceil(threads);
    std::thread::scope(|s| {
        let handles: Vec<_> = rows
            .chunks(chunk)
            .map(|part| s.spawn(move || part.iter().map(|&i| one(i)).collect::<Vec<_>>()))
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("nn worker panicked")).collect()
    })
}

/// Nearest-neighbour memorisation diagnostics. Both inputs must live in the
/// same space (standardized in practice).
pub fn nn_memorization(gen: &Matrix<f64>, train: &Matrix<f64>, cfg: &NnConfig) -> Result<NnReport> {
    if train.rows() < 2 {
        return Err(Error::Argument(format!("need at least 2 training points, got {}", train.rows())));
    }
    if gen.rows() == 0 {
        return Err(Error::Argument("no generated points".into()));
    }
    if gen.cols() != train.cols() {
        return Err(Error::Shape(format!("gen has {} features, train {}", gen.cols(), train.cols())));
    }
    let tree = KdTree::build(train);
    let g_rows = probe(gen.rows(), cfg.gen_probe, cfg.seed);
    let t_rows = probe(train.rows(), cfg.train_probe, cfg.seed.wrapping_add(1));
    let d_gen = distances(&tree, gen, &g_rows, false, cfg.threads);
    let d_train = distances(&tree, train, &t_rows, true, cfg.threads);
    let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
    let gen_mean = sorted_sum(d_gen.clone()) / d_gen.len() as f64;
    let train_mean = sorted_sum(d_train.clone()) / d_train.len() as f64;
    Ok(NnReport {
        nn_ratio: (train_mean != 0.0).then(|| gen_mean / train_mean),
        d_gen_to_train_mean: gen_mean,
        d_gen_to_train_min: min(&d_gen),
        d_train_to_train_mean: train_mean,
        d_train_to_train_min: min(&d_train),
        nn_denominator_artifact: train_mean < ARTIFACT_FLOOR,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn cloud(n: usize, d: usize, seed: u64) -> Matrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_vec(n, d, (0..n * d).map(|_| StandardNormal.sample(&mut rng)).collect()).unwrap()
    }

    #[test]
    fn tree_matches_brute_force_bitwise() {
        for (d, seed) in [(1, 0), (2, 1), (3, 2), (10, 3)] {
            let pts = cloud(200, d, seed);
            let qs = cloud(200, d, seed + 100);
            let tree = KdTree::build(&pts);
            for i in 0..200 {
                let a = tree.nearest_squared(qs.row(i), None).unwrap();
                let b = brute_force_nearest_squared(&pts, qs.row(i), None).unwrap();
                assert_eq!(a.to_bits(), b.to_bits());
                let a = tree.nearest_squared(pts.row(i), Some(i)).unwrap();
                let b = brute_force_nearest_squared(&pts, pts.row(i), Some(i)).unwrap();
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn gen_inside_train_is_memorised() {
        let train = cloud(500, 2, 4);
        let gen = train.select_rows(&(0..100).collect::<Vec<_>>());
        let r = nn_memorization(&gen, &train, &NnConfig::default()).unwrap();
        assert_eq!(r.d_gen_to_train_mean, 0.0);
        assert_eq!(r.nn_ratio, Some(0.0));
    }

    #[test]
    fn independent_draws_have_unit_ratio() {
        let train = cloud(20_000, 1, 5);
        let gen = cloud(20_000, 1, 6);
        let r = nn_memorization(&gen, &train, &NnConfig::default()).unwrap();
        let ratio = r.nn_ratio.unwrap();
        assert!((0.5..=2.0).contains(&ratio), "{ratio}");
        assert!(!r.nn_denominator_artifact);
    }

    #[test]
    fn duplicated_training_points_flag_the_denominator() {
        // a dense grid stored twice: every training point has an exact twin
        let vals: Vec<f64> = (0..1000).flat_map(|i| [i as f64 / 1000.0; 2]).collect();
        let train = Matrix::from_vec(2000, 1, vals).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let gen = Matrix::from_vec(500, 1, (0..500).map(|_| rng.random::<f64>()).collect()).unwrap();
        let r = nn_memorization(&gen, &train, &NnConfig::default()).unwrap();
        assert!(r.nn_denominator_artifact);
        assert_eq!(r.nn_ratio, None);
        assert_eq!(r.d_train_to_train_min, 0.0);
    }

    #[test]
    fn threads_do_not_change_results() {
        let train = cloud(3000, 3, 7);
        let gen = cloud(1000, 3, 8);
        let a = nn_memorization(&gen, &train, &NnConfig::default()).unwrap();
        let b = nn_memorization(&gen, &train, &NnConfig { threads: 3, ..Default::default() }).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bad_inputs() {
        let one = cloud(1, 2, 0);
        assert!(nn_memorization(&one, &one, &NnConfig::default()).is_err());
        assert!(nn_memorization(&cloud(3, 2, 0), &cloud(3, 3, 0), &NnConfig::default()).is_err());
    }

    proptest! {
        #[test]
        fn tree_equals_scan(points in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 2), 2..120), q in prop::collection::vec(-3.0f64..3.0, 2)) {
            let flat: Vec<f64> = points.iter().flatten().copied().collect();
            let m = Matrix::from_vec(points.len(), 2, flat).unwrap();
            let tree = KdTree::build(&m);
            prop_assert_eq!(tree.nearest_squared(&q, None).map(f64::to_bits), brute_force_nearest_squared(&m, &q, None).map(f64::to_bits));
        }
    }
}
