//! Distribution-level fidelity metrics: binned χ² (marginal and pairwise),
//! exact 1D Wasserstein, correlation-matrix distance and nearest-neighbour
//! memorisation ratios.

mod binned;
mod distance;
mod nn;
mod report;

pub use binned::{chi2_1d, chi2_2d, chi2_from_counts, histogram_dump, Binning, Chi2Pairs, FeatureHistogram, BINS_1D, BINS_2D};
pub use distance::{correlation_distance, correlation_matrix, wasserstein_1d};
pub use nn::{brute_force_nearest_squared, nn_memorization, squared_distance, KdTree, NnConfig, NnReport, ARTIFACT_FLOOR};
pub use report::{evaluate, EvalOptions, MetricsReport};
