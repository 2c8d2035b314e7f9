//! Event data: synthetic 1D mocks, photoproduction kinematics, preprocessing,
//! detector smearing and the binary event file format.

pub mod io;
pub mod kinematics;
pub mod mock;
mod preprocess;
pub mod smear;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub use io::{load_events, save_events, EventFile, Layout};
pub use kinematics::{
    compute_invariant_mass, compute_mandelstam_t, derive_kinematics, four_momenta_from_features, infer_recoil,
    project_24_to_10, DerivedKinematics, EventRecord24, FourMomentum, PhotoproductionGenerator, M_PION, M_PROTON,
    N_FEATURES,
};
pub use mock::{sample_mock, Component, MockFamily, MockSpec};
pub use preprocess::{apply_preprocess, fit_preprocess, invert_preprocess, PreprocessStats};
pub use smear::{smear_event, smear_matrix, SmearConfig};

/// Which coordinate system a feature matrix lives in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Space {
    Physical,
    Standardized,
}

/// `n_events x n_features` block of finite values tagged with its space.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    values: Matrix<f32>,
    space: Space,
}

impl FeatureMatrix {
    pub fn new(values: Matrix<f32>, space: Space) -> Result<Self> {
        if let Some(pos) = values.values().iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite value at row {}, feature {}",
                pos / values.cols().max(1),
                pos % values.cols().max(1)
            )));
        }
        Ok(Self { values, space })
    }

    pub fn physical(values: Matrix<f32>) -> Result<Self> {
        Self::new(values, Space::Physical)
    }

    /// Builds a single-feature physical matrix from `f64` samples.
    pub fn from_column(samples: &[f64]) -> Result<Self> {
        let m = Matrix::from_vec(samples.len(), 1, samples.iter().map(|&v| v as f32).collect())?;
        Self::physical(m)
    }

    pub fn from_rows_f64(rows: &[Vec<f64>], space: Space) -> Result<Self> {
        let m: Matrix<f64> = Matrix::from_rows(rows)?;
        Self::new(m.cast(), space)
    }

    pub fn n_events(&self) -> usize {
        self.values.rows()
    }

    pub fn n_features(&self) -> usize {
        self.values.cols()
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn matrix(&self) -> &Matrix<f32> {
        &self.values
    }

    pub fn into_matrix(self) -> Matrix<f32> {
        self.values
    }

    /// One feature as `f64`, the precision all metrics work in.
    pub fn column_f64(&self, j: usize) -> Vec<f64> {
        (0..self.n_events())
            .map(|i| self.values.get(i, j) as f64)
            .collect()
    }

    pub fn columns_f64(&self) -> Vec<Vec<f64>> {
        (0..self.n_features()).map(|j| self.column_f64(j)).collect()
    }

    pub fn row_f64(&self, i: usize) -> Vec<f64> {
        self.values.row(i).iter().map(|&v| v as f64).collect()
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        Self {
            values: self.values.select_rows(idx),
            space: self.space,
        }
    }

    pub fn require_space(&self, space: Space) -> Result<()> {
        if self.space != space {
            return Err(Error::State(format!(
                "expected {space:?} features, found {:?}",
                self.space
            )));
        }
        Ok(())
    }
}
