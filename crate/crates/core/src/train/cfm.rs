use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::datasets::{FeatureMatrix, Space};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Real};
use crate::velocity::{ActivationCache, GradientBuffer, VelocityNet};

/// One minibatch of the straight-path regression problem.
#[derive(Clone, Debug, PartialEq)]
pub struct CfmBatch<T = f32> {
    pub x_t: Matrix<T>,
    pub t: Vec<f64>,
    pub u_t: Matrix<T>,
    pub c: Option<Matrix<T>>,
}

impl<T: Real> CfmBatch<T> {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

/// `x_t = (1 − t)·x₀ + t·x₁`, `u_t = x₁ − x₀`.
pub fn build_cfm_batch<T: Real>(
    x0: &Matrix<T>,
    x1: &Matrix<T>,
    t: &[f64],
    c: Option<Matrix<T>>,
) -> Result<CfmBatch<T>> {
    if x0.rows() != x1.rows() || x0.cols() != x1.cols() || t.len() != x0.rows() {
        return Err(Error::Shape(format!(
            "x0 {}x{}, x1 {}x{}, {} times",
            x0.rows(),
            x0.cols(),
            x1.rows(),
            x1.cols(),
            t.len()
        )));
    }
    if let Some(c) = &c {
        if c.rows() != x0.rows() {
            return Err(Error::Shape(format!("{} conditions for {} rows", c.rows(), x0.rows())));
        }
    }
    let d = x0.cols();
    let mut x_t = Matrix::zeros(x0.rows(), d);
    let mut u_t = Matrix::zeros(x0.rows(), d);
    for (k, ((a, b), (xt, ut))) in x0
        .values()
        .iter()
        .zip(x1.values())
        .zip(x_t.values_mut().iter_mut().zip(u_t.values_mut()))
        .enumerate()
    {
        let s = t[k / d];
        let (a, b) = (a.to_f64(), b.to_f64());
        *xt = T::from_f64((1.0 - s) * a + s * b);
        *ut = T::from_f64(b - a);
    }
    Ok(CfmBatch { x_t, t: t.to_vec(), u_t, c })
}

fn check_training_data(data: &FeatureMatrix, cond: Option<&FeatureMatrix>) -> Result<()> {
    data.require_space(Space::Standardized)?;
    if let Some(c) = cond {
        c.require_space(Space::Standardized)?;
        if c.n_events() != data.n_events() {
            return Err(Error::Validation(format!(
                "{} condition rows for {} truth rows; conditional data must be paired",
                c.n_events(),
                data.n_events()
            )));
        }
    }
    Ok(())
}

/// Batch built from the given data rows with fresh `x₀ ~ N(0, I)` and `t ~ U[0, 1]`.
pub fn cfm_batch_for_rows<R: Rng>(
    data: &FeatureMatrix,
    cond: Option<&FeatureMatrix>,
    rows: &[usize],
    rng: &mut R,
) -> Result<CfmBatch<f32>> {
    check_training_data(data, cond)?;
    let d = data.n_features();
    let x1 = data.matrix().select_rows(rows);
    let x0 = Matrix::from_vec(
        rows.len(),
        d,
        (0..rows.len() * d).map(|_| StandardNormal.sample(rng)).collect(),
    )?;
    let t: Vec<f64> = (0..rows.len()).map(|_| rng.random::<f64>()).collect();
    build_cfm_batch(&x0, &x1, &t, cond.map(|c| c.matrix().select_rows(rows)))
}

/// Batch with `x₁` rows drawn uniformly (with replacement) from `data`.
pub fn sample_cfm_batch<R: Rng>(
    data: &FeatureMatrix,
    cond: Option<&FeatureMatrix>,
    batch_size: usize,
    rng: &mut R,
) -> Result<CfmBatch<f32>> {
    if data.n_events() == 0 {
        return Err(Error::Argument("cannot sample from an empty dataset".into()));
    }
    let rows: Vec<usize> = (0..batch_size).map(|_| rng.random_range(0..data.n_events())).collect();
    cfm_batch_for_rows(data, cond, &rows, rng)
}

fn residual<T: Real>(v: &Matrix<T>, batch: &CfmBatch<T>) -> (f64, Vec<f64>) {
    let diff: Vec<f64> = v
        .values()
        .iter()
        .zip(batch.u_t.values())
        .map(|(a, b)| a.to_f64() - b.to_f64())
        .collect();
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / batch.len().max(1) as f64;
    (loss, diff)
}

/// Mean over the batch of `‖v_θ(x_t, t[, c]) − u_t‖²`.
pub fn cfm_loss<T: Real>(net: &VelocityNet<T>, batch: &CfmBatch<T>) -> Result<f64> {
    let v = net.forward(&batch.x_t, &batch.t, batch.c.as_ref())?;
    Ok(residual(&v, batch).0)
}

/// Loss and its gradient with respect to every network parameter.
pub fn cfm_loss_and_grad<T: Real>(
    net: &VelocityNet<T>,
    batch: &CfmBatch<T>,
    cache: &mut ActivationCache<T>,
) -> Result<(f64, GradientBuffer<T>)> {
    let v = net.forward_cached(&batch.x_t, &batch.t, batch.c.as_ref(), cache)?;
    let (loss, diff) = residual(&v, batch);
    let scale = 2.0 / batch.len().max(1) as f64;
    let d_out = Matrix::from_vec(v.rows(), v.cols(), diff.iter().map(|d| T::from_f64(scale * d)).collect())?;
    let grads = net.backward(cache, &d_out)?;
    Ok((loss, grads))
}
