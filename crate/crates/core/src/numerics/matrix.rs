//! Dense row-major matrices and the small set of kernels the velocity network needs.
//!
//! Every reduction (dot products, sums) accumulates in `f64` regardless of the
//! storage type, and always in ascending index order, so results do not depend on
//! how the work is blocked.

use std::fmt::Debug;

use crate::error::{Error, Result};

/// Storage scalar for matrices: `f32` for training and inference, `f64` for
/// gradient-check replays.
pub trait Real:
    Copy
    + Default
    + Debug
    + PartialOrd
    + Send
    + Sync
    + 'static
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<Output = Self>
{
    const ZERO: Self;
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn is_finite(self) -> bool;
}

impl Real for f32 {
    const ZERO: Self = 0.0;
    #[inline(always)]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    #[inline(always)]
    fn to_f64(self) -> f64 {
        self as f64
    }
    #[inline(always)]
    fn is_finite(self) -> bool {
        f32::is_finite(self)
    }
}

impl Real for f64 {
    const ZERO: Self = 0.0;
    #[inline(always)]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline(always)]
    fn to_f64(self) -> f64 {
        self
    }
    #[inline(always)]
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
}

/// Row-major dense matrix. Rows are events, columns are features.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T = f32> {
    rows: usize,
    cols: usize,
    values: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            values: vec![T::ZERO; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                values.len()
            )));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::Shape(format!(
                    "row {i} has {} columns, expected {cols}",
                    r.len()
                )));
            }
            values.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.values[i * n + i] = T::from_f64(1.0);
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn values(&self) -> &[T] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.values[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.values[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.values[r * self.cols..(r + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.values[c * self.rows + r] = self.values[r * self.cols + c];
            }
        }
        out
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Converts between storage precisions.
    pub fn cast<U: Real>(&self) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            values: self.values.iter().map(|v| U::from_f64(v.to_f64())).collect(),
        }
    }

    /// Horizontal concatenation of matrices with equal row counts.
    pub fn hconcat(parts: &[&Matrix<T>]) -> Result<Self> {
        let rows = parts.first().map_or(0, |m| m.rows);
        if let Some(bad) = parts.iter().find(|m| m.rows != rows) {
            return Err(Error::Shape(format!(
                "cannot concatenate {} rows with {rows} rows",
                bad.rows
            )));
        }
        let cols: usize = parts.iter().map(|m| m.cols).sum();
        let mut values = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for m in parts {
                values.extend_from_slice(m.row(r));
            }
        }
        Ok(Self { rows, cols, values })
    }

    /// Copies out the column range `[start, start + width)`.
    pub fn columns(&self, start: usize, width: usize) -> Self {
        let mut values = Vec::with_capacity(self.rows * width);
        for r in 0..self.rows {
            values.extend_from_slice(&self.row(r)[start..start + width]);
        }
        Self {
            rows: self.rows,
            cols: width,
            values,
        }
    }

    /// Gathers the listed rows in order.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let mut values = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            values.extend_from_slice(self.row(i));
        }
        Self {
            rows: idx.len(),
            cols: self.cols,
            values,
        }
    }

    /// Elementwise `self + other`.
    pub fn add(&self, other: &Matrix<T>) -> Result<Self> {
        self.check_same_shape(other)?;
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| a + b)
                .collect(),
        })
    }

    fn check_same_shape(&self, other: &Matrix<T>) -> Result<()> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::Shape(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(())
    }
}

const ROW_BLOCK: usize = 2;
const COL_BLOCK: usize = 32;

/// `c[m x n] = a[m x k] * b[k x n]`, all row-major, f64 accumulation in
/// ascending `k` order. `bias`, when given, is added after the dot product.
fn gemm<T: Real>(a: &[T], b: &[T], bias: Option<&[T]>, c: &mut [T], m: usize, k: usize, n: usize) {
    let full_cols = n - n % COL_BLOCK;
    let full_rows = m - m % ROW_BLOCK;
    let mut i = 0;
    while i < full_rows {
        let mut j = 0;
        while j < full_cols {
            let mut acc = [[0.0f64; COL_BLOCK]; ROW_BLOCK];
            for p in 0..k {
                let brow = &b[p * n + j..p * n + j + COL_BLOCK];
                let mut bv = [0.0f64; COL_BLOCK];
                for (dst, src) in bv.iter_mut().zip(brow) {
                    *dst = src.to_f64();
                }
                for (r, acc_row) in acc.iter_mut().enumerate() {
                    let av = a[(i + r) * k + p].to_f64();
                    for (x, &y) in acc_row.iter_mut().zip(&bv) {
                        *x += av * y;
                    }
                }
            }
            for (r, acc_row) in acc.iter().enumerate() {
                let out = &mut c[(i + r) * n + j..(i + r) * n + j + COL_BLOCK];
                for (cc, (dst, &s)) in out.iter_mut().zip(acc_row).enumerate() {
                    let s = match bias {
                        Some(bias) => s + bias[j + cc].to_f64(),
                        None => s,
                    };
                    *dst = T::from_f64(s);
                }
            }
            j += COL_BLOCK;
        }
        i += ROW_BLOCK;
    }
    // Ragged edges: same summation order as the blocked path.
    let scalar = |i: usize, j: usize| {
        let mut s = 0.0f64;
        for p in 0..k {
            s += a[i * k + p].to_f64() * b[p * n + j].to_f64();
        }
        match bias {
            Some(bias) => s + bias[j].to_f64(),
            None => s,
        }
    };
    for i in 0..full_rows {
        for j in full_cols..n {
            c[i * n + j] = T::from_f64(scalar(i, j));
        }
    }
    for i in full_rows..m {
        for j in 0..n {
            c[i * n + j] = T::from_f64(scalar(i, j));
        }
    }
}

/// Standard matrix product.
pub fn matmul<T: Real>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    if a.cols != b.rows {
        return Err(Error::Shape(format!(
            "matmul {}x{} by {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    gemm(&a.values, &b.values, None, &mut out.values, a.rows, a.cols, b.cols);
    Ok(out)
}

/// `aᵀ · b` without materialising anything larger than `aᵀ`.
pub fn matmul_at_b<T: Real>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    if a.rows != b.rows {
        return Err(Error::Shape(format!(
            "matmul_at_b {}x{} by {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    matmul(&a.transpose(), b)
}

/// Affine map `x · wᵀ + b` with `w` stored as `out x in`.
pub fn linear_forward<T: Real>(w: &Matrix<T>, b: &[T], x: &Matrix<T>) -> Result<Matrix<T>> {
    if x.cols != w.cols {
        return Err(Error::Shape(format!(
            "linear layer expects {} inputs, got {}",
            w.cols, x.cols
        )));
    }
    if b.len() != w.rows {
        return Err(Error::Shape(format!(
            "bias has {} entries for {} outputs",
            b.len(),
            w.rows
        )));
    }
    let mut out = Matrix::zeros(x.rows, w.rows);
    if x.rows < SMALL_BATCH {
        // Transposing `w` would cost more than the product; the sums run in
        // the same order as in `gemm`, so both paths agree bitwise.
        small_linear(w, b, x, &mut out);
        return Ok(out);
    }
    let wt = w.transpose();
    gemm(&x.values, &wt.values, Some(b), &mut out.values, x.rows, x.cols, w.rows);
    Ok(out)
}

const SMALL_BATCH: usize = 16;
const TILE: usize = 4;

/// Tiles of up to 4 rows by 4 outputs; each entry is still one sequential
/// sum over the inputs followed by the bias, as in `gemm`.
fn small_linear<T: Real>(w: &Matrix<T>, b: &[T], x: &Matrix<T>, out: &mut Matrix<T>) {
    let (k, n_out) = (x.cols, w.rows);
    for i0 in (0..x.rows).step_by(TILE) {
        let nr = TILE.min(x.rows - i0);
        let xr: [&[T]; TILE] = std::array::from_fn(|r| x.row(i0 + r.min(nr - 1)));
        for o0 in (0..n_out).step_by(TILE) {
            let no = TILE.min(n_out - o0);
            let wr: [&[T]; TILE] = std::array::from_fn(|q| w.row(o0 + q.min(no - 1)));
            let mut acc = [[0.0f64; TILE]; TILE];
            for p in 0..k {
                let wv: [f64; TILE] = std::array::from_fn(|q| wr[q][p].to_f64());
                for r in 0..TILE {
                    let a = xr[r][p].to_f64();
                    for q in 0..TILE {
                        acc[r][q] += a * wv[q];
                    }
                }
            }
            for r in 0..nr {
                for q in 0..no {
                    out.values[(i0 + r) * n_out + o0 + q] = T::from_f64(acc[r][q] + b[o0 + q].to_f64());
                }
            }
        }
    }
}

/// `eˣ` without a libm call, so loops over it vectorize. Cody-Waite range
/// reduction to `|r| ≤ ln2/2` and a degree-13 Taylor polynomial; within a
/// few ulp of `f64::exp` on `[-708, 709]`, saturating outside it.
#[inline(always)]
pub fn exp_kernel(x: f64) -> f64 {
    const LN2_HI: f64 = 6.931_471_803_691_238e-1;
    const LN2_LO: f64 = 1.908_214_929_270_587_7e-10;
    let x = x.clamp(-708.0, 709.0);
    let k = (x * std::f64::consts::LOG2_E).round_ties_even();
    let r = (x - k * LN2_HI) - k * LN2_LO;
    let mut p = 1.0 / 6_227_020_800.0;
    for c in [
        1.0 / 479_001_600.0,
        1.0 / 39_916_800.0,
        1.0 / 3_628_800.0,
        1.0 / 362_880.0,
        1.0 / 40_320.0,
        1.0 / 5_040.0,
        1.0 / 720.0,
        1.0 / 120.0,
        1.0 / 24.0,
        1.0 / 6.0,
        0.5,
        1.0,
        1.0,
    ] {
        p = p * r + c;
    }
    p * f64::from_bits(((k as i64 + 1023) as u64) << 52)
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + exp_kernel(-x))
}

#[inline]
pub fn silu_scalar(x: f64) -> f64 {
    x * sigmoid(x)
}

/// Derivative of `x·σ(x)`: `σ(x)·(1 + x·(1 − σ(x)))`.
#[inline]
pub fn silu_grad_scalar(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

pub fn silu<T: Real>(x: &Matrix<T>) -> Matrix<T> {
    x.map(|v| T::from_f64(silu_scalar(v.to_f64())))
}

/// Column sums of a matrix (bias gradients), f64 accumulation in row order.
pub fn column_sums<T: Real>(x: &Matrix<T>) -> Vec<T> {
    let mut acc = vec![0.0f64; x.cols];
    for r in 0..x.rows {
        for (a, v) in acc.iter_mut().zip(x.row(r)) {
            *a += v.to_f64();
        }
    }
    acc.into_iter().map(T::from_f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Matrix<f64> {
        Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn matmul_identity() {
        let a = m(&[&[1.0, 2.0], &[3.0, 4.0]]);
        assert_eq!(matmul(&a, &Matrix::identity(2)).unwrap(), a);
    }

    #[test]
    fn matmul_dot() {
        let a = m(&[&[1.0, 2.0]]);
        let b = m(&[&[3.0], &[4.0]]);
        assert_eq!(matmul(&a, &b).unwrap().values(), &[11.0]);
    }

    #[test]
    fn matmul_zero_annihilates() {
        let z = Matrix::<f64>::zeros(3, 5);
        let b = Matrix::from_vec(5, 2, (0..10).map(|v| v as f64 * 1.5 - 3.0).collect()).unwrap();
        assert!(matmul(&z, &b).unwrap().values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matmul_shape_error() {
        let a = Matrix::<f32>::zeros(2, 3);
        assert!(matches!(matmul(&a, &a), Err(Error::Shape(_))));
    }

    #[test]
    fn blocked_and_ragged_paths_agree() {
        // 9x37 by 37x35 exercises both the blocked kernel and both ragged edges.
        let a = Matrix::from_vec(9, 37, (0..9 * 37).map(|v| ((v * 7919) % 97) as f32 / 13.0 - 3.0).collect()).unwrap();
        let b = Matrix::from_vec(37, 35, (0..37 * 35).map(|v| ((v * 104729) % 89) as f32 / 11.0 - 4.0).collect()).unwrap();
        let c = matmul(&a, &b).unwrap();
        for i in 0..9 {
            for j in 0..35 {
                let mut s = 0.0f64;
                for p in 0..37 {
                    s += a.get(i, p) as f64 * b.get(p, j) as f64;
                }
                assert_eq!(c.get(i, j), s as f32, "({i},{j})");
            }
        }
    }

    #[test]
    fn silu_values() {
        assert_eq!(silu_scalar(0.0), 0.0);
        assert!((silu_scalar(30.0) - 30.0).abs() < 1e-9);
        assert!((silu_scalar(1.0) - 0.7310585786300049).abs() < 1e-12);
    }

    #[test]
    fn silu_grad_matches_difference_quotient() {
        for &x in &[-4.0, -1.0, -0.1, 0.0, 0.3, 2.0, 7.0] {
            let h = 1e-6;
            let fd = (silu_scalar(x + h) - silu_scalar(x - h)) / (2.0 * h);
            assert!((fd - silu_grad_scalar(x)).abs() < 1e-8, "x={x}");
        }
    }

    #[test]
    fn exp_kernel_tracks_libm() {
        let mut worst = 0.0f64;
        for i in 0..=200_000 {
            let x = -708.0 + 1417.0 * i as f64 / 200_000.0;
            let (a, b) = (exp_kernel(x), x.exp());
            worst = worst.max(((a - b) / b).abs());
        }
        assert!(worst < 4.0 * f64::EPSILON, "{worst:e}");
        assert_eq!(exp_kernel(0.0), 1.0);
        assert_eq!(exp_kernel(-1e9), exp_kernel(-708.0));
        assert!(exp_kernel(1e9).is_finite());
        assert_eq!(sigmoid(-1e6) + sigmoid(1e6), 1.0);
        assert!((sigmoid(2.0) - 1.0 / (1.0 + (-2.0f64).exp())).abs() < 1e-16);
    }

    #[test]
    fn linear_forward_cases() {
        let x = m(&[&[1.0, -2.0], &[0.5, 3.0]]);
        let id = Matrix::identity(2);
        assert_eq!(linear_forward(&id, &[0.0, 0.0], &x).unwrap(), x);

        let zero = Matrix::<f64>::zeros(3, 2);
        let y = linear_forward(&zero, &[1.0, 2.0, 3.0], &x).unwrap();
        for r in 0..2 {
            assert_eq!(y.row(r), &[1.0, 2.0, 3.0]);
        }

        let y = linear_forward(&m(&[&[2.0]]), &[1.0], &m(&[&[3.0]])).unwrap();
        assert_eq!(y.values(), &[7.0]);

        assert!(linear_forward(&id, &[0.0], &x).is_err());
        assert!(linear_forward(&Matrix::<f64>::zeros(2, 3), &[0.0, 0.0], &x).is_err());
    }

    #[test]
    fn small_batch_path_matches_blocked_path() {
        let mut state = 0x9e37_79b9_7f4a_7c15u64;
        let mut next = || {
            state = state.wrapping_mul(6_364_136_223_846_793_005).wrapping_add(1_442_695_040_888_963_407);
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let w: Matrix<f32> = Matrix::from_vec(37, 67, (0..37 * 67).map(|_| next() as f32).collect()).unwrap();
        let b: Vec<f32> = (0..37).map(|_| next() as f32).collect();
        let x: Matrix<f32> = Matrix::from_vec(40, 67, (0..40 * 67).map(|_| next() as f32).collect()).unwrap();
        let all = linear_forward(&w, &b, &x).unwrap();
        for r in 0..x.rows() {
            let one = linear_forward(&w, &b, &x.select_rows(&[r])).unwrap();
            assert_eq!(one.row(0), all.row(r), "row {r}");
        }
    }

    #[test]
    fn hconcat_and_columns_invert() {
        let a = m(&[&[1.0], &[2.0]]);
        let b = m(&[&[3.0, 4.0], &[5.0, 6.0]]);
        let c = Matrix::hconcat(&[&a, &b]).unwrap();
        assert_eq!(c.row(1), &[2.0, 5.0, 6.0]);
        assert_eq!(c.columns(1, 2), b);
    }
}
