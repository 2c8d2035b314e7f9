use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
/// 5th-order minus embedded 4th-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;

/// How step sizes are chosen for a batch of trajectories.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stepping {
    /// One error norm over the whole batch; all rows share the step sequence.
    #[default]
    Shared,
    /// Every row is integrated on its own.
    PerTrajectory,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub atol: f64,
    pub rtol: f64,
    pub max_steps: usize,
    pub initial_step: Option<f64>,
    pub stepping: Stepping,
    /// Rows integrated together when sampling; fixed so results do not depend
    /// on the thread count.
    pub chunk_rows: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self::with_tolerance(1e-7)
    }
}

impl SolverConfig {
    pub fn with_tolerance(tol: f64) -> Self {
        Self {
            atol: tol,
            rtol: tol,
            max_steps: 10_000,
            initial_step: None,
            stepping: Stepping::Shared,
            chunk_rows: 65_536,
        }
    }

    /// Strict setting used for unconditional generation.
    pub fn generation() -> Self {
        Self::with_tolerance(1e-7)
    }

    /// Relaxed setting used for unfolding and in-training validation.
    pub fn relaxed() -> Self {
        Self::with_tolerance(1e-3)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.atol > 0.0 && self.rtol > 0.0) {
            return Err(Error::Config(format!("tolerances must be positive (atol {}, rtol {})", self.atol, self.rtol)));
        }
        if self.max_steps == 0 || self.chunk_rows == 0 {
            return Err(Error::Config("max_steps and chunk_rows must be at least 1".into()));
        }
        if let Some(h) = self.initial_step {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::Config(format!("initial_step must be positive, got {h}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IntegrationResult {
    pub state: Matrix<f64>,
    /// Calls of the vector field (each call evaluates the whole batch).
    pub nfe: usize,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

/// Outcome of one explicit step of size `h`.
#[derive(Clone, Debug)]
pub struct Dopri5Step {
    pub state: Matrix<f64>,
    /// Derivative at the new point (first stage of the next step).
    pub derivative: Matrix<f64>,
    /// Local error estimate, per component.
    pub error: Vec<f64>,
}

fn check_finite(m: &Matrix<f64>, t: f64) -> Result<()> {
    if !m.all_finite() {
        return Err(Error::Divergence { t });
    }
    Ok(())
}

/// One DOPRI5 step from `(t, x)` with known derivative `k1 = f(t, x)`.
/// Makes six calls to `f`.
pub fn dopri5_step<F>(f: &mut F, t: f64, x: &Matrix<f64>, k1: &Matrix<f64>, h: f64) -> Result<Dopri5Step>
where
    F: FnMut(f64, &Matrix<f64>) -> Result<Matrix<f64>>,
{
    let mut k: Vec<Matrix<f64>> = Vec::with_capacity(7);
    k.push(k1.clone());
    let mut stage_state = x.clone();
    for s in 1..7 {
        for (i, v) in stage_state.values_mut().iter_mut().enumerate() {
            let mut acc = 0.0;
            for (j, kj) in k.iter().enumerate() {
                acc += A[s][j] * kj.values()[i];
            }
            *v = x.values()[i] + h * acc;
        }
        let ts = if s == 6 { t + h } else { t + C[s] * h };
        let ks = f(ts, &stage_state)?;
        if ks.rows() != x.rows() || ks.cols() != x.cols() {
            return Err(Error::Shape(format!(
                "vector field returned {}x{} for a {}x{} state",
                ks.rows(),
                ks.cols(),
                x.rows(),
                x.cols()
            )));
        }
        check_finite(&ks, ts)?;
        k.push(ks);
    }
    // the 7th stage was evaluated at the 5th-order solution
    let error = (0..x.values().len())
        .map(|i| h * E.iter().zip(&k).map(|(e, kj)| e * kj.values()[i]).sum::<f64>())
        .collect();
    Ok(Dopri5Step {
        state: stage_state,
        derivative: k.pop().expect("seven stages"),
        error,
    })
}

/// Per-row sums of squared scaled errors, reduced in sorted order so the
/// batch norm does not depend on row order.
fn error_norm(err: &[f64], x: &Matrix<f64>, x_new: &Matrix<f64>, cfg: &SolverConfig) -> f64 {
    let d = x.cols().max(1);
    let mut rows: Vec<f64> = err
        .chunks(d)
        .enumerate()
        .map(|(r, e)| {
            e.iter()
                .enumerate()
                .map(|(j, ei)| {
                    let i = r * d + j;
                    let sc = cfg.atol + cfg.rtol * x.values()[i].abs().max(x_new.values()[i].abs());
                    (ei / sc).powi(2)
                })
                .sum::<f64>()
        })
        .collect();
    rows.sort_unstable_by(f64::total_cmp);
    (rows.iter().sum::<f64>() / err.len().max(1) as f64).sqrt()
}

fn rms_scaled(v: &Matrix<f64>, x: &Matrix<f64>, cfg: &SolverConfig) -> f64 {
    let n = v.values().len().max(1) as f64;
    (v.values()
        .iter()
        .zip(x.values())
        .map(|(a, xi)| (a / (cfg.atol + cfg.rtol * xi.abs())).powi(2))
        .sum::<f64>()
        / n)
        .sqrt()
}

/// First step size from the state and derivative scales, without an extra
/// evaluation of `f`.
fn initial_step(x: &Matrix<f64>, k1: &Matrix<f64>, span: f64, cfg: &SolverConfig) -> f64 {
    if let Some(h) = cfg.initial_step {
        return h.min(span);
    }
    let d0 = rms_scaled(x, x, cfg);
    let d1 = rms_scaled(k1, x, cfg);
    let h = if d1 == 0.0 {
        span
    } else if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    h.min(span)
}

/// Adaptive Dormand–Prince 5(4) integration of `dx/dt = f(t, x)` over `t_span`.
///
/// `nfe = 1 + 6·(accepted + rejected)`: one initial evaluation, then six fresh
/// stages per attempted step thanks to first-same-as-last reuse.
pub fn dopri5<F>(mut f: F, x0: &Matrix<f64>, t_span: (f64, f64), cfg: &SolverConfig) -> Result<IntegrationResult>
where
    F: FnMut(f64, &Matrix<f64>) -> Result<Matrix<f64>>,
{
    cfg.validate()?;
    let (t0, t1) = t_span;
    if !(t1 >= t0) {
        return Err(Error::Argument(format!("integration span ({t0}, {t1}) must run forward")));
    }
    check_finite(x0, t0)?;
    let mut x = x0.clone();
    if x.values().is_empty() || t1 == t0 {
        return Ok(IntegrationResult { state: x, nfe: 0, accepted_steps: 0, rejected_steps: 0 });
    }
    let mut k1 = f(t0, &x)?;
    check_finite(&k1, t0)?;
    let mut nfe = 1;
    let (mut accepted, mut rejected) = (0, 0);
    let mut t = t0;
    let mut h = initial_step(&x, &k1, t1 - t0, cfg);
    let mut last_rejected = false;
    loop {
        if accepted + rejected >= cfg.max_steps {
            return Err(Error::NonConvergence {
                steps: accepted + rejected,
                t,
                partial: x.into_values(),
            });
        }
        let remaining = t1 - t;
        let last = h >= remaining;
        if last {
            h = remaining;
        }
        let step = dopri5_step(&mut f, t, &x, &k1, h)?;
        nfe += 6;
        let err = error_norm(&step.error, &x, &step.state, cfg);
        if !err.is_finite() {
            return Err(Error::Divergence { t });
        }
        if err <= 1.0 {
            accepted += 1;
            t = if last { t1 } else { t + h };
            x = step.state;
            k1 = step.derivative;
            if t >= t1 {
                break;
            }
            let mut factor = if err == 0.0 {
                MAX_FACTOR
            } else {
                (SAFETY * err.powf(-0.2)).clamp(MIN_FACTOR, MAX_FACTOR)
            };
            if last_rejected {
                factor = factor.min(1.0);
            }
            h *= factor;
            last_rejected = false;
        } else {
            rejected += 1;
            h *= (SAFETY * err.powf(-0.2)).max(MIN_FACTOR);
            last_rejected = true;
        }
    }
    Ok(IntegrationResult { state: x, nfe, accepted_steps: accepted, rejected_steps: rejected })
}

/// `n_steps` equal DOPRI5 steps over `t_span`, without error control.
pub fn dopri5_fixed<F>(mut f: F, x0: &Matrix<f64>, t_span: (f64, f64), n_steps: usize) -> Result<Matrix<f64>>
where
    F: FnMut(f64, &Matrix<f64>) -> Result<Matrix<f64>>,
{
    if n_steps == 0 {
        return Err(Error::Argument("need at least one step".into()));
    }
    let h = (t_span.1 - t_span.0) / n_steps as f64;
    let mut x = x0.clone();
    let mut k1 = f(t_span.0, &x)?;
    for s in 0..n_steps {
        let step = dopri5_step(&mut f, t_span.0 + s as f64 * h, &x, &k1, h)?;
        x = step.state;
        k1 = step.derivative;
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(v: &[f64]) -> Matrix<f64> {
        Matrix::from_vec(v.len(), 1, v.to_vec()).unwrap()
    }

    fn decay(_t: f64, x: &Matrix<f64>) -> Result<Matrix<f64>> {
        Ok(x.map(|v| -v))
    }

    #[test]
    fn tableau_consistency() {
        for s in 0..7 {
            let row: f64 = A[s].iter().sum();
            assert!((row - C[s]).abs() < 1e-15, "row {s}");
        }
        assert!(E.iter().sum::<f64>().abs() < 1e-15);
    }

    #[test]
    fn zero_field_single_step() {
        let x0 = col(&[1.5, -2.0, 0.0]);
        let r = dopri5(|_, x: &Matrix<f64>| Ok(Matrix::zeros(x.rows(), x.cols())), &x0, (0.0, 1.0), &SolverConfig::default()).unwrap();
        assert_eq!(r.state, x0);
        assert_eq!((r.accepted_steps, r.rejected_steps, r.nfe), (1, 0, 7));
    }

    #[test]
    fn exponential_decay() {
        let r = dopri5(decay, &col(&[1.0]), (0.0, 1.0), &SolverConfig::with_tolerance(1e-7)).unwrap();
        let x1 = r.state.values()[0];
        assert!((x1 - (-1.0f64).exp()).abs() < 1e-6, "{x1}");
        assert!((x1 - 0.3678794).abs() < 10.0 * 2e-7);
        assert_eq!(r.nfe, 1 + 6 * (r.accepted_steps + r.rejected_steps));
    }

    #[test]
    fn constant_field_is_exact() {
        let x0 = col(&[0.25, -1.0]);
        let u = col(&[2.0, 0.5]);
        for tol in [1e-3, 1e-7] {
            let r = dopri5(|_, _: &Matrix<f64>| Ok(u.clone()), &x0, (0.0, 1.0), &SolverConfig::with_tolerance(tol)).unwrap();
            // the fifth-order weights sum to 1 only up to rounding
            for (got, want) in r.state.values().iter().zip([2.25, -0.5]) {
                assert!((got - want).abs() <= 4.0 * f64::EPSILON * want.abs(), "{got}");
            }
            // zero error estimate: the step grows by the maximum factor each time
            assert_eq!(r.rejected_steps, 0);
            assert!(r.accepted_steps <= 5, "{}", r.accepted_steps);
        }
    }

    #[test]
    fn fifth_order_convergence() {
        let x0 = col(&[1.0]);
        let exact = (-1.0f64).exp();
        let e4 = (dopri5_fixed(decay, &x0, (0.0, 1.0), 4).unwrap().values()[0] - exact).abs();
        let e8 = (dopri5_fixed(decay, &x0, (0.0, 1.0), 8).unwrap().values()[0] - exact).abs();
        let ratio = e4 / e8;
        assert!((16.0..=64.0).contains(&ratio), "{ratio}");
    }

    #[test]
    fn divergence_and_budget() {
        let bad = |t: f64, x: &Matrix<f64>| Ok(x.map(|_| if t > 0.5 { f64::NAN } else { 1.0 }));
        let cfg = SolverConfig { initial_step: Some(0.3), ..Default::default() };
        assert!(matches!(dopri5(bad, &col(&[0.0]), (0.0, 1.0), &cfg), Err(Error::Divergence { .. })));
        let stiff = |_: f64, x: &Matrix<f64>| Ok(x.map(|v| -1e4 * (v - 1.0)));
        let cfg = SolverConfig { max_steps: 5, ..Default::default() };
        match dopri5(stiff, &col(&[0.0]), (0.0, 1.0), &cfg) {
            Err(Error::NonConvergence { steps, partial, .. }) => {
                assert_eq!(steps, 5);
                assert_eq!(partial.len(), 1);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn tighter_tolerance_costs_more() {
        let osc = |t: f64, x: &Matrix<f64>| Ok(x.map(|v| (5.0 * t).cos() - 0.5 * v));
        let x0 = col(&[0.3, -0.7]);
        let loose = dopri5(osc, &x0, (0.0, 1.0), &SolverConfig::with_tolerance(1e-3)).unwrap();
        let tight = dopri5(osc, &x0, (0.0, 1.0), &SolverConfig::with_tolerance(1e-7)).unwrap();
        assert!(tight.nfe > loose.nfe);
    }

    #[test]
    fn row_order_does_not_change_steps() {
        let f = |t: f64, x: &Matrix<f64>| Ok(x.map(|v| (3.0 * v).sin() * (1.0 + t)));
        let a = col(&[0.1, -0.4, 0.9, 2.2, -1.3]);
        let b = col(&[2.2, 0.9, -1.3, 0.1, -0.4]);
        let ra = dopri5(f, &a, (0.0, 1.0), &SolverConfig::with_tolerance(1e-6)).unwrap();
        let rb = dopri5(f, &b, (0.0, 1.0), &SolverConfig::with_tolerance(1e-6)).unwrap();
        let perm = [3, 2, 4, 0, 1];
        for (i, &p) in perm.iter().enumerate() {
            assert_eq!(rb.state.values()[i].to_bits(), ra.state.values()[p].to_bits());
        }
    }
}
