//! Adaptive Dormand–Prince integration on closed-form problems: the decay
//! `dx/dt = −x` at several tolerances, and the fifth-order convergence of the
//! fixed-step scheme.
//!
//! `cargo run --release --example solver`

use kinflow::numerics::Matrix;
use kinflow::odeint::{dopri5, dopri5_fixed, SolverConfig};

fn decay(_t: f64, x: &Matrix<f64>) -> kinflow::Result<Matrix<f64>> {
    Ok(x.map(|v| -v))
}

fn main() -> kinflow::Result<()> {
    let x0 = Matrix::from_vec(1, 1, vec![1.0])?;
    let exact = (-1.0f64).exp();
    for tol in [1e-3, 1e-5, 1e-7, 1e-10] {
        let r = dopri5(decay, &x0, (0.0, 1.0), &SolverConfig::with_tolerance(tol))?;
        println!(
            "tol {tol:.0e}: |x(1) - 1/e| = {:.2e}  NFE {:>3}  steps {} (+{} rejected)",
            (r.state.get(0, 0) - exact).abs(),
            r.nfe,
            r.accepted_steps,
            r.rejected_steps
        );
    }

    println!();
    let mut prev = None;
    for n in [2, 4, 8, 16] {
        let err = (dopri5_fixed(decay, &x0, (0.0, 1.0), n)?.get(0, 0) - exact).abs();
        match prev {
            Some(p) => println!("{n:>2} steps: error {err:.3e}  ratio {:.1}", p / err),
            None => println!("{n:>2} steps: error {err:.3e}"),
        }
        prev = Some(err);
    }

    // a batch of rotating states shares one adaptive step sequence
    let x0 = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 2.0]])?;
    let rotate = |_t: f64, x: &Matrix<f64>| {
        let mut d = Matrix::zeros(x.rows(), 2);
        for i in 0..x.rows() {
            d.set(i, 0, -x.get(i, 1));
            d.set(i, 1, x.get(i, 0));
        }
        Ok(d)
    };
    let r = dopri5(rotate, &x0, (0.0, std::f64::consts::PI), &SolverConfig::generation())?;
    println!("\nhalf turn: {:?} -> {:.6?}", x0.values(), r.state.values());
    Ok(())
}
