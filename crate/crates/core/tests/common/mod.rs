//! Helpers shared by the integration tests.

use kinflow::numerics::Matrix;
use kinflow::train::{build_cfm_batch, cfm_loss, cfm_loss_and_grad, CfmBatch};
use kinflow::velocity::{ActivationCache, NetConfig, NetMode, VelocityNet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EPS: f64 = 1e-3;
pub const GRAD_TOL: f64 = 1e-4;

fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix<f64> {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.5..1.5)).collect()).unwrap()
}

fn setup(mode: NetMode) -> (VelocityNet<f64>, CfmBatch<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let cfg = NetConfig::miniature(3, 16, 2, mode);
    let mut net = VelocityNet::<f32>::init(cfg, 5).unwrap().cast::<f64>();
    // Jitter every parameter so no tensor (zero-initialised ones included) sits at a special point.
    for t in net.params_mut().tensors_mut() {
        for v in t.iter_mut() {
            *v += rng.random_range(-0.1..0.1);
        }
    }
    let rows = 6;
    let x0 = random(rows, 3, &mut rng);
    let x1 = random(rows, 3, &mut rng);
    let t: Vec<f64> = (0..rows).map(|_| rng.random_range(0.0..1.0)).collect();
    let c = (mode == NetMode::Conditional).then(|| random(rows, 3, &mut rng));
    (net, build_cfm_batch(&x0, &x1, &t, c).unwrap())
}

/// Largest relative error between analytic and central-difference gradients
/// over every parameter, and how many entries were checked.
pub fn gradient_check(mode: NetMode) -> (f64, usize) {
    let (mut net, batch) = setup(mode);
    let mut cache = ActivationCache::new();
    let (_, grads) = cfm_loss_and_grad(&net, &batch, &mut cache).unwrap();
    let analytic: Vec<Vec<f64>> = grads.tensors().iter().map(|t| t.to_vec()).collect();

    let mut worst = 0.0f64;
    let mut checked = 0;
    for (ti, g) in analytic.iter().enumerate() {
        for i in 0..g.len() {
            let orig = net.params().tensors()[ti][i];
            let mut at = |h: f64| {
                net.params_mut().tensors_mut()[ti][i] = orig + h;
                cfm_loss(&net, &batch).unwrap()
            };
            // five-point central stencil, truncation error O(ε⁴)
            let fd = (at(-2.0 * EPS) - 8.0 * at(-EPS) + 8.0 * at(EPS) - at(2.0 * EPS)) / (12.0 * EPS);
            net.params_mut().tensors_mut()[ti][i] = orig;

            let rel = (g[i] - fd).abs() / g[i].abs().max(fd.abs()).max(1e-6);
            worst = worst.max(rel);
            checked += 1;
        }
    }
    (worst, checked)
}

