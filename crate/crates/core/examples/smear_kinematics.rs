//! Generates toy ρ⁰ photoproduction events, projects them to the 10 model
//! features, smears the pion tracks and shows how the rebuilt dipion mass
//! and momentum transfer respond.
//!
//! `cargo run --release --example smear_kinematics`

use kinflow::datasets::{derive_kinematics, project_24_to_10, PhotoproductionGenerator, SmearConfig, smear_matrix};

fn spread(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (mean, (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt())
}

fn main() -> kinflow::Result<()> {
    let gen = PhotoproductionGenerator::default();
    let events = gen.generate(3, 11)?;
    for e in &events {
        let (shell, cons) = e.violations();
        println!(
            "t {:+.4}  m_pipi {:.4}  features {:.3?}  (shell {shell:.1e}, conservation {cons:.1e})",
            e.t,
            e.m_pipi,
            project_24_to_10(e)?
        );
    }

    let truth = gen.generate_features(20_000, 3)?;
    println!("\n{:>6} {:>22} {:>22}", "sigma", "m_pipi mean/std", "recoil shell offset");
    for sigma_smear in [0.0, 1.0, 2.0, 5.0] {
        let det = smear_matrix(&truth, &SmearConfig { sigma_smear, ..SmearConfig::default() })?;
        let mut m = Vec::new();
        let mut off = Vec::new();
        for i in 0..det.n_events() {
            let d = derive_kinematics(&det.row_f64(i))?;
            m.push(d.m_pipi);
            off.push(d.recoil_shell_offset.abs());
        }
        let (mm, ms) = spread(&m);
        println!("{sigma_smear:>6.1} {mm:>11.4} {ms:>10.4} {:>22.3e}", spread(&off).0);
    }
    Ok(())
}
