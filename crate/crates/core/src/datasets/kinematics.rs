//! Four-vectors and the γp → ρp → π⁺π⁻p reaction.
//!
//! All momenta are in GeV with metric signature (+,−,−,−). The 10-feature
//! layout is photon (pₓ, p_z), target (pₓ, p_z), π⁺ (pₓ, p_y, p_z),
//! π⁻ (pₓ, p_y, p_z).

use std::ops::{Add, Neg, Sub};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{FeatureMatrix, Space};
use crate::error::{Error, Result};

pub const M_PION: f64 = 0.13957;
pub const M_PROTON: f64 = 0.93827;

/// Number of features after dropping the zero `p_y` of the beam and target
/// and the recoil proton.
pub const N_FEATURES: usize = 10;

const MASS2_FLOOR: f64 = 1e-9;
const PY_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FourMomentum {
    pub e: f64,
    pub px: f64,
    pub py: f64,
    pub pz: f64,
}

impl FourMomentum {
    pub const fn new(e: f64, px: f64, py: f64, pz: f64) -> Self {
        Self { e, px, py, pz }
    }

    /// On-shell four-vector with the given three-momentum.
    pub fn on_shell(mass: f64, px: f64, py: f64, pz: f64) -> Self {
        let e = (mass * mass + px * px + py * py + pz * pz).sqrt();
        Self { e, px, py, pz }
    }

    pub fn p2(&self) -> f64 {
        self.px * self.px + self.py * self.py + self.pz * self.pz
    }

    pub fn p(&self) -> f64 {
        self.p2().sqrt()
    }

    /// Minkowski square `E² − |p|²`.
    pub fn mass2(&self) -> f64 {
        self.e * self.e - self.p2()
    }

    pub fn is_finite(&self) -> bool {
        self.e.is_finite() && self.px.is_finite() && self.py.is_finite() && self.pz.is_finite()
    }

    pub fn three(&self) -> [f64; 3] {
        [self.px, self.py, self.pz]
    }

    /// Velocity of the frame in which this momentum is at rest.
    pub fn velocity(&self) -> [f64; 3] {
        [self.px / self.e, self.py / self.e, self.pz / self.e]
    }

    /// Lorentz boost by velocity `beta`: a vector given in a frame moving with
    /// `beta` is returned in the frame the velocity is measured in.
    pub fn boost(&self, beta: [f64; 3]) -> Self {
        let b2 = beta[0] * beta[0] + beta[1] * beta[1] + beta[2] * beta[2];
        if b2 == 0.0 {
            return *self;
        }
        let gamma = 1.0 / (1.0 - b2).sqrt();
        let bp = beta[0] * self.px + beta[1] * self.py + beta[2] * self.pz;
        let coef = (gamma - 1.0) * bp / b2 + gamma * self.e;
        Self {
            e: gamma * (self.e + bp),
            px: self.px + coef * beta[0],
            py: self.py + coef * beta[1],
            pz: self.pz + coef * beta[2],
        }
    }
}

impl Add for FourMomentum {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.e + o.e, self.px + o.px, self.py + o.py, self.pz + o.pz)
    }
}

impl Sub for FourMomentum {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.e - o.e, self.px - o.px, self.py - o.py, self.pz - o.pz)
    }
}

impl Neg for FourMomentum {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.e, -self.px, -self.py, -self.pz)
    }
}

/// Full event record: five four-momenta and the derived scalars.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventRecord24 {
    pub photon: FourMomentum,
    pub target: FourMomentum,
    pub recoil: FourMomentum,
    pub pi_plus: FourMomentum,
    pub pi_minus: FourMomentum,
    /// Mandelstam t between photon and dipion, GeV².
    pub t: f64,
    pub m_pipi: f64,
    /// Decay angles of the π⁺ in the dipion rest frame.
    pub cos_theta: f64,
    pub phi: f64,
}

impl EventRecord24 {
    pub fn to_array(&self) -> [f64; 24] {
        let mut out = [0.0; 24];
        for (k, p) in [self.photon, self.target, self.recoil, self.pi_plus, self.pi_minus]
            .iter()
            .enumerate()
        {
            out[4 * k..4 * k + 4].copy_from_slice(&[p.e, p.px, p.py, p.pz]);
        }
        out[20..].copy_from_slice(&[self.t, self.m_pipi, self.cos_theta, self.phi]);
        out
    }

    /// Largest mass-shell and conservation violations, in GeV² and GeV.
    pub fn violations(&self) -> (f64, f64) {
        let shells = [
            (self.photon, 0.0),
            (self.target, M_PROTON),
            (self.recoil, M_PROTON),
            (self.pi_plus, M_PION),
            (self.pi_minus, M_PION),
        ];
        let shell = shells
            .iter()
            .map(|(p, m)| (p.mass2() - m * m).abs())
            .fold(0.0, f64::max);
        let d = (self.photon + self.target) - (self.recoil + self.pi_plus + self.pi_minus);
        let cons = [d.e, d.px, d.py, d.pz].iter().map(|v| v.abs()).fold(0.0, f64::max);
        (shell, cons)
    }
}

/// Drops the recoil, the derived scalars and the beam/target `p_y`.
pub fn project_24_to_10(event: &EventRecord24) -> Result<[f64; N_FEATURES]> {
    for (name, p) in [("photon", event.photon), ("target", event.target)] {
        if p.py.abs() > PY_TOLERANCE {
            return Err(Error::Validation(format!("{name} p_y = {} is not zero", p.py)));
        }
    }
    let (g, t, a, b) = (event.photon, event.target, event.pi_plus, event.pi_minus);
    Ok([g.px, g.pz, t.px, t.pz, a.px, a.py, a.pz, b.px, b.py, b.pz])
}

/// Rebuilds (photon, target, π⁺, π⁻) from the 10 features, putting each
/// particle on its mass shell.
pub fn four_momenta_from_features(f: &[f64]) -> Result<[FourMomentum; 4]> {
    if f.len() != N_FEATURES {
        return Err(Error::Shape(format!("expected {N_FEATURES} features, got {}", f.len())));
    }
    Ok([
        FourMomentum::on_shell(0.0, f[0], 0.0, f[1]),
        FourMomentum::on_shell(M_PROTON, f[2], 0.0, f[3]),
        FourMomentum::on_shell(M_PION, f[4], f[5], f[6]),
        FourMomentum::on_shell(M_PION, f[7], f[8], f[9]),
    ])
}

/// Recoil proton from four-momentum conservation. No mass-shell check.
pub fn infer_recoil(
    p_gamma: FourMomentum,
    p_target: FourMomentum,
    p_piplus: FourMomentum,
    p_piminus: FourMomentum,
) -> FourMomentum {
    p_gamma + p_target - p_piplus - p_piminus
}

pub fn compute_invariant_mass(p_a: FourMomentum, p_b: FourMomentum) -> Result<f64> {
    let m2 = (p_a + p_b).mass2();
    if m2 < -MASS2_FLOOR {
        return Err(Error::Kinematics(format!("negative mass squared {m2} GeV^2")));
    }
    Ok(m2.max(0.0).sqrt())
}

pub fn compute_mandelstam_t(p_gamma: FourMomentum, p_rho: FourMomentum) -> f64 {
    (p_gamma - p_rho).mass2()
}

/// Observables rebuilt from one 10-feature row.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DerivedKinematics {
    pub t: f64,
    pub m_pipi: f64,
    /// Inferred recoil `E² − |p|² − m_p²`; nonzero off the mass shell.
    pub recoil_shell_offset: f64,
}

pub fn derive_kinematics(features: &[f64]) -> Result<DerivedKinematics> {
    let [g, tgt, a, b] = four_momenta_from_features(features)?;
    let recoil = infer_recoil(g, tgt, a, b);
    Ok(DerivedKinematics {
        t: compute_mandelstam_t(g, a + b),
        m_pipi: compute_invariant_mass(a, b)?,
        recoil_shell_offset: recoil.mass2() - M_PROTON * M_PROTON,
    })
}

/// Toy generator for ρ⁰ photoproduction on a proton, used where the real
/// simulated sample is unavailable. It produces conserving, on-shell events
/// with a Breit–Wigner dipion mass, an exponential `t` falloff and a
/// `sin²θ` decay distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhotoproductionGenerator {
    pub beam_energy_min: f64,
    pub beam_energy_max: f64,
    /// Gaussian beam angle spread in the x–z plane, radians.
    pub beam_divergence: f64,
    /// Gaussian spread of the target momentum in x and z, GeV.
    pub fermi_sigma: f64,
    pub rho_mass: f64,
    pub rho_width: f64,
    /// `dσ/dt ∝ exp(slope · t)`, GeV⁻².
    pub t_slope: f64,
    pub t_limit: f64,
}

impl Default for PhotoproductionGenerator {
    fn default() -> Self {
        Self {
            beam_energy_min: 8.0,
            beam_energy_max: 9.0,
            beam_divergence: 2e-3,
            fermi_sigma: 0.05,
            rho_mass: 0.775,
            rho_width: 0.149,
            t_slope: 6.0,
            t_limit: 1.0,
        }
    }
}

fn two_body_momentum(sqrt_s: f64, m1: f64, m2: f64) -> f64 {
    let s = sqrt_s * sqrt_s;
    let lambda = (s - (m1 + m2).powi(2)) * (s - (m1 - m2).powi(2));
    lambda.max(0.0).sqrt() / (2.0 * sqrt_s)
}

fn unit(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Unit vector at polar angle `acos(cos_theta)` and azimuth `phi` about `axis`.
fn rotated(axis: [f64; 3], cos_theta: f64, phi: f64) -> [f64; 3] {
    let z = unit(axis);
    let helper = if z[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let x = unit(cross(helper, z));
    let y = cross(z, x);
    let s = (1.0 - cos_theta * cos_theta).max(0.0).sqrt();
    let (sp, cp) = phi.sin_cos();
    std::array::from_fn(|k| cos_theta * z[k] + s * (cp * x[k] + sp * y[k]))
}

impl PhotoproductionGenerator {
    pub fn validate(&self) -> Result<()> {
        let ok = self.beam_energy_min > 2.0
            && self.beam_energy_max >= self.beam_energy_min
            && self.beam_divergence >= 0.0
            && self.fermi_sigma >= 0.0
            && self.rho_mass > 2.0 * M_PION
            && self.rho_width > 0.0
            && self.t_slope > 0.0
            && self.t_limit > 0.0;
        if !ok {
            return Err(Error::Config(format!("invalid generator settings {self:?}")));
        }
        Ok(())
    }

    pub fn generate(&self, n: usize, seed: u64) -> Result<Vec<EventRecord24>> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| self.event(&mut rng)).collect()
    }

    /// `n x 10` physical feature matrix.
    pub fn generate_features(&self, n: usize, seed: u64) -> Result<FeatureMatrix> {
        let rows = self
            .generate(n, seed)?
            .iter()
            .map(|e| project_24_to_10(e).map(|f| f.to_vec()))
            .collect::<Result<Vec<_>>>()?;
        FeatureMatrix::from_rows_f64(&rows, Space::Physical)
    }

    fn event(&self, rng: &mut ChaCha8Rng) -> Result<EventRecord24> {
        let gauss = |sd: f64| Normal::new(0.0, sd.max(f64::MIN_POSITIVE)).expect("finite sd");
        let e_beam = rng.random_range(self.beam_energy_min..=self.beam_energy_max);
        let angle = gauss(self.beam_divergence).sample(rng);
        let photon = FourMomentum::new(e_beam, e_beam * angle.sin(), 0.0, e_beam * angle.cos());
        let fermi = gauss(self.fermi_sigma);
        let target = FourMomentum::on_shell(M_PROTON, fermi.sample(rng), 0.0, fermi.sample(rng));

        let total = photon + target;
        let sqrt_s = total.mass2().sqrt();
        let beta = total.velocity();
        let to_cm = [-beta[0], -beta[1], -beta[2]];
        let photon_cm = photon.boost(to_cm);

        let m_hi = (sqrt_s - M_PROTON - 1e-3).min(self.rho_mass + 5.0 * self.rho_width);
        let m_lo = 2.0 * M_PION + 1e-3;
        let m_rho = loop {
            let u: f64 = rng.random_range(-0.5..0.5);
            let m = self.rho_mass + 0.5 * self.rho_width * (std::f64::consts::PI * u).tan();
            if (m_lo..m_hi).contains(&m) {
                break m;
            }
        };

        let p_in = photon_cm.p();
        let p_out = two_body_momentum(sqrt_s, m_rho, M_PROTON);
        let e_rho = (m_rho * m_rho + p_out * p_out).sqrt();
        let t_at = |c: f64| m_rho * m_rho - 2.0 * (photon_cm.e * e_rho - p_in * p_out * c);
        let t_hi = t_at(1.0);
        let t_lo = t_at(-1.0).max(-self.t_limit);
        // inverse CDF of exp(slope·t) on [t_lo, t_hi]
        let u: f64 = rng.random();
        let b = self.t_slope;
        let t = t_hi + (u * (b * (t_lo - t_hi)).exp() + (1.0 - u)).ln() / b;
        let cos_cm = ((t - m_rho * m_rho + 2.0 * photon_cm.e * e_rho) / (2.0 * p_in * p_out)).clamp(-1.0, 1.0);
        let phi_cm = rng.random_range(0.0..std::f64::consts::TAU);
        let dir = rotated(photon_cm.three(), cos_cm, phi_cm);
        let rho_cm = FourMomentum::new(e_rho, p_out * dir[0], p_out * dir[1], p_out * dir[2]);

        let cos_theta = loop {
            let c: f64 = rng.random_range(-1.0..=1.0);
            if rng.random::<f64>() < 1.0 - c * c {
                break c;
            }
        };
        let phi = rng.random_range(0.0..std::f64::consts::TAU);
        let q = two_body_momentum(m_rho, M_PION, M_PION);
        let axis = if p_out > 0.0 { rho_cm.three() } else { [0.0, 0.0, 1.0] };
        let d = rotated(axis, cos_theta, phi);
        let pip_rest = FourMomentum::on_shell(M_PION, q * d[0], q * d[1], q * d[2]);
        let pim_rest = FourMomentum::on_shell(M_PION, -q * d[0], -q * d[1], -q * d[2]);
        let rho_beta = rho_cm.velocity();
        let pi_plus = pip_rest.boost(rho_beta).boost(beta);
        let pi_minus = pim_rest.boost(rho_beta).boost(beta);

        let recoil = infer_recoil(photon, target, pi_plus, pi_minus);
        let ev = EventRecord24 {
            photon,
            target,
            recoil,
            pi_plus,
            pi_minus,
            t: compute_mandelstam_t(photon, pi_plus + pi_minus),
            m_pipi: compute_invariant_mass(pi_plus, pi_minus)?,
            cos_theta,
            phi,
        };
        if !ev.to_array().iter().all(|v| v.is_finite()) {
            return Err(Error::Kinematics("generator produced a non-finite event".into()));
        }
        Ok(ev)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn back_to_back_pions() {
        let a = FourMomentum::on_shell(M_PION, 0.3, 0.0, 0.0);
        let b = FourMomentum::on_shell(M_PION, -0.3, 0.0, 0.0);
        let m = compute_invariant_mass(a, b).unwrap();
        assert!((m - 2.0 * (0.09 + M_PION * M_PION).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn threshold_and_collinear() {
        let rest = FourMomentum::on_shell(M_PION, 0.0, 0.0, 0.0);
        assert!((compute_invariant_mass(rest, rest).unwrap() - 2.0 * M_PION).abs() < 1e-15);
        let p = FourMomentum::on_shell(M_PION, 0.4, -1.1, 2.7);
        // E² − p² loses a few ulps of E² at GeV scale
        assert!((compute_invariant_mass(p, p).unwrap() - 2.0 * M_PION).abs() < 1e-12);
    }

    #[test]
    fn spacelike_pair_is_an_error() {
        let a = FourMomentum::new(0.0, 1.0, 0.0, 0.0);
        assert!(matches!(compute_invariant_mass(a, a), Err(Error::Kinematics(_))));
        let tiny = FourMomentum::new(0.0, 1e-5, 0.0, 0.0);
        assert_eq!(compute_invariant_mass(tiny, FourMomentum::default()).unwrap(), 0.0);
    }

    #[test]
    fn hand_evaluated_t() {
        let g = FourMomentum::new(1.0, 0.0, 0.0, 1.0);
        let r = FourMomentum::new(1.0, 0.0, 0.0, 0.5);
        assert_eq!(compute_mandelstam_t(g, r), -0.25);
        assert_eq!(compute_mandelstam_t(g, g), 0.0);
    }

    #[test]
    fn recoil_with_static_pions() {
        let g = FourMomentum::new(8.5, 0.01, 0.0, 8.5);
        let p = FourMomentum::on_shell(M_PROTON, 0.02, 0.0, -0.03);
        let zero = FourMomentum::default();
        assert_eq!(infer_recoil(g, p, zero, zero), g + p);
    }

    #[test]
    fn boost_round_trip() {
        let p = FourMomentum::on_shell(M_PROTON, 0.3, -0.2, 1.5);
        let beta = [0.1, 0.2, -0.6];
        let back = p.boost(beta).boost([-0.1, -0.2, 0.6]);
        for (a, b) in [p.e, p.px, p.py, p.pz].iter().zip([back.e, back.px, back.py, back.pz]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((p.boost(beta).mass2() - p.mass2()).abs() < 1e-12);
    }

    #[test]
    fn generated_events_respect_invariants() {
        let events = PhotoproductionGenerator::default().generate(2000, 11).unwrap();
        for ev in &events {
            let (shell, cons) = ev.violations();
            assert!(shell < 1e-4 && cons < 1e-4, "{shell} {cons}");
            assert_eq!(ev.photon.py, 0.0);
            assert_eq!(ev.target.py, 0.0);
            assert!(ev.t <= 0.0, "t = {}", ev.t);
            assert!(ev.t >= -1.0 - 1e-9);
        }
        let mean_m = events.iter().map(|e| e.m_pipi).sum::<f64>() / events.len() as f64;
        assert!((mean_m - 0.775).abs() < 0.05, "{mean_m}");
    }

    #[test]
    fn projection_then_recoil() {
        for ev in PhotoproductionGenerator::default().generate(500, 3).unwrap() {
            let f = project_24_to_10(&ev).unwrap();
            assert!(f.iter().all(|v| v.is_finite()));
            let [g, tgt, a, b] = four_momenta_from_features(&f).unwrap();
            let r = infer_recoil(g, tgt, a, b);
            for (x, y) in [r.e, r.px, r.py, r.pz].iter().zip([ev.recoil.e, ev.recoil.px, ev.recoil.py, ev.recoil.pz]) {
                assert!((x - y).abs() < 1e-4);
            }
            let d = derive_kinematics(&f).unwrap();
            assert!((d.t - ev.t).abs() < 1e-6);
            assert!(d.recoil_shell_offset.abs() < 1e-6);
        }
    }

    #[test]
    fn recoil_not_encoded() {
        let ev = PhotoproductionGenerator::default().generate(1, 9).unwrap()[0];
        let mut other = ev;
        other.recoil.px += 0.7;
        assert_eq!(project_24_to_10(&ev).unwrap(), project_24_to_10(&other).unwrap());
    }

    #[test]
    fn nonzero_beam_py_rejected() {
        let mut ev = PhotoproductionGenerator::default().generate(1, 9).unwrap()[0];
        ev.photon.py = 1e-3;
        assert!(matches!(project_24_to_10(&ev), Err(Error::Validation(_))));
    }

    #[test]
    fn conservation_is_exact_by_construction() {
        let g = FourMomentum::new(8.25, 0.015625, 0.0, 8.25);
        let tgt = FourMomentum::new(0.9375, 0.0, 0.0, 0.0);
        let a = FourMomentum::new(3.5, 0.25, 0.125, 3.25);
        let b = FourMomentum::new(2.5, -0.25, 0.5, 2.0);
        let r = infer_recoil(g, tgt, a, b);
        assert_eq!(r + a + b, g + tgt);
    }

    #[test]
    fn features_have_spread() {
        let data = PhotoproductionGenerator::default().generate_features(2000, 4).unwrap();
        assert_eq!(data.n_features(), N_FEATURES);
        assert!(super::super::fit_preprocess(&data, 5.0).is_ok());
    }
}
