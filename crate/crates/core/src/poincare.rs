//! The period-2π flow map of the torus equation lifted to the line, and rotation numbers.

use crate::error::Result;
use crate::integrate::{flow_theta, OdeSettings};
use crate::linalg::{Mat2, C64};
use crate::monodromy::{josephson_system_unchecked, monodromy_matrix};
use crate::params::{to_reduced, PhysParams, ReducedParams};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

const TWO_PI: f64 = 2.0 * PI;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LiftedMapSample {
    pub theta_in: f64,
    pub theta_out: f64,
}

/// Lifted Poincaré map `P(θ₀) = θ(2π)`.
pub fn poincare_map(rp: &ReducedParams, theta0: f64) -> Result<f64> {
    poincare_map_with(rp, theta0, &OdeSettings::default())
}

pub fn poincare_map_with(rp: &ReducedParams, theta0: f64, s: &OdeSettings) -> Result<f64> {
    flow_theta(rp, theta0, 0.0, TWO_PI, s)
}

pub fn sample_lifted_map(rp: &ReducedParams, grid: &[f64], s: &OdeSettings) -> Result<Vec<LiftedMapSample>> {
    grid.iter().map(|&t| Ok(LiftedMapSample { theta_in: t, theta_out: poincare_map_with(rp, t, s)? })).collect()
}

/// `max |P(θ) − θ − 2πℓ|` over the grid.
pub fn displacement_sup(rp: &ReducedParams, ell: i64, theta_grid: &[f64]) -> Result<f64> {
    displacement_sup_with(rp, ell, theta_grid, &OdeSettings::default())
}

pub fn displacement_sup_with(rp: &ReducedParams, ell: i64, theta_grid: &[f64], s: &OdeSettings) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for &t in theta_grid {
        let d = poincare_map_with(rp, t, s)? - t - TWO_PI * ell as f64;
        worst = worst.max(d.abs());
    }
    Ok(worst)
}

/// Uniform grid of `n` points on `[0, 2π)`.
pub fn uniform_grid(n: usize) -> Vec<f64> {
    (0..n).map(|j| TWO_PI * j as f64 / n as f64).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RotationMethod {
    MobiusEigenvalue,
    Iteration,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapType {
    Elliptic,
    Parabolic,
    Hyperbolic,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RotationResult {
    pub rho: f64,
    pub method: RotationMethod,
    /// `⌊(P(0) − 0)/2π⌋`.
    pub winding: i64,
    pub certified_error: f64,
    pub map_type: MapType,
}

/// `||trace| − 2|` below this counts as parabolic.
pub const PARABOLIC_TOL: f64 = 1e-9;
const EIGEN_ERROR: f64 = 1e-9;
const ITERATIONS: usize = 20_000;
/// Wrapped lifts this close to the branch cut are recomputed by direct integration.
const LIFT_AMBIGUITY: f64 = 1e-7;

/// Möbius action of a monodromy on the unit circle, lifted through one integrated orbit.
pub struct CircleMobius {
    rp: ReducedParams,
    settings: OdeSettings,
    pub m: Mat2,
    theta0: f64,
    f0: f64,
}

impl CircleMobius {
    pub fn new(rp: &ReducedParams, s: &OdeSettings) -> Result<Self> {
        let m = monodromy_matrix(&josephson_system_unchecked(rp), s)?;
        let f0 = poincare_map_with(rp, 0.0, s)?;
        Ok(CircleMobius { rp: *rp, settings: *s, m, theta0: 0.0, f0 })
    }

    /// Projective action `Φ ↦ (M₂₁ + M₂₂Φ)/(M₁₁ + M₁₂Φ)` on `Φ = e^{iθ}`, as an angle.
    pub fn wrapped(&self, theta: f64) -> f64 {
        let phi = C64::from_polar(1.0, theta);
        let m = &self.m;
        ((m.get(1, 0) + m.get(1, 1) * phi) / (m.get(0, 0) + m.get(0, 1) * phi)).arg()
    }

    /// Lifted map value, using that `P(θ₀ + r) ∈ (P(θ₀), P(θ₀) + 2π)` for `r ∈ (0, 2π)`.
    pub fn lift(&self, theta: f64) -> Result<f64> {
        let k = ((theta - self.theta0) / TWO_PI).floor();
        let r = theta - self.theta0 - TWO_PI * k;
        if r == 0.0 {
            return Ok(self.f0 + TWO_PI * k);
        }
        let off = (self.wrapped(theta) - self.f0).rem_euclid(TWO_PI);
        if !(off > LIFT_AMBIGUITY && off < TWO_PI - LIFT_AMBIGUITY) || !off.is_finite() {
            return poincare_map_with(&self.rp, theta, &self.settings);
        }
        Ok(self.f0 + off + TWO_PI * k)
    }

    /// `tr M / √det M`, real for the model's monodromy.
    pub fn normalized_trace(&self) -> f64 {
        (self.m.trace() / self.m.det().sqrt()).re
    }
}

/// Rotation number of the torus flow at `p`.
pub fn rotation_number(p: &PhysParams) -> Result<RotationResult> {
    rotation_number_with(p, &OdeSettings::default())
}

pub fn rotation_number_with(p: &PhysParams, s: &OdeSettings) -> Result<RotationResult> {
    let rp = to_reduced(p)?;
    rotation_number_reduced(&rp, s)
}

pub fn rotation_number_reduced(rp: &ReducedParams, s: &OdeSettings) -> Result<RotationResult> {
    let cm = CircleMobius::new(rp, s)?;
    let winding = ((cm.f0 - cm.theta0) / TWO_PI).floor() as i64;
    let t = cm.normalized_trace().abs();
    if !t.is_finite() || (t - 2.0).abs() < PARABOLIC_TOL {
        return iterate(&cm, winding, MapType::Parabolic);
    }
    let ev = cm.m.eigenvalues();
    if t > 2.0 {
        // Fixed points of the circle map are eigenlines on the unit circle.
        let v = cm.m.eigenvector(ev[0]);
        let theta_star = (v[1] / v[0]).arg();
        let d = poincare_map_with(rp, theta_star, s)? - theta_star;
        let rho = (d / TWO_PI).round();
        return Ok(RotationResult {
            rho,
            method: RotationMethod::MobiusEigenvalue,
            winding,
            certified_error: EIGEN_ERROR,
            map_type: MapType::Hyperbolic,
        });
    }
    // Elliptic: conjugate to a rotation about the fixed point inside the disk.
    let (mut p_in, mut lam_in, mut lam_out) = (C64::new(0.0, 0.0), ev[0], ev[1]);
    let mut found = false;
    for (a, b) in [(ev[0], ev[1]), (ev[1], ev[0])] {
        let v = cm.m.eigenvector(a);
        if v[0].norm() > v[1].norm() {
            p_in = v[1] / v[0];
            lam_in = a;
            lam_out = b;
            found = true;
            break;
        }
    }
    if !found {
        return iterate(&cm, winding, MapType::Elliptic);
    }
    // Multiplier f'(p) = det M / λ_p² = λ_other / λ_p.
    let beta = ((lam_out / lam_in).arg() / TWO_PI).rem_euclid(1.0);
    let n = ((16.0 / (1.0 - p_in.norm())).ceil() as usize).clamp(64, 1 << 16);
    let mut sum = 0.0;
    for j in 0..n {
        let w = C64::from_polar(1.0, TWO_PI * j as f64 / n as f64);
        let theta = ((w + p_in) / (C64::new(1.0, 0.0) + p_in.conj() * w)).arg();
        sum += cm.lift(theta)? - theta;
    }
    let rho_avg = sum / (n as f64 * TWO_PI);
    let rho = beta + (rho_avg - beta).round();
    if (rho - rho_avg).abs() > 0.25 {
        return iterate(&cm, winding, MapType::Elliptic);
    }
    Ok(RotationResult {
        rho,
        method: RotationMethod::MobiusEigenvalue,
        winding,
        certified_error: EIGEN_ERROR,
        map_type: MapType::Elliptic,
    })
}

fn iterate(cm: &CircleMobius, winding: i64, map_type: MapType) -> Result<RotationResult> {
    let mut theta = cm.theta0;
    for _ in 0..ITERATIONS {
        theta = cm.lift(theta)?;
    }
    Ok(RotationResult {
        rho: (theta - cm.theta0) / (TWO_PI * ITERATIONS as f64),
        method: RotationMethod::Iteration,
        winding,
        certified_error: 1.0 / ITERATIONS as f64,
        map_type,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrate::PathInCStar;
    use crate::monodromy::josephson_system_unchecked;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rp(ell: f64, mu: f64, eta: f64) -> ReducedParams {
        ReducedParams { ell, mu, eta }
    }

    fn phys(b: f64, a: f64, omega: f64) -> PhysParams {
        PhysParams::new(b, a, omega).unwrap()
    }

    #[test]
    fn eta_zero_is_translation() {
        for th in [0.0, 1.0, -2.5] {
            for mu in [0.0, 0.4, 1.7] {
                let v = poincare_map(&rp(2.0, mu, 0.0), th).unwrap();
                assert!((v - th - 4.0 * PI).abs() < 1e-8);
            }
        }
        assert_eq!(poincare_map(&rp(0.0, 0.0, 0.0), 0.7).unwrap(), 0.7);
        let grid = uniform_grid(16);
        assert!(displacement_sup(&rp(1.0, 0.9, 0.0), 1, &grid).unwrap() < 1e-8);
        assert!(displacement_sup(&rp(1.0, 0.9, 0.5), 1, &grid).unwrap() > 1e-3);
    }

    #[test]
    fn poincare_agrees_with_projectivized_linear_system() {
        let p = rp(1.0, 1.0, 0.5);
        let s = OdeSettings::default();
        for th0 in [0.0, PI] {
            let scalar = poincare_map(&p, th0).unwrap();
            let m = crate::integrate::flow_linear(&josephson_system_unchecked(&p), &PathInCStar::full_circle(), &s)
                .unwrap();
            let phi0 = C64::from_polar(1.0, th0);
            let w = m.apply([C64::new(1.0, 0.0), phi0]);
            let ang = (w[1] / w[0]).arg();
            let diff = (scalar - ang).rem_euclid(2.0 * PI);
            assert!(diff.min(2.0 * PI - diff) < 1e-8);
        }
    }

    #[test]
    fn mobius_lift_matches_scalar_flow() {
        let p = rp(0.6, 0.8, 1.1);
        let cm = CircleMobius::new(&p, &OdeSettings::default()).unwrap();
        for th in uniform_grid(16) {
            let a = cm.lift(th - 1.0).unwrap();
            let b = poincare_map(&p, th - 1.0).unwrap();
            assert!((a - b).abs() < 1e-8, "{a} {b}");
        }
    }

    #[test]
    fn rotation_examples() {
        assert_eq!(rotation_number(&phys(0.0, 0.0, 1.0)).unwrap().rho, 0.0);
        let g = 5f64.sqrt();
        assert!(rotation_number(&phys(g + 0.01, 0.0, 2.0)).unwrap().rho > 1.0);
        assert!(rotation_number(&phys(g - 0.01, 0.0, 2.0)).unwrap().rho < 1.0);
        // At A = 0 the flow is autonomous: ρ = √(ℓ² − η²) past the saddle-node.
        let r = rotation_number(&phys(2.5, 0.0, 2.0)).unwrap();
        assert!((r.rho - (2.5f64.powi(2) - 1.0).sqrt() / 2.0).abs() < 1e-9, "{r:?}");
        assert_eq!(r.map_type, MapType::Elliptic);
    }

    #[test]
    fn rotation_symmetries() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..12 {
            let (b, a, w) = (rng.gen_range(-4.0..4.0), rng.gen_range(0.0..4.0), rng.gen_range(0.5..2.5));
            let r = rotation_number(&phys(b, a, w)).unwrap().rho;
            let r_neg_a = rotation_number(&phys(b, -a, w)).unwrap().rho;
            let r_neg_b = rotation_number(&phys(-b, a, w)).unwrap().rho;
            assert!((r - r_neg_a).abs() < 1e-8, "{b} {a} {w}: {r} {r_neg_a}");
            assert!((r + r_neg_b).abs() < 1e-8, "{b} {a} {w}: {r} {r_neg_b}");
        }
    }

    #[test]
    fn rotation_monotone_in_b() {
        let mut prev = f64::NEG_INFINITY;
        for j in 0..40 {
            let b = -1.0 + 0.15 * j as f64;
            let r = rotation_number(&phys(b, 1.3, 1.2)).unwrap().rho;
            assert!(r >= prev - 1e-9);
            prev = r;
        }
    }
}
