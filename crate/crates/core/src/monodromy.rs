//! Linear systems `Y' = (K₂/z² + K₁/z + K₀) Y` with irregular nonresonant singular points at
//! `0` and `∞`: monodromy, formal residues, Stokes factors, q-points and the transition cross-ratio.

use crate::error::{Error, Result};
use crate::integrate::{flow_line, flow_linear, OdeSettings, PathInCStar};
use crate::linalg::{bracket, re, Mat2, C64};
use crate::params::ReducedParams;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearSystem {
    /// Coefficient of `z⁻²`.
    #[serde(rename = "K2")]
    pub k2: Mat2,
    /// Residue, coefficient of `z⁻¹`.
    #[serde(rename = "K1")]
    pub k1: Mat2,
    /// Constant term.
    #[serde(rename = "K0")]
    pub k0: Mat2,
}

/// Relative eigenvalue gap below which a main term counts as resonant.
const EIGEN_GAP: f64 = 1e-12;

impl LinearSystem {
    pub fn new(k2: Mat2, k1: Mat2, k0: Mat2) -> Self {
        LinearSystem { k2, k1, k0 }
    }

    pub fn coefficient(&self, z: C64) -> Mat2 {
        let w = z.inv();
        self.k2.scale(w * w) + self.k1.scale(w) + self.k0
    }

    /// Checks that both main terms have distinct eigenvalues.
    pub fn validate(&self) -> Result<()> {
        for m in [&self.k2, &self.k0] {
            if !m.is_finite() {
                return Err(Error::Domain("non-finite coefficients".into()));
            }
            if m.diagonalize(EIGEN_GAP).is_none() {
                return Err(Error::EigenCollision);
            }
        }
        Ok(())
    }

    /// Conjugation `G⁻¹ (·) G` of all three coefficients.
    pub fn gauge(&self, g: &Mat2) -> Result<Self> {
        let gi = g.inverse().ok_or_else(|| Error::Domain("singular gauge matrix".into()))?;
        Ok(LinearSystem { k2: gi * self.k2 * *g, k1: gi * self.k1 * *g, k0: gi * self.k0 * *g })
    }
}

/// The linear system whose projectivization on the unit circle is the torus flow.
pub fn build_josephson_system(rp: &ReducedParams) -> Result<LinearSystem> {
    rp.validate_finite()?;
    if rp.eta <= 0.0 {
        return Err(Error::Domain(format!("eta must be positive, got {}", rp.eta)));
    }
    if rp.mu == 0.0 {
        return Err(Error::Degenerate("mu = 0 makes both main terms resonant".into()));
    }
    Ok(josephson_system_unchecked(rp))
}

/// Same as [`build_josephson_system`] without the nonresonance check; the monodromy is
/// still well defined for `μ = 0`.
pub fn josephson_system_unchecked(rp: &ReducedParams) -> LinearSystem {
    let main = Mat2::diag(re(-rp.mu), re(0.0));
    let h = rp.eta / 2.0;
    LinearSystem { k2: main, k1: Mat2::real(-rp.ell, -h, h, 0.0), k0: main }
}

/// Fundamental solution along the counterclockwise unit circle from `z = 1`.
pub fn monodromy_matrix(sys: &LinearSystem, s: &OdeSettings) -> Result<Mat2> {
    flow_linear(sys, &PathInCStar::full_circle(), s)
}

/// `‖M − Id‖_F`.
pub fn triviality_defect(m: &Mat2) -> f64 {
    (*m - Mat2::identity()).frobenius()
}

pub fn is_monodromy_trivial(sys: &LinearSystem, tol: f64, s: &OdeSettings) -> Result<bool> {
    Ok(triviality_defect(&monodromy_matrix(sys, s)?) < tol)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SingularPoint {
    Zero,
    Infinity,
}

/// Diagonal part of `H⁻¹ K₁ H`, with `H` diagonalizing the main term at `at`.
pub fn formal_residue(sys: &LinearSystem, at: SingularPoint) -> Result<Mat2> {
    let main = match at {
        SingularPoint::Zero => sys.k2,
        SingularPoint::Infinity => sys.k0,
    };
    let (_, h) = main.diagonalize(EIGEN_GAP).ok_or(Error::EigenCollision)?;
    let hi = h.inverse().ok_or(Error::EigenCollision)?;
    let r = hi * sys.k1 * h;
    Ok(Mat2::diag(r.get(0, 0), r.get(1, 1)))
}

/// Which unipotent factor is upper triangular.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TriangularType {
    /// `C₀` upper, `C₁` lower.
    UpperFirst,
    /// `C₀` lower, `C₁` upper.
    LowerFirst,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StokesDecomposition {
    pub m_norm: Mat2,
    pub c0: C64,
    pub c1: C64,
    pub triangular_type: TriangularType,
}

impl StokesDecomposition {
    pub fn c0_matrix(&self) -> Mat2 {
        unipotent(self.c0, self.triangular_type == TriangularType::UpperFirst)
    }

    pub fn c1_matrix(&self) -> Mat2 {
        unipotent(self.c1, self.triangular_type != TriangularType::UpperFirst)
    }

    /// `M_norm C₁⁻¹ C₀⁻¹`.
    pub fn reconstruct(&self) -> Mat2 {
        let c0i = self.c0_matrix().inverse().expect("unipotent");
        let c1i = self.c1_matrix().inverse().expect("unipotent");
        self.m_norm * c1i * c0i
    }
}

fn unipotent(x: C64, upper: bool) -> Mat2 {
    let (one, zero) = (re(1.0), re(0.0));
    if upper {
        Mat2::new(one, x, zero, one)
    } else {
        Mat2::new(one, zero, x, one)
    }
}

/// Splits `M = M_norm C₁⁻¹ C₀⁻¹` into formal monodromy and unipotent Stokes factors.
pub fn stokes_from_monodromy(m: &Mat2, triangular_type: TriangularType) -> Result<StokesDecomposition> {
    let scale = m.frobenius().max(f64::MIN_POSITIVE);
    let tiny = 1e-14 * scale;
    let (m11, m12, m21, m22) = (m.get(0, 0), m.get(0, 1), m.get(1, 0), m.get(1, 1));
    let (m1, m2, c0, c1) = match triangular_type {
        TriangularType::UpperFirst => {
            if m11.norm() <= tiny {
                return Err(Error::DecompositionUndefined("M11 vanishes".into()));
            }
            let m2 = m22 - m12 * m21 / m11;
            if m2.norm() <= tiny {
                return Err(Error::DecompositionUndefined("second pivot vanishes".into()));
            }
            (m11, m2, -m12 / m11, -m21 / m2)
        }
        TriangularType::LowerFirst => {
            if m22.norm() <= tiny {
                return Err(Error::DecompositionUndefined("M22 vanishes".into()));
            }
            let m1 = m11 - m12 * m21 / m22;
            if m1.norm() <= tiny {
                return Err(Error::DecompositionUndefined("second pivot vanishes".into()));
            }
            (m1, m22, -m21 / m22, -m12 / m1)
        }
    };
    Ok(StokesDecomposition { m_norm: Mat2::diag(m1, m2), c0, c1, triangular_type })
}

/// A point of the Riemann sphere given by a homogeneous unit vector `(u, v)`, value `v/u`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Line(pub [C64; 2]);

impl Line {
    pub fn value(&self) -> Option<C64> {
        let [u, v] = self.0;
        if u.norm() <= 1e-15 * v.norm() {
            None
        } else {
            Some(v / u)
        }
    }

    /// Chordal distance on the sphere.
    pub fn distance(&self, other: &Line) -> f64 {
        let n = |l: &Line| (l.0[0].norm_sqr() + l.0[1].norm_sqr()).sqrt();
        bracket(self.0, other.0).norm() / (n(self) * n(other))
    }
}

impl Serialize for Line {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        self.value().map(|z| [z.re, z.im]).serialize(ser)
    }
}

impl<'de> Deserialize<'de> for Line {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let v: Option<[f64; 2]> = Option::deserialize(de)?;
        Ok(match v {
            Some([a, b]) => Line([re(1.0), C64::new(a, b)]),
            None => Line([re(0.0), re(1.0)]),
        })
    }
}

/// Monodromy together with the projections of the canonical sectorial solutions at `z₀ = 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonodromyStokesData {
    /// `(q₁₀, q₂₀, q₁∞, q₂∞)`; `null` encodes the point at infinity.
    pub q: [Line; 4],
    #[serde(rename = "M")]
    pub m: Mat2,
    pub base_point: C64,
    /// Final seeding radius parameter `ε`.
    pub epsilon: f64,
    /// Largest chordal change of a q-point under the last `ε`-halving.
    pub seed_stability: f64,
}

/// Seeding radius used by [`q_points`] for the model's linear system.
pub fn default_epsilon(mu: f64, eta: f64) -> f64 {
    0.05f64.min(0.1 / (1.0 + mu.abs() * eta))
}

const Q_STABILITY: f64 = 1e-10;
const Q_EPS_FLOOR: f64 = 2e-4;
const Q_FAIL: f64 = 1e-5;

fn main_term_scale(sys: &LinearSystem) -> f64 {
    let d = |m: &Mat2| {
        let ev = m.eigenvalues();
        (ev[0] - ev[1]).norm()
    };
    d(&sys.k2).min(d(&sys.k0))
}

/// Computes the four q-points by transporting recessive eigenlines from the singular
/// points to `z₀ = 1`; the monodromy is included.
pub fn q_points(sys: &LinearSystem, s: &OdeSettings) -> Result<MonodromyStokesData> {
    sys.validate()?;
    let m = monodromy_matrix(sys, s)?;
    // Model rule with μ ↦ main-term eigenvalue gap and η ↦ 2|K₁[2,1]|.
    let eps = default_epsilon(main_term_scale(sys), 2.0 * sys.k1.get(1, 0).norm());
    q_points_from(sys, m, eps, s)
}

/// [`q_points`] with an explicit starting `ε` and a precomputed monodromy.
pub fn q_points_from(sys: &LinearSystem, m: Mat2, eps0: f64, s: &OdeSettings) -> Result<MonodromyStokesData> {
    let mut eps = eps0;
    let mut q = q_points_at(sys, eps, s)?;
    let mut stability = f64::INFINITY;
    while eps > Q_EPS_FLOOR {
        let half = eps / 2.0;
        let q2 = q_points_at(sys, half, s)?;
        stability = q.iter().zip(q2.iter()).map(|(a, b)| a.distance(b)).fold(0.0, f64::max);
        eps = half;
        q = q2;
        if stability < Q_STABILITY {
            break;
        }
    }
    if stability > Q_FAIL {
        return Err(Error::QPoint(format!("seed did not stabilize (change {stability:.3e} at eps {eps:.3e})")));
    }
    Ok(MonodromyStokesData { q, m, base_point: re(1.0), epsilon: eps, seed_stability: stability })
}

fn q_points_at(sys: &LinearSystem, eps: f64, s: &OdeSettings) -> Result<[Line; 4]> {
    let mut out = [Line([re(0.0), re(0.0)]); 4];
    for (slot, point) in [(0usize, SingularPoint::Zero), (2, SingularPoint::Infinity)] {
        let main = if point == SingularPoint::Zero { sys.k2 } else { sys.k0 };
        let (ev, h) = main.diagonalize(EIGEN_GAP).ok_or(Error::EigenCollision)?;
        let diff = ev[0] - ev[1];
        if diff.im.abs() > 1e-9 * diff.norm() {
            return Err(Error::QPoint("nonreal eigenvalue difference".into()));
        }
        let hi = h.inverse().ok_or(Error::EigenCollision)?;
        let rh = hi * sys.k1 * h;
        for k in 0..2 {
            let j = 1 - k;
            // First-order term of the formal solution in the eigenbasis.
            let corr = rh.get(j, k) / (ev[k] - ev[j]);
            // At 0 the solution with the larger Re λ is recessive along ℝ₊; at ∞ the smaller.
            let positive = (k == 0) == (point == SingularPoint::Zero);
            let phi = if positive { 0.0 } else { PI };
            let (r0, z_seed) = match point {
                SingularPoint::Zero => (eps, C64::from_polar(eps, phi)),
                SingularPoint::Infinity => (1.0 / eps, C64::from_polar(1.0 / eps, phi)),
            };
            let small = if point == SingularPoint::Zero { z_seed } else { z_seed.inv() };
            let mut e = [re(0.0), re(0.0)];
            e[k] = re(1.0);
            e[j] = corr * small;
            let v0 = h.apply(e);
            let mut v = flow_line(sys, &PathInCStar::RadialSegment { r0, r1: 1.0, phi }, v0, s)?;
            if !positive {
                // Continue from z = −1 to z₀ = 1 through the upper half-plane.
                v = flow_line(sys, &PathInCStar::UnitCircleArc { tau0: PI, tau1: 0.0 }, v, s)?;
            }
            out[slot + k] = Line(v);
        }
    }
    Ok(out)
}

/// `(q₁₀−q₁∞)(q₂₀−q₂∞) / ((q₁₀−q₂∞)(q₂₀−q₁∞))`; `None` is the point at infinity.
pub fn cross_ratio(q: &[Line; 4]) -> Option<C64> {
    let [q10, q20, q1i, q2i] = q.map(|l| l.0);
    let num = bracket(q10, q1i) * bracket(q20, q2i);
    let den = bracket(q10, q2i) * bracket(q20, q1i);
    if den.norm() <= 1e-300 || den.norm() <= 1e-15 * num.norm() {
        None
    } else {
        Some(num / den)
    }
}

pub fn transition_cross_ratio(sys: &LinearSystem, s: &OdeSettings) -> Result<Option<C64>> {
    Ok(cross_ratio(&q_points(sys, s)?.q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;
    use proptest::prelude::*;

    fn rp(ell: f64, mu: f64, eta: f64) -> ReducedParams {
        ReducedParams { ell, mu, eta }
    }

    #[test]
    fn josephson_coefficients() {
        let sys = build_josephson_system(&rp(1.0, 1.0, 0.5)).unwrap();
        assert_eq!(sys.k1, Mat2::real(-1.0, -0.25, 0.25, 0.0));
        assert_eq!(sys.k2, Mat2::diag(re(-1.0), re(0.0)));
        assert_eq!(sys.k0, sys.k2);
        let sys = build_josephson_system(&rp(0.0, 0.7, 2.0)).unwrap();
        assert_eq!(sys.k1.trace(), re(0.0));
        let ev = sys.k2.eigenvalues();
        assert_eq!((ev[0], ev[1]), (re(0.0), re(-0.7)));
        assert!(matches!(build_josephson_system(&rp(1.0, 0.0, 1.0)), Err(Error::Degenerate(_))));
    }

    #[test]
    fn diagonal_monodromy() {
        let s = OdeSettings::default();
        for ell in [0.3, 1.0, 2.0] {
            let main = Mat2::diag(re(-0.8), re(0.0));
            let sys = LinearSystem::new(main, Mat2::diag(re(-ell), re(0.0)), main);
            let m = monodromy_matrix(&sys, &s).unwrap();
            let expected = Mat2::diag(C64::from_polar(1.0, -2.0 * PI * ell), re(1.0));
            assert!((m - expected).frobenius() < 1e-9);
            assert_eq!(is_monodromy_trivial(&sys, 1e-7, &s).unwrap(), ell.fract() == 0.0);
        }
    }

    #[test]
    fn josephson_determinant_is_one_for_integer_ell() {
        let s = OdeSettings::default();
        for ell in [0.0, 1.0, 2.0, -1.0] {
            let m = monodromy_matrix(&build_josephson_system(&rp(ell, 0.8, 0.9)).unwrap(), &s).unwrap();
            assert!((m.det() - re(1.0)).norm() < 1e-9);
        }
    }

    #[test]
    fn formal_residue_of_model() {
        for mu in [0.7, -0.7] {
            let sys = build_josephson_system(&rp(1.5, mu, 0.8)).unwrap();
            for at in [SingularPoint::Zero, SingularPoint::Infinity] {
                let r = formal_residue(&sys, at).unwrap();
                let d = [r.get(0, 0), r.get(1, 1)];
                // Eigenvalue order puts 0 first for μ > 0 and −μ first for μ < 0.
                let expected = if mu > 0.0 { [re(0.0), re(-1.5)] } else { [re(-1.5), re(0.0)] };
                assert!((d[0] - expected[0]).norm() < 1e-14 && (d[1] - expected[1]).norm() < 1e-14);
            }
        }
        let sys = LinearSystem::new(
            Mat2::diag(re(2.0), re(1.0)),
            Mat2::diag(c(0.3, 0.1), re(-0.4)),
            Mat2::diag(re(1.0), re(-1.0)),
        );
        let r = formal_residue(&sys, SingularPoint::Zero).unwrap();
        assert_eq!(r, Mat2::diag(c(0.3, 0.1), re(-0.4)));
        let bad = LinearSystem::new(Mat2::identity(), Mat2::ZERO, Mat2::diag(re(1.0), re(0.0)));
        assert!(matches!(formal_residue(&bad, SingularPoint::Zero), Err(Error::EigenCollision)));
    }

    #[test]
    fn stokes_examples() {
        let d = stokes_from_monodromy(&Mat2::identity(), TriangularType::UpperFirst).unwrap();
        assert_eq!((d.m_norm, d.c0, d.c1), (Mat2::identity(), re(0.0), re(0.0)));
        let m = Mat2::diag(C64::from_polar(1.0, -2.0 * PI * 0.3), re(1.0));
        let d = stokes_from_monodromy(&m, TriangularType::UpperFirst).unwrap();
        assert_eq!(d.m_norm, m);
        assert_eq!((d.c0, d.c1), (re(0.0), re(0.0)));
        let bad = Mat2::real(0.0, 1.0, -1.0, 0.0);
        assert!(stokes_from_monodromy(&bad, TriangularType::UpperFirst).is_err());
    }

    proptest! {
        #[test]
        fn stokes_roundtrip(
            a in -2.0..2.0f64, b in -2.0..2.0f64, x in -3.0..3.0f64, y in -3.0..3.0f64,
            u in -3.0..3.0f64, v in -3.0..3.0f64, upper in proptest::bool::ANY,
        ) {
            let tt = if upper { TriangularType::UpperFirst } else { TriangularType::LowerFirst };
            let built = StokesDecomposition {
                m_norm: Mat2::diag(C64::from_polar(1.0 + a.abs(), a), C64::from_polar(0.5 + b.abs(), b)),
                c0: c(x, y), c1: c(u, v), triangular_type: tt,
            };
            let m = built.reconstruct();
            let got = stokes_from_monodromy(&m, tt).unwrap();
            prop_assert!((got.m_norm - built.m_norm).frobenius() < 1e-10 * (1.0 + m.frobenius()));
            prop_assert!((got.c0 - built.c0).norm() < 1e-9 * (1.0 + m.frobenius()));
            prop_assert!((got.c1 - built.c1).norm() < 1e-9 * (1.0 + m.frobenius()));
            prop_assert!((got.reconstruct() - m).frobenius() < 1e-10 * (1.0 + m.frobenius()));
        }
    }

    #[test]
    fn q_points_of_diagonal_system() {
        let s = OdeSettings::default();
        let main = Mat2::diag(re(-0.9), re(0.0));
        let sys = LinearSystem::new(main, Mat2::diag(re(-1.0), re(0.0)), main);
        let data = q_points(&sys, &s).unwrap();
        // Index 1 ↔ eigenvalue 0 ↔ Φ = ∞, index 2 ↔ −μ ↔ Φ = 0.
        assert!(data.q[0].value().is_none() && data.q[2].value().is_none());
        assert!(data.q[1].value().unwrap().norm() < 1e-12 && data.q[3].value().unwrap().norm() < 1e-12);
        assert_eq!(cross_ratio(&data.q), Some(re(0.0)));
    }

    #[test]
    fn cross_ratio_gauge_invariance() {
        let s = OdeSettings::default();
        let sys = build_josephson_system(&rp(1.0, 0.9, 0.7)).unwrap();
        let r0 = transition_cross_ratio(&sys, &s).unwrap().unwrap();
        let g = Mat2::real(1.3, -0.4, 0.7, 0.9);
        let r1 = transition_cross_ratio(&sys.gauge(&g).unwrap(), &s).unwrap().unwrap();
        assert!((r0 - r1).norm() < 1e-8 * (1.0 + r0.norm()), "{r0} {r1}");
    }

    #[test]
    fn cross_ratio_formula() {
        let l = |z: f64| Line([re(1.0), re(z)]);
        let q = [l(2.0), l(3.0), l(5.0), l(7.0)];
        let expected = (2.0 - 5.0) * (3.0 - 7.0) / ((2.0 - 7.0) * (3.0 - 5.0));
        assert!((cross_ratio(&q).unwrap() - re(expected)).norm() < 1e-14);
        // Simultaneous diagonal rescaling of the basis leaves it unchanged.
        let g = |line: Line| Line([line.0[0] * 2.5, line.0[1] * -0.3]);
        let q2 = q.map(g);
        assert!((cross_ratio(&q2).unwrap() - re(expected)).norm() < 1e-13);
    }

    #[test]
    fn mstokes_json_uses_pairs() {
        let data = MonodromyStokesData {
            q: [
                Line([re(1.0), re(0.5)]),
                Line([re(0.0), re(1.0)]),
                Line([re(1.0), c(0.0, 1.0)]),
                Line([re(1.0), re(0.0)]),
            ],
            m: Mat2::identity(),
            base_point: re(1.0),
            epsilon: 0.05,
            seed_stability: 0.0,
        };
        let v: serde_json::Value = serde_json::to_value(&data).unwrap();
        assert_eq!(v["q"][0], serde_json::json!([0.5, 0.0]));
        assert!(v["q"][1].is_null());
        assert_eq!(v["M"][0][0], serde_json::json!([1.0, 0.0]));
        assert_eq!(v["base_point"], serde_json::json!([1.0, 0.0]));
    }
}
