//! Slow curve `cos θ + B + A cos τ = 0` of the small-frequency limit, its topology, and the
//! comparison of Poincaré maps along the family `A = 1 + (ℓ − α)ω`.

use crate::error::{ensure_finite, Error, Result};
use crate::integrate::OdeSettings;
use crate::params::{to_reduced, PhysParams};
use crate::poincare::poincare_map_with;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt::Write as _;

const TWO_PI: f64 = 2.0 * PI;

/// Width of the band around `A = 1 − B` labelled singular.
pub const SINGULAR_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SlowCurveLabel {
    ConvexContractible,
    SingularCross,
    TwoComponents,
    Degenerate,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlowCurveClass {
    pub label: SlowCurveLabel,
    #[serde(rename = "B")]
    pub b: f64,
    #[serde(rename = "A")]
    pub a: f64,
}

fn check_positive(b: f64, a: f64) -> Result<()> {
    ensure_finite("B", b)?;
    ensure_finite("A", a)?;
    if b <= 0.0 || a <= 0.0 {
        return Err(Error::Domain(format!("B and A must be positive, got B = {b}, A = {a}")));
    }
    Ok(())
}

/// Topological type of the slow curve. `Degenerate` covers `A ≥ 1 + B` and the empty or
/// one-point curves with `A ≤ B − 1`.
pub fn classify_slow_curve(b: f64, a: f64) -> Result<SlowCurveClass> {
    check_positive(b, a)?;
    let label = if a >= 1.0 + b || a <= b - 1.0 {
        SlowCurveLabel::Degenerate
    } else if (a - (1.0 - b)).abs() <= SINGULAR_TOL {
        SlowCurveLabel::SingularCross
    } else if a < 1.0 - b {
        SlowCurveLabel::TwoComponents
    } else {
        SlowCurveLabel::ConvexContractible
    };
    Ok(SlowCurveClass { label, b, a })
}

/// Minimum over `v ∈ [−1, 1]` of `ABv² + (A² + B² − 1)v + AB`; positive values certify
/// strict convexity of the curve.
pub fn convexity_certificate(b: f64, a: f64) -> Result<f64> {
    check_positive(b, a)?;
    let (q2, q1, q0) = (a * b, a * a + b * b - 1.0, a * b);
    let p = |v: f64| (q2 * v + q1) * v + q0;
    let mut m = p(-1.0).min(p(1.0));
    let vertex = -q1 / (2.0 * q2);
    if vertex.abs() <= 1.0 {
        m = m.min(p(vertex));
    }
    Ok(m)
}

pub fn slow_function(b: f64, a: f64, theta: f64, tau: f64) -> f64 {
    theta.cos() + b + a * tau.cos()
}

/// Points of the slow curve over the fundamental square. For each of `n` equally spaced
/// `τ` the roots `θ ∈ [0, π]` and `2π − θ` are found by bisection.
pub fn slow_curve_points(b: f64, a: f64, n: usize) -> Result<Vec<(f64, f64)>> {
    ensure_finite("B", b)?;
    ensure_finite("A", a)?;
    if n == 0 {
        return Err(Error::Domain("need at least one sample".into()));
    }
    let mut out = Vec::new();
    for j in 0..n {
        let tau = TWO_PI * j as f64 / n as f64;
        let shift = b + a * tau.cos();
        if !(-1.0..=1.0).contains(&-shift) {
            continue;
        }
        // cos θ + shift is decreasing on [0, π].
        let (mut lo, mut hi) = (0.0f64, PI);
        loop {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if mid.cos() + shift > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let theta = if (lo.cos() + shift).abs() <= (hi.cos() + shift).abs() { lo } else { hi };
        out.push((theta, tau));
        if theta > 0.0 && theta < PI {
            out.push((TWO_PI - theta, tau));
        }
    }
    if out.is_empty() {
        return Err(Error::Domain(format!("slow curve is empty for B = {b}, A = {a}")));
    }
    Ok(out)
}

/// Member of the family `B = ℓω`, `A = 1 + (ℓ − α)ω`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaFamily {
    pub ell: u32,
    pub alpha: f64,
    pub omega: f64,
    #[serde(rename = "A")]
    pub a: f64,
}

impl AlphaFamily {
    pub fn new(ell: u32, alpha: f64, omega: f64) -> Result<Self> {
        ensure_finite("alpha", alpha)?;
        ensure_finite("omega", omega)?;
        if ell == 0 || alpha <= 0.0 || omega <= 0.0 {
            return Err(Error::Domain("need ell ≥ 1, alpha > 0, omega > 0".into()));
        }
        Ok(AlphaFamily { ell, alpha, omega, a: 1.0 + (ell as f64 - alpha) * omega })
    }

    pub fn b(&self) -> f64 {
        self.ell as f64 * self.omega
    }

    pub fn phys(&self) -> PhysParams {
        PhysParams { b: self.b(), a: self.a, omega: self.omega }
    }

    pub fn classify(&self) -> Result<SlowCurveClass> {
        classify_slow_curve(self.b(), self.a)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    /// `P₂ < P₁` at every grid point.
    pub holds: bool,
    /// `min (P₁ − P₂)` over the grid.
    pub margin: f64,
}

/// Compares the lifted period-2π maps `P₁`, `P₂` of the family members `α₁`, `α₂`.
pub fn monotonicity_check(
    ell: u32,
    alpha1: f64,
    alpha2: f64,
    omega: f64,
    grid: &[f64],
    s: &OdeSettings,
) -> Result<MonotonicityReport> {
    let f1 = AlphaFamily::new(ell, alpha1, omega)?;
    let f2 = AlphaFamily::new(ell, alpha2, omega)?;
    let (r1, r2) = (to_reduced(&f1.phys())?, to_reduced(&f2.phys())?);
    let mut margin = f64::INFINITY;
    for &t in grid {
        let p1 = poincare_map_with(&r1, t, s)?;
        let p2 = if alpha1 == alpha2 { p1 } else { poincare_map_with(&r2, t, s)? };
        margin = margin.min(p1 - p2);
    }
    Ok(MonotonicityReport { holds: margin > 0.0, margin })
}

/// SVG of slow curves over the square `[0, 2π]²`, `θ` horizontal and `τ` vertical.
pub fn slow_curve_svg(curves: &[(SlowCurveClass, Vec<(f64, f64)>)]) -> String {
    const SIZE: f64 = 1000.0;
    const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SIZE}\" height=\"{SIZE}\" viewBox=\"0 0 {SIZE} {SIZE}\">"
    );
    let _ = writeln!(svg, "<rect x=\"0\" y=\"0\" width=\"{SIZE}\" height=\"{SIZE}\" fill=\"white\" stroke=\"black\"/>");
    for (i, (class, pts)) in curves.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let _ = writeln!(svg, "<g fill=\"{color}\"><title>B={} A={} {:?}</title>", class.b, class.a, class.label);
        for &(theta, tau) in pts {
            let x = theta / TWO_PI * SIZE;
            let y = SIZE - tau / TWO_PI * SIZE;
            let _ = writeln!(svg, "<circle cx=\"{x:.3}\" cy=\"{y:.3}\" r=\"1.5\"/>");
        }
        svg.push_str("</g>\n");
    }
    svg.push_str("</svg>\n");
    svg
}
