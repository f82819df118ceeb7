//! Power series of the special double confluent Heun equation
//! `z²E'' + ((ℓ+1)z + μ(1−z²))E' + (λ − μ(ℓ+1)z)E = 0`
//! and of its conjugate (`ℓ → −ℓ`).

use crate::error::{Error, Result};
use crate::linalg::C64;
use crate::params::HeunParams;
use crate::roots::brent;
use serde::{Deserialize, Serialize};
use std::io::Write;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeunEquation {
    Direct,
    Conjugate,
}

/// Coefficients stored as `mantissa · e^{log_scale}` so that factorial growth never overflows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeunSeries {
    pub mantissa: Vec<C64>,
    pub log_scale: Vec<f64>,
    pub equation: HeunEquation,
    pub params: HeunParams,
    /// `a_{N+1}` as `(mantissa, log_scale)`, needed for the truncation remainder.
    pub next: (C64, f64),
    /// Worst relative mismatch between the evaluated residual and the truncation remainder.
    pub certificate: f64,
}

/// Score threshold below which a solution is reported entire.
pub const ENTIRE_THRESHOLD: f64 = 0.5;
/// Scores inside this band are reported as uncertain.
pub const UNCERTAIN_BAND: (f64, f64) = (0.25, 0.75);
const CERT_TOL: f64 = 1e-8;

impl HeunSeries {
    pub fn degree(&self) -> usize {
        self.mantissa.len() - 1
    }

    /// `a_k`; may be infinite if the magnitude exceeds `f64`.
    pub fn coeff(&self, k: usize) -> C64 {
        self.mantissa[k] * self.log_scale[k].exp()
    }

    pub fn log_abs(&self, k: usize) -> f64 {
        self.mantissa[k].norm().ln() + self.log_scale[k]
    }

    fn ell_signed(&self) -> f64 {
        signed_ell(&self.params, self.equation)
    }

    /// `(E, E', E'')` of the truncated series at `z`, all multiplied by `e^{−shift}`.
    fn eval_scaled(&self, z: C64, shift: f64) -> [C64; 3] {
        let mut out = [C64::new(0.0, 0.0); 3];
        let lz = z.norm().ln();
        let phase = z / z.norm();
        for k in 0..=self.degree() {
            let kf = k as f64;
            let mag = self.log_scale[k] + kf * lz - shift;
            if mag < -700.0 {
                continue;
            }
            let term = self.mantissa[k] * mag.exp() * phase.powi(k as i32);
            out[0] += term;
            if k >= 1 {
                out[1] += term * kf / z;
            }
            if k >= 2 {
                out[2] += term * kf * (kf - 1.0) / (z * z);
            }
        }
        out
    }

    /// Truncated series at `z` (may overflow for divergent series and large `|z|`).
    pub fn eval(&self, z: C64) -> C64 {
        if z.norm() == 0.0 {
            return self.coeff(0);
        }
        self.eval_scaled(z, 0.0)[0]
    }

    /// Relative gap between `L·E_N(z)` and the exact truncation remainder
    /// `−μ(N+1)a_{N+1}z^N − μ(N+1+ℓ)a_N z^{N+1}`.
    pub fn certificate_at(&self, z: C64) -> f64 {
        let a_next = self.next;
        let hp = &self.params;
        let ell = self.ell_signed();
        let n = self.degree();
        let lz = z.norm().ln();
        let shift = (0..=n)
            .map(|k| self.log_scale[k] + self.mantissa[k].norm().max(1e-300).ln() + k as f64 * lz)
            .fold(f64::NEG_INFINITY, f64::max)
            + 2.0 * (n as f64 + 2.0).ln();
        let [e, e1, e2] = self.eval_scaled(z, shift);
        let mu = C64::new(hp.mu, 0.0);
        let terms =
            [z * z * e2, (ell + 1.0) * z * e1, mu * (1.0 - z * z) * e1, (hp.lambda - hp.mu * (ell + 1.0) * z) * e];
        let lhs: C64 = terms.iter().sum();
        let scale: f64 = terms.iter().map(|t| t.norm()).sum::<f64>().max(1e-300);
        let zn = z.powi(n as i32);
        let an = self.mantissa[n] * (self.log_scale[n] - shift).exp();
        let an1 = a_next.0 * (a_next.1 - shift).exp();
        let predicted = -mu * (n as f64 + 1.0) * an1 * zn - mu * (n as f64 + 1.0 + ell) * an * zn * z;
        (lhs - predicted).norm() / scale
    }
}

fn signed_ell(hp: &HeunParams, eq: HeunEquation) -> f64 {
    match eq {
        HeunEquation::Direct => hp.ell,
        HeunEquation::Conjugate => -hp.ell,
    }
}

/// Three-term recurrence `μ(k+1)a_{k+1} + (k(k+ℓ)+λ)a_k − μ(k+ℓ)a_{k−1} = 0`.
fn next_coeff(hp: &HeunParams, ell: f64, k: usize, a_km1: C64, a_k: C64) -> C64 {
    let kf = k as f64;
    (hp.mu * (kf + ell) * a_km1 - (kf * (kf + ell) + hp.lambda) * a_k) / (hp.mu * (kf + 1.0))
}

/// Series solution with `a₀ = 1` of the direct equation, certified by its residual.
pub fn heun_series(hp: &HeunParams, n: usize) -> Result<HeunSeries> {
    heun_series_eq(hp, n, HeunEquation::Direct)
}

pub fn heun_series_eq(hp: &HeunParams, n: usize, equation: HeunEquation) -> Result<HeunSeries> {
    hp_check(hp)?;
    let ell = signed_ell(hp, equation);
    let mut mantissa = vec![C64::new(1.0, 0.0)];
    let mut log_scale = vec![0.0];
    // Running pair (a_{k−1}, a_k) with a shared exponent.
    let (mut prev, mut cur, mut lscale) = (C64::new(0.0, 0.0), C64::new(1.0, 0.0), 0.0);
    let mut next_pair = (C64::new(0.0, 0.0), 0.0);
    for k in 0..=n {
        let nx = next_coeff(hp, ell, k, prev, cur);
        if k == n {
            next_pair = (nx, lscale);
            break;
        }
        prev = cur;
        cur = nx;
        let m = prev.norm().max(cur.norm());
        if m > 1e100 || (m < 1e-100 && m > 0.0) {
            let l = m.ln();
            prev /= m;
            cur /= m;
            lscale += l;
        }
        mantissa.push(cur);
        log_scale.push(lscale);
    }
    let mut series = HeunSeries { mantissa, log_scale, equation, params: *hp, next: next_pair, certificate: 0.0 };
    let mut worst: f64 = 0.0;
    for j in 0..20 {
        let r = 0.05 + 0.45 * (j % 10) as f64 / 9.0;
        let phi = 2.0 * std::f64::consts::PI * (j as f64 * 0.618_033_988_749_894_9).fract();
        worst = worst.max(series.certificate_at(C64::from_polar(r, phi)));
    }
    if !(worst < CERT_TOL) {
        return Err(Error::Degenerate(format!("recurrence certificate failed: mismatch {worst:e}")));
    }
    series.certificate = worst;
    Ok(series)
}

fn hp_check(hp: &HeunParams) -> Result<()> {
    for (n, v) in [("ell", hp.ell), ("mu", hp.mu), ("lambda", hp.lambda)] {
        crate::error::ensure_finite(n, v)?;
    }
    if hp.mu == 0.0 {
        return Err(Error::Degenerate("mu = 0: recurrence pivot vanishes".into()));
    }
    Ok(())
}

/// Minimal solution `(m₀, m₁)` of the recurrence by downward recurrence from index `start`.
fn minimal_head(hp: &HeunParams, start: usize) -> Result<(f64, f64)> {
    let ell = hp.ell;
    let (mut hi, mut cur) = (0.0f64, 1.0f64);
    for k in (1..=start).rev() {
        let kf = k as f64;
        let piv = hp.mu * (kf + ell);
        if piv == 0.0 {
            return Err(Error::Degenerate(format!("downward pivot vanishes at k = {k}")));
        }
        let lo = (hp.mu * (kf + 1.0) * hi + (kf * (kf + ell) + hp.lambda) * cur) / piv;
        hi = cur;
        cur = lo;
        let m = hi.abs().max(cur.abs());
        if m > 1e150 {
            hi /= m;
            cur /= m;
        }
    }
    Ok((cur, hi))
}

/// Entire-solution indicator of the direct equation.
///
/// The holomorphic solution is entire iff the minimal solution of the coefficient
/// recurrence (computed downward) also satisfies the initial relation `μa₁ + λa₀ = 0`.
/// With `d` the relative defect of that relation, the score is `max(0, 1 + log₁₀(d)/6)`:
/// 0 for `d ≤ 1e−6`, 1 when `μa₁` and `λa₀` share a sign.
pub fn entire_solution_score(hp: &HeunParams, n: usize) -> Result<f64> {
    hp_check(hp)?;
    let start0 = n.max(2 * (hp.mu.abs() as usize + hp.lambda.abs().sqrt() as usize) + 40);
    let mut start = start0;
    let (mut m0, mut m1) = minimal_head(hp, start)?;
    loop {
        start *= 2;
        let (n0, n1) = minimal_head(hp, start)?;
        let converged = (n1 / n0 - m1 / m0).abs() <= 1e-14 * (m1 / m0).abs().max(1e-300);
        (m0, m1) = (n0, n1);
        if converged || start > 64 * start0 {
            break;
        }
    }
    let (x, y) = (hp.mu * m1, hp.lambda * m0);
    let denom = x.abs().max(y.abs());
    let d = if denom == 0.0 { 0.0 } else { (x + y).abs() / denom };
    Ok(if d == 0.0 { 0.0 } else { (1.0 + d.log10() / 6.0).max(0.0) })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntireVerdict {
    Entire,
    Uncertain,
    NotEntire,
}

pub fn classify_score(score: f64) -> EntireVerdict {
    if score < UNCERTAIN_BAND.0 {
        EntireVerdict::Entire
    } else if score <= UNCERTAIN_BAND.1 {
        EntireVerdict::Uncertain
    } else {
        EntireVerdict::NotEntire
    }
}

/// Determinant of the `ℓ×ℓ` tridiagonal system for polynomial solutions of degree `< ℓ`
/// of the conjugate equation; zero iff such a solution exists.
pub fn conjugate_poly_determinant(ell: u32, lambda: f64, mu: f64) -> f64 {
    let l = ell as f64;
    let (mut d_prev, mut d) = (1.0, 1.0);
    for j in 0..ell as usize {
        let jf = j as f64;
        let diag = jf * (jf - l) + lambda;
        let off = mu * mu * jf * (l - jf);
        let next = diag * d - off * d_prev;
        d_prev = d;
        d = next;
    }
    d
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralSample {
    pub ell: u32,
    pub mu: f64,
    pub lambda: f64,
    pub det_value: f64,
}

impl SpectralSample {
    pub fn amplitude(&self, omega: f64) -> f64 {
        2.0 * omega * self.mu
    }
}

const SPECTRAL_GRID: usize = 4000;

/// Roots `μ ∈ (0, mu_max]` of the conjugate determinant along `λ = 1/(4ω²) − μ²`, ascending.
pub fn spectral_scan(ell: u32, omega: f64, mu_max: f64) -> Result<Vec<SpectralSample>> {
    if !(omega > 0.0) || !omega.is_finite() {
        return Err(Error::Domain(format!("omega must be positive, got {omega}")));
    }
    if ell == 0 {
        return Err(Error::Domain("ell must be positive".into()));
    }
    if !(mu_max > 0.0) || !mu_max.is_finite() {
        return Err(Error::Domain(format!("mu_max must be positive, got {mu_max}")));
    }
    let c = 0.25 / (omega * omega);
    let f = |mu: f64| conjugate_poly_determinant(ell, c - mu * mu, mu);
    let mut out = Vec::new();
    let h = mu_max / SPECTRAL_GRID as f64;
    let mut a = h * 1e-6;
    let mut fa = f(a);
    for j in 1..=SPECTRAL_GRID {
        let b = h * j as f64;
        let fb = f(b);
        let root = if fb == 0.0 {
            Some(b)
        } else if fa != 0.0 && fa.signum() != fb.signum() {
            Some(brent(|m| Ok(f(m)), a, b, 1e-15 * b, 0.0)?)
        } else {
            None
        };
        if let Some(mu) = root {
            let lambda = c - mu * mu;
            out.push(SpectralSample { ell, mu, lambda, det_value: f(mu) });
        }
        a = b;
        fa = fb;
    }
    Ok(out)
}

/// Spectral roots as CSV with columns `ell,omega,mu,lambda,A`.
pub fn write_spectral_csv<W: Write>(w: W, omega: f64, samples: &[SpectralSample]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["ell", "omega", "mu", "lambda", "A"])?;
    for s in samples {
        wr.write_record([
            s.ell.to_string(),
            omega.to_string(),
            s.mu.to_string(),
            s.lambda.to_string(),
            s.amplitude(omega).to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}
