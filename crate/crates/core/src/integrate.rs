//! Adaptive Dormand–Prince 5(4) integrator with PI step control, and the flows built on it:
//! the lifted scalar torus flow, fundamental matrices of 2×2 linear systems along paths in ℂ*,
//! and the parameter-variational equations at `μ = η = 0`.

use crate::error::{Error, Result};
use crate::linalg::{c, Mat2, C64, I};
use crate::monodromy::LinearSystem;
use crate::params::ReducedParams;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OdeSettings {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub max_evals: usize,
}

impl Default for OdeSettings {
    fn default() -> Self {
        OdeSettings { rel_tol: 1e-10, abs_tol: 1e-12, max_step: 0.5, max_evals: 5_000_000 }
    }
}

impl OdeSettings {
    pub fn with_tol(rel_tol: f64, abs_tol: f64) -> Self {
        OdeSettings { rel_tol, abs_tol, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x > 0.0 && x <= 1e-2;
        if !ok(self.rel_tol) || !ok(self.abs_tol) {
            return Err(Error::Domain("tolerances must lie in (0, 1e-2]".into()));
        }
        if self.max_evals == 0 || !(self.max_step > 0.0) {
            return Err(Error::Domain("max_evals and max_step must be positive".into()));
        }
        Ok(())
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFE: f64 = 0.9;
const BETA: f64 = 0.04;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

/// Stateful stepper; keeps the previous accepted step for Hermite interpolation.
pub struct Stepper<F: FnMut(f64, &[f64], &mut [f64])> {
    f: F,
    settings: OdeSettings,
    t: f64,
    y: Vec<f64>,
    dy: Vec<f64>,
    t_prev: f64,
    y_prev: Vec<f64>,
    dy_prev: Vec<f64>,
    h: f64,
    facold: f64,
    evals: usize,
    k: [Vec<f64>; 6],
    ytmp: Vec<f64>,
    ynew: Vec<f64>,
}

impl<F: FnMut(f64, &[f64], &mut [f64])> Stepper<F> {
    /// `t_dir` only fixes the direction and scale of the first trial step.
    pub fn new(mut f: F, t0: f64, y0: &[f64], t_dir: f64, settings: OdeSettings) -> Result<Self> {
        settings.validate()?;
        let n = y0.len();
        let mut dy = vec![0.0; n];
        f(t0, y0, &mut dy);
        let mut st = Stepper {
            f,
            settings,
            t: t0,
            y: y0.to_vec(),
            dy,
            t_prev: t0,
            y_prev: y0.to_vec(),
            dy_prev: vec![0.0; n],
            h: 0.0,
            facold: 1e-4,
            evals: 1,
            k: std::array::from_fn(|_| vec![0.0; n]),
            ytmp: vec![0.0; n],
            ynew: vec![0.0; n],
        };
        st.dy_prev.copy_from_slice(&st.dy);
        let dir = if t_dir >= t0 { 1.0 } else { -1.0 };
        st.h = dir * st.initial_step((t_dir - t0).abs());
        Ok(st)
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn dy(&self) -> &[f64] {
        &self.dy
    }

    pub fn evals(&self) -> usize {
        self.evals
    }

    /// Previous accepted node `(t, y, y')`.
    pub fn prev(&self) -> (f64, &[f64], &[f64]) {
        (self.t_prev, &self.y_prev, &self.dy_prev)
    }

    /// Replace the current state (used for constraint projection); keeps the step size.
    pub fn reset_state(&mut self, y: &[f64]) {
        self.y.copy_from_slice(y);
        (self.f)(self.t, &self.y, &mut self.dy);
        self.evals += 1;
    }

    fn sk(&self, i: usize, a: f64, b: f64) -> f64 {
        let _ = i;
        self.settings.abs_tol + self.settings.rel_tol * a.abs().max(b.abs())
    }

    fn initial_step(&mut self, span: f64) -> f64 {
        let n = self.y.len() as f64;
        let mut d0 = 0.0;
        let mut d1 = 0.0;
        for i in 0..self.y.len() {
            let sk = self.sk(i, self.y[i], 0.0);
            d0 += (self.y[i] / sk).powi(2);
            d1 += (self.dy[i] / sk).powi(2);
        }
        let (d0, d1) = ((d0 / n).sqrt(), (d1 / n).sqrt());
        let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        h0 = h0.min(self.settings.max_step).min(span.max(1e-12));
        for i in 0..self.y.len() {
            self.ytmp[i] = self.y[i] + h0 * self.dy[i];
        }
        (self.f)(self.t + h0, &self.ytmp, &mut self.k[0]);
        self.evals += 1;
        let mut d2 = 0.0;
        for i in 0..self.y.len() {
            let sk = self.sk(i, self.y[i], 0.0);
            d2 += ((self.k[0][i] - self.dy[i]) / sk).powi(2);
        }
        let d2 = (d2 / n).sqrt() / h0;
        let dm = d1.max(d2);
        let h1 = if dm <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / dm).powf(0.2) };
        (100.0 * h0).min(h1).min(self.settings.max_step).min(span.max(1e-12))
    }

    /// One accepted step that does not pass `t_limit`.
    pub fn step(&mut self, t_limit: f64) -> Result<()> {
        let n = self.y.len();
        let dir = if t_limit >= self.t { 1.0 } else { -1.0 };
        if self.h * dir <= 0.0 {
            self.h = -self.h;
        }
        let mut rejected = false;
        loop {
            if self.evals > self.settings.max_evals {
                return Err(Error::Budget { evals: self.evals, t: self.t });
            }
            let remaining = t_limit - self.t;
            let mut h = self.h.abs().min(self.settings.max_step) * dir;
            let last = h.abs() >= remaining.abs() * (1.0 - 1e-12);
            if last {
                h = remaining;
            }
            if h.abs() < 1e-14 * self.t.abs().max(1e-300) && !last {
                return Err(Error::StepUnderflow(self.t));
            }
            let (t, y) = (self.t, &self.y);
            let f = &mut self.f;
            let [k2, k3, k4, k5, k6, k7] = &mut self.k;
            let k1 = &self.dy;
            let yt = &mut self.ytmp;
            for i in 0..n {
                yt[i] = y[i] + h * A21 * k1[i];
            }
            f(t + C2 * h, yt, k2);
            for i in 0..n {
                yt[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
            }
            f(t + C3 * h, yt, k3);
            for i in 0..n {
                yt[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
            }
            f(t + C4 * h, yt, k4);
            for i in 0..n {
                yt[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
            }
            f(t + C5 * h, yt, k5);
            for i in 0..n {
                yt[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
            }
            let t_new = if last { t_limit } else { t + h };
            f(t_new, yt, k6);
            for i in 0..n {
                self.ynew[i] = y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
            }
            f(t_new, &self.ynew, k7);
            self.evals += 6;
            let mut err = 0.0;
            for i in 0..n {
                let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                let sk = self.settings.abs_tol + self.settings.rel_tol * y[i].abs().max(self.ynew[i].abs());
                err += (e / sk).powi(2);
            }
            let err = (err / n as f64).sqrt();
            if !err.is_finite() {
                self.h = h * FAC_MIN;
                rejected = true;
                continue;
            }
            let fac11 = err.powf(0.2 - BETA * 0.75);
            if err <= 1.0 {
                let fac = (fac11 / self.facold.powf(BETA) / SAFE).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
                let mut h_new = h / fac;
                if rejected {
                    h_new = h_new.abs().min(h.abs()) * dir;
                }
                self.facold = err.max(1e-4);
                self.t_prev = self.t;
                std::mem::swap(&mut self.y_prev, &mut self.y);
                std::mem::swap(&mut self.dy_prev, &mut self.dy);
                self.y.copy_from_slice(&self.ynew);
                self.dy.copy_from_slice(&k7[..]);
                self.t = t_new;
                if !last || h_new.abs() < self.h.abs() {
                    self.h = h_new;
                }
                return Ok(());
            }
            self.h = h / (1.0 / FAC_MIN).min(fac11 / SAFE);
            rejected = true;
        }
    }

    /// Step until exactly `t_target`.
    pub fn advance_to(&mut self, t_target: f64) -> Result<()> {
        while self.t != t_target {
            self.step(t_target)?;
        }
        Ok(())
    }
}

/// Integrate `y' = f(t, y)` from `t0` to `t1`.
pub fn solve<F>(f: F, t0: f64, y0: &[f64], t1: f64, s: &OdeSettings) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    if t0 == t1 {
        return Ok(y0.to_vec());
    }
    let mut st = Stepper::new(f, t0, y0, t1, *s)?;
    st.advance_to(t1)?;
    Ok(st.y().to_vec())
}

/// Cubic Hermite interpolation of one component between two nodes.
pub fn hermite(t0: f64, y0: f64, d0: f64, t1: f64, y1: f64, d1: f64, t: f64) -> f64 {
    let h = t1 - t0;
    let s = (t - t0) / h;
    let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
    let h10 = s * (1.0 - s) * (1.0 - s);
    let h01 = s * s * (3.0 - 2.0 * s);
    let h11 = s * s * (s - 1.0);
    h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1
}

/// Right-hand side of the torus equation `dθ/dτ = η cos θ + ℓ + 2μ cos τ`.
#[inline]
pub fn torus_field(rp: &ReducedParams, theta: f64, tau: f64) -> f64 {
    rp.eta * theta.cos() + rp.ell + 2.0 * rp.mu * tau.cos()
}

/// Lifted solution `θ(τ₁)` of the torus equation with `θ(τ₀) = θ₀`.
pub fn flow_theta(rp: &ReducedParams, theta0: f64, tau0: f64, tau1: f64, s: &OdeSettings) -> Result<f64> {
    rp.validate_finite()?;
    crate::error::ensure_finite("theta0", theta0)?;
    let rp = *rp;
    // Integrate from the representative in [0, 2π) so that 2π-equivariance is exact.
    let turns = (theta0 / (2.0 * std::f64::consts::PI)).floor();
    let shift = 2.0 * std::f64::consts::PI * turns;
    let y = solve(move |t, y, dy| dy[0] = torus_field(&rp, y[0], t), tau0, &[theta0 - shift], tau1, s)?;
    Ok(y[0] + shift)
}

/// A path in the punctured plane, parametrized by a real variable.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PathInCStar {
    /// `z = e^{iτ}`, `τ` from `tau0` to `tau1`.
    UnitCircleArc { tau0: f64, tau1: f64 },
    /// `z = r e^{iφ}`, `r` from `r0` to `r1`.
    RadialSegment { r0: f64, r1: f64, phi: f64 },
}

impl PathInCStar {
    pub fn full_circle() -> Self {
        PathInCStar::UnitCircleArc { tau0: 0.0, tau1: 2.0 * std::f64::consts::PI }
    }

    fn bounds(&self) -> (f64, f64) {
        match *self {
            PathInCStar::UnitCircleArc { tau0, tau1 } => (tau0, tau1),
            PathInCStar::RadialSegment { r0, r1, .. } => (r0, r1),
        }
    }

    /// Point and derivative `dz/dt` at parameter `t`.
    pub fn point(&self, t: f64) -> (C64, C64) {
        match *self {
            PathInCStar::UnitCircleArc { .. } => {
                let z = C64::from_polar(1.0, t);
                (z, I * z)
            }
            PathInCStar::RadialSegment { phi, .. } => {
                let e = C64::from_polar(1.0, phi);
                (e * t, e)
            }
        }
    }

    pub fn endpoints(&self) -> (C64, C64) {
        let (a, b) = self.bounds();
        (self.point(a).0, self.point(b).0)
    }

    fn validate(&self) -> Result<()> {
        let (a, b) = self.bounds();
        if !a.is_finite() || !b.is_finite() {
            return Err(Error::Domain("path parameters must be finite".into()));
        }
        if let PathInCStar::RadialSegment { r0, r1, phi } = *self {
            if !phi.is_finite() || r0 <= 0.0 || r1 <= 0.0 {
                return Err(Error::Domain("radial path must stay in r > 0".into()));
            }
        }
        Ok(())
    }
}

fn path_matrix(sys: &LinearSystem, path: &PathInCStar, t: f64) -> Mat2 {
    let (z, dz) = path.point(t);
    sys.coefficient(z).scale(dz)
}

/// Fundamental solution along `path` with `Y(start) = Id`.
pub fn flow_linear(sys: &LinearSystem, path: &PathInCStar, s: &OdeSettings) -> Result<Mat2> {
    path.validate()?;
    let (t0, t1) = path.bounds();
    let mut y0 = [0.0; 8];
    Mat2::identity().pack(&mut y0);
    let sys = *sys;
    let path = *path;
    let y = solve(
        move |t, y, dy| {
            let a = path_matrix(&sys, &path, t);
            (a * Mat2::unpack(y)).pack(dy);
        },
        t0,
        &y0,
        t1,
        s,
    )?;
    Ok(Mat2::unpack(&y))
}

/// Transport of a line along `path` through the norm-preserving projective flow
/// `v' = Cv − (v*Cv / v*v) v`; returns a unit representative.
pub fn flow_line(sys: &LinearSystem, path: &PathInCStar, v0: [C64; 2], s: &OdeSettings) -> Result<[C64; 2]> {
    path.validate()?;
    let (t0, t1) = path.bounds();
    let n = (v0[0].norm_sqr() + v0[1].norm_sqr()).sqrt();
    if n == 0.0 || !n.is_finite() {
        return Err(Error::Domain("initial line must be a nonzero vector".into()));
    }
    let y0 = [v0[0].re / n, v0[0].im / n, v0[1].re / n, v0[1].im / n];
    let sys = *sys;
    let path = *path;
    let y = solve(
        move |t, y, dy| {
            let a = path_matrix(&sys, &path, t);
            let v = [c(y[0], y[1]), c(y[2], y[3])];
            let w = a.apply(v);
            let nn = v[0].norm_sqr() + v[1].norm_sqr();
            let rq = (v[0].conj() * w[0] + v[1].conj() * w[1]) / nn;
            let d = [w[0] - rq * v[0], w[1] - rq * v[1]];
            dy[0] = d[0].re;
            dy[1] = d[0].im;
            dy[2] = d[1].re;
            dy[3] = d[1].im;
        },
        t0,
        &y0,
        t1,
        s,
    )?;
    let v = [c(y[0], y[1]), c(y[2], y[3])];
    let n = (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
    Ok([v[0] / n, v[1] / n])
}

/// Parameter derivatives of the lifted flow at the locus `μ = η = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariationalResult {
    pub theta: f64,
    pub d_eta: f64,
    pub d_mu: f64,
    pub d2_eta: f64,
    /// `∂^{k+1}θ/∂η∂μ^k` for `k = 1..=ℓ`.
    pub mixed: Vec<f64>,
}

/// `k`-th derivative of `cos`.
fn cos_derivative(k: usize, x: f64) -> f64 {
    match k % 4 {
        0 => x.cos(),
        1 => -x.sin(),
        2 => -x.cos(),
        _ => x.sin(),
    }
}

/// Integrates the base flow together with its variational equations in `(η, μ)` from `τ = 0`.
pub fn flow_variational(rp0: &ReducedParams, theta0: f64, tau1: f64, s: &OdeSettings) -> Result<VariationalResult> {
    rp0.validate_finite()?;
    if rp0.mu != 0.0 || rp0.eta != 0.0 {
        return Err(Error::Domain("variational formulas hold at mu = eta = 0".into()));
    }
    if rp0.ell == 0.0 {
        return Err(Error::Unsupported("ell = 0 (closed forms divide by ell)".into()));
    }
    if rp0.ell.fract() != 0.0 {
        return Err(Error::Domain("ell must be an integer".into()));
    }
    let (ell, eta, mu) = (rp0.ell, rp0.eta, rp0.mu);
    let n_mixed = ell.abs() as usize;
    let y0: Vec<f64> = [theta0, 0.0, 0.0, 0.0].into_iter().chain(std::iter::repeat_n(0.0, n_mixed)).collect();
    let y = solve(
        move |tau, y, dy| {
            let (th, th_e, th_m, th_ee) = (y[0], y[1], y[2], y[3]);
            let (sn, cs) = th.sin_cos();
            dy[0] = eta * cs + ell + 2.0 * mu * tau.cos();
            dy[1] = cs - eta * sn * th_e;
            dy[2] = 2.0 * tau.cos() - eta * sn * th_m;
            dy[3] = -2.0 * sn * th_e - eta * (cs * th_e * th_e + sn * th_ee);
            // At η = 0 the μ-derivatives of θ beyond the first vanish, so
            // ∂_μ^k cos θ = cos^{(k)}(θ)·θ_μ^k.
            for k in 1..=n_mixed {
                dy[3 + k] = cos_derivative(k, th) * th_m.powi(k as i32);
            }
        },
        0.0,
        &y0,
        tau1,
        s,
    )?;
    Ok(VariationalResult { theta: y[0], d_eta: y[1], d_mu: y[2], d2_eta: y[3], mixed: y[4..].to_vec() })
}
