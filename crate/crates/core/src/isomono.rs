//! Isomonodromic deformations: the general Jimbo flow, the normalized real flow with its
//! Painlevé 3 reduction and pole detection, and the dynamical foliation of the torus family.

use crate::error::{Error, Result};
use crate::integrate::{solve, OdeSettings, Stepper};
use crate::linalg::{re, Mat2};
use crate::monodromy::LinearSystem;
use crate::params::{to_reduced, PhysParams, ReducedParams};
use crate::roots::brent;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// `N = diag(−1/2, 0)`.
pub fn n_matrix() -> Mat2 {
    Mat2::diag(re(-0.5), re(0.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneralJimboState {
    pub t: f64,
    pub ktilde: Mat2,
    #[serde(rename = "R")]
    pub r: Mat2,
    #[serde(rename = "N")]
    pub n: Mat2,
}

impl GeneralJimboState {
    /// `K = K̃/t`, whose conjugacy class is a first integral.
    pub fn k(&self) -> Mat2 {
        self.ktilde.scale(re(1.0 / self.t))
    }

    /// Linear system with main terms `−K̃` at 0 and `N` at infinity, residue `R`.
    pub fn system(&self) -> LinearSystem {
        LinearSystem::new(-self.ktilde, self.r, self.n)
    }
}

/// Integrate `tK' = [R,K]`, `R' = [K,N]` in `s = ln t`, where `K̃ = tK` obeys
/// `dK̃/ds = [R,K̃] + K̃` and `dR/ds = [K̃,N]`.
pub fn isoflow_general(state: &GeneralJimboState, t1: f64, s: &OdeSettings) -> Result<GeneralJimboState> {
    if !(state.t > 0.0) || !(t1 > 0.0) {
        return Err(Error::Domain("times must be positive".into()));
    }
    let n = state.n;
    let mut y0 = vec![0.0; 16];
    state.ktilde.pack(&mut y0[..8]);
    state.r.pack(&mut y0[8..]);
    let f = move |_s: f64, y: &[f64], dy: &mut [f64]| {
        let kt = Mat2::unpack(&y[..8]);
        let r = Mat2::unpack(&y[8..]);
        (r.commutator(&kt) + kt).pack(&mut dy[..8]);
        kt.commutator(&n).pack(&mut dy[8..]);
    };
    let y = solve(f, state.t.ln(), &y0, t1.ln(), s)?;
    Ok(GeneralJimboState { t: t1, ktilde: Mat2::unpack(&y[..8]), r: Mat2::unpack(&y[8..]), n })
}

/// Real isomonodromic family with `R = [[−ℓ, −R₂₁], [R₂₁, 0]]` and `K` conjugate to `diag(1/2, 0)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizedJimboState {
    pub tau: f64,
    pub ell: f64,
    #[serde(rename = "R21")]
    pub r21: f64,
    #[serde(rename = "K")]
    pub k: [[f64; 2]; 2],
}

impl NormalizedJimboState {
    pub fn r_matrix(&self) -> Mat2 {
        Mat2::real(-self.ell, -self.r21, self.r21, 0.0)
    }

    pub fn k_matrix(&self) -> Mat2 {
        Mat2::real(self.k[0][0], self.k[0][1], self.k[1][0], self.k[1][1])
    }

    /// Linear system `{−τK, R, τN}`.
    pub fn system(&self) -> LinearSystem {
        LinearSystem::new(self.k_matrix().scale(re(-self.tau)), self.r_matrix(), n_matrix().scale(re(self.tau)))
    }

    /// Chart coordinates `(G₂₁, R₂₁, ℓ, τ)`; `None` where `K₁₁ = 0`.
    pub fn chart(&self) -> Option<(f64, f64, f64, f64)> {
        if self.k[0][0] == 0.0 {
            return None;
        }
        Some((self.k[1][0] / self.k[0][0], self.r21, self.ell, self.tau))
    }

    /// Largest violation of `tr K = 1/2`, `det K = 0`, `R₂₁ > 0`.
    pub fn structural_drift(&self) -> f64 {
        let k = &self.k;
        let tr = (k[0][0] + k[1][1] - 0.5).abs();
        let det = (k[0][0] * k[1][1] - k[0][1] * k[1][0]).abs();
        let sign = if self.r21 > 0.0 { 0.0 } else { f64::INFINITY };
        tr.max(det).max(sign)
    }

    pub fn is_josephson(&self, tol: f64) -> bool {
        let k = &self.k;
        (k[0][0] - 0.5).abs() < tol && k[0][1].abs() < tol && k[1][0].abs() < tol && k[1][1].abs() < tol
    }

    /// Torus-flow parameters of a Josephson-type state: `μ = τ/2`, `η = 2R₂₁`.
    pub fn josephson_params(&self) -> ReducedParams {
        ReducedParams { ell: self.ell, mu: self.tau / 2.0, eta: 2.0 * self.r21 }
    }

    fn pack(&self) -> [f64; 5] {
        [self.r21, self.k[0][0], self.k[0][1], self.k[1][0], self.k[1][1]]
    }

    fn unpack(tau: f64, ell: f64, y: &[f64]) -> Self {
        NormalizedJimboState { tau, ell, r21: y[0], k: [[y[1], y[2]], [y[3], y[4]]] }
    }
}

/// State built from chart coordinates: `K = G·diag(1/2, 0)·G⁻¹` with
/// `G = [[1, G₁₂], [G₂₁, 1 + G₁₂G₂₁]]` and `G₁₂ = −G₂₁R₂₁/(G₂₁ℓ + R₂₁(1 + G₂₁²))`.
pub fn normalized_from_chart(g21: f64, r21: f64, ell: f64, tau: f64) -> Result<NormalizedJimboState> {
    for (n, v) in [("G21", g21), ("R21", r21), ("ell", ell), ("tau", tau)] {
        crate::error::ensure_finite(n, v)?;
    }
    if !(r21 > 0.0) || !(tau > 0.0) {
        return Err(Error::Domain("R21 and tau must be positive".into()));
    }
    let den = g21 * ell + r21 * (1.0 + g21 * g21);
    if den == 0.0 {
        return Err(Error::LeftChart("chart denominator vanishes".into()));
    }
    let g12 = -g21 * r21 / den;
    let g22 = 1.0 + g12 * g21;
    let k = [[g22 / 2.0, -g12 / 2.0], [g21 * g22 / 2.0, -g21 * g12 / 2.0]];
    Ok(NormalizedJimboState { tau, ell, r21, k })
}

/// Josephson-type state of the torus flow: `K = diag(1/2, 0)`, `τ = 2μ`, `R₂₁ = η/2`.
pub fn josephson_state(rp: &ReducedParams) -> Result<NormalizedJimboState> {
    rp.validate_finite()?;
    if !(rp.mu > 0.0) || !(rp.eta > 0.0) {
        return Err(Error::Domain("embedding needs mu > 0 and eta > 0".into()));
    }
    normalized_from_chart(0.0, rp.eta / 2.0, rp.ell, 2.0 * rp.mu)
}

fn normalized_field(ell: f64, tau: f64, y: &[f64], dy: &mut [f64]) {
    let (r21, k11, k12, k21, k22) = (y[0], y[1], y[2], y[3], y[4]);
    let u = tau * (k21 - k12) / r21;
    // X = (2/τ)R + uN
    let c = 2.0 / tau;
    let x = [[-c * ell - 0.5 * u, -c * r21], [c * r21, 0.0]];
    let k = [[k11, k12], [k21, k22]];
    for i in 0..2 {
        for j in 0..2 {
            let mut v = 0.0;
            for m in 0..2 {
                v += x[i][m] * k[m][j] - k[i][m] * x[m][j];
            }
            dy[1 + 2 * i + j] = v;
        }
    }
    dy[0] = -tau * (k12 + k21) / 2.0;
}

/// Real representative of a normalized family in an arbitrary diagonal gauge:
/// `R = [[−ℓ, R₁₂], [R₂₁, 0]]`. In the chart `R₁₂R₂₁ < 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsoSample {
    pub tau: f64,
    pub ell: f64,
    #[serde(rename = "R12")]
    pub r12: f64,
    #[serde(rename = "R21")]
    pub r21: f64,
    #[serde(rename = "K")]
    pub k: [[f64; 2]; 2],
}

impl IsoSample {
    pub fn from_normalized(st: &NormalizedJimboState) -> Self {
        IsoSample { tau: st.tau, ell: st.ell, r12: -st.r21, r21: st.r21, k: st.k }
    }

    pub fn in_chart(&self) -> bool {
        self.r12 * self.r21 < 0.0
    }

    /// Diagonal gauge `diag(1, d)` with `d² = −R₁₂/R₂₁` brings the sample to normalized form.
    pub fn normalized(&self) -> Option<NormalizedJimboState> {
        if !self.in_chart() {
            return None;
        }
        let d = (-self.r12 / self.r21).sqrt() * self.r21.signum();
        Some(NormalizedJimboState {
            tau: self.tau,
            ell: self.ell,
            r21: d * self.r21,
            k: [[self.k[0][0], self.k[0][1] / d], [self.k[1][0] * d, self.k[1][1]]],
        })
    }

    /// Gauge-invariant `w = −R₁₂/(τK₁₂)`.
    pub fn w(&self) -> Option<f64> {
        let k12 = self.k[0][1];
        if k12 == 0.0 {
            None
        } else {
            Some(-self.r12 / (self.tau * k12))
        }
    }

    pub fn system(&self) -> LinearSystem {
        let k = Mat2::real(self.k[0][0], self.k[0][1], self.k[1][0], self.k[1][1]);
        let r = Mat2::real(-self.ell, self.r12, self.r21, 0.0);
        LinearSystem::new(k.scale(re(-self.tau)), r, n_matrix().scale(re(self.tau)))
    }

    /// `|tr K − 1/2|` and `|det K|`.
    pub fn structural_drift(&self) -> f64 {
        let k = &self.k;
        (k[0][0] + k[1][1] - 0.5).abs().max((k[0][0] * k[1][1] - k[0][1] * k[1][0]).abs())
    }

    fn pack(&self) -> [f64; 6] {
        [self.r12, self.r21, self.k[0][0], self.k[0][1], self.k[1][0], self.k[1][1]]
    }

    fn unpack(tau: f64, ell: f64, y: &[f64]) -> Self {
        IsoSample { tau, ell, r12: y[0], r21: y[1], k: [[y[2], y[3]], [y[4], y[5]]] }
    }
}

/// The flow without the gauge term: `R' = 2τ[K,N]`, `K' = (2/τ)[R,K]`.
fn gauge_free_field(ell: f64, tau: f64, y: &[f64], dy: &mut [f64]) {
    let (r12, r21) = (y[0], y[1]);
    let k = [[y[2], y[3]], [y[4], y[5]]];
    let c = 2.0 / tau;
    let r = [[-c * ell, c * r12], [c * r21, 0.0]];
    for i in 0..2 {
        for j in 0..2 {
            let mut v = 0.0;
            for m in 0..2 {
                v += r[i][m] * k[m][j] - k[i][m] * r[m][j];
            }
            dy[2 + 2 * i + j] = v;
        }
    }
    dy[0] = tau * k[0][1];
    dy[1] = -tau * k[1][0];
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizedTrajectory {
    pub samples: Vec<IsoSample>,
    pub max_structural_drift: f64,
    pub projections: usize,
    /// Number of times the real normalized chart was left (continued flow only).
    pub chart_exits: usize,
}

impl NormalizedTrajectory {
    pub fn w_samples(&self) -> Vec<(f64, f64)> {
        self.samples.iter().filter_map(|s| s.w().map(|w| (s.tau, w))).collect()
    }

    /// Painlevé 3 residual indexed like `samples`; needs a uniformly sampled trajectory.
    /// Poles of `w` enter as NaN and are skipped.
    pub fn p3_report(&self) -> Result<P3Report> {
        let series: Vec<(f64, f64)> = self.samples.iter().map(|s| (s.tau, s.w().unwrap_or(f64::NAN))).collect();
        let ell = self.samples.first().map(|s| s.ell).unwrap_or(0.0);
        p3_residual(&series, ell)
    }
}

const PROJECT_ABOVE: f64 = 1e-11;

/// Restore `tr K = 1/2` by a diagonal shift; `k11` and `k22` sit at `offset` and `offset + 3`.
fn project(y: &mut [f64], offset: usize) -> bool {
    let drift = y[offset] + y[offset + 3] - 0.5;
    if drift.abs() > PROJECT_ABOVE {
        y[offset] -= drift / 2.0;
        y[offset + 3] -= drift / 2.0;
        true
    } else {
        false
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum FlowForm {
    /// Normalized chart with the gauge term; leaving the chart is an error.
    Chart,
    /// Gauge-free real form, continued through chart exits.
    Continued,
}

fn run_flow(
    start: &IsoSample,
    tau1: f64,
    sample_step: Option<f64>,
    form: FlowForm,
    s: &OdeSettings,
) -> Result<NormalizedTrajectory> {
    if !(start.tau > 0.0) || !(tau1 > 0.0) {
        return Err(Error::Domain("tau must stay positive".into()));
    }
    if !start.in_chart() {
        return Err(Error::LeftChart("initial state is not in the normalized chart".into()));
    }
    let ell = start.ell;
    let chart_start = start.normalized().expect("checked in chart");
    let (y0, offset): (Vec<f64>, usize) = match form {
        FlowForm::Chart => (chart_start.pack().to_vec(), 1),
        FlowForm::Continued => (start.pack().to_vec(), 2),
    };
    let field = move |t: f64, y: &[f64], dy: &mut [f64]| match form {
        FlowForm::Chart => normalized_field(ell, t, y, dy),
        FlowForm::Continued => gauge_free_field(ell, t, y, dy),
    };
    let to_sample = |t: f64, y: &[f64]| match form {
        FlowForm::Chart => IsoSample::from_normalized(&NormalizedJimboState::unpack(t, ell, y)),
        FlowForm::Continued => IsoSample::unpack(t, ell, y),
    };
    let mut st = Stepper::new(field, start.tau, &y0, tau1, *s)?;
    let first = to_sample(start.tau, &y0);
    let mut out = NormalizedTrajectory {
        samples: vec![first],
        max_structural_drift: first.structural_drift(),
        projections: 0,
        chart_exits: 0,
    };
    let targets: Vec<f64> = match sample_step {
        Some(h) => {
            let n = ((tau1 - start.tau).abs() / h).round() as usize;
            let dir = (tau1 - start.tau).signum();
            (1..=n).map(|j| start.tau + dir * h * j as f64).collect()
        }
        None => vec![tau1],
    };
    let mut inside = true;
    for &target in &targets {
        while st.t() != target {
            if let Err(e) = st.step(target) {
                let last = out.samples.last().map(|x| x.r21).unwrap_or(start.r21);
                return Err(match e {
                    Error::StepUnderflow(t) if form == FlowForm::Chart && last < 0.1 * chart_start.r21 => {
                        Error::LeftChart(format!("R21 collapsing to 0 near tau = {t}"))
                    }
                    e => e,
                });
            }
            let mut y = st.y().to_vec();
            if project(&mut y, offset) {
                st.reset_state(&y);
                out.projections += 1;
            }
            let cur = to_sample(st.t(), &y);
            if form == FlowForm::Chart && y[0] <= 0.0 {
                return Err(Error::LeftChart(format!("R21 reached {} at tau = {}", y[0], st.t())));
            }
            if inside && !cur.in_chart() {
                out.chart_exits += 1;
            }
            inside = cur.in_chart();
            out.max_structural_drift = out.max_structural_drift.max(cur.structural_drift());
            if sample_step.is_none() || st.t() == target {
                out.samples.push(cur);
            }
        }
    }
    Ok(out)
}

/// Normalized flow `R' = 2τ[K,N] + u[N,R]`, `K' = (2/τ)[R,K] + u[N,K]` with
/// `u = τ(K₂₁ − K₁₂)/R₂₁`, recorded at every accepted step.
pub fn isoflow_normalized(state: &NormalizedJimboState, tau1: f64, s: &OdeSettings) -> Result<NormalizedTrajectory> {
    run_flow(&IsoSample::from_normalized(state), tau1, None, FlowForm::Chart, s)
}

/// As [`isoflow_normalized`], sampled on the uniform grid `τ₀ + jh`.
pub fn isoflow_normalized_sampled(
    state: &NormalizedJimboState,
    tau1: f64,
    h: f64,
    s: &OdeSettings,
) -> Result<NormalizedTrajectory> {
    if !(h > 0.0) {
        return Err(Error::Domain("sample step must be positive".into()));
    }
    run_flow(&IsoSample::from_normalized(state), tau1, Some(h), FlowForm::Chart, s)
}

/// The same family integrated without gauge fixing, so it continues through the places
/// where `R₁₂R₂₁` changes sign and the real normalized chart is left.
pub fn isoflow_continued(state: &NormalizedJimboState, tau1: f64, s: &OdeSettings) -> Result<NormalizedTrajectory> {
    run_flow(&IsoSample::from_normalized(state), tau1, None, FlowForm::Continued, s)
}

pub fn isoflow_continued_sampled(
    state: &NormalizedJimboState,
    tau1: f64,
    h: f64,
    s: &OdeSettings,
) -> Result<NormalizedTrajectory> {
    if !(h > 0.0) {
        return Err(Error::Domain("sample step must be positive".into()));
    }
    run_flow(&IsoSample::from_normalized(state), tau1, Some(h), FlowForm::Continued, s)
}

/// `w = R₂₁/(τK₁₂)`; `None` at a zero of `K₁₂`.
pub fn w_of(state: &NormalizedJimboState) -> Option<f64> {
    let k12 = state.k[0][1];
    if k12 == 0.0 {
        None
    } else {
        Some(state.r21 / (state.tau * k12))
    }
}

/// Painlevé 3 defect `w'' − (w'²/w − w'/τ − 2ℓw²/τ + (2ℓ−2)/τ + w³ − 1/w)`.
pub fn p3_defect(tau: f64, w: f64, w1: f64, w2: f64, ell: f64) -> f64 {
    let rhs = w1 * w1 / w - w1 / tau - 2.0 * ell * w * w / tau + (2.0 * ell - 2.0) / tau + w * w * w - 1.0 / w;
    w2 - rhs
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct P3Report {
    pub max_residual: f64,
    pub evaluated: usize,
    pub skipped: usize,
    /// Per-sample residual; `None` at the ends and at skipped points.
    pub residuals: Vec<Option<f64>>,
}

/// Samples with `|w|` outside this band are treated as near a pole or zero.
pub const P3_BAND: (f64, f64) = (0.2, 5.0);

/// Residual of Painlevé 3 on uniformly spaced samples, derivatives by 5-point central differences.
pub fn p3_residual(samples: &[(f64, f64)], ell: f64) -> Result<P3Report> {
    let n = samples.len();
    if n < 5 {
        return Err(Error::Domain("at least 5 samples needed".into()));
    }
    let h = samples[1].0 - samples[0].0;
    for w in samples.windows(2) {
        if ((w[1].0 - w[0].0) - h).abs() > 1e-9 * h.abs().max(1.0) {
            return Err(Error::Domain("samples must be uniformly spaced".into()));
        }
    }
    let mut rep = P3Report { max_residual: 0.0, evaluated: 0, skipped: 0, residuals: vec![None; n] };
    for i in 2..n - 2 {
        let stencil: Vec<f64> = (i - 2..=i + 2).map(|j| samples[j].1).collect();
        if stencil.iter().any(|w| !(w.abs() >= P3_BAND.0 && w.abs() <= P3_BAND.1)) {
            rep.skipped += 1;
            continue;
        }
        let [wm2, wm1, w0, wp1, wp2] = [stencil[0], stencil[1], stencil[2], stencil[3], stencil[4]];
        let w1 = (wm2 - 8.0 * wm1 + 8.0 * wp1 - wp2) / (12.0 * h);
        let w2 = (-wm2 + 16.0 * wm1 - 30.0 * w0 + 16.0 * wp1 - wp2) / (12.0 * h * h);
        let r = p3_defect(samples[i].0, w0, w1, w2, ell).abs();
        rep.residuals[i] = Some(r);
        rep.max_residual = rep.max_residual.max(r);
        rep.evaluated += 1;
    }
    Ok(rep)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JosCrossing {
    pub tau0: f64,
    /// Limit of `(τ − τ₀)w(τ)`; `None` for a double root.
    pub residue: Option<f64>,
    #[serde(rename = "K")]
    pub k: [[f64; 2]; 2],
    pub in_chart: bool,
    pub double_root: bool,
}

fn advance(sample: &IsoSample, tau: f64, s: &OdeSettings) -> Result<IsoSample> {
    if tau == sample.tau {
        return Ok(*sample);
    }
    let ell = sample.ell;
    let y = solve(move |t, y, dy| gauge_free_field(ell, t, y, dy), sample.tau, &sample.pack(), tau, s)?;
    Ok(IsoSample::unpack(tau, ell, &y))
}

/// Residue of `w` at a zero of `K₁₂`, by a quadratic fit of `(τ − τ₀)w(τ)` on both sides.
pub fn residue_at(root: &IsoSample, s: &OdeSettings) -> Result<f64> {
    let d0 = 1e-3 * root.tau.min(1.0);
    let mut ata = [[0.0f64; 3]; 3];
    let mut atb = [0.0f64; 3];
    for m in [-4.0, -3.0, -2.0, -1.0, 1.0, 2.0, 3.0, 4.0] {
        let x = m * d0;
        let st = advance(root, root.tau + x, s)?;
        let w = st.w().ok_or_else(|| Error::Degenerate("K12 vanished inside the fit window".into()))?;
        let basis = [1.0, m, m * m];
        for i in 0..3 {
            atb[i] += basis[i] * x * w;
            for j in 0..3 {
                ata[i][j] += basis[i] * basis[j];
            }
        }
    }
    Ok(solve3(ata, atb)[0])
}

#[allow(clippy::needless_range_loop)]
fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> [f64; 3] {
    for c in 0..3 {
        let p = (c..3).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..3 {
            let f = a[r][c] / a[c][c];
            for k in c..3 {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = [0.0; 3];
    for c in (0..3).rev() {
        x[c] = (b[c] - (c + 1..3).map(|k| a[c][k] * x[k]).sum::<f64>()) / a[c][c];
    }
    x
}

/// Zeros of `K₁₂` along a trajectory, refined by Brent's method on re-integrated states.
pub fn detect_jos_crossing(traj: &NormalizedTrajectory, s: &OdeSettings) -> Result<Vec<JosCrossing>> {
    let mut out = Vec::new();
    let pts = &traj.samples;
    for (i, st) in pts.iter().enumerate() {
        let k12 = st.k[0][1];
        let root = if k12 == 0.0 {
            Some(*st)
        } else if i + 1 < pts.len() {
            let nx = &pts[i + 1];
            if nx.k[0][1] != 0.0 && nx.k[0][1].signum() != k12.signum() {
                let tau0 = brent(|t| Ok(advance(st, t, s)?.k[0][1]), st.tau, nx.tau, 1e-14 * nx.tau, 0.0)?;
                Some(advance(st, tau0, s)?)
            } else {
                None
            }
        } else {
            None
        };
        let Some(root) = root else { continue };
        let mut dy = [0.0; 6];
        gauge_free_field(root.ell, root.tau, &root.pack(), &mut dy);
        let double_root = dy[3].abs() < 1e-8 * (1.0 + root.r12.abs() / root.tau);
        let residue = if double_root { None } else { Some(residue_at(&root, s)?) };
        out.push(JosCrossing { tau0: root.tau, residue, k: root.k, in_chart: root.in_chart(), double_root });
    }
    Ok(out)
}

/// CSV with columns `tau,ell,R12,R21,K11,K12,K21,K22,w,p3_residual`; `p3` is indexed like
/// the trajectory samples.
pub fn write_normalized_csv<W: Write>(w: W, traj: &NormalizedTrajectory, p3: Option<&P3Report>) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["tau", "ell", "R12", "R21", "K11", "K12", "K21", "K22", "w", "p3_residual"])?;
    for (i, st) in traj.samples.iter().enumerate() {
        let wv = st.w().map(|v| v.to_string()).unwrap_or_default();
        let res = p3.and_then(|r| r.residuals.get(i).copied().flatten()).map(|v| v.to_string()).unwrap_or_default();
        wr.write_record([
            st.tau.to_string(),
            st.ell.to_string(),
            st.r12.to_string(),
            st.r21.to_string(),
            st.k[0][0].to_string(),
            st.k[0][1].to_string(),
            st.k[1][0].to_string(),
            st.k[1][1].to_string(),
            wv,
            res,
        ])?;
    }
    wr.flush()?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynFoliationState {
    pub s: f64,
    pub psi: f64,
    pub a: f64,
    pub ell: f64,
    /// Integrated independently; `ν − ψa/s` must reproduce `ell`.
    pub nu: f64,
}

impl DynFoliationState {
    /// Launch point of the torus flow `(ℓ, μ, η)`: `ψ = 0`, `a = η`, `s = 2μ`, `ν = ℓ`.
    pub fn from_josephson(rp: &ReducedParams) -> Result<Self> {
        rp.validate_finite()?;
        if !(rp.mu > 0.0) {
            return Err(Error::Domain("embedding needs mu > 0".into()));
        }
        Ok(DynFoliationState { s: 2.0 * rp.mu, psi: 0.0, a: rp.eta, ell: rp.ell, nu: rp.ell })
    }

    pub fn ell_invariant(&self) -> f64 {
        self.nu - self.psi * self.a / self.s
    }

    /// `w = a/ψ`.
    pub fn w(&self) -> Option<f64> {
        if self.psi == 0.0 {
            None
        } else {
            Some(self.a / self.psi)
        }
    }

    fn pack(&self) -> [f64; 3] {
        [self.psi, self.a, self.nu]
    }

    fn unpack(s: f64, ell: f64, y: &[f64]) -> Self {
        DynFoliationState { s, psi: y[0], a: y[1], ell, nu: y[2] }
    }
}

fn foliation_field(ell: f64, s: f64, y: &[f64], dy: &mut [f64]) {
    let (psi, a) = (y[0], y[1]);
    let dpsi = a + (1.0 - ell) * psi / s - a * psi * psi / (s * s);
    let da = -psi + ell * a / s + psi * a * a / (s * s);
    dy[0] = dpsi;
    dy[1] = da;
    dy[2] = (dpsi * a + psi * da) / s - psi * a / (s * s);
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoliationTrajectory {
    pub states: Vec<DynFoliationState>,
    /// Transversal `ψ = 0` crossings with `a > 0`, excluding the start.
    pub crossings: Vec<DynFoliationState>,
}

fn foliation_advance(st: &DynFoliationState, s1: f64, set: &OdeSettings) -> Result<DynFoliationState> {
    if s1 == st.s {
        return Ok(*st);
    }
    let ell = st.ell;
    let y = solve(move |t, y, dy| foliation_field(ell, t, y, dy), st.s, &st.pack(), s1, set)?;
    Ok(DynFoliationState::unpack(s1, ell, &y))
}

fn check_foliation(state: &DynFoliationState, s1: f64) -> Result<()> {
    for (n, v) in [("s", state.s), ("psi", state.psi), ("a", state.a), ("ell", state.ell), ("nu", state.nu), ("s1", s1)]
    {
        crate::error::ensure_finite(n, v)?;
    }
    if !(state.s > 0.0) || !(s1 > 0.0) {
        return Err(Error::Domain("s must stay positive".into()));
    }
    if state.psi == 0.0 && state.a == 0.0 {
        return Err(Error::Degenerate("(a, psi) = (0, 0)".into()));
    }
    Ok(())
}

/// Integrate the foliation with `ℓ` frozen, recording every accepted step and the
/// `ψ = 0` crossings with `a > 0`. With `stop_at_crossing`, stops at the first one.
pub fn dyn_foliation_flow_until(
    state: &DynFoliationState,
    s1: f64,
    stop_at_crossing: bool,
    set: &OdeSettings,
) -> Result<FoliationTrajectory> {
    check_foliation(state, s1)?;
    let ell = state.ell;
    let mut st = Stepper::new(move |t, y, dy| foliation_field(ell, t, y, dy), state.s, &state.pack(), s1, *set)?;
    let mut out = FoliationTrajectory { states: vec![*state], crossings: Vec::new() };
    while st.t() != s1 {
        st.step(s1)?;
        let prev = *out.states.last().unwrap();
        let cur = DynFoliationState::unpack(st.t(), ell, st.y());
        if cur.psi.abs() < 1e-300 && cur.a.abs() < 1e-300 {
            return Err(Error::Degenerate("(a, psi) reached (0, 0)".into()));
        }
        out.states.push(cur);
        if prev.psi != 0.0 && cur.psi != 0.0 && prev.psi.signum() != cur.psi.signum() {
            let root_s = brent(|x| Ok(foliation_advance(&prev, x, set)?.psi), prev.s, cur.s, 1e-15 * cur.s, 0.0)?;
            let root = foliation_advance(&prev, root_s, set)?;
            if root.a > 0.0 {
                out.crossings.push(DynFoliationState { psi: 0.0, ..root });
                if stop_at_crossing {
                    break;
                }
            }
        }
    }
    Ok(out)
}

pub fn dyn_foliation_flow(state: &DynFoliationState, s1: f64, set: &OdeSettings) -> Result<FoliationTrajectory> {
    dyn_foliation_flow_until(state, s1, false, set)
}

/// States on the uniform grid `s₀ + jh`.
pub fn dyn_foliation_sampled(
    state: &DynFoliationState,
    s1: f64,
    h: f64,
    set: &OdeSettings,
) -> Result<Vec<DynFoliationState>> {
    check_foliation(state, s1)?;
    if !(h > 0.0) {
        return Err(Error::Domain("sample step must be positive".into()));
    }
    let ell = state.ell;
    let mut st = Stepper::new(move |t, y, dy| foliation_field(ell, t, y, dy), state.s, &state.pack(), s1, *set)?;
    let n = ((s1 - state.s).abs() / h).round() as usize;
    let dir = (s1 - state.s).signum();
    let mut out = vec![*state];
    for j in 1..=n {
        let target = state.s + dir * h * j as f64;
        st.advance_to(target)?;
        out.push(DynFoliationState::unpack(target, ell, st.y()));
    }
    Ok(out)
}

/// Painlevé 3 residual of `w = a/ψ` on uniformly sampled states, indexed like `states`.
pub fn foliation_p3_report(states: &[DynFoliationState]) -> Result<P3Report> {
    let series: Vec<(f64, f64)> = states.iter().map(|x| (x.s, x.w().unwrap_or(f64::NAN))).collect();
    p3_residual(&series, states.first().map(|x| x.ell).unwrap_or(0.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

/// Factor bounding the `s` range searched by the return map.
pub const RETURN_S_FACTOR: f64 = 64.0;

/// Next transversal Josephson crossing of the foliation leaf through `p`, as parameters with
/// the same `ℓ`. `Ok(None)` if there is none within `s ∈ [s₀/64, 64·s₀]`.
pub fn josephson_return_map(p: &PhysParams, direction: Direction, set: &OdeSettings) -> Result<Option<PhysParams>> {
    let rp = to_reduced(p)?;
    Ok(josephson_return_map_reduced(&rp, direction, set)?.map(|r| {
        let omega = 1.0 / r.eta;
        PhysParams { b: r.ell * omega, a: 2.0 * omega * r.mu, omega }
    }))
}

pub fn josephson_return_map_reduced(
    rp: &ReducedParams,
    direction: Direction,
    set: &OdeSettings,
) -> Result<Option<ReducedParams>> {
    let start = DynFoliationState::from_josephson(rp)?;
    let s1 = match direction {
        Direction::Forward => start.s * RETURN_S_FACTOR,
        Direction::Backward => start.s / RETURN_S_FACTOR,
    };
    let traj = dyn_foliation_flow_until(&start, s1, true, set)?;
    Ok(traj.crossings.first().map(|c| ReducedParams { ell: rp.ell, mu: c.s / 2.0, eta: c.a }))
}

/// CSV with columns `s,psi,a,ell,nu,w,p3_residual`.
pub fn write_foliation_csv<W: Write>(w: W, states: &[DynFoliationState], p3: Option<&P3Report>) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["s", "psi", "a", "ell", "nu", "w", "p3_residual"])?;
    for (i, st) in states.iter().enumerate() {
        let wv = st.w().map(|v| v.to_string()).unwrap_or_default();
        let res = p3.and_then(|r| r.residuals.get(i).copied().flatten()).map(|v| v.to_string()).unwrap_or_default();
        wr.write_record([
            st.s.to_string(),
            st.psi.to_string(),
            st.a.to_string(),
            st.ell.to_string(),
            st.nu.to_string(),
            wv,
            res,
        ])?;
    }
    wr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;
    use crate::monodromy::monodromy_matrix;

    fn tight() -> OdeSettings {
        OdeSettings::with_tol(1e-12, 1e-14)
    }

    #[test]
    fn general_flow_commuting_data_constant() {
        let st = GeneralJimboState {
            t: 1.0,
            ktilde: Mat2::diag(c(0.3, 0.0), c(-0.2, 0.0)),
            r: Mat2::diag(c(1.0, 0.0), c(0.5, 0.0)),
            n: Mat2::diag(c(-0.5, 0.0), c(0.0, 0.0)),
        };
        let out = isoflow_general(&st, 2.0, &tight()).unwrap();
        // K̃ = tK grows linearly; K stays put.
        assert!((out.k() - st.k()).frobenius() < 1e-10);
        assert!((out.r - st.r).frobenius() < 1e-12);
    }

    #[test]
    fn general_flow_is_isomonodromic() {
        let st = GeneralJimboState {
            t: 1.0,
            ktilde: Mat2::real(0.4, 0.3, -0.2, 0.1),
            r: Mat2::real(-0.7, 0.25, 0.4, 0.2),
            n: n_matrix(),
        };
        let out = isoflow_general(&st, 2.5, &tight()).unwrap();
        let ev0 = st.k().eigenvalues();
        let ev1 = out.k().eigenvalues();
        for i in 0..2 {
            assert!((ev0[i] - ev1[i]).norm() < 1e-9);
        }
        let s = tight();
        let m0 = monodromy_matrix(&st.system(), &s).unwrap();
        let m1 = monodromy_matrix(&out.system(), &s).unwrap();
        assert!((m0.trace() - m1.trace()).norm() < 1e-7, "{} {}", m0.trace(), m1.trace());
    }

    #[test]
    fn chart_examples() {
        let st = normalized_from_chart(0.0, 0.7, 1.0, 2.0).unwrap();
        assert!(st.is_josephson(1e-15));
        for (g, r, l, t) in [(0.3, 0.5, 1.0, 1.5), (-1.2, 2.0, 2.0, 0.7), (4.0, 0.1, -0.5, 3.0)] {
            let st = normalized_from_chart(g, r, l, t).unwrap();
            assert!(st.structural_drift() < 1e-14);
            let (g2, r2, l2, t2) = st.chart().unwrap();
            assert!((g2 - g).abs() < 1e-12 * g.abs().max(1.0));
            assert_eq!((r2, l2, t2), (r, l, t));
        }
        assert!(normalized_from_chart(0.1, 0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn josephson_embedding_matches_torus_system() {
        let rp = ReducedParams { ell: 1.0, mu: 0.8, eta: 0.6 };
        let st = josephson_state(&rp).unwrap();
        let a = st.system();
        let b = crate::monodromy::josephson_system_unchecked(&rp);
        assert!((a.k2 - b.k2).frobenius() < 1e-15);
        assert!((a.k1 - b.k1).frobenius() < 1e-15);
        assert!((a.k0 - b.k0).frobenius() < 1e-15);
        assert_eq!(st.josephson_params(), rp);
    }

    #[test]
    fn normalized_flow_structure_and_transversality() {
        let st = josephson_state(&ReducedParams { ell: 1.0, mu: 2.0, eta: 2.0 }).unwrap();
        let traj = isoflow_normalized(&st, 5.0, &tight()).unwrap();
        assert!(traj.max_structural_drift < 1e-9);
        assert!(traj.samples.iter().all(|x| x.r12 == -x.r21 && x.r21 > 0.0));
        let mut dy = [0.0; 5];
        normalized_field(st.ell, st.tau, &st.pack(), &mut dy);
        assert!(dy[2].abs() > 0.1);
        // R₂₁ collapses near τ ≈ 5.36 for this launch.
        assert!(matches!(isoflow_normalized(&st, 6.0, &tight()), Err(Error::LeftChart(_))));
    }

    #[test]
    fn continued_flow_matches_chart_flow() {
        let st = josephson_state(&ReducedParams { ell: 1.0, mu: 2.0, eta: 2.0 }).unwrap();
        let s = tight();
        let a = isoflow_normalized(&st, 5.0, &s).unwrap();
        let b = isoflow_continued(&st, 5.0, &s).unwrap();
        let na = a.samples.last().unwrap().normalized().unwrap();
        let nb = b.samples.last().unwrap().normalized().unwrap();
        assert!((na.r21 - nb.r21).abs() < 1e-8, "{na:?} {nb:?}");
        for i in 0..2 {
            for j in 0..2 {
                assert!((na.k[i][j] - nb.k[i][j]).abs() < 1e-8);
            }
        }
        let c = isoflow_continued(&st, 6.0, &s).unwrap();
        assert_eq!(c.chart_exits, 1);
        assert!(c.max_structural_drift < 1e-9);
    }

    #[test]
    fn continued_flow_is_isomonodromic() {
        let st = normalized_from_chart(0.4, 0.9, 1.3, 1.2).unwrap();
        let s = tight();
        let t0 = monodromy_matrix(&st.system(), &s).unwrap().trace();
        let traj = isoflow_continued(&st, 1.2 * std::f64::consts::E, &s).unwrap();
        let t1 = monodromy_matrix(&traj.samples.last().unwrap().system(), &s).unwrap().trace();
        assert!((t0 - t1).norm() < 1e-6, "{t0} {t1}");
    }

    #[test]
    fn w_gauge_invariant_ratio() {
        let st = normalized_from_chart(0.4, 0.9, 1.3, 1.2).unwrap();
        let w = w_of(&st).unwrap();
        assert_eq!(w.signum(), st.k[0][1].signum());
        // Diagonal gauge diag(1, d) scales R₁₂ and K₁₂ alike.
        let d = 3.7;
        let r12 = -st.r21 * d;
        let k12 = st.k[0][1] * d;
        assert!((-r12 / (st.tau * k12) - w).abs() < 1e-14);
    }

    #[test]
    fn p3_constant_plug_in() {
        let samples: Vec<(f64, f64)> = (0..9).map(|j| (2.0 + 0.01 * j as f64, 1.0)).collect();
        let rep = p3_residual(&samples, 1.0).unwrap();
        assert_eq!(rep.evaluated, 5);
        assert!((rep.residuals[4].unwrap() - 2.0 / samples[4].0).abs() < 1e-12);
    }

    #[test]
    fn painleve_along_normalized_flow() {
        let st = normalized_from_chart(0.3, 0.8, 1.0, 1.0).unwrap();
        let traj = isoflow_normalized_sampled(&st, 1.6, 1e-3, &tight()).unwrap();
        let samples = traj.w_samples();
        assert_eq!(samples.len(), traj.samples.len());
        let rep = p3_residual(&samples, 1.0).unwrap();
        assert!(rep.evaluated > 100);
        assert!(rep.max_residual < 1e-4, "{}", rep.max_residual);
    }

    #[test]
    fn launch_is_pole_with_unit_residue() {
        let st = josephson_state(&ReducedParams { ell: 1.0, mu: 2.0, eta: 2.0 }).unwrap();
        let traj = isoflow_normalized(&st, 4.5, &tight()).unwrap();
        let found = detect_jos_crossing(&traj, &tight()).unwrap();
        assert!((found[0].tau0 - 4.0).abs() < 1e-14);
        assert!((found[0].residue.unwrap() - 1.0).abs() < 1e-3, "{:?}", found[0]);
    }

    #[test]
    fn continued_flow_reaches_next_pole() {
        let st = josephson_state(&ReducedParams { ell: 1.0, mu: 1.5, eta: 1.0 }).unwrap();
        let traj = isoflow_continued(&st, 7.0, &tight()).unwrap();
        let found = detect_jos_crossing(&traj, &tight()).unwrap();
        assert!(found.len() >= 2, "{found:?}");
        let next = &found[1];
        assert!((next.tau0 - 6.275).abs() < 1e-2, "{next:?}");
        assert!((next.residue.unwrap() - 1.0).abs() < 1e-2, "{next:?}");
    }

    #[test]
    fn no_crossing_when_k12_bounded_away() {
        let st = normalized_from_chart(0.3, 0.8, 1.0, 1.0).unwrap();
        let traj = isoflow_normalized(&st, 1.05, &tight()).unwrap();
        assert!(traj.samples.iter().all(|s| s.k[0][1].abs() > 1e-3));
        assert!(detect_jos_crossing(&traj, &tight()).unwrap().is_empty());
    }

    #[test]
    fn foliation_invariants() {
        let st = DynFoliationState::from_josephson(&ReducedParams { ell: 1.0, mu: 1.0, eta: 0.7 }).unwrap();
        let mut dy = [0.0; 3];
        foliation_field(st.ell, st.s, &st.pack(), &mut dy);
        assert_eq!(dy[0], st.a);
        let traj = dyn_foliation_flow(&st, 8.0, &tight()).unwrap();
        for x in &traj.states {
            assert!((x.ell_invariant() - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn return_map_round_trip() {
        let rp = ReducedParams { ell: 0.5, mu: 1.2, eta: 0.8 };
        let s = tight();
        let Some(fw) = josephson_return_map_reduced(&rp, Direction::Forward, &s).unwrap() else {
            panic!("no forward crossing");
        };
        let back = josephson_return_map_reduced(&fw, Direction::Backward, &s).unwrap().unwrap();
        assert!((back.mu - rp.mu).abs() < 1e-5 && (back.eta - rp.eta).abs() < 1e-5, "{fw:?} {back:?}");
    }
}
