//! Phase-lock area boundaries, growth points, constrictions, Bessel asymptotics and export.

use crate::error::{Error, Result};
use crate::heun::{conjugate_poly_determinant, entire_solution_score};
use crate::integrate::OdeSettings;
use crate::linalg::Mat2;
use crate::monodromy::{josephson_system_unchecked, monodromy_matrix, triviality_defect};
use crate::params::{to_heun, to_reduced, PhysParams, ReducedParams};
use crate::poincare::{
    displacement_sup_with, poincare_map_with, rotation_number_reduced, uniform_grid, MapType, RotationResult,
};
use crate::roots::{bisect_predicate, brent, golden_section};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

pub const SCHEMA: &str = "portrait-v1";
/// `‖M − Id‖_F` below this is a trivial monodromy.
pub const TRIVIALITY_TOL: f64 = 1e-7;
/// Displacement sup on the 64-grid below this confirms a constriction.
pub const DISPLACEMENT_TOL: f64 = 1e-6;
pub const HEUN_TERMS: usize = 80;
pub const PROBE_DELTAS: [f64; 2] = [1e-2, 1e-3];

/// Fixed point that defines a boundary curve: `P(α) = α + 2πr`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Flavor {
    #[serde(rename = "0")]
    Zero,
    #[serde(rename = "pi")]
    Pi,
}

impl Flavor {
    pub fn angle(self) -> f64 {
        match self {
            Flavor::Zero => 0.0,
            Flavor::Pi => PI,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Flavor::Zero => "0",
            Flavor::Pi => "pi",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPoint {
    pub r: i64,
    pub alpha: Flavor,
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "B")]
    pub b: f64,
    pub omega: f64,
}

fn reduced(b: f64, a: f64, omega: f64) -> Result<ReducedParams> {
    to_reduced(&PhysParams::new(b, a, omega)?)
}

/// `P_B(α) − α − 2πr`, increasing in `B`.
pub fn boundary_defect(r: i64, alpha: Flavor, b: f64, a: f64, omega: f64, s: &OdeSettings) -> Result<f64> {
    let rp = reduced(b, a, omega)?;
    let x = alpha.angle();
    Ok(poincare_map_with(&rp, x, s)? - x - 2.0 * PI * r as f64)
}

/// Abscissa `B = G_{r,α}(A)` of a boundary curve. Without a bracket, `[rω − 1, rω + 1]` is
/// used: the mean drift over a period lies within `(B ± 1)/ω`.
pub fn boundary_point(
    r: i64,
    alpha: Flavor,
    a: f64,
    omega: f64,
    bracket: Option<(f64, f64)>,
    s: &OdeSettings,
) -> Result<BoundaryPoint> {
    let (lo, hi) = bracket.unwrap_or((r as f64 * omega - 1.0 - 1e-9, r as f64 * omega + 1.0 + 1e-9));
    let b = brent(|b| boundary_defect(r, alpha, b, a, omega, s), lo, hi, 1e-13, 1e-11)?;
    Ok(BoundaryPoint { r, alpha, a, b, omega })
}

/// `sign(r)·√(r²ω²+1)`.
pub fn growth_point(r: i64, omega: f64) -> Result<f64> {
    if r == 0 {
        return Err(Error::Unsupported("growth point of the zero-rotation area".into()));
    }
    if !(omega > 0.0) || !omega.is_finite() {
        return Err(Error::Domain(format!("omega must be positive, got {omega}")));
    }
    let rf = r as f64;
    Ok(rf.signum() * (rf * rf * omega * omega + 1.0).sqrt())
}

/// Whether `ρ ≥ r`; near `ρ = r` the sign of the displacement at 0 decides.
pub fn rho_at_least(r: i64, b: f64, a: f64, omega: f64, s: &OdeSettings) -> Result<bool> {
    let rp = reduced(b, a, omega)?;
    let res = rotation_number_reduced(&rp, s)?;
    let rf = r as f64;
    if res.map_type == MapType::Hyperbolic || (res.rho - rf).abs() > 1e3 * res.certified_error {
        return Ok(res.rho >= rf);
    }
    Ok(poincare_map_with(&rp, 0.0, s)? - 2.0 * PI * rf >= 0.0)
}

/// Growth point located by bisection on `ρ ≥ r` at `A = 0`.
pub fn locate_growth_point(r: i64, omega: f64, xtol: f64, s: &OdeSettings) -> Result<f64> {
    if r == 0 {
        return Err(Error::Unsupported("growth point of the zero-rotation area".into()));
    }
    let rf = r.unsigned_abs() as f64;
    let b =
        bisect_predicate(|b| rho_at_least(r.abs(), b, 0.0, omega, s), rf * omega - 1.0 - 1e-6, rf * omega + 1.0, xtol)?;
    Ok(b * (r as f64).signum())
}

pub fn rotation_at(b: f64, a: f64, omega: f64, s: &OdeSettings) -> Result<RotationResult> {
    rotation_number_reduced(&reduced(b, a, omega)?, s)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstrictionType {
    Positive,
    Negative,
    Neutral,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constriction {
    pub ell: u32,
    #[serde(rename = "A")]
    pub a: f64,
    pub omega: f64,
    #[serde(rename = "B")]
    pub b: f64,
    /// Displacement sup on the 64-point grid.
    pub residual: f64,
    /// `‖M − Id‖_F`.
    pub defect: f64,
    pub heun_score: f64,
    pub conjugate_det: f64,
    #[serde(rename = "type")]
    pub kind: ConstrictionType,
}

impl Constriction {
    pub fn validated(&self) -> bool {
        self.defect < TRIVIALITY_TOL
            && self.residual < DISPLACEMENT_TOL
            && self.heun_score < crate::heun::ENTIRE_THRESHOLD
            && self.conjugate_det != 0.0
    }
}

fn axis_monodromy(ell: u32, a: f64, omega: f64, s: &OdeSettings) -> Result<Mat2> {
    let rp = reduced(ell as f64 * omega, a, omega)?;
    monodromy_matrix(&josephson_system_unchecked(&rp), s)
}

/// `D(A) = ‖M − Id‖_F` on the axis `B = ℓω`.
pub fn axis_defect(ell: u32, a: f64, omega: f64, s: &OdeSettings) -> Result<f64> {
    Ok(triviality_defect(&axis_monodromy(ell, a, omega, s)?))
}

pub fn default_scan_step(omega: f64) -> f64 {
    0.01 * omega.max(1.0)
}

/// Constrictions on `B = ℓω` with `A` in `a_range`: grid minima of `D(A)` refined by golden
/// section, then cross-checked against the Poincaré displacement and the Heun series.
pub fn find_constrictions(ell: u32, omega: f64, a_range: (f64, f64), s: &OdeSettings) -> Result<Vec<Constriction>> {
    find_constrictions_step(ell, omega, a_range, default_scan_step(omega), s)
}

pub fn find_constrictions_step(
    ell: u32,
    omega: f64,
    a_range: (f64, f64),
    step: f64,
    s: &OdeSettings,
) -> Result<Vec<Constriction>> {
    if !(omega > 0.0) || !omega.is_finite() {
        return Err(Error::Domain(format!("omega must be positive, got {omega}")));
    }
    let (lo, hi) = a_range;
    if !(hi > lo) || !(step > 0.0) {
        return Err(Error::Domain(format!("bad scan range ({lo}, {hi}) with step {step}")));
    }
    let n = ((hi - lo) / step).ceil() as usize;
    let grid: Vec<f64> = (0..=n).map(|j| (lo + step * j as f64).min(hi)).filter(|&a| a > 0.0).collect();
    let d: Vec<f64> = grid.par_iter().map(|&a| axis_defect(ell, a, omega, s)).collect::<Result<_>>()?;
    let candidates: Vec<usize> =
        (1..grid.len().saturating_sub(1)).filter(|&j| d[j] <= d[j - 1] && d[j] < d[j + 1]).collect();
    let found: Vec<Option<Constriction>> = candidates
        .par_iter()
        .map(|&j| {
            let (a, defect) = golden_section(|a| axis_defect(ell, a, omega, s), grid[j - 1], grid[j + 1], 1e-13, 0.0)?;
            if defect >= TRIVIALITY_TOL {
                return Ok(None);
            }
            Ok(Some(certify(ell, a, omega, defect, s)?))
        })
        .collect::<Result<_>>()?;
    Ok(found.into_iter().flatten().collect())
}

fn certify(ell: u32, a: f64, omega: f64, defect: f64, s: &OdeSettings) -> Result<Constriction> {
    let b = ell as f64 * omega;
    let p = PhysParams::new(b, a, omega)?;
    let rp = to_reduced(&p)?;
    let residual = displacement_sup_with(&rp, ell as i64, &uniform_grid(64), s)?;
    let hp = to_heun(&p)?;
    let heun_score = entire_solution_score(&hp, HEUN_TERMS)?;
    let conjugate_det = conjugate_poly_determinant(ell, hp.lambda, hp.mu);
    let mut c =
        Constriction { ell, a, omega, b, residual, defect, heun_score, conjugate_det, kind: ConstrictionType::Neutral };
    c.kind = constriction_type(&c, &PROBE_DELTAS, s)?;
    Ok(c)
}

fn interior_with_rho(b: f64, a: f64, omega: f64, ell: u32, s: &OdeSettings) -> Result<bool> {
    let r = rotation_at(b, a, omega, s)?;
    Ok(r.map_type == MapType::Hyperbolic && r.rho == ell as f64)
}

/// Probe `(ℓω, A ± δ)` for decreasing `δ`: positive once both probes are hyperbolic with `ρ = ℓ`.
pub fn constriction_type(c: &Constriction, deltas: &[f64], s: &OdeSettings) -> Result<ConstrictionType> {
    let mut last = (false, false);
    for &delta in deltas {
        let up = interior_with_rho(c.b, c.a + delta, c.omega, c.ell, s)?;
        let down = interior_with_rho(c.b, c.a - delta, c.omega, c.ell, s)?;
        if up && down {
            return Ok(ConstrictionType::Positive);
        }
        last = (up, down);
    }
    Ok(match last {
        (false, false) => ConstrictionType::Negative,
        _ => ConstrictionType::Neutral,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GhostReport {
    pub ell: u32,
    pub omega: f64,
    pub constrictions: Vec<Constriction>,
    pub violations: Vec<String>,
}

/// Every constriction on the axis must have `ρ = ℓ` and positive type.
pub fn ghost_scan(ell: u32, omega: f64, a_range: (f64, f64), s: &OdeSettings) -> Result<GhostReport> {
    let constrictions = find_constrictions(ell, omega, a_range, s)?;
    let mut violations = Vec::new();
    for c in &constrictions {
        let r = rotation_at(c.b, c.a, omega, s)?;
        if (r.rho - ell as f64).abs() > r.certified_error.max(1e-6) {
            violations.push(format!("A={}: rho={} differs from ell={ell}", c.a, r.rho));
        }
        if c.kind != ConstrictionType::Positive {
            violations.push(format!("A={}: type {:?}", c.a, c.kind));
        }
    }
    Ok(GhostReport { ell, omega, constrictions, violations })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignResult {
    #[serde(rename = "B")]
    pub b: f64,
    #[serde(rename = "A")]
    pub a: f64,
    pub residual: f64,
    pub iterations: usize,
}

/// Residual that vanishes iff the monodromy is a scalar matrix.
fn scalar_residual(b: f64, a: f64, omega: f64, s: &OdeSettings) -> Result<[f64; 6]> {
    let rp = reduced(b, a, omega)?;
    let m = monodromy_matrix(&josephson_system_unchecked(&rp), s)?;
    let x = m.get(0, 1);
    let y = m.get(1, 0);
    let z = m.get(0, 0) - m.get(1, 1);
    Ok([x.re, x.im, y.re, y.im, z.re, z.im])
}

/// Unconstrained Levenberg–Marquardt search in `(B, A)` for a scalar monodromy.
pub fn align_search(omega: f64, seed: (f64, f64), s: &OdeSettings) -> Result<AlignResult> {
    let norm = |r: &[f64; 6]| r.iter().map(|v| v * v).sum::<f64>().sqrt();
    let (mut b, mut a) = seed;
    let mut r = scalar_residual(b, a, omega, s)?;
    let mut lambda = 1e-3;
    let h = 1e-6;
    for it in 0..200 {
        if norm(&r) < 1e-11 {
            return Ok(AlignResult { b, a, residual: norm(&r), iterations: it });
        }
        let rb = [scalar_residual(b + h, a, omega, s)?, scalar_residual(b - h, a, omega, s)?];
        let ra = [scalar_residual(b, a + h, omega, s)?, scalar_residual(b, a - h, omega, s)?];
        let jb: Vec<f64> = (0..6).map(|i| (rb[0][i] - rb[1][i]) / (2.0 * h)).collect();
        let ja: Vec<f64> = (0..6).map(|i| (ra[0][i] - ra[1][i]) / (2.0 * h)).collect();
        let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(x, y)| x * y).sum::<f64>();
        let (g11, g12, g22) = (dot(&jb, &jb), dot(&jb, &ja), dot(&ja, &ja));
        let (v1, v2) = (-dot(&jb, &r), -dot(&ja, &r));
        let mut accepted = false;
        for _ in 0..30 {
            let (m11, m22) = (g11 * (1.0 + lambda), g22 * (1.0 + lambda));
            let det = m11 * m22 - g12 * g12;
            let (db, da) = ((v1 * m22 - g12 * v2) / det, (m11 * v2 - g12 * v1) / det);
            let cand = (b + db, a + da);
            if let Ok(rn) = scalar_residual(cand.0, cand.1, omega, s) {
                if norm(&rn) < norm(&r) {
                    (b, a) = cand;
                    r = rn;
                    lambda = (lambda * 0.3).max(1e-12);
                    accepted = true;
                    if db.abs().max(da.abs()) < 1e-14 {
                        return Ok(AlignResult { b, a, residual: norm(&r), iterations: it + 1 });
                    }
                    break;
                }
            }
            lambda *= 10.0;
        }
        if !accepted {
            return Ok(AlignResult { b, a, residual: norm(&r), iterations: it + 1 });
        }
    }
    Ok(AlignResult { b, a, residual: norm(&r), iterations: 200 })
}

/// Bessel function of the first kind `J_n(x)`.
pub fn bessel_j(n: i32, x: f64) -> f64 {
    if n < 0 {
        let v = bessel_j(-n, x);
        return if n % 2 == 0 { v } else { -v };
    }
    if x < 0.0 {
        let v = bessel_j(n, -x);
        return if n % 2 == 0 { v } else { -v };
    }
    if x == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    if x <= 12.0 {
        bessel_series(n, x)
    } else {
        bessel_miller(n, x)
    }
}

fn bessel_series(n: i32, x: f64) -> f64 {
    let h = 0.5 * x;
    let mut term = 1.0;
    for k in 1..=n {
        term *= h / k as f64;
    }
    let mut sum = term;
    let mut k = 0.0;
    loop {
        k += 1.0;
        term *= -h * h / (k * (k + n as f64));
        sum += term;
        if term.abs() < 1e-17 * sum.abs() && k > h {
            break;
        }
    }
    sum
}

fn bessel_miller(n: i32, x: f64) -> f64 {
    let top = (n as f64).max(x);
    let mut m = (top + 30.0 + (50.0 * top).sqrt()) as usize;
    m += m % 2;
    let (mut jp, mut j) = (0.0f64, 1e-300f64);
    let mut norm = 0.0;
    let mut want = 0.0;
    for k in (1..=m).rev() {
        let jm = 2.0 * k as f64 / x * j - jp;
        jp = j;
        j = jm;
        let idx = k - 1;
        if idx == n as usize {
            want = j;
        }
        if idx > 0 && idx % 2 == 0 {
            norm += 2.0 * j;
        }
        if j.abs() > 1e250 {
            jp *= 1e-250;
            j *= 1e-250;
            norm *= 1e-250;
            want *= 1e-250;
        }
    }
    norm += j;
    want / norm
}

/// Bessel asymptotics errors `(|G_{r,0} − rω + J_r(−A/ω)|, |G_{r,π} − rω − J_r(−A/ω)|)`.
pub fn asymptotic_error(r: i64, omega: f64, a: f64, s: &OdeSettings) -> Result<(f64, f64)> {
    let rw = r as f64 * omega;
    let j = bessel_j(r as i32, -a / omega);
    let g0 = boundary_point(r, Flavor::Zero, a, omega, None, s)?.b;
    let gp = boundary_point(r, Flavor::Pi, a, omega, None, s)?.b;
    Ok(((g0 - rw + j).abs(), (gp - rw - j).abs()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryCurve {
    pub r: i64,
    pub alpha: Flavor,
    /// `(A, B)` pairs for `A ≥ 0`; the curve is symmetric under `A → −A`.
    pub points: Vec<[f64; 2]>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthPoint {
    pub r: i64,
    #[serde(rename = "B")]
    pub b: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PortraitMetadata {
    pub version: String,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub seed: u64,
    pub r_max: u32,
    pub a_max: f64,
    pub a_samples: usize,
    pub scan_step: f64,
}

/// Areas with `r ≥ 0`; `L_{−r}` is the mirror image of `L_r` in the `A` axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Portrait {
    pub schema: String,
    pub omega: f64,
    pub metadata: PortraitMetadata,
    pub curves: Vec<BoundaryCurve>,
    pub growth_points: Vec<GrowthPoint>,
    pub constrictions: Vec<Constriction>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PortraitConfig {
    pub omega: f64,
    pub r_max: u32,
    pub a_max: f64,
    pub a_samples: usize,
    pub seed: u64,
}

/// Boundary curves on an `A` grid, growth points and constrictions. Output order is fixed
/// regardless of the worker count.
pub fn build_portrait(cfg: &PortraitConfig, s: &OdeSettings) -> Result<Portrait> {
    if !(cfg.omega > 0.0) || !cfg.omega.is_finite() {
        return Err(Error::Domain(format!("omega must be positive, got {}", cfg.omega)));
    }
    if !(cfg.a_max > 0.0) || cfg.a_samples < 2 {
        return Err(Error::Domain("a_max must be positive and a_samples at least 2".into()));
    }
    let amps: Vec<f64> = (0..cfg.a_samples).map(|j| cfg.a_max * j as f64 / (cfg.a_samples - 1) as f64).collect();
    let mut jobs = Vec::new();
    for r in 0..=cfg.r_max as i64 {
        for alpha in [Flavor::Zero, Flavor::Pi] {
            jobs.push((r, alpha));
        }
    }
    let curves: Vec<BoundaryCurve> = jobs
        .par_iter()
        .map(|&(r, alpha)| {
            let points = amps
                .par_iter()
                .map(|&a| Ok([a, boundary_point(r, alpha, a, cfg.omega, None, s)?.b]))
                .collect::<Result<Vec<_>>>()?;
            Ok(BoundaryCurve { r, alpha, points })
        })
        .collect::<Result<_>>()?;
    let growth_points = (1..=cfg.r_max as i64)
        .map(|r| Ok(GrowthPoint { r, b: growth_point(r, cfg.omega)? }))
        .collect::<Result<Vec<_>>>()?;
    let mut constrictions = Vec::new();
    for ell in 1..=cfg.r_max {
        constrictions.extend(find_constrictions(ell, cfg.omega, (0.0, cfg.a_max), s)?);
    }
    Ok(Portrait {
        schema: SCHEMA.into(),
        omega: cfg.omega,
        metadata: PortraitMetadata {
            version: crate::VERSION.into(),
            rel_tol: s.rel_tol,
            abs_tol: s.abs_tol,
            seed: cfg.seed,
            r_max: cfg.r_max,
            a_max: cfg.a_max,
            a_samples: cfg.a_samples,
            scan_step: default_scan_step(cfg.omega),
        },
        curves,
        growth_points,
        constrictions,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Json,
    Csv,
    Svg,
}

pub fn portrait_json(p: &Portrait) -> Result<String> {
    let mut s = serde_json::to_string_pretty(p)?;
    s.push('\n');
    Ok(s)
}

/// One-line `# key=value` header shared by the CSV and SVG exports.
pub fn metadata_line(p: &Portrait) -> String {
    let m = &p.metadata;
    format!(
        "schema={} version={} omega={} rel_tol={:e} abs_tol={:e} seed={} r_max={} a_max={} a_samples={}",
        p.schema, m.version, p.omega, m.rel_tol, m.abs_tol, m.seed, m.r_max, m.a_max, m.a_samples
    )
}

/// CSV rows `r,alpha,A,B` after a `#` metadata line.
pub fn write_portrait_csv<W: Write>(mut w: W, p: &Portrait) -> Result<()> {
    writeln!(w, "# {}", metadata_line(p))?;
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["r", "alpha", "A", "B"])?;
    for c in &p.curves {
        for pt in &c.points {
            wr.write_record([c.r.to_string(), c.alpha.label().to_string(), pt[0].to_string(), pt[1].to_string()])?;
        }
    }
    wr.flush()?;
    Ok(())
}

/// 1000×1000 SVG, `B` horizontal and `A` vertical, with mirrored copies for `A < 0` and `r < 0`.
pub fn portrait_svg(p: &Portrait) -> String {
    let b_max = p.metadata.r_max as f64 * p.omega + 1.5;
    let a_max = p.metadata.a_max;
    let px = |b: f64| 500.0 + 480.0 * b / b_max;
    let py = |a: f64| 500.0 - 480.0 * a / a_max;
    let mut out = String::new();
    out.push_str(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"1000\" height=\"1000\" viewBox=\"0 0 1000 1000\">\n",
    );
    let _ = writeln!(out, "<!-- {} -->", metadata_line(p));
    out.push_str("<rect width=\"1000\" height=\"1000\" fill=\"white\"/>\n");
    let _ = writeln!(out, "<line x1=\"20\" y1=\"500\" x2=\"980\" y2=\"500\" stroke=\"#888\"/>");
    let _ = writeln!(out, "<line x1=\"500\" y1=\"20\" x2=\"500\" y2=\"980\" stroke=\"#888\"/>");
    for c in &p.curves {
        let color = if c.alpha == Flavor::Zero { "#1f4e9c" } else { "#b03020" };
        let signs: &[f64] = if c.r == 0 { &[1.0] } else { &[1.0, -1.0] };
        for &sb in signs {
            for sa in [1.0, -1.0] {
                let pts: Vec<String> =
                    c.points.iter().map(|pt| format!("{:.2},{:.2}", px(sb * pt[1]), py(sa * pt[0]))).collect();
                let _ = writeln!(
                    out,
                    "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.2\" points=\"{}\"/>",
                    pts.join(" ")
                );
            }
        }
    }
    for c in &p.constrictions {
        for sb in [1.0, -1.0] {
            for sa in [1.0, -1.0] {
                let _ = writeln!(
                    out,
                    "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"black\"/>",
                    px(sb * c.b),
                    py(sa * c.a)
                );
            }
        }
    }
    let _ = writeln!(out, "<text x=\"960\" y=\"490\" font-size=\"16\">B</text>");
    let _ = writeln!(out, "<text x=\"510\" y=\"36\" font-size=\"16\">A</text>");
    out.push_str("</svg>\n");
    out
}

pub fn export_portrait(p: &Portrait, format: ExportFormat, path: &Path) -> Result<()> {
    match format {
        ExportFormat::Json => std::fs::write(path, portrait_json(p)?)?,
        ExportFormat::Svg => std::fs::write(path, portrait_svg(p))?,
        ExportFormat::Csv => write_portrait_csv(std::fs::File::create(path)?, p)?,
    }
    Ok(())
}

pub fn load_portrait(path: &Path) -> Result<Portrait> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}
