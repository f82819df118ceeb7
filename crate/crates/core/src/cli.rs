//! Command-line front end. Exit codes: 0 success, 2 invalid parameters, 3 I/O, 1 numerical failure.

use crate::error::Error;
use crate::heun::{spectral_scan, write_spectral_csv};
use crate::integrate::OdeSettings;
use crate::isomono::{
    detect_jos_crossing, dyn_foliation_sampled, foliation_p3_report, isoflow_continued_sampled,
    isoflow_normalized_sampled, josephson_return_map, josephson_state, normalized_from_chart, write_foliation_csv,
    write_normalized_csv, Direction, DynFoliationState,
};
use crate::params::{to_reduced, PhysParams, ReducedParams};
use crate::poincare::{rotation_number_with, uniform_grid};
use crate::portrait::{
    asymptotic_error, build_portrait, default_scan_step, export_portrait, find_constrictions_step, portrait_json,
    ExportFormat, PortraitConfig,
};
use crate::slowfast::{
    classify_slow_curve, convexity_certificate, monotonicity_check, slow_curve_points, slow_curve_svg,
};
use clap::{Args, Parser, Subcommand};
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::PathBuf;

pub const EXIT_NUMERIC: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "josephson", version, about = "Phase-lock areas of the overdamped Josephson junction model")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalOpts {
    /// Relative tolerance of the ODE integrator.
    #[arg(long, global = true, default_value_t = OdeSettings::default().rel_tol)]
    pub rel_tol: f64,
    /// Absolute tolerance of the ODE integrator.
    #[arg(long, global = true, default_value_t = OdeSettings::default().abs_tol)]
    pub abs_tol: f64,
    /// Seed recorded in the output metadata.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for parallel sweeps; 0 lets the pool decide.
    #[arg(long, global = true, env = "JOSEPHSON_WORKERS", default_value_t = 0)]
    pub workers: usize,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Rotation number at (B, A, ω).
    Rotnum {
        #[arg(long = "B", allow_hyphen_values = true)]
        b: f64,
        #[arg(long = "A", allow_hyphen_values = true)]
        a: f64,
        #[arg(long)]
        omega: f64,
        #[arg(long)]
        json: bool,
    },
    /// Boundary curves, growth points and constrictions.
    Portrait {
        #[arg(long)]
        omega: f64,
        #[arg(long, default_value_t = 3)]
        rmax: u32,
        #[arg(long, default_value_t = 10.0)]
        amax: f64,
        /// Number of A samples per boundary curve.
        #[arg(long, default_value_t = 41)]
        samples: usize,
        #[arg(long)]
        svg: Option<PathBuf>,
        #[arg(long)]
        json: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Constrictions on the axis B = ℓω.
    Constrictions {
        #[arg(long)]
        ell: u32,
        #[arg(long)]
        omega: f64,
        #[arg(long, default_value_t = 0.0)]
        amin: f64,
        #[arg(long, default_value_t = 10.0)]
        amax: f64,
        /// Scan step in A; defaults to 0.01·max(1, ω).
        #[arg(long)]
        step: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Normalized isomonodromic trajectory as CSV with the Painlevé 3 residual of w.
    Isoflow {
        /// Start at the Josephson system (ℓ, μ, η).
        #[arg(long)]
        from_josephson: bool,
        #[arg(long, allow_hyphen_values = true)]
        ell: f64,
        #[arg(long, allow_hyphen_values = true)]
        mu: Option<f64>,
        #[arg(long)]
        eta: Option<f64>,
        /// Chart coordinates for a start away from the Josephson locus.
        #[arg(long, allow_hyphen_values = true)]
        g21: Option<f64>,
        #[arg(long)]
        r21: Option<f64>,
        #[arg(long)]
        tau: Option<f64>,
        /// Final time as a multiple of the initial one.
        #[arg(long, default_value_t = 2.0)]
        span: f64,
        #[arg(long, default_value_t = 1e-3)]
        step: f64,
        /// Stop with an error when the real normalized chart is left instead of continuing.
        #[arg(long)]
        strict_chart: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dynamical foliation trajectory from a Josephson point, or its return map.
    Foliation {
        #[arg(long, allow_hyphen_values = true)]
        ell: f64,
        #[arg(long)]
        mu: f64,
        #[arg(long)]
        eta: f64,
        #[arg(long, default_value_t = 2.0)]
        span: f64,
        #[arg(long, default_value_t = 1e-3)]
        step: f64,
        /// Print the next Josephson crossing instead of the trajectory.
        #[arg(long)]
        return_map: bool,
        #[arg(long)]
        backward: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Spectral curve of the conjugate Heun equation.
    Heun {
        #[arg(long)]
        spectral: bool,
        #[arg(long)]
        ell: u32,
        #[arg(long)]
        omega: f64,
        #[arg(long, default_value_t = 50.0)]
        mu_max: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Slow-curve class, convexity certificate and optional SVG.
    Slowcurve {
        #[arg(long = "B")]
        b: f64,
        #[arg(long = "A")]
        a: f64,
        #[arg(long, default_value_t = 400)]
        n: usize,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Compare the Poincaré maps of two members of the family A = 1 + (ℓ − α)ω.
    Monotonicity {
        #[arg(long)]
        ell: u32,
        #[arg(long)]
        alpha1: f64,
        #[arg(long)]
        alpha2: f64,
        #[arg(long, default_value_t = 0.05)]
        omega: f64,
        #[arg(long, default_value_t = 128)]
        grid: usize,
    },
    /// Distance of the boundary curves from their Bessel asymptotics.
    Asym {
        #[arg(long)]
        r: i64,
        #[arg(long)]
        omega: f64,
        #[arg(long = "A", num_args = 1.., required = true)]
        a: Vec<f64>,
    },
}

fn settings(g: &GlobalOpts) -> Result<OdeSettings, Error> {
    let s = OdeSettings::with_tol(g.rel_tol, g.abs_tol);
    s.validate()?;
    Ok(s)
}

fn header(g: &GlobalOpts, s: &OdeSettings, command: &str) -> String {
    format!(
        "# josephson {} command={command} rel_tol={:e} abs_tol={:e} seed={}\n",
        crate::VERSION,
        s.rel_tol,
        s.abs_tol,
        g.seed
    )
}

fn stdout(text: &str) -> Result<(), Error> {
    use std::io::Write;
    let mut lock = std::io::stdout().lock();
    match lock.write_all(text.as_bytes()).and_then(|_| lock.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<(), Error> {
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => stdout(text)?,
    }
    Ok(())
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Domain(_) | Error::Unsupported(_) => EXIT_INVALID,
        Error::Io(_) => EXIT_IO,
        Error::Csv(c) if matches!(c.kind(), csv::ErrorKind::Io(_)) => EXIT_IO,
        _ => EXIT_NUMERIC,
    }
}

/// Parse `args` (including the program name) and execute; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn execute(cli: &Cli) -> Result<(), Error> {
    let g = &cli.global;
    let s = settings(g)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(g.workers)
        .build()
        .map_err(|e| Error::Domain(format!("cannot start worker pool: {e}")))?;
    pool.install(|| dispatch(&cli.command, g, &s))
}

fn dispatch(cmd: &Command, g: &GlobalOpts, s: &OdeSettings) -> Result<(), Error> {
    match cmd {
        Command::Rotnum { b, a, omega, json } => {
            let p = PhysParams::new(*b, *a, *omega)?;
            let r = rotation_number_with(&p, s)?;
            if *json {
                let v = serde_json::json!({
                    "version": crate::VERSION,
                    "rel_tol": s.rel_tol,
                    "abs_tol": s.abs_tol,
                    "seed": g.seed,
                    "params": p,
                    "result": r,
                });
                stdout(&(serde_json::to_string_pretty(&v)? + "\n"))?;
            } else {
                let mut t = header(g, s, "rotnum");
                let _ = writeln!(t, "rho={}", r.rho);
                let _ = writeln!(t, "method={}", serde_json::to_value(r.method)?.as_str().unwrap_or_default());
                let _ = writeln!(t, "map_type={:?}", r.map_type);
                let _ = writeln!(t, "winding={}", r.winding);
                let _ = writeln!(t, "certified_error={:e}", r.certified_error);
                stdout(&t)?;
            }
        }
        Command::Portrait { omega, rmax, amax, samples, svg, json, csv } => {
            let cfg = PortraitConfig { omega: *omega, r_max: *rmax, a_max: *amax, a_samples: *samples, seed: g.seed };
            let p = build_portrait(&cfg, s)?;
            let mut wrote = false;
            for (path, fmt) in [(json, ExportFormat::Json), (csv, ExportFormat::Csv), (svg, ExportFormat::Svg)] {
                if let Some(path) = path {
                    export_portrait(&p, fmt, path)?;
                    wrote = true;
                }
            }
            if !wrote {
                stdout(&portrait_json(&p)?)?;
            }
        }
        Command::Constrictions { ell, omega, amin, amax, step, out } => {
            if *ell == 0 {
                return Err(Error::Domain("ell must be at least 1".into()));
            }
            let step = step.unwrap_or_else(|| default_scan_step(*omega));
            let found = find_constrictions_step(*ell, *omega, (*amin, *amax), step, s)?;
            let mut t = header(g, s, "constrictions");
            t.push_str("ell,omega,B,A,residual,defect,heun_score,conjugate_det,type\n");
            for c in &found {
                let kind = serde_json::to_value(c.kind)?;
                let _ = writeln!(
                    t,
                    "{},{},{},{},{:e},{:e},{},{},{}",
                    c.ell,
                    c.omega,
                    c.b,
                    c.a,
                    c.residual,
                    c.defect,
                    c.heun_score,
                    c.conjugate_det,
                    kind.as_str().unwrap_or_default()
                );
            }
            emit(out, &t)?;
        }
        Command::Isoflow { from_josephson, ell, mu, eta, g21, r21, tau, span, step, strict_chart, out } => {
            let start = if *from_josephson {
                let (Some(mu), Some(eta)) = (mu, eta) else {
                    return Err(Error::Domain("--from-josephson needs --mu and --eta".into()));
                };
                josephson_state(&ReducedParams::new(*ell, *mu, *eta)?)?
            } else {
                let (Some(g21), Some(r21), Some(tau)) = (g21, r21, tau) else {
                    return Err(Error::Domain("give --from-josephson or all of --g21 --r21 --tau".into()));
                };
                normalized_from_chart(*g21, *r21, *ell, *tau)?
            };
            if !(*span > 0.0) {
                return Err(Error::Domain("span must be positive".into()));
            }
            let tau1 = start.tau * span;
            let traj = if *strict_chart {
                isoflow_normalized_sampled(&start, tau1, *step, s)?
            } else {
                isoflow_continued_sampled(&start, tau1, *step, s)?
            };
            let p3 = traj.p3_report()?;
            let crossings = detect_jos_crossing(&traj, s)?;
            let mut t = header(g, s, "isoflow");
            let _ = writeln!(
                t,
                "# p3_max_residual={:e} p3_evaluated={} chart_exits={} max_structural_drift={:e}",
                p3.max_residual, p3.evaluated, traj.chart_exits, traj.max_structural_drift
            );
            for c in &crossings {
                let res = c.residue.map(|r| r.to_string()).unwrap_or_else(|| "double-root".into());
                let _ = writeln!(t, "# crossing tau0={} residue={res}", c.tau0);
            }
            let mut buf = Vec::new();
            write_normalized_csv(&mut buf, &traj, Some(&p3))?;
            t.push_str(&String::from_utf8_lossy(&buf));
            emit(out, &t)?;
        }
        Command::Foliation { ell, mu, eta, span, step, return_map, backward, out } => {
            let rp = ReducedParams::new(*ell, *mu, *eta)?;
            if *return_map {
                let dir = if *backward { Direction::Backward } else { Direction::Forward };
                let p = crate::params::from_reduced(&rp)?;
                let mut t = header(g, s, "foliation");
                match josephson_return_map(&p, dir, s)? {
                    Some(q) => {
                        let r = to_reduced(&q)?;
                        let _ = writeln!(
                            t,
                            "ell={} mu={} eta={} B={} A={} omega={}",
                            r.ell, r.mu, r.eta, q.b, q.a, q.omega
                        );
                    }
                    None => t.push_str("no crossing\n"),
                }
                emit(out, &t)?;
            } else {
                if !(*span > 0.0) {
                    return Err(Error::Domain("span must be positive".into()));
                }
                let start = DynFoliationState::from_josephson(&rp)?;
                let states = dyn_foliation_sampled(&start, start.s * span, *step, s)?;
                let p3 = foliation_p3_report(&states)?;
                let mut t = header(g, s, "foliation");
                let _ = writeln!(t, "# p3_max_residual={:e} p3_evaluated={}", p3.max_residual, p3.evaluated);
                let mut buf = Vec::new();
                write_foliation_csv(&mut buf, &states, Some(&p3))?;
                t.push_str(&String::from_utf8_lossy(&buf));
                emit(out, &t)?;
            }
        }
        Command::Heun { spectral, ell, omega, mu_max, out } => {
            if !spectral {
                return Err(Error::Unsupported("only --spectral is available".into()));
            }
            if *ell == 0 || !(*omega > 0.0) {
                return Err(Error::Domain("need ell ≥ 1 and omega > 0".into()));
            }
            let roots = spectral_scan(*ell, *omega, *mu_max)?;
            let mut t = header(g, s, "heun");
            if let Some(top) = roots.iter().map(|r| r.amplitude(*omega)).reduce(f64::max) {
                let _ = writeln!(t, "# A(P_{ell})={top}");
            }
            let mut buf = Vec::new();
            write_spectral_csv(&mut buf, *omega, &roots)?;
            t.push_str(&String::from_utf8_lossy(&buf));
            emit(out, &t)?;
        }
        Command::Slowcurve { b, a, n, svg } => {
            let class = classify_slow_curve(*b, *a)?;
            let cert = convexity_certificate(*b, *a)?;
            let mut t = header(g, s, "slowcurve");
            let _ = writeln!(t, "label={:?}", class.label);
            let _ = writeln!(t, "convexity_certificate={cert}");
            stdout(&t)?;
            if let Some(path) = svg {
                let pts = slow_curve_points(*b, *a, *n)?;
                std::fs::write(path, slow_curve_svg(&[(class, pts)]))?;
            }
        }
        Command::Monotonicity { ell, alpha1, alpha2, omega, grid } => {
            let rep = monotonicity_check(*ell, *alpha1, *alpha2, *omega, &uniform_grid(*grid), s)?;
            let mut t = header(g, s, "monotonicity");
            let _ = writeln!(t, "holds={}", rep.holds);
            let _ = writeln!(t, "margin={:e}", rep.margin);
            stdout(&t)?;
        }
        Command::Asym { r, omega, a } => {
            let mut t = header(g, s, "asym");
            t.push_str("r,omega,A,e0,epi\n");
            for &amp in a {
                let (e0, epi) = asymptotic_error(*r, *omega, amp, s)?;
                let _ = writeln!(t, "{r},{omega},{amp},{e0:e},{epi:e}");
            }
            stdout(&t)?;
        }
    }
    Ok(())
}
