//! Command-line front end: `sipsdp solve|boundary|check|homogenize|export-sdpa`.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::preprocess::{self, DEFAULT_GRID_DENSITY};
use crate::problem::ProblemFile;
use crate::relax::{self, Mode, OrderPair, SipProblem, ThetaForm};
use crate::sdp::{sdpa, Settings};
use crate::sos;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_SOLVER: i32 = 2;
pub const EXIT_PRECONDITION: i32 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "sipsdp",
    version,
    about = "SDP relaxations for convex semi-infinite polynomial programs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Problem file (JSON).
    pub file: PathBuf,
    /// Relaxation mode; overrides the file.
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Grid points per index dimension.
    #[arg(long)]
    pub grid: Option<usize>,
    /// Solver setting, e.g. `--tol feas_tol=1e-9`. Repeatable.
    #[arg(long = "tol", value_name = "KEY=VAL")]
    pub tol: Vec<String>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum ModeArg {
    Auto,
    General,
    Sosconvex,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Auto => Mode::Auto,
            ModeArg::General => Mode::General,
            ModeArg::Sosconvex => Mode::SosConvex,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum ThetaArg {
    Single,
    Full,
}

impl From<ThetaArg> for ThetaForm {
    fn from(t: ThetaArg) -> Self {
        match t {
            ThetaArg::Single => ThetaForm::Single,
            ThetaArg::Full => ThetaForm::Full,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum Which {
    Dsdp,
    Psdp,
    SosconvexDsdp,
    SosconvexPsdp,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run the relaxation hierarchy and print a JSON report.
    Solve {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        r: Option<u32>,
        #[arg(long)]
        t: Option<u32>,
        /// Orders as `r1:t1,r2:t2,...`.
        #[arg(long)]
        schedule: Option<String>,
        /// Omit timings so output is reproducible byte for byte.
        #[arg(long)]
        no_timing: bool,
    },
    /// Sample the boundary of `Lambda_{r,t}` as CSV (two x variables only).
    Boundary {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        r: u32,
        #[arg(long)]
        t: u32,
        /// Number of equiangular directions.
        #[arg(short = 'N', default_value_t = 64)]
        n: usize,
        #[arg(long, value_enum, default_value = "single")]
        theta: ThetaArg,
    },
    /// Certificate checks on the problem data.
    Check {
        #[command(flatten)]
        common: Common,
        #[command(subcommand)]
        what: CheckCmd,
    },
    /// Print the compactified (homogenized) problem file.
    Homogenize {
        #[command(flatten)]
        common: Common,
    },
    /// Build a relaxation and write it in SDPA sparse format.
    ExportSdpa {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        which: Which,
        #[arg(long, default_value_t = 1)]
        r: u32,
        #[arg(long)]
        t: u32,
        /// Output path; stdout when absent.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

#[derive(Subcommand, Debug)]
pub enum CheckCmd {
    /// s.o.s-convexity of `f` and of `-p(., y)` on sampled index points.
    SosConvex,
    /// Grid Slater margin at a point, e.g. `slater -0.5,0`.
    Slater {
        #[arg(allow_hyphen_values = true)]
        point: String,
        /// Also bisect a certified lower bound with this order.
        #[arg(long)]
        certify: Option<u32>,
    },
    /// `eps*_r` of the objective on `[-1, 1]^m`.
    EpsStar { r: u32 },
}

/// Process exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Precondition(_) | Error::OrderTooSmall { .. } => EXIT_PRECONDITION,
        Error::Solver(_) | Error::Extraction(_) | Error::EmptyGrid => EXIT_SOLVER,
        _ => EXIT_USAGE,
    }
}

struct Loaded {
    file: ProblemFile,
    prob: SipProblem,
    settings: Settings,
    grid: usize,
}

fn load(c: &Common) -> Result<Loaded> {
    let file = ProblemFile::load(&c.file)?;
    let mut prob = file.problem()?;
    if let Some(m) = c.mode {
        prob.mode = m.into();
    }
    let mut settings = file.settings()?;
    for kv in &c.tol {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::InvalidArgument(format!("--tol expects KEY=VAL, got {kv:?}")))?;
        settings.set(k.trim(), v.trim())?;
    }
    let grid = c
        .grid
        .or(file.options.grid_density)
        .unwrap_or(DEFAULT_GRID_DENSITY);
    Ok(Loaded {
        file,
        prob,
        settings,
        grid,
    })
}

pub fn parse_schedule(s: &str) -> Result<Vec<OrderPair>> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            let (r, t) = p.split_once(':').ok_or_else(|| {
                Error::InvalidArgument(format!("schedule entry {p:?} is not r:t"))
            })?;
            let num = |v: &str| {
                v.trim()
                    .parse::<u32>()
                    .map_err(|e| Error::InvalidArgument(format!("schedule entry {p:?}: {e}")))
            };
            Ok(OrderPair {
                r: num(r)?,
                t: num(t)?,
            })
        })
        .collect()
}

pub fn parse_point(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|e| Error::InvalidArgument(format!("point coordinate {v:?}: {e}")))
        })
        .collect()
}

fn schedule_for(
    prob: &SipProblem,
    sosconvex: bool,
    r: Option<u32>,
    t: Option<u32>,
    sched: Option<&str>,
    from_file: Option<Vec<OrderPair>>,
) -> Result<Vec<OrderPair>> {
    if let Some(s) = sched {
        return parse_schedule(s);
    }
    let d = prob.degrees();
    let r_min = d.d_p.div_ceil(2).max(1);
    let t_min = d.d_k.max(1);
    Ok(match (r, t) {
        (Some(r), Some(t)) => vec![OrderPair { r, t }],
        (Some(r), None) => vec![OrderPair { r, t: r.max(t_min) }],
        (None, Some(t)) => vec![OrderPair { r: t.max(r_min), t }],
        (None, None) => from_file.unwrap_or_else(|| relax::default_schedule(prob, sosconvex)),
    })
}

fn json<T: Serialize>(out: &mut dyn Write, v: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut *out, v)?;
    writeln!(out)?;
    Ok(())
}

/// CSV float with 17 significant digits.
pub fn csv_float(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Serialize)]
struct SlaterReport {
    point: Vec<f64>,
    #[serde(flatten)]
    margin: preprocess::SlaterMargin,
    #[serde(skip_serializing_if = "Option::is_none")]
    certified_lower_bound: Option<f64>,
    note: &'static str,
}

#[derive(Serialize)]
struct EpsStarReport {
    r: u32,
    eps_star: f64,
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> Result<i32> {
    match cli.command {
        Command::Solve {
            common,
            r,
            t,
            schedule,
            no_timing,
        } => {
            let l = load(&common)?;
            let mode = relax::resolve_mode(&l.prob, l.grid)?;
            let sched = schedule_for(
                &l.prob,
                mode.sosconvex,
                r,
                t,
                schedule.as_deref(),
                l.file.schedule(),
            )?;
            let opts = relax::HierarchyOptions {
                settings: l.settings,
                timing: !no_timing,
                grid_density: l.grid,
                refine_active: true,
            };
            let report = relax::run_hierarchy_with_mode(&l.prob, &sched, mode, &opts)?;
            json(out, &report)?;
            Ok(if report.all_optimal() {
                EXIT_OK
            } else {
                EXIT_SOLVER
            })
        }
        Command::Boundary {
            common,
            r,
            t,
            n,
            theta,
        } => {
            let l = load(&common)?;
            if l.prob.m() != 2 {
                return Err(Error::InvalidArgument(format!(
                    "boundary needs exactly 2 x variables, the file has {}",
                    l.prob.m()
                )));
            }
            writeln!(out, "angle,x1,x2,support_value")?;
            for k in 0..n {
                let angle = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                let a = [angle.cos(), angle.sin()];
                let s = relax::support_value_with(&l.prob, &a, r, t, theta.into(), &l.settings)?;
                writeln!(
                    out,
                    "{},{},{},{}",
                    csv_float(angle),
                    csv_float(s.point[0]),
                    csv_float(s.point[1]),
                    csv_float(s.value)
                )?;
            }
            Ok(EXIT_OK)
        }
        Command::Check { common, what } => {
            let l = load(&common)?;
            match what {
                CheckCmd::SosConvex => {
                    let mut prob = l.prob.clone();
                    prob.mode = Mode::Auto;
                    json(out, &relax::resolve_mode(&prob, l.grid)?)?;
                }
                CheckCmd::Slater { point, certify } => {
                    let u = parse_point(&point)?;
                    let margin = preprocess::slater_margin(&l.prob, &u, l.grid)?;
                    let certified_lower_bound = match certify {
                        Some(t) => {
                            preprocess::certified_slater_bound(&l.prob, &u, t, margin.margin, 30)?
                        }
                        None => None,
                    };
                    json(
                        out,
                        &SlaterReport {
                            point: u,
                            margin,
                            certified_lower_bound,
                            note: "grid margin; positive means Slater verified at grid resolution only",
                        },
                    )?;
                }
                CheckCmd::EpsStar { r } => {
                    let eps = sos::eps_star_with(&l.prob.f, r, &l.settings)?;
                    json(out, &EpsStarReport { r, eps_star: eps })?;
                }
            }
            Ok(EXIT_OK)
        }
        Command::Homogenize { common } => {
            let l = load(&common)?;
            let h = preprocess::homogenize_instance(&l.prob)?;
            let mut pf = ProblemFile::from_problem(&h.problem);
            pf.variables.x = l.file.variables.x.clone();
            pf.variables.y = std::iter::once("y0".to_string())
                .chain(l.file.variables.y.iter().cloned())
                .collect();
            pf.options.mode = l.file.options.mode;
            pf.options.tolerances = l.file.options.tolerances.clone();
            pf.options.grid_density = l.file.options.grid_density;
            pf.notes = l.file.notes.clone();
            pf.notes.insert("generic_equality".into(), h.caveat.clone());
            json(out, &pf)?;
            Ok(EXIT_OK)
        }
        Command::ExportSdpa {
            common,
            which,
            r,
            t,
            output,
        } => {
            let l = load(&common)?;
            let rel = match which {
                Which::Dsdp => relax::build_dsdp(&l.prob, r, t)?,
                Which::Psdp => relax::build_psdp(&l.prob, r, t)?,
                Which::SosconvexDsdp => relax::build_sosconvex_dsdp(&l.prob, t)?,
                Which::SosconvexPsdp => relax::build_sosconvex_psdp(&l.prob, t)?,
            };
            match output {
                Some(path) => sdpa::export_sdpa(&rel.sdp, path)?,
                None => out.write_all(sdpa::write_sdpa(&rel.sdp)?.as_bytes())?,
            }
            Ok(EXIT_OK)
        }
    }
}

/// Run the CLI on `args` (including the program name), writing results to
/// `out` and diagnostics to `err`. Returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = write!(err, "{}", e.render());
            return code;
        }
    };
    match dispatch(cli, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedules() {
        let s = parse_schedule("1:1, 2:3").unwrap();
        assert_eq!(s, vec![OrderPair { r: 1, t: 1 }, OrderPair { r: 2, t: 3 }]);
        assert!(parse_schedule("1-1").is_err());
        assert!(parse_schedule("a:1").is_err());
    }

    #[test]
    fn points_and_floats() {
        assert_eq!(parse_point("-0.5, 0").unwrap(), vec![-0.5, 0.0]);
        assert!(parse_point("x").is_err());
        assert_eq!(csv_float(0.1), "1.0000000000000001e-1");
        assert_eq!(csv_float(0.1).parse::<f64>().unwrap(), 0.1);
    }

    #[test]
    fn codes() {
        assert_eq!(
            exit_code(&Error::Precondition("t < d_K".into())),
            EXIT_PRECONDITION
        );
        assert_eq!(exit_code(&Error::Solver("x".into())), EXIT_SOLVER);
        assert_eq!(exit_code(&Error::ProblemFile("x".into())), EXIT_USAGE);
        let mut o = Vec::new();
        let mut e = Vec::new();
        assert_eq!(run(["sipsdp", "frobnicate"], &mut o, &mut e), EXIT_USAGE);
        assert_eq!(
            run(["sipsdp", "solve", "/nonexistent.json"], &mut o, &mut e),
            EXIT_USAGE
        );
    }
}
