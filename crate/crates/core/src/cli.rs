//! The `confluence-kit` command line: argument parsing, dispatch and output.

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::borel::{limit_stokes_laplace, QuadratureConfig};
use crate::closed_form::{conjugation_route, monodromies, stokes_confluent, stokes_limit, StokesPair};
use crate::cplx::{CMat, CNum};
use crate::error::{Error, Result};
use crate::model::{build_companion, ensure_valid, frame, BlockStructure, HGParams, Rho, Sign};
use crate::verify::{
    confluence_sweep, entry_deviation, numeric_monodromies, regression_case, regression_set, run_check, write_sweep_csv,
    CheckConfig, CheckReport, TOL_MONODROMY,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_NUMERIC: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

const TOL_RANGE: (f64, f64) = (1e-14, 1e-3);

#[derive(Parser, Debug)]
#[command(name = "confluence-kit", version, about = "Monodromy, connection and Stokes data of the generalized hypergeometric Okubo system and its confluent limit")]
pub struct Cli {
    #[command(flatten)]
    pub source: ParamSource,
    /// Local tolerance of the path integrator.
    #[arg(long, global = true, default_value_t = 1e-10)]
    pub rk_tol: f64,
    /// Relative truncation tolerance of the convergent series.
    #[arg(long, global = true, default_value_t = 1e-14)]
    pub series_tol: f64,
    /// Tolerance of the Borel-transform continuation used by Laplace sums.
    #[arg(long, global = true, default_value_t = 1e-12)]
    pub quad_tol: f64,
    /// Add wall-clock timings to the output.
    #[arg(long, global = true)]
    pub timing: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Default)]
#[group(multiple = false)]
pub struct ParamSource {
    /// Parameter file: {"alpha": [[re, im], ...], "beta": [...], "rho": [re, im] | "inf"}.
    #[arg(long, global = true)]
    pub params: Option<PathBuf>,
    /// The same schema given inline.
    #[arg(long, global = true)]
    pub params_json: Option<String>,
    /// A named case of the frozen regression set (n2-a, n2-b, n3-a, n3-b, n4-a).
    #[arg(long, global = true)]
    pub regression: Option<String>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Print A, B, R, Ã_D and γ.
    Build,
    /// Monodromies of Ṽ± around 0 and 1 from s = 1/2.
    Monodromy {
        #[arg(long, value_enum, default_value_t = Method::Closed)]
        method: Method,
    },
    /// Stokes matrices at finite ρ or of the limit system.
    Stokes {
        /// ρ as "re" or "re,im"; defaults to the parameter file's ρ.
        #[arg(long, conflicts_with = "limit", allow_hyphen_values = true)]
        rho: Option<String>,
        #[arg(long)]
        limit: bool,
        #[arg(long, value_parser = parse_sign, default_value = "+", allow_hyphen_values = true)]
        sign: Sign,
        #[arg(long, value_enum, default_value_t = Route::Closed)]
        route: Route,
    },
    /// Run named identity checks; exit status 0 only if all pass.
    Check {
        #[arg(long, conflicts_with = "name")]
        all: bool,
        /// One of gauss-kummer, hyperfunction, monodromy, stokes-factorization, laplace.
        name: Option<String>,
    },
    /// ‖S(ρ) − S(∞)‖ along a ray of ρ, as CSV.
    Sweep {
        #[arg(long, value_parser = parse_sign, default_value = "+", allow_hyphen_values = true)]
        sign: Sign,
        /// arg ρ of the ray (radians); defaults to 0 for + and π for −.
        #[arg(long, allow_hyphen_values = true)]
        ray: Option<f64>,
        /// Comma-separated |ρ| values.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        radii: Vec<f64>,
        /// CSV destination; stdout if absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Closed,
    Numeric,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Route {
    Closed,
    Conjugation,
    Laplace,
}

fn parse_sign(s: &str) -> std::result::Result<Sign, String> {
    s.parse::<Sign>().map_err(|e| e.to_string())
}

fn parse_complex(s: &str) -> Result<CNum> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let num = |t: &str| {
        t.parse::<f64>()
            .map_err(|_| Error::Invalid(format!("cannot read {t:?} as a number")))
    };
    match parts.as_slice() {
        [re] => Ok(CNum::new(num(re)?, 0.0)),
        [re, im] => Ok(CNum::new(num(re)?, num(im)?)),
        _ => Err(Error::Invalid(format!("expected re or re,im, got {s:?}"))),
    }
}

pub fn cnum_json(z: CNum) -> Value {
    json!([z.re, z.im])
}

pub fn mat_json(m: &CMat) -> Value {
    Value::Array(
        m.to_rows()
            .iter()
            .map(|row| Value::Array(row.iter().map(|z| cnum_json(*z)).collect()))
            .collect(),
    )
}

fn vec_json(v: &[CNum]) -> Value {
    Value::Array(v.iter().map(|z| cnum_json(*z)).collect())
}

fn pair_json(s: &StokesPair) -> Value {
    json!({"S_U": mat_json(&s.s_upper), "S_L": mat_json(&s.s_lower)})
}

/// Failure classes mapped onto exit codes.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Numeric(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Validation(_)
            | Error::Invalid(_)
            | Error::Resonance(_)
            | Error::Sector(_)
            | Error::GammaPole { .. }
            | Error::NamedGammaPole { .. }
            | Error::DimensionMismatch { .. }
            | Error::SingularDirection { .. }
            | Error::OutsideHalfPlane { .. }
            | Error::Radius { .. }
            | Error::Clearance { .. } => Failure::Usage(e.to_string()),
            _ => Failure::Numeric(e.to_string()),
        }
    }
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Numeric(_) => EXIT_NUMERIC,
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

struct Ctx {
    cfg: CheckConfig,
    timing: bool,
}

fn load_params(src: &ParamSource) -> CliResult<Option<HGParams>> {
    let p = if let Some(path) = &src.params {
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::Usage(format!("reading {}: {e}", path.display())))?;
        Some(HGParams::from_json(&text)?)
    } else if let Some(text) = &src.params_json {
        Some(HGParams::from_json(text)?)
    } else if let Some(name) = &src.regression {
        Some(regression_case(name)?)
    } else {
        None
    };
    Ok(p)
}

fn require(p: Option<HGParams>) -> CliResult<HGParams> {
    p.ok_or_else(|| Failure::Usage("parameters required: give --params, --params-json or --regression".into()))
}

fn check_tol(name: &str, v: f64) -> CliResult<()> {
    if !(v >= TOL_RANGE.0 && v <= TOL_RANGE.1) {
        return Err(Failure::Usage(format!(
            "--{name} {v:e} outside [{:e}, {:e}]",
            TOL_RANGE.0, TOL_RANGE.1
        )));
    }
    Ok(())
}

fn cmd_build(p: &HGParams) -> CliResult<Value> {
    ensure_valid(p, None)?;
    let a = build_companion(p)?;
    let b = BlockStructure::gen_hg(p.n()).matrix();
    let fr = frame(p)?;
    let (system, form) = match p.rho() {
        Rho::Finite(_) => ("okubo", "(s - B) v' = (A + rho) v"),
        Rho::Infinity => ("limit", "z^2 psi' = (B + z A) psi"),
    };
    Ok(json!({
        "params": serde_json::to_value(p.to_file()).expect("serializable"),
        "system": system,
        "form": form,
        "n": p.n(),
        "A": mat_json(&a),
        "B": mat_json(&b),
        "R": mat_json(&fr.r),
        "At_D": vec_json(&fr.at_d),
        "gamma": cnum_json(p.gamma()),
    }))
}

fn cmd_monodromy(p: &HGParams, method: Method, ctx: &Ctx) -> CliResult<(Value, i32)> {
    ensure_valid(p, None)?;
    let branch = "base point s = 1/2; arg s and arg(s - 1) principal, arg(s - 1) = pi there";
    let closed = || -> CliResult<Value> {
        let m = monodromies(p)?;
        Ok(json!({
            "m0_plus": mat_json(&m.m0_plus),
            "m1_plus": mat_json(&m.m1_plus),
            "m0_minus": mat_json(&m.m0_minus),
            "m1_minus": mat_json(&m.m1_minus),
            "C": m.c.as_ref().map(mat_json),
        }))
    };
    let numeric = || -> CliResult<Value> {
        let m = numeric_monodromies(p, ctx.cfg)?;
        Ok(json!({
            "m0_plus": mat_json(&m.m0_plus),
            "m1_plus": mat_json(&m.m1_plus),
            "m0_minus": m.m0_minus.as_ref().map(mat_json),
            "m1_minus": m.m1_minus.as_ref().map(mat_json),
            "err_est": m.err_est,
        }))
    };
    let mut out = json!({"method": format!("{method:?}").to_lowercase(), "branch": branch});
    let mut code = EXIT_OK;
    match method {
        Method::Closed => out["closed"] = closed()?,
        Method::Numeric => out["numeric"] = numeric()?,
        Method::Both => {
            let c = monodromies(p)?;
            let nm = numeric_monodromies(p, ctx.cfg)?;
            let mut dev = entry_deviation(&nm.m0_plus, &c.m0_plus).max(entry_deviation(&nm.m1_plus, &c.m1_plus));
            if let (Some(a), Some(b)) = (&nm.m0_minus, &nm.m1_minus) {
                dev = dev
                    .max(entry_deviation(a, &c.m0_minus))
                    .max(entry_deviation(b, &c.m1_minus));
            }
            out["closed"] = closed()?;
            out["numeric"] = numeric()?;
            out["deviation"] = json!(dev);
            out["tolerance"] = json!(TOL_MONODROMY);
            if !(dev <= TOL_MONODROMY) {
                code = EXIT_NUMERIC;
            }
        }
    }
    Ok((out, code))
}

fn cmd_stokes(p: &HGParams, rho: Option<&str>, limit: bool, sign: Sign, route: Route, ctx: &Ctx) -> CliResult<Value> {
    let laplace = || -> CliResult<StokesPair> {
        let quad = QuadratureConfig {
            ode_tol: ctx.cfg.quad_tol,
            ..QuadratureConfig::default()
        };
        Ok(limit_stokes_laplace(p, quad, 200)?.pair)
    };
    if limit {
        let s = match route {
            Route::Laplace => laplace()?,
            _ => stokes_limit(p)?,
        };
        let mut out = pair_json(&s);
        out["rho"] = json!("inf");
        out["route"] = json!(format!("{route:?}").to_lowercase());
        return Ok(out);
    }
    let q = match rho {
        Some(r) => p.with_rho(Rho::Finite(parse_complex(r)?)),
        None => p.clone(),
    };
    let rho = q
        .finite_rho()
        .map_err(|_| Failure::Usage("stokes at finite rho needs --rho or a finite rho in the parameters; use --limit for the limit system".into()))?;
    let set = match route {
        Route::Closed => stokes_confluent(&q, sign)?,
        Route::Conjugation => conjugation_route(&q, sign, &stokes_limit(&q)?)?,
        Route::Laplace => conjugation_route(&q, sign, &laplace()?)?,
    };
    let branch = match sign {
        Sign::Plus => "arg rho in (-pi, pi]",
        Sign::Minus => "arg rho in (0, 2pi]",
    };
    Ok(json!({
        "rho": cnum_json(rho),
        "sign": sign.symbol(),
        "route": format!("{route:?}").to_lowercase(),
        "branch": branch,
        "S_U": mat_json(&set.s_upper),
        "S_L": mat_json(&set.s_lower),
        "N0": mat_json(&set.n0),
        "N_inv_rho": mat_json(&set.n_inv_rho),
        "M0": mat_json(&set.m0),
        "M_inv_rho": mat_json(&set.m_inv_rho),
    }))
}

fn cmd_check(p: Option<HGParams>, all: bool, name: Option<&str>, ctx: &Ctx) -> CliResult<(Vec<CheckReport>, i32)> {
    let which = match (all, name) {
        (true, _) => "all",
        (false, Some(n)) => n,
        (false, None) => return Err(Failure::Usage("give a check name or --all".into())),
    };
    let cases: Vec<HGParams> = match p {
        Some(p) => vec![p],
        None => regression_set().into_iter().map(|c| c.params).collect(),
    };
    let mut reports = Vec::new();
    for q in &cases {
        ensure_valid(q, None)?;
        reports.extend(run_check(which, q, ctx.cfg)?);
    }
    let code = if reports.iter().all(|r| r.pass) { EXIT_OK } else { EXIT_NUMERIC };
    Ok((reports, code))
}

fn cmd_sweep(p: &HGParams, sign: Sign, ray: Option<f64>, radii: &[f64], out: Option<&PathBuf>) -> CliResult<()> {
    if radii.is_empty() {
        return Err(Failure::Usage("--radii is empty".into()));
    }
    let ray = ray.unwrap_or(match sign {
        Sign::Plus => 0.0,
        Sign::Minus => std::f64::consts::PI,
    });
    let table = confluence_sweep(p, sign, ray, radii)?;
    match out {
        Some(path) => {
            let f = fs::File::create(path).map_err(|e| Failure::Usage(format!("creating {}: {e}", path.display())))?;
            write_sweep_csv(&table, f)?;
        }
        None => write_sweep_csv(&table, std::io::stdout().lock())?,
    }
    Ok(())
}

fn emit(v: &Value) {
    let mut out = std::io::stdout().lock();
    // a closed pipe is not worth a panic
    let _ = writeln!(out, "{}", serde_json::to_string_pretty(v).expect("serializable"));
}

/// Parses `args`, runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(f) => {
            let msg = match &f {
                Failure::Usage(m) | Failure::Numeric(m) => m,
            };
            eprintln!("error: {msg}");
            f.code()
        }
    }
}

fn execute(cli: &Cli) -> CliResult<i32> {
    for (name, v) in [("rk-tol", cli.rk_tol), ("series-tol", cli.series_tol), ("quad-tol", cli.quad_tol)] {
        check_tol(name, v)?;
    }
    let ctx = Ctx {
        cfg: CheckConfig {
            rk_tol: cli.rk_tol,
            series_tol: cli.series_tol,
            quad_tol: cli.quad_tol,
        },
        timing: cli.timing,
    };
    let start = Instant::now();
    let params = load_params(&cli.source)?;
    let with_time = |mut v: Value| {
        if ctx.timing {
            v["runtime_ms"] = json!(start.elapsed().as_secs_f64() * 1e3);
        }
        v
    };
    match &cli.command {
        Command::Build => {
            emit(&with_time(cmd_build(&require(params)?)?));
            Ok(EXIT_OK)
        }
        Command::Monodromy { method } => {
            let (v, code) = cmd_monodromy(&require(params)?, *method, &ctx)?;
            emit(&with_time(v));
            Ok(code)
        }
        Command::Stokes { rho, limit, sign, route } => {
            let v = cmd_stokes(&require(params)?, rho.as_deref(), *limit, *sign, *route, &ctx)?;
            emit(&with_time(v));
            Ok(EXIT_OK)
        }
        Command::Check { all, name } => {
            let (reports, code) = cmd_check(params, *all, name.as_deref(), &ctx)?;
            let mut out = std::io::stdout().lock();
            for mut r in reports {
                if !ctx.timing {
                    r.runtime_ms = 0.0;
                }
                let mut v = serde_json::to_value(&r).expect("serializable");
                if !ctx.timing {
                    v.as_object_mut().expect("object").remove("runtime_ms");
                }
                let _ = writeln!(out, "{v}");
            }
            Ok(code)
        }
        Command::Sweep { sign, ray, radii, out } => {
            cmd_sweep(&require(params)?, *sign, *ray, radii, out.as_ref())?;
            Ok(EXIT_OK)
        }
    }
}
