//! Identity checks across independent routes, the frozen regression set and
//! the confluence sweep.

use std::f64::consts::FRAC_PI_2;
use std::io::Write;
use std::time::Instant;

use serde::Serialize;

use crate::borel::{limit_stokes_laplace, QuadratureConfig};
use crate::closed_form::{confluent_monodromies, monodromies, stokes_confluent, stokes_limit};
use crate::cplx::{det, Branch, CMat, CNum, ONE};
use crate::error::{Error, Result};
use crate::model::{build_okubo, frame, HGParams, ParamFile, ParameterSector, Rho, Sign};
use crate::series::{floquet_matrix_tol, DEFAULT_TOL};
use crate::special::{exp_2pi_i, ln_gamma};
use crate::transport::{monodromy_numeric, transport, LoopSpec, PathSpec};

pub const BASE_POINT: f64 = 0.5;
pub const DEFAULT_RK_TOL: f64 = 1e-10;

pub const TOL_GAUSS_KUMMER: f64 = 1e-8;
pub const TOL_HYPERFUNCTION: f64 = 1e-6;
pub const TOL_MONODROMY: f64 = 1e-6;
pub const TOL_FACTORIZATION: f64 = 1e-6;
pub const TOL_LAPLACE: f64 = 1e-4;

pub const CHECK_NAMES: [&str; 5] = ["gauss-kummer", "hyperfunction", "monodromy", "stokes-factorization", "laplace"];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub inputs: serde_json::Value,
    pub deviation: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub runtime_ms: f64,
}

impl CheckReport {
    fn new(name: impl Into<String>, p: &HGParams, deviation: f64, tolerance: f64, start: Instant) -> Self {
        let pass = deviation.is_finite() && deviation <= tolerance;
        CheckReport {
            name: name.into(),
            inputs: serde_json::to_value(p.to_file()).expect("serializable"),
            deviation,
            tolerance,
            pass,
            runtime_ms: start.elapsed().as_secs_f64() * 1e3,
        }
    }

    pub fn line(&self) -> String {
        format!(
            "{} {}: deviation {:.3e} (tolerance {:.1e}, {:.0} ms)",
            if self.pass { "PASS" } else { "FAIL" },
            self.name,
            self.deviation,
            self.tolerance,
            self.runtime_ms
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CheckConfig {
    pub rk_tol: f64,
    pub series_tol: f64,
    /// Local tolerance of the Borel-transform continuation behind the Laplace sums.
    pub quad_tol: f64,
}

impl Default for CheckConfig {
    fn default() -> Self {
        CheckConfig {
            rk_tol: DEFAULT_RK_TOL,
            series_tol: DEFAULT_TOL,
            quad_tol: 1e-12,
        }
    }
}

/// Entrywise deviation: relative where |b_ij| ≥ 1e−8, absolute below.
pub fn entry_deviation(a: &CMat, b: &CMat) -> f64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| {
            let d = (x - y).norm();
            if y.norm() >= 1e-8 {
                d / y.norm()
            } else {
                d
            }
        })
        .fold(0.0, f64::max)
}

fn rel(a: CNum, b: CNum) -> f64 {
    (a - b).norm() / b.norm()
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegressionCase {
    pub name: String,
    pub params: HGParams,
}

#[derive(serde::Deserialize)]
struct RegressionEntry {
    name: String,
    params: ParamFile,
}

/// The frozen parameter draws in data/regression.json.
pub fn regression_set() -> Vec<RegressionCase> {
    let raw: Vec<RegressionEntry> =
        serde_json::from_str(include_str!("../data/regression.json")).expect("regression.json is valid");
    raw.into_iter()
        .map(|e| RegressionCase {
            params: e.params.into_params().expect("regression parameters are valid"),
            name: e.name,
        })
        .collect()
}

pub fn regression_case(name: &str) -> Result<HGParams> {
    regression_set()
        .into_iter()
        .find(|c| c.name == name)
        .map(|c| c.params)
        .ok_or_else(|| Error::Invalid(format!("no regression case named {name:?}")))
}

/// det Ṽ^±(s)/det R against the Gamma-product displays at s.
pub fn check_gauss_kummer(p: &HGParams, s: CNum, sign: Sign, cfg: CheckConfig) -> Result<CheckReport> {
    let start = Instant::now();
    let rho = p.finite_rho()?;
    let g = p.gamma();
    let fr = frame(p)?;
    let f = floquet_matrix_tol(p, s, cfg.series_tol)?.matrix;
    let lhs_plus = det(&f)? / det(&fr.r)?;
    let br = Branch::PRINCIPAL;
    // det (s−B)^{Ã_D+ρ} with the same branches as the series prefactors
    let mut log_pow = (g + rho) * br.ln(s - 1.0)?;
    for b in p.beta_head() {
        log_pow += (ONE - b + rho) * br.ln(s)?;
    }
    let (lhs, log_gamma) = match sign {
        Sign::Plus => {
            let mut lg = ln_gamma(ONE + g + rho)?;
            for b in p.beta_head() {
                lg += ln_gamma(2.0 - b + rho)?;
            }
            for a in p.alpha() {
                lg -= ln_gamma(ONE - a + rho)?;
            }
            (lhs_plus, lg)
        }
        Sign::Minus => {
            let c = monodromies(p)?
                .c
                .ok_or_else(|| Error::Resonance("connection matrix is degenerate at this rho".into()))?;
            let mut lg = -ln_gamma(-g - rho)?;
            for b in p.beta_head() {
                lg -= ln_gamma(b - 1.0 - rho)?;
            }
            for a in p.alpha() {
                lg += ln_gamma(a - rho)?;
            }
            (lhs_plus * det(&c)?, lg)
        }
    };
    let rhs = (log_gamma + log_pow).exp();
    let name = format!("gauss-kummer{}", sign.symbol());
    Ok(CheckReport::new(name, p, rel(lhs, rhs), TOL_GAUSS_KUMMER, start))
}

/// Ṽ⁺ continued from the base point along a straight line to `s`.
fn floquet_at(p: &HGParams, s: CNum, cfg: CheckConfig) -> Result<CMat> {
    let sys = build_okubo(p)?;
    let f = floquet_matrix_tol(p, CNum::new(BASE_POINT, 0.0), cfg.series_tol)?.matrix;
    let t = transport(&sys, &PathSpec::line(CNum::new(BASE_POINT, 0.0), s), cfg.rk_tol)?;
    Ok(&t.propagator * &f)
}

/// V⁺_{·j}(s) = [V⁻_{·j}(s̃) − V⁻_{·j}(s)](e^{2πi(Ã_jj+ρ)} − 1)⁻¹ at
/// s = λ_j + r e^{−iπ/2}, with s̃ reached by one positive turn about λ_j.
pub fn check_hyperfunction(p: &HGParams, j: usize, r: f64, cfg: CheckConfig) -> Result<CheckReport> {
    let start = Instant::now();
    let n = p.n();
    if j >= n {
        return Err(Error::Invalid(format!("column {j} out of range for n = {n}")));
    }
    let rho = p.finite_rho()?;
    let lam = if j + 1 == n { ONE } else { CNum::new(0.0, 0.0) };
    let s = lam + CNum::from_polar(r, -FRAC_PI_2);
    let c = monodromies(p)?
        .c
        .ok_or_else(|| Error::Resonance("connection matrix is degenerate at this rho".into()))?;
    let fs = floquet_at(p, s, cfg)?;
    let sys = build_okubo(p)?;
    let turn = transport(&sys, &PathSpec::circle(lam, s, true), cfg.rk_tol)?;
    let vm = &fs * &c;
    let vm_turned = &(&turn.propagator * &fs) * &c;
    let factor = (exp_2pi_i(p.at_d()[j] + rho) - 1.0).inv();
    let mut dev: f64 = 0.0;
    let scale = (0..n).map(|i| fs[(i, j)].norm()).fold(0.0, f64::max);
    for i in 0..n {
        let got = (vm_turned[(i, j)] - vm[(i, j)]) * factor;
        dev = dev.max((got - fs[(i, j)]).norm() / scale);
    }
    Ok(CheckReport::new(format!("hyperfunction[j={}, r={r}]", j + 1), p, dev, TOL_HYPERFUNCTION, start))
}

#[derive(Clone, Debug, PartialEq)]
pub struct NumericMonodromies {
    pub m0_plus: CMat,
    pub m1_plus: CMat,
    pub m0_minus: Option<CMat>,
    pub m1_minus: Option<CMat>,
    pub err_est: f64,
}

/// Loops about 0 and 1 from s = 1/2 in the bases Ṽ⁺ and Ṽ⁻ = Ṽ⁺C.
pub fn numeric_monodromies(p: &HGParams, cfg: CheckConfig) -> Result<NumericMonodromies> {
    let tol = cfg.rk_tol;
    let sys = build_okubo(p)?;
    let base = CNum::new(BASE_POINT, 0.0);
    let f = floquet_matrix_tol(p, base, cfg.series_tol)?.matrix;
    let l0 = LoopSpec::new(base, CNum::new(0.0, 0.0));
    let l1 = LoopSpec::new(base, ONE);
    let a0 = monodromy_numeric(&sys, &f, &l0, tol)?;
    let a1 = monodromy_numeric(&sys, &f, &l1, tol)?;
    let mut err = a0.err_est.max(a1.err_est);
    let (m0m, m1m) = match monodromies(p)?.c {
        Some(c) => {
            let fc = &f * &c;
            let b0 = monodromy_numeric(&sys, &fc, &l0, tol)?;
            let b1 = monodromy_numeric(&sys, &fc, &l1, tol)?;
            err = err.max(b0.err_est).max(b1.err_est);
            (Some(b0.matrix), Some(b1.matrix))
        }
        None => (None, None),
    };
    Ok(NumericMonodromies {
        m0_plus: a0.matrix,
        m1_plus: a1.matrix,
        m0_minus: m0m,
        m1_minus: m1m,
        err_est: err,
    })
}

/// Closed-form m̃₀^±, m̃₁^± against numerical continuation.
pub fn check_monodromy(p: &HGParams, cfg: CheckConfig) -> Result<CheckReport> {
    let start = Instant::now();
    let closed = monodromies(p)?;
    let num = numeric_monodromies(p, cfg)?;
    let (Some(n0m), Some(n1m)) = (&num.m0_minus, &num.m1_minus) else {
        return Err(Error::Resonance("connection matrix is degenerate at this rho".into()));
    };
    let dev = entry_deviation(&num.m0_plus, &closed.m0_plus)
        .max(entry_deviation(&num.m1_plus, &closed.m1_plus))
        .max(entry_deviation(n0m, &closed.m0_minus))
        .max(entry_deviation(n1m, &closed.m1_minus));
    Ok(CheckReport::new("monodromy", p, dev, TOL_MONODROMY, start))
}

#[derive(Clone, Debug, PartialEq)]
pub struct FactorizationCandidates {
    pub s_upper: CMat,
    pub s_lower: CMat,
    /// Largest entry that should vanish by shape.
    pub shape_defect: f64,
}

fn diag_inv(m: &CMat) -> CMat {
    CMat::from_diag(&m.diag().iter().map(|x| x.inv()).collect::<Vec<_>>())
}

/// S_U, S_L peeled off the numerical monodromies with the formal factors Ñ.
pub fn factorization_candidates(p: &HGParams, sign: Sign, cfg: CheckConfig) -> Result<FactorizationCandidates> {
    let num = numeric_monodromies(p, cfg)?;
    let (m0, m1) = match sign {
        Sign::Plus => (num.m0_plus, num.m1_plus),
        Sign::Minus => match (num.m0_minus, num.m1_minus) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(Error::Resonance("connection matrix is degenerate at this rho".into())),
        },
    };
    let (big0, big1) = confluent_monodromies(p, &m0, &m1, sign)?;
    let (n0, n1, nn) = crate::closed_form::formal_monodromies(p)?;
    let (su, sl) = match sign {
        // M₀ = Ñ₀S_U, M_{1/ρ} = S_LÑ_{1/ρ}
        Sign::Plus => (&diag_inv(&n0) * &big0, &big1 * &diag_inv(&n1)),
        // M₀ = Ñ₀S_L, M_{1/ρ} = ÑS_UÑ₀⁻¹
        Sign::Minus => (&(&diag_inv(&nn) * &big1) * &n0, &diag_inv(&n0) * &big0),
    };
    let n = p.n();
    let mut defect: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let (eu, el) = if i == j {
                (su[(i, j)] - 1.0, sl[(i, j)] - 1.0)
            } else {
                (su[(i, j)], sl[(i, j)])
            };
            if !(j == n - 1 && i < n - 1) {
                defect = defect.max(eu.norm());
            }
            if !(i == n - 1 && j < n - 1) {
                defect = defect.max(el.norm());
            }
        }
    }
    Ok(FactorizationCandidates {
        s_upper: su,
        s_lower: sl,
        shape_defect: defect,
    })
}

/// Unipotent shape of the peeled factors and agreement with the closed forms.
pub fn check_stokes_factorization(p: &HGParams, sign: Sign, cfg: CheckConfig) -> Result<CheckReport> {
    let start = Instant::now();
    let cand = factorization_candidates(p, sign, cfg)?;
    let closed = stokes_confluent(p, sign)?;
    let dev = cand
        .shape_defect
        .max(entry_deviation(&cand.s_upper, &closed.s_upper))
        .max(entry_deviation(&cand.s_lower, &closed.s_lower));
    let name = format!("stokes-factorization{}", sign.symbol());
    Ok(CheckReport::new(name, p, dev, TOL_FACTORIZATION, start))
}

/// Limit Stokes matrices by Laplace summation against the Gamma formulas.
pub fn check_laplace(p: &HGParams, cfg: CheckConfig) -> Result<CheckReport> {
    let start = Instant::now();
    let quad = QuadratureConfig {
        ode_tol: cfg.quad_tol,
        ..QuadratureConfig::default()
    };
    let got = limit_stokes_laplace(p, quad, 200)?;
    let want = stokes_limit(p)?;
    let dev = got
        .pair
        .s_upper
        .max_abs_diff(&want.s_upper)
        .max(got.pair.s_lower.max_abs_diff(&want.s_lower));
    Ok(CheckReport::new("laplace", p, dev, TOL_LAPLACE, start))
}

/// Runs the named check (or all of them) for one parameter set.
pub fn run_check(name: &str, p: &HGParams, cfg: CheckConfig) -> Result<Vec<CheckReport>> {
    let half = CNum::new(BASE_POINT, 0.0);
    let n = p.n();
    match name {
        "gauss-kummer" => Ok(vec![
            check_gauss_kummer(p, half, Sign::Plus, cfg)?,
            check_gauss_kummer(p, half, Sign::Minus, cfg)?,
        ]),
        "hyperfunction" => {
            let mut out = Vec::new();
            for j in [0, n - 1] {
                for r in [0.3, 0.4] {
                    out.push(check_hyperfunction(p, j, r, cfg)?);
                }
            }
            Ok(out)
        }
        "monodromy" => Ok(vec![check_monodromy(p, cfg)?]),
        "stokes-factorization" => Ok(vec![
            check_stokes_factorization(p, Sign::Plus, cfg)?,
            check_stokes_factorization(p, Sign::Minus, cfg)?,
        ]),
        "laplace" => Ok(vec![check_laplace(p, cfg)?]),
        "all" => {
            let mut out = Vec::new();
            for c in CHECK_NAMES {
                out.extend(run_check(c, p, cfg)?);
            }
            Ok(out)
        }
        other => Err(Error::Invalid(format!(
            "unknown check {other:?}; expected one of {} or all",
            CHECK_NAMES.join(", ")
        ))),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub abs_rho: f64,
    pub arg_rho: f64,
    pub sign: Sign,
    /// "U(i,j)" or "L(i,j)", one-based.
    pub entry: String,
    pub deviation: f64,
    /// Log-log slope of this entry's deviation over all radii.
    pub slope: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    /// ‖S(ρ) − S(∞)‖_∞ per radius.
    pub norms: Vec<(f64, f64)>,
    /// Slope of the norms in log-log scale.
    pub slope: f64,
    /// ‖S(ρ) − S(∞)‖_∞ / ‖S(∞)‖_∞ at the largest radius.
    pub final_relative: f64,
}

fn loglog_slope(pts: &[(f64, f64)]) -> f64 {
    let xs: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Thread cap from CONFLUENCE_KIT_THREADS, else the available parallelism.
pub fn thread_limit() -> usize {
    std::env::var("CONFLUENCE_KIT_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&v| v > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Angular margin kept from the edges of P± by the sweep.
pub const SWEEP_ETA: f64 = 0.1;

/// ‖S^sign(ρ) − S(∞)‖ along ρ = r e^{i·ray_arg} for each radius.
pub fn confluence_sweep(p: &HGParams, sign: Sign, ray_arg: f64, radii: &[f64]) -> Result<SweepTable> {
    if radii.len() < 2 {
        return Err(Error::Invalid("the sweep needs at least two radii".into()));
    }
    if let Some(bad) = radii.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
        return Err(Error::Invalid(format!("radius {bad} is not positive")));
    }
    let sector = ParameterSector::new(sign, SWEEP_ETA, 0.0)?;
    if !sector.contains_arg(CNum::from_polar(1.0, ray_arg)) {
        let (lo, hi) = sector.arg_window();
        return Err(Error::Sector(format!(
            "ray arg {ray_arg} is outside the {} window ({lo:.4}, {hi:.4})",
            sign.symbol()
        )));
    }
    let lim = stokes_limit(p)?;
    let threads = thread_limit().min(radii.len());
    let chunk = radii.len().div_ceil(threads);
    let results: Vec<Result<CMat>> = std::thread::scope(|sc| {
        let handles: Vec<_> = radii
            .chunks(chunk)
            .map(|rs| {
                sc.spawn(move || {
                    rs.iter()
                        .map(|&r| {
                            let q = p.with_rho(Rho::Finite(CNum::from_polar(r, ray_arg)));
                            let s = stokes_confluent(&q, sign)?;
                            let n = q.n();
                            // pack both off-diagonal lines into one matrix
                            let mut m = s.s_upper.clone();
                            for j in 0..n - 1 {
                                m[(n - 1, j)] = s.s_lower[(n - 1, j)];
                            }
                            Ok(m)
                        })
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("sweep worker panicked")).collect()
    });
    let n = p.n();
    let mut packed_lim = lim.s_upper.clone();
    for j in 0..n - 1 {
        packed_lim[(n - 1, j)] = lim.s_lower[(n - 1, j)];
    }
    let mats = results.into_iter().collect::<Result<Vec<_>>>()?;
    let mut entries: Vec<(String, usize, usize)> = Vec::new();
    for j in 0..n - 1 {
        entries.push((format!("U({},{})", j + 1, n), j, n - 1));
        entries.push((format!("L({},{})", n, j + 1), n - 1, j));
    }
    let mut rows = Vec::new();
    for (label, i, j) in &entries {
        let pts: Vec<(f64, f64)> = radii
            .iter()
            .zip(&mats)
            .map(|(r, m)| (*r, (m[(*i, *j)] - packed_lim[(*i, *j)]).norm()))
            .collect();
        let slope = loglog_slope(&pts);
        for (r, d) in pts {
            rows.push(SweepRow {
                abs_rho: r,
                arg_rho: ray_arg,
                sign,
                entry: label.clone(),
                deviation: d,
                slope,
            });
        }
    }
    let norms: Vec<(f64, f64)> = radii
        .iter()
        .zip(&mats)
        .map(|(r, m)| (*r, m.max_abs_diff(&packed_lim)))
        .collect();
    let last = norms.iter().copied().fold((0.0, 0.0), |acc, x| if x.0 > acc.0 { x } else { acc }).1;
    Ok(SweepTable {
        slope: loglog_slope(&norms),
        final_relative: last / packed_lim.max_abs(),
        norms,
        rows,
    })
}

pub const SWEEP_HEADER: [&str; 6] = ["abs_rho", "arg_rho", "sign", "entry", "deviation", "slope"];

pub fn write_sweep_csv<W: Write>(table: &SweepTable, out: W) -> Result<()> {
    let io = |e: csv::Error| Error::Invalid(format!("writing CSV: {e}"));
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_HEADER).map_err(io)?;
    for r in &table.rows {
        w.write_record([
            format!("{}", r.abs_rho),
            format!("{}", r.arg_rho),
            r.sign.symbol().to_string(),
            r.entry.clone(),
            format!("{:e}", r.deviation),
            format!("{}", r.slope),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::Invalid(format!("writing CSV: {e}")))?;
    Ok(())
}
