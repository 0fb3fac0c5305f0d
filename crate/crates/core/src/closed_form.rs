//! Explicit monodromy, connection and Stokes data of the generalized
//! hypergeometric family, in the diagonal (tilde) frame.

use std::f64::consts::PI;

use crate::cplx::{inverse, Branch, CMat, CNum, IM, ONE, ZERO};
use crate::error::{Error, Result};
use crate::model::{ensure_valid, frame_matrix, validate, HGParams, ParameterSector, Rho, Sign, ViolationKind};
use crate::special::{exp_2pi_i, exp_pi_i, ln_gamma_tol, pole_distance, POLE_TOL};

#[derive(Clone, Debug, PartialEq)]
pub struct FormalMultipliers {
    pub e: Vec<CNum>,
}

/// ξ_j, η_j. The ξ_j carry the factor (−1)^{n+1} relative to the
/// Gamma-product display; with it the monodromy of Ṽ⁺ around 0 matches
/// numerical continuation.
#[derive(Clone, Debug, PartialEq)]
pub struct ConnectionData {
    pub xi: Vec<CNum>,
    pub eta: Vec<CNum>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MonodromySet {
    pub m0_plus: CMat,
    pub m1_plus: CMat,
    pub m0_minus: CMat,
    pub m1_minus: CMat,
    /// Ṽ⁻ = Ṽ⁺C; `None` where 1 − Σξ_jη_j vanishes (ρ in the excluded set of P⁻).
    pub c: Option<CMat>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StokesPair {
    pub s_upper: CMat,
    pub s_lower: CMat,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StokesSet {
    pub sign: Sign,
    pub s_upper: CMat,
    pub s_lower: CMat,
    pub n0: CMat,
    pub n_inv_rho: CMat,
    pub n: CMat,
    /// M̃₀^± and M̃_{1/ρ}^± assembled from the Stokes and formal monodromy factors.
    pub m0: CMat,
    pub m_inv_rho: CMat,
    pub branch: Branch,
}

// Factors f·exp(L) kept apart so large |ρ| never exponentiates a huge log alone.
struct LogTerm {
    phase: CNum,
    log: CNum,
    zero: bool,
}

impl LogTerm {
    fn value(&self, extra_log: CNum) -> CNum {
        if self.zero {
            ZERO
        } else {
            self.phase * (self.log + extra_log).exp()
        }
    }
}

fn lgamma(z: CNum, what: impl FnOnce() -> String, tol: f64) -> Result<CNum> {
    ln_gamma_tol(z, tol).map_err(|_| {
        let (pole, distance) = pole_distance(z);
        Error::NamedGammaPole {
            what: what(),
            z,
            pole,
            distance,
        }
    })
}

/// Σ ln Γ(num) − Σ ln Γ(den); `None` if a denominator sits on a pole.
fn log_gamma_quotient(num: &[(CNum, String)], den: &[CNum], tol: f64) -> Result<Option<CNum>> {
    for d in den {
        if pole_distance(*d).1 < 1e-14 {
            return Ok(None);
        }
    }
    let mut s = ZERO;
    for (z, what) in num {
        s += lgamma(*z, || what.clone(), tol)?;
    }
    for d in den {
        s -= lgamma(*d, String::new, 0.0)?;
    }
    Ok(Some(s))
}

fn term(phase: CNum, q: Option<CNum>) -> LogTerm {
    match q {
        Some(log) => LogTerm { phase, log, zero: false },
        None => LogTerm { phase, log: ZERO, zero: true },
    }
}

pub fn multipliers(p: &HGParams) -> Result<FormalMultipliers> {
    let rho = p.finite_rho()?;
    let mut e: Vec<CNum> = p.beta_head().iter().map(|b| exp_2pi_i(ONE - b + rho)).collect();
    e.push(exp_2pi_i(p.gamma() + rho));
    Ok(FormalMultipliers { e })
}

fn connection_terms(p: &HGParams, tol: f64) -> Result<(Vec<LogTerm>, Vec<LogTerm>)> {
    let n = p.n();
    let rho = p.finite_rho()?;
    let g = p.gamma();
    let beta = p.beta_full()?;
    let alpha = p.alpha();
    let sign = if n % 2 == 1 { 1.0 } else { -1.0 };
    let mut xi = Vec::with_capacity(n - 1);
    let mut eta = Vec::with_capacity(n - 1);
    for j in 0..n - 1 {
        let bj = beta[j];
        let mut num = vec![(ONE + g + rho, "1+gamma+rho".to_string())];
        for (k, bk) in beta.iter().enumerate() {
            if k != j {
                num.push((bj - bk, format!("beta_{}-beta_{}", j + 1, k + 1)));
            }
        }
        let den: Vec<CNum> = alpha.iter().map(|a| bj - a).collect();
        xi.push(term(exp_pi_i(g + rho) * sign, log_gamma_quotient(&num, &den, tol)?));

        let mut num = vec![(-g - rho, "-gamma-rho".to_string())];
        for (k, bk) in beta.iter().enumerate() {
            if k != j {
                num.push((ONE - bj + bk, format!("1-beta_{}+beta_{}", j + 1, k + 1)));
            }
        }
        let den: Vec<CNum> = alpha.iter().map(|a| ONE - bj + a).collect();
        eta.push(term(exp_pi_i(-(g + rho)), log_gamma_quotient(&num, &den, tol)?));
    }
    Ok((xi, eta))
}

pub fn connection_data(p: &HGParams) -> Result<ConnectionData> {
    ensure_valid(p, None)?;
    connection_data_tol(p, POLE_TOL)
}

fn connection_data_tol(p: &HGParams, tol: f64) -> Result<ConnectionData> {
    let (xi, eta) = connection_terms(p, tol)?;
    Ok(ConnectionData {
        xi: xi.iter().map(|t| t.value(ZERO)).collect(),
        eta: eta.iter().map(|t| t.value(ZERO)).collect(),
    })
}

/// C = [[I, ξ], [ηᵀ, 1]]⁻¹ in closed form.
pub fn connection_matrix(d: &ConnectionData) -> Result<CMat> {
    let m = d.xi.len();
    let sigma: CNum = d.xi.iter().zip(&d.eta).map(|(x, y)| x * y).sum();
    let den = ONE - sigma;
    if den.norm() < 1e-12 {
        return Err(Error::Resonance(format!(
            "1 - sum xi_j eta_j = {den}: the co-Floquet basis degenerates"
        )));
    }
    let mut c = CMat::identity(m + 1);
    for i in 0..m {
        for j in 0..m {
            c[(i, j)] += d.xi[i] * d.eta[j] / den;
        }
        c[(i, m)] = -d.xi[i] / den;
        c[(m, i)] = -d.eta[i] / den;
    }
    c[(m, m)] = ONE / den;
    Ok(c)
}

fn assemble_monodromies(e: &[CNum], d: &ConnectionData) -> Result<MonodromySet> {
    let n = e.len();
    let last = n - 1;
    let en = e[last];
    let mut m0p = CMat::identity(n);
    let mut m1p = CMat::identity(n);
    let mut m0m = CMat::identity(n);
    let mut m1m = CMat::identity(n);
    for j in 0..last {
        m0p[(j, j)] = e[j];
        m0p[(j, last)] = d.xi[j] * (e[j] - 1.0);
        m1p[(last, j)] = d.eta[j] * (en - 1.0);
        m0m[(j, j)] = e[j];
        m0m[(last, j)] = d.eta[j] * (e[j] - 1.0);
        m1m[(j, last)] = d.xi[j] * (en - 1.0);
    }
    m1p[(last, last)] = en;
    m1m[(last, last)] = en;
    Ok(MonodromySet {
        m0_plus: m0p,
        m1_plus: m1p,
        m0_minus: m0m,
        m1_minus: m1m,
        c: match connection_matrix(d) {
            Ok(c) => Some(c),
            Err(Error::Resonance(_)) => None,
            Err(e) => return Err(e),
        },
    })
}

/// Monodromies of Ṽ^± around 0 and 1 from the base point 1/2, and the connection C.
pub fn monodromies(p: &HGParams) -> Result<MonodromySet> {
    let d = connection_data(p)?;
    assemble_monodromies(&multipliers(p)?.e, &d)
}

/// Ñ₀, Ñ_{1/ρ}, Ñ = Ñ₀Ñ_{1/ρ}.
pub fn formal_monodromies(p: &HGParams) -> Result<(CMat, CMat, CMat)> {
    let rho = p.finite_rho()?;
    let n = p.n();
    let mut d0: Vec<CNum> = p.beta_head().iter().map(|b| exp_2pi_i(ONE - b)).collect();
    d0.push(exp_2pi_i(-rho));
    let mut d1 = vec![ONE; n];
    d1[n - 1] = exp_2pi_i(p.gamma() + rho);
    let nn: Vec<CNum> = d0.iter().zip(&d1).map(|(a, b)| a * b).collect();
    Ok((CMat::from_diag(&d0), CMat::from_diag(&d1), CMat::from_diag(&nn)))
}

fn check_sector(p: &HGParams, sign: Sign) -> Result<()> {
    ensure_valid(p, Some(&ParameterSector::loose(sign)))
}

fn assemble_stokes(p: &HGParams, sign: Sign, s_upper: CMat, s_lower: CMat) -> Result<StokesSet> {
    let (n0, n1, nn) = formal_monodromies(p)?;
    let (m0, m1) = match sign {
        Sign::Plus => (&n0 * &s_upper, &s_lower * &n1),
        Sign::Minus => {
            let n0_inv = CMat::from_diag(&n0.diag().iter().map(|x| x.inv()).collect::<Vec<_>>());
            (&n0 * &s_lower, &(&nn * &s_upper) * &n0_inv)
        }
    };
    Ok(StokesSet {
        sign,
        s_upper,
        s_lower,
        n0,
        n_inv_rho: n1,
        n: nn,
        m0,
        m_inv_rho: m1,
        branch: sign.rho_branch(),
    })
}

/// Stokes matrices of Ỹ^± at finite ρ from ξ_j, η_j and the multipliers.
pub fn stokes_confluent(p: &HGParams, sign: Sign) -> Result<StokesSet> {
    check_sector(p, sign)?;
    let n = p.n();
    let last = n - 1;
    let rho = p.finite_rho()?;
    let g = p.gamma();
    let branch = sign.rho_branch();
    let log_rho = branch.ln(rho)?;
    let e = multipliers(p)?.e;
    let (xi, eta) = connection_terms(p, POLE_TOL)?;
    let mut su = CMat::identity(n);
    let mut sl = CMat::identity(n);
    for j in 0..last {
        let bj = p.beta_head()[j];
        let up = (ONE - bj - g) * log_rho;
        let (fu, fl) = match sign {
            Sign::Plus => (ONE - exp_2pi_i(-(rho + 1.0 - bj)), e[last] - 1.0),
            Sign::Minus => (exp_2pi_i(-(ONE - bj + rho)) * (e[last] - 1.0), e[j] - 1.0),
        };
        su[(j, last)] = fu * xi[j].value(up);
        sl[(last, j)] = fl * eta[j].value(-up);
    }
    assemble_stokes(p, sign, su, sl)
}

fn limit_terms(p: &HGParams) -> Result<(Vec<LogTerm>, Vec<LogTerm>)> {
    let n = p.n();
    let b = p.beta_head();
    let g = p.gamma();
    let mut up = Vec::new();
    let mut lo = Vec::new();
    for j in 0..n - 1 {
        let bj = b[j];
        let num: Vec<(CNum, String)> = (0..n - 1)
            .filter(|&k| k != j)
            .map(|k| (bj - b[k], format!("beta_{}-beta_{}", j + 1, k + 1)))
            .collect();
        let den: Vec<CNum> = p.alpha().iter().map(|a| bj - a).collect();
        let phase = -2.0 * PI * IM * exp_pi_i(g + bj + n as f64);
        up.push(term(phase, log_gamma_quotient(&num, &den, POLE_TOL)?));
        let num: Vec<(CNum, String)> = (0..n - 1)
            .filter(|&k| k != j)
            .map(|k| (ONE - bj + b[k], format!("1-beta_{}+beta_{}", j + 1, k + 1)))
            .collect();
        let den: Vec<CNum> = p.alpha().iter().map(|a| ONE - bj + a).collect();
        lo.push(term(-2.0 * PI * IM, log_gamma_quotient(&num, &den, POLE_TOL)?));
    }
    Ok((up, lo))
}

/// Stokes matrices S_U(∞), S_L(∞) of the limit system (same for both signs).
pub fn stokes_limit(p: &HGParams) -> Result<StokesPair> {
    ensure_valid(&p.with_rho(Rho::Infinity), None)?;
    let n = p.n();
    let (up, lo) = limit_terms(p)?;
    let mut su = CMat::identity(n);
    let mut sl = CMat::identity(n);
    for j in 0..n - 1 {
        su[(j, n - 1)] = up[j].value(ZERO);
        sl[(n - 1, j)] = lo[j].value(ZERO);
    }
    Ok(StokesPair { s_upper: su, s_lower: sl })
}

/// The Gamma-quotient display of the finite-ρ multipliers (second printed form).
pub fn stokes_gamma_form(p: &HGParams, sign: Sign) -> Result<StokesPair> {
    check_sector(p, sign)?;
    let n = p.n();
    let rho = p.finite_rho()?;
    let g = p.gamma();
    let (up, lo) = limit_terms(p)?;
    let mut su = CMat::identity(n);
    let mut sl = CMat::identity(n);
    for j in 0..n - 1 {
        let bj = p.beta_head()[j];
        let (log_w, ga, gb) = match sign {
            Sign::Plus => (Branch::PRINCIPAL.ln(rho)?, ONE + g + rho, 2.0 - bj + rho),
            Sign::Minus => (Branch::UPPER.ln(rho)? - IM * PI, bj - 1.0 - rho, -g - rho),
        };
        let q = lgamma(ga, || "rho-dependent factor".into(), POLE_TOL)?
            - lgamma(gb, || "rho-dependent factor".into(), POLE_TOL)?;
        // the rho-dependent factor of s_nj is the reciprocal of that of s_jn
        let f = (ONE - bj - g) * log_w + q;
        su[(j, n - 1)] = up[j].value(f);
        sl[(n - 1, j)] = lo[j].value(-f);
    }
    Ok(StokesPair { s_upper: su, s_lower: sl })
}

/// Entrywise diagonal conjugation carrying S(∞) to S^±(ρ):
/// plus:  ρ^{Ã}Γ(Ã+ρ+1)⁻¹ S Γ(Ã+ρ+1) ρ^{−Ã},
/// minus: w^{Ã}Γ(−Ã−ρ) S Γ(−Ã−ρ)⁻¹ w^{−Ã}, w = e^{−πi}ρ.
pub fn conjugate_stokes(s: &CMat, at: &[CNum], rho: CNum, sign: Sign) -> Result<CMat> {
    let n = s.rows();
    let mut out = s.clone();
    let (log_w, ext) = match sign {
        Sign::Plus => (Branch::PRINCIPAL.ln(rho)?, rho),
        Sign::Minus => (Branch::UPPER.ln(rho)? - IM * PI, -rho),
    };
    let lg: Vec<CNum> = at
        .iter()
        .map(|a| match sign {
            Sign::Plus => lgamma(a + 1.0 + ext, || "Gamma(A_D+rho+1)".into(), POLE_TOL),
            Sign::Minus => lgamma(-a + ext, || "Gamma(-A_D-rho)".into(), POLE_TOL),
        })
        .collect::<Result<_>>()?;
    for i in 0..n {
        for j in 0..n {
            if i == j || s[(i, j)] == ZERO {
                continue;
            }
            let l = match sign {
                Sign::Plus => (at[i] - at[j]) * log_w - lg[i] + lg[j],
                Sign::Minus => (at[i] - at[j]) * log_w + lg[i] - lg[j],
            };
            out[(i, j)] = s[(i, j)] * l.exp();
        }
    }
    Ok(out)
}

/// Stokes data at finite ρ obtained by conjugating the limit matrices.
pub fn conjugation_route(p: &HGParams, sign: Sign, s_inf: &StokesPair) -> Result<StokesSet> {
    check_sector(p, sign)?;
    let rho = p.finite_rho()?;
    let at = p.at_d();
    let su = conjugate_stokes(&s_inf.s_upper, &at, rho, sign)?;
    let sl = conjugate_stokes(&s_inf.s_lower, &at, rho, sign)?;
    assemble_stokes(p, sign, su, sl)
}

/// e^{−2πiρ}ρ^{Ã}m₀ρ^{−Ã} and ρ^{Ã}m₁ρ^{−Ã} on the branch of `sign`.
pub fn confluent_monodromies(p: &HGParams, m0: &CMat, m1: &CMat, sign: Sign) -> Result<(CMat, CMat)> {
    let rho = p.finite_rho()?;
    let at = p.at_d();
    let br = sign.rho_branch();
    let pw: Vec<CNum> = at.iter().map(|a| br.pow(rho, *a)).collect::<Result<_>>()?;
    let conj = |m: &CMat| {
        let mut o = m.clone();
        for i in 0..m.rows() {
            for j in 0..m.cols() {
                o[(i, j)] = m[(i, j)] * pw[i] / pw[j];
            }
        }
        o
    };
    Ok((conj(m0).scale(exp_2pi_i(-rho)), conj(m1)))
}

/// R m R⁻¹.
pub fn to_r_frame(m: &CMat, r: &CMat, r_inv: &CMat) -> CMat {
    &(r * m) * r_inv
}

#[derive(Clone, Debug, PartialEq)]
pub struct RFrameMonodromies {
    pub tilde: MonodromySet,
    pub m0_plus: CMat,
    pub m1_plus: CMat,
    pub m0_minus: CMat,
    pub m1_minus: CMat,
}

/// Monodromies conjugated back by R. Only non-zero integer β differences are
/// refused here; nearly equal β's are allowed.
pub fn r_frame_monodromies(p: &HGParams) -> Result<RFrameMonodromies> {
    let b = p.beta_head();
    for i in 0..b.len() {
        for j in i + 1..b.len() {
            let d = b[i] - b[j];
            let k = d.re.round();
            if k != 0.0 && (d - k).norm() < 1e-8 {
                return Err(Error::Resonance(format!("beta_{} - beta_{} = {d}", i + 1, j + 1)));
            }
        }
    }
    let rest: Vec<_> = validate(p, None)
        .into_iter()
        .filter(|v| v.kind != ViolationKind::BetaResonance)
        .collect();
    if !rest.is_empty() {
        return Err(Error::Validation(rest));
    }
    let d = connection_data_tol(p, 0.0)?;
    let tilde = assemble_monodromies(&multipliers(p)?.e, &d)?;
    let r = frame_matrix(p);
    let r_inv = inverse(&r)?;
    Ok(RFrameMonodromies {
        m0_plus: to_r_frame(&tilde.m0_plus, &r, &r_inv),
        m1_plus: to_r_frame(&tilde.m1_plus, &r, &r_inv),
        m0_minus: to_r_frame(&tilde.m0_minus, &r, &r_inv),
        m1_minus: to_r_frame(&tilde.m1_minus, &r, &r_inv),
        tilde,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cplx::{c, det, r};
    use crate::model::build_okubo;
    use crate::series::floquet_matrix;
    use crate::special::gamma;
    use crate::transport::{monodromy_numeric, LoopSpec};

    fn p2(rho: CNum) -> HGParams {
        HGParams::new(vec![r(0.3), r(0.7)], vec![r(1.2)], Rho::Finite(rho)).unwrap()
    }

    fn p3(rho: CNum) -> HGParams {
        HGParams::new(
            vec![c(0.31, 0.1), r(0.77), c(0.15, -0.05)],
            vec![r(1.23), c(1.61, 0.07)],
            Rho::Finite(rho),
        )
        .unwrap()
    }

    fn p4(rho: CNum) -> HGParams {
        HGParams::new(
            vec![c(0.31, 0.1), r(0.77), c(0.15, -0.05), r(0.42)],
            vec![r(1.23), c(1.61, 0.07), r(1.37)],
            Rho::Finite(rho),
        )
        .unwrap()
    }

    #[test]
    fn shapes_and_determinant() {
        let p = p3(c(2.3, 0.4));
        let m = monodromies(&p).unwrap();
        let e = multipliers(&p).unwrap().e;
        let d = det(&m.m0_plus).unwrap();
        assert!((d - e[0] * e[1]).norm() < 1e-12 * d.norm());
        for i in 0..3 {
            for j in 0..3 {
                if i > j || (i < j && j < 2) {
                    assert_eq!(m.m0_plus[(i, j)], ZERO);
                }
            }
        }
        assert_eq!(m.m1_plus[(0, 1)], ZERO);
        assert_eq!(m.m1_plus[(0, 0)], ONE);
    }

    #[test]
    fn connection_conjugates() {
        for p in [p2(c(2.45, 0.3)), p3(c(2.3, 0.4)), p4(c(3.1, -0.2))] {
            let m = monodromies(&p).unwrap();
            let cm = m.c.unwrap();
            let ci = inverse(&cm).unwrap();
            let a = &(&ci * &m.m0_plus) * &cm;
            let b = &(&ci * &m.m1_plus) * &cm;
            assert!(a.max_abs_diff(&m.m0_minus) < 1e-10 * m.m0_minus.max_abs().max(1.0));
            assert!(b.max_abs_diff(&m.m1_minus) < 1e-10 * m.m1_minus.max_abs().max(1.0));
        }
    }

    #[test]
    fn matches_numeric_monodromy() {
        for p in [p2(r(2.3)), p3(c(2.3, 0.4)), p4(c(3.1, -0.2))] {
            let sys = build_okubo(&p).unwrap();
            let f = floquet_matrix(&p, r(0.5)).unwrap().matrix;
            let m = monodromies(&p).unwrap();
            let n0 = monodromy_numeric(&sys, &f, &LoopSpec::new(r(0.5), ZERO), 1e-10).unwrap();
            let n1 = monodromy_numeric(&sys, &f, &LoopSpec::new(r(0.5), ONE), 1e-10).unwrap();
            assert!(n0.matrix.max_abs_diff(&m.m0_plus) < 1e-6, "{}", n0.matrix.max_abs_diff(&m.m0_plus));
            assert!(n1.matrix.max_abs_diff(&m.m1_plus) < 1e-6);
        }
    }

    #[test]
    fn assembly_identities() {
        for sign in [Sign::Plus, Sign::Minus] {
            let p = p3(c(-2.3, 0.4));
            let s = stokes_confluent(&p, sign).unwrap();
            let m = monodromies(&p).unwrap();
            let (m0, m1) = match sign {
                Sign::Plus => (&m.m0_plus, &m.m1_plus),
                Sign::Minus => (&m.m0_minus, &m.m1_minus),
            };
            let (a, b) = confluent_monodromies(&p, m0, m1, sign).unwrap();
            assert!(a.max_abs_diff(&s.m0) < 1e-10 * a.max_abs().max(1.0));
            assert!(b.max_abs_diff(&s.m_inv_rho) < 1e-10 * b.max_abs().max(1.0));
            for i in 0..3 {
                assert_eq!(s.s_upper[(i, i)], ONE);
                assert_eq!(s.s_lower[(i, i)], ONE);
            }
            assert_eq!(s.s_upper[(2, 0)], ZERO);
            assert_eq!(s.s_lower[(0, 2)], ZERO);
            assert_eq!(s.s_upper[(0, 1)], ZERO);
        }
    }

    #[test]
    fn xi_route_equals_gamma_form() {
        for (p, sign) in [
            (p3(c(2.3, 0.4)), Sign::Plus),
            (p4(c(12.0, 5.0)), Sign::Plus),
            (p3(c(-2.3, 0.4)), Sign::Minus),
            (p4(c(-15.0, -3.0)), Sign::Minus),
        ] {
            let a = stokes_confluent(&p, sign).unwrap();
            let b = stokes_gamma_form(&p, sign).unwrap();
            assert!(a.s_upper.max_abs_diff(&b.s_upper) < 1e-10 * a.s_upper.max_abs());
            assert!(a.s_lower.max_abs_diff(&b.s_lower) < 1e-10 * a.s_lower.max_abs());
        }
    }

    #[test]
    fn limit_values_n2() {
        let p = p2(r(2.3));
        let l = stokes_limit(&p).unwrap();
        let g = |x: f64| gamma(r(x)).unwrap().value;
        let want12 = -2.0 * PI * IM * exp_pi_i(r(2.4)) / (g(0.9) * g(0.5));
        let want21 = -2.0 * PI * IM / (g(0.1) * g(0.5));
        assert!((l.s_upper[(0, 1)] - want12).norm() < 1e-13);
        assert!((l.s_lower[(1, 0)] - want21).norm() < 1e-13);
        let far = stokes_confluent(&p.with_rho(Rho::Finite(r(1000.0))), Sign::Plus).unwrap();
        let d = far.s_upper.max_abs_diff(&l.s_upper).max(far.s_lower.max_abs_diff(&l.s_lower));
        assert!(d < 1e-2 * l.s_upper.max_abs().max(l.s_lower.max_abs()));
    }

    #[test]
    fn routes_agree() {
        for (rho, sign) in [
            (r(10.0), Sign::Plus),
            (r(100.0), Sign::Plus),
            (CNum::from_polar(10.0, PI / 4.0), Sign::Plus),
            (r(-10.0), Sign::Minus),
            (c(-100.0, 1e-9), Sign::Minus),
        ] {
            for p in [p2(rho), p3(rho), p4(rho)] {
                let lim = stokes_limit(&p).unwrap();
                let a = conjugation_route(&p, sign, &lim).unwrap();
                let b = stokes_confluent(&p, sign).unwrap();
                let scale = b.s_upper.max_abs().max(b.s_lower.max_abs());
                assert!(a.s_upper.max_abs_diff(&b.s_upper) < 1e-10 * scale, "{rho} {sign:?}");
                assert!(a.s_lower.max_abs_diff(&b.s_lower) < 1e-10 * scale);
            }
        }
        let p = p3(r(10.0));
        let id = StokesPair { s_upper: CMat::identity(3), s_lower: CMat::identity(3) };
        let out = conjugation_route(&p, Sign::Plus, &id).unwrap();
        assert_eq!(out.s_upper, CMat::identity(3));
    }

    #[test]
    fn r_frame_survives_beta_collision() {
        let eps = 1e-9;
        let p = HGParams::new(
            vec![r(0.31), r(0.77), r(0.15)],
            vec![r(1.23), r(1.23 + eps)],
            Rho::Finite(c(2.3, 0.4)),
        )
        .unwrap();
        assert!(monodromies(&p).is_err());
        let out = r_frame_monodromies(&p).unwrap();
        assert!(out.tilde.m0_plus.max_abs() > 1e8);
        for m in [&out.m0_plus, &out.m1_plus, &out.m0_minus, &out.m1_minus] {
            assert!(m.is_finite() && m.max_abs() < 1e6, "{}", m.max_abs());
        }
    }

    #[test]
    fn degenerate_example_is_refused_on_minus_side() {
        let p = p2(r(2.3));
        assert!(stokes_confluent(&p, Sign::Plus).is_ok());
        assert!(stokes_confluent(&p, Sign::Minus).is_err());
    }
}
