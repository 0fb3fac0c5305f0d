//! Frobenius series for the Floquet columns at s = 0 and s = 1, and the
//! hypergeometric series they are built from.

use crate::cplx::{Branch, CMat, CNum, ONE, ZERO};
use crate::error::{Error, Result};
use crate::model::{ensure_valid, HGParams, Rho};
use crate::special::pole_distance;

/// Points farther than this from the expansion centre are refused.
pub const MAX_RADIUS: f64 = 0.9;
pub const DEFAULT_TOL: f64 = 1e-16;
const MAX_TERMS: usize = 8192;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeriesValue {
    pub value: CNum,
    pub trunc_bound: f64,
    pub terms: usize,
}

fn check_radius(center: CNum, s: CNum) -> Result<f64> {
    let d = (s - center).norm();
    if d > MAX_RADIUS {
        return Err(Error::Radius {
            center,
            distance: d,
            limit: MAX_RADIUS,
        });
    }
    Ok(d)
}

/// Generalized hypergeometric series Σ (num)_k / ((den)_k k!) s^k.
pub fn pfq(num: &[CNum], den: &[CNum], s: CNum, tol: f64) -> Result<SeriesValue> {
    check_radius(ZERO, s)?;
    for b in den {
        let (pole, distance) = pole_distance(*b);
        if distance == 0.0 {
            return Err(Error::GammaPole { z: *b, pole, distance });
        }
    }
    let mut sum = ONE;
    let mut term = ONE;
    let mut abs_sum = 1.0;
    let mut quiet = 0;
    let mut last_ratio = s.norm();
    for k in 0..MAX_TERMS {
        let kf = k as f64;
        let mut ratio = s / (kf + 1.0);
        for a in num {
            ratio *= a + kf;
        }
        for b in den {
            ratio /= b + kf;
        }
        let next = term * ratio;
        if term.norm() > 0.0 {
            last_ratio = (next.norm() / term.norm()).max(s.norm());
        }
        term = next;
        sum += term;
        abs_sum += term.norm();
        if term.norm() <= tol * sum.norm() {
            quiet += 1;
            if quiet >= 3 {
                let q = last_ratio.min(0.99);
                return Ok(SeriesValue {
                    value: sum,
                    trunc_bound: term.norm() * q / (1.0 - q) + 4.0 * f64::EPSILON * abs_sum,
                    terms: k + 2,
                });
            }
        } else {
            quiet = 0;
        }
    }
    Err(Error::SeriesDivergence { terms: MAX_TERMS })
}

/// Coefficients of ∏(x + r_i) in powers of x, lowest first.
fn poly_from_roots(shifts: &[CNum]) -> Vec<CNum> {
    let mut c = vec![ONE];
    for r in shifts {
        let mut next = vec![ZERO; c.len() + 1];
        for (k, ck) in c.iter().enumerate() {
            next[k] += ck * r;
            next[k + 1] += ck;
        }
        c = next;
    }
    c
}

/// Stirling numbers of the second kind S(k, m) for k, m ≤ n.
fn stirling2(n: usize) -> Vec<Vec<f64>> {
    let mut t = vec![vec![0.0; n + 1]; n + 1];
    t[0][0] = 1.0;
    for k in 1..=n {
        for m in 1..=k {
            t[k][m] = m as f64 * t[k - 1][m] + t[k - 1][m - 1];
        }
    }
    t
}

/// The scalar operator s(δ+α₁)…(δ+α_n) − (δ+β₁−1)…(δ+β_n−1), δ = s d/ds,
/// applied to w given by its derivatives w, w′, …, w⁽ⁿ⁾ at s.
/// Returns the value and the sum of the moduli of its terms.
pub fn hg_operator(alpha: &[CNum], beta: &[CNum], s: CNum, derivs: &[CNum]) -> Result<(CNum, f64)> {
    let n = alpha.len();
    if beta.len() != n || derivs.len() < n + 1 {
        return Err(Error::Invalid(format!(
            "operator of order {n} needs {n} betas and {} derivatives",
            n + 1
        )));
    }
    let st = stirling2(n);
    // δ^k w = Σ_m S(k, m) s^m w⁽ᵐ⁾
    let delta: Vec<CNum> = (0..=n)
        .map(|k| (0..=k).map(|m| derivs[m] * s.powu(m as u32) * st[k][m]).sum())
        .collect();
    let p = poly_from_roots(alpha);
    let q = poly_from_roots(&beta.iter().map(|b| b - 1.0).collect::<Vec<_>>());
    let mut value = ZERO;
    let mut scale = 0.0;
    for k in 0..=n {
        let a = s * p[k] * delta[k];
        let b = q[k] * delta[k];
        value += a - b;
        scale += a.norm() + b.norm();
    }
    Ok((value, scale))
}

/// Residual of the operator for (α, β) applied to s^c·w, where w is the
/// analytic solution nF_{n−1}(α+c; β₁+c, …, β_{n−1}+c; s) of the operator
/// for (α+c, β+c) with β_n = 1 − c. Relative to the size of the terms.
pub fn shift_identity_residual(alpha: &[CNum], beta_head: &[CNum], c: CNum, s: CNum) -> Result<f64> {
    let n = alpha.len();
    if beta_head.len() + 1 != n {
        return Err(Error::Invalid("need n alphas and n - 1 betas".into()));
    }
    let num: Vec<CNum> = alpha.iter().map(|a| a + c).collect();
    let den: Vec<CNum> = beta_head.iter().map(|b| b + c).collect();
    // g⁽ᵐ⁾ = ∏(num)_m / ∏(den)_m · pFq(num + m; den + m; s)
    let mut g = Vec::with_capacity(n + 1);
    for m in 0..=n {
        let mf = m as f64;
        let mut pref = ONE;
        for a in &num {
            pref *= crate::special::pochhammer(*a, m);
        }
        for b in &den {
            pref /= crate::special::pochhammer(*b, m);
        }
        let shifted_num: Vec<CNum> = num.iter().map(|a| a + mf).collect();
        let shifted_den: Vec<CNum> = den.iter().map(|b| b + mf).collect();
        g.push(pref * pfq(&shifted_num, &shifted_den, s, 1e-17)?.value);
    }
    // w = s^c g by Leibniz, (s^c)⁽ˡ⁾ = c(c−1)…(c−l+1) s^{c−l}
    let br = Branch::PRINCIPAL;
    let mut w = vec![ZERO; n + 1];
    for (m, wm) in w.iter_mut().enumerate() {
        let mut binom = 1.0;
        let mut falling = ONE;
        for l in 0..=m {
            *wm += binom * falling * br.pow(s, c - l as f64)? * g[m - l];
            binom = binom * (m - l) as f64 / (l + 1) as f64;
            falling *= c - l as f64;
        }
    }
    let mut beta = beta_head.to_vec();
    beta.push(ONE - c);
    let (value, scale) = hg_operator(alpha, &beta, s, &w)?;
    Ok(value.norm() / scale)
}

/// Coefficients c_k of the column-n series, stored as c_k / k!.
#[derive(Clone, Debug, PartialEq)]
pub struct SeriesAtOne {
    scaled: Vec<CNum>,
}

impl SeriesAtOne {
    pub fn order(&self) -> usize {
        self.scaled.len() - 1
    }

    pub fn c(&self, k: usize) -> CNum {
        (1..=k).fold(self.scaled[k], |acc, m| acc * m as f64)
    }

    /// c_k / k!, which stays bounded for large k.
    pub fn c_over_factorial(&self, k: usize) -> CNum {
        self.scaled[k]
    }
}

/// c_k = Σ over compositions i₁+…+i_{n−1} = k of
/// ∏_j (Σ_{l≤j}(β_l−α_l) + Σ_{l<j} i_l)_{i_j} (β_j − α_{j+1})_{i_j} / i_j!.
pub fn ck_coeffs(p: &HGParams, kmax: usize) -> SeriesAtOne {
    let n = p.n();
    let (a, b) = (p.alpha(), p.beta_head());
    // d[S] holds the partial sum over the first j parts with total S, divided by S!.
    let mut d = vec![ZERO; kmax + 1];
    d[0] = ONE;
    let mut x = ZERO;
    for j in 0..n - 1 {
        x += b[j] - a[j];
        let y = b[j] - a[j + 1];
        let mut next = vec![ZERO; kmax + 1];
        for s in 0..=kmax {
            if d[s] == ZERO {
                continue;
            }
            let sf = s as f64;
            let mut h = ONE;
            for i in 0..=kmax - s {
                next[s + i] += d[s] * h;
                let fi = i as f64;
                h *= (x + sf + fi) / (sf + 1.0 + fi) * (y + fi) / (fi + 1.0);
            }
        }
        d = next;
    }
    SeriesAtOne { scaled: d }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ColumnValue {
    pub value: Vec<CNum>,
    /// Series sums without the (s − centre)^exponent prefactor.
    pub stripped: Vec<CNum>,
    pub trunc_error: f64,
}

/// One solution column: component i is (s − c)^exponent Σ_k coeffs[i][k] (s − c)^k.
#[derive(Clone, Debug, PartialEq)]
pub struct FrobeniusColumn {
    pub exponent: CNum,
    pub center: CNum,
    pub coeffs: Vec<Vec<CNum>>,
    /// Radius the truncation was chosen for.
    pub radius: f64,
}

impl FrobeniusColumn {
    pub fn terms(&self) -> usize {
        self.coeffs[0].len()
    }

    pub fn eval(&self, s: CNum, branch: Branch) -> Result<ColumnValue> {
        let d = check_radius(self.center, s)?;
        if d > self.radius * (1.0 + 1e-12) {
            return Err(Error::Radius {
                center: self.center,
                distance: d,
                limit: self.radius,
            });
        }
        let u = s - self.center;
        let pref = branch.pow(u, self.exponent)?;
        let mut stripped = Vec::with_capacity(self.coeffs.len());
        let mut err: f64 = 0.0;
        for c in &self.coeffs {
            let sum = c.iter().rev().fold(ZERO, |acc, x| acc * u + x);
            let abs: f64 = c
                .iter()
                .enumerate()
                .map(|(k, x)| x.norm() * d.powi(k as i32))
                .sum();
            let kk = c.len() - 1;
            let last = c[kk].norm() * d.powi(kk as i32);
            let ratio = if kk > 0 && c[kk - 1].norm() > 0.0 {
                (c[kk].norm() / c[kk - 1].norm()) * d
            } else {
                d
            };
            let q = ratio.max(d).min(0.99);
            err = err.max(last * q / (1.0 - q) + 4.0 * f64::EPSILON * abs);
            stripped.push(sum);
        }
        Ok(ColumnValue {
            value: stripped.iter().map(|x| x * pref).collect(),
            stripped,
            trunc_error: err * pref.norm(),
        })
    }
}

fn converged(coeffs: &[Vec<CNum>], k: usize, r: f64, acc: &[f64], tol: f64) -> bool {
    coeffs
        .iter()
        .zip(acc)
        .all(|(c, a)| c[k].norm() * r.powi(k as i32) <= tol * a)
}

/// Series table of ṽ⁺_{·j} at s = 0 (j < n, zero-based), valid for |s| ≤ radius.
pub fn zero_series(p: &HGParams, j: usize, radius: f64, tol: f64) -> Result<FrobeniusColumn> {
    let n = p.n();
    if j + 1 >= n {
        return Err(Error::Invalid(format!("column {j} is not a column at s = 0")));
    }
    ensure_valid(p, None)?;
    let rho = p.finite_rho()?;
    let beta = p.beta_full()?;
    let bj = beta[j];
    let num: Vec<CNum> = p.alpha().iter().map(|a| a + 1.0 - bj).collect();
    let den: Vec<CNum> = (0..n).filter(|&m| m != j).map(|m| beta[m] + 1.0 - bj).collect();
    let r = radius.min(MAX_RADIUS);
    let mut coeffs = vec![Vec::new(); n];
    let mut acc = vec![0.0; n];
    let mut t = ONE;
    let mut quiet = 0;
    for k in 0..MAX_TERMS {
        let kf = k as f64;
        let mut mult = ONE;
        for i in 0..n {
            if i > 0 {
                mult *= kf + beta[i - 1] - bj;
            }
            let v = t * mult;
            acc[i] += v.norm() * r.powi(k as i32);
            coeffs[i].push(v);
        }
        if k >= 2 && converged(&coeffs, k, r, &acc, tol) {
            quiet += 1;
            if quiet >= 3 {
                return Ok(FrobeniusColumn {
                    exponent: ONE - bj + rho,
                    center: ZERO,
                    coeffs,
                    radius: r,
                });
            }
        } else {
            quiet = 0;
        }
        let mut ratio = ONE / (kf + 1.0);
        for a in &num {
            ratio *= a + kf;
        }
        for b in &den {
            ratio /= b + kf;
        }
        t *= ratio;
    }
    Err(Error::SeriesDivergence { terms: MAX_TERMS })
}

/// Series table of ṽ⁺_{·n} at s = 1, valid for |s − 1| ≤ radius.
pub fn one_series(p: &HGParams, radius: f64, tol: f64) -> Result<FrobeniusColumn> {
    ensure_valid(p, None)?;
    let n = p.n();
    let rho = p.finite_rho()?;
    let e = p.gamma() + rho;
    let b = p.beta_head();
    let r = radius.min(MAX_RADIUS);
    let mut kmax = 48;
    while kmax <= MAX_TERMS {
        let c = ck_coeffs(p, kmax);
        // d_k = (−1)^k c_k / (e+1)_{k+n−1}, built as (c_k/k!)·k!/(e+1)_{k+n−1}.
        let mut w = (0..n - 1).fold(ONE, |acc, m| acc / (e + 1.0 + m as f64));
        let len = kmax + n;
        let mut a = vec![ZERO; len];
        for k in 0..=kmax {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            a[k + n - 1] = c.c_over_factorial(k) * w * sign;
            w *= (k as f64 + 1.0) / (e + (k + n) as f64);
        }
        let mut comps = Vec::with_capacity(n);
        comps.push(a.clone());
        // v_{i+1} = (s d/ds + β_i − 1 − ρ) v_i with s d/ds = (1+u) d/du on u^{e+m}
        for bi in b.iter().take(n - 1) {
            let prev = comps.last().unwrap();
            let mut next = vec![ZERO; prev.len() - 1];
            for m in 0..next.len() {
                let mf = m as f64;
                next[m] = (e + mf + 1.0) * prev[m + 1] + (e + mf + bi - 1.0 - rho) * prev[m];
            }
            comps.push(next);
        }
        let coeffs: Vec<Vec<CNum>> = comps.into_iter().map(|c| c[..=kmax].to_vec()).collect();
        let acc: Vec<f64> = coeffs
            .iter()
            .map(|c| c.iter().enumerate().map(|(k, x)| x.norm() * r.powi(k as i32)).sum())
            .collect();
        if (kmax - 2..=kmax).all(|k| converged(&coeffs, k, r, &acc, tol)) {
            return Ok(FrobeniusColumn {
                exponent: e,
                center: ONE,
                coeffs,
                radius: r,
            });
        }
        kmax *= 2;
    }
    Err(Error::SeriesDivergence { terms: MAX_TERMS })
}

/// ṽ⁺_{·j}(s, ρ) for j < n (zero-based), with s^{1−β_j+ρ} on `branch`.
pub fn okubo_column_zero(p: &HGParams, j: usize, s: CNum, branch: Branch) -> Result<ColumnValue> {
    let d = check_radius(ZERO, s)?;
    zero_series(p, j, d, DEFAULT_TOL)?.eval(s, branch)
}

/// ṽ⁺_{·n}(s, ρ), with (s−1)^{γ+ρ} on `branch`.
pub fn okubo_column_one(p: &HGParams, s: CNum, branch: Branch) -> Result<ColumnValue> {
    let d = check_radius(ONE, s)?;
    one_series(p, d, DEFAULT_TOL)?.eval(s, branch)
}

/// ỹ⁺_{·j}(z, ρ) of the confluent family (j < n, zero-based), z^{1−β_j} on `branch`.
pub fn confluent_column(p: &HGParams, j: usize, z: CNum, branch: Branch) -> Result<ColumnValue> {
    let rho = p.finite_rho()?;
    let s = rho * z;
    let d = check_radius(ZERO, s)?;
    let table = zero_series(p, j, d, DEFAULT_TOL)?;
    let inner = table.eval(s, Branch::PRINCIPAL)?;
    let pref = branch.pow(z, ONE - p.beta_head()[j])?;
    Ok(ColumnValue {
        value: inner.stripped.iter().map(|x| x * pref).collect(),
        trunc_error: inner.trunc_error / branch.pow(s, table.exponent)?.norm() * pref.norm(),
        stripped: inner.stripped,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct FloquetValue {
    pub matrix: CMat,
    /// Same columns without the power prefactors s^{1−β_j+ρ}, (s−1)^{γ+ρ}.
    pub stripped: CMat,
    pub trunc_error: f64,
}

/// Ṽ⁺(s) at a point inside both disks, principal branches for all prefactors
/// (so arg(s − 1) = π on the real segment (0, 1)).
pub fn floquet_matrix(p: &HGParams, s: CNum) -> Result<FloquetValue> {
    floquet_matrix_tol(p, s, DEFAULT_TOL)
}

/// As [`floquet_matrix`] with an explicit relative truncation tolerance.
pub fn floquet_matrix_tol(p: &HGParams, s: CNum, tol: f64) -> Result<FloquetValue> {
    let n = p.n();
    if p.rho() == Rho::Infinity {
        return Err(Error::Invalid("Floquet basis needs finite rho".into()));
    }
    let mut m = CMat::zeros(n, n);
    let mut st = CMat::zeros(n, n);
    let mut err: f64 = 0.0;
    let d0 = check_radius(ZERO, s)?;
    for j in 0..n - 1 {
        let c = zero_series(p, j, d0, tol)?.eval(s, Branch::PRINCIPAL)?;
        m.set_column(j, &c.value);
        st.set_column(j, &c.stripped);
        err = err.max(c.trunc_error);
    }
    let c = one_series(p, check_radius(ONE, s)?, tol)?.eval(s, Branch::PRINCIPAL)?;
    m.set_column(n - 1, &c.value);
    st.set_column(n - 1, &c.stripped);
    Ok(FloquetValue {
        matrix: m,
        stripped: st,
        trunc_error: err.max(c.trunc_error),
    })
}
