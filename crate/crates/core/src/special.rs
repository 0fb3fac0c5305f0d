//! Complex Gamma function, Pochhammer symbols and stable Gamma quotients.

use crate::cplx::{Branch, CNum, ONE};
use crate::error::{Error, Result};
use std::f64::consts::PI;

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

// B_0 .. B_18
const BERNOULLI: [f64; 19] = [
    1.0,
    -0.5,
    1.0 / 6.0,
    0.0,
    -1.0 / 30.0,
    0.0,
    1.0 / 42.0,
    0.0,
    -1.0 / 30.0,
    0.0,
    5.0 / 66.0,
    0.0,
    -691.0 / 2730.0,
    0.0,
    7.0 / 6.0,
    0.0,
    -3617.0 / 510.0,
    0.0,
    43867.0 / 798.0,
];

pub const POLE_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GammaEval {
    pub value: CNum,
    /// A logarithm of `value`; its imaginary part is continuous in the right half-plane.
    pub log_value: CNum,
}

/// Distance from `z` to the nearest non-positive integer, if that is the closest pole.
pub fn pole_distance(z: CNum) -> (i64, f64) {
    let k = z.re.round().min(0.0);
    (k as i64, (z - CNum::new(k, 0.0)).norm())
}

fn check_pole(z: CNum) -> Result<()> {
    let (pole, distance) = pole_distance(z);
    if distance < POLE_TOL {
        return Err(Error::GammaPole { z, pole, distance });
    }
    Ok(())
}

/// e^{2πix}, reducing the real part first.
pub fn exp_2pi_i(x: CNum) -> CNum {
    let re = x.re - x.re.round();
    let m = (-2.0 * PI * x.im).exp();
    let (s, c) = (2.0 * PI * re).sin_cos();
    CNum::new(m * c, m * s)
}

/// e^{πix}.
pub fn exp_pi_i(x: CNum) -> CNum {
    let re = x.re - 2.0 * (x.re / 2.0).round();
    let m = (-PI * x.im).exp();
    let (s, c) = (PI * re).sin_cos();
    CNum::new(m * c, m * s)
}

/// sin(πz) with the real part reduced mod 2.
pub fn sin_pi(z: CNum) -> CNum {
    let x = z.re - 2.0 * (z.re / 2.0).round();
    let y = PI * z.im;
    let (s, c) = (PI * x).sin_cos();
    CNum::new(s * y.cosh(), c * y.sinh())
}

fn ln_sin_pi(z: CNum) -> CNum {
    if z.im.abs() < 20.0 {
        return sin_pi(z).ln();
    }
    let iz = CNum::new(0.0, 1.0) * z;
    if z.im > 0.0 {
        // sin(πz) = (i/2) e^{−iπz} (1 − e^{2πiz})
        -PI * iz + CNum::new(0.0, 0.5).ln() + (ONE - exp_2pi_i(z)).ln()
    } else {
        PI * iz + CNum::new(0.0, -0.5).ln() + (ONE - exp_2pi_i(-z)).ln()
    }
}

fn lanczos_ln(z: CNum) -> CNum {
    let zm = z - 1.0;
    let mut x = CNum::new(LANCZOS[0], 0.0);
    for (i, &p) in LANCZOS.iter().enumerate().skip(1) {
        x += p / (zm + i as f64);
    }
    let t = zm + LANCZOS_G + 0.5;
    0.5 * (2.0 * PI).ln() + (zm + 0.5) * t.ln() - t + x.ln()
}

fn stirling_ln(z: CNum) -> CNum {
    let mut s = (z - 0.5) * z.ln() - z + 0.5 * (2.0 * PI).ln();
    let zi = z.inv();
    let z2 = zi * zi;
    let mut p = zi;
    for k in 1..=8 {
        let m = 2 * k;
        s += p * (BERNOULLI[m] / ((m * (m - 1)) as f64));
        p *= z2;
    }
    s
}

fn ln_gamma_raw(z: CNum) -> CNum {
    if z.re < 0.5 {
        PI.ln() - ln_sin_pi(z) - ln_gamma_raw(ONE - z)
    } else if z.norm() > 10.0 {
        stirling_ln(z)
    } else {
        lanczos_ln(z)
    }
}

pub fn ln_gamma(z: CNum) -> Result<CNum> {
    check_pole(z)?;
    Ok(ln_gamma_raw(z))
}

/// ln Γ with a caller-chosen pole tolerance.
pub fn ln_gamma_tol(z: CNum, tol: f64) -> Result<CNum> {
    let (pole, distance) = pole_distance(z);
    if distance < tol {
        return Err(Error::GammaPole { z, pole, distance });
    }
    Ok(ln_gamma_raw(z))
}

pub fn gamma(z: CNum) -> Result<GammaEval> {
    check_pole(z)?;
    let log_value = ln_gamma_raw(z);
    Ok(GammaEval {
        value: log_value.exp(),
        log_value,
    })
}

/// Sum of ln Γ over `num` minus the sum over `den`.
pub fn ln_gamma_quotient(num: &[CNum], den: &[CNum]) -> Result<CNum> {
    let mut s = CNum::new(0.0, 0.0);
    for &z in num {
        s += ln_gamma(z)?;
    }
    for &z in den {
        s -= ln_gamma(z)?;
    }
    Ok(s)
}

/// 1/Γ(z), zero at the poles.
pub fn rgamma(z: CNum) -> CNum {
    let (_, d) = pole_distance(z);
    if d == 0.0 {
        return CNum::new(0.0, 0.0);
    }
    (-ln_gamma_raw(z)).exp()
}

pub fn pochhammer(a: CNum, k: usize) -> CNum {
    (0..k).fold(ONE, |p, i| p * (a + i as f64))
}

fn bernoulli_poly(m: usize, x: CNum) -> CNum {
    let mut s = CNum::new(0.0, 0.0);
    let mut binom = 1.0;
    for j in 0..=m {
        if BERNOULLI[j] != 0.0 {
            s += binom * BERNOULLI[j] * x.powu((m - j) as u32);
        }
        binom = binom * (m - j) as f64 / (j + 1) as f64;
    }
    s
}

/// ρ^{a−b} Γ(b+ρ)/Γ(a+ρ), with ρ^{a−b} taken on `branch`.
pub fn gamma_ratio(a: CNum, b: CNum, rho: CNum, branch: Branch) -> Result<CNum> {
    if a == b {
        return Ok(ONE);
    }
    check_pole(a + rho)?;
    check_pole(b + rho)?;
    let shift = a.norm().max(b.norm());
    let principal = rho.ln();
    let log_rho = branch.ln(rho)?;
    if rho.norm() >= 30.0 + 5.0 * shift && principal.im.abs() <= 0.9 * PI {
        // ln Γ(ρ+b) − ln Γ(ρ+a) − (b−a) ln ρ = Σ (−1)^{k+1}(B_{k+1}(b) − B_{k+1}(a)) / (k(k+1) ρ^k)
        let ri = rho.inv();
        let mut p = ri;
        let mut s = CNum::new(0.0, 0.0);
        for k in 1..=17usize {
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            let t = p * sign * (bernoulli_poly(k + 1, b) - bernoulli_poly(k + 1, a))
                / (k * (k + 1)) as f64;
            s += t;
            if t.norm() < 1e-18 * (1.0 + s.norm()) {
                break;
            }
            p *= ri;
        }
        return Ok((s + (a - b) * (log_rho - principal)).exp());
    }
    Ok((ln_gamma_raw(b + rho) - ln_gamma_raw(a + rho) + (a - b) * log_rho).exp())
}
