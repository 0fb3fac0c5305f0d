//! Borel–Laplace summation for the limit system z²ψ′ = (B + zA)ψ: formal
//! transformation, its Borel transform U, continuation of U along rays, the
//! Laplace integral and the Stokes matrices between adjacent sectors. Also the
//! finite-ρ transforms T^±(z, ρ) written as integrals of the same U.

use std::f64::consts::{FRAC_PI_4, PI, TAU};
use std::sync::OnceLock;

use crate::closed_form::StokesPair;
use crate::cplx::{eig, expm, lu_solve, CMat, CNum, ONE, ZERO};
use crate::error::{Error, Result};
use crate::model::{build_companion, frame, BlockStructure, HGParams, Sign};
use crate::transport::{integrate, LinearSystem, PathSpec};

pub const MAX_ORDER: usize = 200;

/// T̂(z) = Σ T⁽ᵏ⁾ z^k, stored as T⁽ᵏ⁾/k! (the Borel coefficients).
#[derive(Clone, Debug, PartialEq)]
pub struct FormalTransform {
    pub a: CMat,
    pub b: BlockStructure,
    scaled: Vec<CMat>,
}

impl FormalTransform {
    pub fn order(&self) -> usize {
        self.scaled.len() - 1
    }

    /// T⁽ᵏ⁾ / k!.
    pub fn scaled(&self, k: usize) -> &CMat {
        &self.scaled[k]
    }

    /// T⁽ᵏ⁾ (overflows to infinity for very large k).
    pub fn coeff(&self, k: usize) -> CMat {
        let f: f64 = (1..=k).map(|m| m as f64).product();
        self.scaled[k].scale(CNum::new(f, 0.0))
    }

    pub fn a_d(&self) -> CMat {
        self.b.block_diagonal(&self.a)
    }
}

/// Solves (k X − A X + X A) = rhs for square A.
fn sylvester_shift(a: &CMat, k: f64, rhs: &CMat) -> Result<CMat> {
    let m = a.rows();
    let mut op = CMat::zeros(m * m, m * m);
    for p in 0..m {
        for q in 0..m {
            let col = p * m + q;
            // L(E_pq) = k E_pq − A E_pq + E_pq A
            op[(col, col)] += k;
            for i in 0..m {
                op[(i * m + q, col)] -= a[(i, p)];
            }
            for j in 0..m {
                op[(p * m + j, col)] += a[(q, j)];
            }
        }
    }
    let v = CMat::column_vector(rhs.as_slice());
    match lu_solve(&op, &v) {
        Ok(x) => {
            let rows: Vec<Vec<CNum>> = (0..m).map(|i| x.as_slice()[i * m..(i + 1) * m].to_vec()).collect();
            CMat::from_rows(&rows)
        }
        Err(Error::Singular { .. }) => {
            let mu = eig(a)?;
            let mut pair = String::from("unknown pair");
            for x in &mu {
                for y in &mu {
                    if (x - y - k).norm() < 1e-6 {
                        pair = format!("{x} and {y} differ by {k}");
                    }
                }
            }
            Err(Error::Resonance(format!("diagonal block eigenvalues {pair}")))
        }
        Err(e) => Err(e),
    }
}

/// Coefficients of the block-diagonalizing formal transformation with T⁽⁰⁾ = I.
pub fn formal_coeffs(a: &CMat, b: &BlockStructure, kmax: usize) -> Result<FormalTransform> {
    if kmax > MAX_ORDER {
        return Err(Error::Invalid(format!("order {kmax} above {MAX_ORDER}")));
    }
    let n = b.dim();
    if a.shape() != (n, n) {
        return Err(Error::DimensionMismatch {
            op: "formal_coeffs",
            left: a.shape(),
            right: (n, n),
        });
    }
    let ranges = b.ranges();
    let lam: Vec<CNum> = b.blocks.iter().map(|x| x.0).collect();
    let ad = b.block_diagonal(a);
    let mut scaled = vec![CMat::identity(n)];
    for k in 0..kmax {
        let u = &scaled[k];
        // (λ_i − λ_j)(k+1) Ŭ_{k+1,ij} = (k Ŭ_k − A Ŭ_k + Ŭ_k A_D)_{ij}
        let rhs = &(&u.scale(CNum::new(k as f64, 0.0)) - &(a * u)) + &(u * &ad);
        let mut next = CMat::zeros(n, n);
        for (bi, ri) in ranges.iter().enumerate() {
            for (bj, rj) in ranges.iter().enumerate() {
                if bi == bj {
                    continue;
                }
                let d = (lam[bi] - lam[bj]) * (k as f64 + 1.0);
                let blk = rhs.block(ri.start, ri.end, rj.start, rj.end).scale(d.inv());
                next.set_block(ri.start, rj.start, &blk);
            }
        }
        // diagonal blocks: (k+1)X − A_jj X + X A_jj = Σ_{l≠j} A_jl Ŭ_{k+1,lj}
        for (bj, rj) in ranges.iter().enumerate() {
            let ajj = a.block(rj.start, rj.end, rj.start, rj.end);
            let mut feed = CMat::zeros(rj.len(), rj.len());
            for (bl, rl) in ranges.iter().enumerate() {
                if bl == bj {
                    continue;
                }
                let ajl = a.block(rj.start, rj.end, rl.start, rl.end);
                let tlj = next.block(rl.start, rl.end, rj.start, rj.end);
                feed = &feed + &(&ajl * &tlj);
            }
            let x = sylvester_shift(&ajj, k as f64 + 1.0, &feed)?;
            next.set_block(rj.start, rj.start, &x);
        }
        scaled.push(next);
    }
    Ok(FormalTransform {
        a: a.clone(),
        b: b.clone(),
        scaled,
    })
}

/// U_{·j}(s) = Σ T⁽ᵏ⁾_{·j} s^k / k! near s = 0.
#[derive(Clone, Debug, PartialEq)]
pub struct BorelSeries {
    pub ft: FormalTransform,
    /// Convergence radius per block column: distance to the nearest λ_i − λ_j.
    pub radius: Vec<f64>,
}

impl BorelSeries {
    pub fn new(ft: FormalTransform) -> Self {
        let lam: Vec<CNum> = ft.b.blocks.iter().map(|x| x.0).collect();
        let radius = (0..lam.len())
            .map(|j| {
                lam.iter()
                    .enumerate()
                    .filter(|&(i, _)| i != j)
                    .map(|(_, l)| (l - lam[j]).norm())
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        BorelSeries { ft, radius }
    }

    /// Block column `block` of U at s, |s| ≤ 0.9·radius.
    pub fn eval(&self, block: usize, s: CNum) -> Result<CMat> {
        let r = self.radius[block];
        if s.norm() > 0.9 * r {
            return Err(Error::Radius {
                center: ZERO,
                distance: s.norm(),
                limit: 0.9 * r,
            });
        }
        let rg = self.ft.b.ranges()[block].clone();
        let n = self.ft.b.dim();
        let mut acc = CMat::zeros(n, rg.len());
        let mut pw = ONE;
        let mut quiet = 0;
        for k in 0..=self.ft.order() {
            let c = self.ft.scaled(k).block(0, n, rg.start, rg.end);
            let t = c.scale(pw);
            acc = &acc + &t;
            if t.max_abs() <= 1e-17 * acc.max_abs() {
                quiet += 1;
                if quiet >= 3 {
                    return Ok(acc);
                }
            } else {
                quiet = 0;
            }
            pw *= s;
        }
        // geometric tail from the last coefficient
        let q = s.norm() / r;
        let last = self.ft.scaled(self.ft.order()).block(0, n, rg.start, rg.end).max_abs();
        let tail = last * s.norm().powi(self.ft.order() as i32) * q / (1.0 - q);
        if s.norm() == 0.0 || tail <= 1e-13 * acc.max_abs().max(1.0) {
            return Ok(acc);
        }
        Err(Error::SeriesDivergence { terms: self.ft.order() })
    }
}

/// (s + λ_j − B) U′ = A U − U A_jj for block column j.
pub struct UColumnSystem {
    a: CMat,
    diag: Vec<CNum>,
    lam_j: CNum,
    ajj: CMat,
    sing: Vec<CNum>,
}

impl UColumnSystem {
    pub fn new(ft: &FormalTransform, block: usize) -> Self {
        let rg = ft.b.ranges()[block].clone();
        let lam_j = ft.b.blocks[block].0;
        let mut sing: Vec<CNum> = ft.b.blocks.iter().map(|x| x.0 - lam_j).collect();
        sing.dedup();
        UColumnSystem {
            a: ft.a.clone(),
            diag: ft.b.diag(),
            lam_j,
            ajj: ft.a.block(rg.start, rg.end, rg.start, rg.end),
            sing,
        }
    }
}

impl LinearSystem for UColumnSystem {
    fn dim(&self) -> usize {
        self.a.rows()
    }
    fn singularities(&self) -> Vec<CNum> {
        self.sing.clone()
    }
    fn apply(&self, x: CNum, y: &CMat) -> Result<CMat> {
        let mut m = &(&self.a * y) - &(y * &self.ajj);
        for (i, l) in self.diag.iter().enumerate() {
            let d = x + self.lam_j - l;
            if d.norm() == 0.0 {
                return Err(Error::SingularPoint { at: x });
            }
            for c in 0..m.cols() {
                m[(i, c)] /= d;
            }
        }
        Ok(m)
    }
}

/// Non-singular direction α with the singular rays arg(λ_i − λ_j).
#[derive(Clone, Debug, PartialEq)]
pub struct DirectionClass {
    pub alpha: f64,
    pub singular_rays: Vec<f64>,
}

pub const ANGULAR_CLEARANCE: f64 = 0.05;

fn angle_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

impl DirectionClass {
    pub fn new(alpha: f64, b: &BlockStructure) -> Result<Self> {
        let lam: Vec<CNum> = b.blocks.iter().map(|x| x.0).collect();
        let mut rays = Vec::new();
        for (i, x) in lam.iter().enumerate() {
            for (j, y) in lam.iter().enumerate() {
                if i != j {
                    rays.push((x - y).arg());
                }
            }
        }
        let dc = DirectionClass {
            alpha,
            singular_rays: rays,
        };
        let gap = dc.clearance();
        if gap < ANGULAR_CLEARANCE {
            return Err(Error::SingularDirection {
                alpha,
                clearance: gap,
            });
        }
        Ok(dc)
    }

    /// Angular distance from α to the nearest singular ray.
    pub fn clearance(&self) -> f64 {
        self.singular_rays
            .iter()
            .map(|r| angle_gap(self.alpha, *r))
            .fold(f64::INFINITY, f64::min)
    }

    /// Whether α and β are separated by no singular ray (going the short way).
    pub fn same_class(&self, beta: f64) -> bool {
        let d = (beta - self.alpha + PI).rem_euclid(TAU) - PI;
        self.singular_rays.iter().all(|r| {
            let e = (r - self.alpha + PI).rem_euclid(TAU) - PI;
            !(e != 0.0 && e.signum() == d.signum() && e.abs() < d.abs())
        })
    }
}

fn gauss_legendre_32() -> &'static [(f64, f64)] {
    static NODES: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    NODES.get_or_init(|| gauss_legendre(32))
}

/// Nodes and weights on [−1, 1] by Newton iteration on P_m.
pub fn gauss_legendre(m: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(m);
    for i in 0..m {
        let mut x = (PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=m {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = m as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    out
}

/// Panel edges on [0, len]: widths doubling from h0 up to hmax, then constant.
fn graded_panels(len: f64, h0: f64, hmax: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let (mut a, mut h) = (0.0, h0.min(len));
    while a < len {
        let b = (a + h).min(len);
        out.push((a, b));
        a = b;
        h = (2.0 * h).min(hmax);
    }
    out
}

fn nodes_on(panels: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let gl = gauss_legendre_32();
    let mut out = Vec::with_capacity(panels.len() * gl.len());
    for &(a, b) in panels {
        let (m, h) = (0.5 * (a + b), 0.5 * (b - a));
        for &(x, w) in gl {
            out.push((m + h * x, h * w));
        }
    }
    out
}

/// U_{·j} sampled along the ray s = t e^{iα} at increasing t.
#[derive(Clone, Debug, PartialEq)]
pub struct RaySamples {
    pub alpha: f64,
    pub block: usize,
    pub t: Vec<f64>,
    pub values: Vec<CMat>,
    pub err_est: f64,
}

impl RaySamples {
    pub fn build(bs: &BorelSeries, block: usize, alpha: f64, t: &[f64], tol: f64) -> Result<Self> {
        let dir = CNum::from_polar(1.0, alpha);
        let r0 = 0.5 * bs.radius[block];
        let sys = UColumnSystem::new(&bs.ft, block);
        let mut values = Vec::with_capacity(t.len());
        let mut err = 0.0;
        let mut pos = r0;
        let mut state: Option<CMat> = None;
        for &ti in t {
            if ti <= r0 {
                values.push(bs.eval(block, dir * ti)?);
                continue;
            }
            let y0 = match state.take() {
                Some(y) => y,
                None => bs.eval(block, dir * r0)?,
            };
            if ti - pos < 1e-12 * ti.max(1.0) {
                // graded nodes crowding an endpoint; U is smooth there
                values.push(y0.clone());
                state = Some(y0);
                continue;
            }
            let path = PathSpec::line(dir * pos, dir * ti).with_clearance(1e-3 * r0);
            let out = integrate(&sys, &path, &y0, tol)?;
            err += out.err_est;
            values.push(out.value.clone());
            state = Some(out.value);
            pos = ti;
        }
        Ok(RaySamples {
            alpha,
            block,
            t: t.to_vec(),
            values,
            err_est: err,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadratureConfig {
    pub ray_length: f64,
    pub first_panel: f64,
    pub max_panel: f64,
    /// Local tolerance of the U continuation.
    pub ode_tol: f64,
    /// Smallest admissible cos(arg z − α).
    pub min_cos: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig {
            ray_length: 40.0,
            first_panel: 1.0 / 128.0,
            max_panel: 1.0,
            ode_tol: 1e-12,
            min_cos: 0.05,
        }
    }
}

/// Sectorial solution T_{[α]}, Ψ_{[α]} built from cached samples of U along e^{iα}ℝ⁺.
#[derive(Clone, Debug, PartialEq)]
pub struct CanonicalSolution {
    pub direction: DirectionClass,
    pub config: QuadratureConfig,
    pub a: CMat,
    pub b: BlockStructure,
    weights: Vec<f64>,
    samples: Vec<RaySamples>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LaplaceValue {
    pub t: CMat,
    pub err: f64,
}

impl CanonicalSolution {
    pub fn new(bs: &BorelSeries, alpha: f64, config: QuadratureConfig) -> Result<Self> {
        let direction = DirectionClass::new(alpha, &bs.ft.b)?;
        let nodes = nodes_on(&graded_panels(config.ray_length, config.first_panel, config.max_panel));
        let t: Vec<f64> = nodes.iter().map(|x| x.0).collect();
        let samples = (0..bs.ft.b.blocks.len())
            .map(|j| RaySamples::build(bs, j, alpha, &t, config.ode_tol))
            .collect::<Result<Vec<_>>>()?;
        Ok(CanonicalSolution {
            direction,
            config,
            a: bs.ft.a.clone(),
            b: bs.ft.b.clone(),
            weights: nodes.iter().map(|x| x.1).collect(),
            samples,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.direction.alpha
    }

    pub fn contains(&self, z: CNum) -> bool {
        z.norm() > 0.0 && (z.arg() - self.alpha()).cos() > self.config.min_cos
    }

    /// T_{[α]}(z) = (1/z) ∫₀^{∞e^{iα}} U(s) e^{−s/z} ds.
    pub fn laplace_sum(&self, z: CNum) -> Result<LaplaceValue> {
        if !self.contains(z) {
            return Err(Error::OutsideHalfPlane { z, alpha: self.alpha() });
        }
        if z.norm() > 2.0 {
            return Err(Error::Invalid(format!("|z| = {} above 2", z.norm())));
        }
        let n = self.b.dim();
        let dir = CNum::from_polar(1.0, self.alpha());
        let cosang = (z.arg() - self.alpha()).cos();
        let mut t = CMat::zeros(n, n);
        let mut err: f64 = 0.0;
        for (j, rg) in self.b.ranges().iter().enumerate() {
            let smp = &self.samples[j];
            let mut acc = CMat::zeros(n, rg.len());
            for ((ti, u), w) in smp.t.iter().zip(&smp.values).zip(&self.weights) {
                let f = (-(dir * ti) / z).exp() * dir * w;
                acc.as_mut_slice().iter_mut().zip(u.as_slice()).for_each(|(a, x)| *a += x * f);
            }
            t.set_block(0, rg.start, &acc.scale(z.inv()));
            // tail beyond the ray length, with U frozen at its last sample
            let l = self.config.ray_length;
            let tail = smp.values.last().map_or(0.0, |u| u.max_abs()) * (-l * cosang / z.norm()).exp() / cosang;
            err = err.max(tail + smp.err_est);
        }
        Ok(LaplaceValue { t, err })
    }

    /// Ψ_{[α]} with z = exp(log_z); the branch of z^{A_jj} follows log_z.
    pub fn psi(&self, log_z: CNum) -> Result<CMat> {
        let z = log_z.exp();
        let t = self.laplace_sum(z)?.t;
        psi_from_t(&t, &self.a, &self.b, log_z)
    }
}

/// Ψ_{·j} = T_{·j} z^{A_jj} e^{−λ_j/z}.
pub fn psi_from_t(t: &CMat, a: &CMat, b: &BlockStructure, log_z: CNum) -> Result<CMat> {
    let z = log_z.exp();
    let n = b.dim();
    let mut psi = CMat::zeros(n, n);
    for (j, rg) in b.ranges().iter().enumerate() {
        let ajj = a.block(rg.start, rg.end, rg.start, rg.end);
        let zp = expm(&ajj.scale(log_z))?.scale((-b.blocks[j].0 / z).exp());
        let col = &t.block(0, n, rg.start, rg.end) * &zp;
        psi.set_block(0, rg.start, &col);
    }
    Ok(psi)
}

#[derive(Clone, Debug, PartialEq)]
pub struct StokesEstimate {
    pub matrix: CMat,
    /// Largest deviation of a single sample from the mean.
    pub spread: f64,
}

/// Ψ_{[α₁]}⁻¹ Ψ_{[α₂]} averaged over the sample points (given as log z).
pub fn stokes_from_laplace(
    cs1: &CanonicalSolution,
    cs2: &CanonicalSolution,
    log_z: &[CNum],
) -> Result<StokesEstimate> {
    if log_z.is_empty() {
        return Err(Error::Invalid("no sample points".into()));
    }
    let mut mats = Vec::new();
    for lz in log_z {
        let z = lz.exp();
        if !cs1.contains(z) || !cs2.contains(z) {
            return Err(Error::Sector(format!(
                "z = {z} is not in both sectors (alpha = {}, {})",
                cs1.alpha(),
                cs2.alpha()
            )));
        }
        let p1 = cs1.psi(*lz)?;
        let p2 = cs2.psi(*lz)?;
        mats.push(lu_solve(&p1, &p2)?);
    }
    let n = mats[0].rows();
    let mut mean = CMat::zeros(n, n);
    for m in &mats {
        mean = &mean + m;
    }
    let mean = mean.scale(CNum::new(1.0 / mats.len() as f64, 0.0));
    let spread = mats.iter().map(|m| m.max_abs_diff(&mean)).fold(0.0, f64::max);
    Ok(StokesEstimate { matrix: mean, spread })
}

#[derive(Clone, Debug, PartialEq)]
pub struct LaplaceStokes {
    /// Tilde frame, comparable with the closed forms.
    pub pair: StokesPair,
    pub spread: f64,
}

/// S_U(∞), S_L(∞) of the generalized hypergeometric limit system from
/// Laplace sums in the four quadrant directions.
pub fn limit_stokes_laplace(p: &HGParams, config: QuadratureConfig, kmax: usize) -> Result<LaplaceStokes> {
    let a = build_companion(p)?;
    let b = BlockStructure::gen_hg(p.n());
    let bs = BorelSeries::new(formal_coeffs(&a, &b, kmax)?);
    let cs = |alpha: f64| CanonicalSolution::new(&bs, alpha, config);
    let (c1, c2, c3, c4) = (cs(-FRAC_PI_4)?, cs(FRAC_PI_4)?, cs(3.0 * FRAC_PI_4)?, cs(5.0 * FRAC_PI_4)?);
    let radii = [0.3, 0.5, 0.8];
    let at0: Vec<CNum> = radii.iter().map(|r| CNum::new(f64::ln(*r), 0.0)).collect();
    let atpi: Vec<CNum> = radii.iter().map(|r| CNum::new(f64::ln(*r), PI)).collect();
    let sl = stokes_from_laplace(&c2, &c1, &at0)?;
    let su = stokes_from_laplace(&c4, &c3, &atpi)?;
    let fr = frame(p)?;
    let tilde = |s: &CMat| &(&fr.r_inv * s) * &fr.r;
    Ok(LaplaceStokes {
        pair: StokesPair {
            s_upper: tilde(&su.matrix),
            s_lower: tilde(&sl.matrix),
        },
        spread: su.spread.max(sl.spread),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConfluentValue {
    pub t: CMat,
    pub err: f64,
}

/// T^±(z, ρ) by quadrature along the straight trajectory:
/// plus:  T_{·j} = ∫₀¹ U_{·j}(τw)(1−τ)^{A_jj+ρ−1} dτ (A_jj+ρ),
/// minus: T_{·j} = −∫₀^∞ U_{·j}(−τw)(1+τ)^{A_jj+ρ−1} dτ (A_jj+ρ), w = ρz − λ_j.
pub fn confluent_transform(bs: &BorelSeries, z: CNum, rho: CNum, sign: Sign, ode_tol: f64) -> Result<ConfluentValue> {
    let b = &bs.ft.b;
    let n = b.dim();
    let mut t = CMat::zeros(n, n);
    let mut err: f64 = 0.0;
    for (j, rg) in b.ranges().iter().enumerate() {
        let m = rg.len();
        let ajj = bs.ft.a.block(rg.start, rg.end, rg.start, rg.end);
        let shift = &ajj + &CMat::identity(m).scale(rho);
        let mu = eig(&shift)?;
        let w = rho * z - b.blocks[j].0;
        if w.norm() == 0.0 {
            return Err(Error::SingularPoint { at: z });
        }
        // quadrature nodes (τ, 1 ∓ τ, weight); the base is kept exact near τ = 1
        let (dir, nodes, endpoint_err) = match sign {
            Sign::Plus => {
                let lo = mu.iter().map(|x| x.re).fold(f64::INFINITY, f64::min);
                if lo <= 0.0 {
                    return Err(Error::Sector(format!("Re(A_jj + rho) = {lo} must be positive for T+")));
                }
                let tmax = (45.0 / lo).min(1.0);
                let h0 = (0.05 / rho.norm()).min(tmax / 4.0);
                let mut nodes: Vec<(f64, f64, f64)> = nodes_on(&graded_panels(tmax.min(0.5), h0, 0.05))
                    .into_iter()
                    .map(|(x, w)| (x, 1.0 - x, w))
                    .collect();
                let mut end_err = 0.0;
                if tmax >= 1.0 {
                    // graded towards the endpoint singularity at τ = 1, in σ = 1 − τ
                    let sig = nodes_on(&graded_panels(0.5 - 1e-15, 1e-15, 0.05));
                    nodes.extend(sig.iter().rev().map(|&(x, w)| (1.0 - (x + 1e-15), x + 1e-15, w)));
                    end_err = 1e-15f64.powf(lo) / lo;
                } else if tmax > 0.5 {
                    let more = nodes_on(&graded_panels(tmax - 0.5, 0.05, 0.05));
                    nodes.extend(more.iter().map(|&(x, w)| (0.5 + x, 0.5 - x, w)));
                }
                (w, nodes, end_err)
            }
            Sign::Minus => {
                let hi = mu.iter().map(|x| x.re).fold(f64::NEG_INFINITY, f64::max);
                if hi >= 0.0 {
                    return Err(Error::Sector(format!("Re(A_jj + rho) = {hi} must be negative for T-")));
                }
                let tmax = (45.0 / -hi).exp_m1();
                if tmax * w.norm() > 1e4 {
                    return Err(Error::Sector(format!("T- path length {} too long; increase |rho|", tmax * w.norm())));
                }
                let h0 = (0.05 / rho.norm()).min(tmax / 4.0);
                let nodes = nodes_on(&graded_panels(tmax, h0, 0.05_f64.max(tmax / 200.0)))
                    .into_iter()
                    .map(|(x, w)| (x, 1.0 + x, w))
                    .collect();
                (-w, nodes, 0.0)
            }
        };
        let alpha = dir.arg();
        let scale = dir.norm();
        let ts: Vec<f64> = nodes.iter().map(|x| x.0 * scale).collect();
        let smp = RaySamples::build(bs, j, alpha, &ts, ode_tol)?;
        let mut acc = CMat::zeros(n, m);
        for (&(_, base, wt), u) in nodes.iter().zip(&smp.values) {
            let pw = expm(&shift.scale(CNum::new(base.ln(), 0.0)))?.scale(CNum::new(wt / base, 0.0));
            acc = &acc + &(u * &pw);
        }
        let mut col = &acc * &shift;
        if sign == Sign::Minus {
            col = col.scale(-ONE);
        }
        t.set_block(0, rg.start, &col);
        err = err.max(smp.err_est + endpoint_err * shift.max_abs());
    }
    Ok(ConfluentValue { t, err })
}

/// T_{[α]}(z, ∞) for the direction α = arg z of the ρ → ∞ trajectory.
pub fn limit_transform(bs: &BorelSeries, z: CNum, config: QuadratureConfig) -> Result<LaplaceValue> {
    CanonicalSolution::new(bs, z.arg(), config)?.laplace_sum(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_form::stokes_limit;
    use crate::cplx::{c, det, r};
    use crate::model::{HGParams, Rho};
    use crate::series::floquet_matrix;

    fn p2() -> HGParams {
        HGParams::new(vec![c(0.3, 0.1), r(0.7)], vec![r(1.2)], Rho::Finite(r(5.0))).unwrap()
    }

    fn p3() -> HGParams {
        HGParams::new(
            vec![c(0.31, 0.1), r(0.77), c(0.15, -0.05)],
            vec![r(1.23), c(1.61, 0.07)],
            Rho::Finite(c(2.3, 0.4)),
        )
        .unwrap()
    }

    fn series(p: &HGParams) -> BorelSeries {
        let a = build_companion(p).unwrap();
        BorelSeries::new(formal_coeffs(&a, &BlockStructure::gen_hg(p.n()), 200).unwrap())
    }

    #[test]
    fn first_coefficients() {
        let p = p3();
        let a = build_companion(&p).unwrap();
        let b = BlockStructure::gen_hg(3);
        let ft = formal_coeffs(&a, &b, 10).unwrap();
        assert_eq!(ft.coeff(0), CMat::identity(3));
        let t1 = ft.coeff(1);
        let lam = b.diag();
        for i in 0..3 {
            for j in 0..3 {
                if lam[i] != lam[j] {
                    let want = -a[(i, j)] / (lam[i] - lam[j]);
                    assert!((t1[(i, j)] - want).norm() < 1e-14);
                }
            }
        }
        assert_eq!(ft.a_d(), b.block_diagonal(&a));
    }

    #[test]
    fn recursion_is_exact() {
        // z²T̂′ − (B + zA)T̂ + T̂(B + zA_D): coefficient of z^{k+1} for k < K
        let p = p3();
        let a = build_companion(&p).unwrap();
        let b = BlockStructure::gen_hg(3);
        let ft = formal_coeffs(&a, &b, 12).unwrap();
        let bm = b.matrix();
        let ad = ft.a_d();
        for k in 0..12 {
            let tk = ft.coeff(k);
            let tk1 = ft.coeff(k + 1);
            let res = &(&(&tk.scale(r(k as f64)) - &(&bm * &tk1)) + &(&tk1 * &bm)) - &(&(&a * &tk) - &(&tk * &ad));
            assert!(res.max_abs() < 1e-12 * tk.max_abs().max(tk1.max_abs()).max(1.0), "k={k}");
        }
    }

    #[test]
    fn gevrey_growth() {
        // B with gap 1/2: log(‖T_k‖/k!) is close to linear in k with slope ≈ log 2
        let p = p3();
        let a = build_companion(&p).unwrap();
        let b = BlockStructure { blocks: vec![(ZERO, 2), (r(0.5), 1)] };
        let ft = formal_coeffs(&a, &b, 80).unwrap();
        let pts: Vec<(f64, f64)> = (40..=80).map(|k| (k as f64, ft.scaled(k).max_abs().ln())).collect();
        let nn = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / nn;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / nn;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
        let slope = sxy / sxx;
        let r2 = sxy * sxy / (sxx * syy);
        assert!(r2 > 0.99, "r2 = {r2}");
        assert!((slope - 2f64.ln()).abs() < 0.1, "slope = {slope}");
    }

    #[test]
    fn resonant_block_is_reported() {
        let mut a = CMat::zeros(3, 3);
        a[(0, 0)] = r(0.0);
        a[(1, 1)] = r(1.0);
        a[(2, 2)] = r(0.3);
        a[(0, 2)] = ONE;
        a[(2, 0)] = ONE;
        let b = BlockStructure { blocks: vec![(ZERO, 2), (ONE, 1)] };
        assert!(matches!(formal_coeffs(&a, &b, 5), Err(Error::Resonance(_))));
    }

    #[test]
    fn gauss_legendre_exact_for_polynomials() {
        let gl = gauss_legendre(32);
        let s: f64 = gl.iter().map(|(x, w)| w * x.powi(62)).sum();
        assert!((s - 2.0 / 63.0).abs() < 1e-14);
        let s: f64 = gl.iter().map(|(_, w)| w).sum();
        assert!((s - 2.0).abs() < 1e-14);
    }

    #[test]
    fn continuation_matches_series() {
        let bs = series(&p3());
        for (block, alpha) in [(0, PI / 2.0), (1, PI / 3.0)] {
            let smp = RaySamples::build(&bs, block, alpha, &[0.3, 0.6, 0.85], 1e-12).unwrap();
            for (t, v) in smp.t.iter().zip(&smp.values) {
                let direct = bs.eval(block, CNum::from_polar(*t, alpha)).unwrap();
                assert!(v.max_abs_diff(&direct) < 1e-10 * direct.max_abs().max(1.0), "t={t}");
            }
        }
        // the ray at π/2 goes far out without meeting the singularity at 1
        let far = RaySamples::build(&bs, 0, PI / 2.0, &[10.0, 40.0], 1e-10).unwrap();
        assert!(far.values[1].is_finite());
    }

    #[test]
    fn direction_classes() {
        let b = BlockStructure::gen_hg(2);
        assert!(DirectionClass::new(0.01, &b).is_err());
        let d = DirectionClass::new(FRAC_PI_4, &b).unwrap();
        assert!(d.same_class(3.0 * FRAC_PI_4));
        assert!(!d.same_class(-FRAC_PI_4));
    }

    #[test]
    fn laplace_properties() {
        let p = p2();
        let bs = series(&p);
        let cfg = QuadratureConfig::default();
        let cs = CanonicalSolution::new(&bs, FRAC_PI_4, cfg).unwrap();
        for z in [CNum::from_polar(0.3, 0.1), CNum::from_polar(0.7, 1.2), CNum::from_polar(1.5, 0.6)] {
            let t = cs.laplace_sum(z).unwrap();
            assert!((det(&t.t).unwrap() - ONE).norm() < 1e-8);
        }
        let near = cs.laplace_sum(CNum::from_polar(0.02, FRAC_PI_4)).unwrap();
        assert!(near.t.max_abs_diff(&CMat::identity(2)) < 0.1);
        assert!(cs.laplace_sum(CNum::from_polar(0.5, -2.0)).is_err());

        // Ψ solves z²Ψ′ = (B + zA)Ψ
        let a = build_companion(&p).unwrap();
        let bm = BlockStructure::gen_hg(2).matrix();
        let lz = CNum::new(0.1f64.ln(), FRAC_PI_4);
        let h = 1e-3;
        let z = lz.exp();
        let f = |dz: CNum| cs.psi((z + dz).ln()).unwrap();
        let d = (&(&f(r(-2.0 * h)) - &f(r(2.0 * h))) + &(&f(r(h)) - &f(r(-h))).scale(r(8.0))).scale(r(1.0 / (12.0 * h)));
        let psi = cs.psi(lz).unwrap();
        let res = &d.scale(z * z) - &(&(&bm + &a.scale(z)) * &psi);
        assert!(res.max_abs() < 1e-6 * psi.max_abs(), "{}", res.max_abs());

        // a small change of α inside the class leaves T unchanged
        let cs2 = CanonicalSolution::new(&bs, FRAC_PI_4 + 5f64.to_radians(), cfg).unwrap();
        let z = CNum::from_polar(0.5, 0.5);
        let (t1, t2) = (cs.laplace_sum(z).unwrap(), cs2.laplace_sum(z).unwrap());
        assert!(t1.t.max_abs_diff(&t2.t) < 1e-8);
    }

    #[test]
    fn stokes_matches_closed_form() {
        for p in [p2(), p3()] {
            let got = limit_stokes_laplace(&p, QuadratureConfig::default(), 120).unwrap();
            let want = stokes_limit(&p).unwrap();
            let du = got.pair.s_upper.max_abs_diff(&want.s_upper);
            let dl = got.pair.s_lower.max_abs_diff(&want.s_lower);
            assert!(du < 1e-4 && dl < 1e-4, "{du} {dl}");
            // unipotent with a single non-zero off-diagonal block
            let n = p.n();
            let id = CMat::identity(n);
            for (s, zero_upper) in [(&got.pair.s_upper, false), (&got.pair.s_lower, true)] {
                let e = s - &id;
                assert!(e.block(0, n - 1, 0, n - 1).max_abs() < 1e-5);
                assert!(e.block(n - 1, n, n - 1, n).max_abs() < 1e-5);
                let (quiet, loud) = if zero_upper {
                    (e.block(0, n - 1, n - 1, n), e.block(n - 1, n, 0, n - 1))
                } else {
                    (e.block(n - 1, n, 0, n - 1), e.block(0, n - 1, n - 1, n))
                };
                assert!(quiet.max_abs() < 1e-5 && loud.max_abs() > 1e-2);
            }
        }
        let bs = series(&p2());
        let cs = CanonicalSolution::new(&bs, FRAC_PI_4, QuadratureConfig::default()).unwrap();
        let id = stokes_from_laplace(&cs, &cs, &[CNum::new(0.4f64.ln(), 0.3)]).unwrap();
        assert!(id.matrix.max_abs_diff(&CMat::identity(2)) < 1e-12);
    }

    #[test]
    fn confluent_transform_vs_series() {
        // n = 2 has R = I, so T⁺(z, ρ) is Ṽ⁺(ρz) with its power prefactors removed
        let p = p2();
        let rho = p.finite_rho().unwrap();
        let bs = series(&p);
        let s = c(0.5, 0.3);
        let z = s / rho;
        let want = floquet_matrix(&p, s).unwrap().stripped;
        let got = confluent_transform(&bs, z, rho, Sign::Plus, 1e-12).unwrap();
        assert!(got.t.max_abs_diff(&want) < 1e-8, "{}", got.t.max_abs_diff(&want));
    }

    #[test]
    fn confluent_limit() {
        // T±(z, ρ) − T(z) ≈ −T⁽¹⁾ B/ρ: first order in 1/ρ, so extrapolation removes it
        let p = p2();
        let bs = series(&p);
        let z = CNum::from_polar(0.2, FRAC_PI_4);
        let lim = limit_transform(&bs, z, QuadratureConfig::default()).unwrap();
        for (sign, s) in [(Sign::Plus, 1.0), (Sign::Minus, -1.0)] {
            let t1 = confluent_transform(&bs, z, r(500.0 * s), sign, 1e-12).unwrap().t;
            let t2 = confluent_transform(&bs, z, r(1000.0 * s), sign, 1e-12).unwrap().t;
            let (d1, d2) = (t1.max_abs_diff(&lim.t), t2.max_abs_diff(&lim.t));
            assert!(d1 < 3e-3 && (d1 / d2 - 2.0).abs() < 0.05, "{d1} {d2}");
            let rich = &t2.scale(r(2.0)) - &t1;
            assert!(rich.max_abs_diff(&lim.t) < 1e-5, "{}", rich.max_abs_diff(&lim.t));
        }
    }
}
