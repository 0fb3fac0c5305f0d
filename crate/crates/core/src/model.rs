//! Hypergeometric data, the companion pair (A, B), the frame R, and resonance checks.

use crate::cplx::{inverse, Branch, CMat, CNum, ONE, ZERO};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;

/// Distance below which a parameter combination counts as resonant.
pub const RESONANCE_TOL: f64 = 1e-8;
pub const MAX_ORDER: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Rho {
    Finite(CNum),
    Infinity,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-")]
    Minus,
}

impl Sign {
    /// Branch of log ρ attached to each family: (−π, π] for +, (0, 2π] for −.
    pub fn rho_branch(self) -> Branch {
        match self {
            Sign::Plus => Branch::PRINCIPAL,
            Sign::Minus => Branch::UPPER,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Sign::Plus => "+",
            Sign::Minus => "-",
        }
    }
}

impl std::str::FromStr for Sign {
    type Err = Error;
    fn from_str(s: &str) -> Result<Sign> {
        match s {
            "+" | "plus" => Ok(Sign::Plus),
            "-" | "minus" => Ok(Sign::Minus),
            _ => Err(Error::Invalid(format!("sign must be + or -, got {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HGParams {
    alpha: Vec<CNum>,
    beta_head: Vec<CNum>,
    rho: Rho,
}

impl HGParams {
    pub fn new(alpha: Vec<CNum>, beta_head: Vec<CNum>, rho: Rho) -> Result<Self> {
        let n = alpha.len();
        if !(2..=MAX_ORDER).contains(&n) {
            return Err(Error::Invalid(format!("order n = {n} outside 2..={MAX_ORDER}")));
        }
        if beta_head.len() != n - 1 {
            return Err(Error::Invalid(format!(
                "expected {} beta values for n = {n}, got {}",
                n - 1,
                beta_head.len()
            )));
        }
        let finite = |z: &CNum| z.re.is_finite() && z.im.is_finite();
        let rho_ok = match rho {
            Rho::Finite(r) => finite(&r),
            Rho::Infinity => true,
        };
        if !alpha.iter().all(finite) || !beta_head.iter().all(finite) || !rho_ok {
            return Err(Error::Invalid("non-finite parameter".into()));
        }
        Ok(HGParams {
            alpha,
            beta_head,
            rho,
        })
    }

    pub fn n(&self) -> usize {
        self.alpha.len()
    }

    pub fn alpha(&self) -> &[CNum] {
        &self.alpha
    }

    pub fn beta_head(&self) -> &[CNum] {
        &self.beta_head
    }

    pub fn rho(&self) -> Rho {
        self.rho
    }

    pub fn finite_rho(&self) -> Result<CNum> {
        match self.rho {
            Rho::Finite(r) => Ok(r),
            Rho::Infinity => Err(Error::Invalid("operation needs a finite rho".into())),
        }
    }

    /// γ = Σ_{j<n}(β_j − 1) − Σ_i α_i, always recomputed.
    pub fn gamma(&self) -> CNum {
        self.beta_head.iter().map(|b| b - 1.0).sum::<CNum>() - self.alpha.iter().sum::<CNum>()
    }

    /// β₁..β_n with β_n = ρ + 1.
    pub fn beta_full(&self) -> Result<Vec<CNum>> {
        let mut b = self.beta_head.clone();
        b.push(self.finite_rho()? + 1.0);
        Ok(b)
    }

    pub fn with_rho(&self, rho: Rho) -> Self {
        HGParams {
            rho,
            ..self.clone()
        }
    }

    /// Diagonal of Ã_D: (1−β₁, …, 1−β_{n−1}, γ).
    pub fn at_d(&self) -> Vec<CNum> {
        let mut d: Vec<CNum> = self.beta_head.iter().map(|b| ONE - b).collect();
        d.push(self.gamma());
        d
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: ParamFile =
            serde_json::from_str(s).map_err(|e| Error::Invalid(format!("parameter JSON: {e}")))?;
        f.into_params()
    }

    pub fn to_file(&self) -> ParamFile {
        let pair = |z: &CNum| [z.re, z.im];
        ParamFile {
            alpha: self.alpha.iter().map(pair).collect(),
            beta: self.beta_head.iter().map(pair).collect(),
            rho: match self.rho {
                Rho::Finite(r) => RhoJson::Finite([r.re, r.im]),
                Rho::Infinity => RhoJson::Marker("inf".into()),
            },
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_file()).expect("serializable")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RhoJson {
    Finite([f64; 2]),
    Marker(String),
}

/// On-disk parameter schema.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamFile {
    pub alpha: Vec<[f64; 2]>,
    pub beta: Vec<[f64; 2]>,
    pub rho: RhoJson,
}

impl ParamFile {
    pub fn into_params(self) -> Result<HGParams> {
        let z = |p: &[f64; 2]| CNum::new(p[0], p[1]);
        let rho = match &self.rho {
            RhoJson::Finite(p) => Rho::Finite(z(p)),
            RhoJson::Marker(s) if s == "inf" => Rho::Infinity,
            RhoJson::Marker(s) => {
                return Err(Error::Invalid(format!("rho must be [re, im] or \"inf\", got {s:?}")))
            }
        };
        HGParams::new(
            self.alpha.iter().map(z).collect(),
            self.beta.iter().map(z).collect(),
            rho,
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ViolationKind {
    BetaResonance,
    ExponentResonance,
    GammaPole,
    ExcludedLattice,
    SectorArgument,
    SectorModulus,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub detail: String,
    pub distance: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}: {} (distance {:.3e})", self.kind, self.detail, self.distance)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParameterSector {
    pub sign: Sign,
    pub eta: f64,
    pub min_abs_rho: f64,
}

impl ParameterSector {
    pub fn new(sign: Sign, eta: f64, min_abs_rho: f64) -> Result<Self> {
        if !(eta > 0.0 && eta < PI / 2.0) || !(min_abs_rho >= 0.0) {
            return Err(Error::Invalid(format!("sector eta={eta}, min_abs_rho={min_abs_rho}")));
        }
        Ok(ParameterSector {
            sign,
            eta,
            min_abs_rho,
        })
    }

    /// Widest window: η = 1e−6 and no modulus bound.
    pub fn loose(sign: Sign) -> Self {
        ParameterSector {
            sign,
            eta: 1e-6,
            min_abs_rho: 0.0,
        }
    }

    pub fn arg_window(&self) -> (f64, f64) {
        match self.sign {
            Sign::Plus => (-PI + self.eta, PI - self.eta),
            Sign::Minus => (self.eta, 2.0 * PI - self.eta),
        }
    }

    pub fn contains_arg(&self, rho: CNum) -> bool {
        let a = self.sign.rho_branch().arg(rho);
        let (lo, hi) = self.arg_window();
        a > lo && a < hi
    }
}

fn int_distance(x: CNum) -> (f64, f64) {
    let k = x.re.round();
    (k, (x - CNum::new(k, 0.0)).norm())
}

/// Checks resonance assumptions, Gamma poles and (optionally) sector membership.
pub fn validate(p: &HGParams, sector: Option<&ParameterSector>) -> Vec<Violation> {
    let mut out = Vec::new();
    let b = p.beta_head();
    for i in 0..b.len() {
        for j in i + 1..b.len() {
            let (_, d) = int_distance(b[i] - b[j]);
            if d < RESONANCE_TOL {
                out.push(Violation {
                    kind: ViolationKind::BetaResonance,
                    detail: format!("beta_{} - beta_{} = {} is an integer", i + 1, j + 1, b[i] - b[j]),
                    distance: d,
                });
            }
        }
    }
    let rho = match p.rho() {
        Rho::Finite(r) => r,
        Rho::Infinity => {
            if sector.is_some() {
                out.push(Violation {
                    kind: ViolationKind::SectorModulus,
                    detail: "sector membership needs a finite rho".into(),
                    distance: 0.0,
                });
            }
            return out;
        }
    };
    let gamma = p.gamma();
    for (j, bj) in b.iter().enumerate() {
        let (_, d) = int_distance(bj - rho - 1.0);
        if d < RESONANCE_TOL {
            out.push(Violation {
                kind: ViolationKind::ExponentResonance,
                detail: format!("beta_{} - rho - 1 is an integer (e_{} = 1)", j + 1, j + 1),
                distance: d,
            });
        }
    }
    let (_, d) = int_distance(gamma + rho);
    if d < RESONANCE_TOL {
        out.push(Violation {
            kind: ViolationKind::ExponentResonance,
            detail: format!("gamma + rho = {} is an integer (Gamma pole of 1+gamma+rho or -gamma-rho)", gamma + rho),
            distance: d,
        });
    }
    let Some(sector) = sector else {
        return out;
    };
    if !sector.contains_arg(rho) {
        let (lo, hi) = sector.arg_window();
        let a = sector.sign.rho_branch().arg(rho);
        out.push(Violation {
            kind: ViolationKind::SectorArgument,
            detail: format!("arg rho = {a:.6} outside ({lo:.6}, {hi:.6}) for P{}", sector.sign.symbol()),
            distance: (a - lo).abs().min((hi - a).abs()),
        });
    }
    if rho.norm() < sector.min_abs_rho {
        out.push(Violation {
            kind: ViolationKind::SectorModulus,
            detail: format!("|rho| = {} below {}", rho.norm(), sector.min_abs_rho),
            distance: sector.min_abs_rho - rho.norm(),
        });
    }
    // Spec A = {−α_i}, Spec A_D = {1−β_j, γ}.
    let spec: Vec<(String, CNum)> = p
        .alpha()
        .iter()
        .enumerate()
        .map(|(i, a)| (format!("-alpha_{}", i + 1), -a))
        .chain(b.iter().enumerate().map(|(j, bj)| (format!("1-beta_{}", j + 1), ONE - bj)))
        .chain(std::iter::once(("gamma".to_string(), gamma)))
        .collect();
    for (name, s) in spec {
        let (k, d) = int_distance(rho + s);
        if d >= RESONANCE_TOL {
            continue;
        }
        let hit = match sector.sign {
            Sign::Plus => k <= -1.0,
            Sign::Minus => k >= 0.0,
        };
        if hit {
            out.push(Violation {
                kind: if k == 0.0 {
                    ViolationKind::GammaPole
                } else {
                    ViolationKind::ExcludedLattice
                },
                detail: format!("rho + ({name}) = {k} lies in the excluded set of P{}", sector.sign.symbol()),
                distance: d,
            });
        }
    }
    out
}

pub fn ensure_valid(p: &HGParams, sector: Option<&ParameterSector>) -> Result<()> {
    let v = validate(p, sector);
    if v.is_empty() {
        Ok(())
    } else {
        Err(Error::Validation(v))
    }
}

/// Companion matrix A: diagonal (1−β₁,…,1−β_{n−1},γ), unit superdiagonal, and
/// a last row fixed by det(λ−A) = ∏(λ+α_i).
pub fn build_companion(p: &HGParams) -> Result<CMat> {
    let n = p.n();
    let gamma = p.gamma();
    let nodes: Vec<CNum> = p.beta_head().iter().map(|b| ONE - b).collect();
    // Coefficients, lowest degree first.
    let mut f = poly_from_roots(&p.alpha().iter().map(|a| -a).collect::<Vec<_>>());
    let mut roots = nodes.clone();
    roots.push(gamma);
    let g = poly_from_roots(&roots);
    for (fi, gi) in f.iter_mut().zip(&g) {
        *fi -= gi;
    }
    // Newton coefficients with nodes x_1..x_{n−1}: f = Σ q_k ∏_{l<k}(λ − x_l).
    let mut rem = f;
    let mut q = Vec::with_capacity(n - 1);
    for x in &nodes {
        let (quot, val) = synthetic_division(&rem, *x);
        q.push(val);
        rem = quot;
    }
    let mut a = CMat::zeros(n, n);
    for (i, x) in nodes.iter().enumerate() {
        a[(i, i)] = *x;
        a[(i, i + 1)] = ONE;
    }
    a[(n - 1, n - 1)] = gamma;
    for (k, qk) in q.iter().enumerate() {
        a[(n - 1, k)] = -qk;
    }
    Ok(a)
}

fn poly_from_roots(roots: &[CNum]) -> Vec<CNum> {
    let mut c = vec![ONE];
    for r in roots {
        let mut next = vec![ZERO; c.len() + 1];
        for (i, ci) in c.iter().enumerate() {
            next[i + 1] += ci;
            next[i] -= ci * r;
        }
        c = next;
    }
    c
}

// Divides by (λ − x); returns quotient and remainder f(x).
fn synthetic_division(f: &[CNum], x: CNum) -> (Vec<CNum>, CNum) {
    if f.is_empty() {
        return (Vec::new(), ZERO);
    }
    let d = f.len() - 1;
    let mut quot = vec![ZERO; d];
    let mut acc = ZERO;
    for k in (0..=d).rev() {
        acc = acc * x + f[k];
        if k > 0 {
            quot[k - 1] = acc;
        }
    }
    (quot, acc)
}

/// Eigenvalue blocks of B: (λ, multiplicity), contiguous on the diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockStructure {
    pub blocks: Vec<(CNum, usize)>,
}

impl BlockStructure {
    pub fn gen_hg(n: usize) -> Self {
        BlockStructure {
            blocks: vec![(ZERO, n - 1), (ONE, 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.blocks.iter().map(|b| b.1).sum()
    }

    pub fn diag(&self) -> Vec<CNum> {
        self.blocks
            .iter()
            .flat_map(|&(l, m)| std::iter::repeat_n(l, m))
            .collect()
    }

    /// Index ranges of each block.
    pub fn ranges(&self) -> Vec<std::ops::Range<usize>> {
        let mut start = 0;
        self.blocks
            .iter()
            .map(|&(_, m)| {
                let r = start..start + m;
                start += m;
                r
            })
            .collect()
    }

    pub fn matrix(&self) -> CMat {
        CMat::from_diag(&self.diag())
    }

    /// Block-diagonal part of `a`.
    pub fn block_diagonal(&self, a: &CMat) -> CMat {
        let mut d = CMat::zeros(a.rows(), a.cols());
        for r in self.ranges() {
            d.set_block(r.start, r.start, &a.block(r.start, r.end, r.start, r.end));
        }
        d
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OkuboSystem {
    pub a: CMat,
    pub b: BlockStructure,
    pub rho: CNum,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConfluentFamily {
    pub a: CMat,
    pub b: BlockStructure,
    pub rho: Rho,
}

pub fn build_okubo(p: &HGParams) -> Result<OkuboSystem> {
    Ok(OkuboSystem {
        a: build_companion(p)?,
        b: BlockStructure::gen_hg(p.n()),
        rho: p.finite_rho()?,
    })
}

pub fn build_confluent(p: &HGParams, rho: Rho) -> Result<ConfluentFamily> {
    Ok(ConfluentFamily {
        a: build_companion(p)?,
        b: BlockStructure::gen_hg(p.n()),
        rho,
    })
}

impl OkuboSystem {
    /// M(s) = (s − B)⁻¹(A + ρ).
    pub fn rhs(&self, s: CNum) -> Result<CMat> {
        let d = self.b.diag();
        let mut m = self.a.clone();
        for (i, l) in d.iter().enumerate() {
            let den = s - l;
            if den.norm() == 0.0 {
                return Err(Error::SingularPoint { at: *l });
            }
            m[(i, i)] += self.rho;
            for j in 0..m.cols() {
                m[(i, j)] /= den;
            }
        }
        Ok(m)
    }

    pub fn singular_points(&self) -> Vec<CNum> {
        self.b.blocks.iter().map(|b| b.0).collect()
    }
}

impl ConfluentFamily {
    /// M(z) = [z(z − B/ρ)]⁻¹(B + zA), or z⁻²(B + zA) in the limit.
    pub fn rhs(&self, z: CNum) -> Result<CMat> {
        if z.norm() == 0.0 {
            return Err(Error::SingularPoint { at: z });
        }
        let d = self.b.diag();
        let mut m = self.a.scale(z);
        for (i, l) in d.iter().enumerate() {
            m[(i, i)] += l;
            let den = match self.rho {
                Rho::Finite(r) => z * (z - l / r),
                Rho::Infinity => z * z,
            };
            if den.norm() == 0.0 {
                return Err(Error::SingularPoint { at: z });
            }
            for j in 0..m.cols() {
                m[(i, j)] /= den;
            }
        }
        Ok(m)
    }

    pub fn singular_points(&self) -> Vec<CNum> {
        let mut out = vec![ZERO];
        if let Rho::Finite(r) = self.rho {
            for &(l, _) in &self.b.blocks {
                if l != ZERO {
                    out.push(l / r);
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelFrame {
    pub r: CMat,
    pub r_inv: CMat,
    pub a_d: CMat,
    pub at_d: Vec<CNum>,
}

/// r_{1j} = 1, r_{ij} = ∏_{l<i}(β_l − β_j) for j < n; column n is ê_n.
pub fn frame_matrix(p: &HGParams) -> CMat {
    let n = p.n();
    let b = p.beta_head();
    let mut r = CMat::zeros(n, n);
    for j in 0..n - 1 {
        let mut prod = ONE;
        for i in 0..n - 1 {
            if i > 0 {
                prod *= b[i - 1] - b[j];
            }
            r[(i, j)] = prod;
        }
    }
    r[(n - 1, n - 1)] = ONE;
    r
}

pub fn frame(p: &HGParams) -> Result<ModelFrame> {
    let beta_issues: Vec<Violation> = validate(&p.with_rho(Rho::Infinity), None);
    if !beta_issues.is_empty() {
        return Err(Error::Validation(beta_issues));
    }
    let r = frame_matrix(p);
    let r_inv = inverse(&r)?;
    let a = build_companion(p)?;
    Ok(ModelFrame {
        a_d: BlockStructure::gen_hg(p.n()).block_diagonal(&a),
        r,
        r_inv,
        at_d: p.at_d(),
    })
}
