//! Numerical analytic continuation along paths in the complex plane.
//!
//! Dormand–Prince 5(4) with a PI step controller, integrating a matrix state
//! along each segment of a polyline/arc path.

use std::f64::consts::{PI, TAU};

use crate::cplx::{inverse, CMat, CNum, IM};
use crate::error::{Error, Result};
use crate::model::{ConfluentFamily, OkuboSystem};

/// A linear system dY/dx = L(x)[Y] with isolated singular points.
pub trait LinearSystem: Sync {
    fn dim(&self) -> usize;
    fn singularities(&self) -> Vec<CNum>;
    fn apply(&self, x: CNum, y: &CMat) -> Result<CMat>;
}

impl LinearSystem for OkuboSystem {
    fn dim(&self) -> usize {
        self.a.rows()
    }
    fn singularities(&self) -> Vec<CNum> {
        self.singular_points()
    }
    fn apply(&self, x: CNum, y: &CMat) -> Result<CMat> {
        Ok(&self.rhs(x)? * y)
    }
}

impl LinearSystem for ConfluentFamily {
    fn dim(&self) -> usize {
        self.a.rows()
    }
    fn singularities(&self) -> Vec<CNum> {
        self.singular_points()
    }
    fn apply(&self, x: CNum, y: &CMat) -> Result<CMat> {
        Ok(&self.rhs(x)? * y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Segment {
    Line { from: CNum, to: CNum },
    Arc { center: CNum, radius: f64, theta0: f64, sweep: f64 },
}

impl Segment {
    pub fn point(&self, t: f64) -> CNum {
        match *self {
            Segment::Line { from, to } => from + (to - from) * t,
            Segment::Arc { center, radius, theta0, sweep } => {
                center + CNum::from_polar(radius, theta0 + sweep * t)
            }
        }
    }

    /// dx/dt.
    pub fn velocity(&self, t: f64) -> CNum {
        match *self {
            Segment::Line { from, to } => to - from,
            Segment::Arc { radius, theta0, sweep, .. } => {
                IM * sweep * CNum::from_polar(radius, theta0 + sweep * t)
            }
        }
    }

    pub fn start(&self) -> CNum {
        self.point(0.0)
    }

    pub fn end(&self) -> CNum {
        match *self {
            Segment::Line { to, .. } => to,
            _ => self.point(1.0),
        }
    }

    pub fn length(&self) -> f64 {
        match *self {
            Segment::Line { from, to } => (to - from).norm(),
            Segment::Arc { radius, sweep, .. } => radius * sweep.abs(),
        }
    }

    pub fn reversed(&self) -> Segment {
        match *self {
            Segment::Line { from, to } => Segment::Line { from: to, to: from },
            Segment::Arc { center, radius, theta0, sweep } => Segment::Arc {
                center,
                radius,
                theta0: theta0 + sweep,
                sweep: -sweep,
            },
        }
    }

    pub fn distance_to(&self, p: CNum) -> f64 {
        match *self {
            Segment::Line { from, to } => {
                let d = to - from;
                let len2 = d.norm_sqr();
                if len2 == 0.0 {
                    return (p - from).norm();
                }
                let t = (((p - from) * d.conj()).re / len2).clamp(0.0, 1.0);
                (p - from - d * t).norm()
            }
            Segment::Arc { center, radius, theta0, sweep } => {
                let q = p - center;
                if q.norm() == 0.0 {
                    return radius;
                }
                let off = if sweep >= 0.0 { q.arg() - theta0 } else { theta0 - q.arg() };
                let inside = sweep.abs() >= TAU || off.rem_euclid(TAU) <= sweep.abs();
                if inside {
                    (q.norm() - radius).abs()
                } else {
                    (p - self.start()).norm().min((p - self.end()).norm())
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PathSpec {
    pub segments: Vec<Segment>,
    /// Minimum distance to the singularities; `None` means 0.1 of their smallest gap.
    pub clearance: Option<f64>,
    pub label: String,
}

impl PathSpec {
    pub fn new(label: impl Into<String>, segments: Vec<Segment>) -> Self {
        PathSpec {
            segments,
            clearance: None,
            label: label.into(),
        }
    }

    pub fn line(from: CNum, to: CNum) -> Self {
        PathSpec::new("line", vec![Segment::Line { from, to }])
    }

    /// Full circle about `center` starting and ending at `start`.
    pub fn circle(center: CNum, start: CNum, positive: bool) -> Self {
        let q = start - center;
        PathSpec::new(
            "circle",
            vec![Segment::Arc {
                center,
                radius: q.norm(),
                theta0: q.arg(),
                sweep: if positive { TAU } else { -TAU },
            }],
        )
    }

    pub fn with_clearance(mut self, clearance: f64) -> Self {
        self.clearance = Some(clearance);
        self
    }

    pub fn start(&self) -> Option<CNum> {
        self.segments.first().map(|s| s.start())
    }

    pub fn end(&self) -> Option<CNum> {
        self.segments.last().map(|s| s.end())
    }

    pub fn length(&self) -> f64 {
        self.segments.iter().map(|s| s.length()).sum()
    }

    pub fn reversed(&self) -> PathSpec {
        PathSpec {
            segments: self.segments.iter().rev().map(|s| s.reversed()).collect(),
            clearance: self.clearance,
            label: format!("reverse of {}", self.label),
        }
    }

    /// `self` followed by `next`.
    pub fn then(&self, next: &PathSpec) -> PathSpec {
        let mut segments = self.segments.clone();
        segments.extend(next.segments.iter().copied());
        let clearance = match (self.clearance, next.clearance) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        PathSpec {
            segments,
            clearance,
            label: format!("{} then {}", self.label, next.label),
        }
    }

    pub fn distance_to(&self, p: CNum) -> f64 {
        self.segments
            .iter()
            .map(|s| s.distance_to(p))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn check_clearance(&self, singularities: &[CNum]) -> Result<()> {
        let clearance = self.clearance.unwrap_or_else(|| default_clearance(singularities));
        for &s in singularities {
            let d = self.distance_to(s);
            if d < clearance {
                return Err(Error::Clearance {
                    singularity: s,
                    distance: d,
                    clearance,
                });
            }
        }
        Ok(())
    }
}

pub fn default_clearance(singularities: &[CNum]) -> f64 {
    let mut gap = f64::INFINITY;
    for (i, a) in singularities.iter().enumerate() {
        for b in &singularities[i + 1..] {
            gap = gap.min((a - b).norm());
        }
    }
    if gap.is_finite() {
        0.1 * gap
    } else {
        1e-3
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransportResult {
    pub propagator: CMat,
    pub err_est: f64,
    pub steps: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Integration {
    pub value: CMat,
    pub err_est: f64,
    pub steps: usize,
    pub rejected: usize,
}

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

const MIN_TOL: f64 = 1e-14;
const MAX_STEPS: usize = 2_000_000;

fn deriv<S: LinearSystem + ?Sized>(sys: &S, seg: &Segment, t: f64, y: &CMat) -> Result<CMat> {
    Ok(sys.apply(seg.point(t), y)?.scale(seg.velocity(t)))
}

fn combine(y: &CMat, h: f64, coef: &[f64], ks: &[CMat]) -> CMat {
    let mut out = y.clone();
    let dst = out.as_mut_slice();
    for (c, k) in coef.iter().zip(ks) {
        if *c == 0.0 {
            continue;
        }
        for (d, v) in dst.iter_mut().zip(k.as_slice()) {
            *d += v * (h * c);
        }
    }
    out
}

/// One DP5 step; returns (y_new, error matrix, k7).
fn dp_step<S: LinearSystem + ?Sized>(
    sys: &S,
    seg: &Segment,
    t: f64,
    h: f64,
    y: &CMat,
    k1: &CMat,
) -> Result<(CMat, CMat, CMat)> {
    let mut ks: Vec<CMat> = Vec::with_capacity(7);
    ks.push(k1.clone());
    for stage in 1..7 {
        let ys = combine(y, h, &A[stage][..stage], &ks);
        ks.push(deriv(sys, seg, t + C[stage] * h, &ys)?);
    }
    let ynew = combine(y, h, &A[6], &ks[..6]);
    let err = combine(&CMat::zeros(y.rows(), y.cols()), h, &E, &ks);
    let k7 = ks.pop().unwrap();
    Ok((ynew, err, k7))
}

/// Adaptive integration of the state `y0` along `path`.
pub fn integrate<S: LinearSystem + ?Sized>(
    sys: &S,
    path: &PathSpec,
    y0: &CMat,
    tol: f64,
) -> Result<Integration> {
    if !(tol >= MIN_TOL) {
        return Err(Error::Invalid(format!("tolerance {tol:e} below {MIN_TOL:e}")));
    }
    path.check_clearance(&sys.singularities())?;
    let mut y = y0.clone();
    let mut out = Integration {
        value: CMat::zeros(0, 0),
        err_est: 0.0,
        steps: 0,
        rejected: 0,
    };
    // step length in arclength units, carried across segments
    let mut hlen = 0.02 * path.length().clamp(1e-3, 10.0);
    for seg in &path.segments {
        let len = seg.length();
        if len == 0.0 {
            continue;
        }
        let mut t = 0.0;
        let mut k1 = deriv(sys, seg, 0.0, &y)?;
        let mut err_prev: f64 = 1e-4;
        while t < 1.0 {
            let mut h = (hlen / len).min(1.0 - t);
            loop {
                if h * len < 1e-14 * (1.0 + seg.point(t).norm()) {
                    return Err(Error::StepUnderflow { at: seg.point(t) });
                }
                let (ynew, err, k7) = dp_step(sys, seg, t, h, &y, &k1)?;
                let scale = 1f64.max(y.max_abs()).max(ynew.max_abs());
                let e = err.max_abs();
                let errn = e / (tol * scale);
                if !errn.is_finite() {
                    h *= 0.2;
                    out.rejected += 1;
                    continue;
                }
                if errn <= 1.0 {
                    let fac = (0.9 * errn.max(1e-10).powf(-0.17) * err_prev.powf(0.04)).clamp(0.2, 5.0);
                    err_prev = errn.max(1e-4);
                    t = if t + h >= 1.0 - 1e-14 { 1.0 } else { t + h };
                    y = ynew;
                    k1 = k7;
                    out.err_est += e;
                    out.steps += 1;
                    hlen = h * len * fac;
                    break;
                }
                h *= (0.9 * errn.powf(-0.2)).max(0.2);
                out.rejected += 1;
            }
            if out.steps > MAX_STEPS {
                return Err(Error::StepUnderflow { at: seg.point(t) });
            }
        }
    }
    out.value = y;
    Ok(out)
}

/// Fixed-step DP5 (fifth-order solution), `steps` equal steps per segment.
pub fn integrate_fixed<S: LinearSystem + ?Sized>(
    sys: &S,
    path: &PathSpec,
    y0: &CMat,
    steps: usize,
) -> Result<CMat> {
    path.check_clearance(&sys.singularities())?;
    let mut y = y0.clone();
    let h = 1.0 / steps.max(1) as f64;
    for seg in &path.segments {
        if seg.length() == 0.0 {
            continue;
        }
        for k in 0..steps.max(1) {
            let t = k as f64 * h;
            let k1 = deriv(sys, seg, t, &y)?;
            y = dp_step(sys, seg, t, h, &y, &k1)?.0;
        }
    }
    Ok(y)
}

/// Propagator P with Y(end) = P·Y(start).
pub fn transport<S: LinearSystem + ?Sized>(sys: &S, path: &PathSpec, tol: f64) -> Result<TransportResult> {
    let out = integrate(sys, path, &CMat::identity(sys.dim()), tol)?;
    Ok(TransportResult {
        propagator: out.value,
        err_est: out.err_est,
        steps: out.steps,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContinuedValue {
    pub value: Vec<CNum>,
    pub err_est: f64,
}

pub fn continue_value<S: LinearSystem + ?Sized>(
    sys: &S,
    v0: &[CNum],
    path: &PathSpec,
    tol: f64,
) -> Result<ContinuedValue> {
    if v0.len() != sys.dim() {
        return Err(Error::DimensionMismatch {
            op: "continue_value",
            left: (sys.dim(), sys.dim()),
            right: (v0.len(), 1),
        });
    }
    let out = integrate(sys, path, &CMat::column_vector(v0), tol)?;
    Ok(ContinuedValue {
        value: out.value.column(0),
        err_est: out.err_est,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Orientation {
    Positive,
    Negative,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RadiusPolicy {
    /// min(0.5·distance to the nearest other singularity, |base − around|)
    Auto,
    Fixed(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LoopSpec {
    pub base: CNum,
    pub around: CNum,
    pub orientation: Orientation,
    pub radius: RadiusPolicy,
}

impl LoopSpec {
    pub fn new(base: CNum, around: CNum) -> Self {
        LoopSpec {
            base,
            around,
            orientation: Orientation::Positive,
            radius: RadiusPolicy::Auto,
        }
    }

    pub fn negative(mut self) -> Self {
        self.orientation = Orientation::Negative;
        self
    }

    pub fn with_radius(mut self, r: f64) -> Self {
        self.radius = RadiusPolicy::Fixed(r);
        self
    }

    /// Closed path: radial spoke from the base, the circle, and back.
    pub fn path(&self, singularities: &[CNum]) -> Result<PathSpec> {
        let q = self.base - self.around;
        let dist = q.norm();
        if dist == 0.0 {
            return Err(Error::Invalid("loop base coincides with its centre".into()));
        }
        let other = singularities
            .iter()
            .map(|s| (s - self.around).norm())
            .filter(|&d| d > 1e-12)
            .fold(f64::INFINITY, f64::min);
        let r = match self.radius {
            RadiusPolicy::Auto => dist.min(0.5 * other),
            RadiusPolicy::Fixed(r) => r,
        };
        if !(r > 0.0) || r > dist + 1e-15 {
            return Err(Error::Invalid(format!("loop radius {r} not in (0, {dist}]")));
        }
        let foot = self.around + q * (r / dist);
        let sweep = match self.orientation {
            Orientation::Positive => TAU,
            Orientation::Negative => -TAU,
        };
        let mut segs = Vec::new();
        if dist - r > 0.0 {
            segs.push(Segment::Line { from: self.base, to: foot });
        }
        segs.push(Segment::Arc {
            center: self.around,
            radius: r,
            theta0: q.arg(),
            sweep,
        });
        if dist - r > 0.0 {
            segs.push(Segment::Line { from: foot, to: self.base });
        }
        let clearance = (0.5 * r).min(default_clearance(singularities).max(0.0));
        Ok(PathSpec::new(format!("loop around {}", self.around), segs).with_clearance(clearance))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Monodromy {
    pub matrix: CMat,
    pub err_est: f64,
    pub steps: usize,
}

/// F⁻¹·P·F: continuing the basis F once around the loop gives F·m.
pub fn monodromy_numeric<S: LinearSystem + ?Sized>(
    sys: &S,
    basis: &CMat,
    lp: &LoopSpec,
    tol: f64,
) -> Result<Monodromy> {
    let finv = inverse(basis)?;
    let path = lp.path(&sys.singularities())?;
    let t = transport(sys, &path, tol)?;
    Ok(Monodromy {
        matrix: &(&finv * &t.propagator) * basis,
        err_est: t.err_est * finv.norm_inf() * basis.norm_inf(),
        steps: t.steps,
    })
}

/// Big positive loop around 0 and 1 through the base 1/2, leaving upwards.
pub fn outer_loop(base: CNum, radius: f64) -> PathSpec {
    let top = base + IM * radius;
    PathSpec::new(
        "outer loop",
        vec![
            Segment::Line { from: base, to: top },
            Segment::Arc {
                center: base,
                radius,
                theta0: PI / 2.0,
                sweep: TAU,
            },
            Segment::Line { from: top, to: base },
        ],
    )
}
