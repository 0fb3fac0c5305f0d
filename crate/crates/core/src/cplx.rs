//! Dense complex matrices and the few matrix functions the closed forms need.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};
use std::ops::{Add, Index, IndexMut, Mul, Sub};

pub use num_complex::Complex64 as CNum;

pub const ZERO: CNum = CNum::new(0.0, 0.0);
pub const ONE: CNum = CNum::new(1.0, 0.0);
pub const IM: CNum = CNum::new(0.0, 1.0);

/// Argument window `(lower, lower + 2π]` for logarithms and powers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub lower: f64,
}

impl Branch {
    /// arg in (−π, π].
    pub const PRINCIPAL: Branch = Branch { lower: -PI };
    /// arg in (0, 2π].
    pub const UPPER: Branch = Branch { lower: 0.0 };

    pub fn from_lower(lower: f64) -> Self {
        Branch { lower }
    }

    /// Window centred on `center`, i.e. arg in (center − π, center + π].
    pub fn centered(center: f64) -> Self {
        Branch { lower: center - PI }
    }

    pub fn arg(&self, z: CNum) -> f64 {
        let mut a = z.im.atan2(z.re);
        while a <= self.lower {
            a += TAU;
        }
        while a > self.lower + TAU {
            a -= TAU;
        }
        a
    }

    pub fn ln(&self, z: CNum) -> Result<CNum> {
        if z.re == 0.0 && z.im == 0.0 {
            return Err(Error::LogOfZero);
        }
        Ok(CNum::new(z.norm().ln(), self.arg(z)))
    }

    /// `z^e` on this branch.
    pub fn pow(&self, z: CNum, e: CNum) -> Result<CNum> {
        Ok((e * self.ln(z)?).exp())
    }

    pub fn describe(&self) -> String {
        format!("arg in ({:.6}, {:.6}]", self.lower, self.lower + TAU)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CMat {
    rows: usize,
    cols: usize,
    data: Vec<CNum>,
}

impl CMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMat {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_diag(d: &[CNum]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, &x) in d.iter().enumerate() {
            m[(i, i)] = x;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<CNum>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |x| x.len());
        if rows.iter().any(|x| x.len() != c) {
            return Err(Error::Invalid("ragged rows".into()));
        }
        Ok(CMat {
            rows: r,
            cols: c,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Self {
        let r: Vec<Vec<CNum>> = rows
            .iter()
            .map(|x| x.iter().map(|&v| CNum::new(v, 0.0)).collect())
            .collect();
        Self::from_rows(&r).expect("rectangular input")
    }

    pub fn column_vector(v: &[CNum]) -> Self {
        CMat {
            rows: v.len(),
            cols: 1,
            data: v.to_vec(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[CNum] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [CNum] {
        &mut self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<CNum>> {
        self.data.chunks(self.cols.max(1)).map(|r| r.to_vec()).collect()
    }

    pub fn column(&self, j: usize) -> Vec<CNum> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn set_column(&mut self, j: usize, v: &[CNum]) {
        for (i, &x) in v.iter().enumerate() {
            self[(i, j)] = x;
        }
    }

    pub fn diag(&self) -> Vec<CNum> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    /// Rows `r0..r1`, columns `c0..c1`.
    pub fn block(&self, r0: usize, r1: usize, c0: usize, c1: usize) -> CMat {
        let mut m = CMat::zeros(r1 - r0, c1 - c0);
        for i in r0..r1 {
            for j in c0..c1 {
                m[(i - r0, j - c0)] = self[(i, j)];
            }
        }
        m
    }

    pub fn set_block(&mut self, r0: usize, c0: usize, b: &CMat) {
        for i in 0..b.rows {
            for j in 0..b.cols {
                self[(r0 + i, c0 + j)] = b[(i, j)];
            }
        }
    }

    pub fn transpose(&self) -> CMat {
        let mut m = CMat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                m[(j, i)] = self[(i, j)];
            }
        }
        m
    }

    pub fn scale(&self, c: CNum) -> CMat {
        CMat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| x * c).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(CNum) -> CNum) -> CMat {
        CMat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.norm()))
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self[(i, j)].norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn norm_one(&self) -> f64 {
        self.transpose().norm_inf()
    }

    pub fn max_abs_diff(&self, other: &CMat) -> f64 {
        assert_eq!(self.shape(), other.shape(), "max_abs_diff shape");
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).norm()))
    }

    /// Entrywise max deviation, relative to `other` where it is larger than 1e−8.
    pub fn rel_diff(&self, other: &CMat) -> f64 {
        self.data.iter().zip(&other.data).fold(0.0, |m, (a, b)| {
            let d = (a - b).norm();
            m.max(if b.norm() > 1e-8 { d / b.norm() } else { d })
        })
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.re.is_finite() && x.im.is_finite())
    }

    pub fn trace(&self) -> CNum {
        self.diag().iter().sum()
    }
}

impl Index<(usize, usize)> for CMat {
    type Output = CNum;
    fn index(&self, (i, j): (usize, usize)) -> &CNum {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for CMat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut CNum {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

// Operator forms panic on shape mismatch; the fallible `matmul` is the public entry.
impl Mul for &CMat {
    type Output = CMat;
    fn mul(self, rhs: &CMat) -> CMat {
        matmul(self, rhs).expect("matrix product shape")
    }
}

impl Add for &CMat {
    type Output = CMat;
    fn add(self, rhs: &CMat) -> CMat {
        assert_eq!(self.shape(), rhs.shape(), "matrix sum shape");
        CMat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &CMat {
    type Output = CMat;
    fn sub(self, rhs: &CMat) -> CMat {
        assert_eq!(self.shape(), rhs.shape(), "matrix difference shape");
        CMat {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

pub fn matmul(a: &CMat, b: &CMat) -> Result<CMat> {
    if a.cols != b.rows {
        return Err(Error::DimensionMismatch {
            op: "matmul",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let mut c = CMat::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        for k in 0..a.cols {
            let aik = a[(i, k)];
            if aik == ZERO {
                continue;
            }
            let brow = &b.data[k * b.cols..(k + 1) * b.cols];
            let crow = &mut c.data[i * b.cols..(i + 1) * b.cols];
            for (cj, bj) in crow.iter_mut().zip(brow) {
                *cj += aik * bj;
            }
        }
    }
    Ok(c)
}

/// Packed LU factors with row permutation.
#[derive(Clone, Debug)]
pub struct Lu {
    lu: CMat,
    perm: Vec<usize>,
    odd: bool,
    pub min_pivot: f64,
}

fn factor(a: &CMat) -> Result<Lu> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch {
            op: "lu",
            left: a.shape(),
            right: a.shape(),
        });
    }
    let n = a.rows;
    let mut lu = a.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut odd = false;
    let mut min_pivot = f64::INFINITY;
    for k in 0..n {
        let p = (k..n)
            .max_by(|&x, &y| lu[(x, k)].norm().total_cmp(&lu[(y, k)].norm()))
            .unwrap();
        if p != k {
            for j in 0..n {
                lu.data.swap(k * n + j, p * n + j);
            }
            perm.swap(k, p);
            odd = !odd;
        }
        let piv = lu[(k, k)];
        min_pivot = min_pivot.min(piv.norm());
        if piv == ZERO {
            continue;
        }
        for i in k + 1..n {
            let f = lu[(i, k)] / piv;
            lu[(i, k)] = f;
            if f != ZERO {
                for j in k + 1..n {
                    let t = lu[(k, j)];
                    lu[(i, j)] -= f * t;
                }
            }
        }
    }
    Ok(Lu {
        lu,
        perm,
        odd,
        min_pivot: if n == 0 { 0.0 } else { min_pivot },
    })
}

impl Lu {
    pub fn new(a: &CMat) -> Result<Lu> {
        let f = factor(a)?;
        let thresh = 1e-13 * a.norm_inf();
        if a.rows > 0 && (f.min_pivot <= thresh || f.min_pivot == 0.0) {
            return Err(Error::Singular {
                min_pivot: f.min_pivot,
            });
        }
        Ok(f)
    }

    pub fn det(&self) -> CNum {
        let d: CNum = self.lu.diag().iter().product();
        if self.odd {
            -d
        } else {
            d
        }
    }

    pub fn solve(&self, rhs: &CMat) -> Result<CMat> {
        let n = self.lu.rows;
        if rhs.rows != n {
            return Err(Error::DimensionMismatch {
                op: "lu_solve",
                left: self.lu.shape(),
                right: rhs.shape(),
            });
        }
        let mut x = CMat::zeros(n, rhs.cols);
        for (i, &p) in self.perm.iter().enumerate() {
            for j in 0..rhs.cols {
                x[(i, j)] = rhs[(p, j)];
            }
        }
        for c in 0..rhs.cols {
            for i in 0..n {
                let mut s = x[(i, c)];
                for k in 0..i {
                    s -= self.lu[(i, k)] * x[(k, c)];
                }
                x[(i, c)] = s;
            }
            for i in (0..n).rev() {
                let mut s = x[(i, c)];
                for k in i + 1..n {
                    s -= self.lu[(i, k)] * x[(k, c)];
                }
                x[(i, c)] = s / self.lu[(i, i)];
            }
        }
        Ok(x)
    }
}

pub fn lu_solve(a: &CMat, rhs: &CMat) -> Result<CMat> {
    Lu::new(a)?.solve(rhs)
}

pub fn inverse(a: &CMat) -> Result<CMat> {
    Lu::new(a)?.solve(&CMat::identity(a.rows))
}

/// Product of the LU pivots; a singular matrix simply yields a tiny or zero value.
pub fn det(a: &CMat) -> Result<CNum> {
    Ok(factor(a)?.det())
}

// Rotation [c s; −conj(s) c] with real c that zeroes y in (x, y).
fn givens(x: CNum, y: CNum) -> (f64, CNum) {
    let ax = x.norm();
    if y == ZERO {
        return (1.0, ZERO);
    }
    if ax == 0.0 {
        return (0.0, ONE);
    }
    let r = ax.hypot(y.norm());
    (ax / r, (x / ax) * y.conj() / r)
}

fn balance(a: &mut CMat) {
    let n = a.rows;
    let mut done = false;
    let mut sweeps = 0;
    while !done && sweeps < 50 {
        done = true;
        sweeps += 1;
        for i in 0..n {
            let (mut c, mut r) = (0.0, 0.0);
            for j in 0..n {
                if j != i {
                    c += a[(j, i)].l1_norm();
                    r += a[(i, j)].l1_norm();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let (mut c2, mut r2) = (c, r);
            while c2 < r2 / 2.0 {
                c2 *= 2.0;
                r2 /= 2.0;
                f *= 2.0;
            }
            while c2 >= r2 * 2.0 {
                c2 /= 2.0;
                r2 *= 2.0;
                f /= 2.0;
            }
            if (c2 + r2) < 0.95 * s {
                done = false;
                for j in 0..n {
                    a[(i, j)] /= f;
                    a[(j, i)] *= f;
                }
            }
        }
    }
}

fn hessenberg(a: &mut CMat) {
    let n = a.rows;
    for k in 0..n.saturating_sub(2) {
        let norm: f64 = (k + 1..n).map(|i| a[(i, k)].norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let x0 = a[(k + 1, k)];
        let phase = if x0.norm() == 0.0 { ONE } else { x0 / x0.norm() };
        let mut v: Vec<CNum> = (k + 1..n).map(|i| a[(i, k)]).collect();
        v[0] += phase * norm;
        let vn: f64 = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        if vn == 0.0 {
            continue;
        }
        for x in v.iter_mut() {
            *x /= vn;
        }
        // A ← (I − 2vv*) A
        for j in 0..n {
            let mut s = ZERO;
            for (t, vi) in v.iter().enumerate() {
                s += vi.conj() * a[(k + 1 + t, j)];
            }
            for (t, vi) in v.iter().enumerate() {
                a[(k + 1 + t, j)] -= 2.0 * vi * s;
            }
        }
        // A ← A (I − 2vv*)
        for i in 0..n {
            let mut s = ZERO;
            for (t, vi) in v.iter().enumerate() {
                s += a[(i, k + 1 + t)] * vi;
            }
            for (t, vi) in v.iter().enumerate() {
                a[(i, k + 1 + t)] -= 2.0 * s * vi.conj();
            }
        }
        for i in k + 2..n {
            a[(i, k)] = ZERO;
        }
    }
}

/// Eigenvalues by balancing, Hessenberg reduction and single-shift complex QR.
pub fn eig(a: &CMat) -> Result<Vec<CNum>> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch {
            op: "eig",
            left: a.shape(),
            right: a.shape(),
        });
    }
    let n = a.rows;
    if n > 16 {
        return Err(Error::Invalid(format!("eig supports n <= 16, got {n}")));
    }
    let mut h = a.clone();
    balance(&mut h);
    hessenberg(&mut h);
    let mut out = vec![ZERO; n];
    if n == 0 {
        return Ok(out);
    }
    let eps = f64::EPSILON;
    let mut hi = n - 1;
    let mut iter = 0usize;
    let mut total = 0usize;
    while hi > 0 {
        let mut l = hi;
        while l > 0 {
            let s = h[(l - 1, l - 1)].norm() + h[(l, l)].norm();
            let s = if s == 0.0 { h.norm_inf() } else { s };
            if h[(l, l - 1)].norm() <= eps * s {
                h[(l, l - 1)] = ZERO;
                break;
            }
            l -= 1;
        }
        if l == hi {
            out[hi] = h[(hi, hi)];
            hi -= 1;
            iter = 0;
            continue;
        }
        iter += 1;
        total += 1;
        if iter > 60 {
            return Err(Error::EigNoConvergence { iterations: total });
        }
        let (p, q, r, s) = (h[(hi - 1, hi - 1)], h[(hi - 1, hi)], h[(hi, hi - 1)], h[(hi, hi)]);
        let mu = if iter % 11 == 10 {
            s + CNum::new(0.75, 0.43) * r.norm()
        } else {
            let half = (p - s) * 0.5;
            let disc = (half * half + q * r).sqrt();
            let m1 = (p + s) * 0.5 + disc;
            let m2 = (p + s) * 0.5 - disc;
            if (m1 - s).norm() < (m2 - s).norm() {
                m1
            } else {
                m2
            }
        };
        for i in l..=hi {
            h[(i, i)] -= mu;
        }
        let mut rots = Vec::with_capacity(hi - l);
        for k in l..hi {
            let (c, sn) = givens(h[(k, k)], h[(k + 1, k)]);
            for j in k..=hi {
                let x = h[(k, j)];
                let y = h[(k + 1, j)];
                h[(k, j)] = c * x + sn * y;
                h[(k + 1, j)] = -sn.conj() * x + c * y;
            }
            rots.push((c, sn));
        }
        for (t, &(c, sn)) in rots.iter().enumerate() {
            let k = l + t;
            for i in l..=(k + 1).min(hi) {
                let x = h[(i, k)];
                let y = h[(i, k + 1)];
                h[(i, k)] = c * x + sn.conj() * y;
                h[(i, k + 1)] = -sn * x + c * y;
            }
        }
        for i in l..=hi {
            h[(i, i)] += mu;
        }
    }
    out[0] = h[(0, 0)];
    Ok(out)
}

/// Matrix exponential by scaling and squaring of a Taylor polynomial.
pub fn expm(a: &CMat) -> Result<CMat> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch {
            op: "expm",
            left: a.shape(),
            right: a.shape(),
        });
    }
    let n = a.rows;
    let norm = a.norm_one();
    let squarings = if norm > 0.25 {
        (norm / 0.25).log2().ceil() as u32
    } else {
        0
    };
    let b = a.scale(CNum::new(0.5f64.powi(squarings as i32), 0.0));
    let mut sum = CMat::identity(n);
    let mut term = CMat::identity(n);
    for k in 1..30 {
        term = (&term * &b).scale(CNum::new(1.0 / k as f64, 0.0));
        sum = &sum + &term;
        if term.max_abs() <= 1e-18 * sum.max_abs() {
            break;
        }
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    Ok(sum)
}

/// `base^D` for diagonal `D`, log taken on `branch`.
pub fn diag_power(d: &[CNum], base: CNum, branch: Branch) -> Result<CMat> {
    let l = branch.ln(base)?;
    Ok(CMat::from_diag(
        &d.iter().map(|&x| (x * l).exp()).collect::<Vec<_>>(),
    ))
}

/// Greedy nearest matching of two multisets; returns the worst distance.
pub fn multiset_distance(a: &[CNum], b: &[CNum]) -> f64 {
    assert_eq!(a.len(), b.len());
    let mut used = vec![false; b.len()];
    let mut worst: f64 = 0.0;
    for x in a {
        let (k, d) = b
            .iter()
            .enumerate()
            .filter(|(k, _)| !used[*k])
            .map(|(k, y)| (k, (x - y).norm()))
            .min_by(|p, q| p.1.total_cmp(&q.1))
            .unwrap();
        used[k] = true;
        worst = worst.max(d);
    }
    worst
}

pub fn c(re: f64, im: f64) -> CNum {
    CNum::new(re, im)
}

pub fn r(re: f64) -> CNum {
    CNum::new(re, 0.0)
}
