//! Recurrence scans for circle rotations, discrepancy of polynomial orbits on tori,
//! and correlation sequences of nilsystems.
//!
//! Arcs live on a 64-bit fixed-point circle, so translating a set by `p(n) alpha`
//! stays exact modulo `2^-64` even for large `p(n)`.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::angle::{parse_real, to_fixed, to_unit};
use crate::error::{Error, Result};
use crate::nilgroup::{level_range, NilPoint, NilSystem};

const FULL: u128 = 1 << 64;

/// Recurrence bar for the spectral diagnostic.
pub const RECURRENCE_BAR: f64 = 0.9;
/// Decay bar for the spectral diagnostic.
pub const DECAY_BAR: f64 = 0.2;
/// Largest change of a correlation allowed when the averaging length doubles.
pub const BIRKHOFF_TOLERANCE: f64 = 0.05;

/// Finite union of half-open arcs, stored as sorted disjoint fixed-point intervals
/// inside `[0, 2^64]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ArcSet {
    segs: Vec<(u128, u128)>,
}

impl ArcSet {
    pub fn empty() -> Self {
        ArcSet { segs: Vec::new() }
    }

    pub fn full() -> Self {
        ArcSet { segs: vec![(0, FULL)] }
    }

    /// Union of the arcs `[a, b)` read modulo 1; `b - a >= 1` covers the circle.
    pub fn from_arcs(arcs: &[(f64, f64)]) -> Result<Self> {
        let mut segs = Vec::new();
        for &(a, b) in arcs {
            if !(a.is_finite() && b.is_finite()) {
                return Err(Error::NonFinite("arc endpoint"));
            }
            if b < a {
                return Err(Error::Precondition(format!("arc [{a}, {b}) has its end before its start")));
            }
            if b - a >= 1.0 {
                return Ok(Self::full());
            }
            let lo = to_fixed(a) as u128;
            let len = to_fixed(b).wrapping_sub(to_fixed(a)) as u128;
            push_wrapped(&mut segs, lo, len);
        }
        Ok(Self::normalized(segs))
    }

    fn normalized(mut segs: Vec<(u128, u128)>) -> Self {
        segs.retain(|(lo, hi)| hi > lo);
        segs.sort_unstable();
        let mut out: Vec<(u128, u128)> = Vec::with_capacity(segs.len());
        for (lo, hi) in segs {
            match out.last_mut() {
                Some(last) if lo <= last.1 => last.1 = last.1.max(hi),
                _ => out.push((lo, hi)),
            }
        }
        ArcSet { segs: out }
    }

    pub fn measure(&self) -> f64 {
        self.segs.iter().map(|(lo, hi)| (hi - lo) as f64).sum::<f64>() / FULL as f64
    }

    /// `{ y + t : y in self }` for a fixed-point `t`.
    pub fn rotated(&self, t: u64) -> Self {
        let mut segs = Vec::with_capacity(self.segs.len() + 1);
        for &(lo, hi) in &self.segs {
            push_wrapped(&mut segs, (lo + t as u128) % FULL, hi - lo);
        }
        Self::normalized(segs)
    }

    pub fn intersect(&self, other: &Self) -> Self {
        let (mut i, mut j) = (0, 0);
        let mut segs = Vec::new();
        while i < self.segs.len() && j < other.segs.len() {
            let (a, b) = (self.segs[i], other.segs[j]);
            let lo = a.0.max(b.0);
            let hi = a.1.min(b.1);
            if hi > lo {
                segs.push((lo, hi));
            }
            if a.1 < b.1 {
                i += 1;
            } else {
                j += 1;
            }
        }
        ArcSet { segs }
    }

    /// Arcs as `(start, end)` pairs in `[0, 1]`.
    pub fn arcs(&self) -> Vec<(f64, f64)> {
        self.segs
            .iter()
            .map(|&(lo, hi)| (lo as f64 / FULL as f64, hi as f64 / FULL as f64))
            .collect()
    }
}

fn push_wrapped(segs: &mut Vec<(u128, u128)>, lo: u128, len: u128) {
    let hi = lo + len;
    if hi <= FULL {
        segs.push((lo, hi));
    } else {
        segs.push((lo, FULL));
        segs.push((0, hi - FULL));
    }
}

/// Parses `a:b[,c:d...]` into arcs; endpoints accept the forms of [`parse_real`].
pub fn parse_arcs(s: &str) -> Result<Vec<(f64, f64)>> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|part| {
            let (a, b) = part
                .split_once(':')
                .ok_or_else(|| Error::Config(format!("arc {part:?} is not of the form a:b")))?;
            Ok((parse_real(a)?, parse_real(b)?))
        })
        .collect()
}

/// Rotation `y -> y + alpha` of the circle together with a set `A`.
#[derive(Clone, Debug)]
pub struct RotationSystem {
    alpha: f64,
    alpha_fixed: u64,
    set: ArcSet,
}

impl RotationSystem {
    pub fn new(alpha: f64, arcs: &[(f64, f64)]) -> Result<Self> {
        if !alpha.is_finite() {
            return Err(Error::NonFinite("alpha"));
        }
        Ok(RotationSystem {
            alpha,
            alpha_fixed: to_fixed(alpha),
            set: ArcSet::from_arcs(arcs)?,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn set(&self) -> &ArcSet {
        &self.set
    }

    pub fn measure(&self) -> f64 {
        self.set.measure()
    }

    /// `T^-t A = A - t alpha`, with `t` read modulo `2^64`.
    fn preimage(&self, t: u64) -> ArcSet {
        self.set.rotated(self.alpha_fixed.wrapping_mul(t).wrapping_neg())
    }

    fn intersection_wrapped(&self, shifts: impl IntoIterator<Item = u64>) -> f64 {
        let mut acc = self.set.clone();
        for t in shifts {
            if acc.segs.is_empty() {
                break;
            }
            acc = acc.intersect(&self.preimage(t));
        }
        acc.measure()
    }
}

/// `mu(A - s_1 alpha  ∩ ... ∩ A - s_k alpha)`.
pub fn multi_intersection_measure(sys: &RotationSystem, shifts: &[i64]) -> f64 {
    let mut acc = ArcSet::full();
    for &s in shifts {
        acc = acc.intersect(&sys.preimage(s as u64));
    }
    acc.measure()
}

/// Integer polynomial `sum c_j n^j`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Poly {
    coeffs: Vec<i64>,
}

impl Poly {
    pub fn new(mut coeffs: Vec<i64>) -> Self {
        while coeffs.last() == Some(&0) {
            coeffs.pop();
        }
        Poly { coeffs }
    }

    /// `n^k`.
    pub fn monomial(k: usize) -> Self {
        let mut c = vec![0; k + 1];
        c[k] = 1;
        Poly { coeffs: c }
    }

    pub fn coeffs(&self) -> &[i64] {
        &self.coeffs
    }

    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn constant(&self) -> i64 {
        self.coeffs.first().copied().unwrap_or(0)
    }

    /// `p(n)` modulo `2^64`.
    pub fn eval_wrapping(&self, n: u64) -> u64 {
        self.coeffs
            .iter()
            .rev()
            .fold(0u64, |acc, c| acc.wrapping_mul(n).wrapping_add(*c as u64))
    }
}

impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.coeffs.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (k, &c) in self.coeffs.iter().enumerate().rev() {
            if c == 0 {
                continue;
            }
            let sign = if c < 0 { "-" } else if first { "" } else { "+" };
            let mag = c.unsigned_abs();
            let coef = if mag == 1 && k > 0 { String::new() } else { mag.to_string() };
            let var = match k {
                0 => String::new(),
                1 => "n".into(),
                _ => format!("n^{k}"),
            };
            write!(f, "{sign}{coef}{var}")?;
            first = false;
        }
        Ok(())
    }
}

impl FromStr for Poly {
    type Err = Error;

    /// Sums of terms `c`, `cn` or `cn^k`, such as `n^2-3n` or `2n`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("cannot parse polynomial {s:?}"));
        let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        if t.is_empty() {
            return Err(bad());
        }
        let mut coeffs: Vec<i64> = Vec::new();
        let mut rest = t.as_str();
        while !rest.is_empty() {
            let (neg, body) = match rest.as_bytes()[0] {
                b'-' => (true, &rest[1..]),
                b'+' => (false, &rest[1..]),
                _ => (false, rest),
            };
            let end = body[1.min(body.len())..]
                .find(['+', '-'])
                .map_or(body.len(), |i| i + 1);
            let term = &body[..end];
            rest = &body[end..];
            let (c, k) = match term.split_once('n') {
                None => (term.parse::<i64>().map_err(|_| bad())?, 0),
                Some((c, pow)) => {
                    let c = if c.is_empty() { 1 } else { c.trim_end_matches('*').parse().map_err(|_| bad())? };
                    let k = match pow.strip_prefix('^') {
                        Some(p) => p.parse::<usize>().map_err(|_| bad())?,
                        None if pow.is_empty() => 1,
                        None => return Err(bad()),
                    };
                    (c, k)
                }
            };
            if coeffs.len() <= k {
                coeffs.resize(k + 1, 0);
            }
            coeffs[k] = coeffs[k]
                .checked_add(if neg { -c } else { c })
                .ok_or(Error::Overflow("polynomial coefficient"))?;
        }
        Ok(Poly::new(coeffs))
    }
}

impl Serialize for Poly {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Poly {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Parses a comma-separated polynomial list.
pub fn parse_polys(s: &str) -> Result<Vec<Poly>> {
    s.split(',').map(str::parse).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HitSetReport {
    pub k: usize,
    pub eps: f64,
    #[serde(rename = "N")]
    pub n_max: u64,
    pub shifts: Vec<Poly>,
    pub measure: f64,
    /// `mu(A)^(k+1) - eps`.
    pub threshold: f64,
    pub hits: Vec<u64>,
    /// Largest distance between consecutive hits, counting the tail up to `N`.
    pub max_gap: u64,
    pub density: f64,
    /// Gap proxy for syndeticity: `max_gap <= N / 10`.
    pub pass: bool,
}

fn scan(sys: &RotationSystem, polys: &[Poly], eps: f64, n_max: u64) -> Result<HitSetReport> {
    if !(eps > 0.0) {
        return Err(Error::Precondition(format!("eps must be positive, got {eps}")));
    }
    if n_max < 1 {
        return Err(Error::Precondition("N must be at least 1".into()));
    }
    let mu = sys.measure();
    let k = polys.len();
    let threshold = mu.powi(k as i32 + 1) - eps;
    let hits: Vec<u64> = (0..=n_max)
        .into_par_iter()
        .filter(|&n| sys.intersection_wrapped(polys.iter().map(|p| p.eval_wrapping(n))) > threshold)
        .collect();
    let mut max_gap = hits.windows(2).map(|w| w[1] - w[0]).max().unwrap_or(0);
    if let Some(last) = hits.last() {
        max_gap = max_gap.max(n_max - last);
    }
    let density = hits.len() as f64 / (n_max + 1) as f64;
    Ok(HitSetReport {
        k,
        eps,
        n_max,
        shifts: polys.to_vec(),
        measure: mu,
        threshold,
        pass: !hits.is_empty() && max_gap as f64 <= n_max as f64 / 10.0,
        hits,
        max_gap,
        density,
    })
}

/// Times `n <= N` with `mu(A ∩ T^-n A ∩ ... ∩ T^-kn A) > mu(A)^(k+1) - eps`.
pub fn syndetic_scan(sys: &RotationSystem, k: usize, eps: f64, n_max: u64) -> Result<HitSetReport> {
    if k == 0 {
        return Err(Error::Precondition("k must be at least 1".into()));
    }
    let polys: Vec<Poly> = (1..=k as i64).map(|j| Poly::new(vec![0, j])).collect();
    scan(sys, &polys, eps, n_max)
}

/// As [`syndetic_scan`] with the iterates `p_1(n), ..., p_k(n)`.
pub fn polynomial_scan(sys: &RotationSystem, polys: &[Poly], eps: f64, n_max: u64) -> Result<HitSetReport> {
    if polys.is_empty() {
        return Err(Error::Precondition("at least one polynomial is required".into()));
    }
    if let Some(p) = polys.iter().find(|p| p.constant() != 0) {
        return Err(Error::Precondition(format!("polynomial {p} does not vanish at 0")));
    }
    scan(sys, polys, eps, n_max)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeylReport {
    pub polys: Vec<Poly>,
    pub alpha: f64,
    #[serde(rename = "N")]
    pub n_max: u64,
    /// Integer basis of the span of the polynomials; the orbit closure is the image
    /// of the torus of this dimension.
    pub basis: Vec<Poly>,
    /// Integer vectors `a` with `sum a_i p_i = 0`.
    pub relations: Vec<Vec<i64>>,
    /// Cells per axis of the counting grid; `None` when the discrepancy is exact.
    pub grid: Option<usize>,
    pub discrepancy: f64,
}

/// Integer row echelon form of `[P | I]`: returns the nonzero rows of `P` and the
/// identity parts of the rows that vanish.
fn integer_relations(polys: &[Poly]) -> Result<(Vec<Poly>, Vec<Vec<i64>>)> {
    let k = polys.len();
    let width = polys.iter().map(|p| p.coeffs.len()).max().unwrap_or(0);
    let overflow = || Error::Overflow("relation detection");
    let mut rows: Vec<Vec<i128>> = polys
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut r: Vec<i128> = p.coeffs.iter().map(|&c| c as i128).collect();
            r.resize(width, 0);
            r.extend((0..k).map(|j| (i == j) as i128));
            r
        })
        .collect();
    let mut pivot = 0;
    for col in 0..width {
        loop {
            let Some(best) = (pivot..k)
                .filter(|&r| rows[r][col] != 0)
                .min_by_key(|&r| rows[r][col].unsigned_abs())
            else {
                break;
            };
            rows.swap(pivot, best);
            let mut done = true;
            for r in pivot + 1..k {
                let q = rows[r][col] / rows[pivot][col];
                if q != 0 {
                    for c in 0..width + k {
                        let v = rows[pivot][c].checked_mul(q).ok_or_else(overflow)?;
                        rows[r][c] = rows[r][c].checked_sub(v).ok_or_else(overflow)?;
                    }
                }
                done &= rows[r][col] == 0;
            }
            if done {
                pivot += 1;
                break;
            }
        }
        if pivot == k {
            break;
        }
    }
    let to_i64 = |v: i128| i64::try_from(v).map_err(|_| overflow());
    let mut basis = Vec::new();
    let mut relations = Vec::new();
    for row in &rows {
        let sign = |v: &[i128]| v.iter().find(|c| **c != 0).map_or(1, |c| c.signum());
        if row[..width].iter().any(|c| *c != 0) {
            let s = sign(&row[..width]);
            basis.push(Poly::new(row[..width].iter().map(|c| to_i64(c * s)).collect::<Result<_>>()?));
        } else {
            let s = sign(&row[width..]);
            relations.push(row[width..].iter().map(|c| to_i64(c * s)).collect::<Result<_>>()?);
        }
    }
    Ok((basis, relations))
}

/// Star discrepancy of `(q_1(n) alpha, ..., q_r(n) alpha) mod 1`, `1 <= n <= N`, where
/// the `q_j` are an integer basis of the span of `polys`. The orbit of the `p_i` lies
/// on the image of that torus, so this measures equidistribution on the subtorus.
/// Exact in one dimension; over anchored boxes with grid corners otherwise.
pub fn weyl_discrepancy(polys: &[Poly], alpha: f64, n_max: u64) -> Result<WeylReport> {
    if polys.is_empty() || polys.len() > 3 {
        return Err(Error::Precondition(format!(
            "between 1 and 3 polynomials are supported, got {}",
            polys.len()
        )));
    }
    if n_max < 1 {
        return Err(Error::Precondition("N must be at least 1".into()));
    }
    if !alpha.is_finite() {
        return Err(Error::NonFinite("alpha"));
    }
    let (basis, relations) = integer_relations(polys)?;
    let a = to_fixed(alpha);
    let r = basis.len();
    let point = |n: u64, j: usize| to_unit(basis[j].eval_wrapping(n).wrapping_mul(a));
    let nf = n_max as f64;
    let (grid, discrepancy) = match r {
        0 => (None, 1.0 - 1.0 / (nf + 1.0)),
        1 => {
            let mut xs: Vec<f64> = (1..=n_max).map(|n| point(n, 0)).collect();
            xs.sort_by(f64::total_cmp);
            let d = xs
                .iter()
                .enumerate()
                .map(|(i, x)| ((i + 1) as f64 / nf - x).max(x - i as f64 / nf))
                .fold(0.0, f64::max);
            (None, d)
        }
        _ => {
            let g: usize = if r == 2 { 64 } else { 16 };
            let mut hist = vec![0u64; g.pow(r as u32)];
            for n in 1..=n_max {
                let idx = (0..r).fold(0, |acc, j| acc * g + ((point(n, j) * g as f64) as usize).min(g - 1));
                hist[idx] += 1;
            }
            // inclusive prefix sums along each axis in turn
            for axis in 0..r {
                let stride = g.pow((r - 1 - axis) as u32);
                for idx in 0..hist.len() {
                    if (idx / stride) % g > 0 {
                        hist[idx] += hist[idx - stride];
                    }
                }
            }
            let d = hist
                .iter()
                .enumerate()
                .map(|(idx, &count)| {
                    let vol: f64 = (0..r)
                        .map(|j| ((idx / g.pow((r - 1 - j) as u32)) % g + 1) as f64 / g as f64)
                        .product();
                    (count as f64 / nf - vol).abs()
                })
                .fold(0.0, f64::max);
            (Some(g), d)
        }
    };
    Ok(WeylReport {
        polys: polys.to_vec(),
        alpha,
        n_max,
        basis,
        relations,
        grid,
        discrepancy,
    })
}

/// Test functions on the nilmanifold.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Observable {
    /// `f = 1`.
    Constant,
    /// `e(x_12)`: factors through the rotation on the abelianization.
    Abelian,
    /// `e` of the top-level coordinate of the reduced representative; transforms by a
    /// character under central translations.
    Vertical,
}

impl FromStr for Observable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(Observable::Constant),
            "abelian" => Ok(Observable::Abelian),
            "vertical" => Ok(Observable::Vertical),
            _ => Err(Error::Config(format!("unknown observable {s:?}"))),
        }
    }
}

impl Observable {
    pub fn eval(self, x: &NilPoint) -> Complex64 {
        let t = match self {
            Observable::Constant => return Complex64::new(1.0, 0.0),
            Observable::Abelian => x.coords()[0],
            Observable::Vertical => {
                let m = x.size();
                x.coords()[level_range(m, m - 1).start]
            }
        };
        Complex64::from_polar(1.0, std::f64::consts::TAU * t)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSequence {
    pub observable: Observable,
    /// Averaging length.
    #[serde(rename = "N")]
    pub n_avg: usize,
    /// `[re, im]` of the correlation at `n = 0, ..., n_max`.
    pub values: Vec<[f64; 2]>,
}

impl CorrelationSequence {
    pub fn n_max(&self) -> usize {
        self.values.len() - 1
    }

    pub fn abs(&self) -> Vec<f64> {
        self.values.iter().map(|[re, im]| re.hypot(*im)).collect()
    }

    pub fn get(&self, n: usize) -> Option<Complex64> {
        self.values.get(n).map(|[re, im]| Complex64::new(*re, *im))
    }
}

/// Birkhoff estimate `(1/N) sum_{j<N} f(T^(n+j) x0) conj f(T^j x0)` for `n <= n_max`.
pub fn correlation_sequence(
    sys: &NilSystem,
    observable: Observable,
    x0: &NilPoint,
    n_avg: usize,
    n_max: usize,
) -> Result<CorrelationSequence> {
    if n_avg == 0 {
        return Err(Error::Precondition("averaging length must be positive".into()));
    }
    if x0.size() != sys.size() {
        return Err(Error::SizeMismatch {
            left: sys.size(),
            right: x0.size(),
        });
    }
    let mut f = Vec::with_capacity(n_avg + n_max);
    let mut x = *x0;
    for _ in 0..n_avg + n_max {
        f.push(observable.eval(&x));
        x = sys.translate(&x);
    }
    let values = (0..=n_max)
        .into_par_iter()
        .map(|n| {
            let s: Complex64 = f[n..n + n_avg].iter().zip(&f[..n_avg]).map(|(a, b)| a * b.conj()).sum();
            let c = s / n_avg as f64;
            [c.re, c.im]
        })
        .collect();
    Ok(CorrelationSequence {
        observable,
        n_avg,
        values,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BirkhoffCheck {
    pub n_avg: usize,
    pub max_change: f64,
    pub flagged: bool,
}

/// Largest change of the correlations up to `n_max` when the averaging length doubles.
pub fn birkhoff_stability(
    sys: &NilSystem,
    observable: Observable,
    x0: &NilPoint,
    n_avg: usize,
    n_max: usize,
) -> Result<BirkhoffCheck> {
    let a = correlation_sequence(sys, observable, x0, n_avg, n_max)?;
    let b = correlation_sequence(sys, observable, x0, 2 * n_avg, n_max)?;
    let max_change = (0..=n_max)
        .map(|n| (a.get(n).unwrap() - b.get(n).unwrap()).norm())
        .fold(0.0, f64::max);
    Ok(BirkhoffCheck {
        n_avg,
        max_change,
        flagged: !(max_change < BIRKHOFF_TOLERANCE),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectralVerdict {
    /// The first observable recurs and the second decays.
    Contrast,
    /// The second observable recurs and the first decays.
    Reversed,
    /// Neither observable decays.
    DiscreteOnly,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceScores {
    /// Largest modulus over the top decade.
    pub recurrence: f64,
    /// Median modulus over the top decade.
    pub decay: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    /// First and last `n` of the top decade.
    pub window: (usize, usize),
    pub first: SequenceScores,
    pub second: SequenceScores,
    /// Recurrence score of the first sequence.
    pub recurrence_score: f64,
    /// Decay score of the second sequence.
    pub decay_score: f64,
    pub verdict: SpectralVerdict,
}

fn scores(abs: &[f64]) -> SequenceScores {
    let mut sorted = abs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let len = sorted.len();
    let median = if len % 2 == 1 {
        sorted[len / 2]
    } else {
        (sorted[len / 2 - 1] + sorted[len / 2]) / 2.0
    };
    SequenceScores {
        recurrence: sorted[len - 1],
        decay: median,
    }
}

/// Compares a sequence expected to recur (first) with one expected to decay (second)
/// over `n_max / 10 <= n <= n_max`.
pub fn spectrum_verdict(first: &CorrelationSequence, second: &CorrelationSequence) -> Result<SpectrumReport> {
    let n_max = first.n_max();
    if second.n_max() != n_max {
        return Err(Error::Precondition(format!(
            "sequences have different lengths {} and {}",
            n_max,
            second.n_max()
        )));
    }
    if n_max < 10 {
        return Err(Error::Precondition(format!("n_max must be at least 10, got {n_max}")));
    }
    let lo = n_max / 10;
    let a = scores(&first.abs()[lo..]);
    let b = scores(&second.abs()[lo..]);
    let verdict = if a.recurrence > RECURRENCE_BAR && b.decay < DECAY_BAR {
        SpectralVerdict::Contrast
    } else if b.recurrence > RECURRENCE_BAR && a.decay < DECAY_BAR {
        SpectralVerdict::Reversed
    } else if a.decay > RECURRENCE_BAR && b.decay > RECURRENCE_BAR {
        SpectralVerdict::DiscreteOnly
    } else {
        SpectralVerdict::Inconclusive
    };
    Ok(SpectrumReport {
        window: (lo, n_max),
        recurrence_score: a.recurrence,
        decay_score: b.decay,
        first: a,
        second: b,
        verdict,
    })
}
