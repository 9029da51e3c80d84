//! Unitriangular nilpotent groups, their integer lattices and nilmanifold translations.
//!
//! An element of the `m x m` unitriangular group is `I + N` with `N` strictly upper
//! triangular. Coordinates are the `d = m(m-1)/2` entries of `N`, stored by
//! superdiagonal level `l = j - i` (level 1 first, then level 2, ...). The integer
//! lattice is the set of unitriangular matrices with integer entries, and the
//! nilmanifold `X = G / Lattice` is represented by the coordinate box `[-1/2, 1/2)^d`.
//!
//! Distances are right invariant: `d_G(g, h) = |log(g h^-1)|_2`, and the distance on
//! `X` is the minimum of `d_G(x, y gamma)` over lattice elements `gamma`.

use std::fmt;
use std::ops::Mul;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Largest supported matrix size.
pub const MAX_SIZE: usize = 6;
/// Largest supported group dimension.
pub const MAX_DIM: usize = MAX_SIZE * (MAX_SIZE - 1) / 2;

type Strict = [[f64; MAX_SIZE]; MAX_SIZE];

/// Dimension of the `m x m` unitriangular group.
pub const fn dimension(m: usize) -> usize {
    m * (m - 1) / 2
}

/// Position of entry `(i, j)` (0-based, `i < j`) in the level-ordered coordinate list.
#[inline]
pub const fn index(m: usize, i: usize, j: usize) -> usize {
    let l = j - i;
    (l - 1) * m - (l - 1) * l / 2 + i
}

/// Coordinate range of level `l` (`1 <= l < m`).
#[inline]
pub fn level_range(m: usize, l: usize) -> std::ops::Range<usize> {
    let start = index(m, 0, l);
    start..start + (m - l)
}

fn check_size(m: usize) -> Result<()> {
    if (2..=MAX_SIZE).contains(&m) {
        Ok(())
    } else {
        Err(Error::UnsupportedSize(m))
    }
}

fn size_from_dim(d: usize) -> Option<usize> {
    (2..=MAX_SIZE).find(|m| dimension(*m) == d)
}

/// Splits `x` into `(n, r)` with `n` an integer, `x = n + r` and `r` in `[-1/2, 1/2)`.
#[inline]
pub(crate) fn centered_split(x: f64) -> (f64, f64) {
    let n = x.floor();
    let r = x - n;
    if r >= 0.5 {
        (n + 1.0, r - 1.0)
    } else {
        (n, r)
    }
}

/// Element `I + N` of the unitriangular group.
#[derive(Clone, Copy)]
pub struct GroupElement {
    size: usize,
    coords: [f64; MAX_DIM],
}

impl GroupElement {
    pub fn identity(m: usize) -> Result<Self> {
        check_size(m)?;
        Ok(Self::zero(m))
    }

    #[inline]
    pub(crate) fn zero(m: usize) -> Self {
        Self {
            size: m,
            coords: [0.0; MAX_DIM],
        }
    }

    pub fn from_coords(m: usize, coords: &[f64]) -> Result<Self> {
        check_size(m)?;
        let d = dimension(m);
        if coords.len() != d {
            return Err(Error::CoordinateCount {
                expected: d,
                got: coords.len(),
            });
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("group coordinates"));
        }
        let mut g = Self::zero(m);
        g.coords[..d].copy_from_slice(coords);
        Ok(g)
    }

    /// Builds an element from a flat coordinate list, inferring `m` from its length.
    pub fn from_flat(coords: &[f64]) -> Result<Self> {
        let m = size_from_dim(coords.len()).ok_or(Error::CoordinateCount {
            expected: 0,
            got: coords.len(),
        })?;
        Self::from_coords(m, coords)
    }

    #[inline]
    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn dim(&self) -> usize {
        dimension(self.size)
    }

    /// Nilpotency step `m - 1` of the ambient group.
    pub fn step(&self) -> usize {
        self.size - 1
    }

    #[inline]
    pub fn coords(&self) -> &[f64] {
        &self.coords[..dimension(self.size)]
    }

    /// Matrix entry `(i, j)` for 0-based `i < j`.
    #[inline]
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.coords[index(self.size, i, j)]
    }

    pub fn level(&self, l: usize) -> &[f64] {
        &self.coords[level_range(self.size, l)]
    }

    pub fn is_identity(&self) -> bool {
        self.coords().iter().all(|c| *c == 0.0)
    }

    /// Lowest level holding an entry of absolute value above `tol`, if any.
    pub fn lowest_level(&self, tol: f64) -> Option<usize> {
        (1..self.size).find(|l| self.level(*l).iter().any(|c| c.abs() > tol))
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.coords()
            .iter()
            .zip(other.coords())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    fn to_strict(self) -> Strict {
        let m = self.size;
        let mut n = [[0.0; MAX_SIZE]; MAX_SIZE];
        for i in 0..m {
            for j in i + 1..m {
                n[i][j] = self.coords[index(m, i, j)];
            }
        }
        n
    }

    fn from_strict(m: usize, n: &Strict) -> Self {
        let mut g = Self::zero(m);
        for i in 0..m {
            for j in i + 1..m {
                g.coords[index(m, i, j)] = n[i][j];
            }
        }
        g
    }

    #[inline]
    fn mul_unchecked(&self, other: &Self) -> Self {
        let m = self.size;
        let mut out = Self::zero(m);
        for l in 1..m {
            for i in 0..m - l {
                let j = i + l;
                let mut v = self.coords[index(m, i, j)] + other.coords[index(m, i, j)];
                for k in i + 1..j {
                    v += self.coords[index(m, i, k)] * other.coords[index(m, k, j)];
                }
                out.coords[index(m, i, j)] = v;
            }
        }
        out
    }

    pub fn checked_mul(&self, other: &Self) -> Result<Self> {
        if self.size != other.size {
            return Err(Error::SizeMismatch {
                left: self.size,
                right: other.size,
            });
        }
        Ok(self.mul_unchecked(other))
    }

    /// Inverse by back substitution over levels; exact for unitriangular matrices.
    pub fn inverse(&self) -> Self {
        let m = self.size;
        let mut inv = Self::zero(m);
        for l in 1..m {
            for i in 0..m - l {
                let j = i + l;
                let mut v = -self.coords[index(m, i, j)];
                for k in i + 1..j {
                    v -= self.coords[index(m, i, k)] * inv.coords[index(m, k, j)];
                }
                inv.coords[index(m, i, j)] = v;
            }
        }
        inv
    }

    /// `a b a^-1 b^-1`.
    pub fn commutator(&self, other: &Self) -> Result<Self> {
        let ab = self.checked_mul(other)?;
        Ok(ab
            .mul_unchecked(&self.inverse())
            .mul_unchecked(&other.inverse()))
    }

    /// Matrix logarithm; the series terminates because `N^m = 0`.
    pub fn log(&self) -> LieVector {
        let m = self.size;
        let n = self.to_strict();
        let mut acc = n;
        let mut pow = n;
        for k in 2..m {
            pow = strict_mul(m, &pow, &n);
            let c = if k % 2 == 0 { -1.0 } else { 1.0 } / k as f64;
            add_scaled(m, &mut acc, &pow, c);
        }
        LieVector(Self::from_strict(m, &acc))
    }

    /// Integer power computed along the one-parameter subgroup through `self`.
    pub fn pow(&self, k: i64) -> Self {
        self.log().scale(k as f64).exp()
    }

    pub fn is_integral(&self) -> bool {
        self.coords().iter().all(|c| c.fract() == 0.0)
    }
}

fn strict_mul(m: usize, a: &Strict, b: &Strict) -> Strict {
    let mut c = [[0.0; MAX_SIZE]; MAX_SIZE];
    for i in 0..m {
        for j in i + 2..m {
            let mut v = 0.0;
            for k in i + 1..j {
                v += a[i][k] * b[k][j];
            }
            c[i][j] = v;
        }
    }
    c
}

fn add_scaled(m: usize, acc: &mut Strict, x: &Strict, c: f64) {
    for i in 0..m {
        for j in i + 1..m {
            acc[i][j] += c * x[i][j];
        }
    }
}

impl Mul for GroupElement {
    type Output = GroupElement;

    /// Panics on size mismatch; use [`GroupElement::checked_mul`] to get an error instead.
    fn mul(self, rhs: GroupElement) -> GroupElement {
        assert_eq!(self.size, rhs.size, "group size mismatch");
        self.mul_unchecked(&rhs)
    }
}

impl<'a> Mul<&'a GroupElement> for &'a GroupElement {
    type Output = GroupElement;

    fn mul(self, rhs: &GroupElement) -> GroupElement {
        assert_eq!(self.size, rhs.size, "group size mismatch");
        self.mul_unchecked(rhs)
    }
}

impl PartialEq for GroupElement {
    fn eq(&self, other: &Self) -> bool {
        self.size == other.size && self.coords() == other.coords()
    }
}

impl fmt::Debug for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GroupElement(m={}, {:?})", self.size, self.coords())
    }
}

impl Serialize for GroupElement {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.coords().serialize(s)
    }
}

impl<'de> Deserialize<'de> for GroupElement {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        GroupElement::from_flat(&v).map_err(serde::de::Error::custom)
    }
}

/// Vector of the Lie algebra in the level-ordered basis `{E_ij}`.
#[derive(Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LieVector(GroupElement);

impl LieVector {
    pub fn zero(m: usize) -> Result<Self> {
        GroupElement::identity(m).map(LieVector)
    }

    pub fn from_coords(m: usize, coords: &[f64]) -> Result<Self> {
        GroupElement::from_coords(m, coords).map(LieVector)
    }

    pub fn size(&self) -> usize {
        self.0.size
    }

    pub fn coords(&self) -> &[f64] {
        self.0.coords()
    }

    pub fn norm(&self) -> f64 {
        self.coords().iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn scale(&self, c: f64) -> Self {
        let mut out = *self;
        for v in out.0.coords.iter_mut() {
            *v *= c;
        }
        out
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.0.max_abs_diff(&other.0)
    }

    /// Matrix exponential; the series terminates because `X^m = 0`.
    pub fn exp(&self) -> GroupElement {
        let m = self.0.size;
        let x = self.0.to_strict();
        let mut acc = x;
        let mut pow = x;
        for k in 2..m {
            pow = strict_mul(m, &pow, &x);
            for row in pow.iter_mut().take(m) {
                for v in row.iter_mut().take(m) {
                    *v /= k as f64;
                }
            }
            add_scaled(m, &mut acc, &pow, 1.0);
        }
        GroupElement::from_strict(m, &acc)
    }
}

impl fmt::Debug for LieVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "LieVector(m={}, {:?})", self.0.size, self.coords())
    }
}

/// Unitriangular matrix with integer entries.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct LatticeElement(GroupElement);

impl LatticeElement {
    pub fn new(m: usize, coords: &[i64]) -> Result<Self> {
        let c: Vec<f64> = coords.iter().map(|v| *v as f64).collect();
        GroupElement::from_coords(m, &c).map(LatticeElement)
    }

    pub fn from_group(g: GroupElement) -> Result<Self> {
        if g.is_integral() {
            Ok(LatticeElement(g))
        } else {
            Err(Error::Precondition(format!("{g:?} is not integral")))
        }
    }

    pub fn identity(m: usize) -> Result<Self> {
        GroupElement::identity(m).map(LatticeElement)
    }

    pub fn element(&self) -> &GroupElement {
        &self.0
    }

    pub fn to_integers(&self) -> Vec<i64> {
        self.0.coords().iter().map(|c| *c as i64).collect()
    }
}

/// Point of `X = G / Lattice`, stored as its representative in `[-1/2, 1/2)^d`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct NilPoint(GroupElement);

impl NilPoint {
    /// Accepts an element whose coordinates already lie in `[-1/2, 1/2)`.
    pub fn from_reduced(g: GroupElement) -> Result<Self> {
        if g.coords().iter().all(|c| (-0.5..0.5).contains(c)) {
            Ok(NilPoint(g))
        } else {
            Err(Error::Precondition(format!("{g:?} is not reduced")))
        }
    }

    pub fn identity(m: usize) -> Result<Self> {
        GroupElement::identity(m).map(NilPoint)
    }

    pub fn representative(&self) -> &GroupElement {
        &self.0
    }

    pub fn coords(&self) -> &[f64] {
        self.0.coords()
    }

    pub fn size(&self) -> usize {
        self.0.size
    }
}

impl<'de> Deserialize<'de> for NilPoint {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let g = GroupElement::deserialize(d)?;
        NilPoint::from_reduced(g).map_err(serde::de::Error::custom)
    }
}

/// `d_G(g, h) = |log(g h^-1)|_2`.
pub fn dist_g(g: &GroupElement, h: &GroupElement) -> Result<f64> {
    Ok(g.checked_mul(&h.inverse())?.log().norm())
}

/// Reduces `g` level by level, returning `(x, gamma)` with `g = x gamma`.
pub fn reduce(g: &GroupElement) -> (NilPoint, LatticeElement) {
    let x = reduce_representative(g);
    let mut gamma = x.inverse().mul_unchecked(g);
    for c in gamma.coords.iter_mut() {
        *c = c.round();
    }
    (NilPoint(x), LatticeElement(gamma))
}

#[inline]
fn reduce_representative(g: &GroupElement) -> GroupElement {
    let m = g.size;
    let mut x = *g;
    for l in 1..m {
        let mut lam = GroupElement::zero(m);
        let mut any = false;
        for idx in level_range(m, l) {
            let (n, _) = centered_split(x.coords[idx]);
            if n != 0.0 {
                lam.coords[idx] = -n;
                any = true;
            }
        }
        if any {
            x = x.mul_unchecked(&lam);
            // The level-l entries are now exact shifts; pin them into the box.
            for idx in level_range(m, l) {
                x.coords[idx] = centered_split(x.coords[idx]).1;
            }
        }
    }
    x
}

/// Point of `X` represented by `g`.
#[inline]
pub fn project(g: &GroupElement) -> NilPoint {
    NilPoint(reduce_representative(g))
}

/// Outcome of an exhaustive lattice search for `min_gamma d_G(x, y gamma)`.
#[derive(Clone, Copy, Debug)]
pub struct LatticeSearch {
    pub distance: f64,
    /// `x (y gamma)^-1`, the element realizing the minimum.
    pub offset: GroupElement,
    pub gamma: LatticeElement,
    /// Second smallest value found (infinite if none).
    pub runner_up: f64,
    pub on_boundary: bool,
}

/// Default translation element for the `m x m` group: level-1 entries are the
/// fractional parts of square roots of the first primes, higher levels vanish.
pub fn default_tau(m: usize) -> Result<GroupElement> {
    check_size(m)?;
    const PRIMES: [f64; MAX_SIZE - 1] = [2.0, 3.0, 5.0, 7.0, 11.0];
    let mut tau = GroupElement::zero(m);
    for (i, p) in PRIMES.iter().take(m - 1).enumerate() {
        tau.coords[i] = p.sqrt().fract();
    }
    Ok(tau)
}

/// JSON form `{"m": int, "tau": [d floats], "B": int}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NilSystemSpec {
    pub m: usize,
    pub tau: Vec<f64>,
    #[serde(rename = "B", default = "default_radius")]
    pub search_radius: i64,
}

fn default_radius() -> i64 {
    2
}

/// Translation `x -> tau x` on the nilmanifold of the `m x m` unitriangular group.
#[derive(Clone, Debug)]
pub struct NilSystem {
    tau: GroupElement,
    tau_log: LieVector,
    search_radius: i64,
    safe_epsilon: f64,
}

impl NilSystem {
    pub fn new(tau: GroupElement, search_radius: i64) -> Result<Self> {
        if search_radius < 1 {
            return Err(Error::Precondition(format!(
                "lattice search radius must be >= 1, got {search_radius}"
            )));
        }
        let mut sys = Self {
            tau,
            tau_log: tau.log(),
            search_radius,
            safe_epsilon: 0.0,
        };
        sys.safe_epsilon = sys.min_lattice_norm() / 4.0;
        Ok(sys)
    }

    /// System with the default translation element for size `m`.
    pub fn with_default_tau(m: usize) -> Result<Self> {
        Self::new(default_tau(m)?, default_radius())
    }

    /// The 3x3 (Heisenberg) system with its default translation element.
    pub fn heisenberg() -> Self {
        Self::with_default_tau(3).expect("size 3 is supported")
    }

    pub fn from_spec(spec: &NilSystemSpec) -> Result<Self> {
        Self::new(GroupElement::from_coords(spec.m, &spec.tau)?, spec.search_radius)
    }

    pub fn to_spec(&self) -> NilSystemSpec {
        NilSystemSpec {
            m: self.size(),
            tau: self.tau.coords().to_vec(),
            search_radius: self.search_radius,
        }
    }

    pub fn size(&self) -> usize {
        self.tau.size
    }

    /// Nilpotency step `s = m - 1`.
    pub fn step(&self) -> usize {
        self.tau.size - 1
    }

    pub fn dim(&self) -> usize {
        self.tau.dim()
    }

    pub fn tau(&self) -> &GroupElement {
        &self.tau
    }

    pub fn search_radius(&self) -> i64 {
        self.search_radius
    }

    /// A quarter of the smallest distance from the identity to a nonidentity
    /// lattice element inside the search box. Every scale-dependent operation
    /// expects `eps` below this value.
    pub fn safe_epsilon(&self) -> f64 {
        self.safe_epsilon
    }

    /// `tau^k`, exact along the one-parameter subgroup through `tau`.
    pub fn tau_power(&self, k: i64) -> GroupElement {
        self.tau_log.scale(k as f64).exp()
    }

    #[inline]
    pub fn translate(&self, x: &NilPoint) -> NilPoint {
        project(&self.tau.mul_unchecked(&x.0))
    }

    /// `[x, Tx, ..., T^{n-1} x]`.
    pub fn orbit(&self, x: &NilPoint, n: usize) -> Vec<NilPoint> {
        let mut out = Vec::with_capacity(n);
        let mut cur = *x;
        for _ in 0..n {
            out.push(cur);
            cur = self.translate(&cur);
        }
        out
    }

    fn check_point(&self, x: &NilPoint) -> Result<()> {
        if x.size() != self.size() {
            return Err(Error::SizeMismatch {
                left: self.size(),
                right: x.size(),
            });
        }
        Ok(())
    }

    /// Exhaustive search over lattice elements with coordinates in `[-B, B]`.
    ///
    /// The search descends level by level: the level-`l` log coordinates of
    /// `x (y gamma)^-1` only depend on the entries of `gamma` up to level `l`,
    /// so partial norms prune whole subtrees without changing the minimum.
    pub fn lattice_search(&self, x: &NilPoint, y: &NilPoint) -> Result<LatticeSearch> {
        self.check_point(x)?;
        self.check_point(y)?;
        let mut state = SearchState {
            best: f64::INFINITY,
            runner_up: f64::INFINITY,
            best_gamma: GroupElement::zero(self.size()),
            best_offset: GroupElement::zero(self.size()),
        };
        let mut gamma = GroupElement::zero(self.size());
        self.search_level(&x.0, &y.0, 1, 0.0, &mut gamma, &mut state);
        let b = self.search_radius as f64;
        let on_boundary = state.best_gamma.coords().iter().any(|c| c.abs() == b);
        Ok(LatticeSearch {
            distance: state.best.sqrt(),
            offset: state.best_offset,
            gamma: LatticeElement(state.best_gamma),
            runner_up: state.runner_up.sqrt(),
            on_boundary,
        })
    }

    fn search_level(
        &self,
        x: &GroupElement,
        y: &GroupElement,
        level: usize,
        partial: f64,
        gamma: &mut GroupElement,
        state: &mut SearchState,
    ) {
        let m = self.size();
        if level == m {
            let h = x.mul_unchecked(&y.mul_unchecked(gamma).inverse());
            if partial < state.best {
                state.runner_up = state.best;
                state.best = partial;
                state.best_gamma = *gamma;
                state.best_offset = h;
            } else if partial < state.runner_up {
                state.runner_up = partial;
            }
            return;
        }
        let range = level_range(m, level);
        let width = range.len();
        let b = self.search_radius;
        let mut digits = vec![-b; width];
        loop {
            for (k, idx) in range.clone().enumerate() {
                gamma.coords[idx] = digits[k] as f64;
            }
            let h = x.mul_unchecked(&y.mul_unchecked(gamma).inverse());
            let lg = h.log();
            let add: f64 = lg.coords()[range.clone()].iter().map(|c| c * c).sum();
            let next = partial + add;
            if next <= state.runner_up {
                self.search_level(x, y, level + 1, next, gamma, state);
            }
            // odometer
            let mut k = 0;
            loop {
                if k == width {
                    for idx in range.clone() {
                        gamma.coords[idx] = 0.0;
                    }
                    return;
                }
                digits[k] += 1;
                if digits[k] <= b {
                    break;
                }
                digits[k] = -b;
                k += 1;
            }
        }
    }

    /// `min_gamma d_G(x, y gamma)` over the search box. Logs a warning when the
    /// minimizer touches the boundary of the box.
    pub fn dist_x(&self, x: &NilPoint, y: &NilPoint) -> Result<f64> {
        let s = self.lattice_search(x, y)?;
        if s.on_boundary {
            log::warn!(
                "lattice minimizer {:?} lies on the search boundary B={}",
                s.gamma.to_integers(),
                self.search_radius
            );
        }
        Ok(s.distance)
    }

    /// Distance on `X` by nearest-integer descent over levels.
    ///
    /// Returns the exact minimum over the whole lattice whenever that minimum is
    /// below 1/2, which covers every scale below [`NilSystem::safe_epsilon`].
    pub fn nearest_distance(&self, x: &NilPoint, y: &NilPoint) -> f64 {
        self.descend(&x.0, &y.0, f64::INFINITY)
            .map_or(f64::INFINITY, |(d2, _)| d2.sqrt())
    }

    /// `Some(d)` when the descent distance `d` is below `eps`, exiting as soon as
    /// the partial norm reaches `eps`.
    #[inline]
    pub fn distance_below(&self, x: &NilPoint, y: &NilPoint, eps: f64) -> Option<f64> {
        self.descend(&x.0, &y.0, eps).map(|(d2, _)| d2.sqrt())
    }

    /// `log(x gamma y^-1)` for the descent minimizer `gamma`, when its norm is below `eps`.
    ///
    /// For every `k`, `tau^k x gamma` and `tau^k y` represent `T^k x` and `T^k y`, and
    /// their offset has logarithm `Ad_tau^k` applied to the returned vector.
    #[inline]
    pub fn offset_below(&self, x: &NilPoint, y: &NilPoint, eps: f64) -> Option<LieVector> {
        self.descend(&x.0, &y.0, eps).map(|(_, xi)| LieVector(xi))
    }

    #[inline]
    fn descend(&self, x: &GroupElement, y: &GroupElement, eps: f64) -> Option<(f64, GroupElement)> {
        let m = self.size();
        let limit = eps * eps;
        let mut xi = GroupElement::zero(m);
        // level 1 is abelian: log coordinates are plain differences
        let mut partial = 0.0;
        let mut gamma = GroupElement::zero(m);
        for idx in level_range(m, 1) {
            let (n, r) = centered_split(x.coords[idx] - y.coords[idx]);
            gamma.coords[idx] = -n;
            xi.coords[idx] = r;
            partial += r * r;
        }
        if partial >= limit {
            return None;
        }
        if m == 2 {
            return Some((partial, xi));
        }
        // level 2 in closed form: for unitriangular a, b the level-2 entries of ab are
        // a2 + b2 + a1 b1 on adjacent pairs, and log subtracts half the same product
        let (l1, l2) = (level_range(m, 1).start, level_range(m, 2).start);
        for i in 0..m - 2 {
            let (x1, x1n) = (x.coords[l1 + i], x.coords[l1 + i + 1]);
            let (y1, y1n) = (y.coords[l1 + i], y.coords[l1 + i + 1]);
            let (g1, g1n) = (gamma.coords[l1 + i], gamma.coords[l1 + i + 1]);
            let yi2 = -y.coords[l2 + i] + y1 * y1n;
            // x gamma, then times y^-1
            let xg1 = x1 + g1;
            let xg1n = x1n + g1n;
            let xg2 = x.coords[l2 + i] + x1 * g1n;
            let h2 = xg2 + yi2 - xg1 * y1n;
            let h1 = xg1 - y1;
            let h1n = xg1n - y1n;
            let (n, r) = centered_split(h2 - 0.5 * h1 * h1n);
            gamma.coords[l2 + i] = -n;
            xi.coords[l2 + i] = r;
            partial += r * r;
        }
        if partial >= limit {
            return None;
        }
        let yinv = y.inverse();
        for level in 3..m {
            let h = x.mul_unchecked(&gamma).mul_unchecked(&yinv);
            let lg = h.log();
            for idx in level_range(m, level) {
                let (n, r) = centered_split(lg.0.coords[idx]);
                gamma.coords[idx] = -n;
                xi.coords[idx] = r;
                partial += r * r;
            }
            if partial >= limit {
                return None;
            }
        }
        Some((partial, xi))
    }

    /// The unique small `g` with `x = g x0` and `d_G(g, 1) = d_X(x, x0)`.
    pub fn canonical_g(&self, x0: &NilPoint, x: &NilPoint, eps: f64) -> Result<GroupElement> {
        if !(eps < self.safe_epsilon) {
            return Err(Error::Precondition(format!(
                "eps {eps} must be below the safe scale {}",
                self.safe_epsilon
            )));
        }
        let s = self.lattice_search(x, x0)?;
        if !(s.distance < eps) {
            return Err(Error::Precondition(format!(
                "d_X(x, x0) = {} is not below eps = {eps}",
                s.distance
            )));
        }
        if s.runner_up - s.distance < 1e-9 {
            return Err(Error::Ambiguous {
                min: s.distance,
                gap: s.runner_up - s.distance,
            });
        }
        Ok(s.offset)
    }

    /// `d_G(tau^k g tau^-k, 1)`.
    pub fn conjugation_divergence(&self, g: &GroupElement, k: i64) -> Result<f64> {
        let tk = self.tau_power(k);
        let c = tk.checked_mul(g)?.mul_unchecked(&tk.inverse());
        Ok(c.log().norm())
    }

    fn min_lattice_norm(&self) -> f64 {
        // smallest |log gamma| over nonidentity gamma in the box, by level descent
        let m = self.size();
        let mut best = f64::INFINITY;
        let mut gamma = GroupElement::zero(m);
        self.min_norm_level(1, 0.0, &mut gamma, &mut best);
        best.sqrt()
    }

    fn min_norm_level(&self, level: usize, partial: f64, gamma: &mut GroupElement, best: &mut f64) {
        let m = self.size();
        if level == m {
            if !gamma.is_identity() && partial < *best {
                *best = partial;
            }
            return;
        }
        let range = level_range(m, level);
        let width = range.len();
        let b = self.search_radius;
        let mut digits = vec![-b; width];
        loop {
            for (k, idx) in range.clone().enumerate() {
                gamma.coords[idx] = digits[k] as f64;
            }
            let lg = gamma.log();
            let add: f64 = lg.coords()[range.clone()].iter().map(|c| c * c).sum();
            if partial + add < *best {
                self.min_norm_level(level + 1, partial + add, gamma, best);
            }
            let mut k = 0;
            loop {
                if k == width {
                    for idx in range.clone() {
                        gamma.coords[idx] = 0.0;
                    }
                    return;
                }
                digits[k] += 1;
                if digits[k] <= b {
                    break;
                }
                digits[k] = -b;
                k += 1;
            }
        }
    }
}

struct SearchState {
    best: f64,
    runner_up: f64,
    best_gamma: GroupElement,
    best_offset: GroupElement,
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn g3(a: f64, b: f64, c: f64) -> GroupElement {
        GroupElement::from_coords(3, &[a, b, c]).unwrap()
    }

    fn random_element(rng: &mut ChaCha8Rng, m: usize, scale: f64) -> GroupElement {
        let c: Vec<f64> = (0..dimension(m)).map(|_| rng.gen_range(-scale..scale)).collect();
        GroupElement::from_coords(m, &c).unwrap()
    }

    fn random_point(rng: &mut ChaCha8Rng, m: usize) -> NilPoint {
        let c: Vec<f64> = (0..dimension(m)).map(|_| rng.gen_range(-0.5..0.5)).collect();
        NilPoint::from_reduced(GroupElement::from_coords(m, &c).unwrap()).unwrap()
    }

    #[test]
    fn index_layout() {
        assert_eq!(index(3, 0, 1), 0);
        assert_eq!(index(3, 1, 2), 1);
        assert_eq!(index(3, 0, 2), 2);
        assert_eq!(index(4, 0, 2), 3);
        assert_eq!(index(4, 0, 3), 5);
        assert_eq!(level_range(4, 2), 3..5);
    }

    #[test]
    fn multiply_examples() {
        let e = GroupElement::identity(3).unwrap();
        let g = g3(0.3, -1.2, 2.0);
        assert_eq!(e * g, g);
        // (I + E12)(I + E23) = I + E12 + E23 + E13
        assert_eq!(g3(1.0, 0.0, 0.0) * g3(0.0, 1.0, 0.0), g3(1.0, 1.0, 1.0));
        assert!((g * g.inverse()).max_abs_diff(&e) < 1e-15);
    }

    #[test]
    fn size_mismatch_is_an_error() {
        let a = GroupElement::identity(3).unwrap();
        let b = GroupElement::identity(4).unwrap();
        assert!(matches!(a.checked_mul(&b), Err(Error::SizeMismatch { .. })));
        assert!(GroupElement::identity(1).is_err());
        assert!(GroupElement::from_coords(3, &[0.0, 1.0]).is_err());
        assert!(GroupElement::from_coords(3, &[0.0, f64::NAN, 1.0]).is_err());
    }

    #[test]
    fn heisenberg_inverse_closed_form() {
        let (a, b, c) = (0.7, -1.3, 0.25);
        let inv = g3(a, b, c).inverse();
        assert!(inv.max_abs_diff(&g3(-a, -b, -c + a * b)) < 1e-15);
        assert_eq!(GroupElement::identity(3).unwrap().inverse(), GroupElement::identity(3).unwrap());
    }

    #[test]
    fn commutator_examples() {
        let a = g3(1.0, 0.0, 0.0);
        let b = g3(0.0, 1.0, 0.0);
        assert!(a.commutator(&b).unwrap().max_abs_diff(&g3(0.0, 0.0, 1.0)) < 1e-15);
        assert!(a.commutator(&a).unwrap().is_identity());
        let e = GroupElement::identity(3).unwrap();
        assert!(a.commutator(&e).unwrap().max_abs_diff(&e) < 1e-15);
    }

    #[test]
    fn exp_series_closed_form() {
        let (a, b, c) = (0.4, -0.9, 0.3);
        let xi = LieVector::from_coords(3, &[a, b, c]).unwrap();
        assert!(xi.exp().max_abs_diff(&g3(a, b, c + a * b / 2.0)) < 1e-15);
        assert!(LieVector::zero(4).unwrap().exp().is_identity());
    }

    #[test]
    fn log_exp_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for m in 2..=MAX_SIZE {
            for _ in 0..50 {
                let g = random_element(&mut rng, m, 2.0);
                let xi = g.log();
                assert!(xi.exp().max_abs_diff(&g) < 1e-12);
                assert!(xi.exp().log().max_abs_diff(&xi) < 1e-12);
            }
        }
    }

    #[test]
    fn reduce_examples() {
        let e = GroupElement::identity(3).unwrap();
        let (x, gamma) = reduce(&e);
        assert!(x.representative().is_identity());
        assert!(gamma.element().is_identity());

        let (x, gamma) = reduce(&g3(0.7, 0.0, 0.0));
        assert!(x.representative().max_abs_diff(&g3(-0.3, 0.0, 0.0)) < 1e-15);
        assert_eq!(gamma.to_integers(), vec![1, 0, 0]);

        let (again, gamma) = reduce(x.representative());
        assert_eq!(again, x);
        assert!(gamma.element().is_identity());
    }

    #[test]
    fn reduce_factorizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for m in 2..=5 {
            for _ in 0..100 {
                let g = random_element(&mut rng, m, 5.0);
                let (x, gamma) = reduce(&g);
                assert!(x.coords().iter().all(|c| (-0.5..0.5).contains(c)));
                let back = *x.representative() * *gamma.element();
                assert!(back.max_abs_diff(&g) < 1e-9);
                assert!(gamma.element().is_integral());
            }
        }
    }

    #[test]
    fn dist_x_wraps_around() {
        let sys = NilSystem::heisenberg();
        let x = NilPoint::from_reduced(g3(0.49, 0.0, 0.0)).unwrap();
        let y = NilPoint::from_reduced(g3(-0.49, 0.0, 0.0)).unwrap();
        let s = sys.lattice_search(&x, &y).unwrap();
        assert!((s.distance - 0.02).abs() < 1e-12);
        // y gamma = (0.51, 0, 0) sits next to x
        assert_eq!(s.gamma.to_integers(), vec![1, 0, 0]);
        let back = sys.lattice_search(&y, &x).unwrap();
        assert_eq!(back.gamma.to_integers(), vec![-1, 0, 0]);
        assert!((sys.dist_x(&x, &x).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn dist_x_bounded_by_dist_g_and_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sys = NilSystem::heisenberg();
        for _ in 0..100 {
            let x = random_point(&mut rng, 3);
            let y = random_point(&mut rng, 3);
            let dx = sys.dist_x(&x, &y).unwrap();
            let dg = dist_g(x.representative(), y.representative()).unwrap();
            assert!(dx <= dg + 1e-12);
            assert!((dx - sys.dist_x(&y, &x).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn descent_matches_exhaustive_search_below_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for m in [3, 4] {
            let sys = NilSystem::with_default_tau(m).unwrap();
            let mut checked = 0;
            for _ in 0..400 {
                let x = random_point(&mut rng, m);
                let g = random_element(&mut rng, m, 0.15);
                let y = project(&(g * *x.representative()));
                let exhaustive = sys.dist_x(&x, &y).unwrap();
                let fast = sys.nearest_distance(&x, &y);
                if exhaustive < 0.5 {
                    checked += 1;
                    assert!((exhaustive - fast).abs() < 1e-12, "{exhaustive} vs {fast}");
                    assert_eq!(sys.distance_below(&x, &y, 0.5).is_some(), true);
                }
            }
            assert!(checked > 100);
        }
    }

    #[test]
    fn offset_below_realizes_the_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for m in 3..=5 {
            let sys = NilSystem::with_default_tau(m).unwrap();
            let mut found = 0;
            for _ in 0..400 {
                let y = random_point(&mut rng, m);
                let g = random_element(&mut rng, m, 0.1);
                let x = project(&(g * *y.representative()));
                let Some(xi) = sys.offset_below(&x, &y, 0.25) else { continue };
                found += 1;
                assert!((xi.norm() - sys.nearest_distance(&x, &y)).abs() < 1e-12);
                // exp(xi) y and x are the same point of X
                assert!(project(&(xi.exp() * *y.representative())).0.max_abs_diff(&x.0) < 1e-9);
            }
            assert!(found > 100);
        }
    }

    #[test]
    fn translate_rotates_first_coordinate() {
        let sys = NilSystem::new(g3(0.4, 0.0, 0.0), 2).unwrap();
        let x = NilPoint::identity(3).unwrap();
        let orbit = sys.orbit(&x, 4);
        assert_eq!(orbit.len(), 4);
        assert!(orbit[3].representative().max_abs_diff(&g3(0.2, 0.0, 0.0)) < 1e-12);

        let id = NilSystem::new(GroupElement::identity(3).unwrap(), 2).unwrap();
        let p = NilPoint::from_reduced(g3(0.1, -0.2, 0.3)).unwrap();
        assert_eq!(id.translate(&p), p);
    }

    #[test]
    fn safe_epsilon_integer_lattice() {
        let sys = NilSystem::heisenberg();
        assert!((sys.safe_epsilon() - 0.25).abs() < 1e-15);
        let wide = NilSystem::new(*sys.tau(), 3).unwrap();
        assert!(wide.safe_epsilon() <= sys.safe_epsilon());
        let m4 = NilSystem::with_default_tau(4).unwrap();
        assert!(m4.safe_epsilon() > 0.0);
    }

    #[test]
    fn canonical_g_examples() {
        let sys = NilSystem::heisenberg();
        let x0 = NilPoint::identity(3).unwrap();
        let g = sys.canonical_g(&x0, &x0, 0.1).unwrap();
        assert!(g.is_identity() || g.max_abs_diff(&GroupElement::identity(3).unwrap()) < 1e-15);

        let x = NilPoint::from_reduced(g3(0.01, 0.0, 0.0)).unwrap();
        let g = sys.canonical_g(&x0, &x, 0.1).unwrap();
        assert!(g.max_abs_diff(&g3(0.01, 0.0, 0.0)) < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let x0 = random_point(&mut rng, 3);
            let small = random_element(&mut rng, 3, 0.04);
            let x = project(&(small * *x0.representative()));
            let g = sys.canonical_g(&x0, &x, 0.2).unwrap();
            assert_eq!(project(&(g * *x0.representative())).coords().len(), 3);
            assert!(project(&(g * *x0.representative())).representative().max_abs_diff(x.representative()) < 1e-9);
        }
    }

    #[test]
    fn canonical_g_preconditions() {
        let sys = NilSystem::heisenberg();
        let x0 = NilPoint::identity(3).unwrap();
        let far = NilPoint::from_reduced(g3(0.3, 0.0, 0.0)).unwrap();
        assert!(matches!(sys.canonical_g(&x0, &far, 0.2), Err(Error::Precondition(_))));
        assert!(matches!(sys.canonical_g(&x0, &x0, 0.3), Err(Error::Precondition(_))));
    }

    #[test]
    fn conjugation_divergence_heisenberg() {
        let (a, b) = (0.3, -0.7);
        let sys = NilSystem::new(g3(a, b, 0.0), 2).unwrap();
        let (u, v, w) = (0.02, 0.05, -0.01);
        let g = g3(u, v, w);
        for k in [0i64, 1, 5, 40] {
            let z = w + k as f64 * (a * v - b * u);
            let expected = (u * u + v * v + (z - u * v / 2.0).powi(2)).sqrt();
            let got = sys.conjugation_divergence(&g, k).unwrap();
            assert!((got - expected).abs() < 1e-12, "k={k}: {got} vs {expected}");
        }
        let e = GroupElement::identity(3).unwrap();
        assert_eq!(sys.conjugation_divergence(&e, 17).unwrap(), 0.0);
        assert!((sys.conjugation_divergence(&g, 0).unwrap() - g.log().norm()).abs() < 1e-15);
    }

    #[test]
    fn spec_round_trip() {
        let sys = NilSystem::with_default_tau(4).unwrap();
        let json = serde_json::to_string(&sys.to_spec()).unwrap();
        assert!(json.contains("\"B\":2"));
        let back: NilSystemSpec = serde_json::from_str(&json).unwrap();
        let sys2 = NilSystem::from_spec(&back).unwrap();
        assert_eq!(sys2.tau(), sys.tau());
        let parsed: NilSystemSpec = serde_json::from_str(r#"{"m":3,"tau":[0.1,0.2,0.0]}"#).unwrap();
        assert_eq!(parsed.search_radius, 2);
        let p: NilPoint = serde_json::from_str("[0.1,-0.2,0.3]").unwrap();
        assert_eq!(serde_json::to_string(&p).unwrap(), "[0.1,-0.2,0.3]");
        assert!(serde_json::from_str::<NilPoint>("[0.7,0.0,0.0]").is_err());
    }
}
