//! Spanning and separated set counts on finite samples of dynamical systems.
//!
//! A point `y` is covered by a centre `x` at scale `eps` and length `n` when
//! `d(T^k x, T^k y) < eps` for every `0 <= k < n`. The greedy cover scans the sample in
//! index order and promotes every uncovered point to a centre. A point is promoted
//! exactly when it is `eps`-apart (in the orbit metric) from all earlier centres, so for
//! a symmetric `d` the same scan also yields the greedy maximal separated set.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{loglog, LineFit};
use crate::liealg::{adjoint, system_profile, DEFAULT_RANK_TOL};
use crate::nilgroup::{level_range, GroupElement, NilPoint, NilSystem};
use crate::unipotent_volume::{mc_volume, Norm, UnipotentMatrix};

/// Saturation threshold: a fit is flagged when the count exceeds `|P| / SATURATION_RATIO`.
pub const SATURATION_RATIO: usize = 10;

/// A finite sample `P` of a system `(X, T, d)`.
pub trait SampledSystem: Sync {
    type Point: Clone + Send + Sync;

    fn label(&self) -> String;

    fn points(&self) -> &[Self::Point];

    fn step(&self, x: &Self::Point) -> Self::Point;

    /// Symmetric, zero on the diagonal.
    fn distance(&self, x: &Self::Point, y: &Self::Point) -> f64;

    /// Seed used to draw the sample, if any.
    fn seed(&self) -> Option<u64> {
        None
    }

    /// Largest scale at which the distance is trusted.
    fn max_epsilon(&self) -> f64 {
        f64::INFINITY
    }

    /// Period-1 coordinates with `d(x, y) < eps` forcing every coordinate to differ by
    /// less than `eps` modulo 1. Used only to prune candidate centres.
    fn bucket_coords(&self, _x: &Self::Point, _out: &mut Vec<f64>) {}

    /// Plain coordinates that differ by less than `eps` whenever
    /// `orbit_within(x, y, eps, n)` holds. Used only to prune candidate centres.
    fn orbit_keys(&self, _x: &Self::Point, _n: usize, _out: &mut Vec<f64>) {}

    /// Dimension of `X`, when it is a manifold.
    fn manifold_dim(&self) -> Option<usize> {
        None
    }

    /// Predicted polynomial growth exponent of the spanning count.
    fn predicted_exponent(&self) -> Option<usize> {
        None
    }

    /// `d(T^k x, T^k y) < eps` for all `0 <= k < n`.
    fn orbit_within(&self, x: &Self::Point, y: &Self::Point, eps: f64, n: usize) -> bool {
        let (mut a, mut b) = (x.clone(), y.clone());
        for k in 0..n {
            if k > 0 {
                a = self.step(&a);
                b = self.step(&b);
            }
            if !(self.distance(&a, &b) < eps) {
                return false;
            }
        }
        true
    }
}

/// Orbits of length `n`, computed once per point.
pub struct OrbitCache<P> {
    orbits: Vec<Vec<P>>,
}

impl<P: Clone + Send + Sync> OrbitCache<P> {
    pub fn new<S: SampledSystem<Point = P>>(sys: &S, n: usize) -> Self {
        let orbits = sys
            .points()
            .par_iter()
            .map(|x| {
                let mut orbit = Vec::with_capacity(n);
                let mut cur = x.clone();
                for k in 0..n {
                    if k > 0 {
                        cur = sys.step(&cur);
                    }
                    orbit.push(cur.clone());
                }
                orbit
            })
            .collect();
        OrbitCache { orbits }
    }

    pub fn orbit(&self, i: usize) -> &[P] {
        &self.orbits[i]
    }
}

/// `max_{0 <= k < n} d(T^k x, T^k y)`.
pub fn orbit_distance<S: SampledSystem>(sys: &S, x: &S::Point, y: &S::Point, n: usize) -> f64 {
    assert!(n >= 1, "orbit length must be positive");
    let (mut a, mut b) = (x.clone(), y.clone());
    let mut best = 0.0f64;
    for k in 0..n {
        if k > 0 {
            a = sys.step(&a);
            b = sys.step(&b);
        }
        best = best.max(sys.distance(&a, &b));
    }
    best
}

/// Cached-orbit version of [`orbit_distance`] for sample indices.
pub fn cached_orbit_distance<S: SampledSystem>(sys: &S, cache: &OrbitCache<S::Point>, i: usize, j: usize) -> f64 {
    cache
        .orbit(i)
        .iter()
        .zip(cache.orbit(j))
        .map(|(a, b)| sys.distance(a, b))
        .fold(0.0, f64::max)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GreedyOptions {
    /// Worker threads for candidate checks; the selection stays in scan order.
    pub workers: usize,
}

impl Default for GreedyOptions {
    fn default() -> Self {
        GreedyOptions { workers: 1 }
    }
}

#[derive(Default)]
struct Cell {
    members: Vec<usize>,
    coords: Vec<f64>,
}

#[derive(Clone, Copy)]
enum Axis {
    Periodic(usize),
    Linear(usize),
}

/// At most this many coordinates index the grid; the rest only filter.
const GRID_AXES: usize = 3;

/// Centres bucketed on a grid with cells of side `>= eps`, over period-1 coordinates
/// followed by plain coordinates.
struct Buckets {
    periodic: usize,
    cells: usize,
    eps: f64,
    axes: Vec<Axis>,
    map: HashMap<u64, Cell>,
}

impl Buckets {
    fn new(periodic: usize, linear: usize, eps: f64) -> Self {
        let cells = ((1.0 / eps).floor().min(1024.0) as usize).max(1);
        let mut axes: Vec<Axis> = (0..linear).map(|i| Axis::Linear(periodic + i)).collect();
        // with fewer than three cells per axis every periodic cell is a neighbour
        if cells >= 3 {
            axes.extend((0..periodic).map(Axis::Periodic));
        }
        axes.truncate(GRID_AXES);
        Buckets {
            periodic,
            cells,
            eps,
            axes,
            map: HashMap::new(),
        }
    }

    fn cell(&self, axis: Axis, coords: &[f64]) -> i64 {
        match axis {
            Axis::Periodic(i) => ((coords[i].rem_euclid(1.0) * self.cells as f64) as i64).min(self.cells as i64 - 1),
            Axis::Linear(i) => (coords[i] / self.eps).floor() as i64,
        }
    }

    fn hash(cells: impl Iterator<Item = i64>) -> u64 {
        // collisions only merge cells, which the coordinate filter tolerates
        cells.fold(0xcbf2_9ce4_8422_2325u64, |acc, c| {
            (acc ^ c as u64).wrapping_mul(0x0100_0000_01b3).rotate_left(17)
        })
    }

    fn insert(&mut self, coords: &[f64], idx: usize) {
        let key = Self::hash(self.axes.iter().map(|&a| self.cell(a, coords)));
        let cell = self.map.entry(key).or_default();
        cell.members.push(idx);
        cell.coords.extend_from_slice(coords);
    }

    /// Calls `f` on every centre whose coordinates all lie within `eps` of `coords`,
    /// periodic ones modulo 1, stopping at the first `true`.
    fn any_near(&self, coords: &[f64], mut f: impl FnMut(usize) -> bool) -> bool {
        let width = coords.len();
        let mut scan = |cell: &Cell| {
            cell.members.iter().enumerate().any(|(t, &idx)| {
                let c = &cell.coords[t * width..(t + 1) * width];
                c.iter().zip(coords).enumerate().all(|(k, (a, b))| {
                    if k < self.periodic {
                        let d = (a - b).rem_euclid(1.0);
                        d.min(1.0 - d) < self.eps
                    } else {
                        (a - b).abs() < self.eps
                    }
                }) && f(idx)
            })
        };
        if self.axes.is_empty() {
            return self.map.values().any(&mut scan);
        }
        let base: Vec<i64> = self.axes.iter().map(|&a| self.cell(a, coords)).collect();
        let total = 3usize.pow(self.axes.len() as u32);
        (0..total).any(|t| {
            let mut r = t;
            let key = Self::hash(self.axes.iter().zip(&base).map(|(axis, b)| {
                let delta = (r % 3) as i64 - 1;
                r /= 3;
                match axis {
                    Axis::Periodic(_) => (b + delta).rem_euclid(self.cells as i64),
                    Axis::Linear(_) => b + delta,
                }
            }));
            self.map.get(&key).is_some_and(&mut scan)
        })
    }
}

/// Indices of the greedy centres in scan order.
pub fn greedy_net<S: SampledSystem>(sys: &S, eps: f64, n: usize, opts: GreedyOptions) -> Result<Vec<usize>> {
    if !(eps > 0.0) {
        return Err(Error::Precondition(format!("eps must be positive, got {eps}")));
    }
    if !(eps < sys.max_epsilon()) {
        return Err(Error::Precondition(format!(
            "eps {eps} must be below {} for {}",
            sys.max_epsilon(),
            sys.label()
        )));
    }
    if n == 0 {
        return Err(Error::Precondition("n must be at least 1".into()));
    }
    let pts = sys.points();
    let mut periodic = 0;
    let coords: Vec<Vec<f64>> = pts
        .iter()
        .map(|p| {
            let mut c = Vec::new();
            sys.bucket_coords(p, &mut c);
            periodic = c.len();
            sys.orbit_keys(p, n, &mut c);
            c
        })
        .collect();
    let width = coords.first().map_or(0, |c| c.len());
    let mut buckets = Buckets::new(periodic, width - periodic, eps);
    let mut centres: Vec<usize> = Vec::new();
    let within = |c: usize, i: usize| sys.orbit_within(&pts[c], &pts[i], eps, n);

    if opts.workers <= 1 {
        for i in 0..pts.len() {
            if !buckets.any_near(&coords[i], |c| within(c, i)) {
                buckets.insert(&coords[i], i);
                centres.push(i);
            }
        }
        return Ok(centres);
    }

    // Check a chunk against the current centres in parallel, then settle the chunk
    // in order against centres promoted inside it.
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers)
        .build()
        .map_err(|e| Error::Precondition(e.to_string()))?;
    let chunk = 256 * opts.workers;
    let mut start = 0;
    while start < pts.len() {
        let end = (start + chunk).min(pts.len());
        let covered: Vec<bool> = pool.install(|| {
            (start..end)
                .into_par_iter()
                .map(|i| buckets.any_near(&coords[i], |c| within(c, i)))
                .collect()
        });
        let first_new = centres.len();
        for i in start..end {
            if covered[i - start] || centres[first_new..].iter().any(|&c| within(c, i)) {
                continue;
            }
            buckets.insert(&coords[i], i);
            centres.push(i);
        }
        start = end;
    }
    Ok(centres)
}

/// Size of the greedy `eps`-`n` cover of the sample.
pub fn greedy_spanning<S: SampledSystem>(sys: &S, eps: f64, n: usize) -> Result<usize> {
    Ok(greedy_net(sys, eps, n, GreedyOptions::default())?.len())
}

/// Size of the greedy maximal `eps`-`n` separated subset of the sample.
///
/// Scanning in index order and keeping every point at orbit distance `>= eps` from
/// all kept points selects the same indices as the greedy cover.
pub fn greedy_separated<S: SampledSystem>(sys: &S, eps: f64, n: usize) -> Result<usize> {
    Ok(greedy_net(sys, eps, n, GreedyOptions::default())?.len())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub eps: f64,
    pub n: usize,
    pub spanning: usize,
    pub separated: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexityCurve {
    pub label: String,
    pub eps: f64,
    pub rows: Vec<CurveRow>,
    pub fit: LineFit,
    pub points: usize,
    pub seed: Option<u64>,
    pub saturated: bool,
    pub p_predicted: Option<usize>,
}

impl ComplexityCurve {
    pub fn slope(&self) -> f64 {
        self.fit.slope
    }

    pub fn valid(&self) -> bool {
        !self.saturated
    }

    pub fn spanning(&self, n: usize) -> Option<usize> {
        self.rows.iter().find(|r| r.n == n).map(|r| r.spanning)
    }
}

fn check_geometric(grid: &[usize], min_len: usize) -> Result<()> {
    if grid.len() < min_len {
        return Err(Error::InvalidGrid(format!("need at least {min_len} points, got {}", grid.len())));
    }
    if grid[0] == 0 || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidGrid("grid must be positive and strictly increasing".into()));
    }
    let ratio = grid[1] as f64 / grid[0] as f64;
    if grid.windows(2).any(|w| ((w[1] as f64 / w[0] as f64) / ratio - 1.0).abs() > 0.05) {
        return Err(Error::InvalidGrid("grid must be geometric".into()));
    }
    Ok(())
}

/// Minimum sample size accepted by [`growth_exponent`].
pub const MIN_SAMPLE: usize = 1000;

/// Spanning counts over a geometric `n` grid and their log-log slope.
pub fn growth_exponent<S: SampledSystem>(
    sys: &S,
    eps: f64,
    n_grid: &[usize],
    opts: GreedyOptions,
) -> Result<ComplexityCurve> {
    check_geometric(n_grid, 5)?;
    let points = sys.points().len();
    if points < MIN_SAMPLE {
        return Err(Error::SampleBudget(format!("sample of {points} points is below {MIN_SAMPLE}")));
    }
    let mut rows = Vec::with_capacity(n_grid.len());
    for &n in n_grid {
        let count = greedy_net(sys, eps, n, opts)?.len();
        log::info!("{} eps={eps} n={n}: {count} centres", sys.label());
        rows.push(CurveRow {
            eps,
            n,
            spanning: count,
            separated: count,
        });
    }
    let x: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.spanning as f64).collect();
    let fit = loglog(&x, &y).ok_or_else(|| Error::InvalidGrid("degenerate fit".into()))?;
    let last = rows.last().map_or(0, |r| r.spanning);
    Ok(ComplexityCurve {
        label: sys.label(),
        eps,
        rows,
        fit,
        points,
        seed: sys.seed(),
        saturated: last * SATURATION_RATIO > points,
        p_predicted: sys.predicted_exponent(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsRow {
    pub eps: f64,
    pub spanning: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsScaling {
    pub n: usize,
    pub rows: Vec<EpsRow>,
    pub fit: LineFit,
    /// `-dim X`, when known.
    pub target: Option<f64>,
    pub saturated: bool,
}

/// Spanning counts across scales at fixed `n`, fitted against `eps`.
pub fn eps_scaling_check<S: SampledSystem>(
    sys: &S,
    eps_grid: &[f64],
    n: usize,
    opts: GreedyOptions,
) -> Result<EpsScaling> {
    if eps_grid.len() < 2 || eps_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidGrid("eps grid must be strictly increasing with two or more points".into()));
    }
    let mut rows = Vec::with_capacity(eps_grid.len());
    for &eps in eps_grid {
        let spanning = greedy_net(sys, eps, n, opts)?.len();
        rows.push(EpsRow { eps, spanning });
    }
    let x: Vec<f64> = rows.iter().map(|r| r.eps).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.spanning as f64).collect();
    let fit = loglog(&x, &y).ok_or_else(|| Error::InvalidGrid("degenerate fit".into()))?;
    let largest = rows.iter().map(|r| r.spanning).max().unwrap_or(0);
    Ok(EpsScaling {
        n,
        rows,
        fit,
        target: sys.manifold_dim().map(|d| -(d as f64)),
        saturated: largest * SATURATION_RATIO > sys.points().len(),
    })
}

/// Uniform grid `k / count` on the circle `R / Z` with translation by `alpha`.
#[derive(Clone, Debug)]
pub struct CircleRotation {
    alpha: f64,
    points: Vec<f64>,
}

impl CircleRotation {
    pub fn uniform(alpha: f64, count: usize) -> Self {
        CircleRotation {
            alpha: alpha.rem_euclid(1.0),
            points: (0..count).map(|k| k as f64 / count as f64).collect(),
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

/// Arc-length distance on a circle of circumference 1.
#[inline]
pub fn circle_distance(x: f64, y: f64) -> f64 {
    let d = (x - y).rem_euclid(1.0);
    d.min(1.0 - d)
}

impl SampledSystem for CircleRotation {
    type Point = f64;

    fn label(&self) -> String {
        format!("rotation({})", self.alpha)
    }

    fn points(&self) -> &[f64] {
        &self.points
    }

    fn step(&self, x: &f64) -> f64 {
        (x + self.alpha).rem_euclid(1.0)
    }

    fn distance(&self, x: &f64, y: &f64) -> f64 {
        circle_distance(*x, *y)
    }

    fn bucket_coords(&self, x: &f64, out: &mut Vec<f64>) {
        out.push(*x);
    }

    fn manifold_dim(&self) -> Option<usize> {
        Some(1)
    }

    fn predicted_exponent(&self) -> Option<usize> {
        Some(0)
    }
}

/// Finite words under the one-sided shift with the cylinder metric
/// `d(x, y) = 2^-i`, `i` the first index where the words differ or one of them ends.
#[derive(Clone, Debug)]
pub struct ShiftSample {
    words: Vec<Vec<u8>>,
    points: Vec<(u32, u32)>,
}

impl ShiftSample {
    pub fn from_words(words: Vec<Vec<u8>>) -> Self {
        let points = (0..words.len() as u32).map(|w| (w, 0)).collect();
        ShiftSample { words, points }
    }

    /// All words of length `len` over `symbols` letters.
    pub fn full_shift(symbols: u8, len: usize) -> Self {
        let total = (symbols as usize).pow(len as u32);
        let words = (0..total)
            .map(|mut t| {
                (0..len)
                    .map(|_| {
                        let s = (t % symbols as usize) as u8;
                        t /= symbols as usize;
                        s
                    })
                    .collect()
            })
            .collect();
        Self::from_words(words)
    }
}

impl SampledSystem for ShiftSample {
    type Point = (u32, u32);

    fn label(&self) -> String {
        format!("shift({} words)", self.words.len())
    }

    fn points(&self) -> &[(u32, u32)] {
        &self.points
    }

    fn step(&self, x: &(u32, u32)) -> (u32, u32) {
        (x.0, x.1 + 1)
    }

    fn distance(&self, x: &(u32, u32), y: &(u32, u32)) -> f64 {
        let a = self.words[x.0 as usize].get(x.1 as usize..).unwrap_or(&[]);
        let b = self.words[y.0 as usize].get(y.1 as usize..).unwrap_or(&[]);
        if x == y {
            return 0.0;
        }
        let i = a.iter().zip(b).take_while(|(p, q)| p == q).count();
        0.5f64.powi(i as i32)
    }
}

/// Sample region inside the fundamental domain `[-1/2, 1/2)^d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "sides")]
pub enum Domain {
    Full,
    /// Centred box with the given side per coordinate.
    Window(Vec<f64>),
}

/// Low-discrepancy sample of a nilmanifold.
///
/// Points come from the Kronecker sequence with generators `phi_d^-(i+1)`, `phi_d` the
/// real root of `x^(d+1) = x + 1`, under a seeded Cranley-Patterson shift.
#[derive(Clone, Debug)]
pub struct NilSample {
    sys: NilSystem,
    points: Vec<NilPoint>,
    ad: Vec<f64>,
    /// `Ad^k` for `k < AD_POWERS`, row-major, back to back.
    ad_powers: Vec<f64>,
    domain: Domain,
    seed: u64,
}

const AD_POWERS: usize = 1024;

/// `count` points of the shifted Kronecker sequence in `[0, 1)^dim`.
pub fn kronecker_points(count: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut phi = 2.0f64;
    for _ in 0..64 {
        phi -= (phi.powi(dim as i32 + 1) - phi - 1.0) / ((dim as f64 + 1.0) * phi.powi(dim as i32) - 1.0);
    }
    let alpha: Vec<f64> = (0..dim).map(|i| phi.powi(-(i as i32 + 1)).fract()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>()).collect();
    (0..count)
        .map(|k| {
            let kf = (k + 1) as f64;
            alpha.iter().zip(&shift).map(|(a, s)| (s + kf * a).fract()).collect()
        })
        .collect()
}

impl NilSample {
    /// `count` points spread over the whole fundamental domain.
    pub fn lattice(sys: NilSystem, count: usize, seed: u64) -> Result<Self> {
        Self::build(sys, count, seed, Domain::Full)
    }

    /// `count` points in a centred box with the given sides.
    pub fn window(sys: NilSystem, count: usize, sides: &[f64], seed: u64) -> Result<Self> {
        if sides.len() != sys.dim() {
            return Err(Error::CoordinateCount {
                expected: sys.dim(),
                got: sides.len(),
            });
        }
        if sides.iter().any(|s| !(*s > 0.0 && *s <= 1.0)) {
            return Err(Error::Precondition("window sides must lie in (0, 1]".into()));
        }
        Self::build(sys, count, seed, Domain::Window(sides.to_vec()))
    }

    /// Window with the same side on every coordinate.
    pub fn cube(sys: NilSystem, count: usize, side: f64, seed: u64) -> Result<Self> {
        let sides = vec![side; sys.dim()];
        Self::window(sys, count, &sides, seed)
    }

    fn build(sys: NilSystem, count: usize, seed: u64, domain: Domain) -> Result<Self> {
        let d = sys.dim();
        let m = sys.size();
        let sides = match &domain {
            Domain::Full => vec![1.0; d],
            Domain::Window(s) => s.clone(),
        };
        let points = kronecker_points(count, d, seed)
            .into_iter()
            .map(|u| {
                let c: Vec<f64> = u.iter().zip(&sides).map(|(v, s)| (v - 0.5) * s).collect();
                // guard the half-open upper edge against rounding
                let c: Vec<f64> = c.iter().map(|v| if *v >= 0.5 { -0.5 } else { *v }).collect();
                NilPoint::from_reduced(GroupElement::from_coords(m, &c)?)
            })
            .collect::<Result<Vec<_>>>()?;
        let adm = adjoint(&sys);
        let ad: Vec<f64> = (0..d * d).map(|t| adm.matrix()[(t / d, t % d)]).collect();
        let mut ad_powers = Vec::with_capacity(AD_POWERS * d * d);
        let mut pow = DMatrix::<f64>::identity(d, d);
        for _ in 0..AD_POWERS {
            ad_powers.extend((0..d * d).map(|t| pow[(t / d, t % d)]));
            pow = adm.matrix() * pow;
        }
        Ok(NilSample {
            sys,
            points,
            ad,
            ad_powers,
            domain,
            seed,
        })
    }

    pub fn system(&self) -> &NilSystem {
        &self.sys
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    /// Level-1 coordinate range, when no two sample points wrap around in level 1.
    fn plain_level1(&self) -> Option<std::ops::Range<usize>> {
        let m = self.sys.size();
        match &self.domain {
            Domain::Window(s) if m >= 3 && s[level_range(m, 1)].iter().all(|v| *v <= 0.5) => {
                Some(level_range(m, 1))
            }
            _ => None,
        }
    }

    /// Haar volume of the sampled region.
    pub fn region_volume(&self) -> f64 {
        match &self.domain {
            Domain::Full => 1.0,
            Domain::Window(s) => s.iter().product(),
        }
    }
}

impl SampledSystem for NilSample {
    type Point = NilPoint;

    fn label(&self) -> String {
        let dom = match &self.domain {
            Domain::Full => "full".to_string(),
            Domain::Window(s) => format!("window{s:?}"),
        };
        format!("nil(m={}, {dom})", self.sys.size())
    }

    fn points(&self) -> &[NilPoint] {
        &self.points
    }

    fn step(&self, x: &NilPoint) -> NilPoint {
        self.sys.translate(x)
    }

    fn distance(&self, x: &NilPoint, y: &NilPoint) -> f64 {
        self.sys.nearest_distance(x, y)
    }

    fn seed(&self) -> Option<u64> {
        Some(self.seed)
    }

    fn max_epsilon(&self) -> f64 {
        self.sys.safe_epsilon()
    }

    fn bucket_coords(&self, x: &NilPoint, out: &mut Vec<f64>) {
        out.extend_from_slice(&x.coords()[level_range(self.sys.size(), 1)]);
    }

    /// The level-2 part of `Ad^k xi` is `xi_2 + k N xi_1` with `N` the level-1 to
    /// level-2 block of `Ad - I`, so staying within `eps` at times `0` and `n - 1`
    /// bounds `(n - 1) N xi_1 / 2` by `eps`. Inside a window of side at most `1/2` the
    /// level-1 offset is the plain coordinate difference, which makes that linear.
    fn orbit_keys(&self, x: &NilPoint, n: usize, out: &mut Vec<f64>) {
        let m = self.sys.size();
        let Some(l1) = self.plain_level1() else {
            return;
        };
        let d = self.sys.dim();
        let scale = (n - 1) as f64 / (2.0 + 1e-9);
        for row in level_range(m, 2) {
            let v: f64 = l1
                .clone()
                .map(|col| self.ad[row * d + col] * x.coords()[col])
                .sum();
            out.push(scale * v);
        }
    }

    fn manifold_dim(&self) -> Option<usize> {
        Some(self.sys.dim())
    }

    fn predicted_exponent(&self) -> Option<usize> {
        system_profile(&self.sys, DEFAULT_RANK_TOL).ok().map(|p| p.p)
    }

    /// The offset between the orbits at time `k` has logarithm `Ad^k xi`, so the check
    /// iterates the adjoint on `xi` instead of stepping both orbits.
    fn orbit_within(&self, x: &NilPoint, y: &NilPoint, eps: f64, n: usize) -> bool {
        let Some(xi) = self.sys.offset_below(x, y, eps) else {
            return false;
        };
        let d = self.sys.dim();
        let limit = eps * eps;
        // most pairs separate by the last step, so probe the far end first
        if n <= AD_POWERS {
            let probe = |k: usize| {
                let a = &self.ad_powers[k * d * d..(k + 1) * d * d];
                let mut norm2 = 0.0;
                for i in 0..d {
                    let v: f64 = a[i * d..(i + 1) * d].iter().zip(xi.coords()).map(|(a, b)| a * b).sum();
                    norm2 += v * v;
                }
                norm2 < limit
            };
            if !probe(n - 1) || !probe((n - 1) / 2) {
                return false;
            }
        }
        let mut cur = [0.0f64; crate::nilgroup::MAX_DIM];
        let mut next = [0.0f64; crate::nilgroup::MAX_DIM];
        cur[..d].copy_from_slice(xi.coords());
        for _ in 1..n {
            let mut norm2 = 0.0;
            for i in 0..d {
                let row = &self.ad[i * d..(i + 1) * d];
                let v: f64 = row.iter().zip(&cur[..d]).map(|(a, b)| a * b).sum();
                next[i] = v;
                norm2 += v * v;
            }
            if norm2 >= limit {
                return false;
            }
            std::mem::swap(&mut cur, &mut next);
        }
        true
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TubeRow {
    pub n: usize,
    /// Monte Carlo volume of `{ xi : |Ad^k xi| <= eps, 0 <= k < n }`.
    pub volume: f64,
    pub stderr: f64,
    /// `volume * n^p`.
    pub volume_times_np: f64,
    pub spanning: usize,
    /// `volume * spanning / region volume`.
    pub product: f64,
}

/// Tube volumes of the Bowen balls next to the spanning counts of the same sample.
pub fn tube_volume_cross_check(
    sample: &NilSample,
    eps: f64,
    n_grid: &[usize],
    samples: u64,
    seed: u64,
    opts: GreedyOptions,
) -> Result<Vec<TubeRow>> {
    let sys = sample.system();
    if !(eps > 0.0 && eps < sys.safe_epsilon()) {
        return Err(Error::Precondition(format!(
            "eps {eps} must lie in (0, {})",
            sys.safe_epsilon()
        )));
    }
    let a = UnipotentMatrix::new(adjoint(sys).matrix().clone())?;
    let p = sample.predicted_exponent().unwrap_or(0) as i32;
    let d = sys.dim();
    let mut rows = Vec::with_capacity(n_grid.len());
    for &n in n_grid {
        let est = mc_volume(&a, n, Norm::Euclidean, samples, seed)?.scaled(eps, d);
        let spanning = greedy_net(sample, eps, n, opts)?.len();
        rows.push(TubeRow {
            n,
            volume: est.estimate,
            stderr: est.stderr,
            volume_times_np: est.estimate * (n as f64).powi(p),
            spanning,
            product: est.estimate * spanning as f64 / sample.region_volume(),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    /// Ball-marking greedy cover with cached orbits and no pruning.
    fn naive_cover<S: SampledSystem>(sys: &S, eps: f64, n: usize) -> usize {
        let cache = OrbitCache::new(sys, n);
        let len = sys.points().len();
        let mut covered = vec![false; len];
        let mut count = 0;
        for i in 0..len {
            if covered[i] {
                continue;
            }
            count += 1;
            for j in 0..len {
                if cached_orbit_distance(sys, &cache, i, j) < eps {
                    covered[j] = true;
                }
            }
        }
        count
    }

    /// Maximal separated subset by exhaustive pair checks.
    fn naive_separated<S: SampledSystem>(sys: &S, eps: f64, n: usize) -> Vec<usize> {
        let cache = OrbitCache::new(sys, n);
        let mut kept: Vec<usize> = Vec::new();
        for i in 0..sys.points().len() {
            if kept.iter().all(|&j| cached_orbit_distance(sys, &cache, j, i) >= eps) {
                kept.push(i);
            }
        }
        kept
    }

    #[test]
    fn orbit_distance_basics() {
        let c = CircleRotation::uniform(0.1234, 10);
        assert_eq!(orbit_distance(&c, &0.3, &0.3, 5), 0.0);
        assert_eq!(orbit_distance(&c, &0.1, &0.35, 1), circle_distance(0.1, 0.35));
        for n in [1, 7, 100] {
            assert!((orbit_distance(&c, &0.1, &0.35, n) - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn circle_separated_count() {
        let c = CircleRotation::uniform(0.5f64.sqrt(), 1000);
        for n in [1, 4, 64] {
            assert_eq!(greedy_separated(&c, 0.3, n).unwrap(), 3);
            assert_eq!(naive_separated(&c, 0.3, n.min(4)).len(), 3);
        }
    }

    #[test]
    fn circle_spanning_is_constant_in_n() {
        let c = CircleRotation::uniform(0.5f64.sqrt() - 0.5, 2000);
        let base = greedy_spanning(&c, 0.05, 1).unwrap();
        for n in [2, 16, 256] {
            assert_eq!(greedy_spanning(&c, 0.05, n).unwrap(), base);
        }
        assert_eq!(greedy_spanning(&c, 0.6, 10).unwrap(), 1);
    }

    #[test]
    fn full_shift_counts() {
        for n in 1..=6 {
            let s = ShiftSample::full_shift(2, n + 3);
            let count = greedy_spanning(&s, 0.4, n).unwrap();
            // classes are words of length n + 1
            assert_eq!(count, 1 << (n + 1));
            assert_eq!(naive_cover(&s, 0.4, n), count);
        }
    }

    #[test]
    fn greedy_matches_naive_cover_and_packing() {
        let sys = NilSystem::heisenberg();
        let sample = NilSample::lattice(sys, 600, 5).unwrap();
        for (eps, n) in [(0.2, 1), (0.2, 8), (0.15, 20)] {
            let net = greedy_net(&sample, eps, n, GreedyOptions::default()).unwrap();
            assert_eq!(net.len(), naive_cover(&sample, eps, n));
            assert_eq!(net, naive_separated(&sample, eps, n));
        }
    }

    #[test]
    fn parallel_greedy_matches_sequential() {
        let sample = NilSample::cube(NilSystem::heisenberg(), 3000, 0.4, 8).unwrap();
        for n in [4, 32] {
            let a = greedy_net(&sample, 0.1, n, GreedyOptions::default()).unwrap();
            let b = greedy_net(&sample, 0.1, n, GreedyOptions { workers: 3 }).unwrap();
            assert_eq!(a, b);
        }
    }

    /// Delegates everything except the orbit keys.
    struct NoKeys<'a>(&'a NilSample);

    impl SampledSystem for NoKeys<'_> {
        type Point = NilPoint;
        fn label(&self) -> String {
            self.0.label()
        }
        fn points(&self) -> &[NilPoint] {
            self.0.points()
        }
        fn step(&self, x: &NilPoint) -> NilPoint {
            self.0.step(x)
        }
        fn distance(&self, x: &NilPoint, y: &NilPoint) -> f64 {
            self.0.distance(x, y)
        }
        fn max_epsilon(&self) -> f64 {
            self.0.max_epsilon()
        }
        fn orbit_within(&self, x: &NilPoint, y: &NilPoint, eps: f64, n: usize) -> bool {
            self.0.orbit_within(x, y, eps, n)
        }
    }

    #[test]
    fn orbit_keys_do_not_change_the_net() {
        for (m, side) in [(3, 0.2), (4, 0.05)] {
            let sample = NilSample::cube(NilSystem::with_default_tau(m).unwrap(), 3000, side, 9).unwrap();
            let mut keys = Vec::new();
            sample.orbit_keys(&sample.points()[0], 16, &mut keys);
            assert_eq!(keys.len(), m - 2);
            for n in [1, 4, 16, 64] {
                let fast = greedy_net(&sample, 0.1, n, GreedyOptions::default()).unwrap();
                let plain = greedy_net(&NoKeys(&sample), 0.1, n, GreedyOptions::default()).unwrap();
                assert_eq!(fast, plain, "m={m} n={n}");
            }
        }
    }

    #[test]
    fn adjoint_shortcut_matches_orbit_stepping() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for m in [3, 4] {
            let sample = NilSample::lattice(NilSystem::with_default_tau(m).unwrap(), 10, 1).unwrap();
            let sys = sample.system().clone();
            let eps = 0.2;
            let mut agree = 0;
            for _ in 0..300 {
                let y = sample.points()[rng.gen_range(0..10)];
                let g: Vec<f64> = (0..sys.dim()).map(|_| rng.gen_range(-0.05..0.05)).collect();
                let g = GroupElement::from_coords(m, &g).unwrap();
                let x = crate::nilgroup::project(&(g * *y.representative()));
                let n = 40;
                // skip pairs whose orbit distance sits on the threshold
                let mut a = x;
                let mut b = y;
                let mut close = false;
                for _ in 0..n {
                    let d = sys.nearest_distance(&a, &b);
                    close |= (d - eps).abs() < 1e-9;
                    a = sys.translate(&a);
                    b = sys.translate(&b);
                }
                if close {
                    continue;
                }
                let default_check = {
                    let (mut a, mut b) = (x, y);
                    (0..n).all(|k| {
                        if k > 0 {
                            a = sys.translate(&a);
                            b = sys.translate(&b);
                        }
                        sys.nearest_distance(&a, &b) < eps
                    })
                };
                assert_eq!(sample.orbit_within(&x, &y, eps, n), default_check);
                agree += 1;
            }
            assert!(agree > 250);
        }
    }

    #[test]
    fn packing_covering_inequalities_on_metric_adapters() {
        let c = CircleRotation::uniform(0.5f64.sqrt(), 3000);
        for eps in [0.01, 0.05, 0.1] {
            for n in [1, 10] {
                let span = greedy_spanning(&c, eps, n).unwrap();
                assert!(greedy_separated(&c, 2.0 * eps, n).unwrap() <= span);
                assert!(span <= greedy_separated(&c, eps, n).unwrap());
            }
        }
        let s = ShiftSample::full_shift(2, 10);
        for eps in [0.1, 0.3] {
            let span = greedy_spanning(&s, eps, 3).unwrap();
            assert!(greedy_separated(&s, 2.0 * eps, 3).unwrap() <= span);
        }
    }

    #[test]
    fn growth_exponent_rotation_is_flat() {
        let c = CircleRotation::uniform(0.5f64.sqrt(), 2000);
        let curve = growth_exponent(&c, 0.1, &[8, 16, 32, 64, 128], GreedyOptions::default()).unwrap();
        assert!(curve.slope().abs() < 0.05);
        assert!(!curve.saturated);
        assert_eq!(curve.p_predicted, Some(0));
    }

    #[test]
    fn growth_exponent_validates_inputs() {
        let c = CircleRotation::uniform(0.3, 2000);
        let opts = GreedyOptions::default();
        assert!(matches!(growth_exponent(&c, 0.1, &[8, 16, 32, 64], opts), Err(Error::InvalidGrid(_))));
        assert!(matches!(growth_exponent(&c, 0.1, &[8, 16, 32, 64, 100], opts), Err(Error::InvalidGrid(_))));
        let small = CircleRotation::uniform(0.3, 100);
        assert!(matches!(growth_exponent(&small, 0.1, &[1, 2, 4, 8, 16], opts), Err(Error::SampleBudget(_))));
        let nil = NilSample::lattice(NilSystem::heisenberg(), 10, 0).unwrap();
        assert!(greedy_spanning(&nil, 0.3, 2).is_err());
    }

    #[test]
    fn saturation_flag_trips_on_sparse_samples() {
        let sample = NilSample::lattice(NilSystem::heisenberg(), 1000, 2).unwrap();
        let curve = growth_exponent(&sample, 0.05, &[1, 2, 4, 8, 16], GreedyOptions::default()).unwrap();
        assert!(curve.saturated);
    }

    #[test]
    fn eps_scaling_on_circle() {
        let c = CircleRotation::uniform(0.5f64.sqrt(), 4000);
        let t = eps_scaling_check(&c, &[0.01, 0.02, 0.04, 0.08], 5, GreedyOptions::default()).unwrap();
        assert!((t.fit.slope + 1.0).abs() < 0.1);
        assert_eq!(t.target, Some(-1.0));
        assert!(t.rows.windows(2).all(|w| w[1].spanning <= w[0].spanning));
    }

    #[test]
    fn kronecker_points_fill_the_cube() {
        let pts = kronecker_points(4096, 3, 1);
        assert!(pts.iter().flatten().all(|v| (0.0..1.0).contains(v)));
        // each octant gets close to an eighth of the points
        let mut counts = [0usize; 8];
        for p in &pts {
            let o = (p[0] >= 0.5) as usize | ((p[1] >= 0.5) as usize) << 1 | ((p[2] >= 0.5) as usize) << 2;
            counts[o] += 1;
        }
        assert!(counts.iter().all(|c| (*c as i64 - 512).abs() < 20), "{counts:?}");
        assert_ne!(kronecker_points(5, 3, 1), kronecker_points(5, 3, 2));
    }

    #[test]
    fn tube_volume_at_n1_is_a_ball() {
        let sample = NilSample::lattice(NilSystem::heisenberg(), 1000, 1).unwrap();
        let rows = tube_volume_cross_check(&sample, 0.1, &[1], 200_000, 4, GreedyOptions::default()).unwrap();
        let ball = 4.0 / 3.0 * std::f64::consts::PI * 1e-3;
        assert!((rows[0].volume - ball).abs() < 4.0 * rows[0].stderr);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn counts_respond_monotonically_on_the_circle(eps in 0.02f64..0.3, n in 1usize..20) {
            let c = CircleRotation::uniform(0.5f64.sqrt(), 500);
            let a = greedy_spanning(&c, eps, n).unwrap();
            prop_assert_eq!(a, greedy_spanning(&c, eps, n + 1).unwrap());
            prop_assert!(greedy_spanning(&c, eps * 1.5, n).unwrap() <= a);
        }

        #[test]
        fn greedy_is_deterministic(seed in 0u64..1000) {
            let sample = NilSample::cube(NilSystem::heisenberg(), 400, 0.5, seed).unwrap();
            let a = greedy_net(&sample, 0.1, 16, GreedyOptions::default()).unwrap();
            prop_assert_eq!(a, greedy_net(&sample, 0.1, 16, GreedyOptions::default()).unwrap());
        }
    }
}
