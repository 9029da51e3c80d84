//! Volumes of `W_n = { xi : |A^k xi| <= 1, 0 <= k < n }` for unipotent `A`.
//!
//! Monte Carlo estimates sample a bounding region that contains `W_n`. The default
//! region is a parallelepiped `{ xi : |L xi|_sup <= 1 }` whose rows `L` are rows of
//! powers `A^k` with `k < n`, so it contains `W_n` for both norms while shrinking at the
//! same rate. The plain unit box (or ball) is available as [`Region::Unit`].
//!
//! Sampling uses `ChaCha8Rng` seeded with `seed`; blocks of [`BLOCK`] samples use
//! stream number `block`, which makes results independent of the worker count.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::loglog;
use crate::liealg::{total_commutator_dimension, DEFAULT_RANK_TOL};

/// Samples per RNG stream.
pub const BLOCK: usize = 1 << 16;

/// Acceptance rate below which the backward decay check is declared starved.
pub const STARVATION_RATE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    #[default]
    Sup,
    Euclidean,
}

impl Norm {
    #[inline]
    fn within_unit(self, v: &[f64]) -> bool {
        match self {
            Norm::Sup => v.iter().all(|x| x.abs() <= 1.0),
            Norm::Euclidean => v.iter().map(|x| x * x).sum::<f64>() <= 1.0,
        }
    }
}

impl std::str::FromStr for Norm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sup" => Ok(Norm::Sup),
            "euclidean" => Ok(Norm::Euclidean),
            other => Err(Error::Config(format!("unknown norm {other:?}"))),
        }
    }
}

/// Bounding region for Monte Carlo sampling.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    /// Box `[-1, 1]^d` for the sup norm, unit ball for the euclidean norm.
    Unit,
    #[default]
    Parallelepiped,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SamplerOptions {
    pub region: Region,
    pub workers: usize,
}

impl Default for SamplerOptions {
    fn default() -> Self {
        SamplerOptions {
            region: Region::Parallelepiped,
            workers: 1,
        }
    }
}

/// A square matrix with `|(id - A)^d| <= 1e-8 (1 + |A|)^d` (Frobenius norms).
#[derive(Clone, Debug, PartialEq)]
pub struct UnipotentMatrix {
    matrix: DMatrix<f64>,
}

impl UnipotentMatrix {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(Error::Precondition("matrix must be square and non-empty".into()));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix"));
        }
        let d = matrix.nrows();
        let n = DMatrix::identity(d, d) - &matrix;
        let mut pow = DMatrix::identity(d, d);
        for _ in 0..d {
            pow = &pow * &n;
        }
        let residual = pow.norm();
        let bound = 1e-8 * (1.0 + matrix.norm()).powi(d as i32);
        if residual > bound {
            return Err(Error::NotUnipotent { residual, bound });
        }
        Ok(UnipotentMatrix { matrix })
    }

    pub fn identity(d: usize) -> Result<Self> {
        Self::new(DMatrix::identity(d, d))
    }

    /// Upper Jordan block `J_r` with ones on the diagonal and superdiagonal.
    pub fn jordan_block(r: usize) -> Result<Self> {
        let mut m = DMatrix::identity(r, r);
        for i in 0..r.saturating_sub(1) {
            m[(i, i + 1)] = 1.0;
        }
        Self::new(m)
    }

    pub fn block_diag(blocks: &[UnipotentMatrix]) -> Result<Self> {
        let d: usize = blocks.iter().map(|b| b.dim()).sum();
        let mut m = DMatrix::zeros(d, d);
        let mut off = 0;
        for b in blocks {
            let k = b.dim();
            m.view_mut((off, off), (k, k)).copy_from(&b.matrix);
            off += k;
        }
        Self::new(m)
    }

    /// `Phi A Phi^-1`.
    pub fn conjugate(&self, phi: &DMatrix<f64>) -> Result<Self> {
        let inv = phi
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Precondition("conjugating matrix is singular".into()))?;
        Self::new(phi * &self.matrix * inv)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// `sum_l rank((A - id)^l)`.
    pub fn predicted_exponent(&self) -> Result<usize> {
        Ok(total_commutator_dimension(&self.matrix, self.dim(), DEFAULT_RANK_TOL)?.p)
    }

    fn row_major(&self) -> Vec<f64> {
        let d = self.dim();
        (0..d * d).map(|t| self.matrix[(t / d, t % d)]).collect()
    }

    /// Rows of `A^k` for each `k` in `ks`.
    fn power_rows(&self, ks: &[usize]) -> Vec<Vec<f64>> {
        let d = self.dim();
        let mut out = Vec::new();
        for &k in ks {
            let p = self.matrix.pow(k as u32);
            for i in 0..d {
                out.push(p.row(i).iter().copied().collect());
            }
        }
        out
    }
}

/// Per-n Monte Carlo estimate of `|W_n|`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolumeEstimate {
    pub n: usize,
    pub norm: Norm,
    pub estimate: f64,
    pub stderr: f64,
    pub samples: u64,
    pub hits: u64,
    pub seed: u64,
}

impl VolumeEstimate {
    /// Estimate for `eps W_n` in dimension `d`.
    pub fn scaled(&self, eps: f64, d: usize) -> VolumeEstimate {
        let f = eps.powi(d as i32);
        VolumeEstimate {
            estimate: self.estimate * f,
            stderr: self.stderr * f,
            ..self.clone()
        }
    }
}

struct Stepper {
    d: usize,
    a: Vec<f64>,
    cur: Vec<f64>,
    next: Vec<f64>,
}

impl Stepper {
    fn new(a: &UnipotentMatrix) -> Self {
        let d = a.dim();
        Stepper {
            d,
            a: a.row_major(),
            cur: vec![0.0; d],
            next: vec![0.0; d],
        }
    }

    fn contains(&mut self, xi: &[f64], n: usize, norm: Norm) -> bool {
        self.cur.copy_from_slice(xi);
        for k in 0..n {
            if k > 0 {
                for i in 0..self.d {
                    let row = &self.a[i * self.d..(i + 1) * self.d];
                    self.next[i] = row.iter().zip(&self.cur).map(|(r, c)| r * c).sum();
                }
                std::mem::swap(&mut self.cur, &mut self.next);
            }
            if !norm.within_unit(&self.cur) {
                return false;
            }
        }
        true
    }
}

/// True iff `|A^k xi| <= 1` for all `0 <= k < n`.
pub fn wn_contains(a: &UnipotentMatrix, xi: &[f64], n: usize, norm: Norm) -> bool {
    assert_eq!(xi.len(), a.dim(), "vector length");
    Stepper::new(a).contains(xi, n, norm)
}

/// `{ xi : |L xi|_sup <= 1 }` with `L` invertible.
#[derive(Clone, Debug)]
pub(crate) struct Parallelepiped {
    inv: DMatrix<f64>,
    volume: f64,
}

impl Parallelepiped {
    /// Picks `d` rows from the powers `A^k`, `k < n`, greedily maximising `|det L|`.
    pub(crate) fn enclosing(a: &UnipotentMatrix, n: usize) -> Self {
        let d = a.dim();
        let mut ks = vec![0, n - 1];
        let mut k = (n - 1) / 2;
        while k > 0 {
            ks.push(k);
            k /= 2;
        }
        ks.sort_unstable();
        ks.dedup();
        let candidates = a.power_rows(&ks);
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(d);
        let mut chosen: Vec<Vec<f64>> = Vec::with_capacity(d);
        for _ in 0..d {
            let mut best: Option<(f64, usize, Vec<f64>)> = None;
            for (idx, row) in candidates.iter().enumerate() {
                let mut r = row.clone();
                for q in &basis {
                    let dot: f64 = r.iter().zip(q).map(|(x, y)| x * y).sum();
                    r.iter_mut().zip(q).for_each(|(x, y)| *x -= dot * y);
                }
                let norm = r.iter().map(|x| x * x).sum::<f64>().sqrt();
                if best.as_ref().map_or(true, |b| norm > b.0) {
                    best = Some((norm, idx, r));
                }
            }
            let (norm, idx, r) = best.expect("candidate rows");
            basis.push(r.iter().map(|x| x / norm).collect());
            chosen.push(candidates[idx].clone());
        }
        let l = DMatrix::from_fn(d, d, |i, j| chosen[i][j]);
        let det = l.determinant().abs();
        let inv = l.try_inverse().expect("rows include the identity");
        Parallelepiped {
            inv,
            volume: 2f64.powi(d as i32) / det,
        }
    }

    pub(crate) fn volume(&self) -> f64 {
        self.volume
    }

    pub(crate) fn vertices(&self) -> Vec<Vec<f64>> {
        let d = self.inv.nrows();
        (0..1usize << d)
            .map(|mask| {
                let u: Vec<f64> = (0..d).map(|i| if mask >> i & 1 == 1 { 1.0 } else { -1.0 }).collect();
                self.map(&u)
            })
            .collect()
    }

    fn map(&self, u: &[f64]) -> Vec<f64> {
        let d = u.len();
        (0..d).map(|i| (0..d).map(|j| self.inv[(i, j)] * u[j]).sum()).collect()
    }

    pub(crate) fn sample_into<R: Rng>(&self, rng: &mut R, u: &mut [f64], out: &mut [f64]) {
        let d = u.len();
        for v in u.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        for i in 0..d {
            out[i] = (0..d).map(|j| self.inv[(i, j)] * u[j]).sum();
        }
    }
}

fn unit_ball_volume(d: usize) -> f64 {
    // V_d = V_{d-2} * 2 pi / d
    let mut v = if d % 2 == 0 { 1.0 } else { 2.0 };
    let mut k = if d % 2 == 0 { 2 } else { 3 };
    while k <= d {
        v *= 2.0 * std::f64::consts::PI / k as f64;
        k += 2;
    }
    v
}

enum Sampler {
    Box(usize),
    Ball(usize),
    Para(Parallelepiped),
}

impl Sampler {
    fn volume(&self) -> f64 {
        match self {
            Sampler::Box(d) => 2f64.powi(*d as i32),
            Sampler::Ball(d) => unit_ball_volume(*d),
            Sampler::Para(p) => p.volume(),
        }
    }

    fn draw<R: Rng>(&self, rng: &mut R, u: &mut [f64], out: &mut [f64]) {
        match self {
            Sampler::Box(_) => out.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0)),
            Sampler::Ball(d) => {
                let mut r2 = 0.0;
                for v in out.iter_mut() {
                    *v = rng.sample(StandardNormal);
                    r2 += *v * *v;
                }
                let radius = rng.gen::<f64>().powf(1.0 / *d as f64) / r2.sqrt();
                out.iter_mut().for_each(|v| *v *= radius);
            }
            Sampler::Para(p) => p.sample_into(rng, u, out),
        }
    }
}

fn block_rng(seed: u64, block: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block as u64);
    rng
}

fn count_hits(
    a: &UnipotentMatrix,
    sampler: &Sampler,
    n: usize,
    norm: Norm,
    samples: u64,
    seed: u64,
    workers: usize,
) -> Result<u64> {
    let blocks = (samples as usize).div_ceil(BLOCK);
    let run = |b: usize| -> u64 {
        let len = BLOCK.min(samples as usize - b * BLOCK);
        let mut rng = block_rng(seed, b);
        let mut stepper = Stepper::new(a);
        let d = a.dim();
        let (mut u, mut xi) = (vec![0.0; d], vec![0.0; d]);
        let mut hits = 0;
        for _ in 0..len {
            sampler.draw(&mut rng, &mut u, &mut xi);
            if stepper.contains(&xi, n, norm) {
                hits += 1;
            }
        }
        hits
    };
    if workers <= 1 {
        return Ok((0..blocks).map(run).sum());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Precondition(e.to_string()))?;
    Ok(pool.install(|| (0..blocks).into_par_iter().map(run).sum()))
}

/// Monte Carlo estimate of `|W_n|` with the default sampler options.
pub fn mc_volume(a: &UnipotentMatrix, n: usize, norm: Norm, samples: u64, seed: u64) -> Result<VolumeEstimate> {
    mc_volume_with(a, n, norm, samples, seed, SamplerOptions::default())
}

pub fn mc_volume_with(
    a: &UnipotentMatrix,
    n: usize,
    norm: Norm,
    samples: u64,
    seed: u64,
    opts: SamplerOptions,
) -> Result<VolumeEstimate> {
    if samples == 0 {
        return Err(Error::SampleBudget("zero samples".into()));
    }
    if n == 0 {
        return Err(Error::Precondition("n must be at least 1".into()));
    }
    let d = a.dim();
    let sampler = match (opts.region, norm) {
        (Region::Unit, Norm::Sup) => Sampler::Box(d),
        (Region::Unit, Norm::Euclidean) => Sampler::Ball(d),
        (Region::Parallelepiped, _) => Sampler::Para(Parallelepiped::enclosing(a, n)),
    };
    let hits = count_hits(a, &sampler, n, norm, samples, seed, opts.workers)?;
    let vol = sampler.volume();
    let p = hits as f64 / samples as f64;
    Ok(VolumeEstimate {
        n,
        norm,
        estimate: vol * p,
        stderr: vol * (p * (1.0 - p) / samples as f64).sqrt(),
        samples,
        hits,
        seed,
    })
}

fn polygon_area(poly: &[(f64, f64)]) -> f64 {
    let n = poly.len();
    let twice: f64 = (0..n)
        .map(|i| {
            let (x0, y0) = poly[i];
            let (x1, y1) = poly[(i + 1) % n];
            x0 * y1 - x1 * y0
        })
        .sum();
    twice.abs() / 2.0
}

/// Keeps the part of a convex polygon with `a x + b y <= c`.
fn clip(poly: &[(f64, f64)], a: f64, b: f64, c: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(poly.len() + 1);
    let side = |p: (f64, f64)| a * p.0 + b * p.1 - c;
    for i in 0..poly.len() {
        let p = poly[i];
        let q = poly[(i + 1) % poly.len()];
        let (sp, sq) = (side(p), side(q));
        if sp <= 0.0 {
            out.push(p);
        }
        if (sp < 0.0 && sq > 0.0) || (sp > 0.0 && sq < 0.0) {
            let t = sp / (sp - sq);
            out.push((p.0 + t * (q.0 - p.0), p.1 + t * (q.1 - p.1)));
        }
    }
    out
}

/// Exact sup-norm area of `W_n` for a 2x2 unipotent matrix.
pub fn exact_volume_2d(a: &UnipotentMatrix, n: usize) -> Result<f64> {
    if a.dim() != 2 {
        return Err(Error::Precondition(format!("expected a 2x2 matrix, got {}x{}", a.dim(), a.dim())));
    }
    if n == 0 {
        return Err(Error::Precondition("n must be at least 1".into()));
    }
    let m = a.matrix();
    let mut poly = vec![(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)];
    let mut p = m.clone();
    for _ in 1..n {
        for i in 0..2 {
            let (r0, r1) = (p[(i, 0)], p[(i, 1)]);
            poly = clip(&poly, r0, r1, 1.0);
            poly = clip(&poly, -r0, -r1, 1.0);
        }
        if poly.len() < 3 {
            return Ok(0.0);
        }
        p = &p * m;
    }
    Ok(polygon_area(&poly))
}

/// `(J_r^k)_{ij} = C(k, j - i)` with 1-based `i, j`.
pub fn jordan_power_entry(r: usize, k: u64, i: usize, j: usize) -> u128 {
    assert!((1..=r).contains(&i) && (1..=r).contains(&j), "index out of range");
    if j < i {
        return 0;
    }
    let t = (j - i) as u64;
    if t > k {
        return 0;
    }
    let t = t.min(k - t);
    (0..t).fold(1u128, |acc, s| {
        acc.checked_mul((k - s) as u128).expect("binomial overflow") / (s as u128 + 1)
    })
}

/// Empirical constants of the coordinate decay lemma for `J_r`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub r: usize,
    pub n: usize,
    /// Max of `|(J^k x)_i|` over `k < n` and sampled `|x_j| <= n^(1-j)`.
    pub c_forward: f64,
    pub forward_trials: u64,
    /// Max of `|x_j| n^(j-1)` over sampled `x` in `W_n`; `None` when starved.
    pub c_backward: Option<f64>,
    pub backward_draws: u64,
    pub backward_accepted: u64,
    pub starved: bool,
}

fn forward_value(x: &[f64], n: usize, cur: &mut Vec<f64>) -> f64 {
    cur.clear();
    cur.extend_from_slice(x);
    let r = x.len();
    let mut best = 0.0f64;
    for k in 0..n {
        if k > 0 {
            for i in 0..r - 1 {
                cur[i] += cur[i + 1];
            }
        }
        best = cur.iter().fold(best, |b, v| b.max(v.abs()));
    }
    best
}

fn backward_value(x: &[f64], n: usize) -> f64 {
    let nf = n as f64;
    x.iter()
        .enumerate()
        .map(|(j, v)| v.abs() * nf.powi(j as i32))
        .fold(0.0, f64::max)
}

/// Forward and backward constants of the decay lemma for `J_r` at length `n`.
///
/// Both sample sets include exact extreme points: the box corners for the forward
/// check and the enclosing-parallelepiped vertices lying in `W_n` for the backward one.
pub fn coordinate_decay_check(r: usize, n: usize, trials: u64, seed: u64) -> Result<DecayReport> {
    if n < 2 {
        return Err(Error::Precondition("n must be at least 2".into()));
    }
    if r == 0 {
        return Err(Error::Precondition("r must be at least 1".into()));
    }
    let nf = n as f64;
    let scale: Vec<f64> = (0..r).map(|j| nf.powi(-(j as i32))).collect();
    let mut cur = Vec::with_capacity(r);

    let mut c_forward = 0.0f64;
    for mask in 0..1usize << r {
        let x: Vec<f64> = (0..r).map(|j| if mask >> j & 1 == 1 { scale[j] } else { -scale[j] }).collect();
        c_forward = c_forward.max(forward_value(&x, n, &mut cur));
    }
    let mut rng = block_rng(seed, 0);
    let mut x = vec![0.0; r];
    for _ in 0..trials {
        for j in 0..r {
            x[j] = rng.gen_range(-1.0..=1.0) * scale[j];
        }
        c_forward = c_forward.max(forward_value(&x, n, &mut cur));
    }

    let a = UnipotentMatrix::jordan_block(r)?;
    let para = Parallelepiped::enclosing(&a, n);
    let mut stepper = Stepper::new(&a);
    let mut c_backward = 0.0f64;
    let mut accepted = 0u64;
    for v in para.vertices() {
        if stepper.contains(&v, n, Norm::Sup) {
            c_backward = c_backward.max(backward_value(&v, n));
        }
    }
    let mut rng = block_rng(seed, 1);
    let mut u = vec![0.0; r];
    for _ in 0..trials {
        para.sample_into(&mut rng, &mut u, &mut x);
        if stepper.contains(&x, n, Norm::Sup) {
            accepted += 1;
            c_backward = c_backward.max(backward_value(&x, n));
        }
    }
    let starved = trials > 0 && (accepted as f64) < STARVATION_RATE * trials as f64;
    Ok(DecayReport {
        r,
        n,
        c_forward,
        forward_trials: trials,
        c_backward: (!starved).then_some(c_backward),
        backward_draws: trials,
        backward_accepted: accepted,
        starved,
    })
}

/// Log-log fit of `|W_n|` against `n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolumeFit {
    pub slope: f64,
    pub stderr: f64,
    pub p_predicted: usize,
    pub per_n: Vec<VolumeEstimate>,
}

pub fn volume_exponent_fit(
    a: &UnipotentMatrix,
    n_grid: &[usize],
    norm: Norm,
    samples: u64,
    seed: u64,
) -> Result<VolumeFit> {
    volume_exponent_fit_with(a, n_grid, norm, samples, seed, SamplerOptions::default())
}

pub fn volume_exponent_fit_with(
    a: &UnipotentMatrix,
    n_grid: &[usize],
    norm: Norm,
    samples: u64,
    seed: u64,
    opts: SamplerOptions,
) -> Result<VolumeFit> {
    if n_grid.len() < 4 {
        return Err(Error::InvalidGrid(format!("need at least 4 points, got {}", n_grid.len())));
    }
    if n_grid[0] == 0 || n_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidGrid("grid must be positive and increasing".into()));
    }
    let mut per_n = Vec::with_capacity(n_grid.len());
    for &n in n_grid {
        let est = mc_volume_with(a, n, norm, samples, seed, opts)?;
        if est.hits == 0 {
            return Err(Error::SampleBudget(format!(
                "no hits at n = {n} with {samples} samples; increase the budget"
            )));
        }
        per_n.push(est);
    }
    let x: Vec<f64> = n_grid.iter().map(|n| *n as f64).collect();
    let y: Vec<f64> = per_n.iter().map(|e| e.estimate).collect();
    let fit = loglog(&x, &y).ok_or_else(|| Error::InvalidGrid("degenerate fit".into()))?;
    Ok(VolumeFit {
        slope: fit.slope,
        stderr: fit.stderr,
        p_predicted: a.predicted_exponent()?,
        per_n,
    })
}
