//! Factor complexity of subshifts given by long prefixes of generating sequences.

use std::collections::BTreeMap;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::angle::{parse_real, to_fixed};
use crate::complexity::{circle_distance, greedy_spanning, CircleRotation};
use crate::error::{Error, Result};

/// Default prefix length.
pub const DEFAULT_PREFIX: usize = 1_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum Generator {
    /// Repetitions of a word of symbol indices.
    Periodic { word: Vec<u8> },
    /// `s_k = 1` iff `frac(x0 + k alpha)` lies in `[1 - alpha, 1)`.
    Sturmian { alpha: f64, x0: f64 },
    /// One-sided fixed point of a non-erasing substitution starting at `seed`.
    Substitution { rules: BTreeMap<u8, Vec<u8>>, seed: u8 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubshiftSpec {
    pub alphabet: Vec<char>,
    pub generator: Generator,
    pub prefix: usize,
}

impl SubshiftSpec {
    pub fn new(alphabet: Vec<char>, generator: Generator) -> Result<Self> {
        let spec = SubshiftSpec {
            alphabet,
            generator,
            prefix: DEFAULT_PREFIX,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_prefix(mut self, prefix: usize) -> Self {
        self.prefix = prefix;
        self
    }

    /// Periodic word over its own letters, in order of first appearance.
    pub fn periodic(word: &str) -> Result<Self> {
        let mut alphabet: Vec<char> = Vec::new();
        for c in word.chars() {
            if !alphabet.contains(&c) {
                alphabet.push(c);
            }
        }
        let word = word
            .chars()
            .map(|c| alphabet.iter().position(|a| *a == c).unwrap() as u8)
            .collect();
        Self::new(alphabet, Generator::Periodic { word })
    }

    pub fn sturmian(alpha: f64, x0: f64) -> Result<Self> {
        Self::new(vec!['0', '1'], Generator::Sturmian { alpha, x0 })
    }

    /// `0 -> 01, 1 -> 10` from `0`.
    pub fn thue_morse() -> Self {
        let rules = BTreeMap::from([(0, vec![0, 1]), (1, vec![1, 0])]);
        Self::new(vec!['0', '1'], Generator::Substitution { rules, seed: 0 }).expect("valid rules")
    }

    fn validate(&self) -> Result<()> {
        let k = self.alphabet.len();
        if k == 0 || k > u8::MAX as usize {
            return Err(Error::InvalidSubshift("alphabet must have 1 to 255 symbols".into()));
        }
        let in_range = |w: &[u8]| w.iter().all(|s| (*s as usize) < k);
        match &self.generator {
            Generator::Periodic { word } => {
                if word.is_empty() || !in_range(word) {
                    return Err(Error::InvalidSubshift("periodic word must be nonempty over the alphabet".into()));
                }
            }
            Generator::Sturmian { alpha, x0 } => {
                if k != 2 {
                    return Err(Error::InvalidSubshift("sturmian codings are binary".into()));
                }
                if !(*alpha > 0.0 && *alpha < 1.0) || !x0.is_finite() {
                    return Err(Error::InvalidSubshift(format!("alpha {alpha} not in (0, 1)")));
                }
            }
            Generator::Substitution { rules, seed } => {
                if (*seed as usize) >= k {
                    return Err(Error::InvalidSubshift("seed outside the alphabet".into()));
                }
                for s in 0..k as u8 {
                    match rules.get(&s) {
                        Some(w) if !w.is_empty() && in_range(w) => {}
                        Some(_) => return Err(Error::InvalidSubshift(format!("rule for {s} is erasing or leaves the alphabet"))),
                        None => return Err(Error::InvalidSubshift(format!("no rule for symbol {s}"))),
                    }
                }
            }
        }
        Ok(())
    }

    pub fn render(&self, word: &[u8]) -> String {
        word.iter().map(|s| self.alphabet[*s as usize]).collect()
    }
}

/// `periodic:WORD`, `sturmian:ALPHA:X0`, `thue-morse`, or
/// `substitution:A->AB,B->A:A` over the letters used in the rules.
impl FromStr for SubshiftSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("cannot parse generator {s:?}"));
        let mut parts = s.splitn(2, ':');
        let kind = parts.next().unwrap_or("");
        let rest = parts.next().unwrap_or("");
        match kind {
            "periodic" => Self::periodic(rest),
            "thue-morse" | "thuemorse" => Ok(Self::thue_morse()),
            "sturmian" => {
                let mut f = rest.split(':');
                let alpha = parse_real(f.next().ok_or_else(bad)?)?;
                let x0 = f.next().map(parse_real).transpose()?.unwrap_or(0.0);
                Self::sturmian(alpha, x0)
            }
            "substitution" => {
                let (rules_txt, seed_txt) = rest.rsplit_once(':').ok_or_else(bad)?;
                let mut alphabet: Vec<char> = Vec::new();
                let idx = |c: char, alphabet: &mut Vec<char>| -> u8 {
                    if let Some(p) = alphabet.iter().position(|a| *a == c) {
                        p as u8
                    } else {
                        alphabet.push(c);
                        (alphabet.len() - 1) as u8
                    }
                };
                let mut rules = BTreeMap::new();
                for rule in rules_txt.split(',') {
                    let (lhs, rhs) = rule.split_once("->").ok_or_else(bad)?;
                    let mut lhs = lhs.trim().chars();
                    let (Some(l), None) = (lhs.next(), lhs.next()) else { return Err(bad()) };
                    let l = idx(l, &mut alphabet);
                    let r: Vec<u8> = rhs.trim().chars().map(|c| idx(c, &mut alphabet)).collect();
                    rules.insert(l, r);
                }
                let mut seed = seed_txt.trim().chars();
                let (Some(sc), None) = (seed.next(), seed.next()) else { return Err(bad()) };
                let seed = idx(sc, &mut alphabet);
                Self::new(alphabet, Generator::Substitution { rules, seed })
            }
            _ => Err(bad()),
        }
    }
}

/// Bit `k` of the sturmian coding of `x0` under rotation by `alpha`.
fn sturmian_symbols(alpha: f64, x0: f64, range: std::ops::Range<i64>) -> impl Iterator<Item = u8> {
    let a = to_fixed(alpha);
    let threshold = a.wrapping_neg(); // 1 - alpha
    let x = to_fixed(x0);
    range.map(move |k| (x.wrapping_add(a.wrapping_mul(k as u64)) >= threshold) as u8)
}

/// Deterministic prefix of length `len`.
pub fn generate_prefix(spec: &SubshiftSpec, len: usize) -> Result<Vec<u8>> {
    if len == 0 {
        return Err(Error::Precondition("prefix length must be positive".into()));
    }
    spec.validate()?;
    match &spec.generator {
        Generator::Periodic { word } => Ok(word.iter().copied().cycle().take(len).collect()),
        Generator::Sturmian { alpha, x0 } => Ok(sturmian_symbols(*alpha, *x0, 0..len as i64).collect()),
        Generator::Substitution { rules, seed } => {
            let first = &rules[seed];
            if first[0] != *seed || first.len() < 2 {
                return Err(Error::NoFixedPoint(spec.alphabet[*seed as usize]));
            }
            // u = sigma(u): the image of u[..i] is already a prefix of u
            let mut out = first.clone();
            let mut i = 1;
            while out.len() < len {
                let s = out[i];
                out.extend_from_slice(&rules[&s]);
                i += 1;
            }
            out.truncate(len);
            Ok(out)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableRow {
    pub n: usize,
    pub count: usize,
    pub stable: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexityTable {
    pub rows: Vec<TableRow>,
    pub prefix: usize,
}

impl ComplexityTable {
    pub fn count(&self, n: usize) -> Option<usize> {
        self.rows.get(n.checked_sub(1)?).map(|r| r.count)
    }

    pub fn all_stable(&self) -> bool {
        self.rows.iter().all(|r| r.stable)
    }
}

/// Number of distinct factors of each length `1..=n_max` occurring in `word`.
///
/// Positions are sorted by their windows of length up to `n_max`; factors of length `n`
/// are the sorted positions whose window is at least `n` long and whose common prefix
/// with the preceding window is shorter than `n`.
pub fn factor_counts(word: &[u8], n_max: usize) -> Vec<usize> {
    let len = word.len();
    let window = |p: u32| &word[p as usize..(p as usize + n_max).min(len)];
    let mut pos: Vec<u32> = (0..len as u32).collect();
    pos.sort_unstable_by(|a, b| window(*a).cmp(window(*b)).then(a.cmp(b)));
    let mut diff = vec![0i64; n_max + 2];
    let mut prev: &[u8] = &[];
    for &p in &pos {
        let w = window(p);
        let lcp = w.iter().zip(prev).take_while(|(a, b)| a == b).count();
        if w.len() > lcp {
            diff[lcp + 1] += 1;
            diff[w.len() + 1] -= 1;
        }
        prev = w;
    }
    let mut out = Vec::with_capacity(n_max);
    let mut acc = 0i64;
    for d in diff.iter().take(n_max + 1).skip(1) {
        acc += d;
        out.push(acc as usize);
    }
    out
}

/// Factor counts on the prefix of length `spec.prefix`, recounted at twice the length.
pub fn complexity(spec: &SubshiftSpec, n_max: usize) -> Result<ComplexityTable> {
    if n_max == 0 {
        return Err(Error::Precondition("n_max must be positive".into()));
    }
    let long = generate_prefix(spec, 2 * spec.prefix)?;
    let short = factor_counts(&long[..spec.prefix], n_max);
    let double = factor_counts(&long, n_max);
    let rows = (1..=n_max)
        .map(|n| TableRow {
            n,
            count: short[n - 1],
            stable: short[n - 1] == double[n - 1],
        })
        .collect();
    Ok(ComplexityTable {
        rows,
        prefix: spec.prefix,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "verdict")]
pub enum MorseHedlund {
    /// `C(n) <= n` at `witness`, and `C` is constant from there on.
    Finite { witness: usize, eventual: usize, period_bound: usize },
    /// `C(n) <= n` somewhere but the table keeps growing afterwards.
    Inconsistent { witness: usize },
    AperiodicWithinHorizon { horizon: usize },
}

pub fn morse_hedlund_check(table: &ComplexityTable) -> Result<MorseHedlund> {
    if !table.all_stable() {
        return Err(Error::Precondition("table has unstable entries".into()));
    }
    let Some(w) = table.rows.iter().find(|r| r.count <= r.n) else {
        return Ok(MorseHedlund::AperiodicWithinHorizon { horizon: table.rows.len() });
    };
    let tail = &table.rows[w.n - 1..];
    if tail.iter().all(|r| r.count == w.count) {
        Ok(MorseHedlund::Finite {
            witness: w.n,
            eventual: w.count,
            period_bound: w.count,
        })
    } else {
        Ok(MorseHedlund::Inconsistent { witness: w.n })
    }
}

/// Whether the tail of `C(n) / n^s` stays bounded on the table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NilfactorVerdict {
    pub s: usize,
    /// `C(n) / n^s` at the largest `n`.
    pub tail_ratio: f64,
    pub bounded: bool,
    pub message: String,
}

/// Proxy for `liminf C(n) / n^s < infinity`: the ratio at `n_max` is at most twice the
/// ratio at `n_max / 2`. When it holds, every nilfactor is at most `s`-step.
pub fn nilfactor_verdict(table: &ComplexityTable, s: usize) -> Result<NilfactorVerdict> {
    let n_max = table.rows.len();
    if n_max < 4 || s == 0 {
        return Err(Error::Precondition("need a table of length 4 or more and s >= 1".into()));
    }
    let ratio = |n: usize| table.rows[n - 1].count as f64 / (n as f64).powi(s as i32);
    let tail_ratio = ratio(n_max);
    let bounded = tail_ratio <= 2.0 * ratio(n_max / 2);
    let message = match (bounded, s) {
        (true, 1) => "no nilfactor other than rotations".to_string(),
        (true, _) => format!("every nilfactor is at most {s}-step"),
        (false, _) => format!("C(n) / n^{s} grows on the table; no conclusion"),
    };
    Ok(NilfactorVerdict {
        s,
        tail_ratio,
        bounded,
        message,
    })
}

/// Symbol-1 counts of equal-length factors differ by at most one.
pub fn is_balanced(word: &[u8], n: usize) -> bool {
    if n == 0 || n > word.len() {
        return true;
    }
    let mut ones: usize = word[..n].iter().map(|s| *s as usize).sum();
    let (mut lo, mut hi) = (ones, ones);
    for i in n..word.len() {
        ones = ones + word[i] as usize - word[i - n] as usize;
        lo = lo.min(ones);
        hi = hi.max(ones);
    }
    hi - lo <= 1
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferRow {
    pub n: usize,
    /// Greedy spanning count of the rotation.
    pub spanning: usize,
    /// `C(n + 2L + 1)`.
    pub complexity: usize,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub alpha: f64,
    pub eps: f64,
    /// Smallest `L` for which equal codings on `[-L, L]` force distance below `eps`.
    pub window: usize,
    /// Largest circle distance among same-coding sample pairs at that `L`.
    pub witnessed_distance: f64,
    pub pair_samples: usize,
    pub rows: Vec<TransferRow>,
}

impl TransferReport {
    pub fn holds(&self) -> bool {
        self.rows.iter().all(|r| r.holds)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransferOptions {
    /// Points of the circle sampled to estimate `L`.
    pub pair_samples: usize,
    /// Largest window half-width tried.
    pub max_window: usize,
    /// Grid points of the rotation sample used for spanning counts.
    pub rotation_points: usize,
    pub seed: u64,
}

impl Default for TransferOptions {
    fn default() -> Self {
        TransferOptions {
            pair_samples: 20_000,
            max_window: 63,
            rotation_points: 4000,
            seed: 0,
        }
    }
}

/// Largest circle distance within sorted points of an arc that does not wrap past 0.
fn arc_diameter(ys: &[f64]) -> f64 {
    let (Some(lo), Some(hi)) = (ys.first(), ys.last()) else { return 0.0 };
    if hi - lo <= 0.5 {
        return hi - lo;
    }
    // the farthest pair straddles a gap of 1/2
    let mut best = 0.0f64;
    let mut j = 0;
    for i in 0..ys.len() {
        j = j.max(i);
        while j + 1 < ys.len() && ys[j + 1] - ys[i] <= 0.5 {
            j += 1;
        }
        for k in [j, (j + 1).min(ys.len() - 1)] {
            if k >= i {
                best = best.max(circle_distance(ys[i], ys[k]));
            }
        }
    }
    best
}

/// Largest circle distance between sampled points sharing a coding on `[-l, l]`.
fn coding_diameter(points: &[f64], alpha: f64, l: usize) -> f64 {
    let mut keyed: Vec<(u128, f64)> = points
        .iter()
        .map(|y| {
            let key = sturmian_symbols(alpha, *y, -(l as i64)..l as i64 + 1)
                .fold(0u128, |acc, b| acc << 1 | b as u128);
            (key, *y)
        })
        .collect();
    keyed.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut worst = 0.0f64;
    let mut start = 0;
    for i in 1..=keyed.len() {
        if i == keyed.len() || keyed[i].0 != keyed[start].0 {
            let ys: Vec<f64> = keyed[start..i].iter().map(|k| k.1).collect();
            worst = worst.max(arc_diameter(&ys));
            start = i;
        }
    }
    worst
}

/// Checks `S_Y(eps, n) <= C_X(n + 2L + 1)` for the sturmian subshift `X` coding the
/// rotation `Y` by `alpha`, with `L` estimated from sampled codings.
pub fn factor_transfer_check(
    spec: &SubshiftSpec,
    eps: f64,
    n_grid: &[usize],
    opts: TransferOptions,
) -> Result<TransferReport> {
    let Generator::Sturmian { alpha, .. } = spec.generator else {
        return Err(Error::Precondition("factor transfer needs a sturmian spec".into()));
    };
    if !(eps > 0.0) || n_grid.is_empty() {
        return Err(Error::Precondition("eps must be positive and the grid nonempty".into()));
    }
    if opts.max_window > 63 {
        return Err(Error::Precondition("window half-width is limited to 63".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let points: Vec<f64> = (0..opts.pair_samples).map(|_| rng.gen::<f64>()).collect();
    let mut found = None;
    for l in 0..=opts.max_window {
        let diam = coding_diameter(&points, alpha, l);
        if diam < eps {
            found = Some((l, diam));
            break;
        }
    }
    let (window, witnessed_distance) = found.ok_or(Error::WindowExhausted(opts.max_window))?;
    log::info!("transfer window L = {window} at eps = {eps} from {} samples", opts.pair_samples);

    let n_top = n_grid.iter().copied().max().unwrap_or(1) + 2 * window + 1;
    let prefix = spec.prefix.min((64 * n_top).max(1 << 14));
    let table = complexity(&spec.clone().with_prefix(prefix), n_top)?;
    if !table.all_stable() {
        log::warn!("complexity table unstable at prefix {prefix}");
    }
    let rot = CircleRotation::uniform(alpha, opts.rotation_points);
    let rows = n_grid
        .iter()
        .map(|&n| {
            let spanning = greedy_spanning(&rot, eps, n)?;
            let complexity = table.count(n + 2 * window + 1).expect("table covers the grid");
            Ok(TransferRow {
                n,
                spanning,
                complexity,
                holds: spanning <= complexity,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TransferReport {
        alpha,
        eps,
        window,
        witnessed_distance,
        pair_samples: opts.pair_samples,
        rows,
    })
}
