//! The `nilcomplex` command line.
//!
//! Every subcommand writes JSON lines to stdout or `--out`, one summary line to stderr,
//! and with `--out` a `<out>.manifest.json` describing the run. Exit codes: 0 on
//! success, 2 when a diagnostic is flagged, 1 on errors.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use serde::Serialize;
use serde_json::json;

use crate::angle::parse_real;
use crate::complexity::{
    eps_scaling_check, growth_exponent, tube_volume_cross_check, Domain, GreedyOptions, NilSample,
};
use crate::ergodic_checks::{
    birkhoff_stability, correlation_sequence, parse_arcs, parse_polys, polynomial_scan, spectrum_verdict,
    syndetic_scan, weyl_discrepancy, Observable, Poly, RotationSystem, SpectralVerdict,
};
use crate::error::{Error, Result};
use crate::fit::geometric_grid;
use crate::liealg::{adjoint, check_exponent_lower_bound, system_profile, DEFAULT_RANK_TOL};
use crate::nilgroup::{NilPoint, NilSystem, NilSystemSpec};
use crate::subshift::{complexity, factor_transfer_check, morse_hedlund_check, nilfactor_verdict, SubshiftSpec, TransferOptions};
use crate::unipotent_volume::{volume_exponent_fit_with, Norm, Region, SamplerOptions, UnipotentMatrix};

pub const SEED_ENV: &str = "NILCOMPLEX_SEED";

#[derive(Parser, Debug, Serialize)]
#[command(name = "nilcomplex", version, about = "Complexity experiments on nilsystems")]
pub struct Cli {
    /// key=value file, one flag per line; `command=<name>` selects the subcommand.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for stochastic subcommands; falls back to NILCOMPLEX_SEED.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON-lines output file (stdout when absent).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 1)]
    pub workers: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "lowercase", tag = "command")]
pub enum Command {
    /// Rank profile of Ad and the exponent p.
    Dimension(DimensionArgs),
    /// Greedy spanning counts of a nilsystem sample.
    Complexity(ComplexityArgs),
    /// Monte Carlo volumes of W_n for a unipotent matrix.
    Volume(VolumeArgs),
    /// Factor complexity of a subshift.
    Subshift(SubshiftArgs),
    /// Multiple-recurrence scan for a circle rotation.
    Recurrence(RecurrenceArgs),
    /// Correlation sequences and the spectral verdict.
    Spectrum(SpectrumArgs),
    /// Predicted exponent, fitted growth and tube volumes side by side.
    Xcheck(XcheckArgs),
}

pub const COMMANDS: [&str; 7] = ["dimension", "complexity", "volume", "subshift", "recurrence", "spectrum", "xcheck"];

#[derive(Args, Debug, Serialize)]
pub struct DimensionArgs {
    /// heisenberg, rotation, m=<size>, inline JSON or a JSON file.
    #[arg(long, default_value = "heisenberg")]
    pub system: String,
    #[arg(long, default_value_t = DEFAULT_RANK_TOL)]
    pub tol: f64,
}

#[derive(Args, Debug, Serialize)]
pub struct ComplexityArgs {
    #[arg(long, default_value = "heisenberg")]
    pub system: String,
    /// One scale, or several with a single n for the scale fit.
    #[arg(long, default_value = "0.1")]
    pub eps: String,
    /// `a:b` doubles from a to b, `a:b:r` uses ratio r, or a comma list.
    #[arg(long, default_value = "8:512")]
    pub n: String,
    #[arg(long, default_value_t = 200_000)]
    pub points: usize,
    /// full, cube:<side> or window:<s1,s2,...>.
    #[arg(long, default_value = "full")]
    pub domain: String,
}

#[derive(Args, Debug, Serialize)]
pub struct VolumeArgs {
    /// jordan:<r>[,<r>...], identity:<d>, ad:<system> or rows:<a,b;c,d>.
    #[arg(long)]
    pub matrix: String,
    #[arg(long, default_value = "8:512")]
    pub n: String,
    #[arg(long, default_value_t = 1_000_000)]
    pub samples: u64,
    /// sup or euclidean.
    #[arg(long, default_value = "sup")]
    pub norm: String,
    /// parallelepiped or unit.
    #[arg(long, default_value = "parallelepiped")]
    pub region: String,
}

#[derive(Args, Debug, Serialize)]
pub struct SubshiftArgs {
    /// periodic:<w>, sturmian:<alpha>[:<x0>], thue-morse or substitution:<rules>:<seed>.
    #[arg(long)]
    pub spec: String,
    #[arg(long, default_value_t = 30)]
    pub nmax: usize,
    /// Prefix length used for counting.
    #[arg(long)]
    pub prefix: Option<usize>,
    /// Step of the nilfactor verdict.
    #[arg(long, default_value_t = 2)]
    pub s: usize,
    /// Scale for the factor-transfer check on sturmian specs.
    #[arg(long)]
    pub transfer_eps: Option<f64>,
    #[arg(long, default_value = "8:256")]
    pub transfer_n: String,
}

#[derive(Args, Debug, Serialize)]
pub struct RecurrenceArgs {
    #[arg(long, default_value = "golden")]
    pub alpha: String,
    /// Arcs `a:b[,c:d...]`.
    #[arg(long, default_value = "0:0.3")]
    pub set: String,
    #[arg(long, default_value_t = 2)]
    pub k: usize,
    /// Polynomial iterates such as `n,n^2`; replaces `--k`.
    #[arg(long)]
    pub polys: Option<String>,
    #[arg(long, default_value_t = 0.02)]
    pub eps: f64,
    #[arg(long = "N", default_value_t = 100_000)]
    pub n_max: u64,
    /// Also report the discrepancy of the iterates.
    #[arg(long)]
    pub discrepancy: bool,
}

#[derive(Args, Debug, Serialize)]
pub struct SpectrumArgs {
    #[arg(long, default_value = "heisenberg")]
    pub system: String,
    #[arg(long, default_value_t = 1000)]
    pub nmax: usize,
    /// Iterates discarded before averaging.
    #[arg(long, default_value_t = 0)]
    pub burn: u64,
    /// Averaging length; defaults to 100 nmax.
    #[arg(long = "N")]
    pub n_avg: Option<usize>,
    /// Also compare against twice the averaging length.
    #[arg(long)]
    pub stability: bool,
}

#[derive(Args, Debug, Serialize)]
pub struct XcheckArgs {
    #[arg(long, default_value = "heisenberg")]
    pub system: String,
    #[arg(long, default_value_t = 0.1)]
    pub eps: f64,
    #[arg(long, default_value = "8:512")]
    pub n: String,
    #[arg(long, default_value_t = 200_000)]
    pub points: usize,
    #[arg(long, default_value = "cube:0.1")]
    pub domain: String,
    /// Monte Carlo samples per tube volume.
    #[arg(long, default_value_t = 200_000)]
    pub samples: u64,
}

/// Named systems, `m=<size>` for default translations, inline JSON or a JSON file.
pub fn parse_system(s: &str) -> Result<NilSystem> {
    let t = s.trim();
    match t {
        "heisenberg" => return Ok(NilSystem::heisenberg()),
        "rotation" => return NilSystem::with_default_tau(2),
        _ => {}
    }
    if let Some(m) = t.strip_prefix("m=") {
        let m = m.parse().map_err(|_| Error::Config(format!("bad size in {t:?}")))?;
        return NilSystem::with_default_tau(m);
    }
    let text = if t.starts_with('{') { t.to_string() } else { fs::read_to_string(t)? };
    let spec: NilSystemSpec = serde_json::from_str(&text)?;
    NilSystem::from_spec(&spec)
}

/// `a:b` (doubling), `a:b:r` or `a,b,c`.
pub fn parse_grid(s: &str) -> Result<Vec<usize>> {
    let bad = || Error::Config(format!("bad grid {s:?}"));
    let num = |v: &str| v.trim().parse::<usize>().map_err(|_| bad());
    let grid = if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        let (a, b, r) = match parts.as_slice() {
            [a, b] => (num(a)?, num(b)?, 2),
            [a, b, r] => (num(a)?, num(b)?, num(r)?),
            _ => return Err(bad()),
        };
        if a == 0 || r < 2 || b < a {
            return Err(bad());
        }
        geometric_grid(a, b, r)
    } else {
        s.split(',').map(num).collect::<Result<Vec<_>>>()?
    };
    if grid.is_empty() || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidGrid(format!("{s:?} is not strictly increasing")));
    }
    Ok(grid)
}

fn parse_domain(s: &str) -> Result<Domain> {
    let bad = || Error::Config(format!("bad domain {s:?}"));
    let reals = |v: &str| v.split(',').map(|x| x.trim().parse::<f64>().map_err(|_| bad())).collect::<Result<Vec<_>>>();
    match s.split_once(':') {
        None if s == "full" => Ok(Domain::Full),
        Some(("cube", v)) => Ok(Domain::Window(vec![v.trim().parse().map_err(|_| bad())?])),
        Some(("window", v)) => Ok(Domain::Window(reals(v)?)),
        _ => Err(bad()),
    }
}

fn build_sample(sys: NilSystem, points: usize, domain: &Domain, seed: u64) -> Result<NilSample> {
    match domain {
        Domain::Full => NilSample::lattice(sys, points, seed),
        Domain::Window(s) if s.len() == 1 => NilSample::cube(sys, points, s[0], seed),
        Domain::Window(s) => NilSample::window(sys, points, s, seed),
    }
}

fn parse_matrix(s: &str) -> Result<UnipotentMatrix> {
    let bad = || Error::Config(format!("bad matrix {s:?}"));
    let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
    match kind {
        "jordan" => {
            let blocks = rest
                .split(',')
                .map(|r| UnipotentMatrix::jordan_block(r.trim().parse().map_err(|_| bad())?))
                .collect::<Result<Vec<_>>>()?;
            if blocks.len() == 1 {
                Ok(blocks.into_iter().next().unwrap())
            } else {
                UnipotentMatrix::block_diag(&blocks)
            }
        }
        "identity" => UnipotentMatrix::identity(rest.trim().parse().map_err(|_| bad())?),
        "ad" => UnipotentMatrix::new(adjoint(&parse_system(rest)?).matrix().clone()),
        "rows" => {
            let rows: Vec<Vec<f64>> = rest
                .split(';')
                .map(|r| r.split(',').map(|v| v.trim().parse::<f64>().map_err(|_| bad())).collect())
                .collect::<Result<_>>()?;
            let d = rows.len();
            if rows.iter().any(|r| r.len() != d) {
                return Err(bad());
            }
            UnipotentMatrix::new(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
        }
        _ => Err(bad()),
    }
}

/// Collects JSON lines and the one-line summary.
struct Report {
    lines: Vec<String>,
    summary: String,
    flagged: bool,
}

impl Report {
    fn new() -> Self {
        Report {
            lines: Vec::new(),
            summary: String::new(),
            flagged: false,
        }
    }

    fn emit<T: Serialize>(&mut self, record: &T) -> Result<()> {
        self.lines.push(serde_json::to_string(record)?);
        Ok(())
    }
}

fn require_seed(seed: Option<u64>) -> Result<u64> {
    if let Some(s) = seed {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("{SEED_ENV}={v:?} is not an integer"))),
        Err(_) => Err(Error::Config(format!(
            "this subcommand needs --seed or {SEED_ENV}"
        ))),
    }
}

#[derive(Serialize)]
struct DimensionRecord {
    p: usize,
    ranks: Vec<usize>,
    s: usize,
    d: usize,
}

fn dimension_record(sys: &NilSystem, tol: f64) -> Result<DimensionRecord> {
    let profile = system_profile(sys, tol)?;
    Ok(DimensionRecord {
        p: profile.p,
        ranks: profile.ranks,
        s: sys.step(),
        d: sys.dim(),
    })
}

fn dimension(a: &DimensionArgs, r: &mut Report) -> Result<()> {
    let sys = parse_system(&a.system)?;
    let profile = system_profile(&sys, a.tol)?;
    let s = sys.step();
    r.emit(&dimension_record(&sys, a.tol)?)?;
    let bound = check_exponent_lower_bound(&profile, s);
    r.flagged = !bound;
    r.summary = format!("p = {} (ranks {:?}), p >= s - 1: {bound}", profile.p, profile.ranks);
    Ok(())
}

fn complexity_cmd(a: &ComplexityArgs, seed: u64, opts: GreedyOptions, r: &mut Report) -> Result<()> {
    let sys = parse_system(&a.system)?;
    let domain = parse_domain(&a.domain)?;
    let eps: Vec<f64> = a.eps.split(',').map(parse_real).collect::<Result<_>>()?;
    let grid = parse_grid(&a.n)?;
    let sample = build_sample(sys, a.points, &domain, seed)?;
    match (eps.as_slice(), grid.as_slice()) {
        ([e], _) => {
            let curve = growth_exponent(&sample, *e, &grid, opts)?;
            for row in &curve.rows {
                r.emit(row)?;
            }
            r.emit(&json!({
                "label": curve.label, "eps": curve.eps, "fit": curve.fit, "points": curve.points,
                "seed": curve.seed, "saturated": curve.saturated, "p_predicted": curve.p_predicted,
            }))?;
            r.flagged = curve.saturated;
            r.summary = format!(
                "slope {:.3} +- {:.3} (p = {:?}){}",
                curve.fit.slope,
                curve.fit.stderr,
                curve.p_predicted,
                if curve.saturated { ", saturated" } else { "" }
            );
        }
        (_, [n]) => {
            let scaling = eps_scaling_check(&sample, &eps, *n, opts)?;
            for row in &scaling.rows {
                r.emit(&json!({"eps": row.eps, "n": n, "spanning": row.spanning}))?;
            }
            r.emit(&json!({"n": n, "fit": scaling.fit, "target": scaling.target, "saturated": scaling.saturated, "seed": seed}))?;
            r.flagged = scaling.saturated;
            r.summary = format!(
                "eps slope {:.3} +- {:.3} (target {:?}){}",
                scaling.fit.slope,
                scaling.fit.stderr,
                scaling.target,
                if scaling.saturated { ", saturated" } else { "" }
            );
        }
        _ => {
            return Err(Error::Config(
                "give either one eps with an n grid or several eps with one n".into(),
            ))
        }
    }
    Ok(())
}

fn volume_cmd(a: &VolumeArgs, seed: u64, workers: usize, r: &mut Report) -> Result<()> {
    let m = parse_matrix(&a.matrix)?;
    let norm: Norm = a.norm.parse()?;
    let region = match a.region.as_str() {
        "parallelepiped" => Region::Parallelepiped,
        "unit" => Region::Unit,
        other => return Err(Error::Config(format!("unknown region {other:?}"))),
    };
    let grid = parse_grid(&a.n)?;
    let fit = volume_exponent_fit_with(&m, &grid, norm, a.samples, seed, SamplerOptions { region, workers })?;
    for e in &fit.per_n {
        r.emit(&json!({"n": e.n, "estimate": e.estimate, "stderr": e.stderr, "samples": e.samples, "seed": e.seed}))?;
    }
    r.emit(&json!({"slope": fit.slope, "stderr": fit.stderr, "p_predicted": fit.p_predicted, "norm": norm}))?;
    r.summary = format!("volume slope {:.3} +- {:.3} (-p = -{})", fit.slope, fit.stderr, fit.p_predicted);
    Ok(())
}

fn subshift_cmd(a: &SubshiftArgs, seed: Option<u64>, r: &mut Report) -> Result<()> {
    let mut spec: SubshiftSpec = a.spec.parse()?;
    if let Some(p) = a.prefix {
        spec = spec.with_prefix(p);
    }
    let table = complexity(&spec, a.nmax)?;
    for row in &table.rows {
        r.emit(row)?;
    }
    let stable = table.all_stable();
    let mh = if stable { Some(morse_hedlund_check(&table)?) } else { None };
    let nil = if a.nmax >= 4 { Some(nilfactor_verdict(&table, a.s)?) } else { None };
    r.emit(&json!({"prefix": table.prefix, "all_stable": stable, "morse_hedlund": mh, "nilfactor": nil}))?;
    r.flagged = !stable;
    r.summary = format!("C({}) = {}, stable: {stable}", a.nmax, table.rows.last().map_or(0, |t| t.count));
    if let Some(eps) = a.transfer_eps {
        let opts = TransferOptions {
            seed: require_seed(seed)?,
            ..TransferOptions::default()
        };
        let report = factor_transfer_check(&spec, eps, &parse_grid(&a.transfer_n)?, opts)?;
        r.emit(&report)?;
        r.flagged |= !report.holds();
        r.summary += &format!(", transfer L = {} holds: {}", report.window, report.holds());
    }
    Ok(())
}

fn recurrence_cmd(a: &RecurrenceArgs, r: &mut Report) -> Result<()> {
    let alpha = parse_real(&a.alpha)?;
    let sys = RotationSystem::new(alpha, &parse_arcs(&a.set)?)?;
    let (report, polys) = match &a.polys {
        Some(p) => {
            let polys = parse_polys(p)?;
            (polynomial_scan(&sys, &polys, a.eps, a.n_max)?, polys)
        }
        None => {
            let rep = syndetic_scan(&sys, a.k, a.eps, a.n_max)?;
            let polys: Vec<Poly> = rep.shifts.clone();
            (rep, polys)
        }
    };
    r.emit(&report)?;
    if a.discrepancy {
        r.emit(&weyl_discrepancy(&polys, alpha, a.n_max)?)?;
    }
    r.flagged = !report.pass;
    r.summary = format!(
        "{} hits of {}, max gap {}, pass: {}",
        report.hits.len(),
        a.n_max + 1,
        report.max_gap,
        report.pass
    );
    Ok(())
}

fn spectrum_cmd(a: &SpectrumArgs, r: &mut Report) -> Result<()> {
    let sys = parse_system(&a.system)?;
    let mut x0 = NilPoint::identity(sys.size())?;
    for _ in 0..a.burn {
        x0 = sys.translate(&x0);
    }
    let n_avg = a.n_avg.unwrap_or(100 * a.nmax);
    let ab = correlation_sequence(&sys, Observable::Abelian, &x0, n_avg, a.nmax)?;
    let ve = correlation_sequence(&sys, Observable::Vertical, &x0, n_avg, a.nmax)?;
    for n in 0..=a.nmax {
        r.emit(&json!({"n": n, "abelian": ab.values[n], "vertical": ve.values[n]}))?;
    }
    let report = spectrum_verdict(&ab, &ve)?;
    r.emit(&report)?;
    r.flagged = report.verdict == SpectralVerdict::Inconclusive;
    r.summary = format!(
        "recurrence {:.3}, decay {:.3}: {:?}",
        report.recurrence_score, report.decay_score, report.verdict
    );
    if a.stability {
        for kind in [Observable::Abelian, Observable::Vertical] {
            let check = birkhoff_stability(&sys, kind, &x0, n_avg, a.nmax)?;
            r.emit(&json!({"observable": kind, "birkhoff": check}))?;
            r.flagged |= check.flagged;
        }
    }
    Ok(())
}

fn xcheck_cmd(a: &XcheckArgs, seed: u64, opts: GreedyOptions, r: &mut Report) -> Result<()> {
    let sys = parse_system(&a.system)?;
    let profile = system_profile(&sys, DEFAULT_RANK_TOL)?;
    r.emit(&dimension_record(&sys, DEFAULT_RANK_TOL)?)?;
    let grid = parse_grid(&a.n)?;
    let sample = build_sample(sys, a.points, &parse_domain(&a.domain)?, seed)?;
    let curve = growth_exponent(&sample, a.eps, &grid, opts)?;
    let tubes = tube_volume_cross_check(&sample, a.eps, &grid, a.samples, seed, opts)?;
    for row in &tubes {
        r.emit(row)?;
    }
    let products: Vec<f64> = tubes.iter().map(|t| t.product).collect();
    let spread = products.iter().cloned().fold(0.0, f64::max) / products.iter().cloned().fold(f64::INFINITY, f64::min);
    r.emit(&json!({
        "p": profile.p, "slope": curve.fit.slope, "stderr": curve.fit.stderr,
        "saturated": curve.saturated, "product_spread": spread, "seed": seed,
    }))?;
    r.flagged = curve.saturated;
    r.summary = format!(
        "p = {}, fitted slope {:.3}, tube-count product spread {:.2}",
        profile.p, curve.fit.slope, spread
    );
    Ok(())
}

fn execute(cli: &Cli) -> Result<Report> {
    let mut r = Report::new();
    let opts = GreedyOptions { workers: cli.workers.max(1) };
    match &cli.command {
        Command::Dimension(a) => dimension(a, &mut r)?,
        Command::Complexity(a) => complexity_cmd(a, require_seed(cli.seed)?, opts, &mut r)?,
        Command::Volume(a) => volume_cmd(a, require_seed(cli.seed)?, cli.workers.max(1), &mut r)?,
        Command::Subshift(a) => subshift_cmd(a, cli.seed, &mut r)?,
        Command::Recurrence(a) => recurrence_cmd(a, &mut r)?,
        Command::Spectrum(a) => spectrum_cmd(a, &mut r)?,
        Command::Xcheck(a) => xcheck_cmd(a, require_seed(cli.seed)?, opts, &mut r)?,
    }
    Ok(r)
}

/// Reads `key=value` lines into `--key value` arguments.
pub fn config_args(text: &str) -> Result<(Option<String>, Vec<String>)> {
    let mut command = None;
    let mut args = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key=value", i + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if k == "command" {
            command = Some(v.to_string());
            continue;
        }
        match v {
            "true" => args.push(format!("--{k}")),
            "false" => {}
            _ => {
                args.push(format!("--{k}"));
                args.push(v.to_string());
            }
        }
    }
    Ok((command, args))
}

/// Splices a config file, when one is named, in front of the command-line flags.
fn expand_args(raw: Vec<String>) -> Result<Vec<String>> {
    let mut config = None;
    for (i, a) in raw.iter().enumerate() {
        if let Some(p) = a.strip_prefix("--config=") {
            config = Some(p.to_string());
        } else if a == "--config" {
            config = raw.get(i + 1).cloned();
        }
    }
    let Some(path) = config else { return Ok(raw) };
    let (cmd, extra) = config_args(&fs::read_to_string(&path)?)?;
    let mut rest: Vec<String> = raw[1..].to_vec();
    let pos = rest.iter().position(|a| COMMANDS.contains(&a.as_str()));
    let sub = match pos {
        Some(p) => rest.remove(p),
        None => cmd.ok_or_else(|| Error::Config("no subcommand given".into()))?,
    };
    let mut out = vec![raw[0].clone(), sub];
    out.extend(extra);
    out.extend(rest);
    Ok(out)
}

fn write_output(cli: &Cli, argv: &[String], report: &Report, wall: f64) -> Result<()> {
    let mut body = String::new();
    for l in &report.lines {
        body.push_str(l);
        body.push('\n');
    }
    match &cli.out {
        Some(path) => {
            fs::write(path, &body)?;
            let manifest = json!({
                "config": serde_json::to_value(cli)?,
                "argv": argv,
                "seed_env": std::env::var(SEED_ENV).ok(),
                "versions": {"nilcomplex": env!("CARGO_PKG_VERSION")},
                "wall_time_s": wall,
                "flagged": report.flagged,
            });
            fs::write(manifest_path(path), serde_json::to_string_pretty(&manifest)? + "\n")?;
        }
        None => io::stdout().lock().write_all(body.as_bytes())?,
    }
    Ok(())
}

/// `<out>.manifest.json`.
pub fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

/// Parses, runs and reports; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let raw: Vec<String> = args.into_iter().map(|a| a.into().to_string_lossy().into_owned()).collect();
    let argv = match expand_args(raw) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let start = Instant::now();
    let report = match execute(&cli) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    if let Err(e) = write_output(&cli, &argv, &report, start.elapsed().as_secs_f64()) {
        eprintln!("error: {e}");
        return 1;
    }
    eprintln!("{}", report.summary);
    if report.flagged {
        2
    } else {
        0
    }
}
