//! Batch commands behind the `polybubble` binary.
//!
//! Every command takes a resolved [`RunConfig`], writes its reports under
//! `<out>/<command>/` and returns an [`Outcome`]. Files are written to a
//! temporary sibling and renamed, so a report is either complete or absent.

use crate::bubbles::check_decay;
use crate::bubbletree::{
    check_dominance, check_rho_split, classify, comparable_disjointness, epsilon, interaction_sup,
    TreeConfig,
};
use crate::conformal::{
    check_distance_identity, check_laplacian_conjugation, check_norm_invariance,
    check_psi_invariance, phi_inv, Bump, HalfGaussian, InvarianceOptions,
};
use crate::error::{Error, Result};
use crate::greenfn::{check_conformal_relation, green_ball};
use crate::jet::JetProvider;
use crate::pohozaev::{bubble_suite, manufactured_suite, PohozaevOptions, SuiteCase};
use crate::radialgebra::{check_bubble_identity, critical_exponent};
use crate::radialsolver::{Branch, ProblemParams, SolveManifest};
use crate::util::{dist, dot};
use crate::weights::{eta_sequences, IntegralOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::sync::Arc;

/// Environment variable naming the output root when neither the flag nor
/// the config file sets one.
pub const OUT_ENV: &str = "POLYBUBBLE_OUT";
pub const DEFAULT_OUT: &str = "polybubble-out";
pub const DEFAULT_SEED: u64 = 20_240_601;

/// Everything a run needs. Unset fields take the per-command defaults listed
/// in the README; the resolved value is embedded in every report.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<String>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub tol: Option<f64>,
    pub n: Option<usize>,
    pub k: Option<usize>,
    pub p: Option<usize>,
    /// Inclusive `n` range for `bubble-check`.
    pub n_range: Option<(usize, usize)>,
    pub k_range: Option<(usize, usize)>,
    pub pairs: Option<usize>,
    pub suite: Option<String>,
    pub tree: Option<PathBuf>,
    pub alphas: Option<Vec<f64>>,
    pub samples: Option<usize>,
    pub mu_grid: Option<Vec<f64>>,
    pub seed_scales: Option<Vec<f64>>,
    /// Manifest of an earlier `solve` run to repeat.
    pub resume: Option<PathBuf>,
}

macro_rules! overlay {
    ($dst:ident, $src:ident; $($f:ident),*) => {
        $( if $src.$f.is_some() { $dst.$f = $src.$f.clone(); } )*
    };
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("run config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Parameter(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Fields set in `other` win.
    pub fn merge(mut self, other: &RunConfig) -> Self {
        let dst = &mut self;
        overlay!(dst, other; command, out, seed, jobs, tol, n, k, p, n_range, k_range, pairs,
            suite, tree, alphas, samples, mu_grid, seed_scales, resume);
        self
    }

    /// Fills the output root and seed, then checks the fields the command
    /// uses.
    pub fn resolve(mut self) -> Result<Self> {
        if self.out.is_none() {
            self.out = Some(
                std::env::var_os(OUT_ENV)
                    .map(PathBuf::from)
                    .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT)),
            );
        }
        self.seed.get_or_insert(DEFAULT_SEED);
        if let Some(t) = self.tol {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::Parameter(format!("tol must lie in (0, 1), got {t}")));
            }
        }
        if self.jobs == Some(0) {
            return Err(Error::Parameter("jobs must be positive".into()));
        }
        match self.command.as_deref() {
            Some("bubble-check" | "cayley-green" | "tree" | "pohozaev" | "solve") => Ok(self),
            Some(c) => Err(Error::Parameter(format!("unknown command {c:?}"))),
            None => Err(Error::Parameter("no command given".into())),
        }
    }

    fn out_dir(&self) -> PathBuf {
        let root = self.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
        root.join(self.command.as_deref().unwrap_or("run"))
    }

    fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }
}

/// Result of a command that ran to completion.
#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub passed: bool,
    /// Labels of failing cases.
    pub failures: Vec<String>,
    pub files: Vec<PathBuf>,
}

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_ACCURACY: i32 = 3;

/// Exit status for a library error.
pub fn error_exit_code(e: &Error) -> i32 {
    match e {
        Error::Parameter(_) | Error::Parse(_) | Error::Unsupported(_) | Error::Io(_) => EXIT_USAGE,
        Error::Accuracy { .. }
        | Error::NoConvergence { .. }
        | Error::Integration { .. }
        | Error::SingularJacobian { .. }
        | Error::Divergent(_) => EXIT_ACCURACY,
        _ => EXIT_FAIL,
    }
}

pub fn exit_code(r: &Result<Outcome>) -> i32 {
    match r {
        Ok(o) if o.passed => EXIT_PASS,
        Ok(_) => EXIT_FAIL,
        Err(e) => error_exit_code(e),
    }
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::Parameter(format!("bad output path {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

struct Writer {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Writer {
    fn new(cfg: &RunConfig) -> Self {
        Self {
            dir: cfg.out_dir(),
            files: Vec::new(),
        }
    }

    fn put(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        write_atomic(&path, bytes)?;
        self.files.push(path);
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.put(name, text.as_bytes())
    }

    fn csv<R: Serialize>(&mut self, name: &str, rows: &[R]) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r).map_err(|e| Error::Io(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
        self.put(name, &bytes)
    }

    fn finish(self, failures: Vec<String>) -> Outcome {
        Outcome {
            passed: failures.is_empty(),
            failures,
            files: self.files,
        }
    }
}

#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    config: &'a RunConfig,
    passed: bool,
    failures: &'a [String],
    results: T,
}

/// Runs the command named in `cfg`, using a local thread pool when `jobs`
/// is set.
pub fn run(cfg: &RunConfig) -> Result<Outcome> {
    let cfg = cfg.clone().resolve()?;
    match cfg.jobs {
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build()
            .map_err(|e| Error::Parameter(e.to_string()))?
            .install(|| dispatch(&cfg)),
        None => dispatch(&cfg),
    }
}

fn dispatch(cfg: &RunConfig) -> Result<Outcome> {
    match cfg.command.as_deref() {
        Some("bubble-check") => cmd_bubble_check(cfg),
        Some("cayley-green") => cmd_cayley_green(cfg),
        Some("tree") => cmd_tree(cfg),
        Some("pohozaev") => cmd_pohozaev(cfg),
        Some("solve") => cmd_solve(cfg),
        _ => unreachable!("resolve rejects other commands"),
    }
}

// ---------------------------------------------------------------------------
// bubble-check

pub const CHECK_RADII: [f64; 5] = [0.0, 0.5, 1.0, 2.0, 10.0];
pub const DECAY_RADII: [f64; 5] = [1e3, 3e3, 1e4, 3e4, 1e5];
pub const DECAY_TOL: f64 = 0.05;

#[derive(Clone, Debug, Serialize)]
pub struct BubbleCase {
    pub n: usize,
    pub k: usize,
    pub exact: bool,
    /// `(r, |(−Δ)^k B − B^{2♯−1}| / B^{2♯−1})`.
    pub numeric: Vec<(f64, f64)>,
    /// `(l, slope, expected)`.
    pub decay: Vec<(usize, f64, f64)>,
    pub passed: bool,
}

/// Relative PDE residual of the standard bubble at radius `r`.
///
/// Writing a radial function as `g(s)` with `s = r²` turns the Laplacian
/// into `4s g'' + 2n g'`, which is regular at the origin; the operator is
/// applied `k` times to the Taylor series of `g` about `s = r²`.
pub fn bubble_pde_residual(n: usize, k: usize, r: f64) -> Result<f64> {
    crate::bubbles::check_dims(n, k)?;
    let a = crate::bubbles::bubble_a(n, k);
    let w = crate::bubbles::half_weight(n, k);
    let s0 = r * r;
    let c = 1.0 + a * s0;
    // (1 + a s)^{−w} = c^{−w} Σ_j C(−w, j) (a h/c)^j with h = s − s0
    let mut g = Vec::with_capacity(2 * k + 1);
    let mut coef = c.powf(-w);
    for j in 0..=2 * k {
        g.push(coef);
        coef *= (-w - j as f64) / (j as f64 + 1.0) * (a / c);
    }
    let nf = n as f64;
    for _ in 0..k {
        g = (0..g.len() - 2)
            .map(|j| {
                let j1 = j as f64 + 1.0;
                -(4.0 * s0 * (j1 + 1.0) * j1 * g[j + 2] + (4.0 * j as f64 + 2.0 * nf) * j1 * g[j + 1])
            })
            .collect();
    }
    let rhs = c.powf(-w * (critical_exponent(n as u32, k as u32) - 1.0));
    Ok((g[0] - rhs).abs() / rhs)
}

pub fn bubble_case(n: usize, k: usize, tol: f64) -> Result<BubbleCase> {
    let exact = check_bubble_identity(n as u32, k as u32)?.passed;
    let numeric = CHECK_RADII
        .iter()
        .map(|&r| bubble_pde_residual(n, k, r).map(|e| (r, e)))
        .collect::<Result<Vec<_>>>()?;
    let decay = (0..2 * k)
        .map(|l| check_decay(n, k, l, &DECAY_RADII).map(|d| (l, d.slope, d.expected)))
        .collect::<Result<Vec<_>>>()?;
    let passed = exact
        && numeric.iter().all(|(_, e)| *e < tol)
        && decay.iter().all(|(_, s, x)| (s - x).abs() < DECAY_TOL);
    Ok(BubbleCase {
        n,
        k,
        exact,
        numeric,
        decay,
        passed,
    })
}

fn bubble_cases(cfg: &RunConfig) -> Result<Vec<(usize, usize)>> {
    if let (Some(n), Some(k)) = (cfg.n, cfg.k) {
        if k == 0 || n <= 2 * k {
            return Err(Error::Parameter(format!("need n > 2k ≥ 2, got n = {n}, k = {k}")));
        }
        return Ok(vec![(n, k)]);
    }
    let (k0, k1) = cfg.k_range.unwrap_or((1, 4));
    let (n0, n1) = cfg.n_range.unwrap_or((3, 12));
    let mut out = Vec::new();
    for k in k0.max(1)..=k1 {
        for n in n0.max(2 * k + 1)..=n1 {
            out.push((n, k));
        }
    }
    if out.is_empty() {
        return Err(Error::Parameter("the (n, k) ranges contain no case with n > 2k".into()));
    }
    Ok(out)
}

pub fn cmd_bubble_check(cfg: &RunConfig) -> Result<Outcome> {
    use rayon::prelude::*;
    let mut cfg = cfg.clone();
    let tol = *cfg.tol.get_or_insert(1e-9);
    let cases = bubble_cases(&cfg)?
        .into_par_iter()
        .map(|(n, k)| bubble_case(n, k, tol))
        .collect::<Result<Vec<_>>>()?;
    let failures: Vec<String> = cases
        .iter()
        .filter(|c| !c.passed)
        .map(|c| format!("n={} k={}", c.n, c.k))
        .collect();
    let mut w = Writer::new(&cfg);
    w.json(
        "report.json",
        &Report {
            config: &cfg,
            passed: failures.is_empty(),
            failures: &failures,
            results: &cases,
        },
    )?;
    Ok(w.finish(failures))
}

// ---------------------------------------------------------------------------
// cayley-green

/// One row of the residual table.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResidualRow {
    pub check: String,
    pub n: usize,
    pub k: usize,
    pub count: usize,
    pub max_residual: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl ResidualRow {
    fn new(check: &str, n: usize, k: usize, values: &[f64], threshold: f64) -> Self {
        let max_residual = values.iter().copied().fold(0.0, f64::max);
        Self {
            check: check.into(),
            n,
            k,
            count: values.len(),
            max_residual,
            threshold,
            passed: values.iter().all(|v| v.is_finite()) && max_residual < threshold,
        }
    }
}

/// Uniform points in the ball of radius `r`.
pub fn random_ball_points(n: usize, r: f64, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-r..r)).collect();
        if dot(&x, &x) < r * r {
            out.push(x);
        }
    }
    out
}

/// Pairs of distinct points of the ball of radius 0.95, at least 1e-3 apart.
pub fn random_pairs(n: usize, count: usize, seed: u64) -> Vec<(Vec<f64>, Vec<f64>)> {
    let pts = random_ball_points(n, 0.95, 4 * count + 8, seed);
    pts.chunks(2)
        .filter(|c| dist(&c[0], &c[1]) > 1e-3)
        .take(count)
        .map(|c| (c[0].clone(), c[1].clone()))
        .collect()
}

/// Thresholds of the cayley-green suite.
pub const DISTANCE_TOL: f64 = 1e-12;
pub const GREEN_TOL: f64 = 1e-10;
pub const INVARIANCE_TOL: f64 = 1e-5;
pub const CONJUGATION_TOL: f64 = 1e-9;

/// The two half-space profiles of the invariance checks, both axisymmetric
/// about the `x_1` axis and vanishing to order `k` on the boundary.
pub fn invariance_profiles(n: usize, k: usize) -> Vec<(String, Arc<dyn JetProvider>)> {
    let mut c = vec![0.0; n];
    c[0] = 1.0;
    vec![
        (
            "bump".into(),
            Arc::new(Bump {
                center: c.clone(),
                radius: 0.9,
            }),
        ),
        ("half-gaussian".into(), Arc::new(HalfGaussian { center: c, power: k })),
    ]
}

pub fn cayley_green_rows(n: usize, k: usize, pairs: usize, seed: u64, quad_tol: f64) -> Result<Vec<ResidualRow>> {
    use rayon::prelude::*;
    if pairs == 0 {
        return Err(Error::Parameter("pairs = 0 leaves the residual table empty".into()));
    }
    if k == 0 || n <= 2 * k {
        return Err(Error::Parameter(format!("need n > 2k ≥ 2, got n = {n}, k = {k}")));
    }
    let pts = random_pairs(n, pairs, seed);
    let collect = |f: &(dyn Fn(&[f64], &[f64]) -> Result<f64> + Sync)| -> Result<Vec<f64>> {
        pts.par_iter().map(|(x, y)| f(x, y)).collect()
    };
    let mut rows = vec![
        ResidualRow::new("distance", n, k, &collect(&|x, y| check_distance_identity(x, y))?, DISTANCE_TOL),
        ResidualRow::new("psi", n, k, &collect(&|x, y| check_psi_invariance(x, y))?, GREEN_TOL),
        ResidualRow::new(
            "green-conformal",
            n,
            k,
            &collect(&|x, y| check_conformal_relation(x, y, n, k))?,
            GREEN_TOL,
        ),
    ];
    if k == 1 {
        // G = (|x−y|^{2−n} − (|x||y − x*|)^{2−n})/(n − 2) with x* = x/|x|²
        let classical = collect(&|x, y| {
            let g = green_ball(x, y, n, 1)?.value;
            let mirror = (dist(x, y).powi(2) + (1.0 - dot(x, x)) * (1.0 - dot(y, y))).sqrt();
            let e = 2.0 - n as f64;
            let c = (dist(x, y).powf(e) - mirror.powf(e)) / (n as f64 - 2.0);
            Ok((g - c).abs() / c)
        })?;
        rows.push(ResidualRow::new("green-classical", n, 1, &classical, GREEN_TOL));
    }
    let opts = InvarianceOptions {
        tol: quad_tol,
        r_max: 8.0,
        axisymmetric: true,
    };
    for (name, u) in invariance_profiles(n, k) {
        let (norm_check, energy_check) = check_norm_invariance(u.clone(), n, k, opts)?;
        rows.push(ResidualRow::new(
            &format!("norm-invariance {name}"),
            n,
            k,
            &[norm_check.rel_error],
            INVARIANCE_TOL,
        ));
        rows.push(ResidualRow::new(
            &format!("energy-invariance {name}"),
            n,
            k,
            &[energy_check.rel_error],
            INVARIANCE_TOL,
        ));
        // pointwise conjugation where the pulled-back profile is alive
        let mut x = vec![0.0; n];
        x[0] = 1.0;
        x[1] = 0.2;
        let c = check_laplacian_conjugation(u, k, &phi_inv(&x)?)?;
        rows.push(ResidualRow::new(
            &format!("laplacian-conjugation {name}"),
            n,
            k,
            &[c.residual / c.rhs.abs().max(1.0)],
            CONJUGATION_TOL,
        ));
    }
    Ok(rows)
}

pub fn cmd_cayley_green(cfg: &RunConfig) -> Result<Outcome> {
    let mut cfg = cfg.clone();
    let n = *cfg.n.get_or_insert(3);
    let k = *cfg.k.get_or_insert(1);
    let pairs = *cfg.pairs.get_or_insert(1000);
    let tol = *cfg.tol.get_or_insert(1e-6);
    let rows = cayley_green_rows(n, k, pairs, cfg.seed(), tol)?;
    let failures: Vec<String> = rows.iter().filter(|r| !r.passed).map(|r| r.check.clone()).collect();
    let mut w = Writer::new(&cfg);
    w.json(
        "report.json",
        &Report {
            config: &cfg,
            passed: failures.is_empty(),
            failures: &failures,
            results: &rows,
        },
    )?;
    w.csv("residuals.csv", &rows)?;
    Ok(w.finish(failures))
}

// ---------------------------------------------------------------------------
// tree

#[derive(Clone, Debug, Serialize)]
struct DominanceRow {
    alpha: f64,
    i: usize,
    l: usize,
    constant: f64,
    samples: usize,
}

#[derive(Clone, Debug, Serialize)]
struct InteractionRow {
    alpha: f64,
    i: usize,
    lhs: f64,
    bound: f64,
    ratio: f64,
    samples: usize,
}

#[derive(Clone, Debug, Serialize)]
struct RhoRow {
    alpha: f64,
    i: usize,
    j: usize,
    l: usize,
    inside_min: f64,
    outside_max: f64,
}

#[derive(Clone, Debug, Serialize)]
struct EtaRow {
    alpha: f64,
    eta1: Option<f64>,
    eta2: Option<f64>,
    eta3: Option<f64>,
    eta4: Option<f64>,
    eta: Option<f64>,
    error: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
struct TreeSnapshot {
    alpha: Option<f64>,
    min_epsilon: Option<f64>,
    disjoint: bool,
    influence: crate::bubbletree::InfluenceData,
}

pub fn cmd_tree(cfg: &RunConfig) -> Result<Outcome> {
    let path = cfg
        .tree
        .as_ref()
        .ok_or_else(|| Error::Parameter("tree needs a configuration file".into()))?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Parameter(format!("cannot read {}: {e}", path.display())))?;
    let base = TreeConfig::from_json(&text)?;
    let mut cfg = cfg.clone();
    let samples = *cfg.samples.get_or_insert(3000);
    let seed = cfg.seed();
    let configs: Vec<(Option<f64>, TreeConfig)> = if base.family_law.is_some() {
        cfg.alphas
            .get_or_insert_with(|| vec![1e2, 1e3, 1e4])
            .clone()
            .into_iter()
            .map(|a| base.at_alpha(a).map(|c| (Some(a), c)))
            .collect::<Result<_>>()?
    } else {
        vec![(None, base.clone())]
    };
    let (mut snaps, mut dom, mut inter, mut rho, mut etas) =
        (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut failures = Vec::new();
    for (alpha, c) in &configs {
        let a = alpha.unwrap_or(f64::NAN);
        let tag = alpha.map_or("snapshot".to_string(), |a| format!("alpha={a:e}"));
        let data = classify(c)?;
        let nb = c.len();
        let mut min_eps: Option<f64> = None;
        for i in 1..=nb {
            for j in i + 1..=nb {
                let e = epsilon(c, i, j)?;
                min_eps = Some(min_eps.map_or(e, |m: f64| m.min(e)));
            }
        }
        if min_eps.is_some_and(|e| e < 2.0) {
            failures.push(format!("{tag}: epsilon below 2"));
        }
        let disjoint = comparable_disjointness(c, &data).iter().all(|d| d.disjoint());
        if !disjoint {
            failures.push(format!("{tag}: comparable balls overlap"));
        }
        for i in 1..=nb {
            for l in 0..=1 {
                let r = check_dominance(c, &data, i, l, samples)?;
                if !r.constant.is_finite() {
                    failures.push(format!("{tag}: dominance constant of bubble {i} not finite"));
                }
                dom.push(DominanceRow {
                    alpha: a,
                    i,
                    l,
                    constant: r.constant,
                    samples: r.samples,
                });
                for &j in &data.get(i).b {
                    let s = check_rho_split(c, &data, i, j, l, samples)?;
                    rho.push(RhoRow {
                        alpha: a,
                        i,
                        j,
                        l,
                        inside_min: s.inside_min,
                        outside_max: s.outside_max,
                    });
                }
            }
            let r = interaction_sup(c, &data, i, samples)?;
            if !r.ratio.is_finite() {
                failures.push(format!("{tag}: interaction ratio of bubble {i} not finite"));
            }
            inter.push(InteractionRow {
                alpha: a,
                i,
                lhs: r.lhs,
                bound: r.bound,
                ratio: r.ratio,
                samples: r.samples,
            });
        }
        let opts = IntegralOptions {
            seed,
            x_points: 8,
            ..Default::default()
        };
        // η₁, η₂ are sampled; a missed sampling tolerance is reported, not fatal
        etas.push(match eta_sequences(c, &[], None, opts) {
            Ok(e) => EtaRow {
                alpha: a,
                eta1: Some(e.eta1),
                eta2: Some(e.eta2),
                eta3: Some(e.eta3),
                eta4: Some(e.eta4),
                eta: Some(e.eta),
                error: None,
            },
            Err(e) => EtaRow {
                alpha: a,
                eta1: None,
                eta2: None,
                eta3: None,
                eta4: None,
                eta: None,
                error: Some(e.to_string()),
            },
        });
        snaps.push(TreeSnapshot {
            alpha: *alpha,
            min_epsilon: min_eps,
            disjoint,
            influence: data,
        });
    }
    let mut w = Writer::new(&cfg);
    w.json(
        "report.json",
        &Report {
            config: &cfg,
            passed: failures.is_empty(),
            failures: &failures,
            results: &snaps,
        },
    )?;
    w.csv("dominance.csv", &dom)?;
    w.csv("interaction.csv", &inter)?;
    w.csv("rho_split.csv", &rho)?;
    w.csv("eta.csv", &etas)?;
    Ok(w.finish(failures))
}

// ---------------------------------------------------------------------------
// pohozaev

pub fn pohozaev_cases(cfg: &RunConfig) -> Result<Vec<SuiteCase>> {
    let only = match (cfg.n, cfg.k) {
        (Some(n), Some(k)) => Some((n, k)),
        (None, None) => None,
        _ => return Err(Error::Parameter("give both n and k, or neither".into())),
    };
    let opts = PohozaevOptions {
        rel_tol: cfg.tol.unwrap_or(PohozaevOptions::default().rel_tol),
        ..Default::default()
    };
    match cfg.suite.as_deref().unwrap_or("manufactured") {
        "manufactured" => manufactured_suite(only, opts),
        "bubble" => bubble_suite(only, opts),
        other => Err(Error::Parameter(format!(
            "unknown suite {other:?} (expected manufactured or bubble)"
        ))),
    }
}

pub fn cmd_pohozaev(cfg: &RunConfig) -> Result<Outcome> {
    let mut cfg = cfg.clone();
    cfg.suite.get_or_insert_with(|| "manufactured".into());
    cfg.tol.get_or_insert(PohozaevOptions::default().rel_tol);
    let cases = pohozaev_cases(&cfg)?;
    let failures: Vec<String> = cases.iter().filter(|c| !c.passed()).map(|c| c.label.clone()).collect();
    let mut w = Writer::new(&cfg);
    w.json(
        "report.json",
        &Report {
            config: &cfg,
            passed: failures.is_empty(),
            failures: &failures,
            results: &cases,
        },
    )?;
    Ok(w.finish(failures))
}

// ---------------------------------------------------------------------------
// solve

/// Default branch toward the critical coefficient for `n = 7, k = 1, p = 0`.
pub const DEFAULT_MU_GRID: [f64; 5] = [-0.5, -0.25, -0.1, -0.05, -0.02];
pub const DEFAULT_SEED_SCALES: [f64; 3] = [0.3, 0.1, 0.05];

/// `manifest.json` of a solve run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolveRecord {
    pub config: RunConfig,
    pub solver: SolveManifest,
    pub passed: bool,
}

fn solve_manifest(cfg: &RunConfig) -> Result<SolveManifest> {
    if let Some(path) = &cfg.resume {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Parameter(format!("cannot read {}: {e}", path.display())))?;
        let rec: SolveRecord = serde_json::from_str(&text)?;
        let mut m = rec.solver;
        m.points = 0;
        m.lost_at = None;
        m.scaling_slope = None;
        return Ok(m);
    }
    let (n, k, p) = (cfg.n.unwrap_or(7), cfg.k.unwrap_or(1), cfg.p.unwrap_or(0));
    let grid = match &cfg.mu_grid {
        Some(g) => g.clone(),
        None if (n, k, p) == (7, 1, 0) => DEFAULT_MU_GRID.to_vec(),
        None => return Err(Error::Parameter(format!("no default μ grid for n={n} k={k} p={p}"))),
    };
    let first = *grid.first().ok_or_else(|| Error::Parameter("empty μ grid".into()))?;
    let params = ProblemParams::new(n, k, p, first)?;
    let scales = cfg.seed_scales.clone().unwrap_or_else(|| DEFAULT_SEED_SCALES.to_vec());
    Ok(SolveManifest::new(params, grid, cfg.tol.unwrap_or(1e-10), scales))
}

pub fn branch_csv(branch: &Branch) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    branch.write_csv(&mut buf)?;
    Ok(buf)
}

pub fn cmd_solve(cfg: &RunConfig) -> Result<Outcome> {
    let mut manifest = solve_manifest(cfg)?;
    let mut cfg = cfg.clone();
    cfg.n = Some(manifest.params.n);
    cfg.k = Some(manifest.params.k);
    cfg.p = Some(manifest.params.p);
    cfg.mu_grid = Some(manifest.mu_grid.clone());
    cfg.tol = Some(manifest.rtol);
    cfg.seed_scales = Some(manifest.seed_scales.clone());
    let branch = manifest.run()?;
    let mut failures = Vec::new();
    if let Some(mu) = branch.lost_at {
        failures.push(format!("branch lost at mu = {mu:e}"));
    }
    if !branch.points.windows(2).all(|w| w[1].sup_norm > w[0].sup_norm) {
        failures.push("sup norm not increasing along the grid".into());
    }
    let mut w = Writer::new(&cfg);
    w.put("branch.csv", &branch_csv(&branch)?)?;
    w.json(
        "manifest.json",
        &SolveRecord {
            config: cfg,
            solver: manifest,
            passed: failures.is_empty(),
        },
    )?;
    Ok(w.finish(failures))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::norm;

    #[test]
    fn merge_prefers_overlay() {
        let base = RunConfig::from_json(r#"{"command":"solve","n":9,"tol":1e-8}"#).unwrap();
        let over = RunConfig {
            n: Some(7),
            ..Default::default()
        };
        let m = base.merge(&over);
        assert_eq!((m.n, m.tol, m.command.as_deref()), (Some(7), Some(1e-8), Some("solve")));
        assert!(matches!(RunConfig::from_json(r#"{"bogus":1}"#), Err(Error::Parse(_))));
    }

    #[test]
    fn resolve_checks_fields() {
        let c = |s: &str| RunConfig::from_json(s).unwrap().resolve();
        assert!(c(r#"{"command":"tree","out":"x"}"#).is_ok());
        assert!(c(r#"{"command":"nope"}"#).is_err());
        assert!(c(r#"{"command":"tree","tol":2.0}"#).is_err());
        assert!(c(r#"{"command":"tree","jobs":0}"#).is_err());
        assert_eq!(c(r#"{"command":"tree","out":"x"}"#).unwrap().seed, Some(DEFAULT_SEED));
    }

    #[test]
    fn random_pairs_are_deterministic() {
        let a = random_pairs(5, 20, 7);
        assert_eq!(a, random_pairs(5, 20, 7));
        assert_eq!(a.len(), 20);
        assert!(a.iter().all(|(x, y)| norm(x) < 0.95 && norm(y) < 0.95));
    }

    #[test]
    fn radial_reduction_matches_cartesian_jets() {
        use crate::bubbles::standard_bubble_jet;
        for (n, k) in [(3usize, 1usize), (5, 2), (7, 3)] {
            for r in [0.0, 0.7, 3.0] {
                let mut y = vec![0.0; n];
                y[0] = r;
                let lhs = standard_bubble_jet(n, k, &y, 2 * k).neg_laplacian_pow(k).unwrap().value();
                let b = standard_bubble_jet(n, k, &y, 0).value();
                let rhs = b.powf(critical_exponent(n as u32, k as u32) - 1.0);
                let jet_res = (lhs - rhs).abs() / rhs;
                assert!(jet_res < 1e-11 && bubble_pde_residual(n, k, r).unwrap() < 1e-12);
            }
        }
        assert!(bubble_pde_residual(4, 2, 1.0).is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(error_exit_code(&Error::Parse("x".into())), EXIT_USAGE);
        assert_eq!(
            error_exit_code(&Error::NoConvergence {
                iterations: 1,
                mismatch: 1.0
            }),
            EXIT_ACCURACY
        );
        assert_eq!(error_exit_code(&Error::Ambiguous { i: 1, j: 2, ratio: 1.0 }), EXIT_FAIL);
    }
}
