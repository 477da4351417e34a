//! Weighted-norm apparatus around a bubble tree: the weight `Ψ`, the norms
//! `‖·‖_*` and `‖·‖_{**,η}`, the `η` sequences, and numerical checks of the
//! Giraud-type convolution estimates.
//!
//! Every `max over Ω` is a max over a seeded stratified grid (see
//! [`crate::bubbletree::domain_samples`]); every integral goes through the
//! importance-sampled engine with the kernel singularity and bubble peaks
//! declared.

use crate::bubbletree::{classify, domain_samples, eta3_parts, stratified_samples, TreeConfig};
use crate::error::{Error, Result};
use crate::jet::JetProvider;
use crate::quad::{integrate_qmc, Ball, Domain, QmcOptions, QuadratureResult, Shape};
use crate::util::dist;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// `2♯ − 2 = 4k/(n − 2k)`.
fn crit_minus_two(cfg: &TreeConfig) -> f64 {
    4.0 * cfg.k as f64 / (cfg.n - 2 * cfg.k) as f64
}

/// `Ψ(y) = Σ_i θ_i^{2−2k} B^i + Σ_{i≠j} (B^j)^{2♯−2} B^i`, the second sum over
/// indices from 0 when `include_u0` is set.
pub fn psi_weight(cfg: &TreeConfig, y: &[f64]) -> f64 {
    let nb = cfg.len();
    let p = crit_minus_two(cfg);
    let first = if cfg.include_u0 { 0 } else { 1 };
    let b: Vec<f64> = (first..=nb).map(|i| cfg.b(i, y)).collect();
    let mut total = 0.0;
    for i in 1..=nb {
        let bi = cfg.bubble(i);
        total += (bi.mu + dist(y, &bi.center)).powi(2 - 2 * cfg.k as i32) * cfg.b(i, y);
    }
    for (j, bj) in b.iter().enumerate() {
        let pj = bj.powf(p);
        for (i, bi) in b.iter().enumerate() {
            if i != j {
                total += pj * bi;
            }
        }
    }
    total
}

/// `1 + Σ_i θ_i^{−l} B^i`, the denominator of `‖·‖_*`.
pub fn star_weight(cfg: &TreeConfig, l: usize, y: &[f64]) -> f64 {
    1.0 + (1..=cfg.len()).map(|i| cfg.weight(i, l, y)).sum::<f64>()
}

/// Denominator of `‖·‖_{**,η}`: `Ψ + η Σ_{i≥0} (B^i)^{2♯−1}`.
pub fn starstar_weight(cfg: &TreeConfig, eta: f64, y: &[f64]) -> f64 {
    let p = crit_minus_two(cfg) + 1.0;
    let peaks = 1.0 + (1..=cfg.len()).map(|i| cfg.b(i, y).powf(p)).sum::<f64>();
    psi_weight(cfg, y) + eta * peaks
}

/// A configuration with its evaluation grid and `η`.
#[derive(Clone, Debug)]
pub struct WeightProfile {
    pub cfg: TreeConfig,
    pub grid: Vec<Vec<f64>>,
    pub eta: f64,
}

impl WeightProfile {
    /// Stratified grid of roughly `count` points; larger counts give
    /// supersets for the same seed.
    pub fn new(cfg: TreeConfig, count: usize, seed: u64, eta: f64) -> Result<Self> {
        cfg.validate()?;
        if !(eta > 0.0) {
            return Err(Error::Parameter("η must be positive".into()));
        }
        let grid = domain_samples(&cfg, count, seed);
        if grid.is_empty() {
            return Err(Error::Parameter("empty grid".into()));
        }
        Ok(Self { cfg, grid, eta })
    }

    pub fn star_norm(&self, phi: &dyn JetProvider) -> Result<f64> {
        star_norm(phi, &self.cfg, &self.grid)
    }

    pub fn starstar_norm<R: Fn(&[f64]) -> f64 + Sync>(&self, r: R) -> f64 {
        starstar_norm(r, &self.cfg, &self.grid, self.eta)
    }
}

fn grid_max(values: Vec<f64>) -> f64 {
    values.into_iter().fold(0.0, f64::max)
}

/// `max_grid Σ_{l<2k} |∇^l φ|/(1 + Σ θ_i^{−l} B^i)`.
pub fn star_norm(phi: &dyn JetProvider, cfg: &TreeConfig, grid: &[Vec<f64>]) -> Result<f64> {
    let top = 2 * cfg.k - 1;
    if phi.smoothness() < top {
        return Err(Error::Parameter(format!("‖·‖_* needs C^{top} jets")));
    }
    let vals: Result<Vec<f64>> = grid
        .par_iter()
        .map(|y| {
            let j = phi.jet(y, top)?;
            Ok((0..=top)
                .map(|l| j.tensor_norm(l) / star_weight(cfg, l, y))
                .sum())
        })
        .collect();
    Ok(grid_max(vals?))
}

/// `max_grid |R|/(Ψ + η Σ (B^i)^{2♯−1})`.
pub fn starstar_norm<R: Fn(&[f64]) -> f64 + Sync>(
    r: R,
    cfg: &TreeConfig,
    grid: &[Vec<f64>],
    eta: f64,
) -> f64 {
    grid_max(
        grid.par_iter()
            .map(|y| r(y).abs() / starstar_weight(cfg, eta, y))
            .collect(),
    )
}

// ---------------------------------------------------------------------------
// η sequences

#[derive(Clone, Copy, Debug)]
pub struct IntegralOptions {
    pub tol: f64,
    pub seed: u64,
    /// Sampling points per replicate.
    pub points: usize,
    /// Evaluation points for suprema over `x`.
    pub x_points: usize,
}

impl Default for IntegralOptions {
    fn default() -> Self {
        Self {
            tol: 0.05,
            seed: 0,
            points: 1 << 16,
            x_points: 24,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EtaSequences {
    pub eta1: f64,
    pub eta2: f64,
    pub eta3: f64,
    pub eta4: f64,
    pub eta: f64,
}

/// Importance-sampled integral; fails when the replicate spread exceeds
/// `tol·|value|`.
fn integrate<F: Fn(&[f64]) -> f64 + Sync>(
    f: F,
    domain: &Domain,
    opts: IntegralOptions,
) -> Result<QuadratureResult> {
    let res = integrate_qmc(
        f,
        domain,
        QmcOptions {
            points: opts.points,
            replicates: 8,
            seed: opts.seed,
        },
    )?;
    if res.error_estimate > opts.tol * res.value.abs() {
        return Err(Error::Accuracy {
            message: "replicate spread above the requested tolerance".into(),
            partial: res.value,
            estimate: res.error_estimate,
        });
    }
    Ok(res)
}

/// Domain with the bubble peaks declared.
fn peaked_domain(cfg: &TreeConfig) -> Domain {
    let mut d = cfg.domain();
    for b in &cfg.bubbles {
        d = d.with_singularity(b.center.clone(), 0.0, b.mu);
    }
    d
}

/// `‖Ψ‖_{L^{2n/(n+2k)}(Ω)}`.
pub fn eta1(cfg: &TreeConfig, opts: IntegralOptions) -> Result<f64> {
    let q = 2.0 * cfg.n as f64 / (cfg.n + 2 * cfg.k) as f64;
    let f = |y: &[f64]| psi_weight(cfg, y).powf(q);
    let res = integrate(f, &peaked_domain(cfg), opts)?;
    Ok(res.value.powf(1.0 / q))
}

/// Points at which suprema over `x` are taken: centres, shells and a
/// background.
fn x_points(cfg: &TreeConfig, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let pts = domain_samples(cfg, 4 * count, seed);
    let step = (pts.len() / count.max(1)).max(1);
    let mut out: Vec<Vec<f64>> = cfg.bubbles.iter().map(|b| b.center.clone()).collect();
    out.extend(pts.into_iter().step_by(step));
    out
}

/// `∫_Ω |x − y|^{2k−n−l} f(y) dy` with the peaks of the configuration.
fn kernel_integral<F: Fn(&[f64]) -> f64 + Sync>(
    cfg: &TreeConfig,
    x: &[f64],
    l: usize,
    f: F,
    domain: Option<Domain>,
    opts: IntegralOptions,
) -> Result<QuadratureResult> {
    let e = 2 * cfg.k as i32 - cfg.n as i32 - l as i32;
    let g = |y: &[f64]| {
        let d = dist(x, y);
        if d == 0.0 {
            0.0
        } else {
            d.powi(e) * f(y)
        }
    };
    let mut dom = domain.unwrap_or_else(|| peaked_domain(cfg));
    dom = dom.with_singularity(x.to_vec(), (-e) as f64, 0.0);
    integrate(g, &dom, opts)
}

/// `sup_x max_l ∫|x−y|^{2k−n−l}Ψ(y)dy/(1 + Σθ^{−l}B(x))`.
pub fn eta2(cfg: &TreeConfig, opts: IntegralOptions) -> Result<f64> {
    let pts = x_points(cfg, opts.x_points, opts.seed);
    let mut worst: f64 = 0.0;
    for x in &pts {
        for l in 0..2 * cfg.k {
            let v = kernel_integral(cfg, x, l, |y| psi_weight(cfg, y), Some(peaked_domain(cfg)), opts)?;
            worst = worst.max(v.value / star_weight(cfg, l, x));
        }
    }
    Ok(worst)
}

/// `η₃ = η₃⁽¹⁾^m + η₃⁽²⁾^m + max_i (μ^i)^{min((n−2k)/2, 2k, 1)}`, `m = min(n−2k, 4k)`.
pub fn eta3(cfg: &TreeConfig) -> Result<f64> {
    let data = classify(cfg)?;
    let (a, b) = eta3_parts(cfg, &data)?;
    let (n, k) = (cfg.n, cfg.k);
    let m = (n - 2 * k).min(4 * k) as i32;
    let e = ((n - 2 * k) as f64 / 2.0).min(2.0 * k as f64).min(1.0);
    let top = cfg.bubbles.iter().map(|b| b.mu.powf(e)).fold(0.0, f64::max);
    Ok(a.powi(m) + b.powi(m) + top)
}

/// `η₄ = max|ν| + Σ ‖A_l − A_l^∞‖`.
pub fn eta4(nu_max: f64, a_deltas: &[f64]) -> f64 {
    nu_max.abs() + a_deltas.iter().map(|d| d.abs()).sum::<f64>()
}

/// All four sequences and their maximum. `nu_max` defaults to the largest
/// `|ν|` of the configuration.
pub fn eta_sequences(
    cfg: &TreeConfig,
    a_deltas: &[f64],
    nu_max: Option<f64>,
    opts: IntegralOptions,
) -> Result<EtaSequences> {
    let nu = nu_max.unwrap_or_else(|| cfg.nu.iter().map(|t| t.value.abs()).fold(0.0, f64::max));
    let e1 = eta1(cfg, opts)?;
    let e2 = eta2(cfg, opts)?;
    let e3 = eta3(cfg)?;
    let e4 = eta4(nu, a_deltas);
    Ok(EtaSequences {
        eta1: e1,
        eta2: e2,
        eta3: e3,
        eta4: e4,
        eta: e1.max(e2).max(e3).max(e4),
    })
}

// ---------------------------------------------------------------------------
// Giraud's lemma

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GiraudReport {
    /// `Z(x, y)` for the extremal kernels.
    pub z: f64,
    pub error_estimate: f64,
    /// Bound with unit constant.
    pub bound: f64,
    pub ratio: f64,
    /// For `γ = 0` only: the bound without its logarithmic factor.
    pub ratio_without_log: Option<f64>,
}

/// `Z(x,y) = ∫_Ω (μ + |x−z|)^{γ−n}|z−y|^{β−n} dz` against the Giraud bound.
pub fn giraud_verify(
    gamma: f64,
    beta: f64,
    mu: f64,
    x: &[f64],
    y: &[f64],
    domain: &Domain,
    opts: IntegralOptions,
) -> Result<GiraudReport> {
    let n = domain.dim() as f64;
    if !(beta > 0.0 && beta + gamma < n && mu > 0.0 && mu < 1.0) {
        return Err(Error::Parameter(
            "Giraud's lemma needs β > 0, β + γ < n and 0 < μ < 1".into(),
        ));
    }
    if x.len() != domain.dim() || y.len() != domain.dim() {
        return Err(Error::Parameter("dimension mismatch".into()));
    }
    let f = |z: &[f64]| {
        let dy = dist(z, y);
        if dy == 0.0 {
            0.0
        } else {
            (mu + dist(x, z)).powf(gamma - n) * dy.powf(beta - n)
        }
    };
    let dom = domain
        .clone()
        .with_singularity(x.to_vec(), 0.0, mu)
        .with_singularity(y.to_vec(), n - beta, 0.0);
    let res = integrate(f, &dom, opts)?;
    let t = mu + dist(x, y);
    let (bound, no_log) = if gamma < 0.0 {
        (mu.powf(gamma) * t.powf(beta - n), None)
    } else if gamma == 0.0 {
        let plain = t.powf(beta - n);
        (plain * (1.0 + (t / mu).ln().abs()), Some(res.value / plain))
    } else {
        (t.powf(beta + gamma - n), None)
    };
    Ok(GiraudReport {
        z: res.value,
        error_estimate: res.error_estimate,
        bound,
        ratio: res.value / bound,
        ratio_without_log: no_log,
    })
}

// ---------------------------------------------------------------------------
// Convolution estimates around a bubble tree

/// Which convolution estimate to check.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConvolutionKind {
    /// `∫|x−y|^{2k−n−l} θ_i (B^i)^{2♯−1} ≲ μ^i θ_i^{−l} B^i(x)`.
    OrderTwo,
    /// `∫|x−y|^{2k−n−l} (B^i)^{2♯−2} = o(1 + θ_i^{−l} B^i(x))`.
    HoleZero,
    /// `∫_{Ω∖B(x^i, Mμ^i)} |x−y|^{2k−n−l} (B^i)^{2♯−1} ≲ M^{−2k} θ_i^{−l} B^i(x)`.
    Hole { m: f64 },
    /// `(μ^iμ^j)^{(n−2k)/2} ∫ θ_i^{k−n} θ_j^{k−n}` against 1 (`p = None`), or
    /// `(μ^iμ^j)^{(n−2k)/2} ∫ θ_i^{2k−p−n} θ_j^{2k−p−n}` against `(μ^iμ^j)^{k−p}`.
    PairProduct { j: usize, p: Option<usize> },
    /// `∫|x−y|^{2k−n−l} Ψ` against `1 + Σ θ^{−l}B(x)`.
    PsiConvolution,
}

impl ConvolutionKind {
    pub fn name(&self) -> &'static str {
        match self {
            ConvolutionKind::OrderTwo => "order_two",
            ConvolutionKind::HoleZero => "hole_zero",
            ConvolutionKind::Hole { .. } => "hole",
            ConvolutionKind::PairProduct { .. } => "pair_product",
            ConvolutionKind::PsiConvolution => "psi_convolution",
        }
    }
}

/// Evaluation controls: bubble index, derivative orders and points.
#[derive(Clone, Debug)]
pub struct ConvolutionParams {
    pub i: usize,
    pub orders: Vec<usize>,
    /// Points `x`; empty means a stratified default set.
    pub points: Vec<Vec<f64>>,
    pub integral: IntegralOptions,
}

impl ConvolutionParams {
    pub fn new(i: usize, orders: Vec<usize>) -> Self {
        Self {
            i,
            orders,
            points: Vec::new(),
            integral: IntegralOptions::default(),
        }
    }
}

/// One row of a ratio table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub kind: String,
    pub params: String,
    pub mu_or_alpha: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    /// Statistical error of `lhs` (replicate spread) relative to `lhs`.
    pub rel_error: f64,
}

/// Ratios `LHS/RHS` of one estimate for one configuration, one row per
/// point and order (a single row for [`ConvolutionKind::PairProduct`]).
pub fn convolution_bound_verify(
    kind: ConvolutionKind,
    cfg: &TreeConfig,
    params: &ConvolutionParams,
) -> Result<Vec<RatioRow>> {
    let (n, k) = (cfg.n, cfg.k);
    let i = params.i;
    if i == 0 || i > cfg.len() {
        return Err(Error::Parameter(format!("bubble index {i} out of range")));
    }
    if let Some(&l) = params.orders.iter().find(|&&l| l >= 2 * k) {
        return Err(Error::Parameter(format!("order {l} exceeds 2k − 1")));
    }
    let bi = cfg.bubble(i).clone();
    let mu = bi.mu;
    let tag = cfg.family_law.as_ref().map(|l| l.alpha).unwrap_or(mu);
    let p2 = crit_minus_two(cfg);
    let opts = params.integral;
    let points = if params.points.is_empty() {
        let centers = vec![(bi.center.clone(), mu)];
        let mut pts = stratified_samples(&centers, &bi.center, 0.5, 4 * opts.x_points, opts.seed);
        pts.retain(|x| cfg.domain().contains(x));
        let step = (pts.len() / opts.x_points.max(1)).max(1);
        let mut out = vec![pts[0].clone()];
        out.extend(pts.into_iter().skip(1).step_by(step));
        out
    } else {
        params.points.clone()
    };
    let theta_i = |y: &[f64]| mu + dist(y, &bi.center);
    let b_i = |y: &[f64]| cfg.b(i, y);
    let row = |params: String, q: &QuadratureResult, scale: f64, rhs: f64| RatioRow {
        kind: kind.name().into(),
        params,
        mu_or_alpha: tag,
        lhs: scale * q.value,
        rhs,
        ratio: scale * q.value / rhs,
        rel_error: q.error_estimate / q.value.abs(),
    };
    let mut rows = Vec::new();
    match kind {
        ConvolutionKind::PairProduct { j, p } => {
            if j == 0 || j > cfg.len() || j == i {
                return Err(Error::Parameter(format!("second bubble {j} invalid")));
            }
            let bj = cfg.bubble(j).clone();
            let (e, rhs) = match p {
                None => (k as f64 - n as f64, 1.0),
                Some(p) => {
                    if p >= k {
                        return Err(Error::Parameter("p must be below k".into()));
                    }
                    if n <= 4 * k - 2 * p {
                        return Err(Error::Divergent(format!(
                            "the estimate needs n > 4k − 2p = {}",
                            4 * k - 2 * p
                        )));
                    }
                    ((2 * k) as f64 - p as f64 - n as f64, (mu * bj.mu).powi((k - p) as i32))
                }
            };
            let f = |y: &[f64]| {
                (mu + dist(y, &bi.center)).powf(e) * (bj.mu + dist(y, &bj.center)).powf(e)
            };
            let res = integrate(f, &peaked_domain(cfg), opts)?;
            let scale = (mu * bj.mu).powf((n - 2 * k) as f64 / 2.0);
            rows.push(row(format!("i={i} j={j} p={p:?}"), &res, scale, rhs));
        }
        _ => {
            for x in &points {
                for &l in &params.orders {
                    let w = theta_i(x).powi(-(l as i32)) * b_i(x);
                    let (v, rhs) = match kind {
                        ConvolutionKind::OrderTwo => {
                            let v = kernel_integral(cfg, x, l, |y| theta_i(y) * b_i(y).powf(p2 + 1.0), None, opts)?;
                            (v, mu * w)
                        }
                        ConvolutionKind::HoleZero => {
                            let v = kernel_integral(cfg, x, l, |y| b_i(y).powf(p2), None, opts)?;
                            (v, 1.0 + w)
                        }
                        ConvolutionKind::Hole { m } => {
                            if m < 1.0 {
                                return Err(Error::Parameter("M must be ≥ 1".into()));
                            }
                            let outer = match &cfg.domain().shape {
                                Shape::Ball(b) => b.clone(),
                                _ => {
                                    return Err(Error::Unsupported(
                                        "the hole estimate is implemented on balls".into(),
                                    ))
                                }
                            };
                            let hole = Ball::new(bi.center.clone(), m * mu);
                            let dom = Domain::new(Shape::BallMinusBalls {
                                outer,
                                inner: vec![hole],
                            })
                            .with_singularity(bi.center.clone(), 0.0, m * mu);
                            if dist(x, &bi.center) < m * mu {
                                continue;
                            }
                            let v = kernel_integral(cfg, x, l, |y| b_i(y).powf(p2 + 1.0), Some(dom), opts)?;
                            (v, m.powi(-2 * k as i32) * w)
                        }
                        ConvolutionKind::PsiConvolution => {
                            let v = kernel_integral(cfg, x, l, |y| psi_weight(cfg, y), None, opts)?;
                            (v, star_weight(cfg, l, x))
                        }
                        ConvolutionKind::PairProduct { .. } => unreachable!(),
                    };
                    rows.push(row(format!("i={i} l={l} |x-xi|={:.3e}", dist(x, &bi.center)), &v, 1.0, rhs));
                }
            }
        }
    }
    Ok(rows)
}

/// Largest ratio of a table.
pub fn max_ratio(rows: &[RatioRow]) -> f64 {
    rows.iter().map(|r| r.ratio).fold(0.0, f64::max)
}

/// Writes rows as CSV with header `kind,params,mu_or_alpha,lhs,rhs,ratio,rel_error`.
pub fn write_ratio_csv<W: Write>(rows: &[RatioRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
