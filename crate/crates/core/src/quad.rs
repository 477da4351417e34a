//! Volume and surface quadrature on balls, annuli, half-balls and spheres.
//!
//! Three engines, each with an error estimate:
//! * nested product rules (Gauss–Legendre in the radius, a recursive
//!   Gauss–Gegenbauer rule on the sphere) with the difference of two
//!   successive levels as the estimate;
//! * adaptive Gauss–Kronrod for radial integrands, with the substitution
//!   `r = R u^{1/(n−σ)}` flattening a centre singularity `r^{−σ}`;
//! * Owen-scrambled Sobol sampling with importance densities concentrated
//!   at declared singular points, replicated for a statistical estimate.

use crate::error::{Error, Result};
use crate::util::{ball_volume, dist, norm, sphere_area};
use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

/// A ball `B(center, radius)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: Vec<f64>, radius: f64) -> Self {
        Self { center, radius }
    }

    pub fn unit(n: usize) -> Self {
        Self::new(vec![0.0; n], 1.0)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        dist(x, &self.center) < self.radius
    }
}

/// Geometric integration region.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Shape {
    Ball(Ball),
    /// `{x ∈ B(c, R) : x_1 > c_1}`.
    HalfBall(Ball),
    Sphere(Ball),
    BallMinusBalls { outer: Ball, inner: Vec<Ball> },
    /// `B(0, r_max)` or its upper half; `tail_bound` bounds the neglected
    /// exterior contribution and is added to every error estimate.
    TruncatedSpace { n: usize, r_max: f64, half: bool, tail_bound: f64 },
}

/// A point where the integrand is singular like `|x − p|^{−order}` or peaks
/// at length scale `scale`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingularPoint {
    pub point: Vec<f64>,
    pub order: f64,
    #[serde(default)]
    pub scale: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub shape: Shape,
    #[serde(default)]
    pub singular: Vec<SingularPoint>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    DeterministicRadial,
    Qmc,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadratureResult {
    pub value: f64,
    pub error_estimate: f64,
    pub method: Method,
    pub samples_used: usize,
}

impl Domain {
    pub fn new(shape: Shape) -> Self {
        Self {
            shape,
            singular: Vec::new(),
        }
    }

    pub fn unit_ball(n: usize) -> Self {
        Self::new(Shape::Ball(Ball::unit(n)))
    }

    pub fn with_singularity(mut self, point: Vec<f64>, order: f64, scale: f64) -> Self {
        self.singular.push(SingularPoint {
            point,
            order,
            scale,
        });
        self
    }

    pub fn dim(&self) -> usize {
        match &self.shape {
            Shape::Ball(b) | Shape::HalfBall(b) | Shape::Sphere(b) => b.center.len(),
            Shape::BallMinusBalls { outer, .. } => outer.center.len(),
            Shape::TruncatedSpace { n, .. } => *n,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        if n == 0 {
            return Err(Error::Parameter("dimension must be positive".into()));
        }
        let check = |b: &Ball| {
            if b.center.len() != n || b.radius.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater)
            {
                Err(Error::Parameter(format!("invalid ball {b:?}")))
            } else {
                Ok(())
            }
        };
        match &self.shape {
            Shape::Ball(b) | Shape::HalfBall(b) | Shape::Sphere(b) => check(b)?,
            Shape::BallMinusBalls { outer, inner } => {
                check(outer)?;
                for b in inner {
                    check(b)?;
                    if dist(&b.center, &outer.center) + b.radius > outer.radius * (1.0 + 1e-12) {
                        return Err(Error::Parameter(format!(
                            "inner ball {b:?} not inside the outer ball"
                        )));
                    }
                }
            }
            Shape::TruncatedSpace { r_max, .. } => {
                if !(r_max.is_finite() && *r_max > 0.0) {
                    return Err(Error::Parameter("r_max must be finite and positive".into()));
                }
            }
        }
        for s in &self.singular {
            if s.point.len() != n {
                return Err(Error::Parameter("singular point dimension mismatch".into()));
            }
            if s.order >= n as f64 {
                return Err(Error::Divergent(format!(
                    "singularity of order {} is not integrable in dimension {n}",
                    s.order
                )));
            }
        }
        Ok(())
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match &self.shape {
            Shape::Ball(b) => b.contains(x),
            Shape::HalfBall(b) => b.contains(x) && x[0] > b.center[0],
            Shape::Sphere(_) => false,
            Shape::BallMinusBalls { outer, inner } => {
                outer.contains(x) && inner.iter().all(|b| dist(x, &b.center) >= b.radius)
            }
            Shape::TruncatedSpace { r_max, half, .. } => norm(x) < *r_max && (!half || x[0] > 0.0),
        }
    }

    /// Distance from `x` to the boundary.
    pub fn dist_to_boundary(&self, x: &[f64]) -> f64 {
        match &self.shape {
            Shape::Ball(b) | Shape::Sphere(b) => (b.radius - dist(x, &b.center)).abs(),
            Shape::HalfBall(b) => (b.radius - dist(x, &b.center)).min(x[0] - b.center[0]).abs(),
            Shape::BallMinusBalls { outer, inner } => inner
                .iter()
                .map(|b| dist(x, &b.center) - b.radius)
                .fold(outer.radius - dist(x, &outer.center), f64::min)
                .abs(),
            Shape::TruncatedSpace { r_max, half, .. } => {
                let d = r_max - norm(x);
                if *half {
                    d.min(x[0]).abs()
                } else {
                    d.abs()
                }
            }
        }
    }

    fn bounding_ball(&self) -> Ball {
        match &self.shape {
            Shape::Ball(b) | Shape::HalfBall(b) | Shape::Sphere(b) => b.clone(),
            Shape::BallMinusBalls { outer, .. } => outer.clone(),
            Shape::TruncatedSpace { n, r_max, .. } => Ball::new(vec![0.0; *n], *r_max),
        }
    }

    fn tail_bound(&self) -> f64 {
        match &self.shape {
            Shape::TruncatedSpace { tail_bound, .. } => *tail_bound,
            _ => 0.0,
        }
    }

    /// Exact Lebesgue measure.
    pub fn volume(&self) -> f64 {
        let n = self.dim();
        match &self.shape {
            Shape::Ball(b) => ball_volume(n) * b.radius.powi(n as i32),
            Shape::HalfBall(b) => 0.5 * ball_volume(n) * b.radius.powi(n as i32),
            Shape::Sphere(_) => 0.0,
            Shape::BallMinusBalls { outer, inner } => {
                ball_volume(n)
                    * (outer.radius.powi(n as i32)
                        - inner.iter().map(|b| b.radius.powi(n as i32)).sum::<f64>())
            }
            Shape::TruncatedSpace { r_max, half, .. } => {
                let v = ball_volume(n) * r_max.powi(n as i32);
                if *half {
                    0.5 * v
                } else {
                    v
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// One-dimensional Gauss rules

type Rule1d = Arc<(Vec<f64>, Vec<f64>)>;

/// Gauss–Jacobi rule with symmetric weight `(1−t²)^λ` on `[−1, 1]`
/// (Golub–Welsch).
pub fn gauss_gegenbauer(m: usize, lambda: f64) -> Rule1d {
    static CACHE: OnceLock<Mutex<HashMap<(usize, u64), Rule1d>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let key = (m, lambda.to_bits());
    if let Some(r) = cache.lock().expect("rule cache").get(&key) {
        return r.clone();
    }
    let al = lambda;
    let ab = 2.0 * al;
    let mut jm = DMatrix::<f64>::zeros(m, m);
    for j in 1..m {
        let jf = j as f64;
        let num = 4.0 * jf * (jf + al) * (jf + al) * (jf + ab);
        let den = (2.0 * jf + ab).powi(2) * (2.0 * jf + ab + 1.0) * (2.0 * jf + ab - 1.0);
        let b = (num / den).sqrt();
        jm[(j, j - 1)] = b;
        jm[(j - 1, j)] = b;
    }
    let mu0 = 2f64.powf(ab + 1.0) * statrs::function::gamma::gamma(al + 1.0).powi(2)
        / statrs::function::gamma::gamma(ab + 2.0);
    let eig = SymmetricEigen::new(jm);
    let mut pairs: Vec<(f64, f64)> = (0..m)
        .map(|i| {
            let v = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], mu0 * v * v)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    // symmetrise to remove eigen-solver noise
    for i in 0..m / 2 {
        let j = m - 1 - i;
        let t = 0.5 * (pairs[j].0 - pairs[i].0);
        let w = 0.5 * (pairs[i].1 + pairs[j].1);
        pairs[i] = (-t, w);
        pairs[j] = (t, w);
    }
    if m % 2 == 1 {
        pairs[m / 2].0 = 0.0;
    }
    let rule = Arc::new(pairs.into_iter().unzip());
    cache.lock().expect("rule cache").insert(key, rule.clone());
    rule
}

/// Gauss–Legendre rule on `[−1, 1]`.
pub fn gauss_legendre(m: usize) -> Rule1d {
    gauss_gegenbauer(m, 0.0)
}

/// Gauss–Legendre nodes and weights mapped to `[a, b]`.
pub fn gauss_legendre_on(m: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    let rule = gauss_legendre(m);
    let h = 0.5 * (b - a);
    rule.0
        .iter()
        .zip(&rule.1)
        .map(|(t, w)| (a + h * (t + 1.0), h * w))
        .collect()
}

// ---------------------------------------------------------------------------
// Sphere rules

/// Product rule on the unit sphere `S^{n−1}` exact for polynomials of degree
/// `2m − 1`; returns flat points (n per node) and weights.
pub fn sphere_rule(n: usize, m: usize) -> Arc<(Vec<f64>, Vec<f64>)> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<(Vec<f64>, Vec<f64>)>>>> =
        OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(r) = cache.lock().expect("sphere cache").get(&(n, m)) {
        return r.clone();
    }
    let rule = Arc::new(build_sphere_rule(n, m));
    cache.lock().expect("sphere cache").insert((n, m), rule.clone());
    rule
}

fn build_sphere_rule(n: usize, m: usize) -> (Vec<f64>, Vec<f64>) {
    match n {
        1 => (vec![-1.0, 1.0], vec![1.0, 1.0]),
        2 => {
            let count = 2 * m;
            let mut pts = Vec::with_capacity(2 * count);
            let w = 2.0 * std::f64::consts::PI / count as f64;
            for j in 0..count {
                let phi = (j as f64 + 0.5) * 2.0 * std::f64::consts::PI / count as f64;
                pts.push(phi.cos());
                pts.push(phi.sin());
            }
            (pts, vec![w; count])
        }
        _ => {
            let lower = sphere_rule(n - 1, m);
            let g = gauss_gegenbauer(m, (n as f64 - 3.0) / 2.0);
            let mut pts = Vec::new();
            let mut wts = Vec::new();
            for (t, wt) in g.0.iter().zip(&g.1) {
                let s = (1.0 - t * t).max(0.0).sqrt();
                for (y, wy) in lower.0.chunks(n - 1).zip(&lower.1) {
                    pts.push(*t);
                    pts.extend(y.iter().map(|v| s * v));
                    wts.push(wt * wy);
                }
            }
            (pts, wts)
        }
    }
}

/// Rule on the half-sphere `{ω_1 > 0}` using the polar angle of `e_1`.
fn hemisphere_rule(n: usize, m: usize) -> (Vec<f64>, Vec<f64>) {
    let lower = sphere_rule(n - 1, m);
    let mut pts = Vec::new();
    let mut wts = Vec::new();
    for (phi, wphi) in gauss_legendre_on(m + 1, 0.0, std::f64::consts::FRAC_PI_2) {
        let (s, c) = phi.sin_cos();
        let jac = s.powi(n as i32 - 2);
        for (y, wy) in lower.0.chunks(n - 1).zip(&lower.1) {
            pts.push(c);
            pts.extend(y.iter().map(|v| s * v));
            wts.push(wphi * jac * wy);
        }
    }
    (pts, wts)
}

/// Weighted nodes, optionally with unit normals, in `R^n`.
#[derive(Clone, Debug, Default)]
pub struct NodeSet {
    pub n: usize,
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
    pub normals: Vec<f64>,
}

impl NodeSet {
    fn new(n: usize) -> Self {
        Self {
            n,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    fn push(&mut self, x: &[f64], w: f64, normal: Option<&[f64]>) {
        self.points.extend_from_slice(x);
        self.weights.push(w);
        if let Some(nu) = normal {
            self.normals.extend_from_slice(nu);
        }
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.n..(i + 1) * self.n]
    }

    pub fn normal(&self, i: usize) -> &[f64] {
        &self.normals[i * self.n..(i + 1) * self.n]
    }

    fn append(&mut self, other: NodeSet, sign: f64) {
        self.points.extend(other.points);
        self.weights.extend(other.weights.into_iter().map(|w| sign * w));
        self.normals.extend(other.normals);
    }
}

/// Angular nodes per dimension and radial nodes at refinement `level`.
fn level_sizes(level: usize) -> (usize, usize) {
    (level + 1, 4 * level + 4)
}

fn shell_nodes(
    n: usize,
    center: &[f64],
    r_in: f64,
    r_out: f64,
    level: usize,
    half: bool,
) -> NodeSet {
    let (m, nr) = level_sizes(level);
    let (dirs, dw) = if half {
        hemisphere_rule(n, m)
    } else {
        let r = sphere_rule(n, m);
        (r.0.clone(), r.1.clone())
    };
    let mut out = NodeSet::new(n);
    let mut x = vec![0.0; n];
    for (r, wr) in gauss_legendre_on(nr, r_in, r_out) {
        let jac = wr * r.powi(n as i32 - 1);
        for (d, w) in dirs.chunks(n).zip(&dw) {
            for i in 0..n {
                x[i] = center[i] + r * d[i];
            }
            out.push(&x, jac * w, None);
        }
    }
    out
}

fn sphere_nodes(n: usize, b: &Ball, level: usize, outward: f64, half: bool) -> NodeSet {
    let (m, _) = level_sizes(level);
    let (dirs, dw) = if half {
        hemisphere_rule(n, m)
    } else {
        let r = sphere_rule(n, m);
        (r.0.clone(), r.1.clone())
    };
    let area = b.radius.powi(n as i32 - 1);
    let mut out = NodeSet::new(n);
    let mut x = vec![0.0; n];
    let mut nu = vec![0.0; n];
    for (d, w) in dirs.chunks(n).zip(&dw) {
        for i in 0..n {
            x[i] = b.center[i] + b.radius * d[i];
            nu[i] = outward * d[i];
        }
        out.push(&x, area * w, Some(&nu));
    }
    out
}

/// Flat disc `{x_1 = c_1, |x − c| < R}` with normal `−e_1`.
fn flat_disc_nodes(n: usize, b: &Ball, level: usize) -> NodeSet {
    let inner = shell_nodes(n - 1, &b.center[1..], 0.0, b.radius, level, false);
    let mut out = NodeSet::new(n);
    let mut nu = vec![0.0; n];
    nu[0] = -1.0;
    let mut x = vec![0.0; n];
    for i in 0..inner.len() {
        x[0] = b.center[0];
        x[1..].copy_from_slice(inner.point(i));
        out.push(&x, inner.weights[i], Some(&nu));
    }
    out
}

fn concentric(outer: &Ball, inner: &[Ball]) -> bool {
    inner.iter().all(|b| dist(&b.center, &outer.center) < 1e-14)
}

/// Volume nodes of the deterministic rule at `level` (level ≥ 1).
pub fn volume_nodes(domain: &Domain, level: usize) -> Result<NodeSet> {
    let n = domain.dim();
    Ok(match &domain.shape {
        Shape::Ball(b) => shell_nodes(n, &b.center, 0.0, b.radius, level, false),
        Shape::HalfBall(b) => shell_nodes(n, &b.center, 0.0, b.radius, level, true),
        Shape::Sphere(_) => {
            return Err(Error::Parameter("a sphere has no volume nodes".into()));
        }
        Shape::BallMinusBalls { outer, inner } => {
            if concentric(outer, inner) {
                let r_in = inner.iter().map(|b| b.radius).fold(0.0, f64::max);
                shell_nodes(n, &outer.center, r_in, outer.radius, level, false)
            } else {
                for (i, a) in inner.iter().enumerate() {
                    for b in &inner[i + 1..] {
                        if dist(&a.center, &b.center) < a.radius + b.radius {
                            return Err(Error::Unsupported(
                                "overlapping inner balls need the sampling engine".into(),
                            ));
                        }
                    }
                }
                let mut out = shell_nodes(n, &outer.center, 0.0, outer.radius, level, false);
                for b in inner {
                    out.append(shell_nodes(n, &b.center, 0.0, b.radius, level, false), -1.0);
                }
                out
            }
        }
        Shape::TruncatedSpace { r_max, half, .. } => {
            shell_nodes(n, &vec![0.0; n], 0.0, *r_max, level, *half)
        }
    })
}

/// Boundary nodes with outward unit normals.
pub fn boundary_nodes(domain: &Domain, level: usize) -> Result<NodeSet> {
    let n = domain.dim();
    Ok(match &domain.shape {
        Shape::Ball(b) | Shape::Sphere(b) => sphere_nodes(n, b, level, 1.0, false),
        Shape::HalfBall(b) => {
            let mut out = sphere_nodes(n, b, level, 1.0, true);
            out.append(flat_disc_nodes(n, b, level), 1.0);
            out
        }
        Shape::BallMinusBalls { outer, inner } => {
            let mut out = sphere_nodes(n, outer, level, 1.0, false);
            for b in inner {
                out.append(sphere_nodes(n, b, level, -1.0, false), 1.0);
            }
            out
        }
        Shape::TruncatedSpace { n, r_max, half, .. } => {
            let b = Ball::new(vec![0.0; *n], *r_max);
            let mut out = sphere_nodes(*n, &b, level, 1.0, *half);
            if *half {
                out.append(flat_disc_nodes(*n, &b, level), 1.0);
            }
            out
        }
    })
}

/// Options for the nested deterministic driver.
#[derive(Clone, Copy, Debug)]
pub struct NestedOptions {
    pub rel_tol: f64,
    /// Level differences below this count as converged regardless of scale.
    pub abs_tol: f64,
    pub max_points: usize,
    pub max_level: usize,
}

impl Default for NestedOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 0.0,
            max_points: 2_000_000,
            max_level: 24,
        }
    }
}

/// Outcome of a nested integration of a vector-valued integrand.
#[derive(Clone, Debug)]
pub struct NestedOutcome {
    pub values: Vec<f64>,
    pub errors: Vec<f64>,
    pub samples_used: usize,
    pub converged: bool,
}

const CHUNK: usize = 512;

/// Applies a rule: `Σ w_i f(x_i, ν_i)` with fixed-order reduction.
pub fn apply_rule<F>(nodes: &NodeSet, dim_out: usize, f: &F) -> Vec<f64>
where
    F: Fn(&[f64], Option<&[f64]>, &mut [f64]) + Sync,
{
    apply_rule_mass(nodes, dim_out, f).0
}

/// Rule values together with the largest componentwise `Σ |w_i f(x_i)|`.
fn apply_rule_mass<F>(nodes: &NodeSet, dim_out: usize, f: &F) -> (Vec<f64>, f64)
where
    F: Fn(&[f64], Option<&[f64]>, &mut [f64]) + Sync,
{
    let partials: Vec<Vec<f64>> = (0..nodes.len())
        .collect::<Vec<_>>()
        .par_chunks(CHUNK)
        .map(|idx| {
            let mut acc = vec![0.0; 2 * dim_out];
            let mut buf = vec![0.0; dim_out];
            for &i in idx {
                let nu = if nodes.normals.is_empty() {
                    None
                } else {
                    Some(nodes.normal(i))
                };
                buf.iter_mut().for_each(|b| *b = 0.0);
                f(nodes.point(i), nu, &mut buf);
                let w = nodes.weights[i];
                for (c, b) in buf.iter().enumerate() {
                    acc[c] += w * b;
                    acc[dim_out + c] += (w * b).abs();
                }
            }
            acc
        })
        .collect();
    let mut total = vec![0.0; 2 * dim_out];
    for p in partials {
        for (t, v) in total.iter_mut().zip(p) {
            *t += v;
        }
    }
    let mass = total[dim_out..].iter().fold(0.0f64, |m, v| m.max(*v));
    total.truncate(dim_out);
    (total, mass)
}

/// Refines the rule produced by `nodes_at(level)` until two successive
/// levels agree componentwise to `rel_tol` relative to the largest component
/// (floored at a thousandth of the absolute mass, so null integrals converge).
pub fn integrate_nested<N, F>(
    nodes_at: N,
    dim_out: usize,
    f: F,
    opts: NestedOptions,
) -> Result<NestedOutcome>
where
    N: Fn(usize) -> Result<NodeSet>,
    F: Fn(&[f64], Option<&[f64]>, &mut [f64]) + Sync,
{
    let mut prev: Option<Vec<f64>> = None;
    let mut used = 0;
    let mut last_err = vec![f64::INFINITY; dim_out];
    for level in 1..=opts.max_level {
        let nodes = nodes_at(level)?;
        if level > 1 && nodes.len() > opts.max_points {
            break;
        }
        used += nodes.len();
        let (cur, mass) = apply_rule_mass(&nodes, dim_out, &f);
        if let Some(p) = &prev {
            let errs: Vec<f64> = cur.iter().zip(p).map(|(a, b)| (a - b).abs()).collect();
            let scale = cur.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-3 * mass);
            let ok = errs
                .iter()
                .all(|e| *e <= opts.rel_tol * scale || *e <= opts.abs_tol.max(f64::MIN_POSITIVE));
            last_err = errs;
            if ok {
                return Ok(NestedOutcome {
                    values: cur,
                    errors: last_err,
                    samples_used: used,
                    converged: true,
                });
            }
        }
        prev = Some(cur);
    }
    let values = prev.ok_or_else(|| Error::Parameter("no quadrature level fits".into()))?;
    Ok(NestedOutcome {
        values,
        errors: last_err,
        samples_used: used,
        converged: false,
    })
}

// ---------------------------------------------------------------------------
// Adaptive Gauss–Kronrod (7/15) on an interval

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Adaptive Gauss–Kronrod integral of `f` on `[a, b]`.
pub fn integrate_interval<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    rel_tol: f64,
    max_intervals: usize,
) -> Result<QuadratureResult> {
    let mut pieces = vec![(a, b, gk15(&f, a, b))];
    let mut evals = 15;
    loop {
        let total: f64 = pieces.iter().map(|p| p.2 .0).sum();
        let err: f64 = pieces.iter().map(|p| p.2 .1).sum();
        if err <= rel_tol * total.abs() || err < 1e-300 {
            return Ok(QuadratureResult {
                value: total,
                error_estimate: err,
                method: Method::DeterministicRadial,
                samples_used: evals,
            });
        }
        if pieces.len() >= max_intervals {
            return Err(Error::Accuracy {
                message: "adaptive interval quadrature hit its subdivision cap".into(),
                partial: total,
                estimate: err,
            });
        }
        let (imax, _) = pieces
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .2 .1.total_cmp(&y.1 .2 .1))
            .expect("nonempty");
        let (lo, hi, _) = pieces.swap_remove(imax);
        let mid = 0.5 * (lo + hi);
        pieces.push((lo, mid, gk15(&f, lo, mid)));
        pieces.push((mid, hi, gk15(&f, mid, hi)));
        evals += 30;
    }
}

/// `ω_{n−1} ∫_0^R g(r) r^{n−1} dr` for a centre singularity `g ~ r^{−σ}`.
pub fn integrate_radial<G: Fn(f64) -> f64>(
    g: G,
    r_max: f64,
    n: usize,
    sigma: f64,
    rel_tol: f64,
) -> Result<QuadratureResult> {
    if sigma >= n as f64 {
        return Err(Error::Divergent(format!(
            "r^-{sigma} is not integrable at the origin in dimension {n}"
        )));
    }
    let area = sphere_area(n);
    let nf = n as f64;
    let res = if sigma > 0.0 {
        let e = nf - sigma;
        // r = R u^{1/e}, r^{n-1} dr = R^n / e · u^{σ/e} du
        integrate_interval(
            |u: f64| {
                if u <= 0.0 {
                    return 0.0;
                }
                let r = r_max * u.powf(1.0 / e);
                g(r) * r_max.powf(nf) / e * u.powf(sigma / e)
            },
            0.0,
            1.0,
            rel_tol,
            4000,
        )?
    } else {
        integrate_interval(|r: f64| g(r) * r.powi(n as i32 - 1), 0.0, r_max, rel_tol, 4000)?
    };
    Ok(QuadratureResult {
        value: area * res.value,
        error_estimate: area * res.error_estimate,
        ..res
    })
}

/// `ω_{n−1} ∫_0^∞ g(r) r^{n−1} dr` for `g = O(r^{−decay})` with `decay > n`.
pub fn integrate_radial_infinite<G: Fn(f64) -> f64>(
    g: G,
    n: usize,
    sigma: f64,
    decay: f64,
    rel_tol: f64,
) -> Result<QuadratureResult> {
    let nf = n as f64;
    if decay <= nf {
        return Err(Error::Divergent(format!(
            "decay r^-{decay} is not integrable at infinity in dimension {n}"
        )));
    }
    let inner = integrate_radial(&g, 1.0, n, sigma, rel_tol)?;
    let e = decay - nf;
    // r = v^{-1/e}: ∫_1^∞ g r^{n-1} dr = (1/e) ∫_0^1 g(r) v^{-n/e - 1} dv
    let outer = integrate_interval(
        |v: f64| {
            if v <= 0.0 {
                return 0.0;
            }
            let r = v.powf(-1.0 / e);
            g(r) * v.powf(-nf / e - 1.0) / e
        },
        0.0,
        1.0,
        rel_tol,
        4000,
    )?;
    let area = sphere_area(n);
    Ok(QuadratureResult {
        value: inner.value + area * outer.value,
        error_estimate: inner.error_estimate + area * outer.error_estimate,
        method: Method::DeterministicRadial,
        samples_used: inner.samples_used + outer.samples_used,
    })
}

// ---------------------------------------------------------------------------
// Quasi-Monte Carlo with singularity-centred importance sampling

/// Sampling controls for the QMC engine.
#[derive(Clone, Copy, Debug)]
pub struct QmcOptions {
    /// Points per replicate (rounded up to a power of two).
    pub points: usize,
    pub replicates: usize,
    pub seed: u64,
}

impl Default for QmcOptions {
    fn default() -> Self {
        Self {
            points: 1 << 14,
            replicates: 8,
            seed: 0,
        }
    }
}

pub(crate) fn mix_seed(seed: u64, replicate: usize, component: usize) -> u32 {
    let mut z = seed
        .wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(replicate as u64 + 1))
        .wrapping_add(0xBF58_476D_1CE4_E5B9u64.wrapping_mul(component as u64 + 7));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    (z ^ (z >> 31)) as u32
}

pub(crate) fn sobol(index: usize, dim: usize, seed: u32) -> f64 {
    let v = sobol_burley::sample(index as u32, dim as u32, seed) as f64;
    v.clamp(1e-9, 1.0 - 1e-9)
}

pub(crate) fn direction(index: usize, n: usize, seed: u32, normal: &Normal, out: &mut [f64]) {
    loop {
        for (i, o) in out.iter_mut().enumerate() {
            *o = normal.inverse_cdf(sobol(index, i + 1, seed));
        }
        let r = norm(out);
        if r > 1e-12 {
            out.iter_mut().for_each(|v| *v /= r);
            return;
        }
        // all-median draw: fall back to a coordinate direction
        out.iter_mut().for_each(|v| *v = 0.0);
        out[index % n] = 1.0;
        return;
    }
}

#[derive(Clone)]
enum Proposal {
    Uniform { center: Vec<f64>, radius: f64, density: f64 },
    Focus { center: Vec<f64>, eps: f64, r_max: f64, z: f64, area: f64 },
}

impl Proposal {
    fn density(&self, x: &[f64], n: usize) -> f64 {
        match self {
            Proposal::Uniform {
                center,
                radius,
                density,
            } => {
                if dist(x, center) < *radius {
                    *density
                } else {
                    0.0
                }
            }
            Proposal::Focus {
                center,
                eps,
                r_max,
                z,
                area,
            } => {
                let r = dist(x, center);
                if r >= *r_max {
                    0.0
                } else {
                    1.0 / (z * area * eps.max(r).powi(n as i32))
                }
            }
        }
    }

    fn sample(&self, u: f64, dir: &[f64], n: usize, out: &mut [f64]) {
        let (c, r) = match self {
            Proposal::Uniform { center, radius, .. } => (center, radius * u.powf(1.0 / n as f64)),
            Proposal::Focus { center, eps, z, .. } => {
                let nf = n as f64;
                let t = u * z;
                let r = if t < 1.0 / nf {
                    eps * (nf * t).powf(1.0 / nf)
                } else {
                    eps * (t - 1.0 / nf).exp()
                };
                (center, r)
            }
        };
        for i in 0..n {
            out[i] = c[i] + r * dir[i];
        }
    }
}

fn proposals(domain: &Domain) -> Vec<Proposal> {
    let n = domain.dim();
    let b = domain.bounding_ball();
    let mut out = vec![Proposal::Uniform {
        center: b.center.clone(),
        radius: b.radius,
        density: 1.0 / (ball_volume(n) * b.radius.powi(n as i32)),
    }];
    for s in &domain.singular {
        let r_max = dist(&s.point, &b.center) + b.radius;
        let eps = if s.scale > 0.0 {
            s.scale.min(r_max)
        } else {
            1e-9 * r_max
        };
        let z = 1.0 / n as f64 + (r_max / eps).ln();
        out.push(Proposal::Focus {
            center: s.point.clone(),
            eps,
            r_max,
            z,
            area: sphere_area(n),
        });
    }
    out
}

/// Importance-sampled QMC integral of `f` over `domain`.
pub fn integrate_qmc<F>(f: F, domain: &Domain, opts: QmcOptions) -> Result<QuadratureResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    domain.validate()?;
    let n = domain.dim();
    let props = proposals(domain);
    let per = opts.points.next_power_of_two();
    let counts: Vec<usize> = if props.len() == 1 {
        vec![per]
    } else {
        let rest = per / 2 / (props.len() - 1);
        let mut c = vec![per / 2];
        c.extend(std::iter::repeat(rest.max(64).next_power_of_two()).take(props.len() - 1));
        c
    };
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let estimates: Vec<f64> = (0..opts.replicates)
        .into_par_iter()
        .map(|rep| {
            let mut total = 0.0;
            let mut dir = vec![0.0; n];
            let mut x = vec![0.0; n];
            for (ci, prop) in props.iter().enumerate() {
                let seed = mix_seed(opts.seed, rep, ci);
                let mut part = 0.0;
                for i in 0..counts[ci] {
                    direction(i, n, seed, &normal, &mut dir);
                    prop.sample(sobol(i, 0, seed), &dir, n, &mut x);
                    if !domain.contains(&x) {
                        continue;
                    }
                    let mix: f64 = props
                        .iter()
                        .zip(&counts)
                        .map(|(p, &c)| c as f64 * p.density(&x, n))
                        .sum();
                    if mix > 0.0 {
                        part += f(&x) / mix;
                    }
                }
                total += part;
            }
            total
        })
        .collect();
    let r = estimates.len() as f64;
    let mean = estimates.iter().sum::<f64>() / r;
    let var = if estimates.len() > 1 {
        estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (r - 1.0)
    } else {
        mean * mean
    };
    Ok(QuadratureResult {
        value: mean,
        error_estimate: 2.0 * var.sqrt() + domain.tail_bound(),
        method: Method::Qmc,
        samples_used: counts.iter().sum::<usize>() * opts.replicates,
    })
}

// ---------------------------------------------------------------------------
// Public entry points

/// Integrand for [`integrate_volume`].
pub enum Integrand<'a> {
    /// `f(x) = g(|x − center|)`, with a centre singularity of order `sigma`.
    Radial {
        center: &'a [f64],
        g: &'a (dyn Fn(f64) -> f64 + Sync),
        sigma: f64,
    },
    General(&'a (dyn Fn(&[f64]) -> f64 + Sync)),
}

/// Volume integral over `domain` with relative tolerance `tol`.
///
/// Radial integrands over balls or annuli centred at their centre go through
/// the 1-D adaptive rule; smooth integrands go through the nested product
/// rule when its node count stays affordable; everything else is sampled.
pub fn integrate_volume(
    f: Integrand<'_>,
    domain: &Domain,
    tol: f64,
    seed: u64,
) -> Result<QuadratureResult> {
    domain.validate()?;
    let n = domain.dim();
    if let Integrand::Radial { center, g, sigma } = &f {
        let radial_span = match &domain.shape {
            Shape::Ball(b) if dist(&b.center, center) < 1e-14 => Some((0.0, b.radius)),
            Shape::BallMinusBalls { outer, inner }
                if dist(&outer.center, center) < 1e-14 && concentric(outer, inner) =>
            {
                Some((inner.iter().map(|b| b.radius).fold(0.0, f64::max), outer.radius))
            }
            Shape::TruncatedSpace { r_max, half, .. } if norm(center) < 1e-14 => {
                let full = integrate_radial(g, *r_max, n, *sigma, tol)?;
                let factor = if *half { 0.5 } else { 1.0 };
                return finish(
                    QuadratureResult {
                        value: factor * full.value,
                        error_estimate: factor * full.error_estimate + domain.tail_bound(),
                        ..full
                    },
                    tol,
                );
            }
            _ => None,
        };
        if let Some((a, b)) = radial_span {
            let whole = integrate_radial(g, b, n, *sigma, tol)?;
            if a == 0.0 {
                return finish(whole, tol);
            }
            let hole = integrate_radial(g, a, n, *sigma, tol)?;
            return finish(
                QuadratureResult {
                    value: whole.value - hole.value,
                    error_estimate: whole.error_estimate + hole.error_estimate,
                    samples_used: whole.samples_used + hole.samples_used,
                    ..whole
                },
                tol,
            );
        }
    }
    let general = |x: &[f64]| -> f64 {
        match &f {
            Integrand::Radial { center, g, .. } => g(dist(x, center)),
            Integrand::General(h) => h(x),
        }
    };
    let has_singular = !domain.singular.is_empty()
        || matches!(&f, Integrand::Radial { sigma, .. } if *sigma > 0.0);
    if !has_singular {
        if let Ok(out) = integrate_nested(
            |lvl| volume_nodes(domain, lvl),
            1,
            |x: &[f64], _nu: Option<&[f64]>, o: &mut [f64]| o[0] = general(x),
            NestedOptions {
                rel_tol: tol,
                max_points: 400_000,
                ..Default::default()
            },
        ) {
            if out.converged {
                return Ok(QuadratureResult {
                    value: out.values[0],
                    error_estimate: out.errors[0] + domain.tail_bound(),
                    method: Method::DeterministicRadial,
                    samples_used: out.samples_used,
                });
            }
        }
    }
    let mut dom = domain.clone();
    if let Integrand::Radial { center, sigma, .. } = &f {
        if *sigma > 0.0 {
            dom.singular.push(SingularPoint {
                point: center.to_vec(),
                order: *sigma,
                scale: 0.0,
            });
        }
    }
    let res = integrate_qmc(general, &dom, QmcOptions { seed, ..Default::default() })?;
    finish(res, tol)
}

fn finish(res: QuadratureResult, tol: f64) -> Result<QuadratureResult> {
    if res.error_estimate > tol * res.value.abs() && res.error_estimate > 1e-300 {
        return Err(Error::Accuracy {
            message: "error estimate above the requested tolerance".into(),
            partial: res.value,
            estimate: res.error_estimate,
        });
    }
    Ok(res)
}

/// Surface integral over a sphere.
pub fn integrate_surface<F>(f: F, domain: &Domain, tol: f64, seed: u64) -> Result<QuadratureResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    domain.validate()?;
    let Shape::Sphere(b) = &domain.shape else {
        return Err(Error::Parameter("integrate_surface needs a sphere domain".into()));
    };
    let n = domain.dim();
    let out = integrate_nested(
        |lvl| Ok(sphere_nodes(n, b, lvl, 1.0, false)),
        1,
        |x: &[f64], _nu: Option<&[f64]>, o: &mut [f64]| o[0] = f(x),
        NestedOptions {
            rel_tol: tol,
            max_points: 1_000_000,
            ..Default::default()
        },
    )?;
    if out.converged {
        return Ok(QuadratureResult {
            value: out.values[0],
            error_estimate: out.errors[0],
            method: Method::DeterministicRadial,
            samples_used: out.samples_used,
        });
    }
    // sampled directions
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let per = QmcOptions::default().points;
    let area = sphere_area(n) * b.radius.powi(n as i32 - 1);
    let estimates: Vec<f64> = (0..8)
        .into_par_iter()
        .map(|rep| {
            let s = mix_seed(seed, rep, 0);
            let mut dir = vec![0.0; n];
            let mut x = vec![0.0; n];
            let mut acc = 0.0;
            for i in 0..per {
                direction(i, n, s, &normal, &mut dir);
                for j in 0..n {
                    x[j] = b.center[j] + b.radius * dir[j];
                }
                acc += f(&x);
            }
            area * acc / per as f64
        })
        .collect();
    let mean = estimates.iter().sum::<f64>() / 8.0;
    let var = estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / 7.0;
    finish(
        QuadratureResult {
            value: mean,
            error_estimate: 2.0 * var.sqrt(),
            method: Method::Qmc,
            samples_used: 8 * per,
        },
        tol,
    )
}

// ---------------------------------------------------------------------------
// Axisymmetric reduction

/// A planar region in the `(t, s)` half-plane, `t = x_1`, `s = |x'|`.
#[derive(Clone, Copy, Debug)]
pub enum AxisRegion {
    /// The ball `B(c e_1, R)`.
    Disc { center: f64, radius: f64 },
    /// `t ∈ [t0, t1]`, `s ∈ [0, s1]`.
    Box { t0: f64, t1: f64, s1: f64 },
}

/// `∫ g(x_1, |x'|) dx` over the solid of revolution of `region` in `R^n`
/// (`n ≥ 2`), by nested tensor Gauss–Legendre.
pub fn integrate_axisymmetric<G>(g: G, region: AxisRegion, n: usize, rel_tol: f64) -> Result<QuadratureResult>
where
    G: Fn(f64, f64) -> f64 + Sync,
{
    let shell = sphere_area(n - 1);
    let rule = |m: usize| -> f64 {
        let pts: Vec<(f64, f64, f64)> = match region {
            AxisRegion::Disc { center, radius } => {
                let mut v = Vec::new();
                for (rho, wr) in gauss_legendre_on(m, 0.0, radius) {
                    for (phi, wp) in gauss_legendre_on(m, 0.0, std::f64::consts::PI) {
                        let (sp, cp) = phi.sin_cos();
                        v.push((center + rho * cp, rho * sp, wr * wp * rho));
                    }
                }
                v
            }
            AxisRegion::Box { t0, t1, s1 } => {
                let mut v = Vec::new();
                for (t, wt) in gauss_legendre_on(m, t0, t1) {
                    for (s, ws) in gauss_legendre_on(m, 0.0, s1) {
                        v.push((t, s, wt * ws));
                    }
                }
                v
            }
        };
        let partials: Vec<f64> = pts
            .par_chunks(CHUNK)
            .map(|c| {
                c.iter()
                    .map(|(t, s, w)| w * g(*t, *s) * s.powi(n as i32 - 2))
                    .sum::<f64>()
            })
            .collect();
        shell * partials.iter().sum::<f64>()
    };
    let mut m = 24;
    let mut prev = rule(m);
    let mut used = m * m;
    let mut err = f64::INFINITY;
    while m <= 768 {
        let next_m = m * 3 / 2;
        let cur = rule(next_m);
        used += next_m * next_m;
        err = (cur - prev).abs();
        if err <= rel_tol * cur.abs() || err < 1e-300 {
            return Ok(QuadratureResult {
                value: cur,
                error_estimate: err,
                method: Method::DeterministicRadial,
                samples_used: used,
            });
        }
        prev = cur;
        m = next_m;
    }
    Err(Error::Accuracy {
        message: "axisymmetric rule did not converge".into(),
        partial: prev,
        estimate: err,
    })
}
