//! Concentrated bubbles: the standard positive bubble, cut-off and rescaled
//! copies (interior and boundary), comparison bubbles, kernel elements,
//! decay slopes and the lower-order integrals `I_A`.

use crate::error::{Error, Result};
use crate::jet::{Jet, JetProvider};
use crate::quad::{self, Ball, Domain, QuadratureResult, Shape};
use crate::radialgebra::{a_nk, check_nk, critical_exponent};
use crate::util::{dist, dot, fit_slope, norm, sub};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

pub(crate) fn check_dims(n: usize, k: usize) -> Result<()> {
    check_nk(n as u32, k as u32)
}

/// `a_{n,k}` for `usize` arguments.
pub fn bubble_a(n: usize, k: usize) -> f64 {
    a_nk(n as u32, k as u32)
}

/// Exponent `(n − 2k)/2` of the standard bubble.
pub fn half_weight(n: usize, k: usize) -> f64 {
    (n as f64 - 2.0 * k as f64) / 2.0
}

/// Value of the standard bubble `(1 + a|y|²)^{−(n−2k)/2}`.
pub fn standard_bubble(n: usize, k: usize, y: &[f64]) -> f64 {
    let a = bubble_a(n, k);
    (1.0 + a * dot(y, y)).powf(-half_weight(n, k))
}

/// Jet of the standard bubble at `y0`.
pub fn standard_bubble_jet(n: usize, k: usize, y0: &[f64], order: usize) -> Jet {
    let a = bubble_a(n, k);
    let vars = Jet::variables(y0, order);
    let mut s = Jet::constant(y0.len(), order, 1.0);
    for v in &vars {
        s = s.add(&v.mul(v).scale(a));
    }
    s.powf(-half_weight(n, k))
}

/// Replaces a jet in `y = (x − x0)/λ` by the same function's jet in `x`.
fn rescale_jet(jet: &Jet, lambda: f64) -> Jet {
    let table = jet.table();
    let c: Vec<f64> = jet
        .coeffs()
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let deg: usize = table.exponent(i).iter().map(|&e| e as usize).sum();
            v * lambda.powi(-(deg as i32))
        })
        .collect();
    Jet::from_coeffs(jet.n(), jet.order(), c).expect("same table")
}

/// The standard bubble as a jet provider.
#[derive(Clone, Copy, Debug)]
pub struct StandardBubble {
    pub n: usize,
    pub k: usize,
}

impl JetProvider for StandardBubble {
    fn dim(&self) -> usize {
        self.n
    }

    fn smoothness(&self) -> usize {
        usize::MAX
    }

    fn jet(&self, x: &[f64], order: usize) -> Result<Jet> {
        Ok(standard_bubble_jet(self.n, self.k, x, order))
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        Ok(standard_bubble(self.n, self.k, x))
    }
}

// ---------------------------------------------------------------------------
// Cut-off

/// Radial bump equal to 1 on `B(0, inner)` and 0 outside `B(0, outer)`,
/// with the transition `ψ(t) = 1/(1 + e^{1/(1−t) − 1/t})`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cutoff {
    pub inner: f64,
    pub outer: f64,
}

impl Default for Cutoff {
    fn default() -> Self {
        Self {
            inner: 0.5,
            outer: 1.0,
        }
    }
}

impl Cutoff {
    fn t(&self, r: f64) -> f64 {
        (r - self.inner) / (self.outer - self.inner)
    }

    pub fn value(&self, z: &[f64]) -> f64 {
        let t = self.t(norm(z));
        if t <= 0.0 {
            1.0
        } else if t >= 1.0 {
            0.0
        } else {
            let g = 1.0 / (1.0 - t) - 1.0 / t;
            if g > 700.0 {
                0.0
            } else {
                1.0 / (1.0 + g.exp())
            }
        }
    }

    pub fn jet(&self, z0: &[f64], order: usize) -> Jet {
        let n = z0.len();
        let t0 = self.t(norm(z0));
        if t0 <= 0.0 {
            return Jet::constant(n, order, 1.0);
        }
        if t0 >= 1.0 {
            return Jet::zero(n, order);
        }
        let vars = Jet::variables(z0, order);
        let mut r2 = Jet::zero(n, order);
        for v in &vars {
            r2 = r2.add(&v.mul(v));
        }
        let t = r2
            .sqrt()
            .add_scalar(-self.inner)
            .scale(1.0 / (self.outer - self.inner));
        let g = t.neg().add_scalar(1.0).recip().sub(&t.recip());
        if g.value() > 700.0 {
            return Jet::zero(n, order);
        }
        g.exp().add_scalar(1.0).recip()
    }
}

// ---------------------------------------------------------------------------
// Boundary chart of the unit ball

/// Taylor coefficients of `f(c) = arccos(c)/√(1−c²)` at `c0 ∈ (−1, 1]`.
fn arc_ratio_series(c0: f64, order: usize) -> Vec<f64> {
    if 1.0 - c0 < 0.5 {
        // expand at c = 1, where f_j = −j f_{j−1}/(2j+1), then recentre
        let terms = order + 80;
        let mut at1 = vec![1.0];
        for j in 1..=terms {
            let prev = at1[j - 1];
            at1.push(-(j as f64) * prev / (2.0 * j as f64 + 1.0));
        }
        let d = c0 - 1.0;
        (0..=order)
            .map(|j| {
                let mut s = 0.0;
                let mut binom = 1.0;
                let mut dp = 1.0;
                for m in j..=terms {
                    s += at1[m] * binom * dp;
                    binom *= (m + 1) as f64 / (m + 1 - j) as f64;
                    dp *= d;
                }
                s
            })
            .collect()
    } else {
        // (1 − c²) f' = c f − 1 solved term by term at c0
        let q = 1.0 - c0 * c0;
        let mut f = vec![c0.acos() / q.sqrt()];
        for j in 0..order {
            let fj = f[j];
            let fjm = if j > 0 { f[j - 1] } else { 0.0 };
            let delta = if j == 0 { 1.0 } else { 0.0 };
            f.push(((2 * j + 1) as f64 * c0 * fj + j as f64 * fjm - delta) / (q * (j + 1) as f64));
        }
        f
    }
}

/// Geodesic-normal boundary chart of the unit ball at `x0 ∈ S^{n−1}`:
/// `σ(z) = (1 − z_1)(cos|z'| x0 + sin|z'| T z'/|z'|)`, with `T` an
/// orthonormal frame of the tangent space, so `dσ(0)[−e_1] = x0`.
#[derive(Clone, Debug)]
pub struct BallChart {
    x0: Vec<f64>,
    /// `frame[j]` is the image of `e_{j+2}`.
    frame: Vec<Vec<f64>>,
}

impl BallChart {
    pub fn new(x0: &[f64]) -> Result<Self> {
        let n = x0.len();
        if n < 2 || (norm(x0) - 1.0).abs() > 1e-10 {
            return Err(Error::Parameter("chart base point must lie on the unit sphere".into()));
        }
        // Householder reflection sending e_1 to −x0
        let mut v = x0.to_vec();
        v[0] += 1.0;
        let vv = dot(&v, &v);
        let column = |j: usize| -> Vec<f64> {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            if vv > 1e-24 {
                let s = 2.0 * v[j] / vv;
                for i in 0..n {
                    e[i] -= s * v[i];
                }
            }
            e
        };
        Ok(Self {
            x0: x0.to_vec(),
            frame: (1..n).map(column).collect(),
        })
    }

    pub fn base(&self) -> &[f64] {
        &self.x0
    }

    pub fn forward(&self, z: &[f64]) -> Vec<f64> {
        let n = self.x0.len();
        let zp = &z[1..];
        let th = norm(zp);
        let mut out: Vec<f64> = self.x0.iter().map(|v| th.cos() * v).collect();
        if th > 0.0 {
            let s = th.sin() / th;
            for (j, f) in self.frame.iter().enumerate() {
                for i in 0..n {
                    out[i] += s * zp[j] * f[i];
                }
            }
        }
        out.iter().map(|v| (1.0 - z[0]) * v).collect()
    }

    /// `σ^{-1}(x)`, defined away from the origin and the antipode.
    pub fn inverse(&self, x: &[f64]) -> Result<Vec<f64>> {
        let rho = norm(x);
        if rho == 0.0 {
            return Err(Error::Singular("chart inverse at the origin".into()));
        }
        let c = (dot(x, &self.x0) / rho).clamp(-1.0, 1.0);
        if c <= -1.0 + 1e-12 {
            return Err(Error::Singular("chart inverse at the antipode".into()));
        }
        let f = arc_ratio_series(c, 0)[0];
        let mut z = vec![1.0 - rho];
        z.extend(self.frame.iter().map(|t| f * dot(t, x) / rho));
        Ok(z)
    }

    /// Jets of the components of `σ^{-1}` at `x`.
    pub fn inverse_jet(&self, x: &[f64], order: usize) -> Result<Vec<Jet>> {
        let n = x.len();
        let vars = Jet::variables(x, order);
        let mut r2 = Jet::zero(n, order);
        for v in &vars {
            r2 = r2.add(&v.mul(v));
        }
        let rho = r2.sqrt();
        if rho.value() == 0.0 {
            return Err(Error::Singular("chart inverse at the origin".into()));
        }
        let inv_rho = rho.recip();
        let lin = |w: &[f64]| -> Jet {
            let mut acc = Jet::zero(n, order);
            for (v, c) in vars.iter().zip(w) {
                if *c != 0.0 {
                    acc = acc.add(&v.scale(*c));
                }
            }
            acc
        };
        let c = lin(&self.x0).mul(&inv_rho);
        if c.value() <= -1.0 + 1e-12 {
            return Err(Error::Singular("chart inverse at the antipode".into()));
        }
        let f = c.compose(&arc_ratio_series(c.value().min(1.0), order));
        let fr = f.mul(&inv_rho);
        let mut out = vec![rho.neg().add_scalar(1.0)];
        out.extend(self.frame.iter().map(|t| fr.mul(&lin(t))));
        Ok(out)
    }
}

// ---------------------------------------------------------------------------
// Bubble specifications

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BubbleKind {
    Interior,
    Boundary,
}

/// Profile `v` of a bubble. External profiles are referenced by name in
/// JSON and attached with [`BubbleSpec::with_profile`].
#[derive(Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    StandardPositive,
    ExternalJet {
        name: String,
        #[serde(skip)]
        provider: Option<Arc<dyn JetProvider>>,
    },
}

impl fmt::Debug for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Profile::StandardPositive => write!(f, "StandardPositive"),
            Profile::ExternalJet { name, provider } => write!(
                f,
                "ExternalJet({name}{})",
                if provider.is_some() { "" } else { ", unresolved" }
            ),
        }
    }
}

impl PartialEq for Profile {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Profile::StandardPositive, Profile::StandardPositive) => true,
            (Profile::ExternalJet { name: a, .. }, Profile::ExternalJet { name: b, .. }) => a == b,
            _ => false,
        }
    }
}

/// One bubble `[x_α, μ_α, v]` at a fixed index `α`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BubbleSpec {
    pub kind: BubbleKind,
    pub n: usize,
    pub k: usize,
    pub center: Vec<f64>,
    pub mu: f64,
    #[serde(default = "standard_profile")]
    pub profile: Profile,
}

fn standard_profile() -> Profile {
    Profile::StandardPositive
}

impl BubbleSpec {
    pub fn interior(n: usize, k: usize, center: Vec<f64>, mu: f64) -> Result<Self> {
        let s = Self {
            kind: BubbleKind::Interior,
            n,
            k,
            center,
            mu,
            profile: Profile::StandardPositive,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn boundary(n: usize, k: usize, center: Vec<f64>, mu: f64) -> Result<Self> {
        let s = Self {
            kind: BubbleKind::Boundary,
            ..Self::interior(n, k, center, mu)?
        };
        Ok(s)
    }

    pub fn with_profile(mut self, name: &str, provider: Arc<dyn JetProvider>) -> Self {
        self.profile = Profile::ExternalJet {
            name: name.to_string(),
            provider: Some(provider),
        };
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_dims(self.n, self.k)?;
        if self.center.len() != self.n {
            return Err(Error::Parameter(format!(
                "center has {} coordinates, expected {}",
                self.center.len(),
                self.n
            )));
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::Parameter(format!("scale must be positive, got {}", self.mu)));
        }
        Ok(())
    }

    /// Checks the centre against the domain: strictly inside for interior
    /// bubbles, on the unit sphere for boundary bubbles.
    pub fn validate_in(&self, domain: &Domain) -> Result<()> {
        self.validate()?;
        match self.kind {
            BubbleKind::Interior => {
                if !domain.contains(&self.center) {
                    return Err(Error::Parameter("interior bubble centre outside the domain".into()));
                }
            }
            BubbleKind::Boundary => {
                unit_ball_chart_domain(domain)?;
                if (norm(&self.center) - 1.0).abs() > 1e-10 {
                    return Err(Error::Parameter(
                        "boundary bubble centre must lie on the boundary".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

fn unit_ball_chart_domain(domain: &Domain) -> Result<()> {
    match &domain.shape {
        Shape::Ball(b) if b.radius == 1.0 && norm(&b.center) == 0.0 => Ok(()),
        _ => Err(Error::Unsupported(
            "boundary charts are only available for the unit ball".into(),
        )),
    }
}

/// `θ(x) = μ + |x − x_α|`.
pub fn theta(spec: &BubbleSpec, x: &[f64]) -> f64 {
    spec.mu + dist(x, &spec.center)
}

/// Positive comparison bubble `(μ/(μ² + a|x − x_α|²))^{(n−2k)/2}`; the
/// index-0 bubble is the constant 1 and needs no spec.
pub fn positive_bubble(spec: &BubbleSpec, x: &[f64]) -> f64 {
    let a = bubble_a(spec.n, spec.k);
    let d = dist(x, &spec.center);
    (spec.mu / (spec.mu * spec.mu + a * d * d)).powf(half_weight(spec.n, spec.k))
}

fn profile_jet(spec: &BubbleSpec, y0: &[f64], order: usize) -> Result<Jet> {
    match &spec.profile {
        Profile::StandardPositive => Ok(standard_bubble_jet(spec.n, spec.k, y0, order)),
        Profile::ExternalJet { name, provider } => {
            let p = provider
                .as_ref()
                .ok_or_else(|| Error::Parameter(format!("profile {name} is not attached")))?;
            if order > p.smoothness() {
                return Err(Error::Parameter(format!(
                    "profile {name} is only C^{}",
                    p.smoothness()
                )));
            }
            p.jet(y0, order)
        }
    }
}

/// Jet of the localised bubble `V_α` at `x`.
pub fn bubble_jet(spec: &BubbleSpec, x: &[f64], order: usize, domain: &Domain) -> Result<Jet> {
    spec.validate()?;
    if order > 2 * spec.k {
        return Err(Error::Parameter(format!(
            "order {order} exceeds 2k = {}",
            2 * spec.k
        )));
    }
    let n = spec.n;
    let amp = spec.mu.powf(-half_weight(n, spec.k));
    let cut = Cutoff::default();
    match spec.kind {
        BubbleKind::Interior => {
            let d = domain.dist_to_boundary(&spec.center);
            if d <= 0.0 {
                return Err(Error::Parameter("interior bubble centre on the boundary".into()));
            }
            let rel = sub(x, &spec.center);
            let zc: Vec<f64> = rel.iter().map(|v| v / d).collect();
            if norm(&zc) >= cut.outer {
                return Ok(Jet::zero(n, order));
            }
            let y0: Vec<f64> = rel.iter().map(|v| v / spec.mu).collect();
            let v = rescale_jet(&profile_jet(spec, &y0, order)?, spec.mu).scale(amp);
            let chi = rescale_jet(&cut.jet(&zc, order), d);
            Ok(chi.mul(&v))
        }
        BubbleKind::Boundary => {
            unit_ball_chart_domain(domain)?;
            let chart = BallChart::new(&spec.center)?;
            let z0 = match chart.inverse(x) {
                Ok(z) => z,
                Err(_) => return Ok(Jet::zero(n, order)),
            };
            if norm(&z0) >= cut.outer {
                return Ok(Jet::zero(n, order));
            }
            let y0: Vec<f64> = z0.iter().map(|v| v / spec.mu).collect();
            let w = cut
                .jet(&z0, order)
                .mul(&rescale_jet(&profile_jet(spec, &y0, order)?, spec.mu).scale(amp));
            let inner = chart.inverse_jet(x, order)?;
            Ok(Jet::compose_multi(&w, &z0, &inner))
        }
    }
}

/// `V_α(x)`.
pub fn eval_v(spec: &BubbleSpec, x: &[f64], domain: &Domain) -> Result<f64> {
    Ok(bubble_jet(spec, x, 0, domain)?.value())
}

/// A localised bubble as a jet provider on its domain.
#[derive(Clone, Debug)]
pub struct LocalizedBubble {
    pub spec: BubbleSpec,
    pub domain: Domain,
}

impl JetProvider for LocalizedBubble {
    fn dim(&self) -> usize {
        self.spec.n
    }

    fn smoothness(&self) -> usize {
        2 * self.spec.k
    }

    fn jet(&self, x: &[f64], order: usize) -> Result<Jet> {
        bubble_jet(&self.spec, x, order, &self.domain)
    }
}

// ---------------------------------------------------------------------------
// Decay

/// Log–log decay slope of `|∇^l B|` at large radii.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecayReport {
    pub n: usize,
    pub k: usize,
    pub l: usize,
    pub slope: f64,
    pub expected: f64,
    pub deviation: f64,
    pub samples: Vec<(f64, f64)>,
}

/// Fits the decay slope of the Frobenius norm of `∇^l B` over `radii`.
pub fn check_decay(n: usize, k: usize, l: usize, radii: &[f64]) -> Result<DecayReport> {
    check_dims(n, k)?;
    if l > 2 * k {
        return Err(Error::Parameter(format!("derivative order {l} exceeds 2k")));
    }
    if radii.len() < 2
        || radii.windows(2).any(|w| w[1] <= w[0])
        || radii.iter().any(|r| *r <= 0.0)
    {
        return Err(Error::Parameter("radii must be positive and increasing".into()));
    }
    let samples: Vec<(f64, f64)> = radii
        .iter()
        .map(|&r| {
            let mut y = vec![0.0; n];
            y[0] = r;
            (r, standard_bubble_jet(n, k, &y, l).tensor_norm(l))
        })
        .collect();
    let xs: Vec<f64> = samples.iter().map(|s| s.0.ln()).collect();
    let ys: Vec<f64> = samples.iter().map(|s| s.1.ln()).collect();
    let slope = fit_slope(&xs, &ys);
    let expected = 2.0 * k as f64 - n as f64 - l as f64;
    Ok(DecayReport {
        n,
        k,
        l,
        slope,
        expected,
        deviation: (slope - expected).abs(),
        samples,
    })
}

// ---------------------------------------------------------------------------
// Kernel of the linearised operator at B

/// `Z_0 = (n−2k)/2 B + x·∇B` (index 0) or `Z_i = ∂_i B` (index `i ≥ 1`).
#[derive(Clone, Copy, Debug)]
pub struct KernelElement {
    pub n: usize,
    pub k: usize,
    pub index: usize,
}

impl JetProvider for KernelElement {
    fn dim(&self) -> usize {
        self.n
    }

    fn smoothness(&self) -> usize {
        usize::MAX - 1
    }

    fn jet(&self, x: &[f64], order: usize) -> Result<Jet> {
        let b = standard_bubble_jet(self.n, self.k, x, order + 1);
        if self.index == 0 {
            let vars = Jet::variables(x, order);
            let mut acc = b.truncate(order).scale(half_weight(self.n, self.k));
            for (i, v) in vars.iter().enumerate() {
                acc = acc.add(&v.mul(&b.derivative(i)));
            }
            Ok(acc)
        } else if self.index <= self.n {
            Ok(b.derivative(self.index - 1))
        } else {
            Err(Error::Parameter(format!("kernel index {} out of range", self.index)))
        }
    }
}

/// The `n + 1` explicit kernel elements at the standard bubble.
pub fn kernel_elements(n: usize, k: usize) -> Result<Vec<KernelElement>> {
    check_dims(n, k)?;
    Ok((0..=n).map(|index| KernelElement { n, k, index }).collect())
}

/// `(−Δ)^k Z − (2♯−1) B^{2♯−2} Z` at `x`.
pub fn linearized_residual(z: &KernelElement, x: &[f64]) -> Result<f64> {
    let (n, k) = (z.n, z.k);
    let lap = z.jet(x, 2 * k)?.neg_laplacian_pow(k)?.value();
    let p = critical_exponent(n as u32, k as u32);
    let b = standard_bubble(n, k, x);
    Ok(lap - (p - 1.0) * b.powf(p - 2.0) * z.value(x)?)
}

// ---------------------------------------------------------------------------
// Lower-order integrals I_A

/// Constant symmetric `(2p, 0)`-tensor classes accepted by [`compute_ia`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TensorSpec {
    /// `λ (T, T)`.
    Isotropic { lambda: f64 },
    /// `Σ a_{i_1}⋯a_{i_p} T_{i_1…i_p}²`.
    Diagonal { a: Vec<f64> },
}

fn radial_bubble_parts(n: usize, k: usize, mu: f64, r: f64) -> (f64, f64, f64) {
    // B_μ(r) = μ^{-e'} s^{-e}, s = 1 + a r²/μ², e = e' = (n-2k)/2
    let a = bubble_a(n, k) / (mu * mu);
    let e = half_weight(n, k);
    let amp = mu.powf(-e);
    let s = 1.0 + a * r * r;
    let b = amp * s.powf(-e);
    let b_over_r = -2.0 * a * e * amp * s.powf(-e - 1.0);
    let b2 = b_over_r + 4.0 * a * a * e * (e + 1.0) * r * r * amp * s.powf(-e - 2.0);
    (b, b_over_r, b2)
}

/// `I_A` for the bubble rescaled by `μ`, over `R^n` or the half-space
/// through its centre (where it is half the whole-space value by symmetry).
pub fn compute_ia_scaled(
    tensor: &TensorSpec,
    n: usize,
    k: usize,
    p: usize,
    half_space: bool,
    mu: f64,
) -> Result<QuadratureResult> {
    check_dims(n, k)?;
    if p >= k {
        return Err(Error::Parameter(format!("need p ≤ k − 1, got p={p}, k={k}")));
    }
    if p > 2 {
        return Err(Error::Unsupported(format!("p = {p} > 2")));
    }
    if n <= 4 * k - 2 * p {
        return Err(Error::Divergent(format!(
            "|∇^p B|² is not integrable for n={n} ≤ 4k − 2p = {}",
            4 * k - 2 * p
        )));
    }
    let nf = n as f64;
    let weight: Box<dyn Fn(f64) -> f64 + Sync> = match (tensor, p) {
        (TensorSpec::Isotropic { lambda }, 0) => {
            let l = *lambda;
            Box::new(move |r| l * radial_bubble_parts(n, k, mu, r).0.powi(2))
        }
        (TensorSpec::Isotropic { lambda }, 1) => {
            let l = *lambda;
            Box::new(move |r| {
                let (_, bor, _) = radial_bubble_parts(n, k, mu, r);
                l * (bor * r).powi(2)
            })
        }
        (TensorSpec::Isotropic { lambda }, _) => {
            let l = *lambda;
            Box::new(move |r| {
                let (_, bor, b2) = radial_bubble_parts(n, k, mu, r);
                l * (b2 * b2 + (nf - 1.0) * bor * bor)
            })
        }
        (TensorSpec::Diagonal { a }, _) if a.len() != n => {
            return Err(Error::Parameter(format!(
                "diagonal tensor needs {n} entries, got {}",
                a.len()
            )));
        }
        (TensorSpec::Diagonal { .. }, 0) => {
            return Err(Error::Parameter("diagonal class needs p ≥ 1".into()));
        }
        (TensorSpec::Diagonal { a }, 1) => {
            let s1: f64 = a.iter().sum();
            Box::new(move |r| {
                let (_, bor, _) = radial_bubble_parts(n, k, mu, r);
                s1 / nf * (bor * r).powi(2)
            })
        }
        (TensorSpec::Diagonal { a }, _) => {
            // angular averages: <x̂_i²> = 1/n, <x̂_i² x̂_j²> = (1 + 2δ_ij)/(n(n+2))
            let s1: f64 = a.iter().sum();
            let s2: f64 = a.iter().map(|v| v * v).sum();
            Box::new(move |r| {
                let (_, bor, b2) = radial_bubble_parts(n, k, mu, r);
                let d = b2 - bor;
                d * d * (s1 * s1 + 2.0 * s2) / (nf * (nf + 2.0))
                    + 2.0 * d * bor * s2 / nf
                    + bor * bor * s2
            })
        }
    };
    let decay = 2.0 * (nf - 2.0 * k as f64) + 2.0 * p as f64;
    // integrate in the unscaled variable r = μ ρ for conditioning
    let scaled = |rho: f64| weight(mu * rho) * mu.powf(nf);
    let res = quad::integrate_radial_infinite(scaled, n, 0.0, decay, 1e-12)?;
    let f = if half_space { 0.5 } else { 1.0 };
    Ok(QuadratureResult {
        value: f * res.value,
        error_estimate: f * res.error_estimate,
        ..res
    })
}

/// `I_A(x0, B) = ∫ A_p(∇^p B, ∇^p B)` for the standard bubble.
pub fn compute_ia(tensor: &TensorSpec, n: usize, k: usize, p: usize, half_space: bool) -> Result<f64> {
    Ok(compute_ia_scaled(tensor, n, k, p, half_space, 1.0)?.value)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignVerdict {
    Positive,
    Negative,
    Violated,
}

/// Result of [`check_sign_condition`]. The check only covers the standard
/// bubble profile, so `Positive`/`Negative` is necessary for the condition
/// but not sufficient.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SignReport {
    pub verdict: SignVerdict,
    /// `(whole space, half space)` values per sample.
    pub values: Vec<(f64, f64)>,
    /// First sample that is zero or disagrees in sign with sample 0.
    pub witness: Option<usize>,
}

pub fn check_sign_condition(samples: &[TensorSpec], n: usize, k: usize, p: usize) -> Result<SignReport> {
    if samples.is_empty() {
        return Err(Error::Parameter("no tensor samples".into()));
    }
    let mut values = Vec::with_capacity(samples.len());
    for t in samples {
        values.push((compute_ia(t, n, k, p, false)?, compute_ia(t, n, k, p, true)?));
    }
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.0.abs()));
    let sign = |v: f64| -> i8 {
        if v.abs() <= 1e-12 * scale.max(f64::MIN_POSITIVE) {
            0
        } else if v > 0.0 {
            1
        } else {
            -1
        }
    };
    let s0 = sign(values[0].0);
    let witness = values
        .iter()
        .position(|v| sign(v.0) == 0 || sign(v.1) == 0 || sign(v.0) != s0 || sign(v.1) != s0);
    let verdict = match (witness, s0) {
        (Some(_), _) | (None, 0) => SignVerdict::Violated,
        (None, 1) => SignVerdict::Positive,
        (None, _) => SignVerdict::Negative,
    };
    Ok(SignReport {
        verdict,
        values,
        witness,
    })
}

/// `‖B‖²_{D^{k,2}} = ∫ B^{2♯}` (the two agree for the standard bubble).
pub fn bubble_energy(n: usize, k: usize) -> Result<f64> {
    check_dims(n, k)?;
    let p = critical_exponent(n as u32, k as u32);
    let nf = n as f64;
    Ok(quad::integrate_radial_infinite(
        |r| standard_bubble(n, k, &[r]).powf(p),
        n,
        0.0,
        2.0 * nf,
        1e-13,
    )?
    .value)
}

/// `∫_Ω |∇^k V_α|²` for an interior bubble, by radial reduction about its
/// centre (the cut-off is radial there).
pub fn interior_energy(spec: &BubbleSpec, domain: &Domain) -> Result<QuadratureResult> {
    if spec.kind != BubbleKind::Interior {
        return Err(Error::Unsupported("radial energy needs an interior bubble".into()));
    }
    let d = domain.dist_to_boundary(&spec.center);
    let n = spec.n;
    let k = spec.k;
    let g = |r: f64| -> f64 {
        let mut x = spec.center.clone();
        x[0] += r;
        bubble_jet(spec, &x, k, domain)
            .map(|j| j.tensor_norm(k).powi(2))
            .unwrap_or(f64::NAN)
    };
    // split at the bubble scale so the adaptive rule sees the peak
    let cut = d.min(Cutoff::default().outer * d);
    let mut total = 0.0;
    let mut err = 0.0;
    let mut used = 0;
    let mut lo = 0.0;
    for hi in [spec.mu.min(cut), (10.0 * spec.mu).min(cut), (100.0 * spec.mu).min(cut), cut] {
        if hi <= lo {
            continue;
        }
        let part = quad::integrate_interval(
            |r| g(r) * r.powi(n as i32 - 1),
            lo,
            hi,
            1e-11,
            4000,
        )?;
        total += part.value;
        err += part.error_estimate;
        used += part.samples_used;
        lo = hi;
    }
    let area = crate::util::sphere_area(n);
    Ok(QuadratureResult {
        value: area * total,
        error_estimate: area * err,
        method: quad::Method::DeterministicRadial,
        samples_used: used,
    })
}

/// Unit ball domain used by boundary bubbles.
pub fn unit_ball(n: usize) -> Domain {
    Domain::new(Shape::Ball(Ball::unit(n)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theta_and_positive_bubble() {
        let s = BubbleSpec::interior(5, 1, vec![0.0; 5], 0.1).unwrap();
        assert_eq!(theta(&s, &s.center), 0.1);
        let mut x = vec![0.0; 5];
        x[0] = 1.0;
        assert!((theta(&s, &x) - 1.1).abs() < 1e-15);
        assert!((positive_bubble(&s, &s.center) - 0.1f64.powf(-1.5)).abs() < 1e-9);
    }

    #[test]
    fn cutoff_plateaus() {
        let c = Cutoff::default();
        assert_eq!(c.value(&[0.3, 0.3]), 1.0);
        assert_eq!(c.value(&[1.0, 0.0]), 0.0);
        let v = c.value(&[0.75, 0.0]);
        assert!((v - 0.5).abs() < 1e-15);
    }

    #[test]
    fn arc_ratio_series_matches_function() {
        for c0 in [0.99, 0.7, 0.2, -0.6] {
            let s = arc_ratio_series(c0, 3);
            let f = |c: f64| c.acos() / (1.0 - c * c).sqrt();
            assert!((s[0] - f(c0)).abs() < 1e-13);
            let h = 1e-5;
            let d1 = (f(c0 + h) - f(c0 - h)) / (2.0 * h);
            assert!((s[1] - d1).abs() < 1e-7 * s[1].abs().max(1.0), "c0={c0}");
        }
        assert!((arc_ratio_series(1.0, 1)[1] + 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn chart_round_trip_and_isometry() {
        let x0 = [0.6, 0.0, 0.8];
        let ch = BallChart::new(&x0).unwrap();
        let z = [0.2, 0.3, -0.1];
        let x = ch.forward(&z);
        let back = ch.inverse(&x).unwrap();
        for i in 0..3 {
            assert!((back[i] - z[i]).abs() < 1e-13);
        }
        // dσ(0)[−e_1] is the outward normal
        let h = 1e-7;
        let xm = ch.forward(&[-h, 0.0, 0.0]);
        for i in 0..3 {
            assert!(((xm[i] - x0[i]) / h - x0[i]).abs() < 1e-6);
        }
        let jets = ch.inverse_jet(&x, 2).unwrap();
        for i in 0..3 {
            assert!((jets[i].value() - z[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn kernel_values_at_origin() {
        let ks = kernel_elements(7, 2).unwrap();
        assert_eq!(ks.len(), 8);
        let o = vec![0.0; 7];
        assert!((ks[0].value(&o).unwrap() - 1.5).abs() < 1e-15);
        assert_eq!(ks[3].value(&o).unwrap(), 0.0);
        let x = [0.3, -0.2, 0.5, 0.1, 0.0, 0.7, -0.4];
        for z in &ks {
            assert!(linearized_residual(z, &x).unwrap().abs() < 1e-10);
        }
    }

    #[test]
    fn ia_divergence_and_zero() {
        assert!(matches!(
            compute_ia(&TensorSpec::Isotropic { lambda: 1.0 }, 5, 2, 0, false),
            Err(Error::Divergent(_))
        ));
        assert_eq!(compute_ia(&TensorSpec::Isotropic { lambda: 0.0 }, 7, 1, 0, false).unwrap(), 0.0);
    }
}
