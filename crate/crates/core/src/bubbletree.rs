//! Bubble-tree configurations `W = u_0 + Σ V^i + Σ ν^{ij} Z^{ij}`: the
//! structure relation, interaction sets, radii of influence, regions of
//! influence and measured dominance/interaction constants.
//!
//! Bubbles are indexed from 1 in decreasing order of scale; index 0 is the
//! non-concentrating slot with comparison function `B^0 ≡ 1`.
//!
//! Whether `μ^j = o(μ^i)` is a statement about sequences. A configuration
//! carrying a [`FamilyLaw`] answers it exactly from exponents; a bare
//! snapshot answers it with a ratio threshold and refuses borderline pairs.

use crate::bubbles::{
    bubble_a, bubble_jet, check_dims, half_weight, positive_bubble, theta, BubbleKind, BubbleSpec,
    KernelElement, Profile,
};
use crate::error::{Error, Result};
use crate::jet::{check_order, Jet, JetProvider};
use crate::quad::{direction, mix_seed, sobol, Ball, Domain, Shape};
use crate::util::{dist, norm};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::Normal;
use std::fmt;
use std::sync::Arc;

// ---------------------------------------------------------------------------
// Configuration

/// Power law `μ(α) = c α^{−γ}`, `x(α) = x_∞ + α^{−δ} d` for one bubble.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BubbleLaw {
    pub c: f64,
    pub gamma: f64,
    pub x_inf: Vec<f64>,
    #[serde(default)]
    pub delta: f64,
    /// Empty means no drift.
    #[serde(default)]
    pub d: Vec<f64>,
    #[serde(default = "interior_kind")]
    pub kind: BubbleKind,
}

fn interior_kind() -> BubbleKind {
    BubbleKind::Interior
}

impl BubbleLaw {
    pub fn new(c: f64, gamma: f64, x_inf: Vec<f64>) -> Self {
        Self {
            c,
            gamma,
            x_inf,
            delta: 0.0,
            d: Vec::new(),
            kind: BubbleKind::Interior,
        }
    }

    pub fn with_drift(mut self, delta: f64, d: Vec<f64>) -> Self {
        self.delta = delta;
        self.d = d;
        self
    }

    pub fn mu(&self, alpha: f64) -> f64 {
        self.c * alpha.powf(-self.gamma)
    }

    /// Centre at `α`; boundary centres are projected back onto the unit sphere.
    pub fn center(&self, alpha: f64) -> Vec<f64> {
        let mut x = self.x_inf.clone();
        if !self.d.is_empty() {
            let t = alpha.powf(-self.delta);
            x.iter_mut().zip(&self.d).for_each(|(v, d)| *v += t * d);
        }
        if self.kind == BubbleKind::Boundary {
            let r = norm(&x);
            x.iter_mut().for_each(|v| *v /= r);
        }
        x
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyLaw {
    pub alpha: f64,
    pub laws: Vec<BubbleLaw>,
}

/// Coefficient `ν^{ij}` of the kernel element `Z^{ij}` (`index` as in
/// [`KernelElement`]).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NuTerm {
    pub bubble: usize,
    pub index: usize,
    pub value: f64,
}

/// The weak-limit slot `u_0`.
#[derive(Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum U0Slot {
    Constant(f64),
    ExternalJet {
        name: String,
        #[serde(skip)]
        provider: Option<Arc<dyn JetProvider>>,
    },
}

impl Default for U0Slot {
    fn default() -> Self {
        U0Slot::Constant(0.0)
    }
}

impl fmt::Debug for U0Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            U0Slot::Constant(c) => write!(f, "Constant({c})"),
            U0Slot::ExternalJet { name, .. } => write!(f, "ExternalJet({name})"),
        }
    }
}

impl PartialEq for U0Slot {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (U0Slot::Constant(a), U0Slot::Constant(b)) => a == b,
            (U0Slot::ExternalJet { name: a, .. }, U0Slot::ExternalJet { name: b, .. }) => a == b,
            _ => false,
        }
    }
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeConfig {
    pub n: usize,
    pub k: usize,
    /// Defaults to the unit ball.
    #[serde(default)]
    pub domain: Option<Domain>,
    /// Filled from `family_law` when empty.
    #[serde(default)]
    pub bubbles: Vec<BubbleSpec>,
    #[serde(default)]
    pub nu: Vec<NuTerm>,
    #[serde(default = "default_true")]
    pub include_u0: bool,
    #[serde(default)]
    pub u0: U0Slot,
    #[serde(default)]
    pub family_law: Option<FamilyLaw>,
}

impl TreeConfig {
    /// Snapshot configuration; bubbles are renumbered by decreasing scale.
    pub fn new(n: usize, k: usize, domain: Domain, mut bubbles: Vec<BubbleSpec>) -> Result<Self> {
        bubbles.sort_by(|a, b| b.mu.total_cmp(&a.mu));
        let cfg = Self {
            n,
            k,
            domain: Some(domain),
            bubbles,
            nu: Vec::new(),
            include_u0: true,
            u0: U0Slot::default(),
            family_law: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Configuration following a power-law family, instantiated at `law.alpha`.
    pub fn from_family(n: usize, k: usize, domain: Domain, mut law: FamilyLaw) -> Result<Self> {
        law.laws.sort_by(|a, b| {
            a.gamma
                .total_cmp(&b.gamma)
                .then_with(|| b.c.total_cmp(&a.c))
        });
        let mut cfg = Self {
            n,
            k,
            domain: Some(domain),
            bubbles: Vec::new(),
            nu: Vec::new(),
            include_u0: true,
            u0: U0Slot::default(),
            family_law: Some(law),
        };
        cfg.instantiate()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut cfg: Self = serde_json::from_str(text)?;
        if cfg.bubbles.is_empty() && cfg.family_law.is_some() {
            cfg.instantiate()?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn with_nu(mut self, nu: Vec<NuTerm>) -> Result<Self> {
        self.nu = nu;
        self.validate()?;
        Ok(self)
    }

    pub fn with_u0(mut self, u0: U0Slot) -> Result<Self> {
        self.u0 = u0;
        self.validate()?;
        Ok(self)
    }

    /// The same family at another value of `α`.
    pub fn at_alpha(&self, alpha: f64) -> Result<Self> {
        let mut cfg = self.clone();
        match cfg.family_law.as_mut() {
            Some(l) => l.alpha = alpha,
            None => return Err(Error::Parameter("configuration has no family law".into())),
        }
        cfg.instantiate()?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn instantiate(&mut self) -> Result<()> {
        let law = self.family_law.as_ref().expect("family law present");
        if !(law.alpha >= 1.0 && law.alpha.is_finite()) {
            return Err(Error::Parameter(format!("α must be ≥ 1, got {}", law.alpha)));
        }
        let profiles: Vec<Profile> = self.bubbles.iter().map(|b| b.profile.clone()).collect();
        self.bubbles = law
            .laws
            .iter()
            .enumerate()
            .map(|(i, l)| BubbleSpec {
                kind: l.kind,
                n: self.n,
                k: self.k,
                center: l.center(law.alpha),
                mu: l.mu(law.alpha),
                profile: profiles.get(i).cloned().unwrap_or(Profile::StandardPositive),
            })
            .collect();
        Ok(())
    }

    pub fn domain(&self) -> Domain {
        self.domain.clone().unwrap_or_else(|| Domain::unit_ball(self.n))
    }

    pub fn len(&self) -> usize {
        self.bubbles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bubbles.is_empty()
    }

    /// Bubble `i` (1-based).
    pub fn bubble(&self, i: usize) -> &BubbleSpec {
        &self.bubbles[i - 1]
    }

    pub fn validate(&self) -> Result<()> {
        check_dims(self.n, self.k)?;
        let domain = self.domain();
        domain.validate()?;
        if domain.dim() != self.n {
            return Err(Error::Parameter("domain dimension differs from n".into()));
        }
        for (i, b) in self.bubbles.iter().enumerate() {
            if b.n != self.n || b.k != self.k {
                return Err(Error::Parameter(format!("bubble {} has different (n, k)", i + 1)));
            }
            b.validate_in(&domain)?;
            if b.mu >= 1.0 {
                return Err(Error::Parameter(format!("bubble {} has scale ≥ 1", i + 1)));
            }
        }
        for w in self.bubbles.windows(2) {
            if w[1].mu > w[0].mu {
                return Err(Error::Parameter(
                    "bubbles must be numbered by nonincreasing scale".into(),
                ));
            }
        }
        if let Some(law) = &self.family_law {
            if law.laws.len() != self.bubbles.len() {
                return Err(Error::Parameter("family law and bubble list differ in length".into()));
            }
            for (i, l) in law.laws.iter().enumerate() {
                if !(l.gamma > 0.0 && l.c > 0.0) {
                    return Err(Error::Parameter(format!("law {} needs c, γ > 0", i + 1)));
                }
                if l.x_inf.len() != self.n || !(l.d.is_empty() || l.d.len() == self.n) {
                    return Err(Error::Parameter(format!("law {} has wrong dimension", i + 1)));
                }
                if (l.mu(law.alpha) - self.bubbles[i].mu).abs() > 1e-12 * self.bubbles[i].mu {
                    return Err(Error::Parameter(format!(
                        "bubble {} does not match its law at α = {}",
                        i + 1,
                        law.alpha
                    )));
                }
            }
            for w in law.laws.windows(2) {
                if w[1].gamma < w[0].gamma || (w[1].gamma == w[0].gamma && w[1].c > w[0].c) {
                    return Err(Error::Parameter(
                        "laws must be numbered by nonincreasing scale".into(),
                    ));
                }
            }
        }
        for t in &self.nu {
            if t.bubble == 0 {
                return Err(Error::Unsupported(
                    "kernel elements of the u_0 slot are not available".into(),
                ));
            }
            if t.bubble > self.bubbles.len() {
                return Err(Error::Parameter(format!("ν refers to missing bubble {}", t.bubble)));
            }
            if t.index > self.n {
                return Err(Error::Parameter(format!("kernel index {} out of range", t.index)));
            }
            if self.bubbles[t.bubble - 1].profile != Profile::StandardPositive {
                return Err(Error::Unsupported(format!(
                    "bubble {} has an external profile without kernel jets",
                    t.bubble
                )));
            }
        }
        if let U0Slot::ExternalJet { name, provider } = &self.u0 {
            match provider {
                Some(p) if p.dim() == self.n => {}
                Some(_) => return Err(Error::Parameter(format!("u_0 profile {name} has wrong dimension"))),
                None => return Err(Error::Parameter(format!("u_0 profile {name} is not attached"))),
            }
        }
        Ok(())
    }

    /// `B^i(x)`, with `B^0 ≡ 1`.
    pub fn b(&self, i: usize, x: &[f64]) -> f64 {
        if i == 0 {
            1.0
        } else {
            positive_bubble(self.bubble(i), x)
        }
    }

    /// `θ_i(x)^{−l} B^i(x)`, with `θ_0 ≡ 1`.
    pub fn weight(&self, i: usize, l: usize, x: &[f64]) -> f64 {
        if i == 0 {
            1.0
        } else {
            let b = self.bubble(i);
            theta(b, x).powi(-(l as i32)) * positive_bubble(b, x)
        }
    }

    /// `[1] + Σ_i θ_i^{−l} B^i`, the leading constant only when `include_u0`.
    pub fn weight_sum(&self, l: usize, x: &[f64]) -> f64 {
        let lead = if self.include_u0 { 1.0 } else { 0.0 };
        lead + (1..=self.len()).map(|i| self.weight(i, l, x)).sum::<f64>()
    }
}

// ---------------------------------------------------------------------------
// Structure relation and classification

/// `ε^{ij} = |x^i − x^j|²/(μ^iμ^j) + μ^i/μ^j + μ^j/μ^i`.
pub fn epsilon(cfg: &TreeConfig, i: usize, j: usize) -> Result<f64> {
    if i == j {
        return Err(Error::Parameter("ε needs two distinct bubbles".into()));
    }
    if i == 0 || j == 0 || i > cfg.len() || j > cfg.len() {
        return Err(Error::Parameter(format!("bubble indices ({i}, {j}) out of range")));
    }
    let (a, b) = (cfg.bubble(i), cfg.bubble(j));
    let d = dist(&a.center, &b.center);
    Ok(d * d / (a.mu * b.mu) + a.mu / b.mu + b.mu / a.mu)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ClassifyMode {
    /// `μ^j/μ^i < threshold` means `o`, `≥ comparable` means comparable,
    /// anything between is refused.
    Snapshot { threshold: f64, comparable: f64 },
    FamilyLaw,
}

impl ClassifyMode {
    pub fn snapshot() -> Self {
        ClassifyMode::Snapshot {
            threshold: 1e-2,
            comparable: 1e-1,
        }
    }
}

/// How the smaller scale of a pair compares with the larger one.
#[derive(Clone, Copy, Debug, PartialEq)]
enum Relation {
    Comparable { m: f64 },
    Faster,
}

/// Relation of `μ^hi` to `μ^lo` for `lo < hi`.
fn relation(cfg: &TreeConfig, mode: ClassifyMode, lo: usize, hi: usize) -> Result<Relation> {
    match mode {
        ClassifyMode::FamilyLaw => {
            let law = cfg
                .family_law
                .as_ref()
                .ok_or_else(|| Error::Parameter("family-law mode needs a family law".into()))?;
            let (a, b) = (&law.laws[lo - 1], &law.laws[hi - 1]);
            if (b.gamma - a.gamma).abs() <= 1e-12 * a.gamma.max(b.gamma) {
                Ok(Relation::Comparable {
                    m: a.c / b.c + b.c / a.c,
                })
            } else {
                Ok(Relation::Faster)
            }
        }
        ClassifyMode::Snapshot {
            threshold,
            comparable,
        } => {
            let ratio = cfg.bubble(hi).mu / cfg.bubble(lo).mu;
            if ratio < threshold {
                Ok(Relation::Faster)
            } else if ratio >= comparable {
                Ok(Relation::Comparable {
                    m: ratio + 1.0 / ratio,
                })
            } else {
                Err(Error::Ambiguous {
                    i: lo,
                    j: hi,
                    ratio,
                })
            }
        }
    }
}

/// Influence data of one bubble (all indices 1-based).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Influence {
    pub i: usize,
    /// Lower or comparable bubbles.
    pub a: Vec<usize>,
    /// Higher bubbles.
    pub a_c: Vec<usize>,
    /// Higher bubbles within `2 r^i`.
    pub b: Vec<usize>,
    /// `(j, s^{ij})` for `j ∈ A_i`.
    pub s: Vec<(usize, f64)>,
    pub r: f64,
    /// `(j, ρ^{ji})` for `j ∈ B_i`.
    pub rho: Vec<(usize, f64)>,
    /// `(j, m_{ij})` for comparable `j`.
    pub m: Vec<(usize, f64)>,
    /// `B(x^i, r^i)` minus the balls `B(x^j, ρ^{ji})`; points must also lie
    /// in the configuration domain, see [`InfluenceData::in_region`].
    pub region: Domain,
}

impl Influence {
    pub fn s_of(&self, j: usize) -> Option<f64> {
        self.s.iter().find(|(jj, _)| *jj == j).map(|p| p.1)
    }

    pub fn rho_of(&self, j: usize) -> Option<f64> {
        self.rho.iter().find(|(jj, _)| *jj == j).map(|p| p.1)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InfluenceData {
    pub mode: ClassifyMode,
    pub entries: Vec<Influence>,
}

impl InfluenceData {
    pub fn get(&self, i: usize) -> &Influence {
        &self.entries[i - 1]
    }

    /// Membership in `Ω^i = Ω ∩ (B(x^i, r^i) \ ∪ B(x^j, ρ^{ji}))`.
    pub fn in_region(&self, cfg: &TreeConfig, i: usize, x: &[f64]) -> bool {
        self.get(i).region.contains(x) && cfg.domain().contains(x)
    }
}

/// Classification in family-law mode when a law is present, snapshot mode
/// with default thresholds otherwise.
pub fn classify(cfg: &TreeConfig) -> Result<InfluenceData> {
    let mode = if cfg.family_law.is_some() {
        ClassifyMode::FamilyLaw
    } else {
        ClassifyMode::snapshot()
    };
    classify_with(cfg, mode)
}

pub fn classify_with(cfg: &TreeConfig, mode: ClassifyMode) -> Result<InfluenceData> {
    cfg.validate()?;
    if mode == ClassifyMode::FamilyLaw && cfg.family_law.is_none() {
        return Err(Error::Parameter("family-law mode needs a family law".into()));
    }
    let nb = cfg.len();
    let (n, k) = (cfg.n, cfg.k);
    let a_nk = bubble_a(n, k);
    // relations for all ordered pairs lo < hi
    let mut rel = vec![vec![None; nb + 1]; nb + 1];
    for lo in 1..=nb {
        for hi in lo + 1..=nb {
            rel[lo][hi] = Some(relation(cfg, mode, lo, hi)?);
        }
    }
    let mut entries = Vec::with_capacity(nb);
    for i in 1..=nb {
        let bi = cfg.bubble(i);
        let mut inf = Influence {
            i,
            a: Vec::new(),
            a_c: Vec::new(),
            b: Vec::new(),
            s: Vec::new(),
            r: 0.0,
            rho: Vec::new(),
            m: Vec::new(),
            region: Domain::unit_ball(n),
        };
        for j in (1..=nb).filter(|&j| j != i) {
            let r = if j < i { rel[j][i] } else { rel[i][j] }.expect("pair classified");
            let bj = cfg.bubble(j);
            let d = dist(&bi.center, &bj.center);
            let core = bi.mu / bj.mu * (bj.mu * bj.mu + a_nk * d * d) / a_nk;
            match (j < i, r) {
                (_, Relation::Comparable { m }) => {
                    inf.a.push(j);
                    inf.m.push((j, m));
                    inf.s.push((j, (core / (4.0 * m)).sqrt()));
                }
                (true, Relation::Faster) => {
                    inf.a.push(j);
                    inf.s.push((j, core.sqrt()));
                }
                (false, Relation::Faster) => inf.a_c.push(j),
            }
        }
        inf.r = inf.s.iter().map(|p| p.1).fold(bi.mu.sqrt(), f64::min);
        let ex = (n as f64 - 2.0 * k as f64) / (2.0 * (n as f64 - 1.0));
        for &j in &inf.a_c {
            let bj = cfg.bubble(j);
            let d = dist(&bi.center, &bj.center);
            if d <= 2.0 * inf.r {
                inf.b.push(j);
                inf.rho.push((j, 2.0 * (bj.mu / bi.mu).powf(ex) * (d + bi.mu)));
            }
        }
        inf.region = Domain::new(Shape::BallMinusBalls {
            outer: Ball::new(bi.center.clone(), inf.r),
            inner: inf
                .rho
                .iter()
                .map(|&(j, rho)| Ball::new(cfg.bubble(j).center.clone(), rho))
                .collect(),
        });
        entries.push(inf);
    }
    Ok(InfluenceData { mode, entries })
}

/// `s^{ij} + s^{ji}` against `|x^i − x^j|` for one comparable pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisjointnessCheck {
    pub i: usize,
    pub j: usize,
    pub radius_sum: f64,
    pub distance: f64,
}

impl DisjointnessCheck {
    pub fn disjoint(&self) -> bool {
        self.radius_sum <= self.distance
    }
}

/// Every comparable pair `i < j`.
pub fn comparable_disjointness(cfg: &TreeConfig, data: &InfluenceData) -> Vec<DisjointnessCheck> {
    let mut out = Vec::new();
    for e in &data.entries {
        for &(j, _) in &e.m {
            if j > e.i {
                let sji = data.get(j).s_of(e.i).expect("comparable pairs are symmetric");
                out.push(DisjointnessCheck {
                    i: e.i,
                    j,
                    radius_sum: e.s_of(j).expect("s defined on A_i") + sji,
                    distance: dist(&cfg.bubble(e.i).center, &cfg.bubble(j).center),
                });
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Sampling

/// Deterministic stratified sample points: for each `(centre, μ)` the centre
/// itself plus shells at radii `μ 2^t` up to `radius`, and a background of
/// uniform points in `B(bg_center, radius)`.
pub fn stratified_samples(
    centers: &[(Vec<f64>, f64)],
    bg_center: &[f64],
    radius: f64,
    count: usize,
    seed: u64,
) -> Vec<Vec<f64>> {
    let n = bg_center.len();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let mut out = Vec::with_capacity(count + centers.len());
    let per_center = if centers.is_empty() { 0 } else { count / (2 * centers.len()) };
    let mut dir = vec![0.0; n];
    for (ci, (c, mu)) in centers.iter().enumerate() {
        out.push(c.clone());
        let shells: Vec<f64> = (-4..)
            .map(|t| mu * 2f64.powi(t))
            .take_while(|r| *r <= 2.0 * radius)
            .collect();
        if shells.is_empty() {
            continue;
        }
        let per_shell = (per_center / shells.len()).max(2);
        let s = mix_seed(seed, ci, 1);
        // indexing keeps a larger count a superset of a smaller one
        for q in 0..per_shell {
            for (t, r) in shells.iter().enumerate() {
                direction(q * shells.len() + t, n, s, &normal, &mut dir);
                out.push(c.iter().zip(&dir).map(|(a, d)| a + r * d).collect());
            }
        }
    }
    let bg = count / 2;
    let s = mix_seed(seed, usize::MAX / 2, 2);
    for q in 0..bg {
        direction(q, n, s, &normal, &mut dir);
        let r = radius * sobol(q, 0, s).powf(1.0 / n as f64);
        out.push(bg_center.iter().zip(&dir).map(|(a, d)| a + r * d).collect());
    }
    out
}

/// Stratified points of `Ω^i` (may be empty if the region is tiny).
pub fn region_samples(
    cfg: &TreeConfig,
    data: &InfluenceData,
    i: usize,
    count: usize,
    seed: u64,
) -> Vec<Vec<f64>> {
    let e = data.get(i);
    let bi = cfg.bubble(i);
    let mut centers = vec![(bi.center.clone(), bi.mu)];
    for &(j, rho) in &e.rho {
        // shells hugging the excised balls
        centers.push((cfg.bubble(j).center.clone(), rho / 4.0));
    }
    stratified_samples(&centers, &bi.center, e.r, count, seed)
        .into_iter()
        .filter(|x| data.in_region(cfg, i, x))
        .collect()
}

/// Stratified points of the configuration domain.
pub fn domain_samples(cfg: &TreeConfig, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let domain = cfg.domain();
    let (c, r) = match &domain.shape {
        Shape::Ball(b) | Shape::HalfBall(b) | Shape::Sphere(b) => (b.center.clone(), b.radius),
        Shape::BallMinusBalls { outer, .. } => (outer.center.clone(), outer.radius),
        Shape::TruncatedSpace { n, r_max, .. } => (vec![0.0; *n], *r_max),
    };
    let centers: Vec<(Vec<f64>, f64)> = cfg
        .bubbles
        .iter()
        .map(|b| (b.center.clone(), b.mu))
        .collect();
    stratified_samples(&centers, &c, r, count, seed)
        .into_iter()
        .filter(|x| domain.contains(x) || domain.dist_to_boundary(x) < 1e-12)
        .collect()
}

fn par_max<F: Fn(&[f64]) -> f64 + Sync>(points: &[Vec<f64>], f: F) -> f64 {
    // chunked so the reduction order does not depend on the thread count
    points
        .par_chunks(512)
        .map(|c| c.iter().map(|x| f(x)).fold(f64::NEG_INFINITY, f64::max))
        .collect::<Vec<_>>()
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max)
}

// ---------------------------------------------------------------------------
// Dominance and interactions

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DominanceReport {
    pub i: usize,
    pub l: usize,
    /// `sup (1 + Σ_j θ_j^{−l}B^j)/(θ_i^{−l}B^i)` over the samples.
    pub constant: f64,
    pub samples: usize,
}

/// Measured constant of the pointwise dominance of bubble `i` on `Ω^i`.
pub fn check_dominance(
    cfg: &TreeConfig,
    data: &InfluenceData,
    i: usize,
    l: usize,
    sample_count: usize,
) -> Result<DominanceReport> {
    let pts = region_samples(cfg, data, i, sample_count, 0);
    if pts.is_empty() {
        return Err(Error::EmptyRegion(format!("no sample of the region of bubble {i}")));
    }
    let constant = par_max(&pts, |x| cfg.weight_sum(l, x) / cfg.weight(i, l, x));
    Ok(DominanceReport {
        i,
        l,
        constant,
        samples: pts.len(),
    })
}

/// Largest `θ_j^{−l}B^j/(θ_i^{−l}B^i)` over samples of `B(x^j, ρ^{ji})`
/// (`inside`) and of `B(x^i, r^i) \ B(x^j, ρ^{ji})` (`outside`):
/// `inside` holds the minimum ratio, `outside` the maximum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RhoSplit {
    pub inside_min: f64,
    pub outside_max: f64,
}

pub fn check_rho_split(
    cfg: &TreeConfig,
    data: &InfluenceData,
    i: usize,
    j: usize,
    l: usize,
    sample_count: usize,
) -> Result<RhoSplit> {
    let e = data.get(i);
    let rho = e
        .rho_of(j)
        .ok_or_else(|| Error::Parameter(format!("{j} is not in B_{i}")))?;
    let xi = &cfg.bubble(i).center;
    let xj = &cfg.bubble(j).center;
    let centers = vec![(xj.clone(), cfg.bubble(j).mu), (xi.clone(), cfg.bubble(i).mu)];
    let pts = stratified_samples(&centers, xi, e.r, sample_count, 1);
    let ratio = |x: &[f64]| cfg.weight(j, l, x) / cfg.weight(i, l, x);
    let mut inside_min = f64::INFINITY;
    let mut outside_max: f64 = 0.0;
    for x in pts.iter().filter(|x| dist(x, xi) < e.r) {
        let r = ratio(x);
        if dist(x, xj) < rho {
            inside_min = inside_min.min(r);
        } else {
            outside_max = outside_max.max(r);
        }
    }
    Ok(RhoSplit {
        inside_min,
        outside_max,
    })
}

/// `(max ε^{ij}^{−1/2}` over pairs with `j ∈ A_i`, `max (μ^j/μ^i)^{(2k−1)/(2(n−1))}`
/// over pairs with `j ∈ A_i^c)`; zero for empty maxima.
pub fn eta3_parts(cfg: &TreeConfig, data: &InfluenceData) -> Result<(f64, f64)> {
    let (n, k) = (cfg.n as f64, cfg.k as f64);
    let mut e1: f64 = 0.0;
    let mut e2: f64 = 0.0;
    for e in &data.entries {
        for &j in &e.a {
            e1 = e1.max(epsilon(cfg, e.i, j)?.powf(-0.5));
        }
        for &j in &e.a_c {
            let q = cfg.bubble(j).mu / cfg.bubble(e.i).mu;
            e2 = e2.max(q.powf((2.0 * k - 1.0) / (2.0 * (n - 1.0))));
        }
    }
    Ok((e1, e2))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InteractionReport {
    pub i: usize,
    pub lhs: f64,
    pub bound: f64,
    pub ratio: f64,
    pub samples: usize,
}

/// `(μ^i)^{(n+2k)/2} sup_{Ω^i} Σ_{r≠s} (B^r)^{2♯−2} B^s` against the bound
/// `η₁^m + η₂^m + (μ^i)^{(n−2k)/2} + (μ^i)^{2k}`, `m = min(n−2k, 4k)`.
///
/// The last two terms come from the pairs involving `B^0 ≡ 1` and are
/// dropped when `include_u0` is off.
pub fn interaction_sup(
    cfg: &TreeConfig,
    data: &InfluenceData,
    i: usize,
    sample_count: usize,
) -> Result<InteractionReport> {
    let (n, k) = (cfg.n, cfg.k);
    let p = 4.0 * k as f64 / (n - 2 * k) as f64; // 2♯ − 2
    let first = if cfg.include_u0 { 0 } else { 1 };
    let nb = cfg.len();
    let pts = region_samples(cfg, data, i, sample_count, 2);
    if pts.is_empty() {
        return Err(Error::EmptyRegion(format!("no sample of the region of bubble {i}")));
    }
    let sup = par_max(&pts, |x| {
        let b: Vec<f64> = (first..=nb).map(|r| cfg.b(r, x)).collect();
        let mut total = 0.0;
        for (r, br) in b.iter().enumerate() {
            let pr = br.powf(p);
            for (s, bs) in b.iter().enumerate() {
                if r != s {
                    total += pr * bs;
                }
            }
        }
        total
    });
    let mu = cfg.bubble(i).mu;
    let lhs = mu.powf((n + 2 * k) as f64 / 2.0) * sup;
    let (e1, e2) = eta3_parts(cfg, data)?;
    let m = ((n - 2 * k).min(4 * k)) as i32;
    let mut bound = e1.powi(m) + e2.powi(m);
    if cfg.include_u0 {
        bound += mu.powf(half_weight(n, k)) + mu.powi(2 * k as i32);
    }
    Ok(InteractionReport {
        i,
        lhs,
        bound,
        ratio: lhs / bound,
        samples: pts.len(),
    })
}

// ---------------------------------------------------------------------------
// Evaluation

/// `W` as a jet provider of order up to `2k`.
#[derive(Clone, Debug)]
pub struct BubbleTree {
    pub cfg: TreeConfig,
}

impl BubbleTree {
    pub fn new(cfg: TreeConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg })
    }
}

impl JetProvider for BubbleTree {
    fn dim(&self) -> usize {
        self.cfg.n
    }

    fn smoothness(&self) -> usize {
        2 * self.cfg.k
    }

    fn jet(&self, x: &[f64], order: usize) -> Result<Jet> {
        let cfg = &self.cfg;
        let domain = cfg.domain();
        let mut acc = match &cfg.u0 {
            U0Slot::Constant(c) => Jet::constant(cfg.n, order, *c),
            U0Slot::ExternalJet { provider, name } => {
                let p = provider
                    .as_ref()
                    .ok_or_else(|| Error::Parameter(format!("u_0 profile {name} is not attached")))?;
                check_order(p.as_ref(), order)?;
                p.jet(x, order)?
            }
        };
        for b in &cfg.bubbles {
            acc = acc.add(&bubble_jet(b, x, order, &domain)?);
        }
        for t in &cfg.nu {
            if t.value == 0.0 {
                continue;
            }
            let z = KernelElement {
                n: cfg.n,
                k: cfg.k,
                index: t.index,
            };
            let spec = cfg.bubble(t.bubble).clone().with_profile("kernel", Arc::new(z));
            acc = acc.add(&bubble_jet(&spec, x, order, &domain)?.scale(t.value));
        }
        Ok(acc)
    }
}

/// Frobenius norm of `∇^l W(x)`, `l ≤ 2k − 1`.
pub fn eval_tree(cfg: &TreeConfig, x: &[f64], l: usize) -> Result<f64> {
    if l >= 2 * cfg.k {
        return Err(Error::Parameter(format!("derivative order {l} exceeds 2k − 1")));
    }
    let tree = BubbleTree { cfg: cfg.clone() };
    Ok(tree.jet(x, l)?.tensor_norm(l))
}

/// `sup |∇^l W|/([1] + Σ θ^{−l}B)` over stratified samples of the domain.
pub fn tree_bound_constant(cfg: &TreeConfig, l: usize, sample_count: usize) -> Result<f64> {
    let pts = domain_samples(cfg, sample_count, 3);
    let tree = BubbleTree::new(cfg.clone())?;
    let vals: Result<Vec<f64>> = pts
        .par_iter()
        .map(|x| Ok(tree.jet(x, l)?.tensor_norm(l) / cfg.weight_sum(l, x)))
        .collect();
    Ok(vals?.into_iter().fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two(mu1: f64, mu2: f64, sep: f64) -> TreeConfig {
        let b1 = BubbleSpec::interior(7, 1, vec![-sep / 2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0], mu1).unwrap();
        let b2 = BubbleSpec::interior(7, 1, vec![sep / 2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0], mu2).unwrap();
        TreeConfig::new(7, 1, Domain::unit_ball(7), vec![b1, b2]).unwrap()
    }

    #[test]
    fn epsilon_examples() {
        let cfg = two(0.1, 0.1, 1.0);
        assert!((epsilon(&cfg, 1, 2).unwrap() - 102.0).abs() < 1e-10);
        assert_eq!(epsilon(&cfg, 1, 2).unwrap(), epsilon(&cfg, 2, 1).unwrap());
        assert!(epsilon(&cfg, 1, 1).is_err());
    }

    #[test]
    fn single_bubble_radius() {
        let b = BubbleSpec::interior(7, 1, vec![0.0; 7], 1e-3).unwrap();
        let cfg = TreeConfig::new(7, 1, Domain::unit_ball(7), vec![b]).unwrap();
        let d = classify(&cfg).unwrap();
        assert!(d.get(1).a.is_empty());
        assert!((d.get(1).r - 1e-3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn snapshot_ambiguity_is_refused() {
        let cfg = two(0.1, 0.004, 0.5);
        match classify(&cfg) {
            Err(Error::Ambiguous { i: 1, j: 2, .. }) => {}
            other => panic!("expected ambiguity, got {other:?}"),
        }
    }

    #[test]
    fn renumbering_on_construction() {
        let cfg = two(0.01, 0.1, 0.5);
        assert!(cfg.bubble(1).mu >= cfg.bubble(2).mu);
    }
}
