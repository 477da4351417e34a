//! Polyharmonic Pohozaev identity on balls, half-balls and annuli.
//!
//! With `E(u) = (−Δ)^k u − f|u|^{p−2}u` and `X = (x−ξ)·∇u` the boundary
//! remainder `P_k` satisfies
//!
//! ```text
//! P_k = ∫((n−2k)/2·u + X) E(u) + (1/p)∮(x−ξ,ν) f|u|^p
//!       + ((n−2k)/2 − n/p) ∫ f|u|^p − (1/p)∫ (x−ξ)·∇f |u|^p .
//! ```
//!
//! The left side is evaluated from its boundary expression, the right side by
//! volume quadrature, so the identity becomes a numerical residual.

use crate::error::{Error, Result};
use crate::jet::{check_order, Jet, JetProvider, LaplaceStack, MonomialTable};
use crate::quad::{boundary_nodes, integrate_nested, volume_nodes, Domain, NestedOptions, Shape};
use crate::util::dot;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

// ---------------------------------------------------------------------------
// Polynomials

/// Sparse real polynomial in `n` variables.
#[derive(Clone, Debug, PartialEq)]
pub struct Poly {
    n: usize,
    terms: BTreeMap<Vec<u8>, f64>,
}

impl Poly {
    pub fn zero(n: usize) -> Poly {
        Poly {
            n,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(n: usize, c: f64) -> Poly {
        let mut p = Poly::zero(n);
        p.insert(vec![0; n], c);
        p
    }

    pub fn variable(n: usize, i: usize) -> Poly {
        let mut e = vec![0; n];
        e[i] = 1;
        let mut p = Poly::zero(n);
        p.insert(e, 1.0);
        p
    }

    /// `|x|²`.
    pub fn radius_squared(n: usize) -> Poly {
        let mut p = Poly::zero(n);
        for i in 0..n {
            let mut e = vec![0; n];
            e[i] = 2;
            p.insert(e, 1.0);
        }
        p
    }

    pub fn from_terms(n: usize, terms: &[(Vec<u8>, f64)]) -> Result<Poly> {
        let mut p = Poly::zero(n);
        for (e, c) in terms {
            if e.len() != n {
                return Err(Error::Parameter(format!(
                    "exponent {e:?} does not have {n} entries"
                )));
            }
            p.insert(e.clone(), *c);
        }
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn degree(&self) -> usize {
        self.terms
            .keys()
            .map(|e| e.iter().map(|&v| v as usize).sum())
            .max()
            .unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&[u8], f64)> {
        self.terms.iter().map(|(e, c)| (e.as_slice(), *c))
    }

    fn insert(&mut self, e: Vec<u8>, c: f64) {
        let slot = self.terms.entry(e).or_insert(0.0);
        *slot += c;
        if *slot == 0.0 {
            self.terms.retain(|_, v| *v != 0.0);
        }
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let mut out = self.clone();
        for (e, c) in &other.terms {
            out.insert(e.clone(), *c);
        }
        out
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> Poly {
        let mut out = Poly::zero(self.n);
        for (e, c) in &self.terms {
            out.insert(e.clone(), c * s);
        }
        out
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        let mut out = Poly::zero(self.n);
        for (ea, ca) in &self.terms {
            for (eb, cb) in &other.terms {
                let e: Vec<u8> = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                out.insert(e, ca * cb);
            }
        }
        out
    }

    pub fn pow(&self, e: u32) -> Poly {
        (0..e).fold(Poly::constant(self.n, 1.0), |acc, _| acc.mul(self))
    }

    pub fn derivative(&self, i: usize) -> Poly {
        let mut out = Poly::zero(self.n);
        for (e, c) in &self.terms {
            if e[i] > 0 {
                let mut d = e.clone();
                d[i] -= 1;
                out.insert(d, c * e[i] as f64);
            }
        }
        out
    }

    pub fn laplacian(&self) -> Poly {
        (0..self.n).fold(Poly::zero(self.n), |acc, i| {
            acc.add(&self.derivative(i).derivative(i))
        })
    }

    pub fn neg_laplacian_pow(&self, i: usize) -> Poly {
        (0..i).fold(self.clone(), |acc, _| acc.laplacian().scale(-1.0))
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| {
                c * e
                    .iter()
                    .zip(x)
                    .map(|(&p, v)| v.powi(p as i32))
                    .product::<f64>()
            })
            .sum()
    }

    /// Exact Taylor jet at `x0`.
    pub fn jet(&self, x0: &[f64], order: usize) -> Jet {
        let n = self.n;
        let table = MonomialTable::get(n, order);
        let c: Vec<f64> = (0..table.size(order))
            .map(|idx| {
                let beta = table.exponent(idx);
                self.terms
                    .iter()
                    .filter(|(a, _)| a.iter().zip(beta).all(|(a, b)| a >= b))
                    .map(|(a, c)| {
                        let mut t = *c;
                        for i in 0..n {
                            t *= binomial(a[i], beta[i]) * x0[i].powi((a[i] - beta[i]) as i32);
                        }
                        t
                    })
                    .sum()
            })
            .collect();
        Jet::from_coeffs(n, order, c).expect("table size")
    }
}

fn binomial(a: u8, b: u8) -> f64 {
    (0..b).fold(1.0, |acc, j| acc * (a - j) as f64 / (j + 1) as f64)
}

/// Flat form for fast repeated evaluation against a shared power table.
#[derive(Clone, Debug)]
struct Compiled {
    exps: Vec<u8>,
    coefs: Vec<f64>,
}

impl Compiled {
    fn new(p: &Poly) -> Self {
        let mut exps = Vec::with_capacity(p.terms.len() * p.n);
        let mut coefs = Vec::with_capacity(p.terms.len());
        for (e, c) in &p.terms {
            exps.extend_from_slice(e);
            coefs.push(*c);
        }
        Self { exps, coefs }
    }

    fn eval(&self, n: usize, stride: usize, pw: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (t, c) in self.coefs.iter().enumerate() {
            let e = &self.exps[t * n..(t + 1) * n];
            let mut m = *c;
            for i in 0..n {
                m *= pw[i * stride + e[i] as usize];
            }
            acc += m;
        }
        acc
    }
}

/// A polynomial as a jet provider, with `(−Δ)^i u`, gradients and Hessians
/// precompiled up to `i = k`.
#[derive(Clone, Debug)]
pub struct PolyFunction {
    poly: Poly,
    k: usize,
    stride: usize,
    values: Vec<Compiled>,
    grad0: Vec<Compiled>,
    grads: Vec<Vec<Compiled>>,
    hessians: Vec<Vec<Compiled>>,
}

impl PolyFunction {
    pub fn new(poly: Poly, k: usize) -> Self {
        let n = poly.n;
        let mut values = Vec::new();
        let mut grads = Vec::new();
        let mut hessians = Vec::new();
        let mut cur = poly.clone();
        for i in 0..=k {
            values.push(Compiled::new(&cur));
            if i < k {
                let g: Vec<Poly> = (0..n).map(|a| cur.derivative(a)).collect();
                let mut h = Vec::with_capacity(n * n);
                for ga in &g {
                    for b in 0..n {
                        h.push(Compiled::new(&ga.derivative(b)));
                    }
                }
                grads.push(g.iter().map(Compiled::new).collect());
                hessians.push(h);
                cur = cur.laplacian().scale(-1.0);
            }
        }
        let grad0 = (0..n).map(|a| Compiled::new(&poly.derivative(a))).collect();
        Self {
            stride: poly.degree() + 1,
            poly,
            k,
            values,
            grad0,
            grads,
            hessians,
        }
    }

    pub fn poly(&self) -> &Poly {
        &self.poly
    }

    fn powers(&self, x: &[f64]) -> Vec<f64> {
        let s = self.stride;
        let mut pw = vec![1.0; x.len() * s];
        for (i, v) in x.iter().enumerate() {
            for j in 1..s {
                pw[i * s + j] = pw[i * s + j - 1] * v;
            }
        }
        pw
    }
}

impl JetProvider for PolyFunction {
    fn dim(&self) -> usize {
        self.poly.n
    }

    fn smoothness(&self) -> usize {
        usize::MAX
    }

    fn jet(&self, x: &[f64], order: usize) -> Result<Jet> {
        Ok(self.poly.jet(x, order))
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        Ok(self.poly.eval(x))
    }

    fn laplace_stack(&self, x: &[f64], k: usize) -> Result<LaplaceStack> {
        if k > self.k {
            return LaplaceStack::from_jet(&self.jet(x, 2 * k)?, k);
        }
        let (n, s) = (self.poly.n, self.stride);
        let pw = self.powers(x);
        let ev = |c: &Compiled| c.eval(n, s, &pw);
        Ok(LaplaceStack {
            k,
            values: self.values[..=k].iter().map(ev).collect(),
            grads: self.grads[..k].iter().map(|g| g.iter().map(ev).collect()).collect(),
            hessians: self.hessians[..k]
                .iter()
                .map(|h| h.iter().map(ev).collect())
                .collect(),
        })
    }

    fn laplace_values(&self, x: &[f64], k: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        if k > self.k {
            let jet = self.jet(x, 2 * k)?;
            let st = LaplaceStack::from_jet(&jet, k)?;
            return Ok((st.values, jet.gradient()));
        }
        let (n, s) = (self.poly.n, self.stride);
        let pw = self.powers(x);
        let ev = |c: &Compiled| c.eval(n, s, &pw);
        Ok((
            self.values[..=k].iter().map(ev).collect(),
            self.grad0.iter().map(ev).collect(),
        ))
    }
}

/// `u = (1 − |x|²)^k · poly`, which satisfies `∇^l u = 0` on the unit sphere
/// for `l ≤ k − 1`.
pub fn manufactured_dirichlet(k: usize, n: usize, poly: &Poly) -> Result<PolyFunction> {
    if poly.n != n {
        return Err(Error::Parameter(format!(
            "polynomial lives in R^{}, expected R^{n}",
            poly.n
        )));
    }
    if k == 0 {
        return Err(Error::Parameter("k must be positive".into()));
    }
    let base = Poly::constant(n, 1.0).sub(&Poly::radius_squared(n));
    Ok(PolyFunction::new(base.pow(k as u32).mul(poly), k))
}

/// The constant function, mostly as a coefficient `f`.
#[derive(Clone, Copy, Debug)]
pub struct ConstantFunction {
    pub n: usize,
    pub value: f64,
}

impl JetProvider for ConstantFunction {
    fn dim(&self) -> usize {
        self.n
    }

    fn smoothness(&self) -> usize {
        usize::MAX
    }

    fn jet(&self, _x: &[f64], order: usize) -> Result<Jet> {
        Ok(Jet::constant(self.n, order, self.value))
    }
}

// ---------------------------------------------------------------------------
// Pointwise pieces

fn check_exponent(p_exp: f64) -> Result<()> {
    if !(p_exp >= 2.0) || !p_exp.is_finite() {
        return Err(Error::Parameter(format!("exponent p = {p_exp} must be ≥ 2")));
    }
    Ok(())
}

/// `|u|^{p−2} u`.
fn nonlinearity(u: f64, p_exp: f64) -> f64 {
    if u == 0.0 {
        0.0
    } else {
        u.abs().powf(p_exp - 2.0) * u
    }
}

/// `E(u) = (−Δ)^k u − f|u|^{p−2}u` at the jet's base point.
pub fn e_operator(jet: &Jet, k: usize, f: f64, p_exp: f64) -> Result<f64> {
    check_exponent(p_exp)?;
    let top = jet.neg_laplacian_pow(k)?.value();
    Ok(top - f * nonlinearity(jet.value(), p_exp))
}

/// Value and gradient of `(−Δ)^i ((x−ξ)·∇u)` at `x`, through
/// `(−Δ)^i(y·∇u) = y·∇v_i + 2i v_i` with `v_i = (−Δ)^i u` and `y = x − ξ`.
pub fn x_grad_laplacian(
    stack: &LaplaceStack,
    i: usize,
    x: &[f64],
    xi: &[f64],
) -> Result<(f64, Vec<f64>)> {
    if i >= stack.k {
        return Err(Error::Parameter(format!(
            "need i < k = {} for the Hessian of (−Δ)^{i} u",
            stack.k
        )));
    }
    let n = x.len();
    let y: Vec<f64> = x.iter().zip(xi).map(|(a, b)| a - b).collect();
    let g = &stack.grads[i];
    let h = &stack.hessians[i];
    let two_i = 2.0 * i as f64;
    let value = dot(&y, g) + two_i * stack.values[i];
    let grad = (0..n)
        .map(|a| (1.0 + two_i) * g[a] + (0..n).map(|b| h[a * n + b] * y[b]).sum::<f64>())
        .collect();
    Ok((value, grad))
}

/// Boundary integrands `[P_k density, (x−ξ,ν)|(−Δ)^{k/2}u|²]` at `x`.
fn boundary_density(
    stack: &LaplaceStack,
    k: usize,
    x: &[f64],
    nu: &[f64],
    xi: &[f64],
) -> Result<(f64, f64)> {
    let n = x.len();
    let y: Vec<f64> = x.iter().zip(xi).map(|(a, b)| a - b).collect();
    let yn = dot(&y, nu);
    let v = &stack.values;
    let dn = |i: usize| dot(&stack.grads[i], nu);
    let (r, square) = if k % 2 == 0 {
        let s = v[k / 2] * v[k / 2];
        (0.5 * yn * s, s)
    } else {
        let m = (k - 1) / 2;
        let (xv, gxv) = x_grad_laplacian(stack, m, x, xi)?;
        // x_grad_laplacian includes 2m v_m; the odd remainder uses y·∇v_m alone
        let two_m = 2.0 * m as f64;
        let yv = xv - two_m * v[m];
        let dn_yv = dot(&gxv, nu) - two_m * dn(m);
        let g = &stack.grads[m];
        let s = dot(g, g);
        (
            0.5 * yn * v[m + 1] * v[m] + 0.5 * (v[m] * dn_yv - yv * dn(m)),
            s,
        )
    };
    let c = (n as f64 - 2.0 * k as f64) / 2.0;
    let mut total = r;
    for i in 0..k / 2 {
        let j = k - i - 1;
        total += c * (dn(i) * v[j] - v[i] * dn(j));
        let (w, gw) = x_grad_laplacian(stack, i, x, xi)?;
        total += dot(&gw, nu) * v[j] - w * dn(j);
    }
    Ok((total, yn * square))
}

// ---------------------------------------------------------------------------
// Integrals

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PohozaevOptions {
    /// Agreement demanded between successive quadrature levels.
    pub rel_tol: f64,
    pub max_level: usize,
    pub max_points: usize,
    /// `u` satisfies Dirichlet conditions of order `k` on the whole boundary.
    pub dirichlet: bool,
}

impl Default for PohozaevOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-11,
            max_level: 16,
            max_points: 8_000_000,
            dirichlet: false,
        }
    }
}

impl PohozaevOptions {
    fn nested(&self) -> NestedOptions {
        NestedOptions {
            rel_tol: self.rel_tol,
            max_points: self.max_points,
            max_level: self.max_level,
            ..Default::default()
        }
    }
}

/// The two Dirichlet shortcuts for `P_k`: the signed one
/// `(−1)^k/2·∮(x−ξ,ν)|(−Δ)^{k/2}u|²` and the uniformly negative one with
/// factor `−1/2`, each with its difference to the full value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirichletForms {
    pub signed: f64,
    pub negative: f64,
    pub diff_signed: f64,
    pub diff_negative: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PohozaevLhs {
    pub value: f64,
    pub error: f64,
    pub dirichlet: Option<DirichletForms>,
    pub dirichlet_error: f64,
    pub samples: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PohozaevTerms {
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
    pub t4: f64,
}

impl PohozaevTerms {
    pub fn sum(&self) -> f64 {
        self.t1 + self.t2 + self.t3 + self.t4
    }

    pub fn max_abs(&self) -> f64 {
        [self.t1, self.t2, self.t3, self.t4]
            .iter()
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PohozaevRhs {
    pub terms: PohozaevTerms,
    pub errors: [f64; 4],
    pub samples: usize,
}

fn check_setup(u: &dyn JetProvider, domain: &Domain, xi: &[f64], k: usize) -> Result<usize> {
    domain.validate()?;
    let n = domain.dim();
    if u.dim() != n || xi.len() != n {
        return Err(Error::Parameter("dimension mismatch between u, ξ and the domain".into()));
    }
    if k == 0 || n <= 2 * k {
        return Err(Error::Parameter(format!("need n > 2k ≥ 2, got n = {n}, k = {k}")));
    }
    match domain.shape {
        Shape::Ball(_) | Shape::HalfBall(_) | Shape::BallMinusBalls { .. } => {}
        _ => {
            return Err(Error::Unsupported(
                "Pohozaev terms need a ball, half-ball or punctured ball".into(),
            ))
        }
    }
    check_order(u, 2 * k)?;
    Ok(n)
}

fn converged(out: &crate::quad::NestedOutcome, what: &str) -> Result<()> {
    if out.converged {
        Ok(())
    } else {
        Err(Error::Accuracy {
            message: format!("{what} quadrature did not converge"),
            partial: out.values[0],
            estimate: out.errors.iter().fold(0.0, |m, e| m.max(*e)),
        })
    }
}

struct BoundaryPass {
    values: [f64; 3],
    errors: [f64; 3],
    samples: usize,
}

/// One boundary sweep for `[P_k, ∮(x−ξ,ν)|(−Δ)^{k/2}u|², T2]`; sharing the
/// sweep lets null components converge against the others' scale.
fn boundary_pass(
    u: &dyn JetProvider,
    f: Option<(&dyn JetProvider, f64)>,
    domain: &Domain,
    xi: &[f64],
    k: usize,
    opts: PohozaevOptions,
) -> Result<BoundaryPass> {
    let out = integrate_nested(
        |level| boundary_nodes(domain, level),
        3,
        |x, nu, acc| {
            let nu = nu.expect("boundary nodes carry normals");
            // failures surface as NaN and are re-raised below
            let Ok((p, s)) = u
                .laplace_stack(x, k)
                .and_then(|st| boundary_density(&st, k, x, nu, xi))
            else {
                acc.iter_mut().for_each(|a| *a = f64::NAN);
                return;
            };
            acc[0] = p;
            acc[1] = s;
            if let Some((f, p_exp)) = f {
                let (Ok(uv), Ok(fv)) = (u.value(x), f.value(x)) else {
                    acc[2] = f64::NAN;
                    return;
                };
                let yn: f64 = x.iter().zip(xi).zip(nu).map(|((a, b), c)| (a - b) * c).sum();
                acc[2] = yn * fv * uv.abs().powf(p_exp) / p_exp;
            }
        },
        opts.nested(),
    )?;
    if out.values.iter().any(|v| v.is_nan()) {
        return Err(Error::Parameter(
            "evaluation of u or f failed on the boundary".into(),
        ));
    }
    converged(&out, "boundary")?;
    Ok(BoundaryPass {
        values: [out.values[0], out.values[1], out.values[2]],
        errors: [out.errors[0], out.errors[1], out.errors[2]],
        samples: out.samples_used,
    })
}

fn lhs_from(pass: &BoundaryPass, k: usize, dirichlet: bool) -> PohozaevLhs {
    let value = pass.values[0];
    let dirichlet = dirichlet.then(|| {
        let sign = if k % 2 == 0 { 0.5 } else { -0.5 };
        let signed = sign * pass.values[1];
        let negative = -0.5 * pass.values[1];
        DirichletForms {
            signed,
            negative,
            diff_signed: value - signed,
            diff_negative: value - negative,
        }
    });
    PohozaevLhs {
        value,
        error: pass.errors[0],
        dirichlet,
        dirichlet_error: 0.5 * pass.errors[1],
        samples: pass.samples,
    }
}

/// `P_k` from its boundary expression; with `opts.dirichlet` also the two
/// Dirichlet shortcuts.
pub fn pohozaev_lhs(
    u: &dyn JetProvider,
    domain: &Domain,
    xi: &[f64],
    k: usize,
    opts: PohozaevOptions,
) -> Result<PohozaevLhs> {
    check_setup(u, domain, xi, k)?;
    let pass = boundary_pass(u, None, domain, xi, k, opts)?;
    Ok(lhs_from(&pass, k, opts.dirichlet))
}

fn volume_pass(
    u: &dyn JetProvider,
    f: &dyn JetProvider,
    p_exp: f64,
    domain: &Domain,
    xi: &[f64],
    k: usize,
    opts: PohozaevOptions,
    abs_tol: f64,
) -> Result<crate::quad::NestedOutcome> {
    let n = domain.dim();
    let c = (n as f64 - 2.0 * k as f64) / 2.0;
    let c3 = c - n as f64 / p_exp;
    let vol = integrate_nested(
        |level| volume_nodes(domain, level),
        3,
        |x, _, acc| {
            let (Ok((v, g)), Ok(fj)) = (u.laplace_values(x, k), f.jet(x, 1)) else {
                acc.iter_mut().for_each(|a| *a = f64::NAN);
                return;
            };
            let y: Vec<f64> = x.iter().zip(xi).map(|(a, b)| a - b).collect();
            let fu = fj.value();
            let up = v[0].abs().powf(p_exp);
            let e = v[k] - fu * nonlinearity(v[0], p_exp);
            acc[0] = (c * v[0] + dot(&y, &g)) * e;
            acc[1] = c3 * fu * up;
            acc[2] = -dot(&y, &fj.gradient()) * up / p_exp;
        },
        NestedOptions {
            abs_tol,
            ..opts.nested()
        },
    )?;
    if vol.values.iter().any(|v| v.is_nan()) {
        return Err(Error::Parameter("volume evaluation of u or f failed".into()));
    }
    converged(&vol, "volume")?;
    Ok(vol)
}

fn check_coefficient(f: &dyn JetProvider, p_exp: f64, n: usize) -> Result<()> {
    check_exponent(p_exp)?;
    if f.dim() != n {
        return Err(Error::Parameter("f lives in the wrong dimension".into()));
    }
    check_order(f, 1)
}

fn rhs_from(bnd: &BoundaryPass, vol: &crate::quad::NestedOutcome) -> PohozaevRhs {
    PohozaevRhs {
        terms: PohozaevTerms {
            t1: vol.values[0],
            t2: bnd.values[2],
            t3: vol.values[1],
            t4: vol.values[2],
        },
        errors: [vol.errors[0], bnd.errors[2], vol.errors[1], vol.errors[2]],
        samples: vol.samples_used + bnd.samples,
    }
}

/// Absolute convergence floor for the volume sweep, from the boundary scale.
fn volume_floor(bnd: &BoundaryPass, opts: PohozaevOptions) -> f64 {
    opts.rel_tol * bnd.values[0].abs().max(bnd.values[2].abs())
}

/// The four right-hand terms of the identity.
pub fn pohozaev_rhs(
    u: &dyn JetProvider,
    f: &dyn JetProvider,
    p_exp: f64,
    domain: &Domain,
    xi: &[f64],
    k: usize,
    opts: PohozaevOptions,
) -> Result<PohozaevRhs> {
    let n = check_setup(u, domain, xi, k)?;
    check_coefficient(f, p_exp, n)?;
    let bnd = boundary_pass(u, Some((f, p_exp)), domain, xi, k, opts)?;
    let vol = volume_pass(u, f, p_exp, domain, xi, k, opts, volume_floor(&bnd, opts))?;
    Ok(rhs_from(&bnd, &vol))
}

/// Relative floor added to the quadrature budget for rounding in the sums.
const ROUNDING_FLOOR: f64 = 1e-11;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PohozaevReport {
    pub k: usize,
    pub n: usize,
    pub p_exp: f64,
    pub domain: Domain,
    pub xi: Vec<f64>,
    pub lhs: f64,
    pub terms: PohozaevTerms,
    pub dirichlet: Option<DirichletForms>,
    pub residual_abs: f64,
    pub residual_rel: f64,
    pub budget: f64,
    pub within_budget: bool,
    pub samples: usize,
}

impl PohozaevReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Whether the signed and the negative Dirichlet shortcut match `P_k`
    /// within the budget.
    pub fn dirichlet_agreement(&self) -> Option<(bool, bool)> {
        self.dirichlet.map(|d| {
            (
                d.diff_signed.abs() <= self.budget,
                d.diff_negative.abs() <= self.budget,
            )
        })
    }
}

/// Evaluates both sides and the residual
/// `|lhs − ΣT| / max(|lhs|, max|T_i|)`.
pub fn pohozaev_residual(
    u: &dyn JetProvider,
    f: &dyn JetProvider,
    p_exp: f64,
    domain: &Domain,
    xi: &[f64],
    k: usize,
    opts: PohozaevOptions,
) -> Result<PohozaevReport> {
    let n = check_setup(u, domain, xi, k)?;
    check_coefficient(f, p_exp, n)?;
    let bnd = boundary_pass(u, Some((f, p_exp)), domain, xi, k, opts)?;
    let vol = volume_pass(u, f, p_exp, domain, xi, k, opts, volume_floor(&bnd, opts))?;
    let lhs = lhs_from(&bnd, k, opts.dirichlet);
    let rhs = rhs_from(&bnd, &vol);
    let scale = lhs.value.abs().max(rhs.terms.max_abs()).max(1e-300);
    let residual_abs = (lhs.value - rhs.terms.sum()).abs();
    let budget = lhs.error + rhs.errors.iter().sum::<f64>() + ROUNDING_FLOOR * scale;
    Ok(PohozaevReport {
        k,
        n: domain.dim(),
        p_exp,
        domain: domain.clone(),
        xi: xi.to_vec(),
        lhs: lhs.value,
        terms: rhs.terms,
        dirichlet: lhs.dirichlet,
        residual_abs,
        residual_rel: residual_abs / scale,
        budget,
        within_budget: residual_abs <= budget,
        samples: rhs.samples,
    })
}

// ---------------------------------------------------------------------------
// Standard suites

/// One labelled case of a standard suite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteCase {
    pub label: String,
    pub report: PohozaevReport,
}

impl SuiteCase {
    /// Residual within budget, and on Dirichlet cases the `−½` shortcut
    /// agrees with `P_k`.
    pub fn passed(&self) -> bool {
        self.report.within_budget && self.report.dirichlet_agreement().is_none_or(|(_, neg)| neg)
    }
}

/// `(n, k)` pairs of the standard suites.
pub const SUITE_DIMENSIONS: [(usize, usize); 6] = [(3, 1), (5, 1), (5, 2), (7, 1), (7, 2), (7, 3)];

fn suite_filter(only: Option<(usize, usize)>) -> Result<Vec<(usize, usize)>> {
    match only {
        None => Ok(SUITE_DIMENSIONS.to_vec()),
        Some((n, k)) if n > 2 * k && k >= 1 => Ok(vec![(n, k)]),
        Some((n, k)) => Err(Error::Parameter(format!("need n > 2k ≥ 2, got n = {n}, k = {k}"))),
    }
}

fn unit_annulus(n: usize, inner: f64) -> Domain {
    use crate::quad::Ball;
    Domain::new(Shape::BallMinusBalls {
        outer: Ball::unit(n),
        inner: vec![Ball::new(vec![0.0; n], inner)],
    })
}

/// Manufactured `u = (1−|x|²)^k q` with `f = 1`.
///
/// Each `(n, k)` gets a radial Dirichlet case on the ball, a non-radial
/// factor with shifted `ξ` (both with the shortcut forms), and an annulus
/// with inner radius ½.
pub fn manufactured_suite(only: Option<(usize, usize)>, opts: PohozaevOptions) -> Result<Vec<SuiteCase>> {
    let mut out = Vec::new();
    for (n, k) in suite_filter(only)? {
        let one = ConstantFunction { n, value: 1.0 };
        let ball = Domain::unit_ball(n);
        let dir = PohozaevOptions { dirichlet: true, ..opts };
        let radial = manufactured_dirichlet(k, n, &Poly::constant(n, 1.0))?;
        // integer exponents keep |u|^{p+1} polynomial, so nested quadrature closes
        let p = (2.0 * n as f64 / (n as f64 - 2.0 * k as f64)).floor();
        let zero = vec![0.0; n];
        out.push(SuiteCase {
            label: format!("n={n} k={k} ball radial p={p}"),
            report: pohozaev_residual(&radial, &one, p, &ball, &zero, k, dir)?,
        });
        let q = Poly::constant(n, 1.0)
            .add(&Poly::variable(n, 0).scale(0.3))
            .sub(&Poly::variable(n, 1).scale(0.2));
        let u = manufactured_dirichlet(k, n, &q)?;
        let mut xi = vec![0.0; n];
        xi[0] = 0.3;
        xi[1] = -0.1;
        out.push(SuiteCase {
            label: format!("n={n} k={k} ball shifted-xi p=3"),
            report: pohozaev_residual(&u, &one, 3.0, &ball, &xi, k, dir)?,
        });
        out.push(SuiteCase {
            label: format!("n={n} k={k} annulus r=1/2 p=2"),
            report: pohozaev_residual(&u, &one, 2.0, &unit_annulus(n, 0.5), &xi, k, opts)?,
        });
    }
    Ok(out)
}

/// The standard bubble on the unit ball with `f = 1` and `p = 2♯`, where
/// `E(B) = 0` makes the volume term `T1` vanish.
pub fn bubble_suite(only: Option<(usize, usize)>, opts: PohozaevOptions) -> Result<Vec<SuiteCase>> {
    let mut out = Vec::new();
    for (n, k) in suite_filter(only)? {
        let b = crate::bubbles::StandardBubble { n, k };
        let crit = 2.0 * n as f64 / (n as f64 - 2.0 * k as f64);
        let mut xi = vec![0.0; n];
        xi[1] = 0.2;
        let one = ConstantFunction { n, value: 1.0 };
        out.push(SuiteCase {
            label: format!("n={n} k={k} bubble shifted-xi"),
            report: pohozaev_residual(&b, &one, crit, &Domain::unit_ball(n), &xi, k, opts)?,
        });
    }
    Ok(out)
}
