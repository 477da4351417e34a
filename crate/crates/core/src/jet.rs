//! Truncated multivariate Taylor arithmetic.
//!
//! A [`Jet`] stores the Taylor coefficients `∂^α f(x0) / α!` for all
//! multi-indices `|α| ≤ L`. Sums, products and compositions with univariate
//! analytic functions are exact up to floating-point rounding, which gives
//! exact partial derivatives of bubbles, cutoffs and their products.

use crate::error::{Error, Result};
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

/// Graded monomial enumeration for `n` variables up to degree `order`.
///
/// Monomials of degree `d` are listed in lexicographically decreasing order,
/// so the table for a lower order is a prefix of the table for a higher one.
#[derive(Debug)]
pub struct MonomialTable {
    pub n: usize,
    pub order: usize,
    exps: Vec<Vec<u8>>,
    index: HashMap<Vec<u8>, usize>,
    degree_start: Vec<usize>,
    // (result, left, right), sorted by result index
    mul: Vec<(u32, u32, u32)>,
    // mul entries whose result has degree <= d end at mul_end[d]
    mul_end: Vec<usize>,
}

fn monomials_of_degree(n: usize, d: usize) -> Vec<Vec<u8>> {
    fn rec(n: usize, pos: usize, left: usize, cur: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
        if pos == n - 1 {
            cur[pos] = left as u8;
            out.push(cur.clone());
            return;
        }
        for e in (0..=left).rev() {
            cur[pos] = e as u8;
            rec(n, pos + 1, left - e, cur, out);
        }
        cur[pos] = 0;
    }
    let mut out = Vec::new();
    let mut cur = vec![0u8; n];
    rec(n, 0, d, &mut cur, &mut out);
    out
}

impl MonomialTable {
    fn build(n: usize, order: usize) -> Self {
        let mut exps = Vec::new();
        let mut degree_start = Vec::with_capacity(order + 2);
        for d in 0..=order {
            degree_start.push(exps.len());
            exps.extend(monomials_of_degree(n, d));
        }
        degree_start.push(exps.len());
        let index: HashMap<Vec<u8>, usize> =
            exps.iter().enumerate().map(|(i, e)| (e.clone(), i)).collect();
        let deg = |i: usize| exps[i].iter().map(|&e| e as usize).sum::<usize>();
        let mut mul = Vec::new();
        let mut buf = vec![0u8; n];
        for a in 0..exps.len() {
            let da = deg(a);
            let limit = degree_start[order - da + 1];
            for b in 0..limit {
                for v in 0..n {
                    buf[v] = exps[a][v] + exps[b][v];
                }
                let r = index[&buf];
                mul.push((r as u32, a as u32, b as u32));
            }
        }
        mul.sort_unstable();
        let mut mul_end = vec![0; order + 1];
        for (d, end) in mul_end.iter_mut().enumerate() {
            let lim = degree_start[d + 1] as u32;
            *end = mul.partition_point(|&(r, _, _)| r < lim);
        }
        Self {
            n,
            order,
            exps,
            index,
            degree_start,
            mul,
            mul_end,
        }
    }

    /// Shared table for `(n, order)`.
    pub fn get(n: usize, order: usize) -> Arc<MonomialTable> {
        static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<MonomialTable>>>> =
            OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().expect("monomial table cache poisoned");
        guard
            .entry((n, order))
            .or_insert_with(|| Arc::new(MonomialTable::build(n, order)))
            .clone()
    }

    /// Number of monomials of degree at most `order`.
    pub fn size(&self, order: usize) -> usize {
        self.degree_start[order + 1]
    }

    pub fn exponent(&self, idx: usize) -> &[u8] {
        &self.exps[idx]
    }

    pub fn index_of(&self, alpha: &[u8]) -> Option<usize> {
        self.index.get(alpha).copied()
    }

    pub fn degree_range(&self, d: usize) -> std::ops::Range<usize> {
        self.degree_start[d]..self.degree_start[d + 1]
    }
}

fn factorial(m: usize) -> f64 {
    (1..=m).map(|v| v as f64).product()
}

fn multi_factorial(alpha: &[u8]) -> f64 {
    alpha.iter().map(|&e| factorial(e as usize)).product()
}

/// Taylor coefficients of a function of `n` variables at a point.
#[derive(Clone, Debug)]
pub struct Jet {
    table: Arc<MonomialTable>,
    order: usize,
    c: Vec<f64>,
}

impl Jet {
    pub fn zero(n: usize, order: usize) -> Jet {
        let table = MonomialTable::get(n, order);
        let size = table.size(order);
        Jet {
            table,
            order,
            c: vec![0.0; size],
        }
    }

    pub fn constant(n: usize, order: usize, v: f64) -> Jet {
        let mut j = Jet::zero(n, order);
        j.c[0] = v;
        j
    }

    /// The coordinate function `x_i` expanded at `x0_i`.
    pub fn variable(n: usize, order: usize, x0: f64, i: usize) -> Jet {
        let mut j = Jet::constant(n, order, x0);
        if order >= 1 {
            let mut e = vec![0u8; n];
            e[i] = 1;
            let idx = j.table.index_of(&e).expect("degree-one monomial");
            j.c[idx] = 1.0;
        }
        j
    }

    /// All coordinate functions expanded at `x0`.
    pub fn variables(x0: &[f64], order: usize) -> Vec<Jet> {
        (0..x0.len())
            .map(|i| Jet::variable(x0.len(), order, x0[i], i))
            .collect()
    }

    /// Builds a jet from raw Taylor coefficients in table order.
    pub fn from_coeffs(n: usize, order: usize, c: Vec<f64>) -> Result<Jet> {
        let table = MonomialTable::get(n, order);
        if c.len() != table.size(order) {
            return Err(Error::Parameter(format!(
                "expected {} coefficients, got {}",
                table.size(order),
                c.len()
            )));
        }
        Ok(Jet { table, order, c })
    }

    pub fn n(&self) -> usize {
        self.table.n
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn table(&self) -> &MonomialTable {
        &self.table
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.c
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    /// Taylor coefficient `∂^α f / α!`.
    pub fn coeff(&self, alpha: &[u8]) -> f64 {
        match self.table.index_of(alpha) {
            Some(i) if i < self.c.len() => self.c[i],
            _ => 0.0,
        }
    }

    /// The partial derivative `∂^α f`.
    pub fn partial(&self, alpha: &[u8]) -> f64 {
        self.coeff(alpha) * multi_factorial(alpha)
    }

    pub fn gradient(&self) -> Vec<f64> {
        let n = self.n();
        if self.order == 0 {
            return vec![0.0; n];
        }
        (0..n).map(|i| self.c[1 + i]).collect()
    }

    /// Hessian, row-major `n × n`.
    pub fn hessian(&self) -> Vec<f64> {
        let n = self.n();
        let mut h = vec![0.0; n * n];
        if self.order < 2 {
            return h;
        }
        let mut e = vec![0u8; n];
        for i in 0..n {
            for j in i..n {
                e[i] += 1;
                e[j] += 1;
                let v = self.partial(&e);
                h[i * n + j] = v;
                h[j * n + i] = v;
                e[i] -= 1;
                e[j] -= 1;
            }
        }
        h
    }

    /// Frobenius norm of the order-`l` derivative tensor.
    pub fn tensor_norm(&self, l: usize) -> f64 {
        if l > self.order {
            return 0.0;
        }
        let lf = factorial(l);
        self.table
            .degree_range(l)
            .map(|idx| {
                let alpha = self.table.exponent(idx);
                let af = multi_factorial(alpha);
                let d = self.c[idx] * af;
                lf / af * d * d
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Largest absolute partial derivative of order `l`.
    pub fn max_partial(&self, l: usize) -> f64 {
        if l > self.order {
            return 0.0;
        }
        self.table
            .degree_range(l)
            .map(|idx| (self.c[idx] * multi_factorial(self.table.exponent(idx))).abs())
            .fold(0.0, f64::max)
    }

    fn common(&self, other: &Jet) -> (Arc<MonomialTable>, usize) {
        assert_eq!(self.n(), other.n(), "jets in different dimensions");
        let order = self.order.min(other.order);
        let table = if self.table.order >= other.table.order {
            self.table.clone()
        } else {
            other.table.clone()
        };
        (table, order)
    }

    pub fn truncate(&self, order: usize) -> Jet {
        let order = order.min(self.order);
        let size = self.table.size(order);
        Jet {
            table: self.table.clone(),
            order,
            c: self.c[..size].to_vec(),
        }
    }

    pub fn add(&self, other: &Jet) -> Jet {
        let (table, order) = self.common(other);
        let size = table.size(order);
        let c = (0..size).map(|i| self.c[i] + other.c[i]).collect();
        Jet { table, order, c }
    }

    pub fn sub(&self, other: &Jet) -> Jet {
        let (table, order) = self.common(other);
        let size = table.size(order);
        let c = (0..size).map(|i| self.c[i] - other.c[i]).collect();
        Jet { table, order, c }
    }

    pub fn scale(&self, s: f64) -> Jet {
        Jet {
            table: self.table.clone(),
            order: self.order,
            c: self.c.iter().map(|v| v * s).collect(),
        }
    }

    pub fn add_scalar(&self, s: f64) -> Jet {
        let mut j = self.clone();
        j.c[0] += s;
        j
    }

    pub fn neg(&self) -> Jet {
        self.scale(-1.0)
    }

    pub fn mul(&self, other: &Jet) -> Jet {
        let (table, order) = self.common(other);
        let size = table.size(order);
        let mut c = vec![0.0; size];
        let end = table.mul_end[order];
        for &(r, a, b) in &table.mul[..end] {
            c[r as usize] += self.c[a as usize] * other.c[b as usize];
        }
        Jet { table, order, c }
    }

    /// `g ∘ self`, where `series[m] = g^{(m)}(self.value()) / m!`.
    pub fn compose(&self, series: &[f64]) -> Jet {
        let n = self.n();
        let order = self.order;
        let mut delta = self.clone();
        delta.c[0] = 0.0;
        let top = order.min(series.len().saturating_sub(1));
        let mut acc = Jet::constant(n, order, series[top]);
        acc.table = self.table.clone();
        for m in (0..top).rev() {
            acc = acc.mul(&delta);
            acc.c[0] += series[m];
        }
        acc
    }

    /// `self^e`; for non-integer `e` the value must be positive.
    pub fn powf(&self, e: f64) -> Jet {
        let v0 = self.value();
        let mut s = Vec::with_capacity(self.order + 1);
        let first = if e.fract() == 0.0 && e.abs() < 64.0 {
            v0.powi(e as i32)
        } else {
            v0.powf(e)
        };
        s.push(first);
        for m in 1..=self.order {
            let prev = s[m - 1];
            let next = if first != 0.0 && v0 != 0.0 {
                prev * (e - m as f64 + 1.0) / (m as f64 * v0)
            } else {
                // binomial coefficient times v0^{e-m} evaluated directly
                let mut b = 1.0;
                for j in 0..m {
                    b *= (e - j as f64) / (j as f64 + 1.0);
                }
                b * v0.powf(e - m as f64)
            };
            s.push(next);
        }
        self.compose(&s)
    }

    pub fn recip(&self) -> Jet {
        self.powf(-1.0)
    }

    pub fn sqrt(&self) -> Jet {
        self.powf(0.5)
    }

    pub fn exp(&self) -> Jet {
        let e0 = self.value().exp();
        let s: Vec<f64> = (0..=self.order).map(|m| e0 / factorial(m)).collect();
        self.compose(&s)
    }

    pub fn ln(&self) -> Jet {
        let v0 = self.value();
        let mut s = vec![v0.ln()];
        for m in 1..=self.order {
            let sign = if m % 2 == 1 { 1.0 } else { -1.0 };
            s.push(sign / (m as f64 * v0.powi(m as i32)));
        }
        self.compose(&s)
    }

    pub fn div(&self, other: &Jet) -> Jet {
        self.mul(&other.recip())
    }

    /// `∂/∂x_i`, one order lower.
    pub fn derivative(&self, i: usize) -> Jet {
        if self.order == 0 {
            return Jet::constant(self.n(), 0, 0.0);
        }
        let order = self.order - 1;
        let size = self.table.size(order);
        let mut c = vec![0.0; size];
        let mut buf = vec![0u8; self.n()];
        for (idx, slot) in c.iter_mut().enumerate() {
            buf.copy_from_slice(self.table.exponent(idx));
            buf[i] += 1;
            let src = self.table.index_of(&buf).expect("within order");
            *slot = self.c[src] * buf[i] as f64;
        }
        Jet {
            table: self.table.clone(),
            order,
            c,
        }
    }

    /// `Δ f`, two orders lower.
    pub fn laplacian(&self) -> Jet {
        if self.order < 2 {
            return Jet::constant(self.n(), 0, 0.0);
        }
        let order = self.order - 2;
        let size = self.table.size(order);
        let mut c = vec![0.0; size];
        let mut buf = vec![0u8; self.n()];
        for (idx, slot) in c.iter_mut().enumerate() {
            let mut acc = 0.0;
            for i in 0..self.n() {
                buf.copy_from_slice(self.table.exponent(idx));
                buf[i] += 2;
                let src = self.table.index_of(&buf).expect("within order");
                acc += self.c[src] * (buf[i] as f64) * (buf[i] as f64 - 1.0);
            }
            *slot = acc;
        }
        Jet {
            table: self.table.clone(),
            order,
            c,
        }
    }

    /// `(−Δ)^i f`.
    pub fn neg_laplacian_pow(&self, i: usize) -> Result<Jet> {
        if 2 * i > self.order {
            return Err(Error::Parameter(format!(
                "jet of order {} cannot provide (-Δ)^{i}",
                self.order
            )));
        }
        let mut j = self.clone();
        for _ in 0..i {
            j = j.laplacian().neg();
        }
        Ok(j)
    }

    /// Substitutes `inner` (jets in the outer variables, expanded at the
    /// outer jet's base point) into `outer`.
    pub fn compose_multi(outer: &Jet, base: &[f64], inner: &[Jet]) -> Jet {
        assert_eq!(outer.n(), inner.len(), "one inner jet per outer variable");
        assert_eq!(base.len(), inner.len());
        let n = inner[0].n();
        let order = inner.iter().map(|j| j.order).min().unwrap_or(0).min(outer.order);
        let deltas: Vec<Jet> = inner
            .iter()
            .zip(base)
            .map(|(j, b)| j.truncate(order).add_scalar(-b))
            .collect();
        let mut acc = Jet::constant(n, order, outer.value());
        acc.table = deltas[0].table.clone();
        let mut alpha = vec![0u8; outer.n()];
        let one = acc.clone().scale(0.0).add_scalar(1.0);
        fn rec(
            outer: &Jet,
            deltas: &[Jet],
            start: usize,
            prod: &Jet,
            depth: usize,
            order: usize,
            alpha: &mut Vec<u8>,
            acc: &mut Jet,
        ) {
            for j in start..deltas.len() {
                let next = prod.mul(&deltas[j]);
                alpha[j] += 1;
                let c = outer.coeff(alpha);
                if c != 0.0 {
                    for (a, v) in acc.c.iter_mut().zip(&next.c) {
                        *a += c * v;
                    }
                }
                if depth + 1 < order {
                    rec(outer, deltas, j, &next, depth + 1, order, alpha, acc);
                }
                alpha[j] -= 1;
            }
        }
        if order > 0 {
            rec(outer, &deltas, 0, &one, 0, order, &mut alpha, &mut acc);
        }
        acc
    }
}

/// `(−Δ)^i u` data at one point for `i = 0..=k`: values, gradients and
/// Hessians (the last two only while the jet order allows).
#[derive(Clone, Debug)]
pub struct LaplaceStack {
    pub k: usize,
    pub values: Vec<f64>,
    pub grads: Vec<Vec<f64>>,
    pub hessians: Vec<Vec<f64>>,
}

impl LaplaceStack {
    /// Derives the stack from a jet of order at least `2k`.
    pub fn from_jet(jet: &Jet, k: usize) -> Result<LaplaceStack> {
        if jet.order() < 2 * k {
            return Err(Error::Parameter(format!(
                "jet order {} below 2k = {}",
                jet.order(),
                2 * k
            )));
        }
        let mut values = Vec::with_capacity(k + 1);
        let mut grads = Vec::with_capacity(k);
        let mut hessians = Vec::with_capacity(k);
        let mut cur = jet.clone();
        for i in 0..=k {
            values.push(cur.value());
            if i < k {
                grads.push(cur.gradient());
                hessians.push(cur.hessian());
                cur = cur.laplacian().neg();
            }
        }
        Ok(LaplaceStack {
            k,
            values,
            grads,
            hessians,
        })
    }

    pub fn n(&self) -> usize {
        self.grads.first().map_or(0, Vec::len)
    }
}

/// A function that can report its partial derivatives at any point.
pub trait JetProvider: Send + Sync {
    fn dim(&self) -> usize;

    /// Highest derivative order the provider can supply.
    fn smoothness(&self) -> usize;

    fn jet(&self, x: &[f64], order: usize) -> Result<Jet>;

    fn value(&self, x: &[f64]) -> Result<f64> {
        Ok(self.jet(x, 0)?.value())
    }

    fn laplace_stack(&self, x: &[f64], k: usize) -> Result<LaplaceStack> {
        LaplaceStack::from_jet(&self.jet(x, 2 * k)?, k)
    }

    /// `(−Δ)^i u` for `i = 0..=k` together with `∇u`. Cheaper than the full
    /// stack for providers with closed forms.
    fn laplace_values(&self, x: &[f64], k: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        let jet = self.jet(x, (2 * k).max(1))?;
        let grad = jet.gradient();
        let mut values = Vec::with_capacity(k + 1);
        let mut cur = jet;
        for i in 0..=k {
            values.push(cur.value());
            if i < k {
                cur = cur.laplacian().neg();
            }
        }
        Ok((values, grad))
    }
}

pub(crate) fn check_order(provider: &dyn JetProvider, order: usize) -> Result<()> {
    if order > provider.smoothness() {
        return Err(Error::Parameter(format!(
            "requested order {order} exceeds declared smoothness {}",
            provider.smoothness()
        )));
    }
    Ok(())
}

/// Largest deviation between `∂_i∂_j` computed in the two orders, by
/// differentiating the jet twice; a cheap symmetry audit.
pub fn symmetry_defect(jet: &Jet) -> f64 {
    let n = jet.n();
    let mut worst: f64 = 0.0;
    if jet.order() < 2 {
        return 0.0;
    }
    for i in 0..n {
        for j in 0..n {
            let a = jet.derivative(i).derivative(j).value();
            let b = jet.derivative(j).derivative(i).value();
            worst = worst.max((a - b).abs());
        }
    }
    worst
}
