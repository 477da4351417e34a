//! Exact symbolic algebra for radial functions
//! `Σ c_j(a) · r^{p_j} · (1 + a r²)^{-(M + 2 t_j)/2}`.
//!
//! The bubble parameter `a` is kept as a formal symbol: coefficients are
//! Laurent polynomials in `a` with arbitrary-precision rational entries, so
//! iterated Laplacians carry no rounding at all.

use crate::error::{Error, Result};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

/// `Π_{l=-k}^{k-1} (n + 2l)`.
pub fn bubble_product(n: u32, k: u32) -> BigInt {
    let mut p = BigInt::one();
    for l in -(k as i64)..(k as i64) {
        p *= BigInt::from(n as i64 + 2 * l);
    }
    p
}

/// The normalisation `a_{n,k} = Π^{-1/k}` of the standard bubble.
pub fn a_nk(n: u32, k: u32) -> f64 {
    let p = bubble_product(n, k).to_f64().unwrap_or(f64::INFINITY);
    p.powf(-1.0 / k as f64)
}

/// Critical exponent `2n/(n-2k)`.
pub fn critical_exponent(n: u32, k: u32) -> f64 {
    2.0 * n as f64 / (n as f64 - 2.0 * k as f64)
}

pub(crate) fn check_nk(n: u32, k: u32) -> Result<()> {
    if k < 1 || n <= 2 * k {
        return Err(Error::Parameter(format!(
            "need k >= 1 and n > 2k, got n={n}, k={k}"
        )));
    }
    Ok(())
}

fn rat(v: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(v))
}

/// Laurent polynomial in the formal symbol `a`.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Laurent {
    coeffs: BTreeMap<i32, BigRational>,
}

impl Laurent {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn one() -> Self {
        Self::monomial(BigRational::one(), 0)
    }

    pub fn constant(c: BigRational) -> Self {
        Self::monomial(c, 0)
    }

    pub fn monomial(c: BigRational, e: i32) -> Self {
        let mut l = Self::zero();
        l.add_term(e, c);
        l
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn is_one(&self) -> bool {
        self.coeffs.len() == 1 && self.coeffs.get(&0).is_some_and(|c| c.is_one())
    }

    /// Exponent/coefficient pairs in increasing exponent order.
    pub fn terms(&self) -> impl Iterator<Item = (i32, &BigRational)> {
        self.coeffs.iter().map(|(e, c)| (*e, c))
    }

    pub fn coeff(&self, e: i32) -> BigRational {
        self.coeffs.get(&e).cloned().unwrap_or_else(BigRational::zero)
    }

    pub fn add_term(&mut self, e: i32, c: BigRational) {
        if c.is_zero() {
            return;
        }
        let entry = self.coeffs.entry(e).or_insert_with(BigRational::zero);
        *entry += c;
        if entry.is_zero() {
            self.coeffs.remove(&e);
        }
    }

    pub fn add(&self, other: &Laurent) -> Laurent {
        let mut out = self.clone();
        for (e, c) in other.terms() {
            out.add_term(e, c.clone());
        }
        out
    }

    pub fn neg(&self) -> Laurent {
        self.scale(&-BigRational::one())
    }

    pub fn scale(&self, q: &BigRational) -> Laurent {
        let mut out = Laurent::zero();
        for (e, c) in self.terms() {
            out.add_term(e, c * q);
        }
        out
    }

    /// Multiplication by `a^e`.
    pub fn shift(&self, e: i32) -> Laurent {
        Laurent {
            coeffs: self.coeffs.iter().map(|(k, c)| (k + e, c.clone())).collect(),
        }
    }

    pub fn mul(&self, other: &Laurent) -> Laurent {
        let mut out = Laurent::zero();
        for (e1, c1) in self.terms() {
            for (e2, c2) in other.terms() {
                out.add_term(e1 + e2, c1 * c2);
            }
        }
        out
    }

    pub fn eval(&self, a: f64) -> f64 {
        self.terms()
            .map(|(e, c)| c.to_f64().unwrap_or(f64::NAN) * a.powi(e))
            .sum()
    }

    /// Reduces modulo the relation `a^k · pi = 1`, leaving exponents in `0..k`.
    pub fn reduce_relation(&self, k: u32, pi: &BigRational) -> Laurent {
        let k = k as i32;
        let mut out = Laurent::zero();
        for (e, c) in self.terms() {
            let q = e.div_euclid(k);
            let r = e.rem_euclid(k);
            // a^e = a^r (a^k)^q = a^r pi^{-q}
            let factor = if q >= 0 {
                pi.pow(q).recip()
            } else {
                pi.pow(-q)
            };
            out.add_term(r, c * factor);
        }
        out
    }
}

fn fmt_rational(q: &BigRational) -> String {
    if q.denom().is_one() {
        q.numer().to_string()
    } else {
        format!("{}/{}", q.numer(), q.denom())
    }
}

fn parse_rational(s: &str) -> Result<BigRational> {
    let s = s.trim();
    let bad = || Error::Parse(format!("bad rational '{s}'"));
    match s.split_once('/') {
        Some((n, d)) => {
            let n = BigInt::from_str(n.trim()).map_err(|_| bad())?;
            let d = BigInt::from_str(d.trim()).map_err(|_| bad())?;
            if d.is_zero() {
                return Err(bad());
            }
            Ok(BigRational::new(n, d))
        }
        None => Ok(BigRational::from_integer(
            BigInt::from_str(s).map_err(|_| bad())?,
        )),
    }
}

impl fmt::Display for Laurent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let parts: Vec<String> = self
            .terms()
            .map(|(e, c)| match e {
                0 => fmt_rational(c),
                1 => format!("{}*a", fmt_rational(c)),
                _ => format!("{}*a^{}", fmt_rational(c), e),
            })
            .collect();
        write!(f, "{}", parts.join(" + "))
    }
}

impl FromStr for Laurent {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut out = Laurent::zero();
        let s = s.trim();
        if s == "0" {
            return Ok(out);
        }
        for part in s.split(" + ") {
            let part = part.trim();
            let (c, e) = match part.split_once('*') {
                None => (parse_rational(part)?, 0),
                Some((c, rest)) => {
                    let rest = rest.trim();
                    let e = if rest == "a" {
                        1
                    } else if let Some(x) = rest.strip_prefix("a^") {
                        x.trim()
                            .parse::<i32>()
                            .map_err(|_| Error::Parse(format!("bad exponent in '{part}'")))?
                    } else {
                        return Err(Error::Parse(format!("bad monomial '{part}'")));
                    };
                    (parse_rational(c)?, e)
                }
            };
            out.add_term(e, c);
        }
        Ok(out)
    }
}

/// A radial function on `R^n`, stored as `(p, t) -> c(a)`.
///
/// `m` is twice the base decay exponent. `t` is signed so that
/// [`RadialFunction::power_reduce`] stays closed on inputs whose r-power
/// exceeds their extra decay.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RadialFunction {
    pub n: u32,
    pub m: i64,
    terms: BTreeMap<(u32, i64), Laurent>,
}

/// One term `c(a) r^p (1+ar²)^{-(M+2t)/2}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RadialTerm {
    pub coeff: Laurent,
    pub p: u32,
    pub t: i64,
}

impl RadialFunction {
    pub fn zero(n: u32, m: i64) -> Self {
        Self {
            n,
            m,
            terms: BTreeMap::new(),
        }
    }

    /// The constant function `c` (with `M = 0`).
    pub fn constant(n: u32, c: BigRational) -> Self {
        let mut f = Self::zero(n, 0);
        f.add_term(Laurent::constant(c), 0, 0);
        f
    }

    /// `B(r) = (1 + a r²)^{-(n-2k)/2}`.
    pub fn make_bubble(n: u32, k: u32) -> Result<Self> {
        check_nk(n, k)?;
        let mut f = Self::zero(n, n as i64 - 2 * k as i64);
        f.add_term(Laurent::one(), 0, 0);
        Ok(f)
    }

    pub fn add_term(&mut self, coeff: Laurent, p: u32, t: i64) {
        if coeff.is_zero() {
            return;
        }
        let entry = self.terms.entry((p, t)).or_default();
        *entry = entry.add(&coeff);
        if entry.is_zero() {
            self.terms.remove(&(p, t));
        }
    }

    pub fn terms(&self) -> Vec<RadialTerm> {
        self.terms
            .iter()
            .map(|(&(p, t), c)| RadialTerm {
                coeff: c.clone(),
                p,
                t,
            })
            .collect()
    }

    pub fn term_count(&self) -> usize {
        self.terms.len()
    }

    pub fn coeff(&self, p: u32, t: i64) -> Laurent {
        self.terms.get(&(p, t)).cloned().unwrap_or_default()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    fn same_shape(&self, other: &RadialFunction) -> Result<()> {
        if self.n != other.n || self.m != other.m {
            return Err(Error::Representation(format!(
                "mismatched shapes (n={}, M={}) vs (n={}, M={})",
                self.n, self.m, other.n, other.m
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &RadialFunction) -> Result<RadialFunction> {
        self.same_shape(other)?;
        let mut out = self.clone();
        for (&(p, t), c) in &other.terms {
            out.add_term(c.clone(), p, t);
        }
        Ok(out)
    }

    pub fn scale(&self, q: &BigRational) -> RadialFunction {
        let mut out = Self::zero(self.n, self.m);
        for (&(p, t), c) in &self.terms {
            out.add_term(c.scale(q), p, t);
        }
        out
    }

    /// Multiplication by `r^j`.
    pub fn mul_r(&self, j: u32) -> RadialFunction {
        let mut out = Self::zero(self.n, self.m);
        for (&(p, t), c) in &self.terms {
            out.add_term(c.clone(), p + j, t);
        }
        out
    }

    /// Exact `−Δ f` for the n-dimensional radial Laplacian.
    ///
    /// Terms with `p = 1` would produce `r^{-1}`; they are rejected.
    pub fn laplacian(&self) -> Result<RadialFunction> {
        let n = self.n as i64;
        let mut out = Self::zero(self.n, self.m);
        for (&(p, t), c) in &self.terms {
            let pi = p as i64;
            let q2 = self.m + 2 * t;
            if p == 1 {
                return Err(Error::Representation(
                    "Laplacian of an r^1 term is not representable".into(),
                ));
            }
            if p >= 2 {
                out.add_term(c.scale(&rat(-pi * (pi + n - 2))), p - 2, t);
            }
            if q2 != 0 {
                out.add_term(c.shift(1).scale(&rat(q2 * (2 * pi + n))), p, t + 1);
                out.add_term(c.shift(2).scale(&rat(-q2 * (q2 + 2))), p + 2, t + 2);
            }
        }
        Ok(out)
    }

    /// `(−Δ)^k f`.
    pub fn laplacian_pow(&self, k: u32) -> Result<RadialFunction> {
        let mut f = self.clone();
        for _ in 0..k {
            f = f.laplacian()?;
        }
        Ok(f)
    }

    /// Exact `d/dr`.
    pub fn radial_derivative(&self) -> RadialFunction {
        let mut out = Self::zero(self.n, self.m);
        for (&(p, t), c) in &self.terms {
            let q2 = self.m + 2 * t;
            if p >= 1 {
                out.add_term(c.scale(&rat(p as i64)), p - 1, t);
            }
            if q2 != 0 {
                out.add_term(c.shift(1).scale(&rat(-q2)), p + 1, t + 1);
            }
        }
        out
    }

    /// Rewrites every term with `p = 0` using `a r² (1+ar²)^{-1} = 1 − (1+ar²)^{-1}`.
    pub fn power_reduce(&self) -> Result<RadialFunction> {
        let mut work = self.terms.clone();
        loop {
            let next = work.keys().rev().find(|(p, _)| *p > 0).copied();
            let Some((p, t)) = next else { break };
            if p % 2 == 1 {
                return Err(Error::Representation(format!(
                    "odd r-power {p} cannot be reduced"
                )));
            }
            let c = work.remove(&(p, t)).unwrap_or_default();
            let ci = c.shift(-1);
            for (key, val) in [((p - 2, t - 1), ci.clone()), ((p - 2, t), ci.neg())] {
                let entry = work.entry(key).or_default();
                *entry = entry.add(&val);
                if entry.is_zero() {
                    work.remove(&key);
                }
            }
        }
        Ok(RadialFunction {
            n: self.n,
            m: self.m,
            terms: work,
        })
    }

    /// Numerical value at radius `r` for a concrete `a > 0`.
    pub fn eval(&self, r: f64, a: f64) -> f64 {
        let s = (a * r * r).ln_1p();
        self.terms
            .iter()
            .map(|(&(p, t), c)| {
                let q2 = (self.m + 2 * t) as f64;
                c.eval(a) * r.powi(p as i32) * (-0.5 * q2 * s).exp()
            })
            .sum()
    }

    /// Text form: a header `# n=<n> M=<M>` then one `coeff ; p ; t` line per term.
    pub fn to_text(&self) -> String {
        let mut s = format!("# n={} M={}\n", self.n, self.m);
        for (&(p, t), c) in &self.terms {
            s.push_str(&format!("{c} ; {p} ; {t}\n"));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<RadialFunction> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty radial function text".into()))?;
        let mut n = None;
        let mut m = None;
        for tok in header.trim_start_matches('#').split_whitespace() {
            if let Some(v) = tok.strip_prefix("n=") {
                n = v.parse::<u32>().ok();
            } else if let Some(v) = tok.strip_prefix("M=") {
                m = v.parse::<i64>().ok();
            }
        }
        let (Some(n), Some(m)) = (n, m) else {
            return Err(Error::Parse(format!("bad header '{header}'")));
        };
        let mut f = Self::zero(n, m);
        for line in lines {
            let fields: Vec<&str> = line.split(';').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(Error::Parse(format!("bad term line '{line}'")));
            }
            let c = Laurent::from_str(fields[0])?;
            let p = fields[1]
                .parse::<u32>()
                .map_err(|_| Error::Parse(format!("bad p in '{line}'")))?;
            let t = fields[2]
                .parse::<i64>()
                .map_err(|_| Error::Parse(format!("bad t in '{line}'")))?;
            f.add_term(c, p, t);
        }
        Ok(f)
    }
}

/// Outcome of the symbolic check `(−Δ)^k B = B^{2♯−1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactCheckResult {
    pub passed: bool,
    pub leading_coefficient: Laurent,
    /// Leading coefficient reduced modulo `a^k Π = 1`.
    pub reduced_coefficient: Laurent,
    pub residual_terms: Vec<RadialTerm>,
}

/// Symbolic verification that the standard bubble solves `(−Δ)^k B = B^{2♯−1}`.
pub fn check_bubble_identity(n: u32, k: u32) -> Result<ExactCheckResult> {
    let b = RadialFunction::make_bubble(n, k)?;
    let reduced = b.laplacian_pow(k)?.power_reduce()?;
    let target_t = 2 * k as i64;
    let leading = reduced.coeff(0, target_t);
    let residual_terms: Vec<RadialTerm> = reduced
        .terms()
        .into_iter()
        .filter(|t| !(t.p == 0 && t.t == target_t))
        .collect();
    let pi = BigRational::from_integer(bubble_product(n, k));
    let reduced_coefficient = leading.reduce_relation(k, &pi);
    Ok(ExactCheckResult {
        passed: residual_terms.is_empty() && reduced_coefficient.is_one(),
        leading_coefficient: leading,
        reduced_coefficient,
        residual_terms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn bubble_construction() {
        let b = RadialFunction::make_bubble(3, 1).unwrap();
        assert_eq!(b.m, 1);
        assert_eq!(b.terms(), vec![RadialTerm { coeff: Laurent::one(), p: 0, t: 0 }]);
        assert_eq!(RadialFunction::make_bubble(5, 2).unwrap().m, 1);
        assert_eq!(b.eval(0.0, 1.0 / 3.0), 1.0);
        assert!(RadialFunction::make_bubble(4, 2).is_err());
    }

    #[test]
    fn laplacian_of_r_squared() {
        let mut f = RadialFunction::zero(3, 0);
        f.add_term(Laurent::one(), 2, 0);
        let l = f.laplacian().unwrap();
        assert_eq!(l.terms(), vec![RadialTerm { coeff: Laurent::constant(q(-6, 1)), p: 0, t: 0 }]);
        assert!(RadialFunction::constant(4, q(1, 1)).laplacian().unwrap().is_zero());
    }

    #[test]
    fn laplacian_of_k1_bubble() {
        let l = RadialFunction::make_bubble(3, 1).unwrap().laplacian().unwrap();
        let r = l.power_reduce().unwrap();
        assert_eq!(r.terms(), vec![RadialTerm { coeff: Laurent::monomial(q(3, 1), 1), p: 0, t: 2 }]);
    }

    #[test]
    fn derivative_chain_rule() {
        let b = RadialFunction::make_bubble(3, 1).unwrap();
        let d = b.radial_derivative();
        let a = 1.0 / 3.0;
        let want = -(1.0 / 3.0) * (4.0f64 / 3.0).powf(-1.5);
        assert!((d.eval(1.0, a) - want).abs() < 1e-15);
        let h = 1e-5;
        let fd = (b.eval(1.0 + h, a) - b.eval(1.0 - h, a)) / (2.0 * h);
        assert!((fd - want).abs() < 1e-10);
        assert!(RadialFunction::constant(3, q(1, 1)).radial_derivative().is_zero());
    }

    #[test]
    fn power_reduce_defining_identity() {
        let mut f = RadialFunction::zero(3, 2);
        f.add_term(Laurent::one(), 2, 0);
        let r = f.power_reduce().unwrap();
        let mut want = RadialFunction::zero(3, 2);
        want.add_term(Laurent::monomial(q(1, 1), -1), 0, -1);
        want.add_term(Laurent::monomial(q(-1, 1), -1), 0, 0);
        assert_eq!(r, want);
        assert_eq!(r.power_reduce().unwrap(), r);
        let mut odd = RadialFunction::zero(3, 2);
        odd.add_term(Laurent::one(), 3, 0);
        assert!(odd.power_reduce().is_err());
    }

    #[test]
    fn leading_coefficients() {
        let c = check_bubble_identity(3, 1).unwrap();
        assert!(c.passed);
        assert_eq!(c.leading_coefficient, Laurent::monomial(q(3, 1), 1));
        let c = check_bubble_identity(7, 1).unwrap();
        assert_eq!(c.leading_coefficient, Laurent::monomial(q(35, 1), 1));
        let c = check_bubble_identity(5, 2).unwrap();
        assert!(c.passed);
        assert_eq!(c.leading_coefficient, Laurent::monomial(q(105, 1), 2));
        let a = 105f64.powf(-0.5);
        assert!((c.leading_coefficient.eval(a) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn text_round_trip() {
        let f = RadialFunction::make_bubble(7, 2)
            .unwrap()
            .laplacian_pow(2)
            .unwrap();
        let back = RadialFunction::from_text(&f.to_text()).unwrap();
        assert_eq!(back, f);
        let l = Laurent::from_str("1/2 + -3*a + 7/5*a^-1").unwrap();
        assert_eq!(l.coeff(-1), q(7, 5));
        assert_eq!(Laurent::from_str(&l.to_string()).unwrap(), l);
        assert!(RadialFunction::from_text("n=3").is_err());
    }

    #[test]
    fn reduce_relation_handles_negative_powers() {
        let pi = q(105, 1);
        let l = Laurent::monomial(q(1, 1), -2);
        assert_eq!(l.reduce_relation(2, &pi), Laurent::constant(q(105, 1)));
    }
}
