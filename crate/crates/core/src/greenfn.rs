//! Dirichlet Green's functions of `(−Δ)^k` on the unit ball and on the
//! upper half-space, with the normalising constant set to 1.

use crate::conformal::phi;
use crate::error::{Error, Result};
use crate::quad::gauss_legendre_on;
use crate::util::{dist, dot, norm};
use serde::{Deserialize, Serialize};

/// A Green's function value tagged with its parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GreenEval {
    pub n: usize,
    pub k: usize,
    pub value: f64,
}

fn distinct(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Parameter("dimension mismatch".into()));
    }
    let d = dist(x, y);
    if d == 0.0 {
        return Err(Error::Singular("coincident points".into()));
    }
    Ok(d)
}

/// `ψ(x, y) = (1 − |x|²)(1 − |y|²)/|x − y|²` on the unit ball.
pub fn psi_ball(x: &[f64], y: &[f64]) -> Result<f64> {
    let d = distinct(x, y)?;
    let (ax, ay) = (1.0 - dot(x, x), 1.0 - dot(y, y));
    if ax < 0.0 || ay < 0.0 {
        return Err(Error::Parameter("points must lie in the closed unit ball".into()));
    }
    Ok(ax * ay / (d * d))
}

/// `ψ_∞(x, y) = 4 x_1 y_1/|x − y|²` on the half-space.
pub fn psi_half(x: &[f64], y: &[f64]) -> Result<f64> {
    let d = distinct(x, y)?;
    if x[0] < 0.0 || y[0] < 0.0 {
        return Err(Error::Parameter("points must lie in the closed half-space".into()));
    }
    Ok(4.0 * x[0] * y[0] / (d * d))
}

fn binom(n: usize, j: usize) -> f64 {
    (0..j).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `∫_1^s (t² − 1)^{k−1} t^{1−n} dt`; `s = ∞` is allowed.
///
/// The binomial closed form cancels badly near `s = 1`, where the integrand
/// vanishes to order `k − 1`; there a Gauss–Legendre rule (exact up to the
/// smooth factor `t^{1−n}`) is used instead.
pub fn kernel_integral(s: f64, k: usize, n: usize) -> Result<f64> {
    crate::bubbles::check_dims(n, k)?;
    if s.is_nan() || s < 1.0 {
        return Err(Error::Parameter(format!("kernel_integral needs s ≥ 1, got {s}")));
    }
    if s == 1.0 {
        return Ok(0.0);
    }
    if s < 1.5 {
        Ok(kernel_gauss(s, k, n))
    } else {
        Ok(kernel_closed(s, k, n))
    }
}

fn kernel_gauss(s: f64, k: usize, n: usize) -> f64 {
    let f = |t: f64| (t * t - 1.0).powi(k as i32 - 1) * t.powi(1 - n as i32);
    gauss_legendre_on(24 + 2 * k, 1.0, s)
        .into_iter()
        .map(|(t, w)| w * f(t))
        .sum()
}

fn kernel_closed(s: f64, k: usize, n: usize) -> f64 {
    // (t² − 1)^{k−1} = Σ_j C(k−1, j) (−1)^{k−1−j} t^{2j}
    let mut total = 0.0;
    for j in 0..k {
        let c = binom(k - 1, j) * if (k - 1 - j) % 2 == 0 { 1.0 } else { -1.0 };
        let e = 2 * j as i64 + 2 - n as i64;
        // e = 0 would need n ≤ 2k; kept for completeness
        let piece = if e == 0 {
            s.ln()
        } else if s.is_infinite() {
            // e < 0 whenever n > 2k
            -1.0 / e as f64
        } else {
            (s.powi(e as i32) - 1.0) / e as f64
        };
        total += c * piece;
    }
    total
}

fn green(d: f64, psi: f64, n: usize, k: usize) -> Result<GreenEval> {
    let value = d.powi(2 * k as i32 - n as i32) * kernel_integral((1.0 + psi).sqrt(), k, n)?;
    Ok(GreenEval { n, k, value })
}

pub fn green_ball(x: &[f64], y: &[f64], n: usize, k: usize) -> Result<GreenEval> {
    if x.len() != n || norm(x) >= 1.0 || norm(y) >= 1.0 {
        return Err(Error::Parameter("points must lie in the open unit ball".into()));
    }
    let psi = psi_ball(x, y)?;
    green(dist(x, y), psi, n, k)
}

pub fn green_half(x: &[f64], y: &[f64], n: usize, k: usize) -> Result<GreenEval> {
    if x.len() != n || x[0] <= 0.0 || y[0] <= 0.0 {
        return Err(Error::Parameter("points must lie in the open half-space".into()));
    }
    let psi = psi_half(x, y)?;
    green(dist(x, y), psi, n, k)
}

/// Relative defect of `G_B(x,y) = |x+e_1|^{2k−n}|y+e_1|^{2k−n} G_{R^n_+}(Φ(x),Φ(y))`.
pub fn check_conformal_relation(x: &[f64], y: &[f64], n: usize, k: usize) -> Result<f64> {
    let gb = green_ball(x, y, n, k)?.value;
    let e = 2.0 * k as f64 - n as f64;
    let wx = {
        let mut v = x.to_vec();
        v[0] += 1.0;
        norm(&v)
    };
    let wy = {
        let mut v = y.to_vec();
        v[0] += 1.0;
        norm(&v)
    };
    let gh = green_half(&phi(x)?, &phi(y)?, n, k)?.value;
    Ok((gb - wx.powf(e) * wy.powf(e) * gh).abs() / gb)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psi_examples() {
        assert!((psi_ball(&[0.0, 0.0, 0.0], &[0.5, 0.0, 0.0]).unwrap() - 3.0).abs() < 1e-15);
        assert_eq!(psi_half(&[0.0, 1.0], &[1.0, 0.0]).unwrap(), 0.0);
        assert!(psi_ball(&[0.1, 0.2], &[0.1, 0.2]).is_err());
    }

    #[test]
    fn kernel_integral_examples() {
        assert_eq!(kernel_integral(1.0, 2, 6).unwrap(), 0.0);
        assert!((kernel_integral(2.0, 1, 3).unwrap() - 0.5).abs() < 1e-15);
        // the two evaluation paths agree where they meet
        for (k, n) in [(2, 6), (3, 7), (2, 5)] {
            for s in [1.2, 1.5, 2.5] {
                let a = kernel_gauss(s, k, n);
                let b = kernel_closed(s, k, n);
                assert!((a - b).abs() < 1e-12 * b.abs(), "k={k} n={n} s={s}");
            }
        }
        let v = kernel_integral(f64::INFINITY, 1, 3).unwrap();
        assert!((v - 1.0).abs() < 1e-15);
    }

    #[test]
    fn classical_ball_green_function() {
        let x = [0.3, -0.2, 0.1];
        let y = [-0.1, 0.4, 0.2];
        let g = green_ball(&x, &y, 3, 1).unwrap().value;
        let xs: Vec<f64> = x.iter().map(|v| v / dot(&x, &x)).collect();
        let classical = 1.0 / dist(&x, &y) - 1.0 / (norm(&x) * dist(&y, &xs));
        assert!((g - classical).abs() < 1e-12 * classical);
    }
}
