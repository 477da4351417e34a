//! The Cayley map `Φ(y) = (y + e_1)/|y + e_1|² − e_1/2` from the unit ball
//! onto the upper half-space, the induced transform `u*`, and checks of the
//! identities it satisfies.

use crate::error::{Error, Result};
use crate::jet::{Jet, JetProvider};
use crate::quad::{self, AxisRegion, Ball, Domain, NestedOptions, Shape};
use crate::util::{dist, dot, norm};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

fn shifted(y: &[f64]) -> Vec<f64> {
    let mut w = y.to_vec();
    w[0] += 1.0;
    w
}

/// `Φ(y)`; singular only at `y = −e_1`.
pub fn phi(y: &[f64]) -> Result<Vec<f64>> {
    let w = shifted(y);
    let q = dot(&w, &w);
    if q < 1e-300 {
        return Err(Error::Singular("Φ is singular at −e_1".into()));
    }
    let mut x: Vec<f64> = w.iter().map(|v| v / q).collect();
    x[0] -= 0.5;
    Ok(x)
}

/// `Φ^{-1}(x) = (x + e_1/2)/|x + e_1/2|² − e_1` on the closed half-space.
pub fn phi_inv(x: &[f64]) -> Result<Vec<f64>> {
    if x[0] < 0.0 {
        return Err(Error::Parameter("Φ^{-1} needs x_1 ≥ 0".into()));
    }
    let mut w = x.to_vec();
    w[0] += 0.5;
    let q = dot(&w, &w);
    let mut y: Vec<f64> = w.iter().map(|v| v / q).collect();
    y[0] -= 1.0;
    Ok(y)
}

/// Jets of the components of `Φ` at `y`.
pub fn phi_jet(y: &[f64], order: usize) -> Result<Vec<Jet>> {
    let n = y.len();
    let w = Jet::variables(&shifted(y), order);
    let mut q = Jet::zero(n, order);
    for v in &w {
        q = q.add(&v.mul(v));
    }
    if q.value() < 1e-300 {
        return Err(Error::Singular("Φ is singular at −e_1".into()));
    }
    let iq = q.recip();
    Ok(w.iter()
        .enumerate()
        .map(|(i, v)| {
            let c = v.mul(&iq);
            if i == 0 {
                c.add_scalar(-0.5)
            } else {
                c
            }
        })
        .collect())
}

/// `u*(y) = |y + e_1|^{2k−n} u(Φ(y))`.
pub fn cayley_transform(u: &dyn JetProvider, k: usize, y: &[f64]) -> Result<f64> {
    let n = y.len();
    let w = norm(&shifted(y));
    if w < 1e-150 {
        return Err(Error::Singular("Cayley transform at −e_1".into()));
    }
    Ok(w.powf(2.0 * k as f64 - n as f64) * u.value(&phi(y)?)?)
}

/// The Cayley transform of a half-space function as a jet provider on `B`.
#[derive(Clone)]
pub struct CayleyPullback {
    pub u: Arc<dyn JetProvider>,
    pub k: usize,
}

impl JetProvider for CayleyPullback {
    fn dim(&self) -> usize {
        self.u.dim()
    }

    fn smoothness(&self) -> usize {
        self.u.smoothness()
    }

    fn jet(&self, y: &[f64], order: usize) -> Result<Jet> {
        let n = y.len();
        let inner = phi_jet(y, order)?;
        let base: Vec<f64> = inner.iter().map(Jet::value).collect();
        let outer = self.u.jet(&base, order)?;
        let w = Jet::variables(&shifted(y), order);
        let mut q = Jet::zero(n, order);
        for v in &w {
            q = q.add(&v.mul(v));
        }
        let factor = q.powf((2.0 * self.k as f64 - n as f64) / 2.0);
        Ok(factor.mul(&Jet::compose_multi(&outer, &base, &inner)))
    }

    fn value(&self, y: &[f64]) -> Result<f64> {
        cayley_transform(self.u.as_ref(), self.k, y)
    }
}

/// `| |Φ(x) − Φ(y)| |x + e_1| |y + e_1| − |x − y| |`.
pub fn check_distance_identity(x: &[f64], y: &[f64]) -> Result<f64> {
    let lhs = dist(&phi(x)?, &phi(y)?) * norm(&shifted(x)) * norm(&shifted(y));
    Ok((lhs - dist(x, y)).abs())
}

/// Central-difference Jacobian determinant of `Φ` at `y`.
pub fn det_jacobian_fd(y: &[f64], h: f64) -> Result<f64> {
    let n = y.len();
    let mut m = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut yp = y.to_vec();
        let mut ym = y.to_vec();
        yp[j] += h;
        ym[j] -= h;
        let (fp, fm) = (phi(&yp)?, phi(&ym)?);
        for i in 0..n {
            m[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    Ok(m.determinant())
}

/// `|ψ_∞(Φ(x), Φ(y)) − ψ(x, y)|` relative to `ψ(x, y)`.
pub fn check_psi_invariance(x: &[f64], y: &[f64]) -> Result<f64> {
    let a = crate::greenfn::psi_half(&phi(x)?, &phi(y)?)?;
    let b = crate::greenfn::psi_ball(x, y)?;
    Ok((a - b).abs() / b.abs().max(f64::MIN_POSITIVE))
}

/// Two sides of an integral identity.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub rel_error: f64,
    pub error_estimate: f64,
}

impl IdentityCheck {
    fn new(lhs: f64, rhs: f64, err: f64) -> Self {
        let scale = lhs.abs().max(rhs.abs());
        let rel_error = if scale == 0.0 { 0.0 } else { (lhs - rhs).abs() / scale };
        Self {
            lhs,
            rhs,
            rel_error,
            error_estimate: err,
        }
    }
}

/// Integration controls for [`check_norm_invariance`].
#[derive(Clone, Copy, Debug)]
pub struct InvarianceOptions {
    /// The function depends on `(x_1, |x'|)` only.
    pub axisymmetric: bool,
    /// Half-space integrals are taken over `{x_1 > 0, |x| < r_max}`; the
    /// function must be negligible outside.
    pub r_max: f64,
    pub tol: f64,
}

impl Default for InvarianceOptions {
    fn default() -> Self {
        Self {
            axisymmetric: true,
            r_max: 8.0,
            tol: 1e-8,
        }
    }
}

fn kth_energy_density(j: &Jet, k: usize) -> Result<f64> {
    let base = j.neg_laplacian_pow(k / 2)?;
    Ok(if k % 2 == 0 {
        base.value().powi(2)
    } else {
        base.gradient().iter().map(|g| g * g).sum()
    })
}

/// Critical-norm and `(−Δ)^{k/2}`-energy invariance under the Cayley map.
pub fn check_norm_invariance(
    u: Arc<dyn JetProvider>,
    n: usize,
    k: usize,
    opts: InvarianceOptions,
) -> Result<(IdentityCheck, IdentityCheck)> {
    crate::bubbles::check_dims(n, k)?;
    if u.dim() != n {
        return Err(Error::Parameter("dimension mismatch".into()));
    }
    let crit = 2.0 * n as f64 / (n as f64 - 2.0 * k as f64);
    let star = CayleyPullback { u: u.clone(), k };
    let ball_f = |y: &[f64]| -> [f64; 2] {
        if norm(&shifted(y)) < 1e-12 {
            return [0.0, 0.0];
        }
        match star.jet(y, k) {
            Ok(j) => [
                j.value().abs().powf(crit),
                kth_energy_density(&j, k).unwrap_or(f64::NAN),
            ],
            Err(_) => [f64::NAN, f64::NAN],
        }
    };
    let half_f = |x: &[f64]| -> [f64; 2] {
        match u.jet(x, k) {
            Ok(j) => [
                j.value().abs().powf(crit),
                kth_energy_density(&j, k).unwrap_or(f64::NAN),
            ],
            Err(_) => [f64::NAN, f64::NAN],
        }
    };
    let mut ball = [0.0; 2];
    let mut half = [0.0; 2];
    let mut err = [0.0; 2];
    if opts.axisymmetric {
        let lift = |t: f64, s: f64| {
            let mut x = vec![0.0; n];
            x[0] = t;
            x[1] = s;
            x
        };
        for c in 0..2 {
            let b = quad::integrate_axisymmetric(
                |t, s| ball_f(&lift(t, s))[c],
                AxisRegion::Disc {
                    center: 0.0,
                    radius: 1.0,
                },
                n,
                opts.tol,
            )?;
            let h = quad::integrate_axisymmetric(
                |t, s| half_f(&lift(t, s))[c],
                AxisRegion::Box {
                    t0: 0.0,
                    t1: opts.r_max,
                    s1: opts.r_max,
                },
                n,
                opts.tol,
            )?;
            ball[c] = b.value;
            half[c] = h.value;
            err[c] = b.error_estimate + h.error_estimate;
        }
    } else {
        let opts_n = NestedOptions {
            rel_tol: opts.tol,
            ..Default::default()
        };
        let bd = Domain::new(Shape::Ball(Ball::unit(n)));
        let hd = Domain::new(Shape::HalfBall(Ball::new(vec![0.0; n], opts.r_max)));
        let b = quad::integrate_nested(
            |l| quad::volume_nodes(&bd, l),
            2,
            |x: &[f64], _: Option<&[f64]>, o: &mut [f64]| o.copy_from_slice(&ball_f(x)),
            opts_n,
        )?;
        let h = quad::integrate_nested(
            |l| quad::volume_nodes(&hd, l),
            2,
            |x: &[f64], _: Option<&[f64]>, o: &mut [f64]| o.copy_from_slice(&half_f(x)),
            opts_n,
        )?;
        if !(b.converged && h.converged) {
            return Err(Error::Accuracy {
                message: "norm invariance quadrature did not converge".into(),
                partial: b.values[0] - h.values[0],
                estimate: b.errors[0] + h.errors[0],
            });
        }
        for c in 0..2 {
            ball[c] = b.values[c];
            half[c] = h.values[c];
            err[c] = b.errors[c] + h.errors[c];
        }
    }
    Ok((
        IdentityCheck::new(ball[0], half[0], err[0]),
        IdentityCheck::new(ball[1], half[1], err[1]),
    ))
}

/// Outcome of the Laplacian conjugation check at one point.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ConjugationCheck {
    /// `(−Δ)^k v*(y)` from exact jets.
    pub lhs: f64,
    /// `|y + e_1|^{−n−2k} (−Δ)^k v(Φ(y))`.
    pub rhs: f64,
    pub residual: f64,
    /// `(−Δ)^k v*(y)` from Richardson-extrapolated finite differences.
    pub lhs_fd: f64,
    pub residual_fd: f64,
    /// Difference between the two finite-difference levels.
    pub fd_error: f64,
    pub step: f64,
}

/// Iterated second-difference Laplacian `(−Δ_h)^k f(y)`.
pub fn fd_neg_laplacian_pow(f: &dyn Fn(&[f64]) -> f64, y: &[f64], k: usize, h: f64) -> f64 {
    if k == 0 {
        return f(y);
    }
    let n = y.len();
    let centre = fd_neg_laplacian_pow(f, y, k - 1, h);
    let mut acc = -2.0 * n as f64 * centre;
    let mut z = y.to_vec();
    for i in 0..n {
        z[i] = y[i] + h;
        acc += fd_neg_laplacian_pow(f, &z, k - 1, h);
        z[i] = y[i] - h;
        acc += fd_neg_laplacian_pow(f, &z, k - 1, h);
        z[i] = y[i];
    }
    -acc / (h * h)
}

/// Checks `(−Δ)^k v*(y) = |y + e_1|^{−n−2k} (−Δ)^k v(Φ(y))`.
pub fn check_laplacian_conjugation(
    v: Arc<dyn JetProvider>,
    k: usize,
    y: &[f64],
) -> Result<ConjugationCheck> {
    let n = y.len();
    let w = norm(&shifted(y));
    if w < 1e-3 {
        return Err(Error::Singular(format!(
            "|y + e_1| = {w:e} is too small for a conditioned check"
        )));
    }
    let star = CayleyPullback { u: v.clone(), k };
    let lhs = star.jet(y, 2 * k)?.neg_laplacian_pow(k)?.value();
    let rhs = w.powf(-(n as f64) - 2.0 * k as f64)
        * v.jet(&phi(y)?, 2 * k)?.neg_laplacian_pow(k)?.value();
    let step = 1e-3f64.powf(1.0 / k as f64) * (1.0 + w);
    let f = |z: &[f64]| star.value(z).unwrap_or(f64::NAN);
    let l1 = fd_neg_laplacian_pow(&f, y, k, step);
    let l2 = fd_neg_laplacian_pow(&f, y, k, step / 2.0);
    let lhs_fd = (4.0 * l2 - l1) / 3.0;
    Ok(ConjugationCheck {
        lhs,
        rhs,
        residual: (lhs - rhs).abs(),
        lhs_fd,
        residual_fd: (lhs_fd - rhs).abs(),
        fd_error: (l2 - l1).abs() / 3.0,
        step,
    })
}

// ---------------------------------------------------------------------------
// Test functions on the half-space

/// `exp(−1/(1 − |x − c|²/R²))` inside `B(c, R)`, zero outside.
#[derive(Clone, Debug)]
pub struct Bump {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl JetProvider for Bump {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn smoothness(&self) -> usize {
        usize::MAX
    }

    fn jet(&self, x: &[f64], order: usize) -> Result<Jet> {
        let n = x.len();
        if dist(x, &self.center) >= self.radius {
            return Ok(Jet::zero(n, order));
        }
        let vars = Jet::variables(x, order);
        let mut r2 = Jet::zero(n, order);
        for (v, c) in vars.iter().zip(&self.center) {
            let d = v.add_scalar(-c);
            r2 = r2.add(&d.mul(&d));
        }
        let s = r2.scale(-1.0 / (self.radius * self.radius)).add_scalar(1.0);
        let e = s.recip().neg();
        if e.value() < -700.0 {
            return Ok(Jet::zero(n, order));
        }
        Ok(e.exp())
    }
}

/// `x_1^m exp(−|x − c|²)` on the half-space (zero for `x_1 ≤ 0`).
#[derive(Clone, Debug)]
pub struct HalfGaussian {
    pub center: Vec<f64>,
    pub power: usize,
}

impl JetProvider for HalfGaussian {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn smoothness(&self) -> usize {
        usize::MAX
    }

    fn jet(&self, x: &[f64], order: usize) -> Result<Jet> {
        let n = x.len();
        if x[0] <= 0.0 {
            return Ok(Jet::zero(n, order));
        }
        let vars = Jet::variables(x, order);
        let mut r2 = Jet::zero(n, order);
        for (v, c) in vars.iter().zip(&self.center) {
            let d = v.add_scalar(-c);
            r2 = r2.add(&d.mul(&d));
        }
        let mut p = Jet::constant(n, order, 1.0);
        for _ in 0..self.power {
            p = p.mul(&vars[0]);
        }
        Ok(p.mul(&r2.neg().exp()))
    }
}
