//! Radial shooting and continuation for
//! `(−Δ)^k u + μ(−Δ)^p u = |u|^{2♯−2}u` in the unit ball with Dirichlet data.
//!
//! Sign convention: the classical Brézis–Nirenberg problem
//! `−Δu − λu = u^{2♯−1}` is `k = 1, p = 0, μ = −λ`.
//!
//! The equation is written as the chain `v_i = (−Δ)^i u`,
//! `−v_i'' − (n−1)/r v_i' = v_{i+1}` for `i < k−1`, closed by
//! `−v_{k−1}'' − (n−1)/r v_{k−1}' = |v_0|^{2♯−2}v_0 − μ v_p`, and shot from
//! the data `d = (v_0(0), …, v_{k−1}(0))`.

use crate::bubbles::{bubble_a, half_weight, standard_bubble_jet};
use crate::error::{Error, Result};
use crate::ode::{dopri5, DenseOutput, OdeOptions};
use crate::quad::integrate_radial;
use crate::radialgebra::critical_exponent;
use crate::util::{fit_slope, sphere_area};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Starting radius of the Taylor-regularised integration.
pub const START_RADIUS: f64 = 1e-6;
const MAX_NEWTON: usize = 50;
const MAX_HALVINGS: usize = 12;
/// Cap on parameter sub-steps over a whole continuation run.
const MAX_SUBSTEPS: usize = 2000;

fn default_true() -> bool {
    true
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemParams {
    pub n: usize,
    pub k: usize,
    pub p: usize,
    pub mu: f64,
    /// Switches the critical nonlinearity off for linear checks.
    #[serde(default = "default_true")]
    pub nonlinear: bool,
}

impl ProblemParams {
    pub fn new(n: usize, k: usize, p: usize, mu: f64) -> Result<Self> {
        let s = Self {
            n,
            k,
            p,
            mu,
            nonlinear: true,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.n <= 2 * self.k {
            return Err(Error::Parameter(format!(
                "need n > 2k ≥ 2, got n = {}, k = {}",
                self.n, self.k
            )));
        }
        if self.p >= self.k {
            return Err(Error::Parameter(format!(
                "need 0 ≤ p ≤ k − 1, got p = {}",
                self.p
            )));
        }
        if !self.mu.is_finite() {
            return Err(Error::Parameter("μ must be finite".into()));
        }
        Ok(())
    }

    pub fn with_mu(mut self, mu: f64) -> Self {
        self.mu = mu;
        self
    }

    fn exponent(&self) -> f64 {
        critical_exponent(self.n as u32, self.k as u32)
    }

    fn nonlinearity(&self, v: f64) -> f64 {
        if !self.nonlinear || v == 0.0 {
            0.0
        } else {
            v.abs().powf(self.exponent() - 2.0) * v
        }
    }

    fn nonlinearity_slope(&self, v: f64) -> f64 {
        if !self.nonlinear || v == 0.0 {
            0.0
        } else {
            (self.exponent() - 1.0) * v.abs().powf(self.exponent() - 2.0)
        }
    }

    /// Layout: `v_0..v_{k−1}`, `v_0'..v_{k−1}'`, energy, lower-order term.
    fn state_len(&self) -> usize {
        2 * self.k + 2
    }
}

/// `∫|∇^q u|²` density `|(−Δ)^{q/2}u|²` from the state.
fn order_density(y: &[f64], k: usize, q: usize) -> f64 {
    if q % 2 == 0 {
        y[q / 2] * y[q / 2]
    } else {
        let w = y[k + (q - 1) / 2];
        w * w
    }
}

fn rhs(params: &ProblemParams, r: f64, y: &[f64], dy: &mut [f64]) {
    let (n, k) = (params.n, params.k);
    let c = (n as f64 - 1.0) / r;
    for i in 0..k {
        dy[i] = y[k + i];
        let next = if i + 1 < k {
            y[i + 1]
        } else {
            params.nonlinearity(y[0]) - params.mu * y[params.p]
        };
        dy[k + i] = -c * y[k + i] - next;
    }
    let area = sphere_area(n) * r.powi(n as i32 - 1);
    dy[2 * k] = area * order_density(y, k, k);
    dy[2 * k + 1] = area * order_density(y, k, params.p);
}

/// `(−Δ)^l u(0)` for `l ≤ k + 1` from the shooting data.
fn centre_values(params: &ProblemParams, d: &[f64]) -> Vec<f64> {
    let k = params.k;
    let mut dd = d.to_vec();
    let top = params.nonlinearity(d[0]) - params.mu * d[params.p];
    dd.push(top);
    let d1 = dd[1];
    let dp1 = dd[params.p + 1];
    dd.push(params.nonlinearity_slope(d[0]) * d1 - params.mu * dp1);
    debug_assert_eq!(dd.len(), k + 2);
    dd
}

/// Taylor start at `r = ε` for a radial function with `(−Δ)^j v(0) = D_j`:
/// `v(r) = Σ_j (−1)^j D_j r^{2j} / Π_{m≤j} 2m(n+2m−2)`.
fn taylor_start(params: &ProblemParams, d: &[f64], eps: f64) -> Vec<f64> {
    let (n, k) = (params.n as f64, params.k);
    let dd = centre_values(params, d);
    let mut y = vec![0.0; params.state_len()];
    let mut c = [1.0; 3];
    for j in 1..3 {
        let m = j as f64;
        c[j] = c[j - 1] * 2.0 * m * (n + 2.0 * m - 2.0);
    }
    for i in 0..k {
        let mut v = 0.0;
        let mut w = 0.0;
        for j in 0..3 {
            let Some(dv) = dd.get(i + j) else { break };
            let s = if j % 2 == 0 { 1.0 } else { -1.0 };
            v += s * dv * eps.powi(2 * j as i32) / c[j];
            if j > 0 {
                w += s * dv * 2.0 * j as f64 * eps.powi(2 * j as i32 - 1) / c[j];
            }
        }
        y[i] = v;
        y[k + i] = w;
    }
    y
}

/// `d^j/dr^j v_i` at `r` from the state, using
/// `v_i'' = −(n−1)/r v_i' − v_{i+1}`.
fn radial_derivative(n: usize, k: usize, y: &[f64], r: f64, i: usize, j: usize) -> f64 {
    match j {
        0 => y[i],
        1 => y[k + i],
        _ => {
            assert!(i + 1 < k, "derivative order exceeds the chain");
            let q = j - 2;
            let mut acc = 0.0;
            let mut binom = 1.0;
            for m in 0..=q {
                let s = q - m;
                // (1/r)^{(s)} = (−1)^s s! r^{−s−1}
                let fact: f64 = (1..=s).map(|v| v as f64).product();
                let inv = if s % 2 == 0 { 1.0 } else { -1.0 } * fact * r.powi(-(s as i32) - 1);
                acc += binom * inv * radial_derivative(n, k, y, r, i, m + 1);
                binom = binom * (q - m) as f64 / (m + 1) as f64;
            }
            -(n as f64 - 1.0) * acc - radial_derivative(n, k, y, r, i + 1, q)
        }
    }
}

/// Radial solution with diagnostics.
#[derive(Clone, Debug)]
pub struct RadialSolution {
    pub params: ProblemParams,
    pub d: Vec<f64>,
    /// Dirichlet mismatch `(u(1), u'(1), …, u^{(k−1)}(1))`.
    pub mismatch: Vec<f64>,
    pub mismatch_norm: f64,
    /// Largest `|v_i(1)|, |v_i'(1)|`; the Newton tolerance is relative to it.
    pub boundary_scale: f64,
    /// Newton stopped at the integration noise floor above `rtol`.
    pub noise_limited: bool,
    /// Integration error level of the mismatch: ODE tolerance times the
    /// largest chain state along the trajectory.
    pub noise_floor: f64,
    pub sup_norm: f64,
    /// `∫|∇^k u|²`, computed as `∫|(−Δ)^{k/2}u|²`.
    pub energy: f64,
    /// `∫|∇^p u|²`, computed the same way.
    pub lower_order: f64,
    pub dense: DenseOutput,
}

impl RadialSolution {
    /// `(v_0, …, v_{k−1})` at radius `r`.
    pub fn values(&self, r: f64) -> Vec<f64> {
        let r = r.max(START_RADIUS);
        self.dense.eval(r)[..self.params.k].to_vec()
    }

    /// `(v_0', …, v_{k−1}')` at radius `r`.
    pub fn slopes(&self, r: f64) -> Vec<f64> {
        let r = r.max(START_RADIUS);
        let k = self.params.k;
        self.dense.eval(r)[k..2 * k].to_vec()
    }

    pub fn u(&self, r: f64) -> f64 {
        if r <= START_RADIUS {
            return self.d[0];
        }
        self.dense.eval(r)[0]
    }

    /// Samples of `(r, u(r))` on a uniform grid of `count + 1` points.
    pub fn grid(&self, count: usize) -> Vec<(f64, f64)> {
        (0..=count)
            .map(|i| {
                let r = i as f64 / count as f64;
                (r, self.u(r))
            })
            .collect()
    }
}

/// Integration tolerance used by the shooting map for a Newton tolerance.
fn ode_options(rtol: f64) -> OdeOptions {
    OdeOptions {
        rtol: (rtol * 1e-2).clamp(1e-13, 1e-6),
        atol: (rtol * 1e-6).clamp(1e-16, 1e-10),
        h_init: START_RADIUS,
        ..Default::default()
    }
}

/// Integrates from `r = ε` to `1` with shooting data `d`.
pub fn shoot(params: &ProblemParams, d: &[f64], rtol: f64) -> Result<(Vec<f64>, RadialSolution)> {
    params.validate()?;
    let k = params.k;
    if d.len() != k || d.iter().any(|v| !v.is_finite()) {
        return Err(Error::Parameter(format!("need {k} finite shooting values")));
    }
    if !(rtol > 0.0) {
        return Err(Error::Parameter("rtol must be positive".into()));
    }
    let y0 = taylor_start(params, d, START_RADIUS);
    let mut opts = ode_options(rtol);
    opts.controlled = Some(2 * k);
    let scale = d.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    opts.blowup = 1e12 * scale.powf(params.exponent().max(2.0));
    let (y1, dense) = dopri5(
        |r, y, dy| rhs(params, r, y, dy),
        START_RADIUS,
        &y0,
        1.0,
        opts,
    )?;
    let mismatch: Vec<f64> = (0..k)
        .map(|j| radial_derivative(params.n, k, &y1, 1.0, 0, j))
        .collect();
    let mismatch_norm = mismatch.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut sup: f64 = d[0].abs();
    let mut state_scale: f64 = 0.0;
    for i in 0..=400 {
        let r = START_RADIUS + (1.0 - START_RADIUS) * i as f64 / 400.0;
        let y = dense.eval(r);
        sup = sup.max(y[0].abs());
        state_scale = y[..2 * k].iter().fold(state_scale, |m, v| m.max(v.abs()));
    }
    let sol = RadialSolution {
        params: *params,
        d: d.to_vec(),
        mismatch: mismatch.clone(),
        mismatch_norm,
        boundary_scale: y1[..2 * k].iter().fold(0.0f64, |m, v| m.max(v.abs())),
        noise_limited: false,
        noise_floor: ode_options(rtol).rtol * state_scale,
        sup_norm: sup,
        energy: y1[2 * k],
        lower_order: y1[2 * k + 1],
        dense,
    };
    Ok((mismatch, sol))
}

fn newton_scale(d: &[f64]) -> f64 {
    d.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

fn converged(sol: &RadialSolution, rtol: f64) -> bool {
    sol.mismatch_norm <= rtol * sol.boundary_scale
}

/// Newton cannot descend further, and the mismatch is either small against
/// the boundary state or within a few hundred times the integration noise.
fn at_noise_floor(sol: &RadialSolution, rtol: f64) -> bool {
    sol.mismatch_norm <= rtol.sqrt() * sol.boundary_scale || sol.mismatch_norm <= 300.0 * sol.noise_floor
}

/// Damped Newton on `z ↦ mismatch(z)` with a forward-difference Jacobian.
fn damped_newton<F>(z0: &[f64], map: F, rtol: f64, patience: usize) -> Result<RadialSolution>
where
    F: Fn(&[f64]) -> Result<(Vec<f64>, RadialSolution)>,
{
    let dim = z0.len();
    let (mut m, mut sol) = map(z0)?;
    let mut z = z0.to_vec();
    let mut slow = 0;
    for _ in 0..MAX_NEWTON {
        if converged(&sol, rtol) {
            return Ok(sol);
        }
        let norm = sol.mismatch_norm;
        let zs = newton_scale(&z).max(1e-300);
        let mut jac = DMatrix::<f64>::zeros(dim, dim);
        for j in 0..dim {
            let h = 1e-7 * z[j].abs().max(1e-3 * zs).max(1e-3);
            let mut zp = z.clone();
            zp[j] += h;
            let (mp, _) = map(&zp)?;
            for i in 0..dim {
                jac[(i, j)] = (mp[i] - m[i]) / h;
            }
        }
        let sv = jac.clone().svd(false, false).singular_values;
        let smax = sv.iter().cloned().fold(0.0, f64::max);
        let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
        let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
        if condition > 1e14 {
            return Err(Error::SingularJacobian { condition });
        }
        let step = jac
            .lu()
            .solve(&DVector::from_column_slice(&m))
            .ok_or(Error::SingularJacobian { condition })?;
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let trial: Vec<f64> = (0..dim).map(|i| z[i] - t * step[i]).collect();
            if let Ok((mt, st)) = map(&trial) {
                if st.mismatch_norm < norm {
                    // stagnating damped steps rarely recover; fail early
                    slow = if st.mismatch_norm > 0.9 * norm { slow + 1 } else { 0 };
                    z = trial;
                    m = mt;
                    sol = st;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted || slow >= patience {
            // integration noise floor: no descent direction left but the
            // mismatch is already small against the boundary state
            if at_noise_floor(&sol, rtol) {
                sol.noise_limited = true;
                return Ok(sol);
            }
            return Err(Error::NoConvergence {
                iterations: MAX_NEWTON,
                mismatch: sol.mismatch_norm,
            });
        }
    }
    if converged(&sol, rtol) {
        Ok(sol)
    } else {
        Err(Error::NoConvergence {
            iterations: MAX_NEWTON,
            mismatch: sol.mismatch_norm,
        })
    }
}

/// Damped Newton on the shooting map with a forward-difference Jacobian.
/// Converges when `‖mismatch‖_∞ ≤ rtol · boundary_scale`.
pub fn newton_solve(params: &ProblemParams, d_init: &[f64], rtol: f64) -> Result<RadialSolution> {
    damped_newton(d_init, |d| shoot(params, d, rtol), rtol, MAX_NEWTON)
}

/// Solves with `u(0)` pinned to `amplitude` and `μ` treated as unknown,
/// starting from `guess = (v_1(0), …, v_{k−1}(0), μ)`.
pub fn solve_at_amplitude(
    params: &ProblemParams,
    amplitude: f64,
    guess: &[f64],
    rtol: f64,
) -> Result<RadialSolution> {
    amplitude_newton(params, amplitude, guess, rtol, MAX_NEWTON)
}

fn amplitude_newton(
    params: &ProblemParams,
    amplitude: f64,
    guess: &[f64],
    rtol: f64,
    patience: usize,
) -> Result<RadialSolution> {
    let k = params.k;
    if guess.len() != k {
        return Err(Error::Parameter(format!("need {k} unknowns")));
    }
    damped_newton(
        guess,
        |z| {
            let mut d = vec![amplitude];
            d.extend_from_slice(&z[..k - 1]);
            shoot(&params.with_mu(z[k - 1]), &d, rtol)
        },
        rtol,
        patience,
    )
}

/// Shooting data of the rescaled bubble `s^{−(n−2k)/2} B(x/s)`.
pub fn bubble_guess(params: &ProblemParams, scale: f64) -> Vec<f64> {
    let (n, k) = (params.n, params.k);
    let jet = standard_bubble_jet(n, k, &vec![0.0; n], 2 * k);
    let amp = scale.powf(-half_weight(n, k));
    (0..k)
        .map(|i| {
            let v = jet.neg_laplacian_pow(i).expect("order 2k").value();
            amp * scale.powi(-2 * i as i32) * v
        })
        .collect()
}

/// Finds a positive solution at `params.mu`.
///
/// Newton is first started from bubble-shaped data at each of `scales`. If
/// none converges, the amplitude `u(0)` is swept upward along the same
/// scales, refined geometrically, with `μ` as unknown until the target `μ`
/// is bracketed; the bracket is interpolated and polished by Newton.
pub fn seed_solution(params: &ProblemParams, scales: &[f64], rtol: f64) -> Result<RadialSolution> {
    let mut last = Error::Parameter("no seed scales given".into());
    for &s in scales {
        match newton_solve(params, &bubble_guess(params, s), rtol) {
            Ok(sol) if sol.d[0] > 0.0 && is_positive(&sol) => return Ok(sol),
            Ok(_) => last = Error::Unsupported("seed converged to a trivial or sign-changing state".into()),
            Err(e) => last = e,
        }
    }
    amplitude_sweep(params, scales, rtol).map_err(|e| match e {
        Error::Parameter(_) => last,
        other => other,
    })
}

fn amplitude_sweep(params: &ProblemParams, scales: &[f64], rtol: f64) -> Result<RadialSolution> {
    let s_max = scales.iter().cloned().fold(0.0f64, f64::max);
    let s_min = scales.iter().cloned().fold(f64::INFINITY, f64::min).min(1e-2);
    if !(s_max > 0.0) {
        return Err(Error::Parameter("seed scales must be positive".into()));
    }
    let g0 = bubble_guess(params, s_max);
    let mut z0: Vec<f64> = g0[1..].iter().map(|v| v.abs().ln()).collect();
    z0.push(params.mu);
    let tracker = AmplitudeTracker::new(params, rtol);
    let first = tracker.solve_with(s_max.ln(), &z0, MAX_NEWTON)?;
    tracker.track(vec![(s_max.ln(), first)], -1.0, s_min.ln())
}

/// Follows the positive branch with `log s`, `s = u(0)^{−2/(n−2k)}`, as the
/// parameter and `μ` as unknown. This passes folds in `μ` that stall
/// natural-parameter continuation.
struct AmplitudeTracker<'a> {
    params: &'a ProblemParams,
    rtol: f64,
    signs: Vec<f64>,
}

impl<'a> AmplitudeTracker<'a> {
    fn new(params: &'a ProblemParams, rtol: f64) -> Self {
        let signs = bubble_guess(params, 1.0)[1..].iter().map(|v| v.signum()).collect();
        Self { params, rtol, signs }
    }

    /// Unknowns `(log|v_i(0)|, 1 ≤ i < k; μ)`.
    fn unknowns(&self, sol: &RadialSolution) -> Vec<f64> {
        let mut z: Vec<f64> = sol.d[1..].iter().map(|v| v.abs().ln()).collect();
        z.push(sol.params.mu);
        z
    }

    fn log_scale(&self, sol: &RadialSolution) -> f64 {
        -sol.d[0].ln() / half_weight(self.params.n, self.params.k)
    }

    /// Continuation steps start close to the branch, so slow Newton progress
    /// means the step was too long.
    fn solve(&self, ls: f64, z: &[f64]) -> Result<RadialSolution> {
        self.solve_with(ls, z, 6)
    }

    fn solve_with(&self, ls: f64, z: &[f64], patience: usize) -> Result<RadialSolution> {
        let k = self.params.k;
        let mut g: Vec<f64> = z[..k - 1].iter().zip(&self.signs).map(|(l, sg)| sg * l.exp()).collect();
        g.push(z[k - 1]);
        let amp = (-half_weight(self.params.n, k) * ls).exp();
        let sol = amplitude_newton(self.params, amp, &g, self.rtol, patience)?;
        if is_positive(&sol) {
            Ok(sol)
        } else {
            Err(Error::Unsupported("amplitude solve left the positive branch".into()))
        }
    }

    fn predict(&self, hist: &[(f64, RadialSolution)], ls: f64) -> Vec<f64> {
        let (l1, s1) = &hist[hist.len() - 1];
        let z1 = self.unknowns(s1);
        if hist.len() == 1 {
            return z1;
        }
        let (l0, s0) = &hist[hist.len() - 2];
        let z0 = self.unknowns(s0);
        let t = (ls - l1) / (l1 - l0);
        z1.iter().zip(&z0).map(|(a, b)| a + t * (a - b)).collect()
    }

    /// Steps `log s` in `direction` until `μ` crosses the target, then refines.
    fn track(&self, mut hist: Vec<(f64, RadialSolution)>, direction: f64, limit: f64) -> Result<RadialSolution> {
        let target = self.params.mu;
        let max_step = 0.2;
        let mut step = max_step;
        let mut failures = 0;
        while (limit - hist[hist.len() - 1].0) * direction > 0.0 {
            let ls = hist[hist.len() - 1].0 + direction * step;
            match self.solve(ls, &self.predict(&hist, ls)) {
                Ok(next) => {
                    failures = 0;
                    step = (step * 1.5).min(max_step);
                    let m0 = hist[hist.len() - 1].1.params.mu;
                    let m1 = next.params.mu;
                    hist.push((ls, next));
                    if (m0 - target) * (m1 - target) <= 0.0 {
                        return self.refine(hist);
                    }
                }
                Err(e) => {
                    failures += 1;
                    if failures > 8 {
                        return Err(e);
                    }
                    step *= 0.5;
                }
            }
        }
        Err(Error::Unsupported(format!(
            "μ = {target} not reached by the amplitude sweep down to scale {:.3e}",
            limit.exp()
        )))
    }

    /// Moves a solution at `μ ≈ target` onto the target exactly.
    fn polish(&self, near: &RadialSolution) -> Result<RadialSolution> {
        let (_, mut sol) = shoot(self.params, &near.d, self.rtol)?;
        if converged(&sol, self.rtol) {
            return Ok(sol);
        }
        if let Ok(fin) = newton_solve(self.params, &near.d, self.rtol) {
            return Ok(fin);
        }
        if at_noise_floor(&sol, self.rtol) {
            sol.noise_limited = true;
            return Ok(sol);
        }
        Err(Error::NoConvergence {
            iterations: MAX_NEWTON,
            mismatch: sol.mismatch_norm,
        })
    }

    /// Regula falsi in `log s` on the last two points, which bracket the
    /// target `μ`; the result is polished by Newton at fixed `μ`.
    fn refine(&self, mut hist: Vec<(f64, RadialSolution)>) -> Result<RadialSolution> {
        let mut b = hist.pop().expect("bracket");
        let mut a = hist.pop().expect("bracket");
        let target = self.params.mu;
        let tol = 1e-10 * target.abs().max(1.0);
        let mut side = 0i32;
        for _ in 0..60 {
            let (fa, fb) = (a.1.params.mu - target, b.1.params.mu - target);
            let best = if fa.abs() < fb.abs() { &a } else { &b };
            if fa.abs().min(fb.abs()) <= tol || (a.0 - b.0).abs() < 1e-14 {
                return self.polish(&best.1);
            }
            // Illinois weighting keeps both ends moving
            let (wa, wb) = match side {
                1 => (0.5, 1.0),
                -1 => (1.0, 0.5),
                _ => (1.0, 1.0),
            };
            let t = (wa * fa) / (wa * fa - wb * fb);
            let ls = a.0 + t * (b.0 - a.0);
            let (za, zb) = (self.unknowns(&a.1), self.unknowns(&b.1));
            let z: Vec<f64> = za.iter().zip(&zb).map(|(x, y)| x + t * (y - x)).collect();
            let c = self.solve(ls, &z)?;
            let fc = c.params.mu - target;
            if fc * fa > 0.0 {
                a = (ls, c);
                side = -1;
            } else {
                b = (ls, c);
                side = 1;
            }
        }
        Err(Error::NoConvergence {
            iterations: 60,
            mismatch: a.1.params.mu - target,
        })
    }
}

/// Reaches `target` from `cur` (and optionally `prev`) along the branch by
/// amplitude tracking.
fn track_to(
    params: &ProblemParams,
    target: f64,
    cur: &RadialSolution,
    prev: Option<&RadialSolution>,
    rtol: f64,
) -> Result<RadialSolution> {
    let p = params.with_mu(target);
    let tracker = AmplitudeTracker::new(&p, rtol);
    let lc = tracker.log_scale(cur);
    let mut hist = Vec::new();
    // slope dμ/d(log s) from the previous state or a probe
    let (lp, mp) = match prev {
        Some(pr) if tracker.log_scale(pr) != lc => (tracker.log_scale(pr), pr.params.mu),
        _ => {
            let z = tracker.unknowns(cur);
            let (off, probe) = [-1e-3, 1e-3]
                .iter()
                .find_map(|&o| tracker.solve_with(lc + o, &z, MAX_NEWTON).ok().map(|p| (o, p)))
                .ok_or_else(|| Error::Unsupported("branch probe failed".into()))?;
            (lc + off, probe.params.mu)
        }
    };
    let slope = (cur.params.mu - mp) / (lc - lp);
    let direction = ((target - cur.params.mu) / slope).signum();
    if let Some(pr) = prev {
        if (tracker.log_scale(pr) - lc) * direction < 0.0 {
            hist.push((tracker.log_scale(pr), pr.clone()));
        }
    }
    hist.push((lc, cur.clone()));
    let limit = if direction < 0.0 { (1e-4f64).ln() } else { 0.0 };
    tracker.track(hist, direction, limit)
}

fn is_positive(sol: &RadialSolution) -> bool {
    (0..400).all(|i| sol.u(i as f64 / 400.0) > -1e-8 * sol.sup_norm)
}

/// Relative residual of the integrated equations on a fresh Gauss grid:
/// `r^{n−1} v_i'(r) + ∫_0^r s^{n−1} v_{i+1}(s) ds = 0`.
pub fn collocation_residual(sol: &RadialSolution, points: usize) -> Result<f64> {
    let params = &sol.params;
    let (n, k) = (params.n, params.k);
    let mut worst: f64 = 0.0;
    let scale = sol
        .d
        .iter()
        .chain(std::iter::once(&sol.sup_norm))
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(1e-300);
    for q in 1..=points {
        let r = q as f64 / points as f64;
        let y = sol.dense.eval(r);
        for i in 0..k {
            let src = |s: f64| {
                let ys = sol.dense.eval(s.max(START_RADIUS));
                let next = if i + 1 < k {
                    ys[i + 1]
                } else {
                    params.nonlinearity(ys[0]) - params.mu * ys[params.p]
                };
                next * s.powi(n as i32 - 1)
            };
            let integral =
                crate::quad::integrate_interval(src, 0.0, r, 1e-12, 4000)?.value;
            let res = r.powi(n as i32 - 1) * y[k + i] + integral;
            // compare against the size of the terms involved
            let ref_size = (r.powi(n as i32 - 1) * y[k + i]).abs().max(1e-3 * scale * r.powi(n as i32));
            worst = worst.max(res.abs() / ref_size);
        }
    }
    Ok(worst)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchPoint {
    /// Coefficient `μ` of the lower-order term.
    pub mu: f64,
    pub sup_norm: f64,
    pub energy: f64,
    pub mu_fit: f64,
    pub fit_residual: f64,
    /// `∫|∇^p u|²`.
    pub poho_term: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub params: ProblemParams,
    pub points: Vec<BranchPoint>,
    /// Shooting data per point.
    pub data: Vec<Vec<f64>>,
    /// Parameter value at which the branch was lost, if it was.
    pub lost_at: Option<f64>,
}

impl Branch {
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["mu_param", "sup_norm", "energy", "mu_fit", "fit_residual", "poho_term"])
            .map_err(|e| Error::Io(e.to_string()))?;
        for p in &self.points {
            out.write_record(
                [p.mu, p.sup_norm, p.energy, p.mu_fit, p.fit_residual, p.poho_term]
                    .iter()
                    .map(|v| format!("{v:.12e}")),
            )
            .map_err(|e| Error::Io(e.to_string()))?;
        }
        out.flush()?;
        Ok(())
    }
}

fn branch_point(sol: &RadialSolution) -> BranchPoint {
    let (mu_fit, fit_residual) = fit_bubble(sol).unwrap_or((f64::NAN, f64::NAN));
    BranchPoint {
        mu: sol.params.mu,
        sup_norm: sol.sup_norm,
        energy: sol.energy,
        mu_fit,
        fit_residual,
        poho_term: sol.lower_order,
    }
}

/// Natural-parameter continuation over `mu_grid`, starting from `seed`.
/// The parameter step halves on failure and doubles on success. Below
/// `1/64` of the grid spacing the branch is followed in the amplitude
/// instead; if that also fails the branch is reported lost.
pub fn continuation(
    params: &ProblemParams,
    mu_grid: &[f64],
    seed: &RadialSolution,
    rtol: f64,
) -> Result<Branch> {
    if mu_grid.is_empty() {
        return Err(Error::Parameter("empty μ grid".into()));
    }
    let monotone = mu_grid.windows(2).all(|w| w[1] > w[0]) || mu_grid.windows(2).all(|w| w[1] < w[0]);
    if !monotone {
        return Err(Error::Parameter("μ grid must be strictly monotone".into()));
    }
    let mut branch = Branch {
        params: *params,
        points: Vec::new(),
        data: Vec::new(),
        lost_at: None,
    };
    let mut cur = seed.clone();
    let mut prev: Option<RadialSolution> = None;
    let mut budget = MAX_SUBSTEPS;
    for &target in mu_grid {
        let span = (target - cur.params.mu).abs();
        let mut h = span;
        while cur.params.mu != target {
            if budget == 0 || h < span * 2f64.powi(-16) {
                branch.lost_at = Some(target);
                return Ok(branch);
            }
            budget -= 1;
            if params.k > 1 {
                // the shooting Jacobian in d is nearly singular along the
                // amplitude direction for k ≥ 2, so track the amplitude
                match track_to(params, target, &cur, prev.as_ref(), rtol) {
                    Ok(sol) => prev = Some(std::mem::replace(&mut cur, sol)),
                    Err(_) => h = 0.0,
                }
                continue;
            }
            let remaining = target - cur.params.mu;
            let goal = if remaining.abs() <= h {
                target
            } else {
                cur.params.mu + h * remaining.signum()
            };
            match continuation_step(params.with_mu(goal), &cur, prev.as_ref(), rtol) {
                Some(sol) => {
                    prev = Some(std::mem::replace(&mut cur, sol));
                    h *= 2.0;
                }
                None if h > span / 64.0 => h *= 0.5,
                None => match track_to(params, goal, &cur, prev.as_ref(), rtol) {
                    Ok(sol) => {
                        prev = Some(std::mem::replace(&mut cur, sol));
                    }
                    Err(_) => h = 0.0,
                },
            }
        }
        branch.points.push(branch_point(&cur));
        branch.data.push(cur.d.clone());
    }
    Ok(branch)
}

/// Newton at `p.mu` from a secant prediction, falling back to `cur.d`.
fn continuation_step(
    p: ProblemParams,
    cur: &RadialSolution,
    prev: Option<&RadialSolution>,
    rtol: f64,
) -> Option<RadialSolution> {
    let mut guesses = Vec::new();
    if let Some(pr) = prev {
        let dm = cur.params.mu - pr.params.mu;
        if dm != 0.0 {
            let t = (p.mu - cur.params.mu) / dm;
            let g: Vec<f64> = cur.d.iter().zip(&pr.d).map(|(c, q)| c + t * (c - q)).collect();
            if g[0] > 0.0 {
                guesses.push(g);
            }
        }
    }
    guesses.push(cur.d.clone());
    guesses.into_iter().find_map(|g| {
        newton_solve(&p, &g, rtol)
            .ok()
            .filter(|sol| sol.d[0] > 0.0 && is_positive(sol))
    })
}

/// `(μ_fit, residual)` for a radial profile with maximum at the centre:
/// `μ_fit = u(0)^{−2/(n−2k)}` and the residual is the largest deviation from
/// `μ_fit^{−(n−2k)/2} B(r/μ_fit)` on `r ≤ min(10 μ_fit, r_max)`, relative to
/// `u(0)`.
pub fn fit_bubble_profile<F: Fn(f64) -> f64>(n: usize, k: usize, u: F, r_max: f64) -> Result<(f64, f64)> {
    let u0 = u(0.0);
    if !(u0 > 0.0) {
        return Err(Error::Unsupported("profile is not positive at the centre".into()));
    }
    let hw = half_weight(n, k);
    let a = bubble_a(n, k);
    let mu_fit = u0.powf(-1.0 / hw);
    let reach = (10.0 * mu_fit).min(r_max);
    let mut worst: f64 = 0.0;
    for i in 0..=400 {
        let r = reach * i as f64 / 400.0;
        let v = u(r);
        if v > u0 * (1.0 + 1e-9) {
            return Err(Error::Unsupported("maximum is not at the centre".into()));
        }
        let b = u0 * (1.0 + a * (r / mu_fit).powi(2)).powf(-hw);
        worst = worst.max((v - b).abs() / u0);
    }
    Ok((mu_fit, worst))
}

pub fn fit_bubble(sol: &RadialSolution) -> Result<(f64, f64)> {
    let (n, k) = (sol.params.n, sol.params.k);
    if sol.sup_norm > sol.d[0] * (1.0 + 1e-9) {
        return Err(Error::Unsupported("maximum is not at the centre".into()));
    }
    fit_bubble_profile(n, k, |r| sol.u(r), 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub slope: f64,
    pub points: usize,
}

/// Least-squares slope of `log ∫|∇^p u|²` against `log μ_fit`.
pub fn pohozaev_scaling(branch: &[BranchPoint]) -> Result<ScalingFit> {
    if branch.len() < 4 {
        return Err(Error::Parameter(format!(
            "need at least 4 branch points, got {}",
            branch.len()
        )));
    }
    if branch.iter().any(|p| !(p.mu_fit > 0.0) || !(p.poho_term > 0.0)) {
        return Err(Error::Parameter("non-positive fit data".into()));
    }
    if !branch.windows(2).all(|w| w[1].mu_fit < w[0].mu_fit) {
        return Err(Error::Parameter("μ_fit must decrease strictly along the branch".into()));
    }
    let xs: Vec<f64> = branch.iter().map(|p| p.mu_fit.ln()).collect();
    let ys: Vec<f64> = branch.iter().map(|p| p.poho_term.ln()).collect();
    Ok(ScalingFit {
        slope: fit_slope(&xs, &ys),
        points: branch.len(),
    })
}

/// Branch of exact rescaled bubbles restricted to the unit ball, with
/// `poho_term = ∫_B |(−Δ)^{p/2} u_s|²` by radial quadrature.
pub fn synthetic_bubble_branch(n: usize, k: usize, p: usize, scales: &[f64]) -> Result<Vec<BranchPoint>> {
    ProblemParams::new(n, k, p, 0.0)?;
    let hw = half_weight(n, k);
    scales
        .iter()
        .map(|&s| {
            // (−Δ)^{p/2} structure of the standard bubble along the first axis
            let density = |r: f64| {
                let mut y = vec![0.0; n];
                y[0] = r / s;
                let jet = standard_bubble_jet(n, k, &y, p + 1);
                let amp = s.powf(-hw) * s.powi(-(p as i32));
                if p % 2 == 0 {
                    let v = jet.neg_laplacian_pow(p / 2).expect("order").value() * amp;
                    v * v
                } else {
                    let g = jet.neg_laplacian_pow((p - 1) / 2).expect("order").gradient();
                    g.iter().map(|c| c * c).sum::<f64>() * amp * amp
                }
            };
            let q = integrate_radial(density, 1.0, n, 0.0, 1e-11)?;
            Ok(BranchPoint {
                mu: 0.0,
                sup_norm: s.powf(-hw),
                energy: f64::NAN,
                mu_fit: s,
                fit_residual: 0.0,
                poho_term: q.value,
            })
        })
        .collect()
}

/// Everything needed to reproduce a continuation run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveManifest {
    pub params: ProblemParams,
    pub mu_grid: Vec<f64>,
    pub rtol: f64,
    pub seed_scales: Vec<f64>,
    pub start_radius: f64,
    pub max_newton: usize,
    pub points: usize,
    pub lost_at: Option<f64>,
    pub scaling_slope: Option<f64>,
}

impl SolveManifest {
    pub fn new(params: ProblemParams, mu_grid: Vec<f64>, rtol: f64, seed_scales: Vec<f64>) -> Self {
        Self {
            params,
            mu_grid,
            rtol,
            seed_scales,
            start_radius: START_RADIUS,
            max_newton: MAX_NEWTON,
            points: 0,
            lost_at: None,
            scaling_slope: None,
        }
    }

    /// Seeds at the first grid value and continues along the grid.
    pub fn run(&mut self) -> Result<Branch> {
        let first = *self
            .mu_grid
            .first()
            .ok_or_else(|| Error::Parameter("empty μ grid".into()))?;
        let p0 = self.params.with_mu(first);
        let seed = seed_solution(&p0, &self.seed_scales, self.rtol)?;
        let branch = continuation(&self.params, &self.mu_grid, &seed, self.rtol)?;
        self.points = branch.points.len();
        self.lost_at = branch.lost_at;
        self.scaling_slope = pohozaev_scaling(&branch.points).ok().map(|f| f.slope);
        Ok(branch)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn taylor_start_is_consistent() {
        let p = ProblemParams::new(7, 2, 1, -0.5).unwrap();
        let d = [2.0, 0.7];
        let y = taylor_start(&p, &d, 1e-3);
        // v_0' ≈ −v_1(0) r / n
        assert!((y[2] + 0.7 * 1e-3 / 7.0).abs() < 1e-8);
        assert!((y[0] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn radial_derivative_of_quadratic() {
        // k = 3, u = 1 − r² in n = 7: v_1 = 2n, v_2 = 0; u'' = −2
        let n = 7;
        let r = 0.6;
        let y = [1.0 - r * r, 14.0, 0.0, -2.0 * r, 0.0, 0.0];
        assert!((radial_derivative(n, 3, &y, r, 0, 2) + 2.0).abs() < 1e-13);
        assert!(radial_derivative(n, 3, &y, r, 0, 3).abs() < 1e-12);
    }
}
