use polybubble::bubbles::{bubble_a, bubble_energy, half_weight};
use polybubble::radialsolver::*;
use polybubble::Error;

const RTOL: f64 = 1e-10;

#[test]
fn zero_data_is_the_trivial_solution() {
    let p = ProblemParams::new(7, 2, 1, -3.0).unwrap();
    let (m, sol) = shoot(&p, &[0.0, 0.0], RTOL).unwrap();
    assert!(m.iter().all(|v| *v == 0.0));
    assert_eq!(sol.sup_norm, 0.0);
    let fixed = newton_solve(&p, &[0.0, 0.0], RTOL).unwrap();
    assert_eq!(fixed.d, vec![0.0, 0.0]);
}

#[test]
fn linear_constant_solution() {
    let mut p = ProblemParams::new(7, 3, 0, 0.0).unwrap();
    p.nonlinear = false;
    let (m, sol) = shoot(&p, &[1.0, 0.0, 0.0], RTOL).unwrap();
    assert!((m[0] - 1.0).abs() < 1e-14 && m[1].abs() < 1e-14 && m[2].abs() < 1e-12, "{m:?}");
    for r in [0.0, 0.3, 1.0] {
        assert!((sol.u(r) - 1.0).abs() < 1e-14);
    }
}

#[test]
fn lane_emden_closed_form() {
    // −Δu = u⁵ in R³ with u(0) = 1 is (1 + r²/3)^{−1/2}
    let p = ProblemParams::new(3, 1, 0, 0.0).unwrap();
    let (m, sol) = shoot(&p, &[1.0], RTOL).unwrap();
    let exact = |r: f64| (1.0 + r * r / 3.0).powf(-0.5);
    for i in 0..=50 {
        let r = i as f64 / 50.0;
        assert!((sol.u(r) - exact(r)).abs() < 1e-11, "r = {r}");
    }
    assert!((m[0] - exact(1.0)).abs() < 1e-11);
    assert!(collocation_residual(&sol, 8).unwrap() < 10.0 * RTOL);
}

/// Classical fixed-step RK4 on `(v_0, v_1, v_0', v_1')` for k = 2 as an
/// independent integrator.
fn rk4_biharmonic(n: usize, mu: f64, p: usize, d: [f64; 2], r_end: f64) -> f64 {
    let q = 2.0 * n as f64 / (n as f64 - 4.0);
    let f = |r: f64, y: [f64; 4]| -> [f64; 4] {
        let c = (n as f64 - 1.0) / r;
        let top = y[0].abs().powf(q - 2.0) * y[0] - mu * y[p];
        [y[2], y[3], -c * y[2] - y[1], -c * y[3] - top]
    };
    // two-term series start
    let r0 = 1e-3;
    let nf = n as f64;
    let top0 = d[0].abs().powf(q - 2.0) * d[0] - mu * d[p];
    let mut y = [
        d[0] - d[1] * r0 * r0 / (2.0 * nf),
        d[1] - top0 * r0 * r0 / (2.0 * nf),
        -d[1] * r0 / nf,
        -top0 * r0 / nf,
    ];
    let steps = 20_000;
    let h = (r_end - r0) / steps as f64;
    let mut r = r0;
    let add = |a: [f64; 4], b: [f64; 4], s: f64| [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2], a[3] + s * b[3]];
    for _ in 0..steps {
        let k1 = f(r, y);
        let k2 = f(r + h / 2.0, add(y, k1, h / 2.0));
        let k3 = f(r + h / 2.0, add(y, k2, h / 2.0));
        let k4 = f(r + h, add(y, k3, h));
        for j in 0..4 {
            y[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        r += h;
    }
    y[0]
}

#[test]
fn biharmonic_matches_second_integrator() {
    let p = ProblemParams::new(9, 2, 1, -2.0).unwrap();
    let d = bubble_guess(&p, 0.6);
    let (_, sol) = shoot(&p, &d, RTOL).unwrap();
    let oracle = rk4_biharmonic(9, -2.0, 1, [d[0], d[1]], 1.0);
    // the series start at 1e-3 limits the oracle to about 1e-9
    assert!((sol.u(1.0) - oracle).abs() < 1e-8 * d[0].abs(), "{} vs {oracle}", sol.u(1.0));
}

#[test]
fn shoot_errors() {
    let p = ProblemParams::new(7, 1, 0, -1.0).unwrap();
    assert!(matches!(shoot(&p, &[f64::NAN], RTOL), Err(Error::Parameter(_))));
    assert!(matches!(shoot(&p, &[1.0, 2.0], RTOL), Err(Error::Parameter(_))));
    assert!(matches!(shoot(&p, &[1.0], 0.0), Err(Error::Parameter(_))));
    // −Δu + μu = 0 with μ = 10⁴ grows like e^{100 r} and trips the overflow guard
    let mut q = ProblemParams::new(3, 1, 0, 1e4).unwrap();
    q.nonlinear = false;
    match shoot(&q, &[1.0], RTOL) {
        Err(Error::Integration { radius, .. }) => assert!(radius > 0.1 && radius < 0.5, "{radius}"),
        Err(other) => panic!("{other:?}"),
        Ok(_) => panic!("expected blow-up"),
    }
    assert!(ProblemParams::new(4, 2, 0, 0.0).is_err());
    assert!(ProblemParams::new(9, 2, 2, 0.0).is_err());
}

#[test]
fn classical_positive_solution_and_restart() {
    // −Δu − λu = u^{2♯−1} with λ = 1 in the unit ball of R⁷
    let p = ProblemParams::new(7, 1, 0, -1.0).unwrap();
    let sol = seed_solution(&p, &[0.3, 0.1, 0.05], RTOL).unwrap();
    assert!(sol.d[0] > 0.0 && !sol.noise_limited);
    assert!(sol.mismatch_norm <= RTOL * sol.boundary_scale);
    for i in 0..100 {
        assert!(sol.u(i as f64 / 100.0) > 0.0);
    }
    let res = collocation_residual(&sol, 10).unwrap();
    assert!(res < 1e-7, "collocation residual {res:e}");
    let again = newton_solve(&p, &sol.d, RTOL).unwrap();
    assert!((again.d[0] - sol.d[0]).abs() <= RTOL * sol.d[0]);
    // evenness at the centre: v' ≈ −v_1(0) r / n from the series
    let w = sol.slopes(START_RADIUS)[0];
    let top = sol.d[0].powf(2.0 * 7.0 / 5.0 - 1.0) + sol.d[0];
    assert!((w + top * START_RADIUS / 7.0).abs() < 1e-6 * top * START_RADIUS);
}

#[test]
fn blowup_branch_k1_n7() {
    let p = ProblemParams::new(7, 1, 0, -0.5).unwrap();
    let grid = vec![-0.5, -0.25, -0.1, -0.05, -0.02];
    let mut manifest = SolveManifest::new(p, grid.clone(), RTOL, vec![0.3, 0.1, 0.05]);
    let branch = manifest.run().unwrap();
    assert_eq!(branch.lost_at, None);
    assert_eq!(branch.points.len(), 5);
    let pts = &branch.points;
    for w in pts.windows(2) {
        assert!(w[1].sup_norm > w[0].sup_norm);
        assert!(w[1].mu_fit < w[0].mu_fit);
    }
    let s = bubble_energy(7, 1).unwrap();
    for q in pts {
        assert!(q.energy < 1.01 * s && q.energy > 0.9 * s, "energy {}", q.energy);
        assert!(q.mu_fit > 0.0);
    }
    assert!(pts[4].fit_residual < 5e-2);
    let slope = pohozaev_scaling(pts).unwrap().slope;
    assert!((slope - 2.0).abs() < 0.2, "slope {slope}");
    assert_eq!(manifest.scaling_slope, Some(slope));
    // restarting from the manifest reproduces the branch exactly
    let json = serde_json::to_string(&manifest).unwrap();
    let mut again: SolveManifest = serde_json::from_str(&json).unwrap();
    let b2 = again.run().unwrap();
    let (mut c1, mut c2) = (Vec::new(), Vec::new());
    branch.write_csv(&mut c1).unwrap();
    b2.write_csv(&mut c2).unwrap();
    assert_eq!(c1, c2);
    let text = String::from_utf8(c1).unwrap();
    assert!(text.starts_with("mu_param,sup_norm,energy,mu_fit,fit_residual,poho_term\n"));
    assert_eq!(text.lines().count(), 6);
}

#[test]
fn biharmonic_branch_follows_amplitude() {
    let p = ProblemParams::new(9, 2, 0, -3000.0).unwrap();
    let seed = seed_solution(&p, &[0.3, 0.1], RTOL).unwrap();
    let branch = continuation(&p, &[-3000.0, -2000.0, -1000.0], &seed, RTOL).unwrap();
    assert_eq!(branch.lost_at, None);
    let pts = &branch.points;
    assert!(pts.windows(2).all(|w| w[1].sup_norm > w[0].sup_norm));
    assert!(pts.windows(2).all(|w| w[1].mu_fit < w[0].mu_fit));
    for (q, d) in pts.iter().zip(&branch.data) {
        let sol = newton_solve(&p.with_mu(q.mu), d, RTOL).unwrap();
        assert!((sol.d[0] - d[0]).abs() < 1e-6 * d[0]);
    }
}

#[test]
fn continuation_argument_errors() {
    let p = ProblemParams::new(7, 1, 0, -0.5).unwrap();
    let (_, sol) = shoot(&p, &[1.0], RTOL).unwrap();
    assert!(matches!(continuation(&p, &[], &sol, RTOL), Err(Error::Parameter(_))));
    assert!(matches!(
        continuation(&p, &[-0.5, -0.1, -0.3], &sol, RTOL),
        Err(Error::Parameter(_))
    ));
}

fn rescaled_bubble(n: usize, k: usize, s: f64) -> impl Fn(f64) -> f64 {
    let a = bubble_a(n, k);
    let hw = half_weight(n, k);
    move |r: f64| s.powf(-hw) * (1.0 + a * (r / s).powi(2)).powf(-hw)
}

#[test]
fn fit_recovers_exact_bubbles() {
    for (n, k, s) in [(7, 1, 0.05), (9, 2, 0.02), (11, 3, 0.08)] {
        let (mu_fit, res) = fit_bubble_profile(n, k, rescaled_bubble(n, k, s), 1.0).unwrap();
        assert!((mu_fit - s).abs() < 1e-12 * s);
        assert!(res < 1e-10);
    }
    // a smooth perturbation of relative size 1e-3 shows up at that size
    let b = rescaled_bubble(7, 1, 0.05);
    let u0 = b(0.0);
    let bumped = |r: f64| b(r) + 1e-3 * u0 * (r / 0.05).powi(2) * (-(r / 0.05).powi(2)).exp();
    let (_, res) = fit_bubble_profile(7, 1, bumped, 1.0).unwrap();
    assert!(res > 2e-4 && res < 2e-3, "{res}");
    let off = |r: f64| (-(r - 0.3).powi(2) * 50.0).exp();
    assert!(matches!(fit_bubble_profile(7, 1, off, 1.0), Err(Error::Unsupported(_))));
}

#[test]
fn synthetic_scaling_slopes() {
    let scales = [1e-3, 5e-4, 2e-4, 1e-4];
    for (n, k, p) in [(7, 1, 0), (9, 2, 0), (9, 2, 1)] {
        let branch = synthetic_bubble_branch(n, k, p, &scales).unwrap();
        let slope = pohozaev_scaling(&branch).unwrap().slope;
        let expected = 2.0 * (k - p) as f64;
        assert!((slope - expected).abs() < 0.05, "({n},{k},{p}): {slope}");
    }
}

#[test]
fn scaling_rejects_degenerate_branches() {
    let pt = |mu_fit: f64, poho: f64| BranchPoint {
        mu: 0.0,
        sup_norm: 1.0,
        energy: 1.0,
        mu_fit,
        fit_residual: 0.0,
        poho_term: poho,
    };
    let constant: Vec<_> = (0..5).map(|_| pt(0.1, 1.0)).collect();
    assert!(pohozaev_scaling(&constant).is_err());
    let short: Vec<_> = (1..4).map(|i| pt(1.0 / i as f64, 1.0)).collect();
    assert!(pohozaev_scaling(&short).is_err());
    let ok: Vec<_> = (1..6).map(|i| pt(1.0 / i as f64, (i as f64).powi(-3))).collect();
    assert!((pohozaev_scaling(&ok).unwrap().slope - 3.0).abs() < 1e-12);
}
