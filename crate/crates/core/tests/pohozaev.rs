use polybubble::bubbles::{bubble_a, StandardBubble};
use polybubble::jet::{Jet, JetProvider};
use polybubble::pohozaev::*;
use polybubble::quad::{apply_rule, boundary_nodes, Ball, Domain, Shape};
use polybubble::util::{dot, sphere_area};
use proptest::prelude::*;
use std::f64::consts::PI;

fn ball(n: usize) -> Domain {
    Domain::unit_ball(n)
}

fn annulus(n: usize, inner: f64) -> Domain {
    Domain::new(Shape::BallMinusBalls {
        outer: Ball::unit(n),
        inner: vec![Ball::new(vec![0.0; n], inner)],
    })
}

fn one(n: usize) -> ConstantFunction {
    ConstantFunction { n, value: 1.0 }
}

fn dirichlet(k: usize, n: usize) -> PolyFunction {
    manufactured_dirichlet(k, n, &Poly::constant(n, 1.0)).unwrap()
}

fn opts(dirichlet: bool) -> PohozaevOptions {
    PohozaevOptions {
        dirichlet,
        ..Default::default()
    }
}

/// A fixed non-symmetric cubic in `n` variables.
fn cubic(n: usize) -> Poly {
    let mut terms = vec![(vec![0u8; n], 0.7)];
    for i in 0..n {
        let mut e = vec![0u8; n];
        e[i] = 1;
        terms.push((e.clone(), 0.1 * (i as f64 + 1.0)));
        e[i] = 2;
        terms.push((e.clone(), -0.3 + 0.05 * i as f64));
        e[(i + 1) % n] += 1;
        terms.push((e, 0.2));
    }
    Poly::from_terms(n, &terms).unwrap()
}

#[test]
fn zero_function_gives_zero() {
    let u = PolyFunction::new(Poly::zero(5), 2);
    let r = pohozaev_residual(&u, &one(5), 2.0, &ball(5), &[0.1; 5], 2, opts(true)).unwrap();
    assert_eq!(r.lhs, 0.0);
    assert_eq!(r.terms.sum(), 0.0);
    assert_eq!(r.residual_abs, 0.0);
}

#[test]
fn e_operator_examples() {
    // harmonic polynomial x_0 x_1, k = 1, f = 0
    let p = Poly::variable(3, 0).mul(&Poly::variable(3, 1));
    let j = p.jet(&[0.3, 0.2, -0.5], 2);
    assert_eq!(e_operator(&j, 1, 0.0, 2.0).unwrap(), 0.0);
    assert_eq!(e_operator(&Jet::zero(3, 2), 1, 1.0, 2.0).unwrap(), 0.0);
    // the bubble solves the critical equation
    for (n, k) in [(3usize, 1usize), (5, 2), (7, 3)] {
        let ps = 2.0 * n as f64 / (n as f64 - 2.0 * k as f64);
        let b = StandardBubble { n, k };
        let mut x = vec![0.0; n];
        x[0] = 0.4;
        x[1] = -0.9;
        let j = b.jet(&x, 2 * k).unwrap();
        let e = e_operator(&j, k, 1.0, ps).unwrap();
        assert!(e.abs() < 1e-10 * j.value().powf(ps - 1.0), "{n} {k}: {e}");
    }
    assert!(e_operator(&Jet::zero(3, 2), 1, 1.0, 1.5).is_err());
    assert!(e_operator(&Jet::zero(3, 1), 1, 1.0, 2.0).is_err());
}

#[test]
fn x_grad_laplacian_examples() {
    // u = |x|², i = 0, ξ = 0 → 2|x|²
    let u = PolyFunction::new(Poly::radius_squared(3), 1);
    let x = [0.3, -0.2, 0.6];
    let st = u.laplace_stack(&x, 1).unwrap();
    let (v, g) = x_grad_laplacian(&st, 0, &x, &[0.0; 3]).unwrap();
    assert!((v - 2.0 * dot(&x, &x)).abs() < 1e-15);
    for a in 0..3 {
        assert!((g[a] - 4.0 * x[a]).abs() < 1e-15);
    }
    assert!(x_grad_laplacian(&st, 1, &x, &[0.0; 3]).is_err());
}

#[test]
fn commutator_against_symbolic_and_fd() {
    let n = 4;
    let base = cubic(n);
    let u = base.mul(&base).mul(&Poly::variable(n, 2).add(&Poly::constant(n, 0.5)));
    let xi = [0.2, -0.1, 0.4, 0.3];
    // X = (x − ξ)·∇u built symbolically, then (−Δ)^i X directly
    let mut xpoly = Poly::zero(n);
    for a in 0..n {
        let ya = Poly::variable(n, a).sub(&Poly::constant(n, xi[a]));
        xpoly = xpoly.add(&ya.mul(&u.derivative(a)));
    }
    let uf = PolyFunction::new(u.clone(), 3);
    let x = [0.15, 0.35, -0.25, 0.05];
    let st = uf.laplace_stack(&x, 3).unwrap();
    for i in 0..3 {
        let target = xpoly.neg_laplacian_pow(i);
        let (v, g) = x_grad_laplacian(&st, i, &x, &xi).unwrap();
        let tv = target.eval(&x);
        assert!((v - tv).abs() < 1e-10 * tv.abs().max(1.0), "i={i}: {v} vs {tv}");
        for a in 0..n {
            let tg = target.derivative(a).eval(&x);
            assert!((g[a] - tg).abs() < 1e-10 * tg.abs().max(1.0));
        }
    }
    // FD oracle for i = 1: −Δ of X by Richardson-extrapolated central differences
    let fd = |h: f64| {
        let mut acc = 0.0;
        for a in 0..n {
            let mut p = x;
            let mut m = x;
            p[a] += h;
            m[a] -= h;
            acc += xpoly.eval(&p) - 2.0 * xpoly.eval(&x) + xpoly.eval(&m);
        }
        -acc / (h * h)
    };
    let h = 1e-2;
    let r1 = |h: f64| (4.0 * fd(h / 2.0) - fd(h)) / 3.0;
    let rich = (16.0 * r1(h / 2.0) - r1(h)) / 15.0;
    let (v, _) = x_grad_laplacian(&st, 1, &x, &xi).unwrap();
    assert!((v - rich).abs() < 1e-8 * v.abs(), "{v} vs {rich}");
}

#[test]
fn manufactured_examples() {
    let n = 4;
    let u = dirichlet(2, n);
    // u and ∇u vanish on the unit sphere
    for t in 0..8 {
        let a = 0.7 * t as f64;
        let x = [a.cos() * 0.6, a.sin() * 0.6, 0.8, 0.0];
        let j = u.jet(&x, 2).unwrap();
        assert!(j.value().abs() < 1e-15);
        assert!(j.gradient().iter().all(|g| g.abs() < 1e-14));
        assert!(j.tensor_norm(2) > 1.0);
    }
    // (−Δ)^k u of a degree-d factor has degree d
    let p = cubic(n);
    let w = manufactured_dirichlet(2, n, &p).unwrap();
    assert_eq!(w.poly().degree(), 7);
    assert_eq!(w.poly().neg_laplacian_pow(2).degree(), 3);
    assert_eq!(u.poly().neg_laplacian_pow(2).degree(), 0);
    // jets against Richardson central differences
    let x = [0.1, -0.3, 0.2, 0.4];
    let j = w.jet(&x, 1).unwrap();
    for a in 0..n {
        let d = |h: f64| {
            let mut p = x;
            let mut m = x;
            p[a] += h;
            m[a] -= h;
            (w.value(&p).unwrap() - w.value(&m).unwrap()) / (2.0 * h)
        };
        let rich = (4.0 * d(5e-4) - d(1e-3)) / 3.0;
        assert!((j.gradient()[a] - rich).abs() < 1e-9 * rich.abs().max(1.0));
    }
    assert!(manufactured_dirichlet(1, 3, &Poly::constant(4, 1.0)).is_err());
}

#[test]
fn k1_matches_classical_boundary_terms() {
    // generic (non-Dirichlet) u; classical P_1 = ∮ ½(y,ν)|∇u|² − X ∂_ν u − (n−2)/2 u ∂_ν u
    for n in [3usize, 5] {
        let u = PolyFunction::new(cubic(n), 1);
        let mut xi = vec![0.0; n];
        xi[0] = 0.3;
        xi[1] = -0.2;
        for dom in [ball(n), annulus(n, 0.4)] {
            let got = pohozaev_lhs(&u, &dom, &xi, 1, opts(false)).unwrap();
            let nodes = boundary_nodes(&dom, 6).unwrap();
            let classical = apply_rule(&nodes, 1, &|x: &[f64], nu: Option<&[f64]>, out: &mut [f64]| {
                let nu = nu.unwrap();
                let j = u.jet(x, 1).unwrap();
                let g = j.gradient();
                let y: Vec<f64> = x.iter().zip(&xi).map(|(a, b)| a - b).collect();
                let dn = dot(&g, nu);
                out[0] = 0.5 * dot(&y, nu) * dot(&g, &g)
                    - dot(&y, &g) * dn
                    - (n as f64 - 2.0) / 2.0 * j.value() * dn;
            })[0];
            assert!(
                (got.value - classical).abs() < 1e-10 * classical.abs(),
                "n={n}: {} vs {classical}",
                got.value
            );
        }
    }
}

#[test]
fn closed_form_k1_n3() {
    // u = 1 − |x|², f = 1, p = 2: P_1 = −8π, T1 = 4π(5/6 − 12/5 − 5/14), T3 = −4π·8/105
    let u = dirichlet(1, 3);
    for xi in [[0.0; 3], [0.3, 0.0, 0.0]] {
        let r = pohozaev_residual(&u, &one(3), 2.0, &ball(3), &xi, 1, opts(true)).unwrap();
        let t1 = 4.0 * PI * (5.0 / 6.0 - 12.0 / 5.0 - 5.0 / 14.0);
        let t3 = -4.0 * PI * 8.0 / 105.0;
        assert!((r.lhs + 8.0 * PI).abs() < 1e-12);
        assert!((r.terms.t1 - t1).abs() < 1e-12);
        assert!((r.terms.t3 - t3).abs() < 1e-12);
        assert!(r.terms.t2.abs() < 1e-14 && r.terms.t4 == 0.0);
        assert!(r.residual_rel < 1e-8 && r.within_budget, "{r:?}");
        let d = r.dirichlet.unwrap();
        assert!(d.diff_signed.abs() < 1e-12 && d.diff_negative.abs() < 1e-12);
    }
}

#[test]
fn annulus_critical_k2_n6() {
    // u = (1 − |x|²)², p = 2♯ = 6: T3 = T4 = 0 and T2 lives on the inner sphere
    let (n, k) = (6usize, 2usize);
    let u = dirichlet(k, n);
    let dom = annulus(n, 0.5);
    let r = pohozaev_residual(&u, &one(n), 6.0, &dom, &[0.0; 6], k, opts(false)).unwrap();
    let t2 = (1.0 / 6.0) * (-0.5) * 0.75f64.powi(12) * sphere_area(n) * 0.5f64.powi(5);
    assert!((r.terms.t2 - t2).abs() < 1e-12 * t2.abs());
    assert!(r.terms.t3.abs() < 1e-12 && r.terms.t4 == 0.0);
    assert!(r.residual_rel < 1e-6 && r.within_budget, "{r:?}");
}

#[test]
fn dirichlet_shortcut_sign() {
    // the shortcut holds with factor −1/2 for every k; (−1)^k/2 only for odd k
    for (n, k) in [(5usize, 1usize), (5, 2), (7, 3)] {
        let u = dirichlet(k, n);
        let mut xi = vec![0.0; n];
        xi[0] = 0.25;
        let l = pohozaev_lhs(&u, &ball(n), &xi, k, opts(true)).unwrap();
        let d = l.dirichlet.unwrap();
        let tol = 1e-10 * l.value.abs();
        assert!(d.diff_negative.abs() < tol, "k={k}: {d:?}");
        if k % 2 == 1 {
            assert!(d.diff_signed.abs() < tol);
        } else {
            assert!((d.signed + l.value).abs() < tol, "even k flips the sign");
        }
    }
}

#[test]
fn rhs_trivial_terms() {
    let (n, k) = (5usize, 1usize);
    let u = manufactured_dirichlet(k, n, &cubic(n)).unwrap();
    let r = pohozaev_rhs(&u, &one(n), 10.0 / 3.0, &ball(n), &[0.0; 5], k, opts(false)).unwrap();
    assert_eq!(r.terms.t4, 0.0);
    assert!(r.terms.t3.abs() < 1e-15);
    // nonconstant f exercises T4
    let f = PolyFunction::new(Poly::constant(n, 1.0).add(&Poly::variable(n, 1).scale(0.4)), 0);
    let rep = pohozaev_residual(&u, &f, 3.0, &ball(n), &[0.1, 0.0, -0.2, 0.0, 0.0], k, opts(true))
        .unwrap();
    assert!(rep.terms.t4.abs() > 1e-6);
    assert!(rep.residual_rel < 1e-9 && rep.within_budget, "{rep:?}");
}

#[test]
fn bubble_suite() {
    // the bubble solves E(u) = 0, so T1 vanishes and P_k = T2
    for (n, k) in [(3usize, 1usize), (5, 2)] {
        let ps = 2.0 * n as f64 / (n as f64 - 2.0 * k as f64);
        let b = StandardBubble { n, k };
        let mut xi = vec![0.0; n];
        xi[1] = 0.2;
        let r = pohozaev_residual(&b, &one(n), ps, &ball(n), &xi, k, opts(false)).unwrap();
        assert!(r.terms.t1.abs() < 1e-9 * r.lhs.abs(), "{r:?}");
        assert!(r.terms.t3.abs() < 1e-12 && r.terms.t4 == 0.0);
        // T2 = (1/p)|S^{n−1}| B(1)^p when ξ averages out
        let b1 = (1.0 + bubble_a(n, k)).powf(-(n as f64 - 2.0 * k as f64) / 2.0);
        let t2 = sphere_area(n) * b1.powf(ps) / ps;
        assert!((r.terms.t2 - t2).abs() < 1e-10 * t2);
        assert!(r.residual_rel < 1e-8, "{r:?}");
    }
}

#[test]
fn half_ball_identity() {
    let (n, k) = (5usize, 2usize);
    let u = PolyFunction::new(cubic(n).mul(&cubic(n)), k);
    let dom = Domain::new(Shape::HalfBall(Ball::unit(n)));
    let r = pohozaev_residual(&u, &one(n), 2.0, &dom, &[0.1, 0.2, 0.0, 0.0, 0.0], k, opts(false))
        .unwrap();
    assert!(r.residual_rel < 1e-8 && r.within_budget, "{r:?}");
}

#[test]
fn xi_affine_structure() {
    let (n, k) = (5usize, 2usize);
    let u = manufactured_dirichlet(k, n, &cubic(n)).unwrap();
    let xis = [[0.0; 5], [0.4, -0.2, 0.0, 0.1, 0.0], [1.2, -0.6, 0.0, 0.3, 0.0]];
    let lhs: Vec<f64> = xis
        .iter()
        .map(|xi| pohozaev_lhs(&u, &ball(n), xi, k, opts(false)).unwrap().value)
        .collect();
    let pred = lhs[0] + 3.0 * (lhs[1] - lhs[0]);
    assert!((pred - lhs[2]).abs() < 1e-10 * lhs[2].abs().max(1.0));
}

#[test]
fn report_json_and_errors() {
    let u = dirichlet(1, 3);
    let r = pohozaev_residual(&u, &one(3), 2.0, &ball(3), &[0.0; 3], 1, opts(true)).unwrap();
    let v: serde_json::Value = serde_json::from_str(&r.to_json().unwrap()).unwrap();
    for key in ["k", "n", "domain", "xi", "terms", "residual_abs", "residual_rel", "budget"] {
        assert!(v.get(key).is_some(), "{key}");
    }
    // n ≤ 2k, sphere domains and low smoothness are rejected
    assert!(pohozaev_lhs(&u, &ball(3), &[0.0; 3], 2, opts(false)).is_err());
    let sphere = Domain::new(Shape::Sphere(Ball::unit(3)));
    assert!(pohozaev_lhs(&u, &sphere, &[0.0; 3], 1, opts(false)).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]
    #[test]
    fn identity_for_random_xi(
        nk in prop::sample::select(vec![(3usize, 1usize), (4, 1), (5, 1), (5, 2), (6, 2)]),
        r in 0.0f64..2.0,
        t in 0.0f64..6.28,
    ) {
        let (n, k) = nk;
        let u = manufactured_dirichlet(k, n, &Poly::constant(n, 1.0).add(&Poly::variable(n, 0).scale(0.5))).unwrap();
        let mut xi = vec![0.0; n];
        xi[0] = r * t.cos();
        xi[1] = r * t.sin();
        let rep = pohozaev_residual(&u, &one(n), 2.0, &ball(n), &xi, k, opts(true)).unwrap();
        prop_assert!(rep.residual_rel < 1e-8 && rep.within_budget);
        let d = rep.dirichlet.unwrap();
        prop_assert!(d.diff_negative.abs() <= rep.budget);
    }
}
