use polybubble::bubbles::{BubbleSpec, LocalizedBubble};
use polybubble::bubbletree::{classify, TreeConfig};
use polybubble::jet::{Jet, JetProvider};
use polybubble::quad::Domain;
use polybubble::util::fit_slope;
use polybubble::weights::*;
use polybubble::{Error, Result};

fn single(n: usize, k: usize, mu: f64) -> TreeConfig {
    let b = BubbleSpec::interior(n, k, vec![0.0; n], mu).unwrap();
    TreeConfig::new(n, k, Domain::unit_ball(n), vec![b]).unwrap()
}

fn fixture(name: &str) -> TreeConfig {
    let path = format!("{}/fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
    TreeConfig::from_json(&std::fs::read_to_string(path).unwrap()).unwrap()
}

struct Zero(usize);

impl JetProvider for Zero {
    fn dim(&self) -> usize {
        self.0
    }
    fn smoothness(&self) -> usize {
        usize::MAX
    }
    fn jet(&self, _x: &[f64], order: usize) -> Result<Jet> {
        Ok(Jet::zero(self.0, order))
    }
}

struct Scaled<P>(P, f64);

impl<P: JetProvider> JetProvider for Scaled<P> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn smoothness(&self) -> usize {
        self.0.smoothness()
    }
    fn jet(&self, x: &[f64], order: usize) -> Result<Jet> {
        Ok(self.0.jet(x, order)?.scale(self.1))
    }
}

#[test]
fn psi_at_the_centre() {
    // N = 1 with B^0: Ψ = θ^{2−2k}B + B^{2♯−2} + B
    let (n, k, mu) = (7usize, 2usize, 0.01f64);
    let cfg = single(n, k, mu);
    let b = mu.powf(-(n as f64 - 2.0 * k as f64) / 2.0);
    let expected = mu.powi(2 - 2 * k as i32) * b + b.powf(4.0 * k as f64 / 3.0) + b;
    let got = psi_weight(&cfg, &[0.0; 7]);
    assert!((got - expected).abs() < 1e-12 * expected);
    for y in polybubble::bubbletree::domain_samples(&cfg, 500, 0) {
        assert!(psi_weight(&cfg, &y) > 0.0);
    }
}

#[test]
fn norm_examples() {
    let cfg = single(7, 1, 0.01);
    let prof = WeightProfile::new(cfg.clone(), 2000, 0, 0.1).unwrap();
    assert_eq!(prof.star_norm(&Zero(7)).unwrap(), 0.0);
    let v = LocalizedBubble {
        spec: cfg.bubble(1).clone(),
        domain: cfg.domain(),
    };
    let s = prof.star_norm(&v).unwrap();
    eprintln!("‖V‖_* = {s}");
    assert!(s.is_finite() && s < 10.0);
    // homogeneity
    let s3 = prof.star_norm(&Scaled(v.clone(), -3.0)).unwrap();
    assert!((s3 - 3.0 * s).abs() < 1e-12 * s3);
    // Ψ itself has ‖·‖_** ≤ 1 for every η
    for eta in [1e-3, 1.0, 10.0] {
        let r = starstar_norm(|y| psi_weight(&cfg, y), &cfg, &prof.grid, eta);
        assert!(r <= 1.0 + 1e-12);
    }
}

#[test]
fn norm_monotonicity() {
    let cfg = fixture("tower.json");
    let coarse = WeightProfile::new(cfg.clone(), 500, 0, 0.1).unwrap();
    let fine = WeightProfile::new(cfg.clone(), 4000, 0, 0.1).unwrap();
    let tree = polybubble::bubbletree::BubbleTree::new(cfg.clone()).unwrap();
    assert!(fine.star_norm(&tree).unwrap() >= coarse.star_norm(&tree).unwrap());
    let r = |y: &[f64]| y[0].sin() * psi_weight(&cfg, y);
    let mut prev = f64::INFINITY;
    for eta in [1e-3, 1e-2, 1e-1, 1.0] {
        let v = starstar_norm(r, &cfg, &fine.grid, eta);
        assert!(v <= prev);
        prev = v;
    }
}

#[test]
fn eta3_and_eta4_by_hand() {
    let (n, k) = (7usize, 1usize);
    for mu in [0.1, 0.01] {
        let cfg = single(n, k, mu);
        let e = ((n - 2 * k) as f64 / 2.0).min(2.0 * k as f64).min(1.0);
        assert!((eta3(&cfg).unwrap() - mu.powf(e)).abs() < 1e-15);
    }
    assert_eq!(eta4(0.0, &[]), 0.0);
    // tower: independent recomputation
    let cfg = fixture("tower.json").at_alpha(1e3).unwrap();
    let (m1, m2): (f64, f64) = (1e-3, 1e-6);
    let eps = m1 / m2 + m2 / m1;
    let m = 4.0f64.min(5.0);
    let expected = eps.powf(-0.5).powf(m) + (m2 / m1).powf(1.0 / 12.0).powf(m) + m1;
    assert!((eta3(&cfg).unwrap() - expected).abs() < 1e-12 * expected);
}

#[test]
fn eta1_decreases() {
    let mut vals = Vec::new();
    for mu in [1e-1, 1e-2, 1e-3] {
        vals.push(eta1(&single(7, 1, mu), IntegralOptions::default()).unwrap());
    }
    eprintln!("η1 = {vals:?}");
    assert!(vals[0] > vals[1] && vals[1] > vals[2]);
}

#[test]
fn eta_sequences_single_bubble() {
    let cfg = single(7, 1, 1e-2);
    let opts = IntegralOptions {
        x_points: 8,
        ..Default::default()
    };
    let e = eta_sequences(&cfg, &[], None, opts).unwrap();
    eprintln!("{e:?}");
    assert_eq!(e.eta4, 0.0);
    assert_eq!(e.eta, e.eta1.max(e.eta2).max(e.eta3));
}

#[test]
fn giraud_positive_gamma() {
    let n = 5;
    let dom = Domain::unit_ball(n);
    let mut ratios = Vec::new();
    for mu in [1e-1, 1e-2, 1e-3] {
        for q in 0..10 {
            let t = q as f64 / 10.0;
            let x = vec![0.6 * t - 0.3, 0.1, 0.0, 0.0, 0.0];
            let y = vec![0.2, 0.5 * t - 0.25, 0.1, 0.0, 0.0];
            let r = giraud_verify(1.0, 2.0, mu, &x, &y, &dom, IntegralOptions::default()).unwrap();
            ratios.push(r.ratio);
        }
    }
    // the unit-constant bound misses a Riesz composition constant; the
    // ratio saturates as μ → 0
    let m: Vec<f64> = ratios
        .chunks(10)
        .map(|c| c.iter().cloned().fold(0.0, f64::max))
        .collect();
    eprintln!("γ>0 maxima {m:?}");
    assert!(m[2] < 100.0 && m[2] < 1.2 * m[1], "{m:?}");
    // x = y stays finite since β > 0
    let x = vec![0.1, 0.0, 0.0, 0.0, 0.0];
    let r = giraud_verify(1.0, 2.0, 1e-2, &x, &x, &dom, IntegralOptions::default()).unwrap();
    assert!(r.z.is_finite());
    assert!(giraud_verify(1.0, 5.0, 0.1, &x, &x, &dom, IntegralOptions::default()).is_err());
}

#[test]
fn giraud_log_case() {
    let n = 5;
    let dom = Domain::unit_ball(n);
    let x = vec![0.0; 5];
    let y = vec![0.5, 0.0, 0.0, 0.0, 0.0];
    let mut with_log = Vec::new();
    let mut without = Vec::new();
    for mu in [1e-1, 1e-2, 1e-3, 1e-4] {
        let r = giraud_verify(0.0, 2.0, mu, &x, &y, &dom, IntegralOptions::default()).unwrap();
        with_log.push(r.ratio);
        without.push(r.ratio_without_log.unwrap());
    }
    // Z ≈ |S^{n−1}| log(1/μ) |x−y|^{β−n}: the plain ratio keeps growing, the
    // logarithmic one saturates below |S^{n−1}|
    let area = polybubble::util::sphere_area(n);
    eprintln!("with {with_log:?} without {without:?}");
    assert!(without[3] > 5.0 * without[0]);
    let incr: Vec<f64> = with_log.windows(2).map(|w| w[1] - w[0]).collect();
    assert!(incr[2] < incr[0]);
    assert!(with_log[3] < area);
}

#[test]
fn order_two_bounded() {
    let mut maxes = Vec::new();
    for mu in [1e-1, 1e-2, 1e-3] {
        let cfg = single(7, 1, mu);
        let mut p = ConvolutionParams::new(1, vec![0, 1]);
        p.integral.x_points = 8;
        let rows = convolution_bound_verify(ConvolutionKind::OrderTwo, &cfg, &p).unwrap();
        maxes.push(max_ratio(&rows));
    }
    eprintln!("order two {maxes:?}");
    // constants carry powers of a^{-1}; what matters is saturation
    assert!(maxes.iter().all(|m| *m < 1e4));
    assert!(maxes[2] < 1.2 * maxes[1]);
}

#[test]
fn hole_decay_slope() {
    // far from the hole; M μ well past the core scale μ/√a
    let (n, k, mu) = (7, 1, 1e-4);
    let cfg = single(n, k, mu);
    let x = vec![0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
    let ms = [16.0, 32.0, 64.0, 128.0, 256.0];
    let mut lhs = Vec::new();
    for m in ms {
        let mut p = ConvolutionParams::new(1, vec![0]);
        p.points = vec![x.clone()];
        let rows = convolution_bound_verify(ConvolutionKind::Hole { m }, &cfg, &p).unwrap();
        lhs.push(rows[0].lhs.ln());
    }
    let logm: Vec<f64> = ms.iter().map(|m| m.ln()).collect();
    let slope = fit_slope(&logm, &lhs);
    eprintln!("hole slope {slope}");
    assert!((slope + 2.0 * k as f64).abs() < 0.3);
}

#[test]
fn pair_product_decays() {
    let mut prev = f64::INFINITY;
    for alpha in [1e1, 1e2, 1e3] {
        let mut cfg = fixture("separated.json");
        // (n, k, p) = (9, 2, 1)
        cfg.n = 9;
        cfg.k = 2;
        cfg.bubbles.clear();
        for l in &mut cfg.family_law.as_mut().unwrap().laws {
            l.x_inf.resize(9, 0.0);
        }
        let text = serde_json::to_string(&cfg).unwrap();
        let cfg = TreeConfig::from_json(&text).unwrap().at_alpha(alpha).unwrap();
        let p = ConvolutionParams::new(1, vec![]);
        let r = convolution_bound_verify(ConvolutionKind::PairProduct { j: 2, p: Some(1) }, &cfg, &p)
            .unwrap();
        eprintln!("pair α={alpha}: {:?}", r[0]);
        assert!(r[0].ratio < prev);
        prev = r[0].ratio;
    }
    let cfg = single(7, 1, 0.1);
    let p = ConvolutionParams::new(1, vec![]);
    let two = classify(&cfg).unwrap();
    assert_eq!(two.entries.len(), 1);
    assert!(matches!(
        convolution_bound_verify(ConvolutionKind::PairProduct { j: 1, p: Some(0) }, &cfg, &p),
        Err(Error::Parameter(_))
    ));
}

#[test]
fn csv_table() {
    let cfg = single(7, 1, 0.1);
    let mut p = ConvolutionParams::new(1, vec![0]);
    p.integral.x_points = 3;
    let rows = convolution_bound_verify(ConvolutionKind::HoleZero, &cfg, &p).unwrap();
    let mut buf = Vec::new();
    write_ratio_csv(&rows, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("kind,params,mu_or_alpha,lhs,rhs,ratio,rel_error\n"));
    assert_eq!(text.lines().count(), rows.len() + 1);
}
