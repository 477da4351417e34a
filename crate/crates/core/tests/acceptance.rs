//! Acceptance criteria 1–8. Each test prints one `criterion N: PASS|FAIL`
//! line with the measured figures and asserts the pinned tolerances. The
//! tests hold a shared lock so that the runtime bounds are measured without
//! contention from each other.

use polybubble::bubbles::{check_decay, BubbleSpec};
use polybubble::bubbletree::{
    classify, comparable_disjointness, epsilon, interaction_sup, TreeConfig,
};
use polybubble::cli::{bubble_pde_residual, cayley_green_rows, random_pairs, CHECK_RADII, DECAY_RADII};
use polybubble::greenfn::{check_conformal_relation, green_ball};
use polybubble::pohozaev::{bubble_suite, manufactured_suite, PohozaevOptions};
use polybubble::quad::Domain;
use polybubble::radialgebra::check_bubble_identity;
use polybubble::radialsolver::{pohozaev_scaling, synthetic_bubble_branch, ProblemParams, SolveManifest};
use polybubble::util::{dist, dot, fit_slope};
use polybubble::weights::{
    convolution_bound_verify, giraud_verify, max_ratio, ConvolutionKind, ConvolutionParams,
    IntegralOptions, RatioRow,
};
use rand::{Rng, SeedableRng};
use std::sync::Mutex;
use std::time::{Duration, Instant};

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(id: u32, ok: bool, detail: &str) {
    println!("criterion {id}: {} {detail}", if ok { "PASS" } else { "FAIL" });
}

fn fixture(name: &str) -> TreeConfig {
    let path = format!("{}/fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
    TreeConfig::from_json(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn criterion_1_bubble_pde_exactness() {
    let _g = serial();
    const TOL: f64 = 1e-9;
    const LIMIT: Duration = Duration::from_secs(10);
    let t = Instant::now();
    let mut failures = Vec::new();
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for k in 1..=4usize {
        for n in 2 * k + 1..=12 {
            cases += 1;
            if !check_bubble_identity(n as u32, k as u32).unwrap().passed {
                failures.push(format!("exact ({n},{k})"));
            }
            for r in CHECK_RADII {
                let e = bubble_pde_residual(n, k, r).unwrap();
                worst = worst.max(e);
                if !(e < TOL) {
                    failures.push(format!("numeric ({n},{k}) r={r}: {e:e}"));
                }
            }
        }
    }
    let el = t.elapsed();
    let ok = failures.is_empty() && el < LIMIT;
    report(
        1,
        ok,
        &format!("{cases} cases symbolic, max numeric residual {worst:.2e} < {TOL:e}, {el:.1?} < {LIMIT:?}"),
    );
    assert!(failures.is_empty(), "{failures:?}");
    assert!(el < LIMIT, "runtime {el:?}");
}

#[test]
fn criterion_2_decay_slopes() {
    let _g = serial();
    const TOL: f64 = 0.05;
    const LIMIT: Duration = Duration::from_secs(10);
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    for (n, k) in [(7usize, 1usize), (5, 2), (9, 2)] {
        for l in 0..2 * k {
            let d = check_decay(n, k, l, &DECAY_RADII).unwrap();
            assert_eq!(d.expected, 2.0 * k as f64 - n as f64 - l as f64);
            worst = worst.max(d.deviation);
        }
    }
    let el = t.elapsed();
    let ok = worst < TOL && el < LIMIT;
    report(2, ok, &format!("max |slope − (2k−n−l)| = {worst:.2e} < {TOL}, {el:.1?}"));
    assert!(worst < TOL);
    assert!(el < LIMIT, "runtime {el:?}");
}

#[test]
fn criterion_3_cayley_invariances() {
    let _g = serial();
    const INVARIANCE: f64 = 1e-5;
    const DISTANCE: f64 = 1e-12;
    const QUAD_TOL: f64 = 1e-6;
    const LIMIT: Duration = Duration::from_secs(120);
    let t = Instant::now();
    let mut worst_inv: f64 = 0.0;
    let mut worst_dist: f64 = 0.0;
    let mut profiles = 0;
    for (n, k) in [(3usize, 1usize), (5, 2)] {
        let rows = cayley_green_rows(n, k, 1000, 11, QUAD_TOL).unwrap();
        for r in &rows {
            if r.check.contains("invariance") {
                profiles += 1;
                worst_inv = worst_inv.max(r.max_residual);
            }
            if r.check == "distance" {
                assert_eq!(r.count, 1000);
                worst_dist = worst_dist.max(r.max_residual);
            }
        }
    }
    let el = t.elapsed();
    // two profiles × two identities × two (n, k)
    assert_eq!(profiles, 8);
    let ok = worst_inv < INVARIANCE && worst_dist < DISTANCE && el < LIMIT;
    report(
        3,
        ok,
        &format!(
            "norm/energy invariance {worst_inv:.2e} < {INVARIANCE:e}, distance identity {worst_dist:.2e} < {DISTANCE:e} on 1000 pairs, {el:.1?}"
        ),
    );
    assert!(worst_inv < INVARIANCE && worst_dist < DISTANCE);
    assert!(el < LIMIT, "runtime {el:?}");
}

#[test]
fn criterion_4_green_conjugation() {
    let _g = serial();
    const TOL: f64 = 1e-10;
    const LIMIT: Duration = Duration::from_secs(60);
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    for (n, k) in [(3usize, 1usize), (5, 2)] {
        let pairs = random_pairs(n, 100, 5);
        assert_eq!(pairs.len(), 100);
        for (x, y) in &pairs {
            worst = worst.max(check_conformal_relation(x, y, n, k).unwrap());
        }
    }
    // k = 1 against |x−y|^{2−n} − (|x||y − x/|x|²|)^{2−n}, one fitted constant
    let mut worst_classical: f64 = 0.0;
    for n in [3usize, 5] {
        let pairs = random_pairs(n, 100, 6);
        let (g, c): (Vec<f64>, Vec<f64>) = pairs
            .iter()
            .map(|(x, y)| {
                let e = 2.0 - n as f64;
                let mirror = (dist(x, y).powi(2) + (1.0 - dot(x, x)) * (1.0 - dot(y, y))).sqrt();
                (green_ball(x, y, n, 1).unwrap().value, dist(x, y).powf(e) - mirror.powf(e))
            })
            .unzip();
        let fitted = g.iter().zip(&c).map(|(a, b)| a * b).sum::<f64>() / c.iter().map(|b| b * b).sum::<f64>();
        assert!((fitted * (n as f64 - 2.0) - 1.0).abs() < 1e-12);
        for (a, b) in g.iter().zip(&c) {
            worst_classical = worst_classical.max((a - fitted * b).abs() / (fitted * b).abs());
        }
    }
    let el = t.elapsed();
    let ok = worst < TOL && worst_classical < TOL && el < LIMIT;
    report(
        4,
        ok,
        &format!("conjugation {worst:.2e}, classical k=1 {worst_classical:.2e} (both < {TOL:e}), {el:.1?}"),
    );
    assert!(worst < TOL && worst_classical < TOL);
    assert!(el < LIMIT, "runtime {el:?}");
}

#[test]
fn criterion_5_pohozaev_identity() {
    let _g = serial();
    const TARGET: f64 = 1e-6;
    const LIMIT: Duration = Duration::from_secs(300);
    let t = Instant::now();
    let opts = PohozaevOptions::default();
    let mut cases = manufactured_suite(None, opts).unwrap();
    cases.extend(bubble_suite(None, opts).unwrap());
    let mut failures = Vec::new();
    let (mut annulus, mut shifted, mut dirichlet) = (0, 0, 0);
    let mut worst: f64 = 0.0;
    for c in &cases {
        let r = &c.report;
        worst = worst.max(r.residual_rel);
        annulus += c.label.contains("annulus") as usize;
        shifted += c.label.contains("shifted") as usize;
        if !(r.within_budget && r.residual_rel <= r.budget && r.residual_rel < TARGET) {
            failures.push(format!("{}: {:e} vs budget {:e}", c.label, r.residual_rel, r.budget));
        }
        // the −½ form is exact for every k; it coincides with (−1)^k/2 for odd k
        if let Some((signed, negative)) = r.dirichlet_agreement() {
            dirichlet += 1;
            if !negative {
                failures.push(format!("{}: −½ shortcut off", c.label));
            }
            if c.label.contains("k=1 ") || c.label.contains("k=3 ") {
                if !signed {
                    failures.push(format!("{}: odd-k shortcut off", c.label));
                }
            }
        }
    }
    let el = t.elapsed();
    let ok = failures.is_empty() && annulus >= 6 && shifted >= 6 && el < LIMIT;
    report(
        5,
        ok,
        &format!(
            "{} cases ({annulus} annulus, {shifted} shifted-ξ, {dirichlet} Dirichlet-form), max residual_rel {worst:.2e} < {TARGET:e} and within budget, {el:.1?}; even-k (−1)^k/2 form: see ignored test",
            cases.len()
        ),
    );
    assert!(failures.is_empty(), "{failures:?}");
    assert!(annulus >= 6 && shifted >= 6);
    assert!(el < LIMIT, "runtime {el:?}");
}

/// The (−1)^k/2 Dirichlet shortcut taken literally for even k. It is off by
/// exactly the sign: the boundary term equals −½∮(x−ξ,ν)|(−Δ)^{k/2}u|² for
/// every k. Kept red on purpose; see the decision ledger.
#[test]
#[ignore = "the (−1)^k/2 Dirichlet shortcut has the wrong sign for even k"]
fn criterion_5_signed_shortcut_even_k() {
    let _g = serial();
    let mut bad = Vec::new();
    for (n, k) in [(5usize, 2usize), (7, 2)] {
        for c in manufactured_suite(Some((n, k)), PohozaevOptions::default()).unwrap() {
            if let Some((signed, _)) = c.report.dirichlet_agreement() {
                if !signed {
                    let d = c.report.dirichlet.unwrap();
                    bad.push(format!("{}: diff {:e}", c.label, d.diff_signed));
                }
            }
        }
    }
    report(5, bad.is_empty(), &format!("(even-k (−1)^k/2 form) mismatches {bad:?}"));
    assert!(bad.is_empty(), "{bad:?}");
}

fn single(n: usize, k: usize, mu: f64) -> TreeConfig {
    let b = BubbleSpec::interior(n, k, vec![0.0; n], mu).unwrap();
    TreeConfig::new(n, k, Domain::unit_ball(n), vec![b]).unwrap()
}

fn pair(n: usize, k: usize, mu: f64) -> TreeConfig {
    let mut c1 = vec![0.0; n];
    c1[0] = -0.25;
    let mut c2 = vec![0.0; n];
    c2[0] = 0.25;
    let b1 = BubbleSpec::interior(n, k, c1, mu).unwrap();
    let b2 = BubbleSpec::interior(n, k, c2, 0.5 * mu).unwrap();
    TreeConfig::new(n, k, Domain::unit_ball(n), vec![b1, b2]).unwrap()
}

#[test]
fn criterion_6_weighted_bounds() {
    let _g = serial();
    const MAX_REL_ERROR: f64 = 0.05;
    const SLOPE_TOL: f64 = 0.3;
    // growth allowed between the largest and the smallest μ of the sweep
    const GROWTH: f64 = 2.0;
    const LIMIT: Duration = Duration::from_secs(600);
    let t = Instant::now();
    let sweep = [1e-1, 1e-2, 1e-3];
    let mut all_rows: Vec<RatioRow> = Vec::new();
    let mut failures = Vec::new();
    let (n, k) = (7usize, 1usize);
    let kinds = [
        ConvolutionKind::OrderTwo,
        ConvolutionKind::HoleZero,
        ConvolutionKind::PsiConvolution,
        ConvolutionKind::Hole { m: 4.0 },
    ];
    for kind in kinds {
        let mut maxima = Vec::new();
        for mu in sweep {
            let mut p = ConvolutionParams::new(1, (0..2 * k).collect());
            p.integral.x_points = 6;
            let rows = convolution_bound_verify(kind, &single(n, k, mu), &p).unwrap();
            maxima.push(max_ratio(&rows));
            all_rows.extend(rows);
        }
        let early = maxima[0].max(maxima[1]);
        if !(maxima.iter().all(|m| m.is_finite()) && maxima[2] <= GROWTH * early) {
            failures.push(format!("{}: maxima {maxima:?}", kind.name()));
        }
    }
    for (n, k, ps) in [(7usize, 1usize, vec![None, Some(0)]), (9, 2, vec![None, Some(0), Some(1)])] {
        for p in ps {
            let mut ratios = Vec::new();
            for mu in sweep {
                let rows = convolution_bound_verify(
                    ConvolutionKind::PairProduct { j: 2, p },
                    &pair(n, k, mu),
                    &ConvolutionParams::new(1, vec![]),
                )
                .unwrap();
                ratios.push(rows[0].ratio);
                all_rows.extend(rows);
            }
            if !ratios.windows(2).all(|w| w[1] <= GROWTH * w[0]) {
                failures.push(format!("pair ({n},{k}) p={p:?}: {ratios:?}"));
            }
        }
    }
    let worst_err = all_rows.iter().map(|r| r.rel_error).fold(0.0, f64::max);
    if !(worst_err < MAX_REL_ERROR) {
        failures.push(format!("statistical error {worst_err}"));
    }

    // far-field decay in the hole radius M
    let mu = 1e-4;
    let cfg = single(7, 1, mu);
    let x = vec![0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
    let ms = [16.0, 32.0, 64.0, 128.0, 256.0];
    let lhs: Vec<f64> = ms
        .iter()
        .map(|&m| {
            let mut p = ConvolutionParams::new(1, vec![0]);
            p.points = vec![x.clone()];
            convolution_bound_verify(ConvolutionKind::Hole { m }, &cfg, &p).unwrap()[0].lhs.ln()
        })
        .collect();
    let logm: Vec<f64> = ms.iter().map(|m| m.ln()).collect();
    let slope = fit_slope(&logm, &lhs);
    if (slope + 2.0).abs() >= SLOPE_TOL {
        failures.push(format!("M-decay slope {slope}"));
    }

    // Giraud: the γ = 0 case needs the logarithm, γ ≠ 0 does not
    let dom = Domain::unit_ball(5);
    let x = vec![0.0; 5];
    let y = vec![0.5, 0.0, 0.0, 0.0, 0.0];
    let opts = IntegralOptions::default();
    let giraud = |gamma: f64| -> Vec<(f64, Option<f64>)> {
        sweep
            .iter()
            .map(|&mu| {
                let r = giraud_verify(gamma, 2.0, mu, &x, &y, &dom, opts).unwrap();
                assert!(r.error_estimate < MAX_REL_ERROR * r.z);
                (r.ratio, r.ratio_without_log)
            })
            .collect()
    };
    let neg: Vec<f64> = giraud(-1.0).iter().map(|r| r.0).collect();
    let pos: Vec<f64> = giraud(1.0).iter().map(|r| r.0).collect();
    let zero = giraud(0.0);
    let log0: Vec<f64> = zero.iter().map(|r| r.0).collect();
    let plain0: Vec<f64> = zero.iter().map(|r| r.1.unwrap()).collect();
    // per-decade increments shrink for a bounded ratio and grow for one
    // that is linear in log(1/μ)
    let incr = |v: &[f64]| [v[1] - v[0], v[2] - v[1]];
    let shrinking = |v: &[f64]| {
        let d = incr(v);
        d[1] < d[0]
    };
    let growing = |v: &[f64]| {
        let d = incr(v);
        d[0] > 0.0 && d[1] > d[0]
    };
    let area = polybubble::util::sphere_area(5);
    let giraud_ok = shrinking(&neg)
        && shrinking(&pos)
        && shrinking(&log0)
        && log0.iter().all(|v| *v < area)
        && growing(&plain0);
    if !giraud_ok {
        failures.push(format!("Giraud γ<0 {neg:?} γ=0 {log0:?}/{plain0:?} γ>0 {pos:?}"));
    }
    let el = t.elapsed();
    let ok = failures.is_empty() && el < LIMIT;
    report(
        6,
        ok,
        &format!(
            "{} ratio rows bounded over μ ∈ {sweep:?}, max statistical error {:.1}% < 5%, M-slope {slope:.3} = −2 ± {SLOPE_TOL}, Giraud γ=0 plain ratio {:.2}→{:.2} (log needed), {el:.1?}",
            all_rows.len(),
            100.0 * worst_err,
            plain0[0],
            plain0[2]
        ),
    );
    assert!(failures.is_empty(), "{failures:?}");
    assert!(el < LIMIT, "runtime {el:?}");
}

#[test]
fn criterion_7_blowup_mechanism() {
    let _g = serial();
    const FIT: f64 = 5e-2;
    const SLOPE_TOL: f64 = 0.2;
    const SYNTH_TOL: f64 = 0.05;
    const LIMIT: Duration = Duration::from_secs(600);
    let t = Instant::now();
    let grid = vec![-0.5, -0.25, -0.1, -0.05, -0.02];
    let params = ProblemParams::new(7, 1, 0, grid[0]).unwrap();
    let mut manifest = SolveManifest::new(params, grid, 1e-10, vec![0.3, 0.1, 0.05]);
    let branch = manifest.run().unwrap();
    let pts = &branch.points;
    let monotone = pts.windows(2).all(|w| w[1].sup_norm > w[0].sup_norm);
    let last_fit = pts.last().unwrap().fit_residual;
    let slope = pohozaev_scaling(pts).unwrap().slope;
    let mut synth = Vec::new();
    for (n, k, p) in [(7usize, 1usize, 0usize), (9, 2, 0), (9, 2, 1)] {
        let b = synthetic_bubble_branch(n, k, p, &[1e-3, 5e-4, 2e-4, 1e-4]).unwrap();
        let s = pohozaev_scaling(&b).unwrap().slope;
        synth.push((k, p, s, (s - 2.0 * (k - p) as f64).abs()));
    }
    let synth_ok = synth.iter().all(|s| s.3 < SYNTH_TOL);
    let el = t.elapsed();
    let ok = branch.lost_at.is_none()
        && pts.len() >= 5
        && monotone
        && last_fit < FIT
        && (slope - 2.0).abs() < SLOPE_TOL
        && synth_ok
        && el < LIMIT;
    report(
        7,
        ok,
        &format!(
            "{} points, sup norm {:.3e}→{:.3e} increasing, last fit residual {last_fit:.2e} < {FIT:e}, scaling slope {slope:.3} = 2 ± {SLOPE_TOL}, synthetic (k,p,slope) {:?}, {el:.1?}",
            pts.len(),
            pts[0].sup_norm,
            pts.last().unwrap().sup_norm,
            synth.iter().map(|s| (s.0, s.1, (s.2 * 1e3).round() / 1e3)).collect::<Vec<_>>()
        ),
    );
    assert!(branch.lost_at.is_none() && pts.len() >= 5 && monotone);
    assert!(last_fit < FIT);
    assert!((slope - 2.0).abs() < SLOPE_TOL, "slope {slope}");
    assert!(synth_ok, "{synth:?}");
    assert!(el < LIMIT, "runtime {el:?}");
}

#[test]
fn criterion_8_structure_and_radii() {
    let _g = serial();
    const LIMIT: Duration = Duration::from_secs(120);
    // bounded: the last ratio of the sweep stays within this factor of the first
    const GROWTH: f64 = 2.0;
    let t = Instant::now();
    let alphas = [1e2, 1e3, 1e4];
    let mut min_eps = f64::INFINITY;

    // ε ≥ 2 on random pairs
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
    for _ in 0..2000 {
        let n = 5;
        let mut mus = [rng.gen_range(1e-6..0.5f64), rng.gen_range(1e-6..0.5f64)];
        mus.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let specs: Vec<BubbleSpec> = mus
            .iter()
            .map(|&mu| {
                let c: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.4..0.4)).collect();
                BubbleSpec::interior(n, 1, c, mu).unwrap()
            })
            .collect();
        let cfg = TreeConfig::new(n, 1, Domain::unit_ball(n), specs).unwrap();
        min_eps = min_eps.min(epsilon(&cfg, 1, 2).unwrap());
    }

    let mut disjoint = true;
    let mut r_over_mu = Vec::new();
    let mut ratios: Vec<(String, Vec<f64>)> = Vec::new();
    for name in ["tower.json", "separated.json"] {
        let mut sweep = Vec::new();
        for alpha in alphas {
            let cfg = fixture(name).at_alpha(alpha).unwrap();
            let data = classify(&cfg).unwrap();
            min_eps = min_eps.min(epsilon(&cfg, 1, 2).unwrap());
            disjoint &= comparable_disjointness(&cfg, &data).iter().all(|d| d.disjoint());
            if name == "separated.json" {
                r_over_mu.push(
                    (1..=2)
                        .map(|i| data.get(i).r / cfg.bubble(i).mu)
                        .fold(f64::INFINITY, f64::min),
                );
            }
            let worst = (1..=2)
                .map(|i| interaction_sup(&cfg, &data, i, 3000).unwrap().ratio)
                .fold(0.0, f64::max);
            sweep.push(worst);
        }
        ratios.push((name.into(), sweep));
    }
    let grows = r_over_mu.windows(2).all(|w| w[1] > w[0]);
    let bounded = ratios
        .iter()
        .all(|(_, s)| s.iter().all(|v| v.is_finite()) && s[2] <= GROWTH * s[0]);
    let el = t.elapsed();
    let ok = min_eps >= 2.0 && disjoint && grows && bounded && el < LIMIT;
    report(
        8,
        ok,
        &format!(
            "min ε {min_eps:.3} ≥ 2, comparable balls disjoint {disjoint}, r/μ {r_over_mu:.3?} increasing, interaction maxima {ratios:.3?} bounded, {el:.1?}"
        ),
    );
    assert!(min_eps >= 2.0 && disjoint && grows && bounded, "{ratios:?} {r_over_mu:?}");
    assert!(el < LIMIT, "runtime {el:?}");
}
