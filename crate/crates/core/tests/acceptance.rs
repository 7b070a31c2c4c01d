//! Acceptance run: prints one PASS/FAIL line per criterion.
//!
//! `ACCEPTANCE_ONLY=1,2,6` restricts the run to some criteria.
//! `ACCEPTANCE_STRICT=1` turns any FAIL into a non-zero exit status.

mod common;

use std::time::Instant;

use common::{brute_force_matching, integrate, normal_pdf, window_masses};
use gkp_ftqc::cli::{cmd_threshold, factory_report, ThresholdConfig};
use gkp_ftqc::construction::{build_three_tree, node_error_channels};
use gkp_ftqc::decoder::{decode, extract_syndrome, min_weight_perfect_matching, BoundaryWeights, ErrorConfig, Mode};
use gkp_ftqc::gkp_math::*;
use gkp_ftqc::lattice::{build_cell_lattice, build_planar, Boundary, Lattice};
use gkp_ftqc::montecarlo::*;
use gkp_ftqc::noise::{beam_splitter_bell, cnot, trial_rng, GkpQubit};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const V_UP: f64 = 2.0 * SQRT_PI / 5.0;
/// Trials per point for the 2D sweeps and for the 3D sweeps.
const TRIALS_2D: u64 = 10_000;
const TRIALS_3D: u64 = 4_000;
/// Sigma values nearest the crossing used by the scaling fit.
const FIT_POINTS: usize = 5;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Eight points spanning +-15% around `centre`.
fn grid(centre: f64) -> Vec<f64> {
    (0..8).map(|k| centre * (0.85 + 0.30 * k as f64 / 7.0)).collect()
}

fn sweep_and_fit(model: NoiseModel, mode: Mode, distances: &[usize], centre: f64, trials: u64, seed: u64) -> (Vec<RatePoint>, Option<FitResult>) {
    let template = TrialPlan::new(model, distances[0], centre, mode, trials, seed);
    let pts = sweep(&template, distances, &grid(centre)).expect("sweep runs");
    let fit = fit_threshold_near_crossing(&pts, FIT_POINTS).ok();
    (pts, fit)
}

fn describe(fit: &Option<FitResult>) -> String {
    match fit {
        None => "fit failed".into(),
        Some(f) => {
            let (lo, hi) = f.sigma_th_ci();
            let xs: Vec<String> = f
                .crossings
                .iter()
                .map(|c| format!("{}/{}:{}", c.d_small, c.d_large, c.sigma.map_or("-".into(), |s| format!("{s:.3}"))))
                .collect();
            format!("sigma_th={:.4} [{lo:.4},{hi:.4}] nu={:.2} converged={} crossings {}", f.sigma_th, f.nu, f.converged, xs.join(" "))
        }
    }
}

fn near(fit: &Option<FitResult>, target: f64, tol: f64) -> bool {
    fit.as_ref().is_some_and(|f| f.converged && (f.sigma_th - target).abs() <= tol)
}

fn criterion_1() -> Outcome {
    let mut worst_int: f64 = 0.0;
    for sigma in [0.08, 0.2, 0.228, 0.3, 0.41, 0.6, 1.0] {
        let o = integrate(|x| normal_pdf(x, sigma), -HALF_SQRT_PI, HALF_SQRT_PI, 1e-14);
        worst_int = worst_int.max((p_correct(sigma) - o).abs());
    }
    for db in [9.8, 10.5, 12.0] {
        for mult in [3.0, 4.0] {
            for v in [0.0, V_UP] {
                let var = mult * sigma_from_db(db).powi(2);
                let p = PostselectParams::new(v, var).unwrap();
                let (c, i) = postselect_probs(p);
                let (oc, oi) = window_masses(HALF_SQRT_PI - v, var.sqrt());
                worst_int = worst_int.max((c - oc).abs()).max((i - oi).abs());
                worst_int = worst_int.max((e_post(p).unwrap() - oi / (oc + oi)).abs());
            }
        }
    }
    let mut worst_w: f64 = 0.0;
    for k in 0..=50 {
        let delta = HALF_SQRT_PI * k as f64 / 50.0;
        for sigma in [0.2, 0.4, 0.6] {
            let direct = (normal_pdf(delta, sigma) / normal_pdf(SQRT_PI - delta, sigma)).ln();
            let w = edge_weight(delta, sigma, f64::INFINITY);
            worst_w = worst_w.max((direct - w).abs() / direct.abs().max(1.0));
        }
    }
    let s2 = sigma_from_db(9.8).powi(2);
    let p3 = p_suc(PostselectParams::new(V_UP, 3.0 * s2).unwrap());
    let p4 = p_suc(PostselectParams::new(V_UP, 4.0 * s2).unwrap());
    let tail16 = p_incorrect(sigma_from_db(16.0));
    let b = e_tot_leading(sigma_from_db(10.5), V_UP).unwrap();
    let pass = worst_int < 1e-9
        && worst_w < 1e-10
        && (p3 - 0.346).abs() <= 0.001
        && (p4 - 0.302).abs() <= 0.001
        && (tail16 / 2.7e-15 - 1.0).abs() <= 0.5
        && (b.e_tot - 0.030).abs() <= 0.003
        && (b.e_bell - 0.015).abs() <= 0.002;
    outcome(
        pass,
        format!(
            "quadrature err {worst_int:.1e}, weight identity err {worst_w:.1e}, p_suc(3s2)={p3:.4}, p_suc(4s2)={p4:.4}, \
             1-p_correct(16 dB)={tail16:.2e}, e_tot(10.5 dB)={:.4}, e_bell={:.4}",
            b.e_tot, b.e_bell
        ),
    )
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut agree = 0;
    for _ in 0..1000 {
        let n = 2 * rng.gen_range(1..=6);
        let edges: Vec<(usize, usize, f64)> = (0..n)
            .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
            .filter_map(|(a, b)| rng.gen_bool(0.85).then(|| (a, b, rng.gen_range(0.0..20.0))))
            .collect();
        let ok = match (min_weight_perfect_matching(n, &edges), brute_force_matching(n, &edges)) {
            (Ok(m), Some(w)) => (m.weight - w).abs() < 1e-5,
            (Err(_), None) => true,
            _ => false,
        };
        agree += usize::from(ok);
    }

    let runs: [(NoiseModel, usize, f64, u64); 3] = [
        (NoiseModel::CodeCapacity, 7, 0.58, 50_000),
        (NoiseModel::Phenomenological, 5, 0.45, 30_000),
        (NoiseModel::Construction, 5, 0.23, 20_000),
    ];
    let (mut clean, mut total) = (0u64, 0u64);
    for (model, d, sigma, n) in runs {
        let lat: Box<dyn Lattice> = match model {
            NoiseModel::CodeCapacity => Box::new(build_planar(d).unwrap()),
            _ => Box::new(build_cell_lattice(d).unwrap()),
        };
        for mode in [Mode::Digital, Mode::Analog] {
            let plan = TrialPlan::new(model, d, sigma, mode, n / 2, 31);
            for i in 0..n / 2 {
                let cfg = sample_trial(&plan, lat.as_ref(), i).unwrap();
                let dec = decode(lat.as_ref(), &cfg, mode).unwrap();
                let residual: Vec<bool> = cfg.flips.iter().zip(&dec.correction).map(|(a, b)| a ^ b).collect();
                clean += u64::from(extract_syndrome(lat.as_ref(), &residual).unwrap().is_empty());
                total += 1;
            }
        }
    }

    let l = build_planar(5).unwrap();
    let (mut corrected, mut sets) = (0, 0);
    for a in 0..25 {
        for b in a..25 {
            let mut flips = vec![false; 25];
            flips[a] = true;
            flips[b] = true;
            sets += 1;
            corrected += usize::from(!decode(&l, &ErrorConfig::digital(flips), Mode::Digital).unwrap().failed);
        }
    }
    outcome(
        agree == 1000 && clean == total && corrected == sets,
        format!("MWPM = brute force on {agree}/1000 instances; clean residual in {clean}/{total} trials; {corrected}/{sets} errors of weight <= 2 corrected at d=5"),
    )
}

struct Sweeps {
    cc: Vec<Vec<RatePoint>>,
}

fn criterion_3(store: &mut Sweeps) -> Outcome {
    let ds = [5, 7, 9, 11];
    let (pd, fd) = sweep_and_fit(NoiseModel::CodeCapacity, Mode::Digital, &ds, 0.542, TRIALS_2D, 301);
    let (pa, fa) = sweep_and_fit(NoiseModel::CodeCapacity, Mode::Analog, &ds, 0.607, TRIALS_2D, 302);
    store.cc = vec![pd, pa];
    outcome(
        near(&fd, 0.542, 0.02) && near(&fa, 0.607, 0.02),
        format!("digital {} | analog {}", describe(&fd), describe(&fa)),
    )
}

fn cis_disjoint(a: &Option<FitResult>, b: &Option<FitResult>) -> bool {
    match (a, b) {
        (Some(a), Some(b)) => a.sigma_th_ci().1 < b.sigma_th_ci().0,
        _ => false,
    }
}

fn criterion_4() -> Outcome {
    let ds = [5, 7, 9];
    let (_, fd) = sweep_and_fit(NoiseModel::Phenomenological, Mode::Digital, &ds, 0.41, TRIALS_3D, 401);
    let (_, fa) = sweep_and_fit(NoiseModel::Phenomenological, Mode::Analog, &ds, 0.47, TRIALS_3D, 402);
    let gap = match (&fd, &fa) {
        (Some(d), Some(a)) => a.sigma_th - d.sigma_th,
        _ => f64::NAN,
    };
    outcome(
        near(&fd, 0.41, 0.02) && near(&fa, 0.47, 0.02) && gap >= 0.04 && cis_disjoint(&fd, &fa),
        format!("digital {} | analog {} | gap {gap:.4}", describe(&fd), describe(&fa)),
    )
}

fn criterion_5() -> Outcome {
    let ds = [5, 7, 9];
    let (_, fd) = sweep_and_fit(NoiseModel::Construction, Mode::Digital, &ds, 0.208, TRIALS_3D, 501);
    let (_, fa) = sweep_and_fit(NoiseModel::Construction, Mode::Analog, &ds, 0.228, TRIALS_3D, 502);
    let ordered = match (&fd, &fa) {
        (Some(d), Some(a)) => a.sigma_th >= d.sigma_th,
        _ => false,
    };
    let net = node_error_channels(0.208, V_UP).unwrap().net_flip_probability();
    outcome(
        near(&fd, 0.208, 0.03) && near(&fa, 0.228, 0.03) && ordered,
        format!("digital {} | analog {} | node flip at 0.208 = {net:.4}", describe(&fd), describe(&fa)),
    )
}

fn criterion_6() -> Outcome {
    let sigma = sigma_from_db(9.8);
    let cfg = gkp_ftqc::cli::FactoryConfig {
        sigma,
        squeezing_db: 9.8,
        v_up: V_UP,
        five_trees: 20_000,
        target_hexagons: 8,
        seed: 6,
        threads: None,
        out: std::env::temp_dir(),
    };
    let r = factory_report(&cfg).unwrap();
    let t = &r.five_tree_tally;
    let h = r.hexagon_tally.as_ref().unwrap();
    let ratio = t.three_trees_per_five_tree() / r.r_5tree;
    let z = |c: &gkp_ftqc::construction::StageCount, p: f64| (c.rate() - p) / c.standard_error(p);
    let zs = [z(&t.sqec, r.p_suc_4), z(&t.bell, r.p_suc_3 * r.p_suc_4), z(&h.bell_ii, r.p_suc_3 * r.p_suc_3)];
    let noted = r.note.contains("9.2e6") && r.r_hexa.is_finite() && r.r_hexa_total.is_finite();
    outcome(
        (ratio - 1.0).abs() <= 0.05 && zs.iter().all(|z| z.abs() <= 3.0) && noted,
        format!(
            "3-trees per 5-tree {:.1} vs {:.1} ({:+.2}%); stage z-scores sqec {:+.2} bell {:+.2} bell_ii {:+.2}; \
             r_hexa={:.4e} r_hexa_total={:.4e}; {}",
            t.three_trees_per_five_tree(),
            r.r_5tree,
            100.0 * (ratio - 1.0),
            zs[0],
            zs[1],
            zs[2],
            r.r_hexa,
            r.r_hexa_total,
            r.note
        ),
    )
}

fn criterion_7(store: &Sweeps) -> Outcome {
    // variance bookkeeping against sampled moments
    let s = sigma_from_db(9.8);
    let mut rng = trial_rng(70, 0);
    let n = 1_000_000;
    let mut acc = [0.0f64; 5];
    let mut book = [0.0f64; 5];
    for _ in 0..n {
        let t = build_three_tree(s, &mut rng);
        let b = beam_splitter_bell(t.leaves[0], build_three_tree(s, &mut rng).node);
        let (anc, _) = cnot(GkpQubit::fresh(s, &mut rng), t.node);
        let x = [t.node.delta_p, t.leaves[0].delta_p, b.leaf_outcome, b.node_outcome, anc.delta_p];
        book = [t.node.var_p, t.leaves[0].var_p, b.leaf_var, b.node_var, anc.var_p];
        for k in 0..5 {
            acc[k] += x[k] * x[k];
        }
    }
    let worst_moment = (0..5).map(|k| (acc[k] / n as f64 / book[k] - 1.0).abs()).fold(0.0, f64::max);

    // monotone in sigma within interval overlap
    let mut monotone = true;
    let cc = if store.cc.is_empty() {
        let tpl = TrialPlan::new(NoiseModel::CodeCapacity, 5, 0.5, Mode::Analog, 2000, 71);
        vec![sweep(&tpl, &[5, 7], &grid(0.58)).unwrap()]
    } else {
        store.cc.clone()
    };
    for pts in &cc {
        for w in pts.windows(2) {
            if w[0].plan.d == w[1].plan.d && w[1].ci_high < w[0].ci_low {
                monotone = false;
            }
        }
    }

    // same seed, different worker counts, identical CSV bytes
    let dir = tempfile::tempdir().unwrap();
    let run = |threads| {
        let cfg = ThresholdConfig {
            model: NoiseModel::Phenomenological,
            modes: vec![Mode::Digital, Mode::Analog],
            distances: vec![3, 5, 7],
            sigmas: vec![0.40, 0.44, 0.48, 0.52],
            v_up: V_UP,
            trials: 300,
            seed: 77,
            weight_cap: DEFAULT_WEIGHT_CAP,
            boundary: Boundary::Planar,
            boundary_weights: BoundaryWeights::Analog,
            fit_points: 0,
            threads: Some(threads),
            out: dir.path().to_path_buf(),
        };
        let _ = cmd_threshold(&cfg).unwrap();
        std::fs::read(dir.path().join("threshold_phenomenological.csv")).unwrap()
    };
    let identical = run(1) == run(4);

    // synthetic scaling data
    let mut rng = ChaCha8Rng::seed_from_u64(72);
    let mut pts = Vec::new();
    for d in [5usize, 7, 9, 11] {
        for k in 0..8 {
            let sigma = 0.43 + 0.04 * k as f64 / 7.0;
            let p = (0.3 + 2.0 * (sigma - 0.45) * (d as f64).powf(1.0 / 1.2)) * (1.0 + 0.005 * rng.gen_range(-1.0..1.0));
            let plan = TrialPlan::new(NoiseModel::CodeCapacity, d, sigma, Mode::Digital, 1_000_000, 0);
            let mut r = RatePoint::from_counts(plan, (p * 1e6).round() as u64);
            r.p_logical = p;
            pts.push(r);
        }
    }
    let fit = fit_threshold(&pts).unwrap();
    let recovered = fit.converged && (fit.sigma_th - 0.45).abs() <= 0.005;

    outcome(
        worst_moment <= 0.01 && monotone && identical && recovered,
        format!(
            "worst moment deviation {:.3}%; monotone {monotone}; byte-identical CSV across 1/4 workers {identical}; synthetic sigma_th {:.4}",
            100.0 * worst_moment,
            fit.sigma_th
        ),
    )
}

fn main() {
    let only: Option<Vec<u32>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let wanted = |k: u32| only.as_ref().map_or(true, |o| o.contains(&k));
    // a plain `cargo test <filter>` that names another target skips this one
    if std::env::args().skip(1).any(|a| a == "--list") {
        return;
    }

    let names = [
        "analytic suite",
        "decoder correctness",
        "code-capacity thresholds",
        "phenomenological thresholds",
        "construction-model thresholds",
        "factory statistics",
        "property suites",
    ];
    let mut store = Sweeps { cc: Vec::new() };
    let (mut passed, mut ran) = (0, 0);
    for k in 1..=7u32 {
        if !wanted(k) {
            continue;
        }
        let start = Instant::now();
        let o = match k {
            1 => criterion_1(),
            2 => criterion_2(),
            3 => criterion_3(&mut store),
            4 => criterion_4(),
            5 => criterion_5(),
            6 => criterion_6(),
            _ => criterion_7(&store),
        };
        ran += 1;
        passed += usize::from(o.pass);
        println!(
            "[{}] criterion {k} {}: {} ({:.0} s)",
            if o.pass { "PASS" } else { "FAIL" },
            names[k as usize - 1],
            o.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {passed}/{ran} criteria passed");
    if strict && passed != ran {
        std::process::exit(1);
    }
}
