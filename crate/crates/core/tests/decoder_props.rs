mod common;

use common::{bellman_ford, brute_force_matching, greedy_matching};
use gkp_ftqc::decoder::{build_matching_graph, decode, extract_syndrome, min_weight_perfect_matching, mwpm, ErrorConfig, Mode};
use gkp_ftqc::lattice::{build_cell_lattice, build_planar, logical_failure, Lattice};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn xor(a: &[bool], b: &[bool]) -> Vec<bool> {
    a.iter().zip(b).map(|(x, y)| x ^ y).collect()
}

fn flips_strategy(n: usize) -> impl Strategy<Value = Vec<bool>> {
    proptest::collection::vec(proptest::bool::weighted(0.15), n)
}

/// Symmetric difference of two sorted defect lists.
fn sym_diff(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut v: Vec<usize> = a.iter().filter(|x| !b.contains(x)).chain(b.iter().filter(|x| !a.contains(x))).copied().collect();
    v.sort_unstable();
    v
}

proptest! {
    #[test]
    fn syndrome_linearity_2d(a in flips_strategy(49), b in flips_strategy(49)) {
        let l = build_planar(7).unwrap();
        let sa = extract_syndrome(&l, &a).unwrap();
        let sb = extract_syndrome(&l, &b).unwrap();
        let sab = extract_syndrome(&l, &xor(&a, &b)).unwrap();
        prop_assert_eq!(sab, sym_diff(&sa, &sb));
    }

    #[test]
    fn syndrome_linearity_3d(seed in any::<u64>()) {
        let l = build_cell_lattice(4).unwrap();
        let n = l.graph().num_qubits();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.1)).collect();
        let b: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.1)).collect();
        let sa = extract_syndrome(&l, &a).unwrap();
        let sb = extract_syndrome(&l, &b).unwrap();
        prop_assert_eq!(extract_syndrome(&l, &xor(&a, &b)).unwrap(), sym_diff(&sa, &sb));
    }

    #[test]
    fn decoded_residual_is_clean(seed in any::<u64>(), analog in any::<bool>()) {
        let l = build_planar(5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let flips: Vec<bool> = (0..25).map(|_| rng.gen_bool(0.2)).collect();
        let weights: Vec<f64> = (0..25).map(|_| rng.gen_range(0.0..5.0)).collect();
        let mode = if analog { Mode::Analog } else { Mode::Digital };
        let d = decode(&l, &ErrorConfig::new(flips.clone(), weights).unwrap(), mode).unwrap();
        prop_assert!(extract_syndrome(&l, &xor(&flips, &d.correction)).unwrap().is_empty());
    }

    #[test]
    fn triangle_inequality(seed in any::<u64>()) {
        let l = build_planar(7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let flips: Vec<bool> = (0..49).map(|_| rng.gen_bool(0.15)).collect();
        let weights: Vec<f64> = (0..49).map(|_| rng.gen_range(0.01..4.0)).collect();
        let cfg = ErrorConfig::new(flips.clone(), weights).unwrap();
        let defects = extract_syndrome(&l, &flips).unwrap();
        let mg = build_matching_graph(&l, &cfg, &defects).unwrap();
        let n = mg.num_defects();
        // effective metric: kept pair distance or the route through the boundary
        let mut eff = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    eff[i][j] = mg.boundary_dist[i] + mg.boundary_dist[j];
                }
            }
        }
        for &(i, j, w) in &mg.pairs {
            prop_assert!(w >= 0.0);
            eff[i][j] = w;
            eff[j][i] = w;
        }
        for i in 0..n {
            for j in 0..n {
                prop_assert!(mg.boundary_dist[i] <= eff[i][j] + mg.boundary_dist[j] + 1e-9);
                for k in 0..n {
                    prop_assert!(eff[i][j] <= eff[i][k] + eff[k][j] + 1e-9);
                }
            }
        }
    }

    #[test]
    fn not_worse_than_greedy(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 2 * rng.gen_range(1..=10);
        let edges: Vec<(usize, usize, f64)> = (0..n)
            .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
            .map(|(a, b)| (a, b, rng.gen_range(0.0..10.0)))
            .collect();
        let m = min_weight_perfect_matching(n, &edges).unwrap();
        let g = greedy_matching(n, &edges).unwrap();
        prop_assert!(m.weight <= g + 1e-6);
    }

    #[test]
    fn scaling_keeps_the_optimum(seed in any::<u64>(), scale in 0.01f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 2 * rng.gen_range(1..=5);
        let edges: Vec<(usize, usize, f64)> = (0..n)
            .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
            .map(|(a, b)| (a, b, rng.gen_range(0.0..10.0)))
            .collect();
        let scaled: Vec<_> = edges.iter().map(|&(a, b, w)| (a, b, w * scale)).collect();
        let m1 = min_weight_perfect_matching(n, &edges).unwrap();
        let m2 = min_weight_perfect_matching(n, &scaled).unwrap();
        // random real weights: the optimum is unique with probability one
        prop_assert_eq!(&m1.pairs, &m2.pairs);
        prop_assert!((m2.weight - scale * m1.weight).abs() < 1e-5 * scale.max(1.0) * (1.0 + m1.weight));
    }

    #[test]
    fn analog_at_zero_deviation_is_digital(seed in any::<u64>()) {
        let l = build_planar(5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let flips: Vec<bool> = (0..25).map(|_| rng.gen_bool(0.1)).collect();
        let w0 = gkp_ftqc::gkp_math::edge_weight(0.0, 0.5, 25.0);
        let analog = decode(&l, &ErrorConfig::new(flips.clone(), vec![w0; 25]).unwrap(), Mode::Analog).unwrap();
        let digital = decode(&l, &ErrorConfig::digital(flips.clone()), Mode::Digital).unwrap();
        prop_assert!((analog.matching.weight - w0 * digital.matching.weight).abs() < 1e-6 * (1.0 + analog.matching.weight));
        let mg = build_matching_graph(&l, &ErrorConfig::digital(flips.clone()), &digital.defects).unwrap();
        let edges = mg.edges();
        let nn = mg.num_nodes();
        // identical matchings whenever the digital optimum is unique
        let unique = nn <= 12 && {
            let opt = brute_force_matching(nn, &edges).unwrap_or(f64::INFINITY);
            (0..edges.len()).all(|k| {
                let mut e = edges.clone();
                let (a, b, w) = e[k];
                if !digital.matching.pairs.contains(&(a.min(b), a.max(b))) {
                    return true;
                }
                e[k] = (a, b, w + 0.5);
                brute_force_matching(nn, &e).unwrap_or(f64::INFINITY) > opt + 1e-9
            })
        };
        if unique {
            prop_assert_eq!(&analog.matching.pairs, &digital.matching.pairs);
            prop_assert_eq!(&analog.correction, &digital.correction);
        }
    }
}

#[test]
fn stabilizers_are_logically_trivial_d3() {
    let l = build_planar(3).unwrap();
    let g = l.graph();
    let cycles = g.trivial_cycles().to_vec();
    assert!(!cycles.is_empty());
    let n = g.num_qubits();
    // every residual with empty syndrome, against every product of stabilizers
    for r in 0..1u32 << n {
        let res: Vec<bool> = (0..n).map(|q| r >> q & 1 == 1).collect();
        if !extract_syndrome(&l, &res).unwrap().is_empty() {
            continue;
        }
        let base = logical_failure(&l, &res, &vec![false; n]).unwrap();
        for s in 0..1u32 << cycles.len() {
            let mut m = res.clone();
            for (k, c) in cycles.iter().enumerate() {
                if s >> k & 1 == 1 {
                    for &q in c {
                        m[q] ^= true;
                    }
                }
            }
            assert_eq!(logical_failure(&l, &m, &vec![false; n]).unwrap(), base);
        }
    }
}

#[test]
fn distances_match_bellman_ford() {
    let l = build_planar(5).unwrap();
    let g = l.graph();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut tested = 0;
    while tested < 200 {
        let flips: Vec<bool> = (0..25).map(|_| rng.gen_bool(0.15)).collect();
        let defects = extract_syndrome(&l, &flips).unwrap();
        if defects.len() != 6 {
            continue;
        }
        tested += 1;
        let weights: Vec<f64> = (0..25).map(|_| rng.gen_range(0.0..3.0)).collect();
        let cfg = ErrorConfig::new(flips, weights.clone()).unwrap();
        let mg = build_matching_graph(&l, &cfg, &defects).unwrap();
        let nb = g.num_checks();
        let oracle: Vec<Vec<f64>> = defects.iter().map(|&c| bellman_ford(g, &weights, c)).collect();
        for i in 0..6 {
            assert!((mg.boundary_dist[i] - oracle[i][nb]).abs() < 1e-9);
        }
        for i in 0..6 {
            for j in i + 1..6 {
                // the oracle may route through the boundary, which the
                // matching graph expresses as two boundary edges
                let want = oracle[i][defects[j]];
                match mg.pairs.iter().find(|p| p.0 == i && p.1 == j) {
                    Some(&(_, _, w)) => assert!((w - want).abs() < 1e-9, "{w} vs {want}"),
                    None => assert!(mg.boundary_dist[i] + mg.boundary_dist[j] <= want + 1e-9),
                }
            }
        }
    }
}

#[test]
fn brute_force_agreement() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..1000 {
        let n = 2 * rng.gen_range(1..=6);
        let edges: Vec<(usize, usize, f64)> = (0..n)
            .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
            .filter_map(|(a, b)| rng.gen_bool(0.8).then(|| (a, b, rng.gen_range(0.0..20.0))))
            .collect();
        match (min_weight_perfect_matching(n, &edges), brute_force_matching(n, &edges)) {
            (Ok(m), Some(w)) => assert!((m.weight - w).abs() < 1e-5, "{} vs {w}", m.weight),
            (Err(_), None) => {}
            (a, b) => panic!("feasibility disagrees: {a:?} {b:?}"),
        }
    }
}

#[test]
fn mwpm_matches_brute_force_on_lattice_graphs() {
    let l = build_cell_lattice(3).unwrap();
    let n = l.graph().num_qubits();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut done = 0;
    while done < 100 {
        let flips: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.04)).collect();
        let weights: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..3.0)).collect();
        let defects = extract_syndrome(&l, &flips).unwrap();
        if defects.is_empty() || defects.len() > 6 {
            continue;
        }
        done += 1;
        let mg = build_matching_graph(&l, &ErrorConfig::new(flips, weights).unwrap(), &defects).unwrap();
        let m = mwpm(&mg).unwrap();
        let w = brute_force_matching(mg.num_nodes(), &mg.edges()).unwrap();
        assert!((m.weight - w).abs() < 1e-5);
    }
}

#[test]
fn all_small_errors_corrected_d5() {
    let l = build_planar(5).unwrap();
    for a in 0..25 {
        for b in a..25 {
            let mut flips = vec![false; 25];
            flips[a] = true;
            flips[b] = true;
            let d = decode(&l, &ErrorConfig::digital(flips.clone()), Mode::Digital).unwrap();
            assert!(!d.failed, "flips {a} {b}");
            if a == b {
                let w = vec![gkp_ftqc::gkp_math::edge_weight(0.1, 0.5, 25.0); 25];
                let d = decode(&l, &ErrorConfig::new(flips, w).unwrap(), Mode::Analog).unwrap();
                assert!(!d.failed);
            }
        }
    }
}

#[test]
fn random_trials_leave_no_syndrome() {
    for (lat, p) in [(Box::new(build_planar(7).unwrap()) as Box<dyn Lattice>, 0.1), (Box::new(build_cell_lattice(5).unwrap()), 0.03)] {
        let n = lat.graph().num_qubits();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..2000 {
            let flips: Vec<bool> = (0..n).map(|_| rng.gen_bool(p)).collect();
            let weights: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..25.0)).collect();
            let d = decode(lat.as_ref(), &ErrorConfig::new(flips.clone(), weights).unwrap(), Mode::Analog).unwrap();
            assert!(extract_syndrome(lat.as_ref(), &xor(&flips, &d.correction)).unwrap().is_empty());
        }
    }
}
