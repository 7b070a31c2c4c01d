// Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::HashMap;
use std::f64::consts::PI;

use gkp_ftqc::lattice::{CheckGraph, BOUNDARY};

pub fn normal_pdf(x: f64, sigma: f64) -> f64 {
    (-x * x / (2.0 * sigma * sigma)).exp() / (2.0 * PI * sigma * sigma).sqrt()
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

fn adapt(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        adapt(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + adapt(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
}

/// Adaptive Simpson quadrature.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let f: &dyn Fn(f64) -> f64 = &f;
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    let whole = simpson(a, b, fa, fm, fb);
    adapt(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// Window masses at even and odd multiples of the grid spacing, summed
/// until the windows lie 12 standard deviations out.
pub fn window_masses(half_width: f64, sigma: f64) -> (f64, f64) {
    let s = PI.sqrt();
    let mut even = integrate(|x| normal_pdf(x, sigma), -half_width, half_width, 1e-14);
    let mut odd = 0.0;
    let mut n = 1;
    while n as f64 * s - half_width < 12.0 * sigma {
        let c = n as f64 * s;
        let m = 2.0 * integrate(|x| normal_pdf(x, sigma), c - half_width, c + half_width, 1e-15);
        if n % 2 == 0 {
            even += m;
        } else {
            odd += m;
        }
        n += 1;
    }
    (even, odd)
}

/// Exact minimum-weight perfect matching by bitmask dynamic programming.
/// Missing edges are forbidden. Returns None if no perfect matching exists.
pub fn brute_force_matching(n: usize, edges: &[(usize, usize, f64)]) -> Option<f64> {
    assert!(n <= 20);
    let mut w = vec![vec![f64::INFINITY; n]; n];
    for &(a, b, c) in edges {
        w[a][b] = w[a][b].min(c);
        w[b][a] = w[b][a].min(c);
    }
    let full = (1usize << n) - 1;
    let mut memo: HashMap<usize, f64> = HashMap::new();
    fn go(mask: usize, full: usize, n: usize, w: &[Vec<f64>], memo: &mut HashMap<usize, f64>) -> f64 {
        if mask == full {
            return 0.0;
        }
        if let Some(&v) = memo.get(&mask) {
            return v;
        }
        let i = (0..n).find(|&i| mask & (1 << i) == 0).unwrap();
        let mut best = f64::INFINITY;
        for j in i + 1..n {
            if mask & (1 << j) == 0 && w[i][j].is_finite() {
                best = best.min(w[i][j] + go(mask | 1 << i | 1 << j, full, n, w, memo));
            }
        }
        memo.insert(mask, best);
        best
    }
    let v = go(0, full, n, &w, &mut memo);
    v.is_finite().then_some(v)
}

/// Greedy matching: repeatedly take the lightest edge between free nodes.
pub fn greedy_matching(n: usize, edges: &[(usize, usize, f64)]) -> Option<f64> {
    let mut e = edges.to_vec();
    e.sort_by(|a, b| a.2.total_cmp(&b.2));
    let mut used = vec![false; n];
    let mut total = 0.0;
    let mut count = 0;
    for (a, b, c) in e {
        if !used[a] && !used[b] {
            used[a] = true;
            used[b] = true;
            total += c;
            count += 2;
        }
    }
    (count == n).then_some(total)
}

/// Single-source shortest paths over checks by Bellman–Ford relaxation.
/// The boundary is node `num_checks`.
pub fn bellman_ford(g: &CheckGraph, weights: &[f64], source: usize) -> Vec<f64> {
    let nb = g.num_checks();
    let mut dist = vec![f64::INFINITY; nb + 1];
    dist[source] = 0.0;
    let node = |c: usize| if c == BOUNDARY { nb } else { c };
    for _ in 0..=nb {
        let mut changed = false;
        for q in 0..g.num_qubits() {
            let [a, b] = g.endpoints(q);
            let (a, b) = (node(a), node(b));
            for (u, v) in [(a, b), (b, a)] {
                if dist[u] + weights[q] < dist[v] {
                    dist[v] = dist[u] + weights[q];
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    dist
}
