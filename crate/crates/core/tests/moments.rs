use gkp_ftqc::construction::{build_three_tree, cz_star, single_qubit_qec};
use gkp_ftqc::gkp_math::{p_suc, sigma_from_db, PostselectParams, SQRT_PI};
use gkp_ftqc::noise::*;

const N: u64 = 1_000_000;
const V_UP: f64 = 2.0 * SQRT_PI / 5.0;

struct Moments {
    n: f64,
    sum: f64,
    sum_sq: f64,
}

impl Moments {
    fn new() -> Self {
        Self { n: 0.0, sum: 0.0, sum_sq: 0.0 }
    }
    fn push(&mut self, x: f64) {
        self.n += 1.0;
        self.sum += x;
        self.sum_sq += x * x;
    }
    fn var(&self) -> f64 {
        let m = self.sum / self.n;
        self.sum_sq / self.n - m * m
    }
}

fn within(emp: f64, book: f64, rel: f64) -> bool {
    (emp / book - 1.0).abs() < rel
}

#[test]
fn sampling_and_channel_moments() {
    let mut rng = trial_rng(1, 0);
    let mut m = Moments::new();
    for _ in 0..N {
        m.push(sample_deviation(0.3, &mut rng));
    }
    assert!((m.var() - 0.09).abs() < 0.001, "{}", m.var());
    assert_eq!(sample_deviation(0.0, &mut rng), 0.0);

    let (mut mq, mut mp) = (Moments::new(), Moments::new());
    let mut book = GkpQubit::ideal(0.0);
    for _ in 0..N {
        let q = gaussian_channel(GkpQubit::fresh(0.2, &mut rng), 0.05f64.sqrt(), &mut rng);
        mq.push(q.delta_q);
        mp.push(q.delta_p);
        book = q;
    }
    assert!((book.var_q - 0.09).abs() < 1e-15);
    assert!(within(mq.var(), 0.09, 0.01) && within(mp.var(), 0.09, 0.01));
}

#[test]
fn gate_moments() {
    let s = 0.3;
    let mut rng = trial_rng(2, 0);
    let (mut cz_t, mut cn_t, mut cn_c) = (Moments::new(), Moments::new(), Moments::new());
    let mut books = None;
    for _ in 0..N {
        let (c, t) = cz(GkpQubit::fresh(s, &mut rng), GkpQubit::fresh(s, &mut rng));
        cz_t.push(t.delta_p);
        let (c2, t2) = cnot(GkpQubit::fresh(s, &mut rng), GkpQubit::fresh(s, &mut rng));
        cn_t.push(t2.delta_q);
        cn_c.push(c2.delta_p);
        books = Some((c, t, c2, t2));
    }
    let (c, t, c2, t2) = books.unwrap();
    assert_eq!((c.var_q, t.var_q), (s * s, s * s));
    assert!(within(cz_t.var(), t.var_p, 0.01));
    assert!(within(cn_t.var(), t2.var_q, 0.01));
    assert!(within(cn_c.var(), c2.var_p, 0.01));
    assert_eq!(c2.var_q, s * s);
    assert_eq!(t2.var_p, s * s);
}

#[test]
fn tree_and_bell_moments() {
    let s = sigma_from_db(9.8);
    let mut rng = trial_rng(3, 0);
    let (mut node_p, mut leaf_p, mut bell_a, mut bell_b, mut star) =
        (Moments::new(), Moments::new(), Moments::new(), Moments::new(), Moments::new());
    let mut var = (0.0, 0.0);
    for _ in 0..N {
        let t = build_three_tree(s, &mut rng);
        node_p.push(t.node.delta_p);
        leaf_p.push(t.leaves[0].delta_p);
        let b = beam_splitter_bell(t.leaves[0], build_three_tree(s, &mut rng).node);
        bell_a.push(b.leaf_outcome);
        bell_b.push(b.node_outcome);
        var = (b.leaf_var, b.node_var);
        star.push(cz_star(s, 4, &mut rng).delta_p);
    }
    let s2 = s * s;
    assert!(within(node_p.var(), 3.0 * s2, 0.01));
    assert!(within(leaf_p.var(), 2.0 * s2, 0.01));
    assert!(within(bell_a.var(), var.0, 0.01) && within(bell_b.var(), var.1, 0.01));
    assert!(within(star.var(), 5.0 * s2, 0.01));
}

#[test]
fn postselected_acceptance_frequency() {
    let s = sigma_from_db(9.8);
    let var = 3.0 * s * s;
    let mut rng = trial_rng(4, 0);
    let mut acc = 0u64;
    for _ in 0..N {
        let raw = sample_deviation(var.sqrt(), &mut rng);
        acc += u64::from(postselected_measure(raw, var, V_UP).accepted().is_some());
    }
    let f = acc as f64 / N as f64;
    let p = p_suc(PostselectParams::new(V_UP, var).unwrap());
    assert!((f - 0.346).abs() < 0.01, "{f}");
    let se = (p * (1.0 - p) / N as f64).sqrt();
    assert!((f - p).abs() < 3.0 * se, "{f} vs {p}");
}

#[test]
fn corrected_node_bookkeeping() {
    let s = 0.25;
    let mut rng = trial_rng(5, 0);
    let mut m = Moments::new();
    let mut last = None;
    for _ in 0..200_000 {
        let t = build_three_tree(s, &mut rng);
        if let Some(c) = single_qubit_qec(t, V_UP, &mut rng).unwrap() {
            m.push(c.node.delta_p);
            last = Some(c);
        }
    }
    let c = last.unwrap();
    assert_eq!((c.node.var_q, c.node.var_p), (2.0 * s * s, s * s));
    // conditioning on acceptance narrows the spread; the bookkept value is an upper bound
    assert!(m.var() <= 1.01 * s * s && m.var() > 0.5 * s * s, "{}", m.var() / (s * s));
}
