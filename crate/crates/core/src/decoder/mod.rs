//! Minimum-weight perfect matching decoder.

pub mod blossom;

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{logical_failure, CheckGraph, Lattice, BOUNDARY};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Every qubit has unit weight.
    #[default]
    Digital,
    /// Weights from the binned deviation of each qubit.
    Analog,
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "digital" => Ok(Mode::Digital),
            "analog" => Ok(Mode::Analog),
            _ => Err(Error::Config(format!("unknown mode '{s}' (digital | analog)"))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Digital => "digital",
            Mode::Analog => "analog",
        })
    }
}

/// Weight given to qubits on the open boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryWeights {
    /// Same per-qubit weights as the bulk.
    #[default]
    Analog,
    /// Boundary qubits keep only the a-priori weight, ignoring their
    /// measured deviation.
    Uniform,
}

impl std::str::FromStr for BoundaryWeights {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "analog" => Ok(BoundaryWeights::Analog),
            "uniform" => Ok(BoundaryWeights::Uniform),
            _ => Err(Error::Config(format!("unknown boundary weights '{s}' (analog | uniform)"))),
        }
    }
}

impl std::fmt::Display for BoundaryWeights {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BoundaryWeights::Analog => "analog",
            BoundaryWeights::Uniform => "uniform",
        })
    }
}

/// One sampled error: which qubits flipped and how costly each is to
/// flip in the correction.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorConfig {
    pub flips: Vec<bool>,
    pub weights: Vec<f64>,
}

impl ErrorConfig {
    pub fn new(flips: Vec<bool>, weights: Vec<f64>) -> Result<Self> {
        if flips.len() != weights.len() {
            return Err(Error::SizeMismatch { expected: flips.len(), got: weights.len() });
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::InvalidParameter(format!("qubit weight {w} must be finite and non-negative")));
        }
        Ok(Self { flips, weights })
    }

    pub fn digital(flips: Vec<bool>) -> Self {
        let weights = vec![1.0; flips.len()];
        Self { flips, weights }
    }

    /// Replace the weights of boundary qubits by `weight`.
    pub fn set_boundary_weight(&mut self, graph: &CheckGraph, weight: f64) {
        for q in graph.boundary_qubits() {
            self.weights[q] = weight;
        }
    }
}

/// Sorted indices of checks with odd parity.
pub fn extract_syndrome<L: Lattice + ?Sized>(lattice: &L, flips: &[bool]) -> Result<Vec<usize>> {
    lattice.graph().syndrome(flips)
}

#[derive(Clone, Copy, PartialEq)]
struct Item(f64, usize);

impl Eq for Item {}
impl Ord for Item {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}
impl PartialOrd for Item {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

const NO_QUBIT: u32 = u32::MAX;

/// Shortest-path tree over checks. `pred[c]` is the qubit through which
/// check `c` was reached (NO_QUBIT at the sources or if unreached).
struct Tree {
    dist: Vec<f64>,
    pred: Vec<u32>,
}

fn other_end(g: &CheckGraph, q: usize, c: usize) -> usize {
    let [a, b] = g.endpoints(q);
    if a == c {
        b
    } else {
        a
    }
}

/// Dijkstra from `sources` (each with an initial distance and arrival
/// qubit). `stop(check, dist)` is called as each check is settled and
/// ends the search when it returns true.
fn dijkstra<F: FnMut(usize, f64) -> bool>(g: &CheckGraph, w: &[f64], sources: &[(usize, f64, u32)], mut stop: F) -> Tree {
    let n = g.num_checks();
    let mut dist = vec![f64::INFINITY; n];
    let mut pred = vec![NO_QUBIT; n];
    let mut heap = BinaryHeap::new();
    for &(c, d0, q) in sources {
        if d0 < dist[c] {
            dist[c] = d0;
            pred[c] = q;
            heap.push(Item(d0, c));
        }
    }
    while let Some(Item(d, c)) = heap.pop() {
        if d > dist[c] {
            continue;
        }
        if stop(c, d) {
            break;
        }
        for &q in g.check_qubits(c) {
            let nb = other_end(g, q, c);
            if nb == BOUNDARY {
                continue;
            }
            let nd = d + w[q];
            if nd < dist[nb] {
                dist[nb] = nd;
                pred[nb] = q as u32;
                heap.push(Item(nd, nb));
            }
        }
    }
    Tree { dist, pred }
}

/// Matching problem for one syndrome. Node `i < n` is defect `i`;
/// node `n + i` is its boundary partner (planar lattices only).
#[derive(Debug, Clone)]
pub struct MatchingGraph {
    pub defects: Vec<usize>,
    /// Distance from each defect to the open boundary (infinite without one).
    pub boundary_dist: Vec<f64>,
    /// Defect pairs (i < j) kept after pruning, with their distances.
    pub pairs: Vec<(usize, usize, f64)>,
    trees: Vec<Vec<u32>>,
    boundary_pred: Vec<u32>,
    has_boundary: bool,
}

impl MatchingGraph {
    pub fn num_defects(&self) -> usize {
        self.defects.len()
    }

    pub fn num_nodes(&self) -> usize {
        if self.has_boundary {
            2 * self.defects.len()
        } else {
            self.defects.len()
        }
    }

    pub fn has_boundary(&self) -> bool {
        self.has_boundary
    }

    /// Every weighted edge of the matching problem, as node pairs.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let n = self.defects.len();
        let mut e = self.pairs.clone();
        if self.has_boundary {
            for (i, &b) in self.boundary_dist.iter().enumerate() {
                e.push((i, n + i, b));
            }
            for &(i, j, _) in &self.pairs {
                e.push((n + i, n + j, 0.0));
            }
        }
        e
    }

    /// Qubits along the stored shortest path between defects `i < j`.
    pub fn pair_path(&self, g: &CheckGraph, i: usize, j: usize) -> Vec<usize> {
        let (src, dst) = (self.defects[i], self.defects[j]);
        let pred = &self.trees[i];
        let mut out = Vec::new();
        let mut c = dst;
        while c != src {
            let q = pred[c];
            debug_assert!(q != NO_QUBIT);
            out.push(q as usize);
            c = other_end(g, q as usize, c);
        }
        out
    }

    /// Qubits along the shortest path from defect `i` to the boundary.
    pub fn boundary_path(&self, g: &CheckGraph, i: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut c = self.defects[i];
        loop {
            let q = self.boundary_pred[c] as usize;
            out.push(q);
            c = other_end(g, q, c);
            if c == BOUNDARY {
                return out;
            }
        }
    }
}

/// Shortest paths between defects and to the boundary over the
/// qubit-weighted check graph.
///
/// A defect pair whose distance is not below the sum of their boundary
/// distances is dropped: sending both to the boundary is never worse, so
/// the optimum is unchanged.
pub fn build_matching_graph<L: Lattice + ?Sized>(lattice: &L, config: &ErrorConfig, defects: &[usize]) -> Result<MatchingGraph> {
    let g = lattice.graph();
    if config.weights.len() != g.num_qubits() {
        return Err(Error::SizeMismatch { expected: g.num_qubits(), got: config.weights.len() });
    }
    if config.weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(Error::InvalidParameter("qubit weights must be finite and non-negative".into()));
    }
    let w = &config.weights;
    let n = defects.len();
    let has_boundary = g.has_boundary();

    let (boundary_dist, boundary_pred) = if has_boundary {
        let sources: Vec<(usize, f64, u32)> = g
            .boundary_qubits()
            .map(|q| (g.endpoints(q)[0], w[q], q as u32))
            .collect();
        let t = dijkstra(g, w, &sources, |_, _| false);
        (defects.iter().map(|&c| t.dist[c]).collect::<Vec<_>>(), t.pred)
    } else {
        (vec![f64::INFINITY; n], Vec::new())
    };

    // Defects by decreasing boundary distance: the search from defect i
    // can stop once the popped distance reaches bd_i + bd_j for every
    // later defect j not yet settled.
    let mut by_bd: Vec<usize> = (0..n).collect();
    by_bd.sort_by(|&a, &b| boundary_dist[b].total_cmp(&boundary_dist[a]).then(a.cmp(&b)));
    let mut slot = vec![usize::MAX; g.num_checks()];
    for (i, &c) in defects.iter().enumerate() {
        slot[c] = i;
    }
    let mut seen = vec![usize::MAX; n];

    let mut pairs = Vec::new();
    let mut trees = Vec::with_capacity(n);
    for i in 0..n {
        let bd_i = boundary_dist[i];
        let mut k = 0;
        let mut remaining = n - i - 1;
        let t = dijkstra(g, w, &[(defects[i], 0.0, NO_QUBIT)], |c, d| {
            let j = slot[c];
            if j != usize::MAX && j > i && seen[j] != i {
                seen[j] = i;
                remaining -= 1;
            }
            if remaining == 0 {
                return true;
            }
            if has_boundary {
                while k < n && (by_bd[k] <= i || seen[by_bd[k]] == i) {
                    k += 1;
                }
                return d >= bd_i + boundary_dist[by_bd[k]];
            }
            false
        });
        for (j, &c) in defects.iter().enumerate().skip(i + 1) {
            let d = t.dist[c];
            if d.is_finite() && (!has_boundary || d < boundary_dist[i] + boundary_dist[j]) {
                pairs.push((i, j, d));
            }
        }
        trees.push(t.pred);
    }
    Ok(MatchingGraph { defects: defects.to_vec(), boundary_dist, pairs, trees, boundary_pred, has_boundary })
}

/// Pairs of matched nodes and their total weight.
#[derive(Debug, Clone, PartialEq)]
pub struct Matching {
    pub pairs: Vec<(usize, usize)>,
    pub weight: f64,
}

/// Integer weight steps per unit of real weight.
const WEIGHT_SCALE: f64 = (1u64 << 24) as f64;

/// Exact minimum-weight perfect matching on `n` nodes. Weights are
/// quantised to 2^-24; ties resolve deterministically.
pub fn min_weight_perfect_matching(n: usize, edges: &[(usize, usize, f64)]) -> Result<Matching> {
    if n % 2 == 1 {
        return Err(Error::Infeasible(format!("odd node count {n}")));
    }
    if n == 0 {
        return Ok(Matching { pairs: Vec::new(), weight: 0.0 });
    }
    let q: Vec<i64> = edges.iter().map(|e| (e.2 * WEIGHT_SCALE).round() as i64).collect();
    let top = q.iter().copied().max().unwrap_or(0) + 1;
    let ie: Vec<(usize, usize, i64)> = edges
        .iter()
        .zip(&q)
        .map(|(e, &w)| (e.0, e.1, 2 * (top - w)))
        .collect();
    let mate = blossom::max_weight_matching(n, &ie, true);
    let mut pairs = Vec::with_capacity(n / 2);
    for (v, m) in mate.iter().enumerate() {
        match m {
            Some(u) if v < *u => pairs.push((v, *u)),
            Some(_) => {}
            None => return Err(Error::Infeasible(format!("no perfect matching on {n} nodes"))),
        }
    }
    let mut best = std::collections::HashMap::new();
    for e in edges {
        let key = (e.0.min(e.1), e.0.max(e.1));
        let cur = best.entry(key).or_insert(f64::INFINITY);
        if e.2 < *cur {
            *cur = e.2;
        }
    }
    let weight = pairs.iter().map(|p| best[p]).sum();
    Ok(Matching { pairs, weight })
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Minimum-weight perfect matching of a matching graph. Connected
/// components are solved independently.
pub fn mwpm(graph: &MatchingGraph) -> Result<Matching> {
    let n = graph.num_defects();
    let mut parent: Vec<usize> = (0..n).collect();
    for &(i, j, _) in &graph.pairs {
        let (a, b) = (find(&mut parent, i), find(&mut parent, j));
        if a != b {
            parent[a.max(b)] = a.min(b);
        }
    }
    let mut comps: Vec<Vec<usize>> = Vec::new();
    let mut comp_of = vec![usize::MAX; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        if comp_of[r] == usize::MAX {
            comp_of[r] = comps.len();
            comps.push(Vec::new());
        }
        let c = comp_of[r];
        comp_of[i] = c;
        comps[c].push(i);
    }
    let mut local = vec![0usize; n];
    let mut comp_pairs: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); comps.len()];
    for &(i, j, d) in &graph.pairs {
        comp_pairs[comp_of[i]].push((i, j, d));
    }

    let mut out = Matching { pairs: Vec::new(), weight: 0.0 };
    for (members, cpairs) in comps.iter().zip(&comp_pairs) {
        if graph.has_boundary && members.len() == 1 {
            let i = members[0];
            out.pairs.push((i, n + i));
            out.weight += graph.boundary_dist[i];
            continue;
        }
        for (k, &i) in members.iter().enumerate() {
            local[i] = k;
        }
        let m = members.len();
        let mut edges: Vec<(usize, usize, f64)> = cpairs.iter().map(|&(i, j, d)| (local[i], local[j], d)).collect();
        if graph.has_boundary {
            for (k, &i) in members.iter().enumerate() {
                edges.push((k, m + k, graph.boundary_dist[i]));
            }
            for &(i, j, _) in cpairs {
                edges.push((m + local[i], m + local[j], 0.0));
            }
        }
        let nodes = if graph.has_boundary { 2 * m } else { m };
        let sub = min_weight_perfect_matching(nodes, &edges)?;
        let global = |x: usize| if x < m { members[x] } else { n + members[x - m] };
        for (a, b) in sub.pairs {
            out.pairs.push((global(a), global(b)));
        }
        out.weight += sub.weight;
    }
    out.pairs.sort_unstable();
    Ok(out)
}

/// Result of decoding one error configuration.
#[derive(Debug, Clone)]
pub struct Decoded {
    pub correction: Vec<bool>,
    pub failed: bool,
    pub defects: Vec<usize>,
    pub matching: Matching,
}

impl Decoded {
    /// Line-oriented trace: defects, matched pairs, corrected qubits.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "defects {}", self.defects.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(" "));
        for (a, b) in &self.matching.pairs {
            let _ = writeln!(s, "match {a} {b}");
        }
        let flips: Vec<String> = self
            .correction
            .iter()
            .enumerate()
            .filter(|(_, &f)| f)
            .map(|(q, _)| q.to_string())
            .collect();
        let _ = writeln!(s, "correction {}", flips.join(" "));
        let _ = writeln!(s, "failed {}", self.failed);
        s
    }
}

/// Decode one error configuration. In digital mode the stored weights
/// are ignored and every qubit costs 1.
pub fn decode<L: Lattice + ?Sized>(lattice: &L, config: &ErrorConfig, mode: Mode) -> Result<Decoded> {
    let g = lattice.graph();
    let digital;
    let cfg = match mode {
        Mode::Analog => config,
        Mode::Digital => {
            digital = ErrorConfig::digital(config.flips.clone());
            &digital
        }
    };
    let defects = extract_syndrome(lattice, &cfg.flips)?;
    let mg = build_matching_graph(lattice, cfg, &defects)?;
    let matching = mwpm(&mg)?;
    let n = mg.num_defects();
    let mut correction = vec![false; g.num_qubits()];
    for &(a, b) in &matching.pairs {
        let path = if a < n && b < n {
            mg.pair_path(g, a, b)
        } else if a < n && b == n + a {
            mg.boundary_path(g, a)
        } else {
            continue;
        };
        for q in path {
            correction[q] ^= true;
        }
    }
    let failed = logical_failure(lattice, &cfg.flips, &correction)?;
    Ok(Decoded { correction, failed, defects, matching })
}
