//! Code lattices reduced to their check graphs.
//!
//! Only one error species is simulated. For that species every qubit
//! flips the parity of one or two checks, so a lattice is a graph whose
//! nodes are checks and whose edges are qubits; an edge with a single
//! check ends on the open (rough/primal) boundary. Logical failure is
//! witnessed by the parity of a residual error on a set of qubits that
//! cuts every homologically nontrivial chain an odd number of times.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Endpoint marker for qubits that touch the open boundary.
pub const BOUNDARY: usize = usize::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    /// Two opposite open boundaries; the others are closed.
    #[default]
    Planar,
    /// Periodic in every direction.
    Periodic,
}

impl std::str::FromStr for Boundary {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "planar" => Ok(Boundary::Planar),
            "periodic" => Ok(Boundary::Periodic),
            _ => Err(Error::Config(format!("unknown boundary '{s}' (planar | periodic)"))),
        }
    }
}

impl std::fmt::Display for Boundary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Boundary::Planar => "planar",
            Boundary::Periodic => "periodic",
        })
    }
}

/// Checks as nodes, qubits as edges.
#[derive(Debug, Clone)]
pub struct CheckGraph {
    qubit_checks: Vec<[usize; 2]>,
    check_qubits: Vec<Vec<usize>>,
    logical_cuts: Vec<Vec<usize>>,
    trivial_cycles: Vec<Vec<usize>>,
}

impl CheckGraph {
    fn new(
        num_checks: usize,
        qubit_checks: Vec<[usize; 2]>,
        logical_cuts: Vec<Vec<usize>>,
        trivial_cycles: Vec<Vec<usize>>,
    ) -> Self {
        let mut check_qubits = vec![Vec::new(); num_checks];
        for (q, ends) in qubit_checks.iter().enumerate() {
            for &c in ends {
                if c != BOUNDARY {
                    check_qubits[c].push(q);
                }
            }
        }
        Self {
            qubit_checks,
            check_qubits,
            logical_cuts,
            trivial_cycles,
        }
    }

    pub fn num_qubits(&self) -> usize {
        self.qubit_checks.len()
    }

    pub fn num_checks(&self) -> usize {
        self.check_qubits.len()
    }

    /// The (one or two) checks a qubit flips; the second is [`BOUNDARY`]
    /// for qubits on the open boundary.
    pub fn endpoints(&self, qubit: usize) -> [usize; 2] {
        self.qubit_checks[qubit]
    }

    pub fn check_qubits(&self, check: usize) -> &[usize] {
        &self.check_qubits[check]
    }

    pub fn has_boundary(&self) -> bool {
        self.qubit_checks.iter().any(|e| e[1] == BOUNDARY)
    }

    pub fn boundary_qubits(&self) -> impl Iterator<Item = usize> + '_ {
        self.qubit_checks
            .iter()
            .enumerate()
            .filter(|(_, e)| e[1] == BOUNDARY)
            .map(|(q, _)| q)
    }

    pub fn logical_cuts(&self) -> &[Vec<usize>] {
        &self.logical_cuts
    }

    /// Generators of the homologically trivial cycles (the stabilizers of
    /// the simulated error species).
    pub fn trivial_cycles(&self) -> &[Vec<usize>] {
        &self.trivial_cycles
    }

    fn check_len(&self, flips: &[bool]) -> Result<()> {
        if flips.len() != self.num_qubits() {
            return Err(Error::SizeMismatch {
                expected: self.num_qubits(),
                got: flips.len(),
            });
        }
        Ok(())
    }

    /// Sorted indices of checks with odd parity.
    pub fn syndrome(&self, flips: &[bool]) -> Result<Vec<usize>> {
        self.check_len(flips)?;
        let mut parity = vec![false; self.num_checks()];
        for (q, _) in flips.iter().enumerate().filter(|(_, &f)| f) {
            for &c in &self.qubit_checks[q] {
                if c != BOUNDARY {
                    parity[c] ^= true;
                }
            }
        }
        Ok(parity
            .iter()
            .enumerate()
            .filter(|(_, &p)| p)
            .map(|(c, _)| c)
            .collect())
    }

    /// Parity of `residual` on each logical cut.
    pub fn logical_parities(&self, residual: &[bool]) -> Vec<bool> {
        self.logical_cuts
            .iter()
            .map(|cut| cut.iter().filter(|&&q| residual[q]).count() % 2 == 1)
            .collect()
    }

    fn dump_into(&self, out: &mut String) {
        let _ = writeln!(out, "qubits {}", self.num_qubits());
        let _ = writeln!(out, "checks {}", self.num_checks());
        for (q, [a, b]) in self.qubit_checks.iter().enumerate() {
            let b = if *b == BOUNDARY { "B".to_string() } else { b.to_string() };
            let _ = writeln!(out, "qubit {q} {a} {b}");
        }
        for (c, qs) in self.check_qubits.iter().enumerate() {
            let _ = writeln!(out, "check {c} {}", join(qs));
        }
        for (i, cut) in self.logical_cuts.iter().enumerate() {
            let _ = writeln!(out, "logical {i} {}", join(cut));
        }
    }
}

fn join(xs: &[usize]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

/// Anything the decoder can run on.
pub trait Lattice: Send + Sync {
    fn distance(&self) -> usize;
    fn boundary(&self) -> Boundary;
    fn graph(&self) -> &CheckGraph;
    fn name(&self) -> &'static str;

    /// Plain-text adjacency listing: one line per qubit (its checks, `B`
    /// for the boundary), per check (its qubits) and per logical cut.
    fn dump(&self) -> String {
        let mut s = format!(
            "# lattice {} d={} boundary={}\n",
            self.name(),
            self.distance(),
            self.boundary()
        );
        self.graph().dump_into(&mut s);
        s
    }
}

/// Distance-`d` surface code in two dimensions with ideal syndromes.
///
/// With planar boundaries this is the rotated layout: `d^2` data qubits
/// on a square grid, weight-4 plaquettes in the bulk and weight-2
/// plaquettes on the edges. The decoding checks are the plaquettes whose
/// two-qubit boundary members lie on the top and bottom edges, so the
/// open boundaries are the left and right columns. With periodic
/// boundaries it is the toric code with `2 d^2` qubits on the edges of a
/// `d x d` torus.
#[derive(Debug, Clone)]
pub struct PlanarLattice {
    d: usize,
    boundary: Boundary,
    graph: CheckGraph,
    coords: Vec<(usize, usize)>,
}

impl PlanarLattice {
    pub fn coords(&self, qubit: usize) -> (usize, usize) {
        self.coords[qubit]
    }

    /// Decoding checks plus the checks of the other species.
    pub fn total_checks(&self) -> usize {
        self.graph.num_checks() + self.graph.trivial_cycles().len()
    }
}

impl Lattice for PlanarLattice {
    fn distance(&self) -> usize {
        self.d
    }
    fn boundary(&self) -> Boundary {
        self.boundary
    }
    fn graph(&self) -> &CheckGraph {
        &self.graph
    }
    fn name(&self) -> &'static str {
        "surface2d"
    }
}

pub fn build_planar(d: usize) -> Result<PlanarLattice> {
    build_planar_with(d, Boundary::Planar)
}

pub fn build_planar_with(d: usize, boundary: Boundary) -> Result<PlanarLattice> {
    if d < 3 {
        return Err(Error::LatticeSize { d, reason: "distance must be at least 3" });
    }
    match boundary {
        Boundary::Planar => {
            if d % 2 == 0 {
                return Err(Error::LatticeSize { d, reason: "planar distance must be odd" });
            }
            Ok(rotated(d))
        }
        Boundary::Periodic => Ok(toric(d)),
    }
}

fn rotated(d: usize) -> PlanarLattice {
    let qubit = |r: usize, c: usize| r * d + c;
    // Plaquette with top-left corner (i, j), i and j in -1..d, covers the
    // in-range qubits among (i, j), (i, j+1), (i+1, j), (i+1, j+1).
    let cover = |i: isize, j: isize| -> Vec<usize> {
        let mut qs = Vec::with_capacity(4);
        for (di, dj) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            let (r, c) = (i + di, j + dj);
            if r >= 0 && c >= 0 && (r as usize) < d && (c as usize) < d {
                qs.push(qubit(r as usize, c as usize));
            }
        }
        qs
    };
    let n = d as isize;
    let mut checks = Vec::new();
    let mut others = Vec::new();
    for i in -1..n {
        for j in -1..n {
            let bulk_i = (0..n - 1).contains(&i);
            let bulk_j = (0..n - 1).contains(&j);
            let even = (i + j).rem_euclid(2) == 0;
            if bulk_i && bulk_j {
                if even {
                    checks.push(cover(i, j));
                } else {
                    others.push(cover(i, j));
                }
            } else if bulk_j && (i == -1 || i == n - 1) && even {
                checks.push(cover(i, j));
            } else if bulk_i && (j == -1 || j == n - 1) && !even {
                others.push(cover(i, j));
            }
        }
    }
    let mut ends = vec![[BOUNDARY; 2]; d * d];
    for (c, qs) in checks.iter().enumerate() {
        for &q in qs {
            if ends[q][0] == BOUNDARY {
                ends[q][0] = c;
            } else {
                ends[q][1] = c;
            }
        }
    }
    let left = (0..d).map(|r| qubit(r, 0)).collect();
    let coords = (0..d * d).map(|q| (q / d, q % d)).collect();
    PlanarLattice {
        d,
        boundary: Boundary::Planar,
        graph: CheckGraph::new(checks.len(), ends, vec![left], others),
        coords,
    }
}

fn toric(d: usize) -> PlanarLattice {
    // Vertices (r, c) are the checks; qubit 2*(r*d+c) is the horizontal
    // edge to (r, c+1), qubit 2*(r*d+c)+1 the vertical edge to (r+1, c).
    let v = |r: usize, c: usize| (r % d) * d + (c % d);
    let mut ends = Vec::with_capacity(2 * d * d);
    let mut coords = Vec::with_capacity(2 * d * d);
    for r in 0..d {
        for c in 0..d {
            ends.push([v(r, c), v(r, c + 1)]);
            ends.push([v(r, c), v(r + 1, c)]);
            coords.push((2 * r, 2 * c + 1));
            coords.push((2 * r + 1, 2 * c));
        }
    }
    let h = |r: usize, c: usize| 2 * v(r, c);
    let vert = |r: usize, c: usize| 2 * v(r, c) + 1;
    let cut_h = (0..d).map(|r| h(r, d - 1)).collect();
    let cut_v = (0..d).map(|c| vert(d - 1, c)).collect();
    let plaquettes = (0..d)
        .flat_map(|r| (0..d).map(move |c| (r, c)))
        .map(|(r, c)| vec![h(r, c), h(r + 1, c), vert(r, c), vert(r, c + 1)])
        .collect();
    PlanarLattice {
        d,
        boundary: Boundary::Periodic,
        graph: CheckGraph::new(d * d, ends, vec![cut_h, cut_v], plaquettes),
        coords,
    }
}

/// Space-time lattice of primal cells for the topological cluster state.
///
/// Each cell is a primal cube whose six face qubits must have even parity
/// when error free; each face qubit is shared by the two cells it
/// separates. With planar boundaries there are `d - 1` cells along `x`
/// and `d` along `y` and `z`; faces normal to `x` at both ends of the
/// lattice open onto the primal boundary, and the correlation surface is
/// the plane of boundary faces at `x = 0`. With periodic boundaries there
/// are `d` cells in each direction and one correlation surface per axis.
#[derive(Debug, Clone)]
pub struct CellLattice3D {
    d: usize,
    boundary: Boundary,
    dims: [usize; 3],
    graph: CheckGraph,
}

impl CellLattice3D {
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn cell_index(&self, x: usize, y: usize, z: usize) -> usize {
        (x * self.dims[1] + y) * self.dims[2] + z
    }

    pub fn num_cells(&self) -> usize {
        self.graph.num_checks()
    }
}

impl Lattice for CellLattice3D {
    fn distance(&self) -> usize {
        self.d
    }
    fn boundary(&self) -> Boundary {
        self.boundary
    }
    fn graph(&self) -> &CheckGraph {
        &self.graph
    }
    fn name(&self) -> &'static str {
        "cells3d"
    }
}

pub fn build_cell_lattice(d: usize) -> Result<CellLattice3D> {
    build_cell_lattice_with(d, Boundary::Planar)
}

pub fn build_cell_lattice_with(d: usize, boundary: Boundary) -> Result<CellLattice3D> {
    if d < 3 {
        return Err(Error::LatticeSize { d, reason: "distance must be at least 3" });
    }
    let periodic = boundary == Boundary::Periodic;
    let dims = if periodic { [d, d, d] } else { [d - 1, d, d] };
    let num_cells: usize = dims.iter().product();
    let cell = |p: [usize; 3]| (p[0] * dims[1] + p[1]) * dims[2] + p[2];
    let next = |p: [usize; 3], axis: usize| -> Option<[usize; 3]> {
        let mut q = p;
        if p[axis] + 1 < dims[axis] {
            q[axis] += 1;
        } else if periodic {
            q[axis] = 0;
        } else {
            return None;
        }
        Some(q)
    };

    // plus[cell][axis]: face between a cell and its +axis neighbour, or
    // the open face at the high-x end. low_x[cell]: open face at x = 0.
    let mut ends: Vec<[usize; 2]> = Vec::new();
    let mut plus = vec![[BOUNDARY; 3]; num_cells];
    let mut low_x = vec![BOUNDARY; num_cells];
    let mut cuts = vec![Vec::new(); if periodic { 3 } else { 1 }];
    for x in 0..dims[0] {
        for y in 0..dims[1] {
            for z in 0..dims[2] {
                let p = [x, y, z];
                let here = cell(p);
                if x == 0 && !periodic {
                    low_x[here] = ends.len();
                    cuts[0].push(ends.len());
                    ends.push([here, BOUNDARY]);
                }
                for axis in 0..3 {
                    match next(p, axis) {
                        Some(q) => {
                            if periodic && q[axis] == 0 {
                                cuts[axis].push(ends.len());
                            }
                            plus[here][axis] = ends.len();
                            ends.push([here, cell(q)]);
                        }
                        None if axis == 0 => {
                            plus[here][0] = ends.len();
                            ends.push([here, BOUNDARY]);
                        }
                        None => {}
                    }
                }
            }
        }
    }

    // Trivial cycles: four faces around each primal edge, and three-face
    // loops closed through the open boundary.
    let mut cycles = Vec::new();
    for x in 0..dims[0] {
        for y in 0..dims[1] {
            for z in 0..dims[2] {
                let p = [x, y, z];
                for a in 0..3 {
                    for b in (a + 1)..3 {
                        let (Some(pa), Some(pb)) = (next(p, a), next(p, b)) else { continue };
                        cycles.push(vec![plus[cell(p)][a], plus[cell(pa)][b], plus[cell(pb)][a], plus[cell(p)][b]]);
                    }
                }
                if !periodic {
                    for b in 1..3 {
                        let Some(pb) = next(p, b) else { continue };
                        if x == 0 {
                            cycles.push(vec![low_x[cell(p)], low_x[cell(pb)], plus[cell(p)][b]]);
                        }
                        if x + 1 == dims[0] {
                            cycles.push(vec![plus[cell(p)][0], plus[cell(pb)][0], plus[cell(p)][b]]);
                        }
                    }
                }
            }
        }
    }

    Ok(CellLattice3D {
        d,
        boundary,
        dims,
        graph: CheckGraph::new(num_cells, ends, cuts, cycles),
    })
}

/// Whether `flips ^ correction` is a nontrivial logical operator.
pub fn logical_failure<L: Lattice + ?Sized>(lattice: &L, flips: &[bool], correction: &[bool]) -> Result<bool> {
    let g = lattice.graph();
    if correction.len() != flips.len() {
        return Err(Error::SizeMismatch {
            expected: flips.len(),
            got: correction.len(),
        });
    }
    let residual: Vec<bool> = flips.iter().zip(correction).map(|(a, b)| a ^ b).collect();
    let defects = g.syndrome(&residual)?;
    if !defects.is_empty() {
        return Err(Error::ResidualSyndrome(defects.len()));
    }
    Ok(g.logical_parities(&residual).into_iter().any(|p| p))
}
