//! Postselected cluster factory: 3-trees, single-qubit-level correction of
//! the node, fusion into 5-trees and hexagons, and the per-node error
//! channels of the resulting cluster.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gkp_math::{e_tot_leading, p_incorrect, DEFAULT_WEIGHT_CAP};
use crate::noise::{beam_splitter_bell, bin_outcome, cnot, cz, postselected_measure, GkpQubit, PostselectResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    ThreeTree,
    CorrectedThreeTree,
    FourTree,
    FiveTree,
    Hexagon,
}

/// A tree cluster: one node qubit entangled with its leaves.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeState {
    pub node: GkpQubit,
    pub leaves: Vec<GkpQubit>,
    pub stage: Stage,
    /// Bit flips applied by misidentified feedforward so far.
    pub flips: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FuseResult {
    Accept(TreeState),
    Reject,
    /// Fusion without postselection; carries the number of misbinned
    /// outcomes.
    Deterministic(TreeState, u32),
}

impl FuseResult {
    pub fn tree(self) -> Option<TreeState> {
        match self {
            FuseResult::Accept(t) | FuseResult::Deterministic(t, _) => Some(t),
            FuseResult::Reject => None,
        }
    }
}

/// Node plus two leaves, all fresh, joined by two CZ gates.
pub fn build_three_tree<R: Rng + ?Sized>(sigma: f64, rng: &mut R) -> TreeState {
    let mut node = GkpQubit::fresh(sigma, rng);
    let mut leaves = Vec::with_capacity(2);
    for _ in 0..2 {
        let (n, l) = cz(node, GkpQubit::fresh(sigma, rng));
        node = n;
        leaves.push(l);
    }
    TreeState { node, leaves, stage: Stage::ThreeTree, flips: 0 }
}

/// Copy the node's p deviation onto a fresh ancilla with a CNOT, measure
/// the ancilla with postselection and displace the node by the measured
/// deviation. Resets the node's p variance to that of a fresh qubit.
pub fn single_qubit_qec<R: Rng + ?Sized>(tree: TreeState, v_up: f64, rng: &mut R) -> Result<Option<TreeState>> {
    if tree.stage != Stage::ThreeTree {
        return Err(Error::IncompatibleStages(format!("single-qubit correction needs a 3-tree, got {:?}", tree.stage)));
    }
    let sigma = tree.leaves.first().map_or(tree.node.var_q, |l| l.var_q).sqrt();
    let ancilla = GkpQubit::fresh(sigma, rng);
    let fresh_var = ancilla.var_p;
    let (anc, node) = cnot(ancilla, tree.node);
    match postselected_measure(anc.delta_p, anc.var_p, v_up) {
        PostselectResult::Reject => Ok(None),
        PostselectResult::Accept(m) => {
            // the node keeps the ancilla's deviation; an odd grid shift in
            // the displacement is a bit flip
            let node = GkpQubit { delta_p: node.delta_p + anc.delta_p, var_p: fresh_var, ..node };
            Ok(Some(TreeState {
                node,
                leaves: tree.leaves,
                stage: Stage::CorrectedThreeTree,
                flips: tree.flips + u32::from(m.bit),
            }))
        }
    }
}

fn advance(a: Stage, b: Stage) -> Option<(Stage, bool)> {
    // (result stage, whether b contributes its node)
    match (a, b) {
        (Stage::CorrectedThreeTree, Stage::ThreeTree) => Some((Stage::FourTree, true)),
        (Stage::FourTree, Stage::ThreeTree) => Some((Stage::FiveTree, true)),
        (Stage::FiveTree | Stage::Hexagon, Stage::FiveTree | Stage::Hexagon) => Some((Stage::Hexagon, false)),
        _ => None,
    }
}

/// Bell measurement between the last leaf of `a` and either the node of
/// `b` (growing a tree) or the last leaf of `b` (joining trees). With
/// `postselect` both outcomes must fall inside the shrunken window;
/// otherwise both are binned and misbinning is recorded as flips.
pub fn fuse<R: Rng + ?Sized>(mut a: TreeState, mut b: TreeState, postselect: bool, v_up: f64, _rng: &mut R) -> Result<FuseResult> {
    let Some((stage, with_node)) = advance(a.stage, b.stage) else {
        return Err(Error::IncompatibleStages(format!("cannot fuse {:?} with {:?}", a.stage, b.stage)));
    };
    let leaf = a.leaves.pop().ok_or_else(|| Error::IncompatibleStages("no free leaf".into()))?;
    let partner = if with_node {
        b.node
    } else {
        b.leaves.pop().ok_or_else(|| Error::IncompatibleStages("no free leaf".into()))?
    };
    let out = beam_splitter_bell(leaf, partner);
    let mut leaves = a.leaves;
    leaves.extend(b.leaves);
    let flips_before = a.flips + b.flips;
    if postselect {
        let r1 = postselected_measure(out.leaf_outcome, out.leaf_var, v_up);
        let r2 = postselected_measure(out.node_outcome, out.node_var, v_up);
        match (r1, r2) {
            (PostselectResult::Accept(m1), PostselectResult::Accept(m2)) => Ok(FuseResult::Accept(TreeState {
                node: a.node,
                leaves,
                stage,
                flips: flips_before + u32::from(m1.bit) + u32::from(m2.bit),
            })),
            _ => Ok(FuseResult::Reject),
        }
    } else {
        let f = u32::from(bin_outcome(out.leaf_outcome, out.leaf_var).bit)
            + u32::from(bin_outcome(out.node_outcome, out.node_var).bit);
        Ok(FuseResult::Deterministic(TreeState { node: a.node, leaves, stage, flips: flips_before + f }, f))
    }
}

/// A node joined to `degree` fresh neighbours by CZ gates alone.
pub fn cz_star<R: Rng + ?Sized>(sigma: f64, degree: usize, rng: &mut R) -> GkpQubit {
    let mut node = GkpQubit::fresh(sigma, rng);
    for _ in 0..degree {
        node = cz(node, GkpQubit::fresh(sigma, rng)).0;
    }
    node
}

/// Attempts and accepts of one nondeterministic step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCount {
    pub attempts: u64,
    pub accepts: u64,
}

impl StageCount {
    fn record(&mut self, ok: bool) {
        self.attempts += 1;
        self.accepts += u64::from(ok);
    }

    pub fn rate(&self) -> f64 {
        if self.attempts == 0 {
            f64::NAN
        } else {
            self.accepts as f64 / self.attempts as f64
        }
    }

    /// Binomial standard error of [`rate`](Self::rate) at probability `p`.
    pub fn standard_error(&self, p: f64) -> f64 {
        (p * (1.0 - p) / self.attempts as f64).sqrt()
    }

    fn merge(&mut self, o: &Self) {
        self.attempts += o.attempts;
        self.accepts += o.accepts;
    }
}

/// Consumption and per-step statistics of a factory run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactoryTally {
    pub sqec: StageCount,
    /// Postselected leaf–node fusions.
    pub bell: StageCount,
    /// Postselected leaf–leaf fusions.
    pub bell_ii: StageCount,
    /// Misbinned outcomes among accepted single-qubit corrections.
    pub sqec_flips: u64,
    /// Misbinned outcomes among accepted leaf–node fusions (two outcomes each).
    pub bell_flips: u64,
    /// Unpostselected leaf–leaf fusions and their misbinned outcomes.
    pub final_fusions: u64,
    pub final_flips: u64,
    pub three_trees_consumed: u64,
    pub five_trees_produced: u64,
    /// 5-trees consumed by finished hexagons.
    pub five_trees_consumed: u64,
    pub hexagons_produced: u64,
}

impl FactoryTally {
    pub fn merge(&mut self, o: &Self) {
        self.sqec.merge(&o.sqec);
        self.bell.merge(&o.bell);
        self.bell_ii.merge(&o.bell_ii);
        self.sqec_flips += o.sqec_flips;
        self.bell_flips += o.bell_flips;
        self.final_fusions += o.final_fusions;
        self.final_flips += o.final_flips;
        self.three_trees_consumed += o.three_trees_consumed;
        self.five_trees_produced += o.five_trees_produced;
        self.five_trees_consumed += o.five_trees_consumed;
        self.hexagons_produced += o.hexagons_produced;
    }

    pub fn three_trees_per_five_tree(&self) -> f64 {
        self.three_trees_consumed as f64 / self.five_trees_produced as f64
    }

    pub fn five_trees_per_hexagon(&self) -> f64 {
        self.five_trees_consumed as f64 / self.hexagons_produced as f64
    }

    pub fn three_trees_per_hexagon(&self) -> f64 {
        self.three_trees_consumed as f64 / self.hexagons_produced as f64
    }
}

/// Detach one leaf of `t` as a stand-alone cluster for a loop-closing
/// fusion.
fn split_leaf(t: &mut TreeState) -> TreeState {
    let leaf = t.leaves.pop().expect("cluster has a free leaf");
    TreeState { node: t.node, leaves: vec![leaf], stage: Stage::Hexagon, flips: 0 }
}

struct Factory<'r, R: Rng + ?Sized> {
    sigma: f64,
    v_up: f64,
    rng: &'r mut R,
    tally: FactoryTally,
}

impl<R: Rng + ?Sized> Factory<'_, R> {
    fn three_tree(&mut self) -> TreeState {
        self.tally.three_trees_consumed += 1;
        build_three_tree(self.sigma, self.rng)
    }

    fn refresh(&mut self, t: &mut TreeState) {
        t.node.resample(self.rng);
        for l in &mut t.leaves {
            l.resample(self.rng);
        }
    }

    fn corrected(&mut self) -> Result<TreeState> {
        loop {
            let t = self.three_tree();
            let out = single_qubit_qec(t, self.v_up, self.rng)?;
            self.tally.sqec.record(out.is_some());
            if let Some(t) = out {
                self.tally.sqec_flips += u64::from(t.flips);
                return Ok(t);
            }
        }
    }

    fn grow(&mut self, a: TreeState, b: TreeState) -> Result<Option<TreeState>> {
        let (mut a, mut b) = (a, b);
        self.refresh(&mut a);
        self.refresh(&mut b);
        let before = a.flips;
        let r = fuse(a, b, true, self.v_up, self.rng)?;
        let ok = matches!(r, FuseResult::Accept(_));
        self.tally.bell.record(ok);
        Ok(r.tree().inspect(|t| self.tally.bell_flips += u64::from(t.flips - before)))
    }

    /// One 5-tree. Both plain 3-trees are committed with the corrected one
    /// (the two fusions run side by side); a rejection discards all three.
    fn five_tree(&mut self) -> Result<TreeState> {
        loop {
            let c = self.corrected()?;
            let b1 = self.three_tree();
            let b2 = self.three_tree();
            let Some(four) = self.grow(c, b1)? else { continue };
            let Some(five) = self.grow(four, b2)? else { continue };
            self.tally.five_trees_produced += 1;
            return Ok(five);
        }
    }

    fn join(&mut self, a: TreeState, b: TreeState) -> Result<Option<TreeState>> {
        let (mut a, mut b) = (a, b);
        self.refresh(&mut a);
        self.refresh(&mut b);
        let r = fuse(a, b, true, self.v_up, self.rng)?;
        let ok = matches!(r, FuseResult::Accept(_));
        self.tally.bell_ii.record(ok);
        Ok(r.tree())
    }

    fn joins(&mut self, a: TreeState, b: TreeState, count: usize) -> Result<Option<TreeState>> {
        let mut cur = a;
        let mut other = Some(b);
        for _ in 0..count {
            // later fusions close a loop inside the joined cluster
            let partner = match other.take() {
                Some(b) => b,
                None => split_leaf(&mut cur),
            };
            match self.join(cur, partner)? {
                Some(t) => cur = t,
                None => return Ok(None),
            }
        }
        Ok(Some(cur))
    }

    /// Half ring: a partner 5-tree is kept while fresh 5-trees are tried
    /// against it with two leaf–leaf fusions.
    fn half_ring(&mut self) -> Result<(TreeState, u64)> {
        let mut used = 1u64;
        let partner = self.five_tree()?;
        loop {
            let t = self.five_tree()?;
            used += 1;
            if let Some(h) = self.joins(partner.clone(), t, 2)? {
                return Ok((h, used));
            }
        }
    }

    /// Two half rings closed by three leaf–leaf fusions; failure discards
    /// both halves.
    fn hexagon(&mut self) -> Result<TreeState> {
        let mut used = 0u64;
        loop {
            let (a, ua) = self.half_ring()?;
            let (b, ub) = self.half_ring()?;
            used += ua + ub;
            let mut a = a;
            let mut b = b;
            a.stage = Stage::Hexagon;
            b.stage = Stage::Hexagon;
            if let Some(h) = self.joins(a, b, 3)? {
                self.tally.five_trees_consumed += used;
                self.tally.hexagons_produced += 1;
                return Ok(h);
            }
        }
    }

    fn final_fusion(&mut self, h: TreeState) -> Result<()> {
        let mut a = h;
        let mut b = split_leaf(&mut a);
        self.refresh(&mut a);
        self.refresh(&mut b);
        if let FuseResult::Deterministic(_, f) = fuse(a, b, false, self.v_up, self.rng)? {
            self.tally.final_fusions += 1;
            self.tally.final_flips += u64::from(f);
        }
        Ok(())
    }
}

/// Produce `count` 5-trees and tally what they cost.
pub fn five_tree_run<R: Rng + ?Sized>(sigma: f64, v_up: f64, count: u64, rng: &mut R) -> Result<FactoryTally> {
    validate(sigma, v_up)?;
    let mut f = Factory { sigma, v_up, rng, tally: FactoryTally::default() };
    for _ in 0..count {
        f.five_tree()?;
    }
    Ok(f.tally)
}

/// Produce `target_hexagons` hexagons, each followed by one deterministic
/// leaf–leaf fusion, and tally what they cost.
///
/// Deviations of the qubits entering each fusion are redrawn at their
/// bookkept variances, so every step sees independent Gaussian noise.
pub fn factory_run<R: Rng + ?Sized>(sigma: f64, v_up: f64, target_hexagons: u64, rng: &mut R) -> Result<FactoryTally> {
    validate(sigma, v_up)?;
    if target_hexagons == 0 {
        return Err(Error::InvalidParameter("target_hexagons must be at least 1".into()));
    }
    let mut f = Factory { sigma, v_up, rng, tally: FactoryTally::default() };
    for _ in 0..target_hexagons {
        let h = f.hexagon()?;
        f.final_fusion(h)?;
    }
    Ok(f.tally)
}

fn validate(sigma: f64, v_up: f64) -> Result<()> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
    }
    if !(0.0..crate::gkp_math::HALF_SQRT_PI).contains(&v_up) {
        return Err(Error::InvalidParameter(format!("v_up must lie in [0, sqrt(pi)/2), got {v_up}")));
    }
    Ok(())
}

/// Source of bit errors on one node of the constructed cluster.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChannelKind {
    /// Gaussian deviation binned to a bit; the measured deviation is known.
    Gaussian { variance: f64 },
    /// Flip with a fixed probability and no accompanying deviation.
    Flip { probability: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NodeChannel {
    pub label: &'static str,
    pub kind: ChannelKind,
    pub analog_info: bool,
}

impl NodeChannel {
    pub fn flip_probability(&self) -> f64 {
        match self.kind {
            ChannelKind::Gaussian { variance } => p_incorrect(variance.sqrt()),
            ChannelKind::Flip { probability } => probability,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeChannelList {
    pub sigma: f64,
    pub v_up: f64,
    pub channels: Vec<NodeChannel>,
}

impl NodeChannelList {
    /// Sum of the channels' flip probabilities.
    pub fn total(&self) -> f64 {
        self.channels.iter().map(NodeChannel::flip_probability).sum()
    }

    /// Exact probability that an odd number of channels flip.
    pub fn net_flip_probability(&self) -> f64 {
        let prod: f64 = self.channels.iter().map(|c| 1.0 - 2.0 * c.flip_probability()).product();
        0.5 * (1.0 - prod)
    }

    /// Sample the node: net flip and the log-likelihood weight carried by
    /// the channels with analog information.
    pub fn sample<R: Rng + ?Sized>(&self, cap: f64, rng: &mut R) -> (bool, f64) {
        let mut flip = false;
        let mut t = 1.0f64;
        for c in &self.channels {
            match c.kind {
                ChannelKind::Gaussian { variance } => {
                    let s = variance.sqrt();
                    let m = bin_outcome(crate::noise::sample_deviation(s, rng), variance);
                    flip ^= m.flipped();
                    if c.analog_info {
                        t *= (0.5 * crate::gkp_math::edge_weight(m.delta_m, s, DEFAULT_WEIGHT_CAP)).tanh();
                    }
                }
                ChannelKind::Flip { probability } => {
                    flip ^= rng.gen::<f64>() < probability;
                }
            }
        }
        (flip, combine_llr(t, cap))
    }
}

/// Log-likelihood ratio of a parity given the product of tanh(L_k / 2).
fn combine_llr(tanh_product: f64, cap: f64) -> f64 {
    if tanh_product >= 1.0 {
        return cap;
    }
    (2.0 * tanh_product.atanh()).clamp(0.0, cap)
}

/// Channels whose XOR gives a node's bit error: its own deviation, the
/// two Bell measurements that attached it, and the residual errors of
/// the postselected steps (no deviation information survives those).
pub fn node_error_channels(sigma: f64, v_up: f64) -> Result<NodeChannelList> {
    let b = e_tot_leading(sigma, v_up)?;
    let var = sigma * sigma;
    let g = |label, variance| NodeChannel { label, kind: ChannelKind::Gaussian { variance }, analog_info: true };
    let f = |label, probability| NodeChannel { label, kind: ChannelKind::Flip { probability }, analog_info: false };
    Ok(NodeChannelList {
        sigma,
        v_up,
        channels: vec![
            g("intrinsic", var),
            g("bell_a", 3.0 * var),
            g("bell_b", 3.0 * var),
            f("single_qubit_qec", b.e_sqe),
            f("postselect_3", 6.0 * b.e_post_3),
            f("postselect_4", 2.0 * b.e_post_4),
        ],
    })
}
