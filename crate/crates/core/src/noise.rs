//! Deviation sampling, Gaussian gates and homodyne binning.
//!
//! A [`GkpQubit`] carries the true displacement of its state from the
//! nearest code word in each quadrature, plus the variance that the
//! gate rules attribute to that displacement. Gates act on both: the
//! sampled deviations follow the quadrature transformations and the
//! variances follow the corresponding sum rules, independent of what was
//! sampled.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::gkp_math::{HALF_SQRT_PI, SQRT_PI};

/// Per-trial random stream.
pub type TrialRng = ChaCha8Rng;

/// Stream for trial `index` under master seed `seed`. Streams for distinct
/// indices never overlap, so results do not depend on scheduling.
pub fn trial_rng(seed: u64, index: u64) -> TrialRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Quadrature {
    Q,
    P,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GkpQubit {
    pub delta_q: f64,
    pub delta_p: f64,
    pub var_q: f64,
    pub var_p: f64,
}

impl GkpQubit {
    /// A qubit with zero deviation and the given bookkept variance.
    pub fn ideal(var: f64) -> Self {
        Self {
            delta_q: 0.0,
            delta_p: 0.0,
            var_q: var,
            var_p: var,
        }
    }

    /// A freshly prepared qubit with deviations drawn from `N(0, sigma^2)`.
    pub fn fresh<R: Rng + ?Sized>(sigma: f64, rng: &mut R) -> Self {
        Self {
            delta_q: sample_deviation(sigma, rng),
            delta_p: sample_deviation(sigma, rng),
            var_q: sigma * sigma,
            var_p: sigma * sigma,
        }
    }

    /// Redraw both deviations independently at the bookkept variances.
    pub fn resample<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        self.delta_q = sample_deviation(self.var_q.sqrt(), rng);
        self.delta_p = sample_deviation(self.var_p.sqrt(), rng);
    }

    pub fn deviation(&self, quad: Quadrature) -> f64 {
        match quad {
            Quadrature::Q => self.delta_q,
            Quadrature::P => self.delta_p,
        }
    }

    pub fn variance(&self, quad: Quadrature) -> f64 {
        match quad {
            Quadrature::Q => self.var_q,
            Quadrature::P => self.var_p,
        }
    }
}

pub fn sample_deviation<R: Rng + ?Sized>(sigma: f64, rng: &mut R) -> f64 {
    debug_assert!(sigma >= 0.0);
    let z: f64 = rng.sample(StandardNormal);
    sigma * z
}

/// Random displacement channel adding variance `xi^2` to both quadratures.
pub fn gaussian_channel<R: Rng + ?Sized>(q: GkpQubit, xi: f64, rng: &mut R) -> GkpQubit {
    assert!(xi >= 0.0, "channel strength must be non-negative");
    GkpQubit {
        delta_q: q.delta_q + sample_deviation(xi, rng),
        delta_p: q.delta_p + sample_deviation(xi, rng),
        var_q: q.var_q + xi * xi,
        var_p: q.var_p + xi * xi,
    }
}

/// `exp(-i q_C q_T)`: each p deviation picks up minus the partner's q deviation.
pub fn cz(control: GkpQubit, target: GkpQubit) -> (GkpQubit, GkpQubit) {
    let c = GkpQubit {
        delta_p: control.delta_p - target.delta_q,
        var_p: control.var_p + target.var_q,
        ..control
    };
    let t = GkpQubit {
        delta_p: target.delta_p - control.delta_q,
        var_p: target.var_p + control.var_q,
        ..target
    };
    (c, t)
}

/// `exp(-i q_C p_T)`: the target's q gains the control's q, the control's p
/// loses the target's p.
pub fn cnot(control: GkpQubit, target: GkpQubit) -> (GkpQubit, GkpQubit) {
    let c = GkpQubit {
        delta_p: control.delta_p - target.delta_p,
        var_p: control.var_p + target.var_p,
        ..control
    };
    let t = GkpQubit {
        delta_q: target.delta_q + control.delta_q,
        var_q: target.var_q + control.var_q,
        ..target
    };
    (c, t)
}

/// Rescaled homodyne outcomes of a beam-splitter Bell measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BellOutcomes {
    /// `p_leaf + q_node`.
    pub leaf_outcome: f64,
    /// `q_leaf - p_node`.
    pub node_outcome: f64,
    pub leaf_var: f64,
    pub node_var: f64,
}

/// 50:50 beam splitter followed by homodyne detection of both output modes,
/// with outcomes rescaled by `sqrt(2)`.
///
/// The two detected combinations are `p_leaf + q_node` and
/// `q_leaf - p_node`; their variances are the sums of the contributing
/// quadrature variances (`3 s^2` and `4 s^2` for a leaf at `(s^2, 2 s^2)`
/// meeting a node at `(s^2, 3 s^2)`).
pub fn beam_splitter_bell(leaf: GkpQubit, node: GkpQubit) -> BellOutcomes {
    BellOutcomes {
        leaf_outcome: leaf.delta_p + node.delta_q,
        node_outcome: leaf.delta_q - node.delta_p,
        leaf_var: leaf.var_p + node.var_q,
        node_var: leaf.var_q + node.var_p,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasOutcome {
    pub bit: u8,
    pub delta_m: f64,
    pub var_used: f64,
    pub quadrature: Quadrature,
}

impl MeasOutcome {
    pub fn flipped(&self) -> bool {
        self.bit == 1
    }
}

/// Round a raw outcome to the nearest `sqrt(pi)` grid point. The bit is the
/// parity of the grid index and `delta_m` lies in `[-sqrt(pi)/2, sqrt(pi)/2)`.
pub fn bin_outcome(raw: f64, var_used: f64) -> MeasOutcome {
    let n = (raw / SQRT_PI + 0.5).floor();
    let delta_m = (raw - n * SQRT_PI).clamp(-HALF_SQRT_PI, HALF_SQRT_PI);
    MeasOutcome {
        bit: (n.rem_euclid(2.0)) as u8,
        delta_m,
        var_used,
        quadrature: Quadrature::P,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PostselectResult {
    Accept(MeasOutcome),
    Reject,
}

impl PostselectResult {
    pub fn accepted(&self) -> Option<&MeasOutcome> {
        match self {
            PostselectResult::Accept(m) => Some(m),
            PostselectResult::Reject => None,
        }
    }
}

/// Bin `raw` and keep it only if `|delta_m| <= sqrt(pi)/2 - v_up`.
pub fn postselected_measure(raw: f64, var_used: f64, v_up: f64) -> PostselectResult {
    assert!(
        (0.0..HALF_SQRT_PI).contains(&v_up),
        "v_up must satisfy 0 <= v_up < sqrt(pi)/2"
    );
    let m = bin_outcome(raw, var_used);
    if m.delta_m.abs() <= HALF_SQRT_PI - v_up {
        PostselectResult::Accept(m)
    } else {
        PostselectResult::Reject
    }
}
