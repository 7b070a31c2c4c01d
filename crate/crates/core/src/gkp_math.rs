//! Closed-form quantities for GKP qubits with Gaussian deviations.
//!
//! Everything here is a pure function of the deviation standard deviation
//! `sigma` (in units where the GKP grid spacing is `sqrt(pi)`) and, for
//! the postselected measurement, the upper-limit parameter `v_up`. The
//! Monte Carlo layers are checked against these values.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

pub const SQRT_PI: f64 = 1.772_453_850_905_516;
pub const HALF_SQRT_PI: f64 = 0.886_226_925_452_758;

/// Default clamp for analog matching weights, in natural-log units.
pub const DEFAULT_WEIGHT_CAP: f64 = 25.0;

/// Relative size below which a grid window's mass ends the lattice sum.
const WINDOW_SUM_CUTOFF: f64 = 1e-18;
const MAX_WINDOWS: usize = 100_000;

/// A squeezing level expressed both as a deviation standard deviation
/// and in decibels, related by `db = -10 log10(2 sigma^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SqueezingSpec {
    pub sigma: f64,
    pub squeezing_db: f64,
}

impl SqueezingSpec {
    pub fn from_db(squeezing_db: f64) -> Self {
        Self {
            sigma: sigma_from_db(squeezing_db),
            squeezing_db,
        }
    }

    pub fn from_sigma(sigma: f64) -> Self {
        Self {
            sigma,
            squeezing_db: db_from_variance(sigma * sigma),
        }
    }
}

pub fn sigma_from_db(squeezing_db: f64) -> f64 {
    (10f64.powf(-squeezing_db / 10.0) / 2.0).sqrt()
}

pub fn db_from_variance(variance: f64) -> f64 {
    -10.0 * (2.0 * variance).log10()
}

/// Probability mass of `N(0, sigma^2)` on `[a, b]`.
///
/// Tail-side differences go through `erfc` so that masses far from the
/// origin keep their relative precision.
pub fn gaussian_mass(a: f64, b: f64, sigma: f64) -> f64 {
    debug_assert!(a <= b);
    let s = sigma * std::f64::consts::SQRT_2;
    if a >= 0.0 {
        0.5 * (erfc(a / s) - erfc(b / s))
    } else if b <= 0.0 {
        0.5 * (erfc(-b / s) - erfc(-a / s))
    } else {
        1.0 - 0.5 * (erfc(-a / s) + erfc(b / s))
    }
}

pub fn gaussian_density(x: f64, sigma: f64) -> f64 {
    let var = sigma * sigma;
    (-x * x / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

/// Probability that a deviation drawn from `N(0, sigma^2)` lies within
/// `sqrt(pi)/2` of the origin, i.e. that the bit decision is correct.
pub fn p_correct(sigma: f64) -> f64 {
    assert!(sigma > 0.0, "p_correct requires sigma > 0, got {sigma}");
    1.0 - p_incorrect(sigma)
}

/// `1 - p_correct(sigma)`, evaluated directly from the tails so that values
/// near `1e-15` are not lost to cancellation.
pub fn p_incorrect(sigma: f64) -> f64 {
    assert!(sigma > 0.0, "p_incorrect requires sigma > 0, got {sigma}");
    erfc(HALF_SQRT_PI / (sigma * std::f64::consts::SQRT_2))
}

fn check_residual(delta_m: f64) {
    assert!(
        delta_m.abs() <= HALF_SQRT_PI + 1e-12,
        "residual deviation {delta_m} lies outside the fundamental cell"
    );
}

/// Likelihood that the bit decision was correct given residual `delta_m`.
pub fn likelihood_correct(delta_m: f64, sigma: f64) -> f64 {
    check_residual(delta_m);
    gaussian_density(delta_m.abs(), sigma)
}

/// Likelihood that the bit decision was wrong: the true deviation sits on
/// the far side of the neighbouring peak, `sqrt(pi) - |delta_m|` away.
pub fn likelihood_incorrect(delta_m: f64, sigma: f64) -> f64 {
    check_residual(delta_m);
    gaussian_density(SQRT_PI - delta_m.abs(), sigma)
}

/// Analog matching weight, the log-likelihood ratio
/// `ln[f(|delta_m|) / f(sqrt(pi) - |delta_m|)]` in its closed form
/// `(pi - 2 sqrt(pi) |delta_m|) / (2 sigma^2)`, clamped to `cap`.
pub fn edge_weight(delta_m: f64, sigma: f64, cap: f64) -> f64 {
    check_residual(delta_m);
    assert!(cap > 0.0, "weight cap must be positive");
    let raw = SQRT_PI * (HALF_SQRT_PI - delta_m.abs()) / (sigma * sigma);
    raw.max(0.0).min(cap)
}

/// Inputs of the postselected measurement: accept only when the residual
/// deviation lies within `sqrt(pi)/2 - v_up` of a grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PostselectParams {
    pub v_up: f64,
    pub sigma_sq: f64,
}

impl PostselectParams {
    pub fn new(v_up: f64, sigma_sq: f64) -> Result<Self> {
        if !(0.0..HALF_SQRT_PI).contains(&v_up) {
            return Err(Error::InvalidParameter(format!(
                "v_up must satisfy 0 <= v_up < sqrt(pi)/2, got {v_up}"
            )));
        }
        if !(sigma_sq > 0.0 && sigma_sq.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "variance must be positive and finite, got {sigma_sq}"
            )));
        }
        Ok(Self { v_up, sigma_sq })
    }

    /// Half-width of each acceptance window.
    pub fn half_window(&self) -> f64 {
        HALF_SQRT_PI - self.v_up
    }

    pub fn sigma(&self) -> f64 {
        self.sigma_sq.sqrt()
    }
}

/// Masses of the acceptance windows centred on even (`p_cor`) and odd
/// (`p_in`) multiples of `sqrt(pi)`.
pub fn postselect_probs(params: PostselectParams) -> (f64, f64) {
    let w = params.half_window();
    let sigma = params.sigma();
    let mut p_cor = gaussian_mass(-w, w, sigma);
    let mut p_in = 0.0;
    for n in 1..MAX_WINDOWS {
        let c = n as f64 * SQRT_PI;
        let term = 2.0 * gaussian_mass(c - w, c + w, sigma);
        if n % 2 == 0 {
            p_cor += term;
        } else {
            p_in += term;
        }
        if term < WINDOW_SUM_CUTOFF * (p_cor + p_in) {
            break;
        }
    }
    (p_cor, p_in)
}

/// Success probability of the postselected measurement.
pub fn p_suc(params: PostselectParams) -> f64 {
    let (c, i) = postselect_probs(params);
    c + i
}

/// Conditional probability of a wrong bit among accepted outcomes.
pub fn e_post(params: PostselectParams) -> Result<f64> {
    let (c, i) = postselect_probs(params);
    let total = c + i;
    if total <= 0.0 {
        return Err(Error::Degenerate(format!(
            "postselection never succeeds at variance {} and v_up {}",
            params.sigma_sq, params.v_up
        )));
    }
    Ok(i / total)
}

/// Leading-order unheralded error per node qubit of the constructed cluster.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorBudget {
    pub e_node: f64,
    pub e_sqe: f64,
    pub e_post_3: f64,
    pub e_post_4: f64,
    pub e_bell: f64,
    pub e_tot: f64,
}

impl ErrorBudget {
    pub fn from_parts(e_node: f64, e_sqe: f64, e_post_3: f64, e_post_4: f64, e_bell: f64) -> Self {
        let e_tot = e_node + e_sqe + 6.0 * e_post_3 + 2.0 * e_post_4 + 2.0 * e_bell;
        Self {
            e_node,
            e_sqe,
            e_post_3,
            e_post_4,
            e_bell,
            e_tot,
        }
    }
}

pub fn e_tot_leading(sigma: f64, v_up: f64) -> Result<ErrorBudget> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
    }
    let var = sigma * sigma;
    let e_post_3 = e_post(PostselectParams::new(v_up, 3.0 * var)?)?;
    let e_post_4 = e_post(PostselectParams::new(v_up, 4.0 * var)?)?;
    Ok(ErrorBudget::from_parts(
        p_incorrect(sigma),
        e_post_4,
        e_post_3,
        e_post_4,
        p_incorrect(3f64.sqrt() * sigma),
    ))
}

/// Squeezing level (dB) at which the leading-order budget reaches `target`.
pub fn required_squeezing_db(target_e_tot: f64, v_up: f64) -> Result<f64> {
    if !(target_e_tot > 0.0 && target_e_tot < 0.5) {
        return Err(Error::InvalidParameter(format!(
            "target error must lie in (0, 0.5), got {target_e_tot}"
        )));
    }
    // e_tot decreases with squeezing; bisect on dB.
    let (mut lo, mut hi) = (0.0f64, 40.0f64);
    let f = |db: f64| e_tot_leading(sigma_from_db(db), v_up).map(|b| b.e_tot - target_e_tot);
    if f(lo)? < 0.0 || f(hi)? > 0.0 {
        return Err(Error::Degenerate("target not bracketed in [0, 40] dB".into()));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Success probabilities of the nondeterministic steps and the expected
/// number of 3-tree cluster states they imply.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResourceEstimate {
    pub p_sqec: f64,
    pub p_bell: f64,
    pub p_bell_ii: f64,
    pub r_5tree: f64,
    pub r_hexa: f64,
    /// `r_hexa * r_5tree`, the hexagon cost counted in 3-trees when each
    /// unit in `r_hexa` is itself a 5-tree.
    pub r_hexa_total: f64,
}

impl ResourceEstimate {
    pub fn from_success(p_suc_3: f64, p_suc_4: f64) -> Result<Self> {
        if !(p_suc_3 > 0.0 && p_suc_4 > 0.0) {
            return Err(Error::Degenerate(format!(
                "zero success probability (p_suc(3s^2) = {p_suc_3}, p_suc(4s^2) = {p_suc_4})"
            )));
        }
        let p_sqec = p_suc_4;
        let p_bell = p_suc_3 * p_suc_4;
        let p_bell_ii = p_suc_3 * p_suc_3;
        let r_5tree = (1.0 / p_sqec + 2.0) / (p_bell * p_bell);
        let r_hexa = (1.0 / (p_bell_ii * p_bell_ii) + 1.0) * (2.0 / p_bell_ii.powi(3));
        Ok(Self {
            p_sqec,
            p_bell,
            p_bell_ii,
            r_5tree,
            r_hexa,
            r_hexa_total: r_hexa * r_5tree,
        })
    }
}

pub fn resources(sigma: f64, v_up: f64) -> Result<ResourceEstimate> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
    }
    let var = sigma * sigma;
    let p3 = p_suc(PostselectParams::new(v_up, 3.0 * var)?);
    let p4 = p_suc(PostselectParams::new(v_up, 4.0 * var)?);
    ResourceEstimate::from_success(p3, p4)
}
