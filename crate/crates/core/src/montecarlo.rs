//! Trial engines, logical error rates and threshold fits.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, Matrix4};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::construction::{node_error_channels, NodeChannelList};
use crate::decoder::{decode, BoundaryWeights, ErrorConfig, Mode};
use crate::error::{Error, Result};
use crate::gkp_math::{edge_weight, p_incorrect, DEFAULT_WEIGHT_CAP, SQRT_PI};
use crate::lattice::{build_cell_lattice_with, build_planar_with, Boundary, Lattice};
use crate::noise::{bin_outcome, sample_deviation, trial_rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseModel {
    /// 2D code, Gaussian noise on data qubits, perfect syndromes.
    CodeCapacity,
    /// 3D cluster, Gaussian noise on every measured qubit.
    Phenomenological,
    /// 3D cluster, node noise from the postselected construction.
    Construction,
}

impl std::str::FromStr for NoiseModel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "code_capacity" | "code-capacity" => Ok(NoiseModel::CodeCapacity),
            "phenomenological" => Ok(NoiseModel::Phenomenological),
            "construction" => Ok(NoiseModel::Construction),
            _ => Err(Error::Config(format!(
                "unknown model '{s}' (code_capacity | phenomenological | construction)"
            ))),
        }
    }
}

impl std::fmt::Display for NoiseModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NoiseModel::CodeCapacity => "code_capacity",
            NoiseModel::Phenomenological => "phenomenological",
            NoiseModel::Construction => "construction",
        })
    }
}

/// Everything needed to reproduce one (model, d, sigma, mode) point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialPlan {
    pub model: NoiseModel,
    pub d: usize,
    pub sigma: f64,
    pub v_up: f64,
    pub mode: Mode,
    pub trials: u64,
    pub seed: u64,
    pub boundary: Boundary,
    pub weight_cap: f64,
    pub boundary_weights: BoundaryWeights,
}

impl TrialPlan {
    pub fn new(model: NoiseModel, d: usize, sigma: f64, mode: Mode, trials: u64, seed: u64) -> Self {
        Self {
            model,
            d,
            sigma,
            v_up: 2.0 * SQRT_PI / 5.0,
            mode,
            trials,
            seed,
            boundary: Boundary::Planar,
            weight_cap: DEFAULT_WEIGHT_CAP,
            boundary_weights: BoundaryWeights::Analog,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidParameter("trials must be at least 1".into()));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !(self.weight_cap > 0.0) {
            return Err(Error::InvalidParameter(format!("weight cap must be positive, got {}", self.weight_cap)));
        }
        if self.model == NoiseModel::Construction && !(0.0..SQRT_PI / 2.0).contains(&self.v_up) {
            return Err(Error::InvalidParameter(format!("v_up must lie in [0, sqrt(pi)/2), got {}", self.v_up)));
        }
        Ok(())
    }
}

/// Logical error rate at one point with its 95% Wilson interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub plan: TrialPlan,
    pub failures: u64,
    pub p_logical: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl RatePoint {
    pub fn from_counts(plan: TrialPlan, failures: u64) -> Self {
        let (ci_low, ci_high) = confidence_interval(failures, plan.trials);
        Self { p_logical: failures as f64 / plan.trials as f64, failures, ci_low, ci_high, plan }
    }
}

const Z95: f64 = 1.959_963_984_540_054;

/// Wilson score 95% interval for a binomial proportion.
pub fn confidence_interval(failures: u64, trials: u64) -> (f64, f64) {
    assert!(failures <= trials && trials > 0, "need 0 <= failures <= trials, trials > 0");
    let n = trials as f64;
    let p = failures as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = if failures == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if failures == trials { 1.0 } else { (center + half).min(1.0) };
    (lo, hi)
}

/// Per-qubit noise source for a model.
enum Sampler {
    Gaussian { sigma: f64, prior: f64 },
    Channels { list: NodeChannelList, prior: f64 },
}

fn prior_weight(p: f64, cap: f64) -> f64 {
    if p <= 0.0 {
        cap
    } else {
        ((1.0 - p) / p).ln().clamp(0.0, cap)
    }
}

impl Sampler {
    fn new(plan: &TrialPlan) -> Result<Self> {
        Ok(match plan.model {
            NoiseModel::CodeCapacity | NoiseModel::Phenomenological => Sampler::Gaussian {
                sigma: plan.sigma,
                prior: prior_weight(p_incorrect(plan.sigma), plan.weight_cap),
            },
            NoiseModel::Construction => {
                let list = node_error_channels(plan.sigma, plan.v_up)?;
                let prior = prior_weight(list.net_flip_probability(), plan.weight_cap);
                Sampler::Channels { list, prior }
            }
        })
    }

    fn prior(&self) -> f64 {
        match self {
            Sampler::Gaussian { prior, .. } | Sampler::Channels { prior, .. } => *prior,
        }
    }

    fn sample<R: rand::Rng + ?Sized>(&self, cap: f64, rng: &mut R) -> (bool, f64) {
        match self {
            Sampler::Gaussian { sigma, .. } => {
                let m = bin_outcome(sample_deviation(*sigma, rng), sigma * sigma);
                (m.flipped(), edge_weight(m.delta_m, *sigma, cap))
            }
            Sampler::Channels { list, .. } => list.sample(cap, rng),
        }
    }
}

fn build_lattice(plan: &TrialPlan) -> Result<Box<dyn Lattice>> {
    Ok(match plan.model {
        NoiseModel::CodeCapacity => Box::new(build_planar_with(plan.d, plan.boundary)?),
        NoiseModel::Phenomenological | NoiseModel::Construction => {
            Box::new(build_cell_lattice_with(plan.d, plan.boundary)?)
        }
    })
}

/// Draw the error configuration of trial `index`.
pub fn sample_trial(plan: &TrialPlan, lattice: &dyn Lattice, index: u64) -> Result<ErrorConfig> {
    let sampler = Sampler::new(plan)?;
    Ok(sample_with(plan, &sampler, lattice, index))
}

fn sample_with(plan: &TrialPlan, sampler: &Sampler, lattice: &dyn Lattice, index: u64) -> ErrorConfig {
    let g = lattice.graph();
    let mut rng = trial_rng(plan.seed, index);
    let (flips, weights): (Vec<bool>, Vec<f64>) =
        (0..g.num_qubits()).map(|_| sampler.sample(plan.weight_cap, &mut rng)).unzip();
    let mut cfg = ErrorConfig { flips, weights };
    if plan.boundary_weights == BoundaryWeights::Uniform {
        cfg.set_boundary_weight(g, sampler.prior());
    }
    cfg
}

/// Run every trial of a plan. Trial `i` draws from its own stream, so the
/// failure count does not depend on how trials are scheduled.
pub fn run_plan(plan: &TrialPlan) -> Result<RatePoint> {
    plan.validate()?;
    let lattice = build_lattice(plan)?;
    let sampler = Sampler::new(plan)?;
    let lattice: &dyn Lattice = lattice.as_ref();
    let failures = (0..plan.trials)
        .into_par_iter()
        .map(|i| {
            let cfg = sample_with(plan, &sampler, lattice, i);
            decode(lattice, &cfg, plan.mode).map(|d| u64::from(d.failed))
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    Ok(RatePoint::from_counts(plan.clone(), failures))
}

fn run_model(plan: &TrialPlan, model: NoiseModel) -> Result<RatePoint> {
    if plan.model != model {
        return Err(Error::InvalidParameter(format!("plan is for {}, not {model}", plan.model)));
    }
    run_plan(plan)
}

pub fn run_code_capacity(plan: &TrialPlan) -> Result<RatePoint> {
    run_model(plan, NoiseModel::CodeCapacity)
}

pub fn run_phenomenological(plan: &TrialPlan) -> Result<RatePoint> {
    run_model(plan, NoiseModel::Phenomenological)
}

pub fn run_construction(plan: &TrialPlan) -> Result<RatePoint> {
    run_model(plan, NoiseModel::Construction)
}

/// Every combination of distance and sigma for one template plan.
pub fn sweep(template: &TrialPlan, distances: &[usize], sigmas: &[f64]) -> Result<Vec<RatePoint>> {
    let mut out = Vec::with_capacity(distances.len() * sigmas.len());
    for &d in distances {
        for &s in sigmas {
            out.push(run_plan(&TrialPlan { d, sigma: s, ..template.clone() })?);
        }
    }
    Ok(out)
}

/// Sigma at which the curves of two distances cross, by linear
/// interpolation between neighbouring grid points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    pub d_small: usize,
    pub d_large: usize,
    pub sigma: Option<f64>,
}

/// Fit of `P = A + B (sigma - sigma_th) d^(1/nu)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub a: f64,
    pub b: f64,
    pub sigma_th: f64,
    pub nu: f64,
    pub residual: f64,
    pub converged: bool,
    /// Standard error of `sigma_th` from the linearised least-squares
    /// covariance.
    pub sigma_th_se: f64,
    pub iterations: usize,
    pub crossings: Vec<Crossing>,
}

impl FitResult {
    /// 95% interval on the threshold.
    pub fn sigma_th_ci(&self) -> (f64, f64) {
        (self.sigma_th - Z95 * self.sigma_th_se, self.sigma_th + Z95 * self.sigma_th_se)
    }
}

struct FitData {
    sigma: Vec<f64>,
    d: Vec<f64>,
    p: Vec<f64>,
}

impl FitData {
    fn design(&self, sigma_th: f64, nu: f64) -> DMatrix<f64> {
        DMatrix::from_fn(self.p.len(), 2, |i, j| {
            if j == 0 {
                1.0
            } else {
                (self.sigma[i] - sigma_th) * self.d[i].powf(1.0 / nu)
            }
        })
    }

    /// Best (A, B) and the residual sum of squares for fixed (sigma_th, nu).
    fn linear(&self, sigma_th: f64, nu: f64) -> (f64, f64, f64) {
        let x = self.design(sigma_th, nu);
        let y = DVector::from_column_slice(&self.p);
        let Ok(coef) = x.clone().svd(true, true).solve(&y, 1e-14) else {
            return (f64::NAN, f64::NAN, f64::INFINITY);
        };
        let r = &y - &x * &coef;
        (coef[0], coef[1], r.norm_squared())
    }

    fn cost(&self, th: f64, log_nu: f64) -> f64 {
        let nu = log_nu.exp();
        if !nu.is_finite() || nu <= 0.0 {
            return f64::INFINITY;
        }
        let c = self.linear(th, nu).2;
        if c.is_finite() {
            c
        } else {
            f64::INFINITY
        }
    }
}

const FIT_TOL: f64 = 1e-8;
const FIT_MAX_ITERS: usize = 20_000;

/// Nelder–Mead on a 2-parameter cost. Stops when every simplex vertex
/// lies within `FIT_TOL` of the best one in each coordinate.
fn nelder_mead<F: Fn(f64, f64) -> f64>(f: F, start: [f64; 2], step: [f64; 2]) -> ([f64; 2], f64, usize, bool) {
    let mut s: Vec<([f64; 2], f64)> = vec![
        start,
        [start[0] + step[0], start[1]],
        [start[0], start[1] + step[1]],
    ]
    .into_iter()
    .map(|p| (p, f(p[0], p[1])))
    .collect();
    let eval = |p: [f64; 2]| (p, f(p[0], p[1]));
    for it in 0..FIT_MAX_ITERS {
        s.sort_by(|a, b| a.1.total_cmp(&b.1));
        let spread = (1..3).map(|k| (0..2).map(|c| (s[k].0[c] - s[0].0[c]).abs()).fold(0.0, f64::max)).fold(0.0, f64::max);
        if spread < FIT_TOL {
            return (s[0].0, s[0].1, it, true);
        }
        let c = [(s[0].0[0] + s[1].0[0]) / 2.0, (s[0].0[1] + s[1].0[1]) / 2.0];
        let at = |t: f64| [c[0] + t * (s[2].0[0] - c[0]), c[1] + t * (s[2].0[1] - c[1])];
        let r = eval(at(-1.0));
        if r.1 < s[0].1 {
            let e = eval(at(-2.0));
            s[2] = if e.1 < r.1 { e } else { r };
        } else if r.1 < s[1].1 {
            s[2] = r;
        } else {
            let k = if r.1 < s[2].1 { eval(at(-0.5)) } else { eval(at(0.5)) };
            if k.1 < s[2].1.min(r.1) {
                s[2] = k;
            } else {
                let b = s[0].0;
                for v in s.iter_mut().skip(1) {
                    *v = eval([b[0] + 0.5 * (v.0[0] - b[0]), b[1] + 0.5 * (v.0[1] - b[1])]);
                }
            }
        }
    }
    s.sort_by(|a, b| a.1.total_cmp(&b.1));
    (s[0].0, s[0].1, FIT_MAX_ITERS, false)
}

fn crossings(points: &[RatePoint]) -> Vec<Crossing> {
    let mut by_d: BTreeMap<usize, BTreeMap<u64, f64>> = BTreeMap::new();
    for p in points {
        by_d.entry(p.plan.d).or_default().insert(p.plan.sigma.to_bits(), p.p_logical);
    }
    let ds: Vec<usize> = by_d.keys().copied().collect();
    let mut out = Vec::new();
    for (i, &d1) in ds.iter().enumerate() {
        for &d2 in &ds[i + 1..] {
            let mut common: Vec<(f64, f64)> = by_d[&d1]
                .iter()
                .filter_map(|(k, p1)| by_d[&d2].get(k).map(|p2| (f64::from_bits(*k), p2 - p1)))
                .collect();
            common.sort_by(|a, b| a.0.total_cmp(&b.0));
            let sigma = common.windows(2).find(|w| w[0].1 < 0.0 && w[1].1 >= 0.0).map(|w| {
                let (s0, g0) = w[0];
                let (s1, g1) = w[1];
                s0 + (s1 - s0) * (-g0) / (g1 - g0)
            });
            out.push(Crossing { d_small: d1, d_large: d2, sigma });
        }
    }
    out
}

/// Least-squares fit of the finite-size scaling form: (A, B) solved
/// linearly, (sigma_th, nu) by a grid search refined with Nelder–Mead.
pub fn fit_threshold(points: &[RatePoint]) -> Result<FitResult> {
    let mut by_d: BTreeMap<usize, usize> = BTreeMap::new();
    for p in points {
        *by_d.entry(p.plan.d).or_default() += 1;
    }
    if by_d.len() < 3 {
        return Err(Error::Fit(format!("need at least 3 distances, got {}", by_d.len())));
    }
    if let Some((d, n)) = by_d.iter().find(|(_, &n)| n < 4) {
        return Err(Error::Fit(format!("distance {d} has {n} sigma values, need at least 4")));
    }
    let data = FitData {
        sigma: points.iter().map(|p| p.plan.sigma).collect(),
        d: points.iter().map(|p| p.plan.d as f64).collect(),
        p: points.iter().map(|p| p.p_logical).collect(),
    };
    let lo = data.sigma.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = data.sigma.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;

    let mut best = (f64::INFINITY, [lo, 0.0]);
    for i in 0..=40 {
        let th = lo + span * i as f64 / 40.0;
        for j in 0..=24 {
            let log_nu = (0.3f64).ln() + (5.0f64 / 0.3).ln() * j as f64 / 24.0;
            let c = data.cost(th, log_nu);
            if c < best.0 {
                best = (c, [th, log_nu]);
            }
        }
    }
    let (x, residual, iterations, tol_met) =
        nelder_mead(|a, b| data.cost(a, b), best.1, [span / 20.0, 0.1]);
    let (sigma_th, nu) = (x[0], x[1].exp());
    let (a, b, _) = data.linear(sigma_th, nu);
    let converged = tol_met && residual.is_finite() && sigma_th >= lo && sigma_th <= hi;
    let sigma_th_se = threshold_se(&data, b, sigma_th, nu, residual);
    Ok(FitResult { a, b, sigma_th, nu, residual, converged, sigma_th_se, iterations, crossings: crossings(points) })
}

/// Fit restricted to the region where the linear scaling form holds.
///
/// The centre is the median pairwise crossing, or the all-points fit when
/// no pair crosses. A first fit on the `keep` grid values nearest the
/// centre gives the exponent. The final fit then takes, for every
/// distance, the points inside one window of the scaled variable
/// `(sigma - centre) d^(1/nu)`: the window spans the 4 points nearest the
/// centre at the largest distance. Equal scaled windows stop the curvature
/// of the data from pulling the larger distances up, which biases a
/// common sigma window low. Falls back to the first fit if the second one
/// does not converge. Crossings are reported for the full data.
pub fn fit_threshold_near_crossing(points: &[RatePoint], keep: usize) -> Result<FitResult> {
    const PER_D: usize = 4;
    if keep < PER_D {
        return Err(Error::Fit(format!("need at least {PER_D} sigma values, asked for {keep}")));
    }
    let all = crossings(points);
    let mut found: Vec<f64> = all.iter().filter_map(|c| c.sigma).collect();
    found.sort_by(f64::total_cmp);
    let centre = match found.len() {
        0 => fit_threshold(points)?.sigma_th,
        n if n % 2 == 1 => found[n / 2],
        n => 0.5 * (found[n / 2 - 1] + found[n / 2]),
    };
    let mut grid: Vec<f64> = points.iter().map(|p| p.plan.sigma).collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    grid.sort_by(|a, b| (a - centre).abs().total_cmp(&(b - centre).abs()));
    grid.truncate(keep);
    let near: Vec<RatePoint> = points.iter().filter(|p| grid.contains(&p.plan.sigma)).cloned().collect();
    let mut first = fit_threshold(&near)?;
    first.crossings = all.clone();

    let scaled = |p: &RatePoint| ((p.plan.sigma - centre) * (p.plan.d as f64).powf(1.0 / first.nu)).abs();
    let mut by_d: BTreeMap<usize, Vec<&RatePoint>> = BTreeMap::new();
    for p in points {
        by_d.entry(p.plan.d).or_default().push(p);
    }
    for v in by_d.values_mut() {
        v.sort_by(|a, b| scaled(a).total_cmp(&scaled(b)));
    }
    let Some(largest) = by_d.values().next_back().filter(|v| v.len() >= PER_D) else {
        return Ok(first);
    };
    let limit = scaled(largest[PER_D - 1]) * (1.0 + 1e-9);
    let window: Vec<RatePoint> = by_d
        .values()
        .flat_map(|v| {
            let n = v.iter().filter(|p| scaled(p) <= limit).count().max(PER_D);
            v.iter().take(n).map(|p| (*p).clone())
        })
        .collect();
    match fit_threshold(&window) {
        Ok(mut f) if f.converged => {
            f.crossings = all;
            Ok(f)
        }
        _ => Ok(first),
    }
}

/// Linearised standard error of sigma_th: s^2 (J^T J)^-1 with J the
/// Jacobian of the model in (A, B, sigma_th, nu).
fn threshold_se(data: &FitData, b: f64, th: f64, nu: f64, rss: f64) -> f64 {
    let n = data.p.len();
    if n <= 4 {
        return f64::NAN;
    }
    let mut jtj = Matrix4::<f64>::zeros();
    for i in 0..n {
        let (s, d) = (data.sigma[i], data.d[i]);
        let scale = d.powf(1.0 / nu);
        let x = (s - th) * scale;
        let row = nalgebra::RowVector4::new(1.0, x, -b * scale, -b * x * d.ln() / (nu * nu));
        jtj += row.transpose() * row;
    }
    match jtj.try_inverse() {
        Some(inv) => (rss / (n - 4) as f64 * inv[(2, 2)]).max(0.0).sqrt(),
        None => f64::NAN,
    }
}
