//! Batch front end: `analytic`, `threshold` and `factory` subcommands.
//!
//! Every option can also be given in a flat `key = value` file passed
//! with `--config`; command-line flags win. Unknown keys are rejected.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use crate::construction::{factory_run, five_tree_run, FactoryTally};
use crate::decoder::{BoundaryWeights, Mode};
use crate::error::{Error, Result};
use crate::gkp_math::{
    db_from_variance, e_post, e_tot_leading, p_suc, resources, sigma_from_db, PostselectParams, DEFAULT_WEIGHT_CAP,
    SQRT_PI,
};
use crate::lattice::Boundary;
use crate::montecarlo::{fit_threshold, fit_threshold_near_crossing, sweep, FitResult, NoiseModel, RatePoint, TrialPlan};
use crate::noise::trial_rng;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_FIT: i32 = 3;

/// Hexagon cost quoted in the literature for 9.8 dB, kept for comparison.
const QUOTED_HEXAGON_COST: f64 = 9.2e6;

#[derive(Debug, Parser)]
#[command(name = "gkp-ftqc", version, about = "GKP surface-code thresholds and cluster-factory statistics")]
pub struct Cli {
    /// Flat key = value file with defaults for any option.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Closed-form error budget and resource table.
    Analytic(AnalyticArgs),
    /// Logical error rates over a distance/sigma sweep and threshold fit.
    Threshold(ThresholdArgs),
    /// Monte Carlo of the cluster factory next to the closed forms.
    Factory(FactoryArgs),
}

#[derive(Debug, Args, Default)]
pub struct AnalyticArgs {
    /// Squeezing levels in dB: `a,b,c` or `start:stop:count`.
    #[arg(long)]
    pub db_grid: Option<String>,
    /// Sigma values instead of dB levels.
    #[arg(long)]
    pub sigma_grid: Option<String>,
    /// Postselection parameters, comma separated; expressions such as
    /// `2*sqrt(pi)/5` are accepted.
    #[arg(long)]
    pub v_up: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct ThresholdArgs {
    /// code_capacity | phenomenological | construction
    #[arg(long)]
    pub model: Option<String>,
    /// digital | analog | both
    #[arg(long)]
    pub mode: Option<String>,
    /// Code distances, e.g. `5,7,9`.
    #[arg(long)]
    pub distances: Option<String>,
    /// Sigma values: `a,b,c` or `start:stop:count`.
    #[arg(long)]
    pub sigma_grid: Option<String>,
    #[arg(long)]
    pub v_up: Option<String>,
    #[arg(long)]
    pub trials: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub weight_cap: Option<f64>,
    /// planar | periodic
    #[arg(long)]
    pub boundary: Option<String>,
    /// analog | uniform
    #[arg(long)]
    pub boundary_weights: Option<String>,
    /// Fit on this many sigma values nearest the crossing (0: all).
    #[arg(long)]
    pub fit_points: Option<usize>,
    /// Worker threads (results do not depend on it).
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct FactoryArgs {
    /// Squeezing level in dB.
    #[arg(long)]
    pub db: Option<f64>,
    /// Sigma instead of a dB level.
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub v_up: Option<String>,
    /// 5-trees to produce for the 5-tree statistics.
    #[arg(long)]
    pub five_trees: Option<u64>,
    /// Hexagons to produce (0 skips the hexagon run).
    #[arg(long)]
    pub target_hexagons: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Evaluate a numeric expression with `pi` and `sqrt`. Integer literals
/// are read as reals so `1/2` is 0.5.
pub fn eval_expr(src: &str) -> Result<f64> {
    use evalexpr::{ContextWithMutableFunctions, ContextWithMutableVariables, Function, HashMapContext, Value};
    let bad = |e: evalexpr::EvalexprError| Error::Config(format!("cannot evaluate '{src}': {e}"));
    let mut ctx = HashMapContext::new();
    ctx.set_value("pi".into(), Value::Float(std::f64::consts::PI)).map_err(bad)?;
    ctx.set_function("sqrt".into(), Function::new(|a| Ok(Value::Float(a.as_number()?.sqrt()))))
        .map_err(bad)?;
    // Numeric literals become float variables; evalexpr would otherwise do
    // integer division and does not read exponents.
    let chars: Vec<char> = src.chars().collect();
    let mut text = String::with_capacity(src.len() + 8);
    let mut i = 0;
    while i < chars.len() {
        let ident_before = i > 0 && (chars[i - 1].is_alphanumeric() || chars[i - 1] == '_');
        if (chars[i].is_ascii_digit() || chars[i] == '.') && !ident_before {
            let mut j = i;
            while j < chars.len() && (chars[j].is_ascii_digit() || chars[j] == '.') {
                j += 1;
            }
            if j < chars.len() && (chars[j] == 'e' || chars[j] == 'E') {
                let mut k = j + 1;
                if k < chars.len() && (chars[k] == '+' || chars[k] == '-') {
                    k += 1;
                }
                if k < chars.len() && chars[k].is_ascii_digit() {
                    while k < chars.len() && chars[k].is_ascii_digit() {
                        k += 1;
                    }
                    j = k;
                }
            }
            let lit: String = chars[i..j].iter().collect();
            let v: f64 = lit.parse().map_err(|_| Error::Config(format!("bad number '{lit}' in '{src}'")))?;
            let name = format!("num_{i}_");
            ctx.set_value(name.clone(), Value::Float(v)).map_err(bad)?;
            text.push_str(&name);
            i = j;
        } else {
            text.push(chars[i]);
            i += 1;
        }
    }
    evalexpr::eval_number_with_context(&text, &ctx).map_err(bad)
}

/// `a,b,c` or `start:stop:count` (inclusive, evenly spaced).
pub fn parse_grid(src: &str) -> Result<Vec<f64>> {
    let v: Vec<f64> = if let [a, b, n] = src.split(':').collect::<Vec<_>>()[..] {
        let (a, b) = (eval_expr(a)?, eval_expr(b)?);
        let n: usize = n.trim().parse().map_err(|_| Error::Config(format!("bad grid count in '{src}'")))?;
        if n < 2 {
            return Err(Error::Config(format!("grid '{src}' needs at least 2 points")));
        }
        (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect()
    } else {
        src.split(',').map(eval_expr).collect::<Result<_>>()?
    };
    if v.is_empty() {
        return Err(Error::Config("empty grid".into()));
    }
    if v.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config(format!("grid '{src}' must be strictly increasing")));
    }
    Ok(v)
}

fn parse_distances(src: &str) -> Result<Vec<usize>> {
    let v: Vec<usize> = src
        .split(',')
        .map(|s| s.trim().parse().map_err(|_| Error::Config(format!("bad distance '{s}'"))))
        .collect::<Result<_>>()?;
    if v.is_empty() || v.iter().any(|&d| d < 3) {
        return Err(Error::Config("distances must be at least 3".into()));
    }
    Ok(v)
}

/// Flat `key = value` configuration with `#` comments.
#[derive(Debug, Default, Clone)]
pub struct ConfigFile(BTreeMap<String, String>);

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut m = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            m.insert(k.trim().replace('-', "_"), v.trim().to_string());
        }
        Ok(Self(m))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        match self.0.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(Error::Config(format!("unknown config key '{k}' (allowed: {})", allowed.join(", ")))),
            None => Ok(()),
        }
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    fn num<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|s| s.parse().map_err(|_| Error::Config(format!("bad value for {key}: '{s}'"))))
            .transpose()
    }
}

fn pick_str(cli: &Option<String>, cfg: &ConfigFile, key: &str, default: &str) -> String {
    cli.clone().or_else(|| cfg.get(key).map(str::to_string)).unwrap_or_else(|| default.to_string())
}

fn pick_num<T: std::str::FromStr + Copy>(cli: Option<T>, cfg: &ConfigFile, key: &str, default: T) -> Result<T> {
    Ok(match cli {
        Some(v) => v,
        None => cfg.num(key)?.unwrap_or(default),
    })
}

fn pick_path(cli: &Option<PathBuf>, cfg: &ConfigFile) -> PathBuf {
    cli.clone().or_else(|| cfg.get("out").map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("."))
}

const DEFAULT_V_UP: &str = "2*sqrt(pi)/5";

#[derive(Debug, Clone, Serialize)]
pub struct AnalyticConfig {
    pub sigmas: Vec<f64>,
    pub v_ups: Vec<f64>,
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Serialize)]
pub struct ThresholdConfig {
    pub model: NoiseModel,
    pub modes: Vec<Mode>,
    pub distances: Vec<usize>,
    pub sigmas: Vec<f64>,
    pub v_up: f64,
    pub trials: u64,
    pub seed: u64,
    pub weight_cap: f64,
    pub boundary: Boundary,
    pub boundary_weights: BoundaryWeights,
    pub fit_points: usize,
    /// Worker count and output directory never affect results, so they
    /// are left out of the echoed config.
    #[serde(skip)]
    pub threads: Option<usize>,
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Serialize)]
pub struct FactoryConfig {
    pub sigma: f64,
    pub squeezing_db: f64,
    pub v_up: f64,
    pub five_trees: u64,
    pub target_hexagons: u64,
    pub seed: u64,
    #[serde(skip)]
    pub threads: Option<usize>,
    #[serde(skip)]
    pub out: PathBuf,
}

fn v_up_value(s: &str) -> Result<f64> {
    let v = eval_expr(s)?;
    if !(0.0..SQRT_PI / 2.0).contains(&v) {
        return Err(Error::Config(format!("v_up = {v} must lie in [0, sqrt(pi)/2)")));
    }
    Ok(v)
}

impl AnalyticConfig {
    pub fn resolve(a: &AnalyticArgs, cfg: &ConfigFile) -> Result<Self> {
        cfg.check_keys(&["db_grid", "sigma_grid", "v_up", "out"])?;
        let sigma_src = a.sigma_grid.clone().or_else(|| cfg.get("sigma_grid").map(str::to_string));
        let sigmas = match sigma_src {
            Some(s) => parse_grid(&s)?,
            None => {
                let db = parse_grid(&pick_str(&a.db_grid, cfg, "db_grid", "8:16:17"))?;
                db.iter().rev().map(|&d| sigma_from_db(d)).collect()
            }
        };
        if sigmas.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::Config("sigma values must be positive".into()));
        }
        let v_ups = pick_str(&a.v_up, cfg, "v_up", DEFAULT_V_UP)
            .split(',')
            .map(v_up_value)
            .collect::<Result<_>>()?;
        Ok(Self { sigmas, v_ups, out: pick_path(&a.out, cfg) })
    }
}

impl ThresholdConfig {
    pub fn resolve(a: &ThresholdArgs, cfg: &ConfigFile) -> Result<Self> {
        cfg.check_keys(&[
            "model", "mode", "distances", "sigma_grid", "v_up", "trials", "seed", "weight_cap", "boundary",
            "boundary_weights", "fit_points", "threads", "out",
        ])?;
        let model: NoiseModel = pick_str(&a.model, cfg, "model", "code_capacity").parse()?;
        let modes = match pick_str(&a.mode, cfg, "mode", "both").as_str() {
            "both" => vec![Mode::Digital, Mode::Analog],
            m => vec![m.parse()?],
        };
        let boundary: Boundary = pick_str(&a.boundary, cfg, "boundary", "planar").parse()?;
        let distances = parse_distances(&pick_str(&a.distances, cfg, "distances", "5,7,9"))?;
        if model == NoiseModel::CodeCapacity && boundary == Boundary::Planar && distances.iter().any(|d| d % 2 == 0) {
            return Err(Error::Config("planar 2D distances must be odd".into()));
        }
        let default_grid = match model {
            NoiseModel::CodeCapacity => "0.46:0.70:9",
            NoiseModel::Phenomenological => "0.36:0.52:9",
            NoiseModel::Construction => "0.17:0.26:10",
        };
        let sigmas = parse_grid(&pick_str(&a.sigma_grid, cfg, "sigma_grid", default_grid))?;
        if sigmas[0] <= 0.0 {
            return Err(Error::Config("sigma values must be positive".into()));
        }
        let fit_points = pick_num(a.fit_points, cfg, "fit_points", 5usize)?;
        if (1..4).contains(&fit_points) {
            return Err(Error::Config("fit_points must be 0 (all) or at least 4".into()));
        }
        let trials = pick_num(a.trials, cfg, "trials", 10_000u64)?;
        if trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        let weight_cap = pick_num(a.weight_cap, cfg, "weight_cap", DEFAULT_WEIGHT_CAP)?;
        if !(weight_cap > 0.0) {
            return Err(Error::Config("weight_cap must be positive".into()));
        }
        Ok(Self {
            model,
            modes,
            distances,
            sigmas,
            v_up: v_up_value(&pick_str(&a.v_up, cfg, "v_up", DEFAULT_V_UP))?,
            trials,
            seed: pick_num(a.seed, cfg, "seed", 1u64)?,
            weight_cap,
            boundary,
            boundary_weights: pick_str(&a.boundary_weights, cfg, "boundary_weights", "analog").parse()?,
            fit_points,
            threads: a.threads.or(cfg.num("threads")?),
            out: pick_path(&a.out, cfg),
        })
    }
}

impl FactoryConfig {
    pub fn resolve(a: &FactoryArgs, cfg: &ConfigFile) -> Result<Self> {
        cfg.check_keys(&["db", "sigma", "v_up", "five_trees", "target_hexagons", "seed", "threads", "out"])?;
        let sigma = match a.sigma.or(cfg.num("sigma")?) {
            Some(s) => s,
            None => sigma_from_db(pick_num(a.db, cfg, "db", 9.8)?),
        };
        if !(sigma > 0.0) {
            return Err(Error::Config("sigma must be positive".into()));
        }
        Ok(Self {
            sigma,
            squeezing_db: db_from_variance(sigma * sigma),
            v_up: v_up_value(&pick_str(&a.v_up, cfg, "v_up", DEFAULT_V_UP))?,
            five_trees: pick_num(a.five_trees, cfg, "five_trees", 10_000u64)?,
            target_hexagons: pick_num(a.target_hexagons, cfg, "target_hexagons", 0u64)?,
            seed: pick_num(a.seed, cfg, "seed", 1u64)?,
            threads: a.threads.or(cfg.num("threads")?),
            out: pick_path(&a.out, cfg),
        })
    }
}

fn config_line<T: Serialize>(cfg: &T) -> String {
    format!("# config {}\n", serde_json::to_string(cfg).expect("config serialises"))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text)?;
    Ok(())
}

fn append_jsonl<T: Serialize>(dir: &Path, record: &T) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut f = fs::OpenOptions::new().create(true).append(true).open(dir.join("runs.jsonl"))?;
    writeln!(f, "{}", serde_json::to_string(record).map_err(|e| Error::Io(e.to_string()))?)?;
    Ok(())
}

fn f(x: f64) -> String {
    format!("{x:.10e}")
}

/// Analytic table; one row per (sigma, v_up).
pub fn analytic_csv(c: &AnalyticConfig) -> Result<String> {
    let mut s = config_line(c);
    s.push_str("squeezing_db,sigma,v_up,e_post_3,e_post_4,p_suc_3,p_suc_4,e_bell,e_tot,r_5tree,r_hexa,r_hexa_total\n");
    for &sigma in &c.sigmas {
        for &v in &c.v_ups {
            let var = sigma * sigma;
            let p3 = PostselectParams::new(v, 3.0 * var)?;
            let p4 = PostselectParams::new(v, 4.0 * var)?;
            let b = e_tot_leading(sigma, v)?;
            let r = resources(sigma, v);
            let (r5, rh, rt) = match r {
                Ok(r) => (r.r_5tree, r.r_hexa, r.r_hexa_total),
                Err(_) => (f64::INFINITY, f64::INFINITY, f64::INFINITY),
            };
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                f(db_from_variance(var)),
                f(sigma),
                f(v),
                f(e_post(p3)?),
                f(e_post(p4)?),
                f(p_suc(p3)),
                f(p_suc(p4)),
                f(b.e_bell),
                f(b.e_tot),
                f(r5),
                f(rh),
                f(rt)
            );
        }
    }
    Ok(s)
}

pub fn cmd_analytic(c: &AnalyticConfig) -> Result<String> {
    let csv = analytic_csv(c)?;
    write_file(&c.out.join("analytic.csv"), &csv)?;
    Ok(csv)
}

#[derive(Debug, Clone, Serialize)]
pub struct ModeResult {
    pub mode: Mode,
    pub points: Vec<RatePoint>,
    pub fit: Option<FitResult>,
    pub fit_error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunRecord<C: Serialize> {
    pub command: &'static str,
    pub version: &'static str,
    pub config: C,
    pub results: serde_json::Value,
    pub wall_time_s: f64,
}

pub fn threshold_csv(c: &ThresholdConfig, results: &[ModeResult]) -> String {
    let mut s = config_line(c);
    s.push_str("sigma,d,p_logical,ci_low,ci_high,failures,trials,mode,model\n");
    for r in results {
        for p in &r.points {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{}",
                f(p.plan.sigma),
                p.plan.d,
                f(p.p_logical),
                f(p.ci_low),
                f(p.ci_high),
                p.failures,
                p.plan.trials,
                r.mode,
                c.model
            );
        }
    }
    s
}

fn gnuplot_script(c: &ThresholdConfig, csv_name: &str) -> String {
    let mut s = String::new();
    s.push_str("set datafile separator ','\nset logscale y\nset xlabel 'sigma'\nset ylabel 'logical error probability'\n");
    let _ = writeln!(s, "set terminal pngcairo size 900,600\nset output '{}.png'", csv_name.trim_end_matches(".csv"));
    let mut plots = Vec::new();
    for m in &c.modes {
        for &d in &c.distances {
            plots.push(format!(
                "'{csv_name}' using 1:($2=={d} && strcol(8) eq '{m}' ? $3 : 1/0):4:5 with yerrorlines title '{m} d={d}'"
            ));
        }
    }
    let _ = writeln!(s, "plot {}", plots.join(", \\\n     "));
    s
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::Config(e.to_string()))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

/// Run the sweep and fits, write CSV, gnuplot script and run log.
/// Returns the results and whether every fit converged.
pub fn cmd_threshold(c: &ThresholdConfig) -> Result<(Vec<ModeResult>, bool)> {
    let start = Instant::now();
    let mut results = Vec::new();
    for &mode in &c.modes {
        let template = TrialPlan {
            v_up: c.v_up,
            boundary: c.boundary,
            weight_cap: c.weight_cap,
            boundary_weights: c.boundary_weights,
            ..TrialPlan::new(c.model, c.distances[0], c.sigmas[0], mode, c.trials, c.seed)
        };
        let points = with_threads(c.threads, || sweep(&template, &c.distances, &c.sigmas))??;
        let fitted = match c.fit_points {
            0 => fit_threshold(&points),
            k => fit_threshold_near_crossing(&points, k),
        };
        let (fit, fit_error) = match fitted {
            Ok(f) => (Some(f), None),
            Err(e) => (None, Some(e.to_string())),
        };
        results.push(ModeResult { mode, points, fit, fit_error });
    }
    let stem = format!("threshold_{}", c.model);
    let csv_name = format!("{stem}.csv");
    write_file(&c.out.join(&csv_name), &threshold_csv(c, &results))?;
    write_file(&c.out.join(format!("{stem}.gp")), &gnuplot_script(c, &csv_name))?;
    let record = RunRecord {
        command: "threshold",
        version: env!("CARGO_PKG_VERSION"),
        config: c.clone(),
        results: serde_json::to_value(&results).map_err(|e| Error::Io(e.to_string()))?,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    append_jsonl(&c.out, &record)?;
    let ok = results.iter().all(|r| r.fit.as_ref().is_some_and(|f| f.converged));
    Ok((results, ok))
}

/// Factory statistics from independent chains, one RNG stream each.
#[derive(Debug, Clone, Serialize)]
pub struct FactoryReport {
    pub five_tree_tally: FactoryTally,
    pub hexagon_tally: Option<FactoryTally>,
    pub r_5tree: f64,
    pub r_hexa: f64,
    pub r_hexa_total: f64,
    pub p_suc_3: f64,
    pub p_suc_4: f64,
    pub e_post_4: f64,
    pub e_bell: f64,
    pub note: String,
}

const CHAINS: u64 = 64;

pub fn factory_report(c: &FactoryConfig) -> Result<FactoryReport> {
    let r = resources(c.sigma, c.v_up)?;
    let var = c.sigma * c.sigma;
    let p_suc_3 = p_suc(PostselectParams::new(c.v_up, 3.0 * var)?);
    let p_suc_4 = p_suc(PostselectParams::new(c.v_up, 4.0 * var)?);
    let b = e_tot_leading(c.sigma, c.v_up)?;
    let run = || -> Result<(FactoryTally, Option<FactoryTally>)> {
        let five = (0..CHAINS)
            .into_par_iter()
            .map(|k| {
                let n = c.five_trees / CHAINS + u64::from(k < c.five_trees % CHAINS);
                five_tree_run(c.sigma, c.v_up, n, &mut trial_rng(c.seed, k))
            })
            .try_reduce(FactoryTally::default, |mut a, b| {
                a.merge(&b);
                Ok(a)
            })?;
        let hex = if c.target_hexagons > 0 {
            let t = (0..c.target_hexagons)
                .into_par_iter()
                .map(|k| factory_run(c.sigma, c.v_up, 1, &mut trial_rng(c.seed ^ 0x9e37_79b9_7f4a_7c15, k)))
                .try_reduce(FactoryTally::default, |mut a, b| {
                    a.merge(&b);
                    Ok(a)
                })?;
            Some(t)
        } else {
            None
        };
        Ok((five, hex))
    };
    let (five_tree_tally, hexagon_tally) = with_threads(c.threads, run)??;
    let note = format!(
        "reference hexagon cost {QUOTED_HEXAGON_COST:.1e} matches neither r_hexa ({:.3e} 5-trees) nor r_hexa_total ({:.3e} 3-trees)",
        r.r_hexa, r.r_hexa_total
    );
    Ok(FactoryReport {
        five_tree_tally,
        hexagon_tally,
        r_5tree: r.r_5tree,
        r_hexa: r.r_hexa,
        r_hexa_total: r.r_hexa_total,
        p_suc_3,
        p_suc_4,
        e_post_4: b.e_post_4,
        e_bell: b.e_bell,
        note,
    })
}

pub fn factory_csv(c: &FactoryConfig, r: &FactoryReport) -> String {
    let mut s = config_line(c);
    let _ = writeln!(s, "# note {}", r.note);
    s.push_str("quantity,monte_carlo,closed_form,count\n");
    let t = &r.five_tree_tally;
    let mut row = |name: &str, mc: f64, cf: f64, n: u64| {
        let _ = writeln!(s, "{name},{},{},{n}", f(mc), f(cf));
    };
    row("sqec_accept_rate", t.sqec.rate(), r.p_suc_4, t.sqec.attempts);
    row("bell_accept_rate", t.bell.rate(), r.p_suc_3 * r.p_suc_4, t.bell.attempts);
    row("three_trees_per_five_tree", t.three_trees_per_five_tree(), r.r_5tree, t.five_trees_produced);
    if let Some(h) = &r.hexagon_tally {
        row("bell_ii_accept_rate", h.bell_ii.rate(), r.p_suc_3 * r.p_suc_3, h.bell_ii.attempts);
        row("five_trees_per_hexagon", h.five_trees_per_hexagon(), r.r_hexa, h.hexagons_produced);
        row("three_trees_per_hexagon", h.three_trees_per_hexagon(), r.r_hexa_total, h.hexagons_produced);
        let rate = h.final_flips as f64 / (2 * h.final_fusions).max(1) as f64;
        row("final_fusion_flip_rate", rate, r.e_bell, 2 * h.final_fusions);
    }
    s
}

pub fn cmd_factory(c: &FactoryConfig) -> Result<FactoryReport> {
    let start = Instant::now();
    let report = factory_report(c)?;
    write_file(&c.out.join("factory.csv"), &factory_csv(c, &report))?;
    let record = RunRecord {
        command: "factory",
        version: env!("CARGO_PKG_VERSION"),
        config: c.clone(),
        results: serde_json::to_value(&report).map_err(|e| Error::Io(e.to_string()))?,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    append_jsonl(&c.out, &record)?;
    Ok(report)
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::InvalidParameter(_) | Error::LatticeSize { .. } => EXIT_CONFIG,
        _ => EXIT_FAILURE,
    }
}

/// Parse arguments, run, print a summary; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(cli: &Cli) -> Result<i32> {
    let cfg = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    match &cli.command {
        Command::Analytic(a) => {
            let c = AnalyticConfig::resolve(a, &cfg)?;
            print!("{}", cmd_analytic(&c)?);
            Ok(EXIT_OK)
        }
        Command::Threshold(a) => {
            let c = ThresholdConfig::resolve(a, &cfg)?;
            let (results, ok) = cmd_threshold(&c)?;
            for r in &results {
                match (&r.fit, &r.fit_error) {
                    (Some(fit), _) => {
                        let (lo, hi) = fit.sigma_th_ci();
                        println!(
                            "{} {}: sigma_th = {:.4} [{lo:.4}, {hi:.4}] nu = {:.3} converged = {}",
                            c.model, r.mode, fit.sigma_th, fit.nu, fit.converged
                        );
                        for x in &fit.crossings {
                            match x.sigma {
                                Some(s) => println!("  crossing d={} / d={}: {s:.4}", x.d_small, x.d_large),
                                None => println!("  crossing d={} / d={}: none in grid", x.d_small, x.d_large),
                            }
                        }
                    }
                    (None, Some(e)) => println!("{} {}: {e}", c.model, r.mode),
                    (None, None) => {}
                }
            }
            Ok(if ok { EXIT_OK } else { EXIT_FIT })
        }
        Command::Factory(a) => {
            let c = FactoryConfig::resolve(a, &cfg)?;
            let r = cmd_factory(&c)?;
            print!("{}", factory_csv(&c, &r));
            Ok(EXIT_OK)
        }
    }
}
