//! Batch front end: `simulate`, `density`, `loglik`, `fit` and `check`,
//! all driven by one JSON config.
//!
//! Every command writes `effective_config.json` (the config with defaults
//! and derived values filled in) next to its artifacts. On failure an
//! `error.json` is written to the output directory, the same JSON goes to
//! stderr and the process exits with status 2; `check` exits with status 1
//! when a check fails.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::estimate::{fit_mle, FitOptions};
use crate::levy::LevySpec;
use crate::likelihood::{
    characteristic_function, composite_log_likelihood, gaussian_fourier_integral, log_likelihood,
    marginal_density_grid_with, normal_log_pdf, MeasureKind, ModelParams, Observations, QuadConfig,
};
use crate::montecarlo::{empirical_density, empirical_joint_cf, normal_reference_bandwidth, simulate_returns, KdeOptions};
use crate::prm::{Point, PointSet};
use crate::timechange::{FactorMode, Realization, VolSpec};

/// Version stamped on every JSON artifact.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(name = "tclevy", version, about = "Exact likelihoods for time-changed Lévy return models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Run configuration (JSON).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    pub out: PathBuf,
    /// Overrides the config seed.
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Caps the worker threads.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
    /// Density grid, overriding `density.grid`.
    #[arg(long, global = true, value_name = "LO:HI:STEP", allow_hyphen_values = true)]
    pub grid: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Simulate returns (and latents) to CSV.
    Simulate,
    /// Exact one-period density on a grid.
    Density,
    /// Exact (composite) log-likelihood of the data.
    Loglik,
    /// Maximum-likelihood fit of the free parameters.
    Fit,
    /// Closed-form degeneration and Monte Carlo self-checks.
    Check,
}

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    pub model: ModelParams,
    #[serde(default)]
    pub measure: MeasureKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<DataConfig>,
    #[serde(default)]
    pub quadrature: QuadConfig,
    #[serde(default)]
    pub simulate: SimulateConfig,
    #[serde(default)]
    pub density: DensityConfig,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub check: CheckConfig,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// CSV file with a header row; relative paths resolve against the
    /// config file's directory.
    pub path: PathBuf,
    /// Column holding the returns; defaults to the first column.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub column: Option<String>,
    /// Interval width of the data; overrides `model.delta`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    /// Returns per likelihood block (1 to 3).
    #[serde(default = "default_block")]
    pub block_size: usize,
}

fn default_block() -> usize {
    2
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    /// Returns per path.
    pub n: usize,
    pub n_paths: usize,
    pub keep_latents: bool,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            n: 1,
            n_paths: 10_000,
            keep_latents: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl Grid {
    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || Error::Config {
            path: "--grid".into(),
            msg: format!("expected LO:HI:STEP, got {s:?}"),
        };
        if parts.len() != 3 {
            return Err(bad());
        }
        let v: Vec<f64> = parts.iter().map(|p| p.trim().parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(|_| bad())?;
        let g = Grid {
            lo: v[0],
            hi: v[1],
            step: v[2],
        };
        g.validate("--grid")?;
        Ok(g)
    }

    pub fn validate(&self, field: &str) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.hi >= self.lo) {
            return Err(Error::invalid(field, "need finite LO ≤ HI"));
        }
        if !(self.step.is_finite() && self.step > 0.0) {
            return Err(Error::invalid(format!("{field}.step"), "must be > 0"));
        }
        if (self.hi - self.lo) / self.step > 1e7 {
            return Err(Error::invalid(format!("{field}.step"), "grid has more than 10^7 points"));
        }
        Ok(())
    }

    /// lo, lo + step, ... up to hi inclusive (within rounding).
    pub fn points(&self) -> Vec<f64> {
        let count = ((self.hi - self.lo) / self.step + 1e-9).floor() as usize;
        (0..=count).map(|k| self.lo + k as f64 * self.step).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DensityConfig {
    pub grid: Grid,
}

impl Default for DensityConfig {
    fn default() -> Self {
        DensityConfig {
            grid: Grid {
                lo: -5.0,
                hi: 5.0,
                step: 0.1,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    /// Parameter names to optimize, e.g. "mu", "vol.a", "levy1.rate".
    pub free: Vec<String>,
    pub options: FitOptions,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            free: vec!["mu".into(), "beta".into()],
            options: FitOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckConfig {
    /// Random parameter draws per dimension in the Normal degeneration check.
    pub draws: usize,
    /// Tolerance of the degeneration check on log ℒ.
    pub degeneration_tol: f64,
    /// Simulated paths in the Monte Carlo check.
    pub n_paths: usize,
    /// Allowed deviation in Monte Carlo standard errors.
    pub z_max: f64,
    /// Tolerance on the integral of the density.
    pub normalization_tol: f64,
    /// Tolerance of the Gaussian Fourier identity.
    pub gaussian_tol: f64,
    /// Tolerance between the two Laplace-functional quadratures.
    pub laplace_tol: f64,
}

impl Default for CheckConfig {
    fn default() -> Self {
        CheckConfig {
            draws: 20,
            degeneration_tol: 1e-6,
            n_paths: 200_000,
            z_max: 4.0,
            normalization_tol: 1e-4,
            gaussian_tol: 1e-8,
            laplace_tol: 1e-8,
        }
    }
}

impl RunConfig {
    /// Validates every section, reporting the offending field path.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config {
                path: "schema_version".into(),
                msg: format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version),
            });
        }
        self.model.validate("model")?;
        self.quadrature.validate("quadrature")?;
        if let Some(d) = &self.data {
            if let Some(delta) = d.delta {
                if !(delta.is_finite() && delta > 0.0) {
                    return Err(Error::invalid("data.delta", format!("must be > 0, got {delta}")));
                }
            }
            if !(1..=crate::likelihood::MAX_DIM).contains(&d.block_size) {
                return Err(Error::invalid("data.block_size", "must be 1, 2 or 3"));
            }
        }
        if self.simulate.n == 0 {
            return Err(Error::invalid("simulate.n", "must be ≥ 1"));
        }
        self.density.grid.validate("density.grid")?;
        if let MeasureKind::Deterministic(r) = &self.measure {
            PointSet::new(r.primary.points.clone())?;
            PointSet::new(r.secondary.points.clone())?;
        }
        Ok(())
    }

    /// Fills in derived defaults so that the echo is self-contained.
    pub fn resolve(mut self) -> Self {
        if let Some(delta) = self.data.as_ref().and_then(|d| d.delta) {
            self.model.delta = delta;
        }
        self.model.vol.s_max = Some(self.model.vol.s_max());
        self
    }
}

/// Parses, validates and resolves a config file.
pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path)?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| Error::Config {
        path: e.path().to_string(),
        msg: e.inner().to_string(),
    })?;
    cfg.validate()?;
    Ok(cfg.resolve())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn stamped(mut v: serde_json::Value) -> serde_json::Value {
    if let Some(obj) = v.as_object_mut() {
        obj.insert("schema_version".into(), json!(SCHEMA_VERSION));
    }
    v
}

/// Reads the return column of a data CSV.
pub fn read_returns(path: &Path, column: Option<&str>) -> Result<Vec<f64>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let idx = match column {
        Some(c) => headers.iter().position(|h| h == c).ok_or_else(|| Error::Config {
            path: "data.column".into(),
            msg: format!("column {c:?} not found in {}", path.display()),
        })?,
        None => 0,
    };
    let mut out = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let field = rec.get(idx).unwrap_or("").trim();
        let v: f64 = field.parse().map_err(|_| Error::Config {
            path: "data.path".into(),
            msg: format!("row {}: {field:?} is not a number", line + 2),
        })?;
        out.push(v);
    }
    Ok(out)
}

fn data_blocks(cfg: &RunConfig, base: &Path) -> Result<Vec<Observations>> {
    let d = cfg.data.as_ref().ok_or_else(|| Error::Config {
        path: "data".into(),
        msg: "this command needs a data section".into(),
    })?;
    let path = if d.path.is_absolute() { d.path.clone() } else { base.join(&d.path) };
    let x = read_returns(&path, d.column.as_deref())?;
    let obs = Observations::new(x)?;
    let blocks = obs.blocks(d.block_size);
    if blocks.is_empty() {
        return Err(Error::invalid("data", format!("fewer than block_size = {} returns", d.block_size)));
    }
    Ok(blocks)
}

/// Outcome of one self-check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    /// Largest observed discrepancy, in the units of `limit`.
    pub worst: f64,
    pub limit: f64,
    pub detail: String,
}

/// A fixed realization with mass in every interval: a pre-sample point plus
/// one point in the first half of each interval, which keeps τ_i away from 0.
fn random_realization<R: Rng>(vol: &VolSpec, n: usize, delta: f64, rng: &mut R) -> Realization {
    let draw = |rng: &mut R| {
        let mut pts = vec![Point {
            s: -rng.random_range(0.0..2.0),
            x: rng.random_range(0.3..2.0),
        }];
        for i in 0..n {
            pts.push(Point {
                s: (i as f64 + rng.random_range(0.0..0.5)) * delta,
                x: rng.random_range(0.5..2.0),
            });
        }
        PointSet::new(pts).expect("positive marks")
    };
    let primary = draw(rng);
    let secondary = match vol.factor {
        FactorMode::Independent { .. } => draw(rng),
        FactorMode::Common { .. } => PointSet::default(),
    };
    Realization { primary, secondary }
}

/// With ψ₁ = ψ₂ = 0 and a fixed realization the likelihood is a product of
/// Normal densities; compares the two for random parameters and n = 1, 2, 3.
pub fn check_degeneration(seed: u64, draws: usize, tol: f64, q: &QuadConfig) -> Result<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for n in 1..=3 {
        for _ in 0..draws {
            let vol = VolSpec {
                lambda: rng.random_range(0.3..2.0),
                a: 2.0,
                b: 1.0,
                factor: FactorMode::Common {
                    kappa: rng.random_range(0.0..1.0),
                },
                s_max: None,
            };
            let p = ModelParams {
                mu: rng.random_range(-0.5..0.5),
                beta: rng.random_range(-0.5..0.5),
                rho: rng.random_range(-0.5..0.5),
                delta: rng.random_range(0.5..1.5),
                levy1: LevySpec::Zero,
                levy2: LevySpec::Zero,
                vol,
            };
            let r = random_realization(&p.vol, n, p.delta, &mut rng);
            let (tau, gamma) = p.vol.time_changes(&r, n, p.delta);
            let x: Vec<f64> = (0..n)
                .map(|i| {
                    let e: f64 = rng.sample(StandardNormal);
                    p.mu * p.delta + p.beta * (tau[i] + gamma[i]) + p.rho * gamma[i] + 1.5 * e * (tau[i] + gamma[i]).sqrt()
                })
                .collect();
            let expect: f64 = (0..n)
                .map(|i| {
                    let ts = tau[i] + gamma[i];
                    normal_log_pdf(x[i], p.mu * p.delta + p.rho * gamma[i] + p.beta * ts, ts)
                })
                .sum();
            let got = log_likelihood(&Observations::new(x)?, &p, &MeasureKind::Deterministic(r), q)?.value;
            worst = worst.max((got - expect).abs());
        }
    }
    Ok(CheckOutcome {
        name: "normal_degeneration".into(),
        passed: worst <= tol,
        worst,
        limit: tol,
        detail: format!("max |log ℒ − Σ log φ| over {} draws for n = 1, 2, 3", 3 * draws),
    })
}

/// Empirical joint characteristic function of two consecutive simulated
/// returns against the analytic e^{−Λ} expression.
pub fn check_monte_carlo_cf(
    params: &ModelParams,
    measure: &MeasureKind,
    n_paths: usize,
    seed: u64,
    z_max: f64,
    q: &QuadConfig,
) -> Result<CheckOutcome> {
    let sim = simulate_returns(params, measure, 2, n_paths, seed, false)?;
    let points: [[f64; 2]; 5] = [[0.5, 0.0], [0.0, 0.5], [0.4, 0.4], [0.7, -0.3], [-0.2, 0.9]];
    let mut worst: f64 = 0.0;
    for u in points {
        let est = empirical_joint_cf(&sim.returns, &u)?;
        let exact = characteristic_function(params, measure, &u, q)?;
        worst = worst.max(est.z_score(exact));
    }
    Ok(CheckOutcome {
        name: "monte_carlo_joint_cf".into(),
        passed: worst <= z_max,
        worst,
        limit: z_max,
        detail: format!("max |z| over 5 points, {n_paths} simulated pairs"),
    })
}

/// Numeric (2π)^{−1/2}∫e^{iϖy − τ*y²/2}dy against (τ*)^{−1/2}e^{−ϖ²/(2τ*)}
/// on a 10×10 grid of (ϖ, τ*).
pub fn check_gaussian_identity(tol: f64) -> Result<CheckOutcome> {
    let mut worst: f64 = 0.0;
    for i in 0..10 {
        let varpi = -3.0 + 6.0 * i as f64 / 9.0;
        for j in 0..10 {
            let tau_star = 0.1 * 50f64.powf(j as f64 / 9.0);
            let got = gaussian_fourier_integral(varpi, tau_star, 10.0 / tau_star.sqrt(), 1e-12)?;
            let expect = (-varpi * varpi / (2.0 * tau_star)).exp() / tau_star.sqrt();
            worst = worst.max((got - expect).norm());
        }
    }
    Ok(CheckOutcome {
        name: "gaussian_identity".into(),
        passed: worst <= tol,
        worst,
        limit: tol,
        detail: "max abs error on a 10x10 (varpi, tau*) grid".into(),
    })
}

/// Λ by 2-D quadrature against the exponential-mark reduction, for random
/// complex kernels with nonnegative real part on the model's volatility.
pub fn check_laplace_cross(vol: &VolSpec, delta: f64, seed: u64, tol: f64, q: &QuadConfig) -> Result<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for draw in 0..20 {
        let n = 1 + draw % 3;
        let mut c = || Complex64::new(rng.random_range(0.0..2.0), rng.random_range(-3.0..3.0));
        let ch: Vec<Complex64> = (0..n).map(|_| c()).collect();
        let cg: Vec<Complex64> = (0..n).map(|_| c()).collect();
        let k = vol.kernel(delta, &ch, &cg);
        worst = worst.max((vol.laplace_generic(&k, q)? - vol.laplace_exp_marks(&k, q)?).norm());
    }
    Ok(CheckOutcome {
        name: "laplace_cross".into(),
        passed: worst <= tol,
        worst,
        limit: tol,
        detail: "max |2-D - 1-D| over 20 random kernels".into(),
    })
}

/// Exact one-period density against a kernel density estimate at 50 points
/// spanning the central 99% of the simulated returns.
pub fn check_monte_carlo_density(
    params: &ModelParams,
    measure: &MeasureKind,
    n_paths: usize,
    seed: u64,
    z_max: f64,
    q: &QuadConfig,
) -> Result<CheckOutcome> {
    let sim = simulate_returns(params, measure, 1, n_paths, seed, false)?;
    let mut sorted = sim.returns.clone();
    sorted.sort_by(f64::total_cmp);
    let (lo, hi) = (sorted[n_paths / 200], sorted[n_paths - 1 - n_paths / 200]);
    let grid: Vec<f64> = (0..50).map(|k| lo + (hi - lo) * k as f64 / 49.0).collect();
    let exact = marginal_density_grid_with(&grid, params, measure, q)?;
    let opts = KdeOptions {
        bandwidth: Some(normal_reference_bandwidth(&sim.returns)),
        ..KdeOptions::default()
    };
    let kde = empirical_density(&sim.returns, &grid, &opts)?;
    let worst = (0..grid.len())
        .map(|k| ((kde.density[k] - exact.density[k]) / kde.stderr[k]).abs())
        .fold(0.0, f64::max);
    Ok(CheckOutcome {
        name: "monte_carlo_density".into(),
        passed: worst <= z_max,
        worst,
        limit: z_max,
        detail: format!("max |z| over 50 points, {n_paths} simulated returns"),
    })
}

/// Trapezoidal mass of the exact density over mean ± 20 standard deviations.
pub fn check_normalization(params: &ModelParams, measure: &MeasureKind, tol: f64, q: &QuadConfig) -> Result<CheckOutcome> {
    let (tau, gamma) = match measure {
        MeasureKind::Poisson => params.vol.mean_time_changes(1, params.delta),
        MeasureKind::Deterministic(r) => {
            let (t, g) = params.vol.time_changes(r, 1, params.delta);
            (t[0], g[0])
        }
    };
    let ts = tau + gamma;
    let (k1, v1) = params.levy1.cumulants()?;
    let (k2, v2) = params.levy2.cumulants()?;
    let mean = params.mu * params.delta + k1 * tau + k2 * gamma + params.beta * ts + params.rho * gamma;
    let sd = (ts + v1 * tau + v2 * gamma).sqrt().max(1e-3);
    let grid: Vec<f64> = (0..=4000).map(|k| mean - 20.0 * sd + 0.01 * sd * k as f64).collect();
    let dg = marginal_density_grid_with(&grid, params, measure, q)?;
    let worst = (dg.trapezoid() - 1.0).abs();
    Ok(CheckOutcome {
        name: "density_normalization".into(),
        passed: worst <= tol,
        worst,
        limit: tol,
        detail: "|∫ density − 1| on mean ± 20 sd".into(),
    })
}

fn run_check(cfg: &RunConfig, out: &Path) -> Result<bool> {
    let c = &cfg.check;
    let q = &cfg.quadrature;
    let outcomes = vec![
        check_degeneration(cfg.seed, c.draws, c.degeneration_tol, q)?,
        check_normalization(&cfg.model, &cfg.measure, c.normalization_tol, q)?,
        check_monte_carlo_cf(&cfg.model, &cfg.measure, c.n_paths, cfg.seed, c.z_max, q)?,
        check_monte_carlo_density(&cfg.model, &cfg.measure, c.n_paths, cfg.seed ^ 1, c.z_max, q)?,
        check_gaussian_identity(c.gaussian_tol)?,
        check_laplace_cross(&cfg.model.vol, cfg.model.delta, cfg.seed, c.laplace_tol, q)?,
    ];
    let passed = outcomes.iter().all(|o| o.passed);
    for o in &outcomes {
        println!(
            "{} {:<24} worst {:.3e} limit {:.3e}",
            if o.passed { "PASS" } else { "FAIL" },
            o.name,
            o.worst,
            o.limit
        );
    }
    write_json(&out.join("check.json"), &stamped(json!({ "passed": passed, "checks": outcomes })))?;
    Ok(passed)
}

/// Runs one command; returns whether it succeeded (only `check` can fail
/// without an error).
pub fn dispatch(command: Command, cfg: &RunConfig, base: &Path, out: &Path) -> Result<bool> {
    fs::create_dir_all(out)?;
    write_json(&out.join("effective_config.json"), cfg)?;
    match command {
        Command::Simulate => {
            let s = &cfg.simulate;
            let sim = simulate_returns(&cfg.model, &cfg.measure, s.n, s.n_paths, cfg.seed, s.keep_latents)?;
            sim.write_returns_csv(fs::File::create(out.join("returns.csv"))?)?;
            if s.keep_latents {
                sim.write_latents_csv(fs::File::create(out.join("latents.csv"))?)?;
            }
        }
        Command::Density => {
            let grid = cfg.density.grid.points();
            let dg = marginal_density_grid_with(&grid, &cfg.model, &cfg.measure, &cfg.quadrature)?;
            dg.write_csv(fs::File::create(out.join("density.csv"))?)?;
            write_json(&out.join("diagnostics.json"), &stamped(json!({ "diagnostics": dg.diagnostics })))?;
        }
        Command::Loglik => {
            let blocks = data_blocks(cfg, base)?;
            let ll = composite_log_likelihood(&blocks, &cfg.model, &cfg.measure, &cfg.quadrature, None)?;
            write_json(
                &out.join("loglik.json"),
                &stamped(json!({
                    "log_likelihood": ll.value,
                    "n_blocks": blocks.len(),
                    "block_size": blocks[0].len(),
                    "diagnostics": ll.diagnostics,
                })),
            )?;
            println!("{}", ll.value);
        }
        Command::Fit => {
            let blocks = data_blocks(cfg, base)?;
            let fit = fit_mle(&blocks, &cfg.model, &cfg.measure, &cfg.fit.free, &cfg.quadrature, &cfg.fit.options)?;
            write_json(&out.join("fit.json"), &stamped(json!({ "result": fit, "config": cfg })))?;
        }
        Command::Check => return run_check(cfg, out),
    }
    Ok(true)
}

fn error_report(e: &Error) -> serde_json::Value {
    let field = match e {
        Error::InvalidParameter { field, .. } => Some(field.clone()),
        Error::Config { path, .. } => Some(path.clone()),
        _ => None,
    };
    stamped(json!({ "error": { "kind": e.kind(), "field": field, "message": e.to_string() } }))
}

fn execute(cli: &Cli) -> Result<bool> {
    if let Some(n) = cli.threads {
        // Fails only if the global pool already exists; the cap then has no effect.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    let path = cli.config.as_ref().ok_or_else(|| Error::Config {
        path: "--config".into(),
        msg: "a config file is required".into(),
    })?;
    let mut cfg = parse_config(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(g) = &cli.grid {
        cfg.density.grid = Grid::parse(g)?;
    }
    let base = path.parent().unwrap_or(Path::new("."));
    dispatch(cli.command, &cfg, base, &cli.out)
}

/// Entry point of the binary; returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            let report = error_report(&e);
            eprintln!("{report}");
            if fs::create_dir_all(&cli.out).is_ok() {
                let _ = write_json(&cli.out.join("error.json"), &report);
            }
            2
        }
    }
}
