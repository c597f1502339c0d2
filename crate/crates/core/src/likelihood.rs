//! Exact marginal likelihood of aggregate returns.
//!
//! Conditionally on the jump information each return is Normal; writing the
//! Normal density through its characteristic function and integrating the
//! Lévy increments out conditionally on N gives
//!
//! ```text
//! ℒ(X) = e^{nĀβ} (2π)^{−n} ∫_{ℝⁿ} e^{−Λ(Ω_n + Υ_n)} Π_i e^{iA_i y_i} dy
//! Ω_n + Υ_n = Σ_i c1_i h_i + c2_i g_i
//! c1_i = ψ₁(β + iy_i) + (β² + y_i²)/2
//! c2_i = ψ₂(β + iy_i) + ρ(β + iy_i) + (β² + y_i²)/2
//! ```
//!
//! with A_i = X_i − μΔ. The y-integral is truncated to [−R, R]ⁿ, with R
//! grown until the boundary modulus times the box volume is below tolerance.
//! For n = 1 the integral is computed adaptively; for n ≤ 3 on a tensor
//! lattice of Gauss–Legendre panels. Because e^{−Λ} does not depend on the
//! data, one lattice of e^{−Λ} values serves every block and every grid point
//! that shares the parameters; only the phases e^{iA·y} change.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::levy::LevySpec;
use crate::quad::{adaptive, graded_breaks, OscillatoryRule, Tolerance};
use rayon::prelude::*;
use crate::timechange::{ProductKernel, Realization, VolSpec};

pub use crate::quad::QuadConfig;

/// Largest block dimension handled by the exact joint integral.
pub const MAX_DIM: usize = 3;

const METHOD_LATTICE: &str = "graded-filon-gauss-legendre";

/// Ratio |Im/Re| above which the integral is flagged as non-real.
pub const IM_RATIO_LIMIT: f64 = 1e-6;

/// Scalar parameters plus the Lévy and volatility specifications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Drift per unit time (r − q).
    pub mu: f64,
    /// Volatility-risk loading on τ* = τ + γ.
    pub beta: f64,
    /// Leverage loading on γ (α − β).
    pub rho: f64,
    /// Interval width Δ.
    pub delta: f64,
    #[serde(default)]
    pub levy1: LevySpec,
    #[serde(default)]
    pub levy2: LevySpec,
    pub vol: VolSpec,
}

impl ModelParams {
    /// Checks positivity and that β lies in the analyticity strips of both
    /// Lévy exponents, which keeps Λ(Ω_n + Υ_n) finite.
    pub fn validate(&self, field: &str) -> Result<()> {
        for (name, v) in [("mu", self.mu), ("beta", self.beta), ("rho", self.rho)] {
            if !v.is_finite() {
                return Err(Error::invalid(format!("{field}.{name}"), "must be finite"));
            }
        }
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return Err(Error::invalid(format!("{field}.delta"), format!("must be > 0, got {}", self.delta)));
        }
        self.levy1.validate(&format!("{field}.levy1"))?;
        self.levy2.validate(&format!("{field}.levy2"))?;
        self.vol.validate(&format!("{field}.vol"))?;
        for (name, spec) in [("levy1", &self.levy1), ("levy2", &self.levy2)] {
            let strip = spec.strip();
            if !strip.contains(self.beta) {
                return Err(Error::invalid(
                    format!("{field}.beta"),
                    format!("β = {} lies outside the strip ({}, {}) of {name}", self.beta, strip.lo, strip.hi),
                ));
            }
        }
        Ok(())
    }
}

/// A return series X_1..X_n.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Observations {
    x: Vec<f64>,
}

impl Observations {
    pub fn new(x: Vec<f64>) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::invalid("observations", "need at least one return"));
        }
        if let Some(v) = x.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid("observations", format!("non-finite return {v}")));
        }
        Ok(Observations { x })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.x
    }

    /// A_i = X_i − μΔ.
    pub fn centered(&self, mu: f64, delta: f64) -> Vec<f64> {
        self.x.iter().map(|x| x - mu * delta).collect()
    }

    /// Ā = Σ A_i / n.
    pub fn mean_centered(&self, mu: f64, delta: f64) -> f64 {
        self.centered(mu, delta).iter().sum::<f64>() / self.x.len() as f64
    }

    /// Splits into consecutive non-overlapping blocks of `size` returns,
    /// dropping an incomplete trailing block.
    pub fn blocks(&self, size: usize) -> Vec<Observations> {
        self.x
            .chunks_exact(size.max(1))
            .map(|c| Observations { x: c.to_vec() })
            .collect()
    }
}

/// Law of the background random measure.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeasureKind {
    /// Poisson with the Γ-OU intensity implied by `ModelParams::vol`.
    #[default]
    Poisson,
    /// A fixed realization: e^{−Λ(f)} is replaced by e^{−N(f)}.
    Deterministic(Realization),
}

/// (c1, c2) at the points β + iy_k.
pub fn coefficients(params: &ModelParams, y: &[f64]) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
    let mut c1 = Vec::with_capacity(y.len());
    let mut c2 = Vec::with_capacity(y.len());
    for &yk in y {
        let (a, b) = coefficient_pair(params, yk)?;
        c1.push(a);
        c2.push(b);
    }
    Ok((c1, c2))
}

fn coefficient_pair(params: &ModelParams, y: f64) -> Result<(Complex64, Complex64)> {
    let w = Complex64::new(params.beta, y);
    let quad = 0.5 * (params.beta * params.beta + y * y);
    let c1 = params.levy1.psi(w)? + quad;
    let c2 = params.levy2.psi(w)? + w * params.rho + quad;
    Ok((c1, c2))
}

/// The kernel Ω_n + Υ_n at the point y.
pub fn omega_upsilon(params: &ModelParams, y: &[f64]) -> Result<ProductKernel> {
    let (c1, c2) = coefficients(params, y)?;
    Ok(params.vol.kernel(params.delta, &c1, &c2))
}

/// Conditional Normal density of X_i given (J1, J2, τ_i, γ_i), written in
/// the factored form e^{ϖβ}(2πτ*)^{−1/2} e^{−ϖ²/(2τ*)} e^{−τ*β²/2} with
/// ϖ = A_i − J1 − J2 − ργ_i.
pub fn conditional_density(params: &ModelParams, x: f64, j1: f64, j2: f64, tau: f64, gamma: f64) -> Result<f64> {
    let tau_star = tau + gamma;
    if !(tau_star > 0.0) {
        return Err(Error::DegenerateVariance);
    }
    let varpi = x - params.mu * params.delta - j1 - j2 - params.rho * gamma;
    let beta = params.beta;
    Ok((varpi * beta - varpi * varpi / (2.0 * tau_star) - tau_star * beta * beta / 2.0).exp()
        / (2.0 * PI * tau_star).sqrt())
}

/// log φ(x | mean, var).
pub fn normal_log_pdf(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * (2.0 * PI * var).ln() - (x - mean).powi(2) / (2.0 * var)
}

/// (2π)^{−1/2} ∫_{−R}^{R} e^{iϖy − τ*y²/2} dy, the Gaussian characteristic
/// function identity used to linearize the conditional density.
pub fn gaussian_fourier_integral(varpi: f64, tau_star: f64, radius: f64, tol: f64) -> Result<Complex64> {
    let panels = (2.0 * radius * tau_star.sqrt()).ceil().max(1.0) as usize;
    let breaks: Vec<f64> = (0..=panels).map(|k| -radius + 2.0 * radius * k as f64 / panels as f64).collect();
    let r = adaptive(
        |y| Complex64::from_polar((-tau_star * y * y / 2.0).exp(), varpi * y),
        &breaks,
        Tolerance {
            abs: tol,
            rel: 0.0,
            max_evals: 1_000_000,
        },
    )?;
    Ok(r.value / (2.0 * PI).sqrt())
}

/// Evaluates y ↦ E[e^{−N(Ω_n + Υ_n)}] for a fixed parameter set.
enum Transform<'a> {
    Poisson {
        q: &'a QuadConfig,
    },
    Fixed {
        tau: Vec<f64>,
        gamma: Vec<f64>,
    },
}

impl<'a> Transform<'a> {
    fn new(params: &ModelParams, measure: &MeasureKind, n: usize, q: &'a QuadConfig) -> Result<Self> {
        match measure {
            MeasureKind::Poisson => Ok(Transform::Poisson { q }),
            MeasureKind::Deterministic(r) => {
                // N(Σ c1_i h_i + c2_i g_i) = Σ c1_i τ_i + c2_i γ_i by linearity of the point sum.
                let (tau, gamma) = params.vol.time_changes(r, n, params.delta);
                if tau.iter().zip(&gamma).any(|(t, g)| !(t + g > 0.0)) {
                    return Err(Error::Degenerate);
                }
                Ok(Transform::Fixed { tau, gamma })
            }
        }
    }

    fn eval_coeffs(&self, params: &ModelParams, c1: &[Complex64], c2: &[Complex64]) -> Result<Complex64> {
        match self {
            Transform::Poisson { q, .. } => {
                let kernel = params.vol.kernel(params.delta, c1, c2);
                Ok((-params.vol.laplace(&kernel, q)?).exp())
            }
            Transform::Fixed { tau, gamma } => {
                let s: Complex64 = c1
                    .iter()
                    .zip(c2)
                    .zip(tau.iter().zip(gamma))
                    .map(|((a, b), (t, g))| a * t + b * g)
                    .sum();
                Ok((-s).exp())
            }
        }
    }

    fn eval(&self, params: &ModelParams, y: &[f64]) -> Result<Complex64> {
        let (c1, c2) = coefficients(params, y)?;
        self.eval_coeffs(params, &c1, &c2)
    }
}

/// Geometry of the truncated y-integral.
///
/// Axis k is laid out as y_k = σ_k·z with z on graded panels over
/// [−radius, radius], where σ_k is the curvature length of log|e^{−Λ}|
/// along that axis at the origin. The box is therefore
/// Π_k [−σ_k·radius, σ_k·radius].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticePlan {
    pub dim: usize,
    /// Truncation radius in scaled units.
    pub radius: f64,
    /// Per-axis scales σ_k.
    pub scales: Vec<f64>,
    /// Panel width near the origin, in scaled units.
    pub core_width: f64,
    /// Panel width relative to |z| away from the origin.
    pub growth: f64,
    pub order: usize,
    /// max |e^{−Λ}| on the boundary of the box times its volume over (2π)ⁿ.
    pub tail_estimate: f64,
    /// Empirical decay exponent of |e^{−Λ}| between half and full radius.
    pub decay_exponent: Option<f64>,
    pub warnings: Vec<String>,
}

impl LatticePlan {
    /// Panel boundaries on axis k.
    pub fn breaks(&self, k: usize) -> Vec<f64> {
        graded_breaks(self.radius, self.core_width, self.growth)
            .into_iter()
            .map(|z| z * self.scales[k])
            .collect()
    }

    pub fn nodes_per_axis(&self) -> usize {
        (graded_breaks(self.radius, self.core_width, self.growth).len() - 1) * self.order
    }
}

/// Quadrature diagnostics attached to every likelihood evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub method: String,
    pub plan: LatticePlan,
    /// Integrand evaluations (adaptive) or lattice nodes.
    pub evaluations: usize,
    /// Adaptive error estimate on the density scale, when available.
    pub quad_error: Option<f64>,
    /// Largest |Im/Re| of the integral over the evaluations performed.
    pub max_im_ratio: f64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogLikelihood {
    pub value: f64,
    pub diagnostics: Diagnostics,
}

fn directions(n: usize) -> Vec<Vec<f64>> {
    let total = 3usize.pow(n as u32);
    (0..total)
        .map(|mut k| {
            (0..n)
                .map(|_| {
                    let d = (k % 3) as f64 - 1.0;
                    k /= 3;
                    d
                })
                .collect::<Vec<f64>>()
        })
        .filter(|d| d.iter().any(|v| *v != 0.0))
        .collect()
}

fn boundary_modulus(t: &Transform<'_>, params: &ModelParams, dirs: &[Vec<f64>], scales: &[f64], r: f64) -> Result<f64> {
    let mut m: f64 = 0.0;
    for d in dirs {
        let y: Vec<f64> = d.iter().zip(scales).map(|(v, s)| v * s * r).collect();
        m = m.max(t.eval(params, &y)?.norm());
    }
    Ok(m)
}

fn plan_with(t: &Transform<'_>, params: &ModelParams, n: usize, q: &QuadConfig) -> Result<LatticePlan> {
    // Curvature of log|e^{−Λ}| at the origin sets the scale of each axis.
    let origin = t.eval(params, &vec![0.0; n])?.norm().ln();
    let step = 1e-3;
    let mut scales = Vec::with_capacity(n);
    for k in 0..n {
        let mut y = vec![0.0; n];
        y[k] = step;
        let curvature = 2.0 * (origin - t.eval(params, &y)?.norm().ln()) / (step * step);
        scales.push(if curvature > 0.0 { 1.0 / curvature.sqrt() } else { 1.0 });
    }
    let sigma_max = scales.iter().cloned().fold(0.0, f64::max);
    let core_width = (0.5f64).min(q.panel_width / sigma_max);

    let dirs = directions(n);
    let volume = |r: f64| scales.iter().map(|s| 2.0 * s * r / (2.0 * PI)).product::<f64>();
    let mut warnings = Vec::new();
    let (radius, tail) = match q.radius {
        // A fixed radius applies to the widest axis.
        Some(r) => {
            let z = r / sigma_max;
            (z, boundary_modulus(t, params, &dirs, &scales, z)? * volume(z))
        }
        None => {
            let mut r: f64 = 2.0;
            loop {
                let tail = boundary_modulus(t, params, &dirs, &scales, r)? * volume(r);
                if tail <= q.tol {
                    break (r, tail);
                }
                if r * sigma_max >= q.max_radius {
                    return Err(Error::TruncationInsufficient {
                        radius: r * sigma_max,
                        tail,
                        tol: q.tol,
                    });
                }
                r = (r * 1.25).min(q.max_radius / sigma_max);
            }
        }
    };
    if tail > q.tol {
        return Err(Error::TruncationInsufficient {
            radius: radius * sigma_max,
            tail,
            tol: q.tol,
        });
    }
    let m_half = boundary_modulus(t, params, &dirs, &scales, radius / 2.0)?;
    let m_full = boundary_modulus(t, params, &dirs, &scales, radius)?;
    let decay_exponent = (m_half > 0.0 && m_full > 0.0).then(|| (m_half / m_full).log2());
    if let Some(p) = decay_exponent {
        if p <= n as f64 {
            warnings.push(format!(
                "measured decay exponent {p:.2} ≤ dimension {n}: the integral may converge only marginally"
            ));
        }
    }
    Ok(LatticePlan {
        dim: n,
        radius,
        scales,
        core_width,
        growth: q.panel_growth,
        order: q.lattice_order,
        tail_estimate: tail,
        decay_exponent,
        warnings,
    })
}

/// Chooses truncation radius and panel layout for blocks of dimension `n`.
/// The layout does not depend on the data: the phases are integrated
/// exactly on every panel.
pub fn plan_lattice(params: &ModelParams, measure: &MeasureKind, n: usize, q: &QuadConfig) -> Result<LatticePlan> {
    params.validate("model")?;
    q.validate("quadrature")?;
    check_dim(n)?;
    let t = Transform::new(params, measure, n, q)?;
    plan_with(&t, params, n, q)
}

fn check_dim(n: usize) -> Result<()> {
    if n == 0 || n > MAX_DIM {
        return Err(Error::DimensionCap { n, cap: MAX_DIM });
    }
    Ok(())
}

/// e^{−Λ} values on the tensor lattice of panel nodes.
struct Lattice {
    dim: usize,
    rules: Vec<OscillatoryRule>,
    values: Vec<Complex64>,
}

impl Lattice {
    fn build(t: &Transform<'_>, params: &ModelParams, plan: &LatticePlan, q: &QuadConfig) -> Result<Self> {
        let n = plan.dim;
        let rules: Vec<OscillatoryRule> = (0..n).map(|k| OscillatoryRule::new(&plan.breaks(k), plan.order)).collect();
        let m = rules[0].nodes().len();
        let total = m.checked_pow(n as u32).unwrap_or(usize::MAX);
        if total > q.max_evals {
            return Err(Error::BudgetExceeded {
                evals: total,
                err_estimate: f64::NAN,
            });
        }
        // c1, c2 depend on one coordinate each: evaluate ψ once per node.
        let pairs: Vec<Vec<(Complex64, Complex64)>> = rules
            .iter()
            .map(|r| r.nodes().iter().map(|&y| coefficient_pair(params, y)).collect::<Result<_>>())
            .collect::<Result<_>>()?;
        let values = (0..total)
            .into_par_iter()
            .map(|flat| {
                let mut c1 = [Complex64::new(0.0, 0.0); MAX_DIM];
                let mut c2 = c1;
                let mut rest = flat;
                for k in (0..n).rev() {
                    let j = rest % m;
                    rest /= m;
                    c1[k] = pairs[k][j].0;
                    c2[k] = pairs[k][j].1;
                }
                t.eval_coeffs(params, &c1[..n], &c2[..n])
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Lattice { dim: n, rules, values })
    }

    /// ∫ e^{−Λ(y)} e^{iA·y} dy over the truncated box.
    fn integrate(&self, a: &[f64]) -> Complex64 {
        debug_assert_eq!(a.len(), self.dim);
        let m = self.rules[0].nodes().len();
        let weights: Vec<Vec<Complex64>> = a.iter().zip(&self.rules).map(|(&ak, r)| r.weights(ak)).collect();
        let reduce = |v: &[Complex64], w: &[Complex64]| -> Vec<Complex64> {
            v.chunks_exact(m)
                .map(|row| row.iter().zip(w).map(|(x, p)| x * p).sum())
                .collect()
        };
        let mut buf = reduce(&self.values, &weights[self.dim - 1]);
        for k in (0..self.dim - 1).rev() {
            buf = reduce(&buf, &weights[k]);
        }
        buf[0]
    }
}

fn im_ratio(v: Complex64) -> f64 {
    if v.re == 0.0 {
        f64::INFINITY
    } else {
        (v.im / v.re).abs()
    }
}

fn finish(diag: &mut Diagnostics, ratio: f64) {
    diag.max_im_ratio = diag.max_im_ratio.max(ratio);
    if ratio > IM_RATIO_LIMIT && !diag.warnings.iter().any(|w| w.starts_with("non-real")) {
        diag.warnings
            .push(format!("non-real integral: |Im/Re| = {ratio:.2e} exceeds {IM_RATIO_LIMIT:e}"));
    }
}

fn log_density(block: &[f64], beta: f64, integral: Complex64) -> Result<f64> {
    let n = block.len() as f64;
    if !(integral.re > 0.0) {
        return Err(Error::NonPositiveDensity {
            value: integral.re * (block.iter().sum::<f64>() * beta).exp() / (2.0 * PI).powf(n),
        });
    }
    // e^{nĀβ} applied in log space.
    Ok(block.iter().sum::<f64>() * beta - n * (2.0 * PI).ln() + integral.re.ln())
}

/// Exact log-likelihood of one block of n ≤ 3 returns.
pub fn log_likelihood(
    obs: &Observations,
    params: &ModelParams,
    measure: &MeasureKind,
    q: &QuadConfig,
) -> Result<LogLikelihood> {
    params.validate("model")?;
    q.validate("quadrature")?;
    let n = obs.len();
    check_dim(n)?;
    let a = obs.centered(params.mu, params.delta);
    let t = Transform::new(params, measure, n, q)?;
    let plan = plan_with(&t, params, n, q)?;
    let mut diag = Diagnostics {
        method: String::new(),
        warnings: plan.warnings.clone(),
        plan,
        evaluations: 0,
        quad_error: None,
        max_im_ratio: 0.0,
    };
    let integral = if n == 1 {
        // Start from panels of at most half a period of the phase.
        let axis = diag.plan.breaks(0);
        let mut breaks = vec![axis[0]];
        for w in axis.windows(2) {
            let pieces = ((w[1] - w[0]) * a[0].abs() / PI).ceil().max(1.0) as usize;
            breaks.extend((1..=pieces).map(|k| w[0] + (w[1] - w[0]) * k as f64 / pieces as f64));
        }
        let scale = (a[0] * params.beta).exp() / (2.0 * PI);
        let failure = std::cell::RefCell::new(None);
        let r = adaptive(
            |y| match t.eval(params, &[y]) {
                Ok(v) => v * Complex64::from_polar(1.0, a[0] * y),
                Err(e) => {
                    failure.borrow_mut().get_or_insert(e);
                    Complex64::new(0.0, 0.0)
                }
            },
            &breaks,
            Tolerance {
                abs: 0.1 * q.tol / scale,
                rel: 1e-13,
                max_evals: q.max_evals,
            },
        )?;
        if let Some(e) = failure.into_inner() {
            return Err(e);
        }
        diag.method = "adaptive-gauss-kronrod".into();
        diag.evaluations = r.evals;
        diag.quad_error = Some(r.abs_err * scale);
        r.value
    } else {
        let lattice = Lattice::build(&t, params, &diag.plan, q)?;
        diag.method = METHOD_LATTICE.into();
        diag.evaluations = lattice.values.len();
        lattice.integrate(&a)
    };
    finish(&mut diag, im_ratio(integral));
    Ok(LogLikelihood {
        value: log_density(&a, params.beta, integral)?,
        diagnostics: diag,
    })
}

/// Composite log-likelihood: the sum of exact block log-likelihoods over
/// equally sized blocks, all sharing one lattice of e^{−Λ} values. Pass a
/// `plan` to freeze the lattice geometry (e.g. across an optimization).
pub fn composite_log_likelihood(
    blocks: &[Observations],
    params: &ModelParams,
    measure: &MeasureKind,
    q: &QuadConfig,
    plan: Option<&LatticePlan>,
) -> Result<LogLikelihood> {
    params.validate("model")?;
    let n = blocks.first().map_or(0, |b| b.len());
    check_dim(n)?;
    if blocks.iter().any(|b| b.len() != n) {
        return Err(Error::invalid("blocks", "all blocks must have the same length"));
    }
    let centered: Vec<Vec<f64>> = blocks.iter().map(|b| b.centered(params.mu, params.delta)).collect();
    let t = Transform::new(params, measure, n, q)?;
    let plan = match plan {
        Some(p) => p.clone(),
        None => {
            plan_with(&t, params, n, q)?
        }
    };
    let lattice = Lattice::build(&t, params, &plan, q)?;
    let mut diag = Diagnostics {
        method: METHOD_LATTICE.into(),
        warnings: plan.warnings.clone(),
        evaluations: lattice.values.len(),
        plan,
        quad_error: None,
        max_im_ratio: 0.0,
    };
    let mut total = 0.0;
    for a in &centered {
        let integral = lattice.integrate(a);
        finish(&mut diag, im_ratio(integral));
        total += log_density(a, params.beta, integral)?;
    }
    Ok(LogLikelihood {
        value: total,
        diagnostics: diag,
    })
}

/// Density values of a single return on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    pub x: Vec<f64>,
    pub density: Vec<f64>,
    pub diagnostics: Diagnostics,
}

impl DensityGrid {
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["x", "density"])?;
        for (x, d) in self.x.iter().zip(&self.density) {
            wtr.write_record([x.to_string(), d.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Trapezoidal integral of the density over the grid.
    pub fn trapezoid(&self) -> f64 {
        self.x
            .windows(2)
            .zip(self.density.windows(2))
            .map(|(x, d)| 0.5 * (x[1] - x[0]) * (d[0] + d[1]))
            .sum()
    }
}

/// Marginal density of one return on `grid` under the Poisson measure.
pub fn marginal_density_grid(grid: &[f64], params: &ModelParams, q: &QuadConfig) -> Result<DensityGrid> {
    marginal_density_grid_with(grid, params, &MeasureKind::Poisson, q)
}

/// As [`marginal_density_grid`] for an arbitrary measure.
pub fn marginal_density_grid_with(
    grid: &[f64],
    params: &ModelParams,
    measure: &MeasureKind,
    q: &QuadConfig,
) -> Result<DensityGrid> {
    params.validate("model")?;
    q.validate("quadrature")?;
    let shift = params.mu * params.delta;
    let t = Transform::new(params, measure, 1, q)?;
    let plan = plan_with(&t, params, 1, q)?;
    let lattice = Lattice::build(&t, params, &plan, q)?;
    let mut diag = Diagnostics {
        method: METHOD_LATTICE.into(),
        warnings: plan.warnings.clone(),
        evaluations: lattice.values.len(),
        plan,
        quad_error: None,
        max_im_ratio: 0.0,
    };
    let mut density = Vec::with_capacity(grid.len());
    for &x in grid {
        let a = x - shift;
        let integral = lattice.integrate(&[a]);
        finish(&mut diag, im_ratio(integral));
        density.push((a * params.beta).exp() / (2.0 * PI) * integral.re);
    }
    Ok(DensityGrid {
        x: grid.to_vec(),
        density,
        diagnostics: diag,
    })
}

/// Joint characteristic function E[e^{iΣ u_k X_k}] of n consecutive returns,
/// e^{iΣu_kμΔ}·e^{−Λ(Σ_k d1_k h_k + d2_k g_k)} with
/// d1 = ψ₁(−iu) − iuβ + u²/2 and d2 = ψ₂(−iu) − iu(β + ρ) + u²/2.
pub fn characteristic_function(
    params: &ModelParams,
    measure: &MeasureKind,
    u: &[f64],
    q: &QuadConfig,
) -> Result<Complex64> {
    params.validate("model")?;
    let i = Complex64::new(0.0, 1.0);
    let mut d1 = Vec::with_capacity(u.len());
    let mut d2 = Vec::with_capacity(u.len());
    for &uk in u {
        let w = Complex64::new(0.0, -uk);
        d1.push(params.levy1.psi(w)? - i * uk * params.beta + 0.5 * uk * uk);
        d2.push(params.levy2.psi(w)? - i * uk * (params.beta + params.rho) + 0.5 * uk * uk);
    }
    let exponent = match measure {
        MeasureKind::Poisson => params.vol.laplace(&params.vol.kernel(params.delta, &d1, &d2), q)?,
        MeasureKind::Deterministic(r) => {
            let (tau, gamma) = params.vol.time_changes(r, u.len(), params.delta);
            d1.iter()
                .zip(&d2)
                .zip(tau.iter().zip(&gamma))
                .map(|((a, b), (t, g))| a * t + b * g)
                .sum()
        }
    };
    let drift: f64 = u.iter().sum::<f64>() * params.mu * params.delta;
    Ok(Complex64::from_polar(1.0, drift) * (-exponent).exp())
}
