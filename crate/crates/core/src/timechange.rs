//! Γ-OU integrated-volatility time changes.
//!
//! A background jump at time s with size x raises the instantaneous variance
//! by x·e^{−λ(u−s)} for u ≥ s, so its contribution to the integrated variance
//! over (t1, t2] is x·ε(s; t1, t2) with ε given by [`ou_weight`]. The interval
//! time changes are then τ_i = N(h_i) and γ_i = N(g_i) with
//! h_i(s, x) = x·ε(s; (i−1)Δ, iΔ) on the volatility factor and g_i the same
//! kernel on the leverage factor (or a multiple of h_i when the two share one
//! factor).

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prm::{
    laplace_functional_exp_marks, laplace_functional_generic, sample_points, IntensityMeasure, MarkLaw, PointSet,
    SpaceFunction, TimeRate,
};
use crate::quad::{adaptive, QuadConfig, Tolerance};

/// Default pre-sample depth: e^{−λ·S_max} = 1e-10.
pub const WARMUP_DECAY: f64 = 1e-10;

/// Integrated OU weight ε(s; t1, t2).
pub fn ou_weight(s: f64, t1: f64, t2: f64, lambda: f64) -> f64 {
    if s >= t2 {
        0.0
    } else if s > t1 {
        -(-lambda * (t2 - s)).exp_m1() / lambda
    } else {
        (-lambda * (t1 - s)).exp() * -(-lambda * (t2 - t1)).exp_m1() / lambda
    }
}

/// N(f) = Σ_j f(s_j, x_j) for a realized point set.
pub fn functional_from_points<F: Fn(f64, f64) -> f64>(points: &PointSet, kernel: F) -> f64 {
    points.functional(kernel)
}

/// One Γ-OU factor: jumps at rate a·λ with Exponential(b) sizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuFactor {
    pub lambda: f64,
    pub a: f64,
    pub b: f64,
}

impl OuFactor {
    pub fn intensity(&self, s_max: f64, horizon: f64) -> IntensityMeasure {
        IntensityMeasure {
            time_rate: TimeRate::constant(self.a * self.lambda, -s_max, horizon),
            marks: MarkLaw::Exponential { rate: self.b },
        }
    }
}

/// How the leverage time change γ relates to the volatility time change τ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum FactorMode {
    /// γ_i = κ·τ_i, driven by the same jumps.
    Common { kappa: f64 },
    /// γ_i built from an independent second Γ-OU factor, scaled by κ.
    Independent {
        lambda: f64,
        a: f64,
        b: f64,
        #[serde(default = "unit")]
        kappa: f64,
    },
}

fn unit() -> f64 {
    1.0
}

impl Default for FactorMode {
    fn default() -> Self {
        FactorMode::Common { kappa: 0.0 }
    }
}

/// Which coordinate of the product mark space a point lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Factor {
    Primary,
    Secondary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    H,
    G,
    F,
}

/// Γ-OU volatility specification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VolSpec {
    /// Mean-reversion rate λ.
    pub lambda: f64,
    /// Background jump rate a (per unit of λ-time) and shape of the stationary law.
    pub a: f64,
    /// Exponential mark rate b.
    pub b: f64,
    #[serde(default)]
    pub factor: FactorMode,
    /// Pre-sample window; defaults to ln(1e10)/λ_min.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_max: Option<f64>,
}

/// Realized points on both factors.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Realization {
    pub primary: PointSet,
    #[serde(default)]
    pub secondary: PointSet,
}

/// x·Σ_i c_i·ε(s; (i−1)Δ, iΔ) with complex coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct OuKernel {
    pub lambda: f64,
    pub delta: f64,
    pub coeffs: Vec<Complex64>,
}

impl OuKernel {
    /// K(s), the kernel per unit mark.
    pub fn k_at(&self, s: f64) -> Complex64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| c * ou_weight(s, i as f64 * self.delta, (i + 1) as f64 * self.delta, self.lambda))
            .sum()
    }

    pub fn horizon(&self) -> f64 {
        self.coeffs.len() as f64 * self.delta
    }

    /// Smallest Re K(s) over the support, sampled densely on every interval
    /// and at the pre-sample limit.
    pub fn min_real(&self) -> f64 {
        let n = self.coeffs.len();
        let mut m = self.k_at(0.0).re;
        for i in 0..n {
            for j in 0..=16 {
                let s = (i as f64 + j as f64 / 16.0) * self.delta;
                m = m.min(self.k_at(s).re);
            }
        }
        m
    }
}

impl SpaceFunction for OuKernel {
    fn eval(&self, s: f64, x: f64) -> Complex64 {
        self.k_at(s) * x
    }

    fn kinks(&self) -> Vec<f64> {
        (0..=self.coeffs.len()).map(|i| i as f64 * self.delta).collect()
    }
}

/// A kernel on the product space: one OU kernel per factor.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductKernel {
    pub primary: OuKernel,
    pub secondary: Option<OuKernel>,
}

impl ProductKernel {
    pub fn eval(&self, factor: Factor, s: f64, x: f64) -> Complex64 {
        match factor {
            Factor::Primary => self.primary.eval(s, x),
            Factor::Secondary => self
                .secondary
                .as_ref()
                .map_or(Complex64::new(0.0, 0.0), |k| k.eval(s, x)),
        }
    }

    /// N(f) for a realized pair of point sets.
    pub fn apply(&self, r: &Realization) -> Complex64 {
        let mut total: Complex64 = r.primary.points.iter().map(|p| self.primary.eval(p.s, p.x)).sum();
        if let Some(k) = &self.secondary {
            total += r.secondary.points.iter().map(|p| k.eval(p.s, p.x)).sum::<Complex64>();
        }
        total
    }

    pub fn min_real(&self) -> f64 {
        let m = self.primary.min_real();
        self.secondary.as_ref().map_or(m, |k| m.min(k.min_real()))
    }
}

impl VolSpec {
    pub fn validate(&self, field: &str) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(format!("{field}.{name}"), format!("must be > 0, got {v}")))
            }
        };
        positive("lambda", self.lambda)?;
        positive("a", self.a)?;
        positive("b", self.b)?;
        if let Some(s) = self.s_max {
            if !(s.is_finite() && s >= 0.0) {
                return Err(Error::invalid(format!("{field}.s_max"), format!("must be ≥ 0, got {s}")));
            }
        }
        match self.factor {
            FactorMode::Common { kappa } => {
                if !(kappa.is_finite() && kappa >= 0.0) {
                    return Err(Error::invalid(format!("{field}.factor.kappa"), format!("must be ≥ 0, got {kappa}")));
                }
            }
            FactorMode::Independent { lambda, a, b, kappa } => {
                positive("factor.lambda", lambda)?;
                positive("factor.a", a)?;
                positive("factor.b", b)?;
                if !(kappa.is_finite() && kappa >= 0.0) {
                    return Err(Error::invalid(format!("{field}.factor.kappa"), format!("must be ≥ 0, got {kappa}")));
                }
            }
        }
        Ok(())
    }

    pub fn primary(&self) -> OuFactor {
        OuFactor {
            lambda: self.lambda,
            a: self.a,
            b: self.b,
        }
    }

    pub fn secondary(&self) -> Option<OuFactor> {
        match self.factor {
            FactorMode::Common { .. } => None,
            FactorMode::Independent { lambda, a, b, .. } => Some(OuFactor { lambda, a, b }),
        }
    }

    pub fn kappa(&self) -> f64 {
        match self.factor {
            FactorMode::Common { kappa } | FactorMode::Independent { kappa, .. } => kappa,
        }
    }

    pub fn s_max(&self) -> f64 {
        self.s_max.unwrap_or_else(|| {
            let lam = self.secondary().map_or(self.lambda, |f| f.lambda.min(self.lambda));
            -WARMUP_DECAY.ln() / lam
        })
    }

    /// Kernel Σ_i ch_i·h_i + cg_i·g_i.
    pub fn kernel(&self, delta: f64, ch: &[Complex64], cg: &[Complex64]) -> ProductKernel {
        debug_assert_eq!(ch.len(), cg.len());
        let kappa = self.kappa();
        match self.secondary() {
            None => ProductKernel {
                primary: OuKernel {
                    lambda: self.lambda,
                    delta,
                    coeffs: ch.iter().zip(cg).map(|(h, g)| h + g * kappa).collect(),
                },
                secondary: None,
            },
            Some(sec) => ProductKernel {
                primary: OuKernel {
                    lambda: self.lambda,
                    delta,
                    coeffs: ch.to_vec(),
                },
                secondary: Some(OuKernel {
                    lambda: sec.lambda,
                    delta,
                    coeffs: cg.iter().map(|g| g * kappa).collect(),
                }),
            },
        }
    }

    /// h_i, g_i or f_i = h_i + g_i for interval `i` (1-based).
    pub fn interval_kernel(&self, i: usize, delta: f64, which: Which) -> ProductKernel {
        assert!(i >= 1, "intervals are numbered from 1");
        let zero = Complex64::new(0.0, 0.0);
        let one = Complex64::new(1.0, 0.0);
        let mut ch = vec![zero; i];
        let mut cg = vec![zero; i];
        match which {
            Which::H => ch[i - 1] = one,
            Which::G => cg[i - 1] = one,
            Which::F => {
                ch[i - 1] = one;
                cg[i - 1] = one;
            }
        }
        self.kernel(delta, &ch, &cg)
    }

    pub fn intensity(&self, factor: Factor, horizon: f64) -> Option<IntensityMeasure> {
        match factor {
            Factor::Primary => Some(self.primary().intensity(self.s_max(), horizon)),
            Factor::Secondary => self.secondary().map(|f| f.intensity(self.s_max(), horizon)),
        }
    }

    /// Λ(f) in closed form (see [`ou_laplace`]), summed over factors.
    pub fn laplace(&self, kernel: &ProductKernel, q: &QuadConfig) -> Result<Complex64> {
        let mut total = ou_laplace(&kernel.primary, &self.primary(), self.s_max(), q)?;
        if let (Some(k), Some(f)) = (&kernel.secondary, self.secondary()) {
            total += ou_laplace(k, &f, self.s_max(), q)?;
        }
        Ok(total)
    }

    /// Λ(f) through the 1-D exponential-mark reduction.
    pub fn laplace_exp_marks(&self, kernel: &ProductKernel, q: &QuadConfig) -> Result<Complex64> {
        let one = |k: &OuKernel, f: OuFactor| {
            let rate = TimeRate::constant(f.a * f.lambda, -self.s_max(), k.horizon());
            laplace_functional_exp_marks(&rate, f.b, &|s| k.k_at(s), &k.kinks(), q).map(|r| r.value)
        };
        let mut total = one(&kernel.primary, self.primary())?;
        if let (Some(k), Some(f)) = (&kernel.secondary, self.secondary()) {
            total += one(k, f)?;
        }
        Ok(total)
    }

    /// Λ(f) through nested 2-D quadrature over (s, x).
    pub fn laplace_generic(&self, kernel: &ProductKernel, q: &QuadConfig) -> Result<Complex64> {
        let mut total = laplace_functional_generic(
            &self.primary().intensity(self.s_max(), kernel.primary.horizon()),
            &kernel.primary,
            q,
        )?
        .value;
        if let (Some(k), Some(f)) = (&kernel.secondary, self.secondary()) {
            total += laplace_functional_generic(&f.intensity(self.s_max(), k.horizon()), k, q)?.value;
        }
        Ok(total)
    }

    pub fn sample<R: Rng + ?Sized>(&self, horizon: f64, rng: &mut R) -> Realization {
        let primary = sample_points(&self.primary().intensity(self.s_max(), horizon), rng);
        let secondary = match self.secondary() {
            Some(f) => sample_points(&f.intensity(self.s_max(), horizon), rng),
            None => PointSet::default(),
        };
        Realization { primary, secondary }
    }

    /// (τ_i, γ_i) for i = 1..n from a realization.
    pub fn time_changes(&self, r: &Realization, n: usize, delta: f64) -> (Vec<f64>, Vec<f64>) {
        let tau: Vec<f64> = (0..n)
            .map(|i| {
                let (t1, t2) = (i as f64 * delta, (i + 1) as f64 * delta);
                functional_from_points(&r.primary, |s, x| x * ou_weight(s, t1, t2, self.lambda))
            })
            .collect();
        let gamma = match self.factor {
            FactorMode::Common { kappa } => tau.iter().map(|t| kappa * t).collect(),
            FactorMode::Independent { lambda, kappa, .. } => (0..n)
                .map(|i| {
                    let (t1, t2) = (i as f64 * delta, (i + 1) as f64 * delta);
                    kappa * functional_from_points(&r.secondary, |s, x| x * ou_weight(s, t1, t2, lambda))
                })
                .collect(),
        };
        (tau, gamma)
    }

    /// Exact (E[τ_i], E[γ_i]) under the truncated pre-sample window.
    pub fn mean_time_changes(&self, i: usize, delta: f64) -> (f64, f64) {
        let s = self.s_max();
        let (t1, t2) = ((i - 1) as f64 * delta, i as f64 * delta);
        let mean = |f: OuFactor| {
            let lost = ((-f.lambda * (t1 + s)).exp() - (-f.lambda * (t2 + s)).exp()) / f.lambda;
            f.a / f.b * (delta - lost)
        };
        let tau = mean(self.primary());
        let gamma = match self.secondary() {
            None => self.kappa() * tau,
            Some(f) => self.kappa() * mean(f),
        };
        (tau, gamma)
    }
}

/// Closed-form Λ(x·K) for one Γ-OU factor.
///
/// On the pre-sample window K(s) = K(0)·e^{λs}; on interval k it has the form
/// K(s) = P + Q·w with w = e^{λ(s − kΔ)}, and
/// ∫ λ(P + Qw)/(b + P + Qw) ds = (P/B)·λΔ + (b/B)·log[(B + Q)/(B + Q e^{−λΔ})]
/// with B = b + P. Because b + K(s) is affine in w, Re(b + K) > 0 at the two
/// ends of a segment certifies it on the whole segment and the principal
/// logarithm needs no branch tracking.
pub fn ou_laplace(kernel: &OuKernel, factor: &OuFactor, s_max: f64, q: &QuadConfig) -> Result<Complex64> {
    let OuFactor { lambda, a, b } = *factor;
    let delta = kernel.delta;
    let c = &kernel.coeffs;
    let n = c.len();
    let zero = Complex64::new(0.0, 0.0);
    if n == 0 {
        return Ok(zero);
    }
    let dl = lambda * delta;
    let decay = (-dl).exp();
    let rise = -(-dl).exp_m1() / lambda;

    // tail[k] = Σ_{j>k} c_j e^{−λ(j−k−1)Δ}(1 − e^{−λΔ})/λ = K(kΔ + Δ) restricted to later intervals.
    let mut tail = vec![zero; n];
    for k in (0..n - 1).rev() {
        tail[k] = c[k + 1] * rise + tail[k + 1] * decay;
    }
    let check = |s: f64, v: Complex64| {
        if v.re <= q.pole_tol {
            Err(Error::PoleProximity { s, modulus: v.norm() })
        } else {
            Ok(())
        }
    };

    let mut total = zero;
    if s_max > 0.0 {
        let k0 = c[0] * rise + tail[0] * decay;
        let lo = k0 * (-lambda * s_max).exp() + b;
        let hi = k0 + b;
        check(-s_max, lo)?;
        check(0.0, hi)?;
        total += a * (hi / lo).ln();
    }
    for k in 0..n {
        let p = c[k] / lambda;
        let qk = tail[k] - p;
        let big_b = p + b;
        let right = big_b + qk;
        let left = big_b + qk * decay;
        let (t1, t2) = (k as f64 * delta, (k + 1) as f64 * delta);
        check(t1, left)?;
        check(t2, right)?;
        if big_b.norm() > 1e-8 * b {
            total += a * (p / big_b * dl + b / big_b * (right / left).ln());
        } else {
            // B ≈ 0: the partial fractions degenerate; integrate directly.
            let r = adaptive(
                |s| {
                    let ks = p + qk * (lambda * (s - t2)).exp();
                    ks / (ks + b) * (a * lambda)
                },
                &[t1, t2],
                Tolerance {
                    abs: q.lambda_tol,
                    rel: 0.0,
                    max_evals: q.max_evals,
                },
            )?;
            total += r.value;
        }
    }
    Ok(total)
}
