//! Poisson random measures on the mark space (jump time s) × (jump size x > 0).
//!
//! Λ(f) = ∫(1 − e^{−f}) dν is evaluated either by a nested 2-D adaptive
//! quadrature that works for any mark law, or by the 1-D reduction that is
//! available when f(s, x) = x·K(s) and the marks are Exponential(b):
//! ∫(1 − e^{−xK}) b e^{−bx} dx = K/(b + K).

use std::cell::RefCell;
use std::io::Write;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::levy::poisson_count;
use crate::quad::{adaptive, Integral, QuadConfig, Tolerance};

/// Law of the jump sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MarkLaw {
    Exponential { rate: f64 },
    /// Discrete law: mass `weights[k]` at `grid[k]`.
    Tabulated { grid: Vec<f64>, weights: Vec<f64> },
}

/// Piecewise-constant time rate: `rates[k]` on `[knots[k], knots[k+1])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeRate {
    pub knots: Vec<f64>,
    pub rates: Vec<f64>,
}

impl TimeRate {
    pub fn constant(rate: f64, lo: f64, hi: f64) -> Self {
        TimeRate {
            knots: vec![lo, hi],
            rates: vec![rate],
        }
    }

    pub fn at(&self, s: f64) -> f64 {
        if s < self.knots[0] || s > *self.knots.last().unwrap() {
            return 0.0;
        }
        let k = self.knots.partition_point(|&t| t <= s).saturating_sub(1);
        self.rates[k.min(self.rates.len() - 1)]
    }

    pub fn mass(&self) -> f64 {
        self.knots
            .windows(2)
            .zip(&self.rates)
            .map(|(w, r)| r * (w[1] - w[0]))
            .sum()
    }
}

/// Mean measure ν(ds, dx) = r(s) ds · marks(dx) on [−S_max, horizon] × (0, ∞).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntensityMeasure {
    pub time_rate: TimeRate,
    pub marks: MarkLaw,
}

impl IntensityMeasure {
    pub fn new(time_rate: TimeRate, marks: MarkLaw) -> Result<Self> {
        let nu = IntensityMeasure { time_rate, marks };
        nu.validate()?;
        Ok(nu)
    }

    pub fn validate(&self) -> Result<()> {
        let tr = &self.time_rate;
        if tr.knots.len() < 2 || tr.rates.len() + 1 != tr.knots.len() {
            return Err(Error::invalid("time_rate", "need k+1 knots for k rates"));
        }
        if tr.knots.windows(2).any(|w| !(w[1] > w[0])) || tr.knots.iter().any(|t| !t.is_finite()) {
            return Err(Error::invalid("time_rate.knots", "must be finite and strictly increasing"));
        }
        if tr.rates.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return Err(Error::invalid("time_rate.rates", "must be finite and ≥ 0"));
        }
        match &self.marks {
            MarkLaw::Exponential { rate } if !(rate.is_finite() && *rate > 0.0) => {
                Err(Error::invalid("marks.rate", format!("must be > 0, got {rate}")))
            }
            MarkLaw::Tabulated { grid, weights } => {
                if grid.is_empty() || grid.len() != weights.len() {
                    return Err(Error::invalid("marks", "grid and weights must be non-empty and equally long"));
                }
                if grid.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                    return Err(Error::invalid("marks.grid", "marks must be > 0"));
                }
                if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
                    return Err(Error::invalid("marks.weights", "weights must be ≥ 0"));
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::invalid("marks.weights", format!("must sum to 1, got {total}")));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Length of the pre-sample window, −(first knot) when it is negative.
    pub fn s_max(&self) -> f64 {
        (-self.time_rate.knots[0]).max(0.0)
    }

    pub fn horizon(&self) -> f64 {
        *self.time_rate.knots.last().unwrap()
    }

    pub fn total_mass(&self) -> f64 {
        self.time_rate.mass()
    }
}

/// An atom of a point set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub s: f64,
    pub x: f64,
}

/// A realization of N: finitely many (time, mark) atoms.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PointSet {
    pub points: Vec<Point>,
}

impl PointSet {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if let Some(p) = points.iter().find(|p| !(p.x > 0.0) || !p.s.is_finite() || !p.x.is_finite()) {
            return Err(Error::invalid("points", format!("marks must be finite and > 0, got {p:?}")));
        }
        Ok(PointSet { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// N(f) = Σ_j f(s_j, x_j).
    pub fn functional<F: Fn(f64, f64) -> f64>(&self, f: F) -> f64 {
        self.points.iter().map(|p| f(p.s, p.x)).sum()
    }

    /// Writes the atoms as CSV with header `s,x`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["s", "x"])?;
        for p in &self.points {
            wtr.write_record([p.s.to_string(), p.x.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// A complex-valued function on the mark space.
pub trait SpaceFunction {
    fn eval(&self, s: f64, x: f64) -> Complex64;

    /// Times at which the function is not smooth in s.
    fn kinks(&self) -> Vec<f64> {
        Vec::new()
    }
}

/// Adapts a closure (plus its kink times) to [`SpaceFunction`].
pub struct FnKernel<F> {
    pub f: F,
    pub kinks: Vec<f64>,
}

impl<F: Fn(f64, f64) -> Complex64> SpaceFunction for FnKernel<F> {
    fn eval(&self, s: f64, x: f64) -> Complex64 {
        (self.f)(s, x)
    }

    fn kinks(&self) -> Vec<f64> {
        self.kinks.clone()
    }
}

fn breakpoints(knots: &[f64], extra: &[f64]) -> Vec<f64> {
    let (lo, hi) = (knots[0], *knots.last().unwrap());
    let mut b: Vec<f64> = knots.iter().chain(extra.iter().filter(|&&t| t > lo && t < hi)).copied().collect();
    b.sort_by(f64::total_cmp);
    b.dedup();
    b
}

/// Λ(f) by nested adaptive quadrature: outer over s, inner over the mark law.
///
/// Requires Re f ≥ 0 on the support; a sampled value below −`q.lambda_tol`
/// aborts with [`Error::NegativeKernel`].
pub fn laplace_functional_generic(nu: &IntensityMeasure, f: &dyn SpaceFunction, q: &QuadConfig) -> Result<Integral> {
    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let check = |s: f64, x: f64, v: Complex64| {
        if v.re < -q.lambda_tol && failure.borrow().is_none() {
            *failure.borrow_mut() = Some(Error::NegativeKernel { s, x, re: v.re });
        }
    };
    let one = Complex64::new(1.0, 0.0);
    let inner_tol = Tolerance {
        abs: 1e-3 * q.lambda_tol / nu.total_mass().max(1.0),
        rel: 1e-14,
        max_evals: 200_000,
    };
    let inner = |s: f64| -> Complex64 {
        match &nu.marks {
            MarkLaw::Exponential { rate } => {
                // x = t / (b(1 − t)) maps t ∈ (0, 1) onto (0, ∞).
                let g = |t: f64| {
                    let om = 1.0 - t;
                    let x = t / (rate * om);
                    let v = f.eval(s, x);
                    check(s, x, v);
                    (one - (-v).exp()) * ((-t / om).exp() / (om * om))
                };
                match adaptive(g, &[0.0, 0.5, 1.0], inner_tol) {
                    Ok(r) => r.value,
                    Err(e) => {
                        failure.borrow_mut().get_or_insert(e);
                        Complex64::new(0.0, 0.0)
                    }
                }
            }
            MarkLaw::Tabulated { grid, weights } => grid
                .iter()
                .zip(weights)
                .map(|(&x, &w)| {
                    let v = f.eval(s, x);
                    check(s, x, v);
                    (one - (-v).exp()) * w
                })
                .sum(),
        }
    };
    let breaks = breakpoints(&nu.time_rate.knots, &f.kinks());
    let outer = adaptive(
        |s| inner(s) * nu.time_rate.at(s),
        &breaks,
        Tolerance {
            abs: q.lambda_tol,
            rel: 0.0,
            max_evals: q.max_evals,
        },
    )?;
    match failure.into_inner() {
        Some(e) => Err(e),
        None => Ok(outer),
    }
}

/// Λ(f) for f(s, x) = x·K(s) with Exponential(`b`) marks:
/// ∫ r(s)·K(s)/(b + K(s)) ds by 1-D adaptive quadrature.
pub fn laplace_functional_exp_marks(
    rate: &TimeRate,
    b: f64,
    k: &dyn Fn(f64) -> Complex64,
    kinks: &[f64],
    q: &QuadConfig,
) -> Result<Integral> {
    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let integrand = |s: f64| {
        let ks = k(s);
        let denom = ks + b;
        if denom.norm() < q.pole_tol {
            failure.borrow_mut().get_or_insert(Error::PoleProximity { s, modulus: denom.norm() });
            return Complex64::new(0.0, 0.0);
        }
        ks / denom * rate.at(s)
    };
    let out = adaptive(
        integrand,
        &breakpoints(&rate.knots, kinks),
        Tolerance {
            abs: q.lambda_tol,
            rel: 0.0,
            max_evals: q.max_evals,
        },
    )?;
    match failure.into_inner() {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

/// Draws a realization of N with mean measure `nu`.
pub fn sample_points<R: Rng + ?Sized>(nu: &IntensityMeasure, rng: &mut R) -> PointSet {
    let tr = &nu.time_rate;
    let masses: Vec<f64> = tr.knots.windows(2).zip(&tr.rates).map(|(w, r)| r * (w[1] - w[0])).collect();
    let total: f64 = masses.iter().sum();
    let count = poisson_count(total, rng);
    let mut points = Vec::with_capacity(count as usize);
    let exp_marks = match &nu.marks {
        MarkLaw::Exponential { rate } => Some(Exp::new(*rate).expect("validated rate")),
        MarkLaw::Tabulated { .. } => None,
    };
    for _ in 0..count {
        // Invert the cumulative time rate.
        let mut u = rng.random::<f64>() * total;
        let mut k = 0;
        while k + 1 < masses.len() && u >= masses[k] {
            u -= masses[k];
            k += 1;
        }
        let s = tr.knots[k] + (u / masses[k]).clamp(0.0, 1.0) * (tr.knots[k + 1] - tr.knots[k]);
        let x = match (&exp_marks, &nu.marks) {
            (Some(e), _) => e.sample(rng),
            (None, MarkLaw::Tabulated { grid, weights }) => {
                let mut v = rng.random::<f64>();
                let mut j = 0;
                while j + 1 < grid.len() && v >= weights[j] {
                    v -= weights[j];
                    j += 1;
                }
                grid[j]
            }
            _ => unreachable!(),
        };
        points.push(Point { s, x });
    }
    PointSet { points }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn q() -> QuadConfig {
        QuadConfig::default()
    }

    #[test]
    fn zero_kernel_has_zero_functional() {
        let nu = IntensityMeasure::new(TimeRate::constant(2.0, -3.0, 1.0), MarkLaw::Exponential { rate: 1.0 }).unwrap();
        let f = FnKernel {
            f: |_s: f64, _x: f64| c(0.0, 0.0),
            kinks: vec![],
        };
        assert_eq!(laplace_functional_generic(&nu, &f, &q()).unwrap().value, c(0.0, 0.0));
        let r = laplace_functional_exp_marks(&nu.time_rate, 1.0, &|_| c(0.0, 0.0), &[], &q()).unwrap();
        assert_eq!(r.value, c(0.0, 0.0));
    }

    #[test]
    fn constant_kernel_pulls_out() {
        // total mass 3, f ≡ 1 ⇒ Λ = 3(1 − e^{−1})
        let nu = IntensityMeasure::new(TimeRate::constant(1.5, -1.0, 1.0), MarkLaw::Exponential { rate: 2.0 }).unwrap();
        let f = FnKernel {
            f: |_s: f64, _x: f64| c(1.0, 0.0),
            kinks: vec![],
        };
        let v = laplace_functional_generic(&nu, &f, &q()).unwrap().value;
        assert!((v.re - 3.0 * (1.0 - (-1.0f64).exp())).abs() < 1e-9);
        assert!((v.re - 1.896_361_7).abs() < 1e-7);
    }

    #[test]
    fn exp_mark_reduction_constant_kernel() {
        let rate = TimeRate::constant(2.0, 0.0, 1.0);
        let v = laplace_functional_exp_marks(&rate, 1.0, &|_| c(1.0, 0.0), &[], &q()).unwrap().value;
        assert!((v - c(1.0, 0.0)).norm() < 1e-12);
        let v = laplace_functional_exp_marks(&rate, 1.0, &|_| c(0.0, 1.0), &[], &q()).unwrap().value;
        assert!((v - c(1.0, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn exp_mark_reduction_detects_pole() {
        let rate = TimeRate::constant(1.0, 0.0, 1.0);
        let r = laplace_functional_exp_marks(&rate, 1.0, &|_| c(-1.0, 0.0), &[], &q());
        assert!(matches!(r, Err(Error::PoleProximity { .. })));
    }

    #[test]
    fn negative_kernel_is_rejected() {
        let nu = IntensityMeasure::new(TimeRate::constant(1.0, 0.0, 1.0), MarkLaw::Exponential { rate: 1.0 }).unwrap();
        let f = FnKernel {
            f: |_s: f64, x: f64| c(-0.1 * x, 0.0),
            kinks: vec![],
        };
        assert!(matches!(laplace_functional_generic(&nu, &f, &q()), Err(Error::NegativeKernel { .. })));
    }

    #[test]
    fn tabulated_marks_match_hand_sum() {
        let nu = IntensityMeasure::new(
            TimeRate::constant(2.0, 0.0, 1.5),
            MarkLaw::Tabulated {
                grid: vec![0.5, 2.0],
                weights: vec![0.25, 0.75],
            },
        )
        .unwrap();
        let f = FnKernel {
            f: |_s: f64, x: f64| c(x, 0.3 * x),
            kinks: vec![],
        };
        let v = laplace_functional_generic(&nu, &f, &q()).unwrap().value;
        let one = c(1.0, 0.0);
        let expect = (0.25 * (one - (-c(0.5, 0.15)).exp()) + 0.75 * (one - (-c(2.0, 0.6)).exp())) * 3.0;
        assert!((v - expect).norm() < 1e-10);
    }

    #[test]
    fn empty_measure_samples_nothing() {
        let nu = IntensityMeasure::new(TimeRate::constant(0.0, -1.0, 1.0), MarkLaw::Exponential { rate: 1.0 }).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(sample_points(&nu, &mut rng).is_empty());
    }

    #[test]
    fn sampling_is_deterministic_and_in_support() {
        let nu = IntensityMeasure::new(
            TimeRate {
                knots: vec![-5.0, 0.0, 2.0],
                rates: vec![1.0, 3.0],
            },
            MarkLaw::Exponential { rate: 2.0 },
        )
        .unwrap();
        let a = sample_points(&nu, &mut ChaCha8Rng::seed_from_u64(11));
        let b = sample_points(&nu, &mut ChaCha8Rng::seed_from_u64(11));
        assert_eq!(a, b);
        assert!(a.points.iter().all(|p| p.s >= -5.0 && p.s <= 2.0 && p.x > 0.0));
    }

    #[test]
    fn mean_count_matches_mass() {
        let nu = IntensityMeasure::new(TimeRate::constant(2.5, -2.0, 2.0), MarkLaw::Exponential { rate: 1.0 }).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let reps = 100_000;
        let counts: Vec<f64> = (0..reps).map(|_| sample_points(&nu, &mut rng).len() as f64).collect();
        let mean = counts.iter().sum::<f64>() / reps as f64;
        let se = (10.0 / reps as f64).sqrt();
        assert!((mean - 10.0).abs() < 4.0 * se, "mean count {mean}");
    }

    #[test]
    fn time_rate_inversion_respects_pieces() {
        let nu = IntensityMeasure::new(
            TimeRate {
                knots: vec![0.0, 1.0, 2.0],
                rates: vec![1.0, 9.0],
            },
            MarkLaw::Exponential { rate: 1.0 },
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (mut first, mut total) = (0usize, 0usize);
        for _ in 0..20_000 {
            for p in sample_points(&nu, &mut rng).points {
                total += 1;
                if p.s < 1.0 {
                    first += 1;
                }
            }
        }
        let frac = first as f64 / total as f64;
        assert!((frac - 0.1).abs() < 0.005, "{frac}");
    }

    #[test]
    fn point_set_csv() {
        let ps = PointSet::new(vec![Point { s: -0.5, x: 2.0 }, Point { s: 0.25, x: 1.0 }]).unwrap();
        let mut buf = Vec::new();
        ps.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "s,x\n-0.5,2\n0.25,1\n");
        assert!(PointSet::new(vec![Point { s: 0.0, x: 0.0 }]).is_err());
    }
}
