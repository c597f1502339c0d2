//! Pure-jump Lévy processes described by their Laplace exponent
//! ψ(ω) = −log E[e^{−ωJ(1)}], evaluable for complex ω inside the strip where
//! the exponential moment exists.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp, Gamma, InverseGaussian, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A pure-jump Lévy process.
///
/// Parameter conventions (all with ψ(ω) = −log E[e^{−ωJ(1)}]):
///
/// * `CompoundPoissonNormal`: jumps N(mean, sd²) at `rate`;
///   ψ(ω) = rate·(1 − e^{−ω·mean + ω²sd²/2}).
/// * `CompoundPoissonDoubleExp`: with probability `p_up` an upward jump
///   Exp(`eta_up`), otherwise a downward jump −Exp(`eta_down`);
///   ψ(ω) = rate·(1 − p·η₊/(η₊+ω) − (1−p)·η₋/(η₋−ω)) on Re ω ∈ (−η₊, η₋).
/// * `Gamma`: ψ(ω) = shape·log(1 + ω/rate) on Re ω > −rate.
/// * `InverseGaussian`: ψ(ω) = δ(√(γ² + 2ω) − γ) on Re ω > −γ²/2 (the branch
///   point itself is excluded).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LevySpec {
    #[default]
    Zero,
    CompoundPoissonNormal {
        rate: f64,
        mean: f64,
        sd: f64,
    },
    CompoundPoissonDoubleExp {
        rate: f64,
        p_up: f64,
        eta_up: f64,
        eta_down: f64,
    },
    Gamma {
        shape: f64,
        rate: f64,
    },
    InverseGaussian {
        delta: f64,
        gamma: f64,
    },
}

/// Open interval of Re(ω) on which ψ is analytic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Strip {
    pub lo: f64,
    pub hi: f64,
}

impl Strip {
    pub const ALL: Strip = Strip {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };

    pub fn contains(&self, re: f64) -> bool {
        re > self.lo && re < self.hi
    }
}

impl LevySpec {
    pub fn validate(&self, field: &str) -> Result<()> {
        let positive = |name: &str, v: f64| -> Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(format!("{field}.{name}"), format!("must be > 0, got {v}")))
            }
        };
        match *self {
            LevySpec::Zero => Ok(()),
            LevySpec::CompoundPoissonNormal { rate, mean, sd } => {
                positive("rate", rate)?;
                if !mean.is_finite() {
                    return Err(Error::invalid(format!("{field}.mean"), "must be finite"));
                }
                if !(sd.is_finite() && sd >= 0.0) {
                    return Err(Error::invalid(format!("{field}.sd"), format!("must be ≥ 0, got {sd}")));
                }
                Ok(())
            }
            LevySpec::CompoundPoissonDoubleExp {
                rate,
                p_up,
                eta_up,
                eta_down,
            } => {
                positive("rate", rate)?;
                positive("eta_up", eta_up)?;
                positive("eta_down", eta_down)?;
                if !(0.0..=1.0).contains(&p_up) {
                    return Err(Error::invalid(format!("{field}.p_up"), format!("must lie in [0, 1], got {p_up}")));
                }
                Ok(())
            }
            LevySpec::Gamma { shape, rate } => {
                positive("shape", shape)?;
                positive("rate", rate)
            }
            LevySpec::InverseGaussian { delta, gamma } => {
                positive("delta", delta)?;
                positive("gamma", gamma)
            }
        }
    }

    pub fn strip(&self) -> Strip {
        match *self {
            LevySpec::Zero | LevySpec::CompoundPoissonNormal { .. } => Strip::ALL,
            LevySpec::CompoundPoissonDoubleExp { eta_up, eta_down, .. } => Strip {
                lo: -eta_up,
                hi: eta_down,
            },
            LevySpec::Gamma { rate, .. } => Strip {
                lo: -rate,
                hi: f64::INFINITY,
            },
            LevySpec::InverseGaussian { gamma, .. } => Strip {
                lo: -0.5 * gamma * gamma,
                hi: f64::INFINITY,
            },
        }
    }

    fn check_strip(&self, w: Complex64) -> Result<()> {
        let strip = self.strip();
        if strip.contains(w.re) {
            Ok(())
        } else {
            Err(Error::Domain {
                what: "Laplace exponent",
                re: w.re,
                lo: strip.lo,
                hi: strip.hi,
            })
        }
    }

    /// Laplace exponent ψ(ω).
    pub fn psi(&self, w: Complex64) -> Result<Complex64> {
        self.check_strip(w)?;
        let one = Complex64::new(1.0, 0.0);
        Ok(match *self {
            LevySpec::Zero => Complex64::new(0.0, 0.0),
            LevySpec::CompoundPoissonNormal { rate, mean, sd } => -rate * expm1(-w * mean + w * w * (0.5 * sd * sd)),
            LevySpec::CompoundPoissonDoubleExp {
                rate,
                p_up,
                eta_up,
                eta_down,
            } => rate * (p_up * w / (w + eta_up) - (1.0 - p_up) * w / (eta_down - w)),
            LevySpec::Gamma { shape, rate } => shape * (one + w / rate).ln(),
            // δ(√(γ² + 2ω) − γ), rationalized so that ψ(0) = 0 exactly.
            LevySpec::InverseGaussian { delta, gamma } => delta * 2.0 * w / ((w * 2.0 + gamma * gamma).sqrt() + gamma),
        })
    }

    /// Analytic derivative ψ′(ω).
    pub fn psi_prime(&self, w: Complex64) -> Result<Complex64> {
        self.check_strip(w)?;
        Ok(match *self {
            LevySpec::Zero => Complex64::new(0.0, 0.0),
            LevySpec::CompoundPoissonNormal { rate, mean, sd } => {
                let e = (-w * mean + w * w * (0.5 * sd * sd)).exp();
                -rate * e * (w * (sd * sd) - mean)
            }
            LevySpec::CompoundPoissonDoubleExp {
                rate,
                p_up,
                eta_up,
                eta_down,
            } => {
                let up = p_up * eta_up / ((w + eta_up) * (w + eta_up));
                let down = (1.0 - p_up) * eta_down / ((eta_down - w) * (eta_down - w));
                rate * (up - down)
            }
            LevySpec::Gamma { shape, rate } => shape / (w + rate),
            LevySpec::InverseGaussian { delta, gamma } => delta / (w * 2.0 + gamma * gamma).sqrt(),
        })
    }

    /// (E[J(1)], Var[J(1)]).
    pub fn cumulants(&self) -> Result<(f64, f64)> {
        Ok(match *self {
            LevySpec::Zero => (0.0, 0.0),
            LevySpec::CompoundPoissonNormal { rate, mean, sd } => (rate * mean, rate * (mean * mean + sd * sd)),
            LevySpec::CompoundPoissonDoubleExp {
                rate,
                p_up,
                eta_up,
                eta_down,
            } => (
                rate * (p_up / eta_up - (1.0 - p_up) / eta_down),
                rate * 2.0 * (p_up / (eta_up * eta_up) + (1.0 - p_up) / (eta_down * eta_down)),
            ),
            LevySpec::Gamma { shape, rate } => (shape / rate, shape / (rate * rate)),
            LevySpec::InverseGaussian { delta, gamma } => (delta / gamma, delta / gamma.powi(3)),
        })
    }

    /// Exact draw of the increment J(t) over elapsed (business) time `t`.
    pub fn sample_increment<R: Rng + ?Sized>(&self, t: f64, rng: &mut R) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        match *self {
            LevySpec::Zero => 0.0,
            LevySpec::CompoundPoissonNormal { rate, mean, sd } => {
                let count = poisson_count(rate * t, rng);
                if count == 0 {
                    return 0.0;
                }
                let k = count as f64;
                if sd == 0.0 {
                    return k * mean;
                }
                Normal::new(k * mean, sd * k.sqrt()).expect("valid normal").sample(rng)
            }
            LevySpec::CompoundPoissonDoubleExp {
                rate,
                p_up,
                eta_up,
                eta_down,
            } => {
                let count = poisson_count(rate * t, rng);
                let up = Exp::new(eta_up).expect("valid rate");
                let down = Exp::new(eta_down).expect("valid rate");
                (0..count)
                    .map(|_| {
                        if rng.random::<f64>() < p_up {
                            up.sample(rng)
                        } else {
                            -down.sample(rng)
                        }
                    })
                    .sum()
            }
            LevySpec::Gamma { shape, rate } => Gamma::new(shape * t, 1.0 / rate).expect("valid gamma").sample(rng),
            LevySpec::InverseGaussian { delta, gamma } => {
                let dt = delta * t;
                InverseGaussian::new(dt / gamma, dt * dt).expect("valid IG").sample(rng)
            }
        }
    }

    /// Names of the scalar parameters, in the order used by
    /// [`LevySpec::param_values`] and [`LevySpec::set_param`].
    pub fn param_names(&self) -> &'static [&'static str] {
        match self {
            LevySpec::Zero => &[],
            LevySpec::CompoundPoissonNormal { .. } => &["rate", "mean", "sd"],
            LevySpec::CompoundPoissonDoubleExp { .. } => &["rate", "p_up", "eta_up", "eta_down"],
            LevySpec::Gamma { .. } => &["shape", "rate"],
            LevySpec::InverseGaussian { .. } => &["delta", "gamma"],
        }
    }

    pub fn param_values(&self) -> Vec<f64> {
        match *self {
            LevySpec::Zero => vec![],
            LevySpec::CompoundPoissonNormal { rate, mean, sd } => vec![rate, mean, sd],
            LevySpec::CompoundPoissonDoubleExp {
                rate,
                p_up,
                eta_up,
                eta_down,
            } => vec![rate, p_up, eta_up, eta_down],
            LevySpec::Gamma { shape, rate } => vec![shape, rate],
            LevySpec::InverseGaussian { delta, gamma } => vec![delta, gamma],
        }
    }

    pub fn set_param(&mut self, idx: usize, v: f64) {
        match self {
            LevySpec::Zero => {}
            LevySpec::CompoundPoissonNormal { rate, mean, sd } => *[rate, mean, sd][idx] = v,
            LevySpec::CompoundPoissonDoubleExp {
                rate,
                p_up,
                eta_up,
                eta_down,
            } => *[rate, p_up, eta_up, eta_down][idx] = v,
            LevySpec::Gamma { shape, rate } => *[shape, rate][idx] = v,
            LevySpec::InverseGaussian { delta, gamma } => *[delta, gamma][idx] = v,
        }
    }
}

/// e^z − 1 without cancellation near z = 0.
fn expm1(z: Complex64) -> Complex64 {
    let (x, y) = (z.re, z.im);
    let half = (0.5 * y).sin();
    Complex64::new(x.exp_m1() * y.cos() - 2.0 * half * half, x.exp() * y.sin())
}

pub(crate) fn poisson_count<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("finite positive mean").sample(rng) as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn catalogue() -> Vec<LevySpec> {
        vec![
            LevySpec::Zero,
            LevySpec::CompoundPoissonNormal {
                rate: 1.3,
                mean: -0.2,
                sd: 0.4,
            },
            LevySpec::CompoundPoissonDoubleExp {
                rate: 2.0,
                p_up: 0.35,
                eta_up: 3.0,
                eta_down: 2.5,
            },
            LevySpec::Gamma { shape: 2.0, rate: 1.0 },
            LevySpec::InverseGaussian { delta: 0.8, gamma: 1.5 },
        ]
    }

    #[test]
    fn zero_process() {
        assert_eq!(LevySpec::Zero.psi(c(2.0, 3.0)).unwrap(), c(0.0, 0.0));
        assert_eq!(LevySpec::Zero.strip(), Strip::ALL);
    }

    #[test]
    fn compound_poisson_normal_value() {
        let spec = LevySpec::CompoundPoissonNormal {
            rate: 1.0,
            mean: 0.0,
            sd: 1.0,
        };
        let v = spec.psi(c(1.0, 0.0)).unwrap();
        assert!((v.re - (1.0 - 0.5f64.exp())).abs() < 1e-14);
        assert!((v.re + 0.648_721_3).abs() < 1e-7);
        assert_eq!(spec.strip(), Strip::ALL);
    }

    #[test]
    fn gamma_value_and_strip() {
        let spec = LevySpec::Gamma { shape: 2.0, rate: 1.0 };
        let v = spec.psi(c(1.0, 0.0)).unwrap();
        assert!((v.re - 1.386_294_361_119_890_6).abs() < 1e-14);
        assert_eq!(spec.strip(), Strip { lo: -1.0, hi: f64::INFINITY });
        assert!(matches!(spec.psi(c(-1.0, 0.5)), Err(Error::Domain { .. })));
    }

    #[test]
    fn inverse_gaussian_branch_point_excluded() {
        let spec = LevySpec::InverseGaussian { delta: 1.0, gamma: 2.0 };
        assert!(spec.psi(c(-2.0, 0.0)).is_err());
        assert!(spec.psi(c(-1.999, 0.0)).is_ok());
    }

    #[test]
    fn cumulant_examples() {
        assert_eq!(LevySpec::Zero.cumulants().unwrap(), (0.0, 0.0));
        let cp = LevySpec::CompoundPoissonNormal {
            rate: 2.0,
            mean: 1.0,
            sd: 1.0,
        };
        assert_eq!(cp.cumulants().unwrap(), (2.0, 4.0));
        let g = LevySpec::Gamma { shape: 3.0, rate: 2.0 };
        assert_eq!(g.cumulants().unwrap(), (1.5, 0.75));
    }

    #[test]
    fn cumulants_match_derivatives_at_zero() {
        let h = 1e-4;
        for spec in catalogue() {
            let (m, v) = spec.cumulants().unwrap();
            let p = |x: f64| spec.psi(c(x, 0.0)).unwrap().re;
            let d1 = (p(h) - p(-h)) / (2.0 * h);
            let d2 = (p(h) - 2.0 * p(0.0) + p(-h)) / (h * h);
            assert!((d1 - m).abs() < 1e-6, "{spec:?}");
            assert!((-d2 - v).abs() < 1e-5, "{spec:?}");
        }
    }

    #[test]
    fn finite_difference_matches_analytic_derivative() {
        let h = 1e-5;
        for spec in catalogue() {
            for w in [c(0.3, 0.0), c(0.2, 1.7), c(-0.1, -2.3)] {
                let fd = (spec.psi(w + h).unwrap() - spec.psi(w - h).unwrap()) / (2.0 * h);
                let an = spec.psi_prime(w).unwrap();
                assert!((fd - an).norm() < 1e-6, "{spec:?} at {w}");
            }
        }
    }

    #[test]
    fn subordinators_are_nonnegative_on_positive_axis() {
        let subs = [
            LevySpec::Gamma { shape: 2.0, rate: 1.0 },
            LevySpec::InverseGaussian { delta: 0.8, gamma: 1.5 },
            LevySpec::CompoundPoissonDoubleExp {
                rate: 1.0,
                p_up: 1.0,
                eta_up: 2.0,
                eta_down: 1.0,
            },
        ];
        for spec in subs {
            for k in 0..50 {
                let w = 0.2 * k as f64;
                if spec.strip().contains(w) {
                    assert!(spec.psi(c(w, 0.0)).unwrap().re >= 0.0);
                }
            }
        }
    }

    #[test]
    fn zero_time_draw_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for spec in catalogue() {
            assert_eq!(spec.sample_increment(0.0, &mut rng), 0.0);
        }
        assert_eq!(LevySpec::Zero.sample_increment(5.0, &mut rng), 0.0);
    }

    #[test]
    fn gamma_sample_mean() {
        let spec = LevySpec::Gamma { shape: 2.0, rate: 1.0 };
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 1_000_000;
        let draws: Vec<f64> = (0..n).map(|_| spec.sample_increment(1.0, &mut rng)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        assert!((mean - 2.0).abs() < 3.0 * se, "mean {mean} se {se}");
    }

    #[test]
    fn sampler_matches_laplace_exponent() {
        let n = 1_000_000;
        for (k, spec) in catalogue().into_iter().enumerate().skip(1) {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + k as u64);
            let draws: Vec<f64> = (0..n).map(|_| spec.sample_increment(1.0, &mut rng)).collect();
            let strip = spec.strip();
            for w in [-0.4, -0.2, 0.25, 0.5, 1.0] {
                if !strip.contains(2.0 * w) {
                    continue;
                }
                let vals: Vec<f64> = draws.iter().map(|j| (-w * j).exp()).collect();
                let m = vals.iter().sum::<f64>() / n as f64;
                let v = vals.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
                let se = (v / n as f64).sqrt() / m; // delta method on the log
                let target = -spec.psi(c(w, 0.0)).unwrap().re;
                assert!((m.ln() - target).abs() < 4.0 * se, "{spec:?} ω={w}: {} vs {target}", m.ln());
            }
        }
    }

    #[test]
    fn json_round_trip_and_unknown_keys() {
        let spec = LevySpec::CompoundPoissonNormal {
            rate: 0.5,
            mean: 0.0,
            sd: 0.3,
        };
        let s = serde_json::to_string(&spec).unwrap();
        assert_eq!(s, r#"{"kind":"compound_poisson_normal","rate":0.5,"mean":0.0,"sd":0.3}"#);
        assert_eq!(serde_json::from_str::<LevySpec>(&s).unwrap(), spec);
        assert!(serde_json::from_str::<LevySpec>(r#"{"kind":"gamma","shape":1,"rate":1,"x":2}"#).is_err());
    }

    proptest! {
        #[test]
        fn psi_vanishes_at_origin(rate in 0.01f64..10.0, mean in -2.0f64..2.0, sd in 0.0f64..2.0,
                                  p in 0.0f64..1.0, e1 in 0.1f64..10.0, e2 in 0.1f64..10.0) {
            let specs = [
                LevySpec::CompoundPoissonNormal { rate, mean, sd },
                LevySpec::CompoundPoissonDoubleExp { rate, p_up: p, eta_up: e1, eta_down: e2 },
                LevySpec::Gamma { shape: rate, rate: e1 },
                LevySpec::InverseGaussian { delta: rate, gamma: e2 },
            ];
            for spec in specs {
                prop_assert!(spec.psi(c(0.0, 0.0)).unwrap().norm() < 1e-15);
            }
        }

        #[test]
        fn conjugate_symmetry_and_modulus_bound(beta in -0.05f64..2.0, y in -30.0f64..30.0) {
            for spec in catalogue() {
                let w = c(beta, y);
                if !spec.strip().contains(beta) { continue; }
                let a = spec.psi(w.conj()).unwrap();
                let b = spec.psi(w).unwrap().conj();
                prop_assert!((a - b).norm() <= 1e-12 * (1.0 + a.norm()));
                let real_axis = spec.psi(c(beta, 0.0)).unwrap();
                prop_assert!(real_axis.im.abs() < 1e-15);
                prop_assert!(spec.psi(w).unwrap().re >= real_axis.re - 1e-12);
            }
        }
    }
}
