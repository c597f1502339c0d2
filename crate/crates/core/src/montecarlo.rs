//! Exact simulation of the return model and the empirical estimators used to
//! check the likelihood against it.
//!
//! Each path samples the background points, forms τ_i and γ_i by summing the
//! OU interval weights, draws the Lévy increments directly at the realized
//! clock values and adds the conditional Gaussian term. Nothing is
//! discretized, so the only error is Monte Carlo error.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::{MeasureKind, ModelParams};

/// Paths per independently seeded stream.
pub const CHUNK: usize = 1024;

/// Default minimum sample size for the empirical estimators.
pub const MIN_SAMPLES: usize = 10_000;

/// Latent draws behind one return.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Latent {
    pub tau: f64,
    pub gamma: f64,
    pub j1: f64,
    pub j2: f64,
    pub eps: f64,
}

/// Simulated returns, stored row-major as `n_paths × n`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub n: usize,
    pub returns: Vec<f64>,
    pub latents: Option<Vec<Latent>>,
}

impl SimOutput {
    pub fn n_paths(&self) -> usize {
        self.returns.len() / self.n.max(1)
    }

    pub fn path(&self, k: usize) -> &[f64] {
        &self.returns[k * self.n..(k + 1) * self.n]
    }

    /// All draws of X_i (0-based i).
    pub fn column(&self, i: usize) -> Vec<f64> {
        self.returns.iter().skip(i).step_by(self.n).copied().collect()
    }

    /// Header `path,x1,..,xn`.
    pub fn write_returns_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["path".to_string()];
        header.extend((1..=self.n).map(|i| format!("x{i}")));
        wtr.write_record(&header)?;
        for k in 0..self.n_paths() {
            let mut row = vec![k.to_string()];
            row.extend(self.path(k).iter().map(|v| v.to_string()));
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Header `path,i,tau,gamma,j1,j2,eps`; nothing is written without latents.
    pub fn write_latents_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let Some(latents) = &self.latents else {
            return Ok(());
        };
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["path", "i", "tau", "gamma", "j1", "j2", "eps"])?;
        for (idx, l) in latents.iter().enumerate() {
            wtr.write_record([
                (idx / self.n).to_string(),
                (idx % self.n + 1).to_string(),
                l.tau.to_string(),
                l.gamma.to_string(),
                l.j1.to_string(),
                l.j2.to_string(),
                l.eps.to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn simulate_path<R: Rng>(
    params: &ModelParams,
    measure: &MeasureKind,
    n: usize,
    rng: &mut R,
    out: &mut [f64],
    latents: Option<&mut [Latent]>,
) {
    let horizon = n as f64 * params.delta;
    let (tau, gamma) = match measure {
        MeasureKind::Poisson => {
            let r = params.vol.sample(horizon, rng);
            params.vol.time_changes(&r, n, params.delta)
        }
        MeasureKind::Deterministic(r) => params.vol.time_changes(r, n, params.delta),
    };
    let mut latents = latents;
    for i in 0..n {
        let j1 = params.levy1.sample_increment(tau[i], rng);
        let j2 = params.levy2.sample_increment(gamma[i], rng);
        let eps: f64 = rng.sample(StandardNormal);
        let ts = tau[i] + gamma[i];
        out[i] = params.mu * params.delta + j1 + j2 + params.beta * ts + params.rho * gamma[i] + ts.sqrt() * eps;
        if let Some(l) = latents.as_deref_mut() {
            l[i] = Latent {
                tau: tau[i],
                gamma: gamma[i],
                j1,
                j2,
                eps,
            };
        }
    }
}

/// Simulates `n_paths` independent paths of n consecutive returns.
///
/// Paths are grouped in chunks of [`CHUNK`]; chunk k uses ChaCha8 seeded by
/// `seed` on stream k, so the output does not depend on the thread count.
pub fn simulate_returns(
    params: &ModelParams,
    measure: &MeasureKind,
    n: usize,
    n_paths: usize,
    seed: u64,
    keep_latents: bool,
) -> Result<SimOutput> {
    params.validate("model")?;
    if n == 0 {
        return Err(Error::invalid("simulate.n", "must be ≥ 1"));
    }
    let mut returns = vec![0.0; n * n_paths];
    let mut latents = keep_latents.then(|| {
        vec![
            Latent {
                tau: 0.0,
                gamma: 0.0,
                j1: 0.0,
                j2: 0.0,
                eps: 0.0
            };
            n * n_paths
        ]
    });
    let run = |(k, chunk): (usize, &mut [f64]), mut lat: Option<&mut [Latent]>| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k as u64);
        for (p, row) in chunk.chunks_exact_mut(n).enumerate() {
            let l = lat.as_deref_mut().map(|l| &mut l[p * n..(p + 1) * n]);
            simulate_path(params, measure, n, &mut rng, row, l);
        }
    };
    match latents.as_mut() {
        Some(lat) => returns
            .par_chunks_mut(CHUNK * n)
            .zip(lat.par_chunks_mut(CHUNK * n))
            .enumerate()
            .for_each(|(k, (c, l))| run((k, c), Some(l))),
        None => returns
            .par_chunks_mut(CHUNK * n)
            .enumerate()
            .for_each(|(k, c)| run((k, c), None)),
    }
    Ok(SimOutput { n, returns, latents })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KdeOptions {
    /// Gaussian kernel bandwidth; `None` uses the normal-reference rule.
    pub bandwidth: Option<f64>,
    pub min_samples: usize,
}

impl Default for KdeOptions {
    fn default() -> Self {
        KdeOptions {
            bandwidth: None,
            min_samples: MIN_SAMPLES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdeEstimate {
    pub bandwidth: f64,
    pub x: Vec<f64>,
    pub density: Vec<f64>,
    /// Pointwise Monte Carlo standard error of the estimate.
    pub stderr: Vec<f64>,
}

/// 1.06·σ̂·n^{−1/5}.
pub fn normal_reference_bandwidth(samples: &[f64]) -> f64 {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    1.06 * var.sqrt() * n.powf(-0.2)
}

fn check_samples(got: usize, need: usize) -> Result<()> {
    if got < need.max(1) {
        return Err(Error::TooFewSamples { got, need });
    }
    Ok(())
}

/// Gaussian kernel density estimate on `grid`.
pub fn empirical_density(samples: &[f64], grid: &[f64], opts: &KdeOptions) -> Result<KdeEstimate> {
    check_samples(samples.len(), opts.min_samples)?;
    let h = match opts.bandwidth {
        Some(h) if h > 0.0 && h.is_finite() => h,
        Some(h) => return Err(Error::invalid("density.bandwidth", format!("must be > 0, got {h}"))),
        None => normal_reference_bandwidth(samples),
    };
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let norm = 1.0 / (h * (2.0 * PI).sqrt());
    let (density, stderr) = grid
        .par_iter()
        .map(|&x| {
            let lo = sorted.partition_point(|v| *v < x - 8.0 * h);
            let hi = sorted.partition_point(|v| *v <= x + 8.0 * h);
            let (mut s1, mut s2) = (0.0, 0.0);
            for v in &sorted[lo..hi] {
                let z = (x - v) / h;
                let k = norm * (-0.5 * z * z).exp();
                s1 += k;
                s2 += k * k;
            }
            let m = s1 / n;
            (m, ((s2 / n - m * m).max(0.0) / n).sqrt())
        })
        .unzip();
    Ok(KdeEstimate {
        bandwidth: h,
        x: grid.to_vec(),
        density,
        stderr,
    })
}

/// Sample mean of a complex variable with separate standard errors for the
/// real and imaginary parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CfEstimate {
    pub value: Complex64,
    pub se_re: f64,
    pub se_im: f64,
}

impl CfEstimate {
    /// Largest of the real and imaginary deviations in standard errors.
    pub fn z_score(&self, exact: Complex64) -> f64 {
        let z = |d: f64, se: f64| if se > 0.0 { d.abs() / se } else if d == 0.0 { 0.0 } else { f64::INFINITY };
        z(self.value.re - exact.re, self.se_re).max(z(self.value.im - exact.im, self.se_im))
    }
}

/// E[e^{iuX}] for each u.
pub fn empirical_cf(samples: &[f64], u: &[f64]) -> Result<Vec<CfEstimate>> {
    check_samples(samples.len(), MIN_SAMPLES)?;
    Ok(u.iter().map(|&uk| joint_cf(samples, 1, &[uk])).collect())
}

/// E[e^{i u·X}] over row-major points of dimension `u.len()`.
pub fn empirical_joint_cf(points: &[f64], u: &[f64]) -> Result<CfEstimate> {
    let d = u.len().max(1);
    check_samples(points.len() / d, MIN_SAMPLES)?;
    Ok(joint_cf(points, d, u))
}

fn joint_cf(points: &[f64], d: usize, u: &[f64]) -> CfEstimate {
    let (sc, ss, sc2, ss2) = points
        .par_chunks_exact(d)
        .map(|p| {
            let t: f64 = p.iter().zip(u).map(|(x, u)| x * u).sum();
            let (s, c) = t.sin_cos();
            (c, s, c * c, s * s)
        })
        .reduce(|| (0.0, 0.0, 0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2, a.3 + b.3));
    let n = (points.len() / d) as f64;
    let (mc, ms) = (sc / n, ss / n);
    CfEstimate {
        value: Complex64::new(mc, ms),
        se_re: ((sc2 / n - mc * mc).max(0.0) / n).sqrt(),
        se_im: ((ss2 / n - ms * ms).max(0.0) / n).sqrt(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy::LevySpec;
    use crate::likelihood::{characteristic_function, QuadConfig};
    use crate::prm::{Point, PointSet};
    use crate::timechange::{ou_weight, FactorMode, Realization, VolSpec};

    fn params(mode: FactorMode) -> ModelParams {
        ModelParams {
            mu: 0.0,
            beta: 0.0,
            rho: 0.0,
            delta: 1.0,
            levy1: LevySpec::Zero,
            levy2: LevySpec::Zero,
            vol: VolSpec {
                lambda: 1.0,
                a: 2.0,
                b: 1.0,
                factor: mode,
                s_max: None,
            },
        }
    }

    fn fixed(x: f64) -> MeasureKind {
        MeasureKind::Deterministic(Realization {
            primary: PointSet::new(vec![Point { s: 0.0, x }]).unwrap(),
            secondary: PointSet::default(),
        })
    }

    #[test]
    fn normal_moments_under_fixed_clock() {
        let p = params(FactorMode::Common { kappa: 0.0 });
        let v = 1.5 * ou_weight(0.0, 0.0, 1.0, 1.0);
        let sim = simulate_returns(&p, &fixed(1.5), 1, 1_000_000, 11, false).unwrap();
        let n = sim.returns.len() as f64;
        let mean = sim.returns.iter().sum::<f64>() / n;
        let var = sim.returns.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 4.0 * (v / n).sqrt());
        assert!((var - v).abs() < 4.0 * v * (2.0 / n).sqrt());
    }

    #[test]
    fn same_seed_same_output() {
        let p = params(FactorMode::Common { kappa: 0.5 });
        let a = simulate_returns(&p, &MeasureKind::Poisson, 3, 3000, 7, true).unwrap();
        let b = simulate_returns(&p, &MeasureKind::Poisson, 3, 3000, 7, true).unwrap();
        assert_eq!(a, b);
        let c = simulate_returns(&p, &MeasureKind::Poisson, 3, 3000, 8, false).unwrap();
        assert_ne!(a.returns, c.returns);
        // a shorter run is a prefix of a longer one
        let d = simulate_returns(&p, &MeasureKind::Poisson, 3, 1500, 7, false).unwrap();
        assert_eq!(&a.returns[..4500], &d.returns[..]);
    }

    #[test]
    fn returns_reconstruct_from_latents() {
        let p = ModelParams {
            mu: 0.05,
            beta: 0.2,
            rho: -0.3,
            levy1: LevySpec::CompoundPoissonNormal {
                rate: 0.5,
                mean: 0.0,
                sd: 0.3,
            },
            levy2: LevySpec::Gamma { shape: 1.0, rate: 2.0 },
            ..params(FactorMode::Independent {
                lambda: 0.5,
                a: 1.0,
                b: 2.0,
                kappa: 1.0,
            })
        };
        let sim = simulate_returns(&p, &MeasureKind::Poisson, 2, 2000, 5, true).unwrap();
        for (x, l) in sim.returns.iter().zip(sim.latents.as_ref().unwrap()) {
            let ts = l.tau + l.gamma;
            let eps = (x - (p.mu * p.delta + l.j1 + l.j2 + p.beta * ts + p.rho * l.gamma)) / ts.sqrt();
            assert!((eps - l.eps).abs() < 1e-9 * (1.0 + l.eps.abs()));
        }
    }

    #[test]
    fn mean_matches_kernel_means() {
        let p = ModelParams {
            mu: 0.1,
            beta: 0.2,
            rho: -0.3,
            ..params(FactorMode::Common { kappa: 1.0 })
        };
        let sim = simulate_returns(&p, &MeasureKind::Poisson, 2, 200_000, 3, false).unwrap();
        for i in 0..2 {
            let col = sim.column(i);
            let n = col.len() as f64;
            let mean = col.iter().sum::<f64>() / n;
            let sd = (col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            let (tau, gamma) = p.vol.mean_time_changes(i + 1, p.delta);
            let expect = p.mu * p.delta + p.beta * (tau + gamma) + p.rho * gamma;
            assert!((mean - expect).abs() < 4.0 * sd / n.sqrt(), "i={i}: {mean} vs {expect}");
        }
    }

    #[test]
    fn kde_of_standard_normal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let xs: Vec<f64> = (0..1_000_000).map(|_| rng.sample(StandardNormal)).collect();
        let grid: Vec<f64> = (0..=1200).map(|k| -12.0 + 0.02 * k as f64).collect();
        let kde = empirical_density(&xs, &grid, &KdeOptions::default()).unwrap();
        assert!((kde.density[600] - 0.398_942_3).abs() < 0.003);
        let total: f64 = kde.density.windows(2).map(|d| 0.01 * (d[0] + d[1])).sum();
        assert!((total - 1.0).abs() < 1e-3);
    }

    #[test]
    fn kde_spikes() {
        let xs = [-1.0, 0.5, 2.0];
        let grid: Vec<f64> = (0..=50_000).map(|k| -2.0 + 1e-4 * k as f64).collect();
        let opts = KdeOptions {
            bandwidth: Some(1e-3),
            min_samples: 3,
        };
        let kde = empirical_density(&xs, &grid, &opts).unwrap();
        let mass = |lo: f64, hi: f64| -> f64 {
            grid.windows(2)
                .zip(kde.density.windows(2))
                .filter(|(x, _)| x[0] >= lo && x[1] <= hi)
                .map(|(x, d)| 0.5 * (x[1] - x[0]) * (d[0] + d[1]))
                .sum()
        };
        for c in xs {
            assert!((mass(c - 0.1, c + 0.1) - 1.0 / 3.0).abs() < 1e-6);
        }
        assert!((mass(-2.0, 3.0) - 1.0).abs() < 1e-6);
        assert!(matches!(
            empirical_density(&xs, &grid, &KdeOptions::default()),
            Err(Error::TooFewSamples { got: 3, .. })
        ));
    }

    #[test]
    fn kde_stderr_halves_with_four_times_the_paths() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let xs: Vec<f64> = (0..400_000).map(|_| rng.sample(StandardNormal)).collect();
        let grid = [-1.0, 0.0, 0.7];
        let opts = KdeOptions {
            bandwidth: Some(0.1),
            ..KdeOptions::default()
        };
        let small = empirical_density(&xs[..100_000], &grid, &opts).unwrap();
        let large = empirical_density(&xs, &grid, &opts).unwrap();
        for (s, l) in small.stderr.iter().zip(&large.stderr) {
            assert!((s / l - 2.0).abs() < 0.4, "{}", s / l);
        }
    }

    #[test]
    fn cf_basics() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let xs: Vec<f64> = (0..20_000).map(|_| rng.sample(StandardNormal)).collect();
        let cf = empirical_cf(&xs, &[0.0, 0.8, -0.8]).unwrap();
        assert_eq!(cf[0].value, Complex64::new(1.0, 0.0));
        assert!((cf[1].value - cf[2].value.conj()).norm() < 1e-12);
        assert!(matches!(empirical_cf(&xs[..10], &[1.0]), Err(Error::TooFewSamples { .. })));
    }

    #[test]
    fn cf_matches_analytic_gamma_ou() {
        let p = params(FactorMode::Common { kappa: 0.0 });
        let sim = simulate_returns(&p, &MeasureKind::Poisson, 1, 200_000, 9, false).unwrap();
        let est = empirical_cf(&sim.returns, &[1.0]).unwrap()[0];
        let exact = characteristic_function(&p, &MeasureKind::Poisson, &[1.0], &QuadConfig::default()).unwrap();
        assert!(est.z_score(exact) < 4.0, "{:?} vs {exact}", est);
    }
}
