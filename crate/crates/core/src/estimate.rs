//! Maximum (composite) likelihood estimation.
//!
//! The objective is the sum of exact block log-likelihoods over consecutive
//! blocks of at most three returns. The lattice geometry is frozen at the
//! starting point so that the objective is a smooth function of the
//! parameters; the simplex search and the finite-difference Hessian then see
//! no quadrature noise from changing node sets.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::{
    composite_log_likelihood, plan_lattice, LatticePlan, MeasureKind, ModelParams, Observations, QuadConfig,
};
use crate::timechange::FactorMode;

/// Coordinates in which the simplex moves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Identity,
    Log,
    Logit,
}

impl Scale {
    pub fn to_internal(self, v: f64) -> f64 {
        match self {
            Scale::Identity => v,
            Scale::Log => v.ln(),
            Scale::Logit => (v / (1.0 - v)).ln(),
        }
    }

    pub fn to_natural(self, z: f64) -> f64 {
        match self {
            Scale::Identity => z,
            Scale::Log => z.exp(),
            Scale::Logit => 1.0 / (1.0 + (-z).exp()),
        }
    }
}

/// Scale used for a named parameter.
pub fn scale_of(name: &str) -> Scale {
    match name {
        "mu" | "beta" | "rho" | "levy1.mean" | "levy2.mean" => Scale::Identity,
        "levy1.p_up" | "levy2.p_up" => Scale::Logit,
        _ => Scale::Log,
    }
}

/// Names of every scalar parameter of `p`, as accepted by [`get_param`].
pub fn parameter_names(p: &ModelParams) -> Vec<String> {
    let mut out: Vec<String> = ["mu", "beta", "rho", "vol.lambda", "vol.a", "vol.b", "vol.factor.kappa"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    if let FactorMode::Independent { .. } = p.vol.factor {
        out.extend(["vol.factor.lambda", "vol.factor.a", "vol.factor.b"].map(String::from));
    }
    for (prefix, spec) in [("levy1", &p.levy1), ("levy2", &p.levy2)] {
        out.extend(spec.param_names().iter().map(|n| format!("{prefix}.{n}")));
    }
    out
}

fn unknown(name: &str) -> Error {
    Error::invalid("fit.free", format!("unknown parameter {name:?}"))
}

pub fn get_param(p: &ModelParams, name: &str) -> Result<f64> {
    Ok(match name {
        "mu" => p.mu,
        "beta" => p.beta,
        "rho" => p.rho,
        "vol.lambda" => p.vol.lambda,
        "vol.a" => p.vol.a,
        "vol.b" => p.vol.b,
        "vol.factor.kappa" => p.vol.kappa(),
        _ => {
            if let Some(field) = name.strip_prefix("vol.factor.") {
                return match (p.vol.factor, field) {
                    (FactorMode::Independent { lambda, .. }, "lambda") => Ok(lambda),
                    (FactorMode::Independent { a, .. }, "a") => Ok(a),
                    (FactorMode::Independent { b, .. }, "b") => Ok(b),
                    _ => Err(unknown(name)),
                };
            }
            let (spec, field) = levy_field(p, name).ok_or_else(|| unknown(name))?;
            let idx = spec.param_names().iter().position(|n| *n == field).ok_or_else(|| unknown(name))?;
            spec.param_values()[idx]
        }
    })
}

fn levy_field<'a, 'b>(p: &'a ModelParams, name: &'b str) -> Option<(&'a crate::levy::LevySpec, &'b str)> {
    if let Some(f) = name.strip_prefix("levy1.") {
        Some((&p.levy1, f))
    } else {
        name.strip_prefix("levy2.").map(|f| (&p.levy2, f))
    }
}

pub fn set_param(p: &mut ModelParams, name: &str, v: f64) -> Result<()> {
    match name {
        "mu" => p.mu = v,
        "beta" => p.beta = v,
        "rho" => p.rho = v,
        "vol.lambda" => p.vol.lambda = v,
        "vol.a" => p.vol.a = v,
        "vol.b" => p.vol.b = v,
        "vol.factor.kappa" => match &mut p.vol.factor {
            FactorMode::Common { kappa } | FactorMode::Independent { kappa, .. } => *kappa = v,
        },
        _ => {
            if let Some(field) = name.strip_prefix("vol.factor.") {
                let FactorMode::Independent { lambda, a, b, .. } = &mut p.vol.factor else {
                    return Err(unknown(name));
                };
                match field {
                    "lambda" => *lambda = v,
                    "a" => *a = v,
                    "b" => *b = v,
                    _ => return Err(unknown(name)),
                }
                return Ok(());
            }
            let spec = if name.starts_with("levy1.") {
                &mut p.levy1
            } else if name.starts_with("levy2.") {
                &mut p.levy2
            } else {
                return Err(unknown(name));
            };
            let field = &name[6..];
            let idx = spec.param_names().iter().position(|n| *n == field).ok_or_else(|| unknown(name))?;
            spec.set_param(idx, v);
        }
    }
    Ok(())
}

/// Simplex search settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitOptions {
    /// Budget on objective evaluations.
    pub max_evals: usize,
    /// Stop when every vertex is within `xtol` of the best one (internal
    /// coordinates) ...
    pub xtol: f64,
    /// ... and the objective spread over the simplex is below `ftol`.
    pub ftol: f64,
    /// Edge length of the initial simplex in internal coordinates.
    pub initial_step: f64,
    /// Also compute the observed information at the optimum.
    pub information: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_evals: 400,
            xtol: 1e-7,
            ftol: 1e-8,
            initial_step: 0.1,
            information: true,
        }
    }
}

/// Observed information −∇² log ℒ in natural coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Information {
    pub names: Vec<String>,
    pub matrix: Vec<Vec<f64>>,
    pub positive_definite: bool,
    /// `None` when the matrix is not positive definite.
    pub stderr: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: ModelParams,
    pub free: Vec<String>,
    pub estimates: Vec<f64>,
    pub stderr: Option<Vec<f64>>,
    pub log_likelihood: f64,
    pub initial_log_likelihood: f64,
    pub converged: bool,
    pub iterations: usize,
    pub evaluations: usize,
    /// Largest distance from the best vertex in internal coordinates.
    pub simplex_size: f64,
    pub block_size: usize,
    pub n_blocks: usize,
    pub plan: LatticePlan,
    pub information: Option<Information>,
    pub warnings: Vec<String>,
}

struct Objective<'a> {
    blocks: &'a [Observations],
    base: &'a ModelParams,
    measure: &'a MeasureKind,
    free: &'a [String],
    scales: Vec<Scale>,
    q: &'a QuadConfig,
    plan: &'a LatticePlan,
    evals: usize,
}

impl Objective<'_> {
    fn params_at(&self, z: &[f64]) -> Result<ModelParams> {
        let mut p = self.base.clone();
        for ((name, s), v) in self.free.iter().zip(&self.scales).zip(z) {
            set_param(&mut p, name, s.to_natural(*v))?;
        }
        Ok(p)
    }

    /// −log ℒ, or +∞ where the parameters are infeasible.
    fn cost(&mut self, z: &[f64]) -> f64 {
        self.evals += 1;
        let Ok(p) = self.params_at(z) else {
            return f64::INFINITY;
        };
        match composite_log_likelihood(self.blocks, &p, self.measure, self.q, Some(self.plan)) {
            Ok(ll) if ll.value.is_finite() => -ll.value,
            _ => f64::INFINITY,
        }
    }
}

struct SimplexOutcome {
    best: Vec<f64>,
    cost: f64,
    iterations: usize,
    size: f64,
    converged: bool,
}

/// Nelder–Mead with coefficients (1, 2, ½, ½). The best vertex never gets
/// worse, so the returned cost is at most the cost at `start`.
fn nelder_mead(obj: &mut Objective<'_>, start: &[f64], opts: &FitOptions) -> SimplexOutcome {
    let d = start.len();
    let mut pts: Vec<Vec<f64>> = vec![start.to_vec()];
    for k in 0..d {
        let mut v = start.to_vec();
        v[k] += opts.initial_step;
        pts.push(v);
    }
    let mut f: Vec<f64> = pts.iter().map(|p| obj.cost(p)).collect();
    let mut iterations = 0;
    let size = |pts: &[Vec<f64>]| {
        pts[1..]
            .iter()
            .map(|p| p.iter().zip(&pts[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max)
    };
    loop {
        let mut order: Vec<usize> = (0..=d).collect();
        order.sort_by(|&i, &j| f[i].total_cmp(&f[j]));
        pts = order.iter().map(|&i| pts[i].clone()).collect();
        f = order.iter().map(|&i| f[i]).collect();
        let s = size(&pts);
        let spread = f[d] - f[0];
        if s <= opts.xtol && spread <= opts.ftol {
            return SimplexOutcome {
                best: pts[0].clone(),
                cost: f[0],
                iterations,
                size: s,
                converged: true,
            };
        }
        if obj.evals >= opts.max_evals {
            return SimplexOutcome {
                best: pts[0].clone(),
                cost: f[0],
                iterations,
                size: s,
                converged: false,
            };
        }
        iterations += 1;
        let centroid: Vec<f64> = (0..d).map(|k| pts[..d].iter().map(|p| p[k]).sum::<f64>() / d as f64).collect();
        let along = |t: f64| -> Vec<f64> { centroid.iter().zip(&pts[d]).map(|(c, w)| c + t * (w - c)).collect() };
        let xr = along(-1.0);
        let fr = obj.cost(&xr);
        if fr < f[0] {
            let xe = along(-2.0);
            let fe = obj.cost(&xe);
            (pts[d], f[d]) = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < f[d - 1] {
            (pts[d], f[d]) = (xr, fr);
        } else {
            let (xc, fc) = if fr < f[d] {
                let xc = along(-0.5);
                let fc = obj.cost(&xc);
                (xc, fc)
            } else {
                let xc = along(0.5);
                let fc = obj.cost(&xc);
                (xc, fc)
            };
            if fc < f[d].min(fr) {
                (pts[d], f[d]) = (xc, fc);
            } else {
                for k in 1..=d {
                    pts[k] = pts[k].iter().zip(&pts[0]).map(|(p, b)| b + 0.5 * (p - b)).collect();
                    f[k] = obj.cost(&pts[k]);
                }
            }
        }
    }
}

fn check_blocks(blocks: &[Observations]) -> Result<usize> {
    let n = blocks.first().map(|b| b.len()).ok_or_else(|| Error::invalid("data", "no observations"))?;
    if blocks.iter().any(|b| b.len() != n) {
        return Err(Error::invalid("data", "blocks must have equal length"));
    }
    Ok(n)
}

fn check_free(init: &ModelParams, free: &[String]) -> Result<Vec<Scale>> {
    if free.is_empty() {
        return Err(Error::invalid("fit.free", "no free parameters"));
    }
    free.iter()
        .map(|name| {
            let v = get_param(init, name)?;
            let s = scale_of(name);
            let z = s.to_internal(v);
            if !z.is_finite() {
                return Err(Error::invalid(format!("fit.init.{name}"), format!("{v} is on the boundary")));
            }
            Ok(s)
        })
        .collect()
}

/// Maximizes the composite log-likelihood over the `free` parameters.
///
/// When the evaluation budget runs out the best point found is returned
/// with `converged = false`.
pub fn fit_mle(
    blocks: &[Observations],
    init: &ModelParams,
    measure: &MeasureKind,
    free: &[String],
    q: &QuadConfig,
    opts: &FitOptions,
) -> Result<FitResult> {
    init.validate("model")?;
    let n = check_blocks(blocks)?;
    let scales = check_free(init, free)?;
    let plan = plan_lattice(init, measure, n, q)?;
    let initial = composite_log_likelihood(blocks, init, measure, q, Some(&plan))?;
    let start: Vec<f64> = free
        .iter()
        .zip(&scales)
        .map(|(name, s)| get_param(init, name).map(|v| s.to_internal(v)))
        .collect::<Result<_>>()?;
    let mut obj = Objective {
        blocks,
        base: init,
        measure,
        free,
        scales,
        q,
        plan: &plan,
        evals: 0,
    };
    let out = nelder_mead(&mut obj, &start, opts);
    let evaluations = obj.evals;
    let params = obj.params_at(&out.best)?;
    let mut warnings = initial.diagnostics.warnings.clone();
    if !out.converged {
        warnings.push(format!("evaluation budget of {} exhausted before convergence", opts.max_evals));
    }
    let information = if opts.information {
        match observed_information(blocks, &params, measure, free, q, Some(&plan)) {
            Ok(info) => {
                if !info.positive_definite {
                    warnings.push("observed information is not positive definite".into());
                }
                Some(info)
            }
            Err(e) => {
                warnings.push(format!("observed information unavailable: {e}"));
                None
            }
        }
    } else {
        None
    };
    Ok(FitResult {
        estimates: free.iter().map(|name| get_param(&params, name)).collect::<Result<_>>()?,
        stderr: information.as_ref().and_then(|i| i.stderr.clone()),
        params,
        free: free.to_vec(),
        log_likelihood: -out.cost,
        initial_log_likelihood: initial.value,
        converged: out.converged,
        iterations: out.iterations,
        evaluations,
        simplex_size: out.size,
        block_size: n,
        n_blocks: blocks.len(),
        plan,
        information,
        warnings,
    })
}

/// Negative Hessian of the composite log-likelihood by central differences
/// with steps h_k = max(1e-4, 1e-4·|θ_k|) in natural coordinates.
pub fn observed_information(
    blocks: &[Observations],
    params: &ModelParams,
    measure: &MeasureKind,
    free: &[String],
    q: &QuadConfig,
    plan: Option<&LatticePlan>,
) -> Result<Information> {
    params.validate("model")?;
    let n = check_blocks(blocks)?;
    check_free(params, free)?;
    let plan = match plan {
        Some(p) => p.clone(),
        None => plan_lattice(params, measure, n, q)?,
    };
    let theta: Vec<f64> = free.iter().map(|name| get_param(params, name)).collect::<Result<_>>()?;
    let h: Vec<f64> = theta.iter().map(|t| (1e-4 * t.abs()).max(1e-4)).collect();
    let eval = |steps: &[(usize, f64)]| -> Result<f64> {
        let mut p = params.clone();
        for &(k, s) in steps {
            set_param(&mut p, &free[k], theta[k] + s * h[k])?;
        }
        Ok(composite_log_likelihood(blocks, &p, measure, q, Some(&plan))?.value)
    };
    let d = free.len();
    let f0 = eval(&[])?;
    let mut hess = vec![vec![0.0; d]; d];
    for k in 0..d {
        let fp = eval(&[(k, 1.0)])?;
        let fm = eval(&[(k, -1.0)])?;
        hess[k][k] = (fp - 2.0 * f0 + fm) / (h[k] * h[k]);
        for l in 0..k {
            let v = (eval(&[(k, 1.0), (l, 1.0)])? - eval(&[(k, 1.0), (l, -1.0)])? - eval(&[(k, -1.0), (l, 1.0)])?
                + eval(&[(k, -1.0), (l, -1.0)])?)
                / (4.0 * h[k] * h[l]);
            hess[k][l] = v;
            hess[l][k] = v;
        }
    }
    let matrix: Vec<Vec<f64>> = hess.iter().map(|r| r.iter().map(|v| -v).collect()).collect();
    let m = DMatrix::from_fn(d, d, |i, j| matrix[i][j]);
    let (positive_definite, stderr) = match m.cholesky() {
        Some(ch) => {
            let inv = ch.inverse();
            (true, Some((0..d).map(|k| inv[(k, k)].sqrt()).collect()))
        }
        None => (false, None),
    };
    Ok(Information {
        names: free.to_vec(),
        matrix,
        positive_definite,
        stderr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy::LevySpec;
    use crate::prm::{Point, PointSet};
    use crate::timechange::{ou_weight, Realization, VolSpec};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn normal_case(seed: u64, n: usize) -> (ModelParams, MeasureKind, Vec<Observations>, f64) {
        let p = ModelParams {
            mu: 0.3,
            beta: 0.0,
            rho: 0.0,
            delta: 0.5,
            levy1: LevySpec::Zero,
            levy2: LevySpec::Zero,
            vol: VolSpec {
                lambda: 1.0,
                a: 2.0,
                b: 1.0,
                factor: FactorMode::Common { kappa: 0.0 },
                s_max: None,
            },
        };
        let x0 = 2.0;
        let m = MeasureKind::Deterministic(Realization {
            primary: PointSet::new(vec![Point { s: 0.0, x: x0 }]).unwrap(),
            secondary: PointSet::default(),
        });
        let v = x0 * ou_weight(0.0, 0.0, p.delta, p.vol.lambda);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let blocks = (0..n)
            .map(|_| {
                let e: f64 = rng.sample(StandardNormal);
                Observations::new(vec![0.15 + v.sqrt() * e]).unwrap()
            })
            .collect();
        (p, m, blocks, v)
    }

    fn free(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn normal_mle_of_mu_is_the_sample_mean() {
        let (p, m, blocks, _) = normal_case(1, 200);
        let fit = fit_mle(&blocks, &p, &m, &free(&["mu"]), &QuadConfig::default(), &FitOptions::default()).unwrap();
        let xbar = blocks.iter().map(|b| b.values()[0]).sum::<f64>() / blocks.len() as f64;
        assert!(fit.converged);
        assert!((fit.estimates[0] - xbar / p.delta).abs() < 1e-6, "{} vs {}", fit.estimates[0], xbar / p.delta);
        assert!(fit.log_likelihood >= fit.initial_log_likelihood);
    }

    #[test]
    fn normal_information_in_mu() {
        let (p, m, blocks, v) = normal_case(2, 150);
        let q = QuadConfig::default();
        let info = observed_information(&blocks, &p, &m, &free(&["mu"]), &q, None).unwrap();
        let n = blocks.len() as f64;
        let expect = n * p.delta * p.delta / v;
        assert!((info.matrix[0][0] / expect - 1.0).abs() < 1e-4, "{} vs {expect}", info.matrix[0][0]);
        assert!((info.stderr.unwrap()[0] - (v / (n * p.delta * p.delta)).sqrt()).abs() < 1e-4);

        // doubling the data doubles the information
        let doubled: Vec<Observations> = blocks.iter().chain(&blocks).cloned().collect();
        let info2 = observed_information(&doubled, &p, &m, &free(&["mu"]), &q, None).unwrap();
        assert!((info2.matrix[0][0] / info.matrix[0][0] - 2.0).abs() < 0.2);
    }

    #[test]
    fn hessian_is_symmetric() {
        let (p, m, blocks, _) = normal_case(3, 50);
        let p = ModelParams { beta: 0.1, rho: -0.2, ..p };
        let info =
            observed_information(&blocks, &p, &m, &free(&["mu", "beta", "vol.a"]), &QuadConfig::default(), None)
                .unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let (a, b) = (info.matrix[i][j], info.matrix[j][i]);
                assert!((a - b).abs() <= 1e-6 * a.abs().max(b.abs()).max(1e-12));
            }
        }
    }

    #[test]
    fn start_at_optimum_does_not_move_or_worsen() {
        let (p, m, blocks, _) = normal_case(4, 100);
        let q = QuadConfig::default();
        let fit = fit_mle(&blocks, &p, &m, &free(&["mu"]), &q, &FitOptions::default()).unwrap();
        let again = fit_mle(&blocks, &fit.params, &m, &free(&["mu"]), &q, &FitOptions::default()).unwrap();
        assert!(again.log_likelihood >= again.initial_log_likelihood);
        assert!((again.estimates[0] - fit.estimates[0]).abs() < 1e-6);
    }

    #[test]
    fn budget_exhaustion_returns_best_so_far() {
        let (p, m, blocks, _) = normal_case(5, 50);
        let opts = FitOptions {
            max_evals: 3,
            information: false,
            ..FitOptions::default()
        };
        let fit = fit_mle(&blocks, &p, &m, &free(&["mu"]), &QuadConfig::default(), &opts).unwrap();
        assert!(!fit.converged);
        assert!(fit.log_likelihood >= fit.initial_log_likelihood);
        assert!(fit.warnings.iter().any(|w| w.contains("budget")));
    }

    #[test]
    fn bad_free_parameters() {
        let (p, m, blocks, _) = normal_case(6, 10);
        let q = QuadConfig::default();
        let o = FitOptions::default();
        assert!(fit_mle(&blocks, &p, &m, &free(&["nope"]), &q, &o).is_err());
        assert!(fit_mle(&blocks, &p, &m, &free(&[]), &q, &o).is_err());
        // κ = 0 sits on the boundary of the log scale
        assert!(fit_mle(&blocks, &p, &m, &free(&["vol.factor.kappa"]), &q, &o).is_err());
    }

    #[test]
    fn names_round_trip() {
        let p = ModelParams {
            levy1: LevySpec::CompoundPoissonDoubleExp {
                rate: 1.0,
                p_up: 0.3,
                eta_up: 4.0,
                eta_down: 5.0,
            },
            levy2: LevySpec::Gamma { shape: 2.0, rate: 3.0 },
            vol: VolSpec {
                factor: FactorMode::Independent {
                    lambda: 0.5,
                    a: 1.5,
                    b: 2.5,
                    kappa: 0.7,
                },
                ..normal_case(0, 1).0.vol
            },
            ..normal_case(0, 1).0
        };
        for (k, name) in parameter_names(&p).iter().enumerate() {
            let mut q = p.clone();
            let v = 0.123 + k as f64;
            set_param(&mut q, name, v).unwrap();
            assert_eq!(get_param(&q, name).unwrap(), v, "{name}");
        }
        assert_eq!(parameter_names(&p).len(), 16);
    }

    proptest! {
        #[test]
        fn scales_round_trip(v in 1e-3f64..1e3, p in 1e-3f64..0.999, x in -50.0f64..50.0) {
            for (s, val) in [(Scale::Log, v), (Scale::Logit, p), (Scale::Identity, x)] {
                let back = s.to_natural(s.to_internal(val));
                prop_assert!((back - val).abs() <= 1e-10 * val.abs().max(1.0));
            }
        }
    }
}
