//! Simulates 400 independent two-return blocks and recovers (μ, β) by
//! composite maximum likelihood, holding the other parameters at truth.
//!
//! cargo run --release --example fit_mle

use tclevy::estimate::{fit_mle, FitOptions};
use tclevy::levy::LevySpec;
use tclevy::likelihood::{MeasureKind, ModelParams, Observations, QuadConfig};
use tclevy::montecarlo::simulate_returns;
use tclevy::timechange::{FactorMode, VolSpec};

fn main() -> tclevy::Result<()> {
    let truth = ModelParams {
        mu: 0.0,
        beta: 0.2,
        rho: -0.3,
        delta: 1.0,
        levy1: LevySpec::CompoundPoissonNormal {
            rate: 0.5,
            mean: 0.0,
            sd: 0.3,
        },
        levy2: LevySpec::Zero,
        vol: VolSpec {
            lambda: 1.0,
            a: 2.0,
            b: 1.0,
            factor: FactorMode::Common { kappa: 1.0 },
            s_max: None,
        },
    };
    let sim = simulate_returns(&truth, &MeasureKind::Poisson, 2, 400, 7, false)?;
    let blocks: Vec<Observations> = (0..sim.n_paths())
        .map(|k| Observations::new(sim.path(k).to_vec()))
        .collect::<tclevy::Result<_>>()?;

    let init = ModelParams {
        mu: 0.1,
        beta: 0.0,
        ..truth.clone()
    };
    let free = vec!["mu".to_string(), "beta".to_string()];
    let start = std::time::Instant::now();
    let fit = fit_mle(
        &blocks,
        &init,
        &MeasureKind::Poisson,
        &free,
        &QuadConfig::default(),
        &FitOptions::default(),
    )?;
    println!(
        "converged {} after {} evaluations in {:.1?}",
        fit.converged,
        fit.evaluations,
        start.elapsed()
    );
    println!("log-likelihood {:.4} (start {:.4})", fit.log_likelihood, fit.initial_log_likelihood);
    let se = fit.stderr.clone().unwrap_or_default();
    for (k, name) in free.iter().enumerate() {
        let t = tclevy::estimate::get_param(&truth, name)?;
        let s = se.get(k).copied().unwrap_or(f64::NAN);
        println!(
            "{name:>5}: estimate {:8.4}  se {:6.4}  truth {t:6.3}  z {:5.2}",
            fit.estimates[k],
            s,
            (fit.estimates[k] - t) / s
        );
    }
    Ok(())
}
