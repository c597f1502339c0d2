//! With no jumps and a fixed volatility realization the returns are
//! conditionally Normal, so the Fourier likelihood must reproduce the
//! Normal log-density for blocks of 1, 2 and 3 returns.
//!
//! cargo run --release --example normal_degeneration

use tclevy::levy::LevySpec;
use tclevy::likelihood::{log_likelihood, normal_log_pdf, MeasureKind, ModelParams, Observations, QuadConfig};
use tclevy::prm::{Point, PointSet};
use tclevy::timechange::{FactorMode, Realization, VolSpec};

fn main() -> tclevy::Result<()> {
    let params = ModelParams {
        mu: 0.1,
        beta: 0.3,
        rho: -0.4,
        delta: 1.0,
        levy1: LevySpec::Zero,
        levy2: LevySpec::Zero,
        vol: VolSpec {
            lambda: 0.7,
            a: 2.0,
            b: 1.0,
            factor: FactorMode::Common { kappa: 0.5 },
            s_max: None,
        },
    };
    let realization = Realization {
        primary: PointSet::new(vec![
            Point { s: -1.0, x: 1.2 },
            Point { s: 0.3, x: 0.6 },
            Point { s: 1.1, x: 0.9 },
            Point { s: 2.4, x: 1.5 },
        ])?,
        secondary: PointSet::default(),
    };
    let (tau, gamma) = params.vol.time_changes(&realization, 3, params.delta);
    let x = [0.4, -0.6, 1.1];
    let measure = MeasureKind::Deterministic(realization);
    let q = QuadConfig::default();
    for n in 1..=3 {
        let ll = log_likelihood(&Observations::new(x[..n].to_vec())?, &params, &measure, &q)?;
        let normal: f64 = (0..n)
            .map(|i| {
                let ts = tau[i] + gamma[i];
                normal_log_pdf(x[i], params.mu * params.delta + params.beta * ts + params.rho * gamma[i], ts)
            })
            .sum();
        println!(
            "n = {n}: fourier {:.10}  normal {normal:.10}  diff {:.1e}  ({}, {} evaluations)",
            ll.value,
            (ll.value - normal).abs(),
            ll.diagnostics.method,
            ll.diagnostics.evaluations
        );
    }
    Ok(())
}
