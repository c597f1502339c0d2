//! Joint characteristic function of two consecutive returns: the analytic
//! expression against the empirical one from simulated pairs.
//!
//! cargo run --release --example joint_cf

use tclevy::levy::LevySpec;
use tclevy::likelihood::{characteristic_function, MeasureKind, ModelParams, QuadConfig};
use tclevy::montecarlo::{empirical_joint_cf, simulate_returns};
use tclevy::timechange::{FactorMode, VolSpec};

fn main() -> tclevy::Result<()> {
    let params = ModelParams {
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
    let q = QuadConfig::default();
    let sim = simulate_returns(&params, &MeasureKind::Poisson, 2, 500_000, 5, false)?;
    println!("{:>12} {:>24} {:>24} {:>6}", "u", "exact", "simulated", "z");
    for u in [[0.5, 0.0], [0.0, 0.5], [0.4, 0.4], [0.7, -0.3], [-0.2, 0.9]] {
        let exact = characteristic_function(&params, &MeasureKind::Poisson, &u, &q)?;
        let est = empirical_joint_cf(&sim.returns, &u)?;
        println!(
            "{:>12} {:>24.5} {:>24.5} {:6.2}",
            format!("{u:?}"),
            exact,
            est.value,
            est.z_score(exact)
        );
    }
    // Dependence through the shared volatility: φ(u1, u2) ≠ φ(u1, 0)·φ(0, u2).
    let joint = characteristic_function(&params, &MeasureKind::Poisson, &[0.8, 0.8], &q)?;
    let a = characteristic_function(&params, &MeasureKind::Poisson, &[0.8, 0.0], &q)?;
    let b = characteristic_function(&params, &MeasureKind::Poisson, &[0.0, 0.8], &q)?;
    println!("phi(0.8, 0.8) = {joint:.5}, product of marginals = {:.5}", a * b);
    Ok(())
}
