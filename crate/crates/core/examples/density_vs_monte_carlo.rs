//! Exact one-period density against a kernel density estimate of 10^6
//! simulated returns.
//!
//! cargo run --release --example density_vs_monte_carlo [bandwidth_scale]

use tclevy::levy::LevySpec;
use tclevy::likelihood::{marginal_density_grid, MeasureKind, ModelParams, QuadConfig};
use tclevy::montecarlo::{empirical_density, normal_reference_bandwidth, simulate_returns, KdeOptions};
use tclevy::timechange::{FactorMode, VolSpec};

fn main() -> tclevy::Result<()> {
    let scale: f64 = std::env::args().nth(1).map_or(1.0, |s| s.parse().expect("bandwidth scale"));
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
    let sim = simulate_returns(&params, &MeasureKind::Poisson, 1, 1_000_000, 2024, false)?;
    let mut sorted = sim.returns.clone();
    sorted.sort_by(f64::total_cmp);
    let (lo, hi) = (sorted[5_000], sorted[995_000]);
    let grid: Vec<f64> = (0..50).map(|k| lo + (hi - lo) * k as f64 / 49.0).collect();

    let exact = marginal_density_grid(&grid, &params, &QuadConfig::default())?;
    let opts = KdeOptions {
        bandwidth: Some(scale * normal_reference_bandwidth(&sim.returns)),
        ..KdeOptions::default()
    };
    let kde = empirical_density(&sim.returns, &grid, &opts)?;

    println!("bandwidth {:.4}", kde.bandwidth);
    println!("{:>9} {:>10} {:>10} {:>7}", "x", "exact", "kde", "z");
    let mut worst: f64 = 0.0;
    for k in 0..grid.len() {
        let z = (kde.density[k] - exact.density[k]) / kde.stderr[k];
        worst = worst.max(z.abs());
        println!("{:9.4} {:10.6} {:10.6} {:7.2}", grid[k], exact.density[k], kde.density[k], z);
    }
    println!("max |z| = {worst:.2}");
    Ok(())
}
