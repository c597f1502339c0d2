//! Simulates return paths with their latent jump and time-change
//! components and writes both CSV files to the current directory.
//!
//! cargo run --release --example simulate_paths

use std::fs::File;

use tclevy::levy::LevySpec;
use tclevy::likelihood::{MeasureKind, ModelParams};
use tclevy::montecarlo::simulate_returns;
use tclevy::timechange::{FactorMode, VolSpec};

fn main() -> tclevy::Result<()> {
    let params = ModelParams {
        mu: 0.05,
        beta: 0.2,
        rho: -0.3,
        delta: 1.0,
        levy1: LevySpec::CompoundPoissonDoubleExp {
            rate: 0.8,
            p_up: 0.3,
            eta_up: 5.0,
            eta_down: 3.0,
        },
        levy2: LevySpec::Zero,
        vol: VolSpec {
            lambda: 0.5,
            a: 2.0,
            b: 1.0,
            factor: FactorMode::Independent {
                lambda: 2.0,
                a: 1.0,
                b: 2.0,
                kappa: 1.0,
            },
            s_max: None,
        },
    };
    let sim = simulate_returns(&params, &MeasureKind::Poisson, 20, 5, 11, true)?;
    sim.write_returns_csv(File::create("returns.csv")?)?;
    sim.write_latents_csv(File::create("latents.csv")?)?;

    let latents = sim.latents.as_ref().expect("latents kept");
    let mut worst: f64 = 0.0;
    for (k, l) in latents.iter().enumerate() {
        let ts = l.tau + l.gamma;
        let rebuilt = params.mu * params.delta + l.j1 + l.j2 + params.beta * ts + params.rho * l.gamma + ts.sqrt() * l.eps;
        worst = worst.max((rebuilt - sim.returns[k]).abs());
    }
    println!("wrote returns.csv and latents.csv ({} paths of {} returns)", sim.n_paths(), sim.n);
    println!("first path: {:?}", &sim.path(0)[..5]);
    println!("max reconstruction error from latents {worst:.1e}");
    Ok(())
}
