//! Laplace exponents of the built-in jump laws, checked against the
//! empirical log-MGF of simulated increments.
//!
//! cargo run --release --example levy_exponents

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tclevy::levy::LevySpec;

fn main() -> tclevy::Result<()> {
    let specs = [
        LevySpec::CompoundPoissonNormal {
            rate: 0.5,
            mean: -0.1,
            sd: 0.3,
        },
        LevySpec::CompoundPoissonDoubleExp {
            rate: 1.0,
            p_up: 0.4,
            eta_up: 6.0,
            eta_down: 5.0,
        },
        LevySpec::Gamma { shape: 2.0, rate: 3.0 },
        LevySpec::InverseGaussian { delta: 0.7, gamma: 1.2 },
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for spec in &specs {
        let strip = spec.strip();
        let (mean, var) = spec.cumulants()?;
        println!("{spec:?}");
        println!("  strip ({:.2}, {:.2})  mean {mean:.4}  variance {var:.4}", strip.lo, strip.hi);
        let draws: Vec<f64> = (0..200_000).map(|_| spec.sample_increment(1.0, &mut rng)).collect();
        for w in [-0.5, 0.5, 1.0] {
            if !strip.contains(w) {
                continue;
            }
            let psi = spec.psi(Complex64::new(w, 0.0))?.re;
            let mgf = draws.iter().map(|j| (-w * j).exp()).sum::<f64>() / draws.len() as f64;
            println!("  w = {w:5.2}: psi {psi:9.5}  -log E[e^(-wJ)] {:9.5}", -mgf.ln());
        }
        let w = Complex64::new(0.1, 2.0);
        println!("  psi({w}) = {:.5}", spec.psi(w)?);
    }
    Ok(())
}
