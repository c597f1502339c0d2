//! Laplace functional of the Γ-OU random measure for a complex kernel by
//! three routes (closed form, exponential-mark reduction, 2-D quadrature),
//! then for a real kernel against simulated point sets.
//!
//! cargo run --release --example laplace_functional

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tclevy::likelihood::QuadConfig;
use tclevy::timechange::{FactorMode, VolSpec};

fn main() -> tclevy::Result<()> {
    let vol = VolSpec {
        lambda: 0.8,
        a: 2.0,
        b: 1.5,
        factor: FactorMode::Common { kappa: 0.5 },
        s_max: None,
    };
    let q = QuadConfig::default();
    let ch = [Complex64::new(0.7, 1.5), Complex64::new(1.2, -0.4)];
    let cg = [Complex64::new(0.3, 0.2), Complex64::new(0.0, 2.0)];
    let k = vol.kernel(1.0, &ch, &cg);
    println!("closed form    {:.12}", vol.laplace(&k, &q)?);
    println!("1-D reduction  {:.12}", vol.laplace_exp_marks(&k, &q)?);
    println!("2-D quadrature {:.12}", vol.laplace_generic(&k, &q)?);

    let real = [Complex64::new(0.8, 0.0), Complex64::new(0.4, 0.0)];
    let k = vol.kernel(1.0, &real, &[Complex64::new(0.0, 0.0); 2]);
    let exact = (-vol.laplace(&k, &q)?).exp().re;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let draws = 100_000;
    let vals: Vec<f64> = (0..draws)
        .map(|_| {
            let r = vol.sample(2.0, &mut rng);
            (-k.apply(&r)).exp().re
        })
        .collect();
    let mean = vals.iter().sum::<f64>() / draws as f64;
    let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (draws - 1) as f64).sqrt();
    println!(
        "E[exp(-N(f))]: exact {exact:.5}  simulated {mean:.5} ± {:.5}",
        sd / (draws as f64).sqrt()
    );
    Ok(())
}
