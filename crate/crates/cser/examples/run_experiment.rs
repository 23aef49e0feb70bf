//! Run the error-reset optimizer against fully synchronous SGD on the noisy
//! heterogeneous quadratic and compare loss against transmitted bits.
//!
//!     cargo run --release --example run_experiment

use cser::compressors::CompressorSpec;
use cser::harness::simulate;
use cser::optimizers::{overall_compression_ratio, OptimizerConfig, Variant};
use cser::problems::{Problem, Quadratic, QuadraticConfig};
use cser::syncfabric::FabricConfig;

fn main() -> cser::Result<()> {
    let problem = Problem::Quadratic(Quadratic::new(&QuadraticConfig {
        n: 8,
        d: 1000,
        noise_scale: 0.5,
        seed: 1,
        ..QuadraticConfig::default()
    })?);

    // overall ratio 32: gradients compressed 64x every round, residuals
    // compressed 8x every 8th round
    let cser = OptimizerConfig::new(
        Variant::Cser,
        0.02,
        8,
        CompressorSpec::grbs(8.0, 512, 11),
        CompressorSpec::grbs(64.0, 512, 12),
    );
    let full = OptimizerConfig::new(
        Variant::FullSgd,
        0.02,
        1,
        CompressorSpec::identity(),
        CompressorSpec::identity(),
    );

    let fabric = FabricConfig::new(problem.workers());
    let rounds = 2000;
    println!(
        "target compression ratio: {}",
        overall_compression_ratio(Variant::Cser, 8.0, 64.0, 8)
    );
    println!("{:<10} {:>8} {:>14} {:>16} {:>16}", "optimizer", "round", "loss", "grad_norm_sq", "uplink_mbit");
    for (name, cfg) in [("full_sgd", &full), ("cser", &cser)] {
        let outcome = simulate(&problem, cfg, &fabric, rounds, 400, 1)?;
        for r in &outcome.records {
            println!(
                "{:<10} {:>8} {:>14.6} {:>16.3e} {:>16.3}",
                name,
                r.round,
                r.loss,
                r.grad_norm_sq,
                r.uplink_bits as f64 / 1e6
            );
        }
        println!("{name}: status {:?}", outcome.status);
    }
    Ok(())
}
