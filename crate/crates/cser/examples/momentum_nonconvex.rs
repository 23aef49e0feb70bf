//! Momentum error-reset on the non-convex instance: a tiny tanh network on
//! two-cluster data, with a step-decay schedule.
//!
//!     cargo run --release --example momentum_nonconvex

use cser::compressors::CompressorSpec;
use cser::harness::simulate;
use cser::optimizers::{EtaSchedule, OptimizerConfig, Variant};
use cser::problems::{Mlp, MlpConfig, Problem};
use cser::syncfabric::FabricConfig;

fn main() -> cser::Result<()> {
    let problem = Problem::Mlp(Mlp::new(&MlpConfig {
        n: 8,
        input_dim: 6,
        hidden: 16,
        samples_per_worker: 128,
        batch: 8,
        cluster_sep: 2.5,
        seed: 3,
        ..MlpConfig::default()
    })?);
    println!("parameters: d = {}", problem.dim());
    let c = problem.constants();
    println!("sampled constants: L ~ {:.3}, V1 ~ {:.3}, V2 ~ {:.3}", c.l, c.v1_estimate, c.v2_estimate);

    let mut cfg = OptimizerConfig::new(
        Variant::MCser,
        0.05,
        8,
        CompressorSpec::grbs(4.0, 0, 11),
        CompressorSpec::grbs(16.0, 0, 12),
    )
    .with_beta(0.9);
    cfg.c1.blocks = problem.dim().min(512);
    cfg.c2.blocks = problem.dim().min(512);
    cfg.schedule = EtaSchedule::StepDecay { milestones: vec![600, 1200], factor: 0.2 };

    let outcome = simulate(&problem, &cfg, &FabricConfig::new(8), 1600, 200, 1)?;
    println!("{:>8} {:>12} {:>14} {:>12}", "round", "loss", "grad_norm_sq", "kbit up");
    for r in &outcome.records {
        println!(
            "{:>8} {:>12.6} {:>14.4e} {:>12.1}",
            r.round,
            r.loss,
            r.grad_norm_sq,
            r.uplink_bits as f64 / 1e3
        );
    }
    println!("status: {:?}", outcome.status);
    Ok(())
}
