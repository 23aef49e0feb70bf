//! Sweep the built-in compressor-configuration table (every optimizer and
//! overall ratio) on a small noisy quadratic and print the summary.
//!
//!     cargo run --release --example table_sweep

use cser::compressors::CompressorSpec;
use cser::harness::{sweep, table_run_configs, FabricSettings, ProblemConfig, RunConfig, RunSettings};
use cser::optimizers::{OptimizerConfig, Variant};
use cser::problems::QuadraticConfig;

fn main() -> cser::Result<()> {
    let base = RunConfig {
        problem: ProblemConfig::Quadratic(QuadraticConfig {
            n: 4,
            d: 512,
            noise_scale: 0.5,
            seed: 7,
            ..QuadraticConfig::default()
        }),
        optimizer: OptimizerConfig::new(
            Variant::Cser,
            0.02,
            1,
            CompressorSpec::identity(),
            CompressorSpec::zero(),
        ),
        fabric: FabricSettings::default(),
        run: RunSettings { rounds: 400, seeds: vec![1, 2, 3], cadence: 100, ..RunSettings::default() },
    };
    let configs = table_run_configs(&base);
    println!("running {} table rows x {} seeds ...", configs.len(), base.run.seeds.len());
    let summary = sweep(&configs);
    println!(
        "{:<22} {:>9} {:>14} {:>12} {:>10}",
        "row", "ratio", "final loss", "+/- std", "diverged"
    );
    for r in &summary.rows {
        println!(
            "{:<22} {:>9} {:>14.5} {:>12.2e} {:>10}",
            r.label, r.overall_ratio, r.mean_final_loss, r.std_final_loss, r.diverged
        );
    }
    Ok(())
}
