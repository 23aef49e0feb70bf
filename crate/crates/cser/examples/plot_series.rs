//! Emit plot-ready long-format series (loss and gradient curves against
//! rounds or cumulative bits) for a pair of optimizers.
//!
//!     cargo run --release --example plot_series > series.csv

use cser::compressors::CompressorSpec;
use cser::harness::{
    emit_plot_data, plot_rows_to_csv, run, FabricSettings, PlotAxis, ProblemConfig, RunConfig,
    RunSettings,
};
use cser::optimizers::{OptimizerConfig, Variant};
use cser::problems::QuadraticConfig;

fn config(label: &str, opt: OptimizerConfig) -> RunConfig {
    RunConfig {
        problem: ProblemConfig::Quadratic(QuadraticConfig {
            n: 8,
            d: 500,
            noise_scale: 0.5,
            seed: 5,
            ..QuadraticConfig::default()
        }),
        optimizer: opt,
        fabric: FabricSettings::default(),
        run: RunSettings {
            rounds: 500,
            seeds: vec![1],
            cadence: 25,
            label: Some(label.to_string()),
            ..RunSettings::default()
        },
    }
}

fn main() -> cser::Result<()> {
    let cser = config(
        "cser_rc32",
        OptimizerConfig::new(
            Variant::Cser,
            0.02,
            8,
            CompressorSpec::grbs(8.0, 0, 11),
            CompressorSpec::grbs(64.0, 0, 12),
        ),
    );
    let full = config(
        "full_sgd",
        OptimizerConfig::new(
            Variant::FullSgd,
            0.02,
            1,
            CompressorSpec::identity(),
            CompressorSpec::identity(),
        ),
    );

    let mut metrics = Vec::new();
    for cfg in [&full, &cser] {
        let mut cfg = cfg.clone();
        cfg.fill_auto_blocks();
        metrics.extend(run(&cfg, false)?);
    }
    // communication axis: loss against cumulative transmitted bits
    let rows = emit_plot_data(&metrics, PlotAxis::Bits)?;
    print!("{}", plot_rows_to_csv(&rows));
    Ok(())
}
