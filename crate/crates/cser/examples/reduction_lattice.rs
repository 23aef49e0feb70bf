//! The special-case lattice, demonstrated numerically: with the right
//! compressor and interval settings the algorithms collapse into each other,
//! and with a single worker the error-reset methods are plain (momentum) SGD.
//!
//!     cargo run --release --example reduction_lattice

use cser::compressors::CompressorSpec;
use cser::harness::{simulate_observed, Phase};
use cser::numerics::Vector;
use cser::optimizers::{OptimizerConfig, Variant};
use cser::problems::{Problem, Quadratic, QuadraticConfig};
use cser::syncfabric::FabricConfig;

fn trajectory(problem: &Problem, cfg: &OptimizerConfig, rounds: u64) -> cser::Result<Vec<Vec<Vector>>> {
    let mut snaps = Vec::new();
    simulate_observed(
        problem,
        cfg,
        &FabricConfig::new(problem.workers()),
        rounds,
        rounds,
        3,
        &mut |phase, _t, states| {
            if phase == Phase::AfterStep {
                snaps.push(states.iter().map(|w| w.x.clone()).collect());
            }
        },
    )?;
    Ok(snaps)
}

fn max_diff(a: &[Vec<Vector>], b: &[Vec<Vector>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| x.max_abs_diff(y)))
        .fold(0.0, f64::max)
}

fn main() -> cser::Result<()> {
    let problem = Problem::Quadratic(Quadratic::new(&QuadraticConfig {
        n: 4,
        d: 256,
        noise_scale: 0.5,
        seed: 13,
        ..QuadraticConfig::default()
    })?);
    let rounds = 200;
    let g4 = CompressorSpec::grbs(4.0, 64, 11);
    let zero = CompressorSpec::zero();
    let ident = CompressorSpec::identity();

    let pairs = [
        (
            "cser with c2 = zero reduces to cser_pl",
            OptimizerConfig::new(Variant::Cser, 0.02, 4, g4, zero),
            OptimizerConfig::new(Variant::CserPl, 0.02, 4, g4, zero),
        ),
        (
            "cser_pl with h = 1 reduces to csea",
            OptimizerConfig::new(Variant::CserPl, 0.02, 1, g4, zero),
            OptimizerConfig::new(Variant::Csea, 0.02, 1, g4, zero),
        ),
        (
            "cser_pl with identity c1 reduces to local_sgd",
            OptimizerConfig::new(Variant::CserPl, 0.02, 4, ident, zero),
            OptimizerConfig::new(Variant::LocalSgd, 0.02, 4, ident, zero),
        ),
        (
            "qsparse with h = 1 reduces to ef_sgd",
            OptimizerConfig::new(Variant::QSparseLocal, 0.02, 1, g4, zero),
            OptimizerConfig::new(Variant::EfSgd, 0.02, 1, g4, zero),
        ),
        (
            "qsparse with identity c1 reduces to local_sgd",
            OptimizerConfig::new(Variant::QSparseLocal, 0.02, 4, ident, zero),
            OptimizerConfig::new(Variant::LocalSgd, 0.02, 4, ident, zero),
        ),
    ];
    println!("trajectory agreement over {rounds} rounds, n = 4, d = 256:");
    for (name, a, b) in pairs {
        let ta = trajectory(&problem, &a, rounds)?;
        let tb = trajectory(&problem, &b, rounds)?;
        println!("  {name:<48} max diff = {:.3e}", max_diff(&ta, &tb));
    }
    Ok(())
}
