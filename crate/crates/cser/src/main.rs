//! Thin CLI over the library: seeded runs, table sweeps, verification
//! suites, and plot-ready data emission.

use clap::{Parser, Subcommand, ValueEnum};
use cser::harness::{
    self, emit_plot_data, plot_rows_to_csv, sweep, table_run_configs, verify, PlotAxis, RunConfig,
    RunStatus,
};
use cser::Error;
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "cser", version, about = "Communication-efficient distributed-SGD simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run every seed of a config and write CSV/JSON metrics.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the config's seed list with a single seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the fabric thread count.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Expand the built-in compressor-configuration table over a base
    /// config and summarize final metrics per row.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Run an invariant verification suite; nonzero exit on any failure.
    Verify {
        #[arg(long, value_enum, default_value = "all")]
        suite: SuiteArg,
    },
    /// Run a config and emit a long-format (series, x, y) table.
    PlotData {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value = "round")]
        axis: AxisArg,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    All,
    Lemma1,
    Compressors,
    Reductions,
    ErrorReset,
    Impl2Equiv,
    BoundFactors,
}

impl From<SuiteArg> for verify::VerifySuite {
    fn from(s: SuiteArg) -> Self {
        match s {
            SuiteArg::All => verify::VerifySuite::All,
            SuiteArg::Lemma1 => verify::VerifySuite::Lemma1,
            SuiteArg::Compressors => verify::VerifySuite::Compressors,
            SuiteArg::Reductions => verify::VerifySuite::Reductions,
            SuiteArg::ErrorReset => verify::VerifySuite::ErrorReset,
            SuiteArg::Impl2Equiv => verify::VerifySuite::Impl2Equiv,
            SuiteArg::BoundFactors => verify::VerifySuite::BoundFactors,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    Round,
    Bits,
}

const SEED_ENV: &str = "CSER_SEED";

fn load_config(
    path: &std::path::Path,
    seed: Option<u64>,
    out: Option<PathBuf>,
    threads: Option<usize>,
) -> Result<RunConfig, Error> {
    let mut cfg = RunConfig::load(path)?;
    // the env override applies only when no --seed flag is given
    let seed = seed.or_else(|| std::env::var(SEED_ENV).ok().and_then(|s| s.parse::<u64>().ok()));
    if let Some(seed) = seed {
        cfg.run.seeds = vec![seed];
    }
    if let Some(out) = out {
        cfg.run.out = out;
    }
    if let Some(threads) = threads {
        cfg.fabric.threads = threads;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::ConfigParse(_) => 2,
        _ => 1,
    }
}

fn main() {
    let cli = Cli::parse();
    let code = match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    };
    std::process::exit(code);
}

fn dispatch(cli: Cli) -> Result<i32, Error> {
    match cli.cmd {
        Cmd::Run { config, seed, out, threads } => {
            let cfg = load_config(&config, seed, out, threads)?;
            let metrics = harness::run(&cfg, true)?;
            let mut all_completed = true;
            for m in &metrics {
                let last = m.final_record();
                match m.status {
                    RunStatus::Completed => println!(
                        "seed {}: completed, final loss = {:?}, grad_norm_sq = {:?}, uplink bits = {}",
                        m.seed,
                        last.map(|r| r.loss).unwrap_or(f64::NAN),
                        last.map(|r| r.grad_norm_sq).unwrap_or(f64::NAN),
                        last.map(|r| r.uplink_bits).unwrap_or(0),
                    ),
                    RunStatus::Diverged { round } => {
                        all_completed = false;
                        println!("seed {}: diverged at round {round}", m.seed);
                    }
                }
            }
            println!("metrics written to {}", cfg.run.out.display());
            Ok(if all_completed { 0 } else { 1 })
        }
        Cmd::Sweep { config, seed, out, threads } => {
            let cfg = load_config(&config, seed, out, threads)?;
            let configs = table_run_configs(&cfg);
            let summary = sweep(&configs);
            let csv = summary.to_csv();
            print!("{csv}");
            std::fs::create_dir_all(&cfg.run.out)?;
            let csv_path = cfg.run.out.join("sweep_summary.csv");
            std::fs::write(&csv_path, &csv)?;
            let json_path = cfg.run.out.join("sweep_summary.json");
            std::fs::write(
                &json_path,
                serde_json::to_string_pretty(&summary).expect("serializable"),
            )?;
            println!("summary written to {} and {}", csv_path.display(), json_path.display());
            let ok = summary.rows.iter().all(|r| r.failed == 0 && r.diverged == 0);
            Ok(if ok { 0 } else { 1 })
        }
        Cmd::Verify { suite } => {
            let report = verify::run_suite(suite.into())?;
            print!("{}", report.render());
            let failed = report.checks.iter().filter(|c| !c.passed).count();
            println!("{} checks, {} failed", report.checks.len(), failed);
            Ok(if report.all_passed() { 0 } else { 1 })
        }
        Cmd::PlotData { config, axis, seed, out, threads } => {
            let cfg = load_config(&config, seed, out, threads)?;
            let metrics = harness::run(&cfg, false)?;
            let axis = match axis {
                AxisArg::Round => PlotAxis::Round,
                AxisArg::Bits => PlotAxis::Bits,
            };
            let rows = emit_plot_data(&metrics, axis)?;
            let csv = plot_rows_to_csv(&rows);
            std::fs::create_dir_all(&cfg.run.out)?;
            let path = cfg.run.out.join("plot_data.csv");
            std::fs::write(&path, &csv)?;
            println!("{} rows written to {}", rows.len(), path.display());
            let ok = metrics.iter().all(|m| m.status == RunStatus::Completed);
            Ok(if ok { 0 } else { 1 })
        }
    }
}
