//! Experiment runner: seeded runs, sweeps over the built-in configuration
//! table, metric files (CSV + JSON), plot-ready series, and the invariant
//! verification suites.

mod config;
mod runner;
pub mod verify;

pub use config::{FabricSettings, ProblemConfig, RunConfig, RunSettings};
pub use runner::{
    simulate, simulate_observed, Phase, RunRecord, RunStatus, SimOutcome,
};

use crate::compressors::CompressorSpec;
use crate::optimizers::{compressor_config_table, overall_compression_ratio, OptimizerConfig, Variant};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Metrics of one seeded run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunMetrics {
    pub label: String,
    pub seed: u64,
    pub status: RunStatus,
    pub records: Vec<RunRecord>,
}

impl RunMetrics {
    pub fn final_record(&self) -> Option<&RunRecord> {
        self.records.last()
    }

    /// CSV with the stable schema
    /// `round,loss,grad_norm_sq,uplink_bits,downlink_bits,elapsed_ns`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("round,loss,grad_norm_sq,uplink_bits,downlink_bits,elapsed_ns\n");
        for r in &self.records {
            writeln!(
                out,
                "{},{:?},{:?},{},{},{}",
                r.round, r.loss, r.grad_norm_sq, r.uplink_bits, r.downlink_bits, r.elapsed_ns
            )
            .expect("string write");
        }
        out
    }
}

/// Runs every seed of a config, writing `<label>-seed<k>.csv` and `.json`
/// into the output directory (when `write_files`).
pub fn run(cfg: &RunConfig, write_files: bool) -> Result<Vec<RunMetrics>> {
    cfg.validate()?;
    let problem = cfg.problem.build()?;
    let fabric_cfg = cfg.fabric.to_config(problem.workers());
    let label = cfg.label();
    let mut all = Vec::with_capacity(cfg.run.seeds.len());
    for &seed in &cfg.run.seeds {
        let outcome = simulate(
            &problem,
            &cfg.optimizer,
            &fabric_cfg,
            cfg.run.rounds,
            cfg.run.cadence,
            seed,
        )?;
        let metrics = RunMetrics {
            label: label.clone(),
            seed,
            status: outcome.status,
            records: outcome.records,
        };
        if write_files {
            write_metric_files(&cfg.run.out, &metrics)?;
        }
        all.push(metrics);
    }
    Ok(all)
}

pub fn metric_file_stem(label: &str, seed: u64) -> String {
    format!("{label}-seed{seed}")
}

pub fn write_metric_files(dir: &Path, metrics: &RunMetrics) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir)?;
    let stem = metric_file_stem(&metrics.label, metrics.seed);
    let csv_path = dir.join(format!("{stem}.csv"));
    let json_path = dir.join(format!("{stem}.json"));
    std::fs::write(&csv_path, metrics.to_csv())?;
    let json = serde_json::to_string_pretty(metrics).expect("metrics serialize");
    std::fs::write(&json_path, json)?;
    Ok((csv_path, json_path))
}

/// Summary row of a sweep: final-loss statistics over seeds plus the
/// computed overall compression ratio of the row's settings.
#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub label: String,
    pub variant: &'static str,
    pub overall_ratio: f64,
    pub mean_final_loss: f64,
    pub std_final_loss: f64,
    pub mean_final_grad_norm_sq: f64,
    pub completed: usize,
    pub diverged: usize,
    pub failed: usize,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct SweepSummary {
    pub rows: Vec<SweepRow>,
}

impl SweepSummary {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "label,variant,overall_ratio,mean_final_loss,std_final_loss,mean_final_grad_norm_sq,completed,diverged,failed\n",
        );
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{:?},{:?},{:?},{:?},{},{},{}",
                r.label,
                r.variant,
                r.overall_ratio,
                r.mean_final_loss,
                r.std_final_loss,
                r.mean_final_grad_norm_sq,
                r.completed,
                r.diverged,
                r.failed
            )
            .expect("string write");
        }
        out
    }
}

/// Runs a list of labelled configs and summarizes final metrics per row.
/// Individual failures are recorded in their row; the sweep continues.
pub fn sweep(configs: &[(String, RunConfig)]) -> SweepSummary {
    let mut rows = Vec::with_capacity(configs.len());
    for (label, cfg) in configs {
        let o = &cfg.optimizer;
        let ratio = overall_compression_ratio(o.variant, o.c1.ratio, o.c2.ratio, o.h);
        match run(cfg, false) {
            Ok(metrics) => {
                let finals: Vec<f64> = metrics
                    .iter()
                    .filter(|m| m.status == RunStatus::Completed)
                    .filter_map(|m| m.final_record().map(|r| r.loss))
                    .collect();
                let grads: Vec<f64> = metrics
                    .iter()
                    .filter(|m| m.status == RunStatus::Completed)
                    .filter_map(|m| m.final_record().map(|r| r.grad_norm_sq))
                    .collect();
                let completed = finals.len();
                let diverged = metrics.len() - completed;
                rows.push(SweepRow {
                    label: label.clone(),
                    variant: o.variant.name(),
                    overall_ratio: ratio,
                    mean_final_loss: mean(&finals),
                    std_final_loss: sample_std(&finals),
                    mean_final_grad_norm_sq: mean(&grads),
                    completed,
                    diverged,
                    failed: 0,
                    error: None,
                });
            }
            Err(e) => rows.push(SweepRow {
                label: label.clone(),
                variant: o.variant.name(),
                overall_ratio: ratio,
                mean_final_loss: f64::NAN,
                std_final_loss: f64::NAN,
                mean_final_grad_norm_sq: f64::NAN,
                completed: 0,
                diverged: 0,
                failed: cfg.run.seeds.len(),
                error: Some(e.to_string()),
            }),
        }
    }
    SweepSummary { rows }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return if xs.is_empty() { f64::NAN } else { 0.0 };
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Expands the built-in compressor-configuration table into runnable
/// configs derived from a base experiment. Blockwise sparsifiers reuse the
/// base problem dimension for their auto block count; ratio-1 compressors
/// degrade to identity.
pub fn table_run_configs(base: &RunConfig) -> Vec<(String, RunConfig)> {
    let table = compressor_config_table();
    let mut out = Vec::with_capacity(table.len());
    for row in table {
        let mut cfg = base.clone();
        let sparsifier = |ratio: f64, seed: u64| {
            if ratio <= 1.0 {
                CompressorSpec::identity()
            } else {
                CompressorSpec::grbs(ratio, 0, seed)
            }
        };
        cfg.optimizer = OptimizerConfig {
            variant: row.variant,
            eta: base.optimizer.eta,
            beta: base.optimizer.beta,
            h: row.h.unwrap_or(1),
            c1: sparsifier(row.r1, 11),
            c2: match row.r2 {
                Some(r2) => sparsifier(r2, 12),
                None => CompressorSpec::zero(),
            },
            schedule: base.optimizer.schedule.clone(),
        };
        cfg.fill_auto_blocks();
        let label = format!("{}-rc{}", row.variant.name(), row.overall);
        cfg.run.label = Some(label.clone());
        out.push((label, cfg));
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlotAxis {
    Round,
    Bits,
}

/// One long-format plot point.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PlotRow {
    pub series: String,
    pub x: f64,
    pub y: f64,
}

/// Long-format (series, x, y) table over the runs' loss and gradient
/// curves; x is the round index or cumulative transmitted bits.
pub fn emit_plot_data(metrics: &[RunMetrics], axis: PlotAxis) -> Result<Vec<PlotRow>> {
    if metrics.is_empty() {
        return Err(Error::Domain("emit_plot_data: no metrics".into()));
    }
    let mut seen = HashSet::new();
    let mut rows = Vec::new();
    for m in metrics {
        let base = format!("{}-seed{}", m.label, m.seed);
        if !seen.insert(base.clone()) {
            return Err(Error::LabelCollision(base));
        }
        for r in &m.records {
            let x = match axis {
                PlotAxis::Round => r.round as f64,
                PlotAxis::Bits => (r.uplink_bits + r.downlink_bits) as f64,
            };
            rows.push(PlotRow { series: format!("{base}/loss"), x, y: r.loss });
            rows.push(PlotRow { series: format!("{base}/grad_norm_sq"), x, y: r.grad_norm_sq });
        }
    }
    Ok(rows)
}

pub fn plot_rows_to_csv(rows: &[PlotRow]) -> String {
    let mut out = String::from("series,x,y\n");
    for r in rows {
        writeln!(out, "{},{:?},{:?}", r.series, r.x, r.y).expect("string write");
    }
    out
}

/// Baseline full-sync experiment used as the reference when measuring
/// compression ratios from the ledger.
pub fn full_sync_reference(base: &RunConfig) -> RunConfig {
    let mut cfg = base.clone();
    cfg.optimizer = OptimizerConfig::new(
        Variant::FullSgd,
        base.optimizer.eta,
        1,
        CompressorSpec::identity(),
        CompressorSpec::identity(),
    );
    cfg.run.label = Some("full_sgd-reference".into());
    cfg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::QuadraticConfig;

    fn tiny_config() -> RunConfig {
        RunConfig {
            problem: ProblemConfig::Quadratic(QuadraticConfig {
                n: 2,
                d: 16,
                noise_scale: 0.1,
                seed: 3,
                ..QuadraticConfig::default()
            }),
            optimizer: OptimizerConfig::new(
                Variant::Cser,
                0.05,
                4,
                CompressorSpec::grbs(2.0, 8, 11),
                CompressorSpec::grbs(4.0, 8, 12),
            ),
            fabric: FabricSettings::default(),
            run: RunSettings { rounds: 40, seeds: vec![1, 2], cadence: 10, ..RunSettings::default() },
        }
    }

    #[test]
    fn run_produces_metrics_per_seed() {
        let metrics = run(&tiny_config(), false).unwrap();
        assert_eq!(metrics.len(), 2);
        for m in &metrics {
            assert_eq!(m.status, RunStatus::Completed);
            // rounds 0, 10, 20, 30, 40
            assert_eq!(m.records.len(), 5);
            assert!(m.records.windows(2).all(|w| w[0].round < w[1].round));
            assert!(m.records.windows(2).all(|w| w[0].uplink_bits <= w[1].uplink_bits));
        }
    }

    #[test]
    fn plot_rows_round_and_bits_axes() {
        let metrics = run(&tiny_config(), false).unwrap();
        let rows = emit_plot_data(&metrics, PlotAxis::Round).unwrap();
        assert_eq!(rows.len(), 2 * 2 * 5);
        let bits = emit_plot_data(&metrics, PlotAxis::Bits).unwrap();
        let xs: Vec<f64> = bits
            .iter()
            .filter(|r| r.series.ends_with("/loss") && r.series.starts_with("cser-seed1"))
            .map(|r| r.x)
            .collect();
        assert!(xs.windows(2).all(|w| w[0] <= w[1]), "bits axis must be non-decreasing");
    }

    #[test]
    fn plot_label_collision_detected() {
        let metrics = run(&tiny_config(), false).unwrap();
        let doubled = vec![metrics[0].clone(), metrics[0].clone()];
        assert!(matches!(
            emit_plot_data(&doubled, PlotAxis::Round),
            Err(Error::LabelCollision(_))
        ));
    }

    #[test]
    fn empty_sweep_is_empty() {
        let summary = sweep(&[]);
        assert!(summary.rows.is_empty());
    }

    #[test]
    fn ef_sgd_first_round_residual_with_zero_compressor() {
        // with C1 = zero, everything becomes residual: e_1 = -eta * g_1
        use crate::harness::runner::{simulate_observed, Phase};
        use crate::problems::Quadratic;
        let problem = crate::problems::Problem::Quadratic(
            Quadratic::new(&QuadraticConfig {
                n: 2,
                d: 8,
                noise_scale: 0.3,
                seed: 3,
                ..QuadraticConfig::default()
            })
            .unwrap(),
        );
        let eta = 0.05;
        let cfg = OptimizerConfig::new(
            Variant::EfSgd,
            eta,
            1,
            CompressorSpec::zero(),
            CompressorSpec::zero(),
        );
        let seed = 11;
        let x0 = problem.initial_point(seed);
        simulate_observed(
            &problem,
            &cfg,
            &crate::syncfabric::FabricConfig::new(2),
            1,
            1,
            seed,
            &mut |phase, t, states| {
                if phase == Phase::AfterStep && t == 1 {
                    for w in states {
                        let g = problem.stochastic_gradient(w.worker_id, &x0, 1, seed).unwrap();
                        let expect = g.scaled(-eta);
                        assert_eq!(w.e.as_ref().unwrap(), &expect);
                    }
                }
            },
        )
        .unwrap();
    }

    #[test]
    fn sweep_statistics_cover_every_seed() {
        let mut cfg = tiny_config();
        cfg.run.seeds = vec![1, 2, 3, 4, 5];
        let summary = sweep(&[("five-seeds".to_string(), cfg)]);
        let row = &summary.rows[0];
        assert_eq!(row.completed, 5);
        assert_eq!(row.diverged + row.failed, 0);
        assert!(row.std_final_loss.is_finite() && row.std_final_loss >= 0.0);
    }

    #[test]
    fn full_sgd_descends_monotonically_on_noiseless_quadratic() {
        // gradient descent on a convex quadratic with eta = 1/L
        let cfg = RunConfig {
            problem: ProblemConfig::Quadratic(QuadraticConfig {
                n: 1,
                d: 32,
                noise_scale: 0.0,
                seed: 5,
                ..QuadraticConfig::default()
            }),
            optimizer: OptimizerConfig::new(
                Variant::FullSgd,
                1.0 / 5.0,
                1,
                CompressorSpec::identity(),
                CompressorSpec::identity(),
            ),
            fabric: FabricSettings::default(),
            run: RunSettings { rounds: 100, seeds: vec![1], cadence: 5, ..RunSettings::default() },
        };
        let metrics = run(&cfg, false).unwrap();
        let losses: Vec<f64> = metrics[0].records.iter().map(|r| r.loss).collect();
        assert!(losses.windows(2).all(|w| w[1] <= w[0]), "losses: {losses:?}");
    }

    #[test]
    fn table_rows_expand_to_valid_configs() {
        let mut base = tiny_config();
        base.run.rounds = 4;
        base.run.seeds = vec![1];
        let configs = table_run_configs(&base);
        assert_eq!(configs.len(), 49);
        for (label, cfg) in &configs {
            cfg.validate().unwrap_or_else(|e| panic!("{label}: {e}"));
        }
    }
}
