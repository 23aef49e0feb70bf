//! Acceptance suite: one test per criterion, each printing a pass/fail line
//! with the measured values. Tolerances are pinned in code.

use cser::compressors::CompressorSpec;
use cser::harness::verify::{run_suite, VerifySuite};
use cser::harness::{
    self, FabricSettings, ProblemConfig, RunConfig, RunSettings, RunStatus,
};
use cser::numerics::{norm_sq, Vector};
use cser::optimizers::{
    compressor_config_table, error_bound_factor, BoundMethod, OptimizerConfig, Variant,
};
use cser::problems::{
    InitKind, Logistic, LogisticConfig, Mlp, MlpConfig, Problem, Quadratic, QuadraticConfig,
};
use cser::syncfabric::FabricConfig;

fn report(criterion: &str, passed: bool, detail: &str) {
    println!("criterion {criterion}: {} - {detail}", if passed { "PASS" } else { "FAIL" });
    assert!(passed, "criterion {criterion} failed: {detail}");
}

fn assert_suite(criterion: &str, suite: VerifySuite, filter: Option<&str>) {
    let full = run_suite(suite).expect("suite runs");
    let checks: Vec<_> = full
        .checks
        .iter()
        .filter(|c| filter.is_none_or(|f| c.name.contains(f)))
        .collect();
    assert!(!checks.is_empty(), "filter {filter:?} matched no checks");
    let failed: Vec<_> = checks.iter().filter(|c| !c.passed).collect();
    for c in &checks {
        println!(
            "  {} {}: measured = {:.3e}, bound = {:.3e}",
            if c.passed { "ok " } else { "BAD" },
            c.name,
            c.measured,
            c.bound
        );
    }
    report(
        criterion,
        failed.is_empty(),
        &format!("{}/{} checks passed", checks.len() - failed.len(), checks.len()),
    );
}

#[test]
fn acceptance_01_bound_factor_arithmetic() {
    let q = error_bound_factor(BoundMethod::QSparse, 0.5, 0.0, 8, false).unwrap();
    let c1 = error_bound_factor(BoundMethod::Cser, 0.5, 0.0, 8, false).unwrap();
    let c2 = error_bound_factor(BoundMethod::Cser, 1.0 / 3.0, 0.0, 4, false).unwrap();
    let c3 = error_bound_factor(BoundMethod::Cser, 7.0 / 8.0, 1.0 / 96.0, 12, false).unwrap();
    let exact =
        q == 832.0 && c1 == 576.0 && c2.round() == 400.0 && (c2 - 400.0).abs() < 1e-9;
    report(
        "1 (bound-factor arithmetic)",
        exact && c3 < 236.0,
        &format!("832 -> {q}, 576 -> {c1}, 400 -> {c2}, <236 -> {c3:.4}"),
    );
}

#[test]
fn acceptance_02_config_table_ratio_algebra() {
    let table = compressor_config_table();
    let mismatches: Vec<_> =
        table.iter().filter(|r| r.computed_overall() != r.overall).collect();
    report(
        "2 (configuration-table ratio algebra)",
        mismatches.is_empty(),
        &format!("{} rows, {} mismatches", table.len(), mismatches.len()),
    );
}

#[test]
fn acceptance_03_bifurcated_local_models() {
    assert_suite("3 (bifurcated-local-models identity)", VerifySuite::Lemma1, None);
}

#[test]
fn acceptance_04_reduction_lattice() {
    assert_suite("4 (reduction lattice)", VerifySuite::Reductions, Some("reductions/lattice"));
}

#[test]
fn acceptance_05_single_worker_collapse() {
    assert_suite(
        "5 (single-worker collapse)",
        VerifySuite::Reductions,
        Some("collapse/"),
    );
}

#[test]
fn acceptance_06_implementation_ii_equivalence() {
    assert_suite("6 (implementation-II equivalence)", VerifySuite::Impl2Equiv, None);
}

#[test]
fn acceptance_07_compressor_contracts() {
    assert_suite("7 (compressor contracts)", VerifySuite::Compressors, None);
}

#[test]
fn acceptance_08_error_reset_and_update_bounds() {
    assert_suite("8 (error-reset and bounded-update)", VerifySuite::ErrorReset, None);
}

// ---------------------------------------------------------------------------
// criterion 9: assumption checks

/// Central finite differences at step 1e-6 * (1 + |x_j|); the independent
/// oracle for every analytic gradient.
fn fd_full_gradient(p: &Problem, x: &Vector) -> Vector {
    let mut g = Vector::zeros(p.dim());
    for j in 0..p.dim() {
        let h = 1e-6 * (1.0 + x[j].abs());
        let mut xp = x.clone();
        xp[j] += h;
        let mut xm = x.clone();
        xm[j] -= h;
        g[j] = (p.loss(&xp).unwrap() - p.loss(&xm).unwrap()) / (2.0 * h);
    }
    g
}

fn problems_under_test() -> Vec<Problem> {
    vec![
        Problem::Quadratic(
            Quadratic::new(&QuadraticConfig {
                n: 3,
                d: 48,
                noise_scale: 0.3,
                seed: 5,
                ..QuadraticConfig::default()
            })
            .unwrap(),
        ),
        Problem::Logistic(
            Logistic::new(&LogisticConfig { n: 3, d: 20, seed: 5, ..LogisticConfig::default() })
                .unwrap(),
        ),
        Problem::Mlp(
            Mlp::new(&MlpConfig {
                n: 3,
                input_dim: 4,
                hidden: 8,
                samples_per_worker: 48,
                batch: 8,
                seed: 5,
                ..MlpConfig::default()
            })
            .unwrap(),
        ),
    ]
}

#[test]
fn acceptance_09_assumption_checks() {
    let mut detail = String::new();
    let mut all_ok = true;
    for p in problems_under_test() {
        // smoothness inequality on 1000 random pairs from the reference region
        let l = p.constants().l;
        let mut worst_gap: f64 = f64::NEG_INFINITY;
        for pair in 0..1000u64 {
            let x = p.reference_region_point(2 * pair + 1000);
            let y = p.reference_region_point(2 * pair + 1001);
            for i in 0..p.workers() {
                let lhs = p.worker_loss(i, &y).unwrap() - p.worker_loss(i, &x).unwrap();
                let g = p.worker_gradient(i, &x).unwrap();
                let diff = y.sub(&x);
                let rhs = g.dot(&diff) + 0.5 * l * norm_sq(&diff);
                worst_gap = worst_gap.max(lhs - rhs - 1e-9 * (1.0 + rhs.abs()));
            }
        }
        let smooth_ok = worst_gap <= 0.0;

        // analytic gradient vs central finite differences
        let mut worst_rel: f64 = 0.0;
        for probe in 0..3 {
            let x = p.reference_region_point(probe);
            let ga = p.full_gradient(&x).unwrap();
            let gf = fd_full_gradient(&p, &x);
            worst_rel =
                worst_rel.max(norm_sq(&ga.sub(&gf)).sqrt() / norm_sq(&gf).sqrt().max(1e-12));
        }
        let fd_ok = worst_rel <= 1e-5;
        all_ok &= smooth_ok && fd_ok;
        detail.push_str(&format!(
            "[{}: smoothness L = {l:.3} ({}), fd rel err = {worst_rel:.2e} ({})] ",
            p.kind_name(),
            if smooth_ok { "ok" } else { "violated" },
            if fd_ok { "ok" } else { "too large" },
        ));
    }
    report("9 (assumption checks)", all_ok, &detail);
}

// ---------------------------------------------------------------------------
// criterion 10: variance-reduction trend

fn trend_config(n: usize, seed: u64) -> RunConfig {
    RunConfig {
        problem: ProblemConfig::Quadratic(QuadraticConfig {
            n,
            d: 200,
            noise_scale: 0.5,
            seed: 71,
            init: InitKind::Minimizer,
            ..QuadraticConfig::default()
        }),
        optimizer: OptimizerConfig::new(
            Variant::Cser,
            0.01,
            2,
            CompressorSpec::grbs(2.0, 0, 11),
            CompressorSpec::grbs(4.0, 0, 12),
        ),
        fabric: FabricSettings::default(),
        run: RunSettings {
            rounds: 2000,
            seeds: vec![seed],
            cadence: 10,
            label: Some(format!("trend-n{n}")),
            ..RunSettings::default()
        },
    }
}

fn tail_average_grad_sq(cfg: &RunConfig) -> f64 {
    let metrics = harness::run(cfg, false).unwrap();
    let m = &metrics[0];
    assert_eq!(m.status, RunStatus::Completed);
    let cutoff = (cfg.run.rounds as f64 * 0.8) as u64;
    let tail: Vec<f64> =
        m.records.iter().filter(|r| r.round > cutoff).map(|r| r.grad_norm_sq).collect();
    tail.iter().sum::<f64>() / tail.len() as f64
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    xs[xs.len() / 2]
}

#[test]
fn acceptance_10_variance_reduction_trend() {
    let mut tails_n8 = Vec::new();
    let mut tails_n1 = Vec::new();
    for seed in 1..=10u64 {
        let mut c8 = trend_config(8, seed);
        c8.fill_auto_blocks();
        tails_n8.push(tail_average_grad_sq(&c8));
        let mut c1 = trend_config(1, seed);
        c1.fill_auto_blocks();
        tails_n1.push(tail_average_grad_sq(&c1));
    }
    let m8 = median(tails_n8);
    let m1 = median(tails_n1);
    report(
        "10 (variance-reduction trend)",
        m8 < m1,
        &format!("median tail grad_norm_sq: n=8 -> {m8:.4e}, n=1 -> {m1:.4e}"),
    );
}

// ---------------------------------------------------------------------------
// criterion 11: communication ledger vs ratio algebra

fn ledger_value_bits(problem: &Problem, opt: &OptimizerConfig, rounds: u64) -> u64 {
    let fabric = FabricConfig::new(problem.workers());
    let outcome = harness::simulate(problem, opt, &fabric, rounds, rounds, 3).unwrap();
    assert_eq!(outcome.status, RunStatus::Completed);
    outcome.ledger.totals().value_bits()
}

#[test]
fn acceptance_11_communication_ledger_ratios() {
    // dimensions chosen so block sizes divide evenly and the expected kept
    // fraction is exact; the tolerance still allows 10% for flooring effects
    let d = 4096;
    let blocks = 2048;
    let rounds = 512;
    let problem = Problem::Quadratic(
        Quadratic::new(&QuadraticConfig {
            n: 4,
            d,
            noise_scale: 0.3,
            seed: 9,
            init: InitKind::Minimizer,
            ..QuadraticConfig::default()
        })
        .unwrap(),
    );

    let full = OptimizerConfig::new(
        Variant::FullSgd,
        0.01,
        1,
        CompressorSpec::identity(),
        CompressorSpec::identity(),
    );
    let full_bits = ledger_value_bits(&problem, &full, rounds);

    let mut detail = String::new();
    let mut all_ok = true;
    // (overall, r2, r1, h) rows for overall ratios 2, 32 and 1024
    for (overall, r2, r1, h) in
        [(2.0, 4.0, 2.0, 2u64), (32.0, 64.0, 8.0, 8), (1024.0, 2048.0, 32.0, 64)]
    {
        let cfg = OptimizerConfig::new(
            Variant::Cser,
            0.01,
            h,
            CompressorSpec::grbs(r1, blocks, 11),
            CompressorSpec::grbs(r2, blocks, 12),
        );
        let bits = ledger_value_bits(&problem, &cfg, rounds);
        let measured = full_bits as f64 / bits as f64;
        let ok = (measured / overall - 1.0).abs() <= 0.10;
        all_ok &= ok;
        detail.push_str(&format!("[target {overall}: measured {measured:.4} ({})] ", if ok { "ok" } else { "off" }));
    }
    report("11 (communication-ledger ratio)", all_ok, &detail);
}

// ---------------------------------------------------------------------------
// criterion 12: determinism across repeats and thread counts

/// The CSV's elapsed_ns column is wall-clock time, the one intentionally
/// non-deterministic field in the schema; it is masked before comparison.
fn mask_elapsed(csv: &str) -> String {
    let mut out = String::new();
    for (i, line) in csv.lines().enumerate() {
        if i == 0 {
            out.push_str(line);
        } else {
            let cut = line.rfind(',').unwrap();
            out.push_str(&line[..cut]);
            out.push_str(",-");
        }
        out.push('\n');
    }
    out
}

#[test]
fn acceptance_12_determinism_across_threads() {
    let dir = tempfile::tempdir().unwrap();
    let base = RunConfig {
        problem: ProblemConfig::Quadratic(QuadraticConfig {
            n: 8,
            d: 512,
            noise_scale: 0.5,
            seed: 33,
            ..QuadraticConfig::default()
        }),
        optimizer: OptimizerConfig::new(
            Variant::Cser,
            0.02,
            8,
            CompressorSpec::grbs(8.0, 128, 11),
            CompressorSpec::grbs(64.0, 128, 12),
        ),
        fabric: FabricSettings::default(),
        run: RunSettings {
            rounds: 300,
            seeds: vec![7],
            cadence: 25,
            out: dir.path().to_path_buf(),
            label: Some("determinism".into()),
        },
    };

    let mut outputs = Vec::new();
    for threads in [1usize, 2, 8] {
        for rep in 0..2 {
            let mut cfg = base.clone();
            cfg.fabric.threads = threads;
            cfg.run.out = dir.path().join(format!("t{threads}-r{rep}"));
            harness::run(&cfg, true).unwrap();
            let csv =
                std::fs::read_to_string(cfg.run.out.join("determinism-seed7.csv")).unwrap();
            outputs.push((threads, rep, csv));
        }
    }
    let reference = mask_elapsed(&outputs[0].2);
    let mut all_equal = true;
    for (threads, rep, csv) in &outputs[1..] {
        if mask_elapsed(csv) != reference {
            all_equal = false;
            println!("  mismatch at threads={threads} rep={rep}");
        }
    }
    report(
        "12 (determinism across threads)",
        all_equal,
        "CSV byte-identical over threads {1,2,8} x 2 repetitions (elapsed_ns wall-clock column masked)",
    );
}
