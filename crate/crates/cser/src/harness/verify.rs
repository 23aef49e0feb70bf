//! Invariant verification suites.
//!
//! Each suite checks one family of provable or statistical properties of the
//! algorithms against explicit bounds and reports measured-vs-bound per
//! property. Statistical checks use fixed seeds and 3-standard-error bands,
//! so their outcomes are reproducible.

use crate::compressors::{compress, delta_estimate_stats, residual, CompressorSpec};
use crate::harness::runner::{simulate_observed, Phase};
use crate::numerics::{norm_sq, Vector};
use crate::optimizers::{
    compressor_config_table, error_bound_factor, BoundMethod, OptimizerConfig, Variant,
    WorkerState,
};
use crate::problems::{InitKind, Problem, Quadratic, QuadraticConfig};
use crate::rng::keyed_rng;
use crate::syncfabric::FabricConfig;
use crate::Result;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerifySuite {
    Lemma1,
    Compressors,
    Reductions,
    ErrorReset,
    Impl2Equiv,
    BoundFactors,
    All,
}

impl VerifySuite {
    pub fn name(&self) -> &'static str {
        match self {
            VerifySuite::Lemma1 => "lemma1",
            VerifySuite::Compressors => "compressors",
            VerifySuite::Reductions => "reductions",
            VerifySuite::ErrorReset => "error_reset",
            VerifySuite::Impl2Equiv => "impl2_equiv",
            VerifySuite::BoundFactors => "bound_factors",
            VerifySuite::All => "all",
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PropertyCheck {
    pub name: String,
    pub measured: f64,
    pub bound: f64,
    pub passed: bool,
    pub note: String,
}

impl PropertyCheck {
    fn le(name: impl Into<String>, measured: f64, bound: f64, note: impl Into<String>) -> Self {
        PropertyCheck {
            name: name.into(),
            measured,
            bound,
            passed: measured <= bound,
            note: note.into(),
        }
    }

    fn lt(name: impl Into<String>, measured: f64, bound: f64, note: impl Into<String>) -> Self {
        PropertyCheck {
            name: name.into(),
            measured,
            bound,
            passed: measured < bound,
            note: note.into(),
        }
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct VerifyReport {
    pub checks: Vec<PropertyCheck>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            out.push_str(&format!(
                "{} {}: measured = {:.6e}, bound = {:.6e}{}\n",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.measured,
                c.bound,
                if c.note.is_empty() { String::new() } else { format!(" ({})", c.note) },
            ));
        }
        out
    }
}

/// Runs one verification suite.
pub fn run_suite(suite: VerifySuite) -> Result<VerifyReport> {
    let checks = match suite {
        VerifySuite::BoundFactors => bound_factors()?,
        VerifySuite::Compressors => compressor_contracts()?,
        VerifySuite::Lemma1 => lemma1()?,
        VerifySuite::Reductions => reductions()?,
        VerifySuite::ErrorReset => error_reset_bounds()?,
        VerifySuite::Impl2Equiv => impl2_equivalence()?,
        VerifySuite::All => {
            let mut all = Vec::new();
            for s in [
                VerifySuite::BoundFactors,
                VerifySuite::Compressors,
                VerifySuite::Lemma1,
                VerifySuite::Reductions,
                VerifySuite::ErrorReset,
                VerifySuite::Impl2Equiv,
            ] {
                all.extend(run_suite(s)?.checks);
            }
            all
        }
    };
    Ok(VerifyReport { checks })
}

// ---------------------------------------------------------------------------
// shared builders

fn quad(n: usize, d: usize, noise: f64, seed: u64, init: InitKind) -> Result<Problem> {
    Ok(Problem::Quadratic(Quadratic::new(&QuadraticConfig {
        n,
        d,
        lambda_min: 0.5,
        lambda_max: 5.0,
        center_spread: 2.0,
        noise_scale: noise,
        seed,
        init,
    })?))
}

fn single_thread_fabric(n: usize) -> FabricConfig {
    FabricConfig::new(n)
}

/// Runs a config and records every worker's x after each round.
fn collect_trajectory(
    problem: &Problem,
    cfg: &OptimizerConfig,
    rounds: u64,
    seed: u64,
) -> Result<Vec<Vec<Vector>>> {
    let mut snaps = Vec::with_capacity(rounds as usize);
    let outcome = simulate_observed(
        problem,
        cfg,
        &single_thread_fabric(problem.workers()),
        rounds,
        rounds,
        seed,
        &mut |phase, _t, states: &[WorkerState]| {
            if phase == Phase::AfterStep {
                snaps.push(states.iter().map(|w| w.x.clone()).collect());
            }
        },
    )?;
    if outcome.status != crate::harness::RunStatus::Completed {
        return Err(crate::Error::Domain(format!(
            "verification run diverged: {:?}",
            outcome.status
        )));
    }
    Ok(snaps)
}

fn max_trajectory_diff(a: &[Vec<Vector>], b: &[Vec<Vector>]) -> f64 {
    assert_eq!(a.len(), b.len(), "trajectory lengths must match");
    let mut worst: f64 = 0.0;
    for (ra, rb) in a.iter().zip(b) {
        assert_eq!(ra.len(), rb.len());
        for (xa, xb) in ra.iter().zip(rb) {
            worst = worst.max(xa.max_abs_diff(xb));
        }
    }
    worst
}

fn grbs_pair(r1: f64, r2: f64, blocks: usize) -> (CompressorSpec, CompressorSpec) {
    (CompressorSpec::grbs(r1, blocks, 11), CompressorSpec::grbs(r2, blocks, 12))
}

// ---------------------------------------------------------------------------
// bound factors and ratio algebra

fn bound_factors() -> Result<Vec<PropertyCheck>> {
    let mut checks = Vec::new();

    let q = error_bound_factor(BoundMethod::QSparse, 0.5, 0.0, 8, false)?;
    checks.push(PropertyCheck::le(
        "bound_factor/error_feedback d1=1/2 H=8 -> 832",
        (q - 832.0).abs(),
        0.0,
        format!("factor = {q}"),
    ));
    let c = error_bound_factor(BoundMethod::Cser, 0.5, 0.0, 8, false)?;
    checks.push(PropertyCheck::le(
        "bound_factor/error_reset d1=1/2 d2=0 H=8 -> 576",
        (c - 576.0).abs(),
        0.0,
        format!("factor = {c}"),
    ));
    let c = error_bound_factor(BoundMethod::Cser, 1.0 / 3.0, 0.0, 4, false)?;
    checks.push(PropertyCheck::le(
        "bound_factor/error_reset d1=1/3 d2=0 H=4 -> 400",
        (c - 400.0).abs(),
        1e-9,
        format!("factor = {c}"),
    ));
    let c = error_bound_factor(BoundMethod::Cser, 7.0 / 8.0, 1.0 / 96.0, 12, false)?;
    checks.push(PropertyCheck::lt(
        "bound_factor/error_reset d1=7/8 d2=1/96 H=12 < 236",
        c,
        236.0,
        "strict inequality",
    ));

    let table = compressor_config_table();
    let worst = table
        .iter()
        .map(|r| (r.computed_overall() - r.overall).abs())
        .fold(0.0f64, f64::max);
    checks.push(PropertyCheck::le(
        format!("ratio_algebra/config_table {} rows exact", table.len()),
        worst,
        0.0,
        "computed overall ratio vs table column",
    ));
    Ok(checks)
}

// ---------------------------------------------------------------------------
// compressor contracts

fn compressor_contracts() -> Result<Vec<PropertyCheck>> {
    let mut checks = Vec::new();

    // top-k keeps the largest squares, so the dropped mass never exceeds the
    // (1 - k/d) budget; checked on 1000 random vectors
    let d = 1000;
    let mut worst_ratio: f64 = 0.0;
    for trial in 0..1000u64 {
        let mut rng = keyed_rng(&[0xc0, trial]);
        let v = Vector::from_vec(
            (0..d).map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)).collect(),
        );
        let ratio = 1.0 + (trial % 19) as f64;
        let spec = CompressorSpec::top_k(ratio);
        let msg = compress(&spec, &v, trial + 1)?;
        let dropped = norm_sq(&residual(&v, &msg)?);
        let k = spec.kept_coords(d);
        let budget = (1.0 - k as f64 / d as f64) * norm_sq(&v);
        if budget > 0.0 {
            worst_ratio = worst_ratio.max(dropped / budget);
        } else {
            worst_ratio = worst_ratio.max(if dropped > 0.0 { f64::INFINITY } else { 0.0 });
        }
    }
    checks.push(PropertyCheck::le(
        "compressors/top_k contract |C(v)-v|^2 <= (1-k/d)|v|^2 (1000 vectors)",
        worst_ratio,
        1.0,
        "exact contract, measured as dropped/budget",
    ));

    // blockwise sparsifier drops (1 - 1/R) of the mass in expectation
    for r in [2.0, 4.0, 32.0] {
        let spec = CompressorSpec::grbs(r, 64, 21);
        let (mean, se) = delta_estimate_stats(&spec, 10_000, 2048, 77)?;
        let expected = 1.0 - 1.0 / r;
        checks.push(PropertyCheck::le(
            format!("compressors/blockwise expectation R={r} within 3 s.e."),
            (mean - expected).abs(),
            3.0 * se,
            format!("mean = {mean:.6}, expected = {expected:.6}, se = {se:.2e}"),
        ));
    }

    // global synchrony: same (seed, round) key selects the same support on
    // every worker, regardless of the vector being compressed
    let mut mismatches = 0usize;
    for round in 1..=100u64 {
        for spec in [CompressorSpec::grbs(4.0, 32, 5), CompressorSpec::random_k(4.0, 5)] {
            let mut rng = keyed_rng(&[0xab, round]);
            let v1 = Vector::from_vec((0..256).map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)).collect());
            let v2 = Vector::from_vec((0..256).map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)).collect());
            let a = compress(&spec, &v1, round)?;
            let b = compress(&spec, &v2, round)?;
            if a.support != b.support {
                mismatches += 1;
            }
        }
    }
    checks.push(PropertyCheck::le(
        "compressors/global synchrony (identical supports per round)",
        mismatches as f64,
        0.0,
        "bitwise support equality over 100 rounds",
    ));

    // dense part plus residual reconstructs the input exactly
    let mut worst_rebuild: f64 = 0.0;
    for trial in 0..200u64 {
        let mut rng = keyed_rng(&[0xcd, trial]);
        let v = Vector::from_vec((0..128).map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)).collect());
        for spec in [
            CompressorSpec::identity(),
            CompressorSpec::zero(),
            CompressorSpec::top_k(3.0),
            CompressorSpec::random_k(5.0, 3),
            CompressorSpec::grbs(4.0, 16, 3),
        ] {
            let msg = compress(&spec, &v, trial + 1)?;
            let r = residual(&v, &msg)?;
            worst_rebuild = worst_rebuild.max(msg.dense.add(&r).max_abs_diff(&v));
        }
    }
    checks.push(PropertyCheck::le(
        "compressors/reconstruction max|v - (dense + residual)|",
        worst_rebuild,
        0.0,
        "exact over 200 vectors x 5 kinds",
    ));

    Ok(checks)
}

// ---------------------------------------------------------------------------
// lemma 1: bifurcated local models

fn lemma1_config(variant: Variant, top_k: bool) -> OptimizerConfig {
    let blocks = 512;
    let (c1, c2) = if top_k {
        (CompressorSpec::top_k(8.0), CompressorSpec::top_k(64.0))
    } else {
        (CompressorSpec::grbs(8.0, blocks, 11), CompressorSpec::grbs(64.0, blocks, 12))
    };
    let (h, c2, eta, beta) = match variant {
        Variant::Csea => (1, CompressorSpec::zero(), 0.02, 0.0),
        Variant::CserPl => (8, CompressorSpec::zero(), 0.02, 0.0),
        Variant::MCser => (8, c2, 0.005, 0.9),
        _ => (8, c2, 0.02, 0.0),
    };
    OptimizerConfig::new(variant, eta, h, c1, c2).with_beta(beta)
}

fn lemma1() -> Result<Vec<PropertyCheck>> {
    let problem = quad(8, 1000, 0.5, 42, InitKind::Zeros)?;
    let mut checks = Vec::new();
    for top_k in [false, true] {
        for variant in [Variant::Cser, Variant::MCser, Variant::Csea, Variant::CserPl] {
            let cfg = lemma1_config(variant, top_k);
            let mut worst: f64 = 0.0;
            simulate_observed(
                &problem,
                &cfg,
                &single_thread_fabric(8),
                1000,
                1000,
                7,
                &mut |phase, _t, states: &[WorkerState]| {
                    if phase != Phase::AfterStep {
                        return;
                    }
                    // max_{i,j} |(x_i - e_i) - (x_j - e_j)|_inf via per-coordinate spread
                    let d = states[0].x.len();
                    let mut spread: f64 = 0.0;
                    for j in 0..d {
                        let mut lo = f64::INFINITY;
                        let mut hi = f64::NEG_INFINITY;
                        for w in states {
                            let v = w.x[j] - w.e.as_ref().expect("error-reset state")[j];
                            lo = lo.min(v);
                            hi = hi.max(v);
                        }
                        spread = spread.max(hi - lo);
                    }
                    let mut xbar = states[0].x.clone();
                    for w in &states[1..] {
                        xbar.add_assign(&w.x);
                    }
                    xbar.scale_assign(1.0 / states.len() as f64);
                    worst = worst.max(spread / (1.0 + xbar.linf_norm()));
                },
            )?;
            checks.push(PropertyCheck::le(
                format!(
                    "lemma1/{} {} n=8 d=1000 T=1000",
                    cfg.variant.name(),
                    if top_k { "top_k" } else { "blockwise" }
                ),
                worst,
                1e-9,
                "max spread of x_i - e_i relative to 1 + |mean model|_inf",
            ));
        }
    }
    Ok(checks)
}

// ---------------------------------------------------------------------------
// reduction lattice and single-worker collapse

fn reductions() -> Result<Vec<PropertyCheck>> {
    let mut checks = Vec::new();
    let n = 4;
    let d = 256;
    let problem = quad(n, d, 0.5, 13, InitKind::Zeros)?;
    let rounds = 200;
    let seed = 3;
    let g4 = CompressorSpec::grbs(4.0, 64, 11);
    let zero = CompressorSpec::zero();
    let ident = CompressorSpec::identity();

    let pairs: Vec<(&str, OptimizerConfig, OptimizerConfig)> = vec![
        (
            "cser(c2=zero) == cser_pl",
            OptimizerConfig::new(Variant::Cser, 0.02, 4, g4, zero),
            OptimizerConfig::new(Variant::CserPl, 0.02, 4, g4, zero),
        ),
        (
            "cser_pl(h=1) == csea",
            OptimizerConfig::new(Variant::CserPl, 0.02, 1, g4, zero),
            OptimizerConfig::new(Variant::Csea, 0.02, 1, g4, zero),
        ),
        (
            "cser_pl(c1=identity) == local_sgd",
            OptimizerConfig::new(Variant::CserPl, 0.02, 4, ident, zero),
            OptimizerConfig::new(Variant::LocalSgd, 0.02, 4, ident, zero),
        ),
        (
            "qsparse(h=1) == ef_sgd",
            OptimizerConfig::new(Variant::QSparseLocal, 0.02, 1, g4, zero),
            OptimizerConfig::new(Variant::EfSgd, 0.02, 1, g4, zero),
        ),
        (
            "qsparse(c1=identity) == local_sgd",
            OptimizerConfig::new(Variant::QSparseLocal, 0.02, 4, ident, zero),
            OptimizerConfig::new(Variant::LocalSgd, 0.02, 4, ident, zero),
        ),
        (
            "cser(identity, identity, h=1) == full_sgd",
            OptimizerConfig::new(Variant::Cser, 0.02, 1, ident, ident),
            OptimizerConfig::new(Variant::FullSgd, 0.02, 1, ident, ident),
        ),
    ];
    for (name, a, b) in pairs {
        let ta = collect_trajectory(&problem, &a, rounds, seed)?;
        let tb = collect_trajectory(&problem, &b, rounds, seed)?;
        checks.push(PropertyCheck::le(
            format!("reductions/lattice {name} (200 rounds)"),
            max_trajectory_diff(&ta, &tb),
            1e-12,
            "max-norm trajectory difference on shared seeds",
        ));
    }

    checks.extend(synchronized_model_property()?);
    checks.extend(identity_reset_zeroes_residual()?);
    checks.extend(single_worker_collapse()?);
    Ok(checks)
}

/// Error-feedback methods keep every local model bitwise equal after each
/// synchronization round.
fn synchronized_model_property() -> Result<Vec<PropertyCheck>> {
    let mut checks = Vec::new();
    let problem = quad(4, 128, 0.5, 29, InitKind::Zeros)?;
    let g4 = CompressorSpec::grbs(4.0, 32, 11);
    for (name, cfg) in [
        ("qsparse h=4", OptimizerConfig::new(Variant::QSparseLocal, 0.02, 4, g4, CompressorSpec::zero())),
        ("ef_sgd", OptimizerConfig::new(Variant::EfSgd, 0.02, 1, g4, CompressorSpec::zero())),
    ] {
        let h = cfg.h;
        let mut worst: f64 = 0.0;
        simulate_observed(
            &problem,
            &cfg,
            &single_thread_fabric(4),
            200,
            200,
            3,
            &mut |phase, t, states: &[WorkerState]| {
                if phase == Phase::AfterStep && t % h == 0 {
                    for w in &states[1..] {
                        worst = worst.max(w.x.max_abs_diff(&states[0].x));
                    }
                }
            },
        )?;
        checks.push(PropertyCheck::le(
            format!("sync_model/{name} all x_i bitwise equal after sync rounds"),
            worst,
            0.0,
            "max pairwise model difference at sync rounds",
        ));
    }
    Ok(checks)
}

/// With an identity reset compressor, every residual is exactly zero
/// immediately after the reset round.
fn identity_reset_zeroes_residual() -> Result<Vec<PropertyCheck>> {
    let problem = quad(4, 128, 0.5, 37, InitKind::Zeros)?;
    let cfg = OptimizerConfig::new(
        Variant::Cser,
        0.02,
        4,
        CompressorSpec::identity(),
        CompressorSpec::grbs(8.0, 32, 12),
    );
    let mut worst: f64 = 0.0;
    simulate_observed(
        &problem,
        &cfg,
        &single_thread_fabric(4),
        100,
        100,
        5,
        &mut |phase, t, states: &[WorkerState]| {
            if phase == Phase::AfterStep && t % 4 == 0 {
                for w in states {
                    worst = worst.max(norm_sq(w.e.as_ref().expect("cser carries e")));
                }
            }
        },
    )?;
    Ok(vec![PropertyCheck::le(
        "reset/identity c1 leaves e = 0 exactly after reset rounds",
        worst,
        0.0,
        "max |e|^2 right after reset",
    )])
}

/// Reference single-worker SGD / momentum-SGD oracle, independent of the
/// optimizer and fabric code paths.
fn reference_sgd(
    problem: &Problem,
    eta: f64,
    beta: f64,
    rounds: u64,
    seed: u64,
) -> Vec<Vector> {
    let d = problem.dim();
    let mut x = problem.initial_point(seed);
    let mut m = Vector::zeros(d);
    let mut out = Vec::with_capacity(rounds as usize);
    for t in 1..=rounds {
        let g = problem.stochastic_gradient(0, &x, t, seed).expect("dims");
        if beta > 0.0 {
            for j in 0..d {
                m[j] = beta * m[j] + g[j];
            }
            for j in 0..d {
                x[j] -= eta * (beta * m[j] + g[j]);
            }
        } else {
            for j in 0..d {
                x[j] -= eta * g[j];
            }
        }
        out.push(x.clone());
    }
    out
}

fn single_worker_collapse() -> Result<Vec<PropertyCheck>> {
    let mut checks = Vec::new();
    let d = 256;
    let problem = quad(1, d, 0.5, 31, InitKind::Zeros)?;
    let rounds = 500;
    let seed = 9;

    // compressor pairs exercise both deterministic and randomized kinds
    let pairs = [
        (CompressorSpec::grbs(4.0, 64, 1), CompressorSpec::grbs(8.0, 64, 2)),
        (CompressorSpec::top_k(8.0), CompressorSpec::top_k(16.0)),
    ];
    for (idx, (c1, c2)) in pairs.iter().enumerate() {
        let cser = OptimizerConfig::new(Variant::Cser, 0.02, 4, *c1, *c2);
        let traj = collect_trajectory(&problem, &cser, rounds, seed)?;
        let reference = reference_sgd(&problem, 0.02, 0.0, rounds, seed);
        let worst = traj
            .iter()
            .zip(&reference)
            .map(|(snap, r)| snap[0].max_abs_diff(r))
            .fold(0.0f64, f64::max);
        checks.push(PropertyCheck::le(
            format!("collapse/single-worker cser == sgd (pair {idx})"),
            worst,
            1e-12,
            "per-round max-norm vs independent reference loop",
        ));

        let mcser = OptimizerConfig::new(Variant::MCser, 0.005, 4, *c1, *c2).with_beta(0.9);
        let traj = collect_trajectory(&problem, &mcser, rounds, seed)?;
        let reference = reference_sgd(&problem, 0.005, 0.9, rounds, seed);
        let worst = traj
            .iter()
            .zip(&reference)
            .map(|(snap, r)| snap[0].max_abs_diff(r))
            .fold(0.0f64, f64::max);
        checks.push(PropertyCheck::le(
            format!("collapse/single-worker m_cser == momentum sgd (pair {idx})"),
            worst,
            1e-12,
            "per-round max-norm vs independent reference loop",
        ));
    }
    Ok(checks)
}

// ---------------------------------------------------------------------------
// error-reset and bounded-update statistics

struct ResetStats {
    reset_means: Vec<f64>,
    v2_max_round_mean: f64,
    update_sq: Vec<f64>,
}

fn observe_reset_run(
    problem: &Problem,
    cfg: &OptimizerConfig,
    rounds: u64,
    seed: u64,
) -> Result<ResetStats> {
    let n = problem.workers();
    let mut stats =
        ResetStats { reset_means: Vec::new(), v2_max_round_mean: 0.0, update_sq: Vec::new() };
    let h = cfg.h;
    let eta = cfg.eta;
    let beta = cfg.beta;
    let momentum = cfg.variant.needs_momentum(beta);
    simulate_observed(
        problem,
        cfg,
        &single_thread_fabric(n),
        rounds,
        rounds,
        seed,
        &mut |phase, t, states: &[WorkerState]| match phase {
            Phase::BeforeStep => {
                // recompute this round's gradients through the pure oracle
                let mut g_mean = 0.0;
                for w in states {
                    let g = problem
                        .stochastic_gradient(w.worker_id, &w.x, t, seed)
                        .expect("dims");
                    g_mean += norm_sq(&g) / n as f64;
                    if momentum {
                        // the update the step is about to apply: p = eta (beta m_t + g)
                        let m_prev = w.m.as_ref().expect("momentum state");
                        let mut p_sq = 0.0;
                        for j in 0..g.len() {
                            let m_next = beta * m_prev[j] + g[j];
                            let p = eta * (beta * m_next + g[j]);
                            p_sq += p * p;
                        }
                        stats.update_sq.push(p_sq);
                    }
                }
                stats.v2_max_round_mean = stats.v2_max_round_mean.max(g_mean);
            }
            Phase::AfterStep => {
                if t % h == 0 {
                    let mean_e = states
                        .iter()
                        .map(|w| norm_sq(w.e.as_ref().expect("error-reset state")))
                        .sum::<f64>()
                        / n as f64;
                    stats.reset_means.push(mean_e);
                }
            }
        },
    )?;
    Ok(stats)
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn error_reset_bounds() -> Result<Vec<PropertyCheck>> {
    let mut checks = Vec::new();
    let n = 4;
    let d = 256;
    // stationary regime: start at the minimizer so the gradient scale is
    // dominated by the injected noise throughout the run
    let problem = quad(n, d, 0.5, 51, InitKind::Minimizer)?;
    let eta = 0.02;

    // (delta1, delta2, H) = (1/2, 0, 8) and (1/4, 1/8, 4)
    let cases = [
        ("d1=1/2 d2=0 h=8", CompressorSpec::grbs(2.0, 64, 5), CompressorSpec::zero(), 8u64, 1600u64),
        ("d1=1/4 d2=1/8 h=4", CompressorSpec::grbs(4.0, 64, 5), CompressorSpec::grbs(8.0, 64, 6), 4u64, 800u64),
    ];
    for (name, c1, c2, h, rounds) in cases {
        let cfg = OptimizerConfig::new(Variant::Cser, eta, h, c1, c2);
        let stats = observe_reset_run(&problem, &cfg, rounds, 17)?;
        let delta1 = c1.delta_nominal(d);
        let delta2 = c2.delta_nominal(d);
        let v2 = stats.v2_max_round_mean;
        let bound = (1.0 - delta2) * (1.0 - delta1) * eta * eta * (h * h) as f64 * v2
            / ((1.0 - (1.0 - delta1).sqrt()) * (1.0 - (1.0 - delta1).sqrt()));
        let (mean, se) = mean_and_se(&stats.reset_means);
        checks.push(PropertyCheck::le(
            format!("error_reset/residual bound {name} ({} resets)", stats.reset_means.len()),
            mean,
            bound + 3.0 * se,
            format!("E|e|^2 at reset rounds vs (1-d2)(1-d1) eta^2 H^2 V2 / (1-sqrt(1-d1))^2, V2 = {v2:.3}"),
        ));
    }

    // bounded update: E|p|^2 <= eta^2 V2 / (1-beta)^2 at beta = 0.9
    let beta = 0.9;
    let eta_m = 0.005;
    let cfg = OptimizerConfig::new(
        Variant::MCser,
        eta_m,
        4,
        CompressorSpec::grbs(2.0, 64, 5),
        CompressorSpec::grbs(8.0, 64, 6),
    )
    .with_beta(beta);
    let stats = observe_reset_run(&problem, &cfg, 250, 19)?;
    let v2 = stats.v2_max_round_mean;
    let bound = eta_m * eta_m * v2 / ((1.0 - beta) * (1.0 - beta));
    let (mean, se) = mean_and_se(&stats.update_sq);
    checks.push(PropertyCheck::le(
        format!("error_reset/bounded update beta=0.9 ({} samples)", stats.update_sq.len()),
        mean,
        bound + 3.0 * se,
        format!("E|p|^2 vs eta^2 V2 / (1-beta)^2, V2 = {v2:.3}"),
    ));
    Ok(checks)
}

// ---------------------------------------------------------------------------
// implementation II equivalence

fn impl2_equivalence() -> Result<Vec<PropertyCheck>> {
    let mut checks = Vec::new();
    let n = 4;
    let d = 256;
    let problem = quad(n, d, 0.5, 23, InitKind::Zeros)?;
    let rounds = 200;
    let seed = 5;
    let (c1, c2) = grbs_pair(4.0, 8.0, 64);
    let zero = CompressorSpec::zero();

    let cases: Vec<(&str, OptimizerConfig, OptimizerConfig)> = vec![
        (
            "cser_impl1 == cser_impl2 (beta=0)",
            OptimizerConfig::new(Variant::Cser, 0.02, 4, c1, c2),
            OptimizerConfig::new(Variant::CserImpl2, 0.02, 4, c1, c2),
        ),
        (
            "m_cser_impl1 == cser_impl2 (beta=0.9)",
            OptimizerConfig::new(Variant::MCser, 0.005, 4, c1, c2).with_beta(0.9),
            OptimizerConfig::new(Variant::CserImpl2, 0.005, 4, c1, c2).with_beta(0.9),
        ),
        (
            "cser_pl_impl1 == cser_pl_impl2",
            OptimizerConfig::new(Variant::CserPl, 0.02, 4, c1, zero),
            OptimizerConfig::new(Variant::CserPlImpl2, 0.02, 4, c1, zero),
        ),
        (
            "csea_impl1 == csea_impl2",
            OptimizerConfig::new(Variant::Csea, 0.02, 1, c1, zero),
            OptimizerConfig::new(Variant::CseaImpl2, 0.02, 1, c1, zero),
        ),
    ];
    for (name, a, b) in cases {
        let ta = collect_trajectory(&problem, &a, rounds, seed)?;
        let tb = collect_trajectory(&problem, &b, rounds, seed)?;
        checks.push(PropertyCheck::le(
            format!("impl2/{name} (200 rounds)"),
            max_trajectory_diff(&ta, &tb),
            1e-9,
            "max-norm trajectory difference on shared seeds",
        ));
    }

    // structural: implementation II worker state holds no residual vector
    let cfg = OptimizerConfig::new(Variant::CserImpl2, 0.02, 4, c1, c2);
    let outcome = crate::harness::simulate(
        &problem,
        &cfg,
        &single_thread_fabric(n),
        8,
        8,
        seed,
    )?;
    let residuals = outcome.final_states.iter().filter(|w| w.e.is_some()).count();
    checks.push(PropertyCheck::le(
        "impl2/no residual vector in worker state",
        residuals as f64,
        0.0,
        "states carrying e after an implementation-II run",
    ));
    Ok(checks)
}
