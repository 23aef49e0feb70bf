//! Simulation driver: runs n logical workers over the fabric for T rounds,
//! collecting metrics at a fixed cadence.

use crate::numerics::{norm_sq, partition};
use crate::optimizers::{
    init_states, resolve_step_size, step_round, OptimizerConfig, StepShared, StepSizePolicy,
    WorkerState,
};
use crate::problems::Problem;
use crate::syncfabric::{AbortInfo, AbortReason, CommLedger, Fabric, FabricConfig};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::sync::{Mutex, OnceLock};
use std::time::Instant;

/// One reported metrics row. Bits are cumulative; `elapsed_ns` is wall time
/// since run start and the only non-deterministic column.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub round: u64,
    pub loss: f64,
    pub grad_norm_sq: f64,
    pub uplink_bits: u64,
    pub downlink_bits: u64,
    pub elapsed_ns: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum RunStatus {
    Completed,
    Diverged { round: u64 },
}

/// Everything a finished (or aborted) simulation produced.
#[derive(Clone, Debug)]
pub struct SimOutcome {
    pub records: Vec<RunRecord>,
    pub status: RunStatus,
    pub ledger: CommLedger,
    pub final_states: Vec<WorkerState>,
}

/// Observer hook points around each round (single-threaded runs only).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    BeforeStep,
    AfterStep,
}

/// Per-round observer callback.
pub type Observer<'a> = &'a mut dyn FnMut(Phase, u64, &[WorkerState]);

struct RunShared {
    metrics: Mutex<Vec<RunRecord>>,
    initial_loss: OnceLock<f64>,
    start: Instant,
}

/// Runs one seeded simulation. Results are bitwise independent of
/// `fabric.threads`.
pub fn simulate(
    problem: &Problem,
    cfg: &OptimizerConfig,
    fabric_cfg: &FabricConfig,
    rounds: u64,
    cadence: u64,
    seed: u64,
) -> Result<SimOutcome> {
    run_simulation(problem, cfg, fabric_cfg, rounds, cadence, seed, None)
}

/// Like [`simulate`] but with a per-round observer over all worker states;
/// requires a single-party fabric.
pub fn simulate_observed(
    problem: &Problem,
    cfg: &OptimizerConfig,
    fabric_cfg: &FabricConfig,
    rounds: u64,
    cadence: u64,
    seed: u64,
    observer: Observer<'_>,
) -> Result<SimOutcome> {
    run_simulation(problem, cfg, fabric_cfg, rounds, cadence, seed, Some(observer))
}

fn run_simulation(
    problem: &Problem,
    cfg: &OptimizerConfig,
    fabric_cfg: &FabricConfig,
    rounds: u64,
    cadence: u64,
    seed: u64,
    observer: Option<Observer<'_>>,
) -> Result<SimOutcome> {
    cfg.validate(problem.dim())?;
    let mut violations = fabric_cfg.violations();
    if fabric_cfg.n != problem.workers() {
        violations.push(format!(
            "fabric: n = {} must match the problem's worker count {}",
            fabric_cfg.n,
            problem.workers()
        ));
    }
    if rounds == 0 {
        violations.push("run: rounds must be >= 1".into());
    }
    if cadence == 0 {
        violations.push("run: cadence must be >= 1".into());
    }
    if !violations.is_empty() {
        return Err(Error::Config(violations));
    }

    let fabric = Fabric::new(fabric_cfg);
    let n = problem.workers();
    let x0 = problem.initial_point(seed);
    let policy = resolve_step_size(cfg, problem, rounds)?;
    let shared = RunShared {
        metrics: Mutex::new(Vec::new()),
        initial_loss: OnceLock::new(),
        start: Instant::now(),
    };

    let mut states = init_states(cfg, n, &x0);
    if fabric.parties() == 1 {
        let mut step_shared = StepShared::for_run(cfg, &x0);
        drive_chunk(
            &mut states,
            &mut step_shared,
            &fabric,
            problem,
            cfg,
            &policy,
            rounds,
            cadence,
            seed,
            &shared,
            observer,
        );
    } else {
        debug_assert!(observer.is_none(), "observers require a single-party fabric");
        let parts = partition(n, fabric.parties())?;
        let mut chunks: Vec<Vec<WorkerState>> = Vec::with_capacity(fabric.parties());
        let mut rest = states;
        for p in (0..parts.num_blocks()).rev() {
            chunks.push(rest.split_off(parts.range(p).start));
        }
        chunks.reverse();
        let collected: Vec<Vec<WorkerState>> = std::thread::scope(|s| {
            let handles: Vec<_> = chunks
                .into_iter()
                .map(|mut chunk| {
                    let fabric = &fabric;
                    let shared = &shared;
                    let policy = &policy;
                    let x0 = &x0;
                    s.spawn(move || {
                        let mut step_shared = StepShared::for_run(cfg, x0);
                        drive_chunk(
                            &mut chunk,
                            &mut step_shared,
                            fabric,
                            problem,
                            cfg,
                            policy,
                            rounds,
                            cadence,
                            seed,
                            shared,
                            None,
                        );
                        chunk
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("worker thread panicked")).collect()
        });
        states = collected.into_iter().flatten().collect();
    }

    let status = match fabric.abort_info() {
        None => RunStatus::Completed,
        Some(AbortInfo { reason: AbortReason::Protocol(msg), .. }) => {
            return Err(Error::Protocol(msg));
        }
        Some(AbortInfo { round, .. }) => RunStatus::Diverged { round },
    };
    Ok(SimOutcome {
        records: shared.metrics.into_inner().unwrap(),
        status,
        ledger: fabric.ledger_snapshot(),
        final_states: states,
    })
}

#[allow(clippy::too_many_arguments)]
fn drive_chunk(
    chunk: &mut [WorkerState],
    step_shared: &mut StepShared,
    fabric: &Fabric,
    problem: &Problem,
    cfg: &OptimizerConfig,
    policy: &StepSizePolicy,
    rounds: u64,
    cadence: u64,
    seed: u64,
    shared: &RunShared,
    mut observer: Option<Observer<'_>>,
) {
    if checkpoint(chunk, fabric, problem, 0, shared).is_err() {
        return;
    }
    for t in 1..=rounds {
        if let Some(obs) = observer.as_deref_mut() {
            obs(Phase::BeforeStep, t, chunk);
        }
        let eta = policy.at(t);
        if step_round(chunk, step_shared, fabric, problem, cfg, eta, t, seed).is_err() {
            return;
        }
        if let Some(obs) = observer.as_deref_mut() {
            obs(Phase::AfterStep, t, chunk);
        }
        if fabric.abort_info().is_some() {
            return;
        }
        if (t.is_multiple_of(cadence) || t == rounds)
            && checkpoint(chunk, fabric, problem, t, shared).is_err()
        {
            return;
        }
    }
}

/// Snapshot all models, have the rendezvous leader compute the mean-model
/// metrics, and propagate a divergence verdict to every party.
fn checkpoint(
    chunk: &[WorkerState],
    fabric: &Fabric,
    problem: &Problem,
    round: u64,
    shared: &RunShared,
) -> std::result::Result<(), AbortInfo> {
    let items = chunk.iter().map(|w| (w.worker_id, w.x.clone())).collect();
    let (all_x, leader) = fabric.share_vectors(round, items)?;
    if leader {
        let mut xbar = all_x[0].clone();
        for v in &all_x[1..] {
            xbar.add_assign(v);
        }
        xbar.scale_assign(1.0 / all_x.len() as f64);
        let loss = problem.loss(&xbar).expect("validated dimensions");
        let grad_norm_sq = norm_sq(&problem.full_gradient(&xbar).expect("validated dimensions"));
        let totals = fabric.ledger_totals();
        shared.metrics.lock().unwrap().push(RunRecord {
            round,
            loss,
            grad_norm_sq,
            uplink_bits: totals.uplink_bits(),
            downlink_bits: totals.downlink_bits(),
            elapsed_ns: shared.start.elapsed().as_nanos() as u64,
        });
        let initial = *shared.initial_loss.get_or_init(|| loss);
        // the explosion reference is floored at 1 so a run started at (or
        // converged to) near-zero loss is not misread as divergent
        let exploded = loss > 1e6 * initial.max(1.0);
        if !loss.is_finite() || exploded {
            fabric.abort(AbortInfo {
                round,
                reason: AbortReason::LossExplosion { loss, initial_loss: initial },
            });
        }
    }
    fabric.barrier(round)?;
    Ok(())
}
