//! Per-round transitions, phrased over a chunk of workers owned by one
//! fabric party. Every party executes the same control flow for a round, so
//! exchanges stay lockstep no matter how workers are chunked over threads.

use super::{OptimizerConfig, Variant, WorkerState};
use crate::compressors::{compress, residual, CompressedMessage, CompressorSpec};
use crate::numerics::Vector;
use crate::problems::Problem;
use crate::syncfabric::{reduce_mean, AbortInfo, AbortReason, Fabric, ReductionOrder};
use crate::Result;
use std::sync::Arc;

/// Output of partial synchronization: per-worker combined vectors
/// v'_i = mean_j C(v_j) + r_i and the residuals r_i = v_i - C(v_i).
#[derive(Clone, Debug)]
pub struct PsyncOutput {
    pub synced: Vec<Vector>,
    pub residuals: Vec<Vector>,
    pub reduced: CompressedMessage,
}

/// Standalone partial synchronization over all workers' vectors at once.
pub fn psync(
    inputs: &[Vector],
    spec: &CompressorSpec,
    round: u64,
    order: ReductionOrder,
) -> Result<PsyncOutput> {
    let mut msgs = Vec::with_capacity(inputs.len());
    let mut residuals = Vec::with_capacity(inputs.len());
    for v in inputs {
        let msg = compress(spec, v, round)?;
        residuals.push(residual(v, &msg)?);
        msgs.push(msg);
    }
    let reduced = reduce_mean(&msgs, order)?;
    let synced = residuals.iter().map(|r| reduced.dense.add(r)).collect();
    Ok(PsyncOutput { synced, residuals, reduced })
}

/// Per-party state that is not owned by any single worker. The QSparse base
/// model is replicated on every party and advances identically everywhere.
#[derive(Clone, Debug, Default)]
pub struct StepShared {
    pub x_hat: Option<Vector>,
}

impl StepShared {
    pub fn for_run(cfg: &OptimizerConfig, x0: &Vector) -> StepShared {
        StepShared {
            x_hat: matches!(cfg.variant, Variant::QSparseLocal).then(|| x0.clone()),
        }
    }
}

struct ChunkPsync {
    mean: Arc<CompressedMessage>,
    /// Residuals parallel to the chunk's worker order.
    residuals: Vec<Vector>,
}

/// Compress one vector per owned worker, exchange, keep local residuals.
fn psync_chunk(
    fabric: &Fabric,
    spec: &CompressorSpec,
    round: u64,
    entries: Vec<(usize, &Vector)>,
) -> std::result::Result<ChunkPsync, AbortInfo> {
    let mut msgs = Vec::with_capacity(entries.len());
    let mut residuals = Vec::with_capacity(entries.len());
    for (id, v) in entries {
        match compress(spec, v, round) {
            Ok(msg) => {
                residuals.push(v.sub(&msg.dense));
                msgs.push((id, msg));
            }
            Err(e) => {
                fabric.abort(AbortInfo { round, reason: AbortReason::Protocol(e.to_string()) });
                return Err(fabric.abort_info().unwrap());
            }
        }
    }
    let mean = fabric.exchange(round, msgs)?;
    Ok(ChunkPsync { mean, residuals })
}

fn stochastic_gradients(
    chunk: &[WorkerState],
    fabric: &Fabric,
    problem: &Problem,
    round: u64,
    seed: u64,
) -> Vec<Vector> {
    chunk
        .iter()
        .map(|w| {
            let g = problem
                .stochastic_gradient(w.worker_id, &w.x, round, seed)
                .expect("validated dimensions");
            if !g.all_finite() {
                fabric.abort(AbortInfo {
                    round,
                    reason: AbortReason::NonFinite { worker: w.worker_id },
                });
            }
            g
        })
        .collect()
}

/// The local update p of one worker: eta * (beta * m + g) when the momentum
/// recursion is active (updating m in place), otherwise eta * g.
fn local_update(w: &mut WorkerState, g: &Vector, eta: f64, beta: f64, use_momentum: bool) -> Vector {
    if use_momentum {
        let m = w.m.as_mut().expect("momentum buffer allocated");
        m.scale_assign(beta);
        m.add_assign(g);
        let mut p = m.scaled(beta);
        p.add_assign(g);
        p.scale_assign(eta);
        p
    } else {
        g.scaled(eta)
    }
}

fn check_states_finite(chunk: &[WorkerState], fabric: &Fabric, round: u64) {
    for w in chunk {
        if !w.x.all_finite() {
            fabric.abort(AbortInfo { round, reason: AbortReason::NonFinite { worker: w.worker_id } });
            return;
        }
    }
}

/// Error reset shared by CSER, M-CSER and CSER-PL: partially synchronize the
/// residuals with C1 and fold the synchronized part into the local models.
fn error_reset(
    chunk: &mut [WorkerState],
    fabric: &Fabric,
    c1: &CompressorSpec,
    round: u64,
) -> std::result::Result<(), AbortInfo> {
    let entries = chunk
        .iter()
        .map(|w| (w.worker_id, w.e.as_ref().expect("error-reset variant carries e")))
        .collect();
    let sync = psync_chunk(fabric, c1, round, entries)?;
    for (w, e_new) in chunk.iter_mut().zip(sync.residuals) {
        // x <- x - e_half + (mean C1(e) + e_new)
        let e_half = w.e.take().expect("residual present");
        w.x.sub_assign(&e_half);
        w.x.add_assign(&sync.mean.dense);
        w.x.add_assign(&e_new);
        w.e = Some(e_new);
    }
    Ok(())
}

/// Advances all workers of one party by one round.
#[allow(clippy::too_many_arguments)]
pub fn step_round(
    chunk: &mut [WorkerState],
    shared: &mut StepShared,
    fabric: &Fabric,
    problem: &Problem,
    cfg: &OptimizerConfig,
    eta: f64,
    round: u64,
    seed: u64,
) -> std::result::Result<(), AbortInfo> {
    let reset_round = round.is_multiple_of(cfg.h);
    let beta = cfg.beta;
    match cfg.variant {
        Variant::FullSgd => {
            let gs = stochastic_gradients(chunk, fabric, problem, round, seed);
            let use_m = cfg.variant.needs_momentum(beta);
            let mut entries = Vec::with_capacity(chunk.len());
            for (w, g) in chunk.iter_mut().zip(&gs) {
                let u = local_update(w, g, eta, beta, use_m);
                entries.push((w.worker_id, u));
            }
            // full sync ignores the configured compressors
            let sync = psync_chunk(
                fabric,
                &CompressorSpec::identity(),
                round,
                entries.iter().map(|(id, u)| (*id, u)).collect(),
            )?;
            for w in chunk.iter_mut() {
                w.x.sub_assign(&sync.mean.dense);
            }
        }
        Variant::LocalSgd => {
            let gs = stochastic_gradients(chunk, fabric, problem, round, seed);
            let use_m = cfg.variant.needs_momentum(beta);
            for (w, g) in chunk.iter_mut().zip(&gs) {
                let u = local_update(w, g, eta, beta, use_m);
                w.x.sub_assign(&u);
            }
            if reset_round {
                let entries = chunk.iter().map(|w| (w.worker_id, &w.x)).collect();
                let sync = psync_chunk(fabric, &cfg.c1, round, entries)?;
                for w in chunk.iter_mut() {
                    w.x = sync.mean.dense.clone();
                }
            }
        }
        Variant::EfSgd => {
            let gs = stochastic_gradients(chunk, fabric, problem, round, seed);
            let use_m = cfg.variant.needs_momentum(beta);
            let mut ps = Vec::with_capacity(chunk.len());
            for (w, g) in chunk.iter_mut().zip(&gs) {
                let u = local_update(w, g, eta, beta, use_m);
                let mut p = w.e.clone().expect("ef_sgd carries e");
                p.sub_assign(&u);
                ps.push((w.worker_id, p));
            }
            let sync =
                psync_chunk(fabric, &cfg.c1, round, ps.iter().map(|(id, p)| (*id, p)).collect())?;
            for (w, e_new) in chunk.iter_mut().zip(sync.residuals) {
                w.x.add_assign(&sync.mean.dense);
                w.e = Some(e_new);
            }
        }
        Variant::QSparseLocal => {
            let gs = stochastic_gradients(chunk, fabric, problem, round, seed);
            let use_m = cfg.variant.needs_momentum(beta);
            for (w, g) in chunk.iter_mut().zip(&gs) {
                let u = local_update(w, g, eta, beta, use_m);
                w.x.sub_assign(&u);
            }
            if reset_round {
                let x_hat = shared.x_hat.as_mut().expect("qsparse carries the base model");
                let mut ps = Vec::with_capacity(chunk.len());
                for w in chunk.iter() {
                    let mut p = w.e.clone().expect("qsparse carries e");
                    p.add_assign(&w.x);
                    p.sub_assign(x_hat);
                    ps.push((w.worker_id, p));
                }
                let sync = psync_chunk(
                    fabric,
                    &cfg.c1,
                    round,
                    ps.iter().map(|(id, p)| (*id, p)).collect(),
                )?;
                x_hat.add_assign(&sync.mean.dense);
                for (w, e_new) in chunk.iter_mut().zip(sync.residuals) {
                    w.x = x_hat.clone();
                    w.e = Some(e_new);
                }
            }
        }
        Variant::Csea => {
            let gs = stochastic_gradients(chunk, fabric, problem, round, seed);
            let use_m = cfg.variant.needs_momentum(beta);
            let mut ps = Vec::with_capacity(chunk.len());
            for (w, g) in chunk.iter_mut().zip(&gs) {
                let u = local_update(w, g, eta, beta, use_m);
                let mut p = w.e.clone().expect("csea carries e");
                p.sub_assign(&u);
                ps.push((w.worker_id, p));
            }
            let sync =
                psync_chunk(fabric, &cfg.c1, round, ps.iter().map(|(id, p)| (*id, p)).collect())?;
            for (w, e_new) in chunk.iter_mut().zip(sync.residuals) {
                // x <- x + (mean C1(p) + e_new) - e_old
                let e_old = w.e.take().expect("residual present");
                w.x.add_assign(&sync.mean.dense);
                w.x.add_assign(&e_new);
                w.x.sub_assign(&e_old);
                w.e = Some(e_new);
            }
        }
        Variant::CserPl => {
            let gs = stochastic_gradients(chunk, fabric, problem, round, seed);
            let use_m = cfg.variant.needs_momentum(beta);
            for (w, g) in chunk.iter_mut().zip(&gs) {
                let u = local_update(w, g, eta, beta, use_m);
                w.x.sub_assign(&u);
                w.e.as_mut().expect("cser_pl carries e").sub_assign(&u);
            }
            if reset_round {
                error_reset(chunk, fabric, &cfg.c1, round)?;
            }
        }
        Variant::Cser => {
            let gs = stochastic_gradients(chunk, fabric, problem, round, seed);
            let entries = chunk.iter().zip(&gs).map(|(w, g)| (w.worker_id, g)).collect();
            let sync = psync_chunk(fabric, &cfg.c2, round, entries)?;
            for (w, r) in chunk.iter_mut().zip(&sync.residuals) {
                // g'_i = mean C2(g) + r_i
                let mut gp = sync.mean.dense.clone();
                gp.add_assign(r);
                w.x.axpy_assign(-eta, &gp);
                w.e.as_mut().expect("cser carries e").axpy_assign(-eta, r);
            }
            if reset_round {
                error_reset(chunk, fabric, &cfg.c1, round)?;
            }
        }
        Variant::MCser => {
            let gs = stochastic_gradients(chunk, fabric, problem, round, seed);
            let mut ps = Vec::with_capacity(chunk.len());
            for (w, g) in chunk.iter_mut().zip(&gs) {
                // always the momentum recursion: m <- beta m + g; p <- eta (beta m + g)
                let p = local_update(w, g, eta, beta, true);
                ps.push((w.worker_id, p));
            }
            let sync =
                psync_chunk(fabric, &cfg.c2, round, ps.iter().map(|(id, p)| (*id, p)).collect())?;
            for (w, r) in chunk.iter_mut().zip(&sync.residuals) {
                let mut pp = sync.mean.dense.clone();
                pp.add_assign(r);
                w.x.sub_assign(&pp);
                w.e.as_mut().expect("m_cser carries e").sub_assign(r);
            }
            if reset_round {
                error_reset(chunk, fabric, &cfg.c1, round)?;
            }
        }
        Variant::CserImpl2 => {
            let gs = stochastic_gradients(chunk, fabric, problem, round, seed);
            let use_m = beta > 0.0;
            let mut ps = Vec::with_capacity(chunk.len());
            for (w, g) in chunk.iter_mut().zip(&gs) {
                ps.push((w.worker_id, local_update(w, g, eta, beta, use_m)));
            }
            let sync =
                psync_chunk(fabric, &cfg.c2, round, ps.iter().map(|(id, p)| (*id, p)).collect())?;
            for (w, r) in chunk.iter_mut().zip(&sync.residuals) {
                let mut pp = sync.mean.dense.clone();
                pp.add_assign(r);
                w.x.sub_assign(&pp);
            }
            if reset_round {
                partial_sync_models(chunk, fabric, &cfg.c1, round)?;
            }
        }
        Variant::CserPlImpl2 => {
            let gs = stochastic_gradients(chunk, fabric, problem, round, seed);
            let use_m = beta > 0.0;
            for (w, g) in chunk.iter_mut().zip(&gs) {
                let p = local_update(w, g, eta, beta, use_m);
                w.x.sub_assign(&p);
            }
            if reset_round {
                partial_sync_models(chunk, fabric, &cfg.c1, round)?;
            }
        }
        Variant::CseaImpl2 => {
            let gs = stochastic_gradients(chunk, fabric, problem, round, seed);
            let use_m = beta > 0.0;
            for (w, g) in chunk.iter_mut().zip(&gs) {
                let p = local_update(w, g, eta, beta, use_m);
                w.x.sub_assign(&p);
            }
            partial_sync_models(chunk, fabric, &cfg.c1, round)?;
        }
    }
    check_states_finite(chunk, fabric, round);
    Ok(())
}

/// Implementation II synchronization: PSync applied to the models directly.
fn partial_sync_models(
    chunk: &mut [WorkerState],
    fabric: &Fabric,
    c1: &CompressorSpec,
    round: u64,
) -> std::result::Result<(), AbortInfo> {
    let entries = chunk.iter().map(|w| (w.worker_id, &w.x)).collect();
    let sync = psync_chunk(fabric, c1, round, entries)?;
    for (w, r) in chunk.iter_mut().zip(sync.residuals) {
        let mut x = sync.mean.dense.clone();
        x.add_assign(&r);
        w.x = x;
    }
    Ok(())
}
