//! Deterministic simulated synchronization layer.
//!
//! Logical workers are distributed over OS threads; the fabric is the only
//! cross-worker touch point. An exchange deposits one compressed message per
//! worker, rendezvouses at an abortable barrier, has exactly one leader fold
//! the messages in a fixed order, and hands every participant the same
//! reduced result. Because per-worker computation is pure and the fold order
//! never depends on scheduling, results are bitwise identical across thread
//! counts.

use crate::compressors::{CompressedMessage, Support};
use crate::numerics::Vector;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::sync::{Arc, Condvar, Mutex};

/// Order in which per-worker contributions are folded.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReductionOrder {
    /// Canonical order for bitwise-reproducibility tests.
    #[default]
    SequentialById,
    BinaryTree,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FabricConfig {
    pub n: usize,
    #[serde(default)]
    pub reduction_order: ReductionOrder,
    /// Physical parallelism; semantics-neutral and clamped to `n`.
    pub threads: usize,
}

impl FabricConfig {
    pub fn new(n: usize) -> Self {
        FabricConfig { n, reduction_order: ReductionOrder::SequentialById, threads: 1 }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.n == 0 {
            v.push("fabric: n must be >= 1".into());
        }
        if self.threads == 0 {
            v.push("fabric: threads must be >= 1".into());
        }
        v
    }
}

/// Why a run stopped early.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum AbortReason {
    NonFinite { worker: usize },
    LossExplosion { loss: f64, initial_loss: f64 },
    Protocol(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbortInfo {
    pub round: u64,
    pub reason: AbortReason,
}

/// Reusable rendezvous point with abort propagation.
///
/// Once aborted, every current and future `wait` returns the abort, so all
/// parties observe the failure at the same rendezvous.
pub struct Barrier {
    parties: usize,
    state: Mutex<BarrierState>,
    cv: Condvar,
}

struct BarrierState {
    waiting: usize,
    generation: u64,
    abort: Option<AbortInfo>,
}

impl Barrier {
    pub fn new(parties: usize) -> Self {
        assert!(parties >= 1);
        Barrier {
            parties,
            state: Mutex::new(BarrierState { waiting: 0, generation: 0, abort: None }),
            cv: Condvar::new(),
        }
    }

    /// Blocks until all parties arrive. Returns `true` on exactly one party
    /// (the leader of the rendezvous).
    pub fn wait(&self) -> std::result::Result<bool, AbortInfo> {
        let mut st = self.state.lock().unwrap();
        if let Some(a) = &st.abort {
            return Err(a.clone());
        }
        let gen = st.generation;
        st.waiting += 1;
        if st.waiting == self.parties {
            st.waiting = 0;
            st.generation += 1;
            self.cv.notify_all();
            return Ok(true);
        }
        loop {
            st = self.cv.wait(st).unwrap();
            if st.generation != gen {
                return Ok(false);
            }
            if let Some(a) = &st.abort {
                return Err(a.clone());
            }
        }
    }

    pub fn abort(&self, info: AbortInfo) {
        let mut st = self.state.lock().unwrap();
        if st.abort.is_none() {
            st.abort = Some(info);
        }
        self.cv.notify_all();
    }

    pub fn abort_info(&self) -> Option<AbortInfo> {
        self.state.lock().unwrap().abort.clone()
    }
}

/// Per-round transmitted bits, value and index metadata split so
/// compression-ratio cross-checks can use value bits alone.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundTraffic {
    pub round: u64,
    pub uplink_value_bits: u64,
    pub uplink_index_bits: u64,
    pub downlink_value_bits: u64,
    pub downlink_index_bits: u64,
}

impl RoundTraffic {
    pub fn uplink_bits(&self) -> u64 {
        self.uplink_value_bits + self.uplink_index_bits
    }

    pub fn downlink_bits(&self) -> u64 {
        self.downlink_value_bits + self.downlink_index_bits
    }

    pub fn total_bits(&self) -> u64 {
        self.uplink_bits() + self.downlink_bits()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerTotals {
    pub uplink_value_bits: u64,
    pub uplink_index_bits: u64,
    pub downlink_value_bits: u64,
    pub downlink_index_bits: u64,
}

impl LedgerTotals {
    pub fn uplink_bits(&self) -> u64 {
        self.uplink_value_bits + self.uplink_index_bits
    }

    pub fn downlink_bits(&self) -> u64 {
        self.downlink_value_bits + self.downlink_index_bits
    }

    pub fn value_bits(&self) -> u64 {
        self.uplink_value_bits + self.downlink_value_bits
    }
}

/// Append-only account of transmitted bits under the AllReduce-broadcast
/// model: uplink sums each worker's payload, downlink charges the reduced
/// payload once per worker.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct CommLedger {
    rounds: Vec<RoundTraffic>,
}

impl CommLedger {
    pub fn new() -> Self {
        CommLedger::default()
    }

    pub fn record_exchange(
        &mut self,
        round: u64,
        messages: &[CompressedMessage],
        reduced: &CompressedMessage,
    ) {
        let n = messages.len() as u64;
        let needs_new = match self.rounds.last() {
            Some(last) => {
                debug_assert!(last.round <= round, "ledger rounds must be non-decreasing");
                last.round != round
            }
            None => true,
        };
        if needs_new {
            self.rounds.push(RoundTraffic { round, ..RoundTraffic::default() });
        }
        let entry = self.rounds.last_mut().unwrap();
        for m in messages {
            entry.uplink_value_bits += m.value_bits();
            entry.uplink_index_bits += m.index_bits();
        }
        entry.downlink_value_bits += n * reduced.value_bits();
        entry.downlink_index_bits += n * reduced.index_bits();
    }

    pub fn per_round(&self) -> &[RoundTraffic] {
        &self.rounds
    }

    pub fn totals(&self) -> LedgerTotals {
        let mut t = LedgerTotals::default();
        for r in &self.rounds {
            t.uplink_value_bits += r.uplink_value_bits;
            t.uplink_index_bits += r.uplink_index_bits;
            t.downlink_value_bits += r.downlink_value_bits;
            t.downlink_index_bits += r.downlink_index_bits;
        }
        t
    }

    pub fn rounds_with_traffic(&self) -> usize {
        self.rounds.iter().filter(|r| r.total_bits() > 0).count()
    }
}

/// One report row: per-round traffic with running cumulative totals.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LedgerRow {
    pub round: u64,
    pub uplink_bits: u64,
    pub downlink_bits: u64,
    pub cumulative_uplink_bits: u64,
    pub cumulative_downlink_bits: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LedgerReport {
    pub rows: Vec<LedgerRow>,
    pub totals: LedgerTotals,
    pub rounds_with_traffic: usize,
}

/// Per-round and cumulative bit counts in stable round order.
pub fn ledger_report(ledger: &CommLedger) -> LedgerReport {
    let mut rows = Vec::with_capacity(ledger.per_round().len());
    let mut cum_up = 0;
    let mut cum_down = 0;
    for r in ledger.per_round() {
        cum_up += r.uplink_bits();
        cum_down += r.downlink_bits();
        rows.push(LedgerRow {
            round: r.round,
            uplink_bits: r.uplink_bits(),
            downlink_bits: r.downlink_bits(),
            cumulative_uplink_bits: cum_up,
            cumulative_downlink_bits: cum_down,
        });
    }
    LedgerReport {
        rows,
        totals: ledger.totals(),
        rounds_with_traffic: ledger.rounds_with_traffic(),
    }
}

fn union_support(messages: &[CompressedMessage]) -> Result<Support> {
    if messages.iter().any(|m| matches!(m.support, Support::Full)) {
        if messages.iter().all(|m| matches!(m.support, Support::Full)) {
            return Ok(Support::Full);
        }
        return Err(Error::Protocol("reduce_mean: mixed full and sparse supports".into()));
    }
    if messages.iter().all(|m| matches!(m.support, Support::Indices(_))) {
        let mut union: Vec<usize> = Vec::new();
        for m in messages {
            if let Support::Indices(idx) = &m.support {
                union.extend_from_slice(idx);
            }
        }
        union.sort_unstable();
        union.dedup();
        return Ok(Support::Indices(union));
    }
    if messages.iter().all(|m| matches!(m.support, Support::Blocks { .. })) {
        // blockwise selections come from a shared (seed, round) key; any
        // mismatch means the workers' compressor streams desynchronized
        let first = &messages[0].support;
        for m in &messages[1..] {
            if &m.support != first {
                return Err(Error::Protocol(
                    "reduce_mean: block support mismatch across workers (compressor seed desynchronization)"
                        .into(),
                ));
            }
        }
        return Ok(first.clone());
    }
    Err(Error::Protocol("reduce_mean: inconsistent support kinds".into()))
}

fn tree_sum(msgs: &[CompressedMessage], lo: usize, hi: usize) -> Vector {
    if hi - lo == 1 {
        return msgs[lo].dense.clone();
    }
    let mid = lo + (hi - lo) / 2;
    let mut left = tree_sum(msgs, lo, mid);
    left.add_assign(&tree_sum(msgs, mid, hi));
    left
}

/// Coordinate-wise mean of the messages in the given deterministic order;
/// the result's support is the union of the input supports.
pub fn reduce_mean(
    messages: &[CompressedMessage],
    order: ReductionOrder,
) -> Result<CompressedMessage> {
    if messages.is_empty() {
        return Err(Error::Protocol("reduce_mean: no messages".into()));
    }
    let d = messages[0].dim();
    for m in messages {
        if m.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, got: m.dim() });
        }
    }
    // identical inputs average to themselves exactly; skip the fold so the
    // conservation identity holds bitwise
    if messages[1..].iter().all(|m| m == &messages[0]) {
        return Ok(messages[0].clone());
    }
    let support = union_support(messages)?;
    let n = messages.len();
    let mut sum = match order {
        ReductionOrder::SequentialById => {
            let mut acc = messages[0].dense.clone();
            for m in &messages[1..] {
                acc.add_assign(&m.dense);
            }
            acc
        }
        ReductionOrder::BinaryTree => tree_sum(messages, 0, n),
    };
    sum.scale_assign(1.0 / n as f64);
    Ok(CompressedMessage::new(sum, support))
}

/// The shared synchronization fabric for one run.
///
/// `parties` threads participate; each owns a disjoint set of worker ids and
/// deposits those workers' contributions. Exchanges are strictly lockstep:
/// every party makes the same sequence of calls.
pub struct Fabric {
    n: usize,
    parties: usize,
    order: ReductionOrder,
    barrier: Barrier,
    msg_slots: Vec<Mutex<Option<CompressedMessage>>>,
    vec_slots: Vec<Mutex<Option<Vector>>>,
    reduced_msg: Mutex<Option<Arc<CompressedMessage>>>,
    shared_vecs: Mutex<Option<Arc<Vec<Vector>>>>,
    ledger: Mutex<CommLedger>,
}

impl Fabric {
    pub fn new(cfg: &FabricConfig) -> Arc<Fabric> {
        let parties = cfg.threads.clamp(1, cfg.n.max(1));
        Arc::new(Fabric {
            n: cfg.n,
            parties,
            order: cfg.reduction_order,
            barrier: Barrier::new(parties),
            msg_slots: (0..cfg.n).map(|_| Mutex::new(None)).collect(),
            vec_slots: (0..cfg.n).map(|_| Mutex::new(None)).collect(),
            reduced_msg: Mutex::new(None),
            shared_vecs: Mutex::new(None),
            ledger: Mutex::new(CommLedger::new()),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn parties(&self) -> usize {
        self.parties
    }

    pub fn order(&self) -> ReductionOrder {
        self.order
    }

    /// Rendezvous without payload; returns the leader flag.
    pub fn barrier(&self, _round: u64) -> std::result::Result<bool, AbortInfo> {
        self.barrier.wait()
    }

    pub fn abort(&self, info: AbortInfo) {
        self.barrier.abort(info);
    }

    pub fn abort_info(&self) -> Option<AbortInfo> {
        self.barrier.abort_info()
    }

    /// Deposit per-worker messages and receive the ledgered mean.
    pub fn exchange(
        &self,
        round: u64,
        msgs: Vec<(usize, CompressedMessage)>,
    ) -> std::result::Result<Arc<CompressedMessage>, AbortInfo> {
        for (id, m) in msgs {
            *self.msg_slots[id].lock().unwrap() = Some(m);
        }
        let leader = self.barrier.wait()?;
        if leader {
            let mut collected = Vec::with_capacity(self.n);
            for slot in &self.msg_slots {
                match slot.lock().unwrap().take() {
                    Some(m) => collected.push(m),
                    None => {
                        self.barrier.abort(AbortInfo {
                            round,
                            reason: AbortReason::Protocol(
                                "exchange: worker count mismatch (missing contribution)".into(),
                            ),
                        });
                        return Err(self.barrier.abort_info().unwrap());
                    }
                }
            }
            match reduce_mean(&collected, self.order) {
                Ok(reduced) => {
                    self.ledger.lock().unwrap().record_exchange(round, &collected, &reduced);
                    *self.reduced_msg.lock().unwrap() = Some(Arc::new(reduced));
                }
                Err(e) => {
                    self.barrier
                        .abort(AbortInfo { round, reason: AbortReason::Protocol(e.to_string()) });
                    return Err(self.barrier.abort_info().unwrap());
                }
            }
        }
        self.barrier.wait()?;
        let out = self.reduced_msg.lock().unwrap().clone().expect("leader published reduction");
        Ok(out)
    }

    /// Deposit per-worker vectors and receive all of them in id order
    /// (metrics snapshots; not ledgered).
    pub fn share_vectors(
        &self,
        round: u64,
        items: Vec<(usize, Vector)>,
    ) -> std::result::Result<(Arc<Vec<Vector>>, bool), AbortInfo> {
        for (id, v) in items {
            *self.vec_slots[id].lock().unwrap() = Some(v);
        }
        let leader = self.barrier.wait()?;
        if leader {
            let mut collected = Vec::with_capacity(self.n);
            for slot in &self.vec_slots {
                match slot.lock().unwrap().take() {
                    Some(v) => collected.push(v),
                    None => {
                        self.barrier.abort(AbortInfo {
                            round,
                            reason: AbortReason::Protocol("share_vectors: missing contribution".into()),
                        });
                        return Err(self.barrier.abort_info().unwrap());
                    }
                }
            }
            *self.shared_vecs.lock().unwrap() = Some(Arc::new(collected));
        }
        self.barrier.wait()?;
        let out = self.shared_vecs.lock().unwrap().clone().expect("leader published snapshot");
        Ok((out, leader))
    }

    pub fn ledger_totals(&self) -> LedgerTotals {
        self.ledger.lock().unwrap().totals()
    }

    pub fn ledger_snapshot(&self) -> CommLedger {
        self.ledger.lock().unwrap().clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compressors::{compress, CompressorSpec};
    use std::time::Duration;

    fn msg_of(vals: Vec<f64>) -> CompressedMessage {
        compress(&CompressorSpec::identity(), &Vector::from_vec(vals), 1).unwrap()
    }

    #[test]
    fn reduce_single_message_is_identity() {
        let m = msg_of(vec![1.0, 2.0, 3.0]);
        let r = reduce_mean(std::slice::from_ref(&m), ReductionOrder::SequentialById).unwrap();
        assert_eq!(r, m);
    }

    #[test]
    fn reduce_two_messages() {
        let a = msg_of(vec![2.0, 0.0, 0.0]);
        let b = msg_of(vec![4.0, 0.0, 0.0]);
        let r = reduce_mean(&[a, b], ReductionOrder::SequentialById).unwrap();
        assert_eq!(r.dense.as_slice(), &[3.0, 0.0, 0.0]);
    }

    #[test]
    fn conservation_of_identical_messages_is_exact() {
        let m = msg_of(vec![0.1, -0.3, 7.7]);
        let many: Vec<_> = (0..7).map(|_| m.clone()).collect();
        for order in [ReductionOrder::SequentialById, ReductionOrder::BinaryTree] {
            let r = reduce_mean(&many, order).unwrap();
            assert_eq!(r, m);
        }
    }

    #[test]
    fn orders_agree_within_tolerance() {
        use crate::rng::keyed_rng;
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = keyed_rng(&[1, 2, 3]);
        let msgs: Vec<_> = (0..8)
            .map(|_| {
                msg_of(
                    (0..64)
                        .map(|_| {
                            <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
                        })
                        .collect(),
                )
            })
            .collect();
        let a = reduce_mean(&msgs, ReductionOrder::SequentialById).unwrap();
        let b = reduce_mean(&msgs, ReductionOrder::BinaryTree).unwrap();
        assert!(a.dense.max_abs_diff(&b.dense) <= 1e-12);
    }

    #[test]
    fn grbs_support_mismatch_is_protocol_error() {
        let v = Vector::from_vec(vec![1.0; 8]);
        let a = compress(&CompressorSpec::grbs(2.0, 4, 1), &v, 1).unwrap();
        // different seed selects different blocks in the same round
        let b = compress(&CompressorSpec::grbs(2.0, 4, 2), &v, 1).unwrap();
        assert_ne!(a.support, b.support);
        assert!(matches!(
            reduce_mean(&[a, b], ReductionOrder::SequentialById),
            Err(Error::Protocol(_))
        ));
    }

    #[test]
    fn ledger_full_sync_accounting() {
        // full-sync: d = 100, n = 4, 10 rounds -> uplink 4 * 3200 * 10 bits
        let mut ledger = CommLedger::new();
        let msgs: Vec<_> = (0..4).map(|i| msg_of(vec![i as f64; 100])).collect();
        for round in 1..=10 {
            let reduced = reduce_mean(&msgs, ReductionOrder::SequentialById).unwrap();
            ledger.record_exchange(round, &msgs, &reduced);
        }
        let t = ledger.totals();
        assert_eq!(t.uplink_bits(), 4 * 3200 * 10);
        assert_eq!(t.downlink_bits(), 4 * 3200 * 10);
        assert_eq!(ledger.rounds_with_traffic(), 10);

        let report = ledger_report(&ledger);
        assert_eq!(report.rows.len(), 10);
        assert_eq!(report.rows.last().unwrap().cumulative_uplink_bits, t.uplink_bits());
        assert!(report.rows.windows(2).all(|w| {
            w[0].cumulative_uplink_bits <= w[1].cumulative_uplink_bits && w[0].round < w[1].round
        }));
    }

    #[test]
    fn empty_ledger_reports_zeros() {
        let report = ledger_report(&CommLedger::new());
        assert!(report.rows.is_empty());
        assert_eq!(report.totals.uplink_bits(), 0);
        assert_eq!(report.rounds_with_traffic, 0);
    }

    #[test]
    fn barrier_is_noop_for_single_party() {
        let b = Barrier::new(1);
        assert!(b.wait().unwrap());
        assert!(b.wait().unwrap());
    }

    #[test]
    fn barrier_staggered_arrival_resumes_together() {
        let b = Arc::new(Barrier::new(8));
        let released = Arc::new(std::sync::atomic::AtomicUsize::new(0));
        std::thread::scope(|s| {
            for tid in 0..8usize {
                let b = Arc::clone(&b);
                let released = Arc::clone(&released);
                s.spawn(move || {
                    std::thread::sleep(Duration::from_millis(3 * tid as u64));
                    // nobody may be released before the last arrival
                    assert_eq!(released.load(std::sync::atomic::Ordering::SeqCst), 0);
                    b.wait().unwrap();
                    released.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                });
            }
        });
        assert_eq!(released.load(std::sync::atomic::Ordering::SeqCst), 8);
    }

    #[test]
    fn abort_propagates_to_all_parties_at_same_round() {
        let cfg = FabricConfig { n: 8, reduction_order: ReductionOrder::SequentialById, threads: 8 };
        let fabric = Fabric::new(&cfg);
        let outcomes: Vec<Option<AbortInfo>> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..8usize)
                .map(|tid| {
                    let fabric = Arc::clone(&fabric);
                    s.spawn(move || {
                        for round in 1..=40u64 {
                            if tid == 3 && round == 17 {
                                fabric.abort(AbortInfo {
                                    round,
                                    reason: AbortReason::NonFinite { worker: 3 },
                                });
                            }
                            let msg = msg_of(vec![tid as f64; 4]);
                            match fabric.exchange(round, vec![(tid, msg)]) {
                                Ok(_) => {}
                                Err(info) => return Some(info),
                            }
                        }
                        None
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        for out in outcomes {
            let info = out.expect("every worker must observe the abort");
            assert_eq!(info.round, 17);
            assert_eq!(info.reason, AbortReason::NonFinite { worker: 3 });
        }
    }

    #[test]
    fn exchange_reduces_across_threads() {
        let cfg = FabricConfig { n: 4, reduction_order: ReductionOrder::SequentialById, threads: 2 };
        let fabric = Fabric::new(&cfg);
        // two parties own two workers each
        let results: Vec<Arc<CompressedMessage>> = std::thread::scope(|s| {
            let handles: Vec<_> = (0..2usize)
                .map(|tid| {
                    let fabric = Arc::clone(&fabric);
                    s.spawn(move || {
                        let msgs = vec![
                            (2 * tid, msg_of(vec![(2 * tid) as f64; 3])),
                            (2 * tid + 1, msg_of(vec![(2 * tid + 1) as f64; 3])),
                        ];
                        fabric.exchange(1, msgs).unwrap()
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().unwrap()).collect()
        });
        // mean of 0, 1, 2, 3
        assert_eq!(results[0].dense.as_slice(), &[1.5, 1.5, 1.5]);
        assert_eq!(results[0].dense, results[1].dense);
        assert_eq!(fabric.ledger_totals().uplink_bits(), 4 * 3 * 32);
    }
}
