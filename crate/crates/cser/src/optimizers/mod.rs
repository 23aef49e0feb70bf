//! Per-round state transitions for every algorithm variant, plus the
//! analytical helpers: compression-ratio algebra, error-bound factors, and
//! the corollary step-size policies.
//!
//! Implementation I variants carry a residual vector `e` per worker and
//! apply error feedback (EF-SGD, QSparse-local-SGD) or error reset (CSEA,
//! CSER-PL, CSER, M-CSER) to it. Implementation II variants exploit
//! blockwise sparsifiers to synchronize the models directly and carry no
//! residual at all.

mod steps;

pub use steps::{psync, step_round, PsyncOutput, StepShared};

use crate::compressors::{CompressorKind, CompressorSpec};
use crate::numerics::Vector;
use crate::problems::Problem;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    FullSgd,
    LocalSgd,
    EfSgd,
    QSparseLocal,
    Csea,
    CserPl,
    Cser,
    MCser,
    CserImpl2,
    CserPlImpl2,
    CseaImpl2,
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::FullSgd => "full_sgd",
            Variant::LocalSgd => "local_sgd",
            Variant::EfSgd => "ef_sgd",
            Variant::QSparseLocal => "qsparse_local",
            Variant::Csea => "csea",
            Variant::CserPl => "cser_pl",
            Variant::Cser => "cser",
            Variant::MCser => "m_cser",
            Variant::CserImpl2 => "cser_impl2",
            Variant::CserPlImpl2 => "cser_pl_impl2",
            Variant::CseaImpl2 => "csea_impl2",
        }
    }

    pub fn is_impl2(&self) -> bool {
        matches!(self, Variant::CserImpl2 | Variant::CserPlImpl2 | Variant::CseaImpl2)
    }

    /// Whether worker state carries the residual vector e.
    pub fn carries_residual(&self) -> bool {
        matches!(
            self,
            Variant::EfSgd
                | Variant::QSparseLocal
                | Variant::Csea
                | Variant::CserPl
                | Variant::Cser
                | Variant::MCser
        )
    }

    /// M-CSER always runs the momentum recursion; every other variant only
    /// keeps a buffer when beta > 0.
    pub fn needs_momentum(&self, beta: f64) -> bool {
        matches!(self, Variant::MCser) || beta > 0.0
    }
}

/// Step-size schedule.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum EtaSchedule {
    #[default]
    Constant,
    /// Multiply by `factor` after each milestone round.
    StepDecay { milestones: Vec<u64>, factor: f64 },
    /// Constant step size computed from the convergence-rate recipe.
    CorollaryRate { gamma: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub variant: Variant,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default)]
    pub beta: f64,
    /// Error-reset / synchronization interval.
    #[serde(default = "default_h")]
    pub h: u64,
    #[serde(default = "CompressorSpec::identity")]
    pub c1: CompressorSpec,
    #[serde(default = "CompressorSpec::zero")]
    pub c2: CompressorSpec,
    #[serde(default)]
    pub schedule: EtaSchedule,
}

fn default_eta() -> f64 {
    0.01
}

fn default_h() -> u64 {
    1
}

impl OptimizerConfig {
    pub fn new(variant: Variant, eta: f64, h: u64, c1: CompressorSpec, c2: CompressorSpec) -> Self {
        OptimizerConfig { variant, eta, beta: 0.0, h, c1, c2, schedule: EtaSchedule::Constant }
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    /// Every violated constraint, or Ok.
    // negated comparisons are deliberate: they reject NaN parameters too
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self, d: usize) -> Result<()> {
        let mut v = Vec::new();
        if !(self.eta > 0.0) && !matches!(self.schedule, EtaSchedule::CorollaryRate { .. }) {
            v.push(format!("optimizer: eta must be > 0, got {}", self.eta));
        }
        if !(0.0..1.0).contains(&self.beta) {
            v.push(format!("optimizer: beta must be in [0, 1), got {}", self.beta));
        }
        if self.h == 0 {
            v.push("optimizer: h must be >= 1".into());
        }
        if let EtaSchedule::StepDecay { milestones, factor } = &self.schedule {
            if !(*factor > 0.0) {
                v.push(format!("optimizer: decay factor must be > 0, got {factor}"));
            }
            if milestones.windows(2).any(|w| w[0] >= w[1]) {
                v.push("optimizer: decay milestones must be strictly increasing".into());
            }
        }
        if let EtaSchedule::CorollaryRate { gamma } = &self.schedule {
            if !(*gamma > 0.0) {
                v.push(format!("optimizer: corollary gamma must be > 0, got {gamma}"));
            }
        }

        let is = |s: &CompressorSpec, k: CompressorKind| s.kind == k;
        match self.variant {
            // full synchronization by definition; compressors and h are unused
            Variant::FullSgd => {}
            Variant::LocalSgd => {
                if !is(&self.c1, CompressorKind::Identity) {
                    v.push("local_sgd: c1 must be identity".into());
                }
                if !is(&self.c2, CompressorKind::Zero) {
                    v.push("local_sgd: c2 must be zero".into());
                }
            }
            Variant::EfSgd => {
                if self.h != 1 {
                    v.push("ef_sgd: h must be 1".into());
                }
                if !is(&self.c2, CompressorKind::Zero) {
                    v.push("ef_sgd: c2 must be zero".into());
                }
            }
            Variant::QSparseLocal | Variant::CserPl => {
                if !is(&self.c2, CompressorKind::Zero) {
                    v.push(format!("{}: c2 must be zero", self.variant.name()));
                }
            }
            Variant::Csea => {
                if self.h != 1 {
                    v.push("csea: h must be 1".into());
                }
                if !is(&self.c2, CompressorKind::Zero) {
                    v.push("csea: c2 must be zero".into());
                }
            }
            Variant::Cser | Variant::MCser => {}
            Variant::CserImpl2 => {
                if !is(&self.c1, CompressorKind::Grbs) || !is(&self.c2, CompressorKind::Grbs) {
                    v.push("cser_impl2: both compressors must be grbs".into());
                }
            }
            Variant::CserPlImpl2 => {
                if !is(&self.c1, CompressorKind::Grbs) {
                    v.push("cser_pl_impl2: c1 must be grbs".into());
                }
                if !is(&self.c2, CompressorKind::Grbs) && !is(&self.c2, CompressorKind::Zero) {
                    v.push("cser_pl_impl2: c2 is unused and must be grbs or zero".into());
                }
            }
            Variant::CseaImpl2 => {
                if self.h != 1 {
                    v.push("csea_impl2: h must be 1".into());
                }
                if !is(&self.c1, CompressorKind::Grbs) {
                    v.push("csea_impl2: c1 must be grbs".into());
                }
                if !is(&self.c2, CompressorKind::Grbs) && !is(&self.c2, CompressorKind::Zero) {
                    v.push("csea_impl2: c2 is unused and must be grbs or zero".into());
                }
            }
        }
        v.extend(self.c1.violations(d, "c1"));
        v.extend(self.c2.violations(d, "c2"));
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v))
        }
    }
}

/// Per-worker optimizer state. Implementation II variants hold no residual;
/// momentum is only allocated when the variant runs the recursion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkerState {
    pub worker_id: usize,
    pub x: Vector,
    pub e: Option<Vector>,
    pub m: Option<Vector>,
}

/// Initializes n workers with a common model, zero residuals and momentum.
pub fn init_states(cfg: &OptimizerConfig, n: usize, x0: &Vector) -> Vec<WorkerState> {
    let d = x0.len();
    (0..n)
        .map(|worker_id| WorkerState {
            worker_id,
            x: x0.clone(),
            e: cfg.variant.carries_residual().then(|| Vector::zeros(d)),
            m: cfg.variant.needs_momentum(cfg.beta).then(|| Vector::zeros(d)),
        })
        .collect()
}

/// Coordinate-wise average of the local models in worker-id order.
pub fn mean_model(states: &[WorkerState]) -> Vector {
    assert!(!states.is_empty());
    let mut acc = states[0].x.clone();
    for s in &states[1..] {
        acc.add_assign(&s.x);
    }
    acc.scale_assign(1.0 / states.len() as f64);
    acc
}

/// Which error bound a factor is computed for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundMethod {
    Cser,
    QSparse,
}

/// Dimensionless factor multiplying eta^2 L^2 V2 in the compression-error
/// term of the convergence bounds.
///
/// The default convention drops the leading constants (2 for error reset,
/// 8 for error feedback), which is the only convention consistent with the
/// worked comparison numbers; `with_constant` re-enables them.
pub fn error_bound_factor(
    method: BoundMethod,
    delta1: f64,
    delta2: f64,
    h: u64,
    with_constant: bool,
) -> Result<f64> {
    if !(delta1 > 0.0 && delta1 <= 1.0) {
        return Err(Error::Domain(format!(
            "error_bound_factor: delta1 must be in (0, 1], got {delta1}"
        )));
    }
    if !(0.0..=1.0).contains(&delta2) {
        return Err(Error::Domain(format!(
            "error_bound_factor: delta2 must be in [0, 1], got {delta2}"
        )));
    }
    if h == 0 {
        return Err(Error::Domain("error_bound_factor: h must be >= 1".into()));
    }
    let h2 = (h * h) as f64;
    Ok(match method {
        BoundMethod::Cser => {
            let base = (4.0 * (1.0 - delta1) / (delta1 * delta1) + 1.0) * (1.0 - delta2) * h2;
            if with_constant {
                2.0 * base
            } else {
                base
            }
        }
        BoundMethod::QSparse => {
            let base = (4.0 * (1.0 - delta1 * delta1) / (delta1 * delta1) + 1.0) * h2;
            if with_constant {
                8.0 * base
            } else {
                base
            }
        }
    })
}

/// Overall compression ratio of a variant given per-compressor ratios and
/// the synchronization interval.
pub fn overall_compression_ratio(variant: Variant, r1: f64, r2: f64, h: u64) -> f64 {
    let h = h as f64;
    match variant {
        Variant::FullSgd => 1.0,
        Variant::Cser | Variant::MCser | Variant::CserImpl2 => 1.0 / (1.0 / r2 + 1.0 / (r1 * h)),
        Variant::QSparseLocal | Variant::CserPl | Variant::CserPlImpl2 | Variant::LocalSgd => r1 * h,
        Variant::EfSgd | Variant::Csea | Variant::CseaImpl2 => r1,
    }
}

/// Step size from the non-momentum convergence guarantee:
/// min { gamma / (sqrt(T/n) + [4(1-d1)/d1^2 + 1]^(1/3) 2^(1/3) (1-d2)^(1/3) H^(2/3) T^(1/3)), 1/L }.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn corollary_step_size(
    gamma: f64,
    rounds: u64,
    n: usize,
    delta1: f64,
    delta2: f64,
    h: u64,
    l: f64,
) -> Result<f64> {
    if !(delta1 > 0.0) {
        return Err(Error::Domain("corollary_step_size: delta1 must be > 0".into()));
    }
    let t = rounds as f64;
    let c = 4.0 * (1.0 - delta1) / (delta1 * delta1) + 1.0;
    let denom = (t / n as f64).sqrt()
        + c.cbrt() * 2f64.cbrt() * (1.0 - delta2).cbrt() * (h as f64).powf(2.0 / 3.0) * t.cbrt();
    Ok((gamma / denom).min(1.0 / l))
}

/// Momentum counterpart:
/// min { gamma / (sqrt(T/n) + [(4(1-d1)/d1^2 + 1) 2 (1-d2) H^2 + 1]^(1/3) T^(1/3)), 1/2 }.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn corollary_step_size_momentum(
    gamma: f64,
    rounds: u64,
    n: usize,
    delta1: f64,
    delta2: f64,
    h: u64,
) -> Result<f64> {
    if !(delta1 > 0.0) {
        return Err(Error::Domain("corollary_step_size: delta1 must be > 0".into()));
    }
    let t = rounds as f64;
    let c = (4.0 * (1.0 - delta1) / (delta1 * delta1) + 1.0) * 2.0 * (1.0 - delta2) * (h * h) as f64
        + 1.0;
    let denom = (t / n as f64).sqrt() + c.cbrt() * t.cbrt();
    Ok((gamma / denom).min(0.5))
}

/// Resolved step-size policy for one run.
#[derive(Clone, Debug)]
pub enum StepSizePolicy {
    Constant(f64),
    StepDecay { base: f64, milestones: Vec<u64>, factor: f64 },
}

impl StepSizePolicy {
    pub fn at(&self, round: u64) -> f64 {
        match self {
            StepSizePolicy::Constant(eta) => *eta,
            StepSizePolicy::StepDecay { base, milestones, factor } => {
                let decays = milestones.iter().filter(|&&m| round > m).count() as i32;
                base * factor.powi(decays)
            }
        }
    }
}

/// Turns the configured schedule into a concrete policy. The corollary rate
/// needs the horizon and the problem's smoothness constant.
pub fn resolve_step_size(
    cfg: &OptimizerConfig,
    problem: &Problem,
    rounds: u64,
) -> Result<StepSizePolicy> {
    match &cfg.schedule {
        EtaSchedule::Constant => Ok(StepSizePolicy::Constant(cfg.eta)),
        EtaSchedule::StepDecay { milestones, factor } => Ok(StepSizePolicy::StepDecay {
            base: cfg.eta,
            milestones: milestones.clone(),
            factor: *factor,
        }),
        EtaSchedule::CorollaryRate { gamma } => {
            let d = problem.dim();
            let n = problem.workers();
            let delta1 = cfg.c1.delta_nominal(d);
            let delta2 = cfg.c2.delta_nominal(d);
            let eta = if cfg.variant.needs_momentum(cfg.beta) {
                corollary_step_size_momentum(*gamma, rounds, n, delta1, delta2, cfg.h)?
            } else {
                let l = problem.constants().l;
                corollary_step_size(*gamma, rounds, n, delta1, delta2, cfg.h, l)?
            };
            Ok(StepSizePolicy::Constant(eta))
        }
    }
}

/// One row of the built-in compressor-configuration table: the tuned
/// (R_C2, R_C1, H) settings per optimizer and overall ratio.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct CompressorTableRow {
    pub variant: Variant,
    pub overall: f64,
    pub r2: Option<f64>,
    pub r1: f64,
    pub h: Option<u64>,
}

impl CompressorTableRow {
    /// Ratio computed from the row's settings via the variant's formula.
    pub fn computed_overall(&self) -> f64 {
        overall_compression_ratio(self.variant, self.r1, self.r2.unwrap_or(1.0), self.h.unwrap_or(1))
    }
}

/// The full tuned configuration table (every optimizer and overall ratio).
pub fn compressor_config_table() -> Vec<CompressorTableRow> {
    let mut rows = Vec::new();
    let row = |variant, overall: f64, r2: Option<f64>, r1: f64, h: Option<u64>| CompressorTableRow {
        variant,
        overall,
        r2,
        r1,
        h,
    };
    // (overall, r2, r1, h) per optimizer
    let ef = [2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0, 256.0, 512.0, 1024.0];
    for &r in &ef {
        rows.push(row(Variant::EfSgd, r, None, r, None));
    }
    let qsparse: [(f64, f64, u64); 10] = [
        (2.0, 1.0, 2),
        (4.0, 1.0, 4),
        (8.0, 1.0, 8),
        (16.0, 4.0, 4),
        (32.0, 4.0, 8),
        (64.0, 16.0, 4),
        (128.0, 16.0, 8),
        (256.0, 128.0, 2),
        (512.0, 128.0, 4),
        (1024.0, 128.0, 8),
    ];
    for &(overall, r1, h) in &qsparse {
        rows.push(row(Variant::QSparseLocal, overall, None, r1, Some(h)));
    }
    for &r in &ef {
        rows.push(row(Variant::Csea, r, None, r, None));
    }
    let cser: [(f64, f64, f64, u64); 10] = [
        (2.0, 4.0, 2.0, 2),
        (4.0, 8.0, 2.0, 4),
        (8.0, 16.0, 2.0, 8),
        (16.0, 32.0, 8.0, 4),
        (32.0, 64.0, 8.0, 8),
        (64.0, 128.0, 8.0, 16),
        (128.0, 256.0, 4.0, 64),
        (256.0, 512.0, 16.0, 32),
        (512.0, 1024.0, 8.0, 128),
        (1024.0, 2048.0, 32.0, 64),
    ];
    for &(overall, r2, r1, h) in &cser {
        rows.push(row(Variant::Cser, overall, Some(r2), r1, Some(h)));
    }
    let cser_pl: [(f64, f64, u64); 9] = [
        (4.0, 2.0, 2),
        (8.0, 2.0, 4),
        (16.0, 4.0, 4),
        (32.0, 8.0, 4),
        (64.0, 8.0, 8),
        (128.0, 8.0, 16),
        (256.0, 16.0, 16),
        (512.0, 16.0, 32),
        (1024.0, 32.0, 32),
    ];
    for &(overall, r1, h) in &cser_pl {
        rows.push(row(Variant::CserPl, overall, None, r1, Some(h)));
    }
    rows
}
