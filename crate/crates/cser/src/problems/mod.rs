//! Objective families with known smoothness constants and seeded stochastic
//! gradient oracles.
//!
//! Three desk-scale families are provided: a heterogeneous quadratic with an
//! exact minimizer and exact smoothness constant, a synthetic logistic
//! regression, and a tiny one-hidden-layer tanh network as a genuinely
//! non-convex instance. Worker data distributions always differ, gradient
//! noise is zero-mean with controllable scale, and every oracle is a pure
//! function of (worker, point, round, seed).

mod logistic;
mod mlp;
mod quadratic;

pub use logistic::{Logistic, LogisticConfig};
pub use mlp::{Mlp, MlpConfig};
pub use quadratic::{Quadratic, QuadraticConfig};

use crate::numerics::Vector;
use crate::rng::{keyed_rng, stream};
use crate::{Error, Result};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// How worker 0..n-1 initialize their common starting point.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum InitKind {
    #[default]
    Zeros,
    /// Start at the exact minimizer (quadratic only).
    Minimizer,
    Random { scale: f64 },
}

/// Smoothness and gradient-moment constants of an instance.
///
/// `l` is exact for the quadratic, a global bound for the logistic, and a
/// sampled estimate for the MLP. `v1` and `v2` are Monte-Carlo estimates at
/// the instance's reference region, never certified bounds.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ProblemConstants {
    pub l: f64,
    pub v1_estimate: f64,
    pub v2_estimate: f64,
}

/// A problem instance: per-worker objectives F_i with F = mean_i F_i.
#[derive(Clone, Debug)]
pub enum Problem {
    Quadratic(Quadratic),
    Logistic(Logistic),
    Mlp(Mlp),
}

impl Problem {
    pub fn workers(&self) -> usize {
        match self {
            Problem::Quadratic(p) => p.workers(),
            Problem::Logistic(p) => p.workers(),
            Problem::Mlp(p) => p.workers(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Problem::Quadratic(p) => p.dim(),
            Problem::Logistic(p) => p.dim(),
            Problem::Mlp(p) => p.dim(),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Problem::Quadratic(_) => "quadratic",
            Problem::Logistic(_) => "logistic",
            Problem::Mlp(_) => "mlp",
        }
    }

    fn check_dim(&self, x: &Vector) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        Ok(())
    }

    fn check_worker(&self, worker: usize) -> Result<()> {
        if worker >= self.workers() {
            return Err(Error::WorkerOutOfRange { worker, n: self.workers() });
        }
        Ok(())
    }

    /// Exact global objective F(x).
    pub fn loss(&self, x: &Vector) -> Result<f64> {
        self.check_dim(x)?;
        let n = self.workers();
        Ok((0..n).map(|i| self.worker_loss_unchecked(i, x)).sum::<f64>() / n as f64)
    }

    /// Per-worker objective F_i(x).
    pub fn worker_loss(&self, worker: usize, x: &Vector) -> Result<f64> {
        self.check_worker(worker)?;
        self.check_dim(x)?;
        Ok(self.worker_loss_unchecked(worker, x))
    }

    fn worker_loss_unchecked(&self, worker: usize, x: &Vector) -> f64 {
        match self {
            Problem::Quadratic(p) => p.worker_loss(worker, x),
            Problem::Logistic(p) => p.worker_loss(worker, x),
            Problem::Mlp(p) => p.worker_loss(worker, x),
        }
    }

    /// Exact gradient of F at x.
    pub fn full_gradient(&self, x: &Vector) -> Result<Vector> {
        self.check_dim(x)?;
        let n = self.workers();
        let mut g = Vector::zeros(self.dim());
        for i in 0..n {
            g.add_assign(&self.worker_gradient_unchecked(i, x));
        }
        g.scale_assign(1.0 / n as f64);
        Ok(g)
    }

    /// Exact gradient of F_i at x.
    pub fn worker_gradient(&self, worker: usize, x: &Vector) -> Result<Vector> {
        self.check_worker(worker)?;
        self.check_dim(x)?;
        Ok(self.worker_gradient_unchecked(worker, x))
    }

    fn worker_gradient_unchecked(&self, worker: usize, x: &Vector) -> Vector {
        match self {
            Problem::Quadratic(p) => p.worker_gradient(worker, x),
            Problem::Logistic(p) => p.worker_gradient(worker, x),
            Problem::Mlp(p) => p.worker_gradient(worker, x),
        }
    }

    /// Stochastic gradient oracle: unbiased for F_i, deterministic for a
    /// fixed (worker, x, round, seed) tuple.
    pub fn stochastic_gradient(
        &self,
        worker: usize,
        x: &Vector,
        round: u64,
        seed: u64,
    ) -> Result<Vector> {
        self.check_worker(worker)?;
        self.check_dim(x)?;
        Ok(match self {
            Problem::Quadratic(p) => p.stochastic_gradient(worker, x, round, seed),
            Problem::Logistic(p) => p.stochastic_gradient(worker, x, round, seed),
            Problem::Mlp(p) => p.stochastic_gradient(worker, x, round, seed),
        })
    }

    /// Known minimizer, where one exists in closed form.
    pub fn minimizer(&self) -> Option<Vector> {
        match self {
            Problem::Quadratic(p) => Some(p.minimizer()),
            _ => None,
        }
    }

    pub fn init_kind(&self) -> InitKind {
        match self {
            Problem::Quadratic(p) => p.init_kind(),
            Problem::Logistic(p) => p.init_kind(),
            Problem::Mlp(p) => p.init_kind(),
        }
    }

    /// The shared starting point x_0 for a run with the given seed.
    pub fn initial_point(&self, run_seed: u64) -> Vector {
        let seed = match self {
            Problem::Quadratic(p) => p.instance_seed(),
            Problem::Logistic(p) => p.instance_seed(),
            Problem::Mlp(p) => p.instance_seed(),
        };
        match self.init_kind() {
            InitKind::Zeros => Vector::zeros(self.dim()),
            InitKind::Minimizer => self
                .minimizer()
                .expect("minimizer init requires a problem with a closed-form minimizer"),
            InitKind::Random { scale } => {
                let mut rng = keyed_rng(&[seed, stream::INIT_POINT, run_seed]);
                Vector::from_vec(
                    (0..self.dim()).map(|_| scale * sample_normal(&mut rng)).collect(),
                )
            }
        }
    }

    /// Smoothness constant and Monte-Carlo gradient-moment estimates.
    ///
    /// For the quadratic, L is recovered by power iteration; the exact
    /// stored spectrum is the independent cross-check in tests.
    pub fn constants(&self) -> ProblemConstants {
        let l = match self {
            Problem::Quadratic(p) => p.smoothness_power_iteration(),
            Problem::Logistic(p) => p.smoothness(),
            Problem::Mlp(p) => p.smoothness_estimate(),
        };
        let (v1, v1p) = self.gradient_moments();
        ProblemConstants { l, v1_estimate: v1, v2_estimate: v1 + v1p }
    }

    /// Monte-Carlo (V1, V1') at the reference point: noise second moment and
    /// the largest per-worker mean-gradient norm.
    fn gradient_moments(&self) -> (f64, f64) {
        let x_ref = self.reference_point();
        let trials = 400;
        let mut v1 = 0.0;
        let mut v1p: f64 = 0.0;
        for i in 0..self.workers() {
            let exact = self.worker_gradient_unchecked(i, &x_ref);
            let mut acc = 0.0;
            for t in 0..trials {
                let g = self
                    .stochastic_gradient(i, &x_ref, t + 1, 0x5eed)
                    .expect("reference point has valid dimensions");
                acc += crate::numerics::norm_sq(&g.sub(&exact));
            }
            v1 += acc / trials as f64;
            v1p = v1p.max(crate::numerics::norm_sq(&exact));
        }
        (v1 / self.workers() as f64, v1p)
    }

    /// Center of the region where sampled constants are calibrated.
    pub fn reference_point(&self) -> Vector {
        self.initial_point(0)
    }

    /// Seeded draw from the reference region, for smoothness-style probes.
    pub fn reference_region_point(&self, probe: u64) -> Vector {
        let seed = match self {
            Problem::Quadratic(p) => p.instance_seed(),
            Problem::Logistic(p) => p.instance_seed(),
            Problem::Mlp(p) => p.instance_seed(),
        };
        let mut rng = keyed_rng(&[seed, stream::PROBLEM_DATA, 0x7e9, probe]);
        let scale = self.reference_region_scale();
        let base = self.reference_point();
        let mut v = Vec::with_capacity(self.dim());
        for j in 0..self.dim() {
            v.push(base[j] + scale * sample_normal(&mut rng));
        }
        Vector::from_vec(v)
    }

    fn reference_region_scale(&self) -> f64 {
        match self {
            // global smoothness: any probe region is valid
            Problem::Quadratic(_) | Problem::Logistic(_) => 2.0,
            Problem::Mlp(p) => p.reference_scale(),
        }
    }
}

pub(crate) fn sample_normal<R: rand::Rng>(rng: &mut R) -> f64 {
    <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)
}

/// Power iteration for the largest eigenvalue of a symmetric PSD operator.
///
/// Runs to a 1e-8 relative tolerance between successive Rayleigh quotients.
pub(crate) fn power_iteration(
    dim: usize,
    seed: u64,
    mut apply: impl FnMut(&Vector) -> Vector,
) -> f64 {
    let mut rng = keyed_rng(&[seed, stream::PROBLEM_DATA, 0x90]);
    let mut v = Vector::from_vec((0..dim).map(|_| sample_normal(&mut rng)).collect());
    let norm = crate::numerics::norm_sq(&v).sqrt();
    v.scale_assign(1.0 / norm);
    let mut lambda = 0.0;
    for _ in 0..20_000 {
        let av = apply(&v);
        let next = v.dot(&av);
        let n = crate::numerics::norm_sq(&av).sqrt();
        if n == 0.0 {
            return 0.0;
        }
        v = av.scaled(1.0 / n);
        if (next - lambda).abs() <= 1e-8 * next.abs().max(1e-300) {
            return next;
        }
        lambda = next;
    }
    lambda
}
