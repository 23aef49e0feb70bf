//! Tiny one-hidden-layer tanh network on synthetic two-cluster data.
//!
//! The genuinely non-convex instance. One shared dataset is generated from
//! two Gaussian clusters labeled +1/-1 and dealt round-robin into per-worker
//! shards. Parameters pack as [W1 (h x p, row-major) | b1 | w2 | b2] and
//! the loss is mean squared error of the linear output unit.
//!
//! Squared loss over tanh features is not globally smooth, so the stored
//! constant is calibrated on the reference region by probing gradient
//! differences and padding the largest observed ratio.

use super::{sample_normal, InitKind};
use crate::numerics::{norm_sq, Vector};
use crate::rng::{keyed_rng, stream};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub n: usize,
    pub input_dim: usize,
    pub hidden: usize,
    pub samples_per_worker: usize,
    pub batch: usize,
    /// Separation of the two cluster means along the first axis.
    pub cluster_sep: f64,
    pub seed: u64,
    #[serde(default)]
    pub init: InitKind,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            n: 8,
            input_dim: 4,
            hidden: 8,
            samples_per_worker: 64,
            batch: 8,
            cluster_sep: 2.0,
            seed: 1,
            init: InitKind::Random { scale: 0.5 },
        }
    }
}

#[derive(Clone, Debug)]
pub struct Mlp {
    input_dim: usize,
    hidden: usize,
    batch: usize,
    shards: Vec<Vec<(Vector, f64)>>,
    seed: u64,
    init: InitKind,
    reference_scale: f64,
}

impl Mlp {
    pub fn new(cfg: &MlpConfig) -> Result<Self> {
        let mut violations = Vec::new();
        if cfg.n == 0 || cfg.input_dim == 0 || cfg.hidden == 0 {
            violations.push("mlp: n, input_dim and hidden must be >= 1".into());
        }
        if cfg.samples_per_worker == 0 {
            violations.push("mlp: samples_per_worker must be >= 1".into());
        }
        if cfg.batch == 0 || cfg.batch > cfg.samples_per_worker {
            violations.push(format!("mlp: batch must be in [1, samples_per_worker], got {}", cfg.batch));
        }
        if !violations.is_empty() {
            return Err(Error::Config(violations));
        }

        // one shared dataset, dealt round-robin into shards
        let total = cfg.n * cfg.samples_per_worker;
        let mut rng = keyed_rng(&[cfg.seed, stream::PROBLEM_DATA, 20]);
        let mut shards = vec![Vec::with_capacity(cfg.samples_per_worker); cfg.n];
        for s in 0..total {
            // alternate within each round-robin shard so every worker sees both classes
            let label = if (s / cfg.n).is_multiple_of(2) { 1.0 } else { -1.0 };
            let mut a: Vec<f64> = (0..cfg.input_dim).map(|_| sample_normal(&mut rng)).collect();
            a[0] += 0.5 * cfg.cluster_sep * label;
            shards[s % cfg.n].push((Vector::from_vec(a), label));
        }

        let reference_scale = match cfg.init {
            InitKind::Random { scale } => scale,
            _ => 0.5,
        };

        Ok(Mlp {
            input_dim: cfg.input_dim,
            hidden: cfg.hidden,
            batch: cfg.batch,
            shards,
            seed: cfg.seed,
            init: cfg.init,
            reference_scale,
        })
    }

    pub fn workers(&self) -> usize {
        self.shards.len()
    }

    pub fn dim(&self) -> usize {
        self.hidden * self.input_dim + self.hidden + self.hidden + 1
    }

    pub fn instance_seed(&self) -> u64 {
        self.seed
    }

    pub fn init_kind(&self) -> InitKind {
        self.init
    }

    pub fn reference_scale(&self) -> f64 {
        self.reference_scale
    }

    fn unpack<'a>(&self, x: &'a Vector) -> (&'a [f64], &'a [f64], &'a [f64], f64) {
        let (p, h) = (self.input_dim, self.hidden);
        let s = x.as_slice();
        let w1 = &s[0..h * p];
        let b1 = &s[h * p..h * p + h];
        let w2 = &s[h * p + h..h * p + 2 * h];
        let b2 = s[h * p + 2 * h];
        (w1, b1, w2, b2)
    }

    fn forward(&self, x: &Vector, a: &Vector) -> (Vec<f64>, f64) {
        let (w1, b1, w2, b2) = self.unpack(x);
        let (p, h) = (self.input_dim, self.hidden);
        let mut hid = Vec::with_capacity(h);
        for r in 0..h {
            let mut z = b1[r];
            for c in 0..p {
                z += w1[r * p + c] * a[c];
            }
            hid.push(z.tanh());
        }
        let mut out = b2;
        for r in 0..h {
            out += w2[r] * hid[r];
        }
        (hid, out)
    }

    fn sample_loss(&self, x: &Vector, a: &Vector, y: f64) -> f64 {
        let (_, out) = self.forward(x, a);
        0.5 * (out - y) * (out - y)
    }

    /// Backprop gradient of one sample, accumulated into `g` with weight `w`.
    fn accumulate_sample_gradient(&self, x: &Vector, a: &Vector, y: f64, w: f64, g: &mut Vector) {
        let (_, b1_off, w2_off, b2_off) = self.offsets();
        let (_w1, _b1, w2, _b2) = self.unpack(x);
        let (p, h) = (self.input_dim, self.hidden);
        let (hid, out) = self.forward(x, a);
        let dout = w * (out - y);
        for r in 0..h {
            g[w2_off + r] += dout * hid[r];
        }
        g[b2_off] += dout;
        for r in 0..h {
            let dz = dout * w2[r] * (1.0 - hid[r] * hid[r]);
            g[b1_off + r] += dz;
            for c in 0..p {
                g[r * p + c] += dz * a[c];
            }
        }
    }

    fn offsets(&self) -> (usize, usize, usize, usize) {
        let (p, h) = (self.input_dim, self.hidden);
        (0, h * p, h * p + h, h * p + 2 * h)
    }

    pub fn worker_loss(&self, worker: usize, x: &Vector) -> f64 {
        let shard = &self.shards[worker];
        shard.iter().map(|(a, y)| self.sample_loss(x, a, *y)).sum::<f64>() / shard.len() as f64
    }

    pub fn worker_gradient(&self, worker: usize, x: &Vector) -> Vector {
        let shard = &self.shards[worker];
        let mut g = Vector::zeros(self.dim());
        let w = 1.0 / shard.len() as f64;
        for (a, y) in shard {
            self.accumulate_sample_gradient(x, a, *y, w, &mut g);
        }
        g
    }

    pub fn stochastic_gradient(&self, worker: usize, x: &Vector, round: u64, seed: u64) -> Vector {
        let shard = &self.shards[worker];
        let mut rng = keyed_rng(&[seed, stream::SAMPLE_SELECT, worker as u64, round]);
        let mut g = Vector::zeros(self.dim());
        let w = 1.0 / self.batch as f64;
        for _ in 0..self.batch {
            let s = rand::Rng::gen_range(&mut rng, 0..shard.len());
            let (a, y) = &shard[s];
            self.accumulate_sample_gradient(x, a, *y, w, &mut g);
        }
        g
    }

    /// Smoothness estimate on the reference region: the largest gradient
    /// difference ratio over short and long probe pairs, padded by 1.5x.
    pub fn smoothness_estimate(&self) -> f64 {
        let d = self.dim();
        let mut worst: f64 = 0.0;
        for probe in 0..120u64 {
            let mut rng = keyed_rng(&[self.seed, stream::PROBLEM_DATA, 21, probe]);
            let x = Vector::from_vec(
                (0..d).map(|_| self.reference_scale * sample_normal(&mut rng)).collect(),
            );
            // alternate short (local curvature) and long (chord) probes
            let step = if probe % 2 == 0 { 0.05 } else { 1.0 };
            let dir = Vector::from_vec((0..d).map(|_| sample_normal(&mut rng)).collect());
            let y = {
                let mut y = x.clone();
                y.axpy_assign(step / norm_sq(&dir).sqrt(), &dir);
                y
            };
            for i in 0..self.workers() {
                let gx = self.worker_gradient(i, &x);
                let gy = self.worker_gradient(i, &y);
                let num = norm_sq(&gy.sub(&gx)).sqrt();
                let den = norm_sq(&y.sub(&x)).sqrt();
                if den > 0.0 {
                    worst = worst.max(num / den);
                }
            }
        }
        1.5 * worst
    }
}
