//! Synthetic logistic regression with per-worker data shards.
//!
//! Each worker holds its own feature/label set drawn around a worker-specific
//! feature shift, so the local distributions differ. Labels come from one
//! shared ground-truth separator plus margin noise. The smoothness constant
//! is the classic global bound lambda_max(A_i^T A_i) / (4 m).

use super::{power_iteration, sample_normal, InitKind};
use crate::numerics::Vector;
use crate::rng::{keyed_rng, stream};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticConfig {
    pub n: usize,
    pub d: usize,
    pub samples_per_worker: usize,
    /// Minibatch size of the stochastic oracle (with replacement).
    pub batch: usize,
    /// Scale of the per-worker feature mean shift.
    pub shift_scale: f64,
    pub seed: u64,
    #[serde(default)]
    pub init: InitKind,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        LogisticConfig {
            n: 8,
            d: 20,
            samples_per_worker: 128,
            batch: 8,
            shift_scale: 0.5,
            seed: 1,
            init: InitKind::Zeros,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Logistic {
    d: usize,
    batch: usize,
    /// features[i][s] is sample s on worker i; labels in {-1, +1}.
    features: Vec<Vec<Vector>>,
    labels: Vec<Vec<f64>>,
    seed: u64,
    init: InitKind,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// ln(1 + e^z) without overflow.
fn log1p_exp(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

impl Logistic {
    pub fn new(cfg: &LogisticConfig) -> Result<Self> {
        let mut violations = Vec::new();
        if cfg.n == 0 || cfg.d == 0 {
            violations.push("logistic: n and d must be >= 1".into());
        }
        if cfg.samples_per_worker == 0 {
            violations.push("logistic: samples_per_worker must be >= 1".into());
        }
        if cfg.batch == 0 || cfg.batch > cfg.samples_per_worker {
            violations.push(format!(
                "logistic: batch must be in [1, samples_per_worker], got {}",
                cfg.batch
            ));
        }
        if !violations.is_empty() {
            return Err(Error::Config(violations));
        }

        let mut rng = keyed_rng(&[cfg.seed, stream::PROBLEM_DATA, 10]);
        let separator =
            Vector::from_vec((0..cfg.d).map(|_| sample_normal(&mut rng)).collect());

        let mut features = Vec::with_capacity(cfg.n);
        let mut labels = Vec::with_capacity(cfg.n);
        for i in 0..cfg.n {
            let mut rng = keyed_rng(&[cfg.seed, stream::PROBLEM_DATA, 11, i as u64]);
            let shift: Vec<f64> =
                (0..cfg.d).map(|_| cfg.shift_scale * sample_normal(&mut rng)).collect();
            let mut fi = Vec::with_capacity(cfg.samples_per_worker);
            let mut li = Vec::with_capacity(cfg.samples_per_worker);
            for _ in 0..cfg.samples_per_worker {
                let a = Vector::from_vec(
                    (0..cfg.d).map(|j| shift[j] + sample_normal(&mut rng)).collect(),
                );
                let margin = a.dot(&separator) + 0.5 * sample_normal(&mut rng);
                li.push(if margin >= 0.0 { 1.0 } else { -1.0 });
                fi.push(a);
            }
            features.push(fi);
            labels.push(li);
        }

        Ok(Logistic { d: cfg.d, batch: cfg.batch, features, labels, seed: cfg.seed, init: cfg.init })
    }

    pub fn workers(&self) -> usize {
        self.features.len()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn instance_seed(&self) -> u64 {
        self.seed
    }

    pub fn init_kind(&self) -> InitKind {
        self.init
    }

    pub fn worker_loss(&self, worker: usize, x: &Vector) -> f64 {
        let m = self.features[worker].len();
        let mut acc = 0.0;
        for (a, &y) in self.features[worker].iter().zip(&self.labels[worker]) {
            acc += log1p_exp(-y * a.dot(x));
        }
        acc / m as f64
    }

    pub fn worker_gradient(&self, worker: usize, x: &Vector) -> Vector {
        let m = self.features[worker].len();
        let mut g = Vector::zeros(self.d);
        for (a, &y) in self.features[worker].iter().zip(&self.labels[worker]) {
            let w = -y * sigmoid(-y * a.dot(x));
            g.axpy_assign(w, a);
        }
        g.scale_assign(1.0 / m as f64);
        g
    }

    pub fn stochastic_gradient(&self, worker: usize, x: &Vector, round: u64, seed: u64) -> Vector {
        let m = self.features[worker].len();
        let mut rng = keyed_rng(&[seed, stream::SAMPLE_SELECT, worker as u64, round]);
        let mut g = Vector::zeros(self.d);
        for _ in 0..self.batch {
            let s = rand::Rng::gen_range(&mut rng, 0..m);
            let a = &self.features[worker][s];
            let y = self.labels[worker][s];
            let w = -y * sigmoid(-y * a.dot(x));
            g.axpy_assign(w, a);
        }
        g.scale_assign(1.0 / self.batch as f64);
        g
    }

    /// Global smoothness bound: max_i lambda_max((1/4m) sum_s a_s a_s^T).
    pub fn smoothness(&self) -> f64 {
        (0..self.workers())
            .map(|i| {
                let m = self.features[i].len() as f64;
                power_iteration(self.d, self.seed ^ (0x1000 + i as u64), |v| {
                    let mut out = Vector::zeros(self.d);
                    for a in &self.features[i] {
                        out.axpy_assign(a.dot(v), a);
                    }
                    out.scale_assign(1.0 / (4.0 * m));
                    out
                })
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::norm_sq;
    use crate::problems::Problem;

    fn small() -> Problem {
        Problem::Logistic(
            Logistic::new(&LogisticConfig {
                n: 3,
                d: 8,
                samples_per_worker: 40,
                batch: 5,
                seed: 13,
                ..LogisticConfig::default()
            })
            .unwrap(),
        )
    }

    #[test]
    fn zero_weights_loss_is_ln2() {
        let p = small();
        let x = Vector::zeros(8);
        assert!((p.loss(&x).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn minibatch_oracle_is_unbiased() {
        let p = small();
        let x = p.reference_region_point(3);
        let exact = p.worker_gradient(2, &x).unwrap();
        let trials = 10_000u64;
        let mut mean = Vector::zeros(8);
        let mut sq = [0.0; 8];
        for t in 1..=trials {
            let g = p.stochastic_gradient(2, &x, t, 99).unwrap();
            for j in 0..8 {
                sq[j] += (g[j] - exact[j]) * (g[j] - exact[j]);
            }
            mean.add_assign(&g);
        }
        mean.scale_assign(1.0 / trials as f64);
        for j in 0..8 {
            let se = (sq[j] / trials as f64 / trials as f64).sqrt();
            assert!(
                (mean[j] - exact[j]).abs() <= 4.0 * se + 1e-12,
                "coord {j}: diff {} vs se {se}",
                (mean[j] - exact[j]).abs()
            );
        }
    }

    #[test]
    fn smoothness_bounds_observed_curvature() {
        let p = small();
        let l = p.constants().l;
        assert!(l > 0.0);
        for probe in 0..50 {
            let x = p.reference_region_point(2 * probe);
            let y = p.reference_region_point(2 * probe + 1);
            for i in 0..p.workers() {
                let gx = p.worker_gradient(i, &x).unwrap();
                let gy = p.worker_gradient(i, &y).unwrap();
                let lhs = norm_sq(&gy.sub(&gx)).sqrt();
                let rhs = l * norm_sq(&y.sub(&x)).sqrt();
                assert!(lhs <= rhs * (1.0 + 1e-9), "probe {probe}, worker {i}");
            }
        }
    }
}
