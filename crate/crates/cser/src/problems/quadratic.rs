//! Heterogeneous quadratic objectives with exact constants.
//!
//! Worker i owns F_i(x) = 1/2 (x - mu_i)^T A_i (x - mu_i) with
//! A_i = Q diag(lambda_i) Q^T for a Householder reflection Q = I - 2uu^T
//! shared by all workers. Sharing Q keeps every oracle O(d): matrix-vector
//! products need two reflections and one diagonal scale, and the global
//! minimizer is available in closed form through the same change of basis.
//! Heterogeneity comes from per-worker spectra and centers.

use super::{power_iteration, sample_normal, InitKind};
use crate::numerics::{norm_sq, Vector};
use crate::rng::{keyed_rng, stream};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadraticConfig {
    pub n: usize,
    pub d: usize,
    /// Eigenvalue range of each A_i; the top eigenvalue is pinned to
    /// `lambda_max` on every worker so the smoothness constant is exact.
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// Scale of the per-worker center spread (E|mu_i|^2 = spread^2).
    pub center_spread: f64,
    /// Std-dev of the injected per-coordinate gradient noise.
    pub noise_scale: f64,
    pub seed: u64,
    #[serde(default)]
    pub init: InitKind,
}

impl Default for QuadraticConfig {
    fn default() -> Self {
        QuadraticConfig {
            n: 8,
            d: 1000,
            lambda_min: 0.5,
            lambda_max: 5.0,
            center_spread: 2.0,
            noise_scale: 0.5,
            seed: 1,
            init: InitKind::Zeros,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Quadratic {
    d: usize,
    /// Householder direction; zero vector means Q = I (diagonal instances).
    householder: Vector,
    spectra: Vec<Vector>,
    centers: Vec<Vector>,
    noise_scale: f64,
    seed: u64,
    init: InitKind,
}

impl Quadratic {
    pub fn new(cfg: &QuadraticConfig) -> Result<Self> {
        let mut violations = Vec::new();
        if cfg.n == 0 {
            violations.push("quadratic: n must be >= 1".into());
        }
        if cfg.d == 0 {
            violations.push("quadratic: d must be >= 1".into());
        }
        if !(cfg.lambda_min > 0.0 && cfg.lambda_min <= cfg.lambda_max) {
            violations.push(format!(
                "quadratic: need 0 < lambda_min <= lambda_max, got [{}, {}]",
                cfg.lambda_min, cfg.lambda_max
            ));
        }
        if cfg.noise_scale < 0.0 {
            violations.push("quadratic: noise_scale must be >= 0".into());
        }
        if !violations.is_empty() {
            return Err(Error::Config(violations));
        }

        let mut rng = keyed_rng(&[cfg.seed, stream::PROBLEM_DATA, 1]);
        let mut u = Vector::from_vec((0..cfg.d).map(|_| sample_normal(&mut rng)).collect());
        let norm = norm_sq(&u).sqrt();
        u.scale_assign(1.0 / norm);

        let mut spectra = Vec::with_capacity(cfg.n);
        let mut centers = Vec::with_capacity(cfg.n);
        for i in 0..cfg.n {
            let mut rng = keyed_rng(&[cfg.seed, stream::PROBLEM_DATA, 2, i as u64]);
            let mut lambda = Vec::with_capacity(cfg.d);
            // pin the top eigenvalue; the rest stay below 0.9 * lambda_max so
            // power iteration sees a clear spectral gap
            lambda.push(cfg.lambda_max);
            let upper = cfg.lambda_min.max(0.9 * cfg.lambda_max);
            for _ in 1..cfg.d {
                let t: f64 = rand::Rng::gen(&mut rng);
                lambda.push(cfg.lambda_min + t * (upper - cfg.lambda_min));
            }
            spectra.push(Vector::from_vec(lambda));

            let mut rng = keyed_rng(&[cfg.seed, stream::PROBLEM_DATA, 3, i as u64]);
            let scale = cfg.center_spread / (cfg.d as f64).sqrt();
            centers.push(Vector::from_vec(
                (0..cfg.d).map(|_| scale * sample_normal(&mut rng)).collect(),
            ));
        }

        Ok(Quadratic {
            d: cfg.d,
            householder: u,
            spectra,
            centers,
            noise_scale: cfg.noise_scale,
            seed: cfg.seed,
            init: cfg.init,
        })
    }

    /// Diagonal instance with explicit per-worker spectra and centers.
    pub fn diagonal(
        spectra: Vec<Vec<f64>>,
        centers: Vec<Vec<f64>>,
        noise_scale: f64,
        seed: u64,
    ) -> Result<Self> {
        if spectra.is_empty() || spectra.len() != centers.len() {
            return Err(Error::Config(vec![
                "quadratic: spectra and centers must be non-empty and equal-length".into(),
            ]));
        }
        let d = spectra[0].len();
        if spectra.iter().any(|s| s.len() != d) || centers.iter().any(|c| c.len() != d) {
            return Err(Error::Config(vec![
                "quadratic: all spectra and centers must share one dimension".into(),
            ]));
        }
        Ok(Quadratic {
            d,
            householder: Vector::zeros(d),
            spectra: spectra.into_iter().map(Vector::from_vec).collect(),
            centers: centers.into_iter().map(Vector::from_vec).collect(),
            noise_scale,
            seed,
            init: InitKind::Zeros,
        })
    }

    pub fn workers(&self) -> usize {
        self.spectra.len()
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

    pub fn noise_scale(&self) -> f64 {
        self.noise_scale
    }

    /// Q^T v = v - 2 u (u . v); Q is a symmetric involution.
    fn reflect(&self, v: &Vector) -> Vector {
        let t = 2.0 * self.householder.dot(v);
        let mut out = v.clone();
        out.axpy_assign(-t, &self.householder);
        out
    }

    fn apply_a(&self, worker: usize, v: &Vector) -> Vector {
        let mut w = self.reflect(v);
        for j in 0..self.d {
            w[j] *= self.spectra[worker][j];
        }
        self.reflect(&w)
    }

    pub fn worker_loss(&self, worker: usize, x: &Vector) -> f64 {
        let w = self.reflect(&x.sub(&self.centers[worker]));
        0.5 * (0..self.d).map(|j| self.spectra[worker][j] * w[j] * w[j]).sum::<f64>()
    }

    pub fn worker_gradient(&self, worker: usize, x: &Vector) -> Vector {
        self.apply_a(worker, &x.sub(&self.centers[worker]))
    }

    pub fn stochastic_gradient(&self, worker: usize, x: &Vector, round: u64, seed: u64) -> Vector {
        let mut g = self.worker_gradient(worker, x);
        if self.noise_scale > 0.0 {
            let mut rng = keyed_rng(&[seed, stream::GRADIENT_NOISE, worker as u64, round]);
            for j in 0..self.d {
                g[j] += self.noise_scale * sample_normal(&mut rng);
            }
        }
        g
    }

    /// Exact smoothness constant: the largest stored eigenvalue.
    pub fn smoothness(&self) -> f64 {
        self.spectra
            .iter()
            .flat_map(|s| s.iter())
            .fold(f64::NEG_INFINITY, |m, &v| m.max(v))
    }

    /// Largest eigenvalue of A_i recovered by power iteration, as an
    /// independent route to the smoothness constant.
    pub fn smoothness_power_iteration(&self) -> f64 {
        (0..self.workers())
            .map(|i| power_iteration(self.d, self.seed ^ (i as u64), |v| self.apply_a(i, v)))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Closed-form global minimizer x_* = (sum A_i)^{-1} sum A_i mu_i.
    pub fn minimizer(&self) -> Vector {
        let n = self.workers();
        let mut num = Vector::zeros(self.d);
        let mut den = Vector::zeros(self.d);
        for i in 0..n {
            let w = self.reflect(&self.centers[i]);
            for j in 0..self.d {
                num[j] += self.spectra[i][j] * w[j];
                den[j] += self.spectra[i][j];
            }
        }
        for j in 0..self.d {
            num[j] /= den[j];
        }
        self.reflect(&num)
    }

    pub fn centers(&self) -> &[Vector] {
        &self.centers
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::norm_sq;
    use crate::problems::Problem;

    fn single_identity() -> Problem {
        Problem::Quadratic(
            Quadratic::diagonal(vec![vec![1.0, 1.0]], vec![vec![0.0, 0.0]], 0.0, 0).unwrap(),
        )
    }

    #[test]
    fn half_norm_sq_loss() {
        let p = single_identity();
        let x = Vector::from_vec(vec![3.0, 4.0]);
        assert_eq!(p.loss(&x).unwrap(), 12.5);
        assert_eq!(p.full_gradient(&x).unwrap(), x);
    }

    #[test]
    fn known_spectrum_smoothness() {
        let q = Quadratic::diagonal(
            vec![(1..=5).map(|v| v as f64).collect()],
            vec![vec![0.0; 5]],
            0.0,
            0,
        )
        .unwrap();
        assert_eq!(q.smoothness(), 5.0);
        assert!((q.smoothness_power_iteration() - 5.0).abs() < 1e-6);

        let ident = Quadratic::diagonal(vec![vec![1.0; 4]; 3], vec![vec![0.0; 4]; 3], 0.0, 0).unwrap();
        assert_eq!(ident.smoothness(), 1.0);
        assert!((ident.smoothness_power_iteration() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn minimizer_has_zero_gradient() {
        let cfg = QuadraticConfig { n: 4, d: 64, seed: 7, ..QuadraticConfig::default() };
        let p = Problem::Quadratic(Quadratic::new(&cfg).unwrap());
        let star = p.minimizer().unwrap();
        let g = p.full_gradient(&star).unwrap();
        assert!(norm_sq(&g).sqrt() <= 1e-10, "|grad| = {}", norm_sq(&g).sqrt());
        // and it is a minimum value among probes
        let f_star = p.loss(&star).unwrap();
        for probe in 0..5 {
            let y = p.reference_region_point(probe);
            assert!(p.loss(&y).unwrap() >= f_star);
        }
    }

    #[test]
    fn power_iteration_matches_construction() {
        let cfg = QuadraticConfig { n: 3, d: 128, seed: 11, ..QuadraticConfig::default() };
        let q = Quadratic::new(&cfg).unwrap();
        let exact = q.smoothness();
        assert_eq!(exact, cfg.lambda_max);
        assert!((q.smoothness_power_iteration() - exact).abs() <= 1e-6 * exact);
    }

    #[test]
    fn centers_are_distinct_across_workers() {
        let cfg = QuadraticConfig { n: 6, d: 32, seed: 3, ..QuadraticConfig::default() };
        let q = Quadratic::new(&cfg).unwrap();
        for i in 0..q.workers() {
            for j in (i + 1)..q.workers() {
                assert!(q.centers()[i].max_abs_diff(&q.centers()[j]) > 0.0);
            }
        }
    }

    #[test]
    fn noiseless_oracle_is_exact() {
        let cfg = QuadraticConfig { n: 2, d: 16, noise_scale: 0.0, seed: 5, ..QuadraticConfig::default() };
        let p = Problem::Quadratic(Quadratic::new(&cfg).unwrap());
        let x = p.reference_region_point(1);
        let g = p.stochastic_gradient(1, &x, 9, 123).unwrap();
        assert_eq!(g, p.worker_gradient(1, &x).unwrap());
    }

    #[test]
    fn noise_is_unbiased_with_matching_variance() {
        let cfg = QuadraticConfig { n: 2, d: 32, noise_scale: 0.7, seed: 5, ..QuadraticConfig::default() };
        let p = Problem::Quadratic(Quadratic::new(&cfg).unwrap());
        let x = p.reference_region_point(0);
        let exact = p.worker_gradient(0, &x).unwrap();
        let trials = 10_000u64;
        let mut mean = Vector::zeros(32);
        let mut second = 0.0;
        for t in 1..=trials {
            let g = p.stochastic_gradient(0, &x, t, 42).unwrap();
            second += norm_sq(&g.sub(&exact));
            mean.add_assign(&g);
        }
        mean.scale_assign(1.0 / trials as f64);
        // mean within 4 standard errors coordinate-wise
        let se = 0.7 / (trials as f64).sqrt();
        for j in 0..32 {
            assert!((mean[j] - exact[j]).abs() <= 4.0 * se, "coord {j}");
        }
        // per-coordinate variance within 10%
        let var = second / (trials as f64 * 32.0);
        assert!((var - 0.49).abs() <= 0.049, "var = {var}");
    }

    #[test]
    fn constants_order_and_power_iteration_route() {
        let cfg = QuadraticConfig { n: 3, d: 48, noise_scale: 0.4, seed: 21, ..QuadraticConfig::default() };
        let q = Quadratic::new(&cfg).unwrap();
        let exact = q.smoothness();
        let p = Problem::Quadratic(q);
        let c = p.constants();
        // L via power iteration agrees with the stored spectrum
        assert!((c.l - exact).abs() <= 1e-6 * exact);
        // V2 = V1 + V1' >= V1 by construction
        assert!(c.v2_estimate >= c.v1_estimate);
        assert!(c.v1_estimate > 0.0);
    }

    #[test]
    fn worker_bounds_checked() {
        let p = single_identity();
        let x = Vector::zeros(2);
        assert!(p.stochastic_gradient(1, &x, 1, 0).is_err());
        assert!(p.worker_gradient(0, &Vector::zeros(3)).is_err());
    }
}
