//! Dense vector arithmetic and block partitioning shared by all modules.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Flat dense container for model parameters, gradients and residuals.
///
/// Length is fixed at construction; all arithmetic requires equal lengths.
/// Non-finite entries are never silently produced or hidden — callers probe
/// with [`Vector::all_finite`] where divergence matters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn from_vec(values: Vec<f64>) -> Self {
        Vector(values)
    }

    pub fn zeros(d: usize) -> Self {
        Vector(vec![0.0; d])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn all_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn dot(&self, other: &Vector) -> f64 {
        assert_eq!(self.len(), other.len(), "dot: length mismatch");
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn scaled(&self, a: f64) -> Vector {
        Vector(self.0.iter().map(|v| a * v).collect())
    }

    pub fn add(&self, other: &Vector) -> Vector {
        assert_eq!(self.len(), other.len(), "add: length mismatch");
        Vector(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &Vector) -> Vector {
        assert_eq!(self.len(), other.len(), "sub: length mismatch");
        Vector(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn add_assign(&mut self, other: &Vector) {
        assert_eq!(self.len(), other.len(), "add_assign: length mismatch");
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += b;
        }
    }

    pub fn sub_assign(&mut self, other: &Vector) {
        assert_eq!(self.len(), other.len(), "sub_assign: length mismatch");
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a -= b;
        }
    }

    /// `self += a * other`, in place.
    pub fn axpy_assign(&mut self, a: f64, other: &Vector) {
        assert_eq!(self.len(), other.len(), "axpy_assign: length mismatch");
        for (y, x) in self.0.iter_mut().zip(&other.0) {
            *y += a * x;
        }
    }

    pub fn scale_assign(&mut self, a: f64) {
        for v in &mut self.0 {
            *v *= a;
        }
    }

    pub fn linf_norm(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Vector) -> f64 {
        assert_eq!(self.len(), other.len(), "max_abs_diff: length mismatch");
        self.0
            .iter()
            .zip(&other.0)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

impl std::ops::Index<usize> for Vector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl std::ops::IndexMut<usize> for Vector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

/// Returns `a * x + y` elementwise.
pub fn axpy(a: f64, x: &Vector, y: &Vector) -> Result<Vector> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    Ok(Vector(
        x.0.iter().zip(&y.0).map(|(xv, yv)| a * xv + yv).collect(),
    ))
}

/// Squared Euclidean norm.
pub fn norm_sq(x: &Vector) -> f64 {
    x.0.iter().map(|v| v * v).sum()
}

/// Contiguous partition of `[0, d)` into `blocks` blocks whose sizes differ
/// by at most one. The first `d mod blocks` blocks take the extra element.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockPartition {
    d: usize,
    boundaries: Vec<usize>,
}

impl BlockPartition {
    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn num_blocks(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn range(&self, block: usize) -> std::ops::Range<usize> {
        self.boundaries[block]..self.boundaries[block + 1]
    }

    pub fn size(&self, block: usize) -> usize {
        self.boundaries[block + 1] - self.boundaries[block]
    }

    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }
}

/// Partitions dimension `d` into `blocks` contiguous blocks.
pub fn partition(d: usize, blocks: usize) -> Result<BlockPartition> {
    if blocks == 0 || blocks > d {
        return Err(Error::InvalidPartition { d, blocks });
    }
    let base = d / blocks;
    let extra = d % blocks;
    let mut boundaries = Vec::with_capacity(blocks + 1);
    let mut at = 0;
    boundaries.push(0);
    for b in 0..blocks {
        at += base + usize::from(b < extra);
        boundaries.push(at);
    }
    debug_assert_eq!(at, d);
    Ok(BlockPartition { d, boundaries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn axpy_identity_and_inverse() {
        let v = Vector::from_vec(vec![1.5, -2.0, 7.0]);
        let any = Vector::from_vec(vec![9.0, 9.0, 9.0]);
        assert_eq!(axpy(0.0, &any, &v).unwrap(), v);

        let neg = v.scaled(-1.0);
        let zero = axpy(1.0, &v, &neg).unwrap();
        assert_eq!(norm_sq(&zero), 0.0);
    }

    #[test]
    fn axpy_hand_arithmetic() {
        let x = Vector::from_vec(vec![1.0, 2.0]);
        let y = Vector::from_vec(vec![3.0, 4.0]);
        assert_eq!(axpy(2.0, &x, &y).unwrap().as_slice(), &[5.0, 8.0]);
    }

    #[test]
    fn axpy_length_mismatch() {
        let x = Vector::zeros(3);
        let y = Vector::zeros(4);
        assert!(matches!(
            axpy(1.0, &x, &y),
            Err(Error::DimensionMismatch { expected: 3, got: 4 })
        ));
    }

    #[test]
    fn norm_sq_cases() {
        assert_eq!(norm_sq(&Vector::zeros(11)), 0.0);
        assert_eq!(norm_sq(&Vector::from_vec(vec![3.0, 4.0])), 25.0);
        let mut e1 = Vector::zeros(10);
        e1[0] = 1.0;
        assert_eq!(norm_sq(&e1), 1.0);
    }

    #[test]
    fn partition_examples() {
        let p = partition(10, 2).unwrap();
        assert_eq!(p.boundaries(), &[0, 5, 10]);

        let p = partition(10, 10).unwrap();
        assert_eq!(p.num_blocks(), 10);
        assert!((0..10).all(|b| p.size(b) == 1));

        let p = partition(10, 3).unwrap();
        let sizes: Vec<usize> = (0..3).map(|b| p.size(b)).collect();
        assert_eq!(sizes, vec![4, 3, 3]);
    }

    #[test]
    fn partition_rejects_degenerate() {
        assert!(partition(10, 0).is_err());
        assert!(partition(10, 11).is_err());
        assert!(partition(4, 4).is_ok());
    }

    proptest! {
        #[test]
        fn partition_invariants(d in 1usize..10_000, b_frac in 0.0f64..1.0) {
            let blocks = 1 + ((d - 1) as f64 * b_frac) as usize;
            let p = partition(d, blocks).unwrap();
            prop_assert_eq!(p.num_blocks(), blocks);
            // blocks are contiguous, disjoint, and cover [0, d)
            prop_assert_eq!(p.boundaries()[0], 0);
            prop_assert_eq!(*p.boundaries().last().unwrap(), d);
            prop_assert!(p.boundaries().windows(2).all(|w| w[0] < w[1]));
            // sizes differ by at most one
            let min = (0..blocks).map(|b| p.size(b)).min().unwrap();
            let max = (0..blocks).map(|b| p.size(b)).max().unwrap();
            prop_assert!(max - min <= 1);
        }

        #[test]
        fn axpy_self_cancellation_is_exact(vals in proptest::collection::vec(-1e6f64..1e6, 1..64)) {
            let v = Vector::from_vec(vals);
            let r = axpy(-1.0, &v, &v).unwrap();
            prop_assert_eq!(norm_sq(&r), 0.0);
        }

        #[test]
        fn axpy_exact_on_integers(xs in proptest::collection::vec(-1_000_000i64..1_000_000, 1..32),
                                  ys in proptest::collection::vec(-1_000_000i64..1_000_000, 1..32),
                                  a in -1000i64..1000) {
            let n = xs.len().min(ys.len());
            let x = Vector::from_vec(xs[..n].iter().map(|&v| v as f64).collect());
            let y = Vector::from_vec(ys[..n].iter().map(|&v| v as f64).collect());
            let r = axpy(a as f64, &x, &y).unwrap();
            for i in 0..n {
                // products stay far below 2^53, so f64 arithmetic is exact
                prop_assert_eq!(r[i], (a * xs[i] + ys[i]) as f64);
            }
        }
    }
}
