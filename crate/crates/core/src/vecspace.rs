//! Dense and sparse vectors plus the handful of operations the rest of the
//! crate is built on.
//!
//! Every distance in the crate is squared Euclidean. On the unit sphere this
//! orders neighbours exactly as cosine similarity does, since
//! `|a - b|^2 = 2 - 2 a.b` when `|a| = |b| = 1`.

use std::ops::Index;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A dense real vector.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DenseVector<T> {
    values: Vec<T>,
}

impl<T: Scalar> DenseVector<T> {
    pub fn new(values: Vec<T>) -> Self {
        Self { values }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            values: vec![T::zero(); dim],
        }
    }

    pub fn from_f64(values: &[f64]) -> Self {
        Self::new(values.iter().map(|&x| T::from_f64_lossy(x)).collect())
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<T> {
        self.values
    }

    pub fn iter(&self) -> std::slice::Iter<'_, T> {
        self.values.iter()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.values.iter().map(|x| x.as_f64()).collect()
    }

    pub fn cast<U: Scalar>(&self) -> DenseVector<U> {
        DenseVector::new(
            self.values
                .iter()
                .map(|x| U::from_f64_lossy(x.as_f64()))
                .collect(),
        )
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|x| x.is_finite())
    }

    pub fn squared_norm(&self) -> f64 {
        self.values.iter().map(|x| x.as_f64() * x.as_f64()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.squared_norm().sqrt()
    }

    pub fn dot(&self, other: &Self) -> Result<f64> {
        check_dims(self.dim(), other.dim())?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a.as_f64() * b.as_f64())
            .sum())
    }

    /// Scales the vector to unit Euclidean length.
    pub fn unit_normalize(&self) -> Result<Self> {
        let norm = self.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::ZeroVector);
        }
        Ok(Self::new(
            self.values
                .iter()
                .map(|x| T::from_f64_lossy(x.as_f64() / norm))
                .collect(),
        ))
    }

    /// Adds `weight * sv` into `self`, touching only the non-zero
    /// coordinates of `sv`.
    pub fn accumulate<S: Scalar>(&mut self, sv: &SparseVector<S>, weight: f64) -> Result<()> {
        check_dims(self.dim(), sv.dim())?;
        for &(i, v) in sv.entries() {
            let slot = &mut self.values[i];
            *slot = T::from_f64_lossy(slot.as_f64() + weight * v.as_f64());
        }
        Ok(())
    }

    /// Concatenates two vectors.
    pub fn concat(&self, other: &Self) -> Self {
        let mut values = Vec::with_capacity(self.dim() + other.dim());
        values.extend_from_slice(&self.values);
        values.extend_from_slice(&other.values);
        Self::new(values)
    }
}

impl<T> Index<usize> for DenseVector<T> {
    type Output = T;

    fn index(&self, i: usize) -> &T {
        &self.values[i]
    }
}

impl<T: Scalar> From<Vec<T>> for DenseVector<T> {
    fn from(values: Vec<T>) -> Self {
        Self::new(values)
    }
}

/// A sparse vector: strictly increasing `(index, value)` pairs below `dim`,
/// with no stored zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVector<T> {
    dim: usize,
    entries: Vec<(usize, T)>,
}

impl<T: Scalar> SparseVector<T> {
    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            entries: Vec::new(),
        }
    }

    /// Builds a sparse vector from entries already in canonical form.
    pub fn new(dim: usize, entries: Vec<(usize, T)>) -> Result<Self> {
        for (k, &(i, v)) in entries.iter().enumerate() {
            if i >= dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: i + 1,
                });
            }
            if k > 0 && entries[k - 1].0 >= i {
                return Err(Error::InvalidConfig(format!(
                    "sparse indices must be strictly increasing (index {i})"
                )));
            }
            if v.is_zero() {
                return Err(Error::InvalidConfig(format!(
                    "sparse vector stores an explicit zero at index {i}"
                )));
            }
        }
        Ok(Self { dim, entries })
    }

    /// Sorts, merges duplicate indices by summation and drops zeros.
    pub fn from_unsorted(dim: usize, mut entries: Vec<(usize, T)>) -> Result<Self> {
        entries.sort_by_key(|&(i, _)| i);
        let mut merged: Vec<(usize, T)> = Vec::with_capacity(entries.len());
        for (i, v) in entries {
            match merged.last_mut() {
                Some(last) if last.0 == i => last.1 = last.1 + v,
                _ => merged.push((i, v)),
            }
        }
        merged.retain(|&(_, v)| !v.is_zero());
        Self::new(dim, merged)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn entries(&self) -> &[(usize, T)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, i: usize) -> T {
        match self.entries.binary_search_by_key(&i, |&(j, _)| j) {
            Ok(k) => self.entries[k].1,
            Err(_) => T::zero(),
        }
    }

    pub fn norm(&self) -> f64 {
        self.entries
            .iter()
            .map(|&(_, v)| v.as_f64() * v.as_f64())
            .sum::<f64>()
            .sqrt()
    }

    pub fn to_dense(&self) -> DenseVector<T> {
        let mut out = DenseVector::zeros(self.dim);
        for &(i, v) in &self.entries {
            out.values[i] = v;
        }
        out
    }

    /// Scales every stored value by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let entries = self
            .entries
            .iter()
            .map(|&(i, v)| (i, T::from_f64_lossy(v.as_f64() * factor)))
            .filter(|&(_, v)| !v.is_zero())
            .collect();
        Self {
            dim: self.dim,
            entries,
        }
    }

    pub fn unit_normalize(&self) -> Result<Self> {
        let norm = self.norm();
        if norm == 0.0 {
            return Err(Error::ZeroVector);
        }
        Ok(self.scaled(1.0 / norm))
    }
}

#[inline]
fn check_dims(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// `sum (a_i - b_i)^2`, accumulated in `f64`.
pub fn squared_euclidean<T: Scalar>(a: &DenseVector<T>, b: &DenseVector<T>) -> Result<f64> {
    check_dims(a.dim(), b.dim())?;
    Ok(squared_euclidean_unchecked(a.as_slice(), b.as_slice()))
}

#[inline]
pub(crate) fn squared_euclidean_unchecked<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x.as_f64() - y.as_f64();
            d * d
        })
        .sum()
}

/// `(sum w_i v_i) / sum w_i`.
pub fn weighted_mean<T: Scalar, V: AsRef<DenseVector<T>>>(
    vectors: &[V],
    weights: &[f64],
) -> Result<DenseVector<T>> {
    let first = vectors.first().ok_or(Error::EmptyInput)?.as_ref();
    check_dims(vectors.len(), weights.len())?;
    let dim = first.dim();
    let mut acc = vec![0.0f64; dim];
    let mut total = 0.0;
    for (v, &w) in vectors.iter().zip(weights) {
        let v = v.as_ref();
        check_dims(dim, v.dim())?;
        for (a, x) in acc.iter_mut().zip(v.iter()) {
            *a += w * x.as_f64();
        }
        total += w;
    }
    if !(total > 0.0) {
        return Err(Error::InvalidConfig(
            "weights must have a positive sum".into(),
        ));
    }
    Ok(DenseVector::new(
        acc.into_iter()
            .map(|a| T::from_f64_lossy(a / total))
            .collect(),
    ))
}

impl<T> AsRef<DenseVector<T>> for DenseVector<T> {
    fn as_ref(&self) -> &DenseVector<T> {
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vec(rng: &mut impl Rng, dim: usize) -> DenseVector<f64> {
        DenseVector::new((0..dim).map(|_| rng.random_range(-5.0..5.0)).collect())
    }

    #[test]
    fn normalize_three_four_five() {
        let v = DenseVector::new(vec![3.0f64, 4.0])
            .unit_normalize()
            .unwrap();
        assert!((v[0] - 0.6).abs() < 1e-15);
        assert!((v[1] - 0.8).abs() < 1e-15);
        let e = DenseVector::new(vec![1.0, 0.0, 0.0])
            .unit_normalize()
            .unwrap();
        assert_eq!(e.as_slice(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn normalize_zero_is_an_error() {
        let z = DenseVector::<f64>::zeros(4);
        assert!(matches!(z.unit_normalize(), Err(Error::ZeroVector)));
    }

    #[test]
    fn normalize_random_has_unit_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let v = random_vec(&mut rng, 50).unit_normalize().unwrap();
            // independent recomputation, reverse summation order
            let n: f64 = v.iter().rev().fold(0.0, |s, x| s + x * x).sqrt();
            assert!((n - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn squared_euclidean_examples() {
        let a = DenseVector::new(vec![0.0, 0.0]);
        let b = DenseVector::new(vec![3.0, 4.0]);
        assert_eq!(squared_euclidean(&a, &b).unwrap(), 25.0);
        assert_eq!(squared_euclidean(&b, &b).unwrap(), 0.0);
        let c = DenseVector::new(vec![1.0]);
        assert!(matches!(
            squared_euclidean(&a, &c),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn squared_euclidean_matches_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let a = random_vec(&mut rng, 37);
            let b = random_vec(&mut rng, 37);
            let mut oracle = 0.0;
            for i in (0..37).rev() {
                oracle += (a[i] - b[i]) * (a[i] - b[i]);
            }
            let got = squared_euclidean(&a, &b).unwrap();
            assert!((got - oracle).abs() < 1e-10);
            assert_eq!(got, squared_euclidean(&b, &a).unwrap());
        }
    }

    #[test]
    fn accumulate_examples() {
        let mut acc = DenseVector::<f64>::zeros(8);
        let sv = SparseVector::new(8, vec![(2, 1.0), (5, -1.0)]).unwrap();
        acc.accumulate(&sv, 2.0).unwrap();
        assert_eq!(acc.as_slice(), &[0.0, 0.0, 2.0, 0.0, 0.0, -2.0, 0.0, 0.0]);

        let before = acc.clone();
        acc.accumulate(&sv, 0.0).unwrap();
        assert_eq!(acc, before);

        let wrong = SparseVector::<f64>::empty(3);
        assert!(acc.accumulate(&wrong, 1.0).is_err());
    }

    #[test]
    fn accumulate_matches_densify_then_add() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let acc = random_vec(&mut rng, 30);
            let mut entries = Vec::new();
            for i in 0..30 {
                if rng.random_bool(0.3) {
                    entries.push((i, rng.random_range(-2.0..2.0)));
                }
            }
            let sv = SparseVector::from_unsorted(30, entries).unwrap();
            let w = rng.random_range(-3.0..3.0);
            let mut got = acc.clone();
            got.accumulate(&sv, w).unwrap();
            let dense = sv.to_dense();
            for i in 0..30 {
                assert!((got[i] - (acc[i] + w * dense[i])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn weighted_mean_examples() {
        let v = DenseVector::new(vec![1.0, -2.0, 3.5]);
        assert_eq!(weighted_mean(std::slice::from_ref(&v), &[7.0]).unwrap(), v);

        let neg = DenseVector::new(v.iter().map(|x| -x).collect());
        let m = weighted_mean(&[v, neg], &[2.0, 2.0]).unwrap();
        assert!(m.iter().all(|x| *x == 0.0));

        assert!(matches!(
            weighted_mean::<f64, DenseVector<f64>>(&[], &[]),
            Err(Error::EmptyInput)
        ));
    }

    #[test]
    fn weighted_mean_matches_expanded_multiset() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let vs: Vec<_> = (0..5).map(|_| random_vec(&mut rng, 6)).collect();
            let ws: Vec<u32> = (0..5).map(|_| rng.random_range(1..6)).collect();
            let expanded: Vec<_> = vs
                .iter()
                .zip(&ws)
                .flat_map(|(v, &w)| std::iter::repeat_n(v.clone(), w as usize))
                .collect();
            let n = expanded.len() as f64;
            let got =
                weighted_mean(&vs, &ws.iter().map(|&w| w as f64).collect::<Vec<_>>()).unwrap();
            for i in 0..6 {
                let oracle: f64 = expanded.iter().map(|v| v[i]).sum::<f64>() / n;
                assert!((got[i] - oracle).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sparse_rejects_non_canonical_input() {
        assert!(SparseVector::new(4, vec![(1, 1.0), (1, 2.0)]).is_err());
        assert!(SparseVector::new(4, vec![(4, 1.0)]).is_err());
        assert!(SparseVector::new(4, vec![(0, 0.0)]).is_err());
        let sv = SparseVector::from_unsorted(5, vec![(3, 1.0), (0, 2.0), (3, -1.0)]).unwrap();
        assert_eq!(sv.entries(), &[(0, 2.0)]);
    }

    fn unit_pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (2usize..40).prop_flat_map(|d| {
            (
                prop::collection::vec(-10.0f64..10.0, d),
                prop::collection::vec(-10.0f64..10.0, d),
            )
        })
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(v in prop::collection::vec(-100.0f64..100.0, 1..60)) {
            let v = DenseVector::new(v);
            prop_assume!(v.norm() > 1e-6);
            let once = v.unit_normalize().unwrap();
            let twice = once.unit_normalize().unwrap();
            for (a, b) in once.iter().zip(twice.iter()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn unit_distance_is_cosine((a, b) in unit_pair()) {
            let a = DenseVector::new(a);
            let b = DenseVector::new(b);
            prop_assume!(a.norm() > 1e-6 && b.norm() > 1e-6);
            let a = a.unit_normalize().unwrap();
            let b = b.unit_normalize().unwrap();
            let d = squared_euclidean(&a, &b).unwrap();
            prop_assert!((d - (2.0 - 2.0 * a.dot(&b).unwrap())).abs() < 1e-10);
        }

        #[test]
        fn equal_weights_give_arithmetic_mean(
            vs in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 4), 1..10),
            w in 0.1f64..100.0,
        ) {
            let vecs: Vec<_> = vs.iter().cloned().map(DenseVector::new).collect();
            let m = weighted_mean(&vecs, &vec![w; vecs.len()]).unwrap();
            for i in 0..4 {
                let mean = vs.iter().map(|v| v[i]).sum::<f64>() / vs.len() as f64;
                prop_assert!((m[i] - mean).abs() < 1e-12);
            }
        }
    }
}
