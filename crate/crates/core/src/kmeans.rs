//! Weighted Lloyd k-means with the seeding and convergence policies used by
//! K-tree node splits and by the evaluation-time codebook reduction.
//!
//! * Unmodified K-tree splits seed by perturbing the global mean and run to
//!   convergence.
//! * Modified K-tree splits seed with uniformly drawn points, keep centroids
//!   on the unit sphere and restart whenever an attempt has not converged
//!   within six assignment rounds.
//! * Codebook reduction seeds with k-means++.
//!
//! Points carry positive weights; an internal K-tree entry is weighted by
//! the number of data vectors beneath it, which keeps every promoted centroid
//! equal to the mean of its subtree.

use std::collections::HashSet;

use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::vecspace::{squared_euclidean_unchecked, weighted_mean, DenseVector};

/// Upper bound on rounds for the run-to-convergence policy. Weighted Lloyd
/// iterations always terminate; this only guards against float cycling.
pub const MAX_CONVERGENCE_ROUNDS: usize = 1000;

/// Rounds allowed per attempt before a modified-split restart.
pub const RESTART_ROUNDS: usize = 6;

pub const DEFAULT_MAX_RESTARTS: usize = 64;

/// Relative size of the mean perturbation used by [`seed_perturbation`].
pub const PERTURBATION_SCALE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Seeding {
    /// Two seeds on either side of the weighted mean.
    Perturbation,
    /// `k` distinct points drawn uniformly.
    Uniform,
    KMeansPlusPlus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Policy {
    /// Iterate each attempt until the assignment is stable.
    RunToConvergence,
    /// Abandon an attempt that is not stable within the given number of
    /// rounds and reseed.
    RestartAfter(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KMeansConfig {
    pub k: usize,
    pub seeding: Seeding,
    pub policy: Policy,
    pub max_restarts: usize,
    pub normalize_centroids: bool,
}

impl KMeansConfig {
    /// Node split of the original K-tree.
    pub fn unmodified_split() -> Self {
        Self {
            k: 2,
            seeding: Seeding::Perturbation,
            policy: Policy::RunToConvergence,
            max_restarts: 1,
            normalize_centroids: false,
        }
    }

    /// Node split of the unit-sphere K-tree.
    pub fn modified_split() -> Self {
        Self {
            k: 2,
            seeding: Seeding::Uniform,
            policy: Policy::RestartAfter(RESTART_ROUNDS),
            max_restarts: DEFAULT_MAX_RESTARTS,
            normalize_centroids: true,
        }
    }

    /// k-means++ seeded, run to convergence, best of `restarts` attempts.
    pub fn kmeanspp(k: usize, restarts: usize) -> Self {
        Self {
            k,
            seeding: Seeding::KMeansPlusPlus,
            policy: Policy::RunToConvergence,
            max_restarts: restarts,
            normalize_centroids: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.k == 0 || self.max_restarts == 0 {
            return Err(Error::InvalidConfig(
                "k-means needs k >= 1 and max_restarts >= 1".into(),
            ));
        }
        if self.seeding == Seeding::Perturbation && self.k != 2 {
            return Err(Error::InvalidConfig(
                "perturbation seeding produces exactly two seeds".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Partition<T> {
    pub centroids: Vec<DenseVector<T>>,
    /// Cluster of each point.
    pub assignment: Vec<usize>,
    /// Weighted sum of squared distances from points to their centroids.
    pub sse: f64,
    pub converged: bool,
    /// Assignment rounds run by the returned attempt.
    pub rounds: usize,
    /// Attempts made, including the returned one.
    pub attempts: usize,
    /// SSE after each round of the returned attempt.
    pub trace: Vec<f64>,
}

impl<T: Scalar> Partition<T> {
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.centroids.len()];
        for &a in &self.assignment {
            sizes[a] += 1;
        }
        sizes
    }
}

fn check_input<T: Scalar>(points: &[DenseVector<T>], weights: &[f64], k: usize) -> Result<()> {
    if points.len() < k.max(1) {
        return Err(Error::TooFewPoints {
            needed: k.max(1),
            available: points.len(),
        });
    }
    if weights.len() != points.len() {
        return Err(Error::DimensionMismatch {
            expected: points.len(),
            found: weights.len(),
        });
    }
    let dim = points[0].dim();
    if let Some(bad) = points.iter().find(|p| p.dim() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: bad.dim(),
        });
    }
    if weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
        return Err(Error::InvalidConfig(
            "point weights must be positive".into(),
        ));
    }
    Ok(())
}

/// Index of the first occurrence of each distinct point.
pub fn distinct_points<T: Scalar>(points: &[DenseVector<T>]) -> Vec<usize> {
    let mut seen: HashSet<Vec<u64>> = HashSet::with_capacity(points.len());
    points
        .iter()
        .enumerate()
        .filter(|(_, p)| seen.insert(p.iter().map(|x| x.as_f64().to_bits()).collect()))
        .map(|(i, _)| i)
        .collect()
}

#[inline]
fn nearest<T: Scalar>(centroids: &[DenseVector<T>], p: &DenseVector<T>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = squared_euclidean_unchecked(centroid.as_slice(), p.as_slice());
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn sse<T: Scalar>(
    points: &[DenseVector<T>],
    weights: &[f64],
    centroids: &[DenseVector<T>],
    assignment: &[usize],
) -> f64 {
    points
        .iter()
        .zip(weights)
        .zip(assignment)
        .map(|((p, w), &a)| w * squared_euclidean_unchecked(p.as_slice(), centroids[a].as_slice()))
        .sum()
}

fn centroid_of<T: Scalar>(
    points: &[DenseVector<T>],
    weights: &[f64],
    members: &[usize],
    normalize: bool,
    previous: &DenseVector<T>,
) -> DenseVector<T> {
    let vs: Vec<&DenseVector<T>> = members.iter().map(|&i| &points[i]).collect();
    let ws: Vec<f64> = members.iter().map(|&i| weights[i]).collect();
    let mean = weighted_mean(&vs, &ws).expect("cluster is non-empty");
    if normalize {
        // An exactly cancelling cluster has no direction; keep the old one.
        mean.unit_normalize().unwrap_or_else(|_| previous.clone())
    } else {
        mean
    }
}

/// Gives every empty cluster the point farthest from its own centroid,
/// taken from a cluster that keeps at least one member.
fn repair_empty<T: Scalar>(
    points: &[DenseVector<T>],
    centroids: &mut [DenseVector<T>],
    assignment: &mut [usize],
) {
    let k = centroids.len();
    let mut sizes = vec![0usize; k];
    for &a in assignment.iter() {
        sizes[a] += 1;
    }
    for c in 0..k {
        if sizes[c] > 0 {
            continue;
        }
        let mut far = None;
        let mut far_d = -1.0;
        for (i, p) in points.iter().enumerate() {
            let a = assignment[i];
            if sizes[a] < 2 {
                continue;
            }
            let d = squared_euclidean_unchecked(p.as_slice(), centroids[a].as_slice());
            if d > far_d {
                far_d = d;
                far = Some(i);
            }
        }
        let i = far.expect("k <= number of points");
        sizes[assignment[i]] -= 1;
        sizes[c] += 1;
        assignment[i] = c;
        centroids[c] = points[i].clone();
    }
}

/// Weighted Lloyd iterations from the given initial centroids. Stops after
/// the first round whose assignment equals the previous round's (converged)
/// or after `max_rounds` rounds.
pub fn lloyd_from<T: Scalar>(
    points: &[DenseVector<T>],
    weights: &[f64],
    initial: Vec<DenseVector<T>>,
    max_rounds: usize,
    normalize: bool,
) -> Result<Partition<T>> {
    let k = initial.len();
    check_input(points, weights, k)?;
    if initial.iter().any(|c| c.dim() != points[0].dim()) {
        return Err(Error::DimensionMismatch {
            expected: points[0].dim(),
            found: initial
                .iter()
                .map(|c| c.dim())
                .find(|&d| d != points[0].dim())
                .unwrap_or(0),
        });
    }
    let max_rounds = max_rounds.max(1);
    let mut centroids = initial;

    if k == 1 {
        let members: Vec<usize> = (0..points.len()).collect();
        centroids[0] = centroid_of(points, weights, &members, normalize, &centroids[0]);
        let assignment = vec![0; points.len()];
        let sse = sse(points, weights, &centroids, &assignment);
        return Ok(Partition {
            centroids,
            assignment,
            sse,
            converged: true,
            rounds: 1,
            attempts: 1,
            trace: vec![sse],
        });
    }

    let mut previous: Option<Vec<usize>> = None;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut rounds = 0;
    while rounds < max_rounds {
        rounds += 1;
        let mut assignment: Vec<usize> = points.iter().map(|p| nearest(&centroids, p).0).collect();
        repair_empty(points, &mut centroids, &mut assignment);

        let mut members = vec![Vec::new(); k];
        for (i, &a) in assignment.iter().enumerate() {
            members[a].push(i);
        }
        for (c, m) in members.iter().enumerate() {
            centroids[c] = centroid_of(points, weights, m, normalize, &centroids[c]);
        }
        trace.push(sse(points, weights, &centroids, &assignment));

        let stable = previous.as_ref() == Some(&assignment);
        previous = Some(assignment);
        if stable {
            converged = true;
            break;
        }
    }
    let assignment = previous.expect("at least one round");
    let sse = sse(points, weights, &centroids, &assignment);
    Ok(Partition {
        centroids,
        assignment,
        sse,
        converged,
        rounds,
        attempts: 1,
        trace,
    })
}

/// Two seeds at `mean ± eps * u`, where `u` is the coordinate axis of largest
/// weighted variance and `eps` is `1e-3` times the mean per-coordinate
/// standard deviation. When every point coincides the spread is zero and
/// `eps` falls back to `1e-3 * max(1, |mean|_inf)` so the seeds stay
/// distinct.
pub fn seed_perturbation<T: Scalar>(
    points: &[DenseVector<T>],
    weights: &[f64],
) -> Result<Vec<DenseVector<T>>> {
    check_input(points, weights, 2)?;
    let dim = points[0].dim();
    let total: f64 = weights.iter().sum();
    let mut mean = vec![0.0; dim];
    for (p, &w) in points.iter().zip(weights) {
        for (m, x) in mean.iter_mut().zip(p.iter()) {
            *m += w * x.as_f64();
        }
    }
    mean.iter_mut().for_each(|m| *m /= total);
    let mut var = vec![0.0; dim];
    for (p, &w) in points.iter().zip(weights) {
        for ((v, m), x) in var.iter_mut().zip(&mean).zip(p.iter()) {
            let d = x.as_f64() - m;
            *v += w * d * d;
        }
    }
    var.iter_mut().for_each(|v| *v /= total);

    let axis = var
        .iter()
        .enumerate()
        .fold(0, |best, (j, &v)| if v > var[best] { j } else { best });
    let mean_std = var.iter().map(|v| v.sqrt()).sum::<f64>() / dim.max(1) as f64;
    let eps = if mean_std > 0.0 {
        PERTURBATION_SCALE * mean_std
    } else {
        PERTURBATION_SCALE * mean.iter().fold(1.0f64, |a, m| a.max(m.abs()))
    };
    let mut up = mean.clone();
    let mut down = mean;
    if dim > 0 {
        up[axis] += eps;
        down[axis] -= eps;
    }
    Ok(vec![
        DenseVector::from_f64(&up),
        DenseVector::from_f64(&down),
    ])
}

/// `k` distinct points drawn uniformly without replacement.
pub fn seed_uniform<T: Scalar, R: Rng + ?Sized>(
    points: &[DenseVector<T>],
    k: usize,
    rng: &mut R,
) -> Result<Vec<DenseVector<T>>> {
    let distinct = distinct_points(points);
    if k == 0 || distinct.len() < k {
        return Err(Error::TooFewPoints {
            needed: k,
            available: distinct.len(),
        });
    }
    Ok(index::sample(rng, distinct.len(), k)
        .into_iter()
        .map(|i| points[distinct[i]].clone())
        .collect())
}

/// Sampling probabilities for the next k-means++ seed: proportional to
/// `weight * D^2`, `D` being the distance to the nearest chosen centroid.
pub fn kmeanspp_probabilities<T: Scalar>(
    points: &[DenseVector<T>],
    weights: &[f64],
    chosen: &[DenseVector<T>],
) -> Vec<f64> {
    let scores: Vec<f64> = points
        .iter()
        .zip(weights)
        .map(|(p, w)| w * nearest(chosen, p).1)
        .collect();
    let total: f64 = scores.iter().sum();
    scores.into_iter().map(|s| s / total).collect()
}

/// k-means++ seeding: the first centroid uniformly, each further one with
/// probability proportional to `weight * D^2`.
pub fn seed_kmeanspp<T: Scalar, R: Rng + ?Sized>(
    points: &[DenseVector<T>],
    weights: &[f64],
    k: usize,
    rng: &mut R,
) -> Result<Vec<DenseVector<T>>> {
    check_input(points, weights, k)?;
    let n_distinct = distinct_points(points).len();
    if k == 0 || n_distinct < k {
        return Err(Error::TooFewPoints {
            needed: k,
            available: n_distinct,
        });
    }
    let mut chosen = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points
        .iter()
        .map(|p| squared_euclidean_unchecked(p.as_slice(), chosen[0].as_slice()))
        .collect();
    while chosen.len() < k {
        let scores: Vec<f64> = d2.iter().zip(weights).map(|(d, w)| d * w).collect();
        let total: f64 = scores.iter().sum();
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = None;
        for (i, &s) in scores.iter().enumerate() {
            if s <= 0.0 {
                continue;
            }
            acc += s;
            pick = Some(i);
            if target < acc {
                break;
            }
        }
        let next = points[pick.expect("a point with positive distance exists")].clone();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(squared_euclidean_unchecked(p.as_slice(), next.as_slice()));
        }
        chosen.push(next);
    }
    Ok(chosen)
}

fn seed<T: Scalar, R: Rng + ?Sized>(
    points: &[DenseVector<T>],
    weights: &[f64],
    config: &KMeansConfig,
    rng: &mut R,
) -> Result<Vec<DenseVector<T>>> {
    let mut seeds = match config.seeding {
        Seeding::Perturbation => seed_perturbation(points, weights)?,
        Seeding::Uniform => seed_uniform(points, config.k, rng)?,
        Seeding::KMeansPlusPlus => seed_kmeanspp(points, weights, config.k, rng)?,
    };
    if config.normalize_centroids {
        for s in seeds.iter_mut() {
            if let Ok(unit) = s.unit_normalize() {
                *s = unit;
            }
        }
    }
    Ok(seeds)
}

fn max_rounds(policy: Policy) -> usize {
    match policy {
        Policy::RunToConvergence => MAX_CONVERGENCE_ROUNDS,
        Policy::RestartAfter(n) => n,
    }
}

/// Repeats seeding plus a bounded Lloyd run until an attempt converges or
/// `max_restarts` attempts are spent. On exhaustion the lowest-SSE attempt
/// is returned with `converged == false`.
pub fn run_with_restarts<T: Scalar, R: Rng + ?Sized>(
    points: &[DenseVector<T>],
    weights: &[f64],
    config: &KMeansConfig,
    rng: &mut R,
) -> Result<Partition<T>> {
    config.validate()?;
    check_input(points, weights, config.k)?;
    let rounds = max_rounds(config.policy);
    let mut best: Option<Partition<T>> = None;
    for attempt in 1..=config.max_restarts {
        let seeds = seed(points, weights, config, rng)?;
        let mut part = lloyd_from(points, weights, seeds, rounds, config.normalize_centroids)?;
        part.attempts = attempt;
        if part.converged {
            return Ok(part);
        }
        if best.as_ref().is_none_or(|b| part.sse < b.sse) {
            best = Some(part);
        }
    }
    let mut best = best.expect("max_restarts >= 1");
    best.attempts = config.max_restarts;
    Ok(best)
}

/// Weighted k-means under `config`. With [`Policy::RunToConvergence`] every
/// attempt runs to convergence and the lowest-SSE attempt of
/// `max_restarts` wins; with [`Policy::RestartAfter`] this is
/// [`run_with_restarts`].
pub fn lloyd<T: Scalar, R: Rng + ?Sized>(
    points: &[DenseVector<T>],
    weights: &[f64],
    config: &KMeansConfig,
    rng: &mut R,
) -> Result<Partition<T>> {
    config.validate()?;
    check_input(points, weights, config.k)?;
    match config.policy {
        Policy::RestartAfter(_) => run_with_restarts(points, weights, config, rng),
        Policy::RunToConvergence => {
            let mut best: Option<Partition<T>> = None;
            for attempt in 1..=config.max_restarts {
                let seeds = seed(points, weights, config, rng)?;
                let mut part = lloyd_from(
                    points,
                    weights,
                    seeds,
                    MAX_CONVERGENCE_ROUNDS,
                    config.normalize_centroids,
                )?;
                part.attempts = attempt;
                if best.as_ref().is_none_or(|b| part.sse < b.sse) {
                    best = Some(part);
                }
            }
            Ok(best.expect("max_restarts >= 1"))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn pts(raw: &[&[f64]]) -> Vec<DenseVector<f64>> {
        raw.iter().map(|p| DenseVector::new(p.to_vec())).collect()
    }

    fn gaussian(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<DenseVector<f64>> {
        (0..n)
            .map(|_| DenseVector::new((0..d).map(|_| StandardNormal.sample(rng)).collect()))
            .collect()
    }

    /// Brute force over all 2-partitions; returns (sse, side of each point).
    fn best_two_partition(points: &[DenseVector<f64>], weights: &[f64]) -> (f64, Vec<usize>) {
        let n = points.len();
        let mut best = (f64::INFINITY, vec![]);
        for mask in 1u32..(1 << n) - 1 {
            if mask & 1 == 0 {
                continue; // point 0 on side 0, skips mirrored partitions
            }
            let side: Vec<usize> = (0..n).map(|i| ((mask >> i) & 1 == 0) as usize).collect();
            let mut total = 0.0;
            for s in 0..2 {
                let idx: Vec<usize> = (0..n).filter(|&i| side[i] == s).collect();
                let w: f64 = idx.iter().map(|&i| weights[i]).sum();
                let d = points[0].dim();
                let mean: Vec<f64> = (0..d)
                    .map(|j| idx.iter().map(|&i| weights[i] * points[i][j]).sum::<f64>() / w)
                    .collect();
                for &i in &idx {
                    total += weights[i]
                        * (0..d)
                            .map(|j| (points[i][j] - mean[j]).powi(2))
                            .sum::<f64>();
                }
            }
            if total < best.0 {
                best = (total, side);
            }
        }
        best
    }

    #[test]
    fn k_equals_one_is_the_weighted_mean() {
        let p = pts(&[&[0.0, 0.0], &[2.0, 0.0], &[0.0, 4.0]]);
        let w = [1.0, 1.0, 2.0];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let part = lloyd(&p, &w, &KMeansConfig::kmeanspp(1, 1), &mut rng).unwrap();
        assert_eq!(part.rounds, 1);
        assert!(part.converged);
        assert_eq!(part.centroids[0], weighted_mean(&p, &w).unwrap());
    }

    #[test]
    fn separated_pairs() {
        let p = pts(&[&[0.0, 0.0], &[10.0, 0.0], &[0.0, 1.0], &[10.0, 1.0]]);
        let w = [1.0; 4];
        let (oracle_sse, oracle_side) = best_two_partition(&p, &w);
        assert_eq!(oracle_side, vec![0, 1, 0, 1]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for config in [
            KMeansConfig::unmodified_split(),
            KMeansConfig::kmeanspp(2, 3),
        ] {
            let part = lloyd(&p, &w, &config, &mut rng).unwrap();
            assert_eq!(part.assignment[0], part.assignment[2]);
            assert_eq!(part.assignment[1], part.assignment[3]);
            assert_ne!(part.assignment[0], part.assignment[1]);
            assert!((part.sse - oracle_sse).abs() < 1e-12);
            let left = &part.centroids[part.assignment[0]];
            let right = &part.centroids[part.assignment[1]];
            assert_eq!(left.as_slice(), &[0.0, 0.5]);
            assert_eq!(right.as_slice(), &[10.0, 0.5]);
        }
    }

    #[test]
    fn k_equals_n_has_zero_sse() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = gaussian(&mut rng, 6, 3);
        let part = lloyd(&p, &[1.0; 6], &KMeansConfig::kmeanspp(6, 1), &mut rng).unwrap();
        assert_eq!(part.sse, 0.0);
        let mut seen = part.assignment.clone();
        seen.sort();
        assert_eq!(seen, (0..6).collect::<Vec<_>>());
    }

    #[test]
    fn too_few_points() {
        let p = pts(&[&[1.0]]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            lloyd(&p, &[1.0], &KMeansConfig::kmeanspp(2, 1), &mut rng),
            Err(Error::TooFewPoints { .. })
        ));
        assert!(matches!(
            seed_perturbation(&p, &[1.0]),
            Err(Error::TooFewPoints { .. })
        ));
        let dup = pts(&[&[1.0], &[1.0], &[1.0]]);
        assert!(matches!(
            seed_uniform(&dup, 2, &mut rng),
            Err(Error::TooFewPoints { .. })
        ));
    }

    #[test]
    fn perturbation_symmetric_about_origin() {
        let p = pts(&[&[1.0, 0.5], &[-1.0, -0.5], &[2.0, 0.1], &[-2.0, -0.1]]);
        let seeds = seed_perturbation(&p, &[1.0; 4]).unwrap();
        assert_eq!(seeds[0][1], 0.0);
        assert_eq!(seeds[1][1], 0.0);
        assert!(seeds[0][0] > 0.0);
        assert_eq!(seeds[0][0], -seeds[1][0]);
        // axis 0 has the larger variance; eps = 1e-3 * mean std
        let std0 = (10.0f64 / 4.0).sqrt();
        let std1 = (0.52f64 / 4.0).sqrt();
        assert!((seeds[0][0] - 1e-3 * (std0 + std1) / 2.0).abs() < 1e-15);
        assert_eq!(seed_perturbation(&p, &[1.0; 4]).unwrap(), seeds);
    }

    #[test]
    fn identical_points_degenerate_run() {
        let p = pts(&[&[0.3, 0.3], &[0.3, 0.3], &[0.3, 0.3], &[0.3, 0.3]]);
        let w = [1.0; 4];
        let seeds = seed_perturbation(&p, &w).unwrap();
        assert_ne!(seeds[0], seeds[1]);
        let part = lloyd_from(&p, &w, seeds, MAX_CONVERGENCE_ROUNDS, false).unwrap();
        // everything collapses onto the common point; the repaired cluster
        // holds a single point
        assert!(part.converged);
        assert_eq!(part.centroids[0], part.centroids[1]);
        assert_eq!(part.cluster_sizes(), vec![3, 1]);
        assert_eq!(part.sse, 0.0);
    }

    #[test]
    fn uniform_seeding_is_duplicate_free_and_reproducible() {
        let p = pts(&[&[0.0], &[0.0], &[1.0], &[2.0], &[2.0], &[3.0]]);
        for s in 0..50 {
            let a = seed_uniform(&p, 4, &mut ChaCha8Rng::seed_from_u64(s)).unwrap();
            let b = seed_uniform(&p, 4, &mut ChaCha8Rng::seed_from_u64(s)).unwrap();
            assert_eq!(a, b);
            assert_eq!(distinct_points(&a).len(), 4);
        }
    }

    #[test]
    fn uniform_seeding_frequencies() {
        let n = 10usize;
        let p: Vec<_> = (0..n).map(|i| DenseVector::new(vec![i as f64])).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let draws = 10_000;
        let mut counts = vec![0u32; n];
        for _ in 0..draws {
            for s in seed_uniform(&p, 2, &mut rng).unwrap() {
                counts[s[0] as usize] += 1;
            }
        }
        // each point is included with probability 2 / 10 per draw
        let prob = 0.2;
        let mean = draws as f64 * prob;
        let sigma = (draws as f64 * prob * (1.0 - prob)).sqrt();
        for c in counts {
            assert!((c as f64 - mean).abs() < 5.0 * sigma, "{c}");
        }
    }

    #[test]
    fn kmeanspp_hand_probability() {
        let p = pts(&[&[0.0], &[1.0], &[100.0]]);
        let w = [1.0; 3];
        let probs = kmeanspp_probabilities(&p, &w, &[p[0].clone()]);
        assert_eq!(probs[0], 0.0);
        assert!((probs[2] - 10_000.0 / 10_001.0).abs() < 1e-15);

        // Monte Carlo over runs whose first pick is point 0
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let (mut first_zero, mut then_far) = (0u32, 0u32);
        for _ in 0..30_000 {
            let seeds = seed_kmeanspp(&p, &w, 2, &mut rng).unwrap();
            if seeds[0][0] == 0.0 {
                first_zero += 1;
                then_far += (seeds[1][0] == 100.0) as u32;
            }
        }
        let frac = then_far as f64 / first_zero as f64;
        assert!(frac > 0.995, "{frac}");
    }

    #[test]
    fn kmeanspp_never_resamples_chosen_points() {
        let p = pts(&[&[0.0], &[0.0], &[5.0], &[9.0]]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let seeds = seed_kmeanspp(&p, &[1.0; 4], 3, &mut rng).unwrap();
            assert_eq!(distinct_points(&seeds).len(), 3);
        }
        assert!(seed_kmeanspp(&p, &[1.0; 4], 4, &mut rng).is_err());
    }

    #[test]
    fn restarts_converge_first_time_on_easy_input() {
        let p = pts(&[&[0.0, 0.0], &[0.1, 0.0], &[10.0, 0.0], &[10.1, 0.0]]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let config = KMeansConfig {
            normalize_centroids: false,
            ..KMeansConfig::modified_split()
        };
        let part = run_with_restarts(&p, &[1.0; 4], &config, &mut rng).unwrap();
        assert!(part.converged);
        assert_eq!(part.attempts, 1);
    }

    #[test]
    fn single_attempt_budget_reports_non_convergence() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = gaussian(&mut rng, 200, 2);
        let config = KMeansConfig {
            k: 8,
            seeding: Seeding::Uniform,
            policy: Policy::RestartAfter(1),
            max_restarts: 1,
            normalize_centroids: false,
        };
        // one round can never observe a stable assignment
        let part = run_with_restarts(&p, &[1.0; 200], &config, &mut rng).unwrap();
        assert!(!part.converged);
        assert_eq!(part.attempts, 1);
        assert_eq!(part.rounds, 1);
    }

    #[test]
    fn restart_budget_is_enough() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let config = KMeansConfig {
            normalize_centroids: false,
            ..KMeansConfig::modified_split()
        };
        let trials = 1000;
        let mut ok = 0;
        for _ in 0..trials {
            let p = gaussian(&mut rng, 100, 2);
            ok += run_with_restarts(&p, &[1.0; 100], &config, &mut rng)
                .unwrap()
                .converged as usize;
        }
        assert!(ok as f64 >= 0.99 * trials as f64, "{ok}");
    }

    #[test]
    fn sse_matches_assignment() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let p = gaussian(&mut rng, 30, 4);
            let w: Vec<f64> = (0..30).map(|_| rng.random_range(0.5..3.0)).collect();
            let part = lloyd(&p, &w, &KMeansConfig::kmeanspp(3, 2), &mut rng).unwrap();
            let mut total = 0.0;
            for i in 0..30 {
                let c = &part.centroids[part.assignment[i]];
                total += w[i] * (0..4).map(|j| (p[i][j] - c[j]).powi(2)).sum::<f64>();
            }
            assert!((total - part.sse).abs() < 1e-8);
        }
    }

    #[test]
    fn sse_is_non_increasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..100 {
            let p = gaussian(&mut rng, 40, 3);
            let w: Vec<f64> = (0..40).map(|_| rng.random_range(1..4) as f64).collect();
            let seeds = seed_uniform(&p, 3, &mut rng).unwrap();
            let part = lloyd_from(&p, &w, seeds, MAX_CONVERGENCE_ROUNDS, false).unwrap();
            for pair in part.trace.windows(2) {
                assert!(pair[1] <= pair[0] + 1e-9, "{:?}", part.trace);
            }
        }
    }

    #[test]
    fn spherical_objective_is_non_increasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        for _ in 0..100 {
            let p: Vec<_> = gaussian(&mut rng, 40, 5)
                .into_iter()
                .map(|v| v.unit_normalize().unwrap())
                .collect();
            let seeds = seed_uniform(&p, 3, &mut rng).unwrap();
            let part = lloyd_from(&p, &[1.0; 40], seeds, MAX_CONVERGENCE_ROUNDS, true).unwrap();
            // on the unit sphere the SSE is twice the sum of (1 - cos)
            for pair in part.trace.windows(2) {
                assert!(pair[1] <= pair[0] + 1e-9, "{:?}", part.trace);
            }
            for c in &part.centroids {
                assert!((c.norm() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn optimal_seeding_reproduces_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..200 {
            let n = rng.random_range(2..=8);
            let p = gaussian(&mut rng, n, 2);
            let w: Vec<f64> = (0..n).map(|_| rng.random_range(1..4) as f64).collect();
            let (opt, side) = best_two_partition(&p, &w);
            let part = lloyd(&p, &w, &KMeansConfig::kmeanspp(2, 1), &mut rng).unwrap();
            assert!(part.sse >= opt - 1e-9);

            let seeds: Vec<_> = (0..2)
                .map(|s| {
                    let idx: Vec<usize> = (0..n).filter(|&i| side[i] == s).collect();
                    let vs: Vec<_> = idx.iter().map(|&i| p[i].clone()).collect();
                    let ws: Vec<_> = idx.iter().map(|&i| w[i]).collect();
                    weighted_mean(&vs, &ws).unwrap()
                })
                .collect();
            let part = lloyd_from(&p, &w, seeds, MAX_CONVERGENCE_ROUNDS, false).unwrap();
            assert_eq!(part.assignment, side);
            assert!((part.sse - opt).abs() <= 1e-9 * opt.max(1.0));
        }
    }

    #[test]
    fn permutation_permutes_assignment() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..50 {
            let p = gaussian(&mut rng, 25, 3);
            let seeds = seed_uniform(&p, 3, &mut rng).unwrap();
            let base =
                lloyd_from(&p, &[1.0; 25], seeds.clone(), MAX_CONVERGENCE_ROUNDS, false).unwrap();
            let mut perm: Vec<usize> = (0..25).collect();
            perm.reverse();
            perm.rotate_left(7);
            let q: Vec<_> = perm.iter().map(|&i| p[i].clone()).collect();
            let moved = lloyd_from(&q, &[1.0; 25], seeds, MAX_CONVERGENCE_ROUNDS, false).unwrap();
            for (pos, &orig) in perm.iter().enumerate() {
                assert_eq!(moved.assignment[pos], base.assignment[orig]);
            }
        }
    }
}
