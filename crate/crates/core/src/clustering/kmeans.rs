//! Lloyd's k-means over L2-normalized similarity rows, with optional
//! percentile-based outlier trimming.
//!
//! On unit vectors, squared Euclidean distance is twice the cosine distance,
//! so running Lloyd on normalized rows approximates clustering in the same
//! geometry the other back-ends use.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::{AssignmentMode, ClusterAssignment, ClusterError, SimilarityMatrix};
use crate::util::nearest_rank_percentile;

#[derive(Debug, Clone)]
pub struct KmeansConfig {
    pub k: usize,
    /// Members farther from their centroid than this percentile of their
    /// cluster's distances are dropped to singletons (they predict locally).
    /// `None` disables trimming.
    pub threshold_percentile: Option<f64>,
    pub seed: u64,
    pub max_iters: usize,
    pub tol: f64,
}

impl KmeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        KmeansConfig {
            k,
            threshold_percentile: Some(40.0),
            seed,
            max_iters: 300,
            tol: 1e-9,
        }
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn normalized_rows(sim: &SimilarityMatrix) -> Vec<Vec<f64>> {
    (0..sim.n())
        .map(|i| {
            let mut row = sim.row(i);
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                for x in &mut row {
                    *x /= norm;
                }
            }
            row
        })
        .collect()
}

/// Farthest-first seeding: a random first centre, then repeatedly the point
/// farthest from its nearest chosen centre, ties toward the smallest index.
fn seed_centroids(points: &[Vec<f64>], k: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut chosen: Vec<usize> = vec![rng.gen_range(0..points.len())];
    while chosen.len() < k {
        let mut best = (f64::NEG_INFINITY, 0usize);
        for (i, p) in points.iter().enumerate() {
            if chosen.contains(&i) {
                continue;
            }
            let d = chosen.iter().map(|&c| sq_dist(p, &points[c])).fold(f64::MAX, f64::min);
            if d > best.0 + 1e-15 {
                best = (d, i);
            }
        }
        chosen.push(best.1);
    }
    chosen.into_iter().map(|i| points[i].clone()).collect()
}

/// Run Lloyd iterations and return the (optionally trimmed) partition.
pub fn kmeans(
    sim: &SimilarityMatrix,
    config: &KmeansConfig,
) -> Result<ClusterAssignment, ClusterError> {
    let n = sim.n();
    let k = config.k;
    if k == 0 || k > n {
        return Err(ClusterError::BadK { k, n });
    }
    let points = normalized_rows(sim);
    let mut centroids = seed_centroids(&points, k, config.seed);
    let mut assignment = vec![0usize; n];
    let mut last_inertia = f64::MAX;

    for _ in 0..config.max_iters {
        // Assign to the nearest centroid, ties toward the smaller index.
        for (i, p) in points.iter().enumerate() {
            let mut best = (f64::MAX, 0usize);
            for (c, centroid) in centroids.iter().enumerate() {
                let d = sq_dist(p, centroid);
                if d < best.0 - 1e-15 {
                    best = (d, c);
                }
            }
            assignment[i] = best.1;
        }
        // Re-seed any emptied cluster with the point farthest from its
        // centroid (deterministic, keeps k clusters alive).
        loop {
            let mut sizes = vec![0usize; k];
            for &a in &assignment {
                sizes[a] += 1;
            }
            let Some(empty) = sizes.iter().position(|&s| s == 0) else { break };
            let far = (0..n)
                .max_by(|&a, &b| {
                    let da = sq_dist(&points[a], &centroids[assignment[a]]);
                    let db = sq_dist(&points[b], &centroids[assignment[b]]);
                    da.partial_cmp(&db).unwrap().then(b.cmp(&a))
                })
                .expect("n >= k >= 1");
            assignment[far] = empty;
            centroids[empty] = points[far].clone();
        }
        // Recompute centroids.
        let dim = points[0].len();
        let mut sums = vec![vec![0.0; dim]; k];
        let mut sizes = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignment) {
            sizes[a] += 1;
            for (s, x) in sums[a].iter_mut().zip(p) {
                *s += x;
            }
        }
        let mut movement = 0.0f64;
        for c in 0..k {
            for s in &mut sums[c] {
                *s /= sizes[c] as f64;
            }
            movement = movement.max(sq_dist(&sums[c], &centroids[c]).sqrt());
            centroids[c] = std::mem::take(&mut sums[c]);
        }
        let inertia: f64 =
            points.iter().zip(&assignment).map(|(p, &a)| sq_dist(p, &centroids[a])).sum();
        assert!(
            inertia <= last_inertia + 1e-9,
            "k-means inertia increased: {last_inertia} -> {inertia}"
        );
        last_inertia = inertia;
        if movement < config.tol {
            break;
        }
    }

    // Group members per cluster, then trim outliers to singletons.
    let mut clusters: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &a) in assignment.iter().enumerate() {
        clusters[a].push(i);
    }
    let mut out: Vec<Vec<usize>> = Vec::new();
    let mut dropped: Vec<usize> = Vec::new();
    for (c, members) in clusters.into_iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        match config.threshold_percentile {
            None => out.push(members),
            Some(p) => {
                let dists: Vec<f64> =
                    members.iter().map(|&i| sq_dist(&points[i], &centroids[c]).sqrt()).collect();
                let cutoff = threshold_cutoff(&dists, p).expect("non-empty cluster");
                let (kept, cut): (Vec<usize>, Vec<usize>) = members
                    .iter()
                    .zip(&dists)
                    .partition_map(|(&m, &d)| if d <= cutoff { Ok(m) } else { Err(m) });
                if !kept.is_empty() {
                    out.push(kept);
                }
                dropped.extend(cut);
            }
        }
    }
    dropped.sort_unstable();
    out.extend(dropped.into_iter().map(|i| vec![i]));
    out.sort_by_key(|c| c[0]);
    Ok(ClusterAssignment { clusters: out, mode: AssignmentMode::Partition })
}

/// Tiny stand-in for itertools' partition_map over a zip.
trait PartitionMapExt: Iterator + Sized {
    fn partition_map<A, B, F>(self, f: F) -> (Vec<A>, Vec<B>)
    where
        F: Fn(Self::Item) -> Result<A, B>,
    {
        let mut left = Vec::new();
        let mut right = Vec::new();
        for item in self {
            match f(item) {
                Ok(a) => left.push(a),
                Err(b) => right.push(b),
            }
        }
        (left, right)
    }
}

impl<I: Iterator> PartitionMapExt for I {}

/// Centroid-distance cutoff under the nearest-rank percentile rule; the
/// members kept are exactly those at or below it.
pub(crate) fn threshold_cutoff(dists: &[f64], percentile: f64) -> Option<f64> {
    nearest_rank_percentile(dists, percentile)
}

#[cfg(test)]
mod tests {
    use super::super::test_fixtures::planted_two_group_similarity;
    use super::*;

    #[test]
    fn k1_without_threshold_is_one_cluster() {
        let sim = planted_two_group_similarity((4, 4));
        let mut config = KmeansConfig::new(1, 3);
        config.threshold_percentile = None;
        let a = kmeans(&sim, &config).unwrap();
        assert_eq!(a.clusters.len(), 1);
        assert_eq!(a.clusters[0].len(), 8);
    }

    #[test]
    fn recovers_planted_groups_before_thresholding() {
        let sim = planted_two_group_similarity((5, 5));
        let mut config = KmeansConfig::new(2, 9);
        config.threshold_percentile = None;
        let a = kmeans(&sim, &config).unwrap();
        let mut clusters = a.clusters.clone();
        clusters.sort_by_key(|c| c[0]);
        assert_eq!(clusters[0], vec![0, 1, 2, 3, 4]);
        assert_eq!(clusters[1], vec![5, 6, 7, 8, 9]);
    }

    #[test]
    fn percentile_cutoff_keeps_nearest_rank_subset() {
        // Distances 1..10 at the 40th percentile: cutoff is the 4th
        // smallest (4.0), so exactly 4 members stay.
        let dists: Vec<f64> = (1..=10).map(|x| x as f64).collect();
        let cutoff = threshold_cutoff(&dists, 40.0).unwrap();
        assert_eq!(cutoff, 4.0);
        assert_eq!(dists.iter().filter(|&&d| d <= cutoff).count(), 4);
    }

    #[test]
    fn thresholding_never_grows_clusters_and_covers_orgs() {
        let sim = planted_two_group_similarity((6, 6));
        let trimmed = kmeans(&sim, &KmeansConfig::new(2, 1)).unwrap();
        let mut config = KmeansConfig::new(2, 1);
        config.threshold_percentile = None;
        let full = kmeans(&sim, &config).unwrap();
        assert!(trimmed.is_partition_of(12));
        let max_trimmed = trimmed.clusters.iter().map(|c| c.len()).max().unwrap();
        let max_full = full.clusters.iter().map(|c| c.len()).max().unwrap();
        assert!(max_trimmed <= max_full);
    }

    #[test]
    fn bad_k_is_rejected() {
        let sim = planted_two_group_similarity((3, 3));
        assert!(kmeans(&sim, &KmeansConfig::new(7, 1)).is_err());
        assert!(kmeans(&sim, &KmeansConfig::new(0, 1)).is_err());
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let sim = planted_two_group_similarity((5, 5));
        let a = kmeans(&sim, &KmeansConfig::new(3, 17)).unwrap();
        let b = kmeans(&sim, &KmeansConfig::new(3, 17)).unwrap();
        assert_eq!(a, b);
    }
}
