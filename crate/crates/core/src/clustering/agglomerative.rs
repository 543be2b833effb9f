//! Bottom-up average-linkage clustering over cosine distances.

use super::{AssignmentMode, ClusterAssignment, ClusterError, DistanceMatrix};

/// Merge the closest pair of clusters (average linkage) until `k` remain.
/// Ties break toward the lexicographically smallest pair of cluster
/// representatives, so the result is deterministic.
pub fn agglomerative(
    dist: &DistanceMatrix,
    k: usize,
) -> Result<ClusterAssignment, ClusterError> {
    let n = dist.n();
    if k == 0 || k > n {
        return Err(ClusterError::BadK { k, n });
    }
    let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();

    while clusters.len() > k {
        let mut best: Option<(f64, usize, usize)> = None;
        for a in 0..clusters.len() {
            for b in (a + 1)..clusters.len() {
                let d = average_linkage(dist, &clusters[a], &clusters[b]);
                let candidate = (d, a, b);
                best = match best {
                    None => Some(candidate),
                    Some(current) => {
                        if d < current.0 - 1e-15 {
                            Some(candidate)
                        } else {
                            Some(current)
                        }
                    }
                };
            }
        }
        let (_, a, b) = best.expect("more than k clusters implies a mergeable pair");
        let merged = clusters.remove(b);
        clusters[a].extend(merged);
        clusters[a].sort_unstable();
    }

    clusters.sort_by_key(|c| c[0]);
    Ok(ClusterAssignment { clusters, mode: AssignmentMode::Partition })
}

fn average_linkage(dist: &DistanceMatrix, a: &[usize], b: &[usize]) -> f64 {
    let mut sum = 0.0;
    for &i in a {
        for &j in b {
            sum += dist.get(i, j);
        }
    }
    sum / (a.len() * b.len()) as f64
}
