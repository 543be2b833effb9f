//! Per-org nearest-neighbor neighborhoods with strength thresholding.

use super::{AssignmentMode, ClusterAssignment, ClusterError, DistanceMatrix};
use crate::util::nearest_rank_percentile;

/// Build one neighborhood per org — itself plus its `k` nearest others —
/// then discard neighborhoods whose mean pairwise distance exceeds the
/// global percentile cutoff; discarded orgs fall back to singletons and
/// predict locally. Orgs can appear in several surviving neighborhoods.
pub fn knn_neighborhoods(
    dist: &DistanceMatrix,
    k: usize,
    threshold_percentile: Option<f64>,
) -> Result<ClusterAssignment, ClusterError> {
    let n = dist.n();
    if k == 0 || k >= n {
        return Err(ClusterError::BadK { k, n });
    }

    let mut neighborhoods: Vec<Vec<usize>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        // Nearest first; ties by org index.
        others.sort_by(|&a, &b| {
            dist.get(i, a).partial_cmp(&dist.get(i, b)).unwrap().then(a.cmp(&b))
        });
        let mut members: Vec<usize> = others.into_iter().take(k).collect();
        members.push(i);
        members.sort_unstable();
        neighborhoods.push(members);
    }

    if let Some(p) = threshold_percentile {
        // Neighborhood strength: mean pairwise distance among members
        // (lower is stronger).
        let strengths: Vec<f64> = neighborhoods.iter().map(|m| mean_pairwise(dist, m)).collect();
        let cutoff = nearest_rank_percentile(&strengths, p).expect("n >= 2");
        for (i, neighborhood) in neighborhoods.iter_mut().enumerate() {
            if strengths[i] > cutoff {
                *neighborhood = vec![i];
            }
        }
    }

    Ok(ClusterAssignment { clusters: neighborhoods, mode: AssignmentMode::Neighborhoods })
}

fn mean_pairwise(dist: &DistanceMatrix, members: &[usize]) -> f64 {
    let mut sum = 0.0;
    let mut pairs = 0u64;
    for (ai, &a) in members.iter().enumerate() {
        for &b in &members[ai + 1..] {
            sum += dist.get(a, b);
            pairs += 1;
        }
    }
    if pairs == 0 {
        0.0
    } else {
        sum / pairs as f64
    }
}
