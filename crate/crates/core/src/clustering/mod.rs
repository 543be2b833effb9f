//! Organization-to-organization (O2O) similarity and the clustering
//! back-ends that consume it.
//!
//! The similarity matrix counts common attacks between every pair of
//! organizations over a training window. It can be built three ways: in the
//! clear, from pairwise PSI-CA runs, or by the server-aided protocol over
//! PRP labels. Clustering itself only ever sees these counts, never raw
//! logs.

use std::collections::HashSet;
use std::fmt::Write as _;

use thiserror::Error;

use crate::corpus::{ExperimentWindow, OrgId, Subnet24};
use crate::exec;

mod agglomerative;
mod kmeans;
mod knn;

pub use agglomerative::agglomerative;
pub use kmeans::{kmeans, KmeansConfig};
pub use knn::knn_neighborhoods;

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("k = {k} out of range for {n} organizations")]
    BadK { k: usize, n: usize },
    #[error("window has {0} organizations; at least 2 are required")]
    TooFewOrgs(usize),
    #[error("similarity session failed for pair ({0}, {1}): {2}")]
    PairSession(OrgId, OrgId, String),
    #[error("server-aided back-end failed: {0}")]
    ServerAided(String),
}

/// Symmetric common-attack counts; `counts[i][i]` is the size of org `i`'s
/// own set under the back-end's semantics (unique sources for plaintext and
/// PSI-CA, occurrence multiset for the server-aided path).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimilarityMatrix {
    n: usize,
    counts: Vec<u64>,
    pub orgs: Vec<OrgId>,
}

impl SimilarityMatrix {
    pub fn new(orgs: Vec<OrgId>) -> Self {
        let n = orgs.len();
        SimilarityMatrix { n, counts: vec![0; n * n], orgs }
    }

    /// Build from explicit counts (row-major), for fixtures and tests.
    pub fn from_counts(orgs: Vec<OrgId>, counts: Vec<u64>) -> Self {
        let n = orgs.len();
        assert_eq!(counts.len(), n * n, "counts must be n*n");
        SimilarityMatrix { n, counts, orgs }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> u64 {
        self.counts[i * self.n + j]
    }

    pub fn set_symmetric(&mut self, i: usize, j: usize, value: u64) {
        self.counts[i * self.n + j] = value;
        self.counts[j * self.n + i] = value;
    }

    /// Row `i` as floats, diagonal included — the org's common-attack
    /// profile against every org, which is all the coordinating authority
    /// has to cluster on.
    pub fn row(&self, i: usize) -> Vec<f64> {
        self.counts[i * self.n..(i + 1) * self.n].iter().map(|&c| c as f64).collect()
    }

    /// Debug dump: header row of org ids, then one row per org.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.orgs.join(","));
        out.push('\n');
        for i in 0..self.n {
            for j in 0..self.n {
                if j > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{}", self.get(i, j));
            }
            out.push('\n');
        }
        out
    }

    /// Symmetry and the min-diagonal bound; used by tests and the crypto
    /// back-ends' cross-checks.
    pub fn check_invariants(&self) -> Result<(), String> {
        for i in 0..self.n {
            for j in 0..self.n {
                if self.get(i, j) != self.get(j, i) {
                    return Err(format!("asymmetric at ({i}, {j})"));
                }
                if i != j && self.get(i, j) > self.get(i, i).min(self.get(j, j)) {
                    return Err(format!("count ({i}, {j}) exceeds a diagonal"));
                }
            }
        }
        Ok(())
    }
}

/// Pairwise cosine distances in [0, 1] derived from similarity rows.
#[derive(Debug, Clone)]
pub struct DistanceMatrix {
    n: usize,
    dist: Vec<f64>,
}

impl DistanceMatrix {
    /// Cosine distance (1 - cosine similarity) between similarity rows.
    /// A zero row is maximally distant from everything but itself.
    pub fn from_similarity(sim: &SimilarityMatrix) -> Self {
        let n = sim.n();
        let rows: Vec<Vec<f64>> = (0..n).map(|i| sim.row(i)).collect();
        let norms: Vec<f64> =
            rows.iter().map(|r| r.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
        let mut dist = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d = if norms[i] == 0.0 || norms[j] == 0.0 {
                    1.0
                } else {
                    let dot: f64 = rows[i].iter().zip(&rows[j]).map(|(a, b)| a * b).sum();
                    (1.0 - dot / (norms[i] * norms[j])).clamp(0.0, 1.0)
                };
                dist[i * n + j] = d;
                dist[j * n + i] = d;
            }
        }
        DistanceMatrix { n, dist }
    }

    /// Explicit distances, for fixtures.
    pub fn from_raw(n: usize, dist: Vec<f64>) -> Self {
        assert_eq!(dist.len(), n * n);
        DistanceMatrix { n, dist }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.n + j]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssignmentMode {
    /// Disjoint clusters covering all orgs.
    Partition,
    /// One neighborhood per org; an org can appear in several.
    Neighborhoods,
}

/// Output of a clustering back-end, in window org indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterAssignment {
    pub clusters: Vec<Vec<usize>>,
    pub mode: AssignmentMode,
}

impl ClusterAssignment {
    /// The set of orgs each org shares with (itself included): its cluster
    /// in partition mode, its own neighborhood otherwise. Orgs dropped by
    /// thresholding sit in singletons and therefore share with nobody.
    pub fn sharing_group(&self, org: usize) -> Vec<usize> {
        match self.mode {
            AssignmentMode::Partition => self
                .clusters
                .iter()
                .find(|c| c.contains(&org))
                .cloned()
                .unwrap_or_else(|| vec![org]),
            AssignmentMode::Neighborhoods => self.clusters[org].clone(),
        }
    }

    /// Partition-mode invariant: disjoint clusters covering 0..n.
    pub fn is_partition_of(&self, n: usize) -> bool {
        let mut seen = HashSet::new();
        for c in &self.clusters {
            for &org in c {
                if org >= n || !seen.insert(org) {
                    return false;
                }
            }
        }
        seen.len() == n
    }
}

/// Which machinery computes the pairwise counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum O2oBackend {
    #[default]
    Plaintext,
    /// One PSI-CA session per pair; counts equal the plaintext ones.
    PsiCa,
    /// PRP-label submission to the authority; counts are min-multiplicity
    /// multiset intersections over (source, day) occurrences.
    ServerAided,
}

fn unique_source_sets(window: &ExperimentWindow) -> Vec<HashSet<Subnet24>> {
    window.orgs.iter().map(|org| window.logs[org].unique_sources()).collect()
}

fn upper_pairs(n: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            pairs.push((i, j));
        }
    }
    pairs
}

fn assemble_plaintext(
    window: &ExperimentWindow,
    sets: &[HashSet<Subnet24>],
    pairs: &[(usize, usize)],
    counts: Vec<u64>,
) -> SimilarityMatrix {
    let mut sim = SimilarityMatrix::new(window.orgs.clone());
    for (i, set) in sets.iter().enumerate() {
        sim.set_symmetric(i, i, set.len() as u64);
    }
    for (&(i, j), c) in pairs.iter().zip(counts) {
        sim.set_symmetric(i, j, c);
    }
    sim
}

/// Plaintext O2O: unique-source set intersections, computed pairwise (in
/// parallel when enabled).
pub fn build_o2o_plaintext(window: &ExperimentWindow) -> Result<SimilarityMatrix, ClusterError> {
    if window.orgs.len() < 2 {
        return Err(ClusterError::TooFewOrgs(window.orgs.len()));
    }
    let sets = unique_source_sets(window);
    let pairs = upper_pairs(sets.len());
    let counts = exec::map_slice(&pairs, |&(i, j)| {
        sets[i].intersection(&sets[j]).count() as u64
    });
    Ok(assemble_plaintext(window, &sets, &pairs, counts))
}

/// Always-sequential variant of [`build_o2o_plaintext`] for benchmarking.
pub fn build_o2o_plaintext_seq(
    window: &ExperimentWindow,
) -> Result<SimilarityMatrix, ClusterError> {
    if window.orgs.len() < 2 {
        return Err(ClusterError::TooFewOrgs(window.orgs.len()));
    }
    let sets = unique_source_sets(window);
    let pairs = upper_pairs(sets.len());
    let counts = exec::map_slice_seq(&pairs, |&(i, j)| {
        sets[i].intersection(&sets[j]).count() as u64
    });
    Ok(assemble_plaintext(window, &sets, &pairs, counts))
}

/// Plaintext O2O under occurrence-multiset semantics: the count for a pair
/// is `sum over sources of min(multiplicity_i, multiplicity_j)` and the
/// diagonal is the org's event count. This is the oracle the server-aided
/// back-end must reproduce exactly.
pub fn build_o2o_plaintext_occurrences(
    window: &ExperimentWindow,
) -> Result<SimilarityMatrix, ClusterError> {
    if window.orgs.len() < 2 {
        return Err(ClusterError::TooFewOrgs(window.orgs.len()));
    }
    let multisets: Vec<std::collections::HashMap<Subnet24, u64>> = window
        .orgs
        .iter()
        .map(|org| {
            let mut counts = std::collections::HashMap::new();
            for ev in &window.logs[org].events {
                *counts.entry(ev.source).or_insert(0u64) += 1;
            }
            counts
        })
        .collect();
    let pairs = upper_pairs(multisets.len());
    let counts = exec::map_slice(&pairs, |&(i, j)| {
        let (small, large) = if multisets[i].len() <= multisets[j].len() {
            (&multisets[i], &multisets[j])
        } else {
            (&multisets[j], &multisets[i])
        };
        small
            .iter()
            .map(|(s, c)| large.get(s).map_or(0, |d| (*c).min(*d)))
            .sum::<u64>()
    });
    let mut sim = SimilarityMatrix::new(window.orgs.clone());
    for (i, org) in window.orgs.iter().enumerate() {
        sim.set_symmetric(i, i, window.logs[org].events.len() as u64);
    }
    for (&(i, j), c) in pairs.iter().zip(counts) {
        sim.set_symmetric(i, j, c);
    }
    Ok(sim)
}

/// Build the similarity matrix with the selected back-end.
pub fn build_o2o(
    window: &ExperimentWindow,
    backend: O2oBackend,
) -> Result<SimilarityMatrix, ClusterError> {
    match backend {
        O2oBackend::Plaintext => build_o2o_plaintext(window),
        O2oBackend::PsiCa => build_o2o_psi_ca(window),
        O2oBackend::ServerAided => build_o2o_server_aided(window),
    }
}

/// O2O via one PSI-CA session per pair. The counts must equal the plaintext
/// back-end's exactly; only the computation is oblivious.
pub fn build_o2o_psi_ca(window: &ExperimentWindow) -> Result<SimilarityMatrix, ClusterError> {
    if window.orgs.len() < 2 {
        return Err(ClusterError::TooFewOrgs(window.orgs.len()));
    }
    let sets = unique_source_sets(window);
    let elements: Vec<Vec<u64>> = sets
        .iter()
        .map(|s| s.iter().map(|x| x.value() as u64).collect())
        .collect();
    let pairs = upper_pairs(sets.len());
    let config = crate::psi::PsiConfig::default();
    let results = exec::map_slice(&pairs, |&(i, j)| {
        crate::psi::psi_ca_local(&elements[i], &elements[j], &config, None)
            .map(|(client, _)| client.cardinality)
            .map_err(|e| (i, j, e.to_string()))
    });
    let mut counts = Vec::with_capacity(results.len());
    for r in results {
        match r {
            Ok(c) => counts.push(c),
            Err((i, j, msg)) => {
                return Err(ClusterError::PairSession(
                    window.orgs[i].clone(),
                    window.orgs[j].clone(),
                    msg,
                ))
            }
        }
    }
    Ok(assemble_plaintext(window, &sets, &pairs, counts))
}

/// O2O via the server-aided protocol: orgs submit PRP-labeled multisets and
/// the authority intersects labels.
pub fn build_o2o_server_aided(
    window: &ExperimentWindow,
) -> Result<SimilarityMatrix, ClusterError> {
    if window.orgs.len() < 2 {
        return Err(ClusterError::TooFewOrgs(window.orgs.len()));
    }
    let mut rng = rand::rngs::OsRng;
    let key = crate::server_aided::PrpKey::random(&mut rng);
    let logs = window.ordered_logs();
    let submissions = exec::map_slice(&logs, |log| {
        crate::server_aided::encrypt_dataset(log, &key)
    });
    let mut labeled = Vec::with_capacity(submissions.len());
    for s in submissions {
        labeled.push(s.map_err(|e| ClusterError::ServerAided(e.to_string()))?);
    }
    let buffer = crate::server_aided::sta_o2o(&labeled)
        .map_err(|e| ClusterError::ServerAided(e.to_string()))?;
    Ok(buffer.o2o.clone())
}

#[cfg(test)]
pub(crate) mod test_fixtures {
    use super::SimilarityMatrix;

    /// Two planted groups: dense within-group counts, zero across.
    pub(crate) fn planted_two_group_similarity(sizes: (usize, usize)) -> SimilarityMatrix {
        let n = sizes.0 + sizes.1;
        let orgs = (0..n).map(|i| format!("org{i:03}")).collect();
        let mut counts = vec![0u64; n * n];
        for i in 0..n {
            for j in 0..n {
                let same = (i < sizes.0) == (j < sizes.0);
                counts[i * n + j] = if i == j {
                    100
                } else if same {
                    // Slight asymmetry in magnitudes avoids exact ties.
                    80 + ((i * 7 + j * 3) % 5) as u64
                } else {
                    ((i + j) % 2) as u64
                };
            }
        }
        // Symmetrize.
        for i in 0..n {
            for j in (i + 1)..n {
                let v = counts[i * n + j];
                counts[j * n + i] = v;
            }
        }
        SimilarityMatrix::from_counts(orgs, counts)
    }
}
