//! Pairwise collaboration selection: global top-percent of pairs by
//! common-attack count, or each org's top-x partners. Selected pairs share
//! intersections pairwise, never transitively.

use std::collections::BTreeSet;

use super::BaselineError;
use crate::clustering::SimilarityMatrix;
use crate::corpus::{LogEvent, OrgLog};
use crate::sharing::share_intersection;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PairSelectionMode {
    /// Keep the top `percent` of all n(n-1)/2 pairs (ceiling rule).
    GlobalPercent(f64),
    /// Each org picks its `x` highest-count partners; directed picks are
    /// deduplicated into unordered pairs.
    LocalTopX(usize),
}

#[derive(Debug, Clone)]
pub struct PairSelection {
    /// Unordered `(i, j)` with `i < j`, in window org indices.
    pub pairs: BTreeSet<(usize, usize)>,
    pub mode: PairSelectionMode,
}

impl PairSelection {
    /// The selected partners of org `i`.
    pub fn partners_of(&self, i: usize) -> Vec<usize> {
        self.pairs
            .iter()
            .filter_map(|&(a, b)| {
                if a == i {
                    Some(b)
                } else if b == i {
                    Some(a)
                } else {
                    None
                }
            })
            .collect()
    }
}

/// Number of unordered pairs among `n` orgs.
pub fn candidate_pair_count(n: usize) -> usize {
    n * (n - 1) / 2
}

pub fn select_pairs(
    o2o: &SimilarityMatrix,
    mode: PairSelectionMode,
) -> Result<PairSelection, BaselineError> {
    let n = o2o.n();
    let mut pairs = BTreeSet::new();
    match mode {
        PairSelectionMode::GlobalPercent(percent) => {
            if !(0.0..=100.0).contains(&percent) {
                return Err(BaselineError::BadPercent(percent));
            }
            let mut ranked: Vec<(usize, usize)> = Vec::with_capacity(candidate_pair_count(n));
            for i in 0..n {
                for j in (i + 1)..n {
                    ranked.push((i, j));
                }
            }
            ranked.sort_by(|&a, &b| {
                o2o.get(b.0, b.1).cmp(&o2o.get(a.0, a.1)).then(a.cmp(&b))
            });
            let keep = ((percent / 100.0) * ranked.len() as f64).ceil() as usize;
            pairs.extend(ranked.into_iter().take(keep));
        }
        PairSelectionMode::LocalTopX(x) => {
            for i in 0..n {
                let mut partners: Vec<usize> = (0..n).filter(|&j| j != i).collect();
                partners.sort_by(|&a, &b| {
                    o2o.get(i, b).cmp(&o2o.get(i, a)).then(a.cmp(&b))
                });
                for &j in partners.iter().take(x) {
                    pairs.insert((i.min(j), i.max(j)));
                }
            }
        }
    }
    Ok(PairSelection { pairs, mode })
}

/// Extra events per org under pairwise intersection sharing with the
/// selected partners only. An org gains nothing from partners of its
/// partners.
pub fn pairwise_intersection_extras(
    logs: &[&OrgLog],
    selection: &PairSelection,
) -> Vec<Vec<LogEvent>> {
    let mut extras: Vec<Vec<LogEvent>> = vec![Vec::new(); logs.len()];
    for &(i, j) in &selection.pairs {
        let pair = [logs[i], logs[j]];
        let shared = share_intersection(&pair);
        let [to_i, to_j]: [Vec<LogEvent>; 2] =
            shared.try_into().expect("two extras for two logs");
        extras[i].extend(to_i);
        extras[j].extend(to_j);
    }
    extras
}
