//! Co-clustering-driven prediction: EWMA over cluster-pooled series, with
//! candidate pools taken from dense co-cluster blocks.

use std::collections::{HashMap, HashSet};

use super::cross_association::{cross_associate, BinaryMatrix, CoClustering};
use super::BaselineError;
use crate::corpus::{ExperimentWindow, OrgId, Subnet24};
use crate::predictor::{ewma_forecast, Blacklist, ForecastParams, SeriesMode};

/// Binary victims-by-attackers training matrix for one window.
#[derive(Debug, Clone)]
pub struct VictimAttackerMatrix {
    pub orgs: Vec<OrgId>,
    pub attackers: Vec<Subnet24>,
    pub matrix: BinaryMatrix,
}

/// Build the matrix over the window's selected orgs and the union of their
/// training sources (sorted, so column order is canonical).
pub fn victim_attacker_matrix(window: &ExperimentWindow) -> VictimAttackerMatrix {
    let mut attackers: Vec<Subnet24> = window
        .orgs
        .iter()
        .flat_map(|org| window.logs[org].events.iter().map(|e| e.source))
        .collect::<HashSet<_>>()
        .into_iter()
        .collect();
    attackers.sort_unstable();
    let col_of: HashMap<Subnet24, usize> =
        attackers.iter().enumerate().map(|(i, s)| (*s, i)).collect();
    let mut matrix = BinaryMatrix::new(window.orgs.len(), attackers.len());
    for (r, org) in window.orgs.iter().enumerate() {
        for ev in &window.logs[org].events {
            matrix.set(r, col_of[&ev.source], true);
        }
    }
    VictimAttackerMatrix { orgs: window.orgs.clone(), attackers, matrix }
}

/// Per-(row-group, source) pooled daily series: a source is "on" for the
/// group on a day if any member saw it then (binary mode) or contributes
/// summed occurrence counts (count mode).
fn pooled_series(
    window: &ExperimentWindow,
    orgs: &[OrgId],
    row_groups: &[usize],
    mode: SeriesMode,
) -> HashMap<(usize, Subnet24), Vec<f64>> {
    let day_index: HashMap<u32, usize> =
        window.train_days.iter().enumerate().map(|(i, d)| (*d, i)).collect();
    let mut series: HashMap<(usize, Subnet24), Vec<f64>> = HashMap::new();
    for (r, org) in orgs.iter().enumerate() {
        let g = row_groups[r];
        for ev in &window.logs[org].events {
            if let Some(&i) = day_index.get(&ev.day) {
                let s = series
                    .entry((g, ev.source))
                    .or_insert_with(|| vec![0.0; window.train_days.len()]);
                match mode {
                    SeriesMode::Binary => s[i] = 1.0,
                    SeriesMode::Counts => s[i] += 1.0,
                }
            }
        }
    }
    series
}

/// Predict for every org from a co-clustering of `vam`: the candidate pool
/// is the org's own sources plus attackers whose column group forms an
/// above-mean-density block with the org's row group, scored by EWMA over
/// the row group's pooled series.
fn predict_from_coclustering(
    window: &ExperimentWindow,
    vam: &VictimAttackerMatrix,
    cc: &CoClustering,
    params: &ForecastParams,
    mode: SeriesMode,
    only_org: Option<usize>,
) -> Vec<Blacklist> {
    let mean_density = vam.matrix.mean_density();
    let mut dense: Vec<Vec<bool>> = vec![vec![false; cc.l]; cc.k];
    for g in 0..cc.k {
        for h in 0..cc.l {
            dense[g][h] = cc.density(&vam.matrix, g, h) > mean_density;
        }
    }
    let col_group_of: HashMap<Subnet24, usize> = vam
        .attackers
        .iter()
        .enumerate()
        .map(|(c, s)| (*s, cc.col_groups[c]))
        .collect();
    let series = pooled_series(window, &vam.orgs, &cc.row_groups, mode);
    // Sources each row group has any signal for.
    let mut group_sources: HashMap<usize, HashSet<Subnet24>> = HashMap::new();
    for (g, source) in series.keys() {
        group_sources.entry(*g).or_default().insert(*source);
    }

    let mut out = Vec::new();
    for (r, org) in vam.orgs.iter().enumerate() {
        if only_org.is_some_and(|o| o != r) {
            continue;
        }
        let g = cc.row_groups[r];
        let own: HashSet<Subnet24> = window.logs[org].unique_sources();
        let mut predicted = HashSet::new();
        if let Some(candidates) = group_sources.get(&g) {
            for &source in candidates {
                let in_pool =
                    own.contains(&source) || dense[g][col_group_of[&source]];
                if !in_pool {
                    continue;
                }
                let score = ewma_forecast(&series[&(g, source)], params.alpha)
                    .expect("pooled series is non-empty");
                if score > params.tau {
                    predicted.insert(source);
                }
            }
        }
        out.push(Blacklist { org: org.clone(), predicted });
    }
    out
}

/// Co-clustering + pooled EWMA prediction for every selected org.
pub fn ts_ca_predict(
    window: &ExperimentWindow,
    params: &ForecastParams,
    mode: SeriesMode,
) -> Vec<Blacklist> {
    ts_ca_predict_detailed(window, params, mode).0
}

/// As [`ts_ca_predict`], also reporting each org's row-group size (its
/// effective cluster in the co-clustering).
pub fn ts_ca_predict_detailed(
    window: &ExperimentWindow,
    params: &ForecastParams,
    mode: SeriesMode,
) -> (Vec<Blacklist>, Vec<usize>) {
    let vam = victim_attacker_matrix(window);
    let cc = cross_associate(&vam.matrix);
    let mut group_sizes = vec![0usize; cc.k];
    for &g in &cc.row_groups {
        group_sizes[g] += 1;
    }
    let sizes = cc.row_groups.iter().map(|&g| group_sizes[g]).collect();
    (predict_from_coclustering(window, &vam, &cc, params, mode, None), sizes)
}

fn cosine_distance_rows(m: &BinaryMatrix, a: usize, b: usize) -> f64 {
    let mut dot = 0u64;
    let mut na = 0u64;
    let mut nb = 0u64;
    for c in 0..m.cols {
        let (x, y) = (m.get(a, c), m.get(b, c));
        dot += u64::from(x && y);
        na += u64::from(x);
        nb += u64::from(y);
    }
    if na == 0 || nb == 0 {
        return 1.0;
    }
    (1.0 - dot as f64 / ((na as f64).sqrt() * (nb as f64).sqrt())).clamp(0.0, 1.0)
}

/// Neighborhood variant: each org pools the logs of its `k` most similar
/// victims (cosine over matrix rows), co-clusters that submatrix, and
/// predicts for itself as in [`ts_ca_predict`].
pub fn ts_ca_knn_predict(
    window: &ExperimentWindow,
    k: usize,
    params: &ForecastParams,
    mode: SeriesMode,
) -> Result<Vec<Blacklist>, BaselineError> {
    let n = window.orgs.len();
    if k >= n {
        return Err(BaselineError::BadK { k, n });
    }
    let vam = victim_attacker_matrix(window);
    let mut out = Vec::with_capacity(n);
    for r in 0..n {
        let mut others: Vec<usize> = (0..n).filter(|&o| o != r).collect();
        others.sort_by(|&a, &b| {
            cosine_distance_rows(&vam.matrix, r, a)
                .partial_cmp(&cosine_distance_rows(&vam.matrix, r, b))
                .unwrap()
                .then(a.cmp(&b))
        });
        let mut members: Vec<usize> = others.into_iter().take(k).collect();
        members.push(r);
        members.sort_unstable();

        // Submatrix restricted to the neighborhood and its sources.
        let sub_orgs: Vec<OrgId> = members.iter().map(|&i| vam.orgs[i].clone()).collect();
        let mut sub_sources: Vec<Subnet24> = sub_orgs
            .iter()
            .flat_map(|org| window.logs[org].events.iter().map(|e| e.source))
            .collect::<HashSet<_>>()
            .into_iter()
            .collect();
        sub_sources.sort_unstable();
        let col_of: HashMap<Subnet24, usize> =
            sub_sources.iter().enumerate().map(|(i, s)| (*s, i)).collect();
        let mut sub = BinaryMatrix::new(members.len(), sub_sources.len());
        for (sr, org) in sub_orgs.iter().enumerate() {
            for ev in &window.logs[org].events {
                sub.set(sr, col_of[&ev.source], true);
            }
        }
        let sub_vam = VictimAttackerMatrix {
            orgs: sub_orgs,
            attackers: sub_sources,
            matrix: sub,
        };
        let cc = cross_associate(&sub_vam.matrix);
        let own_position = members.iter().position(|&i| i == r).unwrap();
        let mut predictions = predict_from_coclustering(
            window,
            &sub_vam,
            &cc,
            params,
            mode,
            Some(own_position),
        );
        out.push(predictions.pop().expect("one prediction for the target org"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{LogEvent, OrgLog};

    fn subnet(v: u32) -> Subnet24 {
        Subnet24::new(v).unwrap()
    }

    /// Window with two planted victim groups: orgs 0-2 see sources 10-14,
    /// orgs 3-5 see sources 20-24, every source on most days.
    fn planted_window(gap_org: usize, gap_source: u32) -> ExperimentWindow {
        let mut logs = HashMap::new();
        let orgs: Vec<OrgId> = (0..6).map(|i| format!("org{i}")).collect();
        for (i, org) in orgs.iter().enumerate() {
            let base = if i < 3 { 10u32 } else { 20u32 };
            let mut events = Vec::new();
            for s in base..base + 5 {
                for day in 0..5u32 {
                    // The gap org never sees gap_source; everyone else does.
                    if i == gap_org && s == gap_source {
                        continue;
                    }
                    events.push(LogEvent { day, source: subnet(s) });
                }
            }
            logs.insert(org.clone(), OrgLog { org: org.clone(), events });
        }
        let truth = orgs.iter().map(|o| (o.clone(), HashSet::new())).collect();
        ExperimentWindow {
            train_days: [0, 1, 2, 3, 4],
            test_day: 5,
            orgs,
            logs,
            truth,
            low_contributors: false,
        }
    }

    #[test]
    fn matrix_has_union_columns_in_sorted_order() {
        let w = planted_window(0, 10);
        let vam = victim_attacker_matrix(&w);
        assert_eq!(vam.matrix.rows, 6);
        assert_eq!(vam.attackers.len(), 10);
        assert!(vam.attackers.windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn group_mates_fill_in_unseen_sources() {
        // org0 never saw source 12, but its co-cluster block is dense with
        // it, so the pooled series predicts it anyway.
        let w = planted_window(0, 12);
        let predictions = ts_ca_predict(&w, &ForecastParams::default(), SeriesMode::Binary);
        let org0 = &predictions[0];
        assert!(org0.predicted.contains(&subnet(12)));
        // And nothing from the other group leaks in.
        assert!(!org0.predicted.contains(&subnet(20)));
    }

    #[test]
    fn ts_ca_contains_local_ts_on_pool_preserving_fixture() {
        let w = planted_window(0, 12);
        let params = ForecastParams::default();
        for (r, org) in w.orgs.iter().enumerate() {
            let local = crate::predictor::predict_blacklist(
                &crate::sharing::AugmentedTrainingSet::local(&w.logs[org]),
                &w.train_days,
                &params,
                SeriesMode::Binary,
            );
            let ca = ts_ca_predict(&w, &params, SeriesMode::Binary);
            assert!(
                local.predicted.is_subset(&ca[r].predicted),
                "pooling dropped a local prediction for org {r}"
            );
        }
    }

    #[test]
    fn singleton_row_group_reduces_to_local_ts() {
        // Two tightly matched orgs plus one unrelated org: the loner lands
        // in its own row group, and its prediction must equal plain local
        // TS on its log.
        let orgs: Vec<OrgId> = (0..3).map(|i| format!("org{i}")).collect();
        let mut logs = HashMap::new();
        for (i, org) in orgs.iter().enumerate() {
            let sources: Vec<u32> = if i < 2 { (10..18).collect() } else { (40..43).collect() };
            let mut events = Vec::new();
            for (si, s) in sources.iter().enumerate() {
                for day in 0..5u32 {
                    // The loner's sources are sparse in time so its blocks
                    // sit below the matrix mean density.
                    if i == 2 && (day as usize + si) % 3 != 0 {
                        continue;
                    }
                    events.push(LogEvent { day, source: subnet(*s) });
                }
            }
            logs.insert(org.clone(), OrgLog { org: org.clone(), events });
        }
        let truth = orgs.iter().map(|o| (o.clone(), HashSet::new())).collect();
        let w = ExperimentWindow {
            train_days: [0, 1, 2, 3, 4],
            test_day: 5,
            orgs,
            logs,
            truth,
            low_contributors: false,
        };
        let params = ForecastParams::default();
        let (predictions, group_sizes) =
            ts_ca_predict_detailed(&w, &params, SeriesMode::Binary);
        assert_eq!(group_sizes[2], 1, "org2 should sit alone in its row group");
        let local = crate::predictor::predict_blacklist(
            &crate::sharing::AugmentedTrainingSet::local(&w.logs["org2"]),
            &w.train_days,
            &params,
            SeriesMode::Binary,
        );
        assert_eq!(predictions[2].predicted, local.predicted);
    }

    #[test]
    fn knn_neighborhood_pools_group_sources() {
        // org0 never saw source 12. Its k=4 neighborhood covers its whole
        // planted group plus part of the other, so the submatrix keeps its
        // block structure: the co-cluster of org0's group mates is dense in
        // source 12 and the pooled prediction includes it, while the other
        // group's sources stay out.
        let w = planted_window(0, 12);
        let params = ForecastParams::default();
        let knn = ts_ca_knn_predict(&w, 4, &params, SeriesMode::Binary).unwrap();
        assert!(knn[0].predicted.contains(&subnet(12)));
        assert!(!knn[0].predicted.contains(&subnet(20)));
    }

    #[test]
    fn knn_twin_reduces_to_twin_pooled_ts() {
        // org0 and org1 see identical logs; k=1 pairs them.
        let w = planted_window(9, 0); // no gaps
        let params = ForecastParams::default();
        let knn = ts_ca_knn_predict(&w, 1, &params, SeriesMode::Binary).unwrap();
        let local = crate::predictor::predict_blacklist(
            &crate::sharing::AugmentedTrainingSet::local(&w.logs["org0"]),
            &w.train_days,
            &params,
            SeriesMode::Binary,
        );
        assert_eq!(knn[0].predicted, local.predicted);
    }

    #[test]
    fn knn_k_bound() {
        let w = planted_window(9, 0);
        assert!(ts_ca_knn_predict(&w, 6, &ForecastParams::default(), SeriesMode::Binary).is_err());
    }
}
