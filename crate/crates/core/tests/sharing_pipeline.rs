//! Cross-module properties of sharing and prediction: augmentation
//! monotonicity of predicted sets, and the IP2IP injection landing above
//! the default threshold.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use cpb_core::corpus::{LogEvent, OrgLog, Subnet24};
use cpb_core::predictor::{predict_blacklist, ForecastParams, SeriesMode};
use cpb_core::sharing::{augment, IntersectionMode, SharingStrategy};

fn subnet(v: u32) -> Subnet24 {
    Subnet24::new(v).unwrap()
}

fn random_cluster(rng: &mut ChaCha20Rng, orgs: usize) -> Vec<OrgLog> {
    (0..orgs)
        .map(|i| {
            let n = rng.gen_range(5..60);
            let events = (0..n)
                .map(|_| LogEvent {
                    day: rng.gen_range(0..5),
                    source: subnet(rng.gen_range(0..40)),
                })
                .collect();
            OrgLog { org: format!("org{i}"), events }
        })
        .collect()
}

fn predicted_sets(
    cluster: &[OrgLog],
    strategy: SharingStrategy,
    params: &ForecastParams,
) -> Vec<HashSet<Subnet24>> {
    let refs: Vec<&OrgLog> = cluster.iter().collect();
    augment(&refs, strategy, IntersectionMode::UniqueSources, 4)
        .iter()
        .map(|aug| predict_blacklist(aug, &[0, 1, 2, 3, 4], params, SeriesMode::Binary).predicted)
        .collect()
}

#[test]
fn predicted_sets_grow_from_local_to_intersection_to_global() {
    let params = ForecastParams::default();
    let mut rng = ChaCha20Rng::seed_from_u64(0x5EED);
    for trial in 0..20 {
        let cluster = random_cluster(&mut rng, 4);
        let local = predicted_sets(&cluster, SharingStrategy::Local, &params);
        let inter = predicted_sets(&cluster, SharingStrategy::Intersection, &params);
        let global = predicted_sets(&cluster, SharingStrategy::Global, &params);
        for i in 0..cluster.len() {
            assert!(
                local[i].is_subset(&inter[i]),
                "trial {trial}: local not within intersection for org {i}"
            );
            assert!(
                inter[i].is_subset(&global[i]),
                "trial {trial}: intersection not within global for org {i}"
            );
        }
    }
}

#[test]
fn combined_strategy_predictions_contain_both_parts() {
    let params = ForecastParams::default();
    let mut rng = ChaCha20Rng::seed_from_u64(0xFACE);
    for _ in 0..10 {
        let cluster = random_cluster(&mut rng, 3);
        let inter = predicted_sets(&cluster, SharingStrategy::Intersection, &params);
        let ip2ip = predicted_sets(&cluster, SharingStrategy::Ip2Ip, &params);
        let both = predicted_sets(&cluster, SharingStrategy::Ip2IpAndIntersection, &params);
        for i in 0..cluster.len() {
            assert!(inter[i].is_subset(&both[i]));
            assert!(ip2ip[i].is_subset(&both[i]));
        }
    }
}

#[test]
fn injected_correlate_scores_alpha_and_is_predicted_at_default_threshold() {
    // Org a saw 1; org b establishes the 1 <-> 2 correlation. After IP2IP
    // sharing, source 2 enters a's blacklist with score exactly alpha.
    let a = OrgLog {
        org: "a".into(),
        events: vec![LogEvent { day: 4, source: subnet(1) }],
    };
    let b = OrgLog {
        org: "b".into(),
        events: vec![
            LogEvent { day: 0, source: subnet(1) },
            LogEvent { day: 0, source: subnet(2) },
            LogEvent { day: 1, source: subnet(1) },
            LogEvent { day: 1, source: subnet(2) },
        ],
    };
    let cluster = [&a, &b];
    let params = ForecastParams::default();
    let augmented = augment(&cluster, SharingStrategy::Ip2Ip, IntersectionMode::UniqueSources, 4);
    let bl = predict_blacklist(&augmented[0], &[0, 1, 2, 3, 4], &params, SeriesMode::Binary);
    assert!(bl.predicted.contains(&subnet(2)));
}
