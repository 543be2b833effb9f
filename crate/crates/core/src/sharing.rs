//! Within-cluster data-sharing strategies.
//!
//! Each strategy takes the ordered logs of one cluster and produces, per
//! member, the extra `(day, source)` events it receives from its peers. The
//! victim of an extra event is implicitly the recipient; extras merge into
//! the recipient's daily series ahead of forecasting.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use crate::corpus::{LogEvent, OrgLog, Subnet24};

/// Cluster-wide heavy-hitter cap: correlations are tracked for the top-1000
/// attackers rather than the whole /24 space.
pub const HEAVY_HITTER_LIMIT: usize = 1000;
/// Correlates pulled per observed heavy hitter.
pub const CORRELATES_PER_SOURCE: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SharingStrategy {
    /// Share nothing; predict from local data only.
    Local,
    /// Every org receives every peer event (no-privacy upper bound).
    Global,
    /// Each org receives peer events only for sources both already observed.
    Intersection,
    /// Each org receives synthetic events for attackers correlated with the
    /// heavy hitters it has already observed.
    Ip2Ip,
    /// Union of the intersection and IP2IP extras.
    Ip2IpAndIntersection,
}

impl SharingStrategy {
    pub const ALL: [SharingStrategy; 5] = [
        SharingStrategy::Local,
        SharingStrategy::Global,
        SharingStrategy::Intersection,
        SharingStrategy::Ip2Ip,
        SharingStrategy::Ip2IpAndIntersection,
    ];
}

impl fmt::Display for SharingStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SharingStrategy::Local => "local",
            SharingStrategy::Global => "global",
            SharingStrategy::Intersection => "intersection",
            SharingStrategy::Ip2Ip => "ip2ip",
            SharingStrategy::Ip2IpAndIntersection => "ip2ip+intersection",
        };
        f.write_str(s)
    }
}

impl FromStr for SharingStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "local" => Ok(SharingStrategy::Local),
            "global" => Ok(SharingStrategy::Global),
            "intersection" => Ok(SharingStrategy::Intersection),
            "ip2ip" => Ok(SharingStrategy::Ip2Ip),
            "ip2ip+intersection" | "ip2ip_and_intersection" => {
                Ok(SharingStrategy::Ip2IpAndIntersection)
            }
            other => Err(format!("unknown sharing strategy '{other}'")),
        }
    }
}

/// How intersection sharing pairs up occurrences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IntersectionMode {
    /// A peer's full event history for every common source.
    #[default]
    UniqueSources,
    /// Only occurrences up to the pairwise minimum multiplicity per source,
    /// matching what the server-aided protocol can deliver.
    MinMultiplicity,
}

/// An organization's training input: its own log plus shared extras.
#[derive(Debug, Clone)]
pub struct AugmentedTrainingSet<'a> {
    pub base: &'a OrgLog,
    pub extra: Vec<LogEvent>,
}

impl<'a> AugmentedTrainingSet<'a> {
    /// No collaboration: the org trains on its own log alone.
    pub fn local(base: &'a OrgLog) -> Self {
        AugmentedTrainingSet { base, extra: Vec::new() }
    }
}

/// Intersection sharing over unique source sets: org `i` receives, from
/// each peer `j`, every event of `j` whose source both already observed.
pub fn share_intersection(cluster: &[&OrgLog]) -> Vec<Vec<LogEvent>> {
    let uniques: Vec<HashSet<Subnet24>> =
        cluster.iter().map(|log| log.unique_sources()).collect();
    (0..cluster.len())
        .map(|i| {
            let mut extra = Vec::new();
            for (j, peer) in cluster.iter().enumerate() {
                if j == i {
                    continue;
                }
                extra.extend(peer.events.iter().filter(|e| uniques[i].contains(&e.source)));
            }
            extra
        })
        .collect()
}

/// Occurrences of a log grouped by source, each list sorted by day with the
/// original insertion order breaking ties. This is the occurrence numbering
/// the server-aided path uses, so both sides pair identically.
fn occurrences_by_source(log: &OrgLog) -> HashMap<Subnet24, Vec<LogEvent>> {
    let mut sorted: Vec<(usize, LogEvent)> = log.events.iter().copied().enumerate().collect();
    sorted.sort_by_key(|(idx, ev)| (ev.day, *idx));
    let mut map: HashMap<Subnet24, Vec<LogEvent>> = HashMap::new();
    for (_, ev) in sorted {
        map.entry(ev.source).or_default().push(ev);
    }
    map
}

/// Intersection sharing under min-multiplicity multiset semantics: for each
/// common source, org `i` receives the peer's occurrences numbered up to the
/// smaller of the two multiplicities.
pub fn share_intersection_min_multiplicity(cluster: &[&OrgLog]) -> Vec<Vec<LogEvent>> {
    let occs: Vec<HashMap<Subnet24, Vec<LogEvent>>> =
        cluster.iter().map(|log| occurrences_by_source(log)).collect();
    (0..cluster.len())
        .map(|i| {
            let mut extra = Vec::new();
            for j in 0..cluster.len() {
                if j == i {
                    continue;
                }
                for (source, own) in &occs[i] {
                    if let Some(peers) = occs[j].get(source) {
                        let take = own.len().min(peers.len());
                        extra.extend_from_slice(&peers[..take]);
                    }
                }
            }
            extra
        })
        .collect()
}

/// Everyone receives everything (upper-bound baseline, no privacy).
pub fn share_global(cluster: &[&OrgLog]) -> Vec<Vec<LogEvent>> {
    (0..cluster.len())
        .map(|i| {
            let mut extra = Vec::new();
            for (j, peer) in cluster.iter().enumerate() {
                if j != i {
                    extra.extend_from_slice(&peer.events);
                }
            }
            extra
        })
        .collect()
}

/// The cluster's most frequent attackers by total event count, capped at
/// [`HEAVY_HITTER_LIMIT`], ties broken by numeric source value.
#[derive(Debug, Clone)]
pub struct HeavyHitters {
    pub sources: Vec<Subnet24>,
}

impl HeavyHitters {
    pub fn as_set(&self) -> HashSet<Subnet24> {
        self.sources.iter().copied().collect()
    }
}

pub fn heavy_hitters(cluster: &[&OrgLog], limit: usize) -> HeavyHitters {
    let mut counts: HashMap<Subnet24, u64> = HashMap::new();
    for log in cluster {
        for ev in &log.events {
            *counts.entry(ev.source).or_insert(0) += 1;
        }
    }
    let mut ranked: Vec<(Subnet24, u64)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(limit);
    HeavyHitters { sources: ranked.into_iter().map(|(s, _)| s).collect() }
}

/// Pairwise co-occurrence counts between the cluster's heavy hitters: the
/// weight of `{a, b}` is the number of `(org, day)` slots in which both
/// attacked.
#[derive(Debug, Clone)]
pub struct Ip2IpMatrix {
    domain: HashSet<Subnet24>,
    weights: HashMap<(u32, u32), u64>,
    partners: HashMap<u32, Vec<(u32, u64)>>,
}

impl Ip2IpMatrix {
    /// Assemble from externally computed weights (e.g. estimates read back
    /// from an aggregated sketch). Zero weights are dropped; keys are
    /// normalized to unordered pairs.
    pub fn from_weights(
        domain: HashSet<Subnet24>,
        raw: impl IntoIterator<Item = ((Subnet24, Subnet24), u64)>,
    ) -> Self {
        let mut weights: HashMap<(u32, u32), u64> = HashMap::new();
        for ((a, b), w) in raw {
            if w == 0 || a == b {
                continue;
            }
            weights.insert(pair_key(a, b), w);
        }
        let mut partners: HashMap<u32, Vec<(u32, u64)>> = HashMap::new();
        for (&(a, b), &w) in &weights {
            partners.entry(a).or_default().push((b, w));
            partners.entry(b).or_default().push((a, w));
        }
        for list in partners.values_mut() {
            list.sort_by(|x, y| y.1.cmp(&x.1).then_with(|| x.0.cmp(&y.0)));
        }
        Ip2IpMatrix { domain, weights, partners }
    }

    pub fn domain(&self) -> &HashSet<Subnet24> {
        &self.domain
    }

    /// Symmetric lookup; identical pairs have weight zero.
    pub fn weight(&self, a: Subnet24, b: Subnet24) -> u64 {
        if a == b {
            return 0;
        }
        let key = pair_key(a, b);
        self.weights.get(&key).copied().unwrap_or(0)
    }

    /// Up to `limit` positively-correlated partners of `s`, best first,
    /// ties by numeric value. Empty when `s` is outside the domain.
    pub fn top_correlated(&self, s: Subnet24, limit: usize) -> Vec<Subnet24> {
        if !self.domain.contains(&s) {
            return Vec::new();
        }
        let mut out: Vec<Subnet24> = self
            .partners
            .get(&s.value())
            .map(|list| {
                list.iter()
                    .take(limit)
                    .map(|(v, _)| Subnet24::new(*v).expect("partner in range"))
                    .collect()
            })
            .unwrap_or_default();
        out.truncate(limit);
        out
    }
}

fn pair_key(a: Subnet24, b: Subnet24) -> (u32, u32) {
    let (x, y) = (a.value(), b.value());
    if x < y {
        (x, y)
    } else {
        (y, x)
    }
}

/// Count heavy-hitter co-occurrences across the cluster's `(org, day)`
/// slots. One slot contributes at most 1 to each pair, regardless of event
/// multiplicity.
pub fn build_ip2ip(cluster: &[&OrgLog], hh: &HeavyHitters) -> Ip2IpMatrix {
    let domain = hh.as_set();
    let mut weights: HashMap<(u32, u32), u64> = HashMap::new();
    for log in cluster {
        let mut per_day: HashMap<u32, BTreeSet<u32>> = HashMap::new();
        for ev in &log.events {
            if domain.contains(&ev.source) {
                per_day.entry(ev.day).or_default().insert(ev.source.value());
            }
        }
        for present in per_day.values() {
            let values: Vec<u32> = present.iter().copied().collect();
            for (ai, &a) in values.iter().enumerate() {
                for &b in &values[ai + 1..] {
                    *weights.entry((a, b)).or_insert(0) += 1;
                }
            }
        }
    }

    let mut partners: HashMap<u32, Vec<(u32, u64)>> = HashMap::new();
    for (&(a, b), &w) in &weights {
        partners.entry(a).or_default().push((b, w));
        partners.entry(b).or_default().push((a, w));
    }
    for list in partners.values_mut() {
        list.sort_by(|x, y| y.1.cmp(&x.1).then_with(|| x.0.cmp(&y.0)));
    }
    Ip2IpMatrix { domain, weights, partners }
}

/// IP2IP sharing: for every heavy hitter an org has observed, its top
/// correlates the org has *not* observed are injected as one synthetic event
/// each on `inject_day` (the final training day), strong enough to cross the
/// default threshold and weak enough to decay.
pub fn share_ip2ip(
    cluster: &[&OrgLog],
    matrix: &Ip2IpMatrix,
    inject_day: u32,
) -> Vec<Vec<LogEvent>> {
    cluster
        .iter()
        .map(|log| {
            let unique = log.unique_sources();
            let mut observed_hh: Vec<Subnet24> = unique
                .iter()
                .copied()
                .filter(|s| matrix.domain.contains(s))
                .collect();
            observed_hh.sort_unstable();
            let mut gained: BTreeSet<Subnet24> = BTreeSet::new();
            for s in observed_hh {
                for c in matrix.top_correlated(s, CORRELATES_PER_SOURCE) {
                    if !unique.contains(&c) {
                        gained.insert(c);
                    }
                }
            }
            gained.into_iter().map(|source| LogEvent { day: inject_day, source }).collect()
        })
        .collect()
}

/// Apply `strategy` to one cluster, producing each member's augmented
/// training set. `inject_day` is the window's final training day.
pub fn augment<'a>(
    cluster: &[&'a OrgLog],
    strategy: SharingStrategy,
    mode: IntersectionMode,
    inject_day: u32,
) -> Vec<AugmentedTrainingSet<'a>> {
    let intersection = |cluster: &[&'a OrgLog]| match mode {
        IntersectionMode::UniqueSources => share_intersection(cluster),
        IntersectionMode::MinMultiplicity => share_intersection_min_multiplicity(cluster),
    };
    let extras: Vec<Vec<LogEvent>> = match strategy {
        SharingStrategy::Local => vec![Vec::new(); cluster.len()],
        SharingStrategy::Global => share_global(cluster),
        SharingStrategy::Intersection => intersection(cluster),
        SharingStrategy::Ip2Ip => {
            let hh = heavy_hitters(cluster, HEAVY_HITTER_LIMIT);
            let m = build_ip2ip(cluster, &hh);
            share_ip2ip(cluster, &m, inject_day)
        }
        SharingStrategy::Ip2IpAndIntersection => {
            let hh = heavy_hitters(cluster, HEAVY_HITTER_LIMIT);
            let m = build_ip2ip(cluster, &hh);
            let mut both = intersection(cluster);
            for (acc, ip2ip) in both.iter_mut().zip(share_ip2ip(cluster, &m, inject_day)) {
                acc.extend(ip2ip);
            }
            both
        }
    };
    cluster
        .iter()
        .zip(extras)
        .map(|(base, extra)| AugmentedTrainingSet { base, extra })
        .collect()
}
