//! Attack-log data model: events, /24 sources, per-organization logs,
//! sliding experiment windows, and the synthetic corpus generator.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::net::Ipv4Addr;

use thiserror::Error;

mod parse;
mod synthetic;
mod windows;

pub use parse::{parse_logs, write_logs, ParseStats, ParsedCorpus};
pub use synthetic::generate_synthetic;
pub use windows::build_windows;

/// Organizations are identified by opaque strings (pseudonymized contributor
/// ids in real feeds, `orgNNN` in synthetic corpora).
pub type OrgId = String;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("subnet value {0:#x} out of /24 range")]
    SubnetOutOfRange(u32),
    #[error("corpus spans {0} days; at least 6 are required for one window")]
    TooFewDays(u32),
    #[error("event for {org} dated day {day} outside corpus of {total_days} days")]
    EventOutOfRange { org: OrgId, day: u32, total_days: u32 },
    #[error("invalid corpus spec: {0}")]
    InvalidSpec(String),
    #[error("log for {expected} contains an event targeting {found}")]
    VictimMismatch { expected: OrgId, found: OrgId },
    #[error("i/o error reading logs: {0}")]
    Io(#[from] std::io::Error),
}

/// A /24 IPv4 prefix, stored as the top 24 bits of the address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Subnet24(u32);

impl Subnet24 {
    /// Number of distinct /24 values (2^24), the `M` of the sketch sizing.
    pub const SPACE: u32 = 1 << 24;

    pub fn new(value: u32) -> Result<Self, CorpusError> {
        if value < Self::SPACE {
            Ok(Subnet24(value))
        } else {
            Err(CorpusError::SubnetOutOfRange(value))
        }
    }

    /// Reduce an IPv4 address to its /24 prefix.
    pub fn from_ipv4(ip: Ipv4Addr) -> Self {
        Subnet24(u32::from(ip) >> 8)
    }

    pub fn value(self) -> u32 {
        self.0
    }

    /// The `a.b.c.0` base address of the prefix.
    pub fn base_ipv4(self) -> Ipv4Addr {
        Ipv4Addr::from(self.0 << 8)
    }
}

impl fmt::Display for Subnet24 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/24", self.base_ipv4())
    }
}

/// One reported alert: on day `day`, `victim` observed suspicious traffic
/// from `source`. Days index from the corpus epoch (its earliest date).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AttackEvent {
    pub day: u32,
    pub victim: OrgId,
    pub source: Subnet24,
}

/// A `(day, source)` occurrence inside one organization's log. The victim is
/// implied by the owning [`OrgLog`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LogEvent {
    pub day: u32,
    pub source: Subnet24,
}

/// The multiset of events one organization observed. Duplicate
/// `(day, source)` occurrences are kept; unique-set views are derived.
#[derive(Debug, Clone, Default)]
pub struct OrgLog {
    pub org: OrgId,
    pub events: Vec<LogEvent>,
}

impl OrgLog {
    pub fn new(org: OrgId) -> Self {
        OrgLog { org, events: Vec::new() }
    }

    /// Build from full events, enforcing that every victim matches `org`.
    pub fn from_events(org: OrgId, events: &[AttackEvent]) -> Result<Self, CorpusError> {
        let mut log = OrgLog::new(org);
        for ev in events {
            if ev.victim != log.org {
                return Err(CorpusError::VictimMismatch {
                    expected: log.org,
                    found: ev.victim.clone(),
                });
            }
            log.events.push(LogEvent { day: ev.day, source: ev.source });
        }
        Ok(log)
    }

    /// The distinct sources in this log, ignoring days and multiplicity.
    pub fn unique_sources(&self) -> HashSet<Subnet24> {
        self.events.iter().map(|e| e.source).collect()
    }

    /// Distinct `(day, source)` pairs.
    pub fn unique_day_sources(&self) -> HashSet<LogEvent> {
        self.events.iter().copied().collect()
    }
}

/// One sliding experiment slice: five consecutive training days, the next
/// day as test ground truth, and the contributor sample selected for it.
#[derive(Debug, Clone)]
pub struct ExperimentWindow {
    /// Five consecutive day indices used for training.
    pub train_days: [u32; 5],
    /// `train_days[4] + 1`; the day whose attacks are predicted.
    pub test_day: u32,
    /// Selected organizations, in contributor-rank order.
    pub orgs: Vec<OrgId>,
    /// Training events per selected organization (train days only).
    pub logs: HashMap<OrgId, OrgLog>,
    /// Sources that actually attacked each selected org on the test day.
    pub truth: HashMap<OrgId, HashSet<Subnet24>>,
    /// Set when fewer than 31 contributors qualified, so the tail-trimming
    /// rule ran on a thin population.
    pub low_contributors: bool,
}

impl ExperimentWindow {
    pub fn last_train_day(&self) -> u32 {
        self.train_days[4]
    }

    /// Logs of the selected orgs in `orgs` order.
    pub fn ordered_logs(&self) -> Vec<&OrgLog> {
        self.orgs.iter().map(|o| &self.logs[o]).collect()
    }
}

/// Parameters of the synthetic corpus generator.
///
/// Orgs in the same attacker group observe overlapping attacker sets drawn
/// from a group-specific region of the /24 space; per-org noise attackers
/// come from disjoint per-org regions, so orgs never share noise.
#[derive(Debug, Clone)]
pub struct CorpusSpec {
    pub n_orgs: usize,
    pub n_days: u32,
    pub attacker_groups: usize,
    /// org -> set of attacker-group ids the org observes.
    pub group_membership: HashMap<OrgId, HashSet<usize>>,
    /// Probability that an active attacker stays active the next day.
    pub persistence: f64,
    /// Expected new attackers per group per day (Poisson).
    pub base_rate: f64,
    /// Expected noise attackers per org per day (Poisson), unique per org.
    pub noise_rate: f64,
    pub seed: u64,
}

impl CorpusSpec {
    /// Spec with `org000..orgNNN` assigned round-robin to groups.
    pub fn new(
        n_orgs: usize,
        n_days: u32,
        attacker_groups: usize,
        persistence: f64,
        base_rate: f64,
        noise_rate: f64,
        seed: u64,
    ) -> Self {
        let group_membership = (0..n_orgs)
            .map(|i| (org_name(i), HashSet::from([i % attacker_groups.max(1)])))
            .collect();
        CorpusSpec {
            n_orgs,
            n_days,
            attacker_groups,
            group_membership,
            persistence,
            base_rate,
            noise_rate,
            seed,
        }
    }

    /// Desk-scale default: 70 orgs over 15 days, tuned so each org sees a
    /// few hundred unique /24 sources per day.
    pub fn desk(seed: u64) -> Self {
        CorpusSpec::new(70, 15, 7, 0.8, 100.0, 300.0, seed)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.n_orgs == 0 || self.n_days == 0 || self.attacker_groups == 0 {
            return Err(CorpusError::InvalidSpec("counts must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.persistence) {
            return Err(CorpusError::InvalidSpec("persistence must be in [0,1]".into()));
        }
        if self.base_rate < 0.0 || self.noise_rate < 0.0 {
            return Err(CorpusError::InvalidSpec("rates must be non-negative".into()));
        }
        if self.attacker_groups + self.n_orgs > synthetic::MAX_REGIONS {
            return Err(CorpusError::InvalidSpec(format!(
                "attacker_groups + n_orgs must be <= {} to keep source regions disjoint",
                synthetic::MAX_REGIONS
            )));
        }
        for (org, groups) in &self.group_membership {
            if let Some(g) = groups.iter().find(|g| **g >= self.attacker_groups) {
                return Err(CorpusError::InvalidSpec(format!(
                    "org {org} references unknown group {g}"
                )));
            }
        }
        Ok(())
    }
}

/// Canonical zero-padded synthetic org name (`org000`, `org001`, ...).
pub fn org_name(index: usize) -> OrgId {
    format!("org{index:03}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subnet_reduction_is_idempotent() {
        for ip in [
            Ipv4Addr::new(203, 0, 113, 77),
            Ipv4Addr::new(8, 8, 8, 8),
            Ipv4Addr::new(1, 2, 3, 0),
        ] {
            let s = Subnet24::from_ipv4(ip);
            assert_eq!(Subnet24::from_ipv4(s.base_ipv4()), s);
        }
    }

    #[test]
    fn subnet_range_enforced() {
        assert!(Subnet24::new((1 << 24) - 1).is_ok());
        assert!(Subnet24::new(1 << 24).is_err());
    }

    #[test]
    fn org_log_rejects_foreign_victims() {
        let events = vec![AttackEvent {
            day: 0,
            victim: "orgB".into(),
            source: Subnet24::new(7).unwrap(),
        }];
        assert!(OrgLog::from_events("orgA".into(), &events).is_err());
    }

    #[test]
    fn desk_spec_validates() {
        CorpusSpec::desk(1).validate().unwrap();
    }
}
