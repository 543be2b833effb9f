//! Sliding-window construction and contributor selection.

use std::collections::{HashMap, HashSet};

use super::{AttackEvent, CorpusError, ExperimentWindow, LogEvent, OrgId, OrgLog, Subnet24};

const TRAIN_DAYS: usize = 5;
/// Below this many qualifying contributors a window is flagged.
const LOW_CONTRIBUTOR_FLOOR: usize = 31;

/// Build one window per (5 train days, 1 test day) slide over the corpus.
///
/// Per window, contributors that report on every training day are ranked by
/// the number of unique /24 sources they reported in the window; the head
/// and tail of the ranking are dropped to avoid dominating or marginal
/// reporters: ranks 11..=80 are kept when at least 100 qualify, otherwise
/// the top 10% and bottom 20% (rounded down) are trimmed.
pub fn build_windows(
    events: &[AttackEvent],
    total_days: u32,
) -> Result<Vec<ExperimentWindow>, CorpusError> {
    if total_days < TRAIN_DAYS as u32 + 1 {
        return Err(CorpusError::TooFewDays(total_days));
    }
    for ev in events {
        if ev.day >= total_days {
            return Err(CorpusError::EventOutOfRange {
                org: ev.victim.clone(),
                day: ev.day,
                total_days,
            });
        }
    }

    // day -> org -> events that day.
    let mut by_day: Vec<HashMap<&str, Vec<&AttackEvent>>> =
        vec![HashMap::new(); total_days as usize];
    for ev in events {
        by_day[ev.day as usize].entry(&ev.victim).or_default().push(ev);
    }

    let mut windows = Vec::with_capacity((total_days as usize) - TRAIN_DAYS);
    for start in 0..(total_days - TRAIN_DAYS as u32) {
        let train_days: [u32; 5] = std::array::from_fn(|i| start + i as u32);
        let test_day = start + TRAIN_DAYS as u32;

        // Qualifiers report on every training day.
        let mut unique_counts: HashMap<&str, HashSet<Subnet24>> = HashMap::new();
        let mut present_days: HashMap<&str, usize> = HashMap::new();
        for &d in &train_days {
            for (org, evs) in &by_day[d as usize] {
                *present_days.entry(org).or_insert(0) += 1;
                let set = unique_counts.entry(org).or_default();
                set.extend(evs.iter().map(|e| e.source));
            }
        }
        let mut ranked: Vec<(&str, usize)> = present_days
            .iter()
            .filter(|(_, days)| **days == TRAIN_DAYS)
            .map(|(org, _)| (*org, unique_counts[org].len()))
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

        let q = ranked.len();
        let (drop_top, keep_to) = if q >= 100 {
            (10, 80)
        } else {
            (q / 10, q - q / 5)
        };
        let selected: Vec<OrgId> = ranked[drop_top.min(q)..keep_to.min(q)]
            .iter()
            .map(|(org, _)| (*org).to_string())
            .collect();

        let mut logs: HashMap<OrgId, OrgLog> = HashMap::new();
        let mut truth: HashMap<OrgId, HashSet<Subnet24>> = HashMap::new();
        for org in &selected {
            let mut log = OrgLog::new(org.clone());
            for &d in &train_days {
                if let Some(evs) = by_day[d as usize].get(org.as_str()) {
                    log.events
                        .extend(evs.iter().map(|e| LogEvent { day: e.day, source: e.source }));
                }
            }
            logs.insert(org.clone(), log);
            let t = by_day[test_day as usize]
                .get(org.as_str())
                .map(|evs| evs.iter().map(|e| e.source).collect())
                .unwrap_or_default();
            truth.insert(org.clone(), t);
        }

        windows.push(ExperimentWindow {
            train_days,
            test_day,
            orgs: selected,
            logs,
            truth,
            low_contributors: q < LOW_CONTRIBUTOR_FLOOR,
        });
    }
    Ok(windows)
}
