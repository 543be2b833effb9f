//! Log file parsing and writing.
//!
//! One event per line: `date,contributor_id,source_ip[,source_port,target_port]`
//! with an ISO `YYYY-MM-DD` date. Ports are parsed and discarded. Synthetic
//! corpora are written in the same format so both paths share this parser.

use std::io::{BufRead, Write};
use std::net::Ipv4Addr;

use chrono::NaiveDate;

use super::{AttackEvent, CorpusError, Subnet24};

/// Per-line bookkeeping from a parse run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParseStats {
    /// Lines that became events.
    pub accepted: u64,
    /// Malformed lines (bad field count, date, address, or empty org).
    pub rejects: u64,
    /// Well-formed lines whose source was invalid or non-routable.
    pub invalid_ip: u64,
}

/// Events plus the epoch they are indexed from.
#[derive(Debug, Clone)]
pub struct ParsedCorpus {
    pub events: Vec<AttackEvent>,
    /// Earliest date seen; `None` when no line parsed. Day indices count
    /// from this date.
    pub epoch: Option<NaiveDate>,
    /// `max day + 1`; zero when empty.
    pub total_days: u32,
    pub stats: ParseStats,
}

/// Invalid or non-routable source exclusions: 0/8, 127/8, 224/4, 240/4,
/// 10/8, 172.16/12, 192.168/16.
fn is_excluded(ip: Ipv4Addr) -> bool {
    let o = ip.octets();
    o[0] == 0
        || o[0] == 127
        || o[0] >= 224
        || o[0] == 10
        || (o[0] == 172 && (16..=31).contains(&o[1]))
        || (o[0] == 192 && o[1] == 168)
}

/// Parse a log stream. Malformed lines are counted and skipped; an
/// unreadable stream is fatal.
pub fn parse_logs<R: BufRead>(reader: R) -> Result<ParsedCorpus, CorpusError> {
    let mut stats = ParseStats::default();
    let mut raw: Vec<(NaiveDate, String, Subnet24)> = Vec::new();

    for line in reader.lines() {
        let line = line?; // io failure is fatal
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if !(3..=5).contains(&fields.len()) {
            stats.rejects += 1;
            continue;
        }
        let date = match NaiveDate::parse_from_str(fields[0].trim(), "%Y-%m-%d") {
            Ok(d) => d,
            Err(_) => {
                stats.rejects += 1;
                continue;
            }
        };
        let org = fields[1].trim();
        if org.is_empty() {
            stats.rejects += 1;
            continue;
        }
        let ip: Ipv4Addr = match fields[2].trim().parse() {
            Ok(ip) => ip,
            Err(_) => {
                stats.rejects += 1;
                continue;
            }
        };
        if is_excluded(ip) {
            stats.invalid_ip += 1;
            continue;
        }
        stats.accepted += 1;
        raw.push((date, org.to_string(), Subnet24::from_ipv4(ip)));
    }

    let epoch = raw.iter().map(|(d, _, _)| *d).min();
    let mut events = Vec::with_capacity(raw.len());
    let mut total_days = 0;
    if let Some(epoch) = epoch {
        for (date, victim, source) in raw {
            let day = (date - epoch).num_days() as u32;
            total_days = total_days.max(day + 1);
            events.push(AttackEvent { day, victim, source });
        }
    }
    Ok(ParsedCorpus { events, epoch, total_days, stats })
}

/// Write events in the shared log format, dating day `d` as `epoch + d`.
pub fn write_logs<W: Write>(
    mut w: W,
    events: &[AttackEvent],
    epoch: NaiveDate,
) -> std::io::Result<()> {
    for ev in events {
        let date = epoch + chrono::Duration::days(ev.day as i64);
        writeln!(w, "{},{},{}", date.format("%Y-%m-%d"), ev.victim, ev.source.base_ipv4())?;
    }
    Ok(())
}
