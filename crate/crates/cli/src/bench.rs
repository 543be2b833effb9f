//! Protocol benchmarks: wall time and wire bytes per organization for
//! PSI-CA / PSI-DT pairwise schemes (which scale linearly per org in the
//! number of organizations) and for the server-aided scheme (constant per
//! org, linear at the authority).

use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use anyhow::{anyhow, bail, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use cpb_core::corpus::{LogEvent, OrgLog, Subnet24};
use cpb_core::psi::{psi_ca_local, psi_dt_local, GroupChoice, PsiConfig};
use cpb_core::server_aided::{
    delivery_message, encrypt_dataset, sta_o2o, submission_message, PrpKey,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protocol {
    PsiCa,
    PsiDt,
    ServerAided,
}

impl Protocol {
    pub fn tag(self) -> &'static str {
        match self {
            Protocol::PsiCa => "psi-ca",
            Protocol::PsiDt => "psi-dt",
            Protocol::ServerAided => "server-aided",
        }
    }
}

impl FromStr for Protocol {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "psi-ca" | "psi_ca" => Ok(Protocol::PsiCa),
            "psi-dt" | "psi_dt" => Ok(Protocol::PsiDt),
            "server-aided" | "server_aided" => Ok(Protocol::ServerAided),
            other => bail!("unknown protocol '{other}' (psi-ca, psi-dt, server-aided)"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub protocol: Protocol,
    /// Set sizes (PSI) or events per organization (server-aided).
    pub sizes: Vec<usize>,
    pub orgs: Vec<usize>,
    pub repeats: usize,
    pub group: GroupChoice,
    pub seed: u64,
}

/// One benchmark measurement. `per_org_*` is the total cost one org pays
/// for the whole round (all its pairwise sessions, or its single
/// submission); `sta_*` is authority-side and empty for pairwise schemes.
#[derive(Debug, Clone)]
pub struct BenchRow {
    pub protocol: &'static str,
    pub group: &'static str,
    pub orgs: usize,
    pub set_size: usize,
    pub per_org_ms: f64,
    pub per_org_bytes: u64,
    pub sta_ms: Option<f64>,
    pub sta_bytes: Option<u64>,
}

pub const BENCH_COLUMNS: &str =
    "protocol,group,orgs,set_size,per_org_ms,per_org_bytes,sta_ms,sta_bytes";

fn median(mut values: Vec<f64>) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    values[values.len() / 2]
}

fn group_tag(group: GroupChoice) -> &'static str {
    match group {
        GroupChoice::Ristretto255 => "ristretto255",
        GroupChoice::Mod2048 => "mod2048",
    }
}

fn random_set(rng: &mut ChaCha20Rng, len: usize) -> Vec<u64> {
    let mut set = std::collections::HashSet::new();
    while set.len() < len {
        set.insert(rng.gen_range(0..1u64 << 24));
    }
    set.into_iter().collect()
}

/// Run the configured benchmark grid and return one row per
/// (size, org-count) cell, medians over `repeats`.
pub fn run_bench(config: &BenchConfig) -> Result<Vec<BenchRow>> {
    if config.sizes.is_empty() || config.orgs.is_empty() || config.repeats == 0 {
        bail!("sizes, orgs, and repeats must be non-empty");
    }
    let mut rows = Vec::new();
    for &size in &config.sizes {
        match config.protocol {
            Protocol::PsiCa | Protocol::PsiDt => {
                let (session_ms, session_bytes) = psi_session_cost(config, size)?;
                for &n in &config.orgs {
                    if n < 2 {
                        bail!("pairwise protocols need at least 2 orgs");
                    }
                    // Each org runs one session with each of the n-1 others.
                    rows.push(BenchRow {
                        protocol: config.protocol.tag(),
                        group: group_tag(config.group),
                        orgs: n,
                        set_size: size,
                        per_org_ms: session_ms * (n - 1) as f64,
                        per_org_bytes: session_bytes * (n as u64 - 1),
                        sta_ms: None,
                        sta_bytes: None,
                    });
                }
            }
            Protocol::ServerAided => {
                for &n in &config.orgs {
                    rows.push(server_aided_cell(config, n, size)?);
                }
            }
        }
    }
    Ok(rows)
}

/// Median wall time (ms) and transferred bytes of one two-party session at
/// the given set size, both directions counted once.
fn psi_session_cost(config: &BenchConfig, size: usize) -> Result<(f64, u64)> {
    let mut times = Vec::with_capacity(config.repeats);
    let mut bytes = 0u64;
    for rep in 0..config.repeats {
        let mut rng = ChaCha20Rng::seed_from_u64(config.seed ^ (rep as u64) << 32 ^ size as u64);
        let client = random_set(&mut rng, size);
        let server = random_set(&mut rng, size);
        let psi_config = PsiConfig { group: config.group };
        let start = Instant::now();
        let transferred = match config.protocol {
            Protocol::PsiCa => {
                let (out, _) = psi_ca_local(&client, &server, &psi_config, Some(config.seed))
                    .map_err(|e| anyhow!("psi-ca: {e}"))?;
                out.report.bytes_sent + out.report.bytes_received
            }
            Protocol::PsiDt => {
                let records: Vec<(u64, Vec<u8>)> =
                    server.iter().map(|&x| (x, vec![0u8; 8])).collect();
                let (out, _) = psi_dt_local(&client, &records, &psi_config, Some(config.seed))
                    .map_err(|e| anyhow!("psi-dt: {e}"))?;
                out.report.bytes_sent + out.report.bytes_received
            }
            Protocol::ServerAided => unreachable!(),
        };
        times.push(start.elapsed().as_secs_f64() * 1e3);
        bytes = transferred;
    }
    Ok((median(times), bytes))
}

fn random_log(rng: &mut ChaCha20Rng, org: String, events: usize) -> OrgLog {
    let events = (0..events)
        .map(|_| LogEvent {
            day: rng.gen_range(0..5),
            source: Subnet24::new(rng.gen_range(0..1 << 24)).unwrap(),
        })
        .collect();
    OrgLog { org, events }
}

/// One server-aided cell: per-org encryption time and submission bytes
/// (medians over orgs and repeats), authority-side O2O time, and total
/// authority traffic (submissions in, deliveries out).
fn server_aided_cell(config: &BenchConfig, n: usize, events: usize) -> Result<BenchRow> {
    let mut per_org_ms = Vec::new();
    let mut per_org_bytes = Vec::new();
    let mut sta_ms = Vec::new();
    let mut sta_bytes = 0u64;
    for rep in 0..config.repeats {
        let mut rng =
            ChaCha20Rng::seed_from_u64(config.seed ^ (rep as u64) << 40 ^ (n as u64) << 20);
        let key = PrpKey::random(&mut rng);
        let logs: Vec<OrgLog> =
            (0..n).map(|i| random_log(&mut rng, format!("org{i:04}"), events)).collect();

        let mut submissions = Vec::with_capacity(n);
        let mut org_times = Vec::with_capacity(n);
        let mut org_bytes = Vec::with_capacity(n);
        for log in &logs {
            let start = Instant::now();
            let submission = encrypt_dataset(log, &key)?;
            org_times.push(start.elapsed().as_secs_f64() * 1e3);
            let frame = cpb_core::psi::wire::encode_frame(&submission_message(&submission));
            org_bytes.push(frame.len() as u64);
            submissions.push(submission);
        }
        let received: u64 = org_bytes.iter().sum();

        let start = Instant::now();
        let buffer = sta_o2o(&submissions)?;
        sta_ms.push(start.elapsed().as_secs_f64() * 1e3);

        // Authority traffic: all submissions in, all deliveries out.
        let mut delivered = 0u64;
        for recipient in 0..n {
            for peer in 0..n {
                if recipient != peer {
                    let frame = cpb_core::psi::wire::encode_frame(&delivery_message(
                        &buffer, recipient, peer,
                    ));
                    delivered += frame.len() as u64;
                }
            }
        }
        sta_bytes = received + delivered;
        per_org_ms.push(median(org_times));
        per_org_bytes.push(median(org_bytes.iter().map(|&b| b as f64).collect()) as u64);
    }
    Ok(BenchRow {
        protocol: config.protocol.tag(),
        group: group_tag(config.group),
        orgs: n,
        set_size: events,
        per_org_ms: median(per_org_ms),
        per_org_bytes: per_org_bytes[per_org_bytes.len() / 2],
        sta_ms: Some(median(sta_ms)),
        sta_bytes: Some(sta_bytes),
    })
}

pub fn write_bench_csv(path: &Path, rows: &[BenchRow], seed: u64) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut out = fs::File::create(path)?;
    writeln!(out, "# cpb bench")?;
    writeln!(out, "# seed={seed}")?;
    writeln!(out, "{BENCH_COLUMNS}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{:.3},{},{},{}",
            r.protocol,
            r.group,
            r.orgs,
            r.set_size,
            r.per_org_ms,
            r.per_org_bytes,
            r.sta_ms.map(|v| format!("{v:.3}")).unwrap_or_default(),
            r.sta_bytes.map(|v| v.to_string()).unwrap_or_default(),
        )?;
    }
    Ok(())
}
