//! The experiment runner: loads or generates a corpus, sweeps
//! (method x k x strategy) cells over every sliding window, and writes
//! per-row and macro-averaged CSV tables.
//!
//! Windows are independent jobs executed on the worker pool; rows are
//! collected, sorted, and written by a single writer, so output is
//! byte-identical for a fixed seed on the plaintext back-end.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};

use cpb_core::baselines::{
    pairwise_intersection_extras, select_pairs, ts_ca_knn_predict, ts_ca_predict_detailed,
    PairSelectionMode,
};
use cpb_core::clustering::{
    agglomerative, build_o2o_plaintext, build_o2o_plaintext_occurrences, build_o2o_psi_ca,
    kmeans, knn_neighborhoods, AssignmentMode, ClusterAssignment, DistanceMatrix, KmeansConfig,
    SimilarityMatrix,
};
use cpb_core::corpus::{
    build_windows, generate_synthetic, parse_logs, ExperimentWindow, LogEvent, OrgId, OrgLog,
    Subnet24,
};
use cpb_core::exec;
use cpb_core::predictor::{
    predict_blacklist, score, Counts, ForecastParams, PredictionMetrics,
};
use cpb_core::psi::{psi_dt_local, PsiConfig};
use cpb_core::server_aided::{encrypt_dataset, log_sharing, sta_o2o, AuthorityBuffer, PrpKey};
use cpb_core::sharing::{
    augment, build_ip2ip, heavy_hitters, share_global, share_ip2ip, AugmentedTrainingSet,
    IntersectionMode, SharingStrategy, HEAVY_HITTER_LIMIT,
};

use crate::config::{Backend, CorpusSource, ExperimentConfig, Method};

/// One scored (window, org, method, k, strategy) cell.
#[derive(Debug, Clone)]
pub struct ResultRow {
    pub window: usize,
    pub org: OrgId,
    pub method: &'static str,
    pub k: usize,
    pub strategy: String,
    pub backend: &'static str,
    pub metrics: PredictionMetrics,
    pub cluster_size: usize,
    pub collaborators: usize,
}

pub const RESULT_COLUMNS: &str = "window,org,method,k,strategy,backend,tp,fp,fn,tpr,ppv,f1,\
tp_impr,fp_incr,fn_incr,cluster_size,collaborators";

pub const SUMMARY_COLUMNS: &str = "method,k,strategy,backend,windows,orgs,tpr,ppv,f1,\
tp_impr,fp_incr,fn_incr,avg_cluster_size,collaborators";

#[derive(Debug)]
pub struct RunOutput {
    pub results_path: PathBuf,
    pub summary_path: PathBuf,
    pub rows: Vec<ResultRow>,
}

/// Execute the configured sweep and write `results.csv` / `summary.csv`
/// into the output directory.
pub fn run(config: &ExperimentConfig) -> Result<RunOutput> {
    let (events, total_days) = match &config.corpus {
        CorpusSource::Path(path) => {
            let file = fs::File::open(path)
                .with_context(|| format!("opening corpus {}", path.display()))?;
            let parsed = parse_logs(std::io::BufReader::new(file))?;
            log::info!(
                "parsed {} events ({} rejects, {} invalid IPs)",
                parsed.stats.accepted,
                parsed.stats.rejects,
                parsed.stats.invalid_ip
            );
            (parsed.events, parsed.total_days)
        }
        CorpusSource::Synthetic(spec) => {
            let events = generate_synthetic(spec)?;
            (events, spec.n_days)
        }
    };
    let windows = build_windows(&events, total_days)?;
    for (i, w) in windows.iter().enumerate() {
        if w.low_contributors {
            log::warn!("window {i}: fewer than 31 qualifying contributors");
        }
    }

    let indexed: Vec<(usize, &ExperimentWindow)> = windows.iter().enumerate().collect();
    let outcomes = exec::map_slice(&indexed, |(index, window)| {
        window_rows(*index, window, config).map_err(|e| format!("window {index}: {e}"))
    });
    let mut rows = Vec::new();
    let mut dumps = Vec::new();
    for outcome in outcomes {
        match outcome {
            Ok((mut window_rows, dump)) => {
                rows.append(&mut window_rows);
                dumps.extend(dump);
            }
            // A failed window is skipped with its reason logged; the run
            // continues with the remaining windows.
            Err(reason) => log::error!("{reason}; window skipped"),
        }
    }
    rows.sort_by(|a, b| {
        (a.window, a.method, a.k, &a.strategy, &a.org)
            .cmp(&(b.window, b.method, b.k, &b.strategy, &b.org))
    });

    fs::create_dir_all(&config.out_dir)
        .with_context(|| format!("creating {}", config.out_dir.display()))?;
    let header = header_lines(config);
    let results_path = config.out_dir.join("results.csv");
    write_results(&results_path, &rows, &header)?;
    let summary_path = config.out_dir.join("summary.csv");
    write_summary(&summary_path, &rows, &header)?;
    for (name, contents) in dumps {
        fs::write(config.out_dir.join(name), contents)?;
    }
    Ok(RunOutput { results_path, summary_path, rows })
}

fn header_lines(config: &ExperimentConfig) -> Vec<String> {
    let mut lines = vec!["# cpb results".to_string(), format!("# seed={}", config.seed)];
    for line in config.echo().lines() {
        lines.push(format!("# {line}"));
    }
    lines
}

// Shortest round-trip float formatting, so CSV consumers can recompute
// the macro averages exactly.
fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn write_results(path: &PathBuf, rows: &[ResultRow], header: &[String]) -> Result<()> {
    let mut out = fs::File::create(path)?;
    for line in header {
        writeln!(out, "{line}")?;
    }
    writeln!(out, "{RESULT_COLUMNS}")?;
    for r in rows {
        let m = &r.metrics;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.window,
            r.org,
            r.method,
            r.k,
            r.strategy,
            r.backend,
            m.tp,
            m.fp,
            m.fn_,
            fmt_f64(m.tpr),
            fmt_f64(m.ppv),
            fmt_f64(m.f1),
            fmt_opt(m.relative.tp_impr),
            fmt_opt(m.relative.fp_incr),
            fmt_opt(m.relative.fn_incr),
            r.cluster_size,
            r.collaborators,
        )?;
    }
    Ok(())
}

/// Macro-averaged view: metrics are averaged per organization within each
/// window, then across windows. Undefined relative ratios are skipped, not
/// averaged as zero.
#[derive(Debug, Clone, Default)]
pub struct SummaryRow {
    pub windows: usize,
    pub orgs: usize,
    pub tpr: f64,
    pub ppv: f64,
    pub f1: f64,
    pub tp_impr: Option<f64>,
    pub fp_incr: Option<f64>,
    pub fn_incr: Option<f64>,
    pub avg_cluster_size: f64,
    pub collaborators: usize,
}

#[derive(Default)]
struct WindowAgg {
    n: usize,
    tpr: f64,
    ppv: f64,
    f1: f64,
    tp_impr: (f64, usize),
    fp_incr: (f64, usize),
    fn_incr: (f64, usize),
    cluster_size: usize,
    collaborating: usize,
}

/// Compute the macro summary from per-row results (recomputable by anyone
/// holding results.csv).
pub fn summarize(rows: &[ResultRow]) -> Vec<((String, usize, String, String), SummaryRow)> {
    type Key = (String, usize, String, String);
    let mut per_window: HashMap<(Key, usize), WindowAgg> = HashMap::new();
    for r in rows {
        let key = (
            (r.method.to_string(), r.k, r.strategy.clone(), r.backend.to_string()),
            r.window,
        );
        let agg = per_window.entry(key).or_default();
        agg.n += 1;
        agg.tpr += r.metrics.tpr;
        agg.ppv += r.metrics.ppv;
        agg.f1 += r.metrics.f1;
        if let Some(v) = r.metrics.relative.tp_impr {
            agg.tp_impr.0 += v;
            agg.tp_impr.1 += 1;
        }
        if let Some(v) = r.metrics.relative.fp_incr {
            agg.fp_incr.0 += v;
            agg.fp_incr.1 += 1;
        }
        if let Some(v) = r.metrics.relative.fn_incr {
            agg.fn_incr.0 += v;
            agg.fn_incr.1 += 1;
        }
        agg.cluster_size += r.cluster_size;
        agg.collaborating += usize::from(r.collaborators > 0);
    }

    let mut grouped: HashMap<Key, Vec<WindowAgg>> = HashMap::new();
    for ((key, _window), agg) in per_window {
        grouped.entry(key).or_default().push(agg);
    }
    let mut out: Vec<(Key, SummaryRow)> = grouped
        .into_iter()
        .map(|(key, aggs)| {
            let windows = aggs.len();
            let mean_of = |f: &dyn Fn(&WindowAgg) -> f64| {
                aggs.iter().map(|a| f(a) / a.n as f64).sum::<f64>() / windows as f64
            };
            let mean_opt = |f: &dyn Fn(&WindowAgg) -> (f64, usize)| {
                let defined: Vec<f64> = aggs
                    .iter()
                    .filter_map(|a| {
                        let (sum, count) = f(a);
                        (count > 0).then(|| sum / count as f64)
                    })
                    .collect();
                (!defined.is_empty())
                    .then(|| defined.iter().sum::<f64>() / defined.len() as f64)
            };
            let row = SummaryRow {
                windows,
                orgs: aggs.iter().map(|a| a.n).sum(),
                tpr: mean_of(&|a| a.tpr),
                ppv: mean_of(&|a| a.ppv),
                f1: mean_of(&|a| a.f1),
                tp_impr: mean_opt(&|a| a.tp_impr),
                fp_incr: mean_opt(&|a| a.fp_incr),
                fn_incr: mean_opt(&|a| a.fn_incr),
                avg_cluster_size: mean_of(&|a| a.cluster_size as f64),
                collaborators: aggs.iter().map(|a| a.collaborating).sum(),
            };
            (key, row)
        })
        .collect();
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

fn write_summary(path: &PathBuf, rows: &[ResultRow], header: &[String]) -> Result<()> {
    let mut out = fs::File::create(path)?;
    for line in header {
        writeln!(out, "{line}")?;
    }
    writeln!(out, "{SUMMARY_COLUMNS}")?;
    for ((method, k, strategy, backend), s) in summarize(rows) {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            method,
            k,
            strategy,
            backend,
            s.windows,
            s.orgs,
            fmt_f64(s.tpr),
            fmt_f64(s.ppv),
            fmt_f64(s.f1),
            fmt_opt(s.tp_impr),
            fmt_opt(s.fp_incr),
            fmt_opt(s.fn_incr),
            fmt_f64(s.avg_cluster_size),
            s.collaborators,
        )?;
    }
    Ok(())
}

type WindowOutcome = (Vec<ResultRow>, Vec<(String, String)>);

fn window_rows(
    index: usize,
    window: &ExperimentWindow,
    config: &ExperimentConfig,
) -> Result<WindowOutcome> {
    let params = ForecastParams::new(config.alpha, config.tau)
        .map_err(|e| anyhow!("forecast params: {e}"))?;
    let n = window.orgs.len();
    if n < 2 {
        bail!("only {n} organizations selected");
    }
    let logs: Vec<&OrgLog> = window.ordered_logs();

    // No-collaboration baseline per org.
    let local_counts: Vec<Counts> = logs
        .iter()
        .map(|log| {
            let bl = predict_blacklist(
                &AugmentedTrainingSet::local(log),
                &window.train_days,
                &params,
                config.series,
            );
            score(&bl.predicted, &window.truth[&log.org])
        })
        .collect();

    let needs_hybrid = config
        .methods
        .iter()
        .any(|m| matches!(m, Method::Agglomerative | Method::Kmeans | Method::Knn));
    let needs_freud =
        config.methods.iter().any(|m| matches!(m, Method::FreudA | Method::FreudB));

    // The server-aided pipeline is shared by O2O and intersection sharing.
    let sa_buffer: Option<AuthorityBuffer> =
        if needs_hybrid && config.backend == Backend::ServerAided {
            let mut rng = rand::rngs::OsRng;
            let key = PrpKey::random(&mut rng);
            let submissions: Result<Vec<_>, _> =
                logs.iter().map(|log| encrypt_dataset(log, &key)).collect();
            Some(sta_o2o(&submissions?)?)
        } else {
            None
        };

    let hybrid_sim: Option<SimilarityMatrix> = if needs_hybrid {
        Some(match (config.backend, config.intersection) {
            (Backend::Plaintext, IntersectionMode::UniqueSources) => {
                build_o2o_plaintext(window)?
            }
            (Backend::Plaintext, IntersectionMode::MinMultiplicity) => {
                build_o2o_plaintext_occurrences(window)?
            }
            (Backend::Psi, _) => build_o2o_psi_ca(window)?,
            (Backend::ServerAided, _) => sa_buffer.as_ref().expect("built above").o2o.clone(),
        })
    } else {
        None
    };
    let freud_sim: Option<SimilarityMatrix> =
        if needs_freud { Some(build_o2o_plaintext(window)?) } else { None };

    let mut rows = Vec::new();
    let push_row = |org: usize,
                        method: &'static str,
                        k: usize,
                        strategy: String,
                        counts: Counts,
                        cluster_size: usize,
                        rows: &mut Vec<ResultRow>| {
        rows.push(ResultRow {
            window: index,
            org: window.orgs[org].clone(),
            method,
            k,
            strategy,
            backend: config.backend.tag(),
            metrics: PredictionMetrics::with_baseline(counts, local_counts[org]),
            cluster_size,
            collaborators: cluster_size.saturating_sub(1),
        });
    };

    for method in &config.methods {
        match method {
            Method::Ts => {
                for org in 0..n {
                    push_row(org, "TS", 0, "local".into(), local_counts[org], 1, &mut rows);
                }
            }
            Method::TsCa => {
                let (blacklists, group_sizes) =
                    ts_ca_predict_detailed(window, &params, config.series);
                for (org, bl) in blacklists.iter().enumerate() {
                    let counts = score(&bl.predicted, &window.truth[&bl.org]);
                    push_row(
                        org,
                        "TS-CA",
                        0,
                        "pooled".into(),
                        counts,
                        group_sizes[org],
                        &mut rows,
                    );
                }
            }
            Method::TsCaKnn => {
                for &k in &config.ks {
                    if k == 0 || k >= n {
                        log::warn!("ts-ca-knn: skipping k={k} for {n} orgs");
                        continue;
                    }
                    let blacklists = ts_ca_knn_predict(window, k, &params, config.series)?;
                    for (org, bl) in blacklists.iter().enumerate() {
                        let counts = score(&bl.predicted, &window.truth[&bl.org]);
                        push_row(org, "TS-CA-KNN", k, "pooled".into(), counts, k + 1, &mut rows);
                    }
                }
            }
            Method::FreudA | Method::FreudB => {
                let sim = freud_sim.as_ref().expect("built above");
                let tag: &'static str =
                    if *method == Method::FreudA { "FREUD-A" } else { "FREUD-B" };
                for &k in &config.ks {
                    let mode = match method {
                        Method::FreudA if k >= 1 && k <= 100 => {
                            PairSelectionMode::GlobalPercent(k as f64)
                        }
                        Method::FreudB if k >= 1 && k < n => PairSelectionMode::LocalTopX(k),
                        _ => {
                            log::warn!("{tag}: skipping k={k}");
                            continue;
                        }
                    };
                    let selection = select_pairs(sim, mode)?;
                    let extras = pairwise_intersection_extras(&logs, &selection);
                    for (org, extra) in extras.into_iter().enumerate() {
                        let aug = AugmentedTrainingSet { base: logs[org], extra };
                        let bl =
                            predict_blacklist(&aug, &window.train_days, &params, config.series);
                        let counts = score(&bl.predicted, &window.truth[&window.orgs[org]]);
                        let partners = selection.partners_of(org).len();
                        push_row(org, tag, k, "pairwise".into(), counts, partners + 1, &mut rows);
                    }
                }
            }
            Method::Agglomerative | Method::Kmeans | Method::Knn => {
                let sim = hybrid_sim.as_ref().expect("built above");
                let dist = DistanceMatrix::from_similarity(sim);
                let (tag, method_kind): (&'static str, _) = match method {
                    Method::Agglomerative => ("agglomerative", *method),
                    Method::Kmeans => ("kmeans", *method),
                    _ => ("knn", *method),
                };
                for &k in &config.ks {
                    let assignment = match method_kind {
                        Method::Agglomerative if k >= 1 && k <= n => agglomerative(&dist, k)?,
                        Method::Kmeans if k >= 1 && k <= n => {
                            let mut kc = KmeansConfig::new(k, config.seed ^ (index as u64) << 8);
                            kc.threshold_percentile = config.threshold_percentile;
                            kmeans(sim, &kc)?
                        }
                        Method::Knn if k >= 1 && k < n => {
                            knn_neighborhoods(&dist, k, config.threshold_percentile)?
                        }
                        _ => {
                            log::warn!("{tag}: skipping k={k} for {n} orgs");
                            continue;
                        }
                    };
                    for strategy in &config.strategies {
                        strategy_rows(
                            window,
                            config,
                            &params,
                            &logs,
                            &assignment,
                            sa_buffer.as_ref(),
                            tag,
                            k,
                            *strategy,
                            &local_counts,
                            index,
                            &mut rows,
                        )?;
                    }
                }
            }
        }
    }

    let mut dumps = Vec::new();
    if config.dump_o2o {
        if let Some(sim) = &hybrid_sim {
            dumps.push((format!("o2o_w{index:02}.csv"), sim.to_csv()));
        }
    }
    Ok((rows, dumps))
}

/// Score one (clustering assignment, strategy) cell.
#[allow(clippy::too_many_arguments)]
fn strategy_rows(
    window: &ExperimentWindow,
    config: &ExperimentConfig,
    params: &ForecastParams,
    logs: &[&OrgLog],
    assignment: &ClusterAssignment,
    sa_buffer: Option<&AuthorityBuffer>,
    method_tag: &'static str,
    k: usize,
    strategy: SharingStrategy,
    local_counts: &[Counts],
    window_index: usize,
    rows: &mut Vec<ResultRow>,
) -> Result<()> {
    let mut emit = |org: usize, extra: Vec<LogEvent>, cluster_size: usize| {
        let aug = AugmentedTrainingSet { base: logs[org], extra };
        let bl = predict_blacklist(&aug, &window.train_days, params, config.series);
        let counts = score(&bl.predicted, &window.truth[&window.orgs[org]]);
        rows.push(ResultRow {
            window: window_index,
            org: window.orgs[org].clone(),
            method: method_tag,
            k,
            strategy: strategy.to_string(),
            backend: config.backend.tag(),
            metrics: PredictionMetrics::with_baseline(counts, local_counts[org]),
            cluster_size,
            collaborators: cluster_size.saturating_sub(1),
        });
    };

    match assignment.mode {
        AssignmentMode::Partition => {
            for members in &assignment.clusters {
                let extras = cluster_extras(window, config, logs, members, strategy, sa_buffer)?;
                for (&org, extra) in members.iter().zip(extras) {
                    emit(org, extra, members.len());
                }
            }
        }
        AssignmentMode::Neighborhoods => {
            // Each org is augmented by its own neighborhood.
            for (org, members) in assignment.clusters.iter().enumerate() {
                let extras = cluster_extras(window, config, logs, members, strategy, sa_buffer)?;
                let position = members.iter().position(|&m| m == org).expect("self in own neighborhood");
                emit(org, extras.into_iter().nth(position).unwrap(), members.len());
            }
        }
    }
    Ok(())
}

/// Extra events per member of one cluster under the configured back-end.
///
/// The IP2IP correlation weights are always the exact plaintext
/// computation: at window scale the Count-Min estimate error (epsilon * N
/// over all pair co-occurrences) dwarfs the true per-pair counts, so
/// sketch-read rankings would be noise. The sketch path is exercised and
/// verified in its own module at the scale its bounds are meaningful.
fn cluster_extras(
    window: &ExperimentWindow,
    config: &ExperimentConfig,
    logs: &[&OrgLog],
    members: &[usize],
    strategy: SharingStrategy,
    sa_buffer: Option<&AuthorityBuffer>,
) -> Result<Vec<Vec<LogEvent>>> {
    let member_logs: Vec<&OrgLog> = members.iter().map(|&m| logs[m]).collect();
    let inject_day = window.last_train_day();
    if members.len() < 2 || strategy == SharingStrategy::Local {
        return Ok(vec![Vec::new(); members.len()]);
    }
    let intersection_extras = |is_combined: bool| -> Result<Vec<Vec<LogEvent>>> {
        match config.backend {
            Backend::Plaintext => {
                let base = if is_combined {
                    SharingStrategy::Intersection
                } else {
                    strategy
                };
                Ok(augment(&member_logs, base, config.intersection, inject_day)
                    .into_iter()
                    .map(|a| a.extra)
                    .collect())
            }
            Backend::Psi => psi_dt_intersection_extras(&member_logs),
            Backend::ServerAided => {
                let buffer = sa_buffer.ok_or_else(|| anyhow!("missing authority buffer"))?;
                members
                    .iter()
                    .map(|&m| {
                        log_sharing(buffer, members, m, logs[m]).map_err(|e| anyhow!("{e}"))
                    })
                    .collect()
            }
        }
    };
    match strategy {
        SharingStrategy::Local => unreachable!("handled above"),
        SharingStrategy::Global => Ok(share_global(&member_logs)),
        SharingStrategy::Intersection => intersection_extras(false),
        SharingStrategy::Ip2Ip => {
            let hh = heavy_hitters(&member_logs, HEAVY_HITTER_LIMIT);
            let matrix = build_ip2ip(&member_logs, &hh);
            Ok(share_ip2ip(&member_logs, &matrix, inject_day))
        }
        SharingStrategy::Ip2IpAndIntersection => {
            let mut extras = intersection_extras(true)?;
            let hh = heavy_hitters(&member_logs, HEAVY_HITTER_LIMIT);
            let matrix = build_ip2ip(&member_logs, &hh);
            for (acc, ip2ip) in extras.iter_mut().zip(share_ip2ip(&member_logs, &matrix, inject_day))
            {
                acc.extend(ip2ip);
            }
            Ok(extras)
        }
    }
}

/// Intersection sharing realized by PSI-DT: each recipient plays client
/// against every peer, whose records carry the day list per source.
fn psi_dt_intersection_extras(member_logs: &[&OrgLog]) -> Result<Vec<Vec<LogEvent>>> {
    let psi_config = PsiConfig::default();
    let unique_sorted: Vec<Vec<u64>> = member_logs
        .iter()
        .map(|log| {
            let mut v: Vec<u64> =
                log.unique_sources().iter().map(|s| s.value() as u64).collect();
            v.sort_unstable();
            v
        })
        .collect();
    let records: Vec<Vec<(u64, Vec<u8>)>> = member_logs
        .iter()
        .map(|log| {
            let mut days: HashMap<u64, Vec<u8>> = HashMap::new();
            for ev in &log.events {
                days.entry(ev.source.value() as u64)
                    .or_default()
                    .extend_from_slice(&ev.day.to_be_bytes());
            }
            let mut list: Vec<(u64, Vec<u8>)> = days.into_iter().collect();
            list.sort_by_key(|(s, _)| *s);
            list
        })
        .collect();

    let mut extras = vec![Vec::new(); member_logs.len()];
    for recipient in 0..member_logs.len() {
        for peer in 0..member_logs.len() {
            if peer == recipient {
                continue;
            }
            let (outcome, _) =
                psi_dt_local(&unique_sorted[recipient], &records[peer], &psi_config, None)
                    .map_err(|e| anyhow!("psi-dt session failed: {e}"))?;
            for (source, day_bytes) in outcome.records {
                let source = Subnet24::new(source as u32)
                    .map_err(|e| anyhow!("record element out of range: {e}"))?;
                for day in day_bytes.chunks_exact(4) {
                    extras[recipient].push(LogEvent {
                        day: u32::from_be_bytes(day.try_into().unwrap()),
                        source,
                    });
                }
            }
        }
    }
    Ok(extras)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentConfig;

    fn small_config(dir: &std::path::Path, extra: &str) -> ExperimentConfig {
        let text = format!(
            "synthetic.n_orgs = 12\nsynthetic.n_days = 7\nsynthetic.groups = 3\n\
             synthetic.base_rate = 30\nsynthetic.noise_rate = 20\n\
             methods = kmeans\nk = 2\nstrategies = local,intersection\nseed = 5\n\
             out = {}\n{extra}",
            dir.display()
        );
        ExperimentConfig::parse(&text).unwrap()
    }

    #[test]
    fn local_strategy_matches_ts_baseline_rows() {
        let dir = tempfile::tempdir().unwrap();
        let mut config = small_config(dir.path(), "methods = kmeans,ts\n");
        config.strategies = vec![SharingStrategy::Local];
        let out = run(&config).unwrap();
        // For every (window, org): the kmeans/local row equals the TS row.
        let mut ts: HashMap<(usize, OrgId), PredictionMetrics> = HashMap::new();
        for r in out.rows.iter().filter(|r| r.method == "TS") {
            ts.insert((r.window, r.org.clone()), r.metrics);
        }
        let mut compared = 0;
        for r in out.rows.iter().filter(|r| r.method == "kmeans") {
            assert_eq!(r.strategy, "local");
            let baseline = &ts[&(r.window, r.org.clone())];
            assert_eq!(r.metrics.tp, baseline.tp);
            assert_eq!(r.metrics.fp, baseline.fp);
            assert_eq!(r.metrics.fn_, baseline.fn_);
            compared += 1;
        }
        assert!(compared > 0);
    }

    #[test]
    fn rerunning_the_same_seed_is_byte_identical() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let out_a = run(&small_config(dir_a.path(), "")).unwrap();
        let out_b = run(&small_config(dir_b.path(), "")).unwrap();
        assert_eq!(
            fs::read(&out_a.results_path).unwrap(),
            fs::read(&out_b.results_path).unwrap()
        );
        assert_eq!(
            fs::read(&out_a.summary_path).unwrap(),
            fs::read(&out_b.summary_path).unwrap()
        );
    }

    #[test]
    fn summary_is_recomputable_from_rows() {
        let dir = tempfile::tempdir().unwrap();
        let out = run(&small_config(dir.path(), "")).unwrap();
        let summary = summarize(&out.rows);
        assert!(!summary.is_empty());
        for (_, s) in &summary {
            assert!(s.tpr >= 0.0 && s.tpr <= 1.0);
            assert!(s.windows == 2); // 7 days -> 2 windows
        }
    }

    /// The summary file must be recomputable from the per-row CSV alone.
    #[test]
    fn summary_csv_recomputable_from_results_csv() {
        let dir = tempfile::tempdir().unwrap();
        let out = run(&small_config(dir.path(), "methods = kmeans,ts,freud-b\n")).unwrap();

        // Re-parse results.csv into rows.
        let text = fs::read_to_string(&out.results_path).unwrap();
        let mut lines = text.lines().filter(|l| !l.starts_with('#'));
        assert_eq!(lines.next().unwrap(), RESULT_COLUMNS);
        let parse_opt = |s: &str| (!s.is_empty()).then(|| s.parse::<f64>().unwrap());
        let reparsed: Vec<ResultRow> = lines
            .map(|line| {
                let f: Vec<&str> = line.split(',').collect();
                let mut metrics = PredictionMetrics::from_counts(Counts {
                    tp: f[6].parse().unwrap(),
                    fp: f[7].parse().unwrap(),
                    fn_: f[8].parse().unwrap(),
                });
                metrics.relative.tp_impr = parse_opt(f[12]);
                metrics.relative.fp_incr = parse_opt(f[13]);
                metrics.relative.fn_incr = parse_opt(f[14]);
                ResultRow {
                    window: f[0].parse().unwrap(),
                    org: f[1].to_string(),
                    method: match f[2] {
                        "TS" => "TS",
                        "kmeans" => "kmeans",
                        "FREUD-B" => "FREUD-B",
                        other => panic!("unexpected method {other}"),
                    },
                    k: f[3].parse().unwrap(),
                    strategy: f[4].to_string(),
                    backend: "plaintext",
                    metrics,
                    cluster_size: f[15].parse().unwrap(),
                    collaborators: f[16].parse().unwrap(),
                }
            })
            .collect();

        // Recomputed macro averages match summary.csv to 1e-9.
        let recomputed = summarize(&reparsed);
        let summary_text = fs::read_to_string(&out.summary_path).unwrap();
        let summary_lines: Vec<&str> = summary_text
            .lines()
            .filter(|l| !l.starts_with('#') && *l != SUMMARY_COLUMNS)
            .collect();
        assert_eq!(summary_lines.len(), recomputed.len());
        for (line, ((method, k, strategy, _), s)) in summary_lines.iter().zip(&recomputed) {
            let f: Vec<&str> = line.split(',').collect();
            assert_eq!(f[0], method);
            assert_eq!(f[1], k.to_string());
            assert_eq!(f[2], strategy);
            for (got, expect) in [
                (f[6], s.tpr),
                (f[7], s.ppv),
                (f[8], s.f1),
                (f[12], s.avg_cluster_size),
            ] {
                assert!((got.parse::<f64>().unwrap() - expect).abs() < 1e-9);
            }
            for (got, expect) in [(f[9], s.tp_impr), (f[10], s.fp_incr), (f[11], s.fn_incr)] {
                match expect {
                    Some(v) => assert!((got.parse::<f64>().unwrap() - v).abs() < 1e-9),
                    None => assert!(got.is_empty()),
                }
            }
        }
    }

    /// Rows except the backend tag, for cross-backend comparison.
    fn comparable(rows: &[ResultRow]) -> Vec<(usize, OrgId, String, usize, String, u64, u64, u64, usize)> {
        rows.iter()
            .map(|r| {
                (
                    r.window,
                    r.org.clone(),
                    r.method.to_string(),
                    r.k,
                    r.strategy.clone(),
                    r.metrics.tp,
                    r.metrics.fp,
                    r.metrics.fn_,
                    r.cluster_size,
                )
            })
            .collect()
    }

    #[test]
    fn server_aided_backend_reproduces_plaintext_min_multiplicity_rows() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let mut plain = small_config(dir_a.path(), "intersection = min-multiplicity\n");
        plain.strategies = vec![SharingStrategy::Local, SharingStrategy::Intersection];
        let mut crypto = small_config(dir_b.path(), "intersection = min-multiplicity\n");
        crypto.strategies = plain.strategies.clone();
        crypto.backend = Backend::ServerAided;
        let out_plain = run(&plain).unwrap();
        let out_crypto = run(&crypto).unwrap();
        assert_eq!(comparable(&out_plain.rows), comparable(&out_crypto.rows));
    }

    #[test]
    fn psi_backend_reproduces_plaintext_unique_rows() {
        // Smaller corpus: the psi back-end runs real sessions per pair.
        let make = |dir: &std::path::Path| {
            ExperimentConfig::parse(&format!(
                "synthetic.n_orgs = 8\nsynthetic.n_days = 6\nsynthetic.groups = 2\n\
                 synthetic.base_rate = 15\nsynthetic.noise_rate = 10\n\
                 methods = kmeans\nk = 2\nstrategies = local,intersection\nseed = 11\n\
                 out = {}\n",
                dir.display()
            ))
            .unwrap()
        };
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let plain = make(dir_a.path());
        let mut crypto = make(dir_b.path());
        crypto.backend = Backend::Psi;
        let out_plain = run(&plain).unwrap();
        let out_crypto = run(&crypto).unwrap();
        assert_eq!(comparable(&out_plain.rows), comparable(&out_crypto.rows));
    }

    #[test]
    fn failing_window_is_skipped_and_run_continues() {
        // Day 0 is reported by a single org, so window 0 selects one org
        // and fails; window 1 has the full population and must still run.
        let dir = tempfile::tempdir().unwrap();
        let corpus_path = dir.path().join("corpus.csv");
        let mut lines = Vec::new();
        for day in 0..7u32 {
            for org in 0..6 {
                if day == 0 && org > 0 {
                    continue;
                }
                for s in 0..3 {
                    lines.push(format!(
                        "2024-01-{:02},org{org},198.51.{}.1",
                        day + 1,
                        org * 10 + s
                    ));
                }
            }
        }
        fs::write(&corpus_path, lines.join("\n")).unwrap();
        let config = ExperimentConfig::parse(&format!(
            "corpus = {}\nmethods = ts\nstrategies = local\nseed = 1\nout = {}\n",
            corpus_path.display(),
            dir.path().join("out").display()
        ))
        .unwrap();
        let out = run(&config).unwrap();
        assert!(out.rows.iter().all(|r| r.window == 1), "window 0 should be skipped");
        assert!(!out.rows.is_empty());
    }

    #[test]
    fn dump_o2o_writes_per_window_matrices() {
        let dir = tempfile::tempdir().unwrap();
        let config = small_config(dir.path(), "dump_o2o = true\n");
        run(&config).unwrap();
        let dump = config.out_dir.join("o2o_w00.csv");
        let text = fs::read_to_string(dump).unwrap();
        let mut lines = text.lines();
        let header = lines.next().unwrap();
        let n = header.split(',').count();
        assert_eq!(lines.count(), n, "one matrix row per org");
    }
}
