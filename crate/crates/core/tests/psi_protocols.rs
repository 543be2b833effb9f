//! Protocol-level properties of PSI-CA and PSI-DT: oracle equivalence on
//! random instances, linear wire growth, transcript-shape privacy, and the
//! mutual variant's cost.

use std::collections::{HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use cpb_core::psi::{mutual_psi_ca, psi_ca_local, psi_dt_local, GroupChoice, PsiConfig};
use cpb_core::util::linear_fit;

fn random_set(rng: &mut ChaCha20Rng, max_len: usize) -> Vec<u64> {
    let n = rng.gen_range(0..=max_len);
    let mut set = HashSet::new();
    while set.len() < n {
        set.insert(rng.gen_range(0..1u64 << 24));
    }
    set.into_iter().collect()
}

fn oracle_cardinality(a: &[u64], b: &[u64]) -> u64 {
    let a: HashSet<u64> = a.iter().copied().collect();
    b.iter().filter(|x| a.contains(x)).count() as u64
}

#[test]
fn psi_ca_equals_oracle_on_random_instances() {
    let config = PsiConfig::default();
    let mut rng = ChaCha20Rng::seed_from_u64(51);
    for trial in 0..25 {
        let client = random_set(&mut rng, 120);
        let server = random_set(&mut rng, 120);
        let (out, _) = psi_ca_local(&client, &server, &config, Some(trial)).unwrap();
        assert_eq!(out.cardinality, oracle_cardinality(&client, &server), "trial {trial}");
    }
}

#[test]
fn psi_dt_equals_oracle_on_random_instances() {
    let config = PsiConfig::default();
    let mut rng = ChaCha20Rng::seed_from_u64(52);
    for trial in 0..15 {
        let client = random_set(&mut rng, 80);
        let server: Vec<(u64, Vec<u8>)> = random_set(&mut rng, 80)
            .into_iter()
            .map(|x| (x, x.to_le_bytes().to_vec()))
            .collect();
        let (out, _) = psi_dt_local(&client, &server, &config, Some(trial)).unwrap();
        let oracle: HashMap<u64, Vec<u8>> = server
            .iter()
            .filter(|(x, _)| client.contains(x))
            .map(|(x, d)| (*x, d.clone()))
            .collect();
        assert_eq!(out.records, oracle, "trial {trial}");
    }
}

#[test]
fn mod2048_protocols_match_oracles_once() {
    // The modular-arithmetic mode is slow; one solid instance each.
    let config = PsiConfig { group: GroupChoice::Mod2048 };
    let mut rng = ChaCha20Rng::seed_from_u64(53);
    let client = random_set(&mut rng, 40);
    let server = random_set(&mut rng, 40);
    let (out, _) = psi_ca_local(&client, &server, &config, Some(9)).unwrap();
    assert_eq!(out.cardinality, oracle_cardinality(&client, &server));

    let server_records: Vec<(u64, Vec<u8>)> =
        server.iter().map(|x| (*x, b"rec".to_vec())).collect();
    let (dt, _) = psi_dt_local(&client, &server_records, &config, Some(10)).unwrap();
    assert_eq!(dt.records.len() as u64, out.cardinality);
}

#[test]
fn wire_bytes_grow_linearly_in_set_sizes() {
    let config = PsiConfig::default();
    let sizes = [500usize, 1000, 2000, 4000, 8000];
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (i, &s) in sizes.iter().enumerate() {
        let set: Vec<u64> = (0..s as u64).collect();
        let (out, server_report) = psi_ca_local(&set, &set, &config, Some(i as u64)).unwrap();
        let total = out.report.bytes_sent + server_report.bytes_sent;
        xs.push(2.0 * s as f64); // v + w
        ys.push(total as f64);
    }
    let (_, slope, r2) = linear_fit(&xs, &ys).unwrap();
    assert!(slope > 0.0);
    assert!(r2 > 0.99, "R^2 = {r2}");
}

#[test]
fn equal_size_disjoint_inputs_leave_identical_transcript_shape() {
    // Two different non-intersecting client sets of the same size must
    // produce byte-identical transcript LENGTHS (a shape check, not a
    // security proof).
    let config = PsiConfig::default();
    let server: Vec<u64> = (1_000_000..1_000_200).collect();
    let client_a: Vec<u64> = (0..200).collect();
    let client_b: Vec<u64> = (500_000..500_200).collect();
    let (out_a, srv_a) = psi_ca_local(&client_a, &server, &config, Some(1)).unwrap();
    let (out_b, srv_b) = psi_ca_local(&client_b, &server, &config, Some(2)).unwrap();
    assert_eq!(out_a.cardinality, 0);
    assert_eq!(out_b.cardinality, 0);
    assert_eq!(out_a.report.bytes_sent, out_b.report.bytes_sent);
    assert_eq!(out_a.report.bytes_received, out_b.report.bytes_received);
    assert_eq!(srv_a.bytes_sent, srv_b.bytes_sent);
}

#[test]
fn mutual_run_costs_about_twice_a_single_run() {
    let config = PsiConfig::default();
    let a: Vec<u64> = (0..400).collect();
    let b: Vec<u64> = (200..600).collect();
    let (single, single_server) = psi_ca_local(&a, &b, &config, Some(3)).unwrap();
    let (m_a, m_b) = mutual_psi_ca(&a, &b, &config, Some(4)).unwrap();
    assert_eq!(m_a.cardinality, 200);
    assert_eq!(m_b.cardinality, 200);
    let single_bytes = (single.report.bytes_sent + single_server.bytes_sent) as f64;
    let mutual_bytes =
        (m_a.report.bytes_sent + m_a.report.bytes_received + m_b.report.bytes_sent
            + m_b.report.bytes_received) as f64;
    let ratio = mutual_bytes / single_bytes;
    assert!(
        (1.5..=2.5).contains(&ratio),
        "mutual byte cost should be about 2x a single run, got {ratio:.2}x"
    );
}
