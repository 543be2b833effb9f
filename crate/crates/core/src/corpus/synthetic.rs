//! Synthetic corpus generation.
//!
//! The generator plants correlated-attack structure: each attacker group
//! maintains a pool of active attackers that persists day-to-day, and every
//! member org observes a random subset of the pool each day (at least one
//! member sees each active attacker, so persistence is visible in the
//! corpus). Group pools and per-org noise draw from disjoint regions of the
//! /24 space, so orgs never share noise and disjoint groups share nothing.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::{AttackEvent, CorpusError, CorpusSpec, Subnet24};

/// Each region holds 2^14 subnet values; groups take the first
/// `attacker_groups` regions and each org's noise takes one more.
pub(super) const MAX_REGIONS: usize = 1 << 10;
const REGION_BITS: u32 = 14;
const REGION_SIZE: u32 = 1 << REGION_BITS;
/// Probability that a member org observes a given active attacker on a day.
const HIT_PROB: f64 = 0.6;
/// Poisson sampling (Knuth) is numerically sound well past this.
const MAX_RATE: f64 = 500.0;

fn poisson<R: Rng>(rng: &mut R, lambda: f64) -> usize {
    if lambda <= 0.0 {
        return 0;
    }
    let limit = (-lambda).exp();
    let mut k = 0usize;
    let mut p = 1.0f64;
    loop {
        p *= rng.gen::<f64>();
        if p <= limit {
            return k;
        }
        k += 1;
    }
}

fn draw_new(rng: &mut ChaCha20Rng, region: u32, taken: &HashSet<u32>) -> Option<u32> {
    if taken.len() as u32 >= REGION_SIZE {
        return None;
    }
    loop {
        let v = (region << REGION_BITS) | rng.gen_range(0..REGION_SIZE);
        if !taken.contains(&v) {
            return Some(v);
        }
    }
}

/// Generate a corpus per `spec`. Deterministic for a fixed seed.
pub fn generate_synthetic(spec: &CorpusSpec) -> Result<Vec<AttackEvent>, CorpusError> {
    spec.validate()?;
    if spec.base_rate > MAX_RATE || spec.noise_rate > MAX_RATE {
        return Err(CorpusError::InvalidSpec(format!(
            "rates above {MAX_RATE}/day are outside the sampler's range"
        )));
    }
    if spec.group_membership.len() != spec.n_orgs {
        return Err(CorpusError::InvalidSpec(
            "group_membership must cover exactly n_orgs organizations".into(),
        ));
    }

    let mut org_names: Vec<String> = spec.group_membership.keys().cloned().collect();
    org_names.sort();
    // group id -> member org indices, ascending.
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); spec.attacker_groups];
    for (idx, name) in org_names.iter().enumerate() {
        for g in &spec.group_membership[name] {
            members[*g].push(idx);
        }
    }
    for m in &mut members {
        m.sort_unstable();
    }

    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);

    // Start each group's pool at its birth/death equilibrium so day 0 looks
    // like every other day.
    let equilibrium = if spec.persistence < 1.0 {
        ((spec.base_rate / (1.0 - spec.persistence)).round() as usize).min(REGION_SIZE as usize / 2)
    } else {
        spec.base_rate.round() as usize
    };
    let mut active: Vec<Vec<u32>> = Vec::with_capacity(spec.attacker_groups);
    let mut active_sets: Vec<HashSet<u32>> = Vec::with_capacity(spec.attacker_groups);
    for g in 0..spec.attacker_groups {
        let mut pool = Vec::with_capacity(equilibrium);
        let mut set = HashSet::new();
        for _ in 0..equilibrium {
            if let Some(v) = draw_new(&mut rng, g as u32, &set) {
                set.insert(v);
                pool.push(v);
            }
        }
        active.push(pool);
        active_sets.push(set);
    }

    let mut events: Vec<AttackEvent> = Vec::new();
    // Region ids stay below 1024, so every generated value fits in 24 bits.
    let emit = |day: u32, org_idx: usize, value: u32, out: &mut Vec<AttackEvent>| {
        out.push(AttackEvent {
            day,
            victim: org_name_at(&org_names, org_idx),
            source: Subnet24::new(value).expect("region value in /24 range"),
        });
    };

    for day in 0..spec.n_days {
        // Group attacks: each active attacker hits a non-empty subset of the
        // group's members.
        for g in 0..spec.attacker_groups {
            if members[g].is_empty() {
                continue;
            }
            for &attacker in &active[g] {
                let mut any = false;
                for &org_idx in &members[g] {
                    if rng.gen_bool(HIT_PROB) {
                        emit(day, org_idx, attacker, &mut events);
                        any = true;
                    }
                }
                if !any {
                    let pick = members[g][rng.gen_range(0..members[g].len())];
                    emit(day, pick, attacker, &mut events);
                }
            }
        }
        // Per-org noise, unique to the org by region construction.
        for org_idx in 0..spec.n_orgs {
            let region = (spec.attacker_groups + org_idx) as u32;
            let n = poisson(&mut rng, spec.noise_rate);
            let mut today = HashSet::new();
            for _ in 0..n {
                if let Some(v) = draw_new(&mut rng, region, &today) {
                    today.insert(v);
                    emit(day, org_idx, v, &mut events);
                }
            }
        }
        // Survival and fresh arrivals for the next day.
        if day + 1 < spec.n_days {
            for g in 0..spec.attacker_groups {
                let survivors: Vec<u32> = active[g]
                    .iter()
                    .copied()
                    .filter(|_| rng.gen_bool(spec.persistence))
                    .collect();
                active_sets[g] = survivors.iter().copied().collect();
                active[g] = survivors;
                let fresh = poisson(&mut rng, spec.base_rate);
                for _ in 0..fresh {
                    if let Some(v) = draw_new(&mut rng, g as u32, &active_sets[g]) {
                        active_sets[g].insert(v);
                        active[g].push(v);
                    }
                }
            }
        }
    }

    events.sort_by(|a, b| {
        (a.day, &a.victim, a.source.value()).cmp(&(b.day, &b.victim, b.source.value()))
    });
    Ok(events)
}

fn org_name_at(names: &[String], idx: usize) -> String {
    names[idx].clone()
}
