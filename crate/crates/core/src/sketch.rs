//! Count-Min sketches sized for the /24 pair space, plus mask-based private
//! aggregation so the authority only ever sees the cluster-wide sum.

use std::collections::HashMap;

use sha2::{Digest, Sha256};
use thiserror::Error;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::corpus::{OrgId, Subnet24};

/// Private aggregation runs over subgroups of at most this many members;
/// larger clusters are split and the subgroup sums added.
pub const AGGREGATION_SUBGROUP: usize = 100;

#[derive(Debug, Error, PartialEq)]
pub enum SketchError {
    #[error("epsilon and delta must lie in (0, 1), domain must be >= 2")]
    BadParams,
    #[error("cannot encode a pair of identical subnets")]
    IdenticalPair,
    #[error("sketch shapes or hash seeds differ")]
    ShapeMismatch,
    #[error("submission from unknown org {0}")]
    UnknownOrg(OrgId),
    #[error("duplicate submission from {0}")]
    DuplicateSubmission(OrgId),
    #[error("missing submissions from {0} members; masks would not cancel")]
    MissingMembers(usize),
    #[error("serialized sketch is truncated or malformed")]
    BadEncoding,
}

/// Sketch dimensions derived from an accuracy target: width `ceil(e/eps)`
/// columns and `ceil(ln(M*M / (2*delta)))` rows for a domain of M items
/// paired against each other.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SketchParams {
    pub epsilon: f64,
    pub delta: f64,
    /// Item-domain size M; the sketch indexes pairs, i.e. ~M*M/2 keys.
    pub domain: u64,
    pub depth: usize,
    pub width: usize,
}

impl SketchParams {
    pub fn size(epsilon: f64, delta: f64, domain: u64) -> Result<Self, SketchError> {
        if !(epsilon > 0.0 && epsilon < 1.0 && delta > 0.0 && delta < 1.0 && domain >= 2) {
            return Err(SketchError::BadParams);
        }
        let width = (std::f64::consts::E / epsilon).ceil() as usize;
        let m = domain as f64;
        let depth = ((m * m / (2.0 * delta)).ln()).ceil() as usize;
        Ok(SketchParams { epsilon, delta, domain, depth, width })
    }

    /// Total counter count L = d * w.
    pub fn cells(&self) -> usize {
        self.depth * self.width
    }
}

/// Encode an unordered pair of /24 subnets as `min * 2^24 + max`, the index
/// space the correlation matrix lives in.
pub fn encode_pair(a: Subnet24, b: Subnet24) -> Result<u64, SketchError> {
    if a == b {
        return Err(SketchError::IdenticalPair);
    }
    let (lo, hi) = if a.value() < b.value() { (a, b) } else { (b, a) };
    Ok((lo.value() as u64) << 24 | hi.value() as u64)
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// A d x w grid of u64 counters with double-hashed row indices
/// `(h1 + row * h2) mod w`. Queries never underestimate.
#[derive(Debug, Clone, PartialEq)]
pub struct CountMinSketch {
    pub params: SketchParams,
    /// Two 64-bit seeds shared by every sketch in a deployment so grids
    /// stay mergeable.
    pub seeds: [u64; 2],
    counters: Vec<u64>,
}

impl CountMinSketch {
    pub fn new(params: SketchParams, seeds: [u64; 2]) -> Self {
        let counters = vec![0; params.cells()];
        CountMinSketch { params, seeds, counters }
    }

    fn column(&self, item: u64, row: usize) -> usize {
        let h1 = splitmix64(item ^ self.seeds[0]);
        let h2 = splitmix64(item ^ self.seeds[1]);
        (h1.wrapping_add((row as u64).wrapping_mul(h2)) % self.params.width as u64) as usize
    }

    pub fn update(&mut self, item: u64, count: u64) {
        for row in 0..self.params.depth {
            let col = self.column(item, row);
            self.counters[row * self.params.width + col] += count;
        }
    }

    /// Minimum over rows; an upper bound on the true count.
    pub fn query(&self, item: u64) -> u64 {
        (0..self.params.depth)
            .map(|row| self.counters[row * self.params.width + self.column(item, row)])
            .min()
            .expect("depth >= 1")
    }

    /// Entrywise sum; sketches are linear, so this equals sketching the
    /// multiset union.
    pub fn merge(&mut self, other: &CountMinSketch) -> Result<(), SketchError> {
        if self.params != other.params || self.seeds != other.seeds {
            return Err(SketchError::ShapeMismatch);
        }
        for (a, b) in self.counters.iter_mut().zip(&other.counters) {
            *a += b;
        }
        Ok(())
    }

    pub fn counters(&self) -> &[u64] {
        &self.counters
    }

    /// Serialize: params header then row-major little-endian u64 counters.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(48 + self.counters.len() * 8);
        out.extend_from_slice(&self.params.epsilon.to_le_bytes());
        out.extend_from_slice(&self.params.delta.to_le_bytes());
        out.extend_from_slice(&self.params.domain.to_le_bytes());
        out.extend_from_slice(&(self.params.depth as u32).to_le_bytes());
        out.extend_from_slice(&(self.params.width as u32).to_le_bytes());
        out.extend_from_slice(&self.seeds[0].to_le_bytes());
        out.extend_from_slice(&self.seeds[1].to_le_bytes());
        for c in &self.counters {
            out.extend_from_slice(&c.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, SketchError> {
        if bytes.len() < 48 {
            return Err(SketchError::BadEncoding);
        }
        let f64_at = |i: usize| f64::from_le_bytes(bytes[i..i + 8].try_into().unwrap());
        let u64_at = |i: usize| u64::from_le_bytes(bytes[i..i + 8].try_into().unwrap());
        let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
        let params = SketchParams {
            epsilon: f64_at(0),
            delta: f64_at(8),
            domain: u64_at(16),
            depth: u32_at(24) as usize,
            width: u32_at(28) as usize,
        };
        let seeds = [u64_at(32), u64_at(40)];
        let cells = params.cells();
        if bytes.len() != 48 + cells * 8 {
            return Err(SketchError::BadEncoding);
        }
        let counters = bytes[48..]
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(CountMinSketch { params, seeds, counters })
    }
}

/// A sketch with pairwise additive masks applied (mod 2^64). Individually
/// uniform-looking; sums to the true total over a complete subgroup.
#[derive(Debug, Clone)]
pub struct BlindedSketch {
    pub org: OrgId,
    pub params: SketchParams,
    pub seeds: [u64; 2],
    masked: Vec<u64>,
}

/// Pairwise mask schedule for one cluster. The shared master secret stands
/// in for a key-agreement round: each unordered member pair derives one
/// stream seed from it, the lower-indexed member adds the stream and the
/// higher-indexed one subtracts it.
#[derive(Debug, Clone)]
pub struct AggregationPlan {
    roster: Vec<OrgId>,
    subgroups: Vec<Vec<usize>>,
    master: [u8; 32],
}

impl AggregationPlan {
    pub fn new(roster: &[OrgId], master: [u8; 32]) -> Self {
        let subgroups = (0..roster.len())
            .collect::<Vec<usize>>()
            .chunks(AGGREGATION_SUBGROUP)
            .map(|c| c.to_vec())
            .collect();
        AggregationPlan { roster: roster.to_vec(), subgroups, master }
    }

    fn subgroup_of(&self, member: usize) -> &[usize] {
        self.subgroups[member / AGGREGATION_SUBGROUP].as_slice()
    }

    fn pair_stream(&self, a: usize, b: usize, words: usize) -> Vec<u64> {
        let mut hasher = Sha256::new();
        hasher.update(b"cpb-aggregation-pair");
        hasher.update(self.master);
        hasher.update((a as u64).to_le_bytes());
        hasher.update((b as u64).to_le_bytes());
        let seed: [u8; 32] = hasher.finalize().into();
        let mut rng = ChaCha20Rng::from_seed(seed);
        (0..words).map(|_| rng.next_u64()).collect()
    }

    /// Mask one member's sketch for submission.
    pub fn blind(&self, org: &OrgId, sketch: &CountMinSketch) -> Result<BlindedSketch, SketchError> {
        let me = self
            .roster
            .iter()
            .position(|o| o == org)
            .ok_or_else(|| SketchError::UnknownOrg(org.clone()))?;
        let group = self.subgroup_of(me);
        if group.len() == 1 {
            log::warn!("aggregation subgroup of size 1: masks vanish and privacy is vacuous");
        }
        let mut masked: Vec<u64> = sketch.counters().to_vec();
        for &peer in group {
            if peer == me {
                continue;
            }
            let (lo, hi) = (me.min(peer), me.max(peer));
            let stream = self.pair_stream(lo, hi, masked.len());
            for (word, mask) in masked.iter_mut().zip(stream) {
                if me == lo {
                    *word = word.wrapping_add(mask);
                } else {
                    *word = word.wrapping_sub(mask);
                }
            }
        }
        Ok(BlindedSketch {
            org: org.clone(),
            params: sketch.params,
            seeds: sketch.seeds,
            masked,
        })
    }

    /// Authority-side sum. Requires exactly one submission per roster
    /// member; a missing member leaves masks uncancelled, so it aborts.
    pub fn aggregate(&self, submissions: &[BlindedSketch]) -> Result<CountMinSketch, SketchError> {
        let mut by_org: HashMap<&OrgId, &BlindedSketch> = HashMap::new();
        for s in submissions {
            if !self.roster.contains(&s.org) {
                return Err(SketchError::UnknownOrg(s.org.clone()));
            }
            if by_org.insert(&s.org, s).is_some() {
                return Err(SketchError::DuplicateSubmission(s.org.clone()));
            }
        }
        let missing = self.roster.iter().filter(|o| !by_org.contains_key(o)).count();
        if missing > 0 {
            return Err(SketchError::MissingMembers(missing));
        }
        let first = by_org[&self.roster[0]];
        let mut total = CountMinSketch::new(first.params, first.seeds);
        for org in &self.roster {
            let s = by_org[org];
            if s.params != first.params || s.seeds != first.seeds {
                return Err(SketchError::ShapeMismatch);
            }
            for (acc, word) in total.counters.iter_mut().zip(&s.masked) {
                *acc = acc.wrapping_add(*word);
            }
        }
        Ok(total)
    }
}

impl BlindedSketch {
    /// The raw masked words (what the authority actually sees).
    pub fn masked_words(&self) -> &[u64] {
        &self.masked
    }
}
