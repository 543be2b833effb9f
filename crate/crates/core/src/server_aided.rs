//! Server-aided secure similarity and log sharing.
//!
//! Every organization PRP-labels each `(source, occurrence-counter)` of its
//! multiset under a shared AES key the authority never sees, and encrypts
//! the event under a key derived from the same `(source, counter)` pair.
//! The authority intersects label sets to fill the O2O matrix, buffers the
//! peer ciphertexts at intersecting positions, and hands them to cluster
//! members, who can derive exactly the keys for occurrences they share.
//! Per-org work stays constant in the number of organizations; only the
//! authority pays linear communication.

use std::collections::HashMap;

use aes::cipher::generic_array::GenericArray;
use aes::cipher::{BlockEncrypt, KeyInit};
use aes::Aes128;
use chacha20poly1305::aead::{Aead, Payload};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce};
use rand::{CryptoRng, RngCore};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::clustering::SimilarityMatrix;
use crate::corpus::{LogEvent, OrgId, OrgLog, Subnet24};
use crate::exec;
use crate::psi::wire::Message;

#[derive(Debug, Error)]
pub enum ServerAidedError {
    #[error("occurrence counter overflow for one source (more than 2^32 duplicates)")]
    CounterOverflow,
    #[error("duplicate submission from {0}")]
    DuplicateSubmission(OrgId),
    #[error("recipient is not part of the cluster")]
    NotInCluster,
    #[error("delivery references label index {index} but the recipient holds {len}")]
    IndexOutOfRange { index: u32, len: usize },
    #[error("authenticated decryption failed for a record from {peer}; the authority misrouted")]
    AuthFailure { peer: OrgId },
    #[error("decrypted record does not match the label's source")]
    SourceMismatch,
    #[error("malformed record plaintext")]
    BadRecord,
    #[error("wrong message type for this step")]
    BadMessage,
}

/// The 128-bit PRP key shared by all organizations and withheld from the
/// authority.
#[derive(Clone)]
pub struct PrpKey([u8; 16]);

impl PrpKey {
    pub fn random<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let mut key = [0u8; 16];
        rng.fill_bytes(&mut key);
        PrpKey(key)
    }

    pub fn from_bytes(bytes: [u8; 16]) -> Self {
        PrpKey(bytes)
    }

    fn cipher(&self) -> Aes128 {
        Aes128::new(GenericArray::from_slice(&self.0))
    }
}

impl std::fmt::Debug for PrpKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("PrpKey(..)") // never print key material
    }
}

/// One occurrence's PRP input block: 24-bit source, 32-bit counter,
/// zero-padded to the AES block.
#[derive(Debug, Clone, Copy)]
pub struct OccurrenceBlock {
    pub source: Subnet24,
    pub day: u32,
    pub counter: u32,
    pub block: [u8; 16],
}

fn encode_block(source: Subnet24, counter: u32) -> [u8; 16] {
    let v = source.value();
    let mut block = [0u8; 16];
    block[0] = (v >> 16) as u8;
    block[1] = (v >> 8) as u8;
    block[2] = v as u8;
    block[3..7].copy_from_slice(&counter.to_be_bytes());
    block
}

/// An org's occurrences sorted by `(day, insertion order)` and numbered per
/// source from 1. Both holders of identical multisets number identically,
/// which is what makes labels match across orgs.
pub fn occurrence_blocks(log: &OrgLog) -> Result<Vec<OccurrenceBlock>, ServerAidedError> {
    let mut ordered: Vec<(usize, LogEvent)> = log.events.iter().copied().enumerate().collect();
    ordered.sort_by_key(|(idx, ev)| (ev.day, *idx));
    let mut counters: HashMap<u32, u32> = HashMap::new();
    let mut out = Vec::with_capacity(ordered.len());
    for (_, ev) in ordered {
        let counter = counters.entry(ev.source.value()).or_insert(0);
        *counter = counter.checked_add(1).ok_or(ServerAidedError::CounterOverflow)?;
        out.push(OccurrenceBlock {
            source: ev.source,
            day: ev.day,
            counter: *counter,
            block: encode_block(ev.source, *counter),
        });
    }
    Ok(out)
}

fn record_key(block: &[u8; 16]) -> Key {
    let digest: [u8; 32] = Sha256::digest(block).into();
    Key::from(digest)
}

/// Each derived key encrypts exactly one record, so the nonce is fixed.
fn zero_nonce() -> Nonce {
    Nonce::from([0u8; 12])
}

/// What one org submits to the authority: PRP labels and, aligned with
/// them, the authenticated ciphertexts of `(source, day)`.
#[derive(Debug, Clone)]
pub struct LabeledSet {
    pub org: OrgId,
    pub labels: Vec<[u8; 16]>,
    pub ciphertexts: Vec<Vec<u8>>,
}

impl LabeledSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Label and encrypt one org's log.
pub fn encrypt_dataset(log: &OrgLog, key: &PrpKey) -> Result<LabeledSet, ServerAidedError> {
    let blocks = occurrence_blocks(log)?;
    let cipher = key.cipher();
    let mut labels = Vec::with_capacity(blocks.len());
    let mut ciphertexts = Vec::with_capacity(blocks.len());
    for occ in &blocks {
        let mut label = GenericArray::clone_from_slice(&occ.block);
        cipher.encrypt_block(&mut label);
        labels.push(label.into());

        let mut plain = [0u8; 8];
        plain[..4].copy_from_slice(&occ.source.value().to_be_bytes());
        plain[4..].copy_from_slice(&occ.day.to_be_bytes());
        let aead = ChaCha20Poly1305::new(&record_key(&occ.block));
        let ct = aead
            .encrypt(&zero_nonce(), Payload { msg: &plain, aad: &[] })
            .expect("in-memory encryption");
        ciphertexts.push(ct);
    }
    Ok(LabeledSet { org: log.org.clone(), labels, ciphertexts })
}

/// Per-record keys, derivable from the org's own data alone; kept as a
/// type so callers can cache instead of re-deriving.
#[derive(Debug, Clone)]
pub struct RecordKeyStore {
    pub org: OrgId,
    keys: HashMap<(u32, u32), [u8; 32]>,
}

impl RecordKeyStore {
    pub fn derive(log: &OrgLog) -> Result<Self, ServerAidedError> {
        let keys = occurrence_blocks(log)?
            .iter()
            .map(|occ| {
                ((occ.source.value(), occ.counter), Sha256::digest(occ.block).into())
            })
            .collect();
        Ok(RecordKeyStore { org: log.org.clone(), keys })
    }

    pub fn key_for(&self, source: Subnet24, counter: u32) -> Option<&[u8; 32]> {
        self.keys.get(&(source.value(), counter))
    }
}

/// The authority's state after ingesting all submissions: the O2O matrix
/// and, per ordered org pair, the peer ciphertexts at intersecting label
/// positions. Nothing in here is derived from plaintext sources or days.
#[derive(Debug, Clone)]
pub struct AuthorityBuffer {
    pub o2o: SimilarityMatrix,
    pub orgs: Vec<OrgId>,
    /// `(recipient, peer)` -> [(recipient's own label index, peer ciphertext)].
    buffers: HashMap<(usize, usize), Vec<(u32, Vec<u8>)>>,
}

impl AuthorityBuffer {
    /// What the authority would deliver to `recipient` about `peer`.
    pub fn deliveries(&self, recipient: usize, peer: usize) -> &[(u32, Vec<u8>)] {
        self.buffers.get(&(recipient, peer)).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Every buffered entry, for inspection and accounting.
    pub fn all_buffers(&self) -> impl Iterator<Item = (&(usize, usize), &Vec<(u32, Vec<u8>)>)> {
        self.buffers.iter()
    }
}

fn pair_scan(
    a: &LabeledSet,
    b_index: &HashMap<[u8; 16], u32>,
    b: &LabeledSet,
) -> (u64, Vec<(u32, Vec<u8>)>, Vec<(u32, Vec<u8>)>) {
    let mut count = 0u64;
    let mut to_a = Vec::new();
    let mut to_b = Vec::new();
    for (pos_a, label) in a.labels.iter().enumerate() {
        if let Some(&pos_b) = b_index.get(label) {
            count += 1;
            to_a.push((pos_a as u32, b.ciphertexts[pos_b as usize].clone()));
            to_b.push((pos_b, a.ciphertexts[pos_a].clone()));
        }
    }
    (count, to_a, to_b)
}

fn sta_o2o_inner(
    submissions: &[LabeledSet],
    parallel: bool,
) -> Result<AuthorityBuffer, ServerAidedError> {
    let mut orgs: Vec<OrgId> = Vec::with_capacity(submissions.len());
    for s in submissions {
        if orgs.contains(&s.org) {
            return Err(ServerAidedError::DuplicateSubmission(s.org.clone()));
        }
        orgs.push(s.org.clone());
    }
    let n = submissions.len();
    // One hash index per org; every pair scan probes it instead of
    // re-hashing pairwise.
    let indexes: Vec<HashMap<[u8; 16], u32>> = submissions
        .iter()
        .map(|s| {
            s.labels.iter().enumerate().map(|(pos, label)| (*label, pos as u32)).collect()
        })
        .collect();

    let mut pairs = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            pairs.push((i, j));
        }
    }
    let scan = |&(i, j): &(usize, usize)| pair_scan(&submissions[i], &indexes[j], &submissions[j]);
    let results = if parallel {
        exec::map_slice(&pairs, scan)
    } else {
        exec::map_slice_seq(&pairs, scan)
    };

    let mut o2o = SimilarityMatrix::new(orgs.clone());
    for (i, s) in submissions.iter().enumerate() {
        o2o.set_symmetric(i, i, s.len() as u64);
    }
    let mut buffers = HashMap::new();
    for (&(i, j), (count, to_i, to_j)) in pairs.iter().zip(results) {
        o2o.set_symmetric(i, j, count);
        if !to_i.is_empty() {
            buffers.insert((i, j), to_i);
        }
        if !to_j.is_empty() {
            buffers.insert((j, i), to_j);
        }
    }
    Ok(AuthorityBuffer { o2o, orgs, buffers })
}

/// Authority-side O2O computation over label sets (parallel over pairs when
/// the `parallel` feature is on).
pub fn sta_o2o(submissions: &[LabeledSet]) -> Result<AuthorityBuffer, ServerAidedError> {
    sta_o2o_inner(submissions, true)
}

/// Always-sequential variant of [`sta_o2o`] for benchmarking.
pub fn sta_o2o_seq(submissions: &[LabeledSet]) -> Result<AuthorityBuffer, ServerAidedError> {
    sta_o2o_inner(submissions, false)
}

/// Recipient-side log sharing: decrypt the buffered peer records for every
/// cluster peer, keyed by the recipient's own matching occurrences.
pub fn log_sharing(
    buffer: &AuthorityBuffer,
    cluster: &[usize],
    recipient: usize,
    recipient_log: &OrgLog,
) -> Result<Vec<LogEvent>, ServerAidedError> {
    if !cluster.contains(&recipient) {
        return Err(ServerAidedError::NotInCluster);
    }
    let blocks = occurrence_blocks(recipient_log)?;
    let mut recovered = Vec::new();
    for &peer in cluster {
        if peer == recipient {
            continue;
        }
        for (index, ct) in buffer.deliveries(recipient, peer) {
            let occ = blocks
                .get(*index as usize)
                .ok_or(ServerAidedError::IndexOutOfRange { index: *index, len: blocks.len() })?;
            let aead = ChaCha20Poly1305::new(&record_key(&occ.block));
            let plain = aead
                .decrypt(&zero_nonce(), Payload { msg: ct.as_slice(), aad: &[] })
                .map_err(|_| ServerAidedError::AuthFailure {
                    peer: buffer.orgs[peer].clone(),
                })?;
            if plain.len() != 8 {
                return Err(ServerAidedError::BadRecord);
            }
            let source = u32::from_be_bytes(plain[..4].try_into().unwrap());
            let day = u32::from_be_bytes(plain[4..].try_into().unwrap());
            if source != occ.source.value() {
                return Err(ServerAidedError::SourceMismatch);
            }
            recovered.push(LogEvent {
                day,
                source: Subnet24::new(source).map_err(|_| ServerAidedError::BadRecord)?,
            });
        }
    }
    Ok(recovered)
}

/// Submission wire message for one labeled set.
pub fn submission_message(set: &LabeledSet) -> Message {
    Message::Submission {
        org: set.org.clone(),
        entries: set.labels.iter().copied().zip(set.ciphertexts.iter().cloned()).collect(),
    }
}

/// Parse a submission message back into a labeled set.
pub fn parse_submission(msg: &Message) -> Result<LabeledSet, ServerAidedError> {
    match msg {
        Message::Submission { org, entries } => Ok(LabeledSet {
            org: org.clone(),
            labels: entries.iter().map(|(l, _)| *l).collect(),
            ciphertexts: entries.iter().map(|(_, c)| c.clone()).collect(),
        }),
        _ => Err(ServerAidedError::BadMessage),
    }
}

/// Delivery wire message: what the authority sends `recipient` about one
/// peer's intersecting records.
pub fn delivery_message(buffer: &AuthorityBuffer, recipient: usize, peer: usize) -> Message {
    Message::BufferDelivery {
        peer: buffer.orgs[peer].clone(),
        entries: buffer.deliveries(recipient, peer).to_vec(),
    }
}
