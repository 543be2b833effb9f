//! PSI-CA: the client learns only the intersection cardinality, the server
//! learns only the client's set size.
//!
//! Both sides hash their elements into the group and blind them with a
//! session exponent. The server re-blinds the client's batch and shuffles
//! it before returning it, so after unblinding the client holds the
//! double-masked values out of order: it can count matches against the
//! server's masked tags but cannot tell which of its own elements matched.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{CryptoRng, Rng};
use sha2::{Digest, Sha256};

use super::group::DhGroup;
use super::wire::{
    self, Channel, Message, ABORT_MALFORMED, ABORT_UNEXPECTED, PROTOCOL_PSI_CA,
};
use super::PsiError;

fn element_bytes(x: u64) -> [u8; 8] {
    x.to_be_bytes()
}

/// Tag for a masked element; matching tags mean matching elements.
fn mask_tag<G: DhGroup>(elem: &G::Elem) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(b"cpb-psi-ca-tag");
    hasher.update([G::group_id()]);
    hasher.update(G::encode(elem));
    hasher.finalize().into()
}

fn expect_hello<C: Channel>(
    channel: &mut C,
    group: u8,
) -> Result<u32, PsiError> {
    match channel.recv()? {
        Message::Hello { set_size, protocol, group: g } => {
            if protocol != PROTOCOL_PSI_CA || g != group {
                wire::send_abort(channel, ABORT_MALFORMED);
                return Err(PsiError::ProtocolMismatch);
            }
            Ok(set_size)
        }
        other => {
            wire::send_abort(channel, ABORT_UNEXPECTED);
            Err(PsiError::UnexpectedMessage { expected: "HELLO", got: other.name() })
        }
    }
}

/// Client side; returns `|client ∩ server|`.
pub fn client<G, C, R>(channel: &mut C, rng: &mut R, set: &[u64]) -> Result<u64, PsiError>
where
    G: DhGroup,
    C: Channel,
    R: Rng + CryptoRng,
{
    channel.send(&Message::Hello {
        set_size: set.len() as u32,
        protocol: PROTOCOL_PSI_CA,
        group: G::group_id(),
    })?;
    expect_hello(channel, G::group_id())?;

    let blind = G::random_scalar(rng);
    let blinded: Vec<Vec<u8>> = set
        .iter()
        .map(|&x| G::encode(&G::pow(&G::hash_to_elem(&element_bytes(x)), &blind)))
        .collect();
    channel.send(&Message::BlindedBatch { elements: blinded })?;

    let (doubled, server_tags) = match channel.recv()? {
        Message::ResponseBatch { elements, tags } => (elements, tags),
        other => {
            wire::send_abort(channel, ABORT_UNEXPECTED);
            return Err(PsiError::UnexpectedMessage {
                expected: "RESPONSE_BATCH",
                got: other.name(),
            });
        }
    };
    if doubled.len() != set.len() {
        wire::send_abort(channel, ABORT_MALFORMED);
        return Err(PsiError::Malformed("response batch size mismatch"));
    }

    let unblind = G::invert(&blind);
    let own_tags: HashSet<[u8; 32]> = doubled
        .iter()
        .map(|bytes| {
            let elem = G::decode(bytes)?;
            Ok(mask_tag::<G>(&G::pow(&elem, &unblind)))
        })
        .collect::<Result<_, PsiError>>()?;
    let server_tags: HashSet<[u8; 32]> = server_tags.into_iter().collect();
    Ok(own_tags.intersection(&server_tags).count() as u64)
}

/// Server side; learns nothing beyond the client's set size.
pub fn server<G, C, R>(channel: &mut C, rng: &mut R, set: &[u64]) -> Result<(), PsiError>
where
    G: DhGroup,
    C: Channel,
    R: Rng + CryptoRng,
{
    let _client_size = expect_hello(channel, G::group_id())?;
    channel.send(&Message::Hello {
        set_size: set.len() as u32,
        protocol: PROTOCOL_PSI_CA,
        group: G::group_id(),
    })?;

    let blinded = match channel.recv()? {
        Message::BlindedBatch { elements } => elements,
        other => {
            wire::send_abort(channel, ABORT_UNEXPECTED);
            return Err(PsiError::UnexpectedMessage {
                expected: "BLINDED_BATCH",
                got: other.name(),
            });
        }
    };

    let mask = G::random_scalar(rng);
    let mut doubled: Vec<Vec<u8>> = blinded
        .iter()
        .map(|bytes| {
            let elem = G::decode(bytes).map_err(|e| {
                wire::send_abort(channel, wire::ABORT_ENCODING);
                e
            })?;
            Ok(G::encode(&G::pow(&elem, &mask)))
        })
        .collect::<Result<_, PsiError>>()?;
    // The shuffle is what stops the client from linking matches back to its
    // own elements.
    doubled.shuffle(rng);

    let mut tags: Vec<[u8; 32]> = set
        .iter()
        .map(|&x| mask_tag::<G>(&G::pow(&G::hash_to_elem(&element_bytes(x)), &mask)))
        .collect();
    tags.shuffle(rng);

    channel.send(&Message::ResponseBatch { elements: doubled, tags })?;
    Ok(())
}
