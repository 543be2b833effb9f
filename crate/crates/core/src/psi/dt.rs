//! PSI-DT: the client learns the intersection *and* the records the server
//! bound to intersecting elements; the server learns only the client's set
//! size.
//!
//! The server evaluates an OPRF over its own elements and encrypts each
//! record under a key derived from the OPRF output. The client obliviously
//! evaluates the OPRF on its elements (blind, have the server exponentiate,
//! unblind) and can then derive exactly the keys for elements both sides
//! hold. Records are matched by a short tag derived from the same output, so
//! lookup is constant-time per element rather than trial-decrypting the
//! whole cross product; records outside the intersection stay
//! indistinguishable from random.

use std::collections::HashMap;

use chacha20poly1305::aead::{Aead, KeyInit, Payload};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce};
use num_bigint::{BigUint, RandBigInt};
use rand::seq::SliceRandom;
use rand::{CryptoRng, Rng};
use sha2::{Digest, Sha256};

use super::group::{mod_inverse, DhGroup};
use super::rsa::{hash_to_modulus, RsaKey, RSA_E};
use super::wire::{
    self, Channel, Message, ABORT_MALFORMED, ABORT_UNEXPECTED, PROTOCOL_PSI_DT,
};
use super::PsiError;

/// One oblivious-PRF backend: DH-style over a prime-order group, or blind
/// RSA over a 2048-bit modulus.
pub trait Oprf: Send + Sync + 'static {
    type ServerKey: Send + Sync;
    type ClientSetup: Send + Sync;
    type Blinding;

    fn group_id() -> u8;
    fn gen_server<R: Rng + CryptoRng>(rng: &mut R) -> Self::ServerKey;
    /// Public material the client needs before blinding (empty for DH).
    fn public_setup(key: &Self::ServerKey) -> Vec<Vec<u8>>;
    fn parse_setup(elements: &[Vec<u8>]) -> Result<Self::ClientSetup, PsiError>;
    fn blind<R: Rng + CryptoRng>(
        rng: &mut R,
        setup: &Self::ClientSetup,
        input: &[u8],
    ) -> Result<(Self::Blinding, Vec<u8>), PsiError>;
    fn eval_blinded(key: &Self::ServerKey, blinded: &[u8]) -> Result<Vec<u8>, PsiError>;
    fn unblind(
        setup: &Self::ClientSetup,
        blinding: Self::Blinding,
        response: &[u8],
    ) -> Result<Vec<u8>, PsiError>;
    /// Direct evaluation on the server's own elements.
    fn eval_direct(key: &Self::ServerKey, input: &[u8]) -> Vec<u8>;
}

/// 2HashDH OPRF: `output = H(x)^k` in the group.
pub struct DhOprf<G: DhGroup>(std::marker::PhantomData<G>);

impl<G: DhGroup> Oprf for DhOprf<G> {
    type ServerKey = G::Scalar;
    type ClientSetup = ();
    type Blinding = G::Scalar;

    fn group_id() -> u8 {
        G::group_id()
    }

    fn gen_server<R: Rng + CryptoRng>(rng: &mut R) -> G::Scalar {
        G::random_scalar(rng)
    }

    fn public_setup(_key: &G::Scalar) -> Vec<Vec<u8>> {
        Vec::new()
    }

    fn parse_setup(elements: &[Vec<u8>]) -> Result<(), PsiError> {
        if elements.is_empty() {
            Ok(())
        } else {
            Err(PsiError::Malformed("unexpected OPRF setup"))
        }
    }

    fn blind<R: Rng + CryptoRng>(
        rng: &mut R,
        _setup: &(),
        input: &[u8],
    ) -> Result<(G::Scalar, Vec<u8>), PsiError> {
        let r = G::random_scalar(rng);
        let blinded = G::pow(&G::hash_to_elem(input), &r);
        Ok((r, G::encode(&blinded)))
    }

    fn eval_blinded(key: &G::Scalar, blinded: &[u8]) -> Result<Vec<u8>, PsiError> {
        let elem = G::decode(blinded)?;
        Ok(G::encode(&G::pow(&elem, key)))
    }

    fn unblind(_setup: &(), blinding: G::Scalar, response: &[u8]) -> Result<Vec<u8>, PsiError> {
        let elem = G::decode(response)?;
        Ok(G::encode(&G::pow(&elem, &G::invert(&blinding))))
    }

    fn eval_direct(key: &G::Scalar, input: &[u8]) -> Vec<u8> {
        G::encode(&G::pow(&G::hash_to_elem(input), key))
    }
}

/// Blind-RSA OPRF: `output = H(x)^d mod n`, with a fresh 2048-bit key per
/// session. The modulus rides to the client in the setup batch; the public
/// exponent is the protocol constant [`RSA_E`].
pub struct RsaOprf;

const RSA_MODULUS_BITS: u64 = 2048;
const RSA_ELEM_LEN: usize = 256;

fn rsa_encode(v: &BigUint) -> Vec<u8> {
    let mut bytes = v.to_bytes_be();
    let mut out = vec![0u8; RSA_ELEM_LEN.saturating_sub(bytes.len())];
    out.append(&mut bytes);
    out
}

impl Oprf for RsaOprf {
    type ServerKey = RsaKey;
    type ClientSetup = BigUint;
    type Blinding = BigUint;

    fn group_id() -> u8 {
        super::group::GROUP_MOD2048
    }

    fn gen_server<R: Rng + CryptoRng>(rng: &mut R) -> RsaKey {
        RsaKey::generate(RSA_MODULUS_BITS, rng)
    }

    fn public_setup(key: &RsaKey) -> Vec<Vec<u8>> {
        vec![rsa_encode(&key.n)]
    }

    fn parse_setup(elements: &[Vec<u8>]) -> Result<BigUint, PsiError> {
        let [n_bytes] = elements else {
            return Err(PsiError::Malformed("expected RSA modulus in setup"));
        };
        if n_bytes.len() != RSA_ELEM_LEN {
            return Err(PsiError::GroupEncoding);
        }
        let n = BigUint::from_bytes_be(n_bytes);
        if n.bits() < RSA_MODULUS_BITS - 8 {
            return Err(PsiError::GroupEncoding);
        }
        Ok(n)
    }

    fn blind<R: Rng + CryptoRng>(
        rng: &mut R,
        n: &BigUint,
        input: &[u8],
    ) -> Result<(BigUint, Vec<u8>), PsiError> {
        let h = hash_to_modulus(n, input)?;
        let (r, r_inv) = loop {
            let r = rng.gen_biguint_range(&BigUint::from(2u32), n);
            if let Some(r_inv) = mod_inverse(&r, n) {
                break (r, r_inv);
            }
        };
        let blinded = (&h * r.modpow(&BigUint::from(RSA_E), n)) % n;
        Ok((r_inv, rsa_encode(&blinded)))
    }

    fn eval_blinded(key: &RsaKey, blinded: &[u8]) -> Result<Vec<u8>, PsiError> {
        if blinded.len() != RSA_ELEM_LEN {
            return Err(PsiError::GroupEncoding);
        }
        let y = BigUint::from_bytes_be(blinded) % &key.n;
        Ok(rsa_encode(&key.sign(&y)))
    }

    fn unblind(n: &BigUint, r_inv: BigUint, response: &[u8]) -> Result<Vec<u8>, PsiError> {
        if response.len() != RSA_ELEM_LEN {
            return Err(PsiError::GroupEncoding);
        }
        let z = BigUint::from_bytes_be(response);
        Ok(rsa_encode(&((z * r_inv) % n)))
    }

    fn eval_direct(key: &RsaKey, input: &[u8]) -> Vec<u8> {
        let h = hash_to_modulus(&key.n, input).expect("hash into modulus");
        rsa_encode(&key.sign(&h))
    }
}

fn record_key(oprf_output: &[u8]) -> Key {
    let mut hasher = Sha256::new();
    hasher.update(b"cpb-psi-dt-key");
    hasher.update(oprf_output);
    let digest: [u8; 32] = hasher.finalize().into();
    Key::from(digest)
}

fn record_tag(oprf_output: &[u8]) -> [u8; 16] {
    let mut hasher = Sha256::new();
    hasher.update(b"cpb-psi-dt-tag");
    hasher.update(oprf_output);
    let digest: [u8; 32] = hasher.finalize().into();
    digest[..16].try_into().unwrap()
}

fn element_bytes(x: u64) -> [u8; 8] {
    x.to_be_bytes()
}

/// Each per-record key encrypts exactly one record in one session, so a
/// fixed zero nonce is safe.
fn zero_nonce() -> Nonce {
    Nonce::from([0u8; 12])
}

fn expect_hello<C: Channel>(channel: &mut C, group: u8) -> Result<u32, PsiError> {
    match channel.recv()? {
        Message::Hello { set_size, protocol, group: g } => {
            if protocol != PROTOCOL_PSI_DT || g != group {
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

/// Client side; returns the records for every element in the intersection.
pub fn client<O, C, R>(
    channel: &mut C,
    rng: &mut R,
    set: &[u64],
) -> Result<HashMap<u64, Vec<u8>>, PsiError>
where
    O: Oprf,
    C: Channel,
    R: Rng + CryptoRng,
{
    channel.send(&Message::Hello {
        set_size: set.len() as u32,
        protocol: PROTOCOL_PSI_DT,
        group: O::group_id(),
    })?;
    expect_hello(channel, O::group_id())?;

    let setup = match channel.recv()? {
        Message::ResponseBatch { elements, tags } if tags.is_empty() => {
            O::parse_setup(&elements)?
        }
        other => {
            wire::send_abort(channel, ABORT_UNEXPECTED);
            return Err(PsiError::UnexpectedMessage {
                expected: "RESPONSE_BATCH (setup)",
                got: other.name(),
            });
        }
    };

    let mut blindings = Vec::with_capacity(set.len());
    let mut blinded = Vec::with_capacity(set.len());
    for &x in set {
        let (b, bytes) = O::blind(rng, &setup, &element_bytes(x))?;
        blindings.push(b);
        blinded.push(bytes);
    }
    channel.send(&Message::BlindedBatch { elements: blinded })?;

    let responses = match channel.recv()? {
        Message::ResponseBatch { elements, tags } if tags.is_empty() => elements,
        other => {
            wire::send_abort(channel, ABORT_UNEXPECTED);
            return Err(PsiError::UnexpectedMessage {
                expected: "RESPONSE_BATCH",
                got: other.name(),
            });
        }
    };
    if responses.len() != set.len() {
        wire::send_abort(channel, ABORT_MALFORMED);
        return Err(PsiError::Malformed("response batch size mismatch"));
    }

    let records = match channel.recv()? {
        Message::RecordBatch { records } => records,
        other => {
            wire::send_abort(channel, ABORT_UNEXPECTED);
            return Err(PsiError::UnexpectedMessage {
                expected: "RECORD_BATCH",
                got: other.name(),
            });
        }
    };
    let by_tag: HashMap<[u8; 16], &Vec<u8>> =
        records.iter().map(|(tag, ct)| (*tag, ct)).collect();

    let mut out = HashMap::new();
    for ((&x, blinding), response) in set.iter().zip(blindings).zip(&responses) {
        let output = O::unblind(&setup, blinding, response)?;
        let tag = record_tag(&output);
        if let Some(ct) = by_tag.get(&tag) {
            let cipher = ChaCha20Poly1305::new(&record_key(&output));
            let plain = cipher
                .decrypt(&zero_nonce(), Payload { msg: ct, aad: &[] })
                .map_err(|_| PsiError::AuthFailure)?;
            out.insert(x, plain);
        }
    }
    Ok(out)
}

/// Server side with element-bound records; learns only the client set size.
pub fn server<O, C, R>(
    channel: &mut C,
    rng: &mut R,
    set: &[(u64, Vec<u8>)],
) -> Result<(), PsiError>
where
    O: Oprf,
    C: Channel,
    R: Rng + CryptoRng,
{
    let _client_size = expect_hello(channel, O::group_id())?;
    channel.send(&Message::Hello {
        set_size: set.len() as u32,
        protocol: PROTOCOL_PSI_DT,
        group: O::group_id(),
    })?;

    let key = O::gen_server(rng);
    channel.send(&Message::ResponseBatch {
        elements: O::public_setup(&key),
        tags: Vec::new(),
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
    let responses: Vec<Vec<u8>> = blinded
        .iter()
        .map(|b| {
            O::eval_blinded(&key, b).map_err(|e| {
                wire::send_abort(channel, wire::ABORT_ENCODING);
                e
            })
        })
        .collect::<Result<_, PsiError>>()?;
    channel.send(&Message::ResponseBatch { elements: responses, tags: Vec::new() })?;

    let mut records: Vec<([u8; 16], Vec<u8>)> = set
        .iter()
        .map(|(x, data)| {
            let output = O::eval_direct(&key, &element_bytes(*x));
            let cipher = ChaCha20Poly1305::new(&record_key(&output));
            let ct = cipher
                .encrypt(&zero_nonce(), Payload { msg: data.as_slice(), aad: &[] })
                .expect("encryption is infallible for in-memory payloads");
            (record_tag(&output), ct)
        })
        .collect();
    records.shuffle(rng);
    channel.send(&Message::RecordBatch { records })?;
    Ok(())
}
