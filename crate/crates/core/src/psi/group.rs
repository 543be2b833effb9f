//! Group instantiations for the DH-style protocols.
//!
//! The default is ristretto255 (prime order, ~126-bit security, cheap
//! constants). A 2048-bit modular-arithmetic group — the quadratic-residue
//! subgroup of the RFC 3526 group-14 safe prime — sits behind a flag to
//! reproduce the classic benchmark regime.

use num_bigint::{BigInt, BigUint, RandBigInt};
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use rand::{CryptoRng, RngCore};
use sha2::{Digest, Sha256, Sha512};

use curve25519_dalek::ristretto::{CompressedRistretto, RistrettoPoint};
use curve25519_dalek::scalar::Scalar;

use super::PsiError;

pub const GROUP_RISTRETTO255: u8 = 1;
pub const GROUP_MOD2048: u8 = 2;

/// Prime-order group operations used by PSI-CA and the DH OPRF.
pub trait DhGroup: Send + Sync + 'static {
    type Scalar: Clone + Send + Sync;
    type Elem: Clone + Send + Sync;

    const ELEM_LEN: usize;

    fn group_id() -> u8;
    fn random_scalar<R: RngCore + CryptoRng>(rng: &mut R) -> Self::Scalar;
    fn invert(scalar: &Self::Scalar) -> Self::Scalar;
    fn hash_to_elem(input: &[u8]) -> Self::Elem;
    fn pow(elem: &Self::Elem, scalar: &Self::Scalar) -> Self::Elem;
    fn encode(elem: &Self::Elem) -> Vec<u8>;
    fn decode(bytes: &[u8]) -> Result<Self::Elem, PsiError>;
}

pub struct Ristretto255;

impl DhGroup for Ristretto255 {
    type Scalar = Scalar;
    type Elem = RistrettoPoint;

    const ELEM_LEN: usize = 32;

    fn group_id() -> u8 {
        GROUP_RISTRETTO255
    }

    fn random_scalar<R: RngCore + CryptoRng>(rng: &mut R) -> Scalar {
        loop {
            let mut wide = [0u8; 64];
            rng.fill_bytes(&mut wide);
            let s = Scalar::from_bytes_mod_order_wide(&wide);
            if s != Scalar::ZERO {
                return s;
            }
        }
    }

    fn invert(scalar: &Scalar) -> Scalar {
        scalar.invert()
    }

    fn hash_to_elem(input: &[u8]) -> RistrettoPoint {
        let mut hasher = Sha512::new();
        hasher.update(b"cpb-hash-to-group-r255");
        hasher.update(input);
        let wide: [u8; 64] = hasher.finalize().into();
        RistrettoPoint::from_uniform_bytes(&wide)
    }

    fn pow(elem: &RistrettoPoint, scalar: &Scalar) -> RistrettoPoint {
        elem * scalar
    }

    fn encode(elem: &RistrettoPoint) -> Vec<u8> {
        elem.compress().to_bytes().to_vec()
    }

    fn decode(bytes: &[u8]) -> Result<RistrettoPoint, PsiError> {
        CompressedRistretto::from_slice(bytes)
            .map_err(|_| PsiError::GroupEncoding)?
            .decompress()
            .ok_or(PsiError::GroupEncoding)
    }
}

/// RFC 3526 MODP group 14: a 2048-bit safe prime `p`. Protocol elements
/// live in the prime-order quadratic-residue subgroup of order `(p-1)/2`;
/// hashing squares into it.
pub struct ModGroup2048;

const MODP_2048_HEX: &str = "FFFFFFFFFFFFFFFFC90FDAA22168C234C4C6628B80DC1CD1\
29024E088A67CC74020BBEA63B139B22514A08798E3404DD\
EF9519B3CD3A431B302B0A6DF25F14374FE1356D6D51C245\
E485B576625E7EC6F44C42E9A637ED6B0BFF5CB6F406B7ED\
EE386BFB5A899FA5AE9F24117C4B1FE649286651ECE45B3D\
C2007CB8A163BF0598DA48361C55D39A69163FA8FD24CF5F\
83655D23DCA3AD961C62F356208552BB9ED529077096966D\
670C354E4ABC9804F1746C08CA18217C32905E462E36CE3B\
E39E772C180E86039B2783A2EC07A28FB5C55DF06F4C52C9\
DE2BCBF6955817183995497CEA956AE515D2261898FA0510\
15728E5A8AACAA68FFFFFFFFFFFFFFFF";

fn modp_prime() -> &'static BigUint {
    use std::sync::OnceLock;
    static P: OnceLock<BigUint> = OnceLock::new();
    P.get_or_init(|| BigUint::parse_bytes(MODP_2048_HEX.as_bytes(), 16).expect("valid hex"))
}

fn modp_order() -> &'static BigUint {
    use std::sync::OnceLock;
    static Q: OnceLock<BigUint> = OnceLock::new();
    Q.get_or_init(|| (modp_prime() - BigUint::one()) >> 1)
}

/// Expand `input` to `bytes` pseudo-random bytes with counter-separated
/// SHA-256 blocks.
pub(super) fn hash_expand(domain: &[u8], input: &[u8], bytes: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(bytes);
    let mut counter = 0u32;
    while out.len() < bytes {
        let mut hasher = Sha256::new();
        hasher.update(domain);
        hasher.update(counter.to_be_bytes());
        hasher.update(input);
        out.extend_from_slice(&hasher.finalize());
        counter += 1;
    }
    out.truncate(bytes);
    out
}

/// Modular inverse via the extended Euclid algorithm.
pub(super) fn mod_inverse(a: &BigUint, modulus: &BigUint) -> Option<BigUint> {
    let a = BigInt::from(a.clone());
    let m = BigInt::from(modulus.clone());
    let ext = a.extended_gcd(&m);
    if !ext.gcd.is_one() {
        return None;
    }
    let mut x = ext.x % &m;
    if x.is_negative() {
        x += &m;
    }
    Some(x.to_biguint().expect("non-negative"))
}

impl DhGroup for ModGroup2048 {
    type Scalar = BigUint;
    type Elem = BigUint;

    const ELEM_LEN: usize = 256;

    fn group_id() -> u8 {
        GROUP_MOD2048
    }

    fn random_scalar<R: RngCore + CryptoRng>(rng: &mut R) -> BigUint {
        let q = modp_order();
        loop {
            let s = rng.gen_biguint_below(q);
            if !s.is_zero() {
                return s;
            }
        }
    }

    fn invert(scalar: &BigUint) -> BigUint {
        mod_inverse(scalar, modp_order()).expect("scalar in [1, q) is invertible")
    }

    fn hash_to_elem(input: &[u8]) -> BigUint {
        let p = modp_prime();
        // 288 bytes of expansion keeps the bias below 2^-256 after mod p.
        let mut counter_input = input.to_vec();
        loop {
            let wide = hash_expand(b"cpb-hash-to-group-modp", &counter_input, 288);
            let t = BigUint::from_bytes_be(&wide) % p;
            if !t.is_zero() {
                // Squaring lands in the quadratic-residue subgroup.
                return (&t * &t) % p;
            }
            counter_input.push(0); // astronomically unlikely
        }
    }

    fn pow(elem: &BigUint, scalar: &BigUint) -> BigUint {
        elem.modpow(scalar, modp_prime())
    }

    fn encode(elem: &BigUint) -> Vec<u8> {
        let mut bytes = elem.to_bytes_be();
        let mut out = vec![0u8; Self::ELEM_LEN - bytes.len()];
        out.append(&mut bytes);
        out
    }

    fn decode(bytes: &[u8]) -> Result<BigUint, PsiError> {
        if bytes.len() != Self::ELEM_LEN {
            return Err(PsiError::GroupEncoding);
        }
        let v = BigUint::from_bytes_be(bytes);
        if v.is_zero() || &v >= modp_prime() {
            return Err(PsiError::GroupEncoding);
        }
        Ok(v)
    }
}
