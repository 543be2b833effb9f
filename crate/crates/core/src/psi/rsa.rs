//! RSA keys for the blind-RSA OPRF used by PSI-DT in the 2048-bit
//! modular-arithmetic mode.

use num_bigint::{BigUint, RandBigInt};
use num_traits::{One, Zero};
use rand::{CryptoRng, RngCore};

use super::group::{hash_expand, mod_inverse};
use super::PsiError;

/// Public exponent: small and prime, so clients pay one cheap exponent per
/// blinding.
pub const RSA_E: u32 = 17;

const MILLER_RABIN_ROUNDS: u32 = 40;

fn small_primes() -> &'static [u32] {
    // Primes below 2000 knock out the vast majority of candidates before
    // any modular exponentiation runs.
    use std::sync::OnceLock;
    static PRIMES: OnceLock<Vec<u32>> = OnceLock::new();
    PRIMES.get_or_init(|| {
        let mut sieve = vec![true; 2000];
        let mut primes = Vec::new();
        for n in 2..2000usize {
            if sieve[n] {
                primes.push(n as u32);
                let mut m = n * n;
                while m < 2000 {
                    sieve[m] = false;
                    m += n;
                }
            }
        }
        primes
    })
}

fn is_probable_prime<R: RngCore + CryptoRng>(n: &BigUint, rng: &mut R) -> bool {
    let two = BigUint::from(2u32);
    if n < &two {
        return false;
    }
    for &p in small_primes() {
        let p = BigUint::from(p);
        if n == &p {
            return true;
        }
        if (n % &p).is_zero() {
            return false;
        }
    }
    // n - 1 = d * 2^s with d odd.
    let n_minus_1 = n - BigUint::one();
    let s = n_minus_1.trailing_zeros().expect("n > 2 is odd here");
    let d = &n_minus_1 >> s;
    'witness: for _ in 0..MILLER_RABIN_ROUNDS {
        let a = rng.gen_biguint_range(&two, &(n - &two));
        let mut x = a.modpow(&d, n);
        if x.is_one() || x == n_minus_1 {
            continue;
        }
        for _ in 0..s - 1 {
            x = (&x * &x) % n;
            if x == n_minus_1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

fn gen_prime<R: RngCore + CryptoRng>(bits: u64, rng: &mut R) -> BigUint {
    loop {
        let mut candidate = rng.gen_biguint(bits);
        candidate.set_bit(bits - 1, true);
        candidate.set_bit(bits - 2, true);
        candidate.set_bit(0, true);
        // Keep gcd(e, p-1) = 1 so d exists.
        if ((&candidate - BigUint::one()) % BigUint::from(RSA_E)).is_zero() {
            continue;
        }
        if is_probable_prime(&candidate, rng) {
            return candidate;
        }
    }
}

/// An RSA private key with CRT acceleration.
#[derive(Debug, Clone)]
pub struct RsaKey {
    pub n: BigUint,
    pub e: BigUint,
    d: BigUint,
    p: BigUint,
    q: BigUint,
    dp: BigUint,
    dq: BigUint,
    qinv: BigUint,
}

impl RsaKey {
    /// Generate a key with a `bits`-wide modulus.
    pub fn generate<R: RngCore + CryptoRng>(bits: u64, rng: &mut R) -> RsaKey {
        let e = BigUint::from(RSA_E);
        loop {
            let p = gen_prime(bits / 2, rng);
            let q = gen_prime(bits / 2, rng);
            if p == q {
                continue;
            }
            let n = &p * &q;
            let phi = (&p - BigUint::one()) * (&q - BigUint::one());
            let Some(d) = mod_inverse(&e, &phi) else { continue };
            let dp = &d % (&p - BigUint::one());
            let dq = &d % (&q - BigUint::one());
            let qinv = mod_inverse(&q, &p).expect("distinct primes");
            return RsaKey { n, e, d, p, q, dp, dq, qinv };
        }
    }

    /// `m^d mod n` via the Chinese remainder theorem.
    pub fn sign(&self, m: &BigUint) -> BigUint {
        let m1 = m.modpow(&self.dp, &self.p);
        let m2 = m.modpow(&self.dq, &self.q);
        let diff = if m1 >= m2 { &m1 - &m2 } else { &self.p - ((&m2 - &m1) % &self.p) };
        let h = (&self.qinv * diff) % &self.p;
        &m2 + &self.q * h
    }

    /// Non-CRT signature; the slow path the CRT one is checked against.
    pub fn sign_plain(&self, m: &BigUint) -> BigUint {
        m.modpow(&self.d, &self.n)
    }

    pub fn modulus_bytes(&self) -> usize {
        (self.n.bits() as usize).div_ceil(8)
    }
}

/// Hash into `Z_n` (non-zero), with 256 extra bits of expansion to make the
/// reduction bias negligible.
pub fn hash_to_modulus(n: &BigUint, input: &[u8]) -> Result<BigUint, PsiError> {
    let bytes = (n.bits() as usize).div_ceil(8) + 32;
    let mut salted = input.to_vec();
    loop {
        let wide = hash_expand(b"cpb-hash-to-rsa", &salted, bytes);
        let v = BigUint::from_bytes_be(&wide) % n;
        if !v.is_zero() {
            return Ok(v);
        }
        salted.push(0);
    }
}
