//! Paillier cryptosystem with generator `g = n + 1`, plus the fixed-point
//! codec and encrypted affine evaluation used by the classical baseline.

mod codec;
mod prime;

pub use codec::{affine_error_budget, he_eval_pwa, FixedGain, FixedPointCodec, HeOpCount};

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::{CryptoRng, Rng};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PaillierError {
    #[error("modulus size {0} is not supported (expected 16..=4096 bits, even)")]
    KeySize(usize),
    #[error("plaintext outside [0, n)")]
    PlaintextRange,
    #[error("ciphertexts belong to different keys")]
    KeyMismatch,
    #[error("ciphertext is not a unit modulo n²")]
    InvalidCiphertext,
    #[error("fixed-point overflow: {0}")]
    Overflow(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublicKey {
    pub n: BigUint,
    pub n_squared: BigUint,
}

impl PublicKey {
    pub fn from_modulus(n: BigUint) -> Self {
        let n_squared = &n * &n;
        Self { n, n_squared }
    }

    /// Bit length `L` of the modulus.
    pub fn bits(&self) -> u64 {
        self.n.bits()
    }

    /// Short identifier used to detect cross-key operations.
    pub fn key_id(&self) -> u64 {
        self.n.iter_u64_digits().next().unwrap_or(0) ^ self.n.bits()
    }

    /// Bit length of a ciphertext on the wire (`2L`).
    pub fn ciphertext_bits(&self) -> u64 {
        2 * self.bits()
    }

    fn check(&self, c: &HeCiphertext) -> Result<(), PaillierError> {
        if c.key_id != self.key_id() {
            return Err(PaillierError::KeyMismatch);
        }
        Ok(())
    }

    fn random_unit<R: Rng + ?Sized>(&self, rng: &mut R) -> BigUint {
        loop {
            let r = prime::random_below(&self.n, rng);
            if !r.is_zero() && r.gcd(&self.n).is_one() {
                return r;
            }
        }
    }

    /// `c = (n+1)^z · r^n mod n²` with fresh `r`.
    pub fn encrypt<R: Rng + ?Sized>(&self, z: &BigUint, rng: &mut R) -> Result<HeCiphertext, PaillierError> {
        if z >= &self.n {
            return Err(PaillierError::PlaintextRange);
        }
        let r = self.random_unit(rng);
        // (n+1)^z = 1 + z·n (mod n²)
        let gz = (BigUint::one() + z * &self.n) % &self.n_squared;
        let rn = r.modpow(&self.n, &self.n_squared);
        Ok(HeCiphertext { value: (gz * rn) % &self.n_squared, key_id: self.key_id() })
    }

    /// `Enc(z₁) ⊕ Enc(z₂) = Enc(z₁ + z₂)`.
    pub fn add(&self, a: &HeCiphertext, b: &HeCiphertext) -> Result<HeCiphertext, PaillierError> {
        self.check(a)?;
        self.check(b)?;
        Ok(HeCiphertext { value: (&a.value * &b.value) % &self.n_squared, key_id: a.key_id })
    }

    /// `k ⊙ Enc(z) = Enc(k·z)` for a signed plaintext scalar.
    pub fn scalar_mul(&self, k: &num_bigint::BigInt, c: &HeCiphertext) -> Result<HeCiphertext, PaillierError> {
        self.check(c)?;
        let mag = k.magnitude();
        let base = if k.sign() == num_bigint::Sign::Minus {
            c.value.modinv(&self.n_squared).ok_or(PaillierError::InvalidCiphertext)?
        } else {
            c.value.clone()
        };
        Ok(HeCiphertext { value: base.modpow(mag, &self.n_squared), key_id: c.key_id })
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct PrivateKey {
    lambda: BigUint,
    mu: BigUint,
}

impl std::fmt::Debug for PrivateKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("PrivateKey { .. }")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Keypair {
    pub public: PublicKey,
    private: PrivateKey,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeCiphertext {
    pub value: BigUint,
    pub key_id: u64,
}

impl Keypair {
    pub fn decrypt(&self, c: &HeCiphertext) -> Result<BigUint, PaillierError> {
        let pk = &self.public;
        pk.check(c)?;
        if c.value >= pk.n_squared || !c.value.gcd(&pk.n_squared).is_one() {
            return Err(PaillierError::InvalidCiphertext);
        }
        let u = c.value.modpow(&self.private.lambda, &pk.n_squared);
        let l = (u - BigUint::one()) / &pk.n;
        Ok((l * &self.private.mu) % &pk.n)
    }

    /// `μ·λ mod n`; equals one for a well-formed key.
    pub fn mu_lambda_residue(&self) -> BigUint {
        (&self.private.mu * &self.private.lambda) % &self.public.n
    }
}

/// Generates a key with an `bits`-bit modulus. Sizes below 1024 are for
/// tests and desk experiments only; they offer no security.
pub fn keygen<R: Rng + CryptoRng + ?Sized>(bits: usize, rng: &mut R) -> Result<Keypair, PaillierError> {
    if !(16..=4096).contains(&bits) || bits % 2 != 0 {
        return Err(PaillierError::KeySize(bits));
    }
    loop {
        let p = prime::random_prime(bits / 2, rng);
        let q = prime::random_prime(bits / 2, rng);
        if p == q {
            continue;
        }
        let n = &p * &q;
        let p1 = &p - BigUint::one();
        let q1 = &q - BigUint::one();
        if !n.gcd(&(&p1 * &q1)).is_one() {
            continue;
        }
        let lambda = p1.lcm(&q1);
        let Some(mu) = lambda.modinv(&n) else { continue };
        let public = PublicKey::from_modulus(n);
        return Ok(Keypair { public, private: PrivateKey { lambda, mu } });
    }
}
