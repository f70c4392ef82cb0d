use num_bigint::BigUint;
use num_traits::{One, Zero};
use rand::Rng;

const MR_ROUNDS: usize = 40;

const SMALL_PRIMES: [u32; 54] = [
    3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97, 101, 103, 107,
    109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173, 179, 181, 191, 193, 197, 199, 211, 223, 227, 229,
    233, 239, 241, 251, 257,
];

pub(crate) fn random_bits<R: Rng + ?Sized>(bits: u64, rng: &mut R) -> BigUint {
    let bytes = bits.div_ceil(8) as usize;
    let mut buf = vec![0u8; bytes];
    rng.fill_bytes(&mut buf);
    let excess = bytes as u64 * 8 - bits;
    if excess > 0 {
        buf[0] &= 0xff >> excess;
    }
    BigUint::from_bytes_be(&buf)
}

/// Uniform in `[0, bound)` by rejection.
pub(crate) fn random_below<R: Rng + ?Sized>(bound: &BigUint, rng: &mut R) -> BigUint {
    assert!(!bound.is_zero());
    let bits = bound.bits();
    loop {
        let v = random_bits(bits, rng);
        if &v < bound {
            return v;
        }
    }
}

pub(crate) fn is_probable_prime<R: Rng + ?Sized>(n: &BigUint, rng: &mut R) -> bool {
    let two = BigUint::from(2u32);
    if n < &two {
        return false;
    }
    for &p in &SMALL_PRIMES {
        let p = BigUint::from(p);
        if n == &p {
            return true;
        }
        if (n % &p).is_zero() {
            return false;
        }
    }
    if (n % &two).is_zero() {
        return n == &two;
    }
    let n1 = n - BigUint::one();
    let s = n1.trailing_zeros().unwrap_or(0);
    let d = &n1 >> s;
    let span = n - BigUint::from(3u32);
    'witness: for _ in 0..MR_ROUNDS {
        let a = random_below(&span, rng) + &two;
        let mut x = a.modpow(&d, n);
        if x.is_one() || x == n1 {
            continue;
        }
        for _ in 1..s {
            x = x.modpow(&two, n);
            if x == n1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Random prime of exactly `bits` bits with the top two bits set, so a
/// product of two such primes has exactly `2·bits` bits.
pub(crate) fn random_prime<R: Rng + ?Sized>(bits: usize, rng: &mut R) -> BigUint {
    assert!(bits >= 8);
    let top = (BigUint::one() << (bits - 1)) | (BigUint::one() << (bits - 2));
    loop {
        let cand = random_bits(bits as u64, rng) | &top | BigUint::one();
        if is_probable_prime(&cand, rng) {
            return cand;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn classifies_known_numbers() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let primes = [2u64, 3, 257, 65537, 2_147_483_647, 1_000_000_007];
        let composites = [1u64, 4, 561, 1105, 41041, 3_215_031_751, 1_000_000_007 * 3];
        for p in primes {
            assert!(is_probable_prime(&BigUint::from(p), &mut rng), "{p}");
        }
        for c in composites {
            assert!(!is_probable_prime(&BigUint::from(c), &mut rng), "{c}");
        }
    }

    #[test]
    fn prime_has_requested_width() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let p = random_prime(64, &mut rng);
        assert_eq!(p.bits(), 64);
    }
}
