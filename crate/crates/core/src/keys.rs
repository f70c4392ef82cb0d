//! Shared per-cycle key material for the sensor and actuator.
//!
//! The entangled-pair channel is modeled as ideal shared randomness: both
//! endpoints hold the same seed and derive the cycle-`k` bit string from a
//! counter-based generator keyed on `(seed, k)`. The cloud never sees the seed.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

pub const DEFAULT_GROUP_BITS: u32 = 16;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KeyError {
    #[error("key stream has {got} bits, expected {expected}")]
    KeyLength { expected: usize, got: usize },
    #[error("group width must be in 2..=32, got {0}")]
    GroupWidth(u32),
    #[error("key for cycle {requested} requested after cycle {last}; streams are single-use")]
    KeyReuse { last: u64, requested: u64 },
}

/// Partition of the per-cycle key into `n + m` groups of `group_bits` bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KeyConfig {
    pub n: usize,
    pub m: usize,
    pub group_bits: u32,
}

impl KeyConfig {
    pub fn new(n: usize, m: usize, group_bits: u32) -> Result<Self, KeyError> {
        if !(2..=32).contains(&group_bits) {
            return Err(KeyError::GroupWidth(group_bits));
        }
        Ok(Self { n, m, group_bits })
    }

    pub fn groups(&self) -> usize {
        self.n + self.m
    }

    /// Total key bits per cycle.
    pub fn key_bits(&self) -> usize {
        self.groups() * self.group_bits as usize
    }
}

/// Fresh key bits for one cycle, group-major and MSB-first within a group.
#[derive(Clone, PartialEq, Eq)]
pub struct KeyStream {
    pub k: u64,
    pub bits: Vec<bool>,
}

impl std::fmt::Debug for KeyStream {
    // Key bits stay out of logs.
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KeyStream").field("k", &self.k).field("len", &self.bits.len()).finish()
    }
}

impl KeyStream {
    /// Bits rendered as a `0`/`1` string; for debugging dumps only.
    pub fn dump(&self) -> String {
        self.bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
    }
}

/// Nonzero per-cycle coefficients: the first `n` serve state components,
/// the last `m` serve offset components.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BetaVector {
    pub beta: Vec<i64>,
    pub n: usize,
}

impl BetaVector {
    pub fn state(&self) -> &[i64] {
        &self.beta[..self.n]
    }

    pub fn offset(&self) -> &[i64] {
        &self.beta[self.n..]
    }
}

/// One endpoint's copy of the shared randomness source.
#[derive(Debug, Clone)]
pub struct KeySource {
    seed: u64,
}

impl KeySource {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn generate(&self, k: u64, cfg: &KeyConfig) -> KeyStream {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_stream(k);
        let len = cfg.key_bits();
        let mut bits = Vec::with_capacity(len);
        let mut word = 0u64;
        for pos in 0..len {
            if pos % 64 == 0 {
                word = rng.next_u64();
            }
            bits.push((word >> (63 - pos % 64)) & 1 == 1);
        }
        KeyStream { k, bits }
    }
}

/// Enforces single use of key streams: cycle indices must strictly increase.
#[derive(Debug, Clone, Default)]
pub struct FreshnessGuard {
    last: Option<u64>,
}

impl FreshnessGuard {
    pub fn admit(&mut self, k: u64) -> Result<(), KeyError> {
        if let Some(last) = self.last {
            if k <= last {
                return Err(KeyError::KeyReuse { last, requested: k });
            }
        }
        self.last = Some(k);
        Ok(())
    }
}

/// `β = −(2^{w−1}+1)·b_{w−1} + Σ_{j<w−1} 2^j b_j + 1`, with `group[0]` the MSB.
pub fn beta_from_bits(group: &[bool]) -> i64 {
    let w = group.len();
    assert!(w >= 2, "group must have at least two bits");
    let msb = group[0] as i64;
    let low: i64 = group[1..]
        .iter()
        .rev()
        .enumerate()
        .map(|(j, &b)| (b as i64) << j)
        .sum();
    -((1i64 << (w - 1)) + 1) * msb + low + 1
}

pub fn betas(key: &KeyStream, cfg: &KeyConfig) -> Result<BetaVector, KeyError> {
    if key.bits.len() != cfg.key_bits() {
        return Err(KeyError::KeyLength { expected: cfg.key_bits(), got: key.bits.len() });
    }
    let beta = key.bits.chunks(cfg.group_bits as usize).map(beta_from_bits).collect();
    Ok(BetaVector { beta, n: cfg.n })
}
