use super::{Backend, LinkBits};

/// Region index width on the wire.
pub const SIGMA_BITS: u64 = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Party {
    Sensor,
    Controller,
    Actuator,
}

/// Worst-case bit-operation bound for one party, in abstract units.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PartyCost {
    pub party: Party,
    pub he: u128,
    pub qe: u128,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CostModel {
    /// `(n+2m)L³ + mn(b_K+1)L²`
    pub c_he: u128,
    /// `(mn+n+m)p³`
    pub c_qe: u128,
    pub per_party: [PartyCost; 3],
}

/// Per-cycle bit-complexity models for the Paillier and key-stream
/// realizations. The per-party rows use schoolbook costs: `L³` per Paillier
/// encryption or decryption, `bL²` per `b`-bit scalar multiply, `L²` per
/// ciphertext addition, `p³` per exp/log/power and `p²` per multiply-add.
pub fn predict_cost(n: u64, m: u64, l: u64, p: u64, b_k: u64) -> CostModel {
    let (n, m, l, p, b_k) = (n as u128, m as u128, l as u128, p as u128, b_k as u128);
    let (l2, l3, p2, p3) = (l * l, l * l * l, p * p, p * p * p);
    CostModel {
        c_he: (n + 2 * m) * l3 + m * n * (b_k + 1) * l2,
        c_qe: (m * n + n + m) * p3,
        per_party: [
            PartyCost { party: Party::Sensor, he: (n + m) * l3, qe: (n + m) * p3 },
            PartyCost { party: Party::Controller, he: m * n * (b_k + 1) * l2, qe: m * n * (p3 + p2) },
            PartyCost { party: Party::Actuator, he: m * l3, qe: (m * n + m) * p3 + m * n * p2 },
        ],
    }
}

/// Closed-form payload per link. `p` is the float width, `w` the quantized
/// word width, `l` the Paillier modulus length.
pub fn model_payload(backend: Backend, n: u64, m: u64, p: u64, w: u32, l: u64) -> LinkBits {
    match backend {
        Backend::Plaintext => LinkBits { s2c: SIGMA_BITS + (n + m) * 64, c2a: 2 * m * 64 },
        Backend::Qe => LinkBits { s2c: SIGMA_BITS + (n + m) * p, c2a: (m * n + m) * p },
        Backend::QeQuantized => {
            let w = w as u64;
            LinkBits { s2c: SIGMA_BITS + (n + m) * w, c2a: (m * n + m) * w }
        }
        Backend::Paillier => LinkBits { s2c: SIGMA_BITS + (n + m) * 2 * l, c2a: m * 2 * l },
    }
}

/// Matched-accuracy parameters for a target `ε_q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Accuracy {
    /// Smallest `δ` with `ρ^{−δ} ≤ ε_q`.
    pub delta: u32,
    /// Smallest `w` with `2^{−w} ≤ ε_q`.
    pub w: u32,
    /// Minimum float width, `p ≥ w`.
    pub p_min: u32,
}

fn min_exponent(base: f64, eps: f64) -> u32 {
    // Smallest e with base^e ≥ 1/ε, tolerant to the rounding of 1/ε.
    let target = (1.0 / eps) * (1.0 - 1e-12);
    let mut e = 0u32;
    let mut v = 1.0f64;
    while v < target {
        v *= base;
        e += 1;
    }
    e
}

pub fn align_accuracy(eps: f64, rho: u32) -> Result<Accuracy, String> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(format!("accuracy target must lie in (0, 1), got {eps}"));
    }
    if rho < 2 {
        return Err(format!("base ρ must be at least 2, got {rho}"));
    }
    let w = min_exponent(2.0, eps);
    Ok(Accuracy { delta: min_exponent(rho as f64, eps), w, p_min: w })
}
