use nalgebra::DMatrix;
use num_bigint::{BigInt, BigUint, Sign};
use num_traits::{FromPrimitive, ToPrimitive};
#[cfg(test)]
use num_traits::Zero;

use super::{HeCiphertext, PaillierError, PublicKey};

/// Signed fixed-point encoding into `Z_n` on a grid of spacing `ρ^{−δ}`.
/// Negative values live in the upper half `(n/2, n)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixedPointCodec {
    pub rho: u32,
    pub gamma: u32,
    pub delta: u32,
    n: BigUint,
    half_n: BigUint,
}

impl FixedPointCodec {
    pub fn new(rho: u32, gamma: u32, delta: u32, n: &BigUint) -> Result<Self, PaillierError> {
        if rho < 2 {
            return Err(PaillierError::Overflow(format!("base ρ={rho} must be at least 2")));
        }
        let need = BigUint::from(2u32) * BigUint::from(rho).pow(gamma + 2 * delta);
        if &need >= n {
            return Err(PaillierError::Overflow(format!(
                "2ρ^(γ+2δ) has {} bits, modulus has {}",
                need.bits(),
                n.bits()
            )));
        }
        Ok(Self { rho, gamma, delta, n: n.clone(), half_n: n >> 1 })
    }

    pub fn spacing(&self) -> f64 {
        (self.rho as f64).powi(-(self.delta as i32))
    }

    pub fn range(&self) -> f64 {
        (self.rho as f64).powi(self.gamma as i32)
    }

    fn scale(&self, power: u32) -> f64 {
        (self.rho as f64).powi((self.delta * power) as i32)
    }

    /// Signed integer `round(x·ρ^{power·δ})`.
    pub fn quantize(&self, x: f64, power: u32) -> Result<BigInt, PaillierError> {
        if !x.is_finite() || x.abs() > self.range() {
            return Err(PaillierError::Overflow(format!("|{x}| exceeds ρ^γ = {}", self.range())));
        }
        BigInt::from_f64((x * self.scale(power)).round())
            .ok_or_else(|| PaillierError::Overflow(format!("cannot scale {x}")))
    }

    pub fn to_residue(&self, v: &BigInt) -> BigUint {
        let n = BigInt::from_biguint(Sign::Plus, self.n.clone());
        let r = ((v % &n) + &n) % &n;
        r.to_biguint().expect("nonnegative")
    }

    pub fn from_residue(&self, v: &BigUint) -> BigInt {
        if v > &self.half_n {
            -BigInt::from_biguint(Sign::Plus, &self.n - v)
        } else {
            BigInt::from_biguint(Sign::Plus, v.clone())
        }
    }

    pub fn encode_scaled(&self, x: f64, power: u32) -> Result<BigUint, PaillierError> {
        Ok(self.to_residue(&self.quantize(x, power)?))
    }

    pub fn encode(&self, x: f64) -> Result<BigUint, PaillierError> {
        self.encode_scaled(x, 1)
    }

    /// `scale_power = 2` decodes products of two scale-`δ` values.
    pub fn decode(&self, v: &BigUint, scale_power: u32) -> f64 {
        let signed = self.from_residue(v);
        signed.to_f64().unwrap_or(f64::NAN) / self.scale(scale_power)
    }
}

/// A gain matrix encoded at scale `δ`, checked for wrap-around headroom.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedGain {
    pub rows: usize,
    pub cols: usize,
    entries: Vec<BigInt>,
    /// Largest bit length among the encoded entries.
    pub b_k: u64,
}

impl FixedGain {
    /// Rejects gains for which some output `Σ_j K̂_ij x̂_j + b̂_i` could leave
    /// `(−n/2, n/2]` when `|x_j|, |b_i| ≤ ρ^γ`.
    pub fn new(k: &DMatrix<f64>, codec: &FixedPointCodec) -> Result<Self, PaillierError> {
        let mut entries = Vec::with_capacity(k.len());
        for i in 0..k.nrows() {
            for j in 0..k.ncols() {
                entries.push(codec.quantize(k[(i, j)], 1)?);
            }
        }
        let b_k = entries.iter().map(|e| e.bits()).max().unwrap_or(0);
        let x_max = BigUint::from(codec.rho).pow(codec.gamma + codec.delta);
        let b_max = BigUint::from(codec.rho).pow(codec.gamma + 2 * codec.delta);
        for i in 0..k.nrows() {
            let row_sum: BigUint =
                entries[i * k.ncols()..(i + 1) * k.ncols()].iter().map(|e| e.magnitude() * &x_max).sum();
            if row_sum + &b_max >= codec.half_n {
                return Err(PaillierError::Overflow(format!("gain row {i} can wrap modulo n")));
            }
        }
        Ok(Self { rows: k.nrows(), cols: k.ncols(), entries, b_k })
    }

    pub fn entry(&self, i: usize, j: usize) -> &BigInt {
        &self.entries[i * self.cols + j]
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct HeOpCount {
    pub mul: u64,
    pub add: u64,
}

/// `ũ_i = ⊕_j (K̂_ij ⊙ x̃_j) ⊕ b̃_i`, evaluated with the public key only.
pub fn he_eval_pwa(
    pk: &PublicKey,
    x: &[HeCiphertext],
    k: &FixedGain,
    b: &[HeCiphertext],
) -> Result<(Vec<HeCiphertext>, HeOpCount), PaillierError> {
    if x.len() != k.cols || b.len() != k.rows {
        return Err(PaillierError::Overflow(format!(
            "shape mismatch: gain {}x{}, state {}, offset {}",
            k.rows,
            k.cols,
            x.len(),
            b.len()
        )));
    }
    let mut ops = HeOpCount::default();
    let mut out = Vec::with_capacity(k.rows);
    for i in 0..k.rows {
        let mut acc = b[i].clone();
        for (j, xj) in x.iter().enumerate() {
            let term = pk.scalar_mul(k.entry(i, j), xj)?;
            ops.mul += 1;
            acc = pk.add(&acc, &term)?;
            ops.add += 1;
        }
        out.push(acc);
    }
    Ok((out, ops))
}

/// Componentwise bound on `|u_HE − (Kx + b)|` for `n` state components,
/// `|x_j| ≤ x_max`, and `‖K‖_max = k_max`, with each encoding rounded to a
/// grid of spacing `ρ^{−δ}` (offset: `ρ^{−2δ}`).
pub fn affine_error_budget(n: usize, rho: u32, delta: u32, x_max: f64, k_max: f64) -> f64 {
    let s = (rho as f64).powi(-(delta as i32));
    n as f64 * (x_max + k_max) * s + (n as f64 + 1.0) * s * s
}
