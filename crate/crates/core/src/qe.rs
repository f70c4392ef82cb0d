//! Exponential/logarithmic key-stream cipher and its stochastic quantizer.
//!
//! A scalar `z` under coefficient `β` encrypts to `exp(z/β)` and decrypts as
//! `β·ln(z̃)`. Raising `x̃_i` to a plaintext gain `K_ji` multiplies the hidden
//! exponent, so `Σ_i β_i ln(x̃_i^{K_ji}) = Σ_i K_ji x_i` at the key holder.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use thiserror::Error;

use crate::keys::BetaVector;

/// Largest admissible `|z/β|`; keeps `exp` inside the double range.
pub const MAX_EXPONENT: f64 = 700.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CipherError {
    #[error("|z/β| = {ratio:.3e} exceeds {MAX_EXPONENT} at component {index}")]
    Magnitude { index: usize, ratio: f64 },
    #[error("ciphertext entry ({row}, {col}) is not a positive finite real: {value}")]
    Ciphertext { row: usize, col: usize, value: f64 },
    #[error("g is undefined at v = 0")]
    Domain,
    #[error("mapped value {y} is outside the {w}-bit range [0, {max}]")]
    Range { y: f64, w: u32, max: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CipherScalar(f64);

impl CipherScalar {
    pub fn new(value: f64) -> Result<Self, CipherError> {
        if value > 0.0 && value.is_finite() {
            Ok(Self(value))
        } else {
            Err(CipherError::Ciphertext { row: 0, col: 0, value })
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CipherVector(pub Vec<CipherScalar>);

impl CipherVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> Vec<f64> {
        self.0.iter().map(|c| c.0).collect()
    }

    pub fn from_values(values: &[f64]) -> Result<Self, CipherError> {
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| CipherScalar::new(v).map_err(|_| CipherError::Ciphertext { row: i, col: 0, value: v }))
            .collect::<Result<Vec<_>, _>>()
            .map(CipherVector)
    }
}

/// Cloud-side encrypted linear term, entry `(j, i)` = `x̃_i^{K_ji}`.
#[derive(Debug, Clone, PartialEq)]
pub struct CipherMatrix(pub DMatrix<f64>);

pub fn enc_scalar(z: f64, beta: i64) -> Result<CipherScalar, CipherError> {
    let ratio = z / beta as f64;
    if !(ratio.abs() <= MAX_EXPONENT) {
        return Err(CipherError::Magnitude { index: 0, ratio });
    }
    Ok(CipherScalar(ratio.exp()))
}

pub fn dec_scalar(c: f64, beta: i64) -> Result<f64, CipherError> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(CipherError::Ciphertext { row: 0, col: 0, value: c });
    }
    Ok(beta as f64 * c.ln())
}

fn enc_components(values: &DVector<f64>, betas: &[i64]) -> Result<CipherVector, CipherError> {
    if values.len() != betas.len() {
        return Err(CipherError::Dimension(format!("{} values for {} coefficients", values.len(), betas.len())));
    }
    values
        .iter()
        .zip(betas)
        .enumerate()
        .map(|(i, (&z, &b))| {
            enc_scalar(z, b).map_err(|e| match e {
                CipherError::Magnitude { ratio, .. } => CipherError::Magnitude { index: i, ratio },
                other => other,
            })
        })
        .collect::<Result<Vec<_>, _>>()
        .map(CipherVector)
}

/// Encrypts the state with the first `n` coefficients.
pub fn enc_state(x: &DVector<f64>, betas: &BetaVector) -> Result<CipherVector, CipherError> {
    enc_components(x, betas.state())
}

/// Encrypts the affine offset with the last `m` coefficients.
pub fn enc_offset(b: &DVector<f64>, betas: &BetaVector) -> Result<CipherVector, CipherError> {
    enc_components(b, betas.offset())
}

/// Componentwise decryption with the given coefficients.
pub fn dec_vector(c: &CipherVector, betas: &[i64]) -> Result<DVector<f64>, CipherError> {
    if c.len() != betas.len() {
        return Err(CipherError::Dimension(format!("{} ciphertexts for {} coefficients", c.len(), betas.len())));
    }
    let mut out = DVector::zeros(c.len());
    for (i, (s, &b)) in c.0.iter().zip(betas).enumerate() {
        out[i] = dec_scalar(s.0, b).map_err(|_| CipherError::Ciphertext { row: i, col: 0, value: s.0 })?;
    }
    Ok(out)
}

/// Entrywise power `x̃_i^{K_ji}`. Takes no key material.
pub fn con(gain: &DMatrix<f64>, x: &CipherVector) -> Result<CipherMatrix, CipherError> {
    if gain.ncols() != x.len() {
        return Err(CipherError::Dimension(format!("gain has {} columns, state has {}", gain.ncols(), x.len())));
    }
    let mut t = DMatrix::zeros(gain.nrows(), gain.ncols());
    for j in 0..gain.nrows() {
        for i in 0..gain.ncols() {
            let v = x.0[i].0.powf(gain[(j, i)]);
            if !(v > 0.0 && v.is_finite()) {
                return Err(CipherError::Ciphertext { row: j, col: i, value: v });
            }
            t[(j, i)] = v;
        }
    }
    Ok(CipherMatrix(t))
}

/// `v_j = Σ_i β_i ln(t̃_ji)`.
pub fn dec_aggregate(t: &CipherMatrix, betas: &BetaVector) -> Result<DVector<f64>, CipherError> {
    let t = &t.0;
    let state = betas.state();
    if t.ncols() != state.len() {
        return Err(CipherError::Dimension(format!("matrix has {} columns, {} state coefficients", t.ncols(), state.len())));
    }
    let mut v = DVector::zeros(t.nrows());
    for j in 0..t.nrows() {
        let mut acc = 0.0;
        for (i, &b) in state.iter().enumerate() {
            let c = t[(j, i)];
            acc += dec_scalar(c, b).map_err(|_| CipherError::Ciphertext { row: j, col: i, value: c })?;
        }
        v[j] = acc;
    }
    Ok(v)
}

/// `y = v` for `v > 1`, `2 − 1/v` otherwise.
pub fn g_map(v: f64) -> Result<f64, CipherError> {
    if v == 0.0 {
        return Err(CipherError::Domain);
    }
    Ok(if v > 1.0 { v } else { 2.0 - 1.0 / v })
}

/// Inverse of [`g_map`] on `y < 2`.
pub fn g_inv(y: f64) -> Result<f64, CipherError> {
    if y >= 2.0 || !y.is_finite() {
        return Err(CipherError::Domain);
    }
    Ok(if y > 1.0 { y } else { 1.0 / (2.0 - y) })
}

/// A `w`-bit word `a_{w−1}…a_0` with `ξ = Σ_j 2^{−j} a_j`.
///
/// Stored as the integer `code = 2^{w−1}·ξ`, so `a_0` is the top bit of `code`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuantizedWord {
    pub code: u64,
    pub w: u32,
}

impl QuantizedWord {
    pub fn decode(self) -> f64 {
        self.code as f64 / (1u64 << (self.w - 1)) as f64
    }

    /// Bit `a_j`, weight `2^{−j}`.
    pub fn bit(self, j: u32) -> bool {
        (self.code >> (self.w - 1 - j)) & 1 == 1
    }

    /// Largest representable `ξ`, `2 − 2^{−(w−1)}`.
    pub fn max_value(w: u32) -> f64 {
        2.0 - 1.0 / (1u64 << (w - 1)) as f64
    }
}

/// Unbiased stochastic rounding of `y = g(v)` onto the `2^{−(w−1)}` grid.
pub fn quantize_stochastic<R: Rng + ?Sized>(v: f64, w: u32, rng: &mut R) -> Result<QuantizedWord, CipherError> {
    assert!((1..=53).contains(&w), "bit budget must be in 1..=53");
    let y = g_map(v)?;
    let max = QuantizedWord::max_value(w);
    if !(0.0..=max).contains(&y) {
        return Err(CipherError::Range { y, w, max });
    }
    let scaled = y * (1u64 << (w - 1)) as f64;
    let floor = scaled.floor();
    let eta = scaled - floor;
    let mut code = floor as u64;
    if eta > 0.0 && rng.random::<f64>() < eta {
        code += 1;
    }
    Ok(QuantizedWord { code, w })
}

/// Clamps `v` into the representable range before quantizing. Returns the
/// word and whether clamping happened.
pub fn quantize_saturating<R: Rng + ?Sized>(v: f64, w: u32, rng: &mut R) -> (QuantizedWord, bool) {
    let max = QuantizedWord::max_value(w);
    let lo = 0.5;
    let hi = max;
    let clamped = v.clamp(lo, hi);
    let word = quantize_stochastic(clamped, w, rng).expect("clamped value is representable");
    (word, clamped != v)
}

pub fn quantized_roundtrip<R: Rng + ?Sized>(v: f64, w: u32, rng: &mut R) -> Result<f64, CipherError> {
    let word = quantize_stochastic(v, w, rng)?;
    g_inv(word.decode())
}
