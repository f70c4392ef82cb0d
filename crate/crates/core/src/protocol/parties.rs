//! Sensor, cloud, and actuator state machines.

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha20Rng;

use super::wire::{Body, MsgCloudToActuator, MsgSensorToCloud};
use super::{PrimitiveCounts, ProtocolError};
use crate::keys::{betas, FreshnessGuard, KeyConfig, KeySource};
use crate::mpqp::PwaController;
use crate::paillier::{he_eval_pwa, FixedGain, FixedPointCodec, Keypair, PublicKey};
use crate::qe::{self, CipherMatrix, CipherVector, QuantizedWord};
use crate::simulation::Setpoint;

pub(crate) enum SensorCrypto {
    Plain,
    Qe { keys: KeySource, cfg: KeyConfig, guard: FreshnessGuard },
    Quantized { keys: KeySource, cfg: KeyConfig, guard: FreshnessGuard, w: u32, rng: ChaCha20Rng },
    Paillier { pk: PublicKey, codec: FixedPointCodec, rng: ChaCha20Rng },
}

/// Measures the state, selects the region, and encrypts `(x, b)`. Holds the
/// partition and the offsets in plaintext.
pub struct Sensor {
    pub(crate) ctrl: PwaController,
    pub(crate) crypto: SensorCrypto,
}

/// Saturation events in quantized encodings.
pub(crate) fn quantize_all(values: &[f64], w: u32, rng: &mut ChaCha20Rng, saturated: &mut u64) -> Vec<QuantizedWord> {
    values
        .iter()
        .map(|&v| {
            let (word, clamped) = qe::quantize_saturating(v, w, rng);
            *saturated += clamped as u64;
            word
        })
        .collect()
}

pub(crate) fn dequantize_all(words: &[QuantizedWord]) -> Result<Vec<f64>, ProtocolError> {
    words.iter().map(|w| qe::g_inv(w.decode()).map_err(ProtocolError::from)).collect()
}

impl Sensor {
    /// Region index and the shifted offset `b^σ − K^σ x_ss + u_ss`, so that
    /// `K^σ x + offset` is the law applied to the physical state `x`.
    pub fn select(&self, x: &DVector<f64>, sp: &Setpoint) -> Result<(usize, DVector<f64>), ProtocolError> {
        let sigma = self.ctrl.locate(&sp.deviation(x))?;
        let r = &self.ctrl.regions[sigma];
        Ok((sigma, &r.offset - &r.gain * &sp.x_ss + &sp.u_ss))
    }

    pub fn step(
        &mut self,
        k: u64,
        x: &DVector<f64>,
        sp: &Setpoint,
        counts: &mut PrimitiveCounts,
        saturated: &mut u64,
    ) -> Result<MsgSensorToCloud, ProtocolError> {
        let (sigma, offset) = self.select(x, sp)?;
        let sigma = sigma as u32;
        let (n, m) = (x.len() as u64, offset.len() as u64);
        let (xb, bb) = match &mut self.crypto {
            SensorCrypto::Plain => (Body::Real(x.iter().copied().collect()), Body::Real(offset.iter().copied().collect())),
            SensorCrypto::Qe { keys, cfg, guard } => {
                guard.admit(k)?;
                let beta = betas(&keys.generate(k, cfg), cfg)?;
                let xe = qe::enc_state(x, &beta)?;
                let be = qe::enc_offset(&offset, &beta)?;
                counts.enc += n + m;
                (Body::Real(xe.values()), Body::Real(be.values()))
            }
            SensorCrypto::Quantized { keys, cfg, guard, w, rng } => {
                guard.admit(k)?;
                let beta = betas(&keys.generate(k, cfg), cfg)?;
                let xe = qe::enc_state(x, &beta)?;
                let be = qe::enc_offset(&offset, &beta)?;
                counts.enc += n + m;
                let xw = quantize_all(&xe.values(), *w, rng, saturated);
                let bw = quantize_all(&be.values(), *w, rng, saturated);
                (Body::Words(xw), Body::Words(bw))
            }
            SensorCrypto::Paillier { pk, codec, rng } => {
                let mut enc = |v: f64, power: u32| -> Result<_, ProtocolError> {
                    counts.he_enc += 1;
                    Ok(pk.encrypt(&codec.encode_scaled(v, power)?, rng)?)
                };
                let xe = x.iter().map(|&v| enc(v, 1)).collect::<Result<Vec<_>, _>>()?;
                let be = offset.iter().map(|&v| enc(v, 2)).collect::<Result<Vec<_>, _>>()?;
                (Body::He(xe), Body::He(be))
            }
        };
        Ok(MsgSensorToCloud { k, sigma, x: xb, b: bb })
    }
}

pub(crate) enum CloudEval {
    Plain,
    Qe,
    Quantized { w: u32, rng: ChaCha20Rng },
    Paillier { pk: PublicKey, gains: Vec<FixedGain> },
}

/// Holds the gain library in plaintext. Has no key material: the Paillier
/// variant keeps only the public modulus.
pub struct Cloud {
    pub(crate) gains: Vec<DMatrix<f64>>,
    pub(crate) eval: CloudEval,
}

impl Cloud {
    pub fn step(
        &mut self,
        msg: MsgSensorToCloud,
        counts: &mut PrimitiveCounts,
        saturated: &mut u64,
    ) -> Result<MsgCloudToActuator, ProtocolError> {
        let sigma = msg.sigma as usize;
        let gain = self.gains.get(sigma).ok_or(ProtocolError::InvalidRegion(msg.sigma))?;
        let (mm, nn) = (gain.nrows() as u64, gain.ncols() as u64);
        let k = msg.k;
        match (&mut self.eval, msg.x, msg.b) {
            (CloudEval::Plain, Body::Real(x), b @ Body::Real(_)) => {
                let v = gain * DVector::from_vec(x);
                Ok(MsgCloudToActuator { k, t: Body::Real(v.iter().copied().collect()), b })
            }
            (CloudEval::Qe, Body::Real(x), b @ Body::Real(_)) => {
                let t = qe::con(gain, &CipherVector::from_values(&x)?)?;
                counts.con += mm * nn;
                Ok(MsgCloudToActuator { k, t: Body::Real(row_major(&t.0)), b })
            }
            (CloudEval::Quantized { w, rng }, Body::Words(x), b @ Body::Words(_)) => {
                let xv = dequantize_all(&x)?;
                let t = qe::con(gain, &CipherVector::from_values(&xv)?)?;
                counts.con += mm * nn;
                let words = quantize_all(&row_major(&t.0), *w, rng, saturated);
                Ok(MsgCloudToActuator { k, t: Body::Words(words), b })
            }
            (CloudEval::Paillier { pk, gains }, Body::He(x), Body::He(b)) => {
                let (u, ops) = he_eval_pwa(pk, &x, &gains[sigma], &b)?;
                counts.he_mul += ops.mul;
                counts.he_add += ops.add;
                Ok(MsgCloudToActuator { k, t: Body::He(u), b: Body::He(Vec::new()) })
            }
            _ => Err(ProtocolError::Wire("message body does not match the backend".into())),
        }
    }
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    (0..m.nrows()).flat_map(|i| (0..m.ncols()).map(move |j| m[(i, j)])).collect()
}

pub(crate) enum ActuatorCrypto {
    Plain,
    Qe { keys: KeySource, cfg: KeyConfig, guard: FreshnessGuard },
    Quantized { keys: KeySource, cfg: KeyConfig, guard: FreshnessGuard },
    Paillier { keypair: Keypair, codec: FixedPointCodec },
}

pub struct Actuator {
    pub(crate) n: usize,
    pub(crate) m: usize,
    pub(crate) crypto: ActuatorCrypto,
}

impl Actuator {
    pub fn step(&mut self, msg: MsgCloudToActuator, counts: &mut PrimitiveCounts) -> Result<DVector<f64>, ProtocolError> {
        let (n, m) = (self.n, self.m);
        let k = msg.k;
        let qe_decrypt = |t: Vec<f64>, b: Vec<f64>, keys: &KeySource, cfg: &KeyConfig, guard: &mut FreshnessGuard, counts: &mut PrimitiveCounts| {
            guard.admit(k)?;
            let beta = betas(&keys.generate(k, cfg), cfg)?;
            let t = CipherMatrix(DMatrix::from_row_slice(m, n, &t));
            let v = qe::dec_aggregate(&t, &beta)?;
            let b = qe::dec_vector(&CipherVector::from_values(&b)?, beta.offset())?;
            counts.dec += (m * n + m) as u64;
            counts.sums += (m * n) as u64;
            Ok::<_, ProtocolError>(v + b)
        };
        match (&mut self.crypto, msg.t, msg.b) {
            (ActuatorCrypto::Plain, Body::Real(v), Body::Real(b)) => Ok(DVector::from_vec(v) + DVector::from_vec(b)),
            (ActuatorCrypto::Qe { keys, cfg, guard }, Body::Real(t), Body::Real(b)) => {
                qe_decrypt(t, b, keys, cfg, guard, counts)
            }
            (ActuatorCrypto::Quantized { keys, cfg, guard }, Body::Words(t), Body::Words(b)) => {
                qe_decrypt(dequantize_all(&t)?, dequantize_all(&b)?, keys, cfg, guard, counts)
            }
            (ActuatorCrypto::Paillier { keypair, codec }, Body::He(u), Body::He(_)) => {
                let mut out = DVector::zeros(m);
                for (i, c) in u.iter().enumerate() {
                    out[i] = codec.decode(&keypair.decrypt(c)?, 2);
                    counts.he_dec += 1;
                }
                Ok(out)
            }
            _ => Err(ProtocolError::Wire("message body does not match the backend".into())),
        }
    }
}
