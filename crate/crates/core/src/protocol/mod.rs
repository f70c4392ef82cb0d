//! One control cycle as a sensor → cloud → actuator pipeline over an
//! instrumented channel, for the plaintext, key-stream, quantized
//! key-stream, and Paillier backends.

mod cost;
mod parties;
pub mod wire;

pub use cost::{align_accuracy, model_payload, predict_cost, Accuracy, CostModel, Party, PartyCost};
pub use parties::{Actuator, Cloud, Sensor};

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::keys::{FreshnessGuard, KeyConfig, KeyError, KeySource, DEFAULT_GROUP_BITS};
use crate::mpqp::{PwaController, SynthesisError};
use crate::paillier::{keygen, FixedGain, FixedPointCodec, PaillierError};
use crate::qe::CipherError;
use crate::simulation::Setpoint;
use parties::{ActuatorCrypto, CloudEval, SensorCrypto};
use wire::{BodyKind, MsgCloudToActuator, MsgSensorToCloud, WireFormat};

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error(transparent)]
    Synthesis(#[from] SynthesisError),
    #[error(transparent)]
    Cipher(#[from] CipherError),
    #[error(transparent)]
    Paillier(#[from] PaillierError),
    #[error(transparent)]
    Key(#[from] KeyError),
    #[error("region index {0} is not in the gain library")]
    InvalidRegion(u32),
    #[error("wire: {0}")]
    Wire(String),
    #[error("config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Backend {
    Plaintext,
    Qe,
    QeQuantized,
    Paillier,
}

impl Backend {
    pub const ALL: [Backend; 4] = [Backend::Plaintext, Backend::Qe, Backend::QeQuantized, Backend::Paillier];

    pub fn name(self) -> &'static str {
        match self {
            Backend::Plaintext => "plaintext",
            Backend::Qe => "qe",
            Backend::QeQuantized => "qe_quantized",
            Backend::Paillier => "paillier",
        }
    }

    pub fn is_encrypted(self) -> bool {
        self != Backend::Plaintext
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Backend {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Backend::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| format!("unknown backend `{s}` (expected plaintext, qe, qe_quantized, paillier)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PaillierParams {
    /// Modulus bit length `L`.
    pub bits: usize,
    pub rho: u32,
    pub gamma: u32,
    pub delta: u32,
}

impl Default for PaillierParams {
    fn default() -> Self {
        Self { bits: 1024, rho: 2, gamma: 8, delta: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProtocolConfig {
    pub backend: Backend,
    pub n: usize,
    pub m: usize,
    /// Key-stream group width `w_b`.
    pub group_bits: u32,
    /// Quantized word width `w`.
    pub quant_bits: u32,
    /// Float precision `p` used by the cost and payload models.
    pub float_bits: u32,
    pub paillier: PaillierParams,
}

impl ProtocolConfig {
    pub fn new(backend: Backend, n: usize, m: usize) -> Self {
        Self {
            backend,
            n,
            m,
            group_bits: DEFAULT_GROUP_BITS,
            quant_bits: 16,
            float_bits: 64,
            paillier: PaillierParams::default(),
        }
    }
}

/// Primitive operation counters for one cycle.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PrimitiveCounts {
    pub enc: u64,
    pub con: u64,
    pub dec: u64,
    pub sums: u64,
    pub he_enc: u64,
    pub he_dec: u64,
    pub he_add: u64,
    pub he_mul: u64,
}

impl PrimitiveCounts {
    /// Closed forms for one cycle of the given backend.
    pub fn expected(backend: Backend, n: u64, m: u64) -> Self {
        match backend {
            Backend::Plaintext => Self::default(),
            Backend::Qe | Backend::QeQuantized => {
                Self { enc: n + m, con: m * n, dec: m * n + m, sums: m * n, ..Self::default() }
            }
            Backend::Paillier => Self { he_enc: n + m, he_mul: m * n, he_add: m * n, he_dec: m, ..Self::default() },
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LinkBits {
    pub s2c: u64,
    pub c2a: u64,
}

impl LinkBits {
    pub fn total(&self) -> u64 {
        self.s2c + self.c2a
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PartyTimes {
    pub sensor: Duration,
    pub cloud: Duration,
    pub actuator: Duration,
}

impl PartyTimes {
    pub fn total(&self) -> Duration {
        self.sensor + self.cloud + self.actuator
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CycleMetrics {
    pub counts: PrimitiveCounts,
    /// Measured on encoded frames.
    pub payload: LinkBits,
    /// From the closed-form payload model.
    pub model_payload: LinkBits,
    pub model_cost: CostModel,
    /// Largest bit length of the encoded gain entries of the selected region.
    pub b_k: u64,
    pub wall: PartyTimes,
    /// Values clamped into the quantizer range (quantized backend only).
    pub saturated: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Link {
    SensorToCloud,
    CloudToActuator,
}

/// One captured frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub k: u64,
    pub seq: u64,
    pub link: Link,
    pub at: Duration,
    pub bytes: Vec<u8>,
}

/// Append-only copy of every frame on both links. Holds only wire bytes.
#[derive(Debug, Clone)]
pub struct EavesdropLog {
    format: WireFormat,
    frames: Vec<Frame>,
    start: Instant,
}

impl EavesdropLog {
    fn new(format: WireFormat) -> Self {
        Self { format, frames: Vec::new(), start: Instant::now() }
    }

    fn record(&mut self, k: u64, link: Link, bytes: &[u8]) {
        let seq = self.frames.len() as u64;
        self.frames.push(Frame { k, seq, link, at: self.start.elapsed(), bytes: bytes.to_vec() });
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn format(&self) -> WireFormat {
        self.format
    }

    pub fn sensor_messages(&self) -> Result<Vec<MsgSensorToCloud>, ProtocolError> {
        self.frames
            .iter()
            .filter(|f| f.link == Link::SensorToCloud)
            .map(|f| self.format.decode_s2c(&f.bytes))
            .collect()
    }

    pub fn actuator_messages(&self) -> Result<Vec<MsgCloudToActuator>, ProtocolError> {
        self.frames
            .iter()
            .filter(|f| f.link == Link::CloudToActuator)
            .map(|f| self.format.decode_c2a(&f.bytes))
            .collect()
    }

    /// Every 8-byte window of every frame body read as a double and
    /// compared with the state of the same cycle. Returns the matches.
    pub fn plaintext_matches(&self, states: &[DVector<f64>], tol: f64) -> Vec<(u64, usize)> {
        let mut hits = Vec::new();
        for f in &self.frames {
            let Some(x) = states.get(f.k as usize) else { continue };
            let body = &f.bytes[8..];
            for start in 0..body.len().saturating_sub(7) {
                let v = f64::from_le_bytes(body[start..start + 8].try_into().expect("8 bytes"));
                if x.iter().any(|&xi| (v - xi).abs() <= tol) {
                    hits.push((f.k, start));
                }
            }
        }
        hits
    }
}

/// Configured parties plus the channel between them.
pub struct Session {
    pub(crate) config: ProtocolConfig,
    sensor: Sensor,
    cloud: Cloud,
    actuator: Actuator,
    format: WireFormat,
    log: EavesdropLog,
    /// `b_K` per region.
    gain_bits: Vec<u64>,
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `max bitlen(round(K_ij ρ^δ))`.
pub fn gain_bit_length(gain: &nalgebra::DMatrix<f64>, rho: u32, delta: u32) -> u64 {
    let scale = (rho as f64).powi(delta as i32);
    gain.iter().map(|&k| (k * scale).round().abs()).map(|v| 64 - (v as u64).leading_zeros() as u64).max().unwrap_or(0)
}

impl Session {
    pub fn new(ctrl: &PwaController, config: &ProtocolConfig, key_seed: u64, quant_seed: u64) -> Result<Self, ProtocolError> {
        let (n, m) = (ctrl.n, ctrl.m);
        if (config.n, config.m) != (n, m) {
            return Err(ProtocolError::Config(format!(
                "config is for n={}, m={} but the controller has n={n}, m={m}",
                config.n, config.m
            )));
        }
        let gains: Vec<_> = ctrl.regions.iter().map(|r| r.gain.clone()).collect();
        let pp = config.paillier;
        let gain_bits = gains.iter().map(|g| gain_bit_length(g, pp.rho, pp.delta)).collect();
        let key_cfg = || KeyConfig::new(n, m, config.group_bits);
        let qe_keys = || KeySource::new(key_seed);
        let (sc, ce, ac, kind) = match config.backend {
            Backend::Plaintext => (SensorCrypto::Plain, CloudEval::Plain, ActuatorCrypto::Plain, BodyKind::Real),
            Backend::Qe => (
                SensorCrypto::Qe { keys: qe_keys(), cfg: key_cfg()?, guard: FreshnessGuard::default() },
                CloudEval::Qe,
                ActuatorCrypto::Qe { keys: qe_keys(), cfg: key_cfg()?, guard: FreshnessGuard::default() },
                BodyKind::Real,
            ),
            Backend::QeQuantized => {
                let w = config.quant_bits;
                if !(2..=53).contains(&w) {
                    return Err(ProtocolError::Config(format!("quantizer width {w} outside 2..=53")));
                }
                (
                    SensorCrypto::Quantized {
                        keys: qe_keys(),
                        cfg: key_cfg()?,
                        guard: FreshnessGuard::default(),
                        w,
                        rng: stream_rng(quant_seed, 0),
                    },
                    CloudEval::Quantized { w, rng: stream_rng(quant_seed, 1) },
                    ActuatorCrypto::Quantized { keys: qe_keys(), cfg: key_cfg()?, guard: FreshnessGuard::default() },
                    BodyKind::Words { w },
                )
            }
            Backend::Paillier => {
                let keypair = keygen(pp.bits, &mut stream_rng(key_seed, 0))?;
                let pk = keypair.public.clone();
                let codec = FixedPointCodec::new(pp.rho, pp.gamma, pp.delta, &pk.n)?;
                let fixed = gains.iter().map(|g| FixedGain::new(g, &codec)).collect::<Result<Vec<_>, _>>()?;
                let kind = BodyKind::He { key_id: pk.key_id() };
                (
                    SensorCrypto::Paillier { pk: pk.clone(), codec: codec.clone(), rng: stream_rng(key_seed, 1) },
                    CloudEval::Paillier { pk, gains: fixed },
                    ActuatorCrypto::Paillier { keypair, codec },
                    kind,
                )
            }
        };
        let format = match config.backend {
            Backend::Plaintext => WireFormat { kind, x_len: n, b_len: m, t_len: m, fwd_len: m },
            Backend::Qe | Backend::QeQuantized => WireFormat { kind, x_len: n, b_len: m, t_len: m * n, fwd_len: m },
            Backend::Paillier => WireFormat { kind, x_len: n, b_len: m, t_len: m, fwd_len: 0 },
        };
        Ok(Self {
            config: config.clone(),
            sensor: Sensor { ctrl: ctrl.clone(), crypto: sc },
            cloud: Cloud { gains, eval: ce },
            actuator: Actuator { n, m, crypto: ac },
            format,
            log: EavesdropLog::new(format),
            gain_bits,
        })
    }

    pub fn log(&self) -> &EavesdropLog {
        &self.log
    }

    pub fn into_log(self) -> EavesdropLog {
        self.log
    }

    /// Runs the S → C → A pipeline for cycle `k`. Messages cross each link
    /// as encoded bytes and are copied to the eavesdropper's log.
    pub fn run_cycle(&mut self, k: u64, x: &DVector<f64>, sp: &Setpoint) -> Result<(DVector<f64>, CycleMetrics), ProtocolError> {
        let mut counts = PrimitiveCounts::default();
        let mut saturated = 0;
        let mut wall = PartyTimes::default();

        let t0 = Instant::now();
        let m1 = self.sensor.step(k, x, sp, &mut counts, &mut saturated)?;
        let sigma = m1.sigma as usize;
        let e1 = self.format.encode_s2c(&m1);
        wall.sensor = t0.elapsed();
        self.log.record(k, Link::SensorToCloud, &e1.bytes);

        let t1 = Instant::now();
        let m2 = self.cloud.step(self.format.decode_s2c(&e1.bytes)?, &mut counts, &mut saturated)?;
        let e2 = self.format.encode_c2a(&m2);
        wall.cloud = t1.elapsed();
        self.log.record(k, Link::CloudToActuator, &e2.bytes);

        let t2 = Instant::now();
        let u = self.actuator.step(self.format.decode_c2a(&e2.bytes)?, &mut counts)?;
        wall.actuator = t2.elapsed();

        let (n, m) = (self.config.n as u64, self.config.m as u64);
        let l = match &self.format.kind {
            BodyKind::He { .. } => self.paillier_bits(),
            _ => self.config.paillier.bits as u64,
        };
        let b_k = self.gain_bits[sigma];
        let metrics = CycleMetrics {
            counts,
            payload: LinkBits { s2c: e1.payload_bits, c2a: e2.payload_bits },
            model_payload: model_payload(self.config.backend, n, m, self.config.float_bits as u64, self.config.quant_bits, l),
            model_cost: predict_cost(n, m, l, self.config.float_bits as u64, b_k),
            b_k,
            wall,
            saturated,
        };
        Ok((u, metrics))
    }

    fn paillier_bits(&self) -> u64 {
        match &self.cloud.eval {
            CloudEval::Paillier { pk, .. } => pk.bits(),
            _ => self.config.paillier.bits as u64,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mpqp::{CriticalRegion, Polyhedron};
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    fn single_region(n: usize, m: usize, seed: u64) -> PwaController {
        use rand::Rng;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let gain = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
        let offset = DVector::from_fn(m, |_, _| rng.random_range(-0.5..0.5));
        let region = CriticalRegion { poly: Polyhedron::universe(n), gain, offset, active_set: vec![] };
        PwaController::new(n, m, vec![region]).unwrap()
    }

    fn origin(n: usize, m: usize) -> Setpoint {
        Setpoint { r: DVector::zeros(1), x_ss: DVector::zeros(n), u_ss: DVector::zeros(m) }
    }

    fn small_paillier(cfg: &mut ProtocolConfig) {
        cfg.paillier = PaillierParams { bits: 256, rho: 2, gamma: 8, delta: 20 };
    }

    #[test]
    fn backend_names_roundtrip() {
        for b in Backend::ALL {
            assert_eq!(b.name().parse::<Backend>().unwrap(), b);
        }
        assert!("rsa".parse::<Backend>().is_err());
    }

    #[test]
    fn qe_cycle_counts_for_two_states_one_input() {
        let ctrl = single_region(2, 1, 1);
        let cfg = ProtocolConfig::new(Backend::Qe, 2, 1);
        let mut s = Session::new(&ctrl, &cfg, 7, 8).unwrap();
        let x = DVector::from_vec(vec![0.4, -1.3]);
        let (u, met) = s.run_cycle(0, &x, &origin(2, 1)).unwrap();
        assert_eq!(met.counts, PrimitiveCounts { enc: 3, con: 2, dec: 3, sums: 2, ..Default::default() });
        let plain = ctrl.regions[0].eval(&x);
        assert!((u - plain).amax() <= 1e-9);
        assert_eq!(met.payload, LinkBits { s2c: 32 + 3 * 64, c2a: 3 * 64 });
        assert_eq!(met.payload, met.model_payload);
    }

    #[test]
    fn plaintext_backend_has_no_crypto_counts() {
        let ctrl = single_region(3, 2, 2);
        let mut s = Session::new(&ctrl, &ProtocolConfig::new(Backend::Plaintext, 3, 2), 1, 1).unwrap();
        let x = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let (u, met) = s.run_cycle(0, &x, &origin(3, 2)).unwrap();
        assert_eq!(met.counts, PrimitiveCounts::default());
        assert!((u - ctrl.regions[0].eval(&x)).amax() < 1e-12);
    }

    #[test]
    fn sensor_message_at_zero_is_all_ones() {
        let mut ctrl = single_region(2, 1, 3);
        ctrl.regions[0].offset.fill(0.0);
        let cfg = ProtocolConfig::new(Backend::Qe, 2, 1);
        let mut s = Session::new(&ctrl, &cfg, 5, 5).unwrap();
        let (u, _) = s.run_cycle(0, &DVector::zeros(2), &origin(2, 1)).unwrap();
        assert_eq!(u[0], 0.0);
        let msgs = s.log().sensor_messages().unwrap();
        assert_eq!(msgs[0].x.reals().unwrap(), &[1.0, 1.0]);
        assert_eq!(msgs[0].b.reals().unwrap(), &[1.0]);
        let back = s.log().actuator_messages().unwrap();
        assert_eq!(back[0].b, msgs[0].b, "offset forwarded unchanged");
    }

    #[test]
    fn zero_gain_gives_all_ones_matrix() {
        let mut ctrl = single_region(2, 2, 4);
        ctrl.regions[0].gain.fill(0.0);
        let mut s = Session::new(&ctrl, &ProtocolConfig::new(Backend::Qe, 2, 2), 1, 1).unwrap();
        s.run_cycle(0, &DVector::from_vec(vec![3.0, -2.0]), &origin(2, 2)).unwrap();
        let back = s.log().actuator_messages().unwrap();
        assert!(back[0].t.reals().unwrap().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn fresh_keys_change_ciphertexts_and_reuse_is_rejected() {
        let ctrl = single_region(2, 1, 5);
        let mut s = Session::new(&ctrl, &ProtocolConfig::new(Backend::Qe, 2, 1), 1, 1).unwrap();
        let x = DVector::from_vec(vec![0.5, 0.5]);
        s.run_cycle(0, &x, &origin(2, 1)).unwrap();
        s.run_cycle(1, &x, &origin(2, 1)).unwrap();
        let msgs = s.log().sensor_messages().unwrap();
        assert_ne!(msgs[0].x, msgs[1].x);
        assert!(matches!(s.run_cycle(1, &x, &origin(2, 1)), Err(ProtocolError::Key(KeyError::KeyReuse { .. }))));
    }

    #[test]
    fn paillier_cycle_within_budget() {
        let ctrl = single_region(2, 1, 6);
        let mut cfg = ProtocolConfig::new(Backend::Paillier, 2, 1);
        small_paillier(&mut cfg);
        let mut s = Session::new(&ctrl, &cfg, 3, 3).unwrap();
        let x = DVector::from_vec(vec![2.5, -0.75]);
        let (u, met) = s.run_cycle(0, &x, &origin(2, 1)).unwrap();
        assert_eq!(met.counts, PrimitiveCounts::expected(Backend::Paillier, 2, 1));
        let budget = crate::paillier::affine_error_budget(2, 2, 20, 2.5, 1.0);
        assert!((u - ctrl.regions[0].eval(&x)).amax() <= budget);
        // S→C: σ + 3 ciphertexts of at most 2L bits, each with a 32-bit length.
        assert!(met.payload.s2c <= 32 + 3 * (32 + 512));
        assert_eq!(met.model_payload.s2c, 32 + 3 * 2 * 256);
    }

    #[test]
    fn quantized_cycle_tracks_plain_law() {
        let ctrl = single_region(2, 1, 9);
        let mut cfg = ProtocolConfig::new(Backend::QeQuantized, 2, 1);
        cfg.quant_bits = 40;
        let mut s = Session::new(&ctrl, &cfg, 3, 4).unwrap();
        let x = DVector::from_vec(vec![0.3, -0.2]);
        let (u, met) = s.run_cycle(0, &x, &origin(2, 1)).unwrap();
        assert_eq!(met.saturated, 0);
        assert_eq!(met.payload, LinkBits { s2c: 32 + 3 * 40, c2a: 3 * 40 });
        assert!((u - ctrl.regions[0].eval(&x)).amax() < 1e-3);
    }

    #[test]
    fn invalid_region_index_is_rejected() {
        let ctrl = single_region(1, 1, 10);
        let mut cloud = Cloud { gains: vec![ctrl.regions[0].gain.clone()], eval: CloudEval::Qe };
        let msg = MsgSensorToCloud { k: 0, sigma: 3, x: wire::Body::Real(vec![1.0]), b: wire::Body::Real(vec![1.0]) };
        let err = cloud.step(msg, &mut PrimitiveCounts::default(), &mut 0).unwrap_err();
        assert!(matches!(err, ProtocolError::InvalidRegion(3)));
    }

    #[test]
    fn audit_detects_plaintext_and_passes_qe() {
        let ctrl = single_region(2, 1, 11);
        let states: Vec<DVector<f64>> = (0..5).map(|k| DVector::from_vec(vec![1.0 + k as f64, -2.5])).collect();
        for (backend, expect_hits) in [(Backend::Plaintext, true), (Backend::Qe, false)] {
            let mut s = Session::new(&ctrl, &ProtocolConfig::new(backend, 2, 1), 1, 1).unwrap();
            for (k, x) in states.iter().enumerate() {
                s.run_cycle(k as u64, x, &origin(2, 1)).unwrap();
            }
            assert_eq!(!s.log().plaintext_matches(&states, 1e-6).is_empty(), expect_hits, "{backend}");
            assert_eq!(s.log().frames().len(), 10);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(36))]
        #[test]
        fn counters_match_closed_forms(n in 1usize..=6, m in 1usize..=6, seed in 0u64..1000) {
            let ctrl = single_region(n, m, seed);
            let x = DVector::from_fn(n, |i, _| (i as f64 - 2.0) * 0.3);
            for backend in [Backend::Qe, Backend::QeQuantized, Backend::Plaintext] {
                let mut s = Session::new(&ctrl, &ProtocolConfig::new(backend, n, m), seed, seed).unwrap();
                let (_, met) = s.run_cycle(0, &x, &origin(n, m)).unwrap();
                prop_assert_eq!(met.counts, PrimitiveCounts::expected(backend, n as u64, m as u64));
            }
        }
    }
}
