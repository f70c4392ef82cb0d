//! Passive eavesdropper that fits a linear one-step predictor to observed
//! proxies of the state and rolls it out from the known initial state.

use nalgebra::{DMatrix, DVector};
use num_traits::ToPrimitive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use thiserror::Error;

use crate::mpqp::PwaController;
use crate::protocol::wire::Body;
use crate::protocol::{Backend, EavesdropLog, ProtocolConfig, ProtocolError};
use crate::simulation::{fmt17, initial_state_for, run_closed_loop, BenchmarkScenario, Seeds, SimulationError};

pub const RIDGE: f64 = 1e-9;
pub const DIVERGENCE_NORM: f64 = 1e6;
pub const NORM_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("every truth term has norm below {NORM_FLOOR}; score undefined")]
    Undefined,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Simulation(#[from] SimulationError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NoiseKind {
    None,
    Gaussian,
    Uniform,
    Impulse,
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 4] = [NoiseKind::None, NoiseKind::Gaussian, NoiseKind::Uniform, NoiseKind::Impulse];

    pub fn name(self) -> &'static str {
        match self {
            NoiseKind::None => "none",
            NoiseKind::Gaussian => "gaussian",
            NoiseKind::Uniform => "uniform",
            NoiseKind::Impulse => "impulse",
        }
    }
}

/// Noise magnitudes relative to the per-channel RMS of the observed features.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub gaussian_sigma: f64,
    pub uniform_half_width: f64,
    pub impulse_amplitude: f64,
    pub impulse_rate: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self { gaussian_sigma: 0.01, uniform_half_width: 0.02, impulse_amplitude: 0.5, impulse_rate: 0.05 }
    }
}

impl NoiseModel {
    /// Perturbs the observations in place; the closed loop is untouched.
    /// Each feature channel is scaled by its own RMS over the record.
    pub fn apply<R: Rng + ?Sized>(&self, kind: NoiseKind, obs: &mut [DVector<f64>], rng: &mut R) {
        let Some(dim) = obs.first().map(|v| v.len()) else { return };
        if kind == NoiseKind::None {
            return;
        }
        let rms: Vec<f64> = (0..dim)
            .map(|j| (obs.iter().map(|v| v[j] * v[j]).sum::<f64>() / obs.len() as f64).sqrt())
            .collect();
        match kind {
            NoiseKind::None => {}
            NoiseKind::Gaussian => {
                let unit = Normal::new(0.0, 1.0).expect("finite scale");
                for v in obs.iter_mut() {
                    for (e, r) in v.iter_mut().zip(&rms) {
                        *e += self.gaussian_sigma * r * unit.sample(rng);
                    }
                }
            }
            NoiseKind::Uniform => {
                for v in obs.iter_mut() {
                    for (e, r) in v.iter_mut().zip(&rms) {
                        *e += self.uniform_half_width * r * rng.random_range(-1.0..=1.0);
                    }
                }
            }
            NoiseKind::Impulse => {
                for v in obs.iter_mut() {
                    for (e, r) in v.iter_mut().zip(&rms) {
                        if rng.random::<f64>() < self.impulse_rate {
                            let a = self.impulse_amplitude * r;
                            *e += if rng.random::<bool>() { a } else { -a };
                        }
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LsPredictor {
    pub theta: DMatrix<f64>,
    /// Root-mean-square fit residual.
    pub residual: f64,
    /// Set when the regressor Gram matrix is numerically singular.
    pub rank_deficient: bool,
}

impl LsPredictor {
    pub fn predict(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let mut z = DVector::zeros(x.len() + u.len());
        z.rows_mut(0, x.len()).copy_from(x);
        z.rows_mut(x.len(), u.len()).copy_from(u);
        &self.theta * z
    }
}

/// Ridge-regularized normal equations over consecutive proxy pairs.
pub fn fit_ls_predictor(proxies: &[DVector<f64>], inputs: &[DVector<f64>]) -> Result<LsPredictor, AttackError> {
    let n = proxies.first().map_or(0, |v| v.len());
    let m = inputs.first().map_or(0, |v| v.len());
    let needed = n + m + 1;
    if proxies.len() < needed || inputs.len() + 1 < proxies.len() {
        return Err(AttackError::TooFewSamples { needed, got: proxies.len().min(inputs.len() + 1) });
    }
    let samples = proxies.len() - 1;
    let d = n + m;
    let mut phi = DMatrix::zeros(samples, d);
    let mut target = DMatrix::zeros(samples, n);
    for k in 0..samples {
        if proxies[k].len() != n || inputs[k].len() != m {
            return Err(AttackError::Dimension(format!("sample {k}")));
        }
        for j in 0..n {
            phi[(k, j)] = proxies[k][j];
            target[(k, j)] = proxies[k + 1][j];
        }
        for j in 0..m {
            phi[(k, n + j)] = inputs[k][j];
        }
    }
    let gram = phi.transpose() * &phi;
    let scale = gram.diagonal().amax().max(1.0);
    let rank_deficient = gram.rank(1e-12 * scale) < d;
    let reg = &gram + DMatrix::identity(d, d) * RIDGE;
    let rhs = phi.transpose() * &target;
    let sol = match reg.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => reg.lu().solve(&rhs).unwrap_or_else(|| DMatrix::zeros(d, n)),
    };
    let theta = sol.transpose();
    let resid = &target - &phi * sol;
    let residual = (resid.norm_squared() / (samples * n).max(1) as f64).sqrt();
    Ok(LsPredictor { theta, residual, rank_deficient })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub states: Vec<DVector<f64>>,
    /// First step whose prediction exceeded the divergence norm. From there
    /// on the last finite prediction is held.
    pub diverged_at: Option<usize>,
}

pub fn rollout(pred: &LsPredictor, x0: &DVector<f64>, inputs: &[DVector<f64>]) -> Rollout {
    let mut states = Vec::with_capacity(inputs.len() + 1);
    states.push(x0.clone());
    let mut diverged_at = None;
    for (k, u) in inputs.iter().enumerate() {
        let last = states.last().expect("nonempty").clone();
        if diverged_at.is_some() {
            states.push(last);
            continue;
        }
        let next = pred.predict(&last, u);
        if !(next.norm() <= DIVERGENCE_NORM) {
            diverged_at = Some(k + 1);
            states.push(last);
        } else {
            states.push(next);
        }
    }
    Rollout { states, diverged_at }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Score {
    pub value: f64,
    pub counted: usize,
    pub skipped: usize,
}

/// `mean_k ‖x̂(k) − x(k)‖ / ‖x(k)‖` over `k ≥ 1`, skipping near-zero truth.
pub fn confidentiality_score(truth: &[DVector<f64>], predicted: &[DVector<f64>]) -> Result<Score, AttackError> {
    if truth.len() != predicted.len() {
        return Err(AttackError::Dimension(format!("{} truth vs {} predicted", truth.len(), predicted.len())));
    }
    let mut sum = Neumaier::default();
    let (mut counted, mut skipped) = (0, 0);
    for (x, xh) in truth.iter().zip(predicted).skip(1) {
        let norm = x.norm();
        if norm <= NORM_FLOOR {
            skipped += 1;
            continue;
        }
        sum.add((xh - x).norm() / norm);
        counted += 1;
    }
    if counted == 0 {
        return Err(AttackError::Undefined);
    }
    Ok(Score { value: sum.total() / counted as f64, counted, skipped })
}

/// Compensated summation, so totals do not depend on magnitudes cancelling.
#[derive(Debug, Clone, Copy, Default)]
pub struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

fn log2_big(v: &num_bigint::BigUint) -> f64 {
    let bits = v.bits();
    if bits == 0 {
        return 0.0;
    }
    let shift = bits.saturating_sub(64);
    let top = (v >> shift).to_f64().unwrap_or(0.0);
    top.log2() + shift as f64
}

/// The adversary's feature vector per cycle from the sensor-to-cloud link:
/// real ciphertexts as-is, quantized words as their decoded value, Paillier
/// ciphertexts as `log₂` of the residue.
pub fn adversary_features(log: &EavesdropLog) -> Result<Vec<DVector<f64>>, AttackError> {
    let msgs = log.sensor_messages()?;
    Ok(msgs
        .iter()
        .map(|msg| match &msg.x {
            Body::Real(v) => DVector::from_column_slice(v),
            Body::Words(v) => DVector::from_iterator(v.len(), v.iter().map(|w| w.decode())),
            Body::He(v) => DVector::from_iterator(v.len(), v.iter().map(|c| log2_big(&c.value))),
        })
        .collect())
}

#[derive(Debug, Clone)]
pub struct AttackConfig {
    pub backends: Vec<Backend>,
    pub trials: usize,
    pub steps: usize,
    pub seed: u64,
    pub key_seed: u64,
    pub quant_seed: u64,
    pub noise: NoiseModel,
    /// Parameters shared by all backends; the backend field is overridden.
    pub protocol: ProtocolConfig,
}

/// Table of mean scores: one row per noise setting, one column per backend.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackTable {
    pub backends: Vec<Backend>,
    pub rows: Vec<(NoiseKind, Vec<f64>)>,
    /// Trials per column that produced a score.
    pub scored: Vec<usize>,
    /// Rollouts that hit the divergence guard, per column, over all rows.
    pub diverged: Vec<usize>,
}

impl AttackTable {
    pub fn score(&self, noise: NoiseKind, backend: Backend) -> Option<f64> {
        let col = self.backends.iter().position(|&b| b == backend)?;
        self.rows.iter().find(|(k, _)| *k == noise).map(|(_, v)| v[col])
    }

    /// Rows are noise settings, columns are backends.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("noise");
        for b in &self.backends {
            out.push(',');
            out.push_str(b.name());
        }
        out.push('\n');
        for (kind, vals) in &self.rows {
            out.push_str(kind.name());
            for &v in vals {
                out.push(',');
                out.push_str(&fmt17(v));
            }
            out.push('\n');
        }
        out
    }
}

fn mix(a: u64, b: u64) -> u64 {
    // SplitMix64 finalizer over a combined word.
    let mut z = a ^ b.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Scores of one trial: `[noise][backend] -> (score, diverged)`.
type TrialScores = Vec<Vec<Option<(f64, bool)>>>;

fn run_trial(
    scenario: &BenchmarkScenario,
    ctrl: &PwaController,
    cfg: &AttackConfig,
    trial: usize,
) -> Result<TrialScores, AttackError> {
    let t = trial as u64;
    let x0 = initial_state_for(scenario, ctrl, mix(cfg.seed, t))?;
    let mut out = vec![vec![None; cfg.backends.len()]; NoiseKind::ALL.len()];
    for (col, &backend) in cfg.backends.iter().enumerate() {
        let mut pc = cfg.protocol.clone();
        pc.backend = backend;
        let seeds = Seeds { keys: mix(cfg.key_seed, t), quant: mix(cfg.quant_seed, t) };
        let run = run_closed_loop(scenario, ctrl, &pc, seeds, &x0, cfg.steps)?;
        let truth = run.trajectory.states();
        let inputs = run.trajectory.inputs();
        let features = adversary_features(&run.log)?;
        for (row, &kind) in NoiseKind::ALL.iter().enumerate() {
            let mut obs = features.clone();
            let mut rng = ChaCha20Rng::seed_from_u64(mix(mix(cfg.seed, t), (row * 16 + col) as u64 + 1));
            cfg.noise.apply(kind, &mut obs, &mut rng);
            let Ok(pred) = fit_ls_predictor(&obs, &inputs) else { continue };
            let roll = rollout(&pred, &x0, &inputs);
            let n_cmp = truth.len().min(roll.states.len());
            if let Ok(s) = confidentiality_score(&truth[..n_cmp], &roll.states[..n_cmp]) {
                out[row][col] = Some((s.value, roll.diverged_at.is_some()));
            }
        }
    }
    Ok(out)
}

/// Runs `trials` independent closed loops per backend and averages the
/// adversary's relative rollout error under each noise setting.
pub fn run_attack(scenario: &BenchmarkScenario, ctrl: &PwaController, cfg: &AttackConfig) -> Result<AttackTable, AttackError> {
    let trials: Vec<TrialScores> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| run_trial(scenario, ctrl, cfg, t))
        .collect::<Result<_, _>>()?;
    let cols = cfg.backends.len();
    let mut rows = Vec::new();
    let mut scored = vec![usize::MAX; cols];
    let mut diverged = vec![0; cols];
    for (r, &kind) in NoiseKind::ALL.iter().enumerate() {
        let mut means = Vec::with_capacity(cols);
        for c in 0..cols {
            let mut sum = Neumaier::default();
            let mut count = 0;
            for trial in &trials {
                if let Some((s, div)) = trial[r][c] {
                    sum.add(s);
                    count += 1;
                    diverged[c] += div as usize;
                }
            }
            scored[c] = scored[c].min(count);
            means.push(if count == 0 { f64::NAN } else { sum.total() / count as f64 });
        }
        rows.push((kind, means));
    }
    Ok(AttackTable { backends: cfg.backends.clone(), rows, scored, diverged })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear_data(steps: usize) -> (DMatrix<f64>, Vec<DVector<f64>>, Vec<DVector<f64>>) {
        let a = DMatrix::from_row_slice(2, 2, &[0.9, 0.2, -0.1, 0.95]);
        let b = DMatrix::from_row_slice(2, 1, &[0.5, 1.0]);
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let mut xs = vec![DVector::from_vec(vec![1.0, -1.0])];
        let mut us = Vec::new();
        for _ in 0..steps {
            let u = DVector::from_vec(vec![rng.random_range(-1.0..1.0)]);
            xs.push(&a * xs.last().unwrap() + &b * &u);
            us.push(u);
        }
        let mut ab = DMatrix::zeros(2, 3);
        ab.view_mut((0, 0), (2, 2)).copy_from(&a);
        ab.view_mut((0, 2), (2, 1)).copy_from(&b);
        (ab, xs, us)
    }

    #[test]
    fn exact_data_recovers_dynamics() {
        let (ab, xs, us) = linear_data(40);
        let pred = fit_ls_predictor(&xs, &us).unwrap();
        assert!((&pred.theta - &ab).amax() <= 1e-8, "{}", pred.theta);
        assert!(!pred.rank_deficient);
        let roll = rollout(&pred, &xs[0], &us);
        assert!(confidentiality_score(&xs, &roll.states).unwrap().value < 1e-8);
    }

    #[test]
    fn constant_proxies_are_flagged() {
        let (_, xs, us) = linear_data(30);
        let flat = vec![DVector::from_vec(vec![1.0, 1.0]); xs.len()];
        let pred = fit_ls_predictor(&flat, &vec![DVector::from_vec(vec![0.0]); us.len()]).unwrap();
        assert!(pred.rank_deficient);
        let roll = rollout(&pred, &xs[0], &us);
        assert!(confidentiality_score(&xs, &roll.states).unwrap().value > 0.1);
    }

    #[test]
    fn too_few_samples() {
        let (_, xs, us) = linear_data(2);
        assert!(matches!(fit_ls_predictor(&xs, &us), Err(AttackError::TooFewSamples { needed: 4, got: 3 })));
    }

    #[test]
    fn rollout_identities() {
        let (ab, xs, us) = linear_data(10);
        let exact = LsPredictor { theta: ab, residual: 0.0, rank_deficient: false };
        let r = rollout(&exact, &xs[0], &us);
        for (a, b) in r.states.iter().zip(&xs) {
            assert!((a - b).amax() < 1e-12);
        }
        let zero = LsPredictor { theta: DMatrix::zeros(2, 3), residual: 0.0, rank_deficient: false };
        let r = rollout(&zero, &xs[0], &us);
        assert!(r.states[1..].iter().all(|s| s.amax() == 0.0));

        let blow = LsPredictor { theta: DMatrix::from_row_slice(2, 3, &[100.0, 0.0, 0.0, 0.0, 100.0, 0.0]), residual: 0.0, rank_deficient: false };
        let r = rollout(&blow, &xs[0], &us);
        assert_eq!(r.diverged_at, Some(3));
        assert_eq!(r.states.len(), us.len() + 1);
        assert!(r.states.iter().all(|s| s.norm() <= DIVERGENCE_NORM));
    }

    #[test]
    fn score_identities() {
        let truth: Vec<_> = (0..5).map(|k| DVector::from_vec(vec![k as f64 + 1.0, -2.0])).collect();
        assert_eq!(confidentiality_score(&truth, &truth).unwrap().value, 0.0);
        let doubled: Vec<_> = truth.iter().map(|x| x * 2.0).collect();
        assert!((confidentiality_score(&truth, &doubled).unwrap().value - 1.0).abs() < 1e-15);
        let zeros = vec![DVector::zeros(2); 4];
        assert!(matches!(confidentiality_score(&zeros, &zeros), Err(AttackError::Undefined)));
        let mut partial = truth.clone();
        partial[2] = DVector::zeros(2);
        let s = confidentiality_score(&partial, &truth).unwrap();
        assert_eq!((s.counted, s.skipped), (3, 1));
    }

    #[test]
    fn score_is_scale_invariant() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let truth: Vec<_> = (0..20).map(|_| DVector::from_fn(3, |_, _| rng.random_range(-2.0..2.0))).collect();
        let pred: Vec<_> = (0..20).map(|_| DVector::from_fn(3, |_, _| rng.random_range(-2.0..2.0))).collect();
        let base = confidentiality_score(&truth, &pred).unwrap().value;
        for c in [1e-3, 0.5, 7.0, 1e4] {
            let t: Vec<_> = truth.iter().map(|x| x * c).collect();
            let p: Vec<_> = pred.iter().map(|x| x * c).collect();
            assert!((confidentiality_score(&t, &p).unwrap().value - base).abs() <= 1e-12 * base);
        }
    }

    #[test]
    fn noise_only_touches_observations_at_expected_scale() {
        let obs: Vec<_> = (0..4000).map(|k| DVector::from_vec(vec![(k as f64).sin() * 3.0, 0.01])).collect();
        let rms = [(obs.iter().map(|v| v[0] * v[0]).sum::<f64>() / 4000.0).sqrt(), 0.01];
        let model = NoiseModel::default();
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let mut noisy = obs.clone();
        model.apply(NoiseKind::None, &mut noisy, &mut rng);
        assert_eq!(noisy, obs);
        model.apply(NoiseKind::Impulse, &mut noisy, &mut rng);
        for j in 0..2 {
            let hits: Vec<f64> = noisy.iter().zip(&obs).map(|(a, b)| a[j] - b[j]).filter(|d| *d != 0.0).collect();
            let rate = hits.len() as f64 / 4000.0;
            assert!((0.04..0.06).contains(&rate), "{rate}");
            assert!(hits.iter().all(|d| (d.abs() - 0.5 * rms[j]).abs() < 1e-9 * rms[j]));
        }
        let mut u = obs.clone();
        model.apply(NoiseKind::Uniform, &mut u, &mut rng);
        for j in 0..2 {
            assert!(u.iter().zip(&obs).all(|(a, b)| (a[j] - b[j]).abs() <= 0.02 * rms[j] * (1.0 + 1e-12)));
        }
        let mut g = obs.clone();
        model.apply(NoiseKind::Gaussian, &mut g, &mut rng);
        for j in 0..2 {
            let var = g.iter().zip(&obs).map(|(a, b)| (a[j] - b[j]).powi(2)).sum::<f64>() / 4000.0;
            let ratio = var.sqrt() / (0.01 * rms[j]);
            assert!((0.95..1.05).contains(&ratio), "{ratio}");
        }
    }

    #[test]
    fn compensated_sum_handles_cancellation() {
        let mut s = Neumaier::default();
        for v in [1e16, 1.0, -1e16, 1.0] {
            s.add(v);
        }
        assert_eq!(s.total(), 2.0);
    }

    #[test]
    fn log2_of_big_values() {
        use num_bigint::BigUint;
        assert_eq!(log2_big(&BigUint::from(1u32)), 0.0);
        assert!((log2_big(&(BigUint::from(3u32) << 200)) - (200.0 + 3f64.log2())).abs() < 1e-12);
    }
}
