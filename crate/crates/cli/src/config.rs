//! Run configuration file, flag overrides, and parameter resolution.

use std::path::{Path, PathBuf};

use qempc::protocol::{align_accuracy, Backend, PaillierParams, ProtocolConfig};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Scenario JSON; the built-in double integrator when absent.
    pub scenario: Option<PathBuf>,
    /// Controller JSON; `<out>/controller.json` when absent.
    pub controller: Option<PathBuf>,
    pub backend: Option<String>,
    pub seeds: SeedConfig,
    pub params: ParamConfig,
    /// Initial state; sampled from the state set with `seeds.initial` when absent.
    pub x0: Option<Vec<f64>>,
    /// Closed-loop length; the scenario's horizon when absent.
    pub steps: Option<usize>,
    pub out: Option<PathBuf>,
    pub attack: AttackSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SeedConfig {
    pub keys: u64,
    pub quant: u64,
    pub attack: u64,
    pub initial: u64,
}

impl Default for SeedConfig {
    fn default() -> Self {
        Self { keys: 1, quant: 2, attack: 3, initial: 0 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParamConfig {
    pub w_b: Option<u32>,
    pub w: Option<u32>,
    pub p: Option<u32>,
    pub rho: Option<u32>,
    pub gamma: Option<u32>,
    pub delta: Option<u32>,
    #[serde(rename = "L")]
    pub l: Option<usize>,
    pub epsilon_q: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttackSection {
    pub trials: usize,
    pub steps: Option<usize>,
    pub backends: Option<Vec<String>>,
}

impl Default for AttackSection {
    fn default() -> Self {
        Self { trials: 200, steps: None, backends: None }
    }
}

/// Fully resolved numeric parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Params {
    pub w_b: u32,
    pub w: u32,
    pub p: u32,
    pub rho: u32,
    pub gamma: u32,
    pub delta: u32,
    pub l: usize,
    pub epsilon_q: Option<f64>,
}

impl ParamConfig {
    /// Fills defaults, deriving `(δ, w, p)` from `ε_q` when it is set and
    /// rejecting explicit values that miss the target.
    pub fn resolve(&self) -> Result<Params, CliError> {
        let cfg = |msg: String| CliError::Config(msg);
        let rho = self.rho.unwrap_or(2);
        let (delta, w, p) = match self.epsilon_q {
            Some(eps) => {
                let acc = align_accuracy(eps, rho).map_err(cfg)?;
                let delta = self.delta.unwrap_or(acc.delta);
                let w = self.w.unwrap_or(acc.w);
                let p = self.p.unwrap_or(64.max(acc.p_min));
                if delta < acc.delta {
                    return Err(cfg(format!("delta = {delta} misses epsilon_q = {eps}: need delta >= {}", acc.delta)));
                }
                if w < acc.w {
                    return Err(cfg(format!("w = {w} misses epsilon_q = {eps}: need w >= {}", acc.w)));
                }
                (delta, w, p)
            }
            None => (self.delta.unwrap_or(20), self.w.unwrap_or(16), self.p.unwrap_or(64)),
        };
        if p < w {
            return Err(cfg(format!("p = {p} must be at least w = {w}")));
        }
        if !(1..=53).contains(&w) {
            return Err(cfg(format!("w = {w} must lie in 1..=53")));
        }
        let w_b = self.w_b.unwrap_or(16);
        if !(2..=32).contains(&w_b) {
            return Err(cfg(format!("w_b = {w_b} must lie in 2..=32")));
        }
        if rho < 2 {
            return Err(cfg(format!("rho = {rho} must be at least 2")));
        }
        Ok(Params {
            w_b,
            w,
            p,
            rho,
            gamma: self.gamma.unwrap_or(8),
            delta,
            l: self.l.unwrap_or(1024),
            epsilon_q: self.epsilon_q,
        })
    }

    /// Applies one `key=value` sweep assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let bad = || CliError::Config(format!("sweep value `{value}` is invalid for `{key}`"));
        let int = || value.parse::<u32>().map_err(|_| bad());
        match key {
            "w_b" => self.w_b = Some(int()?),
            "w" => self.w = Some(int()?),
            "p" => self.p = Some(int()?),
            "rho" => self.rho = Some(int()?),
            "gamma" => self.gamma = Some(int()?),
            "delta" => self.delta = Some(int()?),
            "L" => self.l = Some(value.parse().map_err(|_| bad())?),
            "epsilon_q" => self.epsilon_q = Some(value.parse().map_err(|_| bad())?),
            _ => return Err(CliError::Config(format!("unknown sweep key `{key}`"))),
        }
        Ok(())
    }
}

impl Params {
    pub fn protocol(&self, backend: Backend, n: usize, m: usize) -> ProtocolConfig {
        let mut c = ProtocolConfig::new(backend, n, m);
        c.group_bits = self.w_b;
        c.quant_bits = self.w;
        c.float_bits = self.p;
        c.paillier = PaillierParams { bits: self.l, rho: self.rho, gamma: self.gamma, delta: self.delta };
        c
    }
}

/// `key=v1,v2;key2=v3` expands to the Cartesian product of assignments, the
/// first key varying slowest.
pub fn parse_sweep(spec: &str) -> Result<Vec<Vec<(String, String)>>, CliError> {
    let mut axes: Vec<(String, Vec<String>)> = Vec::new();
    for part in spec.split(';').map(str::trim).filter(|p| !p.is_empty()) {
        let (key, values) = part
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("sweep term `{part}` lacks `=`")))?;
        let key = key.trim().to_string();
        let values: Vec<String> = values.split(',').map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect();
        if values.is_empty() {
            return Err(CliError::Config(format!("sweep key `{key}` has no values")));
        }
        if axes.iter().any(|(k, _)| *k == key) {
            return Err(CliError::Config(format!("sweep key `{key}` repeated")));
        }
        ParamConfig::default().set(&key, &values[0])?;
        axes.push((key, values));
    }
    let mut points = vec![Vec::new()];
    for (key, values) in &axes {
        points = points
            .into_iter()
            .flat_map(|p: Vec<(String, String)>| {
                values.iter().map(move |v| {
                    let mut q = p.clone();
                    q.push((key.clone(), v.clone()));
                    q
                })
            })
            .collect();
    }
    Ok(points)
}

/// Reads a config file. Relative paths inside it resolve against its directory.
pub fn load(path: Option<&Path>) -> Result<RunConfig, CliError> {
    let Some(path) = path else { return Ok(RunConfig::default()) };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    let mut cfg: RunConfig = serde_json::from_str(&text).map_err(|e| {
        CliError::Config(format!("{}: line {}, column {}: {e}", path.display(), e.line(), e.column()))
    })?;
    let base = path.parent().unwrap_or(Path::new(""));
    for p in [&mut cfg.scenario, &mut cfg.controller, &mut cfg.out].into_iter().flatten() {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    }
    Ok(cfg)
}
