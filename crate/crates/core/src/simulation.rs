//! Closed-loop simulation of the LTI plant under a chosen backend.
//!
//! The controller is synthesized for regulation to the origin. A reference
//! `r` enters as a state-space shift: with `(x_ss, u_ss)` solving
//! `x_ss = A x_ss + B u_ss`, `C x_ss = r`, the region is located at
//! `x − x_ss` and the applied law is `u = K(x − x_ss) + b + u_ss`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Deserialize;
use thiserror::Error;

use crate::lp;
use crate::mpqp::{LtiSystem, MpcSpec, Polyhedron, PwaController, SynthesisError, FEAS_TOL};
use crate::protocol::{CycleMetrics, EavesdropLog, ProtocolConfig, ProtocolError, Session};

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error("scenario: {0}")]
    Scenario(String),
    #[error("reference {0:?} has no steady state")]
    Reference(Vec<f64>),
    #[error("no feasible initial state found after {0} samples")]
    Sampling(usize),
    #[error(transparent)]
    Synthesis(#[from] SynthesisError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

/// `x⁺ = Ax + Bu`.
pub fn step_plant(sys: &LtiSystem, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
    &sys.a * x + &sys.b * u
}

pub fn output(sys: &LtiSystem, x: &DVector<f64>) -> DVector<f64> {
    &sys.c * x
}

/// Equilibrium pair for a constant output reference.
#[derive(Debug, Clone, PartialEq)]
pub struct Setpoint {
    pub r: DVector<f64>,
    pub x_ss: DVector<f64>,
    pub u_ss: DVector<f64>,
}

impl Setpoint {
    pub fn origin(sys: &LtiSystem) -> Self {
        Self { r: DVector::zeros(sys.p()), x_ss: DVector::zeros(sys.n()), u_ss: DVector::zeros(sys.m()) }
    }

    pub fn solve(sys: &LtiSystem, r: &DVector<f64>) -> Result<Self, SimulationError> {
        let (n, m, p) = (sys.n(), sys.m(), sys.p());
        if r.iter().all(|&v| v == 0.0) {
            return Ok(Self::origin(sys));
        }
        let mut lhs = DMatrix::zeros(n + p, n + m);
        lhs.view_mut((0, 0), (n, n)).copy_from(&(&sys.a - DMatrix::identity(n, n)));
        lhs.view_mut((0, n), (n, m)).copy_from(&sys.b);
        lhs.view_mut((n, 0), (p, n)).copy_from(&sys.c);
        let mut rhs = DVector::zeros(n + p);
        rhs.rows_mut(n, p).copy_from(r);
        let sol = lhs
            .clone()
            .svd(true, true)
            .solve(&rhs, 1e-12)
            .map_err(|_| SimulationError::Reference(r.iter().copied().collect()))?;
        if (&lhs * &sol - &rhs).amax() > 1e-9 * (1.0 + r.amax()) {
            return Err(SimulationError::Reference(r.iter().copied().collect()));
        }
        Ok(Self { r: r.clone(), x_ss: sol.rows(0, n).into_owned(), u_ss: sol.rows(n, m).into_owned() })
    }

    pub fn deviation(&self, x: &DVector<f64>) -> DVector<f64> {
        x - &self.x_ss
    }
}

/// Piecewise-constant reference: `value` applies from step `from` onward.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ReferenceStep {
    pub from: usize,
    pub value: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkScenario {
    pub name: String,
    pub system: LtiSystem,
    pub mpc: MpcSpec,
    pub steps: usize,
    pub reference: Vec<ReferenceStep>,
}

impl BenchmarkScenario {
    /// Double integrator, `N = 5`, `|u| ≤ 1`, `|x_i| ≤ 5`, 60 steps, setpoint
    /// `2` then `−1` from step 30.
    pub fn double_integrator() -> Self {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.5, 1.0]);
        let c = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let q = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.1]));
        let mpc = MpcSpec {
            horizon: 5,
            q: q.clone(),
            r: DMatrix::from_element(1, 1, 0.5),
            p_term: q,
            state_set: Polyhedron::symmetric_box(&[5.0, 5.0]),
            input_set: Polyhedron::symmetric_box(&[1.0]),
            terminal_set: Polyhedron::symmetric_box(&[5.0, 5.0]),
        };
        Self {
            name: "double_integrator".into(),
            system: LtiSystem::new(a, b, c).expect("valid plant"),
            mpc,
            steps: 60,
            reference: vec![ReferenceStep { from: 0, value: vec![2.0] }, ReferenceStep { from: 30, value: vec![-1.0] }],
        }
    }

    pub fn with_zero_reference(mut self) -> Self {
        self.reference = vec![ReferenceStep { from: 0, value: vec![0.0; self.system.p()] }];
        self
    }

    pub fn reference_at(&self, k: usize) -> DVector<f64> {
        self.reference
            .iter()
            .filter(|s| s.from <= k)
            .max_by_key(|s| s.from)
            .map(|s| DVector::from_column_slice(&s.value))
            .unwrap_or_else(|| DVector::zeros(self.system.p()))
    }

    pub fn validate(&self) -> Result<(), SimulationError> {
        self.system.validate()?;
        self.mpc.validate(&self.system)?;
        if self.steps == 0 {
            return Err(SimulationError::Scenario("steps must be positive".into()));
        }
        for s in &self.reference {
            if s.value.len() != self.system.p() {
                return Err(SimulationError::Scenario(format!(
                    "reference at step {} has {} entries, plant has {} outputs",
                    s.from,
                    s.value.len(),
                    self.system.p()
                )));
            }
            Setpoint::solve(&self.system, &DVector::from_column_slice(&s.value))?;
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, SimulationError> {
        let doc: ScenarioDoc = serde_json::from_str(text).map_err(|e| {
            SimulationError::Scenario(format!("line {}, column {}: {e}", e.line(), e.column()))
        })?;
        let s = doc.into_scenario()?;
        s.validate()?;
        Ok(s)
    }

    /// Rejection-samples `x(0)` uniformly from the bounding box of the state
    /// set until it lies in the set and its deviation is locatable.
    pub fn sample_initial_state<R: Rng + ?Sized>(
        &self,
        ctrl: &PwaController,
        rng: &mut R,
    ) -> Result<DVector<f64>, SimulationError> {
        const MAX_TRIES: usize = 100_000;
        let set = &self.mpc.state_set;
        let (lo, hi) = bounding_box(set)?;
        let sp = Setpoint::solve(&self.system, &self.reference_at(0))?;
        for _ in 0..MAX_TRIES {
            let x = DVector::from_fn(set.dim(), |i, _| rng.random_range(lo[i]..=hi[i]));
            if set.contains(&x, FEAS_TOL) && ctrl.locate(&sp.deviation(&x)).is_ok() {
                return Ok(x);
            }
        }
        Err(SimulationError::Sampling(MAX_TRIES))
    }
}

fn bounding_box(set: &Polyhedron) -> Result<(Vec<f64>, Vec<f64>), SimulationError> {
    let n = set.dim();
    let mut lo = vec![0.0; n];
    let mut hi = vec![0.0; n];
    for i in 0..n {
        let mut e = DVector::zeros(n);
        e[i] = 1.0;
        let upper = lp::maximize(&e, &set.a, &set.b);
        let lower = lp::maximize(&(-&e), &set.a, &set.b);
        match (upper.optimal(), lower.optimal()) {
            (Some((_, u)), Some((_, l))) => {
                hi[i] = u;
                lo[i] = -l;
            }
            _ => return Err(SimulationError::Scenario("state set must be bounded and nonempty".into())),
        }
    }
    Ok((lo, hi))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioDoc {
    name: String,
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    c: Vec<Vec<f64>>,
    horizon: usize,
    q: Vec<Vec<f64>>,
    r: Vec<Vec<f64>>,
    p_term: Vec<Vec<f64>>,
    state_set: Option<SetDoc>,
    input_set: Option<SetDoc>,
    terminal_set: Option<SetDoc>,
    #[serde(default = "default_steps")]
    steps: usize,
    #[serde(default)]
    reference: Vec<ReferenceStep>,
}

fn default_steps() -> usize {
    60
}

#[derive(Deserialize)]
#[serde(untagged, deny_unknown_fields)]
enum SetDoc {
    Box { lower: Vec<f64>, upper: Vec<f64> },
    Halfspaces { a: Vec<Vec<f64>>, b: Vec<f64> },
}

fn matrix(name: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>, SimulationError> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
        return Err(SimulationError::Scenario(format!("matrix `{name}` must be a nonempty rectangular array")));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

impl SetDoc {
    fn into_poly(self, name: &str, dim: usize) -> Result<Polyhedron, SimulationError> {
        let poly = match self {
            SetDoc::Box { lower, upper } => {
                if lower.len() != upper.len() || lower.iter().zip(&upper).any(|(l, u)| l > u) {
                    return Err(SimulationError::Scenario(format!("`{name}` bounds are inconsistent")));
                }
                Polyhedron::from_bounds(&lower, &upper)
            }
            SetDoc::Halfspaces { a, b } => {
                let a = matrix(name, &a)?;
                if a.nrows() != b.len() {
                    return Err(SimulationError::Scenario(format!("`{name}` has mismatched a/b rows")));
                }
                Polyhedron::new(a, DVector::from_vec(b))
            }
        };
        if poly.dim() != dim {
            return Err(SimulationError::Scenario(format!("`{name}` has dimension {}, expected {dim}", poly.dim())));
        }
        Ok(poly)
    }
}

impl ScenarioDoc {
    fn into_scenario(self) -> Result<BenchmarkScenario, SimulationError> {
        let system = LtiSystem::new(matrix("a", &self.a)?, matrix("b", &self.b)?, matrix("c", &self.c)?)?;
        let (n, m) = (system.n(), system.m());
        let set = |doc: Option<SetDoc>, name: &str, dim: usize| match doc {
            Some(d) => d.into_poly(name, dim),
            None => Ok(Polyhedron::universe(dim)),
        };
        let mpc = MpcSpec {
            horizon: self.horizon,
            q: matrix("q", &self.q)?,
            r: matrix("r", &self.r)?,
            p_term: matrix("p_term", &self.p_term)?,
            state_set: set(self.state_set, "state_set", n)?,
            input_set: set(self.input_set, "input_set", m)?,
            terminal_set: set(self.terminal_set, "terminal_set", n)?,
        };
        let reference = if self.reference.is_empty() {
            vec![ReferenceStep { from: 0, value: vec![0.0; system.p()] }]
        } else {
            self.reference
        };
        Ok(BenchmarkScenario { name: self.name, system, mpc, steps: self.steps, reference })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub k: usize,
    pub x: Vec<f64>,
    pub sigma: usize,
    pub u: Vec<f64>,
    pub u_plain: Vec<f64>,
    pub y: Vec<f64>,
    pub r: Vec<f64>,
    pub s2c_bits: u64,
    pub c2a_bits: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub records: Vec<StepRecord>,
    /// Final state after the last applied input.
    pub final_state: Vec<f64>,
    /// Set when the loop stopped early.
    pub fault: Option<(usize, String)>,
}

/// 17 significant digits; parses back to the same double.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

impl Trajectory {
    pub fn csv_header(&self) -> String {
        let mut cols = vec!["k".to_string()];
        cols.extend((1..=self.n).map(|i| format!("x{i}")));
        cols.push("sigma".into());
        cols.extend((1..=self.m).map(|i| format!("u{i}")));
        cols.extend((1..=self.m).map(|i| format!("u_plain{i}")));
        cols.extend((1..=self.p).map(|i| format!("y{i}")));
        cols.extend((1..=self.p).map(|i| format!("r{i}")));
        cols.extend(["s2c_bits", "c2a_bits", "fault"].map(String::from));
        cols.join(",")
    }

    /// Fixed-header CSV. A fault adds a final row with only `k` and `fault`.
    pub fn to_csv(&self) -> String {
        let mut out = self.csv_header();
        out.push('\n');
        for rec in &self.records {
            let mut cells = vec![rec.k.to_string()];
            cells.extend(rec.x.iter().map(|&v| fmt17(v)));
            cells.push(rec.sigma.to_string());
            cells.extend(rec.u.iter().map(|&v| fmt17(v)));
            cells.extend(rec.u_plain.iter().map(|&v| fmt17(v)));
            cells.extend(rec.y.iter().map(|&v| fmt17(v)));
            cells.extend(rec.r.iter().map(|&v| fmt17(v)));
            cells.push(rec.s2c_bits.to_string());
            cells.push(rec.c2a_bits.to_string());
            cells.push(String::new());
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        if let Some((k, msg)) = &self.fault {
            let blanks = self.n + 1 + 2 * self.m + 2 * self.p + 2;
            let quoted = format!("\"{}\"", msg.replace('"', "\"\""));
            out.push_str(&format!("{k}{}{quoted}\n", ",".repeat(blanks + 1)));
        }
        out
    }

    /// Mean over steps of `‖u_backend − u_plain‖_∞`, and the maximum.
    pub fn input_mismatch(&self) -> (f64, f64) {
        if self.records.is_empty() {
            return (0.0, 0.0);
        }
        let per_step: Vec<f64> = self
            .records
            .iter()
            .map(|r| r.u.iter().zip(&r.u_plain).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .collect();
        let max = per_step.iter().cloned().fold(0.0, f64::max);
        (per_step.iter().sum::<f64>() / per_step.len() as f64, max)
    }

    /// `sqrt(mean_k ‖y(k) − r(k)‖²)`.
    pub fn tracking_rmse(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        let sq: f64 = self
            .records
            .iter()
            .map(|r| r.y.iter().zip(&r.r).map(|(y, t)| (y - t) * (y - t)).sum::<f64>())
            .sum();
        (sq / self.records.len() as f64).sqrt()
    }

    pub fn states(&self) -> Vec<DVector<f64>> {
        let mut xs: Vec<DVector<f64>> = self.records.iter().map(|r| DVector::from_column_slice(&r.x)).collect();
        if !self.final_state.is_empty() {
            xs.push(DVector::from_column_slice(&self.final_state));
        }
        xs
    }

    pub fn inputs(&self) -> Vec<DVector<f64>> {
        self.records.iter().map(|r| DVector::from_column_slice(&r.u)).collect()
    }
}

pub fn tracking_rmse(traj: &Trajectory) -> f64 {
    traj.tracking_rmse()
}

pub fn input_mismatch(traj: &Trajectory) -> (f64, f64) {
    traj.input_mismatch()
}

/// Seeds for every randomized component of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Seeds {
    pub keys: u64,
    pub quant: u64,
}

/// Result of a closed-loop run: the trajectory, per-cycle metrics, and the
/// eavesdropper's copy of every message.
#[derive(Debug, Clone)]
pub struct ClosedLoop {
    pub trajectory: Trajectory,
    pub metrics: Vec<CycleMetrics>,
    pub log: EavesdropLog,
}

pub fn run_closed_loop(
    scenario: &BenchmarkScenario,
    ctrl: &PwaController,
    config: &ProtocolConfig,
    seeds: Seeds,
    x0: &DVector<f64>,
    steps: usize,
) -> Result<ClosedLoop, SimulationError> {
    let sys = &scenario.system;
    let mut session = Session::new(ctrl, config, seeds.keys, seeds.quant)?;
    let mut traj = Trajectory { n: sys.n(), m: sys.m(), p: sys.p(), ..Default::default() };
    let mut metrics = Vec::with_capacity(steps);
    let mut x = x0.clone();
    let mut setpoint: Option<Setpoint> = None;
    for k in 0..steps {
        let r = scenario.reference_at(k);
        if setpoint.as_ref().map_or(true, |s| s.r != r) {
            setpoint = Some(Setpoint::solve(sys, &r)?);
        }
        let sp = setpoint.as_ref().expect("set above");
        let dev = sp.deviation(&x);
        let (sigma, u_dev) = match ctrl.control(&dev) {
            Ok(v) => v,
            Err(e) => {
                traj.fault = Some((k, e.to_string()));
                break;
            }
        };
        let u_plain = u_dev + &sp.u_ss;
        let (u, m) = match session.run_cycle(k as u64, &x, sp) {
            Ok(v) => v,
            Err(e) => {
                traj.fault = Some((k, e.to_string()));
                break;
            }
        };
        traj.records.push(StepRecord {
            k,
            x: x.iter().copied().collect(),
            sigma,
            u: u.iter().copied().collect(),
            u_plain: u_plain.iter().copied().collect(),
            y: output(sys, &x).iter().copied().collect(),
            r: r.iter().copied().collect(),
            s2c_bits: m.payload.s2c,
            c2a_bits: m.payload.c2a,
        });
        metrics.push(m);
        x = step_plant(sys, &x, &u);
    }
    if traj.fault.is_none() {
        traj.final_state = x.iter().copied().collect();
    }
    Ok(ClosedLoop { trajectory: traj, metrics, log: session.into_log() })
}

/// Deterministic initial state for a trial index.
pub fn initial_state_for(
    scenario: &BenchmarkScenario,
    ctrl: &PwaController,
    seed: u64,
) -> Result<DVector<f64>, SimulationError> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    scenario.sample_initial_state(ctrl, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::Backend;

    #[test]
    fn plant_step_examples() {
        let sys = BenchmarkScenario::double_integrator().system;
        let x = DVector::from_vec(vec![0.0, 1.0]);
        let u = DVector::from_vec(vec![0.0]);
        assert_eq!(step_plant(&sys, &x, &u), DVector::from_vec(vec![1.0, 1.0]));
        assert_eq!(output(&sys, &x)[0], 0.0);

        let id = LtiSystem::new(DMatrix::identity(2, 2), sys.b.clone(), sys.c.clone()).unwrap();
        let x = DVector::from_vec(vec![0.3, -2.0]);
        assert_eq!(step_plant(&id, &x, &u), x);

        let (x1, x2) = (DVector::from_vec(vec![1.5, -0.25]), DVector::from_vec(vec![-3.0, 0.75]));
        let (u1, u2) = (DVector::from_vec(vec![0.5]), DVector::from_vec(vec![-0.125]));
        let lhs = step_plant(&sys, &(&x1 + &x2), &(&u1 + &u2));
        let rhs = step_plant(&sys, &x1, &u1) + step_plant(&sys, &x2, &u2)
            - step_plant(&sys, &DVector::zeros(2), &DVector::zeros(1));
        assert!((lhs - rhs).amax() < 1e-15);
    }

    #[test]
    fn setpoint_of_double_integrator() {
        let sys = BenchmarkScenario::double_integrator().system;
        let sp = Setpoint::solve(&sys, &DVector::from_vec(vec![2.0])).unwrap();
        assert!((sp.x_ss.clone() - DVector::from_vec(vec![2.0, 0.0])).amax() < 1e-12);
        assert!(sp.u_ss.amax() < 1e-12);
        // x⁺ = 0.9x + u has x_ss = 10 u_ss
        let leaky = LtiSystem::new(
            DMatrix::from_element(1, 1, 0.9),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
        )
        .unwrap();
        let sp = Setpoint::solve(&leaky, &DVector::from_vec(vec![1.0])).unwrap();
        assert!((sp.u_ss[0] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn reference_schedule() {
        let s = BenchmarkScenario::double_integrator();
        assert_eq!(s.reference_at(0)[0], 2.0);
        assert_eq!(s.reference_at(29)[0], 2.0);
        assert_eq!(s.reference_at(30)[0], -1.0);
        assert_eq!(s.reference_at(59)[0], -1.0);
    }

    fn simple_traj(rows: &[(f64, f64, f64, f64)]) -> Trajectory {
        Trajectory {
            n: 1,
            m: 1,
            p: 1,
            records: rows
                .iter()
                .enumerate()
                .map(|(k, &(u, up, y, r))| StepRecord {
                    k,
                    x: vec![y],
                    sigma: 0,
                    u: vec![u],
                    u_plain: vec![up],
                    y: vec![y],
                    r: vec![r],
                    s2c_bits: 0,
                    c2a_bits: 0,
                })
                .collect(),
            final_state: vec![0.0],
            fault: None,
        }
    }

    #[test]
    fn metrics_identities() {
        let t = simple_traj(&[(0.5, 0.5, 1.0, 1.0), (-0.25, -0.25, 2.0, 2.0)]);
        assert_eq!(t.input_mismatch(), (0.0, 0.0));
        assert_eq!(t.tracking_rmse(), 0.0);
        let t = simple_traj(&[(1.0, 0.0, 3.0, 0.0), (0.0, 0.0, 0.0, 4.0)]);
        assert_eq!(t.input_mismatch(), (0.5, 1.0));
        assert!((t.tracking_rmse() - 12.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn csv_has_fixed_header_and_fault_row() {
        let mut t = simple_traj(&[(0.1, 0.1, 1.0, 1.0)]);
        t.fault = Some((1, "state not covered".into()));
        let csv = t.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "k,x1,sigma,u1,u_plain1,y1,r1,s2c_bits,c2a_bits,fault");
        let cols = lines[0].split(',').count();
        assert_eq!(lines[1].split(',').count(), cols);
        assert_eq!(lines[2].split(',').count(), cols);
        assert!(lines[2].starts_with("1,") && lines[2].ends_with("\"state not covered\""));
        assert_eq!(fmt17(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt17(0.1).parse::<f64>().unwrap(), 0.1);
    }

    #[test]
    fn scenario_json_roundtrip_of_benchmark() {
        let text = r#"{
            "name": "double_integrator",
            "a": [[1, 1], [0, 1]], "b": [[0.5], [1]], "c": [[1, 0]],
            "horizon": 5, "q": [[1, 0], [0, 0.1]], "r": [[0.5]], "p_term": [[1, 0], [0, 0.1]],
            "state_set": {"lower": [-5, -5], "upper": [5, 5]},
            "input_set": {"lower": [-1], "upper": [1]},
            "terminal_set": {"a": [[1, 0], [-1, 0], [0, 1], [0, -1]], "b": [5, 5, 5, 5]},
            "steps": 60,
            "reference": [{"from": 0, "value": [2]}, {"from": 30, "value": [-1]}]
        }"#;
        let s = BenchmarkScenario::from_json(text).unwrap();
        let d = BenchmarkScenario::double_integrator();
        assert_eq!(s.system, d.system);
        assert_eq!(s.mpc.q, d.mpc.q);
        assert_eq!(s.reference, d.reference);
        let x = DVector::from_vec(vec![4.9, -4.9]);
        assert!(s.mpc.terminal_set.contains(&x, 0.0) && d.mpc.terminal_set.contains(&x, 0.0));
    }

    #[test]
    fn scenario_json_errors_are_located() {
        let err = BenchmarkScenario::from_json("{\n  \"name\": 3\n}").unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
        let bad = r#"{"name":"x","a":[[1,2]],"b":[[1]],"c":[[1]],"horizon":1,"q":[[1]],"r":[[1]],"p_term":[[1]]}"#;
        assert!(BenchmarkScenario::from_json(bad).is_err());
    }

    #[test]
    fn origin_with_zero_reference_stays_put() {
        let s = BenchmarkScenario::double_integrator().with_zero_reference();
        let (_, ctrl, _) = crate::mpqp::synthesize(&s.system, &s.mpc).unwrap();
        let cfg = ProtocolConfig::new(Backend::Plaintext, 2, 1);
        let out = run_closed_loop(&s, &ctrl, &cfg, Seeds { keys: 1, quant: 2 }, &DVector::zeros(2), 5).unwrap();
        let sigma0 = ctrl.locate(&DVector::zeros(2)).unwrap();
        let b0 = ctrl.offset(sigma0).unwrap();
        assert_eq!(b0.amax(), 0.0);
        for rec in &out.trajectory.records {
            assert_eq!(rec.u, b0.iter().copied().collect::<Vec<_>>());
            assert_eq!(rec.x, vec![0.0, 0.0]);
        }
    }
}
