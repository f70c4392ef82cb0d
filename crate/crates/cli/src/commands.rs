use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use nalgebra::DVector;
use qempc::attack::{run_attack, AttackConfig, NoiseModel};
use qempc::mpqp::{synthesize, PwaController};
use qempc::protocol::Backend;
use qempc::simulation::{fmt17, initial_state_for, run_closed_loop, BenchmarkScenario, ClosedLoop, Seeds};

use crate::config::{parse_sweep, Params, RunConfig};
use crate::CliError;

/// A config file merged with command-line overrides.
pub struct Context {
    pub cfg: RunConfig,
    pub out: PathBuf,
    pub backend: Option<Backend>,
}

impl Context {
    fn scenario(&self) -> Result<BenchmarkScenario, CliError> {
        match &self.cfg.scenario {
            None => Ok(BenchmarkScenario::double_integrator()),
            Some(path) => {
                let text = read(path)?;
                BenchmarkScenario::from_json(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
            }
        }
    }

    fn controller_path(&self) -> PathBuf {
        self.cfg.controller.clone().unwrap_or_else(|| self.out.join("controller.json"))
    }

    fn controller(&self, scenario: &BenchmarkScenario) -> Result<PwaController, CliError> {
        let path = self.controller_path();
        if !path.exists() {
            return Err(CliError::Config(format!(
                "controller {} not found; run `qempc synthesize` first",
                path.display()
            )));
        }
        let ctrl = PwaController::from_json(&read(&path)?)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if ctrl.n != scenario.system.n() || ctrl.m != scenario.system.m() {
            return Err(CliError::Config(format!(
                "controller is {}x{} but the scenario plant has n = {}, m = {}",
                ctrl.m,
                ctrl.n,
                scenario.system.n(),
                scenario.system.m()
            )));
        }
        Ok(ctrl)
    }

    fn backend_or(&self, default: Backend) -> Result<Backend, CliError> {
        if let Some(b) = self.backend {
            return Ok(b);
        }
        match &self.cfg.backend {
            Some(name) => name.parse().map_err(CliError::Config),
            None => Ok(default),
        }
    }

    fn initial_state(&self, scenario: &BenchmarkScenario, ctrl: &PwaController) -> Result<DVector<f64>, CliError> {
        match &self.cfg.x0 {
            Some(v) if v.len() != scenario.system.n() => Err(CliError::Config(format!(
                "x0 has {} entries, plant has {} states",
                v.len(),
                scenario.system.n()
            ))),
            Some(v) => Ok(DVector::from_column_slice(v)),
            None => initial_state_for(scenario, ctrl, self.cfg.seeds.initial).map_err(|e| CliError::Config(e.to_string())),
        }
    }

    fn seeds(&self) -> Seeds {
        Seeds { keys: self.cfg.seeds.keys, quant: self.cfg.seeds.quant }
    }

    fn output(&self, name: &str) -> Result<PathBuf, CliError> {
        fs::create_dir_all(&self.out)
            .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", self.out.display())))?;
        Ok(self.out.join(name))
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn summary(values: &mut [f64]) -> (f64, f64, f64) {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    (values[0], values[n / 2], values[n - 1])
}

pub fn synthesize_cmd(ctx: &Context) -> Result<(), CliError> {
    let scenario = ctx.scenario()?;
    let (_, ctrl, report) =
        synthesize(&scenario.system, &scenario.mpc).map_err(|e| CliError::Runtime(format!("synthesis failed: {e}")))?;
    let path = match &ctx.cfg.controller {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
            }
            p.clone()
        }
        None => ctx.output("controller.json")?,
    };
    write(&path, &ctrl.to_json())?;
    let mut radii: Vec<f64> = ctrl.regions.iter().map(|r| r.poly.chebyshev_center().1).collect();
    let (lo, mid, hi) = summary(&mut radii);
    println!("scenario: {}", scenario.name);
    println!("regions: {}", ctrl.len());
    println!("candidates: {} (degenerate {}, empty {})", report.candidates, report.degenerate, report.empty);
    println!("chebyshev radius: min {lo:.6e} median {mid:.6e} max {hi:.6e}");
    println!("controller: {}", path.display());
    Ok(())
}

pub fn run_cmd(ctx: &Context) -> Result<(), CliError> {
    let scenario = ctx.scenario()?;
    let ctrl = ctx.controller(&scenario)?;
    let params = ctx.cfg.params.resolve()?;
    let backend = ctx.backend_or(Backend::Qe)?;
    let x0 = ctx.initial_state(&scenario, &ctrl)?;
    let steps = ctx.cfg.steps.unwrap_or(scenario.steps);
    let protocol = params.protocol(backend, scenario.system.n(), scenario.system.m());
    let run = run_closed_loop(&scenario, &ctrl, &protocol, ctx.seeds(), &x0, steps)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let path = ctx.output("trajectory.csv")?;
    let traj = &run.trajectory;
    write(&path, &traj.to_csv())?;
    let (mean, max) = if traj.records.is_empty() { (f64::NAN, f64::NAN) } else { traj.input_mismatch() };
    let rmse = if traj.records.is_empty() { f64::NAN } else { traj.tracking_rmse() };
    let saturated: u64 = run.metrics.iter().map(|m| m.saturated).sum();
    println!(
        "backend={backend} steps={} rmse={} mismatch_mean={} mismatch_max={} saturated={saturated}",
        traj.records.len(),
        fmt17(rmse),
        fmt17(mean),
        fmt17(max)
    );
    println!("trajectory: {}", path.display());
    match &traj.fault {
        Some((k, msg)) => Err(CliError::Runtime(format!("fault at step {k}: {msg}"))),
        None => Ok(()),
    }
}

const METRICS_HEADER: [&str; 30] = [
    "backend", "w_b", "w", "p", "rho", "gamma", "delta", "L", "epsilon_q", "steps", "fault", "rmse", "mismatch_mean",
    "mismatch_max", "s2c_bits", "c2a_bits", "model_s2c_bits", "model_c2a_bits", "enc", "con", "dec", "sums", "he_enc",
    "he_mul", "he_add", "he_dec", "b_k", "c_he", "c_qe", "saturated",
];
const TIMING_HEADER: [&str; 14] = [
    "backend", "w_b", "w", "p", "rho", "gamma", "delta", "L", "epsilon_q", "cycles", "sensor_us", "cloud_us",
    "actuator_us", "total_us",
];

fn param_cells(backend: Backend, p: &Params) -> Vec<String> {
    vec![
        backend.name().to_string(),
        p.w_b.to_string(),
        p.w.to_string(),
        p.p.to_string(),
        p.rho.to_string(),
        p.gamma.to_string(),
        p.delta.to_string(),
        p.l.to_string(),
        p.epsilon_q.map(fmt17).unwrap_or_default(),
    ]
}

fn mean_us(run: &ClosedLoop, part: impl Fn(&qempc::protocol::PartyTimes) -> Duration) -> String {
    let cycles = run.metrics.len().max(1) as f64;
    let total: f64 = run.metrics.iter().map(|m| part(&m.wall).as_secs_f64()).sum();
    fmt17(total / cycles * 1e6)
}

fn metric_cells(run: &ClosedLoop) -> Vec<String> {
    let traj = &run.trajectory;
    let cycles = run.metrics.len();
    let (rmse, (mean, max)) = if cycles == 0 {
        (f64::NAN, (f64::NAN, f64::NAN))
    } else {
        (traj.tracking_rmse(), traj.input_mismatch())
    };
    let avg = |f: &dyn Fn(&qempc::protocol::CycleMetrics) -> u64| {
        if cycles == 0 {
            f64::NAN
        } else {
            run.metrics.iter().map(f).sum::<u64>() as f64 / cycles as f64
        }
    };
    let first = run.metrics.first();
    let count = |f: &dyn Fn(&qempc::protocol::PrimitiveCounts) -> u64| first.map_or(0, |m| f(&m.counts)).to_string();
    let worst = run.metrics.iter().max_by_key(|m| m.b_k);
    vec![
        cycles.to_string(),
        traj.fault.as_ref().map(|(k, _)| k.to_string()).unwrap_or_default(),
        fmt17(rmse),
        fmt17(mean),
        fmt17(max),
        fmt17(avg(&|m| m.payload.s2c)),
        fmt17(avg(&|m| m.payload.c2a)),
        first.map_or(0, |m| m.model_payload.s2c).to_string(),
        first.map_or(0, |m| m.model_payload.c2a).to_string(),
        count(&|c| c.enc),
        count(&|c| c.con),
        count(&|c| c.dec),
        count(&|c| c.sums),
        count(&|c| c.he_enc),
        count(&|c| c.he_mul),
        count(&|c| c.he_add),
        count(&|c| c.he_dec),
        worst.map_or(0, |m| m.b_k).to_string(),
        worst.map_or(0, |m| m.model_cost.c_he).to_string(),
        worst.map_or(0, |m| m.model_cost.c_qe).to_string(),
        run.metrics.iter().map(|m| m.saturated).sum::<u64>().to_string(),
    ]
}

pub fn bench_cmd(ctx: &Context, sweep: Option<&str>) -> Result<(), CliError> {
    let scenario = ctx.scenario()?;
    let ctrl = ctx.controller(&scenario)?;
    let x0 = ctx.initial_state(&scenario, &ctrl)?;
    let steps = ctx.cfg.steps.unwrap_or(scenario.steps);
    let backends: Vec<Backend> = match ctx.backend.or(ctx.cfg.backend.as_deref().map(str::parse).transpose().map_err(CliError::Config)?) {
        Some(b) => vec![b],
        None => Backend::ALL.to_vec(),
    };
    let points = parse_sweep(sweep.unwrap_or(""))?;
    let mut metrics = csv::Writer::from_writer(Vec::new());
    let mut timing = csv::Writer::from_writer(Vec::new());
    metrics.write_record(METRICS_HEADER).map_err(csv_err)?;
    timing.write_record(TIMING_HEADER).map_err(csv_err)?;
    for point in &points {
        let mut pc = ctx.cfg.params.clone();
        for (k, v) in point {
            pc.set(k, v)?;
        }
        let params = pc.resolve()?;
        for &backend in &backends {
            let protocol = params.protocol(backend, scenario.system.n(), scenario.system.m());
            let run = run_closed_loop(&scenario, &ctrl, &protocol, ctx.seeds(), &x0, steps)
                .map_err(|e| CliError::Config(e.to_string()))?;
            let mut row = param_cells(backend, &params);
            row.extend(metric_cells(&run));
            metrics.write_record(&row).map_err(csv_err)?;
            let mut trow = param_cells(backend, &params);
            trow.push(run.metrics.len().to_string());
            trow.push(mean_us(&run, |t| t.sensor));
            trow.push(mean_us(&run, |t| t.cloud));
            trow.push(mean_us(&run, |t| t.actuator));
            trow.push(mean_us(&run, |t| t.total()));
            timing.write_record(&trow).map_err(csv_err)?;
            eprintln!("bench: {backend} {} done", point_label(point));
        }
    }
    let m_path = ctx.output("metrics.csv")?;
    let t_path = ctx.output("timing.csv")?;
    write(&m_path, &finish(metrics)?)?;
    write(&t_path, &finish(timing)?)?;
    println!("metrics: {}", m_path.display());
    println!("timing: {}", t_path.display());
    Ok(())
}

fn point_label(point: &[(String, String)]) -> String {
    if point.is_empty() {
        return "(defaults)".into();
    }
    point.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(" ")
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Runtime(format!("csv: {e}"))
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String, CliError> {
    let bytes = w.into_inner().map_err(|e| CliError::Runtime(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| CliError::Runtime(e.to_string()))
}

pub fn attack_cmd(ctx: &Context) -> Result<(), CliError> {
    let scenario = ctx.scenario()?;
    let ctrl = ctx.controller(&scenario)?;
    let params = ctx.cfg.params.resolve()?;
    let mut backends = vec![Backend::Plaintext];
    let requested: Vec<Backend> = match (&ctx.backend, &ctx.cfg.attack.backends) {
        (Some(b), _) => vec![*b],
        (None, Some(names)) => names.iter().map(|n| n.parse()).collect::<Result<_, _>>().map_err(CliError::Config)?,
        (None, None) => vec![Backend::Paillier, Backend::Qe],
    };
    for b in requested {
        if !backends.contains(&b) {
            backends.push(b);
        }
    }
    if ctx.cfg.attack.trials == 0 {
        return Err(CliError::Config("attack.trials must be at least 1".into()));
    }
    let seeds = &ctx.cfg.seeds;
    let cfg = AttackConfig {
        backends,
        trials: ctx.cfg.attack.trials,
        steps: ctx.cfg.attack.steps.or(ctx.cfg.steps).unwrap_or(scenario.steps),
        seed: seeds.attack,
        key_seed: seeds.keys,
        quant_seed: seeds.quant,
        noise: NoiseModel::default(),
        protocol: params.protocol(Backend::Plaintext, scenario.system.n(), scenario.system.m()),
    };
    let table = run_attack(&scenario, &ctrl, &cfg).map_err(|e| CliError::Runtime(e.to_string()))?;
    let path = ctx.output("attack.csv")?;
    let csv = table.to_csv();
    write(&path, &csv)?;
    print!("{csv}");
    println!("trials scored per backend: {:?}; diverged rollouts: {:?}", table.scored, table.diverged);
    println!("attack: {}", path.display());
    Ok(())
}
