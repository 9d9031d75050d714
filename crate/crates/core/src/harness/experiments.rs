// SPDX-License-Identifier: Apache-2.0

//! Experiment drivers behind the CLI subcommands.

use super::config::{ConfigError, EnvPreset, ExperimentConfig};
use super::report::{
    CheckResult, EnvSummary, EvalPoint, HostTimingSummary, OracleReport, RunReport, SweepReport, SweepRow,
    ThroughputRow, ThroughputTable, TimingReport, TimingRow, REPORT_VERSION,
};
use crate::activation::{LutPair, LutParams};
use crate::datapath::{perceptron_fixed_cycles, throughput_kqps, Arch, CycleModel, StageCosts};
use crate::environments::{EnvSpec, Environment};
use crate::fixedpoint::QFormat;
use crate::neural::{
    feedforward, Backend, BackendKind, FixedBackend, FloatBackend, NetError, Network, Topology,
};
use crate::qlearning::{
    policy_agreement, tabular_sweep, value_iteration, Hyperparams, NeuralQ, QError, QTable,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::io::Write;
use std::time::Instant;
use thiserror::Error;

/// Convergence tolerance for every oracle solve.
pub const ORACLE_TOL: f64 = 1e-12;

/// Seed of the standard backend-agreement probe set.
pub const PROBE_SEED: u64 = 0x5052_4f42;

/// Pass bar for fixed-vs-float agreement at Q{32,16} with a 1024-entry LUT.
pub const AGREEMENT_BOUND: f64 = 1.0 / 256.0;

/// Sup-norm distance at which the tabular oracle check passes.
pub const TABULAR_TOL: f64 = 1e-3;

/// Sweep cap for the tabular convergence check.
pub const MAX_TABULAR_SWEEPS: usize = 100_000;

/// Mixed into `seed` for the exploration and reset stream.
const AGENT_STREAM: u64 = 0x00A6_E175_7EA3;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Q(#[from] QError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl HarnessError {
    /// Process exit code for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            _ => 1,
        }
    }
}

fn oracle_for(env: &Environment, gamma: f64) -> Result<QTable, HarnessError> {
    value_iteration(env, gamma, ORACLE_TOL).map_err(|e| match e {
        QError::NotEnumerable(n) => {
            ConfigError::Invalid(format!("oracle infeasible: {n} state-action pairs")).into()
        }
        other => other.into(),
    })
}

fn evaluate<B: Backend>(
    agent: &mut NeuralQ<B>,
    env: &Environment,
    oracle: &QTable,
    step: u64,
) -> Result<EvalPoint, HarnessError> {
    let mut greedy = vec![0; env.num_states()];
    let (mut sum, mut max, mut count) = (0.0, 0.0f64, 0usize);
    for s in env.non_terminal_states() {
        let q = agent.q_values(env, s)?;
        greedy[s] = crate::qlearning::greedy_action(&q)?;
        for (a, v) in q.iter().enumerate() {
            let d = (v - oracle.get(s, a)).abs();
            sum += d;
            max = max.max(d);
            count += 1;
        }
    }
    Ok(EvalPoint {
        step,
        policy_accuracy: policy_agreement(env, &greedy, oracle),
        mean_abs_q_error: if count == 0 { 0.0 } else { sum / count as f64 },
        max_abs_q_error: max,
        overflow_count: agent.backend.overflow_count(),
    })
}

struct TrainOutput {
    evals: Vec<EvalPoint>,
    overflow_count: u64,
    buffer_peaks: (usize, usize),
}

fn train_loop<B: Backend>(
    cfg: &ExperimentConfig,
    env: &Environment,
    oracle: &QTable,
    mut agent: NeuralQ<B>,
    mut trace: Option<&mut dyn Write>,
) -> Result<TrainOutput, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ AGENT_STREAM);
    let starts: Vec<usize> = env.non_terminal_states().collect();
    let schedule = cfg.epsilon_schedule();
    let mut evals = vec![evaluate(&mut agent, env, oracle, 0)?];
    let mut state = starts[rng.gen_range(0..starts.len())];
    let mut in_episode = 0u64;
    for k in 0..cfg.steps {
        agent.hyper.c_rate = cfg.c_rate_at(k);
        let rec = agent.step(env, state, schedule.at(k), &mut rng)?;
        if let Some(w) = trace.as_mut() {
            serde_json::to_writer(&mut **w, &rec)?;
            w.write_all(b"\n")?;
        }
        in_episode += 1;
        if rec.terminal || in_episode >= cfg.episode_len {
            state = starts[rng.gen_range(0..starts.len())];
            in_episode = 0;
        } else {
            state = rec.next_state;
        }
        let done = k + 1;
        if done % cfg.eval_every == 0 || done == cfg.steps {
            evals.push(evaluate(&mut agent, env, oracle, done)?);
        }
    }
    Ok(TrainOutput {
        evals,
        overflow_count: agent.backend.overflow_count(),
        buffer_peaks: agent.buffer_peaks(),
    })
}

fn float_backend(cfg: &ExperimentConfig) -> Result<FloatBackend, HarnessError> {
    Ok(if cfg.float_uses_lut {
        FloatBackend::with_luts(cfg.lut_params())?
    } else {
        FloatBackend::exact()
    })
}

fn train_with(
    cfg: &ExperimentConfig,
    env: &Environment,
    oracle: &QTable,
    trace: Option<&mut dyn Write>,
) -> Result<TrainOutput, HarnessError> {
    let net = Network::init(cfg.topology(env.input_width()), cfg.seed, cfg.init_scale)?;
    let hyper = cfg.hyperparams();
    match cfg.backend {
        BackendKind::Float => {
            let agent = NeuralQ::new(net, float_backend(cfg)?, hyper, cfg.rule);
            train_loop(cfg, env, oracle, agent, trace)
        }
        BackendKind::Fixed => {
            let mut fx = FixedBackend::new(cfg.qformat()?, cfg.lut_params())?;
            let fnet = net.convert(&mut fx);
            fx.reset_overflow_count();
            let agent = NeuralQ::new(fnet, fx, hyper, cfg.rule);
            train_loop(cfg, env, oracle, agent, trace)
        }
    }
}

pub fn env_summary(cfg: &ExperimentConfig, env: &Environment) -> EnvSummary {
    let spec = env.spec();
    EnvSummary {
        preset: cfg.env,
        states: env.num_states(),
        actions_per_state: env.actions_per_state(),
        state_dim: spec.state_dim,
        action_dim: spec.action_dim,
        input_width: env.input_width(),
        goal: env.layout().map(|l| l.goal),
        max_reward: env.max_reward(),
    }
}

/// Trains for `cfg.steps` updates, scoring against the oracle every `eval_every` steps.
/// When `trace` is set, every update is appended to it as one JSON line.
pub fn run_training(cfg: &ExperimentConfig, trace: Option<&mut dyn Write>) -> Result<RunReport, HarnessError> {
    cfg.validate()?;
    let env = cfg.build_env()?;
    let oracle = oracle_for(&env, cfg.gamma)?;
    let out = train_with(cfg, &env, &oracle, trace)?;
    let topology = cfg.topology(env.input_width());
    let throughput = cfg
        .cycle_model()
        .report(&topology, env.actions_per_state() as u64, out.overflow_count);
    let last = out.evals.last().expect("initial evaluation");
    Ok(RunReport {
        report_version: REPORT_VERSION,
        config: cfg.clone(),
        env: env_summary(cfg, &env),
        topology,
        final_policy_accuracy: last.policy_accuracy,
        best_policy_accuracy: out.evals.iter().map(|e| e.policy_accuracy).fold(0.0, f64::max),
        final_mean_abs_q_error: last.mean_abs_q_error,
        overflow_count: out.overflow_count,
        buffer_peaks: [out.buffer_peaks.0, out.buffer_peaks.1],
        throughput,
        evals: out.evals,
        host_timing: None,
    })
}

/// Table values the cycle model is compared against, in kQ/s, per
/// (arch, backend, preset) in table row order.
pub const REFERENCE_KQPS: [(Arch, BackendKind, EnvPreset, f64); 8] = [
    (Arch::Perceptron, BackendKind::Fixed, EnvPreset::Simple, 2340.0),
    (Arch::Perceptron, BackendKind::Float, EnvPreset::Simple, 290.0),
    (Arch::Perceptron, BackendKind::Fixed, EnvPreset::Complex, 530.0),
    (Arch::Perceptron, BackendKind::Float, EnvPreset::Complex, 10.0),
    (Arch::Mlp, BackendKind::Fixed, EnvPreset::Simple, 1060.0),
    (Arch::Mlp, BackendKind::Float, EnvPreset::Simple, 745.0),
    (Arch::Mlp, BackendKind::Fixed, EnvPreset::Complex, 247.0),
    (Arch::Mlp, BackendKind::Float, EnvPreset::Complex, 9.0),
];

/// Reference time of one fixed-point perceptron update in the simple preset, in microseconds.
pub const REFERENCE_FIXED_SIMPLE_US: f64 = 0.4;

fn preset_spec(p: EnvPreset) -> EnvSpec {
    match p {
        EnvPreset::Complex => EnvSpec::complex(),
        _ => EnvSpec::simple(),
    }
}

fn preset_topology(arch: Arch, spec: &EnvSpec, hidden: &[usize]) -> Topology {
    match arch {
        Arch::Perceptron => Topology::perceptron(spec.input_width()),
        Arch::Mlp => Topology::mlp(spec.input_width(), hidden.to_vec()),
    }
}

fn row_basis(arch: Arch, backend: BackendKind, preset: EnvPreset) -> &'static str {
    match (arch, backend, preset) {
        (_, BackendKind::Float, EnvPreset::Complex) => "excluded",
        (Arch::Perceptron, BackendKind::Fixed, _) => "closed_form",
        _ => "calibrated",
    }
}

/// The four-row table (Fixed Simple, Float Simple, Fixed Complex, Float
/// Complex) for each architecture. `costs` replaces the fixed-point stage
/// costs; float rows keep their per-architecture multiplier.
pub fn run_throughput_table(clock_hz: f64, costs: Option<StageCosts>, hidden: &[usize]) -> ThroughputTable {
    let mut rows = Vec::with_capacity(REFERENCE_KQPS.len());
    let mut models = Vec::new();
    for (arch, backend, preset, reference) in REFERENCE_KQPS {
        let mut model = CycleModel::new(arch, backend).with_clock(clock_hz);
        if let Some(c) = costs {
            let mult = model.costs.float_op_multiplier;
            model.costs = StageCosts {
                float_op_multiplier: if backend == BackendKind::Float { mult } else { 1.0 },
                ..c
            };
        }
        let spec = preset_spec(preset);
        let topo = preset_topology(arch, &spec, hidden);
        let cycles = model.cycles(&topo, spec.actions_per_state as u64);
        let kq = throughput_kqps(cycles, clock_hz);
        rows.push(ThroughputRow {
            arch,
            backend,
            env: preset,
            input_width: spec.input_width(),
            actions: spec.actions_per_state,
            cycles,
            kq_per_s: kq,
            reference_kq_per_s: reference,
            rel_error: (kq - reference) / reference,
            basis: row_basis(arch, backend, preset).to_string(),
            update_time_us: cycles as f64 / clock_hz * 1e6,
        });
        if !models.iter().any(|(a, b, _): &(Arch, BackendKind, StageCosts)| *a == arch && *b == backend) {
            models.push((arch, backend, model.costs));
        }
    }
    ThroughputTable {
        clock_hz,
        calibration: models
            .into_iter()
            .map(|(arch, backend, costs)| super::report::Calibration { arch, backend, costs })
            .collect(),
        rows,
    }
}

fn row(t: &ThroughputTable, arch: Arch, backend: BackendKind, env: EnvPreset) -> &ThroughputRow {
    t.rows
        .iter()
        .find(|r| r.arch == arch && r.backend == backend && r.env == env)
        .expect("every combination has a row")
}

/// Pass/fail checks on the cycle model at its defaults.
pub fn throughput_checks(t: &ThroughputTable) -> Vec<CheckResult> {
    let mut out = Vec::new();
    let mut rel = |name: &str, r: &ThroughputRow, tol: f64| {
        out.push(CheckResult::new(
            name,
            r.rel_error.abs() <= tol,
            format!(
                "{:.2} kQ/s vs {} kQ/s, error {:.3}% (limit {}%)",
                r.kq_per_s,
                r.reference_kq_per_s,
                100.0 * r.rel_error.abs(),
                100.0 * tol
            ),
        ));
    };
    rel(
        "perceptron_fixed_simple",
        row(t, Arch::Perceptron, BackendKind::Fixed, EnvPreset::Simple),
        0.005,
    );
    rel(
        "perceptron_fixed_complex",
        row(t, Arch::Perceptron, BackendKind::Fixed, EnvPreset::Complex),
        0.01,
    );
    rel("mlp_fixed_simple", row(t, Arch::Mlp, BackendKind::Fixed, EnvPreset::Simple), 0.10);
    rel("mlp_fixed_complex", row(t, Arch::Mlp, BackendKind::Fixed, EnvPreset::Complex), 0.10);
    let cycles = perceptron_fixed_cycles(9);
    let us = cycles as f64 / t.clock_hz * 1e6;
    out.push(CheckResult::new(
        "perceptron_cycle_formula",
        cycles == 64 && ((us - REFERENCE_FIXED_SIMPLE_US) / REFERENCE_FIXED_SIMPLE_US).abs() <= 0.10,
        format!("7A+1 at A=9 gives {cycles} cycles, {us:.4} us vs {REFERENCE_FIXED_SIMPLE_US} us"),
    ));
    out
}

/// One network and one input of a backend-agreement probe set.
#[derive(Debug, Clone)]
pub struct ProbePair {
    pub net: Network<f64>,
    pub input: Vec<f64>,
}

/// `n` seeded pairs cycling through `topologies`, with weights, biases and
/// inputs uniform in `[-1, 1]`.
pub fn probe_set(topologies: &[Topology], n: usize, seed: u64) -> Vec<ProbePair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let topo = topologies[i % topologies.len()].clone();
            let net = Network::init(topo, rng.gen(), 1.0).expect("probe topologies are valid");
            let input = (0..net.topology().input_dim).map(|_| rng.gen_range(-1.0..=1.0)).collect();
            ProbePair { net, input }
        })
        .collect()
}

/// The standard probe set: the perceptrons of both presets (input widths 6 and 20).
pub fn standard_probe_set(n: usize) -> Vec<ProbePair> {
    probe_set(
        &[
            Topology::perceptron(EnvSpec::simple().input_width()),
            Topology::perceptron(EnvSpec::complex().input_width()),
        ],
        n,
        PROBE_SEED,
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeStats {
    pub max_abs_dq: f64,
    pub mean_abs_dq: f64,
    pub overflow_count: u64,
}

/// Fixed-point Q against float Q over `pairs`.
pub fn probe_agreement(
    pairs: &[ProbePair],
    fmt: QFormat,
    lut: LutParams,
    float_uses_lut: bool,
) -> Result<ProbeStats, HarnessError> {
    let mut fx = FixedBackend::new(fmt, lut)?;
    let mut fl = if float_uses_lut {
        FloatBackend::with_luts(lut)?
    } else {
        FloatBackend::exact()
    };
    let (mut max, mut sum) = (0.0f64, 0.0);
    for p in pairs {
        let fnet = p.net.convert(&mut fx);
        let qf = feedforward(&fnet, &mut fx, &p.input)?.q();
        let qf = fx.to_f64(qf);
        let q = feedforward(&p.net, &mut fl, &p.input)?.q();
        let d = (qf - q).abs();
        max = max.max(d);
        sum += d;
    }
    Ok(ProbeStats {
        max_abs_dq: max,
        mean_abs_dq: sum / pairs.len().max(1) as f64,
        overflow_count: fx.overflow_count(),
    })
}

fn sweep_row(
    cfg: &ExperimentConfig,
    env: &Environment,
    oracle: &QTable,
    standard: &[ProbePair],
    topo_probe: &[ProbePair],
    (word_bits, frac_bits, lut_depth): (u32, u32, usize),
) -> SweepRow {
    let mut row = SweepRow {
        word_bits,
        frac_bits,
        lut_depth,
        status: "ok".to_string(),
        probe_max_abs_dq: None,
        probe_mean_abs_dq: None,
        topology_probe_max_abs_dq: None,
        probe_overflow_count: None,
        final_policy_accuracy: None,
        training_overflow_count: None,
    };
    let lut = LutParams {
        depth: lut_depth,
        ..cfg.lut_params()
    };
    let fmt = match QFormat::new(word_bits, frac_bits) {
        Ok(f) => f,
        Err(e) => {
            row.status = format!("invalid: {e}");
            return row;
        }
    };
    if let Err(e) = LutPair::fixed(lut, fmt) {
        row.status = format!("invalid: {e}");
        return row;
    }
    let mut run = || -> Result<(), HarnessError> {
        let s = probe_agreement(standard, fmt, lut, cfg.float_uses_lut)?;
        row.probe_max_abs_dq = Some(s.max_abs_dq);
        row.probe_mean_abs_dq = Some(s.mean_abs_dq);
        row.probe_overflow_count = Some(s.overflow_count);
        row.topology_probe_max_abs_dq = Some(probe_agreement(topo_probe, fmt, lut, cfg.float_uses_lut)?.max_abs_dq);
        let run_cfg = ExperimentConfig {
            backend: BackendKind::Fixed,
            word_bits,
            frac_bits,
            lut_depth,
            ..cfg.clone()
        };
        let out = train_with(&run_cfg, env, oracle, None)?;
        row.final_policy_accuracy = Some(out.evals.last().expect("initial evaluation").policy_accuracy);
        row.training_overflow_count = Some(out.overflow_count);
        Ok(())
    };
    if let Err(e) = run() {
        row.status = format!("error: {e}");
    }
    row
}

/// Fixed-vs-float agreement and fixed-point training accuracy over every
/// (word_bits, frac_bits, lut_depth) combination. Probe error is expected to
/// shrink as `frac_bits` grows; rows that break that are listed, not failed.
pub fn run_precision_sweep(cfg: &ExperimentConfig) -> Result<SweepReport, HarnessError> {
    cfg.validate()?;
    let env = cfg.build_env()?;
    let oracle = oracle_for(&env, cfg.gamma)?;
    let standard = standard_probe_set(cfg.probe_pairs);
    let topo_probe = probe_set(&[cfg.topology(env.input_width())], cfg.probe_pairs, PROBE_SEED);
    let mut combos = Vec::new();
    for &w in &cfg.sweep_word_bits {
        for &f in &cfg.sweep_frac_bits {
            for &d in &cfg.sweep_lut_depths {
                combos.push((w, f, d));
            }
        }
    }
    let rows: Vec<SweepRow> = combos
        .par_iter()
        .map(|&c| sweep_row(cfg, &env, &oracle, &standard, &topo_probe, c))
        .collect();

    let mut violations = Vec::new();
    for &w in &cfg.sweep_word_bits {
        for &d in &cfg.sweep_lut_depths {
            let mut series: Vec<&SweepRow> = rows
                .iter()
                .filter(|r| r.word_bits == w && r.lut_depth == d && r.probe_max_abs_dq.is_some())
                .collect();
            series.sort_by_key(|r| r.frac_bits);
            for pair in series.windows(2) {
                let (a, b) = (pair[0], pair[1]);
                if b.probe_max_abs_dq > a.probe_max_abs_dq {
                    violations.push(format!(
                        "word_bits {w}, depth {d}: max |dQ| rises from {:.3e} at frac_bits {} to {:.3e} at frac_bits {}",
                        a.probe_max_abs_dq.unwrap_or(0.0),
                        a.frac_bits,
                        b.probe_max_abs_dq.unwrap_or(0.0),
                        b.frac_bits
                    ));
                }
            }
        }
    }
    Ok(SweepReport {
        report_version: REPORT_VERSION,
        config: cfg.clone(),
        probe_pairs: cfg.probe_pairs,
        agreement_bound: AGREEMENT_BOUND,
        rows,
        monotonicity_violations: violations,
    })
}

/// Every row at 16 or more fractional bits and depth 1024 or more must meet the agreement bound.
pub fn sweep_checks(r: &SweepReport) -> Vec<CheckResult> {
    let mut out = Vec::new();
    for row in r
        .rows
        .iter()
        .filter(|row| row.frac_bits >= 16 && row.lut_depth >= 1024 && row.status == "ok")
    {
        let dq = row.probe_max_abs_dq.unwrap_or(f64::INFINITY);
        out.push(CheckResult::new(
            &format!("agreement_q{}_{}_depth{}", row.word_bits, row.frac_bits, row.lut_depth),
            dq <= AGREEMENT_BOUND,
            format!("max |dQ| {dq:.6e} (limit {AGREEMENT_BOUND:.6e})"),
        ));
    }
    if out.is_empty() {
        out.push(CheckResult::new(
            "agreement",
            false,
            "no sweep row at frac_bits >= 16 and lut_depth >= 1024".to_string(),
        ));
    }
    out
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// First `model name` line of /proc/cpuinfo, or `unknown`.
pub fn cpu_model() -> String {
    std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|s| {
            s.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split_once(':'))
                .map(|(_, v)| v.trim().to_string())
        })
        .unwrap_or_else(|| "unknown".to_string())
}

fn time_agent<B: Backend>(
    cfg: &ExperimentConfig,
    env: &Environment,
    mut agent: NeuralQ<B>,
) -> Result<Vec<f64>, HarnessError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ AGENT_STREAM);
    let starts: Vec<usize> = env.non_terminal_states().collect();
    let mut state = starts[0];
    let mut burst = |agent: &mut NeuralQ<B>, n: usize| -> Result<(), HarnessError> {
        for _ in 0..n {
            let rec = agent.step(env, state, cfg.eps_end, &mut rng)?;
            state = if rec.terminal {
                starts[rng.gen_range(0..starts.len())]
            } else {
                rec.next_state
            };
        }
        Ok(())
    };
    burst(&mut agent, cfg.timing_updates.min(100))?;
    let mut per_update = Vec::with_capacity(cfg.timing_trials);
    for _ in 0..cfg.timing_trials {
        let t0 = Instant::now();
        burst(&mut agent, cfg.timing_updates)?;
        per_update.push(t0.elapsed().as_secs_f64() * 1e6 / cfg.timing_updates as f64);
    }
    Ok(per_update)
}

fn host_row(
    cfg: &ExperimentConfig,
    env: &Environment,
    backend: BackendKind,
    cpu: &str,
) -> Result<TimingRow, HarnessError> {
    let net = Network::init(cfg.topology(env.input_width()), cfg.seed, cfg.init_scale)?;
    let hyper: Hyperparams = cfg.hyperparams();
    let mut samples = match backend {
        BackendKind::Float => time_agent(cfg, env, NeuralQ::new(net, float_backend(cfg)?, hyper, cfg.rule))?,
        BackendKind::Fixed => {
            let mut fx = FixedBackend::new(cfg.qformat()?, cfg.lut_params())?;
            let fnet = net.convert(&mut fx);
            time_agent(cfg, env, NeuralQ::new(fnet, fx, hyper, cfg.rule))?
        }
    };
    let min = samples.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(TimingRow {
        machine_class: "host_cpu_software".to_string(),
        backend,
        arch: cfg.arch,
        env: cfg.env,
        min_us: min,
        median_us: median(&mut samples),
        trials: cfg.timing_trials,
        updates_per_trial: cfg.timing_updates,
        machine: cpu.to_string(),
    })
}

/// Host wall-clock per Q-update for both software backends, next to the
/// cycle model's simulated accelerator time. The two are different machine
/// classes and are reported side by side only for shape.
pub fn run_host_timing(cfg: &ExperimentConfig) -> Result<TimingReport, HarnessError> {
    cfg.validate()?;
    let env = cfg.build_env()?;
    let cpu = cpu_model();
    let mut rows = Vec::new();
    for backend in [BackendKind::Float, BackendKind::Fixed] {
        rows.push(host_row(cfg, &env, backend, &cpu)?);
    }
    let topology = cfg.topology(env.input_width());
    for backend in [BackendKind::Fixed, BackendKind::Float] {
        let mut model = CycleModel::new(cfg.arch, backend).with_clock(cfg.clock_hz);
        if let Some(c) = cfg.stage_costs {
            model.costs = c;
        }
        let us = model.cycles(&topology, env.actions_per_state() as u64) as f64 / cfg.clock_hz * 1e6;
        rows.push(TimingRow {
            machine_class: "simulated_accelerator".to_string(),
            backend,
            arch: cfg.arch,
            env: cfg.env,
            min_us: us,
            median_us: us,
            trials: 1,
            updates_per_trial: 1,
            machine: format!("cycle model at {} MHz", cfg.clock_hz / 1e6),
        });
    }
    let reference_us = perceptron_fixed_cycles(EnvSpec::simple().actions_per_state as u64) as f64
        / cfg.clock_hz
        * 1e6;
    Ok(TimingReport {
        report_version: REPORT_VERSION,
        note: "host rows are software on a general-purpose CPU; accelerator rows are simulated \
               cycles divided by the clock; the machine classes are not comparable"
            .to_string(),
        reference_fixed_simple_perceptron_us: reference_us,
        rows,
    })
}

pub fn timing_checks(r: &TimingReport) -> Vec<CheckResult> {
    let us = r.reference_fixed_simple_perceptron_us;
    let err = (us - REFERENCE_FIXED_SIMPLE_US) / REFERENCE_FIXED_SIMPLE_US;
    vec![
        CheckResult::new(
            "simulated_fixed_simple_time",
            err.abs() <= 0.10,
            format!("{us:.4} us vs {REFERENCE_FIXED_SIMPLE_US} us, error {:.2}%", 100.0 * err.abs()),
        ),
        CheckResult::new(
            "host_trials",
            r.rows
                .iter()
                .filter(|row| row.machine_class == "host_cpu_software")
                .all(|row| row.trials >= 5 && row.min_us <= row.median_us),
            "at least 5 trials per host row".to_string(),
        ),
    ]
}

/// Adds host timing for both backends to a training report.
pub fn attach_host_timing(report: &mut RunReport) -> Result<(), HarnessError> {
    let t = run_host_timing(&report.config)?;
    let pick = |b: BackendKind| {
        t.rows
            .iter()
            .find(|r| r.machine_class == "host_cpu_software" && r.backend == b)
            .map(|r| r.median_us * 1000.0)
            .unwrap_or(f64::NAN)
    };
    report.host_timing = Some(HostTimingSummary {
        machine: cpu_model(),
        float_us_per_1000_updates: pick(BackendKind::Float),
        fixed_us_per_1000_updates: pick(BackendKind::Fixed),
    });
    Ok(())
}

/// Q* by value iteration, plus how many exhaustive tabular sweeps it takes
/// to come within [`TABULAR_TOL`] of it.
pub fn run_oracle(cfg: &ExperimentConfig) -> Result<OracleReport, HarnessError> {
    cfg.validate()?;
    let env = cfg.build_env()?;
    let q_star = oracle_for(&env, cfg.gamma)?;
    let hyper = cfg.hyperparams();
    let mut table = QTable::zeros(env.num_states(), env.actions_per_state());
    let mut sweeps = 0;
    let mut distance = table.max_abs_diff(&q_star);
    while distance > TABULAR_TOL && sweeps < MAX_TABULAR_SWEEPS {
        tabular_sweep(&mut table, &env, &hyper)?;
        sweeps += 1;
        distance = table.max_abs_diff(&q_star);
    }
    let optimal: Vec<Vec<usize>> = (0..env.num_states())
        .map(|s| {
            if env.is_terminal(s) {
                Vec::new()
            } else {
                q_star.optimal_actions(s, crate::qlearning::OPTIMAL_TIE_TOL)
            }
        })
        .collect();
    Ok(OracleReport {
        report_version: REPORT_VERSION,
        env: env_summary(cfg, &env),
        gamma: cfg.gamma,
        alpha: cfg.alpha,
        tabular_sweeps: sweeps,
        tabular_distance: distance,
        tabular_tol: TABULAR_TOL,
        q_star: (0..env.num_states()).map(|s| q_star.row(s).to_vec()).collect(),
        optimal_actions: optimal,
    })
}

pub fn oracle_checks(r: &OracleReport) -> Vec<CheckResult> {
    vec![CheckResult::new(
        "tabular_convergence",
        r.tabular_distance <= r.tabular_tol,
        format!(
            "sup-norm {:.3e} after {} sweeps (limit {:.0e})",
            r.tabular_distance, r.tabular_sweeps, r.tabular_tol
        ),
    )]
}

pub fn training_checks(r: &RunReport) -> Vec<CheckResult> {
    vec![CheckResult::new(
        "policy_accuracy",
        r.final_policy_accuracy >= r.config.check_min_accuracy,
        format!(
            "final accuracy {:.4} (need {:.4}) after {} steps",
            r.final_policy_accuracy, r.config.check_min_accuracy, r.config.steps
        ),
    )]
}
