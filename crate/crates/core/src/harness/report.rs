// SPDX-License-Identifier: Apache-2.0

//! Report types and their JSON / CSV / text renderings.

use super::config::{EnvPreset, ExperimentConfig};
use super::experiments::HarnessError;
use crate::datapath::{Arch, StageCosts, ThroughputReport};
use crate::neural::{BackendKind, Topology};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

pub const REPORT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSummary {
    pub preset: EnvPreset,
    pub states: usize,
    pub actions_per_state: usize,
    pub state_dim: usize,
    pub action_dim: usize,
    pub input_width: usize,
    pub goal: Option<usize>,
    pub max_reward: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub step: u64,
    pub policy_accuracy: f64,
    pub mean_abs_q_error: f64,
    pub max_abs_q_error: f64,
    pub overflow_count: u64,
}

/// Wall-clock on the host; never part of a determinism comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HostTimingSummary {
    pub machine: String,
    pub float_us_per_1000_updates: f64,
    pub fixed_us_per_1000_updates: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub report_version: u32,
    /// The resolved config; re-running from it reproduces this report.
    pub config: ExperimentConfig,
    pub env: EnvSummary,
    pub topology: Topology,
    pub final_policy_accuracy: f64,
    pub best_policy_accuracy: f64,
    pub final_mean_abs_q_error: f64,
    pub overflow_count: u64,
    /// Peak occupancy of the (current, next) Q-value buffers.
    pub buffer_peaks: [usize; 2],
    pub throughput: ThroughputReport,
    pub evals: Vec<EvalPoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub host_timing: Option<HostTimingSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThroughputRow {
    pub arch: Arch,
    pub backend: BackendKind,
    pub env: EnvPreset,
    pub input_width: usize,
    pub actions: usize,
    pub cycles: u64,
    pub kq_per_s: f64,
    pub reference_kq_per_s: f64,
    pub rel_error: f64,
    /// `closed_form`, `calibrated`, or `excluded` (the model cannot reach the reference).
    pub basis: String,
    pub update_time_us: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub arch: Arch,
    pub backend: BackendKind,
    pub costs: StageCosts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThroughputTable {
    pub clock_hz: f64,
    pub calibration: Vec<Calibration>,
    pub rows: Vec<ThroughputRow>,
}

impl ThroughputTable {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "clock {} MHz", self.clock_hz / 1e6);
        let _ = writeln!(
            s,
            "{:<11} {:<8} {:<8} {:>6} {:>7} {:>7} {:>10} {:>10} {:>8}  {}",
            "arch", "backend", "env", "width", "actions", "cycles", "kQ/s", "reference", "error%", "basis"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<11} {:<8} {:<8} {:>6} {:>7} {:>7} {:>10.2} {:>10.1} {:>8.2}  {}",
                r.arch.to_string(),
                r.backend.to_string(),
                preset_name(r.env),
                r.input_width,
                r.actions,
                r.cycles,
                r.kq_per_s,
                r.reference_kq_per_s,
                100.0 * r.rel_error,
                r.basis
            );
        }
        let _ = writeln!(s, "stage costs (cycles per layer unless noted):");
        for c in &self.calibration {
            let k = &c.costs;
            let _ = writeln!(
                s,
                "  {} {}: mac={} lut_lookup={} layer_handoff={} drain={}/action error_capture={} delta={}/hidden layer weight_update={} float_op_multiplier={}",
                c.arch, c.backend, k.mac, k.lut_lookup, k.layer_handoff, k.drain, k.error_capture, k.delta, k.weight_update, k.float_op_multiplier
            );
        }
        s
    }
}

pub fn preset_name(p: EnvPreset) -> &'static str {
    match p {
        EnvPreset::Simple => "simple",
        EnvPreset::Complex => "complex",
        EnvPreset::Chain => "chain",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub word_bits: u32,
    pub frac_bits: u32,
    pub lut_depth: usize,
    pub status: String,
    /// Over the standard probe set.
    pub probe_max_abs_dq: Option<f64>,
    pub probe_mean_abs_dq: Option<f64>,
    /// Over a probe set of the configured topology.
    pub topology_probe_max_abs_dq: Option<f64>,
    pub probe_overflow_count: Option<u64>,
    pub final_policy_accuracy: Option<f64>,
    pub training_overflow_count: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub report_version: u32,
    pub config: ExperimentConfig,
    pub probe_pairs: usize,
    pub agreement_bound: f64,
    pub rows: Vec<SweepRow>,
    pub monotonicity_violations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    /// `host_cpu_software` or `simulated_accelerator`.
    pub machine_class: String,
    pub backend: BackendKind,
    pub arch: Arch,
    pub env: EnvPreset,
    pub min_us: f64,
    pub median_us: f64,
    pub trials: usize,
    pub updates_per_trial: usize,
    pub machine: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub report_version: u32,
    pub note: String,
    pub reference_fixed_simple_perceptron_us: f64,
    pub rows: Vec<TimingRow>,
}

impl TimingReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{}", self.note);
        let _ = writeln!(
            s,
            "{:<22} {:<7} {:<11} {:<8} {:>12} {:>12} {:>7}  {}",
            "machine class", "backend", "arch", "env", "min us", "median us", "trials", "machine"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<22} {:<7} {:<11} {:<8} {:>12.4} {:>12.4} {:>7}  {}",
                r.machine_class,
                r.backend.to_string(),
                r.arch.to_string(),
                preset_name(r.env),
                r.min_us,
                r.median_us,
                r.trials,
                r.machine
            );
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub report_version: u32,
    pub env: EnvSummary,
    pub gamma: f64,
    pub alpha: f64,
    pub tabular_sweeps: usize,
    pub tabular_distance: f64,
    pub tabular_tol: f64,
    pub q_star: Vec<Vec<f64>>,
    /// Oracle-optimal actions per state; empty for terminal states.
    pub optimal_actions: Vec<Vec<usize>>,
}

#[derive(Serialize)]
struct OracleCsvRow {
    state: usize,
    action: usize,
    q_star: f64,
    optimal: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    pub fn new(name: &str, passed: bool, detail: String) -> Self {
        CheckResult {
            name: name.to_string(),
            passed,
            detail,
        }
    }

    pub fn line(&self) -> String {
        format!("{} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_run_report(dir: &Path, r: &RunReport) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir)?;
    write_json(&dir.join("report.json"), r)?;
    write_csv(&dir.join("evals.csv"), &r.evals)
}

pub fn write_throughput(dir: &Path, t: &ThroughputTable) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir)?;
    write_json(&dir.join("throughput.json"), t)?;
    write_csv(&dir.join("throughput.csv"), &t.rows)
}

pub fn write_sweep(dir: &Path, r: &SweepReport) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir)?;
    write_json(&dir.join("sweep.json"), r)?;
    write_csv(&dir.join("sweep.csv"), &r.rows)
}

pub fn write_timing(dir: &Path, r: &TimingReport) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir)?;
    write_json(&dir.join("timing.json"), r)?;
    write_csv(&dir.join("timing.csv"), &r.rows)
}

pub fn write_oracle(dir: &Path, r: &OracleReport) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir)?;
    write_json(&dir.join("oracle.json"), r)?;
    let mut rows = Vec::new();
    for (s, row) in r.q_star.iter().enumerate() {
        for (a, &q) in row.iter().enumerate() {
            rows.push(OracleCsvRow {
                state: s,
                action: a,
                q_star: q,
                optimal: r.optimal_actions[s].contains(&a),
            });
        }
    }
    write_csv(&dir.join("oracle.csv"), &rows)
}

pub fn write_checks(dir: &Path, checks: &[CheckResult]) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir)?;
    write_json(&dir.join("checks.json"), &checks)
}
