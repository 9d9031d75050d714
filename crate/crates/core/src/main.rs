// SPDX-License-Identifier: Apache-2.0

use clap::{Args, Parser, Subcommand, ValueEnum};
use qaccel::datapath::Arch;
use qaccel::harness::experiments::{self as exp, HarnessError};
use qaccel::harness::report::{self, CheckResult};
use qaccel::harness::{EnvPreset, ExperimentConfig, Overrides};
use qaccel::neural::{BackendKind, UpdateRule};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// `println!` that ignores a closed stdout, so piping into `head` is not an error.
macro_rules! say {
    ($($t:tt)*) => {{
        let _ = writeln!(std::io::stdout(), $($t)*);
    }};
}

#[derive(Parser)]
#[command(name = "qaccel", version, about = "Neural Q-learning accelerator model")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON experiment config; flags below override its keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// `fixed` or `float`.
    #[arg(long, global = true, value_parser = clap::value_parser!(BackendKind))]
    backend: Option<BackendKind>,
    /// `perceptron` or `mlp`.
    #[arg(long, global = true, value_parser = clap::value_parser!(Arch))]
    arch: Option<Arch>,
    #[arg(long, global = true, value_enum)]
    env: Option<EnvPreset>,
    /// Q-update budget for `train` and for each sweep row.
    #[arg(long, global = true)]
    steps: Option<u64>,
    /// JSON-lines file receiving one record per Q-update (`train` only).
    #[arg(long, global = true)]
    trace: Option<PathBuf>,
    /// Directory for JSON and CSV outputs.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// `textbook` or `paper-literal` weight update.
    #[arg(long, global = true, value_parser = clap::value_parser!(UpdateRule))]
    rule: Option<UpdateRule>,
    /// Evaluate pass/fail checks; exit code 3 if any fails.
    #[arg(long, global = true)]
    check: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum TableFormat {
    Text,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Neural Q-learning against the value-iteration oracle.
    Train {
        /// Also time both backends on the host and add it to the report.
        #[arg(long)]
        host_timing: bool,
    },
    /// Cycle-model throughput table for both architectures.
    Throughput {
        #[arg(long, value_enum, default_value = "text")]
        format: TableFormat,
    },
    /// Fixed-point precision sweep.
    Sweep,
    /// Host wall-clock per update next to the simulated accelerator time.
    Timing,
    /// Environment inspection.
    Env {
        #[command(subcommand)]
        action: EnvAction,
    },
    /// Value-iteration Q* and the tabular convergence check.
    Oracle,
}

#[derive(Subcommand)]
enum EnvAction {
    /// Write the full transition model as JSON.
    Dump,
}

fn load_config(c: &Common) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    cfg.apply_overrides(&Overrides {
        seed: c.seed,
        backend: c.backend,
        arch: c.arch,
        env: c.env,
        steps: c.steps,
        rule: c.rule,
    });
    cfg.validate()?;
    Ok(cfg)
}

fn finish_checks(c: &Common, checks: Vec<CheckResult>) -> Result<bool, HarnessError> {
    for ch in &checks {
        say!("{}", ch.line());
    }
    if let Some(dir) = &c.out {
        report::write_checks(dir, &checks)?;
    }
    Ok(checks.iter().all(|ch| ch.passed))
}

fn run(cli: &Cli) -> Result<bool, HarnessError> {
    let c = &cli.common;
    let cfg = load_config(c)?;
    let out: Option<&Path> = c.out.as_deref();
    let checks = match &cli.command {
        Command::Train { host_timing } => {
            let mut trace_file = match &c.trace {
                Some(p) => Some(BufWriter::new(File::create(p)?)),
                None => None,
            };
            let mut r = exp::run_training(&cfg, trace_file.as_mut().map(|w| w as &mut dyn Write))?;
            if let Some(mut w) = trace_file {
                w.flush()?;
            }
            if *host_timing {
                exp::attach_host_timing(&mut r)?;
            }
            for e in &r.evals {
                say!(
                    "step {:>8}  accuracy {:.4}  mean|Q-Q*| {:.6}  overflows {}",
                    e.step, e.policy_accuracy, e.mean_abs_q_error, e.overflow_count
                );
            }
            if let Some(dir) = out {
                report::write_run_report(dir, &r)?;
            }
            exp::training_checks(&r)
        }
        Command::Throughput { format } => {
            let t = exp::run_throughput_table(cfg.clock_hz, cfg.stage_costs, &cfg.hidden_sizes);
            match format {
                TableFormat::Text => {
                    let _ = std::io::stdout().write_all(t.to_text().as_bytes());
                }
                TableFormat::Csv => {
                    let mut w = csv::Writer::from_writer(std::io::stdout());
                    for row in &t.rows {
                        w.serialize(row)?;
                    }
                    w.flush()?;
                }
            }
            if let Some(dir) = out {
                report::write_throughput(dir, &t)?;
            }
            exp::throughput_checks(&t)
        }
        Command::Sweep => {
            let r = exp::run_precision_sweep(&cfg)?;
            for row in &r.rows {
                say!(
                    "Q{{{},{}}} depth {:>5}  {}  max|dQ| {}  accuracy {}",
                    row.word_bits,
                    row.frac_bits,
                    row.lut_depth,
                    row.status,
                    row.probe_max_abs_dq.map_or("-".into(), |v| format!("{v:.3e}")),
                    row.final_policy_accuracy.map_or("-".into(), |v| format!("{v:.4}")),
                );
            }
            for v in &r.monotonicity_violations {
                say!("note: {v}");
            }
            if let Some(dir) = out {
                report::write_sweep(dir, &r)?;
            }
            exp::sweep_checks(&r)
        }
        Command::Timing => {
            let r = exp::run_host_timing(&cfg)?;
            let _ = std::io::stdout().write_all(r.to_text().as_bytes());
            if let Some(dir) = out {
                report::write_timing(dir, &r)?;
            }
            exp::timing_checks(&r)
        }
        Command::Env { action: EnvAction::Dump } => {
            let dump = cfg.build_env()?.dump();
            match out {
                Some(dir) => {
                    std::fs::create_dir_all(dir)?;
                    report::write_json(&dir.join("env.json"), &dump)?;
                }
                None => say!("{}", serde_json::to_string_pretty(&dump)?),
            }
            Vec::new()
        }
        Command::Oracle => {
            let r = exp::run_oracle(&cfg)?;
            say!(
                "{} states x {} actions, tabular sup-norm {:.3e} after {} sweeps",
                r.env.states, r.env.actions_per_state, r.tabular_distance, r.tabular_sweeps
            );
            if let Some(dir) = out {
                report::write_oracle(dir, &r)?;
            }
            exp::oracle_checks(&r)
        }
    };
    if c.check {
        finish_checks(c, checks)
    } else {
        Ok(true)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
