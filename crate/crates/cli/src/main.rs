use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use simulcast::harness::{self, StackName};
use simulcast::SimError;

#[derive(Parser)]
#[command(name = "simulcast", version, about = "Run, compare and audit broadcast protocol scenarios")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario and write its trace as JSON lines.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Run the ideal twin instead of the stack named in the scenario.
        #[arg(long)]
        ideal: bool,
    },
    /// Run the protocol and its ideal twin and compare honest outputs.
    Compare {
        #[arg(long)]
        scenario: PathBuf,
        /// Print the full report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Check a trace against the oracle budget and puzzle timing bounds.
    Audit {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Repeat a scenario with consecutive seeds and summarize the outputs.
    Stats {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        trials: usize,
        #[arg(long)]
        json: bool,
    },
}

fn json_line<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("reports serialize")
}

fn run(cmd: Cmd) -> Result<bool, SimError> {
    match cmd {
        Cmd::Run { scenario, out, ideal } => {
            let script = harness::load_scenario(&scenario)?;
            let mut name = StackName::parse(&script.stack)?;
            name.ideal |= ideal;
            let trace = harness::run_world(&script, name)?;
            std::fs::write(&out, trace.to_jsonl()).map_err(|e| SimError::Io(format!("{}: {e}", out.display())))?;
            println!("{} events written to {}", trace.events.len(), out.display());
            Ok(true)
        }
        Cmd::Compare { scenario, json } => {
            let script = harness::load_scenario(&scenario)?;
            let report = harness::compare_scenario(&script)?;
            if json {
                println!("{}", json_line(&report));
            } else {
                let outputs: usize = report.parties.iter().map(|p| p.ideal.len()).sum();
                println!(
                    "{}: {} ({} honest parties, {} ideal outputs, shift {})",
                    report.script,
                    if report.is_equal() { "equal" } else { "divergent" },
                    report.parties.len(),
                    outputs,
                    report.rules.shift
                );
                if let Some(d) = &report.first_divergence {
                    println!(
                        "first divergence: party {:?}, output #{}, protocol seq {:?}, ideal seq {:?}: {}",
                        d.party, d.index, d.protocol_seq, d.ideal_seq, d.reason
                    );
                }
            }
            Ok(report.is_equal())
        }
        Cmd::Audit { trace, json } => {
            let t = harness::load_trace(&trace)?;
            let report = harness::audit(&t)?;
            if json {
                println!("{}", json_line(&report));
            } else {
                let peak = report.budget.iter().map(|r| r.used).max().unwrap_or(0);
                println!(
                    "{}: {} ciphertexts, {} budget rows (peak {} calls), {} violations",
                    report.stack,
                    report.ciphertexts.len(),
                    report.budget.len(),
                    peak,
                    report.violations.len()
                );
                for c in &report.ciphertexts {
                    println!(
                        "  {} from P{} at {}: {} steps, honest {:?} >= {}, adversary {:?} >= {}",
                        &c.id[..c.id.len().min(12)],
                        c.sender,
                        c.emitted,
                        c.steps,
                        c.honest_earliest,
                        c.honest_designated,
                        c.adversary_earliest,
                        c.adversary_designated
                    );
                }
                for v in &report.violations {
                    println!("violation [{}] round {}: {}", v.kind, v.round, v.detail);
                }
            }
            Ok(report.is_clean())
        }
        Cmd::Stats { scenario, trials, json } => {
            let script = harness::load_scenario(&scenario)?;
            let threads = harness::thread_count(trials);
            let report = harness::stats(&script, trials, threads)?;
            if json {
                println!("{}", json_line(&report));
            } else {
                println!("{}: {} trials on {} threads", report.scenario, report.trials, report.threads);
                for (outcome, count) in &report.outcomes {
                    println!("{count:>6} x {}", outcome.replace('\n', " | "));
                }
                if let Some(b) = report.max_bias {
                    println!("largest bit bias from 0.5: {b:.4}");
                }
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
