use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use iotscan::frame_codec::AddressRules;
use iotscan::harness::{self, RunOptions, Scenario};

#[derive(Parser)]
#[command(name = "iotscan", version, about = "Simulated IoT device discovery scans")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario's trials and write trials.csv and summary.csv.
    Scan {
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Also write each trial's emissions to events_trial<m>.csv.
        #[arg(long)]
        event_log: bool,
    },
    /// Compute the analytic expected discovery times and write model.csv.
    Model {
        scenario: PathBuf,
        #[arg(long = "delta-t")]
        delta_t: Option<f64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run scan and model and check the model lies within the confidence intervals.
    Compare {
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Decode a hex frame and print its fields and device address.
    Dissect {
        /// zigbee, ble, lora, zwave, zwave-r2 or zwave-r3
        protocol: String,
        hex: String,
        /// Byte index of the device id inside LoRa payloads.
        #[arg(long)]
        lora_id_index: Option<usize>,
    },
}

/// Exit status 1 covers invalid input and any other error; 2 is reserved
/// for a completed comparison that misses the acceptance rule.
enum Failure {
    Error(anyhow::Error),
    Acceptance,
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Error(e.into())
    }
}

fn load(path: &Path, seed: Option<u64>, trials: Option<usize>) -> Result<Scenario, Failure> {
    let mut config = harness::ScenarioConfig::load(path)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    if let Some(trials) = trials {
        config.trials = trials;
    }
    let scenario = config.resolve()?;
    for w in &scenario.warnings {
        eprintln!("warning: {w}");
    }
    Ok(scenario)
}

fn fmt_opt(v: Option<f64>, scale: f64) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{:.2}", v / scale))
}

fn time_unit(scale: f64) -> &'static str {
    if scale == 1.0 {
        "s"
    } else {
        "scaled"
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Scan {
            scenario,
            seed,
            trials,
            out,
            event_log,
        } => {
            let s = load(&scenario, seed, trials)?;
            let result = harness::run_experiment_with(
                &s,
                RunOptions {
                    record_event_log: event_log,
                },
            )?;
            harness::write_experiment(&out, &s, &result)?;
            let scale = s.config.time_scale;
            println!(
                "{}: {} trials, {} devices, {:.2?} wall clock",
                s.name(),
                result.trials.len(),
                s.device_count(),
                result.wall_clock
            );
            println!("n\tmean_{u}\tci_lo\tci_hi\tcensored", u = time_unit(scale));
            for r in &result.summary.rows {
                let ci = r.ci();
                println!(
                    "{}\t{}\t{}\t{}\t{}",
                    r.n,
                    fmt_opt(r.mean_s, scale),
                    fmt_opt(ci.map(|c| c.0), scale),
                    fmt_opt(ci.map(|c| c.1), scale),
                    r.censored
                );
            }
            println!("wrote {}", out.display());
        }
        Command::Model {
            scenario,
            delta_t,
            out,
        } => {
            let s = load(&scenario, None, None)?;
            let table = harness::run_model(&s, delta_t)?;
            harness::write_model(&out, &s, &table)?;
            let scale = s.config.time_scale;
            println!("n\texpected_{}", time_unit(scale));
            for (n, e) in &table.rows {
                println!("{n}\t{:.2}", e / scale);
            }
            println!("wrote {}", out.join("model.csv").display());
        }
        Command::Compare {
            scenario,
            seed,
            trials,
            out,
        } => {
            let s = load(&scenario, seed, trials)?;
            let report = harness::compare(&s)?;
            harness::write_comparison(&out, &s, &report)?;
            let scale = s.config.time_scale;
            println!("n\tmean\tci_lo\tci_hi\texpected\tin_ci");
            for r in &report.rows {
                println!(
                    "{}\t{}\t{}\t{}\t{:.2}\t{}",
                    r.n,
                    fmt_opt(r.mean_s, scale),
                    fmt_opt(r.ci_lo_s, scale),
                    fmt_opt(r.ci_hi_s, scale),
                    r.expected_s / scale,
                    r.in_ci
                );
            }
            let verdict = if report.passed() { "PASS" } else { "FAIL" };
            println!(
                "{verdict}: model inside CI for {}/{} order statistics (need {:.0}%)",
                report.in_ci_count(),
                report.rows.len(),
                harness::COMPARE_PASS_FRACTION * 100.0
            );
            println!("wrote {}", out.display());
            if !report.passed() {
                return Err(Failure::Acceptance);
            }
        }
        Command::Dissect {
            protocol,
            hex,
            lora_id_index,
        } => {
            let mut rules = AddressRules::default();
            if let Some(i) = lora_id_index {
                rules.lora_id_index = i;
            }
            let text = harness::dissect(&protocol, &hex, &rules)
                .with_context(|| format!("dissecting {protocol} frame"))?;
            print!("{text}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Error(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Acceptance) => ExitCode::from(2),
    }
}
