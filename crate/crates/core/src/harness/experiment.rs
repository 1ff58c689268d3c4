use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;

use super::scenario::{Algorithm, Scenario};
use super::HarnessError;
use crate::analytics::{self, OrderStatSummary};
use crate::channel_plan::Channel;
use crate::radio_sim::{build_environment, DeviceId};
use crate::scanner::{channel_groups, Scanner};

/// Share of in-CI rows `compare` requires to pass.
pub const COMPARE_PASS_FRACTION: f64 = 0.75;

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub trial: u64,
    /// First-seen time of each scenario device, in device order.
    pub first_seen: Vec<Option<f64>>,
    /// Simulated time the scan ran for.
    pub scan_duration_s: f64,
    /// Addresses heard that belong to no scenario device.
    pub foreign_addresses: usize,
    pub event_log_csv: Option<String>,
}

impl TrialResult {
    /// Time at which the last device was found, if all were.
    pub fn completion_time(&self) -> Option<f64> {
        self.first_seen
            .iter()
            .try_fold(0.0, |acc: f64, t| t.map(|t| acc.max(t)))
    }

    /// Discovered devices ordered by discovery time.
    pub fn discovery_order(&self) -> Vec<(DeviceId, f64)> {
        let mut order: Vec<(DeviceId, f64)> = self
            .first_seen
            .iter()
            .enumerate()
            .filter_map(|(i, t)| t.map(|t| (DeviceId(i), t)))
            .collect();
        order.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        order
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub trials: Vec<TrialResult>,
    pub summary: OrderStatSummary,
    pub wall_clock: Duration,
}

impl ExperimentResult {
    /// Mean over trials of the full-discovery time; `None` if any trial
    /// missed a device.
    pub fn mean_completion_time(&self) -> Option<f64> {
        let times: Option<Vec<f64>> = self.trials.iter().map(|t| t.completion_time()).collect();
        let times = times?;
        Some(times.iter().sum::<f64>() / times.len() as f64)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub record_event_log: bool,
}

/// Runs every trial of `scenario`. Trial `m` draws all randomness from
/// `(seed, m)`, so results do not depend on scheduling.
pub fn run_experiment(scenario: &Scenario) -> Result<ExperimentResult, HarnessError> {
    run_experiment_with(scenario, RunOptions::default())
}

pub fn run_experiment_with(
    scenario: &Scenario,
    options: RunOptions,
) -> Result<ExperimentResult, HarnessError> {
    let started = Instant::now();
    let trials = (0..scenario.config.trials as u64)
        .into_par_iter()
        .map(|m| run_trial(scenario, m, options))
        .collect::<Result<Vec<_>, _>>()?;
    let times: Vec<Vec<Option<f64>>> = trials.iter().map(|t| t.first_seen.clone()).collect();
    let summary = if scenario.device_count() == 0 {
        OrderStatSummary {
            rows: Vec::new(),
            trial_count: trials.len(),
            alpha: scenario.config.alpha,
            t_quantile: None,
        }
    } else {
        analytics::summarize(&times, scenario.config.alpha)?
    };
    Ok(ExperimentResult {
        trials,
        summary,
        wall_clock: started.elapsed(),
    })
}

pub fn run_trial(
    scenario: &Scenario,
    trial: u64,
    options: RunOptions,
) -> Result<TrialResult, HarnessError> {
    let mut env_config = scenario.environment.clone();
    env_config.record_log = options.record_event_log;
    let mut env = build_environment(&env_config, scenario.config.seed, trial)?;
    let n = env.device_count();
    let p = scenario.config.params;
    let (log, elapsed) = {
        let mut scanner =
            Scanner::new(&mut env, scenario.config.sdr)?.stop_when_found((0..n).map(DeviceId));
        match scenario.config.algorithm {
            Algorithm::Passive => {
                scanner.passive_scan(scenario.ch_list.as_slice(), p.dwell_time_s, p.scan_time_s)?;
            }
            Algorithm::Active => {
                scanner.active_scan(
                    &scenario.ch_probe_list,
                    p.probe_dwell_time_s,
                    p.dwell_time_s,
                    p.scan_time_s,
                )?;
            }
            Algorithm::Multiprotocol => {
                scanner.multiprotocol_scan(&scenario.ch_list, p.dwell_time_s, p.scan_time_s)?;
            }
            Algorithm::ActiveMultiprotocol => {
                scanner.active_multiprotocol_scan(
                    &scenario.ch_list,
                    &scenario.ch_probe_list,
                    p.probe_dwell_time_s,
                    p.dwell_time_s,
                    p.scan_time_s,
                )?;
            }
            Algorithm::Sequential => {
                scanner.sequential_passive_scan(&scenario.stages, p.dwell_time_s, p.scan_time_s)?;
            }
        }
        let elapsed = scanner.elapsed();
        (scanner.into_log(), elapsed)
    };
    let first_seen = log.known_times(n);
    let foreign_addresses = log.len() - first_seen.iter().flatten().count();
    Ok(TrialResult {
        trial,
        first_seen,
        scan_duration_s: elapsed,
        foreign_addresses,
        event_log_csv: env.event_log_csv(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelTable {
    /// Per device, how many times less often it is within the tuned band
    /// than under continuous monitoring.
    pub divisors: Vec<f64>,
    /// `(n, E[X_{n:N}])` in seconds.
    pub rows: Vec<(usize, f64)>,
}

/// Steady-state listening schedule of the scan phase, as a cycle of tuned
/// channel sets. Probing is instantaneous in the model, and the channels it
/// would find active are those with a probe-answering device.
fn listening_cycle(scenario: &Scenario) -> Result<Vec<Vec<Channel>>, HarnessError> {
    let bw = scenario.config.sdr.instantaneous_bandwidth_hz;
    let responsive = || -> Vec<Channel> {
        scenario
            .ch_probe_list
            .iter()
            .filter(|ch| {
                scenario
                    .environment
                    .devices
                    .iter()
                    .any(|d| d.responds_to_probe && d.transmits_on(ch))
            })
            .cloned()
            .collect()
    };
    let singles = |chans: &[Channel]| chans.iter().map(|c| vec![c.clone()]).collect();
    let groups = |list: &crate::channel_plan::ChannelList| -> Result<Vec<Vec<Channel>>, HarnessError> {
        Ok(channel_groups(list, bw)?
            .into_iter()
            .map(|g| g.as_slice().to_vec())
            .collect())
    };
    match scenario.config.algorithm {
        Algorithm::Passive => Ok(singles(scenario.ch_list.as_slice())),
        Algorithm::Active => Ok(singles(&responsive())),
        Algorithm::Multiprotocol => groups(&scenario.ch_list),
        Algorithm::ActiveMultiprotocol => {
            let merged = crate::channel_plan::ChannelList::new(responsive()).merge(&scenario.ch_list);
            if merged.is_empty() {
                Ok(Vec::new())
            } else {
                groups(&merged)
            }
        }
        Algorithm::Sequential => Err(HarnessError::Unsupported(
            "the analytic model covers single-schedule scans, not sequential stages".into(),
        )),
    }
}

/// Expected discovery times of the discrete coupon-collector model for the
/// scenario's devices, with `delta_t_s` overriding the scenario's step.
pub fn run_model(scenario: &Scenario, delta_t_s: Option<f64>) -> Result<ModelTable, HarnessError> {
    let devices = &scenario.environment.devices;
    if devices.is_empty() {
        return Ok(ModelTable {
            divisors: Vec::new(),
            rows: Vec::new(),
        });
    }
    let cfg = scenario.config.model;
    let dt = delta_t_s.unwrap_or(cfg.delta_t_s);
    let divisors: Vec<f64> = match cfg.channel_count {
        Some(c) => vec![c as f64; devices.len()],
        None => {
            let cycle = listening_cycle(scenario)?;
            devices
                .iter()
                .map(|d| {
                    let covered = cycle
                        .iter()
                        .filter(|slot| slot.iter().any(|ch| d.transmits_on(ch)))
                        .count();
                    if covered == 0 {
                        Err(HarnessError::Unsupported(format!(
                            "device `{}` is never within the scanned channels; its expected discovery time is unbounded",
                            d.name
                        )))
                    } else {
                        Ok(cycle.len() as f64 / covered as f64)
                    }
                })
                .collect::<Result<_, _>>()?
        }
    };
    let weighted: Vec<(f64, f64)> = devices
        .iter()
        .zip(&divisors)
        .map(|(d, &c)| (d.rate(), c))
        .collect();
    let pv = analytics::discretize_weighted(&weighted, dt, cfg.multi_arrival_threshold)?;
    let expected = analytics::expected_order_statistics(&pv)?;
    Ok(ModelTable {
        divisors,
        rows: expected.into_iter().enumerate().map(|(i, e)| (i + 1, e)).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareRow {
    pub n: usize,
    pub mean_s: Option<f64>,
    pub ci_lo_s: Option<f64>,
    pub ci_hi_s: Option<f64>,
    pub expected_s: f64,
    pub in_ci: bool,
}

#[derive(Debug, Clone)]
pub struct CompareReport {
    pub rows: Vec<CompareRow>,
    pub experiment: ExperimentResult,
    pub model: ModelTable,
}

impl CompareReport {
    pub fn in_ci_count(&self) -> usize {
        self.rows.iter().filter(|r| r.in_ci).count()
    }

    pub fn in_ci_fraction(&self) -> f64 {
        if self.rows.is_empty() {
            return 1.0;
        }
        self.in_ci_count() as f64 / self.rows.len() as f64
    }

    pub fn passed(&self) -> bool {
        self.in_ci_fraction() >= COMPARE_PASS_FRACTION
    }
}

/// Runs the experiment and the model and lines them up per order statistic.
pub fn compare(scenario: &Scenario) -> Result<CompareReport, HarnessError> {
    let model = run_model(scenario, None)?;
    let experiment = run_experiment(scenario)?;
    let rows = experiment
        .summary
        .rows
        .iter()
        .zip(&model.rows)
        .map(|(row, &(n, expected_s))| {
            let ci = row.ci();
            CompareRow {
                n,
                mean_s: row.mean_s,
                ci_lo_s: ci.map(|c| c.0),
                ci_hi_s: ci.map(|c| c.1),
                expected_s,
                in_ci: row.contains(expected_s),
            }
        })
        .collect();
    Ok(CompareReport {
        rows,
        experiment,
        model,
    })
}

// Output files.

#[derive(Serialize)]
struct TrialRecord<'a> {
    trial: u64,
    n: Option<usize>,
    first_seen_s: Option<f64>,
    device: &'a str,
}

#[derive(Serialize)]
struct SummaryRecord {
    n: usize,
    mean_s: Option<f64>,
    ci_lo_s: Option<f64>,
    ci_hi_s: Option<f64>,
    censored_count: usize,
}

#[derive(Serialize)]
struct ModelRecord {
    n: usize,
    expected_time_s: f64,
}

fn write_csv<T: Serialize>(path: &Path, records: impl IntoIterator<Item = T>) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| HarnessError::Csv {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    for r in records {
        w.serialize(r).map_err(|e| HarnessError::Csv {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
    }
    w.flush().map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn create_dir(dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
        path: dir.display().to_string(),
        source,
    })
}

/// `trials.csv`: one row per device per trial, discovered devices first in
/// discovery order; undiscovered devices have empty `n` and `first_seen_s`.
pub fn write_trials_csv(path: &Path, scenario: &Scenario, result: &ExperimentResult) -> Result<(), HarnessError> {
    let devices = &scenario.environment.devices;
    let mut records = Vec::new();
    for t in &result.trials {
        let order = t.discovery_order();
        for (k, (id, time)) in order.iter().enumerate() {
            records.push(TrialRecord {
                trial: t.trial,
                n: Some(k + 1),
                first_seen_s: Some(*time),
                device: &devices[id.0].name,
            });
        }
        for (i, seen) in t.first_seen.iter().enumerate() {
            if seen.is_none() {
                records.push(TrialRecord {
                    trial: t.trial,
                    n: None,
                    first_seen_s: None,
                    device: &devices[i].name,
                });
            }
        }
    }
    write_csv(path, records)
}

pub fn write_summary_csv(path: &Path, summary: &OrderStatSummary) -> Result<(), HarnessError> {
    write_csv(
        path,
        summary.rows.iter().map(|r| SummaryRecord {
            n: r.n,
            mean_s: r.mean_s,
            ci_lo_s: r.ci().map(|c| c.0),
            ci_hi_s: r.ci().map(|c| c.1),
            censored_count: r.censored,
        }),
    )
}

pub fn write_model_csv(path: &Path, model: &ModelTable) -> Result<(), HarnessError> {
    write_csv(
        path,
        model.rows.iter().map(|&(n, e)| ModelRecord {
            n,
            expected_time_s: e,
        }),
    )
}

pub fn write_compare_csv(path: &Path, report: &CompareReport) -> Result<(), HarnessError> {
    write_csv(path, report.rows.iter())
}

/// Plain-text run manifest. Holds nothing that varies between identical
/// runs, so output directories can be compared byte for byte.
pub fn manifest(scenario: &Scenario, command: &str) -> String {
    let c = &scenario.config;
    format!(
        "tool = iotscan {version}\n\
         command = {command}\n\
         scenario = {name}\n\
         config_sha256 = {hash}\n\
         algorithm = {algorithm}\n\
         seed = {seed}\n\
         trials = {trials}\n\
         alpha = {alpha}\n\
         devices = {devices}\n",
        version = env!("CARGO_PKG_VERSION"),
        name = c.name,
        hash = c.config_hash(),
        algorithm = c.algorithm.name(),
        seed = c.seed,
        trials = c.trials,
        alpha = c.alpha,
        devices = scenario.device_count(),
    )
}

fn write_manifest(dir: &Path, scenario: &Scenario, command: &str) -> Result<(), HarnessError> {
    let path = dir.join("manifest.txt");
    fs::write(&path, manifest(scenario, command)).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Writes `trials.csv`, `summary.csv`, the manifest and any event logs.
pub fn write_experiment(dir: &Path, scenario: &Scenario, result: &ExperimentResult) -> Result<(), HarnessError> {
    create_dir(dir)?;
    write_trials_csv(&dir.join("trials.csv"), scenario, result)?;
    write_summary_csv(&dir.join("summary.csv"), &result.summary)?;
    for t in &result.trials {
        if let Some(log) = &t.event_log_csv {
            let path = dir.join(format!("events_trial{}.csv", t.trial));
            fs::write(&path, log).map_err(|source| HarnessError::Io {
                path: path.display().to_string(),
                source,
            })?;
        }
    }
    write_manifest(dir, scenario, "scan")
}

pub fn write_model(dir: &Path, scenario: &Scenario, model: &ModelTable) -> Result<(), HarnessError> {
    create_dir(dir)?;
    write_model_csv(&dir.join("model.csv"), model)?;
    write_manifest(dir, scenario, "model")
}

pub fn write_comparison(dir: &Path, scenario: &Scenario, report: &CompareReport) -> Result<(), HarnessError> {
    create_dir(dir)?;
    write_trials_csv(&dir.join("trials.csv"), scenario, &report.experiment)?;
    write_summary_csv(&dir.join("summary.csv"), &report.experiment.summary)?;
    write_model_csv(&dir.join("model.csv"), &report.model)?;
    write_compare_csv(&dir.join("compare.csv"), report)?;
    write_manifest(dir, scenario, "compare")
}
