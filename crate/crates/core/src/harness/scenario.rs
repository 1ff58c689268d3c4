//! Scenario files: TOML documents describing the devices, the scanner and
//! the experiment to run.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::HarnessError;
use crate::analytics::{DEFAULT_DELTA_T_S, DEFAULT_MULTI_ARRIVAL_THRESHOLD};
use crate::channel_plan::{
    ble_advertising_channels, resolve_label, zigbee_channels, Channel, ChannelList, Protocol,
};
use crate::frame_codec::{AddressRules, DeviceAddress};
use crate::radio_sim::{
    DeviceId, DeviceSpec, EmissionModel, EnvironmentConfig, Role,
    DEFAULT_PROBE_RESPONSE_DELAY_MAX_S,
};
use crate::scanner::{ScanParams, SdrConfig, SequentialStage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Passive,
    Active,
    Multiprotocol,
    ActiveMultiprotocol,
    /// Passive scans of each `[[stage]]` in turn.
    Sequential,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Passive => "passive",
            Algorithm::Active => "active",
            Algorithm::Multiprotocol => "multiprotocol",
            Algorithm::ActiveMultiprotocol => "active_multiprotocol",
            Algorithm::Sequential => "sequential",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub delta_t_s: f64,
    pub multi_arrival_threshold: f64,
    /// Uniform channel divisor; derived from the scan schedule when absent.
    pub channel_count: Option<u32>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            delta_t_s: DEFAULT_DELTA_T_S,
            multi_arrival_threshold: DEFAULT_MULTI_ARRIVAL_THRESHOLD,
            channel_count: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvironmentSection {
    pub loss_prob: f64,
    pub probe_response_delay_max_s: f64,
    pub lora_id_index: usize,
}

impl Default for EnvironmentSection {
    fn default() -> Self {
        EnvironmentSection {
            loss_prob: 0.0,
            probe_response_delay_max_s: DEFAULT_PROBE_RESPONSE_DELAY_MAX_S,
            lora_id_index: AddressRules::default().lora_id_index,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelEntry {
    pub label: String,
    pub protocol: Protocol,
    pub center_hz: u64,
    pub bandwidth_hz: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageEntry {
    pub channels: Vec<String>,
    /// Devices of these protocols must be found before the next stage starts.
    #[serde(default)]
    pub protocols: Vec<Protocol>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceEntry {
    pub name: String,
    pub protocol: Protocol,
    pub role: Role,
    pub channels: Vec<String>,
    pub mean_interarrival_s: f64,
    pub address: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub aliases: Vec<String>,
    /// Defaults to true for Zigbee coordinators and routers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub responds_to_probe: Option<bool>,
    #[serde(default)]
    pub model: EmissionModel,
}

/// The document as written in a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub algorithm: Algorithm,
    #[serde(default)]
    pub ch_list: Vec<String>,
    #[serde(default)]
    pub ch_probe_list: Vec<String>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub seed: u64,
    /// Seconds per display unit in console output (3600 prints hours).
    #[serde(default = "default_time_scale")]
    pub time_scale: f64,
    pub params: ScanParams,
    #[serde(default)]
    pub sdr: SdrConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub environment: EnvironmentSection,
    #[serde(default, rename = "channel", skip_serializing_if = "Vec::is_empty")]
    pub channels: Vec<ChannelEntry>,
    #[serde(default, rename = "stage", skip_serializing_if = "Vec::is_empty")]
    pub stages: Vec<StageEntry>,
    #[serde(default, rename = "device")]
    pub devices: Vec<DeviceEntry>,
}

fn default_trials() -> usize {
    10
}

fn default_alpha() -> f64 {
    0.05
}

fn default_time_scale() -> f64 {
    1.0
}

/// A validated scenario with every label and address resolved.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub ch_list: ChannelList,
    pub ch_probe_list: Vec<Channel>,
    pub stages: Vec<SequentialStage>,
    pub environment: EnvironmentConfig,
    /// Problems that do not stop a run, such as devices no scan can reach.
    pub warnings: Vec<String>,
}

fn invalid(path: impl Into<String>, message: impl Into<String>) -> HarnessError {
    HarnessError::Validation {
        path: path.into(),
        message: message.into(),
    }
}

fn hex_field<T>(path: &str, s: &str, parse: fn(&str, u32) -> Result<T, std::num::ParseIntError>) -> Result<T, HarnessError> {
    let digits = s.trim_start_matches("0x");
    parse(digits, 16).map_err(|e| invalid(path, format!("`{s}` is not a hex number: {e}")))
}

/// Parses the address notation used in scenario files:
///
/// | protocol | form | example |
/// |---|---|---|
/// | Zigbee short | `zigbee:<pan>:<addr>` | `zigbee:1a2b:0001` |
/// | Zigbee extended | `zigbee-ext:<eui64>` | `zigbee-ext:00178801020304ff` |
/// | BLE | `ble:<AdvA>` | `ble:C4:7C:8D:6A:01:02` |
/// | LoRa | `lora:<sync word>:<id>` | `lora:3444:2a` |
/// | Z-Wave | `zwave:<home id>:<node id>` | `zwave:cafe0001:07` |
///
/// All numbers are hexadecimal.
pub fn parse_address(path: &str, s: &str) -> Result<DeviceAddress, HarnessError> {
    let (kind, rest) = s
        .split_once(':')
        .ok_or_else(|| invalid(path, format!("`{s}` has no `kind:` prefix")))?;
    let pair = || {
        rest.split_once(':')
            .ok_or_else(|| invalid(path, format!("`{s}` needs two `:`-separated fields")))
    };
    match kind {
        "zigbee" => {
            let (pan, addr) = pair()?;
            Ok(DeviceAddress::ZigbeeShort {
                pan_id: hex_field(path, pan, u16::from_str_radix)?,
                addr: hex_field(path, addr, u16::from_str_radix)?,
            })
        }
        "zigbee-ext" => Ok(DeviceAddress::ZigbeeExtended(hex_field(path, rest, u64::from_str_radix)?)),
        "ble" => {
            let octets: Vec<&str> = rest.split(':').collect();
            if octets.len() != 6 || octets.iter().any(|o| o.len() != 2) {
                return Err(invalid(path, format!("`{s}` is not a six-octet BLE address")));
            }
            let value = hex_field(path, &octets.concat(), u64::from_str_radix)?;
            Ok(DeviceAddress::BleAdvA(value))
        }
        "lora" => {
            let (sync, id) = pair()?;
            Ok(DeviceAddress::LoRaId {
                sync_word: hex_field(path, sync, u16::from_str_radix)?,
                id: hex_field(path, id, u8::from_str_radix)?,
            })
        }
        "zwave" => {
            let (home, node) = pair()?;
            Ok(DeviceAddress::ZWaveId {
                home_id: hex_field(path, home, u32::from_str_radix)?,
                source_id: hex_field(path, node, u8::from_str_radix)?,
            })
        }
        other => Err(invalid(path, format!("unknown address kind `{other}`"))),
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario config is always representable in TOML")
    }

    /// SHA-256 of the canonical serialization, so reformatting the file
    /// does not change it.
    pub fn config_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml_string().as_bytes()))
    }

    pub fn resolve(&self) -> Result<Scenario, HarnessError> {
        Scenario::from_config(self.clone())
    }
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        ScenarioConfig::load(path)?.resolve()
    }

    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        ScenarioConfig::from_toml_str(text)?.resolve()
    }

    pub fn name(&self) -> &str {
        &self.config.name
    }

    pub fn device_count(&self) -> usize {
        self.environment.devices.len()
    }

    pub fn from_config(config: ScenarioConfig) -> Result<Self, HarnessError> {
        if config.trials == 0 {
            return Err(invalid("trials", "must be at least 1"));
        }
        if !(config.alpha > 0.0 && config.alpha < 1.0) {
            return Err(invalid("alpha", format!("{} outside (0, 1)", config.alpha)));
        }
        if !(config.time_scale > 0.0 && config.time_scale.is_finite()) {
            return Err(invalid("time_scale", "must be positive"));
        }
        config
            .params
            .validate()
            .map_err(|e| invalid("params", e.to_string()))?;
        config.sdr.validate().map_err(|e| invalid("sdr", e.to_string()))?;
        let m = &config.model;
        if !(m.delta_t_s > 0.0 && m.delta_t_s.is_finite()) {
            return Err(invalid("model.delta_t_s", "must be positive"));
        }
        if !(m.multi_arrival_threshold > 0.0 && m.multi_arrival_threshold < 1.0) {
            return Err(invalid("model.multi_arrival_threshold", "must lie in (0, 1)"));
        }
        if m.channel_count == Some(0) {
            return Err(invalid("model.channel_count", "must be at least 1"));
        }

        let mut custom: Vec<Channel> = Vec::new();
        for (i, entry) in config.channels.iter().enumerate() {
            let path = format!("channel[{i}]");
            if resolve_label(&entry.label).is_ok() || custom.iter().any(|c| c.label() == entry.label) {
                return Err(invalid(path, format!("label `{}` is already defined", entry.label)));
            }
            let ch = Channel::new(&entry.label, entry.protocol, entry.center_hz, entry.bandwidth_hz)
                .map_err(|e| invalid(path, e.to_string()))?;
            custom.push(ch);
        }
        let lookup = |path: &str, label: &str| -> Result<Vec<Channel>, HarnessError> {
            match label {
                "zigbee-all" => Ok(zigbee_channels().iter().cloned().collect()),
                "ble-advertising" => Ok(ble_advertising_channels().iter().cloned().collect()),
                _ => {
                    if let Some(ch) = custom.iter().find(|c| c.label() == label) {
                        return Ok(vec![ch.clone()]);
                    }
                    resolve_label(label)
                        .map(|c| vec![c])
                        .map_err(|e| invalid(path, e.to_string()))
                }
            }
        };
        let resolve_list = |field: &str, labels: &[String]| -> Result<Vec<Channel>, HarnessError> {
            let mut out: Vec<Channel> = Vec::new();
            for (i, label) in labels.iter().enumerate() {
                for ch in lookup(&format!("{field}[{i}]"), label)? {
                    if !out.contains(&ch) {
                        out.push(ch);
                    }
                }
            }
            Ok(out)
        };

        let ch_list = ChannelList::new(resolve_list("ch_list", &config.ch_list)?);
        let mut ch_probe_list = resolve_list("ch_probe_list", &config.ch_probe_list)?;
        ch_probe_list.sort_by_key(|c| c.center_freq_hz());
        if let Some((i, ch)) = ch_probe_list
            .iter()
            .enumerate()
            .find(|(_, c)| !c.protocol().supports_probe())
        {
            return Err(invalid(
                format!("ch_probe_list[{i}]"),
                format!("{} channel {} cannot be probed", ch.protocol(), ch.label()),
            ));
        }

        let mut devices = Vec::with_capacity(config.devices.len());
        for (i, entry) in config.devices.iter().enumerate() {
            let path = format!("device[{i}]");
            let mut channels = Vec::new();
            for (j, label) in entry.channels.iter().enumerate() {
                channels.extend(lookup(&format!("{path}.channels[{j}]"), label)?);
            }
            let address = parse_address(&format!("{path}.address"), &entry.address)?;
            let aliases = entry
                .aliases
                .iter()
                .enumerate()
                .map(|(j, a)| parse_address(&format!("{path}.aliases[{j}]"), a))
                .collect::<Result<Vec<_>, _>>()?;
            let responds_to_probe = entry.responds_to_probe.unwrap_or(
                entry.protocol.supports_probe()
                    && matches!(entry.role, Role::Coordinator | Role::Router),
            );
            devices.push(DeviceSpec {
                name: entry.name.clone(),
                protocol: entry.protocol,
                role: entry.role,
                channels,
                mean_interarrival_s: entry.mean_interarrival_s,
                address,
                aliases,
                responds_to_probe,
                model: entry.model,
            });
        }
        let environment = EnvironmentConfig {
            devices,
            loss_prob: config.environment.loss_prob,
            probe_response_delay_max_s: config.environment.probe_response_delay_max_s,
            address_rules: AddressRules {
                lora_id_index: config.environment.lora_id_index,
            },
            record_log: false,
        };
        environment.validate().map_err(|e| {
            let path = match &e {
                crate::radio_sim::SimError::InvalidDevice { name, .. }
                | crate::radio_sim::SimError::DuplicateAddress { second: name, .. } => environment
                    .devices
                    .iter()
                    .position(|d| &d.name == name)
                    .map_or("device".to_string(), |i| format!("device[{i}]")),
                _ => "environment".to_string(),
            };
            invalid(path, e.to_string())
        })?;

        let mut stages = Vec::new();
        for (i, stage) in config.stages.iter().enumerate() {
            let path = format!("stage[{i}]");
            let channels = resolve_list(&format!("{path}.channels"), &stage.channels)?;
            if channels.is_empty() {
                return Err(invalid(path, "stage has no channels"));
            }
            let protocols: BTreeSet<Protocol> = if stage.protocols.is_empty() {
                channels.iter().map(|c| c.protocol()).collect()
            } else {
                stage.protocols.iter().copied().collect()
            };
            let until = environment
                .devices
                .iter()
                .enumerate()
                .filter(|(_, d)| protocols.contains(&d.protocol))
                .map(|(k, _)| DeviceId(k))
                .collect();
            stages.push(SequentialStage { channels, until });
        }

        match config.algorithm {
            Algorithm::Passive | Algorithm::Multiprotocol if ch_list.is_empty() => {
                return Err(invalid("ch_list", format!("{} scan needs channels", config.algorithm.name())))
            }
            Algorithm::Active if ch_probe_list.is_empty() => {
                return Err(invalid("ch_probe_list", "active scan needs channels to probe"))
            }
            Algorithm::ActiveMultiprotocol if ch_list.is_empty() && ch_probe_list.is_empty() => {
                return Err(invalid("ch_list", "active multiprotocol scan needs channels"))
            }
            Algorithm::Sequential if stages.is_empty() => {
                return Err(invalid("stage", "sequential scan needs at least one [[stage]]"))
            }
            _ => {}
        }

        let mut reachable: Vec<&Channel> = ch_list.iter().chain(ch_probe_list.iter()).collect();
        reachable.extend(stages.iter().flat_map(|s| s.channels.iter()));
        let warnings = environment
            .devices
            .iter()
            .filter(|d| !d.channels.iter().any(|c| reachable.contains(&c)))
            .map(|d| {
                format!(
                    "device `{}` transmits only on channels no scan visits; it cannot be discovered",
                    d.name
                )
            })
            .collect();

        Ok(Scenario {
            config,
            ch_list,
            ch_probe_list,
            stages,
            environment,
            warnings,
        })
    }
}
