//! Protocols, channels and the standard channel lists for the four scanned
//! protocols (US bands).
//!
//! Frequencies are kept in integer Hz. Every bandwidth used here is even, so
//! channel edges are exact integers too.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const MHZ: u64 = 1_000_000;
const KHZ: u64 = 1_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChannelError {
    #[error("{plan} channel index {index} out of range {min}..={max}")]
    OutOfRange {
        plan: &'static str,
        index: i64,
        min: i64,
        max: i64,
    },
    #[error("channel bandwidth must be positive and even in Hz, got {0}")]
    BadBandwidth(u64),
    #[error("channel bandwidth {bandwidth_hz} Hz does not fit below center {center_hz} Hz")]
    BelowZero { center_hz: u64, bandwidth_hz: u64 },
    #[error("unknown channel label `{0}`")]
    UnknownLabel(String),
    #[error("unknown protocol `{0}`")]
    UnknownProtocol(String),
    #[error("channel list is empty")]
    EmptyList,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Zigbee,
    #[serde(rename = "ble")]
    BleAdvertising,
    #[serde(rename = "lora")]
    LoRa,
    #[serde(rename = "zwave")]
    ZWave,
}

impl Protocol {
    pub const ALL: [Protocol; 4] = [
        Protocol::Zigbee,
        Protocol::BleAdvertising,
        Protocol::LoRa,
        Protocol::ZWave,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Protocol::Zigbee => "zigbee",
            Protocol::BleAdvertising => "ble",
            Protocol::LoRa => "lora",
            Protocol::ZWave => "zwave",
        }
    }

    /// Whether a broadcast probe (Zigbee beacon request) exists for the protocol.
    pub fn supports_probe(self) -> bool {
        matches!(self, Protocol::Zigbee)
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Protocol {
    type Err = ChannelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "zigbee" | "802.15.4" => Ok(Protocol::Zigbee),
            "ble" | "ble-adv" | "bluetooth" => Ok(Protocol::BleAdvertising),
            "lora" => Ok(Protocol::LoRa),
            "zwave" | "z-wave" => Ok(Protocol::ZWave),
            _ => Err(ChannelError::UnknownProtocol(s.to_string())),
        }
    }
}

/// A radio channel: center frequency, bandwidth and protocol.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Channel {
    center_freq_hz: u64,
    bandwidth_hz: u64,
    protocol: Protocol,
    label: String,
}

impl Channel {
    pub fn new(
        label: impl Into<String>,
        protocol: Protocol,
        center_freq_hz: u64,
        bandwidth_hz: u64,
    ) -> Result<Self, ChannelError> {
        if bandwidth_hz == 0 || !bandwidth_hz.is_multiple_of(2) {
            return Err(ChannelError::BadBandwidth(bandwidth_hz));
        }
        if bandwidth_hz / 2 >= center_freq_hz {
            return Err(ChannelError::BelowZero {
                center_hz: center_freq_hz,
                bandwidth_hz,
            });
        }
        Ok(Channel {
            center_freq_hz,
            bandwidth_hz,
            protocol,
            label: label.into(),
        })
    }

    pub fn center_freq_hz(&self) -> u64 {
        self.center_freq_hz
    }

    pub fn bandwidth_hz(&self) -> u64 {
        self.bandwidth_hz
    }

    pub fn protocol(&self) -> Protocol {
        self.protocol
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn lower_edge_hz(&self) -> u64 {
        self.center_freq_hz - self.bandwidth_hz / 2
    }

    pub fn upper_edge_hz(&self) -> u64 {
        self.center_freq_hz + self.bandwidth_hz / 2
    }

    pub fn center_mhz(&self) -> f64 {
        self.center_freq_hz as f64 / MHZ as f64
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} ({:.4} MHz, {} kHz)",
            self.label,
            self.center_mhz(),
            self.bandwidth_hz as f64 / KHZ as f64
        )
    }
}

/// Channels ordered by ascending center frequency.
///
/// Equal center frequencies keep their insertion order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ChannelList {
    channels: Vec<Channel>,
}

impl ChannelList {
    pub fn new(mut channels: Vec<Channel>) -> Self {
        channels.sort_by_key(|c| c.center_freq_hz);
        ChannelList { channels }
    }

    pub fn empty() -> Self {
        ChannelList::default()
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<&Channel> {
        self.channels.get(i)
    }

    pub fn first(&self) -> Option<&Channel> {
        self.channels.first()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Channel> {
        self.channels.iter()
    }

    pub fn as_slice(&self) -> &[Channel] {
        &self.channels
    }

    pub fn contains(&self, ch: &Channel) -> bool {
        self.channels.contains(ch)
    }

    pub fn by_label(&self, label: &str) -> Option<&Channel> {
        self.channels.iter().find(|c| c.label == label)
    }

    /// Sorted union of two lists; channels present in both appear once.
    pub fn merge(&self, other: &ChannelList) -> ChannelList {
        let mut all = self.channels.clone();
        for ch in &other.channels {
            if !all.contains(ch) {
                all.push(ch.clone());
            }
        }
        ChannelList::new(all)
    }

    pub fn is_sorted(&self) -> bool {
        self.channels
            .windows(2)
            .all(|w| w[0].center_freq_hz <= w[1].center_freq_hz)
    }

    pub fn labels(&self) -> Vec<&str> {
        self.channels.iter().map(|c| c.label.as_str()).collect()
    }
}

impl FromIterator<Channel> for ChannelList {
    fn from_iter<T: IntoIterator<Item = Channel>>(iter: T) -> Self {
        ChannelList::new(iter.into_iter().collect())
    }
}

impl<'a> IntoIterator for &'a ChannelList {
    type Item = &'a Channel;
    type IntoIter = std::slice::Iter<'a, Channel>;

    fn into_iter(self) -> Self::IntoIter {
        self.channels.iter()
    }
}

fn check_range(plan: &'static str, k: i64, min: i64, max: i64) -> Result<u64, ChannelError> {
    if k < min || k > max {
        return Err(ChannelError::OutOfRange {
            plan,
            index: k,
            min,
            max,
        });
    }
    Ok(k as u64)
}

/// IEEE 802.15.4 2.4 GHz channel `k` (11..=26): 2405 + 5(k − 11) MHz, 2 MHz wide.
pub fn zigbee_channel(k: i64) -> Result<Channel, ChannelError> {
    let k = check_range("zigbee", k, 11, 26)?;
    Channel::new(
        format!("zigbee-{k}"),
        Protocol::Zigbee,
        2405 * MHZ + 5 * MHZ * (k - 11),
        2 * MHZ,
    )
}

pub fn zigbee_channels() -> ChannelList {
    (11..=26)
        .map(|k| zigbee_channel(k).expect("static range"))
        .collect()
}

/// BLE RF channel `k` (0..=39): 2402 + 2k MHz, 1 MHz wide.
pub fn ble_rf_channel(k: i64) -> Result<Channel, ChannelError> {
    let k = check_range("ble rf", k, 0, 39)?;
    Channel::new(
        format!("ble-rf-{k}"),
        Protocol::BleAdvertising,
        2402 * MHZ + 2 * MHZ * k,
        MHZ,
    )
}

/// BLE advertising channel by its channel index (37, 38 or 39).
pub fn ble_advertising_channel(index: i64) -> Result<Channel, ChannelError> {
    let rf = match index {
        37 => 0,
        38 => 12,
        39 => 39,
        _ => {
            return Err(ChannelError::OutOfRange {
                plan: "ble advertising",
                index,
                min: 37,
                max: 39,
            })
        }
    };
    let rf = ble_rf_channel(rf)?;
    Channel::new(
        format!("ble-{index}"),
        Protocol::BleAdvertising,
        rf.center_freq_hz,
        rf.bandwidth_hz,
    )
}

pub fn ble_advertising_channels() -> ChannelList {
    (37..=39)
        .map(|k| ble_advertising_channel(k).expect("static range"))
        .collect()
}

/// US915 LoRaWAN uplink channel `k` (0..=71).
///
/// 0..=63 are 125 kHz channels at 903.2 + 0.2k MHz; 64..=71 are 500 kHz
/// channels at 903.0 + 1.6(k − 64) MHz.
pub fn lora_uplink_channel(k: i64) -> Result<Channel, ChannelError> {
    let k = check_range("lora uplink", k, 0, 71)?;
    let (center, bw) = if k <= 63 {
        (903_200 * KHZ + 200 * KHZ * k, 125 * KHZ)
    } else {
        (903 * MHZ + 1_600 * KHZ * (k - 64), 500 * KHZ)
    };
    Channel::new(format!("lora-ul-{k}"), Protocol::LoRa, center, bw)
}

/// US915 LoRaWAN downlink channel `k` (0..=7): 923.3 + 0.6k MHz, 500 kHz wide.
pub fn lora_downlink_channel(k: i64) -> Result<Channel, ChannelError> {
    let k = check_range("lora downlink", k, 0, 7)?;
    Channel::new(
        format!("lora-dl-{k}"),
        Protocol::LoRa,
        923_300 * KHZ + 600 * KHZ * k,
        500 * KHZ,
    )
}

pub fn zwave_r2() -> Channel {
    Channel::new("zwave-r2", Protocol::ZWave, 908_400 * KHZ, 40 * KHZ).expect("static channel")
}

pub fn zwave_r3() -> Channel {
    Channel::new("zwave-r3", Protocol::ZWave, 916 * MHZ, 100 * KHZ).expect("static channel")
}

/// The two Z-Wave PHYs observed in practice: R2 (908.4 MHz) and R3 (916 MHz).
pub fn zwave_channels() -> ChannelList {
    ChannelList::new(vec![zwave_r2(), zwave_r3()])
}

pub const YOLINK_UPLINK_HZ: u64 = 910_290 * KHZ;
pub const YOLINK_DOWNLINK_HZ: u64 = 923_290 * KHZ;

pub fn yolink_uplink() -> Channel {
    Channel::new("yolink-ul", Protocol::LoRa, YOLINK_UPLINK_HZ, 125 * KHZ).expect("static channel")
}

pub fn yolink_downlink() -> Channel {
    Channel::new("yolink-dl", Protocol::LoRa, YOLINK_DOWNLINK_HZ, 125 * KHZ)
        .expect("static channel")
}

/// YoLink's non-LoRaWAN plan: one 125 kHz uplink and one 125 kHz downlink.
pub fn yolink_lora_channels() -> ChannelList {
    ChannelList::new(vec![yolink_uplink(), yolink_downlink()])
}

/// Resolves a channel label such as `zigbee-11`, `ble-37`, `ble-rf-12`,
/// `lora-ul-35`, `lora-dl-0`, `zwave-r2` or `yolink-ul`.
pub fn resolve_label(label: &str) -> Result<Channel, ChannelError> {
    let unknown = || ChannelError::UnknownLabel(label.to_string());
    let index = |s: &str| s.parse::<i64>().map_err(|_| unknown());
    let lower = label.to_ascii_lowercase();
    match lower.as_str() {
        "zwave-r2" => return Ok(zwave_r2()),
        "zwave-r3" => return Ok(zwave_r3()),
        "yolink-ul" => return Ok(yolink_uplink()),
        "yolink-dl" => return Ok(yolink_downlink()),
        _ => {}
    }
    if let Some(k) = lower.strip_prefix("zigbee-") {
        zigbee_channel(index(k)?)
    } else if let Some(k) = lower.strip_prefix("ble-rf-") {
        ble_rf_channel(index(k)?)
    } else if let Some(k) = lower.strip_prefix("ble-") {
        ble_advertising_channel(index(k)?)
    } else if let Some(k) = lower.strip_prefix("lora-ul-") {
        lora_uplink_channel(index(k)?)
    } else if let Some(k) = lower.strip_prefix("lora-dl-") {
        lora_downlink_channel(index(k)?)
    } else {
        Err(unknown())
    }
}
