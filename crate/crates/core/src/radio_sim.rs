//! Discrete-event radio environment.
//!
//! Every device emits frames as an independent stationary process (Poisson
//! by default, optionally periodic with a uniform random phase). Frames are
//! point events: a frame is received if its timestamp falls inside a listen
//! window on its channel. Concurrent frames never collide; the only
//! impairment is an independent per-frame loss probability.
//!
//! Processes are generated lazily, so an environment is only as expensive
//! as the time span a scanner actually walks through.

use std::collections::HashSet;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel_plan::{Channel, Protocol};
use crate::frame_codec::{
    AddressRules, AdvPduType, BleAdvPdu, CodecError, DeviceAddress, Frame, FrameFormat,
    LoRaFrame, StructuredFrame, ZWaveCheck, ZWaveFrame, ZigbeeAddr, ZigbeeDest, ZigbeeFrame,
    ZigbeeSource,
};

pub const DEFAULT_PROBE_RESPONSE_DELAY_MAX_S: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("time regression: window starts at {start} s but the clock is at {clock} s")]
    TimeRegression { clock: f64, start: f64 },
    #[error("window end {end} s precedes its start {start} s")]
    InvertedWindow { start: f64, end: f64 },
    #[error("{0} has no broadcast probe")]
    UnsupportedProbe(Protocol),
    #[error("address {address} is used by both `{first}` and `{second}`")]
    DuplicateAddress {
        address: DeviceAddress,
        first: String,
        second: String,
    },
    #[error("device `{name}`: {reason}")]
    InvalidDevice { name: String, reason: String },
    #[error("invalid environment parameter: {0}")]
    Parameter(String),
    #[error(transparent)]
    Codec(#[from] CodecError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Coordinator,
    Router,
    EndDevice,
    Gateway,
    Peripheral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmissionModel {
    /// Exponential inter-arrival times.
    #[default]
    Poisson,
    /// Fixed period with a uniformly random phase.
    Periodic,
}

/// Index of a device within its environment / scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DeviceId(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceSpec {
    pub name: String,
    pub protocol: Protocol,
    pub role: Role,
    pub channels: Vec<Channel>,
    pub mean_interarrival_s: f64,
    pub address: DeviceAddress,
    pub aliases: Vec<DeviceAddress>,
    pub responds_to_probe: bool,
    pub model: EmissionModel,
}

impl DeviceSpec {
    pub fn rate(&self) -> f64 {
        1.0 / self.mean_interarrival_s
    }

    pub fn addresses(&self) -> impl Iterator<Item = &DeviceAddress> {
        std::iter::once(&self.address).chain(self.aliases.iter())
    }

    pub fn transmits_on(&self, channel: &Channel) -> bool {
        self.channels.contains(channel)
    }

    fn validate(&self) -> Result<(), SimError> {
        let bad = |reason: String| SimError::InvalidDevice {
            name: self.name.clone(),
            reason,
        };
        if !(self.mean_interarrival_s > 0.0 && self.mean_interarrival_s.is_finite()) {
            return Err(bad(format!(
                "mean inter-arrival must be positive, got {}",
                self.mean_interarrival_s
            )));
        }
        if self.channels.is_empty() {
            return Err(bad("no channels".into()));
        }
        if let Some(ch) = self.channels.iter().find(|c| c.protocol() != self.protocol) {
            return Err(bad(format!("channel {} is not a {} channel", ch.label(), self.protocol)));
        }
        if let Some(a) = self.addresses().find(|a| a.protocol() != self.protocol) {
            return Err(bad(format!("address {a} is not a {} address", self.protocol)));
        }
        match self.protocol {
            Protocol::Zigbee if self.channels.len() != 1 => {
                return Err(bad("a Zigbee device lives on exactly one channel".into()))
            }
            Protocol::BleAdvertising => {
                let labels: HashSet<&str> = self.channels.iter().map(|c| c.label()).collect();
                let adv: HashSet<&str> = ["ble-37", "ble-38", "ble-39"].into_iter().collect();
                if labels != adv {
                    return Err(bad(
                        "a BLE advertiser transmits on all three advertising channels".into(),
                    ));
                }
            }
            _ => {}
        }
        if self.responds_to_probe && !self.protocol.supports_probe() {
            return Err(bad(format!("{} devices cannot answer probes", self.protocol)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentConfig {
    pub devices: Vec<DeviceSpec>,
    pub loss_prob: f64,
    pub probe_response_delay_max_s: f64,
    pub address_rules: AddressRules,
    pub record_log: bool,
}

impl Default for EnvironmentConfig {
    fn default() -> Self {
        EnvironmentConfig {
            devices: Vec::new(),
            loss_prob: 0.0,
            probe_response_delay_max_s: DEFAULT_PROBE_RESPONSE_DELAY_MAX_S,
            address_rules: AddressRules::default(),
            record_log: false,
        }
    }
}

impl EnvironmentConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(0.0..=1.0).contains(&self.loss_prob) {
            return Err(SimError::Parameter(format!(
                "loss probability {} outside [0, 1]",
                self.loss_prob
            )));
        }
        if !(self.probe_response_delay_max_s >= 0.0 && self.probe_response_delay_max_s.is_finite())
        {
            return Err(SimError::Parameter(format!(
                "probe response delay {} must be non-negative",
                self.probe_response_delay_max_s
            )));
        }
        let mut owners: Vec<(DeviceAddress, &str)> = Vec::new();
        for dev in &self.devices {
            dev.validate()?;
            for addr in dev.addresses() {
                if let Some((_, first)) = owners.iter().find(|(a, _)| a == addr) {
                    return Err(SimError::DuplicateAddress {
                        address: *addr,
                        first: first.to_string(),
                        second: dev.name.clone(),
                    });
                }
                owners.push((*addr, &dev.name));
            }
        }
        Ok(())
    }
}

/// One frame on air.
#[derive(Debug, Clone, PartialEq)]
pub struct Emission {
    pub time_s: f64,
    pub channel: Channel,
    pub frame: Frame,
    /// The transmitting device, `None` for frames injected from outside.
    pub device: Option<DeviceId>,
}

#[derive(Debug, Clone)]
struct SimDevice {
    spec: DeviceSpec,
    rng: ChaCha8Rng,
    next_time: f64,
    seq: u8,
}

/// SplitMix64 finalizer, used to derive per-trial seeds.
pub fn mix_seed(seed: u64, trial: u64) -> u64 {
    let mut z = seed ^ trial.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const LOSS_STREAM: u64 = 0;
const PROBE_STREAM: u64 = 1;
const FIRST_DEVICE_STREAM: u64 = 2;

#[derive(Debug, Clone)]
pub struct Environment {
    devices: Vec<SimDevice>,
    clock: f64,
    loss_prob: f64,
    probe_response_delay_max_s: f64,
    rules: AddressRules,
    pending: Vec<Emission>,
    loss_rng: ChaCha8Rng,
    probe_rng: ChaCha8Rng,
    log: Option<Vec<Emission>>,
}

/// Builds the environment for trial `trial` of a scenario. The pair
/// `(seed, trial)` fully determines every emission.
pub fn build_environment(
    config: &EnvironmentConfig,
    seed: u64,
    trial: u64,
) -> Result<Environment, SimError> {
    config.validate()?;
    let base = mix_seed(seed, trial);
    let stream = |s: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(base);
        rng.set_stream(s);
        rng
    };
    let mut devices = Vec::with_capacity(config.devices.len());
    for (i, spec) in config.devices.iter().enumerate() {
        let mut rng = stream(FIRST_DEVICE_STREAM + i as u64);
        let mu = spec.mean_interarrival_s;
        let first = match spec.model {
            EmissionModel::Poisson => sample_exp(&mut rng, mu),
            EmissionModel::Periodic => rng.random::<f64>() * mu,
        };
        devices.push(SimDevice {
            spec: spec.clone(),
            rng,
            next_time: first,
            seq: 0,
        });
    }
    Ok(Environment {
        devices,
        clock: 0.0,
        loss_prob: config.loss_prob,
        probe_response_delay_max_s: config.probe_response_delay_max_s,
        rules: config.address_rules,
        pending: Vec::new(),
        loss_rng: stream(LOSS_STREAM),
        probe_rng: stream(PROBE_STREAM),
        log: config.record_log.then(Vec::new),
    })
}

fn sample_exp(rng: &mut ChaCha8Rng, mean: f64) -> f64 {
    Exp::new(1.0 / mean).expect("positive rate").sample(rng)
}

impl Environment {
    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn device_count(&self) -> usize {
        self.devices.len()
    }

    pub fn device(&self, id: DeviceId) -> &DeviceSpec {
        &self.devices[id.0].spec
    }

    pub fn devices(&self) -> impl Iterator<Item = (DeviceId, &DeviceSpec)> {
        self.devices
            .iter()
            .enumerate()
            .map(|(i, d)| (DeviceId(i), &d.spec))
    }

    pub fn address_rules(&self) -> &AddressRules {
        &self.rules
    }

    pub fn loss_prob(&self) -> f64 {
        self.loss_prob
    }

    /// Every emission generated so far, if logging was enabled.
    pub fn event_log(&self) -> Option<&[Emission]> {
        self.log.as_deref()
    }

    /// The event log as CSV: `time_s,channel_label,protocol,device,frame_hex`.
    pub fn event_log_csv(&self) -> Option<String> {
        let log = self.log.as_ref()?;
        let mut out = String::from("time_s,channel_label,protocol,device,frame_hex\n");
        for e in log {
            let device = e
                .device
                .map(|d| self.devices[d.0].spec.name.as_str())
                .unwrap_or("-");
            let _ = writeln!(
                out,
                "{:.6},{},{},{},{}",
                e.time_s,
                e.channel.label(),
                e.channel.protocol(),
                device,
                e.frame.hex()
            );
        }
        Some(out)
    }

    /// Emissions on `channel` in `[t0, t1)`; see [`Environment::emissions_on`].
    pub fn emissions_in(
        &mut self,
        channel: &Channel,
        t0: f64,
        t1: f64,
    ) -> Result<Vec<Emission>, SimError> {
        self.emissions_on(std::slice::from_ref(channel), t0, t1)
    }

    /// Emissions on any of `channels` with timestamps in `[t0, t1)`, each
    /// independently dropped with the loss probability, in time order.
    /// Advances the clock to `t1`; anything sent before `t0` is never seen.
    pub fn emissions_on(
        &mut self,
        channels: &[Channel],
        t0: f64,
        t1: f64,
    ) -> Result<Vec<Emission>, SimError> {
        if t0 < self.clock {
            return Err(SimError::TimeRegression {
                clock: self.clock,
                start: t0,
            });
        }
        if t1 < t0 {
            return Err(SimError::InvertedWindow { start: t0, end: t1 });
        }
        let mut heard = Vec::new();
        for i in 0..self.devices.len() {
            while self.devices[i].next_time < t1 {
                for emission in self.emit(i)? {
                    if emission.time_s >= t0 && channels.contains(&emission.channel) {
                        heard.push(emission.clone());
                    }
                    if let Some(log) = self.log.as_mut() {
                        log.push(emission);
                    }
                }
            }
        }
        let mut keep = Vec::with_capacity(self.pending.len());
        for emission in std::mem::take(&mut self.pending) {
            if emission.time_s >= t1 {
                keep.push(emission);
            } else if emission.time_s >= t0 && channels.contains(&emission.channel) {
                heard.push(emission);
            }
        }
        self.pending = keep;
        heard.sort_by(|a, b| {
            a.time_s
                .total_cmp(&b.time_s)
                .then(a.device.cmp(&b.device))
                .then(a.channel.center_freq_hz().cmp(&b.channel.center_freq_hz()))
        });
        if self.loss_prob > 0.0 {
            let p = self.loss_prob;
            let rng = &mut self.loss_rng;
            heard.retain(|_| rng.random::<f64>() >= p);
        }
        self.clock = t1;
        Ok(heard)
    }

    /// Sends a broadcast probe on `channel` at time `t`. Every device on the
    /// channel that answers probes schedules one beacon within the response
    /// delay; the scheduled beacons are returned (before loss).
    pub fn inject_probe(&mut self, channel: &Channel, t: f64) -> Result<Vec<Emission>, SimError> {
        if !channel.protocol().supports_probe() {
            return Err(SimError::UnsupportedProbe(channel.protocol()));
        }
        if t < self.clock {
            return Err(SimError::TimeRegression {
                clock: self.clock,
                start: t,
            });
        }
        let mut responses = Vec::new();
        for i in 0..self.devices.len() {
            let dev = &self.devices[i];
            if !dev.spec.responds_to_probe || !dev.spec.transmits_on(channel) {
                continue;
            }
            let delay = self.probe_rng.random::<f64>() * self.probe_response_delay_max_s;
            let frame = self.beacon_frame(i)?;
            responses.push(Emission {
                time_s: t + delay,
                channel: channel.clone(),
                frame,
                device: Some(DeviceId(i)),
            });
        }
        for r in &responses {
            if let Some(log) = self.log.as_mut() {
                log.push(r.clone());
            }
            self.pending.push(r.clone());
        }
        Ok(responses)
    }

    /// Places an arbitrary frame on air, e.g. another scanner's probe.
    pub fn inject_emission(&mut self, emission: Emission) -> Result<(), SimError> {
        if emission.time_s < self.clock {
            return Err(SimError::TimeRegression {
                clock: self.clock,
                start: emission.time_s,
            });
        }
        if let Some(log) = self.log.as_mut() {
            log.push(emission.clone());
        }
        self.pending.push(emission);
        Ok(())
    }

    /// Generates the pending event of device `i` and schedules its next one.
    fn emit(&mut self, i: usize) -> Result<Vec<Emission>, SimError> {
        let time_s = self.devices[i].next_time;
        let channels: Vec<Channel> = {
            let dev = &mut self.devices[i];
            match dev.spec.protocol {
                // One advertising event goes out on every advertising channel.
                Protocol::BleAdvertising => dev.spec.channels.clone(),
                _ => {
                    let k = dev.rng.random_range(0..dev.spec.channels.len());
                    vec![dev.spec.channels[k].clone()]
                }
            }
        };
        let mut out = Vec::with_capacity(channels.len());
        for channel in channels {
            let frame = self.traffic_frame(i, &channel)?;
            out.push(Emission {
                time_s,
                channel,
                frame,
                device: Some(DeviceId(i)),
            });
        }
        let dev = &mut self.devices[i];
        let mu = dev.spec.mean_interarrival_s;
        dev.next_time += match dev.spec.model {
            EmissionModel::Poisson => sample_exp(&mut dev.rng, mu),
            EmissionModel::Periodic => mu,
        };
        Ok(out)
    }

    fn next_seq(&mut self, i: usize) -> u8 {
        let dev = &mut self.devices[i];
        dev.seq = dev.seq.wrapping_add(1);
        dev.seq
    }

    fn zigbee_source(&mut self, i: usize) -> ZigbeeSource {
        let dev = &mut self.devices[i];
        let short = dev.spec.addresses().find_map(|a| match *a {
            DeviceAddress::ZigbeeShort { pan_id, addr } => Some((pan_id, addr)),
            _ => None,
        });
        let ext = dev.spec.addresses().find_map(|a| match *a {
            DeviceAddress::ZigbeeExtended(x) => Some(x),
            _ => None,
        });
        let pan_id = short.map_or(0x0000, |(pan, _)| pan);
        match (short, ext) {
            (Some((_, s)), Some(x)) => {
                // Devices known by both forms use either in their traffic.
                let addr = if dev.rng.random::<bool>() {
                    ZigbeeAddr::Short(s)
                } else {
                    ZigbeeAddr::Extended(x)
                };
                ZigbeeSource { pan_id, addr }
            }
            (Some((_, s)), None) => ZigbeeSource {
                pan_id,
                addr: ZigbeeAddr::Short(s),
            },
            (None, Some(x)) => ZigbeeSource {
                pan_id,
                addr: ZigbeeAddr::Extended(x),
            },
            (None, None) => unreachable!("validated Zigbee device without Zigbee address"),
        }
    }

    fn beacon_frame(&mut self, i: usize) -> Result<Frame, SimError> {
        let seq = self.next_seq(i);
        let src = self.zigbee_source(i);
        // Superframe spec, GTS and pending-address fields of an open PAN.
        let payload = vec![0xFF, 0xCF, 0x00, 0x00];
        Ok(StructuredFrame::Zigbee(ZigbeeFrame::beacon(seq, src, payload)).to_frame()?)
    }

    fn traffic_frame(&mut self, i: usize, channel: &Channel) -> Result<Frame, SimError> {
        let seq = self.next_seq(i);
        let address = self.devices[i].spec.address;
        let structured = match address {
            DeviceAddress::ZigbeeShort { .. } | DeviceAddress::ZigbeeExtended(_) => {
                let src = self.zigbee_source(i);
                let dest = ZigbeeDest {
                    pan_id: src.pan_id,
                    addr: 0x0000,
                };
                StructuredFrame::Zigbee(ZigbeeFrame::data(seq, dest, src, vec![0x08, seq, 0x00]))
            }
            DeviceAddress::BleAdvA(adv_a) => StructuredFrame::Ble(BleAdvPdu {
                pdu_type: AdvPduType::AdvInd,
                adv_a,
                adv_data: vec![0x02, 0x01, 0x06, 0x03, 0xFF, 0x00, seq],
            }),
            DeviceAddress::LoRaId { sync_word, id } => {
                let index = self.rules.lora_id_index;
                let mut payload = vec![0u8; (index + 1).max(8)];
                self.devices[i].rng.fill(&mut payload[..]);
                payload[index] = id;
                StructuredFrame::LoRa(LoRaFrame { sync_word, payload })
            }
            DeviceAddress::ZWaveId { home_id, source_id } => {
                let check = match FrameFormat::for_channel(channel) {
                    FrameFormat::ZWaveR3 => ZWaveCheck::Crc16,
                    _ => ZWaveCheck::Xor8,
                };
                let dest_id = if source_id == 1 { 0xFF } else { 1 };
                StructuredFrame::ZWave(ZWaveFrame {
                    home_id,
                    source_id,
                    frame_control: 0x0141 | ((seq as u16 & 0x0F) << 8),
                    dest_id,
                    payload: vec![0x20, 0x02],
                    check,
                })
            }
        };
        Ok(structured.to_frame()?)
    }
}
