//! Passive, active, multi-channel and multi-protocol scanning against a
//! simulated [`Environment`], with an SDR that captures a bounded span of
//! spectrum at a time.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel_plan::{Channel, ChannelList};
use crate::frame_codec::{decode_format, extract_address_with, DeviceAddress};
use crate::radio_sim::{DeviceId, Environment, SimError};

pub const DEFAULT_INSTANTANEOUS_BANDWIDTH_HZ: u64 = 8_000_000;
pub const DEFAULT_DWELL_TIME_S: f64 = 1.0;
pub const DEFAULT_PROBE_DWELL_TIME_S: f64 = 0.2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScanError {
    #[error("channel list is empty")]
    EmptyChannelList,
    #[error("invalid scan parameter: {0}")]
    Parameter(String),
    #[error(transparent)]
    Sim(#[from] SimError),
}

pub type Result<T> = std::result::Result<T, ScanError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SdrConfig {
    pub instantaneous_bandwidth_hz: u64,
    pub retune_latency_s: f64,
}

impl Default for SdrConfig {
    fn default() -> Self {
        SdrConfig {
            instantaneous_bandwidth_hz: DEFAULT_INSTANTANEOUS_BANDWIDTH_HZ,
            retune_latency_s: 0.0,
        }
    }
}

impl SdrConfig {
    pub fn validate(&self) -> Result<()> {
        if self.instantaneous_bandwidth_hz == 0 {
            return Err(ScanError::Parameter("instantaneous bandwidth must be positive".into()));
        }
        if !(self.retune_latency_s >= 0.0 && self.retune_latency_s.is_finite()) {
            return Err(ScanError::Parameter(format!(
                "retune latency {} must be non-negative",
                self.retune_latency_s
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanParams {
    pub dwell_time_s: f64,
    #[serde(default = "default_probe_dwell")]
    pub probe_dwell_time_s: f64,
    pub scan_time_s: f64,
}

fn default_probe_dwell() -> f64 {
    DEFAULT_PROBE_DWELL_TIME_S
}

impl ScanParams {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.dwell_time_s) || !positive(self.probe_dwell_time_s) {
            return Err(ScanError::Parameter("dwell times must be positive".into()));
        }
        if !(self.scan_time_s >= self.dwell_time_s && self.scan_time_s.is_finite()) {
            return Err(ScanError::Parameter(format!(
                "scan time {} must be at least the dwell time {}",
                self.scan_time_s, self.dwell_time_s
            )));
        }
        Ok(())
    }
}

/// Identity of a discovered transmitter: a scenario device, or an address
/// that matched none of them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DeviceKey {
    Known(DeviceId),
    Foreign(DeviceAddress),
}

/// Maps every address and alias of the environment's devices to the device.
#[derive(Debug, Clone, Default)]
pub struct AddressBook {
    map: HashMap<DeviceAddress, DeviceId>,
}

impl AddressBook {
    pub fn from_environment(env: &Environment) -> Self {
        let map = env
            .devices()
            .flat_map(|(id, spec)| spec.addresses().map(move |a| (*a, id)))
            .collect();
        AddressBook { map }
    }

    pub fn resolve(&self, addr: &DeviceAddress) -> DeviceKey {
        self.map
            .get(addr)
            .map_or(DeviceKey::Foreign(*addr), |id| DeviceKey::Known(*id))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DiscoveryLog {
    first_seen: BTreeMap<DeviceKey, f64>,
    addresses: BTreeSet<DeviceAddress>,
}

impl DiscoveryLog {
    fn record(&mut self, key: DeviceKey, addr: DeviceAddress, t: f64) {
        self.first_seen.entry(key).or_insert(t);
        self.addresses.insert(addr);
    }

    pub fn first_seen(&self, key: &DeviceKey) -> Option<f64> {
        self.first_seen.get(key).copied()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&DeviceKey, f64)> {
        self.first_seen.iter().map(|(k, t)| (k, *t))
    }

    pub fn len(&self) -> usize {
        self.first_seen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.first_seen.is_empty()
    }

    pub fn addresses(&self) -> &BTreeSet<DeviceAddress> {
        &self.addresses
    }

    pub fn contains(&self, id: DeviceId) -> bool {
        self.first_seen.contains_key(&DeviceKey::Known(id))
    }

    /// First-seen time of devices `0..count`, `None` for those not found.
    pub fn known_times(&self, count: usize) -> Vec<Option<f64>> {
        (0..count)
            .map(|i| self.first_seen(&DeviceKey::Known(DeviceId(i))))
            .collect()
    }

    /// Time at which the last of the known devices was found, if all were.
    pub fn completion_time(&self, count: usize) -> Option<f64> {
        self.known_times(count)
            .into_iter()
            .try_fold(0.0, |acc: f64, t| t.map(|t| acc.max(t)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VisitKind {
    Listen,
    Probe,
}

/// One tuned window, with times relative to the start of the scan.
#[derive(Debug, Clone, PartialEq)]
pub struct Visit {
    pub labels: Vec<String>,
    pub start_s: f64,
    pub end_s: f64,
    pub kind: VisitKind,
}

/// One stage of a sequential scan: passive scanning of `channels` until
/// every device in `until` is found.
#[derive(Debug, Clone, PartialEq)]
pub struct SequentialStage {
    pub channels: Vec<Channel>,
    pub until: Vec<DeviceId>,
}

/// Channels of `ch_list` that fit in `bandwidth_hz` alongside its first
/// (lowest) channel: those whose upper edge lies within `bandwidth_hz` of the
/// first channel's lower edge. The first channel is always included, even
/// when it is wider than the capture span.
pub fn find_channels_in_range(ch_list: &ChannelList, bandwidth_hz: u64) -> Result<ChannelList> {
    let first = ch_list.first().ok_or(ScanError::EmptyChannelList)?;
    let start = first.lower_edge_hz();
    let mut range: Vec<Channel> = ch_list
        .iter()
        .filter(|ch| ch.upper_edge_hz().saturating_sub(start) <= bandwidth_hz)
        .cloned()
        .collect();
    if range.first() != Some(first) {
        // A channel wider than the capture span is still received on its own.
        range.insert(0, first.clone());
    }
    Ok(ChannelList::new(range))
}

/// Partitions `ch_list` into capture groups, each anchored at the lowest
/// channel not yet assigned.
pub fn channel_groups(ch_list: &ChannelList, bandwidth_hz: u64) -> Result<Vec<ChannelList>> {
    if ch_list.is_empty() {
        return Err(ScanError::EmptyChannelList);
    }
    let mut unscanned = ch_list.clone();
    let mut groups = Vec::new();
    while !unscanned.is_empty() {
        let range = find_channels_in_range(&unscanned, bandwidth_hz)?;
        unscanned = unscanned.iter().filter(|c| !range.contains(c)).cloned().collect();
        groups.push(range);
    }
    Ok(groups)
}

/// A scan session. Owns the environment for its duration; all times in the
/// discovery log are relative to the moment the scanner was created.
pub struct Scanner<'e> {
    env: &'e mut Environment,
    sdr: SdrConfig,
    book: AddressBook,
    start: f64,
    now: f64,
    tuned: Vec<Channel>,
    log: DiscoveryLog,
    trace: Option<Vec<Visit>>,
    target: Option<BTreeSet<DeviceId>>,
}

impl<'e> Scanner<'e> {
    pub fn new(env: &'e mut Environment, sdr: SdrConfig) -> Result<Self> {
        sdr.validate()?;
        let book = AddressBook::from_environment(env);
        let start = env.clock();
        Ok(Scanner {
            env,
            sdr,
            book,
            start,
            now: start,
            tuned: Vec::new(),
            log: DiscoveryLog::default(),
            trace: None,
            target: None,
        })
    }

    /// Keeps a record of every tuned window.
    pub fn with_trace(mut self) -> Self {
        self.trace = Some(Vec::new());
        self
    }

    /// Ends every scan loop as soon as all of `ids` have been discovered.
    /// Discovery times are unaffected; only the remaining idle listening is
    /// skipped.
    pub fn stop_when_found(mut self, ids: impl IntoIterator<Item = DeviceId>) -> Self {
        self.target = Some(ids.into_iter().collect());
        self
    }

    /// Seconds since the scan started.
    pub fn elapsed(&self) -> f64 {
        self.now - self.start
    }

    pub fn log(&self) -> &DiscoveryLog {
        &self.log
    }

    pub fn into_log(self) -> DiscoveryLog {
        self.log
    }

    pub fn trace(&self) -> Option<&[Visit]> {
        self.trace.as_deref()
    }

    fn done(&self) -> bool {
        self.target
            .as_ref()
            .is_some_and(|t| t.iter().all(|id| self.log.contains(*id)))
    }

    fn all_found(&self, ids: &[DeviceId]) -> bool {
        ids.iter().all(|id| self.log.contains(*id))
    }

    fn tune(&mut self, channels: &[Channel]) {
        if self.tuned.as_slice() != channels {
            self.now += self.sdr.retune_latency_s;
            self.tuned = channels.to_vec();
        }
    }

    /// Listens on every channel of `channels` over one shared window.
    fn listen_window(
        &mut self,
        channels: &[Channel],
        dwell_time_s: f64,
        kind: VisitKind,
    ) -> Result<BTreeSet<DeviceAddress>> {
        let t0 = self.now;
        let t1 = t0 + dwell_time_s;
        let heard = self.env.emissions_on(channels, t0, t1)?;
        let rules = *self.env.address_rules();
        let mut found = BTreeSet::new();
        for emission in heard {
            let Ok(frame) = decode_format(emission.frame.format, &emission.frame.bytes) else {
                continue;
            };
            if let Some(addr) = extract_address_with(&frame, &rules) {
                let key = self.book.resolve(&addr);
                self.log.record(key, addr, emission.time_s - self.start);
                found.insert(addr);
            }
        }
        self.now = t1;
        if let Some(trace) = self.trace.as_mut() {
            trace.push(Visit {
                labels: channels.iter().map(|c| c.label().to_string()).collect(),
                start_s: t0 - self.start,
                end_s: t1 - self.start,
                kind,
            });
        }
        Ok(found)
    }

    /// Receives on one channel for `dwell_time_s` and returns the addresses heard.
    pub fn listen(&mut self, ch: &Channel, dwell_time_s: f64) -> Result<BTreeSet<DeviceAddress>> {
        let chans = std::slice::from_ref(ch);
        self.tune(chans);
        self.listen_window(chans, dwell_time_s, VisitKind::Listen)
    }

    /// Receives on all of `ch_range` over the same window; one dwell is charged.
    pub fn listen_in_parallel(
        &mut self,
        ch_range: &ChannelList,
        dwell_time_s: f64,
    ) -> Result<BTreeSet<DeviceAddress>> {
        if ch_range.is_empty() {
            return Err(ScanError::EmptyChannelList);
        }
        self.tune(ch_range.as_slice());
        self.listen_window(ch_range.as_slice(), dwell_time_s, VisitKind::Listen)
    }

    /// Round-robin listening over `ch_list`, starting at its first channel,
    /// for as long as no more than `scan_time_s` has elapsed when a visit starts.
    pub fn passive_scan(
        &mut self,
        ch_list: &[Channel],
        dwell_time_s: f64,
        scan_time_s: f64,
    ) -> Result<BTreeSet<DeviceAddress>> {
        if ch_list.is_empty() {
            return Err(ScanError::EmptyChannelList);
        }
        let t_start = self.now;
        let mut devices = BTreeSet::new();
        let mut i = 0;
        while self.now - t_start <= scan_time_s && !self.done() {
            devices.extend(self.listen(&ch_list[i], dwell_time_s)?);
            i = (i + 1) % ch_list.len();
        }
        Ok(devices)
    }

    /// Probes each channel and listens for `dwell_time_s`; returns the
    /// channels on which anything was heard and the addresses found.
    pub fn probe_channels(
        &mut self,
        ch_list: &[Channel],
        dwell_time_s: f64,
    ) -> Result<(Vec<Channel>, BTreeSet<DeviceAddress>)> {
        if let Some(ch) = ch_list.iter().find(|c| !c.protocol().supports_probe()) {
            return Err(SimError::UnsupportedProbe(ch.protocol()).into());
        }
        let mut active = Vec::new();
        let mut devices = BTreeSet::new();
        for ch in ch_list {
            let chans = std::slice::from_ref(ch);
            self.tune(chans);
            self.env.inject_probe(ch, self.now)?;
            let found = self.listen_window(chans, dwell_time_s, VisitKind::Probe)?;
            if !found.is_empty() {
                devices.extend(found);
                active.push(ch.clone());
            }
        }
        Ok((active, devices))
    }

    /// Probes `ch_list`, then passively scans only the responsive channels
    /// for the rest of `scan_time_s`.
    pub fn active_scan(
        &mut self,
        ch_list: &[Channel],
        probe_dwell_time_s: f64,
        dwell_time_s: f64,
        scan_time_s: f64,
    ) -> Result<BTreeSet<DeviceAddress>> {
        let t_start = self.now;
        let (active, mut devices) = self.probe_channels(ch_list, probe_dwell_time_s)?;
        let t_scan = scan_time_s - (self.now - t_start);
        if !active.is_empty() {
            devices.extend(self.passive_scan(&active, dwell_time_s, t_scan)?);
        }
        Ok(devices)
    }

    /// Round-robin over capture groups of `ch_list`, listening to each group
    /// in parallel.
    pub fn multiprotocol_scan(
        &mut self,
        ch_list: &ChannelList,
        dwell_time_s: f64,
        scan_time_s: f64,
    ) -> Result<BTreeSet<DeviceAddress>> {
        let groups = channel_groups(ch_list, self.sdr.instantaneous_bandwidth_hz)?;
        let t_start = self.now;
        let mut devices = BTreeSet::new();
        let mut i = 0;
        while self.now - t_start <= scan_time_s && !self.done() {
            devices.extend(self.listen_in_parallel(&groups[i], dwell_time_s)?);
            i = (i + 1) % groups.len();
        }
        Ok(devices)
    }

    /// Probes `ch_probe_list`, merges the responsive channels into `ch_list`
    /// and runs a multiprotocol scan over the result for the remaining time.
    pub fn active_multiprotocol_scan(
        &mut self,
        ch_list: &ChannelList,
        ch_probe_list: &[Channel],
        probe_dwell_time_s: f64,
        dwell_time_s: f64,
        scan_time_s: f64,
    ) -> Result<BTreeSet<DeviceAddress>> {
        let t_start = self.now;
        let (active, mut devices) = self.probe_channels(ch_probe_list, probe_dwell_time_s)?;
        let t_scan = scan_time_s - (self.now - t_start);
        let merged = ChannelList::new(active).merge(ch_list);
        if !merged.is_empty() {
            devices.extend(self.multiprotocol_scan(&merged, dwell_time_s, t_scan)?);
        }
        Ok(devices)
    }

    /// Passive scans run one after another. Each stage ends once all of its
    /// devices are found; the whole sequence stops after `scan_time_s`.
    pub fn sequential_passive_scan(
        &mut self,
        stages: &[SequentialStage],
        dwell_time_s: f64,
        scan_time_s: f64,
    ) -> Result<BTreeSet<DeviceAddress>> {
        let t_start = self.now;
        let mut devices = BTreeSet::new();
        for stage in stages {
            if stage.channels.is_empty() {
                return Err(ScanError::EmptyChannelList);
            }
            let mut i = 0;
            while self.now - t_start <= scan_time_s
                && !self.all_found(&stage.until)
                && !self.done()
            {
                devices.extend(self.listen(&stage.channels[i], dwell_time_s)?);
                i = (i + 1) % stage.channels.len();
            }
        }
        Ok(devices)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel_plan::{
        ble_advertising_channel, ble_advertising_channels, yolink_uplink, zigbee_channel,
        zigbee_channels, zwave_r2, zwave_r3, Protocol,
    };
    use crate::frame_codec::{StructuredFrame, ZigbeeFrame};
    use crate::radio_sim::{
        build_environment, DeviceSpec, Emission, EmissionModel, EnvironmentConfig, Role,
    };
    use proptest::prelude::*;

    fn zigbee(name: &str, ch: i64, addr: u16, mu: f64, role: Role) -> DeviceSpec {
        DeviceSpec {
            name: name.into(),
            protocol: Protocol::Zigbee,
            role,
            channels: vec![zigbee_channel(ch).unwrap()],
            mean_interarrival_s: mu,
            address: DeviceAddress::ZigbeeShort {
                pan_id: 0x00AB + ch as u16,
                addr,
            },
            aliases: vec![],
            responds_to_probe: matches!(role, Role::Coordinator | Role::Router),
            model: EmissionModel::Poisson,
        }
    }

    fn ble(name: &str, adv_a: u64, mu: f64) -> DeviceSpec {
        DeviceSpec {
            name: name.into(),
            protocol: Protocol::BleAdvertising,
            role: Role::Peripheral,
            channels: ble_advertising_channels().iter().cloned().collect(),
            mean_interarrival_s: mu,
            address: DeviceAddress::BleAdvA(adv_a),
            aliases: vec![],
            responds_to_probe: false,
            model: EmissionModel::Poisson,
        }
    }

    fn env_of(devices: Vec<DeviceSpec>, seed: u64) -> Environment {
        let cfg = EnvironmentConfig {
            devices,
            ..Default::default()
        };
        build_environment(&cfg, seed, 0).unwrap()
    }

    fn list(chans: Vec<Channel>) -> ChannelList {
        ChannelList::new(chans)
    }

    fn labels(l: &ChannelList) -> Vec<&str> {
        l.labels()
    }

    #[test]
    fn channels_in_range_examples() {
        let bw = 8_000_000;
        let a = list(vec![ble_advertising_channel(37).unwrap(), zigbee_channel(11).unwrap()]);
        assert_eq!(labels(&find_channels_in_range(&a, bw).unwrap()), ["ble-37", "zigbee-11"]);

        let b = list(vec![zigbee_channel(20).unwrap(), ble_advertising_channel(39).unwrap()]);
        assert_eq!(labels(&find_channels_in_range(&b, bw).unwrap()), ["zigbee-20"]);

        let c = list(vec![zwave_r2(), yolink_uplink(), zwave_r3()]);
        let r = find_channels_in_range(&c, bw).unwrap();
        assert_eq!(r.len(), 3);
        // 916.05 MHz upper edge minus 908.38 MHz lower edge.
        assert_eq!(zwave_r3().upper_edge_hz() - zwave_r2().lower_edge_hz(), 7_670_000);

        assert_eq!(
            find_channels_in_range(&ChannelList::empty(), bw),
            Err(ScanError::EmptyChannelList)
        );
    }

    #[test]
    fn zigbee_and_ble_groups() {
        let merged = list(vec![
            zigbee_channel(11).unwrap(),
            zigbee_channel(15).unwrap(),
            zigbee_channel(20).unwrap(),
        ])
        .merge(&ble_advertising_channels());
        let groups = channel_groups(&merged, 8_000_000).unwrap();
        let got: Vec<Vec<&str>> = groups.iter().map(|g| g.labels()).collect();
        assert_eq!(
            got,
            vec![
                vec!["ble-37", "zigbee-11"],
                vec!["zigbee-15", "ble-38"],
                vec!["zigbee-20"],
                vec!["ble-39"],
            ]
        );
    }

    #[test]
    fn listen_on_silent_channel() {
        let mut env = env_of(vec![], 1);
        let mut s = Scanner::new(&mut env, SdrConfig::default()).unwrap();
        assert!(s.listen(&zigbee_channel(11).unwrap(), 5.0).unwrap().is_empty());
        assert_eq!(s.elapsed(), 5.0);
    }

    #[test]
    fn listen_ignores_address_less_frames() {
        let mut env = env_of(vec![], 1);
        let ch = zigbee_channel(11).unwrap();
        let req = StructuredFrame::Zigbee(ZigbeeFrame::beacon_request(3)).to_frame().unwrap();
        env.inject_emission(Emission {
            time_s: 0.5,
            channel: ch.clone(),
            frame: req,
            device: None,
        })
        .unwrap();
        let mut s = Scanner::new(&mut env, SdrConfig::default()).unwrap();
        assert!(s.listen(&ch, 1.0).unwrap().is_empty());
    }

    #[test]
    fn listen_records_first_seen() {
        let mut env = env_of(vec![zigbee("a", 11, 1, 0.5, Role::EndDevice)], 4);
        let ch = zigbee_channel(11).unwrap();
        let mut probe_env = env.clone();
        let first = probe_env.emissions_in(&ch, 0.0, 100.0).unwrap()[0].time_s;
        let mut s = Scanner::new(&mut env, SdrConfig::default()).unwrap();
        let found = s.listen(&ch, 100.0).unwrap();
        assert_eq!(found.len(), 1);
        assert_eq!(s.log().first_seen(&DeviceKey::Known(DeviceId(0))), Some(first));
        assert_eq!(s.log().completion_time(1), Some(first));
    }

    #[test]
    fn passive_scan_loop_bound() {
        let mut env = env_of(vec![], 1);
        let mut s = Scanner::new(&mut env, SdrConfig::default()).unwrap().with_trace();
        s.passive_scan(&[zigbee_channel(11).unwrap()], 1.0, 0.5).unwrap();
        assert_eq!(s.trace().unwrap().len(), 1);
        assert!(matches!(s.passive_scan(&[], 1.0, 1.0), Err(ScanError::EmptyChannelList)));
    }

    #[test]
    fn passive_scan_visits_round_robin() {
        let mut env = env_of(vec![], 1);
        let chans: Vec<Channel> = zigbee_channels().iter().cloned().collect();
        let mut s = Scanner::new(&mut env, SdrConfig::default()).unwrap().with_trace();
        s.passive_scan(&chans, 1.0, 40.0).unwrap();
        let trace = s.trace().unwrap();
        // Visits start at 0, 1, ..., 40: the loop checks elapsed <= scan_time.
        assert_eq!(trace.len(), 41);
        for (k, v) in trace.iter().enumerate() {
            assert_eq!(v.labels, [chans[k % 16].label()]);
            assert_eq!(v.start_s, k as f64);
        }
    }

    #[test]
    fn single_channel_device_only_heard_on_its_channel() {
        let mut env = env_of(vec![zigbee("a", 11, 1, 0.05, Role::EndDevice)], 2);
        let chans: Vec<Channel> = zigbee_channels().iter().cloned().collect();
        let mut s = Scanner::new(&mut env, SdrConfig::default()).unwrap();
        s.passive_scan(&chans[1..], 1.0, 100.0).unwrap();
        assert!(s.log().is_empty());
        s.passive_scan(&chans, 1.0, 100.0).unwrap();
        assert!(s.log().contains(DeviceId(0)));
    }

    #[test]
    fn probe_finds_coordinator_channels() {
        let devices = vec![
            zigbee("q", 11, 1, 50.0, Role::Coordinator),
            zigbee("i", 15, 2, 50.0, Role::Coordinator),
            zigbee("e", 20, 3, 50.0, Role::Coordinator),
            zigbee("x", 20, 4, 50.0, Role::EndDevice),
        ];
        let mut env = env_of(devices, 3);
        let chans: Vec<Channel> = zigbee_channels().iter().cloned().collect();
        let mut s = Scanner::new(&mut env, SdrConfig::default()).unwrap();
        let (active, found) = s.probe_channels(&chans, 0.2).unwrap();
        let active: Vec<&str> = active.iter().map(|c| c.label()).collect();
        // A stray frame from the end device could add to the found set but
        // never adds a channel.
        assert_eq!(active, ["zigbee-11", "zigbee-15", "zigbee-20"]);
        assert!(found.len() >= 3);
        assert!((s.elapsed() - 3.2).abs() < 1e-9);
    }

    #[test]
    fn probe_on_silent_or_lossy_band() {
        let chans: Vec<Channel> = zigbee_channels().iter().cloned().collect();
        let mut env = env_of(vec![], 3);
        let mut s = Scanner::new(&mut env, SdrConfig::default()).unwrap();
        let (active, found) = s.probe_channels(&chans, 0.2).unwrap();
        assert!(active.is_empty() && found.is_empty());

        let cfg = EnvironmentConfig {
            devices: vec![zigbee("q", 11, 1, 1.0, Role::Coordinator)],
            loss_prob: 1.0,
            ..Default::default()
        };
        let mut env = build_environment(&cfg, 3, 0).unwrap();
        let mut s = Scanner::new(&mut env, SdrConfig::default()).unwrap();
        let (active, found) = s.probe_channels(&chans, 0.2).unwrap();
        assert!(active.is_empty() && found.is_empty());

        let mut env = env_of(vec![], 3);
        let mut s = Scanner::new(&mut env, SdrConfig::default()).unwrap();
        let ble: Vec<Channel> = ble_advertising_channels().iter().cloned().collect();
        assert!(matches!(
            s.probe_channels(&ble, 0.2),
            Err(ScanError::Sim(SimError::UnsupportedProbe(Protocol::BleAdvertising)))
        ));
    }

    #[test]
    fn active_scan_finds_end_devices_in_phase_two() {
        let devices = vec![
            zigbee("coord", 15, 1, 500.0, Role::Coordinator),
            zigbee("sleepy", 15, 2, 5.0, Role::EndDevice),
        ];
        let mut env = env_of(devices, 8);
        let chans: Vec<Channel> = zigbee_channels().iter().cloned().collect();
        let mut s = Scanner::new(&mut env, SdrConfig::default()).unwrap().with_trace();
        s.active_scan(&chans, 0.2, 1.0, 200.0).unwrap();
        assert!(s.log().contains(DeviceId(0)));
        assert!(s.log().contains(DeviceId(1)));
        // The coordinator is found while probing, before phase two starts.
        assert!(s.log().first_seen(&DeviceKey::Known(DeviceId(0))).unwrap() < 3.2);
        let phase2 = &s.trace().unwrap()[16..];
        assert!(phase2.iter().all(|v| v.labels == ["zigbee-15"] && v.kind == VisitKind::Listen));
    }

    #[test]
    fn active_scan_with_no_responders_returns_phase_one() {
        let mut env = env_of(vec![zigbee("x", 11, 1, 1.0, Role::EndDevice)], 5);
        let mut s = Scanner::new(&mut env, SdrConfig::default()).unwrap().with_trace();
        // Probe a channel with nothing on it.
        s.active_scan(&[zigbee_channel(26).unwrap()], 0.2, 1.0, 100.0).unwrap();
        assert_eq!(s.trace().unwrap().len(), 1);
        assert!(s.log().is_empty());
    }

    #[test]
    fn active_scan_all_routers_found_while_probing() {
        let devices: Vec<DeviceSpec> = (0..5)
            .map(|i| zigbee(&format!("r{i}"), 11 + i as i64, 10 + i as u16, 1e6, Role::Router))
            .collect();
        let mut env = env_of(devices, 5);
        let chans: Vec<Channel> = zigbee_channels().iter().cloned().collect();
        let mut s = Scanner::new(&mut env, SdrConfig::default()).unwrap();
        let (active, found) = s.probe_channels(&chans, 0.2).unwrap();
        assert_eq!(active.len(), 5);
        assert_eq!(found.len(), 5);
    }

    #[test]
    fn parallel_equals_union_of_listens_on_a_frozen_log() {
        let devices = vec![
            ble("b", 0x0000_1111_2222, 0.3),
            zigbee("z", 11, 7, 0.2, Role::EndDevice),
            zigbee("y", 11, 8, 0.4, Role::EndDevice),
        ];
        let env = env_of(devices, 12);
        let group = list(vec![ble_advertising_channel(37).unwrap(), zigbee_channel(11).unwrap()]);
        for w in 0..20 {
            let t0 = w as f64 * 1.0;
            let mut par_env = env.clone();
            let mut par = Scanner::new(&mut par_env, SdrConfig::default()).unwrap();
            par.listen(&zigbee_channel(26).unwrap(), t0).unwrap();
            let together = par.listen_in_parallel(&group, 1.0).unwrap();

            let mut union = BTreeSet::new();
            for ch in group.iter() {
                let mut e = env.clone();
                let mut s = Scanner::new(&mut e, SdrConfig::default()).unwrap();
                s.listen(&zigbee_channel(26).unwrap(), t0).unwrap();
                union.extend(s.listen(ch, 1.0).unwrap());
            }
            assert_eq!(together, union);
        }
        // A group of one behaves exactly like listen.
        let single = list(vec![zigbee_channel(11).unwrap()]);
        let (mut e1, mut e2) = (env.clone(), env.clone());
        let a = Scanner::new(&mut e1, SdrConfig::default())
            .unwrap()
            .listen_in_parallel(&single, 3.0)
            .unwrap();
        let b = Scanner::new(&mut e2, SdrConfig::default())
            .unwrap()
            .listen(&zigbee_channel(11).unwrap(), 3.0)
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_channel_groups_match_passive_visits() {
        let chans = zigbee_channels();
        let env = env_of(vec![zigbee("a", 13, 1, 2.0, Role::EndDevice)], 9);
        let (mut e1, mut e2) = (env.clone(), env);
        let mut multi = Scanner::new(&mut e1, SdrConfig::default()).unwrap().with_trace();
        // 8 MHz cannot hold two 2 MHz channels spaced 5 MHz apart plus edges.
        multi.multiprotocol_scan(&chans, 1.0, 60.0).unwrap();
        let mut passive = Scanner::new(&mut e2, SdrConfig::default()).unwrap().with_trace();
        passive.passive_scan(chans.as_slice(), 1.0, 60.0).unwrap();
        let narrow = SdrConfig {
            instantaneous_bandwidth_hz: 2_000_000,
            ..Default::default()
        };
        assert_eq!(channel_groups(&chans, narrow.instantaneous_bandwidth_hz).unwrap().len(), 16);
        // With an 8 MHz span pairs of channels are grouped, so compare the
        // narrow-band scanner instead.
        let env = env_of(vec![zigbee("a", 13, 1, 2.0, Role::EndDevice)], 9);
        let (mut e1, mut e2) = (env.clone(), env);
        let mut multi = Scanner::new(&mut e1, narrow).unwrap().with_trace();
        multi.multiprotocol_scan(&chans, 1.0, 60.0).unwrap();
        let mut passive = Scanner::new(&mut e2, narrow).unwrap().with_trace();
        passive.passive_scan(chans.as_slice(), 1.0, 60.0).unwrap();
        assert_eq!(multi.trace(), passive.trace());
        assert_eq!(multi.log(), passive.log());
    }

    #[test]
    fn one_group_listens_continuously() {
        let devices = vec![
            DeviceSpec {
                name: "zw".into(),
                protocol: Protocol::ZWave,
                role: Role::EndDevice,
                channels: vec![zwave_r2()],
                mean_interarrival_s: 10.0,
                address: DeviceAddress::ZWaveId {
                    home_id: 0xC0FF_EE00,
                    source_id: 2,
                },
                aliases: vec![],
                responds_to_probe: false,
                model: EmissionModel::Poisson,
            },
            DeviceSpec {
                name: "lora".into(),
                protocol: Protocol::LoRa,
                role: Role::EndDevice,
                channels: vec![yolink_uplink()],
                mean_interarrival_s: 10.0,
                address: DeviceAddress::LoRaId {
                    sync_word: 0x3444,
                    id: 9,
                },
                aliases: vec![],
                responds_to_probe: false,
                model: EmissionModel::Poisson,
            },
        ];
        let mut env = env_of(devices, 21);
        let mut probe_env = env.clone();
        let chans = list(vec![zwave_r2(), yolink_uplink(), zwave_r3()]);
        let firsts: Vec<f64> = [zwave_r2(), yolink_uplink()]
            .iter()
            .map(|c| {
                let mut e = probe_env.clone();
                e.emissions_in(c, 0.0, 1e4).unwrap()[0].time_s
            })
            .collect();
        probe_env.emissions_in(&zwave_r2(), 0.0, 1.0).unwrap();
        let mut s = Scanner::new(&mut env, SdrConfig::default()).unwrap().stop_when_found([
            DeviceId(0),
            DeviceId(1),
        ]);
        s.multiprotocol_scan(&chans, 1.0, 1e4).unwrap();
        assert_eq!(s.log().known_times(2), vec![Some(firsts[0]), Some(firsts[1])]);
    }

    #[test]
    fn active_multiprotocol_without_probe_list_is_multiprotocol() {
        let devices = vec![ble("b", 0x0A0B_0C0D_0E0F, 3.0), zigbee("z", 11, 2, 3.0, Role::EndDevice)];
        let env = env_of(devices, 30);
        let chans = list(vec![zigbee_channel(11).unwrap()]).merge(&ble_advertising_channels());
        let (mut e1, mut e2) = (env.clone(), env);
        let mut a = Scanner::new(&mut e1, SdrConfig::default()).unwrap().with_trace();
        a.active_multiprotocol_scan(&chans, &[], 0.2, 1.0, 50.0).unwrap();
        let mut b = Scanner::new(&mut e2, SdrConfig::default()).unwrap().with_trace();
        b.multiprotocol_scan(&chans, 1.0, 50.0).unwrap();
        assert_eq!(a.trace(), b.trace());
        assert_eq!(a.log(), b.log());
    }

    #[test]
    fn active_multiprotocol_uses_expected_groups() {
        let devices = vec![
            zigbee("q", 11, 1, 30.0, Role::Coordinator),
            zigbee("i", 15, 2, 30.0, Role::Coordinator),
            zigbee("e", 20, 3, 30.0, Role::Coordinator),
            ble("b", 0x1234, 4.0),
        ];
        let mut env = env_of(devices, 31);
        let probe: Vec<Channel> = zigbee_channels().iter().cloned().collect();
        let mut s = Scanner::new(&mut env, SdrConfig::default()).unwrap().with_trace();
        s.active_multiprotocol_scan(&ble_advertising_channels(), &probe, 0.2, 1.0, 20.0)
            .unwrap();
        let listens: Vec<Vec<String>> = s
            .trace()
            .unwrap()
            .iter()
            .filter(|v| v.kind == VisitKind::Listen)
            .take(4)
            .map(|v| v.labels.clone())
            .collect();
        assert_eq!(
            listens,
            vec![
                vec!["ble-37", "zigbee-11"],
                vec!["zigbee-15", "ble-38"],
                vec!["zigbee-20"],
                vec!["ble-39"],
            ]
        );
    }

    #[test]
    fn retune_latency_charged_on_channel_change_only() {
        let mut env = env_of(vec![], 1);
        let sdr = SdrConfig {
            retune_latency_s: 0.5,
            ..Default::default()
        };
        let mut s = Scanner::new(&mut env, sdr).unwrap();
        s.passive_scan(&[zigbee_channel(11).unwrap()], 1.0, 5.0).unwrap();
        // One retune, then five back-to-back windows.
        assert_eq!(s.elapsed(), 5.5);
        let mut env = env_of(vec![], 1);
        let mut s = Scanner::new(&mut env, sdr).unwrap();
        s.passive_scan(&[zigbee_channel(11).unwrap(), zigbee_channel(12).unwrap()], 1.0, 5.0)
            .unwrap();
        // Every visit hops: four windows of 1.5 s.
        assert_eq!(s.elapsed(), 6.0);
        assert!(SdrConfig { retune_latency_s: -1.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn sequential_stages_stop_on_their_devices() {
        let devices = vec![ble("b", 0x99, 2.0), zigbee("z", 12, 2, 2.0, Role::EndDevice)];
        let mut env = env_of(devices, 40);
        let stages = [
            SequentialStage {
                channels: vec![ble_advertising_channel(37).unwrap()],
                until: vec![DeviceId(0)],
            },
            SequentialStage {
                channels: zigbee_channels().iter().cloned().collect(),
                until: vec![DeviceId(1)],
            },
        ];
        let mut s = Scanner::new(&mut env, SdrConfig::default()).unwrap().with_trace();
        s.sequential_passive_scan(&stages, 1.0, 1e5).unwrap();
        let trace = s.trace().unwrap();
        let first_zigbee = trace.iter().position(|v| v.labels[0].starts_with("zigbee")).unwrap();
        let ble_found = s.log().first_seen(&DeviceKey::Known(DeviceId(0))).unwrap();
        assert!(trace[first_zigbee].start_s >= ble_found);
        assert!(trace[..first_zigbee].iter().all(|v| v.labels == ["ble-37"]));
        assert!(s.log().completion_time(2).is_some());
        assert_eq!(trace.last().unwrap().labels, ["zigbee-12"]);
    }

    #[test]
    fn scan_params_validation() {
        let ok = ScanParams {
            dwell_time_s: 1.0,
            probe_dwell_time_s: 0.2,
            scan_time_s: 10.0,
        };
        assert!(ok.validate().is_ok());
        assert!(ScanParams { dwell_time_s: 0.0, ..ok }.validate().is_err());
        assert!(ScanParams { scan_time_s: 0.5, ..ok }.validate().is_err());
    }

    fn arb_channel() -> impl Strategy<Value = Channel> {
        prop_oneof![
            (11i64..=26).prop_map(|k| zigbee_channel(k).unwrap()),
            (37i64..=39).prop_map(|k| ble_advertising_channel(k).unwrap()),
            Just(zwave_r2()),
            Just(zwave_r3()),
            Just(yolink_uplink()),
        ]
    }

    proptest! {
        #[test]
        fn channels_in_range_idempotent(
            chans in prop::collection::vec(arb_channel(), 1..12),
            bw in 1_000_000u64..40_000_000,
        ) {
            let mut chans = chans;
            chans.sort_by(|a, b| a.label().cmp(b.label()));
            chans.dedup();
            let l = ChannelList::new(chans);
            let r = find_channels_in_range(&l, bw).unwrap();
            prop_assert_eq!(r.first(), l.first());
            prop_assert!(r.iter().all(|c| l.contains(c)));
            prop_assert!(r.is_sorted());
            prop_assert_eq!(find_channels_in_range(&r, bw).unwrap(), r.clone());
            if l.iter().all(|c| c.bandwidth_hz() == l.first().unwrap().bandwidth_hz()) {
                // With equal widths the range is a prefix of the list.
                prop_assert_eq!(r.as_slice(), &l.as_slice()[..r.len()]);
            }
            let groups = channel_groups(&l, bw).unwrap();
            prop_assert_eq!(groups.iter().map(|g| g.len()).sum::<usize>(), l.len());
        }

        #[test]
        fn discovery_is_monotone_in_scan_time(seed in 0u64..1000, t in 1.0f64..60.0) {
            let devices = vec![
                zigbee("a", 11, 1, 3.0, Role::EndDevice),
                zigbee("b", 14, 2, 5.0, Role::EndDevice),
                ble("c", 0x77, 4.0),
            ];
            let env = env_of(devices, seed);
            let chans = list(vec![zigbee_channel(11).unwrap(), zigbee_channel(14).unwrap()])
                .merge(&ble_advertising_channels());
            let (mut e1, mut e2) = (env.clone(), env);
            let short = Scanner::new(&mut e1, SdrConfig::default()).unwrap()
                .multiprotocol_scan(&chans, 1.0, t).unwrap();
            let long = Scanner::new(&mut e2, SdrConfig::default()).unwrap()
                .multiprotocol_scan(&chans, 1.0, 2.0 * t).unwrap();
            prop_assert!(short.is_subset(&long));
        }

        #[test]
        fn discovered_addresses_are_sound(seed in 0u64..1000) {
            let devices = vec![
                zigbee("a", 11, 1, 1.0, Role::Coordinator),
                zigbee("b", 11, 2, 2.0, Role::EndDevice),
                ble("c", 0x77, 1.0),
            ];
            let mut env = env_of(devices.clone(), seed);
            let mut s = Scanner::new(&mut env, SdrConfig::default()).unwrap();
            let probe: Vec<Channel> = zigbee_channels().iter().cloned().collect();
            let found = s.active_multiprotocol_scan(&ble_advertising_channels(), &probe, 0.2, 1.0, 400.0)
                .unwrap();
            let known: BTreeSet<DeviceAddress> = devices.iter().map(|d| d.address).collect();
            prop_assert!(found.is_subset(&known));
            // Horizon far beyond 20x the slowest per-visit discovery time.
            prop_assert_eq!(found, known);
            prop_assert!(s.log().entries().all(|(k, t)| matches!(k, DeviceKey::Known(_)) && t >= 0.0));
        }
    }
}
