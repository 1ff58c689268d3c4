//! Byte-level encoding and decoding of the simplified frames each protocol
//! emits, and extraction of the address that identifies the sender.
//!
//! Layouts (multi-byte integers little-endian unless noted):
//!
//! * Zigbee: `FCF(2) seq(1) [dst PAN(2) dst(2)] [src PAN(2) src(2|8)] payload FCS(2)`.
//!   FCF bits 0–2 carry the frame type, bits 10–11 the destination mode and
//!   bits 14–15 the source mode; every other FCF bit is zero.
//! * BLE advertising: `AA(4)=0x8E89BED6 header(2) AdvA(6) AdvData(0..=31) CRC(3)`.
//! * LoRa: `sync word(2, big-endian) payload(>=4)`; the PHY CRC is not modeled.
//! * Z-Wave: `HomeID(4, big-endian) src(1) FC(2) len(1) dst(1) payload check(1|2)`,
//!   where `len` counts every byte including the check field.

pub mod checksum;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel_plan::{Channel, Protocol};

pub use checksum::{crc16_802154, crc16_zwave, crc24_ble, xor8_zwave};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("truncated frame: need at least {needed} bytes, got {got}")]
    TruncatedFrame { needed: usize, got: usize },
    #[error("checksum mismatch at byte offset {offset}: expected {expected:#x}, found {found:#x}")]
    ChecksumError {
        offset: usize,
        expected: u32,
        found: u32,
    },
    #[error("unsupported frame at byte offset {offset}: {reason}")]
    UnsupportedFrame { offset: usize, reason: String },
    #[error("malformed frame at byte offset {offset}: {reason}")]
    Malformed { offset: usize, reason: String },
    #[error("cannot encode frame: {0}")]
    Invalid(String),
}

fn truncated(needed: usize, got: usize) -> CodecError {
    CodecError::TruncatedFrame { needed, got }
}

/// Which byte layout (and check algorithm) a frame uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FrameFormat {
    Zigbee,
    Ble,
    LoRa,
    /// Z-Wave R1/R2, 8-bit XOR check.
    ZWaveR2,
    /// Z-Wave R3, CRC-16 check.
    ZWaveR3,
}

impl FrameFormat {
    pub fn protocol(self) -> Protocol {
        match self {
            FrameFormat::Zigbee => Protocol::Zigbee,
            FrameFormat::Ble => Protocol::BleAdvertising,
            FrameFormat::LoRa => Protocol::LoRa,
            FrameFormat::ZWaveR2 | FrameFormat::ZWaveR3 => Protocol::ZWave,
        }
    }

    /// The format received on `channel`. Z-Wave channels of 100 kHz or more
    /// carry the R3 PHY.
    pub fn for_channel(channel: &Channel) -> FrameFormat {
        match channel.protocol() {
            Protocol::Zigbee => FrameFormat::Zigbee,
            Protocol::BleAdvertising => FrameFormat::Ble,
            Protocol::LoRa => FrameFormat::LoRa,
            Protocol::ZWave if channel.bandwidth_hz() >= 100_000 => FrameFormat::ZWaveR3,
            Protocol::ZWave => FrameFormat::ZWaveR2,
        }
    }
}

/// A protocol-tagged byte sequence as it appears on air.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub format: FrameFormat,
    pub bytes: Vec<u8>,
}

impl Frame {
    pub fn protocol(&self) -> Protocol {
        self.format.protocol()
    }

    pub fn decode(&self) -> Result<StructuredFrame, CodecError> {
        decode_format(self.format, &self.bytes)
    }

    pub fn hex(&self) -> String {
        hex::encode_upper(&self.bytes)
    }
}

/// Identity of a transmitter as seen in its frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DeviceAddress {
    ZigbeeShort { pan_id: u16, addr: u16 },
    ZigbeeExtended(u64),
    BleAdvA(u64),
    LoRaId { sync_word: u16, id: u8 },
    ZWaveId { home_id: u32, source_id: u8 },
}

impl DeviceAddress {
    pub fn protocol(&self) -> Protocol {
        match self {
            DeviceAddress::ZigbeeShort { .. } | DeviceAddress::ZigbeeExtended(_) => {
                Protocol::Zigbee
            }
            DeviceAddress::BleAdvA(_) => Protocol::BleAdvertising,
            DeviceAddress::LoRaId { .. } => Protocol::LoRa,
            DeviceAddress::ZWaveId { .. } => Protocol::ZWave,
        }
    }
}

impl fmt::Display for DeviceAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            DeviceAddress::ZigbeeShort { pan_id, addr } => {
                write!(f, "zigbee short {addr:#06x} (PAN {pan_id:#06x})")
            }
            DeviceAddress::ZigbeeExtended(addr) => write!(f, "zigbee extended {addr:016x}"),
            DeviceAddress::BleAdvA(addr) => {
                let b = addr.to_be_bytes();
                write!(
                    f,
                    "ble AdvA {:02X}:{:02X}:{:02X}:{:02X}:{:02X}:{:02X}",
                    b[2], b[3], b[4], b[5], b[6], b[7]
                )
            }
            DeviceAddress::LoRaId { sync_word, id } => {
                write!(f, "lora id {id:#04x} (sync {sync_word:#06x})")
            }
            DeviceAddress::ZWaveId { home_id, source_id } => {
                write!(f, "zwave node {source_id} (home {home_id:08X})")
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Zigbee / IEEE 802.15.4 MAC
// ---------------------------------------------------------------------------

pub const ZIGBEE_MAX_PSDU: usize = 127;
pub const MAC_CMD_BEACON_REQUEST: u8 = 0x07;
pub const BROADCAST: u16 = 0xFFFF;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ZigbeeFrameType {
    Beacon,
    Data,
    MacCommand,
}

impl ZigbeeFrameType {
    fn bits(self) -> u16 {
        match self {
            ZigbeeFrameType::Beacon => 0b000,
            ZigbeeFrameType::Data => 0b001,
            ZigbeeFrameType::MacCommand => 0b011,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ZigbeeAddr {
    Short(u16),
    Extended(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ZigbeeDest {
    pub pan_id: u16,
    pub addr: u16,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ZigbeeSource {
    pub pan_id: u16,
    pub addr: ZigbeeAddr,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ZigbeeFrame {
    pub frame_type: ZigbeeFrameType,
    pub seq: u8,
    pub dest: Option<ZigbeeDest>,
    pub src: Option<ZigbeeSource>,
    pub payload: Vec<u8>,
}

impl ZigbeeFrame {
    /// Broadcast beacon request: MAC command 0x07 to PAN/addr 0xFFFF, no source.
    pub fn beacon_request(seq: u8) -> Self {
        ZigbeeFrame {
            frame_type: ZigbeeFrameType::MacCommand,
            seq,
            dest: Some(ZigbeeDest {
                pan_id: BROADCAST,
                addr: BROADCAST,
            }),
            src: None,
            payload: vec![MAC_CMD_BEACON_REQUEST],
        }
    }

    pub fn beacon(seq: u8, src: ZigbeeSource, payload: Vec<u8>) -> Self {
        ZigbeeFrame {
            frame_type: ZigbeeFrameType::Beacon,
            seq,
            dest: None,
            src: Some(src),
            payload,
        }
    }

    pub fn data(seq: u8, dest: ZigbeeDest, src: ZigbeeSource, payload: Vec<u8>) -> Self {
        ZigbeeFrame {
            frame_type: ZigbeeFrameType::Data,
            seq,
            dest: Some(dest),
            src: Some(src),
            payload,
        }
    }

    pub fn is_beacon_request(&self) -> bool {
        self.frame_type == ZigbeeFrameType::MacCommand
            && self.payload.first() == Some(&MAC_CMD_BEACON_REQUEST)
    }

    fn encoded_len(&self) -> usize {
        let src_len = match self.src {
            None => 0,
            Some(ZigbeeSource {
                addr: ZigbeeAddr::Short(_),
                ..
            }) => 4,
            Some(ZigbeeSource {
                addr: ZigbeeAddr::Extended(_),
                ..
            }) => 10,
        };
        3 + if self.dest.is_some() { 4 } else { 0 } + src_len + self.payload.len() + 2
    }

    fn validate(&self) -> Result<(), CodecError> {
        match self.frame_type {
            ZigbeeFrameType::Beacon if self.src.is_none() => {
                return Err(CodecError::Invalid("beacon frame without source address".into()))
            }
            ZigbeeFrameType::MacCommand if self.payload.is_empty() => {
                return Err(CodecError::Invalid("MAC command frame without command id".into()))
            }
            _ => {}
        }
        if self.is_beacon_request() {
            let broadcast = ZigbeeDest {
                pan_id: BROADCAST,
                addr: BROADCAST,
            };
            if self.dest != Some(broadcast) || self.src.is_some() {
                return Err(CodecError::Invalid(
                    "beacon request must be broadcast and carry no source".into(),
                ));
            }
        }
        if self.src.is_none() && self.dest.is_none() {
            return Err(CodecError::Invalid("frame carries no addressing fields".into()));
        }
        let len = self.encoded_len();
        if len > ZIGBEE_MAX_PSDU {
            return Err(CodecError::Invalid(format!(
                "frame of {len} bytes exceeds the {ZIGBEE_MAX_PSDU}-byte PSDU"
            )));
        }
        Ok(())
    }

    pub fn encode(&self) -> Result<Vec<u8>, CodecError> {
        self.validate()?;
        let mut fcf = self.frame_type.bits();
        if self.dest.is_some() {
            fcf |= 0b10 << 10;
        }
        match self.src {
            Some(ZigbeeSource {
                addr: ZigbeeAddr::Short(_),
                ..
            }) => fcf |= 0b10 << 14,
            Some(ZigbeeSource {
                addr: ZigbeeAddr::Extended(_),
                ..
            }) => fcf |= 0b11 << 14,
            None => {}
        }
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(&fcf.to_le_bytes());
        out.push(self.seq);
        if let Some(dest) = self.dest {
            out.extend_from_slice(&dest.pan_id.to_le_bytes());
            out.extend_from_slice(&dest.addr.to_le_bytes());
        }
        if let Some(src) = self.src {
            out.extend_from_slice(&src.pan_id.to_le_bytes());
            match src.addr {
                ZigbeeAddr::Short(a) => out.extend_from_slice(&a.to_le_bytes()),
                ZigbeeAddr::Extended(a) => out.extend_from_slice(&a.to_le_bytes()),
            }
        }
        out.extend_from_slice(&self.payload);
        let fcs = crc16_802154(&out);
        out.extend_from_slice(&fcs.to_le_bytes());
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CodecError> {
        // FCF + seq + FCS
        if bytes.len() < 5 {
            return Err(truncated(5, bytes.len()));
        }
        let fcf = u16::from_le_bytes([bytes[0], bytes[1]]);
        let frame_type = match fcf & 0b111 {
            0b000 => ZigbeeFrameType::Beacon,
            0b001 => ZigbeeFrameType::Data,
            0b011 => ZigbeeFrameType::MacCommand,
            other => {
                return Err(CodecError::UnsupportedFrame {
                    offset: 0,
                    reason: format!("802.15.4 frame type {other:#05b}"),
                })
            }
        };
        let dest_mode = (fcf >> 10) & 0b11;
        let src_mode = (fcf >> 14) & 0b11;
        let mut needed = 3 + 2;
        needed += match dest_mode {
            0b00 => 0,
            0b10 => 4,
            m => {
                return Err(CodecError::UnsupportedFrame {
                    offset: 1,
                    reason: format!("destination addressing mode {m:#04b}"),
                })
            }
        };
        needed += match src_mode {
            0b00 => 0,
            0b10 => 4,
            0b11 => 10,
            m => {
                return Err(CodecError::UnsupportedFrame {
                    offset: 1,
                    reason: format!("source addressing mode {m:#04b}"),
                })
            }
        };
        if bytes.len() < needed {
            return Err(truncated(needed, bytes.len()));
        }
        if bytes.len() > ZIGBEE_MAX_PSDU {
            return Err(CodecError::Malformed {
                offset: ZIGBEE_MAX_PSDU,
                reason: format!("{} bytes exceeds the 127-byte PSDU", bytes.len()),
            });
        }
        let body_end = bytes.len() - 2;
        let found = u16::from_le_bytes([bytes[body_end], bytes[body_end + 1]]);
        let expected = crc16_802154(&bytes[..body_end]);
        if found != expected {
            return Err(CodecError::ChecksumError {
                offset: body_end,
                expected: expected as u32,
                found: found as u32,
            });
        }

        let seq = bytes[2];
        let mut pos = 3;
        let u16_at = |p: usize| u16::from_le_bytes([bytes[p], bytes[p + 1]]);
        let dest = if dest_mode == 0b10 {
            let d = ZigbeeDest {
                pan_id: u16_at(pos),
                addr: u16_at(pos + 2),
            };
            pos += 4;
            Some(d)
        } else {
            None
        };
        let src = match src_mode {
            0b10 => {
                let s = ZigbeeSource {
                    pan_id: u16_at(pos),
                    addr: ZigbeeAddr::Short(u16_at(pos + 2)),
                };
                pos += 4;
                Some(s)
            }
            0b11 => {
                let mut ext = [0u8; 8];
                ext.copy_from_slice(&bytes[pos + 2..pos + 10]);
                let s = ZigbeeSource {
                    pan_id: u16_at(pos),
                    addr: ZigbeeAddr::Extended(u64::from_le_bytes(ext)),
                };
                pos += 10;
                Some(s)
            }
            _ => None,
        };
        let frame = ZigbeeFrame {
            frame_type,
            seq,
            dest,
            src,
            payload: bytes[pos..body_end].to_vec(),
        };
        frame.validate().map_err(|e| CodecError::Malformed {
            offset: 0,
            reason: e.to_string(),
        })?;
        Ok(frame)
    }
}

// ---------------------------------------------------------------------------
// BLE advertising channel PDU
// ---------------------------------------------------------------------------

pub const BLE_ADV_ACCESS_ADDRESS: u32 = 0x8E89_BED6;
pub const BLE_MAX_ADV_DATA: usize = 31;
const BLE_ADDR_MASK: u64 = 0xFFFF_FFFF_FFFF;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AdvPduType {
    AdvInd,
    AdvNonconnInd,
    AdvScanInd,
}

impl AdvPduType {
    fn code(self) -> u8 {
        match self {
            AdvPduType::AdvInd => 0x0,
            AdvPduType::AdvNonconnInd => 0x2,
            AdvPduType::AdvScanInd => 0x6,
        }
    }

    fn from_code(code: u8) -> Option<Self> {
        match code {
            0x0 => Some(AdvPduType::AdvInd),
            0x2 => Some(AdvPduType::AdvNonconnInd),
            0x6 => Some(AdvPduType::AdvScanInd),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AdvPduType::AdvInd => "ADV_IND",
            AdvPduType::AdvNonconnInd => "ADV_NONCONN_IND",
            AdvPduType::AdvScanInd => "ADV_SCAN_IND",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BleAdvPdu {
    pub pdu_type: AdvPduType,
    /// 48-bit advertiser address.
    pub adv_a: u64,
    pub adv_data: Vec<u8>,
}

impl BleAdvPdu {
    pub fn encode(&self) -> Result<Vec<u8>, CodecError> {
        if self.adv_a & !BLE_ADDR_MASK != 0 {
            return Err(CodecError::Invalid(format!(
                "AdvA {:#x} wider than 48 bits",
                self.adv_a
            )));
        }
        if self.adv_data.len() > BLE_MAX_ADV_DATA {
            return Err(CodecError::Invalid(format!(
                "{} bytes of AdvData exceeds {BLE_MAX_ADV_DATA}",
                self.adv_data.len()
            )));
        }
        let mut out = Vec::with_capacity(4 + 2 + 6 + self.adv_data.len() + 3);
        out.extend_from_slice(&BLE_ADV_ACCESS_ADDRESS.to_le_bytes());
        out.push(self.pdu_type.code());
        out.push((6 + self.adv_data.len()) as u8);
        out.extend_from_slice(&self.adv_a.to_le_bytes()[..6]);
        out.extend_from_slice(&self.adv_data);
        let crc = crc24_ble(&out[4..]);
        out.extend_from_slice(&crc.to_le_bytes()[..3]);
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CodecError> {
        // AA + header + AdvA + CRC
        const MIN: usize = 4 + 2 + 6 + 3;
        if bytes.len() < 6 {
            return Err(truncated(MIN, bytes.len()));
        }
        let aa = u32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]);
        if aa != BLE_ADV_ACCESS_ADDRESS {
            return Err(CodecError::UnsupportedFrame {
                offset: 0,
                reason: format!("access address {aa:#010x} is not the advertising address"),
            });
        }
        let pdu_type = AdvPduType::from_code(bytes[4] & 0x0F).ok_or_else(|| {
            CodecError::UnsupportedFrame {
                offset: 4,
                reason: format!("advertising PDU type {:#x}", bytes[4] & 0x0F),
            }
        })?;
        let length = bytes[5] as usize;
        if !(6..=6 + BLE_MAX_ADV_DATA).contains(&length) {
            return Err(CodecError::Malformed {
                offset: 5,
                reason: format!("payload length {length} outside 6..=37"),
            });
        }
        let total = 6 + length + 3;
        if bytes.len() < total {
            return Err(truncated(total, bytes.len()));
        }
        if bytes.len() > total {
            return Err(CodecError::Malformed {
                offset: total,
                reason: format!("{} trailing bytes after CRC", bytes.len() - total),
            });
        }
        let crc_at = 6 + length;
        let found = u32::from_le_bytes([bytes[crc_at], bytes[crc_at + 1], bytes[crc_at + 2], 0]);
        let expected = crc24_ble(&bytes[4..crc_at]);
        if found != expected {
            return Err(CodecError::ChecksumError {
                offset: crc_at,
                expected,
                found,
            });
        }
        let mut addr = [0u8; 8];
        addr[..6].copy_from_slice(&bytes[6..12]);
        Ok(BleAdvPdu {
            pdu_type,
            adv_a: u64::from_le_bytes(addr),
            adv_data: bytes[12..crc_at].to_vec(),
        })
    }
}

// ---------------------------------------------------------------------------
// LoRa
// ---------------------------------------------------------------------------

pub const LORA_MIN_PAYLOAD: usize = 4;
pub const LORAWAN_PUBLIC_SYNC_WORD: u16 = 0x3444;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoRaFrame {
    pub sync_word: u16,
    pub payload: Vec<u8>,
}

impl LoRaFrame {
    /// The 32-bit DevAddr region at the start of the payload, little-endian.
    pub fn dev_addr(&self) -> u32 {
        let p = &self.payload;
        u32::from_le_bytes([p[0], p[1], p[2], p[3]])
    }

    pub fn encode(&self) -> Result<Vec<u8>, CodecError> {
        if self.payload.len() < LORA_MIN_PAYLOAD {
            return Err(CodecError::Invalid(format!(
                "LoRa payload of {} bytes is shorter than {LORA_MIN_PAYLOAD}",
                self.payload.len()
            )));
        }
        let mut out = Vec::with_capacity(2 + self.payload.len());
        out.extend_from_slice(&self.sync_word.to_be_bytes());
        out.extend_from_slice(&self.payload);
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CodecError> {
        if bytes.len() < 2 + LORA_MIN_PAYLOAD {
            return Err(truncated(2 + LORA_MIN_PAYLOAD, bytes.len()));
        }
        Ok(LoRaFrame {
            sync_word: u16::from_be_bytes([bytes[0], bytes[1]]),
            payload: bytes[2..].to_vec(),
        })
    }
}

// ---------------------------------------------------------------------------
// Z-Wave (G.9959)
// ---------------------------------------------------------------------------

pub const ZWAVE_HEADER_LEN: usize = 9;
pub const ZWAVE_UNJOINED_NODE: u8 = 0;
pub const ZWAVE_PRIMARY_CONTROLLER: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ZWaveCheck {
    Xor8,
    Crc16,
}

impl ZWaveCheck {
    fn len(self) -> usize {
        match self {
            ZWaveCheck::Xor8 => 1,
            ZWaveCheck::Crc16 => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ZWaveFrame {
    pub home_id: u32,
    pub source_id: u8,
    pub frame_control: u16,
    pub dest_id: u8,
    pub payload: Vec<u8>,
    pub check: ZWaveCheck,
}

impl ZWaveFrame {
    /// MPDU length in bytes, check field included; this is the `len` byte.
    pub fn mpdu_len(&self) -> usize {
        ZWAVE_HEADER_LEN + self.payload.len() + self.check.len()
    }

    pub fn encode(&self) -> Result<Vec<u8>, CodecError> {
        let len = self.mpdu_len();
        if len > u8::MAX as usize {
            return Err(CodecError::Invalid(format!(
                "Z-Wave MPDU of {len} bytes does not fit the length byte"
            )));
        }
        let mut out = Vec::with_capacity(len);
        out.extend_from_slice(&self.home_id.to_be_bytes());
        out.push(self.source_id);
        out.extend_from_slice(&self.frame_control.to_le_bytes());
        out.push(len as u8);
        out.push(self.dest_id);
        out.extend_from_slice(&self.payload);
        match self.check {
            ZWaveCheck::Xor8 => out.push(xor8_zwave(&out)),
            ZWaveCheck::Crc16 => {
                let crc = crc16_zwave(&out);
                out.extend_from_slice(&crc.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8], check: ZWaveCheck) -> Result<Self, CodecError> {
        let min = ZWAVE_HEADER_LEN + check.len();
        if bytes.len() < min {
            return Err(truncated(min, bytes.len()));
        }
        let len = bytes[7] as usize;
        if len < min {
            return Err(CodecError::Malformed {
                offset: 7,
                reason: format!("length field {len} shorter than the {min}-byte minimum"),
            });
        }
        if bytes.len() < len {
            return Err(truncated(len, bytes.len()));
        }
        if bytes.len() > len {
            return Err(CodecError::Malformed {
                offset: len,
                reason: format!("{} bytes beyond the length field", bytes.len() - len),
            });
        }
        let body_end = len - check.len();
        let (expected, found) = match check {
            ZWaveCheck::Xor8 => (xor8_zwave(&bytes[..body_end]) as u32, bytes[body_end] as u32),
            ZWaveCheck::Crc16 => (
                crc16_zwave(&bytes[..body_end]) as u32,
                u16::from_le_bytes([bytes[body_end], bytes[body_end + 1]]) as u32,
            ),
        };
        if expected != found {
            return Err(CodecError::ChecksumError {
                offset: body_end,
                expected,
                found,
            });
        }
        Ok(ZWaveFrame {
            home_id: u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]),
            source_id: bytes[4],
            frame_control: u16::from_le_bytes([bytes[5], bytes[6]]),
            dest_id: bytes[8],
            payload: bytes[ZWAVE_HEADER_LEN..body_end].to_vec(),
            check,
        })
    }
}

// ---------------------------------------------------------------------------
// Protocol-independent entry points
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StructuredFrame {
    Zigbee(ZigbeeFrame),
    Ble(BleAdvPdu),
    LoRa(LoRaFrame),
    ZWave(ZWaveFrame),
}

impl StructuredFrame {
    pub fn format(&self) -> FrameFormat {
        match self {
            StructuredFrame::Zigbee(_) => FrameFormat::Zigbee,
            StructuredFrame::Ble(_) => FrameFormat::Ble,
            StructuredFrame::LoRa(_) => FrameFormat::LoRa,
            StructuredFrame::ZWave(f) => match f.check {
                ZWaveCheck::Xor8 => FrameFormat::ZWaveR2,
                ZWaveCheck::Crc16 => FrameFormat::ZWaveR3,
            },
        }
    }

    pub fn protocol(&self) -> Protocol {
        self.format().protocol()
    }

    pub fn encode(&self) -> Result<Vec<u8>, CodecError> {
        match self {
            StructuredFrame::Zigbee(f) => f.encode(),
            StructuredFrame::Ble(f) => f.encode(),
            StructuredFrame::LoRa(f) => f.encode(),
            StructuredFrame::ZWave(f) => f.encode(),
        }
    }

    pub fn to_frame(&self) -> Result<Frame, CodecError> {
        Ok(Frame {
            format: self.format(),
            bytes: self.encode()?,
        })
    }
}

/// Decodes `bytes` with an explicit layout.
pub fn decode_format(format: FrameFormat, bytes: &[u8]) -> Result<StructuredFrame, CodecError> {
    match format {
        FrameFormat::Zigbee => ZigbeeFrame::decode(bytes).map(StructuredFrame::Zigbee),
        FrameFormat::Ble => BleAdvPdu::decode(bytes).map(StructuredFrame::Ble),
        FrameFormat::LoRa => LoRaFrame::decode(bytes).map(StructuredFrame::LoRa),
        FrameFormat::ZWaveR2 => {
            ZWaveFrame::decode(bytes, ZWaveCheck::Xor8).map(StructuredFrame::ZWave)
        }
        FrameFormat::ZWaveR3 => {
            ZWaveFrame::decode(bytes, ZWaveCheck::Crc16).map(StructuredFrame::ZWave)
        }
    }
}

/// Decodes `bytes` as a frame of `protocol`.
///
/// Z-Wave frames do not say which check they carry; the R2 XOR check is
/// tried first, then the R3 CRC. Use [`decode_format`] when the PHY is known.
pub fn decode(protocol: Protocol, bytes: &[u8]) -> Result<StructuredFrame, CodecError> {
    match protocol {
        Protocol::Zigbee => decode_format(FrameFormat::Zigbee, bytes),
        Protocol::BleAdvertising => decode_format(FrameFormat::Ble, bytes),
        Protocol::LoRa => decode_format(FrameFormat::LoRa, bytes),
        Protocol::ZWave => match decode_format(FrameFormat::ZWaveR2, bytes) {
            Ok(f) => Ok(f),
            Err(r2_err @ CodecError::TruncatedFrame { .. }) => Err(r2_err),
            Err(r2_err) => decode_format(FrameFormat::ZWaveR3, bytes).map_err(|r3_err| {
                match r3_err {
                    CodecError::ChecksumError { .. } => r2_err,
                    other => other,
                }
            }),
        },
    }
}

/// How addresses are pulled out of frames whose layout is vendor-specific.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AddressRules {
    /// Payload byte (0-based, counted after the sync word) holding the LoRa device id.
    pub lora_id_index: usize,
}

impl Default for AddressRules {
    fn default() -> Self {
        AddressRules { lora_id_index: 2 }
    }
}

/// The enumeration identity carried by `frame`, or `None` if it has no source.
pub fn extract_address(frame: &StructuredFrame) -> Option<DeviceAddress> {
    extract_address_with(frame, &AddressRules::default())
}

pub fn extract_address_with(frame: &StructuredFrame, rules: &AddressRules) -> Option<DeviceAddress> {
    match frame {
        StructuredFrame::Zigbee(f) => f.src.map(|src| match src.addr {
            ZigbeeAddr::Short(addr) => DeviceAddress::ZigbeeShort {
                pan_id: src.pan_id,
                addr,
            },
            ZigbeeAddr::Extended(addr) => DeviceAddress::ZigbeeExtended(addr),
        }),
        StructuredFrame::Ble(f) => Some(DeviceAddress::BleAdvA(f.adv_a)),
        StructuredFrame::LoRa(f) => f.payload.get(rules.lora_id_index).map(|&id| {
            DeviceAddress::LoRaId {
                sync_word: f.sync_word,
                id,
            }
        }),
        StructuredFrame::ZWave(f) => Some(DeviceAddress::ZWaveId {
            home_id: f.home_id,
            source_id: f.source_id,
        }),
    }
}
