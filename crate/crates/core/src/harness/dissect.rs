use std::fmt::Write as _;

use super::HarnessError;
use crate::frame_codec::{
    decode_format, extract_address_with, AddressRules, FrameFormat, StructuredFrame, ZigbeeAddr,
    ZWaveCheck,
};

/// Frame formats accepted by `dissect`, by name.
pub fn format_for_name(name: &str) -> Result<Vec<FrameFormat>, HarnessError> {
    Ok(match name.to_ascii_lowercase().as_str() {
        "zigbee" | "802.15.4" => vec![FrameFormat::Zigbee],
        "ble" => vec![FrameFormat::Ble],
        "lora" => vec![FrameFormat::LoRa],
        "zwave" | "z-wave" => vec![FrameFormat::ZWaveR2, FrameFormat::ZWaveR3],
        "zwave-r2" => vec![FrameFormat::ZWaveR2],
        "zwave-r3" => vec![FrameFormat::ZWaveR3],
        other => {
            return Err(HarnessError::Input(format!(
                "unknown protocol `{other}` (expected zigbee, ble, lora, zwave, zwave-r2 or zwave-r3)"
            )))
        }
    })
}

pub fn parse_hex(text: &str) -> Result<Vec<u8>, HarnessError> {
    let cleaned: String = text
        .trim()
        .trim_start_matches("0x")
        .chars()
        .filter(|c| !c.is_whitespace() && *c != ':' && *c != '-')
        .collect();
    if !cleaned.len().is_multiple_of(2) {
        return Err(HarnessError::Input(format!(
            "hex input has an odd number of digits ({})",
            cleaned.len()
        )));
    }
    hex::decode(&cleaned).map_err(|e| HarnessError::Input(format!("invalid hex: {e}")))
}

/// Decodes `hex` as a frame of `protocol` and renders its fields and
/// device address. With several candidate formats the first that decodes wins.
pub fn dissect(protocol: &str, hex: &str, rules: &AddressRules) -> Result<String, HarnessError> {
    let formats = format_for_name(protocol)?;
    let bytes = parse_hex(hex)?;
    let mut first_err = None;
    for format in formats {
        match decode_format(format, &bytes) {
            Ok(frame) => return Ok(render(format, &frame, rules, bytes.len())),
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    Err(first_err.expect("at least one format").into())
}

fn render(format: FrameFormat, frame: &StructuredFrame, rules: &AddressRules, len: usize) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "format: {format:?} ({len} bytes)");
    match frame {
        StructuredFrame::Zigbee(f) => {
            let _ = writeln!(out, "frame type: {:?}", f.frame_type);
            let _ = writeln!(out, "sequence: {}", f.seq);
            if let Some(d) = f.dest {
                let _ = writeln!(out, "destination: PAN {:#06x}, addr {:#06x}", d.pan_id, d.addr);
            }
            if let Some(s) = f.src {
                let addr = match s.addr {
                    ZigbeeAddr::Short(a) => format!("{a:#06x}"),
                    ZigbeeAddr::Extended(a) => format!("{a:016x}"),
                };
                let _ = writeln!(out, "source: PAN {:#06x}, addr {addr}", s.pan_id);
            }
            if f.is_beacon_request() {
                let _ = writeln!(out, "command: beacon request");
            }
            let _ = writeln!(out, "payload: {}", hex::encode_upper(&f.payload));
            let _ = writeln!(out, "fcs: ok");
        }
        StructuredFrame::Ble(p) => {
            let _ = writeln!(out, "access address: 0x8E89BED6 (advertising)");
            let _ = writeln!(out, "pdu type: {}", p.pdu_type.name());
            let _ = writeln!(out, "adv data: {}", hex::encode_upper(&p.adv_data));
            let _ = writeln!(out, "crc: ok");
        }
        StructuredFrame::LoRa(f) => {
            let _ = writeln!(out, "sync word: {:#06x}", f.sync_word);
            let _ = writeln!(out, "payload: {}", hex::encode_upper(&f.payload));
            let _ = writeln!(out, "devaddr (LoRaWAN): {:08X}", f.dev_addr());
        }
        StructuredFrame::ZWave(f) => {
            let _ = writeln!(out, "home id: {:08X}", f.home_id);
            let _ = writeln!(out, "source node: {}", f.source_id);
            let _ = writeln!(out, "destination node: {}", f.dest_id);
            let _ = writeln!(out, "frame control: {:#06x}", f.frame_control);
            let _ = writeln!(out, "payload: {}", hex::encode_upper(&f.payload));
            let check = match f.check {
                ZWaveCheck::Xor8 => "xor8",
                ZWaveCheck::Crc16 => "crc16",
            };
            let _ = writeln!(out, "checksum: {check} ok");
        }
    }
    match extract_address_with(frame, rules) {
        Some(addr) => {
            let _ = writeln!(out, "device address: {addr}");
        }
        None => {
            let _ = writeln!(out, "device address: none");
        }
    }
    out
}
