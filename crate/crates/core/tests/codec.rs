//! Round trips over randomized frames and checksum cross-checks against the
//! `crc` crate's catalogue implementations.

use crc::{Crc, CRC_16_KERMIT, CRC_16_SPI_FUJITSU, CRC_24_BLE};
use iotscan::frame_codec::{
    crc16_802154, crc16_zwave, crc24_ble, decode, decode_format, extract_address, xor8_zwave,
    AdvPduType, BleAdvPdu, CodecError, DeviceAddress, LoRaFrame, StructuredFrame, ZWaveCheck,
    ZWaveFrame, ZigbeeAddr, ZigbeeDest, ZigbeeFrame, ZigbeeFrameType, ZigbeeSource,
    MAC_CMD_BEACON_REQUEST,
};
use proptest::prelude::*;

const CASES: u32 = 10_000;

fn zigbee_source() -> impl Strategy<Value = ZigbeeSource> {
    (
        any::<u16>(),
        prop_oneof![
            any::<u16>().prop_map(ZigbeeAddr::Short),
            any::<u64>().prop_map(ZigbeeAddr::Extended)
        ],
    )
        .prop_map(|(pan_id, addr)| ZigbeeSource { pan_id, addr })
}

fn zigbee_dest() -> impl Strategy<Value = ZigbeeDest> {
    (any::<u16>(), any::<u16>()).prop_map(|(pan_id, addr)| ZigbeeDest { pan_id, addr })
}

fn payload(max: usize) -> impl Strategy<Value = Vec<u8>> {
    prop::collection::vec(any::<u8>(), 0..=max)
}

fn zigbee_frame() -> impl Strategy<Value = ZigbeeFrame> {
    prop_oneof![
        (any::<u8>(), zigbee_source(), payload(100))
            .prop_map(|(seq, src, p)| ZigbeeFrame::beacon(seq, src, p)),
        (any::<u8>(), zigbee_dest(), prop::option::of(zigbee_source()), payload(100)).prop_map(
            |(seq, dest, src, payload)| ZigbeeFrame {
                frame_type: ZigbeeFrameType::Data,
                seq,
                dest: Some(dest),
                src,
                payload,
            }
        ),
        any::<u8>().prop_map(ZigbeeFrame::beacon_request),
        (any::<u8>(), zigbee_dest(), zigbee_source(), 0u8..=0xFF, payload(99)).prop_map(
            |(seq, dest, src, cmd, mut rest)| {
                let cmd = if cmd == MAC_CMD_BEACON_REQUEST { cmd + 1 } else { cmd };
                rest.insert(0, cmd);
                ZigbeeFrame {
                    frame_type: ZigbeeFrameType::MacCommand,
                    seq,
                    dest: Some(dest),
                    src: Some(src),
                    payload: rest,
                }
            }
        ),
    ]
}

fn ble_pdu() -> impl Strategy<Value = BleAdvPdu> {
    (
        prop_oneof![
            Just(AdvPduType::AdvInd),
            Just(AdvPduType::AdvNonconnInd),
            Just(AdvPduType::AdvScanInd)
        ],
        0u64..(1 << 48),
        payload(31),
    )
        .prop_map(|(pdu_type, adv_a, adv_data)| BleAdvPdu {
            pdu_type,
            adv_a,
            adv_data,
        })
}

fn lora_frame() -> impl Strategy<Value = LoRaFrame> {
    (any::<u16>(), prop::collection::vec(any::<u8>(), 4..=64))
        .prop_map(|(sync_word, payload)| LoRaFrame { sync_word, payload })
}

fn zwave_frame() -> impl Strategy<Value = ZWaveFrame> {
    (
        any::<u32>(),
        any::<u8>(),
        any::<u16>(),
        any::<u8>(),
        payload(54),
        prop_oneof![Just(ZWaveCheck::Xor8), Just(ZWaveCheck::Crc16)],
    )
        .prop_map(|(home_id, source_id, frame_control, dest_id, payload, check)| ZWaveFrame {
            home_id,
            source_id,
            frame_control,
            dest_id,
            payload,
            check,
        })
}

fn round_trip(frame: StructuredFrame) -> Result<(), TestCaseError> {
    let encoded = frame.to_frame().expect("valid frame encodes");
    let decoded = decode_format(frame.format(), &encoded.bytes).expect("encoded frame decodes");
    prop_assert_eq!(&decoded, &frame);
    prop_assert_eq!(encoded.decode().unwrap(), frame);
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(CASES))]

    #[test]
    fn zigbee_round_trip(f in zigbee_frame()) {
        round_trip(StructuredFrame::Zigbee(f))?;
    }

    #[test]
    fn ble_round_trip(p in ble_pdu()) {
        round_trip(StructuredFrame::Ble(p))?;
    }

    #[test]
    fn lora_round_trip(f in lora_frame()) {
        round_trip(StructuredFrame::LoRa(f))?;
    }

    #[test]
    fn zwave_round_trip(f in zwave_frame()) {
        round_trip(StructuredFrame::ZWave(f))?;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2_000))]

    #[test]
    fn checksums_match_reference_crcs(data in prop::collection::vec(any::<u8>(), 0..256)) {
        prop_assert_eq!(crc16_802154(&data), Crc::<u16>::new(&CRC_16_KERMIT).checksum(&data));
        prop_assert_eq!(crc16_zwave(&data), Crc::<u16>::new(&CRC_16_SPI_FUJITSU).checksum(&data));
        prop_assert_eq!(crc24_ble(&data), Crc::<u32>::new(&CRC_24_BLE).checksum(&data));
        prop_assert_eq!(xor8_zwave(&data), data.iter().fold(0xFFu8, |a, b| a ^ b));
    }

    #[test]
    fn any_single_bit_flip_is_caught(f in zwave_frame(), bit in 0usize..8) {
        let frame = StructuredFrame::ZWave(f);
        let mut bytes = frame.encode().unwrap();
        // Flip a bit in the payload region, leaving the length byte intact.
        let idx = 8 + (bit % (bytes.len() - 8));
        bytes[idx] ^= 1 << bit;
        prop_assert!(decode_format(frame.format(), &bytes).is_err());
    }

    #[test]
    fn same_source_same_address(src in zigbee_source(), d1 in zigbee_dest(), d2 in zigbee_dest(),
                                p1 in payload(20), p2 in payload(20)) {
        let a = StructuredFrame::Zigbee(ZigbeeFrame::data(1, d1, src, p1));
        let b = StructuredFrame::Zigbee(ZigbeeFrame::data(2, d2, src, p2));
        prop_assert_eq!(extract_address(&a), extract_address(&b));
        prop_assert!(extract_address(&a).is_some());
    }

    #[test]
    fn garbage_never_panics(proto in 0usize..4, bytes in prop::collection::vec(any::<u8>(), 0..140)) {
        use iotscan::channel_plan::Protocol;
        let protocol = [Protocol::Zigbee, Protocol::BleAdvertising, Protocol::LoRa, Protocol::ZWave][proto];
        let _ = decode(protocol, &bytes);
    }
}

/// Catalogue check values for the input "123456789", plus the XOR check
/// computed by hand: 0x31 ^ 0x32 ^ ... ^ 0x39 = 0x31, then ^ 0xFF.
#[test]
fn known_answer_vectors() {
    let check = b"123456789";
    assert_eq!(crc16_802154(check), 0x2189);
    assert_eq!(crc24_ble(check), 0xC2_5A56);
    assert_eq!(crc16_zwave(check), 0xE5CC);
    assert_eq!(xor8_zwave(check), 0xCE);
}

/// A Z-Wave R2 frame assembled by hand: home e3a14c02, node 1 to node 2,
/// a three-byte payload and the XOR check 0x63.
#[test]
fn handmade_zwave_r2_frame() {
    let bytes = hex::decode("E3A14C020141010D022001FF63").unwrap();
    let f = decode_format(iotscan::frame_codec::FrameFormat::ZWaveR2, &bytes).unwrap();
    assert_eq!(
        extract_address(&f),
        Some(DeviceAddress::ZWaveId {
            home_id: 0xE3A1_4C02,
            source_id: 1
        })
    );
    let mut bad = bytes.clone();
    bad[12] ^= 0x01;
    assert!(matches!(
        decode_format(iotscan::frame_codec::FrameFormat::ZWaveR2, &bad),
        Err(CodecError::ChecksumError { offset: 12, .. })
    ));
}
