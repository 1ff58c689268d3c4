//! Frame check algorithms used by the four protocols.

/// CRC-16 with polynomial 0x1021, init 0x0000, reflected (the 802.15.4 FCS,
/// catalogued as CRC-16/KERMIT).
pub fn crc16_802154(data: &[u8]) -> u16 {
    let mut crc: u16 = 0x0000;
    for &byte in data {
        crc ^= byte as u16;
        for _ in 0..8 {
            crc = if crc & 1 != 0 {
                (crc >> 1) ^ 0x8408
            } else {
                crc >> 1
            };
        }
    }
    crc
}

/// CRC-16 with polynomial 0x1021, init 0x1D0F, MSB first (Z-Wave R3).
pub fn crc16_zwave(data: &[u8]) -> u16 {
    let mut crc: u16 = 0x1D0F;
    for &byte in data {
        crc ^= (byte as u16) << 8;
        for _ in 0..8 {
            crc = if crc & 0x8000 != 0 {
                (crc << 1) ^ 0x1021
            } else {
                crc << 1
            };
        }
    }
    crc
}

/// BLE link-layer CRC-24: polynomial 0x00065B, init 0x555555, bits processed
/// LSB first. The result is in transmission order, so its little-endian bytes
/// are what goes on air.
pub fn crc24_ble(data: &[u8]) -> u32 {
    const POLY_REFLECTED: u32 = 0xDA_6000; // bit-reversed 0x00065B
    const INIT_REFLECTED: u32 = 0xAA_AAAA; // bit-reversed 0x555555
    let mut crc = INIT_REFLECTED;
    for &byte in data {
        crc ^= byte as u32;
        for _ in 0..8 {
            crc = if crc & 1 != 0 {
                (crc >> 1) ^ POLY_REFLECTED
            } else {
                crc >> 1
            };
        }
    }
    crc & 0xFF_FFFF
}

/// Z-Wave R1/R2 checksum: XOR of every byte, starting from 0xFF.
pub fn xor8_zwave(data: &[u8]) -> u8 {
    data.iter().fold(0xFF, |acc, b| acc ^ b)
}
