//! CRC-64/XZ checksum guarding the on-disk containers.
//!
//! Reflected ECMA-182 polynomial, init and final xor of all ones. Any burst
//! error of 64 bits or less, single flipped bytes included, changes the
//! checksum, which is what the container fuzz tests lean on.

const POLY: u64 = 0xC96C_5795_D787_0F42;

static TABLE: [u64; 256] = build_table();

const fn build_table() -> [u64; 256] {
    let mut table = [0u64; 256];
    let mut i = 0;
    while i < 256 {
        let mut crc = i as u64;
        let mut bit = 0;
        while bit < 8 {
            crc = if crc & 1 != 0 {
                (crc >> 1) ^ POLY
            } else {
                crc >> 1
            };
            bit += 1;
        }
        table[i] = crc;
        i += 1;
    }
    table
}

pub fn crc64(bytes: &[u8]) -> u64 {
    let mut crc = !0u64;
    for &b in bytes {
        crc = TABLE[((crc ^ b as u64) & 0xFF) as usize] ^ (crc >> 8);
    }
    !crc
}
