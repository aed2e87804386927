//! Stable FNV-1a hashing for provenance fields in reports.
//!
//! `std::hash` implementations are not guaranteed stable across releases, so
//! report hashes use this fixed algorithm instead.

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

#[derive(Debug, Clone)]
pub struct FnvHasher(u64);

impl FnvHasher {
    pub fn new() -> Self {
        Self(FNV_OFFSET)
    }

    pub fn write_u8(&mut self, b: u8) {
        self.0 ^= b as u64;
        self.0 = self.0.wrapping_mul(FNV_PRIME);
    }

    pub fn write_u64(&mut self, v: u64) {
        for b in v.to_le_bytes() {
            self.write_u8(b);
        }
    }

    pub fn write_bytes(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.write_u8(b);
        }
    }

    pub fn finish(&self) -> u64 {
        self.0
    }
}

impl Default for FnvHasher {
    fn default() -> Self {
        Self::new()
    }
}

/// Hash of a byte slice as a fixed-width hex string.
pub fn hash_hex(bytes: &[u8]) -> String {
    let mut h = FnvHasher::new();
    h.write_bytes(bytes);
    format!("{:016x}", h.finish())
}
