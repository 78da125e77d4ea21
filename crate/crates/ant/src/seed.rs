//! Deterministic sub-seed derivation. Every random choice in the toolkit
//! flows from one master seed through named purposes, so independent jobs
//! can run in any order (or in parallel) without changing results.

/// Streaming FNV-1a (64-bit). Stable across platforms and releases,
/// unlike the std hasher; used for sub-seeds and artifact fingerprints.
#[derive(Clone, Debug)]
pub struct Fnv1a(u64);

impl Default for Fnv1a {
    fn default() -> Self {
        Fnv1a(0xcbf2_9ce4_8422_2325)
    }
}

impl Fnv1a {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn update(&mut self, bytes: &[u8]) -> &mut Self {
        const PRIME: u64 = 0x0000_0100_0000_01b3;
        for &byte in bytes {
            self.0 ^= u64::from(byte);
            self.0 = self.0.wrapping_mul(PRIME);
        }
        self
    }

    pub fn finish(&self) -> u64 {
        self.0
    }
}

/// FNV-1a of `data` in one call.
pub fn fnv1a(data: &[u8]) -> u64 {
    let mut h = Fnv1a::new();
    h.update(data);
    h.finish()
}

/// Derives a named sub-seed from the master seed: FNV-1a over the
/// little-endian seed bytes followed by the purpose string. Every random
/// choice in the toolkit flows through here, so independent jobs can run
/// in any order (or in parallel) without changing results.
pub fn subseed(master: u64, purpose: &str) -> u64 {
    let mut h = Fnv1a::new();
    h.update(&master.to_le_bytes());
    h.update(purpose.as_bytes());
    h.finish()
}

#[cfg(test)]
mod tests {
    use super::subseed;

    #[test]
    fn distinct_by_seed_and_purpose() {
        assert_eq!(subseed(0, "split"), subseed(0, "split"));
        assert_ne!(subseed(0, "split"), subseed(1, "split"));
        assert_ne!(subseed(0, "split"), subseed(0, "balance"));
    }

    #[test]
    fn frozen_reference_value() {
        // FNV-1a of 2a00000000000000 ‖ "ingest/split"; frozen so artifacts
        // from older runs stay reproducible across releases.
        assert_eq!(subseed(42, "ingest/split"), 0x91d8_0f00_1727_fdec);
    }
}
