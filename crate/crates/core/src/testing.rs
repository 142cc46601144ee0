//! Deterministic entropy sources for exhaustive tests.

use rand::{CryptoRng, RngCore};

/// Emits the bits of a counter value, one bit per output byte
/// (least significant first), then zeros.
///
/// Sweeping the counter over `0..2^k` enumerates every outcome of a
/// sampler that draws `k` single-bit bytes.
#[derive(Debug, Clone)]
pub struct CounterRng {
    value: u64,
    pos: u32,
}

impl CounterRng {
    pub fn new(value: u64) -> Self {
        Self { value, pos: 0 }
    }

    fn next_bit(&mut self) -> u8 {
        let bit = if self.pos < 64 { (self.value >> self.pos) & 1 } else { 0 };
        self.pos = self.pos.saturating_add(1);
        bit as u8
    }
}

impl RngCore for CounterRng {
    fn next_u32(&mut self) -> u32 {
        self.next_bit() as u32
    }

    fn next_u64(&mut self) -> u64 {
        self.next_bit() as u64
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        for b in dest {
            *b = self.next_bit();
        }
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.fill_bytes(dest);
        Ok(())
    }
}

// Only for exhaustive enumeration; never wire this into a live session.
impl CryptoRng for CounterRng {}

/// An entropy source that always fails.
#[derive(Debug, Default, Clone)]
pub struct FailingRng;

impl RngCore for FailingRng {
    fn next_u32(&mut self) -> u32 {
        panic!("FailingRng has no entropy")
    }

    fn next_u64(&mut self) -> u64 {
        panic!("FailingRng has no entropy")
    }

    fn fill_bytes(&mut self, _dest: &mut [u8]) {
        panic!("FailingRng has no entropy")
    }

    fn try_fill_bytes(&mut self, _dest: &mut [u8]) -> Result<(), rand::Error> {
        Err(rand::Error::new("entropy source unavailable"))
    }
}
