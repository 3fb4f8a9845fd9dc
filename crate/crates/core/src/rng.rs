//! Deterministic RNG used everywhere randomness is needed at run time
//! (message ids, member secrets, fault injection).
//!
//! splitmix64 keeps the stream stable across platforms and releases; scenario
//! outputs are byte-compared in tests, so the generator is part of the
//! compatibility contract. Not cryptographically secure; the testbed threat
//! model does not include key recovery from observed ids.

/// One splitmix64 step: advances `state` and returns the next value.
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic RNG with a single 64-bit state.
#[derive(Debug, Clone)]
pub struct DetRng {
    state: u64,
}

impl DetRng {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    /// Derives an independent stream for a named purpose, so that adding a
    /// consumer of one stream does not shift the others.
    pub fn derive(&self, label: &str) -> DetRng {
        let mut state = self.state ^ 0xA076_1D64_78BD_642F;
        for &b in label.as_bytes() {
            state = splitmix64(&mut state) ^ u64::from(b);
        }
        DetRng::new(splitmix64(&mut state))
    }

    pub fn next_u64(&mut self) -> u64 {
        splitmix64(&mut self.state)
    }

    /// Uniform value in `[0, n)`. `n` must be nonzero.
    pub fn next_range(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        self.next_u64() % n
    }

    /// Uniform f64 in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Bernoulli draw with probability `p` (clamped to [0, 1]).
    pub fn chance(&mut self, p: f64) -> bool {
        self.next_f64() < p.clamp(0.0, 1.0)
    }

    pub fn bytes(&mut self, len: usize) -> Vec<u8> {
        let mut out = Vec::with_capacity(len);
        while out.len() < len {
            out.extend_from_slice(&self.next_u64().to_be_bytes());
        }
        out.truncate(len);
        out
    }

    /// 128-bit identifier as lowercase hex (for envelope msg ids).
    pub fn hex_id(&mut self) -> String {
        hex::encode(self.bytes(16))
    }
}
