//! Counter-based random numbers (Philox4x32-10).
//!
//! Every draw is a pure function of `(seed, realization, step, channel)`,
//! so any realization or time step can be regenerated independently of
//! execution order. Streams that differ in realization or channel use
//! disjoint counters under the same key and therefore never overlap.

use std::f64::consts::PI;

const M0: u32 = 0xD251_1F53;
const M1: u32 = 0xCD9E_8D57;
const W0: u32 = 0x9E37_79B9;
const W1: u32 = 0xBB67_AE85;

#[inline(always)]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let p = u64::from(a) * u64::from(b);
    ((p >> 32) as u32, p as u32)
}

/// The Philox4x32 bijection with 10 rounds.
#[inline]
pub fn philox4x32(counter: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let mut c = counter;
    let mut k = key;
    for round in 0..10 {
        if round > 0 {
            k[0] = k[0].wrapping_add(W0);
            k[1] = k[1].wrapping_add(W1);
        }
        let (hi0, lo0) = mulhilo(M0, c[0]);
        let (hi1, lo1) = mulhilo(M1, c[2]);
        c = [hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0];
    }
    c
}

/// Named noise channels of one time step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u32)]
pub enum Channel {
    Langevin = 0,
    Backaction = 1,
    Detection = 2,
    Initial = 3,
}

const DERIVE_CHANNEL: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CounterRng {
    key: [u32; 2],
    realization: u32,
}

impl CounterRng {
    pub fn new(seed: u64, realization: u32) -> Self {
        Self {
            key: [seed as u32, (seed >> 32) as u32],
            realization,
        }
    }

    #[inline]
    pub fn block(&self, step: u64, channel: u32) -> [u32; 4] {
        philox4x32(
            [step as u32, (step >> 32) as u32, self.realization, channel],
            self.key,
        )
    }

    /// Two uniforms in `(0, 1]` with 53-bit resolution.
    #[inline]
    pub fn uniform_pair(&self, step: u64, channel: Channel) -> (f64, f64) {
        let b = self.block(step, channel as u32);
        (to_unit(b[0], b[1]), to_unit(b[2], b[3]))
    }

    /// Two independent standard normals (Box–Muller).
    #[inline]
    pub fn normal_pair(&self, step: u64, channel: Channel) -> (f64, f64) {
        let (u1, u2) = self.uniform_pair(step, channel);
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (2.0 * PI * u2).sin_cos();
        (r * c, r * s)
    }
}

#[inline(always)]
fn to_unit(lo: u32, hi: u32) -> f64 {
    let bits = (u64::from(hi) << 32 | u64::from(lo)) >> 11;
    (bits + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Derives a child seed from `(seed, index)`; used to give each sweep point
/// its own key.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let b = philox4x32(
        [index as u32, (index >> 32) as u32, DERIVE_CHANNEL, DERIVE_CHANNEL],
        [seed as u32, (seed >> 32) as u32],
    );
    u64::from(b[1]) << 32 | u64::from(b[0])
}
