//! Counter-based random streams.
//!
//! Every random draw in the crate comes from a [`Stream`] addressed by
//! `(seed, domain, major, minor)`. A stream is a Philox4x32-10 block cipher
//! run in counter mode: the seed is the cipher key and the remaining
//! coordinates occupy fixed lanes of the 128-bit counter, so two streams with
//! different coordinates never share a block. Nothing is carried between
//! streams, which is what makes parallel evolution independent of scheduling.

use rand::RngCore;

const PHILOX_M0: u32 = 0xD251_1F53;
const PHILOX_M1: u32 = 0xCD9E_8D57;
const PHILOX_W0: u32 = 0x9E37_79B9;
const PHILOX_W1: u32 = 0xBB67_AE85;

#[inline(always)]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let p = u64::from(a) * u64::from(b);
    ((p >> 32) as u32, p as u32)
}

#[inline(always)]
fn philox_round(ctr: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let (hi0, lo0) = mulhilo(PHILOX_M0, ctr[0]);
    let (hi1, lo1) = mulhilo(PHILOX_M1, ctr[2]);
    [hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0]
}

/// The Philox4x32 bijection with 10 rounds.
pub fn philox4x32_10(mut ctr: [u32; 4], mut key: [u32; 2]) -> [u32; 4] {
    for round in 0..10 {
        if round > 0 {
            key[0] = key[0].wrapping_add(PHILOX_W0);
            key[1] = key[1].wrapping_add(PHILOX_W1);
        }
        ctr = philox_round(ctr, key);
    }
    ctr
}

/// Independent purposes a stream can be drawn for. The discriminant lands in
/// a counter lane, so domains never overlap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u32)]
pub enum Domain {
    Transition = 1,
    Initial = 2,
    Bootstrap = 3,
    KernelProbe = 4,
    PairSampling = 5,
    TrialDensity = 6,
}

/// A deterministic random stream keyed by `(seed, domain, major, minor)`.
#[derive(Debug, Clone)]
pub struct Stream {
    key: [u32; 2],
    ctr: [u32; 4],
    buf: [u32; 4],
    pos: usize,
}

impl Stream {
    pub fn new(seed: u64, domain: Domain, major: u32, minor: u32) -> Self {
        Self {
            key: [seed as u32, (seed >> 32) as u32],
            ctr: [0, domain as u32, minor, major],
            buf: [0; 4],
            pos: 4,
        }
    }

    /// Stream used to move agent `agent` from step `t` to `t + 1`.
    pub fn transition(seed: u64, t: u64, agent: usize) -> Self {
        Self::new(seed, Domain::Transition, t as u32, agent as u32)
    }

    /// Fill `out` with the next `out.len()` words of the stream; the same
    /// words `next_u32` would return, without the per-word buffer checks.
    pub fn fill_u32(&mut self, out: &mut [u32]) {
        let mut i = 0;
        while self.pos < 4 && i < out.len() {
            out[i] = self.buf[self.pos];
            self.pos += 1;
            i += 1;
        }
        while out.len() - i >= 4 {
            out[i..i + 4].copy_from_slice(&philox4x32_10(self.ctr, self.key));
            self.ctr[0] = self.ctr[0].wrapping_add(1);
            i += 4;
        }
        while i < out.len() {
            out[i] = self.next_u32();
            i += 1;
        }
    }

    #[inline]
    fn refill(&mut self) {
        self.buf = philox4x32_10(self.ctr, self.key);
        self.ctr[0] = self.ctr[0].wrapping_add(1);
        self.pos = 0;
    }
}

impl RngCore for Stream {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        if self.pos == 4 {
            self.refill();
        }
        let v = self.buf[self.pos];
        self.pos += 1;
        v
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        let lo = u64::from(self.next_u32());
        let hi = u64::from(self.next_u32());
        (hi << 32) | lo
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(4) {
            let bytes = self.next_u32().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}
