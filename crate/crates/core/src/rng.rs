//! Counter-based random numbers.
//!
//! Every random draw in the crate is a pure function of a 64-bit master seed
//! and a 128-bit counter, computed with the Philox4x32-10 block function.
//! Nothing is carried between draws, so a replica produces the same numbers
//! whether it runs alone, on a worker pool, or in a different order.
//!
//! Splitting rule: the master seed is the Philox key; the counter words are
//! `[a, b, c, domain]` where `domain` tags the consumer:
//!
//! | domain | consumer              | a                | b            | c          |
//! |--------|-----------------------|------------------|--------------|------------|
//! | 1      | particle increments   | particle grid id | step (low)   | replica    |
//! | 2      | Gaussian field draws  | component pair   | draw (low)   | draw (high)|
//! | 3      | test-configuration    | item             | index        | stream     |
//!
//! The step counter contributes its high bits to the domain word for
//! realizations longer than 2^32 steps.

const M0: u32 = 0xD251_1F53;
const M1: u32 = 0xCD9E_8D57;
const W0: u32 = 0x9E37_79B9;
const W1: u32 = 0xBB67_AE85;

pub const DOMAIN_PARTICLE: u32 = 1;
pub const DOMAIN_FIELD: u32 = 2;
pub const DOMAIN_AUX: u32 = 3;

const TWO_POW_32: f64 = 4_294_967_296.0;

#[inline(always)]
fn mulhilo(a: u32, b: u32) -> (u32, u32) {
    let p = (a as u64) * (b as u64);
    ((p >> 32) as u32, p as u32)
}

/// Philox4x32 with ten rounds, keyed by a 64-bit seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Philox4x32 {
    key: [u32; 2],
}

impl Philox4x32 {
    pub fn new(seed: u64) -> Self {
        Self {
            key: [seed as u32, (seed >> 32) as u32],
        }
    }

    pub fn from_key(key: [u32; 2]) -> Self {
        Self { key }
    }

    #[inline]
    pub fn block(&self, counter: [u32; 4]) -> [u32; 4] {
        let mut c = counter;
        let mut k = self.key;
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
}

/// Uniform on the open interval (0, 1) from one 32-bit word.
#[inline]
pub fn open_unit_u32(x: u32) -> f64 {
    (x as f64 + 0.5) / TWO_POW_32
}

/// Uniform on (0, 1) with 52 bits of resolution from two words.
#[inline]
pub fn open_unit_u64(hi: u32, lo: u32) -> f64 {
    let bits = (((hi as u64) << 32) | lo as u64) >> 12;
    (bits as f64 + 0.5) / 4_503_599_627_370_496.0
}

/// Box-Muller pair from two open uniforms.
#[inline]
pub fn box_muller(u1: f64, u2: f64) -> (f64, f64) {
    let r = (-2.0 * u1.ln()).sqrt();
    let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
    (r * c, r * s)
}

/// A pair of standard normals from one Philox block (52-bit uniforms).
#[inline]
pub fn normal_pair(block: [u32; 4]) -> (f64, f64) {
    box_muller(
        open_unit_u64(block[0], block[1]),
        open_unit_u64(block[2], block[3]),
    )
}

/// Sequential convenience stream over the auxiliary domain, used where draws
/// are not tied to a particle or field component (test configurations,
/// randomized checks). Still fully determined by `(seed, stream)`.
#[derive(Debug, Clone)]
pub struct AuxStream {
    philox: Philox4x32,
    stream: u32,
    item: u32,
    index: u32,
    buf: [u32; 4],
    used: usize,
}

impl AuxStream {
    pub fn new(seed: u64, stream: u32) -> Self {
        Self {
            philox: Philox4x32::new(seed),
            stream,
            item: 0,
            index: 0,
            buf: [0; 4],
            used: 4,
        }
    }

    pub fn next_u32(&mut self) -> u32 {
        if self.used == 4 {
            self.buf = self
                .philox
                .block([self.item, self.index, self.stream, DOMAIN_AUX]);
            self.index = self.index.wrapping_add(1);
            if self.index == 0 {
                self.item = self.item.wrapping_add(1);
            }
            self.used = 0;
        }
        let v = self.buf[self.used];
        self.used += 1;
        v
    }

    /// Uniform on (0, 1).
    pub fn uniform(&mut self) -> f64 {
        let hi = self.next_u32();
        let lo = self.next_u32();
        open_unit_u64(hi, lo)
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        box_muller(u1, u2).0
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        ((self.uniform() * n as f64) as usize).min(n.saturating_sub(1))
    }
}
