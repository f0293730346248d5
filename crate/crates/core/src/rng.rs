//! Counter-based normal variates.
//!
//! Every draw is a pure function of `(seed, purpose, step, neuron,
//! population)`, computed with the Philox4x32-10 bijection. There is no
//! generator state to share or split, so the draw sequence cannot depend on
//! the number of worker threads or on the order neurons are visited.

use crate::model::Population;

const PHILOX_M0: u32 = 0xD251_1F53;
const PHILOX_M1: u32 = 0xCD9E_8D57;
const PHILOX_W0: u32 = 0x9E37_79B9;
const PHILOX_W1: u32 = 0xBB67_AE85;

/// Philox4x32 with 10 rounds.
pub fn philox4x32(counter: [u32; 4], key: [u32; 2]) -> [u32; 4] {
    let mut ctr = counter;
    let mut key = key;
    for round in 0..10 {
        if round > 0 {
            key[0] = key[0].wrapping_add(PHILOX_W0);
            key[1] = key[1].wrapping_add(PHILOX_W1);
        }
        let p0 = (PHILOX_M0 as u64) * (ctr[0] as u64);
        let p1 = (PHILOX_M1 as u64) * (ctr[2] as u64);
        ctr = [
            ((p1 >> 32) as u32) ^ ctr[1] ^ key[0],
            p1 as u32,
            ((p0 >> 32) as u32) ^ ctr[3] ^ key[1],
            p0 as u32,
        ];
    }
    ctr
}

/// What a draw is used for; each purpose gets a disjoint counter space.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Purpose {
    InitialState = 0,
    Increment = 1,
    Reference = 2,
}

#[derive(Clone, Copy, Debug)]
pub struct NormalStream {
    key: [u32; 2],
}

impl NormalStream {
    pub fn new(seed: u64) -> Self {
        Self {
            key: [seed as u32, (seed >> 32) as u32],
        }
    }

    /// Standard normal variate for one `(purpose, step, neuron, population)`.
    #[inline]
    pub fn normal(&self, purpose: Purpose, step: u64, neuron: usize, population: Population) -> f64 {
        self.pair(purpose, step, neuron)[population.index()]
    }

    /// Both populations' variates for one `(purpose, step, neuron)`: the
    /// cosine and sine branches of one Box–Muller transform, which are
    /// independent.
    #[inline]
    pub fn pair(&self, purpose: Purpose, step: u64, neuron: usize) -> [f64; 2] {
        let w = philox4x32([step as u32, (step >> 32) as u32, neuron as u32, purpose as u32], self.key);
        box_muller(w)
    }
}

#[inline]
fn box_muller(w: [u32; 4]) -> [f64; 2] {
    const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
    let a = ((w[0] as u64) << 21) | ((w[1] as u64) >> 11);
    let b = ((w[2] as u64) << 21) | ((w[3] as u64) >> 11);
    // u1 in (0, 1] keeps the log finite.
    let u1 = (a + 1) as f64 * SCALE;
    let u2 = b as f64 * SCALE;
    let r = (-2.0 * u1.ln()).sqrt();
    let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
    [r * c, r * s]
}
