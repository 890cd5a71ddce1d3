//! Counter-style keyed random streams.
//!
//! Every value is a pure function of `(seed, lane, index)`: the seed keys a
//! ChaCha8 generator, the lane selects its 64-bit stream id and the index
//! selects the word position. Draws can therefore be produced in any order and
//! on any number of threads without changing a single bit.

use rand_chacha::ChaCha8Rng;
use rand_core::{Rng, SeedableRng};
use serde::Serialize;

/// Purpose of a lane. Different channels never share a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[repr(u8)]
pub enum Channel {
    /// Draws of the integration variable `ξ` from the measure.
    Xi = 1,
    /// Uniform draws `η` on `[0, 1]` used by the Volterra recursion.
    Eta = 2,
    /// Standard normals for Gaussian-supremum simulation.
    Gauss = 3,
    /// Random arguments for Lipschitz probing.
    Probe = 4,
    /// Anything else (tests, smoke checks).
    Aux = 5,
}

/// Coordinates of one independent stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Lane {
    pub channel: Channel,
    pub replication: u32,
    pub stage: u16,
}

impl Lane {
    pub fn new(channel: Channel, replication: u32, stage: u16) -> Self {
        Self {
            channel,
            replication,
            stage,
        }
    }

    fn stream_id(&self) -> u64 {
        ((self.channel as u64) << 48) | ((self.stage as u64) << 32) | self.replication as u64
    }
}

/// The seed from which all lanes are derived.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct RandomStream {
    seed: u64,
}

impl RandomStream {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Generator positioned at index 0 of `lane`.
    pub fn lane(&self, lane: Lane) -> LaneRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(lane.stream_id());
        LaneRng { rng }
    }

    /// Generator positioned at `index` of `lane`.
    pub fn lane_at(&self, lane: Lane, index: u64) -> LaneRng {
        let mut rng = self.lane(lane);
        rng.seek(index);
        rng
    }

    /// The `index`-th uniform of `lane`.
    pub fn uniform_at(&self, lane: Lane, index: u64) -> f64 {
        self.lane_at(lane, index).next_uniform()
    }
}

const INV_2_53: f64 = 1.0 / (1u64 << 53) as f64;

/// Sequential reader over one lane.
#[derive(Debug, Clone)]
pub struct LaneRng {
    rng: ChaCha8Rng,
}

impl LaneRng {
    /// Moves to the `index`-th 64-bit value of the lane.
    pub fn seek(&mut self, index: u64) {
        self.rng.set_word_pos(2 * index as u128);
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform on the open interval `(0, 1)`.
    #[inline]
    pub fn next_uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * INV_2_53
    }

    pub fn fill_uniform(&mut self, out: &mut [f64]) {
        for v in out.iter_mut() {
            *v = self.next_uniform();
        }
    }

    /// Standard normals by the Box-Muller transform; consumes two uniforms per
    /// pair of outputs (an odd tail still consumes a full pair).
    pub fn fill_normal(&mut self, out: &mut [f64]) {
        let mut chunks = out.chunks_mut(2);
        for chunk in &mut chunks {
            let u1 = self.next_uniform();
            let u2 = self.next_uniform();
            let r = (-2.0 * u1.ln()).sqrt();
            let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
            chunk[0] = r * c;
            if chunk.len() > 1 {
                chunk[1] = r * s;
            }
        }
    }

    /// Number of lane indices consumed by [`LaneRng::fill_normal`] for `n` outputs.
    pub fn normal_footprint(n: usize) -> u64 {
        2 * n.div_ceil(2) as u64
    }
}
