//! Seeded, stream-addressable random number generation.
//!
//! Every random draw in the lab goes through an [`RngStream`]. A stream is
//! identified by a `(seed, stream_id)` pair; the ChaCha stream counter keeps
//! distinct ids on disjoint keystreams, so replicas never share randomness.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamId {
    pub seed: u64,
    pub stream_id: u64,
}

#[derive(Debug, Clone)]
pub struct RngStream {
    id: StreamId,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self {
            id: StreamId { seed, stream_id },
            rng,
        }
    }

    pub fn id(&self) -> StreamId {
        self.id
    }

    /// A sibling stream on the same seed. Used for auxiliary noise that must
    /// stay independent of the primary stream (e.g. conditional remainders).
    pub fn sibling(&self, offset: u64) -> RngStream {
        RngStream::new(self.id.seed, self.id.stream_id.wrapping_add(offset << 32))
    }

    #[inline]
    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn fill_normal(&mut self, out: &mut [f64]) {
        for v in out.iter_mut() {
            *v = self.rng.sample(StandardNormal);
        }
    }
}
