//! Seeded, splittable random streams.
//!
//! Every random draw in the toolkit flows through an [`RngStream`]: a value
//! type naming a (seed, stream id) pair of a counter-based generator
//! (ChaCha8). Identical descriptors replay identical sequences on any
//! machine or thread schedule; distinct stream ids are independent. Trial
//! `i` of a sweep or sample `i` of a dataset uses stream id `i` directly;
//! nested contexts re-key through [`RngStream::substream`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Vector;

/// Descriptor of a reproducible random stream. A value, not mutable state:
/// instantiate a generator with [`RngStream::rng`] to draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> RngStream {
        RngStream { seed, stream_id }
    }

    /// Fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }

    /// Same key, different stream id.
    pub fn with_stream(&self, stream_id: u64) -> RngStream {
        RngStream::new(self.seed, stream_id)
    }

    /// Child stream re-keyed from (seed, stream_id, tag). Children are
    /// independent of the parent and of siblings with different tags.
    pub fn substream(&self, tag: u64) -> RngStream {
        let key = splitmix64(self.seed ^ splitmix64(self.stream_id ^ splitmix64(tag)));
        RngStream::new(key, 0)
    }
}

/// `n` i.i.d. normal draws with the given mean and standard deviation.
/// A fresh generator is created from `stream`, so replaying the same stream
/// yields the same vector.
pub fn sample_gaussian(stream: RngStream, n: usize, mean: f64, std: f64) -> Result<Vector> {
    if !(std >= 0.0) || !std.is_finite() {
        return Err(Error::InvalidParam(format!(
            "gaussian std must be >= 0 and finite, got {std}"
        )));
    }
    if std == 0.0 {
        return Ok(vec![mean; n]);
    }
    let normal = Normal::new(mean, std)
        .map_err(|e| Error::InvalidParam(format!("gaussian parameters: {e}")))?;
    let mut rng = stream.rng();
    Ok((0..n).map(|_| normal.sample(&mut rng)).collect())
}

/// Uniform draw in `[lo, hi]` from a fresh generator.
pub fn sample_uniform(stream: RngStream, lo: f64, hi: f64) -> f64 {
    debug_assert!(lo <= hi);
    let mut rng = stream.rng();
    lo + (hi - lo) * rng.gen::<f64>()
}
