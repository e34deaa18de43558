use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Counter-based seeded generator identified by a master seed and a stream
/// index. Identical `(master_seed, stream_index)` pairs reproduce identical
/// draws regardless of execution order, so ensemble members can run in
/// parallel on disjoint streams.
#[derive(Debug, Clone)]
pub struct SeededRng {
    master_seed: u64,
    stream_index: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(master_seed: u64, stream_index: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(master_seed);
        inner.set_stream(stream_index);
        Self {
            master_seed,
            stream_index,
            inner,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_index(&self) -> u64 {
        self.stream_index
    }

    /// One draw from the standard normal distribution.
    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// A vector of i.i.d. standard normal draws.
    pub fn normal_vector(&mut self, len: usize) -> DVector<f64> {
        DVector::from_fn(len, |_, _| self.standard_normal())
    }
}
