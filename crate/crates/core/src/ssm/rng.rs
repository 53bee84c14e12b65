use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// A reproducible random stream identified by `(seed, stream_id)`.
///
/// Backed by ChaCha20 with the stream id selecting an independent keystream,
/// so streams that share a seed never overlap.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha20Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha20Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        RngStream {
            seed,
            stream_id,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// A fresh stream sharing this seed. Derivation is a pure function of
    /// `(seed, stream_id, child)` and does not consume from `self`.
    pub fn child(&self, child: u64) -> RngStream {
        let id = self
            .stream_id
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .rotate_left(17)
            ^ child.wrapping_add(0xD1B5_4A32_D192_ED03);
        RngStream::new(self.seed, id)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}
