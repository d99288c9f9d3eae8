use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Identifies one reproducible random stream: ChaCha8 keyed by `master_seed`,
/// positioned on stream `stream_index`. ChaCha exposes 2^64 independent
/// streams per key, so distinct indices never overlap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub stream_index: u64,
}

impl SeedSpec {
    pub fn new(master_seed: u64, stream_index: u64) -> Self {
        Self { master_seed, stream_index }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_index);
        rng
    }

    /// Stream for a keyed sub-task, e.g. `(n, gamma bits, rep)` of a grid cell.
    pub fn derived(master_seed: u64, key: &[u64]) -> Self {
        Self::new(master_seed, stream_key(key))
    }
}

/// Folds a key into a 64-bit stream index with the splitmix64 finalizer.
pub fn stream_key(key: &[u64]) -> u64 {
    key.iter().fold(0x9e37_79b9_7f4a_7c15, |acc, &part| splitmix64(acc ^ splitmix64(part)))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
