//! Seed derivation. Every random stream in the crate is keyed by a base seed
//! plus a path of integers, so streams never depend on call order.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix a base seed with a sequence of stream coordinates.
pub fn derive(base: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix(base), |acc, &p| splitmix(acc ^ splitmix(p)))
}

/// Stream tags so that unrelated consumers of the same base seed diverge.
pub mod stream {
    pub const VALIDATION: u64 = 0x56414c;
    pub const TRAIN_BATCH: u64 = 0x545242;
    pub const REFERENCE: u64 = 0x524546;
    pub const SHUFFLE: u64 = 0x534846;
    pub const INIT: u64 = 0x494e49;
    pub const POOL: u64 = 0x504f4f;
    pub const PROBE: u64 = 0x50524f;
}

pub fn rng(seed: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}
