use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent draw families, so changing one part of a scenario leaves
/// the others' draws untouched.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Hcp = 1,
    Facility = 2,
    Switching = 3,
    Outcome = 4,
    Consortium = 5,
    Fold = 6,
    Forest = 7,
}

/// ChaCha8 keyed by the scenario seed, with stream
/// `replication << 40 | kind << 32 | index`.
pub fn substream(seed: u64, replication: u64, kind: Stream, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((replication << 40) | ((kind as u64) << 32) | (index & 0xffff_ffff));
    rng
}
