//! Counter-based random streams.
//!
//! Every replicate, run or matrix row draws from its own ChaCha stream,
//! addressed by `(seed, purpose, index)`. Results therefore do not depend on
//! how work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream purposes; kept distinct so that e.g. vertex types and edges never
/// share randomness.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Types = 1,
    Edges = 2,
    EdgeRow = 3,
    Replicate = 4,
    BranchingRun = 5,
    PowerStart = 6,
    Growth = 7,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent generator for `(seed, purpose, index)`.
pub fn stream(seed: u64, purpose: Purpose, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix(seed ^ splitmix(purpose as u64)));
    rng.set_stream(index);
    rng
}

/// Derive a child seed, e.g. one per replicate of an experiment.
pub fn child_seed(seed: u64, index: u64) -> u64 {
    splitmix(seed ^ splitmix(index.wrapping_add(0x5EED)))
}
