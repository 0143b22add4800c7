//! Seeded random streams.
//!
//! Every random decision derives from one user seed. Components draw from
//! separate ChaCha streams so that, for example, changing the subsample size
//! does not perturb the initialization.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Data = 1,
    Init = 2,
    Trainer = 3,
    Subsample = 4,
    Classifier = 5,
    Split = 6,
    Gradcheck = 7,
}

pub fn stream(seed: u64, which: Stream) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}
