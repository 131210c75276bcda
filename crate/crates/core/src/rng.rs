//! Seeded random streams.
//!
//! All randomness comes from ChaCha8 keyed by the run seed. Each consumer
//! gets its own stream id so that, for example, changing the dropout rate
//! never perturbs the shuffle order:
//!
//! | stream            | id                      |
//! |-------------------|-------------------------|
//! | parameter init    | `0`                     |
//! | epoch shuffle     | `1 << 32 \| epoch`      |
//! | dropout           | `2 << 32 \| epoch`      |
//! | synthetic data    | `3 << 32 \| tag`        |

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Init,
    Shuffle { epoch: u32 },
    Dropout { epoch: u32 },
    Synthetic { tag: u32 },
}

impl Stream {
    pub fn id(self) -> u64 {
        match self {
            Stream::Init => 0,
            Stream::Shuffle { epoch } => (1 << 32) | epoch as u64,
            Stream::Dropout { epoch } => (2 << 32) | epoch as u64,
            Stream::Synthetic { tag } => (3 << 32) | tag as u64,
        }
    }
}

pub fn stream(seed: u64, which: Stream) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which.id());
    rng
}
