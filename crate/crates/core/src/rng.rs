//! Named, independently seeded random streams.
//!
//! A single master seed fans out into one stream per source of randomness so
//! that changing, say, the action sampler leaves user placement and fading
//! untouched.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    Placement,
    Fading,
    Arrivals,
    Actions,
    Training,
    Init,
    PilotBook,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Placement => 0x706c_6163,
            Stream::Fading => 0x6661_6469,
            Stream::Arrivals => 0x6172_7269,
            Stream::Actions => 0x6163_7469,
            Stream::Training => 0x7472_6169,
            Stream::Init => 0x696e_6974,
            Stream::PilotBook => 0x7073_6962,
        }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Derives a child seed from a parent seed and an index.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ splitmix64(index.wrapping_add(0x51_7cc1_b727_220a)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStreams {
    master: u64,
}

impl RngStreams {
    pub fn new(master: u64) -> Self {
        RngStreams { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    /// The `index`-th generator of `stream` (e.g. one per episode).
    pub fn get(&self, stream: Stream, index: u64) -> SimRng {
        let seed = derive_seed(derive_seed(self.master, stream.tag()), index);
        SimRng::seed_from_u64(seed)
    }
}
