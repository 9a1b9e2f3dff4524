//! A master seed fans out to independent per-component streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stream {
    Env,
    Init,
    Sampling,
    Exploration,
    Evaluation,
}

impl Stream {
    pub const ALL: [Stream; 5] = [Stream::Env, Stream::Init, Stream::Sampling, Stream::Exploration, Stream::Evaluation];

    fn id(self) -> u64 {
        match self {
            Stream::Env => 0,
            Stream::Init => 1,
            Stream::Sampling => 2,
            Stream::Exploration => 3,
            Stream::Evaluation => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedStreams {
    pub master: u64,
}

impl SeedStreams {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    /// Same key as every other stream, distinct ChaCha stream id.
    pub fn rng(&self, stream: Stream) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::seed_from_u64(self.master);
        r.set_stream(stream.id());
        r
    }
}

/// Position of one stream, enough to resume it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngPosition {
    pub stream: u64,
    pub word_pos: u128,
}

impl RngPosition {
    pub fn of(rng: &ChaCha8Rng) -> Self {
        Self {
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self, master: u64) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::seed_from_u64(master);
        r.set_stream(self.stream);
        r.set_word_pos(self.word_pos);
        r
    }
}
