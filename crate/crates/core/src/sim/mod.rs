//! Exact event-level simulation of the order book model: single queueing
//! races (the brute-force oracle for the transition and terminal kernels),
//! full liquidation episodes under a policy, and synthetic order-flow
//! streams for calibration round trips.

pub mod episode;
pub mod race;
pub mod stream;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("policy returned inadmissible action ({m},{l}) in state {state}")]
    InadmissibleAction { m: u32, l: u32, state: String },
    #[error("episode exceeded {0} epochs; the race law guarantees finitely many")]
    NonTermination(usize),
    #[error("price would leave the positive range")]
    PriceUnderflow,
}

fn splitmix64(x: &mut u64) -> u64 {
    *x = x.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Derives an independent, reproducible stream from a master seed and a
/// path of indices (episode, race, ...); scheduling order never affects
/// the draws a given entity sees.
pub fn derive_rng(master: u64, ids: &[u64]) -> ChaCha8Rng {
    let mut acc = master ^ 0x6a09e667f3bcc908;
    for &id in ids {
        acc = splitmix64(&mut acc).wrapping_add(id.rotate_left(17));
    }
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut acc).to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}

pub use episode::{simulate_episode, EpisodeResult, EpochRecord, Policy};
pub use race::{simulate_race, simulate_race_capped, RaceOutcome, RaceProgress};
pub use stream::{generate_event_stream, write_lobster_files, StreamEvent, SyntheticStream, UnitSizes};
