//! Independent oracles and fixtures shared by the integration tests and the
//! acceptance runner.

#![allow(dead_code)]

pub mod criteria;
pub mod embed_oracle;
pub mod graphs;
pub mod query_oracle;
pub mod scanner;
pub mod server;
pub mod sessions;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
