//! Generative mock backend.
//!
//! Produces no text, only a deterministic output token count per input:
//! `round(input_tokens * factor)` where the expansion factor is drawn from
//! noise seeded by (model seed, input hash). Costs therefore vary with the
//! input the way token-dependent generation does, while staying replayable.

use super::embed::token_count;
use crate::types::{derive_seed, fnv64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EXPANSION_LO: f64 = 0.5;
const EXPANSION_HI: f64 = 2.0;

#[derive(Debug, Clone, Copy)]
pub struct GenerativeMock {
    seed: u64,
}

impl GenerativeMock {
    pub fn new(seed: u64) -> GenerativeMock {
        GenerativeMock { seed }
    }

    /// Deterministic output token count for one input.
    pub fn output_tokens(&self, input: &str) -> u64 {
        let len = token_count(input);
        let item_seed = derive_seed(self.seed, "gen-expansion", fnv64(input.as_bytes()));
        let mut rng = ChaCha8Rng::seed_from_u64(item_seed);
        let factor = rng.random_range(EXPANSION_LO..EXPANSION_HI);
        (len as f64 * factor).round() as u64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_counts() {
        let a = GenerativeMock::new(7);
        let b = GenerativeMock::new(7);
        for text in ["short one", "a somewhat longer prompt to expand"] {
            assert_eq!(a.output_tokens(text), b.output_tokens(text));
        }
    }

    #[test]
    fn counts_scale_with_input_length() {
        let g = GenerativeMock::new(1);
        let short = g.output_tokens("a b");
        let long = g.output_tokens(&"tok ".repeat(100));
        assert!(long > short);
    }
}
