//! Named random streams derived from a master seed.
//!
//! Each (replicate, purpose) pair gets its own ChaCha stream, so replicates
//! can be generated in any order or in parallel with identical results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Covariate = 1,
    Points = 2,
    Pilot = 3,
    Generic = 4,
}

pub fn stream(master_seed: u64, replicate: u64, purpose: Purpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream((replicate << 8) | purpose as u64);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: u64 = stream(7, 3, Purpose::Points).random();
        let b: u64 = stream(7, 3, Purpose::Points).random();
        let c: u64 = stream(7, 3, Purpose::Covariate).random();
        let d: u64 = stream(7, 4, Purpose::Points).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }
}
