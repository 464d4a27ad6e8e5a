//! Deterministic seed derivation.
//!
//! Every source of randomness in the crate is a ChaCha stream seeded from a
//! master seed through this fixed mixing function, so runs are bit-for-bit
//! reproducible regardless of thread count and parallel work items never
//! share a stream.

/// Randomness domains carved out of a master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    /// Data simulation.
    Simulation,
    /// Cross-validation replicate fold draws.
    Replicate,
    /// Permutation re-labelings of the null distribution.
    Permutation,
}

impl Domain {
    fn tag(self) -> u64 {
        match self {
            Domain::Simulation => 0x51,
            Domain::Replicate => 0x52,
            Domain::Permutation => 0x53,
        }
    }
}

/// Derives the seed for work item `index` of `domain` from `master`.
///
/// Uses splitmix64 finalization rounds; the same (master, domain, index)
/// triple always yields the same seed, and distinct triples are mixed apart.
pub fn derive_seed(master: u64, domain: Domain, index: u64) -> u64 {
    let mut z = master;
    z = splitmix(z ^ domain.tag().wrapping_mul(0x9E3779B97F4A7C15));
    z = splitmix(z ^ index.wrapping_add(0xD1B54A32D192ED03));
    splitmix(z)
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_domain_separated() {
        let a = derive_seed(42, Domain::Replicate, 3);
        assert_eq!(a, derive_seed(42, Domain::Replicate, 3));
        assert_ne!(a, derive_seed(42, Domain::Replicate, 4));
        assert_ne!(a, derive_seed(42, Domain::Permutation, 3));
        assert_ne!(a, derive_seed(43, Domain::Replicate, 3));
    }

    #[test]
    fn indices_spread_over_the_range() {
        // Not a statistical test, just a guard against an accidentally
        // constant or low-entropy derivation.
        let seeds: Vec<u64> = (0..100)
            .map(|i| derive_seed(7, Domain::Permutation, i))
            .collect();
        let mut sorted = seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), seeds.len());
    }
}
