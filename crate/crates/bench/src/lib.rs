//! Synthetic fixtures shared by the benchmarks.

use kgstale_core::kgdata::Triple;
use kgstale_core::Rng;

/// `facts` uniformly random triples over `entities` and `relations`.
pub fn random_facts(entities: usize, relations: usize, facts: usize, seed: u64) -> Vec<Triple> {
    let mut rng = Rng::new(seed);
    (0..facts)
        .map(|_| Triple::new(rng.below(entities), rng.below(relations), rng.below(entities)))
        .collect()
}
