//! Fixtures shared by the benchmarks under `benches/`.

use obs_trs::experiment::{generate_instance, Instance};
use obs_trs::{ExperimentSpec, Family};

/// Problem sizes swept by the solve benchmarks.
pub const SIZES: [usize; 3] = [1_000, 10_000, 100_000];

/// The seeded instance used for every benchmark of `family` at size `n`.
pub fn fixture(family: Family, n: usize) -> Instance {
    generate_instance(&ExperimentSpec::new(family, n, 1)).expect("benchmark instance")
}
