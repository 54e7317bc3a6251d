//! Shared fixtures for the criterion benchmarks.

use pgru_core::dataio::AlignedDataset;
use pgru_core::synth::{generate, SynthProfile};
use pgru_core::Result;

/// Deterministic dataset used by every benchmark.
pub fn bench_dataset(days: usize) -> Result<AlignedDataset> {
    let (price, structural) = generate(99, days, SynthProfile::Smooth)?;
    pgru_core::align(&price, &structural)
}
