//! Shared inputs for the criterion benchmarks under `benches/`.

use std::path::Path;

use mbrkit_core::data::load_hypothesis_sets;
use mbrkit_core::{dedup_weight, HypothesisSet, WeightedHypothesisSet};

/// The first `count` sample sets of the bundled simulated ASR fixture.
pub fn fixture_sets(count: usize) -> Vec<WeightedHypothesisSet> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/asr_sim/samples.jsonl");
    let sets: Vec<HypothesisSet> = load_hypothesis_sets(path).expect("fixture samples");
    sets.iter().take(count).map(dedup_weight).collect()
}
