//! Sample-based minimum Bayes risk decoding, reranking and evaluation for
//! speech-to-text hypothesis sets.

pub mod audio;
pub mod data;
pub mod error;
pub mod harness;
pub mod mbr;
pub mod metrics;
pub mod rerank;
pub mod sampling;
pub mod textnorm;

pub use data::{
    dedup_weight, DecodeResult, Hypothesis, HypothesisSet, Method, Utterance,
    WeightedHypothesisSet, WeightedItem,
};
pub use error::{Error, Result};
pub use mbr::{
    mbr_select, mbr_select_pruned, utility_matrix, PruneSchedule, Utility, UtilityMatrix,
    UtilitySpec,
};
pub use sampling::{SamplerConfig, SamplerMethod, SyntheticModel};
pub use textnorm::{NormalizerKind, NormalizerSpec, TokenUnit};
