//! Lexical and embedding metrics, shared by evaluation and by the MBR
//! utilities.

mod bleu;
mod edit;
mod semdist;
mod stats;

pub use bleu::{
    corpus_bleu, segment_stats, sentence_bleu, sentence_bleu_str, BleuConfig, BleuLevel, BleuStats,
    NgramProfile, Smoothing,
};
pub use edit::{corpus_error_rate, edit_distance, micro_rate, EditStats};
pub use semdist::{cosine_distance, EmbeddingTable};
pub use stats::{mean_and_standard_error, median, pearson};
