//! Statistically significant n-gram discovery on top of unigram topic models.
//!
//! The pipeline: fit a topic model ([`lda`]), annotate every corpus position
//! with its posterior topic ([`corpus`]), then grow phrases per topic by
//! repeatedly expanding a sparse back-off language model ([`backoff`]) with
//! the continuation whose likelihood ratio survives a permutation test
//! ([`significance`], [`growth`]). [`sim`] and [`bench`] generate synthetic
//! streams with known collocations and compare detection methods on them.
//!
//! Numeric work is generic over [`num::Scalar`]; `f64` is the default and the
//! `*64`/`*32` aliases below pin concrete instantiations.

pub mod backoff;
pub mod bench;
pub mod corpus;
pub mod error;
pub mod growth;
pub mod lda;
pub mod num;
pub mod rng;
pub mod scorer;
pub mod significance;
pub mod sim;
pub mod stream;

pub use backoff::{likelihood_ratio, BackoffModel, ExpansionScore, ModelStructure};
pub use bench::{run_benchmark, BenchConfig, BenchRow, Method};
pub use corpus::{
    build_vocabulary, extract_topic_stream, ranked_topic_words, read_stream, tokenize_corpus,
    topic_unigram_baseline, write_stream, AnnotatedToken, Token, Vocabulary,
};
pub use error::{Error, Result};
pub use growth::{
    build_topic_report, build_turbo_topics, grow_phrases, merge_ngram_masses, standalone_counts,
    GrownPhrase, GrowthConfig, GrowthStep, MergedNgram, PhraseEntry, TopicGrowth,
    TopicPhraseReport,
};
pub use lda::{annotate_corpus, fit_lda, LdaConfig, LdaState};
pub use num::Scalar;
pub use rng::{derive_seed, seeded_rng};
pub use scorer::{FlatScorer, HistoryScorer};
pub use significance::{
    backoff_lr_asymptotic_test, chi_square_test, chisq1_survival, dunning_lr_test,
    dunning_statistic, multinomial_permutation_test, permutation_test_max_lr, permute_stream,
    ContingencyTable, ExpansionTest, PermutationConfig, TestVerdict,
};
pub use sim::{f_measure, simulate_corpus, weighted_precision_recall, SimConfig, SimTruth, TrueBigram};
pub use stream::{Lexicon, PhraseStream, Sym, SENTINEL};

pub type BackoffModel64 = BackoffModel<f64>;
pub type BackoffModel32 = BackoffModel<f32>;
pub type ExpansionScore64 = ExpansionScore<f64>;
pub type ExpansionScore32 = ExpansionScore<f32>;
pub type TopicPhraseReport64 = TopicPhraseReport<f64>;
pub type TopicPhraseReport32 = TopicPhraseReport<f32>;
