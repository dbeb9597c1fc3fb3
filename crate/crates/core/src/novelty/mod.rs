//! Streaming novelty statistics for parallel corpora and class streams.

mod classes;
mod corpus;
mod mt;

pub use classes::{
    dataset_p_new, first_crossings, model_p_new, power_law_stream, power_law_weights,
    ClassManifest, ClassStream, DatasetNoveltyTracker, PowerLawStreamer,
};
pub use corpus::{vocab_truncate, ParallelCorpus, SeenVocab, UNK};
pub use mt::{
    base_rate_series, mt_base_rate, novelty_buckets, stream_mt_novelty, NoveltyBucket,
    NoveltyConfig, NoveltyCurve,
};
