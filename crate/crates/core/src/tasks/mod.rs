//! Synthetic mapping tasks with exact novelty bookkeeping.

mod mapping;
mod seqpair;

pub use mapping::{gen_one_to_one, SymbolMappingDataset};
pub use seqpair::{gen_seq2seq_data, SeqPair, SeqPairConfig, SeqPairDataset, EOS, SOS};
