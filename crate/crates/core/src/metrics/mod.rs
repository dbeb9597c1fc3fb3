//! Mutual-exclusivity scores, training traces and threshold crossings.

mod score;
mod trace;

pub use score::{
    me_score_classifier, me_score_mlp, me_score_rows, me_score_seq2seq, TeacherForcedScorer,
};
pub use trace::{threshold_crossings, MEScoreTrace, ThresholdReport, TraceRow};
