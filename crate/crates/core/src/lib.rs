//! Numerical core of the mutual-exclusivity lab: a small reverse-mode autodiff
//! engine, the classifier / seq2seq / convolutional models built on it, the
//! synthetic one-to-one tasks, ME scoring, lifelong novelty statistics, the
//! oracle bias experiment, and the config-driven harness that ties them
//! together.

pub mod autodiff;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod models;
pub mod novelty;
pub mod oracle;
pub mod rng;
pub mod tasks;

pub use autodiff::{Activation, ParamStore, Real, Tape, Tensor, Var};
pub use error::{Error, Result};
pub use rng::RandomStream;
