//! Configuration, data loading, output files and experiment drivers.

mod config;
mod data;
mod experiments;
mod output;
mod plot;

pub use config::{
    parse_config, ClassNoveltyConfig, ClassifyConfig, ExperimentConfig, ExperimentKind, ImageSourceConfig,
    MtNoveltyConfig, OptimizerSettings, Regularizer, RegularizerStrengths, Seq2SeqExperimentConfig, SweepConfig,
    SweepGrid, SweepPoint, TruncationOrder,
};
pub use data::{
    gen_zipf_parallel_corpus, load_idx_images, load_parallel_corpus, parse_idx_images,
    synthetic_blob_images, LabeledImages, ZipfCorpusConfig,
};
pub use experiments::{
    class_manifest, load_images, run_class_novelty, run_experiment, run_mt_novelty, run_omniglot_train,
    run_oracle, train_synth_classify, train_synth_seq2seq, ClassifyOutcome,
};
pub use output::{format_number, write_atomic};
pub use plot::{render_svg_plot, PlotSpec, SeriesSpec};
