use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::autodiff::Activation;
use crate::error::{Error, Result};
use crate::models::{MlpConfig, OptimizerConfig, OptimizerKind, Seq2SeqConfig};
use crate::novelty::NoveltyConfig;
use crate::oracle::OracleRunConfig;
use crate::tasks::SeqPairConfig;

use super::data::ZipfCorpusConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    SynthClassify,
    SynthSeq2seq,
    MtNovelty,
    ClassNovelty,
    OmniglotTrain,
    Oracle,
    Sweep,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::SynthClassify => "synth-classify",
            ExperimentKind::SynthSeq2seq => "synth-seq2seq",
            ExperimentKind::MtNovelty => "mt-novelty",
            ExperimentKind::ClassNovelty => "class-novelty",
            ExperimentKind::OmniglotTrain => "omniglot-train",
            ExperimentKind::Oracle => "oracle",
            ExperimentKind::Sweep => "sweep",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerSettings {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub weight_decay: f64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        OptimizerSettings {
            kind: OptimizerKind::Adam,
            lr: 0.001,
            weight_decay: 0.0,
        }
    }
}

impl OptimizerSettings {
    pub fn build(&self) -> OptimizerConfig {
        OptimizerConfig::new(self.kind, self.lr).with_weight_decay(self.weight_decay)
    }

    fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) || !(self.weight_decay >= 0.0) {
            return Err(Error::Config("lr and weight_decay must be finite and non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifyConfig {
    pub symbols: usize,
    pub train_symbols: usize,
    pub model: MlpConfig,
    pub optimizer: OptimizerSettings,
    pub entropy_lambda: f64,
    pub max_epochs: usize,
    /// Training stops once the loss falls below this.
    pub loss_target: f64,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        ClassifyConfig {
            symbols: 100,
            train_symbols: 90,
            model: MlpConfig::default(),
            optimizer: OptimizerSettings::default(),
            entropy_lambda: 0.0,
            max_epochs: 500,
            loss_target: 1e-4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Seq2SeqExperimentConfig {
    pub data: SeqPairConfig,
    pub model: Seq2SeqConfig,
    pub optimizer: OptimizerSettings,
    pub batch: usize,
    pub epochs: usize,
}

impl Default for Seq2SeqExperimentConfig {
    fn default() -> Self {
        Seq2SeqExperimentConfig {
            data: SeqPairConfig::default(),
            model: Seq2SeqConfig::default(),
            optimizer: OptimizerSettings::default(),
            batch: 32,
            epochs: 5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TruncationOrder {
    /// Novelty is measured on the truncated corpus.
    TruncateFirst,
    /// Novelty is measured on raw tokens.
    NoveltyFirst,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MtNoveltyConfig {
    /// Line-aligned source and target files; the synthetic corpus is used
    /// when these are absent.
    pub source: Option<PathBuf>,
    pub target: Option<PathBuf>,
    pub synthetic: ZipfCorpusConfig,
    pub top_k_source: Option<usize>,
    pub top_k_target: Option<usize>,
    pub truncation: TruncationOrder,
    pub novelty: NoveltyConfig,
    pub thresholds: Vec<f64>,
    /// Trailing smoothing window (in buckets) for threshold scans.
    pub smoothing: Option<usize>,
}

impl Default for MtNoveltyConfig {
    fn default() -> Self {
        MtNoveltyConfig {
            source: None,
            target: None,
            synthetic: ZipfCorpusConfig::default(),
            top_k_source: None,
            top_k_target: None,
            truncation: TruncationOrder::TruncateFirst,
            novelty: NoveltyConfig::default(),
            thresholds: vec![0.9, 0.5, 0.1],
            smoothing: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassNoveltyConfig {
    pub classes: usize,
    pub items_per_class: usize,
    /// Label file (`index,class_id`) whose manifest replaces the uniform one.
    pub labels: Option<PathBuf>,
    pub exponent: f64,
    pub runs: usize,
    pub max_len: usize,
    pub thresholds: Vec<f64>,
    /// Spacing of the P(new) curve written to disk.
    pub record_every: usize,
}

impl Default for ClassNoveltyConfig {
    fn default() -> Self {
        ClassNoveltyConfig {
            classes: 1623,
            items_per_class: 20,
            labels: None,
            exponent: 1.5,
            runs: 10,
            max_len: 400_000,
            thresholds: vec![0.2, 0.1, 0.05],
            record_every: 1000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImageSourceConfig {
    /// IDX image file and label CSV; synthetic blobs are used when absent.
    pub images: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub synthetic_classes: usize,
    pub synthetic_items: usize,
}

impl Default for ImageSourceConfig {
    fn default() -> Self {
        ImageSourceConfig {
            images: None,
            labels: None,
            synthetic_classes: 100,
            synthetic_items: 20,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepGrid {
    pub activations: Vec<Activation>,
    pub optimizers: Vec<OptimizerKind>,
    pub learning_rates: Vec<f64>,
    pub embedding_dims: Vec<usize>,
    pub hidden: Vec<bool>,
    pub regularizers: Vec<Regularizer>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regularizer {
    None,
    WeightDecay,
    Batchnorm,
    Dropout,
    Entropy,
}

impl Regularizer {
    pub fn name(self) -> &'static str {
        match self {
            Regularizer::None => "none",
            Regularizer::WeightDecay => "weight-decay",
            Regularizer::Batchnorm => "batchnorm",
            Regularizer::Dropout => "dropout",
            Regularizer::Entropy => "entropy",
        }
    }
}

impl Default for SweepGrid {
    fn default() -> Self {
        SweepGrid {
            activations: vec![Activation::Relu, Activation::Tanh, Activation::Sigmoid],
            optimizers: vec![OptimizerKind::Sgd, OptimizerKind::Momentum, OptimizerKind::Adam],
            learning_rates: vec![0.1, 0.01, 0.001],
            embedding_dims: vec![20, 100],
            hidden: vec![true, false],
            regularizers: vec![
                Regularizer::WeightDecay,
                Regularizer::Batchnorm,
                Regularizer::Dropout,
                Regularizer::Entropy,
            ],
        }
    }
}

/// One point of an expanded grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    pub name: String,
    pub config: ClassifyConfig,
    pub regularizer: Regularizer,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegularizerStrengths {
    pub weight_decay: f64,
    pub dropout: f64,
    pub entropy_lambda: f64,
}

impl Default for RegularizerStrengths {
    fn default() -> Self {
        RegularizerStrengths {
            weight_decay: 0.001,
            dropout: 0.5,
            entropy_lambda: 0.1,
        }
    }
}

impl SweepGrid {
    pub fn len(&self) -> usize {
        self.activations.len()
            * self.optimizers.len()
            * self.learning_rates.len()
            * self.embedding_dims.len()
            * self.hidden.len()
            * self.regularizers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cartesian product over `base`.
    pub fn expand(&self, base: &ClassifyConfig, strengths: &RegularizerStrengths) -> Vec<SweepPoint> {
        let mut out = Vec::with_capacity(self.len());
        for &act in &self.activations {
            for &opt in &self.optimizers {
                for &lr in &self.learning_rates {
                    for &emb in &self.embedding_dims {
                        for &hidden in &self.hidden {
                            for &reg in &self.regularizers {
                                let mut c = base.clone();
                                c.model.activation = act;
                                c.model.embedding_dim = emb;
                                c.model.hidden = hidden;
                                c.optimizer.kind = opt;
                                c.optimizer.lr = lr;
                                match reg {
                                    Regularizer::None => {}
                                    Regularizer::WeightDecay => c.optimizer.weight_decay = strengths.weight_decay,
                                    Regularizer::Batchnorm => c.model.batchnorm = true,
                                    Regularizer::Dropout => c.model.dropout = strengths.dropout,
                                    Regularizer::Entropy => c.entropy_lambda = strengths.entropy_lambda,
                                }
                                let name = format!(
                                    "{}-{}-lr{}-e{}-{}-{}",
                                    act.name(),
                                    opt.name(),
                                    lr,
                                    emb,
                                    if hidden { "hidden" } else { "flat" },
                                    reg.name()
                                );
                                out.push(SweepPoint { name, config: c, regularizer: reg });
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub grid: SweepGrid,
    pub strengths: RegularizerStrengths,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            grid: SweepGrid::default(),
            strengths: RegularizerStrengths::default(),
        }
    }
}

/// Everything needed to reproduce one experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    // presence is checked separately so a subcommand can supply it
    #[serde(default = "placeholder_kind")]
    pub kind: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub classify: ClassifyConfig,
    #[serde(default)]
    pub seq2seq: Seq2SeqExperimentConfig,
    #[serde(default)]
    pub mt_novelty: MtNoveltyConfig,
    #[serde(default)]
    pub class_novelty: ClassNoveltyConfig,
    #[serde(default)]
    pub images: ImageSourceConfig,
    #[serde(default)]
    pub online: OracleRunConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
}

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind) -> Self {
        ExperimentConfig {
            kind,
            seed: 0,
            out: None,
            classify: ClassifyConfig::default(),
            seq2seq: Seq2SeqExperimentConfig::default(),
            mt_novelty: MtNoveltyConfig::default(),
            class_novelty: ClassNoveltyConfig::default(),
            images: ImageSourceConfig::default(),
            online: OracleRunConfig::default(),
            sweep: SweepConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let (cfg, explicit) = Self::parse_text(text)?;
        if !explicit {
            return Err(Error::Config("missing field `kind`".into()));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Like [`ExperimentConfig::from_toml`] but `kind` may be omitted; when
    /// present it must equal `kind`.
    pub fn from_toml_as(text: &str, kind: ExperimentKind) -> Result<Self> {
        let (mut cfg, explicit) = Self::parse_text(text)?;
        if explicit && cfg.kind != kind {
            return Err(Error::Config(format!(
                "config is for `{}` but `{}` was requested",
                cfg.kind.name(),
                kind.name()
            )));
        }
        cfg.kind = kind;
        cfg.validate()?;
        Ok(cfg)
    }

    fn parse_text(text: &str) -> Result<(Self, bool)> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok((cfg, table.contains_key("kind")))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.classify;
        if c.train_symbols == 0 || c.train_symbols >= c.symbols {
            return Err(Error::Config("classify: need 0 < train_symbols < symbols".into()));
        }
        if c.entropy_lambda < 0.0 || c.max_epochs == 0 {
            return Err(Error::Config("classify: entropy_lambda >= 0 and max_epochs > 0 required".into()));
        }
        if !(0.0..1.0).contains(&c.model.dropout) {
            return Err(Error::Config("classify: dropout must lie in [0, 1)".into()));
        }
        c.optimizer.validate()?;
        let s = &self.seq2seq;
        s.optimizer.validate()?;
        if s.batch == 0 || s.epochs == 0 {
            return Err(Error::Config("seq2seq: batch and epochs must be positive".into()));
        }
        if !(0.0..=1.0).contains(&s.data.replace_prob) {
            return Err(Error::Config("seq2seq: replace_prob must lie in [0, 1]".into()));
        }
        let m = &self.mt_novelty;
        if m.source.is_some() != m.target.is_some() {
            return Err(Error::Config("mt_novelty: source and target must be given together".into()));
        }
        if m.top_k_source == Some(0) || m.top_k_target == Some(0) {
            return Err(Error::Config("mt_novelty: top_k must be at least 1".into()));
        }
        let n = &m.novelty;
        if n.n_shuffles == 0 || n.window == 0 || n.step == 0 {
            return Err(Error::Config("mt_novelty: shuffles, window and step must be positive".into()));
        }
        let k = &self.class_novelty;
        if k.runs == 0 || !(k.exponent > 0.0) || k.record_every == 0 {
            return Err(Error::Config("class_novelty: runs, exponent and record_every must be positive".into()));
        }
        let i = &self.images;
        if i.images.is_some() != i.labels.is_some() {
            return Err(Error::Config("images: images and labels must be given together".into()));
        }
        self.online.validate().map_err(|e| Error::Config(format!("online: {e}")))?;
        Ok(())
    }
}

fn placeholder_kind() -> ExperimentKind {
    ExperimentKind::SynthClassify
}

/// Reads a config file. With `kind` set the file's own `kind` key is optional.
pub fn parse_config(path: &Path, kind: Option<ExperimentKind>) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let parsed = match kind {
        Some(k) => ExperimentConfig::from_toml_as(&text, k),
        None => ExperimentConfig::from_toml(&text),
    };
    parsed.map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_is_required_unless_supplied() {
        assert!(matches!(ExperimentConfig::from_toml("seed = 3\n"), Err(Error::Config(_))));
        let c = ExperimentConfig::from_toml_as("seed = 3\n", ExperimentKind::Oracle).unwrap();
        assert_eq!((c.kind, c.seed), (ExperimentKind::Oracle, 3));
        let err = ExperimentConfig::from_toml_as("kind = \"sweep\"\n", ExperimentKind::Oracle).unwrap_err();
        assert!(err.to_string().contains("sweep"));
    }

    #[test]
    fn minimal_classify_config_takes_defaults() {
        let c = ExperimentConfig::from_toml("kind = \"synth-classify\"\n").unwrap();
        assert_eq!(c.kind, ExperimentKind::SynthClassify);
        assert_eq!(c.classify.model.embedding_dim, 100);
        assert!(c.classify.model.hidden);
        assert_eq!(c.classify.model.activation, Activation::Relu);
        assert_eq!(c.classify.optimizer.kind, OptimizerKind::Adam);
        assert_eq!(c.classify.optimizer.lr, 0.001);
    }

    #[test]
    fn unknown_key_is_named_with_its_line() {
        let err = ExperimentConfig::from_toml("kind = \"synth-classify\"\n[classify.optimizer]\nlearning_rte = 0.1\n")
            .unwrap_err();
        let msg = err.to_string();
        assert!(err.is_validation());
        assert!(msg.contains("learning_rte") && msg.contains("line 3"), "{msg}");
    }

    #[test]
    fn type_mismatch_is_a_config_error() {
        let err = ExperimentConfig::from_toml("kind = \"sweep\"\nseed = \"x\"\n").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn default_grid_has_432_points() {
        let g = SweepGrid::default();
        assert_eq!(g.len(), 432);
        let pts = g.expand(&ClassifyConfig::default(), &RegularizerStrengths::default());
        assert_eq!(pts.len(), 432);
        let names: std::collections::HashSet<_> = pts.iter().map(|p| p.name.clone()).collect();
        assert_eq!(names.len(), 432);
        assert_eq!(pts[0].name, "relu-sgd-lr0.1-e20-hidden-weight-decay");
    }

    #[test]
    fn config_round_trips_through_toml() {
        let mut c = ExperimentConfig::new(ExperimentKind::MtNovelty);
        c.mt_novelty.top_k_source = Some(17000);
        let back = ExperimentConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn half_given_paths_are_rejected() {
        let err = ExperimentConfig::from_toml("kind = \"mt-novelty\"\n[mt_novelty]\nsource = \"a.txt\"\n").unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }
}
