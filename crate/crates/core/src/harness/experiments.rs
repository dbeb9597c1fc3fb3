use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::config::{
    ClassNoveltyConfig, ClassifyConfig, ExperimentConfig, ExperimentKind, ImageSourceConfig, MtNoveltyConfig,
    Seq2SeqExperimentConfig, TruncationOrder,
};
use super::data::{gen_zipf_parallel_corpus, load_idx_images, load_parallel_corpus, synthetic_blob_images, LabeledImages};
use super::output::{format_number, write_atomic};
use super::plot::{render_svg_plot, PlotSpec, SeriesSpec};
use crate::autodiff::{Real, Tape};
use crate::error::{Error, Result};
use crate::metrics::{me_score_mlp, me_score_seq2seq, threshold_crossings, MEScoreTrace, ThresholdReport, TraceRow};
use crate::models::{entropy_of, mean_entropy, MlpClassifier, MlpConfig, OptimizerState, Seq2SeqConfig, Seq2SeqModel};
use crate::novelty::{first_crossings, stream_mt_novelty, vocab_truncate, ClassManifest, NoveltyCurve};
use crate::oracle::{aggregate_first_encounter, run_online, run_online_oracle, FirstEncounterLog, OnlineRun};
use crate::rng::RandomStream;
use crate::tasks::{gen_one_to_one, gen_seq2seq_data, SeqPairDataset, SymbolMappingDataset};

#[derive(Clone, Debug, PartialEq)]
pub struct ClassifyOutcome {
    pub trace: MEScoreTrace,
    /// The loss or a parameter became non-finite; training stopped there.
    pub diverged: bool,
    /// Mean prediction entropy (nats) on the held-out inputs after training.
    pub heldout_entropy: f64,
}

impl ClassifyOutcome {
    pub fn final_row(&self) -> TraceRow {
        *self.trace.last().expect("trace holds the untrained row")
    }
}

/// Training-set accuracy and NLL of the model in evaluation mode.
fn evaluate<T: Real>(model: &mut MlpClassifier<T>, data: &SymbolMappingDataset) -> Result<(f64, f64)> {
    let lp = model.log_probs(&data.train_inputs)?;
    let (mut hits, mut nll) = (0, 0.0);
    for (r, &x) in data.train_inputs.iter().enumerate() {
        let row = lp.row(r);
        let y = data.target(x);
        hits += usize::from(argmax(row) == y);
        nll -= row[y].to_f64_lossy();
    }
    let n = data.train_inputs.len() as f64;
    Ok((hits as f64 / n, nll / n))
}

fn argmax<T: Real>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

/// Full-batch training of the symbol classifier, recording the ME score after
/// every epoch. Row 0 is the untrained model.
pub fn train_synth_classify(cfg: &ClassifyConfig, seed: u64) -> Result<ClassifyOutcome> {
    let data = gen_one_to_one(cfg.symbols, cfg.train_symbols, seed)?;
    let model_cfg = MlpConfig {
        vocab: cfg.symbols,
        outputs: cfg.symbols,
        ..cfg.model.clone()
    };
    let rng = RandomStream::new(seed, "synth-classify");
    let mut model = MlpClassifier::<f32>::new(model_cfg, &rng)?;
    let mut opt = OptimizerState::new(cfg.optimizer.build(), &model.store);
    let targets = data.train_targets();
    let mut trace = MEScoreTrace::new();
    let (accuracy, loss) = evaluate(&mut model, &data)?;
    trace.push(TraceRow { step: 0, me_score: me_score_mlp(&mut model, &data)?, loss, accuracy })?;
    let mut diverged = false;
    for epoch in 1..=cfg.max_epochs {
        let mut tape = Tape::new();
        let lp = model.forward(&mut tape, &data.train_inputs, true)?;
        let nll = tape.nll_loss(lp, &targets)?;
        let loss = if cfg.entropy_lambda > 0.0 {
            let h = mean_entropy(&mut tape, lp);
            let h = tape.scale(h, f32::from_f64_lossy(cfg.entropy_lambda));
            tape.sub(nll, h)?
        } else {
            nll
        };
        if !tape.value(loss).item().to_f64_lossy().is_finite() {
            diverged = true;
            break;
        }
        let grads = tape.backward(loss)?;
        model.store.zero_grads();
        grads.accumulate_into(&tape, &mut model.store);
        opt.step(&mut model.store)?;
        if model.store.iter().any(|p| !p.value.all_finite()) {
            diverged = true;
            break;
        }
        let me = me_score_mlp(&mut model, &data)?;
        // the trace and the stopping rule look at the data term only
        let (accuracy, value) = evaluate(&mut model, &data)?;
        if !me.is_finite() || !value.is_finite() {
            diverged = true;
            break;
        }
        trace.push(TraceRow { step: epoch as u64, me_score: me, loss: value, accuracy })?;
        if value < cfg.loss_target {
            break;
        }
    }
    if diverged {
        log::warn!("training diverged after {} epochs", trace.len() - 1);
    }
    let lp = model.log_probs(&data.heldout_inputs)?;
    let heldout_entropy = (0..data.heldout_inputs.len())
        .map(|r| entropy_of(&lp.row(r).iter().map(|v| v.to_f64_lossy().exp()).collect::<Vec<_>>()))
        .sum::<f64>()
        / data.heldout_inputs.len().max(1) as f64;
    Ok(ClassifyOutcome { trace, diverged, heldout_entropy })
}

fn sequence_accuracy(model: &mut Seq2SeqModel<f32>, data: &SeqPairDataset) -> Result<f64> {
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, p) in data.train.iter().enumerate() {
        groups.entry(p.source.len()).or_default().push(i);
    }
    let mut hits = 0;
    for idx in groups.values() {
        for chunk in idx.chunks(256) {
            let src: Vec<_> = chunk.iter().map(|&i| data.train[i].source.clone()).collect();
            let out = model.greedy_decode(&src, data.config.max_len + 2)?;
            hits += chunk.iter().zip(&out).filter(|(&i, o)| **o == data.train[i].target).count();
        }
    }
    Ok(hits as f64 / data.train.len().max(1) as f64)
}

/// Minibatch seq2seq training; one trace row per epoch (row 0 untrained).
pub fn train_synth_seq2seq(cfg: &Seq2SeqExperimentConfig, seed: u64) -> Result<MEScoreTrace> {
    let data = gen_seq2seq_data(&cfg.data, seed)?;
    let model_cfg = Seq2SeqConfig {
        src_vocab: data.src_vocab(),
        tgt_vocab: data.tgt_vocab(),
        sos: crate::tasks::SOS,
        eos: crate::tasks::EOS,
        ..cfg.model.clone()
    };
    let rng = RandomStream::new(seed, "synth-seq2seq");
    let mut model = Seq2SeqModel::<f32>::new(model_cfg, &rng)?;
    let mut opt = OptimizerState::new(cfg.optimizer.build(), &model.store);
    let pairs: Vec<(Vec<usize>, Vec<usize>)> = data.train.iter().map(|p| (p.source.clone(), p.target.clone())).collect();
    let mut order_rng = rng.substream("order");
    let mut trace = MEScoreTrace::new();
    let initial_loss = {
        let (mut total, mut n) = (0.0, 0);
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, p) in pairs.iter().enumerate() {
            groups.entry(p.0.len()).or_default().push(i);
        }
        for idx in groups.values() {
            let src: Vec<_> = idx.iter().map(|&i| pairs[i].0.clone()).collect();
            let tgt: Vec<_> = idx.iter().map(|&i| pairs[i].1.clone()).collect();
            let mut tape = Tape::new();
            let l = model.loss(&mut tape, &src, &tgt, false)?;
            total += tape.value(l).item().to_f64_lossy() * idx.len() as f64;
            n += idx.len();
        }
        total / n.max(1) as f64
    };
    trace.push(TraceRow {
        step: 0,
        me_score: me_score_seq2seq(&mut model, &data)?,
        loss: initial_loss,
        accuracy: sequence_accuracy(&mut model, &data)?,
    })?;
    for epoch in 1..=cfg.epochs {
        let loss = model.train_epoch(&mut opt, &pairs, cfg.batch, &mut order_rng)?;
        if !loss.is_finite() {
            log::warn!("seq2seq loss became non-finite at epoch {epoch}");
            break;
        }
        trace.push(TraceRow {
            step: epoch as u64,
            me_score: me_score_seq2seq(&mut model, &data)?,
            loss,
            accuracy: sequence_accuracy(&mut model, &data)?,
        })?;
    }
    Ok(trace)
}

/// Loads the configured corpus (or generates the synthetic one) and
/// measures its novelty curve.
pub fn run_mt_novelty(cfg: &MtNoveltyConfig, seed: u64) -> Result<(NoveltyCurve, ThresholdReport)> {
    let corpus = match (&cfg.source, &cfg.target) {
        (Some(s), Some(t)) => load_parallel_corpus(s, t)?,
        _ => gen_zipf_parallel_corpus(&cfg.synthetic, seed)?,
    };
    let corpus = match cfg.truncation {
        TruncationOrder::TruncateFirst => vocab_truncate(&corpus, cfg.top_k_source, cfg.top_k_target)?,
        TruncationOrder::NoveltyFirst => corpus,
    };
    let curve = stream_mt_novelty(&corpus, &cfg.novelty, &RandomStream::new(seed, "mt-novelty"))?;
    let report = threshold_crossings(&curve.conditional_points(), &cfg.thresholds, cfg.smoothing)?;
    Ok((curve, report))
}

pub fn class_manifest(cfg: &ClassNoveltyConfig) -> Result<ClassManifest> {
    match &cfg.labels {
        None => Ok(ClassManifest::uniform(cfg.classes, cfg.items_per_class)),
        Some(path) => {
            let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Load(format!("{}: {e}", path.display())))?;
            let mut counts: BTreeMap<u64, usize> = BTreeMap::new();
            for rec in rdr.records() {
                let rec = rec.map_err(|e| Error::Load(e.to_string()))?;
                let class: u64 = rec
                    .get(1)
                    .and_then(|s| s.trim().parse().ok())
                    .ok_or_else(|| Error::Load(format!("{}: bad class_id", path.display())))?;
                *counts.entry(class).or_default() += 1;
            }
            Ok(ClassManifest { items: counts.into_values().collect() })
        }
    }
}

/// First draws at which the dataset P(new) falls below each threshold, one
/// row per run.
pub fn run_class_novelty(cfg: &ClassNoveltyConfig, seed: u64) -> Result<Vec<Vec<Option<usize>>>> {
    let manifest = class_manifest(cfg)?;
    let root = RandomStream::new(seed, "class-novelty");
    (0..cfg.runs)
        .into_par_iter()
        .map(|r| {
            first_crossings(
                &manifest,
                cfg.exponent,
                &cfg.thresholds,
                cfg.max_len,
                &mut root.substream(&format!("run{r}")),
            )
        })
        .collect()
}

pub fn load_images(cfg: &ImageSourceConfig, seed: u64) -> Result<LabeledImages> {
    match (&cfg.images, &cfg.labels) {
        (Some(i), Some(l)) => load_idx_images(i, l),
        _ => synthetic_blob_images(cfg.synthetic_classes, cfg.synthetic_items, seed),
    }
}

#[derive(Serialize)]
struct Meta<'a> {
    experiment: &'a str,
    seed: u64,
    version: &'a str,
    wall_seconds: f64,
    config: &'a ExperimentConfig,
}

fn write_meta(dir: &Path, cfg: &ExperimentConfig, started: Instant) -> Result<()> {
    let meta = Meta {
        experiment: cfg.kind.name(),
        seed: cfg.seed,
        version: env!("CARGO_PKG_VERSION"),
        wall_seconds: started.elapsed().as_secs_f64(),
        config: cfg,
    };
    let text = toml::to_string(&meta).map_err(|e| Error::Config(e.to_string()))?;
    write_atomic(&dir.join("meta.toml"), |w| Ok(w.write_all(text.as_bytes())?))
}

fn write_csv_text(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, |w| Ok(w.write_all(text.as_bytes())?))
}

fn csv_string(fill: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<String> {
    let mut buf = Vec::new();
    fill(&mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Plot(e.to_string()))
}

fn write_plot(path: &Path, spec: &PlotSpec, csv_text: &str) -> Result<()> {
    let svg = render_svg_plot(spec, csv_text)?;
    write_atomic(path, |w| Ok(w.write_all(svg.as_bytes())?))
}

fn trace_plot(title: &str) -> PlotSpec {
    PlotSpec {
        title: title.into(),
        x_label: "epoch".into(),
        y_label: "value".into(),
        series: vec![
            SeriesSpec::new("ME score", "step", "me_score"),
            SeriesSpec::new("loss", "step", "loss"),
            SeriesSpec::new("accuracy", "step", "accuracy"),
        ],
    }
}

fn write_trace(dir: &Path, trace: &MEScoreTrace, title: &str) -> Result<()> {
    let text = csv_string(|b| trace.write_csv(b))?;
    write_csv_text(&dir.join("trace.csv"), &text)?;
    write_plot(&dir.join("me_plot.svg"), &trace_plot(title), &text)
}

fn write_report(path: &Path, report: &ThresholdReport, x_name: &str) -> Result<()> {
    let text = csv_string(|b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record(["threshold", x_name, "smoothing"])?;
        for &(t, x) in &report.entries {
            w.write_record([
                format_number(t),
                x.map(format_number).unwrap_or_default(),
                report.smoothing.map(|s| s.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    })?;
    write_csv_text(path, &text)
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (m, (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt())
}

/// Online ConvNet runs without the oracle, measuring P(new) along the way.
pub fn run_omniglot_train(cfg: &ExperimentConfig) -> Result<Vec<OnlineRun>> {
    let images = load_images(&cfg.images, cfg.seed)?;
    let mut online = cfg.online.clone();
    online.eval_every.get_or_insert(160);
    let rng = RandomStream::new(cfg.seed, "omniglot-train");
    (0..online.runs)
        .into_par_iter()
        .map(|r| run_online(&images, &online, 0.0, r, &rng))
        .collect()
}

pub fn run_oracle(cfg: &ExperimentConfig) -> Result<FirstEncounterLog> {
    let images = load_images(&cfg.images, cfg.seed)?;
    run_online_oracle(&images, &cfg.online, &RandomStream::new(cfg.seed, "oracle"))
}

/// Runs the configured experiment and writes its artifacts under `out`.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    cfg.validate()?;
    let started = Instant::now();
    std::fs::create_dir_all(out)?;
    match cfg.kind {
        ExperimentKind::SynthClassify => {
            let res = train_synth_classify(&cfg.classify, cfg.seed)?;
            write_trace(out, &res.trace, "ME score during training")?;
        }
        ExperimentKind::SynthSeq2seq => {
            let trace = train_synth_seq2seq(&cfg.seq2seq, cfg.seed)?;
            write_trace(out, &trace, "seq2seq ME score during training")?;
        }
        ExperimentKind::MtNovelty => {
            let (curve, report) = run_mt_novelty(&cfg.mt_novelty, cfg.seed)?;
            let text = csv_string(|b| curve.write_csv(b))?;
            write_csv_text(&out.join("curve.csv"), &text)?;
            write_report(&out.join("thresholds.csv"), &report, "sentences")?;
            let spec = PlotSpec {
                title: "New target word probability".into(),
                x_label: "sentences".into(),
                y_label: "probability".into(),
                series: vec![
                    SeriesSpec::new("conditional", "bucket_end", "conditional_mean").with_std("conditional_std"),
                    SeriesSpec::new("base rate", "bucket_end", "base_rate_mean").with_std("base_rate_std"),
                ],
            };
            write_plot(&out.join("novelty_plot.svg"), &spec, &text)?;
        }
        ExperimentKind::ClassNovelty => {
            let runs = run_class_novelty(&cfg.class_novelty, cfg.seed)?;
            let th = &cfg.class_novelty.thresholds;
            let text = csv_string(|b| {
                let mut w = csv::Writer::from_writer(b);
                w.write_record(["run", "threshold", "t"])?;
                for (r, xs) in runs.iter().enumerate() {
                    for (t, x) in th.iter().zip(xs) {
                        w.write_record([r.to_string(), format_number(*t), x.map(|v| v.to_string()).unwrap_or_default()])?;
                    }
                }
                w.flush()?;
                Ok(())
            })?;
            write_csv_text(&out.join("crossings.csv"), &text)?;
            let summary = csv_string(|b| {
                let mut w = csv::Writer::from_writer(b);
                w.write_record(["threshold", "mean_t", "std_t", "runs_crossed"])?;
                for (k, t) in th.iter().enumerate() {
                    let xs: Vec<f64> = runs.iter().filter_map(|r| r[k]).map(|v| v as f64).collect();
                    let (m, s) = if xs.is_empty() { (f64::NAN, f64::NAN) } else { mean_std(&xs) };
                    w.write_record([format_number(*t), format_number(m), format_number(s), xs.len().to_string()])?;
                }
                w.flush()?;
                Ok(())
            })?;
            write_csv_text(&out.join("summary.csv"), &summary)?;
        }
        ExperimentKind::OmniglotTrain => {
            let runs = run_omniglot_train(cfg)?;
            let text = csv_string(|b| {
                let mut w = csv::Writer::from_writer(b);
                w.write_record(["run", "t", "dataset_p_new", "model_p_new"])?;
                for r in &runs {
                    for p in &r.p_new {
                        w.write_record([r.run.to_string(), p.t.to_string(), format_number(p.dataset), format_number(p.model)])?;
                    }
                }
                w.flush()?;
                Ok(())
            })?;
            write_csv_text(&out.join("p_new.csv"), &text)?;
            let mean_text = csv_string(|b| {
                let mut w = csv::Writer::from_writer(b);
                w.write_record(["t", "dataset_mean", "dataset_std", "model_mean", "model_std"])?;
                let n = runs.iter().map(|r| r.p_new.len()).min().unwrap_or(0);
                for i in 0..n {
                    let d: Vec<f64> = runs.iter().map(|r| r.p_new[i].dataset).collect();
                    let m: Vec<f64> = runs.iter().map(|r| r.p_new[i].model).collect();
                    let ((dm, ds), (mm, ms)) = (mean_std(&d), mean_std(&m));
                    w.write_record([
                        runs[0].p_new[i].t.to_string(),
                        format_number(dm),
                        format_number(ds),
                        format_number(mm),
                        format_number(ms),
                    ])?;
                }
                w.flush()?;
                Ok(())
            })?;
            write_csv_text(&out.join("p_new_mean.csv"), &mean_text)?;
            let spec = PlotSpec {
                title: "P(new class)".into(),
                x_label: "images".into(),
                y_label: "probability".into(),
                series: vec![
                    SeriesSpec::new("dataset", "t", "dataset_mean").with_std("dataset_std"),
                    SeriesSpec::new("model", "t", "model_mean").with_std("model_std"),
                ],
            };
            write_plot(&out.join("p_new_plot.svg"), &spec, &mean_text)?;
        }
        ExperimentKind::Oracle => {
            let log = run_oracle(cfg)?;
            let text = csv_string(|b| log.write_csv(b))?;
            write_csv_text(&out.join("first_encounter.csv"), &text)?;
            let mut series = Vec::new();
            let summary = csv_string(|b| {
                let mut w = csv::Writer::from_writer(b);
                w.write_record(["event_index", "bias", "mean_loss", "std_loss"])?;
                for &bias in &cfg.online.biases {
                    let runs = log.for_bias(bias);
                    let ev: Vec<_> = runs.iter().map(|r| r.events.as_slice()).collect();
                    let s = aggregate_first_encounter(&ev)?;
                    for (i, (m, sd)) in s.mean.iter().zip(&s.std).enumerate() {
                        w.write_record([i.to_string(), format_number(bias), format_number(*m), format_number(*sd)])?;
                    }
                }
                w.flush()?;
                Ok(())
            })?;
            write_csv_text(&out.join("first_encounter_summary.csv"), &summary)?;
            // one wide table so each bias is its own plotted series
            let wide = csv_string(|b| {
                let mut w = csv::Writer::from_writer(b);
                let mut header = vec!["event_index".to_string()];
                let mut cols = Vec::new();
                for &bias in &cfg.online.biases {
                    let runs = log.for_bias(bias);
                    let ev: Vec<_> = runs.iter().map(|r| r.events.as_slice()).collect();
                    cols.push(aggregate_first_encounter(&ev)?);
                    let name = format_number(bias);
                    header.push(format!("mean_{name}"));
                    header.push(format!("std_{name}"));
                    series.push(SeriesSpec::new(&format!("bias {name}"), "event_index", &format!("mean_{name}")).with_std(&format!("std_{name}")));
                }
                w.write_record(&header)?;
                let n = cols.iter().map(|c| c.mean.len()).max().unwrap_or(0);
                for i in 0..n {
                    let mut row = vec![i.to_string()];
                    for c in &cols {
                        row.push(c.mean.get(i).copied().map(format_number).unwrap_or_default());
                        row.push(c.std.get(i).copied().map(format_number).unwrap_or_default());
                    }
                    w.write_record(&row)?;
                }
                w.flush()?;
                Ok(())
            })?;
            let spec = PlotSpec {
                title: "Loss at first encounter of a class".into(),
                x_label: "new-class event".into(),
                y_label: "loss (nats)".into(),
                series,
            };
            write_plot(&out.join("first_encounter_plot.svg"), &spec, &wide)?;
        }
        ExperimentKind::Sweep => run_sweep(cfg, out)?,
    }
    write_meta(out, cfg, started)
}

fn run_sweep(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    let points = cfg.sweep.grid.expand(&cfg.classify, &cfg.sweep.strengths);
    let results: Vec<(PathBuf, ClassifyOutcome)> = points
        .par_iter()
        .map(|p| {
            let dir = out.join(&p.name);
            std::fs::create_dir_all(&dir)?;
            let res = train_synth_classify(&p.config, cfg.seed)?;
            write_trace(&dir, &res.trace, &p.name)?;
            Ok((dir, res))
        })
        .collect::<Result<Vec<_>>>()?;
    let text = csv_string(|b| {
        let mut w = csv::Writer::from_writer(b);
        w.write_record([
            "name",
            "activation",
            "optimizer",
            "lr",
            "embedding_dim",
            "hidden",
            "regularizer",
            "epochs",
            "final_me",
            "final_accuracy",
            "final_loss",
            "diverged",
        ])?;
        for (p, (_, res)) in points.iter().zip(&results) {
            let last = res.final_row();
            let c = &p.config;
            w.write_record([
                p.name.clone(),
                c.model.activation.name().to_string(),
                c.optimizer.kind.name().to_string(),
                format_number(c.optimizer.lr),
                c.model.embedding_dim.to_string(),
                c.model.hidden.to_string(),
                p.regularizer.name().to_string(),
                last.step.to_string(),
                format_number(last.me_score),
                format_number(last.accuracy),
                format_number(last.loss),
                res.diverged.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    })?;
    write_csv_text(&out.join("summary.csv"), &text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn untrained_classifier_starts_at_a_tenth() {
        let cfg = ClassifyConfig { max_epochs: 3, ..ClassifyConfig::default() };
        let res = train_synth_classify(&cfg, 0).unwrap();
        assert!((res.trace.rows()[0].me_score - 0.1).abs() < 1e-6);
        assert_eq!(res.trace.len(), 4);
    }

    #[test]
    fn divergence_is_reported_not_raised() {
        let mut cfg = ClassifyConfig { max_epochs: 50, ..ClassifyConfig::default() };
        cfg.optimizer.lr = 1e30;
        let res = train_synth_classify(&cfg, 0).unwrap();
        assert!(res.diverged);
    }

    #[test]
    fn classify_run_writes_its_files_deterministically() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig::new(ExperimentKind::SynthClassify);
        cfg.classify.max_epochs = 5;
        run_experiment(&cfg, &dir.path().join("a")).unwrap();
        run_experiment(&cfg, &dir.path().join("b")).unwrap();
        for f in ["trace.csv", "me_plot.svg", "meta.toml"] {
            assert!(dir.path().join("a").join(f).exists(), "{f}");
        }
        let read = |p: &str| std::fs::read(dir.path().join(p).join("trace.csv")).unwrap();
        assert_eq!(read("a"), read("b"));
    }
}
