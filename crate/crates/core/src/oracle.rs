//! Oracle-driven logit bias for novel classes during online learning, and
//! first-encounter loss aggregation.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::harness::{format_number, LabeledImages};
use crate::models::{ConvNetClassifier, ConvNetConfig, OptimizerConfig, OptimizerState, IMAGE_PIXELS};
use crate::novelty::{model_p_new, DatasetNoveltyTracker, PowerLawStreamer};
use crate::rng::RandomStream;

/// Adds `bias` to the logits of every class in `unseen`.
pub fn oracle_bias_logits(logits: &[f64], unseen: &[usize], bias: f64) -> Vec<f64> {
    let mut out = logits.to_vec();
    for &c in unseen {
        if let Some(v) = out.get_mut(c) {
            *v += bias;
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleRunConfig {
    pub biases: Vec<f64>,
    pub runs: usize,
    pub exponent: f64,
    /// Images streamed per run.
    pub stream_len: usize,
    pub batch: usize,
    pub lr: f64,
    pub convnet: ConvNetConfig,
    /// Measure dataset and model P(new) every this many images.
    pub eval_every: Option<usize>,
    /// Unsampled items scored per measurement.
    pub eval_sample: usize,
}

impl Default for OracleRunConfig {
    fn default() -> Self {
        OracleRunConfig {
            biases: vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 10.0],
            runs: 10,
            exponent: 1.5,
            stream_len: 4000,
            batch: 16,
            lr: 0.001,
            convnet: ConvNetConfig {
                zero_head: true,
                ..ConvNetConfig::default()
            },
            eval_every: None,
            eval_sample: 512,
        }
    }
}

impl OracleRunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 || self.batch == 0 || self.stream_len == 0 {
            return Err(Error::param("runs, batch and stream_len must be positive"));
        }
        if self.biases.is_empty() || self.biases.iter().any(|b| !b.is_finite()) {
            return Err(Error::param("biases must be a non-empty list of finite values"));
        }
        if !(self.lr > 0.0) || !(self.exponent > 0.0) {
            return Err(Error::param("lr and exponent must be positive"));
        }
        if self.eval_every == Some(0) {
            return Err(Error::param("eval_every must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FirstEncounter {
    pub event_index: usize,
    /// Stream position of the image (images seen before it).
    pub t: usize,
    pub class_id: usize,
    pub loss: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PNewPoint {
    pub t: usize,
    pub dataset: f64,
    pub model: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OnlineRun {
    pub run: usize,
    pub bias: f64,
    pub events: Vec<FirstEncounter>,
    pub p_new: Vec<PNewPoint>,
}

/// One online pass over a power-law image stream. The model and stream
/// depend only on `run`, so runs with different biases are paired.
pub fn run_online(
    images: &LabeledImages,
    config: &OracleRunConfig,
    bias: f64,
    run: usize,
    rng: &RandomStream,
) -> Result<OnlineRun> {
    config.validate()?;
    let manifest = images.manifest();
    let k = images.classes();
    let run_rng = rng.substream(&format!("run{run}"));
    let mut stream_rng = run_rng.substream("stream");
    let mut eval_rng = run_rng.substream("eval");
    let streamer = PowerLawStreamer::new(&manifest, config.exponent, &mut stream_rng)?;
    let cfg = ConvNetConfig {
        classes: k,
        ..config.convnet.clone()
    };
    let mut model = ConvNetClassifier::<f32>::new(cfg, &run_rng.substream("model"))?;
    let mut opt = OptimizerState::new(OptimizerConfig::adam(config.lr), &model.store);
    let mut tracker = DatasetNoveltyTracker::new(&manifest);
    let mut trained = vec![false; k];
    let mut encountered = vec![false; k];
    let mut events = Vec::new();
    let mut p_new = Vec::new();
    let mut pixels = Vec::with_capacity(config.batch * IMAGE_PIXELS);
    let mut t = 0;
    while t < config.stream_len {
        if let Some(every) = config.eval_every {
            if t % every == 0 {
                p_new.push(measure_p_new(&model, images, &tracker, config.eval_sample, t, &mut eval_rng)?);
            }
        }
        let b = config.batch.min(config.stream_len - t);
        let draws: Vec<(usize, usize)> = (0..b).map(|_| streamer.draw(&mut stream_rng)).collect();
        pixels.clear();
        for &(c, i) in &draws {
            pixels.extend_from_slice(images.image(c, i));
        }
        let labels: Vec<usize> = draws.iter().map(|d| d.0).collect();
        let offset = (bias != 0.0).then(|| {
            let unseen: Vec<usize> = (0..k).filter(|&c| !trained[c]).collect();
            let mut off = Tensor::<f32>::zeros(&[b, k]);
            for (r, &c) in labels.iter().enumerate() {
                // the oracle flags items whose class has not been trained on
                if !trained[c] {
                    let row = &mut off.data_mut()[r * k..(r + 1) * k];
                    for &u in &unseen {
                        row[u] = bias as f32;
                    }
                }
            }
            off
        });
        let losses = model.train_step(&mut opt, &pixels, &labels, offset.as_ref())?;
        for (r, &(c, i)) in draws.iter().enumerate() {
            if !encountered[c] {
                encountered[c] = true;
                events.push(FirstEncounter {
                    event_index: events.len(),
                    t: t + r,
                    class_id: c,
                    loss: losses[r],
                });
            }
            tracker.observe(c, i)?;
            trained[c] = true;
        }
        t += b;
    }
    if let Some(every) = config.eval_every {
        if t % every == 0 {
            p_new.push(measure_p_new(&model, images, &tracker, config.eval_sample, t, &mut eval_rng)?);
        }
    }
    Ok(OnlineRun { run, bias, events, p_new })
}

fn measure_p_new(
    model: &ConvNetClassifier<f32>,
    images: &LabeledImages,
    tracker: &DatasetNoveltyTracker,
    sample: usize,
    t: usize,
    rng: &mut RandomStream,
) -> Result<PNewPoint> {
    let unseen = tracker.unseen_classes();
    let items = tracker.sample_unsampled(sample, rng);
    let mut total = 0.0;
    for chunk in items.chunks(64) {
        let px: Vec<f32> = chunk.iter().flat_map(|&(c, i)| images.image(c, i).iter().copied()).collect();
        let lp = model.log_probs(&px, None)?;
        total += model_p_new(&lp, &unseen)? * chunk.len() as f64;
    }
    Ok(PNewPoint {
        t,
        dataset: tracker.p_new(),
        model: if items.is_empty() { 0.0 } else { total / items.len() as f64 },
    })
}

/// Every (run, bias) pass of an oracle experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct FirstEncounterLog {
    pub runs: Vec<OnlineRun>,
}

impl FirstEncounterLog {
    pub fn for_bias(&self, bias: f64) -> Vec<&OnlineRun> {
        self.runs.iter().filter(|r| r.bias == bias).collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["run", "bias", "event_index", "t", "class_id", "loss"])?;
        for r in &self.runs {
            for e in &r.events {
                w.write_record([
                    r.run.to_string(),
                    format_number(r.bias),
                    e.event_index.to_string(),
                    e.t.to_string(),
                    e.class_id.to_string(),
                    format_number(e.loss),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

pub fn run_online_oracle(images: &LabeledImages, config: &OracleRunConfig, rng: &RandomStream) -> Result<FirstEncounterLog> {
    config.validate()?;
    let jobs: Vec<(usize, f64)> = (0..config.runs)
        .flat_map(|r| config.biases.iter().map(move |&b| (r, b)))
        .collect();
    let runs = jobs
        .par_iter()
        .map(|&(r, b)| run_online(images, config, b, r, rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(FirstEncounterLog { runs })
}

/// Per-event-index mean and population standard deviation across runs.
#[derive(Clone, Debug, PartialEq)]
pub struct EncounterSummary {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub runs: usize,
    /// Set when runs had different event counts and were cut to the shortest.
    pub warning: Option<String>,
}

impl EncounterSummary {
    /// Mean of the per-index means over the first `n` events.
    pub fn mean_of_first(&self, n: usize) -> f64 {
        let m = &self.mean[..n.min(self.mean.len())];
        if m.is_empty() {
            f64::NAN
        } else {
            m.iter().sum::<f64>() / m.len() as f64
        }
    }
}

pub fn aggregate_first_encounter(runs: &[&[FirstEncounter]]) -> Result<EncounterSummary> {
    if runs.is_empty() {
        return Err(Error::param("need at least one run to aggregate"));
    }
    let shortest = runs.iter().map(|r| r.len()).min().unwrap_or(0);
    let longest = runs.iter().map(|r| r.len()).max().unwrap_or(0);
    let warning = (shortest != longest).then(|| {
        let msg = format!("event counts differ ({shortest}..{longest}); aligned on the first {shortest}");
        log::warn!("{msg}");
        msg
    });
    let n = runs.len() as f64;
    let (mut mean, mut std) = (Vec::with_capacity(shortest), Vec::with_capacity(shortest));
    for i in 0..shortest {
        let m = runs.iter().map(|r| r[i].loss).sum::<f64>() / n;
        let v = runs.iter().map(|r| (r[i].loss - m).powi(2)).sum::<f64>() / n;
        mean.push(m);
        std.push(v.sqrt());
    }
    Ok(EncounterSummary {
        mean,
        std,
        runs: runs.len(),
        warning,
    })
}

/// Alignment on stream position: for each `[k·width, (k+1)·width)` window,
/// mean and std across runs of each run's mean first-encounter loss there.
/// Runs without events in a window are left out of it.
pub fn aggregate_by_position(runs: &[&[FirstEncounter]], width: usize) -> Result<Vec<(usize, Option<(f64, f64)>)>> {
    if runs.is_empty() || width == 0 {
        return Err(Error::param("need runs and a positive window"));
    }
    let end = runs.iter().flat_map(|r| r.iter().map(|e| e.t)).max().unwrap_or(0);
    Ok((0..=end / width)
        .map(|k| {
            let per_run: Vec<f64> = runs
                .iter()
                .filter_map(|r| {
                    let in_bin: Vec<f64> = r.iter().filter(|e| e.t / width == k).map(|e| e.loss).collect();
                    (!in_bin.is_empty()).then(|| in_bin.iter().sum::<f64>() / in_bin.len() as f64)
                })
                .collect();
            let stat = (!per_run.is_empty()).then(|| {
                let m = per_run.iter().sum::<f64>() / per_run.len() as f64;
                let v = per_run.iter().map(|x| (x - m).powi(2)).sum::<f64>() / per_run.len() as f64;
                (m, v.sqrt())
            });
            (k * width, stat)
        })
        .collect())
}
