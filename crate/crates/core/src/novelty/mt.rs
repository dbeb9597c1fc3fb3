use std::collections::HashSet;
use std::hash::Hash;
use std::io::Write;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::corpus::{ParallelCorpus, SeenVocab};
use crate::error::{Error, Result};
use crate::harness::format_number;
use crate::rng::RandomStream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoveltyConfig {
    pub n_shuffles: usize,
    /// Bucket width in sentences.
    pub window: usize,
    /// Offset between consecutive bucket starts.
    pub step: usize,
}

impl Default for NoveltyConfig {
    fn default() -> Self {
        NoveltyConfig {
            n_shuffles: 100,
            window: 1000,
            step: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoveltyBucket {
    pub start: usize,
    pub end: usize,
    /// Across shuffles with at least one source-novel sentence in the bucket.
    pub conditional_mean: Option<f64>,
    pub conditional_std: Option<f64>,
    pub base_rate_mean: f64,
    pub base_rate_std: f64,
    /// Source-novel sentences summed over shuffles.
    pub n_events: usize,
    /// Sentences summed over shuffles.
    pub n_observations: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoveltyCurve {
    pub config: NoveltyConfig,
    pub sentences: usize,
    pub buckets: Vec<NoveltyBucket>,
}

impl NoveltyCurve {
    /// `(bucket_end, conditional_mean)` points for threshold scans.
    pub fn conditional_points(&self) -> Vec<(f64, Option<f64>)> {
        self.buckets.iter().map(|b| (b.end as f64, b.conditional_mean)).collect()
    }

    pub fn base_rate_points(&self) -> Vec<(f64, Option<f64>)> {
        self.buckets.iter().map(|b| (b.end as f64, Some(b.base_rate_mean))).collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let opt = |v: Option<f64>| v.map(format_number).unwrap_or_default();
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "bucket_start",
            "bucket_end",
            "conditional_mean",
            "conditional_std",
            "base_rate_mean",
            "base_rate_std",
            "n_events",
        ])?;
        for b in &self.buckets {
            w.write_record([
                b.start.to_string(),
                b.end.to_string(),
                opt(b.conditional_mean),
                opt(b.conditional_std),
                format_number(b.base_rate_mean),
                format_number(b.base_rate_std),
                b.n_events.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Fraction of `remainder` sentences holding at least one token outside
/// `seen`; 0 for an empty remainder.
pub fn mt_base_rate<T: Hash + Eq>(remainder: &[Vec<T>], seen: &HashSet<T>) -> f64 {
    if remainder.is_empty() {
        return 0.0;
    }
    let novel = remainder.iter().filter(|s| s.iter().any(|t| !seen.contains(t))).count();
    novel as f64 / remainder.len() as f64
}

/// Base rate at every position `t` of the stream `order` (sentences before
/// `t` seen), in O(total tokens).
pub fn base_rate_series(corpus: &ParallelCorpus, order: &[usize]) -> Vec<f64> {
    let n = order.len();
    let mut first = vec![usize::MAX; corpus.target_types()];
    // counts[m] = sentences whose latest-introduced token first appears at m
    let mut counts = vec![0usize; n + 1];
    for (pos, &i) in order.iter().enumerate() {
        let mut latest = None;
        for &tok in corpus.target(i) {
            let f = &mut first[tok as usize];
            if *f == usize::MAX {
                *f = pos;
            }
            latest = latest.max(Some(*f));
        }
        if let Some(m) = latest {
            counts[m] += 1;
        }
    }
    let mut out = vec![0.0; n];
    let mut suffix = 0usize;
    for t in (0..n).rev() {
        suffix += counts[t];
        out[t] = suffix as f64 / (n - t) as f64;
    }
    out
}

/// Bucket bounds: windows every `step` sentences, clipped at `n`, stopping
/// after the first window that reaches the end.
pub fn novelty_buckets(n: usize, window: usize, step: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = 0;
    while start < n {
        let end = (start + window).min(n);
        out.push((start, end));
        if end == n {
            break;
        }
        start += step;
    }
    out
}

struct ShuffleStats {
    both: Vec<usize>,
    source: Vec<usize>,
    base: Vec<f64>,
}

fn one_shuffle(corpus: &ParallelCorpus, rng: &mut RandomStream, buckets: &[(usize, usize)]) -> ShuffleStats {
    let n = corpus.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut seen = SeenVocab::new(corpus);
    let (mut both_pre, mut src_pre) = (vec![0usize; n + 1], vec![0usize; n + 1]);
    for (pos, &i) in order.iter().enumerate() {
        let (s, t) = seen.observe(corpus.source(i), corpus.target(i));
        src_pre[pos + 1] = src_pre[pos] + s as usize;
        both_pre[pos + 1] = both_pre[pos] + (s && t) as usize;
    }
    let base = base_rate_series(corpus, &order);
    let mut base_pre = vec![0.0; n + 1];
    for t in 0..n {
        base_pre[t + 1] = base_pre[t] + base[t];
    }
    ShuffleStats {
        both: buckets.iter().map(|&(a, b)| both_pre[b] - both_pre[a]).collect(),
        source: buckets.iter().map(|&(a, b)| src_pre[b] - src_pre[a]).collect(),
        base: buckets
            .iter()
            .map(|&(a, b)| (base_pre[b] - base_pre[a]) / (b - a) as f64)
            .collect(),
    }
}

fn mean_std(v: &[f64]) -> Option<(f64, f64)> {
    if v.is_empty() {
        return None;
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64;
    Some((m, var.sqrt()))
}

/// Estimates P(new target word | new source word) and the base rate of new
/// target words along random orderings of the corpus.
pub fn stream_mt_novelty(corpus: &ParallelCorpus, config: &NoveltyConfig, rng: &RandomStream) -> Result<NoveltyCurve> {
    if corpus.is_empty() {
        return Err(Error::param("corpus is empty"));
    }
    if config.n_shuffles == 0 || config.window == 0 || config.step == 0 {
        return Err(Error::param("shuffles, window and step must be positive"));
    }
    let buckets = novelty_buckets(corpus.len(), config.window, config.step);
    let runs: Vec<ShuffleStats> = (0..config.n_shuffles)
        .into_par_iter()
        .map(|s| one_shuffle(corpus, &mut rng.substream(&format!("shuffle{s}")), &buckets))
        .collect();
    let out = buckets
        .iter()
        .enumerate()
        .map(|(k, &(start, end))| {
            let cond: Vec<f64> = runs
                .iter()
                .filter(|r| r.source[k] > 0)
                .map(|r| r.both[k] as f64 / r.source[k] as f64)
                .collect();
            let base: Vec<f64> = runs.iter().map(|r| r.base[k]).collect();
            let c = mean_std(&cond);
            let (bm, bs) = mean_std(&base).unwrap_or((0.0, 0.0));
            NoveltyBucket {
                start,
                end,
                conditional_mean: c.map(|c| c.0.clamp(0.0, 1.0)),
                conditional_std: c.map(|c| c.1),
                base_rate_mean: bm.clamp(0.0, 1.0),
                base_rate_std: bs,
                n_events: runs.iter().map(|r| r.source[k]).sum(),
                n_observations: runs.len() * (end - start),
            }
        })
        .collect();
    Ok(NoveltyCurve {
        config: config.clone(),
        sentences: corpus.len(),
        buckets: out,
    })
}
