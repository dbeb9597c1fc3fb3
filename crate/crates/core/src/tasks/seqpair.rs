use std::io::Write;

use rand::seq::IndexedRandom;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RandomStream;

pub const SOS: usize = 0;
pub const EOS: usize = 1;
/// First target id used for referents.
const REFERENT_BASE: usize = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SeqPairConfig {
    pub pairings: usize,
    pub train_pairings: usize,
    pub train_sequences: usize,
    pub test_sequences: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub replace_prob: f64,
}

impl Default for SeqPairConfig {
    fn default() -> Self {
        SeqPairConfig {
            pairings: 20,
            train_pairings: 10,
            train_sequences: 1000,
            test_sequences: 1000,
            min_len: 1,
            max_len: 5,
            replace_prob: 0.2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SeqPair {
    pub source: Vec<usize>,
    pub target: Vec<usize>,
    /// `novel[j]` marks a source token outside the training labels.
    pub novel: Vec<bool>,
}

/// Label sequences and their aligned referent sequences.
///
/// Source ids are labels `0..pairings`; the first `train_pairings` are seen in
/// training and the rest are reserved novel tokens. Target ids reserve
/// [`SOS`] and [`EOS`]; referents occupy `2..2 + pairings`.
#[derive(Clone, Debug, PartialEq)]
pub struct SeqPairDataset {
    pub config: SeqPairConfig,
    /// `referent[label]` is the target id paired with a source label.
    pub referent: Vec<usize>,
    pub train: Vec<SeqPair>,
    pub test: Vec<SeqPair>,
}

impl SeqPairDataset {
    pub fn src_vocab(&self) -> usize {
        self.config.pairings
    }

    pub fn tgt_vocab(&self) -> usize {
        REFERENT_BASE + self.config.pairings
    }

    pub fn train_labels(&self) -> std::ops::Range<usize> {
        0..self.config.train_pairings
    }

    pub fn novel_labels(&self) -> std::ops::Range<usize> {
        self.config.train_pairings..self.config.pairings
    }

    pub fn is_novel_label(&self, label: usize) -> bool {
        label >= self.config.train_pairings
    }

    /// Target ids never produced by a training sequence.
    pub fn unseen_targets(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.novel_labels().map(|l| self.referent[l]).collect();
        v.sort_unstable();
        v
    }

    pub fn flagged_positions(&self) -> usize {
        self.test.iter().map(|p| p.novel.iter().filter(|&&f| f).count()).sum()
    }

    /// Rows `split,source,target,novel` with space-separated tokens and 0/1
    /// flags.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(" ");
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["split", "source", "target", "novel"])?;
        for (split, set) in [("train", &self.train), ("test", &self.test)] {
            for p in set.iter() {
                let flags = p.novel.iter().map(|&f| if f { "1" } else { "0" }).collect::<Vec<_>>().join(" ");
                w.write_record([split.to_string(), join(&p.source), join(&p.target), flags])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

pub fn gen_seq2seq_data(config: &SeqPairConfig, seed: u64) -> Result<SeqPairDataset> {
    let c = config;
    if !(0.0..=1.0).contains(&c.replace_prob) {
        return Err(Error::param(format!("replacement probability {} outside [0, 1]", c.replace_prob)));
    }
    if c.train_pairings == 0 || c.train_pairings > c.pairings {
        return Err(Error::param("need 0 < train_pairings <= pairings"));
    }
    if c.replace_prob > 0.0 && c.train_pairings == c.pairings {
        return Err(Error::param("replacement needs at least one novel label"));
    }
    if c.min_len == 0 || c.min_len > c.max_len {
        return Err(Error::param("need 1 <= min_len <= max_len"));
    }
    let root = RandomStream::new(seed, "seq2seq-data");
    let mut rng = root.substream("pairing");
    let mut referent: Vec<usize> = (REFERENT_BASE..REFERENT_BASE + c.pairings).collect();
    referent.shuffle(&mut rng);

    let pair = |source: Vec<usize>| {
        let target = source.iter().map(|&l| referent[l]).collect();
        let novel = source.iter().map(|&l| l >= c.train_pairings).collect();
        SeqPair { source, target, novel }
    };

    let mut rng = root.substream("train");
    let train: Vec<SeqPair> = (0..c.train_sequences)
        .map(|_| {
            let len = rng.random_range(c.min_len..=c.max_len);
            pair((0..len).map(|_| rng.random_range(0..c.train_pairings)).collect())
        })
        .collect();

    let mut rng = root.substream("test");
    let novel: Vec<usize> = (c.train_pairings..c.pairings).collect();
    let mut test = Vec::with_capacity(c.test_sequences);
    for _ in 0..c.test_sequences {
        let base = match train.choose(&mut rng) {
            Some(b) => b.source.clone(),
            None => break,
        };
        let source = base
            .into_iter()
            .map(|l| {
                if rng.random::<f64>() < c.replace_prob {
                    *novel.choose(&mut rng).expect("novel labels exist")
                } else {
                    l
                }
            })
            .collect();
        test.push(pair(source));
    }
    Ok(SeqPairDataset {
        config: c.clone(),
        referent,
        train,
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_sizes_and_lengths() {
        let d = gen_seq2seq_data(&SeqPairConfig::default(), 1).unwrap();
        assert_eq!(d.train.len(), 1000);
        assert_eq!(d.test.len(), 1000);
        assert!(d.train.iter().chain(&d.test).all(|p| (1..=5).contains(&p.source.len())));
        assert_eq!(d.tgt_vocab(), 22);
        assert_eq!(d.unseen_targets().len(), 10);
    }

    #[test]
    fn flagged_fraction_is_near_the_replacement_rate() {
        let d = gen_seq2seq_data(&SeqPairConfig::default(), 2).unwrap();
        let positions: usize = d.test.iter().map(|p| p.source.len()).sum();
        let frac = d.flagged_positions() as f64 / positions as f64;
        assert!((frac - 0.2).abs() < 0.02, "{frac}");
    }

    #[test]
    fn zero_replacement_has_no_flags() {
        let cfg = SeqPairConfig { replace_prob: 0.0, ..SeqPairConfig::default() };
        let d = gen_seq2seq_data(&cfg, 3).unwrap();
        assert_eq!(d.flagged_positions(), 0);
    }

    #[test]
    fn bad_probability_is_rejected() {
        let cfg = SeqPairConfig { replace_prob: 1.5, ..SeqPairConfig::default() };
        assert!(matches!(gen_seq2seq_data(&cfg, 0), Err(Error::Parameter(_))));
    }

    #[test]
    fn alignment_and_flags_recompute() {
        let d = gen_seq2seq_data(&SeqPairConfig::default(), 4).unwrap();
        let train_labels: std::collections::HashSet<usize> = d
            .train
            .iter()
            .flat_map(|p| p.source.iter().copied())
            .collect();
        for p in &d.train {
            assert!(p.source.iter().all(|l| d.train_labels().contains(l)));
        }
        for p in d.train.iter().chain(&d.test) {
            for j in 0..p.source.len() {
                assert_eq!(p.target[j], d.referent[p.source[j]]);
                assert_eq!(p.novel[j], !train_labels.contains(&p.source[j]));
                assert!(p.target[j] != SOS && p.target[j] != EOS);
            }
        }
    }

    #[test]
    fn train_lengths_look_uniform() {
        let cfg = SeqPairConfig { train_sequences: 20000, test_sequences: 0, ..SeqPairConfig::default() };
        let d = gen_seq2seq_data(&cfg, 5).unwrap();
        let mut counts = [0usize; 5];
        for p in &d.train {
            counts[p.source.len() - 1] += 1;
        }
        // binomial sd is about 57 per bucket
        for c in counts {
            assert!((c as f64 - 4000.0).abs() < 300.0, "{counts:?}");
        }
    }

    #[test]
    fn deterministic_in_seed() {
        let cfg = SeqPairConfig::default();
        assert_eq!(gen_seq2seq_data(&cfg, 9).unwrap(), gen_seq2seq_data(&cfg, 9).unwrap());
    }
}
