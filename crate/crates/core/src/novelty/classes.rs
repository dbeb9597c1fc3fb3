use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::autodiff::{Real, Tensor};
use crate::error::{Error, Result};
use crate::rng::RandomStream;

/// Item count per class id.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassManifest {
    pub items: Vec<usize>,
}

impl ClassManifest {
    pub fn uniform(classes: usize, items_per_class: usize) -> Self {
        ClassManifest {
            items: vec![items_per_class; classes],
        }
    }

    pub fn classes(&self) -> usize {
        self.items.len()
    }

    pub fn total_items(&self) -> usize {
        self.items.iter().sum()
    }

    fn validate(&self) -> Result<()> {
        if self.items.is_empty() || self.items.contains(&0) {
            return Err(Error::param("manifest needs at least one class and no empty classes"));
        }
        Ok(())
    }
}

/// `W(r) = 1 / r^s` for ranks `1..=n`.
pub fn power_law_weights(n: usize, exponent: f64) -> Vec<f64> {
    (1..=n).map(|r| (r as f64).powf(-exponent)).collect()
}

/// A sampled sequence of `(class, item)` draws.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassStream {
    /// 1-based popularity rank of each class for this run.
    pub ranks: Vec<usize>,
    pub events: Vec<(usize, usize)>,
}

/// Draws `(class, item)` pairs under one random popularity ranking.
pub struct PowerLawStreamer<'a> {
    manifest: &'a ClassManifest,
    /// class id holding each rank (index 0 is rank 1)
    by_rank: Vec<usize>,
    dist: WeightedIndex<f64>,
}

impl<'a> PowerLawStreamer<'a> {
    pub fn new(manifest: &'a ClassManifest, exponent: f64, rng: &mut RandomStream) -> Result<Self> {
        manifest.validate()?;
        if !(exponent > 0.0) {
            return Err(Error::param(format!("power-law exponent must be positive, got {exponent}")));
        }
        let mut by_rank: Vec<usize> = (0..manifest.classes()).collect();
        by_rank.shuffle(rng);
        let dist = WeightedIndex::new(power_law_weights(manifest.classes(), exponent))
            .map_err(|e| Error::param(format!("power-law weights: {e}")))?;
        Ok(PowerLawStreamer { manifest, by_rank, dist })
    }

    pub fn draw(&self, rng: &mut RandomStream) -> (usize, usize) {
        let class = self.by_rank[self.dist.sample(rng)];
        (class, rng.random_range(0..self.manifest.items[class]))
    }

    pub fn ranks(&self) -> Vec<usize> {
        let mut r = vec![0; self.by_rank.len()];
        for (i, &c) in self.by_rank.iter().enumerate() {
            r[c] = i + 1;
        }
        r
    }
}

/// Classes drawn with probability proportional to `W(rank)` under a fresh
/// random ranking; items uniformly with replacement within the class.
pub fn power_law_stream(
    manifest: &ClassManifest,
    exponent: f64,
    length: usize,
    rng: &mut RandomStream,
) -> Result<ClassStream> {
    let s = PowerLawStreamer::new(manifest, exponent, rng)?;
    let events = (0..length).map(|_| s.draw(rng)).collect();
    Ok(ClassStream { ranks: s.ranks(), events })
}

/// Incremental P(new class | t): among items not yet drawn, the share that
/// belong to classes not yet drawn.
#[derive(Clone, Debug)]
pub struct DatasetNoveltyTracker {
    manifest: ClassManifest,
    sampled: Vec<Vec<bool>>,
    class_seen: Vec<bool>,
    unsampled: usize,
    unseen_class_items: usize,
    steps: usize,
}

impl DatasetNoveltyTracker {
    pub fn new(manifest: &ClassManifest) -> Self {
        DatasetNoveltyTracker {
            manifest: manifest.clone(),
            sampled: manifest.items.iter().map(|&n| vec![false; n]).collect(),
            class_seen: vec![false; manifest.classes()],
            unsampled: manifest.total_items(),
            unseen_class_items: manifest.total_items(),
            steps: 0,
        }
    }

    pub fn observe(&mut self, class: usize, item: usize) -> Result<()> {
        let slot = self
            .sampled
            .get_mut(class)
            .ok_or(Error::Index { what: "class", index: class, bound: self.class_seen.len() })?;
        let bound = slot.len();
        let s = slot.get_mut(item).ok_or(Error::Index { what: "item", index: item, bound })?;
        if !*s {
            *s = true;
            self.unsampled -= 1;
        }
        if !self.class_seen[class] {
            self.class_seen[class] = true;
            self.unseen_class_items -= self.manifest.items[class];
        }
        self.steps += 1;
        Ok(())
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn p_new(&self) -> f64 {
        if self.unsampled == 0 {
            0.0
        } else {
            self.unseen_class_items as f64 / self.unsampled as f64
        }
    }

    pub fn class_seen(&self, class: usize) -> bool {
        self.class_seen[class]
    }

    pub fn unseen_classes(&self) -> Vec<usize> {
        (0..self.class_seen.len()).filter(|&c| !self.class_seen[c]).collect()
    }

    pub fn unsampled_items(&self) -> usize {
        self.unsampled
    }

    /// Up to `n` distinct not-yet-drawn items, uniformly at random.
    pub fn sample_unsampled(&self, n: usize, rng: &mut RandomStream) -> Vec<(usize, usize)> {
        let total = self.manifest.total_items();
        let n = n.min(self.unsampled);
        if self.unsampled * 4 < total {
            let mut all: Vec<(usize, usize)> = self
                .sampled
                .iter()
                .enumerate()
                .flat_map(|(c, items)| items.iter().enumerate().filter(|(_, &s)| !s).map(move |(i, _)| (c, i)))
                .collect();
            all.shuffle(rng);
            all.truncate(n);
            return all;
        }
        let dist = WeightedIndex::new(&self.manifest.items).expect("validated manifest");
        let mut picked = std::collections::HashSet::new();
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let c = dist.sample(rng);
            let i = rng.random_range(0..self.manifest.items[c]);
            if !self.sampled[c][i] && picked.insert((c, i)) {
                out.push((c, i));
            }
        }
        out
    }
}

/// Direct recomputation of P(new class) after the stream `prefix`.
pub fn dataset_p_new(manifest: &ClassManifest, prefix: &[(usize, usize)]) -> f64 {
    let mut sampled = std::collections::HashSet::new();
    let mut seen = std::collections::HashSet::new();
    for &(c, i) in prefix {
        sampled.insert((c, i));
        seen.insert(c);
    }
    let (mut unsampled, mut new) = (0usize, 0usize);
    for (c, &n) in manifest.items.iter().enumerate() {
        for i in 0..n {
            if !sampled.contains(&(c, i)) {
                unsampled += 1;
                if !seen.contains(&c) {
                    new += 1;
                }
            }
        }
    }
    if unsampled == 0 {
        0.0
    } else {
        new as f64 / unsampled as f64
    }
}

/// For each threshold, the first number of draws after which the dataset
/// P(new) is strictly below it, streaming at most `max_len` draws.
pub fn first_crossings(
    manifest: &ClassManifest,
    exponent: f64,
    thresholds: &[f64],
    max_len: usize,
    rng: &mut RandomStream,
) -> Result<Vec<Option<usize>>> {
    let s = PowerLawStreamer::new(manifest, exponent, rng)?;
    let mut tracker = DatasetNoveltyTracker::new(manifest);
    let mut out = vec![None; thresholds.len()];
    let check = |out: &mut Vec<Option<usize>>, p: f64, t: usize| {
        for (o, &th) in out.iter_mut().zip(thresholds) {
            if o.is_none() && p < th {
                *o = Some(t);
            }
        }
    };
    check(&mut out, tracker.p_new(), 0);
    for t in 1..=max_len {
        if out.iter().all(Option::is_some) {
            break;
        }
        let (c, i) = s.draw(rng);
        tracker.observe(c, i)?;
        check(&mut out, tracker.p_new(), t);
    }
    Ok(out)
}

/// Mean over the rows of `logp` (one per evaluated item) of the probability
/// on `unseen_classes`; 0 when either is empty.
pub fn model_p_new<T: Real>(logp: &Tensor<T>, unseen_classes: &[usize]) -> Result<f64> {
    if unseen_classes.is_empty() {
        return Ok(0.0);
    }
    let (rows, cols) = logp.as_matrix();
    if let Some(&c) = unseen_classes.iter().find(|&&c| c >= cols) {
        return Err(Error::Index { what: "class", index: c, bound: cols });
    }
    if rows == 0 {
        return Ok(0.0);
    }
    let total: f64 = (0..rows)
        .map(|r| {
            let row = logp.row(r);
            unseen_classes.iter().map(|&c| row[c].to_f64_lossy().exp()).sum::<f64>()
        })
        .sum();
    Ok((total / rows as f64).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn weights_by_hand() {
        let w = power_law_weights(2, 1.5);
        assert_eq!(w[0], 1.0);
        assert!((w[1] - 0.353553390593).abs() < 1e-11);
    }

    #[test]
    fn empirical_frequencies_match_weights() {
        let m = ClassManifest::uniform(50, 3);
        let mut rng = RandomStream::new(11, "freq");
        let s = power_law_stream(&m, 1.5, 1_000_000, &mut rng).unwrap();
        let w = power_law_weights(50, 1.5);
        let z: f64 = w.iter().sum();
        let mut counts = vec![0usize; 50];
        for &(c, i) in &s.events {
            assert!(i < 3);
            counts[c] += 1;
        }
        let l1: f64 = (0..50)
            .map(|c| (counts[c] as f64 / 1e6 - w[s.ranks[c] - 1] / z).abs())
            .sum();
        assert!(l1 < 0.01, "{l1}");
    }

    #[test]
    fn steep_exponent_only_draws_rank_one() {
        let m = ClassManifest::uniform(20, 5);
        let s = power_law_stream(&m, 1e4, 1000, &mut RandomStream::new(2, "steep")).unwrap();
        let top = s.ranks.iter().position(|&r| r == 1).unwrap();
        assert!(s.events.iter().all(|&(c, _)| c == top));
    }

    #[test]
    fn bad_inputs_are_rejected() {
        let mut rng = RandomStream::new(0, "x");
        assert!(power_law_stream(&ClassManifest::uniform(0, 1), 1.5, 1, &mut rng).is_err());
        assert!(power_law_stream(&ClassManifest::uniform(3, 1), 0.0, 1, &mut rng).is_err());
    }

    #[test]
    fn dataset_p_new_endpoints() {
        let m = ClassManifest::uniform(3, 2);
        assert_eq!(dataset_p_new(&m, &[]), 1.0);
        assert_eq!(dataset_p_new(&m, &[(0, 0), (1, 1), (2, 0)]), 0.0);
        assert_eq!(DatasetNoveltyTracker::new(&m).p_new(), 1.0);
    }

    #[test]
    fn uniform_model_scores_unseen_share() {
        let lp = Tensor::<f64>::filled(&[4, 10], -(10f64.ln()));
        assert!((model_p_new(&lp, &[1, 4, 7]).unwrap() - 0.3).abs() < 1e-12);
        assert_eq!(model_p_new(&lp, &[]).unwrap(), 0.0);
    }

    #[test]
    fn two_items_three_classes_by_hand() {
        let p = [[0.2f64, 0.5, 0.3], [0.6, 0.1, 0.3]];
        let lp = Tensor::from_rows(&p.map(|r| r.map(f64::ln).to_vec())).unwrap();
        // unseen {1, 2}: (0.8 + 0.4) / 2
        assert!((model_p_new(&lp, &[1, 2]).unwrap() - 0.6).abs() < 1e-12);
    }

    #[test]
    fn averaged_p_new_is_nonincreasing() {
        let m = ClassManifest::uniform(200, 20);
        let len = 3000;
        let mut avg = vec![0.0; len + 1];
        for run in 0..10 {
            let mut rng = RandomStream::new(run, "mono");
            let s = power_law_stream(&m, 1.5, len, &mut rng).unwrap();
            let mut tr = DatasetNoveltyTracker::new(&m);
            avg[0] += tr.p_new() / 10.0;
            for (t, &(c, i)) in s.events.iter().enumerate() {
                tr.observe(c, i).unwrap();
                avg[t + 1] += tr.p_new() / 10.0;
            }
        }
        for t in 1..=len {
            assert!(avg[t] <= avg[t - 1] + 0.01, "t={t}");
        }
    }

    #[test]
    fn unsampled_draws_are_distinct_and_unsampled() {
        let m = ClassManifest::uniform(4, 3);
        let mut tr = DatasetNoveltyTracker::new(&m);
        for (c, i) in [(0, 0), (0, 1), (2, 2)] {
            tr.observe(c, i).unwrap();
        }
        let mut rng = RandomStream::new(0, "u");
        let picks = tr.sample_unsampled(100, &mut rng);
        assert_eq!(picks.len(), 9);
        let set: std::collections::HashSet<_> = picks.iter().collect();
        assert_eq!(set.len(), 9);
        assert!(!set.contains(&(0, 0)));
    }

    proptest! {
        #[test]
        fn tracker_matches_direct_recount(
            events in prop::collection::vec((0usize..5, 0usize..4), 0..60),
        ) {
            let m = ClassManifest { items: vec![4, 2, 4, 1, 3] };
            let events: Vec<(usize, usize)> = events.into_iter().map(|(c, i)| (c, i % m.items[c])).collect();
            let mut tr = DatasetNoveltyTracker::new(&m);
            for (k, &(c, i)) in events.iter().enumerate() {
                tr.observe(c, i).unwrap();
                let direct = dataset_p_new(&m, &events[..=k]);
                prop_assert!((tr.p_new() - direct).abs() < 1e-12);
                prop_assert!((0.0..=1.0).contains(&direct));
            }
        }
    }
}
