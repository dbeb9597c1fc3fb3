use std::collections::HashMap;

use crate::error::{Error, Result};

/// Reserved token substituted for words outside a truncated vocabulary.
pub const UNK: &str = "<unk>";

#[derive(Clone, Debug, Default, PartialEq, Eq)]
struct Side {
    sentences: Vec<Vec<u32>>,
    types: Vec<String>,
    index: HashMap<String, u32>,
}

impl Side {
    fn intern(&mut self, tok: &str) -> u32 {
        if let Some(&id) = self.index.get(tok) {
            return id;
        }
        let id = self.types.len() as u32;
        self.types.push(tok.to_string());
        self.index.insert(tok.to_string(), id);
        id
    }

    fn push(&mut self, sentence: &str) {
        let ids = sentence.split_whitespace().map(|t| self.intern(t)).collect();
        self.sentences.push(ids);
    }

    /// Keeps the `top_k` most frequent types; ties go to the earlier first
    /// occurrence. Returns `None` when nothing would change.
    fn truncated(&self, top_k: usize) -> Option<Side> {
        if top_k >= self.types.len() {
            return None;
        }
        // ids are already in first-occurrence order
        let mut counts = vec![0usize; self.types.len()];
        for s in &self.sentences {
            for &t in s {
                counts[t as usize] += 1;
            }
        }
        let mut order: Vec<u32> = (0..self.types.len() as u32).collect();
        order.sort_by(|&a, &b| counts[b as usize].cmp(&counts[a as usize]).then(a.cmp(&b)));
        let mut keep = vec![false; self.types.len()];
        for &t in &order[..top_k] {
            keep[t as usize] = true;
        }
        let mut out = Side::default();
        for s in &self.sentences {
            let ids = s
                .iter()
                .map(|&t| {
                    let tok = if keep[t as usize] { self.types[t as usize].as_str() } else { UNK };
                    out.intern(tok)
                })
                .collect();
            out.sentences.push(ids);
        }
        Some(out)
    }
}

/// Sentence-aligned source/target token sequences with interned vocabularies.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ParallelCorpus {
    source: Side,
    target: Side,
}

impl ParallelCorpus {
    /// Whitespace-tokenized sentence pairs.
    pub fn from_pairs<I, S, T>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (S, T)>,
        S: AsRef<str>,
        T: AsRef<str>,
    {
        let mut c = ParallelCorpus::default();
        for (s, t) in pairs {
            c.source.push(s.as_ref());
            c.target.push(t.as_ref());
        }
        c
    }

    /// Pairs from separate source and target line lists.
    pub fn from_sides(source: &[String], target: &[String]) -> Result<Self> {
        if source.len() != target.len() {
            return Err(Error::Load(format!(
                "source has {} sentences but target has {}",
                source.len(),
                target.len()
            )));
        }
        Ok(Self::from_pairs(source.iter().zip(target)))
    }

    pub fn len(&self) -> usize {
        self.source.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn source(&self, i: usize) -> &[u32] {
        &self.source.sentences[i]
    }

    pub fn target(&self, i: usize) -> &[u32] {
        &self.target.sentences[i]
    }

    pub fn source_types(&self) -> usize {
        self.source.types.len()
    }

    pub fn target_types(&self) -> usize {
        self.target.types.len()
    }

    pub fn source_token(&self, id: u32) -> &str {
        &self.source.types[id as usize]
    }

    pub fn target_token(&self, id: u32) -> &str {
        &self.target.types[id as usize]
    }

    pub fn source_text(&self, i: usize) -> String {
        self.source(i).iter().map(|&t| self.source_token(t)).collect::<Vec<_>>().join(" ")
    }

    pub fn target_text(&self, i: usize) -> String {
        self.target(i).iter().map(|&t| self.target_token(t)).collect::<Vec<_>>().join(" ")
    }
}

/// Replaces every token outside each side's `top_k` most frequent types with
/// [`UNK`]. `None` leaves that side alone.
pub fn vocab_truncate(
    corpus: &ParallelCorpus,
    top_k_source: Option<usize>,
    top_k_target: Option<usize>,
) -> Result<ParallelCorpus> {
    let side = |s: &Side, k: Option<usize>| -> Result<Side> {
        match k {
            Some(0) => Err(Error::param("top_k must be at least 1")),
            Some(k) => Ok(s.truncated(k).unwrap_or_else(|| s.clone())),
            None => Ok(s.clone()),
        }
    };
    Ok(ParallelCorpus {
        source: side(&corpus.source, top_k_source)?,
        target: side(&corpus.target, top_k_target)?,
    })
}

/// Token types seen so far on each side of a stream.
#[derive(Clone, Debug)]
pub struct SeenVocab {
    source: Vec<bool>,
    target: Vec<bool>,
    processed: usize,
}

impl SeenVocab {
    pub fn new(corpus: &ParallelCorpus) -> Self {
        SeenVocab {
            source: vec![false; corpus.source_types()],
            target: vec![false; corpus.target_types()],
            processed: 0,
        }
    }

    /// Whether the pair holds an unseen (source, target) token, before
    /// absorbing it.
    pub fn observe(&mut self, source: &[u32], target: &[u32]) -> (bool, bool) {
        let novel = (
            source.iter().any(|&t| !self.source[t as usize]),
            target.iter().any(|&t| !self.target[t as usize]),
        );
        source.iter().for_each(|&t| self.source[t as usize] = true);
        target.iter().for_each(|&t| self.target[t as usize] = true);
        self.processed += 1;
        novel
    }

    pub fn processed(&self) -> usize {
        self.processed
    }

    pub fn seen_source(&self) -> usize {
        self.source.iter().filter(|&&s| s).count()
    }

    pub fn seen_target(&self) -> usize {
        self.target.iter().filter(|&&s| s).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus() -> ParallelCorpus {
        ParallelCorpus::from_pairs([("a b", "x"), ("a c", "y x"), ("a b", "z")])
    }

    #[test]
    fn interning_round_trips() {
        let c = corpus();
        assert_eq!(c.len(), 3);
        assert_eq!(c.source_types(), 3);
        assert_eq!(c.source_text(1), "a c");
        assert_eq!(c.target_text(1), "y x");
    }

    #[test]
    fn large_top_k_is_a_no_op() {
        let c = corpus();
        assert_eq!(vocab_truncate(&c, Some(3), Some(10)).unwrap(), c);
    }

    #[test]
    fn least_frequent_type_becomes_unk() {
        let c = vocab_truncate(&corpus(), Some(2), None).unwrap();
        assert_eq!(c.source_text(1), format!("a {UNK}"));
        assert_eq!(c.source_text(2), "a b");
    }

    #[test]
    fn ties_keep_the_earlier_type() {
        let c = ParallelCorpus::from_pairs([("q p", "x"), ("p q", "x")]);
        let t = vocab_truncate(&c, Some(1), None).unwrap();
        assert_eq!(t.source_text(0), format!("q {UNK}"));
    }

    #[test]
    fn zero_top_k_is_rejected() {
        assert!(vocab_truncate(&corpus(), Some(0), None).is_err());
    }

    #[test]
    fn seen_vocab_grows() {
        let c = corpus();
        let mut s = SeenVocab::new(&c);
        assert_eq!(s.observe(c.source(0), c.target(0)), (true, true));
        assert_eq!(s.observe(c.source(1), c.target(1)), (true, true));
        assert_eq!(s.observe(c.source(2), c.target(2)), (false, true));
        assert_eq!((s.processed(), s.seen_source(), s.seen_target()), (3, 3, 3));
    }

    #[test]
    fn mismatched_sides_fail_to_load() {
        assert!(matches!(
            ParallelCorpus::from_sides(&["a".into()], &[]),
            Err(Error::Load(_))
        ));
    }
}
