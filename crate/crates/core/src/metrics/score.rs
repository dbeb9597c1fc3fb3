use std::collections::BTreeMap;

use crate::autodiff::{Real, Tensor};
use crate::error::{Error, Result};
use crate::models::{MlpClassifier, Seq2SeqModel};
use crate::tasks::{SeqPairDataset, SymbolMappingDataset};

fn check_unseen(unseen: &[usize], width: usize) -> Result<()> {
    if unseen.is_empty() {
        return Err(Error::param("unseen output set is empty"));
    }
    match unseen.iter().find(|&&u| u >= width) {
        Some(&u) => Err(Error::Index {
            what: "unseen output",
            index: u,
            bound: width,
        }),
        None => Ok(()),
    }
}

/// Mean over probability rows of the mass placed on `unseen` outputs.
pub fn me_score_rows<'a, I>(rows: I, unseen: &[usize]) -> Result<f64>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let (mut total, mut n) = (0.0, 0usize);
    for row in rows {
        check_unseen(unseen, row.len())?;
        total += unseen.iter().map(|&u| row[u]).sum::<f64>();
        n += 1;
    }
    if n == 0 {
        return Err(Error::param("no held-out items to score"));
    }
    Ok((total / n as f64).clamp(0.0, 1.0))
}

/// Score from a `[D′ × K]` matrix of log-probabilities, one row per held-out
/// input.
pub fn me_score_classifier<T: Real>(logp: &Tensor<T>, unseen: &[usize]) -> Result<f64> {
    let (rows, cols) = logp.as_matrix();
    check_unseen(unseen, cols)?;
    let probs: Vec<Vec<f64>> = (0..rows)
        .map(|r| logp.row(r).iter().map(|v| v.to_f64_lossy().exp()).collect())
        .collect();
    me_score_rows(probs.iter().map(Vec::as_slice), unseen)
}

pub fn me_score_mlp<T: Real>(model: &mut MlpClassifier<T>, data: &SymbolMappingDataset) -> Result<f64> {
    if data.heldout_inputs.is_empty() {
        return Err(Error::param("no held-out inputs"));
    }
    let lp = model.log_probs(&data.heldout_inputs)?;
    me_score_classifier(&lp, &data.unseen_outputs)
}

/// Anything that yields teacher-forced distributions for a batch of equal
/// length sources and target prefixes.
pub trait TeacherForcedScorer {
    fn probs_batch(&mut self, src: &[Vec<usize>], prefix: &[Vec<usize>]) -> Result<Vec<Vec<Vec<f64>>>>;
}

impl<T: Real> TeacherForcedScorer for Seq2SeqModel<T> {
    fn probs_batch(&mut self, src: &[Vec<usize>], prefix: &[Vec<usize>]) -> Result<Vec<Vec<Vec<f64>>>> {
        self.teacher_forced_probs_batch(src, prefix)
    }
}

/// Mean over every flagged test position of the mass on unseen targets,
/// conditioning on the ground-truth prefix before that position.
pub fn me_score_seq2seq<S: TeacherForcedScorer>(model: &mut S, data: &SeqPairDataset) -> Result<f64> {
    let unseen = data.unseen_targets();
    let mut groups: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for (i, p) in data.test.iter().enumerate() {
        if p.novel.iter().any(|&f| f) {
            groups.entry((p.source.len(), p.target.len())).or_default().push(i);
        }
    }
    if groups.is_empty() {
        return Err(Error::param("test set has no flagged positions"));
    }
    let (mut total, mut n) = (0.0, 0usize);
    for idx in groups.values() {
        for chunk in idx.chunks(128) {
            let src: Vec<_> = chunk.iter().map(|&i| data.test[i].source.clone()).collect();
            // the prefix for the last position is every earlier target token
            let prefix: Vec<_> = chunk
                .iter()
                .map(|&i| {
                    let t = &data.test[i].target;
                    t[..t.len() - 1].to_vec()
                })
                .collect();
            let rows = model.probs_batch(&src, &prefix)?;
            for (&i, seq_rows) in chunk.iter().zip(&rows) {
                for (j, _) in data.test[i].novel.iter().enumerate().filter(|(_, &f)| f) {
                    let row = &seq_rows[j];
                    check_unseen(&unseen, row.len())?;
                    total += unseen.iter().map(|&u| row[u]).sum::<f64>();
                    n += 1;
                }
            }
        }
    }
    Ok((total / n as f64).clamp(0.0, 1.0))
}
