//! GRU encoder–decoder with optional Luong attention.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::gru::{BoundGru, GruCell};
use super::optim::OptimizerState;
use crate::autodiff::{ParamId, ParamStore, Real, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::rng::RandomStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttentionMode {
    None,
    Dot,
    General,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Seq2SeqConfig {
    pub src_vocab: usize,
    pub tgt_vocab: usize,
    pub embedding_dim: usize,
    pub hidden: usize,
    pub attention: AttentionMode,
    /// Applied to encoder and decoder embeddings.
    pub dropout: f64,
    pub zero_head: bool,
    pub sos: usize,
    pub eos: usize,
}

impl Default for Seq2SeqConfig {
    fn default() -> Self {
        Seq2SeqConfig {
            src_vocab: 20,
            tgt_vocab: 22,
            embedding_dim: 256,
            hidden: 256,
            attention: AttentionMode::General,
            dropout: 0.5,
            zero_head: false,
            sos: 0,
            eos: 1,
        }
    }
}

/// Attention weights `[B × S]` of a `[B × H]` query over `S` encoder states.
///
/// `general` scores with `q W_a · s`, `dot` with `q · s`.
pub fn attention_weights<T: Real>(
    tape: &mut Tape<T>,
    query: Var,
    states: &[Var],
    mode: AttentionMode,
    w_a: Option<Var>,
) -> Result<Var> {
    if states.is_empty() {
        return Err(Error::param("attention needs at least one encoder state"));
    }
    let q = match (mode, w_a) {
        (AttentionMode::Dot, _) => query,
        (AttentionMode::General, Some(w)) => tape.matmul(query, w)?,
        (AttentionMode::General, None) => {
            return Err(Error::Contract("general attention without W_a".into()))
        }
        (AttentionMode::None, _) => return Err(Error::param("attention mode is none")),
    };
    let scores = states
        .iter()
        .map(|&s| tape.row_dot(q, s))
        .collect::<Result<Vec<_>>>()?;
    let scores = tape.concat_cols(&scores)?;
    let lw = tape.log_softmax(scores);
    Ok(tape.exp(lw))
}

#[derive(Clone, Copy, Debug)]
struct Attention {
    w_a: Option<ParamId>,
    w_c: ParamId,
    b_c: ParamId,
}

pub struct Seq2SeqModel<T> {
    pub config: Seq2SeqConfig,
    pub store: ParamStore<T>,
    src_emb: ParamId,
    tgt_emb: ParamId,
    encoder: GruCell,
    decoder: GruCell,
    attention: Option<Attention>,
    head: (ParamId, ParamId),
    dropout_rng: RandomStream,
}

struct Bound {
    src_emb: Var,
    tgt_emb: Var,
    encoder: BoundGru,
    decoder: BoundGru,
    w_a: Option<Var>,
    combine: Option<(Var, Var)>,
    head: (Var, Var),
}

fn uniform_len(batch: &[Vec<usize>], what: &str) -> Result<usize> {
    let len = batch.first().map(Vec::len).unwrap_or(0);
    if len == 0 {
        return Err(Error::param(format!("{what} sequences must be non-empty")));
    }
    if batch.iter().any(|s| s.len() != len) {
        return Err(Error::param(format!("{what} sequences in a batch must share a length")));
    }
    Ok(len)
}

fn column(batch: &[Vec<usize>], t: usize) -> Vec<usize> {
    batch.iter().map(|s| s[t]).collect()
}

impl<T: Real> Seq2SeqModel<T> {
    pub fn new(config: Seq2SeqConfig, rng: &RandomStream) -> Result<Self> {
        let c = &config;
        if c.src_vocab == 0 || c.tgt_vocab == 0 || c.embedding_dim == 0 || c.hidden == 0 {
            return Err(Error::param("seq2seq extents must be positive"));
        }
        if c.sos >= c.tgt_vocab || c.eos >= c.tgt_vocab || c.sos == c.eos {
            return Err(Error::param("SOS and EOS must be distinct target ids"));
        }
        let mut init = rng.substream("init");
        let mut store = ParamStore::new();
        let (e, h) = (c.embedding_dim, c.hidden);
        let src_emb = store.add_uniform("src_emb", &[c.src_vocab, e], c.src_vocab, &mut init);
        let tgt_emb = store.add_uniform("tgt_emb", &[c.tgt_vocab, e], c.tgt_vocab, &mut init);
        let encoder = GruCell::new(&mut store, "encoder", e, h, &mut init);
        let decoder = GruCell::new(&mut store, "decoder", e, h, &mut init);
        let attention = match c.attention {
            AttentionMode::None => None,
            mode => Some(Attention {
                w_a: (mode == AttentionMode::General)
                    .then(|| store.add_uniform("attn.w_a", &[h, h], h, &mut init)),
                w_c: store.add_uniform("attn.w_c", &[2 * h, h], 2 * h, &mut init),
                b_c: store.add_uniform("attn.b_c", &[h], 2 * h, &mut init),
            }),
        };
        let head = if c.zero_head {
            (
                store.add_zeros("head.w", &[h, c.tgt_vocab]),
                store.add_zeros("head.b", &[c.tgt_vocab]),
            )
        } else {
            (
                store.add_uniform("head.w", &[h, c.tgt_vocab], h, &mut init),
                store.add_uniform("head.b", &[c.tgt_vocab], h, &mut init),
            )
        };
        Ok(Seq2SeqModel {
            config,
            store,
            src_emb,
            tgt_emb,
            encoder,
            decoder,
            attention,
            head,
            dropout_rng: rng.substream("dropout"),
        })
    }

    fn bind(&self, tape: &mut Tape<T>) -> Bound {
        let s = &self.store;
        Bound {
            src_emb: tape.param(s, self.src_emb),
            tgt_emb: tape.param(s, self.tgt_emb),
            encoder: self.encoder.bind(tape, s),
            decoder: self.decoder.bind(tape, s),
            w_a: self.attention.and_then(|a| a.w_a).map(|w| tape.param(s, w)),
            combine: self
                .attention
                .map(|a| (tape.param(s, a.w_c), tape.param(s, a.b_c))),
            head: (tape.param(s, self.head.0), tape.param(s, self.head.1)),
        }
    }

    fn embed(&mut self, tape: &mut Tape<T>, table: Var, ids: &[usize], training: bool) -> Result<Var> {
        let x = tape.embedding(table, ids)?;
        tape.dropout(x, self.config.dropout, &mut self.dropout_rng, training)
    }

    fn encode(&mut self, tape: &mut Tape<T>, b: &Bound, src: &[Vec<usize>], training: bool) -> Result<Vec<Var>> {
        let len = uniform_len(src, "source")?;
        let mut h = tape.constant(Tensor::zeros(&[src.len(), self.config.hidden]));
        let mut states = Vec::with_capacity(len);
        for t in 0..len {
            let x = self.embed(tape, b.src_emb, &column(src, t), training)?;
            h = b.encoder.step(tape, x, h)?;
            states.push(h);
        }
        Ok(states)
    }

    /// One decoder step; returns the new state and the `[B × V]` log-probs.
    fn decode_step(
        &mut self,
        tape: &mut Tape<T>,
        b: &Bound,
        states: &[Var],
        h: Var,
        input: &[usize],
        training: bool,
    ) -> Result<(Var, Var)> {
        let x = self.embed(tape, b.tgt_emb, input, training)?;
        let h = b.decoder.step(tape, x, h)?;
        let mut out = h;
        if let Some((w_c, b_c)) = b.combine {
            let a = attention_weights(tape, h, states, self.config.attention, b.w_a)?;
            let mut ctx = None;
            for (j, &s) in states.iter().enumerate() {
                let aj = tape.slice_cols(a, j, 1)?;
                let term = tape.mul_col(s, aj)?;
                ctx = Some(match ctx {
                    None => term,
                    Some(c) => tape.add(c, term)?,
                });
            }
            let joined = tape.concat_cols(&[ctx.expect("non-empty states"), h])?;
            let z = tape.matmul(joined, w_c)?;
            let z = tape.add_bias(z, b_c)?;
            out = tape.tanh(z);
        }
        let logits = tape.matmul(out, b.head.0)?;
        let logits = tape.add_bias(logits, b.head.1)?;
        Ok((h, tape.log_softmax(logits)))
    }

    /// Teacher-forced pass: decoder inputs are `tgt_in` column by column.
    /// Returns one `[B × V]` log-prob matrix per target position.
    pub fn forward_teacher(
        &mut self,
        tape: &mut Tape<T>,
        src: &[Vec<usize>],
        tgt_in: &[Vec<usize>],
        training: bool,
    ) -> Result<Vec<Var>> {
        if src.len() != tgt_in.len() {
            return Err(Error::param("source and target batch sizes differ"));
        }
        let steps = uniform_len(tgt_in, "target")?;
        let b = self.bind(tape);
        let states = self.encode(tape, &b, src, training)?;
        let mut h = *states.last().expect("non-empty source");
        let mut out = Vec::with_capacity(steps);
        for t in 0..steps {
            let (h2, lp) = self.decode_step(tape, &b, &states, h, &column(tgt_in, t), training)?;
            h = h2;
            out.push(lp);
        }
        Ok(out)
    }

    fn shifted(&self, tgt: &[Vec<usize>]) -> (Vec<Vec<usize>>, Vec<Vec<usize>>) {
        let input = tgt
            .iter()
            .map(|s| std::iter::once(self.config.sos).chain(s.iter().copied()).collect())
            .collect();
        let output = tgt
            .iter()
            .map(|s| s.iter().copied().chain(std::iter::once(self.config.eos)).collect())
            .collect();
        (input, output)
    }

    /// Mean per-token NLL of `tgt` followed by EOS.
    pub fn loss(&mut self, tape: &mut Tape<T>, src: &[Vec<usize>], tgt: &[Vec<usize>], training: bool) -> Result<Var> {
        let (input, output) = self.shifted(tgt);
        let lps = self.forward_teacher(tape, src, &input, training)?;
        let steps = lps.len();
        let mut total = None;
        for (t, lp) in lps.into_iter().enumerate() {
            let l = tape.nll_loss(lp, &column(&output, t))?;
            total = Some(match total {
                None => l,
                Some(acc) => tape.add(acc, l)?,
            });
        }
        Ok(tape.scale(total.expect("non-empty target"), T::from_f64_lossy(1.0 / steps as f64)))
    }

    /// One epoch of minibatch training. Pairs are grouped by (source, target)
    /// length so every batch is rectangular; batch order is shuffled.
    pub fn train_epoch(
        &mut self,
        opt: &mut OptimizerState<T>,
        pairs: &[(Vec<usize>, Vec<usize>)],
        batch_size: usize,
        rng: &mut RandomStream,
    ) -> Result<f64> {
        if batch_size == 0 {
            return Err(Error::param("batch size must be positive"));
        }
        let mut buckets: std::collections::BTreeMap<(usize, usize), Vec<usize>> = Default::default();
        for (i, (s, t)) in pairs.iter().enumerate() {
            buckets.entry((s.len(), t.len())).or_default().push(i);
        }
        let mut batches = Vec::new();
        for idx in buckets.values_mut() {
            idx.shuffle(rng);
            batches.extend(idx.chunks(batch_size).map(<[usize]>::to_vec));
        }
        batches.shuffle(rng);
        let (mut total, mut count) = (0.0, 0usize);
        for batch in batches {
            let src: Vec<_> = batch.iter().map(|&i| pairs[i].0.clone()).collect();
            let tgt: Vec<_> = batch.iter().map(|&i| pairs[i].1.clone()).collect();
            let mut tape = Tape::new();
            let loss = self.loss(&mut tape, &src, &tgt, true)?;
            let grads = tape.backward(loss)?;
            self.store.zero_grads();
            grads.accumulate_into(&tape, &mut self.store);
            opt.step(&mut self.store)?;
            total += tape.value(loss).item().to_f64_lossy() * batch.len() as f64;
            count += batch.len();
        }
        Ok(if count == 0 { 0.0 } else { total / count as f64 })
    }

    /// Evaluation-mode probability rows for decoder inputs `[SOS, prefix...]`:
    /// row `j` is the distribution over output position `j`.
    pub fn teacher_forced_probs(&mut self, src: &[usize], prefix: &[usize]) -> Result<Vec<Vec<f64>>> {
        let mut out = self.teacher_forced_probs_batch(&[src.to_vec()], &[prefix.to_vec()])?;
        Ok(out.pop().unwrap_or_default())
    }

    /// Batched form of [`Self::teacher_forced_probs`]; sources share a length
    /// and so do prefixes.
    pub fn teacher_forced_probs_batch(
        &mut self,
        src: &[Vec<usize>],
        prefix: &[Vec<usize>],
    ) -> Result<Vec<Vec<Vec<f64>>>> {
        let input: Vec<Vec<usize>> = prefix
            .iter()
            .map(|p| std::iter::once(self.config.sos).chain(p.iter().copied()).collect())
            .collect();
        let mut tape = Tape::new();
        let lps = self.forward_teacher(&mut tape, src, &input, false)?;
        Ok((0..src.len())
            .map(|i| {
                lps.iter()
                    .map(|&v| tape.value(v).row(i).iter().map(|x| x.to_f64_lossy().exp()).collect())
                    .collect()
            })
            .collect())
    }

    /// Batched greedy decoding; each output stops before its first EOS or
    /// after `max_len` tokens.
    pub fn greedy_decode(&mut self, src: &[Vec<usize>], max_len: usize) -> Result<Vec<Vec<usize>>> {
        let mut tape = Tape::new();
        let b = self.bind(&mut tape);
        let states = self.encode(&mut tape, &b, src, false)?;
        let mut h = *states.last().expect("non-empty source");
        let mut input = vec![self.config.sos; src.len()];
        let mut out = vec![Vec::new(); src.len()];
        let mut done = vec![false; src.len()];
        for _ in 0..=max_len {
            let (h2, lp) = self.decode_step(&mut tape, &b, &states, h, &input, false)?;
            h = h2;
            let lp = tape.value(lp);
            for (i, tok) in input.iter_mut().enumerate() {
                let row = lp.row(i);
                let best = (0..row.len())
                    .max_by(|&a, &c| row[a].partial_cmp(&row[c]).unwrap_or(std::cmp::Ordering::Equal))
                    .unwrap_or(0);
                *tok = best;
                if !done[i] {
                    if best == self.config.eos || out[i].len() == max_len {
                        done[i] = true;
                    } else {
                        out[i].push(best);
                    }
                }
            }
            if done.iter().all(|&d| d) {
                break;
            }
        }
        Ok(out)
    }
}
