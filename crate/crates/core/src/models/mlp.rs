//! Embedding → optional hidden layer → K-way softmax classifier.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Activation, BatchNormState, ParamId, ParamStore, Real, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::rng::RandomStream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MlpConfig {
    pub vocab: usize,
    pub embedding_dim: usize,
    pub hidden: bool,
    pub hidden_width: usize,
    pub activation: Activation,
    pub outputs: usize,
    /// Start the output layer at zero so the untrained distribution is uniform.
    pub zero_head: bool,
    /// Batch normalisation ahead of the activation (or of the head when
    /// there is no hidden layer).
    pub batchnorm: bool,
    pub dropout: f64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            vocab: 100,
            embedding_dim: 100,
            hidden: true,
            hidden_width: 100,
            activation: Activation::Relu,
            outputs: 100,
            zero_head: true,
            batchnorm: false,
            dropout: 0.0,
        }
    }
}

struct BatchNormLayer<T> {
    gamma: ParamId,
    beta: ParamId,
    state: BatchNormState<T>,
}

pub struct MlpClassifier<T> {
    pub config: MlpConfig,
    pub store: ParamStore<T>,
    embedding: ParamId,
    hidden: Option<(ParamId, ParamId)>,
    norm: Option<BatchNormLayer<T>>,
    head: (ParamId, ParamId),
    dropout_rng: RandomStream,
}

impl<T: Real> MlpClassifier<T> {
    pub fn new(config: MlpConfig, rng: &RandomStream) -> Result<Self> {
        if config.vocab == 0 || config.outputs == 0 || config.embedding_dim == 0 {
            return Err(Error::param("classifier extents must be positive"));
        }
        if config.hidden && config.hidden_width == 0 {
            return Err(Error::param("hidden width must be positive"));
        }
        let mut init = rng.substream("init");
        let mut store = ParamStore::new();
        let (v, e) = (config.vocab, config.embedding_dim);
        // an embedding is a linear map from a one-hot of length V
        let embedding = store.add_uniform("embedding", &[v, e], v, &mut init);
        let mut width = e;
        let hidden = if config.hidden {
            let h = config.hidden_width;
            let w = store.add_uniform("hidden.w", &[e, h], e, &mut init);
            let b = store.add_uniform("hidden.b", &[h], e, &mut init);
            width = h;
            Some((w, b))
        } else {
            None
        };
        let norm = config.batchnorm.then(|| BatchNormLayer {
            gamma: store.add("norm.gamma", Tensor::filled(&[width], T::one())),
            beta: store.add_zeros("norm.beta", &[width]),
            state: BatchNormState::new(width),
        });
        let head = if config.zero_head {
            (
                store.add_zeros("head.w", &[width, config.outputs]),
                store.add_zeros("head.b", &[config.outputs]),
            )
        } else {
            (
                store.add_uniform("head.w", &[width, config.outputs], width, &mut init),
                store.add_uniform("head.b", &[config.outputs], width, &mut init),
            )
        };
        Ok(MlpClassifier {
            config,
            store,
            embedding,
            hidden,
            norm,
            head,
            dropout_rng: rng.substream("dropout"),
        })
    }

    /// Log-probability rows `[ids.len() × K]`.
    pub fn forward(&mut self, tape: &mut Tape<T>, ids: &[usize], training: bool) -> Result<Var> {
        let table = tape.param(&self.store, self.embedding);
        let mut x = tape.embedding(table, ids)?;
        if let Some((w, b)) = self.hidden {
            let w = tape.param(&self.store, w);
            let b = tape.param(&self.store, b);
            x = tape.matmul(x, w)?;
            x = tape.add_bias(x, b)?;
            x = self.normalize(tape, x, training)?;
            x = tape.activation(x, self.config.activation);
        } else {
            x = self.normalize(tape, x, training)?;
        }
        x = tape.dropout(x, self.config.dropout, &mut self.dropout_rng, training)?;
        let w = tape.param(&self.store, self.head.0);
        let b = tape.param(&self.store, self.head.1);
        let logits = tape.matmul(x, w)?;
        let logits = tape.add_bias(logits, b)?;
        Ok(tape.log_softmax(logits))
    }

    fn normalize(&mut self, tape: &mut Tape<T>, x: Var, training: bool) -> Result<Var> {
        match &mut self.norm {
            Some(n) => {
                let g = tape.param(&self.store, n.gamma);
                let b = tape.param(&self.store, n.beta);
                // a single row cannot supply batch statistics
                let batch_stats = training && tape.value(x).as_matrix().0 >= 2;
                tape.batchnorm1d(x, g, b, &mut n.state, batch_stats)
            }
            None => Ok(x),
        }
    }

    /// Evaluation-mode log-probabilities.
    pub fn log_probs(&mut self, ids: &[usize]) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, ids, false)?;
        Ok(tape.value(out).clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::grad_check_params;

    #[test]
    fn zero_head_gives_uniform_rows() {
        let mut m = MlpClassifier::<f64>::new(MlpConfig::default(), &RandomStream::new(0, "mlp")).unwrap();
        let lp = m.log_probs(&[3, 99]).unwrap();
        for &v in lp.data() {
            assert!((v + 100f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn random_head_rows_sum_to_one() {
        let cfg = MlpConfig {
            zero_head: false,
            activation: Activation::Tanh,
            ..MlpConfig::default()
        };
        let mut m = MlpClassifier::<f32>::new(cfg, &RandomStream::new(1, "mlp")).unwrap();
        let lp = m.log_probs(&[0, 1, 2, 50]).unwrap();
        for r in 0..4 {
            let s: f64 = lp.row(r).iter().map(|&v| (v as f64).exp()).sum();
            assert!((s - 1.0).abs() < 1e-6, "{s}");
        }
    }

    #[test]
    fn out_of_range_input_is_an_index_error() {
        let mut m = MlpClassifier::<f64>::new(MlpConfig::default(), &RandomStream::new(0, "mlp")).unwrap();
        assert!(matches!(m.log_probs(&[100]), Err(Error::Index { .. })));
    }

    #[test]
    fn gradient_with_batchnorm_and_hidden_layer() {
        let cfg = MlpConfig {
            vocab: 7,
            embedding_dim: 4,
            hidden_width: 5,
            outputs: 6,
            activation: Activation::Sigmoid,
            zero_head: false,
            batchnorm: true,
            ..MlpConfig::default()
        };
        let m = MlpClassifier::<f64>::new(cfg, &RandomStream::new(4, "mlp-grad")).unwrap();
        let store = m.store.clone();
        let cell = std::cell::RefCell::new(m);
        let err = grad_check_params(
            &store,
            |t, s| {
                let mut m = cell.borrow_mut();
                m.store = s.clone();
                let lp = m.forward(t, &[0, 3, 6, 2], true)?;
                t.nll_loss(lp, &[1, 5, 0, 2])
            },
            1e-6,
            None,
        )
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }
}
