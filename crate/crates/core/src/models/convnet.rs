//! Three strided 5×5 convolutions, a 576→128 dense layer and a K-way head.

use serde::{Deserialize, Serialize};

use super::optim::OptimizerState;
use crate::autodiff::{out_extent, ParamId, ParamStore, Real, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::rng::RandomStream;

pub const IMAGE_SIDE: usize = 28;
pub const IMAGE_PIXELS: usize = IMAGE_SIDE * IMAGE_SIDE;

/// (stride, pad) per convolution: 28 → 14 → 7 → 3.
pub const CONV_LAYOUT: [(usize, usize); 3] = [(2, 2), (2, 2), (2, 1)];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvNetConfig {
    pub classes: usize,
    pub channels: usize,
    pub kernel: usize,
    pub dense: usize,
    pub zero_head: bool,
}

impl Default for ConvNetConfig {
    fn default() -> Self {
        ConvNetConfig {
            classes: 1623,
            channels: 64,
            kernel: 5,
            dense: 128,
            zero_head: false,
        }
    }
}

pub struct ConvNetClassifier<T> {
    pub config: ConvNetConfig,
    pub store: ParamStore<T>,
    convs: Vec<(ParamId, ParamId)>,
    dense: (ParamId, ParamId),
    head: (ParamId, ParamId),
    flat: usize,
}

impl<T: Real> ConvNetClassifier<T> {
    pub fn new(config: ConvNetConfig, rng: &RandomStream) -> Result<Self> {
        let c = &config;
        if c.classes == 0 || c.channels == 0 || c.kernel == 0 || c.dense == 0 {
            return Err(Error::param("convnet extents must be positive"));
        }
        let mut init = rng.substream("init");
        let mut store = ParamStore::new();
        let k = c.kernel;
        let mut side = IMAGE_SIDE;
        let mut in_c = 1;
        let mut convs = Vec::new();
        for (i, &(stride, pad)) in CONV_LAYOUT.iter().enumerate() {
            side = out_extent(side, k, stride, pad)
                .ok_or_else(|| Error::param(format!("kernel {k} does not fit layer {i}")))?;
            let fan = in_c * k * k;
            convs.push((
                store.add_uniform(&format!("conv{i}.w"), &[c.channels, in_c, k, k], fan, &mut init),
                store.add_uniform(&format!("conv{i}.b"), &[c.channels], fan, &mut init),
            ));
            in_c = c.channels;
        }
        let flat = in_c * side * side;
        let dense = (
            store.add_uniform("dense.w", &[flat, c.dense], flat, &mut init),
            store.add_uniform("dense.b", &[c.dense], flat, &mut init),
        );
        let head = if c.zero_head {
            (
                store.add_zeros("head.w", &[c.dense, c.classes]),
                store.add_zeros("head.b", &[c.classes]),
            )
        } else {
            (
                store.add_uniform("head.w", &[c.dense, c.classes], c.dense, &mut init),
                store.add_uniform("head.b", &[c.classes], c.dense, &mut init),
            )
        };
        Ok(ConvNetClassifier {
            config,
            store,
            convs,
            dense,
            head,
            flat,
        })
    }

    /// Width of the flattened conv stack output.
    pub fn flat_features(&self) -> usize {
        self.flat
    }

    /// Log-probabilities `[B × K]` for `[B × 1 × 28 × 28]` or `[1 × 28 × 28]`
    /// input. `offset` is a constant added to the logits before the softmax,
    /// either one `[K]` row for all items or a `[B × K]` matrix.
    pub fn forward(&self, tape: &mut Tape<T>, images: Var, offset: Option<&Tensor<T>>) -> Result<Var> {
        let shape = tape.value(images).shape().to_vec();
        let batch = match shape[..] {
            [1, IMAGE_SIDE, IMAGE_SIDE] => 1,
            [b, 1, IMAGE_SIDE, IMAGE_SIDE] => b,
            _ => {
                return Err(Error::Dimension {
                    op: "convnet_forward",
                    lhs: shape,
                    rhs: vec![1, IMAGE_SIDE, IMAGE_SIDE],
                })
            }
        };
        let mut x = tape.reshape(images, &[batch, 1, IMAGE_SIDE, IMAGE_SIDE])?;
        for (&(w, b), &(stride, pad)) in self.convs.iter().zip(&CONV_LAYOUT) {
            let w = tape.param(&self.store, w);
            let b = tape.param(&self.store, b);
            x = tape.conv2d(x, w, Some(b), stride, pad)?;
            x = tape.relu(x);
        }
        x = tape.reshape(x, &[batch, self.flat])?;
        let (w, b) = (tape.param(&self.store, self.dense.0), tape.param(&self.store, self.dense.1));
        x = tape.matmul(x, w)?;
        x = tape.add_bias(x, b)?;
        x = tape.relu(x);
        let (w, b) = (tape.param(&self.store, self.head.0), tape.param(&self.store, self.head.1));
        let mut logits = tape.matmul(x, w)?;
        logits = tape.add_bias(logits, b)?;
        if let Some(off) = offset {
            let is_row = off.shape().len() == 1;
            let off = tape.constant(off.clone());
            logits = if is_row { tape.add_bias(logits, off)? } else { tape.add(logits, off)? };
        }
        Ok(tape.log_softmax(logits))
    }

    pub fn images_var(tape: &mut Tape<T>, pixels: &[T]) -> Result<Var> {
        if pixels.is_empty() || pixels.len() % IMAGE_PIXELS != 0 {
            return Err(Error::Dimension {
                op: "convnet_input",
                lhs: vec![pixels.len()],
                rhs: vec![IMAGE_PIXELS],
            });
        }
        let b = pixels.len() / IMAGE_PIXELS;
        Ok(tape.constant(Tensor::new(vec![b, 1, IMAGE_SIDE, IMAGE_SIDE], pixels.to_vec())?))
    }

    /// Log-probability rows for row-major 28×28 images laid end to end.
    pub fn log_probs(&self, pixels: &[T], offset: Option<&Tensor<T>>) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let x = Self::images_var(&mut tape, pixels)?;
        let out = self.forward(&mut tape, x, offset)?;
        Ok(tape.value(out).clone())
    }

    /// One optimizer step on a minibatch; returns the per-item losses
    /// measured before the update.
    pub fn train_step(
        &mut self,
        opt: &mut OptimizerState<T>,
        pixels: &[T],
        labels: &[usize],
        offset: Option<&Tensor<T>>,
    ) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let x = Self::images_var(&mut tape, pixels)?;
        let batch = tape.value(x).shape()[0];
        if labels.len() != batch {
            return Err(Error::Dimension {
                op: "convnet_labels",
                lhs: vec![labels.len()],
                rhs: vec![batch],
            });
        }
        let lp = self.forward(&mut tape, x, offset)?;
        let losses = {
            let v = tape.value(lp);
            labels
                .iter()
                .enumerate()
                .map(|(i, &c)| v.row(i).get(c).map(|l| -l.to_f64_lossy()))
                .collect::<Option<Vec<f64>>>()
                .ok_or(Error::Index {
                    what: "class label",
                    index: labels.iter().copied().max().unwrap_or(0),
                    bound: self.config.classes,
                })?
        };
        let loss = tape.nll_loss(lp, labels)?;
        let grads = tape.backward(loss)?;
        self.store.zero_grads();
        grads.accumulate_into(&tape, &mut self.store);
        opt.step(&mut self.store)?;
        Ok(losses)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::grad_check_params;
    use crate::models::optim::OptimizerConfig;
    use rand::Rng;

    fn image(seed: u64) -> Vec<f32> {
        let mut r = RandomStream::new(seed, "img");
        (0..IMAGE_PIXELS).map(|_| r.random::<f32>()).collect()
    }

    fn small() -> ConvNetConfig {
        ConvNetConfig {
            classes: 10,
            channels: 4,
            dense: 8,
            ..ConvNetConfig::default()
        }
    }

    #[test]
    fn flatten_is_576() {
        let m = ConvNetClassifier::<f32>::new(ConvNetConfig::default(), &RandomStream::new(0, "c")).unwrap();
        assert_eq!(m.flat_features(), 576);
    }

    #[test]
    fn rows_are_distributions() {
        let m = ConvNetClassifier::<f32>::new(small(), &RandomStream::new(0, "c")).unwrap();
        let mut px = image(1);
        px.extend(image(2));
        let lp = m.log_probs(&px, None).unwrap();
        assert_eq!(lp.shape(), &[2, 10]);
        for r in 0..2 {
            let s: f64 = lp.row(r).iter().map(|&v| (v as f64).exp()).sum();
            assert!((s - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_head_is_uniform() {
        let cfg = ConvNetConfig { zero_head: true, ..small() };
        let m = ConvNetClassifier::<f64>::new(cfg, &RandomStream::new(0, "c")).unwrap();
        let px: Vec<f64> = image(3).iter().map(|&v| v as f64).collect();
        let lp = m.log_probs(&px, None).unwrap();
        // seven unseen of ten classes
        let p_new: f64 = lp.row(0)[3..].iter().map(|v| v.exp()).sum();
        assert!((p_new - 0.7).abs() < 1e-12);
    }

    #[test]
    fn wrong_shape_is_rejected() {
        let m = ConvNetClassifier::<f32>::new(small(), &RandomStream::new(0, "c")).unwrap();
        assert!(matches!(m.log_probs(&[0.5; 100], None), Err(Error::Dimension { .. })));
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(&[2, 28, 28]));
        assert!(matches!(m.forward(&mut tape, x, None), Err(Error::Dimension { .. })));
    }

    #[test]
    fn offsets_shift_logits() {
        let cfg = ConvNetConfig { zero_head: true, ..small() };
        let m = ConvNetClassifier::<f64>::new(cfg, &RandomStream::new(0, "c")).unwrap();
        let px: Vec<f64> = image(3).into_iter().chain(image(4)).map(|v| v as f64).collect();
        let mut row = vec![0.0; 10];
        row[0] = 2.0;
        let lp = m.log_probs(&px, Some(&Tensor::new(vec![10], row).unwrap())).unwrap();
        for r in 0..2 {
            assert!((lp.row(r)[0] - lp.row(r)[1] - 2.0).abs() < 1e-12);
        }
        let per_item = Tensor::from_fn(&[2, 10], |i| if i == 13 { 1.5 } else { 0.0 });
        let lp = m.log_probs(&px, Some(&per_item)).unwrap();
        assert!((lp.row(0)[0] - lp.row(0)[3]).abs() < 1e-12);
        assert!((lp.row(1)[3] - lp.row(1)[0] - 1.5).abs() < 1e-12);
        let bad = Tensor::zeros(&[3]);
        assert!(m.log_probs(&px, Some(&bad)).is_err());
    }

    #[test]
    fn dense_and_head_gradients_match_finite_differences() {
        let cfg = ConvNetConfig { classes: 3, channels: 2, dense: 4, ..ConvNetConfig::default() };
        let m = ConvNetClassifier::<f64>::new(cfg, &RandomStream::new(5, "c")).unwrap();
        let px: Vec<f64> = image(4).into_iter().chain(image(5)).map(|v| v as f64).collect();
        let store = m.store.clone();
        let cell = std::cell::RefCell::new(m);
        // every conv scalar plus a sample of the dense layer
        let mut coords: Vec<usize> = (0..2 * 25 + 2 + 2 * 2 * 25 * 2 + 4).collect();
        coords.extend((250..store.num_scalars()).step_by(37));
        let err = grad_check_params(
            &store,
            |t, s| {
                let mut m = cell.borrow_mut();
                m.store = s.clone();
                let x = ConvNetClassifier::images_var(t, &px)?;
                let lp = m.forward(t, x, None)?;
                t.nll_loss(lp, &[2, 0])
            },
            1e-6,
            Some(&coords),
        )
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn training_lowers_loss_on_a_fixed_batch() {
        let mut m = ConvNetClassifier::<f32>::new(small(), &RandomStream::new(0, "c")).unwrap();
        let mut opt = OptimizerState::new(OptimizerConfig::adam(0.01), &m.store);
        let px: Vec<f32> = (0..4).flat_map(image).collect();
        let labels = [0, 1, 2, 3];
        let first: f64 = m.train_step(&mut opt, &px, &labels, None).unwrap().iter().sum();
        let mut last = first;
        for _ in 0..60 {
            last = m.train_step(&mut opt, &px, &labels, None).unwrap().iter().sum();
        }
        assert!(last < 0.5 * first, "{first} -> {last}");
    }
}
