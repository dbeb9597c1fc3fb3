//! Forward operations. Each records a node whose backward rule lives in
//! `tape.rs`.

use rand::Rng;

use super::conv::{self, ConvGeometry};
use super::tape::{Activation, Op, Tape, Var};
use super::tensor::{gemm, MatView, Real, Tensor};
use crate::error::{Error, Result};
use crate::rng::RandomStream;

/// Running statistics of a batch-normalisation layer.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormState<T> {
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    pub eps: T,
    pub momentum: T,
}

impl<T: Real> BatchNormState<T> {
    pub fn new(features: usize) -> Self {
        BatchNormState {
            running_mean: vec![T::zero(); features],
            running_var: vec![T::one(); features],
            eps: T::from_f64_lossy(1e-5),
            momentum: T::from_f64_lossy(0.1),
        }
    }
}

fn same_shape<T: Real>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Dimension {
            op,
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    Ok(())
}

fn matrix_of<T: Real>(op: &'static str, t: &Tensor<T>) -> Result<(usize, usize)> {
    if t.shape().len() != 2 {
        return Err(Error::Dimension {
            op,
            lhs: t.shape().to_vec(),
            rhs: vec![],
        });
    }
    Ok((t.shape()[0], t.shape()[1]))
}

impl<T: Real> Tape<T> {
    fn zip_map(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Result<(Tensor<T>, [Var; 2])> {
        let (av, bv) = (self.value(a), self.value(b));
        same_shape(op, av, bv)?;
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
        Ok((Tensor::new(av.shape().to_vec(), data)?, [a, b]))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = matrix_of("matmul", self.value(a))?;
        let (k2, n) = matrix_of("matmul", self.value(b))?;
        if k != k2 {
            return Err(Error::Dimension {
                op: "matmul",
                lhs: vec![m, k],
                rhs: vec![k2, n],
            });
        }
        let mut out = vec![T::zero(); m * n];
        gemm(
            MatView::new(self.value(a).data(), m, k),
            MatView::new(self.value(b).data(), k, n),
            &mut out,
            T::zero(),
        );
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::MatMul(a, b), &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (t, ins) = self.zip_map("add", a, b, |x, y| x + y)?;
        Ok(self.push(t, Op::Add(a, b), &ins))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (t, ins) = self.zip_map("sub", a, b, |x, y| x - y)?;
        Ok(self.push(t, Op::Sub(a, b), &ins))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (t, ins) = self.zip_map("mul", a, b, |x, y| x * y)?;
        Ok(self.push(t, Op::Mul(a, b), &ins))
    }

    pub fn scale(&mut self, a: Var, c: T) -> Var {
        let t = self.value(a).map(|x| x * c);
        self.push(t, Op::Scale(a, c), &[a])
    }

    /// Adds a length-F bias row to every row of `x`. The only broadcasting op.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(bias));
        let (_, f) = xv.as_matrix();
        if bv.numel() != f {
            return Err(Error::Dimension {
                op: "add_bias",
                lhs: xv.shape().to_vec(),
                rhs: bv.shape().to_vec(),
            });
        }
        let b = bv.data();
        let data = xv
            .data()
            .iter()
            .enumerate()
            .map(|(k, &v)| v + b[k % f])
            .collect();
        let t = Tensor::new(xv.shape().to_vec(), data)?;
        Ok(self.push(t, Op::AddBias(x, bias), &[x, bias]))
    }

    pub fn activation(&mut self, x: Var, kind: Activation) -> Var {
        let t = match kind {
            Activation::Relu => self.value(x).map(|v| if v > T::zero() { v } else { T::zero() }),
            Activation::Tanh => self.value(x).map(|v| v.tanh()),
            Activation::Sigmoid => self.value(x).map(sigmoid),
        };
        self.push(t, Op::Act(x, kind), &[x])
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Relu)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Tanh)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Sigmoid)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let t = self.value(x).map(|v| v.exp());
        self.push(t, Op::Exp(x), &[x])
    }

    /// Log-probabilities along the last axis, stabilised by max subtraction.
    pub fn log_softmax(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let (_, c) = xv.as_matrix();
        let mut data = xv.data().to_vec();
        for row in data.chunks_exact_mut(c) {
            log_softmax_in_place(row);
        }
        let t = Tensor::new(xv.shape().to_vec(), data).expect("same shape");
        self.push(t, Op::LogSoftmax(x), &[x])
    }

    /// Mean over rows of `-logp[i, target_i]`.
    pub fn nll_loss(&mut self, logp: Var, targets: &[usize]) -> Result<Var> {
        let lv = self.value(logp);
        let (rows, k) = lv.as_matrix();
        if rows != targets.len() {
            return Err(Error::Dimension {
                op: "nll_loss",
                lhs: lv.shape().to_vec(),
                rhs: vec![targets.len()],
            });
        }
        let mut acc = T::zero();
        for (r, &t) in targets.iter().enumerate() {
            if t >= k {
                return Err(Error::Index {
                    what: "nll target",
                    index: t,
                    bound: k,
                });
            }
            acc = acc - lv.data()[r * k + t];
        }
        let loss = acc / T::from_usize(rows).unwrap();
        Ok(self.push(
            Tensor::scalar(loss),
            Op::Nll {
                logp,
                targets: targets.to_vec(),
            },
            &[logp],
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().copied().sum();
        self.push(Tensor::scalar(s), Op::Sum(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let s: T = xv.data().iter().copied().sum();
        let m = s / T::from_usize(xv.numel()).unwrap();
        self.push(Tensor::scalar(m), Op::Mean(x), &[x])
    }

    /// Gathers rows of a `[V × E]` table.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let tv = self.value(table);
        let (v, e) = matrix_of("embedding", tv)?;
        if ids.is_empty() {
            return Err(Error::param("embedding lookup with no ids"));
        }
        let mut data = Vec::with_capacity(ids.len() * e);
        for &id in ids {
            if id >= v {
                return Err(Error::Index {
                    what: "embedding table",
                    index: id,
                    bound: v,
                });
            }
            data.extend_from_slice(&tv.data()[id * e..(id + 1) * e]);
        }
        let t = Tensor::new(vec![ids.len(), e], data)?;
        Ok(self.push(
            t,
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
            &[table],
        ))
    }

    /// Cross-correlation of `[B × C × H × W]` (or `[C × H × W]`) input with a
    /// `[O × C × kh × kw]` kernel bank, no kernel flip.
    pub fn conv2d(
        &mut self,
        input: Var,
        kernel: Var,
        bias: Option<Var>,
        stride: usize,
        pad: usize,
    ) -> Result<Var> {
        let iv = self.value(input);
        let kv = self.value(kernel);
        let (batch, in_c, in_h, in_w) = match *iv.shape() {
            [c, h, w] => (1, c, h, w),
            [b, c, h, w] => (b, c, h, w),
            _ => {
                return Err(Error::Dimension {
                    op: "conv2d",
                    lhs: iv.shape().to_vec(),
                    rhs: kv.shape().to_vec(),
                })
            }
        };
        let (out_c, kc, kh, kw) = match *kv.shape() {
            [o, c, h, w] => (o, c, h, w),
            _ => {
                return Err(Error::Dimension {
                    op: "conv2d",
                    lhs: iv.shape().to_vec(),
                    rhs: kv.shape().to_vec(),
                })
            }
        };
        if kc != in_c {
            return Err(Error::Dimension {
                op: "conv2d",
                lhs: iv.shape().to_vec(),
                rhs: kv.shape().to_vec(),
            });
        }
        let (Some(out_h), Some(out_w)) = (
            conv::out_extent(in_h, kh, stride, pad),
            conv::out_extent(in_w, kw, stride, pad),
        ) else {
            return Err(Error::Dimension {
                op: "conv2d output",
                lhs: iv.shape().to_vec(),
                rhs: vec![kh, kw, stride, pad],
            });
        };
        if let Some(b) = bias {
            if self.value(b).numel() != out_c {
                return Err(Error::Dimension {
                    op: "conv2d bias",
                    lhs: kv.shape().to_vec(),
                    rhs: self.value(b).shape().to_vec(),
                });
            }
        }
        let geom = ConvGeometry {
            batch,
            in_c,
            in_h,
            in_w,
            out_c,
            kh,
            kw,
            stride,
            pad,
            out_h,
            out_w,
        };
        let (out, cols) = conv::forward(
            iv.data(),
            kv.data(),
            bias.map(|b| self.value(b).data()),
            &geom,
        );
        let shape = if iv.shape().len() == 3 {
            vec![out_c, out_h, out_w]
        } else {
            vec![batch, out_c, out_h, out_w]
        };
        let t = Tensor::new(shape, out)?;
        let mut ins = vec![input, kernel];
        ins.extend(bias);
        Ok(self.push(
            t,
            Op::Conv2d {
                input,
                kernel,
                bias,
                geom,
                cols,
            },
            &ins,
        ))
    }

    /// Inverted dropout: survivors scaled by `1/(1-p)`; identity when not
    /// training.
    pub fn dropout(&mut self, x: Var, p: f64, rng: &mut RandomStream, training: bool) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::param(format!("dropout probability {p} outside [0, 1)")));
        }
        if !training || p == 0.0 {
            return Ok(x);
        }
        let keep = T::from_f64_lossy(1.0 / (1.0 - p));
        let xv = self.value(x);
        let mask: Vec<T> = (0..xv.numel())
            .map(|_| if rng.random::<f64>() < p { T::zero() } else { keep })
            .collect();
        let data = xv.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let t = Tensor::new(xv.shape().to_vec(), data)?;
        Ok(self.push(t, Op::Dropout { input: x, mask }, &[x]))
    }

    /// Per-feature normalisation of a `[B × F]` batch.
    pub fn batchnorm1d(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        state: &mut BatchNormState<T>,
        training: bool,
    ) -> Result<Var> {
        let xv = self.value(x);
        let (b, f) = matrix_of("batchnorm1d", xv)?;
        if self.value(gamma).numel() != f || self.value(beta).numel() != f {
            return Err(Error::Dimension {
                op: "batchnorm1d",
                lhs: xv.shape().to_vec(),
                rhs: self.value(gamma).shape().to_vec(),
            });
        }
        if training && b < 2 {
            return Err(Error::BatchSize(b));
        }
        let xd = xv.data();
        let (mean, var) = if training {
            let bn = T::from_usize(b).unwrap();
            let mut mean = vec![T::zero(); f];
            let mut var = vec![T::zero(); f];
            for r in 0..b {
                for j in 0..f {
                    mean[j] = mean[j] + xd[r * f + j];
                }
            }
            mean.iter_mut().for_each(|m| *m = *m / bn);
            for r in 0..b {
                for j in 0..f {
                    let d = xd[r * f + j] - mean[j];
                    var[j] = var[j] + d * d;
                }
            }
            var.iter_mut().for_each(|v| *v = *v / bn);
            let m = state.momentum;
            let unbias = bn / (bn - T::one());
            for j in 0..f {
                state.running_mean[j] = (T::one() - m) * state.running_mean[j] + m * mean[j];
                state.running_var[j] = (T::one() - m) * state.running_var[j] + m * var[j] * unbias;
            }
            (mean, var)
        } else {
            (state.running_mean.clone(), state.running_var.clone())
        };
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + state.eps).sqrt()).collect();
        let (gd, bd) = (self.value(gamma).data(), self.value(beta).data());
        let mut xhat = vec![T::zero(); b * f];
        let mut out = vec![T::zero(); b * f];
        for r in 0..b {
            for j in 0..f {
                let k = r * f + j;
                xhat[k] = (xd[k] - mean[j]) * inv_std[j];
                out[k] = gd[j] * xhat[k] + bd[j];
            }
        }
        let t = Tensor::new(vec![b, f], out)?;
        Ok(self.push(
            t,
            Op::BatchNorm {
                input: x,
                gamma,
                beta,
                xhat,
                inv_std,
                training,
            },
            &[x, gamma, beta],
        ))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x).clone().reshaped(shape)?;
        Ok(self.push(t, Op::Reshape(x), &[x]))
    }

    /// Side-by-side concatenation of matrices with equal row counts.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = self.value(parts[0]).as_matrix().0;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.value(p).as_matrix();
            if r != rows {
                return Err(Error::Dimension {
                    op: "concat_cols",
                    lhs: self.value(parts[0]).shape().to_vec(),
                    rhs: self.value(p).shape().to_vec(),
                });
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let t = Tensor::new(vec![rows, total], data)?;
        Ok(self.push(t, Op::ConcatCols(parts.to_vec()), parts))
    }

    /// Columns `start..start+len` of a matrix.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let xv = self.value(x);
        let (rows, c) = xv.as_matrix();
        if len == 0 || start + len > c {
            return Err(Error::Index {
                what: "column slice",
                index: start + len,
                bound: c,
            });
        }
        let mut data = Vec::with_capacity(rows * len);
        for r in 0..rows {
            data.extend_from_slice(&xv.row(r)[start..start + len]);
        }
        let t = Tensor::new(vec![rows, len], data)?;
        Ok(self.push(t, Op::SliceCols { input: x, start }, &[x]))
    }

    /// Row-wise inner products of two `[B × F]` matrices, giving `[B × 1]`.
    pub fn row_dot(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("row_dot", self.value(a), self.value(b))?;
        let (rows, c) = self.value(a).as_matrix();
        let (ad, bd) = (self.value(a).data(), self.value(b).data());
        let data = (0..rows)
            .map(|r| (0..c).map(|j| ad[r * c + j] * bd[r * c + j]).sum())
            .collect();
        let t = Tensor::new(vec![rows, 1], data)?;
        Ok(self.push(t, Op::RowDot(a, b), &[a, b]))
    }

    /// Scales row `i` of `x` by `s[i]`, with `s` of shape `[B × 1]`.
    pub fn mul_col(&mut self, x: Var, s: Var) -> Result<Var> {
        let (rows, c) = self.value(x).as_matrix();
        if self.value(s).numel() != rows {
            return Err(Error::Dimension {
                op: "mul_col",
                lhs: self.value(x).shape().to_vec(),
                rhs: self.value(s).shape().to_vec(),
            });
        }
        let (xd, sd) = (self.value(x).data(), self.value(s).data());
        let data = (0..rows * c).map(|k| xd[k] * sd[k / c]).collect();
        let t = Tensor::new(vec![rows, c], data)?;
        Ok(self.push(t, Op::MulCol(x, s), &[x, s]))
    }
}

pub(crate) fn sigmoid<T: Real>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

/// Numerically stable in-place log-softmax of one row.
pub fn log_softmax_in_place<T: Real>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
    row.iter_mut().for_each(|v| *v = *v - lse);
}
