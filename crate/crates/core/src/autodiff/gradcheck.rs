//! Central finite-difference verification of analytic gradients.

use super::params::ParamStore;
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::Result;

/// `max_i |analytic_i - numeric_i| / max(1, |analytic_i|)`.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(1.0))
        .fold(0.0, f64::max)
}

/// Central differences of `f` at `x` along the listed coordinates (all when
/// `coords` is `None`). Entries for skipped coordinates are zero.
pub fn numeric_gradient(
    mut f: impl FnMut(&[f64]) -> f64,
    x: &[f64],
    eps: f64,
    coords: Option<&[usize]>,
) -> Vec<f64> {
    let mut probe = x.to_vec();
    let mut out = vec![0.0; x.len()];
    let all: Vec<usize>;
    let coords = match coords {
        Some(c) => c,
        None => {
            all = (0..x.len()).collect();
            &all
        }
    };
    for &i in coords {
        let orig = probe[i];
        probe[i] = orig + eps;
        let up = f(&probe);
        probe[i] = orig - eps;
        let down = f(&probe);
        probe[i] = orig;
        out[i] = (up - down) / (2.0 * eps);
    }
    out
}

/// Checks the reverse-mode gradient of a scalar function built on a tape
/// against central differences. `build` receives the tape and the leaf for
/// `point` and returns the scalar output.
pub fn grad_check<F>(build: F, point: &Tensor<f64>, eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape<f64>, Var) -> Result<Var>,
{
    let mut tape = Tape::new();
    let x = tape.leaf(point.clone());
    let y = build(&mut tape, x)?;
    let grads = tape.backward(y)?;
    let analytic = grads.get(&tape, x).into_data();

    let shape = point.shape().to_vec();
    let mut failure = None;
    let numeric = numeric_gradient(
        |v| {
            let mut t = Tape::new();
            let leaf = t.leaf(Tensor::new(shape.clone(), v.to_vec()).expect("same shape"));
            match build(&mut t, leaf) {
                Ok(out) => t.value(out).item(),
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NAN
                }
            }
        },
        point.data(),
        eps,
        None,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(max_relative_error(&analytic, &numeric))
}

/// Same check over every parameter of a model (or a subset of flat
/// coordinates). `loss` builds the forward pass from the store.
pub fn grad_check_params<F>(
    store: &ParamStore<f64>,
    loss: F,
    eps: f64,
    coords: Option<&[usize]>,
) -> Result<f64>
where
    F: Fn(&mut Tape<f64>, &ParamStore<f64>) -> Result<Var>,
{
    let mut work = store.clone();
    work.zero_grads();
    let mut tape = Tape::new();
    let y = loss(&mut tape, &work)?;
    let grads = tape.backward(y)?;
    grads.accumulate_into(&tape, &mut work);
    let analytic = work.flatten_grads();

    let base = store.flatten();
    let mut probe_store = store.clone();
    let mut failure = None;
    let numeric = numeric_gradient(
        |v| {
            probe_store.load_flat(v).expect("same size");
            let mut t = Tape::new();
            match loss(&mut t, &probe_store) {
                Ok(out) => t.value(out).item(),
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NAN
                }
            }
        },
        &base,
        eps,
        coords,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    let (a, n): (Vec<f64>, Vec<f64>) = match coords {
        Some(c) => c.iter().map(|&i| (analytic[i], numeric[i])).unzip(),
        None => (analytic, numeric),
    };
    Ok(max_relative_error(&a, &n))
}
