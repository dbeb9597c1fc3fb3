use crate::autodiff::{Real, Tape, Var};
use crate::error::{Error, Result};

/// Mean prediction entropy (nats) of a `[B × K]` log-probability batch.
pub fn mean_entropy<T: Real>(tape: &mut Tape<T>, logp: Var) -> Var {
    let rows = tape.value(logp).as_matrix().0;
    let p = tape.exp(logp);
    let plogp = tape.mul(p, logp).expect("same shape");
    let s = tape.sum(plogp);
    tape.scale(s, -T::one() / T::from_usize(rows).unwrap())
}

/// `NLL − lambda · H(p)`: rewards spreading probability mass, which
/// penalises over-confident predictions.
pub fn entropy_regularized_loss<T: Real>(
    tape: &mut Tape<T>,
    logp: Var,
    targets: &[usize],
    lambda: f64,
) -> Result<Var> {
    if !(lambda >= 0.0) {
        return Err(Error::param(format!("entropy weight {lambda} must be >= 0")));
    }
    let nll = tape.nll_loss(logp, targets)?;
    if lambda == 0.0 {
        return Ok(nll);
    }
    let h = mean_entropy(tape, logp);
    let weighted = tape.scale(h, T::from_f64_lossy(lambda));
    tape.sub(nll, weighted)
}

/// Row entropy of an explicit probability vector.
pub fn entropy_of(probs: &[f64]) -> f64 {
    -probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{grad_check, Tensor};
    use crate::rng::RandomStream;
    use rand::Rng;

    #[test]
    fn zero_lambda_is_plain_nll() {
        let mut t = Tape::<f64>::new();
        let x = t.constant(Tensor::from_rows(&[vec![0.3, -1.0, 2.0]]).unwrap());
        let lp = t.log_softmax(x);
        let a = entropy_regularized_loss(&mut t, lp, &[1], 0.0).unwrap();
        let b = t.nll_loss(lp, &[1]).unwrap();
        assert_eq!(t.value(a).item(), t.value(b).item());
    }

    #[test]
    fn uniform_pair_cancels() {
        let mut t = Tape::<f64>::new();
        let x = t.constant(Tensor::zeros(&[1, 2]));
        let lp = t.log_softmax(x);
        let l = entropy_regularized_loss(&mut t, lp, &[0], 1.0).unwrap();
        assert!(t.value(l).item().abs() < 1e-15);
    }

    #[test]
    fn combined_loss_gradient() {
        let mut rng = RandomStream::new(21, "entropy-grad");
        for _ in 0..20 {
            let x = Tensor::from_fn(&[3, 5], |_| rng.random_range(-2.0..2.0));
            let err = grad_check(
                |t, v| {
                    let lp = t.log_softmax(v);
                    entropy_regularized_loss(t, lp, &[0, 4, 2], 0.7)
                },
                &x,
                1e-6,
            )
            .unwrap();
            assert!(err < 1e-4, "{err}");
        }
    }

    #[test]
    fn negative_lambda_rejected() {
        let mut t = Tape::<f64>::new();
        let x = t.constant(Tensor::zeros(&[1, 2]));
        assert!(entropy_regularized_loss(&mut t, x, &[0], -0.5).is_err());
    }
}
