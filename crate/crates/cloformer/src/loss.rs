//! Softmax cross-entropy, fused as a single taped op for numerical
//! stability (log-sum-exp with max subtraction).

use crate::error::{arg_err, Result};
use crate::tape::{Tape, Val};
use crate::tensor::{Elem, Tensor};

fn per_sample_stats<E: Elem>(logits: &Tensor<E>, labels: &[usize]) -> Result<(f64, Vec<f64>)> {
    let [n, k, h, w] = logits.dims();
    if h != 1 || w != 1 {
        return Err(arg_err!(
            "loss expects logits of shape (N, K, 1, 1), got {:?}",
            logits.dims()
        ));
    }
    if labels.len() != n {
        return Err(arg_err!("{} labels for a batch of {n}", labels.len()));
    }
    // softmax probabilities flattened (n*k), plus the mean loss
    let mut probs = vec![0.0_f64; n * k];
    let mut total = 0.0;
    for ni in 0..n {
        let label = labels[ni];
        if label >= k {
            return Err(arg_err!("label {label} out of range for {k} classes"));
        }
        let row: Vec<f64> = (0..k).map(|ki| logits.at(ni, ki, 0, 0).to_f64_()).collect();
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for &z in &row {
            denom += (z - max).exp();
        }
        let lse = max + denom.ln();
        total += lse - row[label];
        for ki in 0..k {
            probs[ni * k + ki] = (row[ki] - lse).exp();
        }
    }
    Ok((total / n as f64, probs))
}

/// Mean over the batch of −log softmax(logits)[label].
pub fn softmax_cross_entropy<E: Elem>(logits: &Tensor<E>, labels: &[usize]) -> Result<E> {
    per_sample_stats(logits, labels).map(|(loss, _)| E::from_f64(loss))
}

/// Taped cross-entropy producing a scalar root for `Tape::backward`.
pub fn softmax_cross_entropy_t<E: Elem>(
    tape: &mut Tape<E>,
    logits: Val,
    labels: &[usize],
) -> Result<Val> {
    let lt = tape.value(logits);
    let [n, k, _, _] = lt.dims();
    let (loss, probs) = per_sample_stats(lt, labels)?;
    let labels = labels.to_vec();
    let out = Tensor::scalar(E::from_f64(loss));
    Ok(tape.push(
        out,
        vec![logits],
        Box::new(move |gout, parents, _| {
            let g = gout.data()[0].to_f64_();
            let mut dl = Tensor::<E>::zeros(parents[0].dims());
            for ni in 0..n {
                for ki in 0..k {
                    let p = probs[ni * k + ki];
                    let onehot = if ki == labels[ni] { 1.0 } else { 0.0 };
                    *dl.at_mut(ni, ki, 0, 0) = E::from_f64(g * (p - onehot) / n as f64);
                }
            }
            vec![dl]
        }),
    ))
}

/// Index of the largest logit per batch entry.
pub fn argmax_classes<E: Elem>(logits: &Tensor<E>) -> Vec<usize> {
    let [n, k, _, _] = logits.dims();
    (0..n)
        .map(|ni| {
            (0..k)
                .max_by(|&a, &b| {
                    logits
                        .at(ni, a, 0, 0)
                        .partial_cmp(&logits.at(ni, b, 0, 0))
                        .unwrap_or(std::cmp::Ordering::Equal)
                })
                .unwrap()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{finite_diff_grad, rel_error};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_logits_give_ln_k() {
        let logits = Tensor::<f64>::zeros([3, 5, 1, 1]);
        let loss = softmax_cross_entropy(&logits, &[0, 2, 4]).unwrap();
        assert!((loss - 5.0_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn saturated_correct_class_is_near_zero() {
        let mut logits = Tensor::<f64>::zeros([1, 4, 1, 1]);
        *logits.at_mut(0, 2, 0, 0) = 30.0;
        let loss = softmax_cross_entropy(&logits, &[2]).unwrap();
        assert!(loss < 1e-9, "loss {loss}");
    }

    #[test]
    fn invalid_label_rejected() {
        let logits = Tensor::<f64>::zeros([1, 4, 1, 1]);
        assert_eq!(
            softmax_cross_entropy(&logits, &[4]).unwrap_err().category(),
            "argument"
        );
        assert_eq!(
            softmax_cross_entropy(&logits, &[0, 1]).unwrap_err().category(),
            "argument"
        );
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Tensor::<f64>::rand_uniform([4, 6, 1, 1], -2.0, 2.0, &mut rng);
        let labels = vec![0, 5, 2, 3];
        let mut tape = Tape::new();
        let xv = tape.leaf(x.clone());
        let loss = softmax_cross_entropy_t(&mut tape, xv, &labels).unwrap();
        let grads = tape.backward(loss).unwrap();
        let analytic = grads.get(xv).unwrap();
        let numeric = finite_diff_grad(
            &|t: &Tensor<f64>| softmax_cross_entropy(t, &labels).unwrap(),
            &x,
            1e-5,
        )
        .unwrap();
        let err = rel_error(analytic, &numeric);
        assert!(err < 1e-8, "rel err {err}");
    }

    #[test]
    fn argmax_picks_largest() {
        let mut logits = Tensor::<f64>::zeros([2, 3, 1, 1]);
        *logits.at_mut(0, 1, 0, 0) = 2.0;
        *logits.at_mut(1, 2, 0, 0) = 0.5;
        assert_eq!(argmax_classes(&logits), vec![1, 2]);
    }
}
