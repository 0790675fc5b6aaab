//! Stochastic depth: per-sample residual-branch dropping.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{arg_err, Result};
use crate::tape::{Tape, Val};
use crate::tensor::{Elem, Tensor};

/// In training, zeroes each sample's branch with probability `rate` and
/// scales survivors by 1/(1-rate); in inference it is the identity.
pub fn drop_path<E: Elem>(
    x: &Tensor<E>,
    rate: f64,
    rng: &mut ChaCha8Rng,
    training: bool,
) -> Result<Tensor<E>> {
    let mask = drop_path_mask(x.n(), rate, rng, training)?;
    Ok(apply_sample_mask(x, &mask))
}

/// Per-sample keep scales: 0 for dropped samples, 1/(1-rate) for kept ones.
pub fn drop_path_mask<E: Elem>(
    n: usize,
    rate: f64,
    rng: &mut ChaCha8Rng,
    training: bool,
) -> Result<Vec<E>> {
    if !(0.0..1.0).contains(&rate) {
        return Err(arg_err!("drop-path rate must be in [0, 1), got {rate}"));
    }
    if !training || rate == 0.0 {
        return Ok(vec![E::one(); n]);
    }
    let keep = E::from_f64(1.0 / (1.0 - rate));
    Ok((0..n)
        .map(|_| {
            if rng.gen_range(0.0..1.0) < rate {
                E::zero()
            } else {
                keep
            }
        })
        .collect())
}

fn apply_sample_mask<E: Elem>(x: &Tensor<E>, mask: &[E]) -> Tensor<E> {
    let [n, c, h, w] = x.dims();
    let chw = c * h * w;
    let mut out = x.clone();
    for ni in 0..n {
        let m = mask[ni];
        for v in &mut out.data_mut()[ni * chw..(ni + 1) * chw] {
            *v = *v * m;
        }
    }
    out
}

/// Taped drop-path: the mask is sampled once at record time and reused in
/// the backward closure, so forward and backward see the same draw.
pub fn drop_path_t<E: Elem>(
    tape: &mut Tape<E>,
    x: Val,
    rate: f64,
    rng: &mut ChaCha8Rng,
    training: bool,
) -> Result<Val> {
    let mask = drop_path_mask(tape.value(x).n(), rate, rng, training)?;
    let out = apply_sample_mask(tape.value(x), &mask);
    Ok(tape.push(
        out,
        vec![x],
        Box::new(move |g, _, _| vec![apply_sample_mask(g, &mask)]),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn rate_zero_and_inference_are_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor::<f32>::rand_uniform([4, 2, 3, 3], -1.0, 1.0, &mut rng);
        assert_eq!(drop_path(&x, 0.0, &mut rng, true).unwrap(), x);
        assert_eq!(drop_path(&x, 0.9, &mut rng, false).unwrap(), x);
    }

    #[test]
    fn rate_one_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor::<f32>::ones([1, 1, 1, 1]);
        assert!(drop_path(&x, 1.0, &mut rng, true).is_err());
        assert!(drop_path(&x, -0.1, &mut rng, true).is_err());
    }

    #[test]
    fn empirical_drop_frequency() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let rate = 0.06;
        let trials = 10_000;
        let mask = drop_path_mask::<f32>(trials, rate, &mut rng, true).unwrap();
        let dropped = mask.iter().filter(|&&m| m == 0.0).count();
        let freq = dropped as f64 / trials as f64;
        assert!((freq - rate).abs() < 0.01, "freq {freq}");
    }

    #[test]
    fn survivors_are_rescaled() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = Tensor::<f64>::ones([64, 1, 1, 1]);
        let y = drop_path(&x, 0.5, &mut rng, true).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0 || (v - 2.0).abs() < 1e-12));
    }
}
