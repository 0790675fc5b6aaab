//! Average pooling: the token-count reducer of the global branch, plus the
//! global average pool in front of the classifier head.

use crate::error::{arg_err, dim_err, Result};
use crate::tape::{Tape, Val};
use crate::tensor::{Elem, Tensor};

/// Non-overlapping s x s window means. `s` must divide both spatial extents;
/// there is deliberately no implicit padding.
pub fn avg_pool2d<E: Elem>(x: &Tensor<E>, s: usize) -> Result<Tensor<E>> {
    if s == 0 {
        return Err(arg_err!("pool stride must be >= 1"));
    }
    if s == 1 {
        return Ok(x.clone());
    }
    let [n, c, h, w] = x.dims();
    if h % s != 0 || w % s != 0 {
        return Err(dim_err!(
            "pool stride {s} does not divide spatial extents {h}x{w}"
        ));
    }
    let (oh, ow) = (h / s, w / s);
    let inv = E::from_f64(1.0 / (s * s) as f64);
    let mut out = Tensor::zeros([n, c, oh, ow]);
    for ni in 0..n {
        for ci in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = E::zero();
                    for dy in 0..s {
                        for dx in 0..s {
                            acc = acc + x.at(ni, ci, oy * s + dy, ox * s + dx);
                        }
                    }
                    *out.at_mut(ni, ci, oy, ox) = acc * inv;
                }
            }
        }
    }
    Ok(out)
}

pub fn avg_pool2d_backward<E: Elem>(
    x_dims: [usize; 4],
    s: usize,
    gout: &Tensor<E>,
) -> Tensor<E> {
    if s == 1 {
        return gout.clone();
    }
    let [n, c, _, _] = x_dims;
    let [_, _, oh, ow] = gout.dims();
    let inv = E::from_f64(1.0 / (s * s) as f64);
    let mut dx = Tensor::zeros(x_dims);
    for ni in 0..n {
        for ci in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let g = gout.at(ni, ci, oy, ox) * inv;
                    for dy in 0..s {
                        for dx_ in 0..s {
                            *dx.at_mut(ni, ci, oy * s + dy, ox * s + dx_) = g;
                        }
                    }
                }
            }
        }
    }
    dx
}

pub fn avg_pool2d_t<E: Elem>(tape: &mut Tape<E>, x: Val, s: usize) -> Result<Val> {
    let out = avg_pool2d(tape.value(x), s)?;
    let x_dims = tape.value(x).dims();
    Ok(tape.push(
        out,
        vec![x],
        Box::new(move |g, _, _| vec![avg_pool2d_backward(x_dims, s, g)]),
    ))
}

/// Mean over all spatial locations: (N, C, H, W) -> (N, C, 1, 1).
pub fn global_avg_pool<E: Elem>(x: &Tensor<E>) -> Tensor<E> {
    let [n, c, h, w] = x.dims();
    let inv = E::from_f64(1.0 / (h * w) as f64);
    let mut out = Tensor::zeros([n, c, 1, 1]);
    for ni in 0..n {
        for ci in 0..c {
            let mut acc = E::zero();
            for y in 0..h {
                for xw in 0..w {
                    acc = acc + x.at(ni, ci, y, xw);
                }
            }
            *out.at_mut(ni, ci, 0, 0) = acc * inv;
        }
    }
    out
}

pub fn global_avg_pool_t<E: Elem>(tape: &mut Tape<E>, x: Val) -> Val {
    let out = global_avg_pool(tape.value(x));
    let x_dims = tape.value(x).dims();
    tape.push(
        out,
        vec![x],
        Box::new(move |g, _, _| {
            let [n, c, h, w] = x_dims;
            let inv = E::from_f64(1.0 / (h * w) as f64);
            let mut dx = Tensor::zeros(x_dims);
            for ni in 0..n {
                for ci in 0..c {
                    let gv = g.at(ni, ci, 0, 0) * inv;
                    for y in 0..h {
                        for xw in 0..w {
                            *dx.at_mut(ni, ci, y, xw) = gv;
                        }
                    }
                }
            }
            vec![dx]
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn stride_one_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor::<f32>::rand_uniform([2, 3, 4, 4], -1.0, 1.0, &mut rng);
        assert_eq!(avg_pool2d(&x, 1).unwrap(), x);
    }

    #[test]
    fn two_by_two_mean() {
        let x = Tensor::<f32>::new([1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = avg_pool2d(&x, 2).unwrap();
        assert_eq!(y.dims(), [1, 1, 1, 1]);
        assert_eq!(y.data()[0], 2.5);
    }

    #[test]
    fn non_divisible_extent_rejected() {
        let x = Tensor::<f32>::zeros([1, 1, 5, 4]);
        let err = avg_pool2d(&x, 2).unwrap_err();
        assert_eq!(err.category(), "dimension");
    }

    #[test]
    fn global_pool_of_constant() {
        let x = Tensor::<f32>::full([2, 3, 4, 4], 0.75);
        let y = global_avg_pool(&x);
        assert_eq!(y.dims(), [2, 3, 1, 1]);
        assert!(y.data().iter().all(|&v| (v - 0.75).abs() < 1e-7));
    }
}
