//! Channel-wise layer normalization and the stable token softmax.

use crate::error::{arg_err, dim_err, Error, Result};
use crate::tape::{Tape, Val};
use crate::tensor::{Elem, Tensor};

/// Per (n, h, w) location: normalize across channels, then affine.
/// `gain` and `offset` are length-C vectors.
pub fn layer_norm_channels<E: Elem>(
    x: &Tensor<E>,
    gain: &Tensor<E>,
    offset: &Tensor<E>,
    eps: f64,
) -> Result<Tensor<E>> {
    if eps <= 0.0 {
        return Err(arg_err!("layer norm eps must be > 0, got {eps}"));
    }
    let [n, c, h, w] = x.dims();
    if gain.len() != c || offset.len() != c {
        return Err(dim_err!(
            "gain/offset lengths {}/{} != channel count {c}",
            gain.len(),
            offset.len()
        ));
    }
    let inv_c = E::from_f64(1.0 / c as f64);
    let eps_e = E::from_f64(eps);
    let mut out = Tensor::zeros(x.dims());
    for ni in 0..n {
        for y in 0..h {
            for xw in 0..w {
                let mut mean = E::zero();
                for ci in 0..c {
                    mean = mean + x.at(ni, ci, y, xw);
                }
                mean = mean * inv_c;
                let mut var = E::zero();
                for ci in 0..c {
                    let d = x.at(ni, ci, y, xw) - mean;
                    var = var + d * d;
                }
                var = var * inv_c;
                let inv_std = (var + eps_e).sqrt().recip();
                for ci in 0..c {
                    let xn = (x.at(ni, ci, y, xw) - mean) * inv_std;
                    *out.at_mut(ni, ci, y, xw) = gain.data()[ci] * xn + offset.data()[ci];
                }
            }
        }
    }
    Ok(out)
}

/// Hand-derived layer-norm backward. Per location with xn the normalized
/// value and gy = g * gain:
///   dx = inv_std * (gy - mean(gy) - xn * mean(gy * xn))
pub fn layer_norm_channels_backward<E: Elem>(
    x: &Tensor<E>,
    gain: &Tensor<E>,
    eps: f64,
    gout: &Tensor<E>,
) -> (Tensor<E>, Tensor<E>, Tensor<E>) {
    let [n, c, h, w] = x.dims();
    let inv_c = E::from_f64(1.0 / c as f64);
    let eps_e = E::from_f64(eps);
    let mut dx = Tensor::zeros(x.dims());
    let mut dgain = vec![E::zero(); c];
    let mut doffset = vec![E::zero(); c];
    let mut xn = vec![E::zero(); c];
    let mut gy = vec![E::zero(); c];
    for ni in 0..n {
        for y in 0..h {
            for xw in 0..w {
                let mut mean = E::zero();
                for ci in 0..c {
                    mean = mean + x.at(ni, ci, y, xw);
                }
                mean = mean * inv_c;
                let mut var = E::zero();
                for ci in 0..c {
                    let d = x.at(ni, ci, y, xw) - mean;
                    var = var + d * d;
                }
                var = var * inv_c;
                let inv_std = (var + eps_e).sqrt().recip();
                let mut gy_mean = E::zero();
                let mut gyxn_mean = E::zero();
                for ci in 0..c {
                    let g = gout.at(ni, ci, y, xw);
                    xn[ci] = (x.at(ni, ci, y, xw) - mean) * inv_std;
                    gy[ci] = g * gain.data()[ci];
                    gy_mean = gy_mean + gy[ci];
                    gyxn_mean = gyxn_mean + gy[ci] * xn[ci];
                    dgain[ci] = dgain[ci] + g * xn[ci];
                    doffset[ci] = doffset[ci] + g;
                }
                gy_mean = gy_mean * inv_c;
                gyxn_mean = gyxn_mean * inv_c;
                for ci in 0..c {
                    *dx.at_mut(ni, ci, y, xw) =
                        inv_std * (gy[ci] - gy_mean - xn[ci] * gyxn_mean);
                }
            }
        }
    }
    (dx, Tensor::vector(dgain), Tensor::vector(doffset))
}

pub fn layer_norm_channels_t<E: Elem>(
    tape: &mut Tape<E>,
    x: Val,
    gain: Val,
    offset: Val,
    eps: f64,
) -> Result<Val> {
    let out = layer_norm_channels(tape.value(x), tape.value(gain), tape.value(offset), eps)?;
    Ok(tape.push(
        out,
        vec![x, gain, offset],
        Box::new(move |g, ps, _| {
            let (dx, dg, db) = layer_norm_channels_backward(ps[0], ps[1], eps, g);
            vec![dx, dg, db]
        }),
    ))
}

/// Softmax over the trailing (W) axis, which this library uses as the key
/// axis of attention score tensors. Max-subtracted for stability.
pub fn softmax_tokens<E: Elem>(scores: &Tensor<E>) -> Result<Tensor<E>> {
    if scores.data().iter().any(|v| v.is_nan()) {
        return Err(Error::Numeric("softmax input contains NaN".into()));
    }
    let [n, c, h, w] = scores.dims();
    let mut out = Tensor::zeros(scores.dims());
    for ni in 0..n {
        for ci in 0..c {
            for y in 0..h {
                let mut m = scores.at(ni, ci, y, 0);
                for xw in 1..w {
                    let v = scores.at(ni, ci, y, xw);
                    if v > m {
                        m = v;
                    }
                }
                let mut denom = E::zero();
                for xw in 0..w {
                    let e = (scores.at(ni, ci, y, xw) - m).exp();
                    *out.at_mut(ni, ci, y, xw) = e;
                    denom = denom + e;
                }
                for xw in 0..w {
                    let v = out.at(ni, ci, y, xw) / denom;
                    *out.at_mut(ni, ci, y, xw) = v;
                }
            }
        }
    }
    Ok(out)
}

/// Softmax backward from its own output p: dx = p * (g - sum(g * p)).
pub fn softmax_tokens_backward<E: Elem>(p: &Tensor<E>, gout: &Tensor<E>) -> Tensor<E> {
    let [n, c, h, w] = p.dims();
    let mut dx = Tensor::zeros(p.dims());
    for ni in 0..n {
        for ci in 0..c {
            for y in 0..h {
                let mut dot = E::zero();
                for xw in 0..w {
                    dot = dot + gout.at(ni, ci, y, xw) * p.at(ni, ci, y, xw);
                }
                for xw in 0..w {
                    *dx.at_mut(ni, ci, y, xw) =
                        p.at(ni, ci, y, xw) * (gout.at(ni, ci, y, xw) - dot);
                }
            }
        }
    }
    dx
}

pub fn softmax_tokens_t<E: Elem>(tape: &mut Tape<E>, scores: Val) -> Result<Val> {
    let out = softmax_tokens(tape.value(scores))?;
    Ok(tape.push(
        out,
        vec![scores],
        Box::new(|g, _, out| vec![softmax_tokens_backward(out, g)]),
    ))
}
