//! Channel-axis split and concatenation, used by the QKV head partition.

use crate::error::{dim_err, Result};
use crate::tape::{Tape, Val};
use crate::tensor::{Elem, Tensor};

/// Concatenate along the channel axis; all other extents must match.
pub fn concat_channels<E: Elem>(parts: &[&Tensor<E>]) -> Result<Tensor<E>> {
    let Some(first) = parts.first() else {
        return Err(dim_err!("concat needs at least one tensor"));
    };
    let [n, _, h, w] = first.dims();
    let mut c_total = 0;
    for p in parts {
        let [pn, pc, ph, pw] = p.dims();
        if pn != n || ph != h || pw != w {
            return Err(dim_err!(
                "concat extents mismatch: {:?} vs {:?}",
                first.dims(),
                p.dims()
            ));
        }
        c_total += pc;
    }
    let hw = h * w;
    let mut out = Tensor::zeros([n, c_total, h, w]);
    let od = out.data_mut();
    for ni in 0..n {
        let mut c_off = 0;
        for p in parts {
            let pc = p.dims()[1];
            let src = &p.data()[ni * pc * hw..(ni + 1) * pc * hw];
            od[(ni * c_total + c_off) * hw..(ni * c_total + c_off + pc) * hw]
                .copy_from_slice(src);
            c_off += pc;
        }
    }
    Ok(out)
}

/// Split along the channel axis into the given sizes (must sum to C).
pub fn split_channels<E: Elem>(x: &Tensor<E>, sizes: &[usize]) -> Result<Vec<Tensor<E>>> {
    let [n, c, h, w] = x.dims();
    let total: usize = sizes.iter().sum();
    if total != c || sizes.iter().any(|&s| s == 0) {
        return Err(dim_err!(
            "split sizes {sizes:?} must be positive and sum to channel count {c}"
        ));
    }
    let hw = h * w;
    let mut out = Vec::with_capacity(sizes.len());
    let mut c_off = 0;
    for &sc in sizes {
        let mut part = Tensor::zeros([n, sc, h, w]);
        for ni in 0..n {
            let src = &x.data()[(ni * c + c_off) * hw..(ni * c + c_off + sc) * hw];
            part.data_mut()[ni * sc * hw..(ni + 1) * sc * hw].copy_from_slice(src);
        }
        out.push(part);
        c_off += sc;
    }
    Ok(out)
}

pub fn concat_channels_t<E: Elem>(tape: &mut Tape<E>, parts: &[Val]) -> Result<Val> {
    let tensors: Vec<&Tensor<E>> = parts.iter().map(|&v| tape.value(v)).collect();
    let sizes: Vec<usize> = tensors.iter().map(|t| t.dims()[1]).collect();
    let out = concat_channels(&tensors)?;
    Ok(tape.push(
        out,
        parts.to_vec(),
        Box::new(move |g, _, _| split_channels(g, &sizes).expect("concat backward")),
    ))
}

pub fn split_channels_t<E: Elem>(
    tape: &mut Tape<E>,
    x: Val,
    sizes: &[usize],
) -> Result<Vec<Val>> {
    let parts = split_channels(tape.value(x), sizes)?;
    let x_dims = tape.value(x).dims();
    let sizes: Vec<usize> = sizes.to_vec();
    let mut out = Vec::with_capacity(parts.len());
    for (i, part) in parts.into_iter().enumerate() {
        let sizes = sizes.clone();
        out.push(tape.push(
            part,
            vec![x],
            Box::new(move |g, _, _| {
                // Scatter this slice's gradient back into a zero tensor the
                // size of the split input; other slices contribute via sum.
                let mut dx = Tensor::zeros(x_dims);
                let [n, c, h, w] = x_dims;
                let hw = h * w;
                let c_off: usize = sizes[..i].iter().sum();
                let sc = sizes[i];
                for ni in 0..n {
                    let dst = &mut dx.data_mut()
                        [(ni * c + c_off) * hw..(ni * c + c_off + sc) * hw];
                    dst.copy_from_slice(&g.data()[ni * sc * hw..(ni + 1) * sc * hw]);
                }
                vec![dx]
            }),
        ));
    }
    Ok(out)
}

/// Space-to-depth rearrangement: each non-overlapping r x r spatial patch
/// becomes r*r extra channels, so (N, C, H, W) -> (N, C*r*r, H/r, W/r).
/// Followed by a 1x1 FC this is exactly an r x r stride-r convolution,
/// which is how the patch-embed stem ablation is realized.
pub fn space_to_depth<E: Elem>(x: &Tensor<E>, r: usize) -> Result<Tensor<E>> {
    if r == 0 {
        return Err(dim_err!("patch size must be >= 1"));
    }
    let [n, c, h, w] = x.dims();
    if h % r != 0 || w % r != 0 {
        return Err(dim_err!(
            "patch size {r} does not divide spatial extents {h}x{w}"
        ));
    }
    let (oh, ow) = (h / r, w / r);
    let mut out = Tensor::zeros([n, c * r * r, oh, ow]);
    for ni in 0..n {
        for ci in 0..c {
            for dy in 0..r {
                for dx in 0..r {
                    let co = ci * r * r + dy * r + dx;
                    for oy in 0..oh {
                        for ox in 0..ow {
                            *out.at_mut(ni, co, oy, ox) = x.at(ni, ci, oy * r + dy, ox * r + dx);
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

fn depth_to_space<E: Elem>(x: &Tensor<E>, r: usize) -> Tensor<E> {
    let [n, crr, oh, ow] = x.dims();
    let c = crr / (r * r);
    let mut out = Tensor::zeros([n, c, oh * r, ow * r]);
    for ni in 0..n {
        for ci in 0..c {
            for dy in 0..r {
                for dx in 0..r {
                    let co = ci * r * r + dy * r + dx;
                    for oy in 0..oh {
                        for ox in 0..ow {
                            *out.at_mut(ni, ci, oy * r + dy, ox * r + dx) = x.at(ni, co, oy, ox);
                        }
                    }
                }
            }
        }
    }
    out
}

pub fn space_to_depth_t<E: Elem>(tape: &mut Tape<E>, x: Val, r: usize) -> Result<Val> {
    let out = space_to_depth(tape.value(x), r)?;
    Ok(tape.push(
        out,
        vec![x],
        Box::new(move |g, _, _| vec![depth_to_space(g, r)]),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn split_then_concat_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = Tensor::<f32>::rand_uniform([2, 7, 3, 4], -1.0, 1.0, &mut rng);
        let parts = split_channels(&x, &[2, 4, 1]).unwrap();
        let refs: Vec<&Tensor<f32>> = parts.iter().collect();
        assert_eq!(concat_channels(&refs).unwrap(), x);
    }

    #[test]
    fn split_sizes_must_sum() {
        let x = Tensor::<f32>::zeros([1, 6, 2, 2]);
        assert!(split_channels(&x, &[2, 2]).is_err());
        assert!(split_channels(&x, &[6, 0]).is_err());
    }

    #[test]
    fn space_to_depth_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = Tensor::<f32>::rand_uniform([2, 3, 4, 8], -1.0, 1.0, &mut rng);
        let y = space_to_depth(&x, 2).unwrap();
        assert_eq!(y.dims(), [2, 12, 2, 4]);
        assert_eq!(depth_to_space(&y, 2), x);
    }

    #[test]
    fn concat_extent_mismatch_rejected() {
        let a = Tensor::<f32>::zeros([1, 2, 3, 3]);
        let b = Tensor::<f32>::zeros([1, 2, 4, 3]);
        assert!(concat_channels(&[&a, &b]).is_err());
    }
}
