//! 2D convolution (dense and depth-wise) with zero or circular padding.
//!
//! Same-padding with p = (k-1)/2 throughout; output extent is ceil(H/s).

use rayon::prelude::*;

use crate::error::{arg_err, dim_err, Result};
use crate::tape::{Tape, Val};
use crate::tensor::{Elem, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PadMode {
    Zeros,
    Circular,
}

/// Convolution parameter bundle. Weight is (C_out, C_in/groups, k, k).
#[derive(Debug, Clone)]
pub struct Conv2dParams<E: Elem> {
    pub weight: Tensor<E>,
    pub bias: Option<Tensor<E>>,
    pub stride: usize,
    pub pad: PadMode,
    pub groups: usize,
}

impl<E: Elem> Conv2dParams<E> {
    pub fn new(
        weight: Tensor<E>,
        bias: Option<Tensor<E>>,
        stride: usize,
        pad: PadMode,
        groups: usize,
    ) -> Result<Self> {
        let [c_out, _, kh, kw] = weight.dims();
        if kh != kw || kh % 2 == 0 {
            return Err(arg_err!("kernel must be square and odd, got {kh}x{kw}"));
        }
        if stride == 0 {
            return Err(arg_err!("stride must be >= 1"));
        }
        if groups == 0 || c_out % groups != 0 {
            return Err(arg_err!("groups {groups} must divide C_out {c_out}"));
        }
        if let Some(b) = &bias {
            if b.len() != c_out {
                return Err(dim_err!("bias len {} != C_out {c_out}", b.len()));
            }
        }
        Ok(Conv2dParams {
            weight,
            bias,
            stride,
            pad,
            groups,
        })
    }

    pub fn kernel(&self) -> usize {
        self.weight.dims()[2]
    }

    pub fn c_out(&self) -> usize {
        self.weight.dims()[0]
    }

    pub fn c_in(&self) -> usize {
        self.weight.dims()[1] * self.groups
    }

    pub fn is_depthwise(&self) -> bool {
        let [c_out, cig, _, _] = self.weight.dims();
        cig == 1 && self.groups == c_out
    }

    /// Identity "delta" depth-wise kernel (center 1, rest 0), for tests and
    /// identity-wired block configurations.
    pub fn delta_depthwise(channels: usize, k: usize, pad: PadMode) -> Self {
        let mut w = Tensor::zeros([channels, 1, k, k]);
        for c in 0..channels {
            *w.at_mut(c, 0, k / 2, k / 2) = E::one();
        }
        Conv2dParams {
            weight: w,
            bias: None,
            stride: 1,
            pad,
            groups: channels,
        }
    }
}

pub fn conv_out_extent(input: usize, stride: usize) -> usize {
    // floor((H + 2p - k)/s) + 1 with p=(k-1)/2 simplifies to ceil(H/s)
    (input + stride - 1) / stride
}

fn check_input<E: Elem>(x: &Tensor<E>, p: &Conv2dParams<E>) -> Result<()> {
    if x.c() != p.c_in() {
        return Err(dim_err!(
            "input has {} channels, conv expects {} (weight {:?}, groups {})",
            x.c(),
            p.c_in(),
            p.weight.dims(),
            p.groups
        ));
    }
    if x.c() % p.groups != 0 {
        return Err(dim_err!("groups {} must divide C_in {}", p.groups, x.c()));
    }
    Ok(())
}

/// Dense or grouped 2D cross-correlation.
pub fn conv2d<E: Elem>(x: &Tensor<E>, p: &Conv2dParams<E>) -> Result<Tensor<E>> {
    check_input(x, p)?;
    let [n, c_in, h, w] = x.dims();
    let k = p.kernel();
    let pad = (k - 1) / 2;
    let s = p.stride;
    let (oh, ow) = (conv_out_extent(h, s), conv_out_extent(w, s));
    let c_out = p.c_out();
    let cig = c_in / p.groups; // channels per group on the input side
    let cog = c_out / p.groups;
    let circular = p.pad == PadMode::Circular;

    let mut out = Tensor::zeros([n, c_out, oh, ow]);
    let xd = x.data();
    let wd = p.weight.data();
    out.data_mut()
        .par_chunks_mut(oh * ow)
        .enumerate()
        .for_each(|(idx, plane)| {
            let ni = idx / c_out;
            let co = idx % c_out;
            let g = co / cog;
            let bias = p
                .bias
                .as_ref()
                .map(|b| b.data()[co])
                .unwrap_or_else(E::zero);
            for v in plane.iter_mut() {
                *v = bias;
            }
            for cg in 0..cig {
                let ci = g * cig + cg;
                let xbase = (ni * c_in + ci) * h * w;
                let wbase = (co * cig + cg) * k * k;
                for oy in 0..oh {
                    for ky in 0..k {
                        let iy = oy as i64 * s as i64 + ky as i64 - pad as i64;
                        let iy = if circular {
                            iy.rem_euclid(h as i64) as usize
                        } else if iy < 0 || iy >= h as i64 {
                            continue;
                        } else {
                            iy as usize
                        };
                        let xrow = xbase + iy * w;
                        for kx in 0..k {
                            let wv = wd[wbase + ky * k + kx];
                            let orow = oy * ow;
                            for ox in 0..ow {
                                let ix = ox as i64 * s as i64 + kx as i64 - pad as i64;
                                let ix = if circular {
                                    ix.rem_euclid(w as i64) as usize
                                } else if ix < 0 || ix >= w as i64 {
                                    continue;
                                } else {
                                    ix as usize
                                };
                                plane[orow + ox] = plane[orow + ox] + wv * xd[xrow + ix];
                            }
                        }
                    }
                }
            }
        });
    Ok(out)
}

/// Depth-wise convolution: rejects non-depthwise parameter bundles.
pub fn dwconv2d<E: Elem>(x: &Tensor<E>, p: &Conv2dParams<E>) -> Result<Tensor<E>> {
    if !p.is_depthwise() {
        return Err(arg_err!(
            "dwconv2d requires groups == C_in == C_out, got weight {:?} groups {}",
            p.weight.dims(),
            p.groups
        ));
    }
    conv2d(x, p)
}

/// Gradients (dx, dweight, dbias) of conv2d.
pub fn conv2d_backward<E: Elem>(
    x: &Tensor<E>,
    p: &Conv2dParams<E>,
    gout: &Tensor<E>,
) -> Result<(Tensor<E>, Tensor<E>, Option<Tensor<E>>)> {
    check_input(x, p)?;
    let [n, c_in, h, w] = x.dims();
    let k = p.kernel();
    let pad = (k - 1) / 2;
    let s = p.stride;
    let [_, c_out, oh, ow] = gout.dims();
    let cig = c_in / p.groups;
    let cog = c_out / p.groups;
    let circular = p.pad == PadMode::Circular;
    let wd = p.weight.data();
    let xd = x.data();
    let gd = gout.data();
    let wlen = p.weight.len();

    // Per-sample scatter keeps writes disjoint across the rayon split;
    // per-sample weight partials are reduced in index order afterwards.
    let parts: Vec<(Vec<E>, Vec<E>, Vec<E>)> = (0..n)
        .into_par_iter()
        .map(|ni| {
            let mut dx = vec![E::zero(); c_in * h * w];
            let mut dw = vec![E::zero(); wlen];
            let mut db = vec![E::zero(); c_out];
            for co in 0..c_out {
                let g = co / cog;
                let gbase = (ni * c_out + co) * oh * ow;
                for oy in 0..oh {
                    for ox in 0..ow {
                        let go = gd[gbase + oy * ow + ox];
                        db[co] = db[co] + go;
                        for cg in 0..cig {
                            let ci = g * cig + cg;
                            let xbase = (ni * c_in + ci) * h * w;
                            let dxbase = ci * h * w;
                            let wbase = (co * cig + cg) * k * k;
                            for ky in 0..k {
                                let iy = oy as i64 * s as i64 + ky as i64 - pad as i64;
                                let iy = if circular {
                                    iy.rem_euclid(h as i64) as usize
                                } else if iy < 0 || iy >= h as i64 {
                                    continue;
                                } else {
                                    iy as usize
                                };
                                for kx in 0..k {
                                    let ix = ox as i64 * s as i64 + kx as i64 - pad as i64;
                                    let ix = if circular {
                                        ix.rem_euclid(w as i64) as usize
                                    } else if ix < 0 || ix >= w as i64 {
                                        continue;
                                    } else {
                                        ix as usize
                                    };
                                    let wi = wbase + ky * k + kx;
                                    dx[dxbase + iy * w + ix] =
                                        dx[dxbase + iy * w + ix] + wd[wi] * go;
                                    dw[wi] = dw[wi] + xd[xbase + iy * w + ix] * go;
                                }
                            }
                        }
                    }
                }
            }
            (dx, dw, db)
        })
        .collect();

    let mut dx = Tensor::zeros(x.dims());
    let mut dw = Tensor::zeros(p.weight.dims());
    let mut db = vec![E::zero(); c_out];
    for (ni, (pdx, pdw, pdb)) in parts.into_iter().enumerate() {
        let base = ni * c_in * h * w;
        dx.data_mut()[base..base + pdx.len()].copy_from_slice(&pdx);
        for (a, b) in dw.data_mut().iter_mut().zip(&pdw) {
            *a = *a + *b;
        }
        for (a, b) in db.iter_mut().zip(&pdb) {
            *a = *a + *b;
        }
    }
    let db = p.bias.as_ref().map(|_| Tensor::vector(db));
    Ok((dx, dw, db))
}

/// Taped convolution; `w` and optional `b` are tape values so parameter
/// gradients flow.
pub fn conv2d_t<E: Elem>(
    tape: &mut Tape<E>,
    x: Val,
    w: Val,
    b: Option<Val>,
    stride: usize,
    pad: PadMode,
    groups: usize,
) -> Result<Val> {
    let params = Conv2dParams::new(
        tape.value(w).clone(),
        b.map(|bv| tape.value(bv).clone()),
        stride,
        pad,
        groups,
    )?;
    let out = conv2d(tape.value(x), &params)?;
    let mut parents = vec![x, w];
    if let Some(bv) = b {
        parents.push(bv);
    }
    let has_bias = b.is_some();
    Ok(tape.push(
        out,
        parents,
        Box::new(move |g, ps, _| {
            let p = Conv2dParams {
                weight: ps[1].clone(),
                bias: if has_bias { Some(ps[2].clone()) } else { None },
                stride,
                pad,
                groups,
            };
            let (dx, dw, db) = conv2d_backward(ps[0], &p, g).expect("conv backward");
            let mut out = vec![dx, dw];
            if let Some(db) = db {
                out.push(db);
            }
            out
        }),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn delta_kernel_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor::<f32>::rand_uniform([2, 3, 5, 5], -1.0, 1.0, &mut rng);
        let p = Conv2dParams::delta_depthwise(3, 3, PadMode::Zeros);
        let y = dwconv2d(&x, &p).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn ones_kernel_circular_constant_field() {
        let x = Tensor::<f32>::full([1, 2, 4, 4], 0.5);
        let w = Tensor::ones([2, 1, 3, 3]);
        let p = Conv2dParams::new(w, None, 1, PadMode::Circular, 2).unwrap();
        let y = dwconv2d(&x, &p).unwrap();
        for &v in y.data() {
            assert!((v - 4.5).abs() < 1e-6); // 9 * 0.5
        }
    }

    #[test]
    fn stride2_halves_extents() {
        let x = Tensor::<f32>::zeros([1, 3, 224, 224]);
        let w = Tensor::zeros([8, 3, 3, 3]);
        let p = Conv2dParams::new(w, None, 2, PadMode::Zeros, 1).unwrap();
        let y = conv2d(&x, &p).unwrap();
        assert_eq!(y.dims(), [1, 8, 112, 112]);
    }

    #[test]
    fn even_kernel_rejected() {
        let w = Tensor::<f32>::zeros([2, 1, 4, 4]);
        assert!(Conv2dParams::new(w, None, 1, PadMode::Zeros, 2).is_err());
    }

    #[test]
    fn channel_mismatch_names_shapes() {
        let x = Tensor::<f32>::zeros([1, 5, 4, 4]);
        let w = Tensor::zeros([2, 3, 3, 3]);
        let p = Conv2dParams::new(w, None, 1, PadMode::Zeros, 1).unwrap();
        let err = conv2d(&x, &p).unwrap_err();
        assert!(err.to_string().contains("5"));
        assert!(err.to_string().contains("3"));
    }

    #[test]
    fn circular_stride1_commutes_with_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = Tensor::<f32>::rand_uniform([1, 4, 6, 6], -1.0, 1.0, &mut rng);
        let w = Tensor::rand_uniform([4, 1, 3, 3], -1.0, 1.0, &mut rng);
        let p = Conv2dParams::new(w, None, 1, PadMode::Circular, 4).unwrap();
        let a = dwconv2d(&x.circular_shift(2, 3), &p).unwrap();
        let b = dwconv2d(&x, &p).unwrap().circular_shift(2, 3);
        for (u, v) in a.data().iter().zip(b.data()) {
            assert!((u - v).abs() < 1e-6);
        }
    }
}
