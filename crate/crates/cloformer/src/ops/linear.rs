//! Pointwise fully-connected layer (equivalent to a 1x1 convolution).

use rayon::prelude::*;

use crate::error::{dim_err, Result};
use crate::tape::{Tape, Val};
use crate::tensor::{Elem, Tensor};

/// Weight is (C_out, C_in) stored as dims [C_out, C_in, 1, 1].
#[derive(Debug, Clone)]
pub struct LinearParams<E: Elem> {
    pub weight: Tensor<E>,
    pub bias: Option<Tensor<E>>,
}

impl<E: Elem> LinearParams<E> {
    pub fn new(weight: Tensor<E>, bias: Option<Tensor<E>>) -> Result<Self> {
        let [c_out, _, oh, ow] = weight.dims();
        if oh != 1 || ow != 1 {
            return Err(dim_err!("linear weight must be (C_out, C_in), got {:?}", weight.dims()));
        }
        if let Some(b) = &bias {
            if b.len() != c_out {
                return Err(dim_err!("bias len {} != C_out {c_out}", b.len()));
            }
        }
        Ok(LinearParams { weight, bias })
    }

    pub fn c_out(&self) -> usize {
        self.weight.dims()[0]
    }

    pub fn c_in(&self) -> usize {
        self.weight.dims()[1]
    }

    pub fn identity(channels: usize) -> Self {
        let mut w = Tensor::zeros([channels, channels, 1, 1]);
        for c in 0..channels {
            *w.at_mut(c, c, 0, 0) = E::one();
        }
        LinearParams {
            weight: w,
            bias: None,
        }
    }
}

/// Per spatial location: y = W x + b.
pub fn fully_connected<E: Elem>(x: &Tensor<E>, p: &LinearParams<E>) -> Result<Tensor<E>> {
    let [n, c_in, h, w] = x.dims();
    if c_in != p.c_in() {
        return Err(dim_err!(
            "input has {c_in} channels, linear expects {}",
            p.c_in()
        ));
    }
    let c_out = p.c_out();
    let hw = h * w;
    let xd = x.data();
    let wd = p.weight.data();
    let mut out = Tensor::zeros([n, c_out, h, w]);
    out.data_mut()
        .par_chunks_mut(hw)
        .enumerate()
        .for_each(|(idx, plane)| {
            let ni = idx / c_out;
            let co = idx % c_out;
            let b = p
                .bias
                .as_ref()
                .map(|b| b.data()[co])
                .unwrap_or_else(E::zero);
            for v in plane.iter_mut() {
                *v = b;
            }
            for ci in 0..c_in {
                let wv = wd[co * c_in + ci];
                let xrow = &xd[(ni * c_in + ci) * hw..(ni * c_in + ci + 1) * hw];
                for (o, &xv) in plane.iter_mut().zip(xrow) {
                    *o = *o + wv * xv;
                }
            }
        });
    Ok(out)
}

pub fn fully_connected_backward<E: Elem>(
    x: &Tensor<E>,
    p: &LinearParams<E>,
    gout: &Tensor<E>,
) -> Result<(Tensor<E>, Tensor<E>, Option<Tensor<E>>)> {
    let [n, c_in, h, w] = x.dims();
    let c_out = p.c_out();
    let hw = h * w;
    let wd = p.weight.data();
    let xd = x.data();
    let gd = gout.data();

    let mut dx = Tensor::zeros(x.dims());
    dx.data_mut()
        .par_chunks_mut(hw)
        .enumerate()
        .for_each(|(idx, plane)| {
            let ni = idx / c_in;
            let ci = idx % c_in;
            for co in 0..c_out {
                let wv = wd[co * c_in + ci];
                let grow = &gd[(ni * c_out + co) * hw..(ni * c_out + co + 1) * hw];
                for (o, &gv) in plane.iter_mut().zip(grow) {
                    *o = *o + wv * gv;
                }
            }
        });

    let parts: Vec<(Vec<E>, Vec<E>)> = (0..n)
        .into_par_iter()
        .map(|ni| {
            let mut dw = vec![E::zero(); c_out * c_in];
            let mut db = vec![E::zero(); c_out];
            for co in 0..c_out {
                let grow = &gd[(ni * c_out + co) * hw..(ni * c_out + co + 1) * hw];
                for &gv in grow {
                    db[co] = db[co] + gv;
                }
                for ci in 0..c_in {
                    let xrow = &xd[(ni * c_in + ci) * hw..(ni * c_in + ci + 1) * hw];
                    let mut acc = E::zero();
                    for (&gv, &xv) in grow.iter().zip(xrow) {
                        acc = acc + gv * xv;
                    }
                    dw[co * c_in + ci] = dw[co * c_in + ci] + acc;
                }
            }
            (dw, db)
        })
        .collect();

    let mut dw = Tensor::zeros(p.weight.dims());
    let mut db = vec![E::zero(); c_out];
    for (pdw, pdb) in parts {
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

pub fn fully_connected_t<E: Elem>(
    tape: &mut Tape<E>,
    x: Val,
    w: Val,
    b: Option<Val>,
) -> Result<Val> {
    let params = LinearParams::new(tape.value(w).clone(), b.map(|bv| tape.value(bv).clone()))?;
    let out = fully_connected(tape.value(x), &params)?;
    let mut parents = vec![x, w];
    if let Some(bv) = b {
        parents.push(bv);
    }
    let has_bias = b.is_some();
    Ok(tape.push(
        out,
        parents,
        Box::new(move |g, ps, _| {
            let p = LinearParams {
                weight: ps[1].clone(),
                bias: if has_bias { Some(ps[2].clone()) } else { None },
            };
            let (dx, dw, db) = fully_connected_backward(ps[0], &p, g).expect("linear backward");
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

    #[test]
    fn identity_weight_is_identity() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let x = Tensor::<f32>::rand_uniform([2, 5, 3, 3], -1.0, 1.0, &mut rng);
        let p = LinearParams::identity(5);
        assert_eq!(fully_connected(&x, &p).unwrap(), x);
    }

    #[test]
    fn affine_scalar() {
        let x = Tensor::<f32>::full([1, 1, 2, 2], 2.0);
        let p = LinearParams::new(
            Tensor::new([1, 1, 1, 1], vec![3.0]).unwrap(),
            Some(Tensor::vector(vec![1.0])),
        )
        .unwrap();
        let y = fully_connected(&x, &p).unwrap();
        assert!(y.data().iter().all(|&v| v == 7.0));
    }

    #[test]
    fn channel_mismatch_rejected() {
        let x = Tensor::<f32>::zeros([1, 4, 2, 2]);
        let p = LinearParams::<f32>::identity(5);
        assert!(fully_connected(&x, &p).is_err());
    }
}
