//! Multi-head token attention primitives.
//!
//! `pooled_attention` is the global-branch core: queries at full resolution
//! attend to a (possibly pooled) key/value token set. `window_attention` is
//! the local-branch ablation that replaces context-weight gating with
//! non-overlapping window softmax attention.

use rayon::prelude::*;

use crate::error::{dim_err, Result};
use crate::tape::{Tape, Val};
use crate::tensor::{Elem, Tensor};

fn check_heads<E: Elem>(q: &Tensor<E>, k: &Tensor<E>, v: &Tensor<E>, heads: usize) -> Result<usize> {
    let [_, c, _, _] = q.dims();
    if heads == 0 || c % heads != 0 {
        return Err(dim_err!("head count {heads} must divide channels {c}"));
    }
    if k.dims()[1] != c || v.dims()[1] != c {
        return Err(dim_err!(
            "q/k/v channel mismatch: {c} vs {} vs {}",
            k.dims()[1],
            v.dims()[1]
        ));
    }
    if k.dims() != v.dims() || k.dims()[0] != q.dims()[0] {
        return Err(dim_err!(
            "k/v must share shape and batch with q: q {:?}, k {:?}, v {:?}",
            q.dims(),
            k.dims(),
            v.dims()
        ));
    }
    Ok(c / heads)
}

/// Flatten one head's spatial tokens: rows = tokens, cols = head channels.
fn gather_head<E: Elem>(t: &Tensor<E>, n: usize, head: usize, dh: usize) -> Vec<E> {
    let [_, _, h, w] = t.dims();
    let tokens = h * w;
    let mut out = vec![E::zero(); tokens * dh];
    for d in 0..dh {
        let c = head * dh + d;
        for y in 0..h {
            for x in 0..w {
                out[(y * w + x) * dh + d] = t.at(n, c, y, x);
            }
        }
    }
    out
}

fn scatter_head<E: Elem>(dst: &mut Tensor<E>, src: &[E], n: usize, head: usize, dh: usize) {
    let [_, _, h, w] = dst.dims();
    for d in 0..dh {
        let c = head * dh + d;
        for y in 0..h {
            for x in 0..w {
                *dst.at_mut(n, c, y, x) = src[(y * w + x) * dh + d];
            }
        }
    }
}

/// Row-wise stable softmax over `cols` columns, in place.
fn softmax_rows<E: Elem>(m: &mut [E], rows: usize, cols: usize) {
    for r in 0..rows {
        let row = &mut m[r * cols..(r + 1) * cols];
        let mut mx = row[0];
        for &v in row.iter() {
            if v > mx {
                mx = v;
            }
        }
        let mut denom = E::zero();
        for v in row.iter_mut() {
            *v = (*v - mx).exp();
            denom = denom + *v;
        }
        for v in row.iter_mut() {
            *v = *v / denom;
        }
    }
}

/// a (r x inner) * b (inner x c) -> out (r x c); transpose flags reinterpret
/// the operand's stored layout.
fn matmul<E: Elem>(
    a: &[E],
    b: &[E],
    r: usize,
    inner: usize,
    c: usize,
    a_t: bool,
    b_t: bool,
) -> Vec<E> {
    let mut out = vec![E::zero(); r * c];
    for i in 0..r {
        for kk in 0..inner {
            let av = if a_t { a[kk * r + i] } else { a[i * inner + kk] };
            for j in 0..c {
                let bv = if b_t { b[j * inner + kk] } else { b[kk * c + j] };
                out[i * c + j] = out[i * c + j] + av * bv;
            }
        }
    }
    out
}

/// Full multi-head attention: out = softmax(Q Kᵀ / sqrt(d_h)) V per head,
/// with Q tokens from q's spatial grid and K/V tokens from k's grid.
pub fn pooled_attention<E: Elem>(
    q: &Tensor<E>,
    k: &Tensor<E>,
    v: &Tensor<E>,
    heads: usize,
) -> Result<Tensor<E>> {
    let dh = check_heads(q, k, v, heads)?;
    let [n, _, hq, wq] = q.dims();
    let tq = hq * wq;
    let tkv = k.dims()[2] * k.dims()[3];
    let scale = E::from_f64(1.0 / (dh as f64).sqrt());

    let planes: Vec<((usize, usize), Vec<E>)> = (0..n * heads)
        .into_par_iter()
        .map(|idx| {
            let (ni, hi) = (idx / heads, idx % heads);
            let qm = gather_head(q, ni, hi, dh);
            let km = gather_head(k, ni, hi, dh);
            let vm = gather_head(v, ni, hi, dh);
            let mut s = matmul(&qm, &km, tq, dh, tkv, false, true);
            for val in s.iter_mut() {
                *val = *val * scale;
            }
            softmax_rows(&mut s, tq, tkv);
            let o = matmul(&s, &vm, tq, tkv, dh, false, false);
            ((ni, hi), o)
        })
        .collect();

    let mut out = Tensor::zeros(q.dims());
    for ((ni, hi), o) in planes {
        scatter_head(&mut out, &o, ni, hi, dh);
    }
    Ok(out)
}

/// Hand-derived attention backward:
///   dV = Pᵀ dO;  dP = dO Vᵀ;  dS = P ⊙ (dP − rowsum(dP ⊙ P));
///   dQ = dS K / sqrt(d_h);  dK = dSᵀ Q / sqrt(d_h).
pub fn pooled_attention_backward<E: Elem>(
    q: &Tensor<E>,
    k: &Tensor<E>,
    v: &Tensor<E>,
    heads: usize,
    gout: &Tensor<E>,
) -> Result<(Tensor<E>, Tensor<E>, Tensor<E>)> {
    let dh = check_heads(q, k, v, heads)?;
    let [n, _, hq, wq] = q.dims();
    let tq = hq * wq;
    let tkv = k.dims()[2] * k.dims()[3];
    let scale = E::from_f64(1.0 / (dh as f64).sqrt());

    let parts: Vec<((usize, usize), Vec<E>, Vec<E>, Vec<E>)> = (0..n * heads)
        .into_par_iter()
        .map(|idx| {
            let (ni, hi) = (idx / heads, idx % heads);
            let qm = gather_head(q, ni, hi, dh);
            let km = gather_head(k, ni, hi, dh);
            let vm = gather_head(v, ni, hi, dh);
            let go = gather_head(gout, ni, hi, dh);

            let mut p = matmul(&qm, &km, tq, dh, tkv, false, true);
            for val in p.iter_mut() {
                *val = *val * scale;
            }
            softmax_rows(&mut p, tq, tkv);

            let dv = matmul(&p, &go, tkv, tq, dh, true, false);
            let dp = matmul(&go, &vm, tq, dh, tkv, false, true);
            let mut ds = vec![E::zero(); tq * tkv];
            for r in 0..tq {
                let mut rowsum = E::zero();
                for c in 0..tkv {
                    rowsum = rowsum + dp[r * tkv + c] * p[r * tkv + c];
                }
                for c in 0..tkv {
                    ds[r * tkv + c] = p[r * tkv + c] * (dp[r * tkv + c] - rowsum) * scale;
                }
            }
            let dq = matmul(&ds, &km, tq, tkv, dh, false, false);
            let dk = matmul(&ds, &qm, tkv, tq, dh, true, false);
            ((ni, hi), dq, dk, dv)
        })
        .collect();

    let mut dq_t = Tensor::zeros(q.dims());
    let mut dk_t = Tensor::zeros(k.dims());
    let mut dv_t = Tensor::zeros(v.dims());
    for ((ni, hi), dq, dk, dv) in parts {
        scatter_head(&mut dq_t, &dq, ni, hi, dh);
        scatter_head(&mut dk_t, &dk, ni, hi, dh);
        scatter_head(&mut dv_t, &dv, ni, hi, dh);
    }
    Ok((dq_t, dk_t, dv_t))
}

pub fn pooled_attention_t<E: Elem>(
    tape: &mut Tape<E>,
    q: Val,
    k: Val,
    v: Val,
    heads: usize,
) -> Result<Val> {
    let out = pooled_attention(tape.value(q), tape.value(k), tape.value(v), heads)?;
    Ok(tape.push(
        out,
        vec![q, k, v],
        Box::new(move |g, ps, _| {
            let (dq, dk, dv) =
                pooled_attention_backward(ps[0], ps[1], ps[2], heads, g).expect("attn backward");
            vec![dq, dk, dv]
        }),
    ))
}

/// Token index lists of non-overlapping `win` x `win` windows over an H x W
/// grid. Edge windows are ragged when the extents do not divide.
fn window_token_sets(h: usize, w: usize, win: usize) -> Vec<Vec<usize>> {
    let mut sets = Vec::new();
    let mut y0 = 0;
    while y0 < h {
        let y1 = (y0 + win).min(h);
        let mut x0 = 0;
        while x0 < w {
            let x1 = (x0 + win).min(w);
            let mut toks = Vec::with_capacity((y1 - y0) * (x1 - x0));
            for y in y0..y1 {
                for x in x0..x1 {
                    toks.push(y * w + x);
                }
            }
            sets.push(toks);
            x0 = x1;
        }
        y0 = y1;
    }
    sets
}

/// Non-overlapping window multi-head attention, same shape in and out.
/// Window size 1 degenerates to the identity on v.
pub fn window_attention<E: Elem>(
    q: &Tensor<E>,
    k: &Tensor<E>,
    v: &Tensor<E>,
    heads: usize,
    win: usize,
) -> Result<Tensor<E>> {
    if win == 0 {
        return Err(crate::error::arg_err!("window size must be >= 1"));
    }
    if q.dims() != k.dims() || q.dims() != v.dims() {
        return Err(dim_err!(
            "window attention needs equal q/k/v shapes, got {:?}/{:?}/{:?}",
            q.dims(),
            k.dims(),
            v.dims()
        ));
    }
    let dh = check_heads(q, k, v, heads)?;
    let [n, _, h, w] = q.dims();
    let scale = E::from_f64(1.0 / (dh as f64).sqrt());
    let windows = window_token_sets(h, w, win);

    let mut out = Tensor::zeros(q.dims());
    for ni in 0..n {
        for hi in 0..heads {
            let qm = gather_head(q, ni, hi, dh);
            let km = gather_head(k, ni, hi, dh);
            let vm = gather_head(v, ni, hi, dh);
            let mut om = vec![E::zero(); qm.len()];
            for toks in &windows {
                let t = toks.len();
                let pick = |m: &[E]| -> Vec<E> {
                    let mut sub = Vec::with_capacity(t * dh);
                    for &tok in toks {
                        sub.extend_from_slice(&m[tok * dh..(tok + 1) * dh]);
                    }
                    sub
                };
                let (qs, ks, vs) = (pick(&qm), pick(&km), pick(&vm));
                let mut s = matmul(&qs, &ks, t, dh, t, false, true);
                for val in s.iter_mut() {
                    *val = *val * scale;
                }
                softmax_rows(&mut s, t, t);
                let o = matmul(&s, &vs, t, t, dh, false, false);
                for (i, &tok) in toks.iter().enumerate() {
                    om[tok * dh..(tok + 1) * dh].copy_from_slice(&o[i * dh..(i + 1) * dh]);
                }
            }
            scatter_head(&mut out, &om, ni, hi, dh);
        }
    }
    Ok(out)
}

/// Taped window attention; backward reuses the dense-attention derivation
/// window by window via finite composition of the same formulas.
pub fn window_attention_t<E: Elem>(
    tape: &mut Tape<E>,
    q: Val,
    k: Val,
    v: Val,
    heads: usize,
    win: usize,
) -> Result<Val> {
    let out = window_attention(tape.value(q), tape.value(k), tape.value(v), heads, win)?;
    Ok(tape.push(
        out,
        vec![q, k, v],
        Box::new(move |g, ps, _| {
            window_attention_backward(ps[0], ps[1], ps[2], heads, win, g)
                .expect("window attn backward")
        }),
    ))
}

fn window_attention_backward<E: Elem>(
    q: &Tensor<E>,
    k: &Tensor<E>,
    v: &Tensor<E>,
    heads: usize,
    win: usize,
    gout: &Tensor<E>,
) -> Result<Vec<Tensor<E>>> {
    let dh = check_heads(q, k, v, heads)?;
    let [n, _, h, w] = q.dims();
    let scale = E::from_f64(1.0 / (dh as f64).sqrt());
    let windows = window_token_sets(h, w, win);

    let mut dq_t = Tensor::zeros(q.dims());
    let mut dk_t = Tensor::zeros(k.dims());
    let mut dv_t = Tensor::zeros(v.dims());
    for ni in 0..n {
        for hi in 0..heads {
            let qm = gather_head(q, ni, hi, dh);
            let km = gather_head(k, ni, hi, dh);
            let vm = gather_head(v, ni, hi, dh);
            let go = gather_head(gout, ni, hi, dh);
            let mut dqm = vec![E::zero(); qm.len()];
            let mut dkm = vec![E::zero(); km.len()];
            let mut dvm = vec![E::zero(); vm.len()];
            for toks in &windows {
                let t = toks.len();
                let pick = |m: &[E]| -> Vec<E> {
                    let mut sub = Vec::with_capacity(t * dh);
                    for &tok in toks {
                        sub.extend_from_slice(&m[tok * dh..(tok + 1) * dh]);
                    }
                    sub
                };
                let (qs, ks, vs, gs) = (pick(&qm), pick(&km), pick(&vm), pick(&go));
                let mut p = matmul(&qs, &ks, t, dh, t, false, true);
                for val in p.iter_mut() {
                    *val = *val * scale;
                }
                softmax_rows(&mut p, t, t);
                let dv = matmul(&p, &gs, t, t, dh, true, false);
                let dp = matmul(&gs, &vs, t, dh, t, false, true);
                let mut ds = vec![E::zero(); t * t];
                for r in 0..t {
                    let mut rowsum = E::zero();
                    for c in 0..t {
                        rowsum = rowsum + dp[r * t + c] * p[r * t + c];
                    }
                    for c in 0..t {
                        ds[r * t + c] = p[r * t + c] * (dp[r * t + c] - rowsum) * scale;
                    }
                }
                let dq = matmul(&ds, &ks, t, t, dh, false, false);
                let dk = matmul(&ds, &qs, t, t, dh, true, false);
                for (i, &tok) in toks.iter().enumerate() {
                    for d in 0..dh {
                        dqm[tok * dh + d] = dqm[tok * dh + d] + dq[i * dh + d];
                        dkm[tok * dh + d] = dkm[tok * dh + d] + dk[i * dh + d];
                        dvm[tok * dh + d] = dvm[tok * dh + d] + dv[i * dh + d];
                    }
                }
            }
            scatter_head(&mut dq_t, &dqm, ni, hi, dh);
            scatter_head(&mut dk_t, &dkm, ni, hi, dh);
            scatter_head(&mut dv_t, &dvm, ni, hi, dh);
        }
    }
    Ok(vec![dq_t, dk_t, dv_t])
}
