//! Shared oracle machinery for the integration suites: independent
//! straight-line (naive loop) re-implementations of the core numeric
//! operations, plus runners that compare the library against them over
//! randomized cases. Used by both `tests/oracles.rs` (one test per op) and
//! `tests/acceptance.rs` (the oracle-equivalence criterion).

#![allow(dead_code)]

use cloformer::attnconv::{
    build_local_ablation, gen_context_weights, gen_context_weights_oracle, LocalKind,
};
use cloformer::block::global_branch_forward;
use cloformer::ops::{
    avg_pool2d, conv2d, dwconv2d, fully_connected, softmax_tokens, Conv2dParams, LinearParams,
    PadMode,
};
use cloformer::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const CASES: usize = 100;
pub const TOL: f64 = 1e-5;

pub fn rand_t(dims: [usize; 4], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::rand_uniform(dims, -1.0, 1.0, rng)
}

pub fn assert_close(got: &Tensor<f64>, want: &Tensor<f64>, what: &str, case: usize) {
    assert_eq!(got.dims(), want.dims(), "{what} case {case}: shape mismatch");
    let worst = got
        .data()
        .iter()
        .zip(want.data())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    assert!(worst <= TOL, "{what} case {case}: abs err {worst:e} > {TOL:e}");
}

/// Naive convolution: direct five-nested-loop accumulation, no im2col, no
/// shared code with the library implementation.
pub fn conv_oracle(x: &Tensor<f64>, p: &Conv2dParams<f64>) -> Tensor<f64> {
    let [n, c_in, h, w] = x.dims();
    let [c_out, c_in_g, kh, kw] = p.weight.dims();
    let groups = p.groups;
    let stride = p.stride;
    let (h_out, w_out) = (h / stride, w / stride);
    let half_h = (kh / 2) as i64;
    let half_w = (kw / 2) as i64;
    let per_group_out = c_out / groups;
    let mut out = Tensor::zeros([n, c_out, h_out, w_out]);
    for ni in 0..n {
        for co in 0..c_out {
            let g = co / per_group_out;
            for oy in 0..h_out {
                for ox in 0..w_out {
                    let mut acc = p.bias.as_ref().map_or(0.0, |b| b.data()[co]);
                    for ci in 0..c_in_g {
                        let ic = g * c_in_g + ci;
                        assert!(ic < c_in);
                        for dy in 0..kh {
                            for dx in 0..kw {
                                let sy = (oy * stride) as i64 + dy as i64 - half_h;
                                let sx = (ox * stride) as i64 + dx as i64 - half_w;
                                let xv = match p.pad {
                                    PadMode::Zeros => {
                                        if sy < 0 || sx < 0 || sy >= h as i64 || sx >= w as i64 {
                                            0.0
                                        } else {
                                            x.at(ni, ic, sy as usize, sx as usize)
                                        }
                                    }
                                    PadMode::Circular => x.at(
                                        ni,
                                        ic,
                                        sy.rem_euclid(h as i64) as usize,
                                        sx.rem_euclid(w as i64) as usize,
                                    ),
                                };
                                acc += xv * p.weight.at(co, ci, dy, dx);
                            }
                        }
                    }
                    *out.at_mut(ni, co, oy, ox) = acc;
                }
            }
        }
    }
    out
}

pub fn run_conv2d_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for case in 0..CASES {
        let n = rng.gen_range(1..3);
        let groups = [1usize, 2][case % 2];
        let c_in = groups * rng.gen_range(1..4);
        let c_out = groups * rng.gen_range(1..4);
        let k = [1usize, 3, 5][case % 3];
        let stride = [1usize, 2][(case / 2) % 2];
        let h = stride * rng.gen_range(2..5);
        let w = stride * rng.gen_range(2..5);
        let pad = if case % 5 == 0 { PadMode::Circular } else { PadMode::Zeros };
        let x = rand_t([n, c_in, h, w], &mut rng);
        let p = Conv2dParams::new(
            rand_t([c_out, c_in / groups, k, k], &mut rng),
            Some(rand_t([1, c_out, 1, 1], &mut rng)),
            stride,
            pad,
            groups,
        )
        .unwrap();
        assert_close(&conv2d(&x, &p).unwrap(), &conv_oracle(&x, &p), "conv2d", case);
    }
}

pub fn run_dwconv2d_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for case in 0..CASES {
        let n = rng.gen_range(1..3);
        let c = rng.gen_range(1..6);
        let k = [3usize, 5, 7][case % 3];
        let h = rng.gen_range(3..8);
        let w = rng.gen_range(3..8);
        let pad = if case % 2 == 0 { PadMode::Circular } else { PadMode::Zeros };
        let x = rand_t([n, c, h, w], &mut rng);
        let p = Conv2dParams::new(
            rand_t([c, 1, k, k], &mut rng),
            Some(rand_t([1, c, 1, 1], &mut rng)),
            1,
            pad,
            c,
        )
        .unwrap();
        assert_close(&dwconv2d(&x, &p).unwrap(), &conv_oracle(&x, &p), "dwconv2d", case);
    }
}

pub fn run_avg_pool2d_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    for case in 0..CASES {
        let n = rng.gen_range(1..3);
        let c = rng.gen_range(1..5);
        let s = rng.gen_range(1..5);
        let h = s * rng.gen_range(1..5);
        let w = s * rng.gen_range(1..5);
        let x = rand_t([n, c, h, w], &mut rng);
        let got = avg_pool2d(&x, s).unwrap();
        let mut want = Tensor::zeros([n, c, h / s, w / s]);
        for ni in 0..n {
            for ci in 0..c {
                for oy in 0..h / s {
                    for ox in 0..w / s {
                        let mut acc = 0.0;
                        for dy in 0..s {
                            for dx in 0..s {
                                acc += x.at(ni, ci, oy * s + dy, ox * s + dx);
                            }
                        }
                        *want.at_mut(ni, ci, oy, ox) = acc / (s * s) as f64;
                    }
                }
            }
        }
        assert_close(&got, &want, "avg_pool2d", case);
    }
}

pub fn run_fully_connected_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    for case in 0..CASES {
        let n = rng.gen_range(1..3);
        let c_in = rng.gen_range(1..7);
        let c_out = rng.gen_range(1..7);
        let h = rng.gen_range(1..5);
        let w = rng.gen_range(1..5);
        let x = rand_t([n, c_in, h, w], &mut rng);
        let p = LinearParams {
            weight: rand_t([c_out, c_in, 1, 1], &mut rng),
            bias: Some(rand_t([1, c_out, 1, 1], &mut rng)),
        };
        let got = fully_connected(&x, &p).unwrap();
        let mut want = Tensor::zeros([n, c_out, h, w]);
        for ni in 0..n {
            for co in 0..c_out {
                for y in 0..h {
                    for xx in 0..w {
                        let mut acc = p.bias.as_ref().unwrap().data()[co];
                        for ci in 0..c_in {
                            acc += p.weight.at(co, ci, 0, 0) * x.at(ni, ci, y, xx);
                        }
                        *want.at_mut(ni, co, y, xx) = acc;
                    }
                }
            }
        }
        assert_close(&got, &want, "fully_connected", case);
    }
}

pub fn run_softmax_tokens_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    for case in 0..CASES {
        let n = rng.gen_range(1..3);
        let heads = rng.gen_range(1..4);
        let tq = rng.gen_range(1..6);
        let tk = rng.gen_range(1..6);
        // scores layout: (N, heads, T_q, T_kv), softmax over the last axis
        let x = rand_t([n, heads, tq, tk], &mut rng);
        let got = softmax_tokens(&x).unwrap();
        let mut want = Tensor::zeros([n, heads, tq, tk]);
        for ni in 0..n {
            for hi in 0..heads {
                for qi in 0..tq {
                    let row: Vec<f64> = (0..tk).map(|ki| x.at(ni, hi, qi, ki)).collect();
                    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let exps: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
                    let z: f64 = exps.iter().sum();
                    for ki in 0..tk {
                        *want.at_mut(ni, hi, qi, ki) = exps[ki] / z;
                    }
                }
            }
        }
        assert_close(&got, &want, "softmax_tokens", case);
    }
}

/// Naive pooled attention: average-pool K/V with plain loops, then dense
/// per-head softmax attention, all in straight-line code.
pub fn global_branch_oracle(
    q: &Tensor<f64>,
    k: &Tensor<f64>,
    v: &Tensor<f64>,
    s: usize,
    heads: usize,
) -> Tensor<f64> {
    let [n, c, h, w] = q.dims();
    let (hp, wp) = (h / s, w / s);
    let dh = c / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let pool = |t: &Tensor<f64>| -> Vec<f64> {
        let mut out = vec![0.0; n * c * hp * wp];
        for ni in 0..n {
            for ci in 0..c {
                for oy in 0..hp {
                    for ox in 0..wp {
                        let mut acc = 0.0;
                        for dy in 0..s {
                            for dx in 0..s {
                                acc += t.at(ni, ci, oy * s + dy, ox * s + dx);
                            }
                        }
                        out[((ni * c + ci) * hp + oy) * wp + ox] = acc / (s * s) as f64;
                    }
                }
            }
        }
        out
    };
    let kp = pool(k);
    let vp = pool(v);
    let tkv = hp * wp;
    let mut out = Tensor::zeros([n, c, h, w]);
    for ni in 0..n {
        for hi in 0..heads {
            for qy in 0..h {
                for qx in 0..w {
                    // scores over all pooled tokens for this query position
                    let mut scores = vec![0.0f64; tkv];
                    for t in 0..tkv {
                        let mut dot = 0.0;
                        for d in 0..dh {
                            let ci = hi * dh + d;
                            let kv = kp[((ni * c + ci) * hp + t / wp) * wp + t % wp];
                            dot += q.at(ni, ci, qy, qx) * kv;
                        }
                        scores[t] = dot * scale;
                    }
                    let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let exps: Vec<f64> = scores.iter().map(|v| (v - m).exp()).collect();
                    let z: f64 = exps.iter().sum();
                    for d in 0..dh {
                        let ci = hi * dh + d;
                        let mut acc = 0.0;
                        for t in 0..tkv {
                            acc += exps[t] / z * vp[((ni * c + ci) * hp + t / wp) * wp + t % wp];
                        }
                        *out.at_mut(ni, ci, qy, qx) = acc;
                    }
                }
            }
        }
    }
    out
}

pub fn run_global_branch_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    for case in 0..CASES {
        let n = rng.gen_range(1..3);
        let heads = rng.gen_range(1..4);
        let dh = rng.gen_range(1..4);
        let c = heads * dh;
        let s = [1usize, 2, 4][case % 3];
        let h = s * rng.gen_range(1..3);
        let w = s * rng.gen_range(1..3);
        let q = rand_t([n, c, h, w], &mut rng);
        let k = rand_t([n, c, h, w], &mut rng);
        let v = rand_t([n, c, h, w], &mut rng);
        let got = global_branch_forward(&q, &k, &v, s, heads).unwrap();
        let want = global_branch_oracle(&q, &k, &v, s, heads);
        assert_close(&got, &want, "global_branch_forward", case);
    }
}

pub fn run_context_weights_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    for case in 0..CASES {
        let heads = rng.gen_range(1..3);
        let dh = rng.gen_range(1..4);
        let c = heads * dh;
        let k = [3usize, 5][case % 2];
        let h = rng.gen_range(2..6);
        let w = rng.gen_range(2..6);
        let pad = if case % 2 == 0 { PadMode::Zeros } else { PadMode::Circular };
        let p = build_local_ablation::<f64>(LocalKind::Full, c, k, heads, pad, &mut rng).unwrap();
        let q = rand_t([1, c, h, w], &mut rng);
        let kk = rand_t([1, c, h, w], &mut rng);
        let got = gen_context_weights(&q, &kk, &p).unwrap();
        let want = gen_context_weights_oracle(&q, &kk, &p).unwrap();
        assert_close(&got, &want, "gen_context_weights", case);
    }
}
