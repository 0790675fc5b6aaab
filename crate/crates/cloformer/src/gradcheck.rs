//! Finite-difference gradient verification for every differentiable
//! operation and for the composite block forwards, run in 64-bit mode.
//! Shared by the `gradcheck` CLI subcommand and the acceptance suite.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::attnconv::{local_forward_t, AttnConvParams, GateOptions, LocalKind};
use crate::block::{
    clo_block_forward, clo_block_forward_t, convffn_forward, convffn_forward_t, CloBlockParams,
    ConvFFNParams, FfnVariant,
};
use crate::error::Result;
use crate::ops::{
    activation, activation_t, avg_pool2d, avg_pool2d_t, concat_channels, concat_channels_t,
    conv2d, conv2d_t, dot, dot_t, dwconv2d, fully_connected, fully_connected_t, global_avg_pool,
    global_avg_pool_t, hadamard, hadamard_t, layer_norm_channels, layer_norm_channels_t,
    pooled_attention, pooled_attention_t, softmax_tokens, softmax_tokens_t, space_to_depth,
    space_to_depth_t, window_attention, window_attention_t, ActKind, Conv2dParams, PadMode,
};
use crate::param::Registry;
use crate::tape::{Tape, Val};
use crate::tensor::{finite_diff_grad, rel_error, Tensor};

pub const FD_EPS: f64 = 1e-4;
pub const TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: String,
    pub rel_err: f64,
    pub pass: bool,
}

type T = Tensor<f64>;

/// Compare taped and finite-difference gradients of `dot(op(inputs), w)`
/// with respect to `inputs[wrt]`.
fn check_case(
    name: &str,
    inputs: &[T],
    wrt: usize,
    pure: &dyn Fn(&[T]) -> Result<T>,
    taped: &dyn Fn(&mut Tape<f64>, &[Val]) -> Result<Val>,
) -> Result<CheckResult> {
    let out = pure(inputs)?;
    let w = Tensor::rand_uniform(out.dims(), -1.0, 1.0, &mut ChaCha8Rng::seed_from_u64(99));

    let mut tape = Tape::new();
    let leaves: Vec<Val> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out_v = taped(&mut tape, &leaves)?;
    let root = dot_t(&mut tape, out_v, &w)?;
    let grads = tape.backward(root)?;
    let analytic = grads
        .get(leaves[wrt])
        .cloned()
        .unwrap_or_else(|| Tensor::zeros(inputs[wrt].dims()));

    let numeric = finite_diff_grad(
        &|t: &T| {
            let mut ins = inputs.to_vec();
            ins[wrt] = t.clone();
            dot(&pure(&ins).expect("op evaluable near x"), &w).expect("dot dims agree")
        },
        &inputs[wrt],
        FD_EPS,
    )?;
    let rel_err = rel_error(&analytic, &numeric);
    Ok(CheckResult {
        name: name.to_string(),
        rel_err,
        pass: rel_err < TOLERANCE,
    })
}

fn rand(dims: [usize; 4], seed: u64) -> T {
    Tensor::rand_uniform(dims, -1.0, 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn op_cases() -> Vec<(&'static str, Result<CheckResult>)> {
    let mut cases = Vec::new();

    // conv2d: gradients w.r.t. input, weight, bias
    {
        let x = rand([2, 4, 6, 6], 1);
        let w = rand([5, 4, 3, 3], 2);
        let b = rand([1, 5, 1, 1], 3);
        let pure = |ins: &[T]| {
            let p = Conv2dParams::new(ins[1].clone(), Some(ins[2].clone()), 1, PadMode::Zeros, 1)?;
            conv2d(&ins[0], &p)
        };
        let taped = |t: &mut Tape<f64>, l: &[Val]| conv2d_t(t, l[0], l[1], Some(l[2]), 1, PadMode::Zeros, 1);
        for (sfx, wrt) in [("x", 0), ("w", 1), ("b", 2)] {
            cases.push((
                "conv2d",
                check_case(
                    &format!("conv2d/{sfx}"),
                    &[x.clone(), w.clone(), b.clone()],
                    wrt,
                    &pure,
                    &taped,
                ),
            ));
        }
    }

    // dwconv2d (grouped conv path): w.r.t. input and kernel
    {
        let x = rand([2, 6, 6, 6], 4);
        let w = rand([6, 1, 3, 3], 5);
        let pure = |ins: &[T]| {
            let p = Conv2dParams::new(ins[1].clone(), None, 1, PadMode::Circular, 6)?;
            dwconv2d(&ins[0], &p)
        };
        let taped =
            |t: &mut Tape<f64>, l: &[Val]| conv2d_t(t, l[0], l[1], None, 1, PadMode::Circular, 6);
        for (sfx, wrt) in [("x", 0), ("w", 1)] {
            cases.push((
                "dwconv2d",
                check_case(&format!("dwconv2d/{sfx}"), &[x.clone(), w.clone()], wrt, &pure, &taped),
            ));
        }
    }

    // avg_pool2d + global_avg_pool
    {
        let x = rand([2, 4, 8, 8], 6);
        cases.push((
            "avg_pool2d",
            check_case(
                "avg_pool2d/x",
                &[x.clone()],
                0,
                &|ins| avg_pool2d(&ins[0], 2),
                &|t, l| avg_pool2d_t(t, l[0], 2),
            ),
        ));
        cases.push((
            "global_avg_pool",
            check_case(
                "global_avg_pool/x",
                &[x],
                0,
                &|ins| Ok(global_avg_pool(&ins[0])),
                &|t, l| Ok(global_avg_pool_t(t, l[0])),
            ),
        ));
    }

    // fully_connected
    {
        let x = rand([2, 5, 4, 4], 7);
        let w = rand([7, 5, 1, 1], 8);
        let b = rand([1, 7, 1, 1], 9);
        let pure = |ins: &[T]| {
            let p = crate::ops::LinearParams {
                weight: ins[1].clone(),
                bias: Some(ins[2].clone()),
            };
            fully_connected(&ins[0], &p)
        };
        let taped = |t: &mut Tape<f64>, l: &[Val]| fully_connected_t(t, l[0], l[1], Some(l[2]));
        for (sfx, wrt) in [("x", 0), ("w", 1), ("b", 2)] {
            cases.push((
                "fully_connected",
                check_case(
                    &format!("fully_connected/{sfx}"),
                    &[x.clone(), w.clone(), b.clone()],
                    wrt,
                    &pure,
                    &taped,
                ),
            ));
        }
    }

    // layer_norm_channels
    {
        let x = rand([2, 6, 4, 4], 10);
        let g = rand([1, 6, 1, 1], 11);
        let o = rand([1, 6, 1, 1], 12);
        let pure = |ins: &[T]| layer_norm_channels(&ins[0], &ins[1], &ins[2], 1e-5);
        let taped = |t: &mut Tape<f64>, l: &[Val]| layer_norm_channels_t(t, l[0], l[1], l[2], 1e-5);
        for (sfx, wrt) in [("x", 0), ("gain", 1), ("offset", 2)] {
            cases.push((
                "layer_norm",
                check_case(
                    &format!("layer_norm/{sfx}"),
                    &[x.clone(), g.clone(), o.clone()],
                    wrt,
                    &pure,
                    &taped,
                ),
            ));
        }
    }

    // softmax_tokens
    {
        let x = rand([1, 2, 4, 8], 13);
        cases.push((
            "softmax_tokens",
            check_case(
                "softmax_tokens/x",
                &[x],
                0,
                &|ins| softmax_tokens(&ins[0]),
                &|t, l| softmax_tokens_t(t, l[0]),
            ),
        ));
    }

    // activations
    for (kind, seed) in [
        (ActKind::Gelu, 14),
        (ActKind::Swish(1.0), 15),
        (ActKind::Tanh, 16),
        (ActKind::Sigmoid, 17),
    ] {
        let x = rand([2, 3, 4, 4], seed);
        cases.push((
            "activation",
            check_case(
                &format!("activation/{}", kind.name()),
                &[x],
                0,
                &move |ins| Ok(activation(kind, &ins[0])),
                &move |t, l| Ok(activation_t(t, kind, l[0])),
            ),
        ));
    }

    // hadamard
    {
        let a = rand([2, 3, 4, 4], 18);
        let b = rand([2, 3, 4, 4], 19);
        for wrt in [0, 1] {
            cases.push((
                "hadamard",
                check_case(
                    &format!("hadamard/{}", if wrt == 0 { "a" } else { "b" }),
                    &[a.clone(), b.clone()],
                    wrt,
                    &|ins| hadamard(&ins[0], &ins[1]),
                    &|t, l| hadamard_t(t, l[0], l[1]),
                ),
            ));
        }
    }

    // concat + space_to_depth
    {
        let a = rand([2, 3, 4, 4], 20);
        let b = rand([2, 5, 4, 4], 21);
        for wrt in [0, 1] {
            cases.push((
                "concat_channels",
                check_case(
                    &format!("concat_channels/{}", if wrt == 0 { "a" } else { "b" }),
                    &[a.clone(), b.clone()],
                    wrt,
                    &|ins| concat_channels(&[&ins[0], &ins[1]]),
                    &|t, l| concat_channels_t(t, l),
                ),
            ));
        }
        let x = rand([2, 3, 8, 8], 22);
        cases.push((
            "space_to_depth",
            check_case(
                "space_to_depth/x",
                &[x],
                0,
                &|ins| space_to_depth(&ins[0], 4),
                &|t, l| space_to_depth_t(t, l[0], 4),
            ),
        ));
    }

    // pooled attention
    {
        let q = rand([2, 8, 4, 4], 23);
        let k = rand([2, 8, 2, 2], 24);
        let v = rand([2, 8, 2, 2], 25);
        let pure = |ins: &[T]| pooled_attention(&ins[0], &ins[1], &ins[2], 2);
        let taped = |t: &mut Tape<f64>, l: &[Val]| pooled_attention_t(t, l[0], l[1], l[2], 2);
        for (sfx, wrt) in [("q", 0), ("k", 1), ("v", 2)] {
            cases.push((
                "pooled_attention",
                check_case(
                    &format!("pooled_attention/{sfx}"),
                    &[q.clone(), k.clone(), v.clone()],
                    wrt,
                    &pure,
                    &taped,
                ),
            ));
        }
    }

    // window attention
    {
        let q = rand([1, 8, 6, 6], 26);
        let k = rand([1, 8, 6, 6], 27);
        let v = rand([1, 8, 6, 6], 28);
        let pure = |ins: &[T]| window_attention(&ins[0], &ins[1], &ins[2], 2, 3);
        let taped = |t: &mut Tape<f64>, l: &[Val]| window_attention_t(t, l[0], l[1], l[2], 2, 3);
        for (sfx, wrt) in [("q", 0), ("k", 1), ("v", 2)] {
            cases.push((
                "window_attention",
                check_case(
                    &format!("window_attention/{sfx}"),
                    &[q.clone(), k.clone(), v.clone()],
                    wrt,
                    &pure,
                    &taped,
                ),
            ));
        }
    }

    // full AttnConv local branch
    {
        let p = AttnConvParams::init(
            LocalKind::Full,
            8,
            3,
            2,
            GateOptions::default(),
            PadMode::Zeros,
            &mut ChaCha8Rng::seed_from_u64(50),
        )
        .expect("valid test attnconv");
        let q = rand([2, 8, 6, 6], 29);
        let k = rand([2, 8, 6, 6], 30);
        let v = rand([2, 8, 6, 6], 31);
        let p2 = p.clone();
        let pure = move |ins: &[T]| crate::attnconv::attnconv_forward(&ins[0], &ins[1], &ins[2], &p2);
        let p3 = p.clone();
        let taped = move |t: &mut Tape<f64>, l: &[Val]| {
            let mut reg = Registry::new();
            let vals = p3.record(t, &mut reg, "local");
            local_forward_t(t, l[0], l[1], l[2], &p3, &vals)
        };
        for (sfx, wrt) in [("q", 0), ("k", 1), ("v", 2)] {
            cases.push((
                "attnconv",
                check_case(
                    &format!("attnconv/{sfx}"),
                    &[q.clone(), k.clone(), v.clone()],
                    wrt,
                    &pure,
                    &taped,
                ),
            ));
        }
    }

    // full Clo block: w.r.t. input and the QKV weight
    {
        let p = CloBlockParams::init(
            16,
            8,
            8,
            4,
            2,
            Some(
                AttnConvParams::init(
                    LocalKind::Full,
                    8,
                    3,
                    2,
                    GateOptions::default(),
                    PadMode::Zeros,
                    &mut ChaCha8Rng::seed_from_u64(51),
                )
                .expect("valid attnconv"),
            ),
            0.0,
            &mut ChaCha8Rng::seed_from_u64(52),
        )
        .expect("valid block");
        let x = rand([2, 16, 8, 8], 32);
        let p2 = p.clone();
        cases.push((
            "clo_block",
            check_case(
                "clo_block/x",
                &[x.clone()],
                0,
                &move |ins| clo_block_forward(&ins[0], &p2),
                &{
                    let p = p.clone();
                    move |t: &mut Tape<f64>, l: &[Val]| {
                        let mut reg = Registry::new();
                        let vals = p.record(t, &mut reg, "block");
                        let mut rng = ChaCha8Rng::seed_from_u64(0);
                        clo_block_forward_t(t, l[0], &p, &vals, &mut rng, false)
                    }
                },
            ),
        ));
        let p3 = p.clone();
        cases.push((
            "clo_block",
            check_case(
                "clo_block/qkv.weight",
                &[x.clone(), p.qkv.weight.clone()],
                1,
                &move |ins| {
                    let mut pp = p3.clone();
                    pp.qkv.weight = ins[1].clone();
                    clo_block_forward(&ins[0], &pp)
                },
                &{
                    let p = p.clone();
                    move |t: &mut Tape<f64>, l: &[Val]| {
                        let mut reg = Registry::new();
                        let mut vals = p.record(t, &mut reg, "block");
                        vals.qkv.0 = l[1];
                        let mut rng = ChaCha8Rng::seed_from_u64(0);
                        clo_block_forward_t(t, l[0], &p, &vals, &mut rng, false)
                    }
                },
            ),
        ));
    }

    // ConvFFN, in-stage and cross-stage
    for (variant, label) in [(FfnVariant::InStage, "in_stage"), (FfnVariant::CrossStage, "cross_stage")] {
        let p = ConvFFNParams::init(
            8,
            if variant == FfnVariant::CrossStage { 12 } else { 8 },
            variant,
            3,
            0.0,
            PadMode::Zeros,
            &mut ChaCha8Rng::seed_from_u64(53),
        )
        .expect("valid ffn");
        let x = rand([2, 8, 8, 8], 33);
        let p2 = p.clone();
        cases.push((
            "convffn",
            check_case(
                &format!("convffn/{label}/x"),
                &[x],
                0,
                &move |ins| convffn_forward(&ins[0], &p2),
                &{
                    let p = p.clone();
                    move |t: &mut Tape<f64>, l: &[Val]| {
                        let mut reg = Registry::new();
                        let vals = p.record(t, &mut reg, "ffn");
                        let mut rng = ChaCha8Rng::seed_from_u64(0);
                        convffn_forward_t(t, l[0], &p, &vals, &mut rng, false)
                    }
                },
            ),
        ));
    }

    cases
}

/// Run every gradient check whose module name contains `filter` (all when
/// `None`). Each result carries the relative error and pass flag.
pub fn run_all(filter: Option<&str>) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    for (module, res) in op_cases() {
        if let Some(f) = filter {
            if !module.contains(f) {
                continue;
            }
        }
        out.push(res?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn filter_selects_subset() {
        let all = run_all(None).unwrap();
        let convs = run_all(Some("conv2d")).unwrap();
        assert!(convs.len() < all.len());
        assert!(!convs.is_empty());
    }
}
