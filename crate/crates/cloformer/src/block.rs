//! Clo block and ConvFFN: the two alternating units of every stage.
//!
//! A Clo block pre-norms its input, projects to QKV with one shared FC
//! (C -> 3C), splits the channels local-first, runs the AttnConv local
//! branch and the pooled-attention global branch, concatenates the two
//! outputs, fuses with an FC (C -> C), and wraps everything in a residual
//! with stochastic depth.
//!
//! ConvFFN is norm -> fc_in (C -> 4C) -> GELU -> 5x5 depth-wise conv ->
//! fc_out. The in-stage form keeps shape and adds a residual; the
//! cross-stage form strides the depth-wise conv by 2, maps fc_out to the
//! next stage's width, and replaces the residual with fc(dw_s2(x)).

use rand_chacha::ChaCha8Rng;

use crate::attnconv::{AttnConvParams, AttnConvVals};
use crate::error::{arg_err, dim_err, Result};
use crate::ops::{
    activation_t, add_t, avg_pool2d_t, concat_channels_t, conv2d_t, drop_path_t,
    fully_connected_t, layer_norm_channels_t, pooled_attention, pooled_attention_t,
    split_channels_t, ActKind, Conv2dParams, LinearParams, PadMode,
};
use crate::param::Registry;
use crate::tape::{Tape, Val};
use crate::tensor::{Elem, Tensor};

pub const LAYER_NORM_EPS: f64 = 1e-5;
pub const FFN_RATIO: usize = 4;
pub const FFN_KERNEL: usize = 5;

fn trunc<E: Elem>(dims: [usize; 4], rng: &mut ChaCha8Rng) -> Tensor<E> {
    Tensor::trunc_normal(dims, 0.02, rng)
}

fn fc_init<E: Elem>(c_out: usize, c_in: usize, rng: &mut ChaCha8Rng) -> LinearParams<E> {
    LinearParams {
        weight: trunc([c_out, c_in, 1, 1], rng),
        bias: Some(Tensor::vector(vec![E::zero(); c_out])),
    }
}

/// Affine channel layer-norm parameters.
#[derive(Debug, Clone)]
pub struct NormParams<E: Elem> {
    pub gain: Tensor<E>,
    pub offset: Tensor<E>,
}

impl<E: Elem> NormParams<E> {
    pub fn init(c: usize) -> Self {
        NormParams {
            gain: Tensor::vector(vec![E::one(); c]),
            offset: Tensor::vector(vec![E::zero(); c]),
        }
    }

    pub fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor<E>)) {
        f(&format!("{prefix}.gain"), &self.gain);
        f(&format!("{prefix}.offset"), &self.offset);
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor<E>)) {
        f(&format!("{prefix}.gain"), &mut self.gain);
        f(&format!("{prefix}.offset"), &mut self.offset);
    }

    pub fn record(&self, tape: &mut Tape<E>, reg: &mut Registry, prefix: &str) -> (Val, Val) {
        (
            reg.add(tape, format!("{prefix}.gain"), &self.gain),
            reg.add(tape, format!("{prefix}.offset"), &self.offset),
        )
    }
}

fn record_fc<E: Elem>(
    fc: &LinearParams<E>,
    tape: &mut Tape<E>,
    reg: &mut Registry,
    prefix: &str,
) -> (Val, Option<Val>) {
    let w = reg.add(tape, format!("{prefix}.weight"), &fc.weight);
    let b = fc
        .bias
        .as_ref()
        .map(|b| reg.add(tape, format!("{prefix}.bias"), b));
    (w, b)
}

fn record_conv<E: Elem>(
    c: &Conv2dParams<E>,
    tape: &mut Tape<E>,
    reg: &mut Registry,
    prefix: &str,
) -> (Val, Option<Val>) {
    let w = reg.add(tape, format!("{prefix}.weight"), &c.weight);
    let b = c
        .bias
        .as_ref()
        .map(|b| reg.add(tape, format!("{prefix}.bias"), b));
    (w, b)
}

fn visit_fc<E: Elem>(fc: &LinearParams<E>, prefix: &str, f: &mut dyn FnMut(&str, &Tensor<E>)) {
    f(&format!("{prefix}.weight"), &fc.weight);
    if let Some(b) = &fc.bias {
        f(&format!("{prefix}.bias"), b);
    }
}

fn visit_fc_mut<E: Elem>(
    fc: &mut LinearParams<E>,
    prefix: &str,
    f: &mut dyn FnMut(&str, &mut Tensor<E>),
) {
    f(&format!("{prefix}.weight"), &mut fc.weight);
    if let Some(b) = &mut fc.bias {
        f(&format!("{prefix}.bias"), b);
    }
}

fn visit_conv<E: Elem>(c: &Conv2dParams<E>, prefix: &str, f: &mut dyn FnMut(&str, &Tensor<E>)) {
    f(&format!("{prefix}.weight"), &c.weight);
    if let Some(b) = &c.bias {
        f(&format!("{prefix}.bias"), b);
    }
}

fn visit_conv_mut<E: Elem>(
    c: &mut Conv2dParams<E>,
    prefix: &str,
    f: &mut dyn FnMut(&str, &mut Tensor<E>),
) {
    f(&format!("{prefix}.weight"), &mut c.weight);
    if let Some(b) = &mut c.bias {
        f(&format!("{prefix}.bias"), b);
    }
}

/// Pure pooled-attention global branch: K/V are average-pooled by `s`,
/// then vanilla multi-head attention runs at full query resolution.
pub fn global_branch_forward<E: Elem>(
    q: &Tensor<E>,
    k: &Tensor<E>,
    v: &Tensor<E>,
    s: usize,
    h_g: usize,
) -> Result<Tensor<E>> {
    let k_p = crate::ops::avg_pool2d(k, s)?;
    let v_p = crate::ops::avg_pool2d(v, s)?;
    pooled_attention(q, &k_p, &v_p, h_g)
}

fn global_branch_t<E: Elem>(
    tape: &mut Tape<E>,
    q: Val,
    k: Val,
    v: Val,
    s: usize,
    h_g: usize,
) -> Result<Val> {
    let k_p = avg_pool2d_t(tape, k, s)?;
    let v_p = avg_pool2d_t(tape, v, s)?;
    pooled_attention_t(tape, q, k_p, v_p, h_g)
}

/// One Clo block over C channels.
#[derive(Debug, Clone)]
pub struct CloBlockParams<E: Elem> {
    pub norm: NormParams<E>,
    pub qkv: LinearParams<E>,
    /// None in the only-global ablation (c_local == 0).
    pub local: Option<AttnConvParams<E>>,
    pub fuse: LinearParams<E>,
    pub c_local: usize,
    pub c_global: usize,
    pub pool_stride: usize,
    pub global_heads: usize,
    pub drop_path_rate: f64,
}

impl<E: Elem> CloBlockParams<E> {
    #[allow(clippy::too_many_arguments)]
    pub fn init(
        c: usize,
        c_local: usize,
        c_global: usize,
        heads: usize,
        pool_stride: usize,
        local: Option<AttnConvParams<E>>,
        drop_path_rate: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if c_local + c_global != c {
            return Err(dim_err!(
                "channel split {c_local}+{c_global} != embedding width {c}"
            ));
        }
        if c % heads != 0 {
            return Err(arg_err!("heads {heads} must divide channels {c}"));
        }
        let head_dim = c / heads;
        if c_local % head_dim != 0 || c_global % head_dim != 0 {
            return Err(arg_err!(
                "split ({c_local},{c_global}) must be multiples of head_dim {head_dim}"
            ));
        }
        if (c_local > 0) != local.is_some() {
            return Err(arg_err!(
                "local branch params must be present exactly when c_local > 0 (c_local = {c_local})"
            ));
        }
        Ok(CloBlockParams {
            norm: NormParams::init(c),
            qkv: fc_init(3 * c, c, rng),
            local,
            fuse: fc_init(c, c, rng),
            c_local,
            c_global,
            pool_stride,
            global_heads: c_global / head_dim,
            drop_path_rate,
        })
    }

    pub fn c(&self) -> usize {
        self.c_local + self.c_global
    }

    pub fn use_local(&self) -> bool {
        self.c_local > 0
    }

    pub fn use_global(&self) -> bool {
        self.c_global > 0
    }

    pub fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor<E>)) {
        self.norm.visit(&format!("{prefix}.norm1"), f);
        visit_fc(&self.qkv, &format!("{prefix}.qkv"), f);
        if let Some(local) = &self.local {
            local.visit(&format!("{prefix}.local"), f);
        }
        visit_fc(&self.fuse, &format!("{prefix}.fuse"), f);
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor<E>)) {
        self.norm.visit_mut(&format!("{prefix}.norm1"), f);
        visit_fc_mut(&mut self.qkv, &format!("{prefix}.qkv"), f);
        if let Some(local) = &mut self.local {
            local.visit_mut(&format!("{prefix}.local"), f);
        }
        visit_fc_mut(&mut self.fuse, &format!("{prefix}.fuse"), f);
    }

    pub fn record(&self, tape: &mut Tape<E>, reg: &mut Registry, prefix: &str) -> CloBlockVals {
        let norm = self.norm.record(tape, reg, &format!("{prefix}.norm1"));
        let qkv = record_fc(&self.qkv, tape, reg, &format!("{prefix}.qkv"));
        let local = self
            .local
            .as_ref()
            .map(|l| l.record(tape, reg, &format!("{prefix}.local")));
        let fuse = record_fc(&self.fuse, tape, reg, &format!("{prefix}.fuse"));
        CloBlockVals {
            norm,
            qkv,
            local,
            fuse,
        }
    }
}

pub struct CloBlockVals {
    pub norm: (Val, Val),
    pub qkv: (Val, Option<Val>),
    pub local: Option<AttnConvVals>,
    pub fuse: (Val, Option<Val>),
}

/// Clo block forward on the tape:
/// y = x + drop_path(fuse(concat(local(...), global(...)))).
pub fn clo_block_forward_t<E: Elem>(
    tape: &mut Tape<E>,
    x: Val,
    p: &CloBlockParams<E>,
    vals: &CloBlockVals,
    rng: &mut ChaCha8Rng,
    training: bool,
) -> Result<Val> {
    let c = p.c();
    if tape.value(x).c() != c {
        return Err(dim_err!(
            "block expects {c} channels, input has {}",
            tape.value(x).c()
        ));
    }
    let normed = layer_norm_channels_t(tape, x, vals.norm.0, vals.norm.1, LAYER_NORM_EPS)?;
    let qkv = fully_connected_t(tape, normed, vals.qkv.0, vals.qkv.1)?;
    // Channel layout of the 3C projection: [Q | K | V], each split
    // local-first into (C_l, C_g); absent branches contribute no slice.
    let mut per_letter_sizes = Vec::new();
    if p.use_local() {
        per_letter_sizes.push(p.c_local);
    }
    if p.use_global() {
        per_letter_sizes.push(p.c_global);
    }
    let per_letter = per_letter_sizes.len();
    let mut sizes = Vec::new();
    for _ in 0..3 {
        sizes.extend_from_slice(&per_letter_sizes);
    }
    let parts = split_channels_t(tape, qkv, &sizes)?;
    let mut branch_outs = Vec::new();
    if p.use_local() {
        let (q_l, k_l, v_l) = (parts[0], parts[per_letter], parts[2 * per_letter]);
        let lp = p.local.as_ref().expect("local params present");
        let lv = vals.local.as_ref().expect("local vals recorded");
        branch_outs.push(crate::attnconv::local_forward_t(tape, q_l, k_l, v_l, lp, lv)?);
    }
    if p.use_global() {
        let off = usize::from(p.use_local());
        let (q_g, k_g, v_g) = (
            parts[off],
            parts[per_letter + off],
            parts[2 * per_letter + off],
        );
        branch_outs.push(global_branch_t(
            tape,
            q_g,
            k_g,
            v_g,
            p.pool_stride,
            p.global_heads,
        )?);
    }
    let mixed = if branch_outs.len() == 1 {
        branch_outs[0]
    } else {
        concat_channels_t(tape, &branch_outs)?
    };
    let fused = fully_connected_t(tape, mixed, vals.fuse.0, vals.fuse.1)?;
    let dropped = drop_path_t(tape, fused, p.drop_path_rate, rng, training)?;
    add_t(tape, x, dropped)
}

/// Pure Clo block forward (inference, no stochastic depth).
pub fn clo_block_forward<E: Elem>(x: &Tensor<E>, p: &CloBlockParams<E>) -> Result<Tensor<E>> {
    let mut tape = Tape::no_grad();
    let mut reg = Registry::new();
    let vals = p.record(&mut tape, &mut reg, "block");
    let xv = tape.leaf(x.clone());
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let out = clo_block_forward_t(&mut tape, xv, p, &vals, &mut rng, false)?;
    Ok(tape.value(out).clone())
}

use rand::SeedableRng;

/// Which ConvFFN form a stage position uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FfnVariant {
    InStage,
    CrossStage,
}

/// ConvFFN over C channels, expanding by `FFN_RATIO`.
#[derive(Debug, Clone)]
pub struct ConvFFNParams<E: Elem> {
    pub variant: FfnVariant,
    pub norm: NormParams<E>,
    pub fc_in: LinearParams<E>,
    pub dw: Conv2dParams<E>,
    pub fc_out: LinearParams<E>,
    /// Cross-stage skip path: depth-wise stride-2 conv then FC to C_next.
    pub skip: Option<(Conv2dParams<E>, LinearParams<E>)>,
    pub drop_path_rate: f64,
}

impl<E: Elem> ConvFFNParams<E> {
    #[allow(clippy::too_many_arguments)]
    pub fn init(
        c: usize,
        c_next: usize,
        variant: FfnVariant,
        kernel: usize,
        drop_path_rate: f64,
        pad: PadMode,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if variant == FfnVariant::InStage && c_next != c {
            return Err(arg_err!(
                "in-stage ConvFFN must preserve width, got {c} -> {c_next}"
            ));
        }
        let hidden = FFN_RATIO * c;
        let stride = match variant {
            FfnVariant::InStage => 1,
            FfnVariant::CrossStage => 2,
        };
        let dw = Conv2dParams::new(
            trunc([hidden, 1, kernel, kernel], rng),
            Some(Tensor::vector(vec![E::zero(); hidden])),
            stride,
            pad,
            hidden,
        )?;
        let skip = if variant == FfnVariant::CrossStage {
            let sdw = Conv2dParams::new(
                trunc([c, 1, kernel, kernel], rng),
                Some(Tensor::vector(vec![E::zero(); c])),
                2,
                pad,
                c,
            )?;
            Some((sdw, fc_init(c_next, c, rng)))
        } else {
            None
        };
        Ok(ConvFFNParams {
            variant,
            norm: NormParams::init(c),
            fc_in: fc_init(hidden, c, rng),
            dw,
            fc_out: fc_init(c_next, hidden, rng),
            skip,
            drop_path_rate,
        })
    }

    pub fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor<E>)) {
        self.norm.visit(&format!("{prefix}.norm"), f);
        visit_fc(&self.fc_in, &format!("{prefix}.fc_in"), f);
        visit_conv(&self.dw, &format!("{prefix}.dw"), f);
        visit_fc(&self.fc_out, &format!("{prefix}.fc_out"), f);
        if let Some((sdw, sfc)) = &self.skip {
            visit_conv(sdw, &format!("{prefix}.skip_dw"), f);
            visit_fc(sfc, &format!("{prefix}.skip_fc"), f);
        }
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor<E>)) {
        self.norm.visit_mut(&format!("{prefix}.norm"), f);
        visit_fc_mut(&mut self.fc_in, &format!("{prefix}.fc_in"), f);
        visit_conv_mut(&mut self.dw, &format!("{prefix}.dw"), f);
        visit_fc_mut(&mut self.fc_out, &format!("{prefix}.fc_out"), f);
        if let Some((sdw, sfc)) = &mut self.skip {
            visit_conv_mut(sdw, &format!("{prefix}.skip_dw"), f);
            visit_fc_mut(sfc, &format!("{prefix}.skip_fc"), f);
        }
    }

    pub fn record(&self, tape: &mut Tape<E>, reg: &mut Registry, prefix: &str) -> ConvFFNVals {
        ConvFFNVals {
            norm: self.norm.record(tape, reg, &format!("{prefix}.norm")),
            fc_in: record_fc(&self.fc_in, tape, reg, &format!("{prefix}.fc_in")),
            dw: record_conv(&self.dw, tape, reg, &format!("{prefix}.dw")),
            fc_out: record_fc(&self.fc_out, tape, reg, &format!("{prefix}.fc_out")),
            skip: self.skip.as_ref().map(|(sdw, sfc)| {
                (
                    record_conv(sdw, tape, reg, &format!("{prefix}.skip_dw")),
                    record_fc(sfc, tape, reg, &format!("{prefix}.skip_fc")),
                )
            }),
        }
    }
}

pub struct ConvFFNVals {
    pub norm: (Val, Val),
    pub fc_in: (Val, Option<Val>),
    pub dw: (Val, Option<Val>),
    pub fc_out: (Val, Option<Val>),
    pub skip: Option<((Val, Option<Val>), (Val, Option<Val>))>,
}

pub fn convffn_forward_t<E: Elem>(
    tape: &mut Tape<E>,
    x: Val,
    p: &ConvFFNParams<E>,
    vals: &ConvFFNVals,
    rng: &mut ChaCha8Rng,
    training: bool,
) -> Result<Val> {
    if p.variant == FfnVariant::CrossStage {
        let [_, _, h, w] = tape.value(x).dims();
        if h % 2 != 0 || w % 2 != 0 {
            return Err(dim_err!(
                "cross-stage ConvFFN needs even spatial extents, got {h}x{w}"
            ));
        }
    }
    let normed = layer_norm_channels_t(tape, x, vals.norm.0, vals.norm.1, LAYER_NORM_EPS)?;
    let hidden = fully_connected_t(tape, normed, vals.fc_in.0, vals.fc_in.1)?;
    let gelu = activation_t(tape, ActKind::Gelu, hidden);
    let conved = conv2d_t(
        tape,
        gelu,
        vals.dw.0,
        vals.dw.1,
        p.dw.stride,
        p.dw.pad,
        p.dw.groups,
    )?;
    let main = fully_connected_t(tape, conved, vals.fc_out.0, vals.fc_out.1)?;
    match p.variant {
        FfnVariant::InStage => {
            let dropped = drop_path_t(tape, main, p.drop_path_rate, rng, training)?;
            add_t(tape, x, dropped)
        }
        FfnVariant::CrossStage => {
            let ((sdw_w, sdw_b), (sfc_w, sfc_b)) = vals.skip.as_ref().unwrap();
            let (sdw, _) = p.skip.as_ref().unwrap();
            let pooled = conv2d_t(tape, x, *sdw_w, *sdw_b, sdw.stride, sdw.pad, sdw.groups)?;
            let skip = fully_connected_t(tape, pooled, *sfc_w, *sfc_b)?;
            add_t(tape, skip, main)
        }
    }
}

/// Pure ConvFFN forward (inference).
pub fn convffn_forward<E: Elem>(x: &Tensor<E>, p: &ConvFFNParams<E>) -> Result<Tensor<E>> {
    let mut tape = Tape::no_grad();
    let mut reg = Registry::new();
    let vals = p.record(&mut tape, &mut reg, "ffn");
    let xv = tape.leaf(x.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let out = convffn_forward_t(&mut tape, xv, p, &vals, &mut rng, false)?;
    Ok(tape.value(out).clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attnconv::{build_local_ablation, LocalKind};

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn xxs_stage1_block(r: &mut ChaCha8Rng) -> CloBlockParams<f64> {
        // XXS stage 1: C=32, split (24, 8), 4 heads -> head_dim 8, pool 8.
        let local = build_local_ablation(LocalKind::Full, 24, 3, 3, PadMode::Zeros, r).unwrap();
        CloBlockParams::init(32, 24, 8, 4, 8, Some(local), 0.0, r).unwrap()
    }

    #[test]
    fn global_branch_stride_one_is_vanilla_attention() {
        let mut r = rng(1);
        let q = Tensor::<f64>::rand_uniform([1, 8, 4, 4], -1.0, 1.0, &mut r);
        let k = Tensor::<f64>::rand_uniform([1, 8, 4, 4], -1.0, 1.0, &mut r);
        let v = Tensor::<f64>::rand_uniform([1, 8, 4, 4], -1.0, 1.0, &mut r);
        let a = global_branch_forward(&q, &k, &v, 1, 2).unwrap();
        let b = pooled_attention(&q, &k, &v, 2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn global_branch_full_extent_pooling_copies_pooled_token() {
        let mut r = rng(2);
        let q = Tensor::<f64>::rand_uniform([1, 4, 4, 4], -1.0, 1.0, &mut r);
        let k = Tensor::<f64>::rand_uniform([1, 4, 4, 4], -1.0, 1.0, &mut r);
        let v = Tensor::<f64>::rand_uniform([1, 4, 4, 4], -1.0, 1.0, &mut r);
        let out = global_branch_forward(&q, &k, &v, 4, 2).unwrap();
        let v_p = crate::ops::avg_pool2d(&v, 4).unwrap();
        for c in 0..4 {
            for y in 0..4 {
                for x in 0..4 {
                    assert!((out.at(0, c, y, x) - v_p.at(0, c, 0, 0)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn clo_block_preserves_shape() {
        let mut r = rng(3);
        let p = xxs_stage1_block(&mut r);
        let x = Tensor::<f64>::rand_uniform([2, 32, 8, 8], -1.0, 1.0, &mut r);
        let y = clo_block_forward(&x, &p).unwrap();
        assert_eq!(y.dims(), x.dims());
        assert!(y.all_finite());
    }

    #[test]
    fn zero_branch_weights_make_block_identity() {
        let mut r = rng(4);
        let mut p = xxs_stage1_block(&mut r);
        // Zero the fuse output projection: residual passes x through exactly.
        for v in p.fuse.weight.data_mut() {
            *v = 0.0;
        }
        if let Some(b) = &mut p.fuse.bias {
            for v in b.data_mut() {
                *v = 0.0;
            }
        }
        let x = Tensor::<f64>::rand_uniform([1, 32, 8, 8], -1.0, 1.0, &mut r);
        let y = clo_block_forward(&x, &p).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn in_stage_ffn_preserves_shape_and_zeroed_is_identity() {
        let mut r = rng(5);
        let mut p =
            ConvFFNParams::<f64>::init(16, 16, FfnVariant::InStage, FFN_KERNEL, 0.0, PadMode::Zeros, &mut r)
                .unwrap();
        let x = Tensor::<f64>::rand_uniform([1, 16, 6, 6], -1.0, 1.0, &mut r);
        let y = convffn_forward(&x, &p).unwrap();
        assert_eq!(y.dims(), x.dims());

        for v in p.fc_out.weight.data_mut() {
            *v = 0.0;
        }
        if let Some(b) = &mut p.fc_out.bias {
            for v in b.data_mut() {
                *v = 0.0;
            }
        }
        assert_eq!(convffn_forward(&x, &p).unwrap(), x);
    }

    #[test]
    fn cross_stage_ffn_halves_and_widens() {
        let mut r = rng(6);
        let p =
            ConvFFNParams::<f32>::init(32, 64, FfnVariant::CrossStage, FFN_KERNEL, 0.0, PadMode::Zeros, &mut r)
                .unwrap();
        let x = Tensor::<f32>::rand_uniform([2, 32, 8, 8], -1.0, 1.0, &mut r);
        let y = convffn_forward(&x, &p).unwrap();
        assert_eq!(y.dims(), [2, 64, 4, 4]);
    }

    #[test]
    fn cross_stage_odd_extent_rejected() {
        let mut r = rng(7);
        let p =
            ConvFFNParams::<f32>::init(8, 16, FfnVariant::CrossStage, FFN_KERNEL, 0.0, PadMode::Zeros, &mut r)
                .unwrap();
        let x = Tensor::<f32>::zeros([1, 8, 7, 8]);
        let err = convffn_forward(&x, &p).unwrap_err();
        assert_eq!(err.category(), "dimension");
    }

    #[test]
    fn bad_split_rejected_at_init() {
        let mut r = rng(8);
        let local = build_local_ablation::<f32>(LocalKind::Full, 24, 3, 3, PadMode::Zeros, &mut r)
            .unwrap();
        assert!(CloBlockParams::init(32, 24, 16, 4, 8, Some(local), 0.0, &mut r).is_err());
    }
}
