//! Variant specifications, model assembly, and the end-to-end forward pass.
//!
//! A model is: conv stem (H/4 downsampling), four stages of alternating
//! (Clo block, ConvFFN) pairs where the last ConvFFN of stages 1-3 is the
//! cross-stage (stride-2, width-changing) form, then channel layer-norm,
//! global average pooling, and an FC classifier.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::attnconv::{AttnConvParams, GateOptions, LocalKind};
use crate::block::{
    clo_block_forward_t, convffn_forward_t, CloBlockParams, CloBlockVals, ConvFFNParams,
    ConvFFNVals, FfnVariant, NormParams, FFN_KERNEL, LAYER_NORM_EPS,
};
use crate::error::{cfg_err, Error, Result};
use crate::ops::{
    activation_t, conv2d_t, fully_connected_t, global_avg_pool_t, layer_norm_channels_t,
    space_to_depth_t, ActKind, Conv2dParams, LinearParams, PadMode,
};
use crate::param::Registry;
use crate::tape::{Tape, Val};
use crate::tensor::{Elem, Tensor};

pub const PATCH_EMBED_SIZE: usize = 4;

/// Stem construction kind: the five-conv early-convolution stem, or the
/// single 4x4 stride-4 patch embedding of the stem ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StemKind {
    ConvStem,
    PatchEmbed,
}

impl StemKind {
    pub fn parse(s: &str) -> Result<StemKind> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "conv" | "conv_stem" => StemKind::ConvStem,
            "patch_embed" | "patch" => StemKind::PatchEmbed,
            _ => return Err(cfg_err!("unknown stem kind '{s}'")),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            StemKind::ConvStem => "conv_stem",
            StemKind::PatchEmbed => "patch_embed",
        }
    }
}

/// One stage of the four-stage ladder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageSpec {
    pub blocks: usize,
    pub channels: usize,
    pub heads: usize,
    /// (local, global) channel split, local first.
    pub channel_split: (usize, usize),
    pub attnconv_kernel: usize,
    pub pool_stride: usize,
}

impl StageSpec {
    pub fn head_dim(&self) -> usize {
        self.channels / self.heads
    }
}

/// Every switchable deviation from the full architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationConfig {
    pub local_kind: LocalKind,
    pub gate: GateOptions,
    pub stem: StemKind,
    pub ffn_kernel: usize,
    /// Route all channels to the global branch (removes AttnConv entirely).
    pub only_global: bool,
    /// Route all channels to the local branch (removes pooled attention).
    pub only_local: bool,
}

impl Default for AblationConfig {
    fn default() -> Self {
        AblationConfig {
            local_kind: LocalKind::Full,
            gate: GateOptions::default(),
            stem: StemKind::ConvStem,
            ffn_kernel: FFN_KERNEL,
            only_global: false,
            only_local: false,
        }
    }
}

/// Complete build recipe for one model.
#[derive(Debug, Clone, PartialEq)]
pub struct VariantSpec {
    pub name: String,
    pub stages: [StageSpec; 4],
    pub stem_channels: usize,
    pub num_classes: usize,
    pub drop_path_max: f64,
    pub pad: PadMode,
    pub ablation: AblationConfig,
}

fn stages_from_tables(
    blocks: [usize; 4],
    channels: [usize; 4],
    heads: [usize; 4],
    splits: [(usize, usize); 4],
) -> [StageSpec; 4] {
    const KERNELS: [usize; 4] = [3, 5, 7, 9];
    const POOLS: [usize; 4] = [8, 4, 2, 1];
    std::array::from_fn(|i| StageSpec {
        blocks: blocks[i],
        channels: channels[i],
        heads: heads[i],
        channel_split: splits[i],
        attnconv_kernel: KERNELS[i],
        pool_stride: POOLS[i],
    })
}

impl VariantSpec {
    pub fn xxs() -> Self {
        VariantSpec {
            name: "XXS".into(),
            stages: stages_from_tables(
                [2, 2, 6, 2],
                [32, 64, 128, 256],
                [4, 4, 8, 16],
                [(24, 8), (32, 32), (64, 64), (64, 192)],
            ),
            stem_channels: 32,
            num_classes: 1000,
            drop_path_max: 0.0,
            pad: PadMode::Zeros,
            ablation: AblationConfig::default(),
        }
    }

    pub fn xs() -> Self {
        VariantSpec {
            name: "XS".into(),
            stages: stages_from_tables(
                [2, 2, 6, 2],
                [48, 96, 160, 352],
                [3, 6, 10, 22],
                [(32, 16), (48, 48), (80, 80), (112, 240)],
            ),
            stem_channels: 48,
            num_classes: 1000,
            drop_path_max: 0.06,
            pad: PadMode::Zeros,
            ablation: AblationConfig::default(),
        }
    }

    pub fn s() -> Self {
        VariantSpec {
            name: "S".into(),
            stages: stages_from_tables(
                [2, 2, 6, 2],
                [64, 128, 224, 448],
                [4, 8, 14, 28],
                [(48, 16), (64, 64), (112, 112), (112, 336)],
            ),
            stem_channels: 64,
            num_classes: 1000,
            drop_path_max: 0.06,
            pad: PadMode::Zeros,
            ablation: AblationConfig::default(),
        }
    }

    /// Desk-scale variant: XXS topology with halved channels, 8 classes,
    /// meant for 64x64 inputs. Used by the toy-training acceptance run.
    pub fn xxs64() -> Self {
        VariantSpec {
            name: "XXS-64".into(),
            stages: stages_from_tables(
                [2, 2, 6, 2],
                [16, 32, 64, 128],
                [4, 4, 8, 16],
                [(12, 4), (16, 16), (32, 32), (32, 96)],
            ),
            stem_channels: 16,
            num_classes: 8,
            drop_path_max: 0.0,
            pad: PadMode::Zeros,
            ablation: AblationConfig::default(),
        }
    }

    pub fn preset(name: &str) -> Result<VariantSpec> {
        Ok(match name.to_ascii_lowercase().as_str() {
            "xxs" => VariantSpec::xxs(),
            "xs" => VariantSpec::xs(),
            "s" => VariantSpec::s(),
            "xxs64" | "xxs-64" => VariantSpec::xxs64(),
            _ => return Err(cfg_err!("unknown variant '{name}' (xxs|xs|s|xxs64)")),
        })
    }

    /// The (local, global) split a stage actually uses after ablation.
    pub fn effective_split(&self, stage: usize) -> (usize, usize) {
        let s = &self.stages[stage];
        if self.ablation.only_global {
            (0, s.channels)
        } else if self.ablation.only_local {
            (s.channels, 0)
        } else {
            s.channel_split
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ablation.only_global && self.ablation.only_local {
            return Err(cfg_err!(
                "ablation.only_global and ablation.only_local are contradictory"
            ));
        }
        if self.stem_channels != self.stages[0].channels {
            return Err(cfg_err!(
                "stem_channels {} must equal stage1.channels {}",
                self.stem_channels,
                self.stages[0].channels
            ));
        }
        if self.num_classes < 2 {
            return Err(cfg_err!("num_classes must be >= 2, got {}", self.num_classes));
        }
        if !(0.0..1.0).contains(&self.drop_path_max) {
            return Err(cfg_err!(
                "drop_path_max must be in [0, 1), got {}",
                self.drop_path_max
            ));
        }
        if self.ablation.ffn_kernel % 2 == 0 {
            return Err(cfg_err!(
                "ablation.ffn_kernel must be odd, got {}",
                self.ablation.ffn_kernel
            ));
        }
        for (i, s) in self.stages.iter().enumerate() {
            let field = |name: &str| format!("stage{}.{name}", i + 1);
            if s.blocks == 0 {
                return Err(cfg_err!("{} must be >= 1", field("blocks")));
            }
            if s.heads == 0 || s.channels % s.heads != 0 {
                return Err(cfg_err!(
                    "{} ({}) must divide {} ({})",
                    field("heads"),
                    s.heads,
                    field("channels"),
                    s.channels
                ));
            }
            if s.channel_split.0 + s.channel_split.1 != s.channels {
                return Err(cfg_err!(
                    "{} ({}, {}) must sum to {} ({})",
                    field("channel_split"),
                    s.channel_split.0,
                    s.channel_split.1,
                    field("channels"),
                    s.channels
                ));
            }
            let hd = s.head_dim();
            if s.channel_split.0 % hd != 0 || s.channel_split.1 % hd != 0 {
                return Err(cfg_err!(
                    "{} entries must be multiples of head_dim {hd}",
                    field("channel_split")
                ));
            }
            if s.attnconv_kernel % 2 == 0 {
                return Err(cfg_err!(
                    "{} must be odd, got {}",
                    field("attnconv_kernel"),
                    s.attnconv_kernel
                ));
            }
            if s.pool_stride == 0 {
                return Err(cfg_err!("{} must be >= 1", field("pool_stride")));
            }
        }
        Ok(())
    }
}

/// Stem parameters: either the five-conv stem or a patch embedding.
#[derive(Debug, Clone)]
pub enum StemParams<E: Elem> {
    /// convs[0..4] are 3x3 (s2, s2, s1, s1), each with norm + GELU;
    /// convs[4] is the plain 1x1 projection.
    Conv {
        convs: Vec<Conv2dParams<E>>,
        norms: Vec<NormParams<E>>,
    },
    /// 4x4 stride-4 patch embed realized as space-to-depth + FC.
    Patch { fc: LinearParams<E> },
}

/// One stage's parameters: alternating blocks and FFNs of equal count.
#[derive(Debug, Clone)]
pub struct StageParams<E: Elem> {
    pub blocks: Vec<CloBlockParams<E>>,
    pub ffns: Vec<ConvFFNParams<E>>,
}

#[derive(Debug, Clone)]
pub struct Model<E: Elem> {
    pub spec: VariantSpec,
    pub stem: StemParams<E>,
    pub stages: Vec<StageParams<E>>,
    pub final_norm: NormParams<E>,
    pub classifier: LinearParams<E>,
}

fn trunc<E: Elem>(dims: [usize; 4], rng: &mut ChaCha8Rng) -> Tensor<E> {
    Tensor::trunc_normal(dims, 0.02, rng)
}

fn conv_init<E: Elem>(
    c_out: usize,
    c_in: usize,
    k: usize,
    stride: usize,
    pad: PadMode,
    rng: &mut ChaCha8Rng,
) -> Result<Conv2dParams<E>> {
    Conv2dParams::new(
        trunc([c_out, c_in, k, k], rng),
        Some(Tensor::vector(vec![E::zero(); c_out])),
        stride,
        pad,
        1,
    )
}

fn fc_init<E: Elem>(c_out: usize, c_in: usize, rng: &mut ChaCha8Rng) -> LinearParams<E> {
    LinearParams {
        weight: trunc([c_out, c_in, 1, 1], rng),
        bias: Some(Tensor::vector(vec![E::zero(); c_out])),
    }
}

/// Allocate and initialize every parameter of `spec`. Deterministic for a
/// given rng state.
pub fn build_model<E: Elem>(spec: &VariantSpec, rng: &mut ChaCha8Rng) -> Result<Model<E>> {
    spec.validate()?;
    let c1 = spec.stem_channels;
    let stem = match spec.ablation.stem {
        StemKind::ConvStem => {
            let half = c1 / 2;
            let convs = vec![
                conv_init(half, 3, 3, 2, spec.pad, rng)?,
                conv_init(c1, half, 3, 2, spec.pad, rng)?,
                conv_init(c1, c1, 3, 1, spec.pad, rng)?,
                conv_init(c1, c1, 3, 1, spec.pad, rng)?,
                conv_init(c1, c1, 1, 1, spec.pad, rng)?,
            ];
            let norms = vec![
                NormParams::init(half),
                NormParams::init(c1),
                NormParams::init(c1),
                NormParams::init(c1),
            ];
            StemParams::Conv { convs, norms }
        }
        StemKind::PatchEmbed => StemParams::Patch {
            fc: fc_init(c1, 3 * PATCH_EMBED_SIZE * PATCH_EMBED_SIZE, rng),
        },
    };

    let total_blocks: usize = spec.stages.iter().map(|s| s.blocks).sum();
    let dp_rate = |gidx: usize| {
        if total_blocks <= 1 {
            0.0
        } else {
            spec.drop_path_max * gidx as f64 / (total_blocks - 1) as f64
        }
    };

    let mut stages = Vec::with_capacity(4);
    let mut gidx = 0usize;
    for (i, s) in spec.stages.iter().enumerate() {
        let (c_l, c_g) = spec.effective_split(i);
        let mut blocks = Vec::with_capacity(s.blocks);
        let mut ffns = Vec::with_capacity(s.blocks);
        for j in 0..s.blocks {
            let rate = dp_rate(gidx);
            gidx += 1;
            let local = if c_l > 0 {
                let local_heads = c_l / s.head_dim();
                Some(AttnConvParams::init(
                    spec.ablation.local_kind,
                    c_l,
                    s.attnconv_kernel,
                    local_heads,
                    spec.ablation.gate,
                    spec.pad,
                    rng,
                )?)
            } else {
                None
            };
            blocks.push(CloBlockParams::init(
                s.channels,
                c_l,
                c_g,
                s.heads,
                s.pool_stride,
                local,
                rate,
                rng,
            )?);
            let cross = i < 3 && j + 1 == s.blocks;
            let (variant, c_next) = if cross {
                (FfnVariant::CrossStage, spec.stages[i + 1].channels)
            } else {
                (FfnVariant::InStage, s.channels)
            };
            ffns.push(ConvFFNParams::init(
                s.channels,
                c_next,
                variant,
                spec.ablation.ffn_kernel,
                rate,
                spec.pad,
                rng,
            )?);
        }
        stages.push(StageParams { blocks, ffns });
    }

    let c_last = spec.stages[3].channels;
    Ok(Model {
        spec: spec.clone(),
        stem,
        stages,
        final_norm: NormParams::init(c_last),
        classifier: fc_init(spec.num_classes, c_last, rng),
    })
}

impl<E: Elem> Model<E> {
    /// Walk every parameter tensor with its unique dotted name.
    pub fn visit(&self, f: &mut dyn FnMut(&str, &Tensor<E>)) {
        match &self.stem {
            StemParams::Conv { convs, norms } => {
                for (k, c) in convs.iter().enumerate() {
                    f(&format!("stem.conv{k}.weight"), &c.weight);
                    if let Some(b) = &c.bias {
                        f(&format!("stem.conv{k}.bias"), b);
                    }
                }
                for (k, n) in norms.iter().enumerate() {
                    n.visit(&format!("stem.norm{k}"), f);
                }
            }
            StemParams::Patch { fc } => {
                f("stem.patch_fc.weight", &fc.weight);
                if let Some(b) = &fc.bias {
                    f("stem.patch_fc.bias", b);
                }
            }
        }
        for (i, stage) in self.stages.iter().enumerate() {
            for (j, (b, ffn)) in stage.blocks.iter().zip(&stage.ffns).enumerate() {
                b.visit(&format!("stage{}.block{j}", i + 1), f);
                ffn.visit(&format!("stage{}.ffn{j}", i + 1), f);
            }
        }
        self.final_norm.visit("final_norm", f);
        f("classifier.weight", &self.classifier.weight);
        if let Some(b) = &self.classifier.bias {
            f("classifier.bias", b);
        }
    }

    pub fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<E>)) {
        match &mut self.stem {
            StemParams::Conv { convs, norms } => {
                for (k, c) in convs.iter_mut().enumerate() {
                    f(&format!("stem.conv{k}.weight"), &mut c.weight);
                    if let Some(b) = &mut c.bias {
                        f(&format!("stem.conv{k}.bias"), b);
                    }
                }
                for (k, n) in norms.iter_mut().enumerate() {
                    n.visit_mut(&format!("stem.norm{k}"), f);
                }
            }
            StemParams::Patch { fc } => {
                f("stem.patch_fc.weight", &mut fc.weight);
                if let Some(b) = &mut fc.bias {
                    f("stem.patch_fc.bias", b);
                }
            }
        }
        for (i, stage) in self.stages.iter_mut().enumerate() {
            for (j, (b, ffn)) in stage.blocks.iter_mut().zip(&mut stage.ffns).enumerate() {
                b.visit_mut(&format!("stage{}.block{j}", i + 1), f);
                ffn.visit_mut(&format!("stage{}.ffn{j}", i + 1), f);
            }
        }
        self.final_norm.visit_mut("final_norm", f);
        f("classifier.weight", &mut self.classifier.weight);
        if let Some(b) = &mut self.classifier.bias {
            f("classifier.bias", b);
        }
    }

    /// Number of learnable scalars.
    pub fn num_params(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, t| n += t.len());
        n
    }

    /// Record all parameters on a tape for one training step.
    pub fn record(&self, tape: &mut Tape<E>, reg: &mut Registry) -> ModelVals {
        let stem = match &self.stem {
            StemParams::Conv { convs, norms } => {
                let convs = convs
                    .iter()
                    .enumerate()
                    .map(|(k, c)| {
                        let w = reg.add(tape, format!("stem.conv{k}.weight"), &c.weight);
                        let b = c
                            .bias
                            .as_ref()
                            .map(|b| reg.add(tape, format!("stem.conv{k}.bias"), b));
                        (w, b)
                    })
                    .collect();
                let norms = norms
                    .iter()
                    .enumerate()
                    .map(|(k, n)| n.record(tape, reg, &format!("stem.norm{k}")))
                    .collect();
                StemVals::Conv { convs, norms }
            }
            StemParams::Patch { fc } => {
                let w = reg.add(tape, "stem.patch_fc.weight", &fc.weight);
                let b = fc
                    .bias
                    .as_ref()
                    .map(|b| reg.add(tape, "stem.patch_fc.bias", b));
                StemVals::Patch { fc: (w, b) }
            }
        };
        let stages = self
            .stages
            .iter()
            .enumerate()
            .map(|(i, stage)| {
                let mut blocks = Vec::with_capacity(stage.blocks.len());
                let mut ffns = Vec::with_capacity(stage.ffns.len());
                for (j, (b, f)) in stage.blocks.iter().zip(&stage.ffns).enumerate() {
                    blocks.push(b.record(tape, reg, &format!("stage{}.block{j}", i + 1)));
                    ffns.push(f.record(tape, reg, &format!("stage{}.ffn{j}", i + 1)));
                }
                StageVals { blocks, ffns }
            })
            .collect();
        let final_norm = self.final_norm.record(tape, reg, "final_norm");
        let cw = reg.add(tape, "classifier.weight", &self.classifier.weight);
        let cb = self
            .classifier
            .bias
            .as_ref()
            .map(|b| reg.add(tape, "classifier.bias", b));
        ModelVals {
            stem,
            stages,
            final_norm,
            classifier: (cw, cb),
        }
    }
}

pub enum StemVals {
    Conv {
        convs: Vec<(Val, Option<Val>)>,
        norms: Vec<(Val, Val)>,
    },
    Patch {
        fc: (Val, Option<Val>),
    },
}

pub struct StageVals {
    pub blocks: Vec<CloBlockVals>,
    pub ffns: Vec<ConvFFNVals>,
}

pub struct ModelVals {
    pub stem: StemVals,
    pub stages: Vec<StageVals>,
    pub final_norm: (Val, Val),
    pub classifier: (Val, Option<Val>),
}

fn check_input_extents<E: Elem>(x: &Tensor<E>) -> Result<()> {
    let [_, c, h, w] = x.dims();
    if c != 3 {
        return Err(Error::Dimension(format!(
            "model input must have 3 channels, got {c}"
        )));
    }
    if h % 32 != 0 || w % 32 != 0 {
        return Err(Error::Dimension(format!(
            "input extents must be divisible by 32, got {h}x{w}"
        )));
    }
    Ok(())
}

/// Stem forward on the tape: (N,3,H,W) -> (N,C1,H/4,W/4).
pub fn conv_stem_t<E: Elem>(
    tape: &mut Tape<E>,
    x: Val,
    m: &Model<E>,
    vals: &ModelVals,
) -> Result<Val> {
    check_input_extents(tape.value(x))?;
    match (&m.stem, &vals.stem) {
        (StemParams::Conv { convs, norms }, StemVals::Conv { convs: cv, norms: nv }) => {
            let mut t = x;
            for (k, (cp, (w, b))) in convs.iter().zip(cv).enumerate() {
                t = conv2d_t(tape, t, *w, *b, cp.stride, cp.pad, cp.groups)?;
                if k < norms.len() {
                    let (g, o) = nv[k];
                    t = layer_norm_channels_t(tape, t, g, o, LAYER_NORM_EPS)?;
                    t = activation_t(tape, ActKind::Gelu, t);
                }
            }
            Ok(t)
        }
        (StemParams::Patch { .. }, StemVals::Patch { fc: (w, b) }) => {
            let patched = space_to_depth_t(tape, x, PATCH_EMBED_SIZE)?;
            fully_connected_t(tape, patched, *w, *b)
        }
        _ => unreachable!("stem params/vals always built together"),
    }
}

/// Pure stem forward.
pub fn conv_stem<E: Elem>(x: &Tensor<E>, m: &Model<E>) -> Result<Tensor<E>> {
    let mut tape = Tape::no_grad();
    let mut reg = Registry::new();
    let vals = m.record(&mut tape, &mut reg);
    let xv = tape.leaf(x.clone());
    let out = conv_stem_t(&mut tape, xv, m, &vals)?;
    Ok(tape.value(out).clone())
}

/// Full model forward on the tape. When `features` is given, it receives
/// the four per-stage taps (each stage's final Clo-block output, which is
/// the tensor handed to the stage-transition ConvFFN).
#[allow(clippy::too_many_arguments)]
pub fn model_forward_t<E: Elem>(
    tape: &mut Tape<E>,
    x: Val,
    m: &Model<E>,
    vals: &ModelVals,
    rng: &mut ChaCha8Rng,
    training: bool,
    mut features: Option<&mut Vec<Val>>,
) -> Result<Val> {
    let mut t = conv_stem_t(tape, x, m, vals)?;
    if !tape.value(t).all_finite() {
        return Err(Error::Numeric("non-finite activations after stem".into()));
    }
    for (i, (stage, sv)) in m.stages.iter().zip(&vals.stages).enumerate() {
        for (j, (bp, bv)) in stage.blocks.iter().zip(&sv.blocks).enumerate() {
            t = clo_block_forward_t(tape, t, bp, bv, rng, training)?;
            let is_final_block = j + 1 == stage.blocks.len();
            if is_final_block {
                if let Some(feats) = features.as_deref_mut() {
                    feats.push(t);
                }
            }
            let (fp, fv) = (&stage.ffns[j], &sv.ffns[j]);
            t = convffn_forward_t(tape, t, fp, fv, rng, training)?;
        }
        if !tape.value(t).all_finite() {
            return Err(Error::Numeric(format!(
                "non-finite activations after stage{}",
                i + 1
            )));
        }
    }
    let (g, o) = vals.final_norm;
    let normed = layer_norm_channels_t(tape, t, g, o, LAYER_NORM_EPS)?;
    let pooled = global_avg_pool_t(tape, normed);
    let (cw, cb) = vals.classifier;
    fully_connected_t(tape, pooled, cw, cb)
}

/// Pure model forward: logits (N, num_classes) plus optional stage taps.
pub fn model_forward<E: Elem>(
    x: &Tensor<E>,
    m: &Model<E>,
    want_features: bool,
) -> Result<(Tensor<E>, Option<Vec<Tensor<E>>>)> {
    let mut tape = Tape::no_grad();
    let mut reg = Registry::new();
    let vals = m.record(&mut tape, &mut reg);
    let xv = tape.leaf(x.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut feats = Vec::new();
    let logits = model_forward_t(
        &mut tape,
        xv,
        m,
        &vals,
        &mut rng,
        false,
        want_features.then_some(&mut feats),
    )?;
    let feats = want_features.then(|| feats.iter().map(|&v| tape.value(v).clone()).collect());
    Ok((tape.value(logits).clone(), feats))
}

/// Apply `key=value` ablation knobs to a base spec. Contradictory knob
/// combinations are rejected with a configuration error.
pub fn build_ablation(base: &VariantSpec, knobs: &[(String, String)]) -> Result<VariantSpec> {
    let mut spec = base.clone();
    let parse_bool = |key: &str, v: &str| -> Result<bool> {
        match v.to_ascii_lowercase().as_str() {
            "true" | "1" | "on" => Ok(true),
            "false" | "0" | "off" => Ok(false),
            _ => Err(cfg_err!("knob '{key}' expects a boolean, got '{v}'")),
        }
    };
    let mut local_knob_set = false;
    for (key, value) in knobs {
        let ab = &mut spec.ablation;
        match key.as_str() {
            "local_kind" => {
                ab.local_kind = LocalKind::parse(value)?;
                local_knob_set = true;
            }
            "use_dwconv" => {
                ab.gate.use_dwconv = parse_bool(key, value)?;
                local_knob_set = true;
            }
            "use_fc" => {
                ab.gate.use_fc = parse_bool(key, value)?;
                local_knob_set = true;
            }
            "use_k" => {
                ab.gate.use_k = parse_bool(key, value)?;
                local_knob_set = true;
            }
            "nonlin_depth" => {
                ab.gate.nonlin_depth = value
                    .parse::<usize>()
                    .map_err(|_| cfg_err!("knob 'nonlin_depth' expects an integer, got '{value}'"))?;
                local_knob_set = true;
            }
            "inner_act" => {
                ab.gate.inner_act = ActKind::parse(value)?;
                local_knob_set = true;
            }
            "outer_act" => {
                ab.gate.outer_act = ActKind::parse(value)?;
                local_knob_set = true;
            }
            "stem" => ab.stem = StemKind::parse(value)?,
            "ffn_kernel" => {
                ab.ffn_kernel = value
                    .parse::<usize>()
                    .map_err(|_| cfg_err!("knob 'ffn_kernel' expects an integer, got '{value}'"))?;
            }
            "only_global" => ab.only_global = parse_bool(key, value)?,
            "only_local" => ab.only_local = parse_bool(key, value)?,
            _ => return Err(cfg_err!("unknown ablation knob '{key}'")),
        }
    }
    if spec.ablation.only_global && local_knob_set {
        return Err(cfg_err!(
            "only_global removes the local branch; local-branch knobs are contradictory"
        ));
    }
    spec.validate()?;
    Ok(spec)
}
