//! AttnConv: convolution in attention's style (Eq. 3-4).
//!
//! The local branch aggregates V with a shared-weight depth-wise
//! convolution, then gates it elementwise with context-aware weights
//! generated from Q and K through a strongly nonlinear path:
//!
//!   V_s  = DWconv_v(V)
//!   gate = Tanh( FC2( Swish( FC1( DWconv_q(Q) ⊙ DWconv_k(K) ) ) ) / sqrt(d) )
//!   out  = gate ⊙ V_s
//!
//! `d` is the per-head channel count of the local branch. Every piece of
//! the gate path is switchable for the ablation studies: the K branch can
//! be dropped, extra (FC, Swish) pairs can be inserted before the final FC,
//! and both activations can be re-paired.

use rand_chacha::ChaCha8Rng;

use crate::error::{arg_err, dim_err, Result};
use crate::ops::{
    activation_t, conv2d_t, fully_connected, hadamard_t, scale_t, window_attention_t,
    ActKind, Conv2dParams, LinearParams, PadMode,
};
use crate::param::Registry;
use crate::tape::{Tape, Val};
use crate::tensor::{Elem, Tensor};

/// Local-branch construction kinds from the five-way ablation
/// (shared weights only, context gating only, window attention,
/// window attention over shared weights, and full AttnConv).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LocalKind {
    SharedOnly,
    ContextOnly,
    WindowAttn,
    WindowAttnPlusShared,
    Full,
}

impl LocalKind {
    pub fn parse(s: &str) -> Result<LocalKind> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "shared_only" => LocalKind::SharedOnly,
            "context_only" => LocalKind::ContextOnly,
            "window_attn" => LocalKind::WindowAttn,
            "window_attn_plus_shared" => LocalKind::WindowAttnPlusShared,
            "full" => LocalKind::Full,
            _ => return Err(arg_err!("unknown local branch kind '{s}'")),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            LocalKind::SharedOnly => "shared_only",
            LocalKind::ContextOnly => "context_only",
            LocalKind::WindowAttn => "window_attn",
            LocalKind::WindowAttnPlusShared => "window_attn_plus_shared",
            LocalKind::Full => "full",
        }
    }

    /// Does this kind carry the gate path (dw_q/dw_k/fc1/fc2)?
    pub fn has_gate(&self) -> bool {
        matches!(self, LocalKind::ContextOnly | LocalKind::Full)
    }

    /// Does this kind carry the shared-weight dw_v aggregation?
    pub fn has_shared(&self) -> bool {
        !matches!(self, LocalKind::ContextOnly | LocalKind::WindowAttn)
    }
}

/// Gate-path construction knobs, covering the paper's component progression
/// (raw Q⊙K, +Tanh, +DWconv, +FC, +Swish) and the appendix ablations
/// (K removal, extra nonlinearity depth, activation substitutions).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateOptions {
    /// Apply depth-wise convolutions to Q (and K) before the Hadamard product.
    pub use_dwconv: bool,
    /// Include the FC sandwich around the inner activation.
    pub use_fc: bool,
    /// Include the K branch of the Hadamard product.
    pub use_k: bool,
    /// Extra (FC, inner activation) pairs inserted before the final FC.
    pub nonlin_depth: usize,
    pub inner_act: ActKind,
    pub outer_act: ActKind,
}

impl Default for GateOptions {
    /// The full AttnConv gate: Tanh(FC2(Swish(FC1(DW(Q) ⊙ DW(K)))) / sqrt(d)).
    fn default() -> Self {
        GateOptions {
            use_dwconv: true,
            use_fc: true,
            use_k: true,
            nonlin_depth: 0,
            inner_act: ActKind::Swish(1.0),
            outer_act: ActKind::Tanh,
        }
    }
}

/// Parameters of one local branch over C_l channels.
#[derive(Debug, Clone)]
pub struct AttnConvParams<E: Elem> {
    pub kind: LocalKind,
    pub dw_q: Option<Conv2dParams<E>>,
    pub dw_k: Option<Conv2dParams<E>>,
    pub dw_v: Option<Conv2dParams<E>>,
    /// First FC of the gate, then `nonlin_depth` extra FCs, then the final FC.
    pub fcs: Vec<LinearParams<E>>,
    /// Gating scale divisor: per-head channel count of the local branch.
    pub d: usize,
    /// Local head count; used by the window-attention ablation kinds.
    pub heads: usize,
    pub opts: GateOptions,
}

impl<E: Elem> AttnConvParams<E> {
    /// Random initialization: truncated-normal weights (sigma 0.02),
    /// zero biases; `kernel` is the stage's AttnConv kernel size.
    pub fn init(
        kind: LocalKind,
        c_l: usize,
        kernel: usize,
        heads: usize,
        opts: GateOptions,
        pad: PadMode,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if heads == 0 || c_l % heads != 0 {
            return Err(arg_err!(
                "local heads {heads} must divide local channels {c_l}"
            ));
        }
        let dw = |rng: &mut ChaCha8Rng| -> Result<Conv2dParams<E>> {
            Conv2dParams::new(
                Tensor::trunc_normal([c_l, 1, kernel, kernel], 0.02, rng),
                Some(Tensor::vector(vec![E::zero(); c_l])),
                1,
                pad,
                c_l,
            )
        };
        let fc = |rng: &mut ChaCha8Rng| -> Result<LinearParams<E>> {
            LinearParams::new(
                Tensor::trunc_normal([c_l, c_l, 1, 1], 0.02, rng),
                Some(Tensor::vector(vec![E::zero(); c_l])),
            )
        };
        let gate = kind.has_gate();
        let windowed = matches!(kind, LocalKind::WindowAttn | LocalKind::WindowAttnPlusShared);
        let dw_q = if (gate && opts.use_dwconv) || windowed {
            Some(dw(rng)?)
        } else {
            None
        };
        let dw_k = if (gate && opts.use_dwconv && opts.use_k) || windowed {
            Some(dw(rng)?)
        } else {
            None
        };
        let dw_v = if kind.has_shared() { Some(dw(rng)?) } else { None };
        let mut fcs = Vec::new();
        if gate && opts.use_fc {
            for _ in 0..opts.nonlin_depth + 2 {
                fcs.push(fc(rng)?);
            }
        }
        Ok(AttnConvParams {
            kind,
            dw_q,
            dw_k,
            dw_v,
            fcs,
            d: c_l / heads,
            heads,
            opts,
        })
    }

    /// Identity configuration used by the closed-form reduction tests:
    /// delta depth-wise kernels, identity FCs, no biases.
    pub fn identity(c_l: usize, kernel: usize, heads: usize, pad: PadMode) -> Self {
        AttnConvParams {
            kind: LocalKind::Full,
            dw_q: Some(Conv2dParams::delta_depthwise(c_l, kernel, pad)),
            dw_k: Some(Conv2dParams::delta_depthwise(c_l, kernel, pad)),
            dw_v: Some(Conv2dParams::delta_depthwise(c_l, kernel, pad)),
            fcs: vec![LinearParams::identity(c_l), LinearParams::identity(c_l)],
            d: c_l / heads,
            heads,
            opts: GateOptions {
                inner_act: ActKind::Identity,
                ..GateOptions::default()
            },
        }
    }

    pub fn kernel(&self) -> usize {
        self.dw_v
            .as_ref()
            .or(self.dw_q.as_ref())
            .map(|c| c.kernel())
            .expect("local branch has at least one conv")
    }

    /// Visit every parameter tensor with its dotted name (prefix + leaf).
    pub fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Tensor<E>)) {
        let mut conv = |name: &str, c: &Option<Conv2dParams<E>>| {
            if let Some(c) = c {
                f(&format!("{prefix}.{name}.weight"), &c.weight);
                if let Some(b) = &c.bias {
                    f(&format!("{prefix}.{name}.bias"), b);
                }
            }
        };
        conv("dw_q", &self.dw_q);
        conv("dw_k", &self.dw_k);
        conv("dw_v", &self.dw_v);
        for (i, fc) in self.fcs.iter().enumerate() {
            let name = fc_name(i, self.fcs.len());
            f(&format!("{prefix}.{name}.weight"), &fc.weight);
            if let Some(b) = &fc.bias {
                f(&format!("{prefix}.{name}.bias"), b);
            }
        }
    }

    pub fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Tensor<E>)) {
        let mut conv = |name: &str, c: &mut Option<Conv2dParams<E>>| {
            if let Some(c) = c {
                f(&format!("{prefix}.{name}.weight"), &mut c.weight);
                if let Some(b) = &mut c.bias {
                    f(&format!("{prefix}.{name}.bias"), b);
                }
            }
        };
        conv("dw_q", &mut self.dw_q);
        conv("dw_k", &mut self.dw_k);
        conv("dw_v", &mut self.dw_v);
        let n = self.fcs.len();
        for (i, fc) in self.fcs.iter_mut().enumerate() {
            let name = fc_name(i, n);
            f(&format!("{prefix}.{name}.weight"), &mut fc.weight);
            if let Some(b) = &mut fc.bias {
                f(&format!("{prefix}.{name}.bias"), b);
            }
        }
    }

    /// Record all parameters as tape leaves, returning the handle bundle
    /// used by the `_t` forward functions.
    pub fn record(&self, tape: &mut Tape<E>, reg: &mut Registry, prefix: &str) -> AttnConvVals {
        let conv = |tape: &mut Tape<E>,
                        reg: &mut Registry,
                        name: &str,
                        c: &Option<Conv2dParams<E>>|
         -> Option<(Val, Option<Val>)> {
            c.as_ref().map(|c| {
                let w = reg.add(tape, format!("{prefix}.{name}.weight"), &c.weight);
                let b = c
                    .bias
                    .as_ref()
                    .map(|b| reg.add(tape, format!("{prefix}.{name}.bias"), b));
                (w, b)
            })
        };
        let dw_q = conv(tape, reg, "dw_q", &self.dw_q);
        let dw_k = conv(tape, reg, "dw_k", &self.dw_k);
        let dw_v = conv(tape, reg, "dw_v", &self.dw_v);
        let mut fcs = Vec::new();
        for (i, fc) in self.fcs.iter().enumerate() {
            let name = fc_name(i, self.fcs.len());
            let w = reg.add(tape, format!("{prefix}.{name}.weight"), &fc.weight);
            let b = fc
                .bias
                .as_ref()
                .map(|b| reg.add(tape, format!("{prefix}.{name}.bias"), b));
            fcs.push((w, b));
        }
        AttnConvVals {
            dw_q,
            dw_k,
            dw_v,
            fcs,
        }
    }
}

pub(crate) fn fc_name(i: usize, total: usize) -> String {
    if i == 0 {
        "fc1".to_string()
    } else if i + 1 == total {
        "fc2".to_string()
    } else {
        format!("fc1x{i}")
    }
}

/// Tape handles for one recorded AttnConv parameter set.
pub struct AttnConvVals {
    pub dw_q: Option<(Val, Option<Val>)>,
    pub dw_k: Option<(Val, Option<Val>)>,
    pub dw_v: Option<(Val, Option<Val>)>,
    pub fcs: Vec<(Val, Option<Val>)>,
}

fn dw_t<E: Elem>(
    tape: &mut Tape<E>,
    x: Val,
    handles: &(Val, Option<Val>),
    p: &Conv2dParams<E>,
) -> Result<Val> {
    conv2d_t(tape, x, handles.0, handles.1, p.stride, p.pad, p.groups)
}

/// Eq. 4 gate on the tape. Requires `p.kind.has_gate()`.
pub fn gen_context_weights_t<E: Elem>(
    tape: &mut Tape<E>,
    q: Val,
    k: Val,
    p: &AttnConvParams<E>,
    vals: &AttnConvVals,
) -> Result<Val> {
    if tape.value(q).dims() != tape.value(k).dims() {
        return Err(dim_err!(
            "q/k shape mismatch: {:?} vs {:?}",
            tape.value(q).dims(),
            tape.value(k).dims()
        ));
    }
    let q_l = match (&p.dw_q, &vals.dw_q) {
        (Some(dw_q), Some(h)) => dw_t(tape, q, h, dw_q)?,
        _ => q,
    };
    let mut t = if p.opts.use_k {
        let k_l = match (&p.dw_k, &vals.dw_k) {
            (Some(dw_k), Some(h)) => dw_t(tape, k, h, dw_k)?,
            _ => k,
        };
        hadamard_t(tape, q_l, k_l)?
    } else {
        q_l
    };
    // FC1 (+ inner act), nonlin_depth extra (FC, act) pairs, final FC.
    let n = vals.fcs.len();
    for (i, (w, b)) in vals.fcs.iter().enumerate() {
        t = crate::ops::fully_connected_t(tape, t, *w, *b)?;
        if i + 1 < n {
            t = activation_t(tape, p.opts.inner_act, t);
        }
    }
    let scaled = scale_t(tape, t, E::from_f64(1.0 / (p.d as f64).sqrt()));
    Ok(activation_t(tape, p.opts.outer_act, scaled))
}

/// Full local branch on the tape, dispatching on `p.kind`.
pub fn local_forward_t<E: Elem>(
    tape: &mut Tape<E>,
    q: Val,
    k: Val,
    v: Val,
    p: &AttnConvParams<E>,
    vals: &AttnConvVals,
) -> Result<Val> {
    let shapes = (
        tape.value(q).dims(),
        tape.value(k).dims(),
        tape.value(v).dims(),
    );
    if shapes.0 != shapes.1 || shapes.0 != shapes.2 {
        return Err(dim_err!(
            "q/k/v must share shape, got {:?}/{:?}/{:?}",
            shapes.0,
            shapes.1,
            shapes.2
        ));
    }
    let shared = |tape: &mut Tape<E>, x: Val| -> Result<Val> {
        let dw_v = p.dw_v.as_ref().ok_or_else(|| arg_err!("kind needs dw_v"))?;
        dw_t(tape, x, vals.dw_v.as_ref().unwrap(), dw_v)
    };
    match p.kind {
        LocalKind::SharedOnly => shared(tape, v),
        LocalKind::ContextOnly => {
            let gate = gen_context_weights_t(tape, q, k, p, vals)?;
            hadamard_t(tape, gate, v)
        }
        LocalKind::Full => {
            let v_s = shared(tape, v)?;
            let gate = gen_context_weights_t(tape, q, k, p, vals)?;
            hadamard_t(tape, gate, v_s)
        }
        LocalKind::WindowAttn | LocalKind::WindowAttnPlusShared => {
            let dw_q = p.dw_q.as_ref().ok_or_else(|| arg_err!("kind needs dw_q"))?;
            let dw_k = p.dw_k.as_ref().ok_or_else(|| arg_err!("kind needs dw_k"))?;
            let q_l = dw_t(tape, q, vals.dw_q.as_ref().unwrap(), dw_q)?;
            let k_l = dw_t(tape, k, vals.dw_k.as_ref().unwrap(), dw_k)?;
            let values = if p.kind == LocalKind::WindowAttnPlusShared {
                shared(tape, v)?
            } else {
                v
            };
            window_attention_t(tape, q_l, k_l, values, p.heads, p.kernel())
        }
    }
}

/// Pure Eq. 4 gate (no tape).
pub fn gen_context_weights<E: Elem>(
    q: &Tensor<E>,
    k: &Tensor<E>,
    p: &AttnConvParams<E>,
) -> Result<Tensor<E>> {
    let mut tape = Tape::no_grad();
    let mut reg = Registry::new();
    let vals = p.record(&mut tape, &mut reg, "local");
    let qv = tape.leaf(q.clone());
    let kv = tape.leaf(k.clone());
    let out = gen_context_weights_t(&mut tape, qv, kv, p, &vals)?;
    Ok(tape.value(out).clone())
}

/// Pure full AttnConv: gate(q, k) ⊙ dw_v(v).
pub fn attnconv_forward<E: Elem>(
    q: &Tensor<E>,
    k: &Tensor<E>,
    v: &Tensor<E>,
    p: &AttnConvParams<E>,
) -> Result<Tensor<E>> {
    let mut tape = Tape::no_grad();
    let mut reg = Registry::new();
    let vals = p.record(&mut tape, &mut reg, "local");
    let qv = tape.leaf(q.clone());
    let kv = tape.leaf(k.clone());
    let vv = tape.leaf(v.clone());
    let out = local_forward_t(&mut tape, qv, kv, vv, p, &vals)?;
    Ok(tape.value(out).clone())
}

/// Construct a randomly initialized local branch of the given ablation kind
/// with default activations (inner Swish, outer Tanh).
pub fn build_local_ablation<E: Elem>(
    kind: LocalKind,
    c_l: usize,
    kernel: usize,
    heads: usize,
    pad: PadMode,
    rng: &mut ChaCha8Rng,
) -> Result<AttnConvParams<E>> {
    AttnConvParams::init(kind, c_l, kernel, heads, GateOptions::default(), pad, rng)
}

/// Straight-line oracle for `gen_context_weights`: an independent loop-based
/// re-implementation that never touches the ops layer. Test-support code,
/// kept here so oracle tests and examples share it.
pub fn gen_context_weights_oracle<E: Elem>(
    q: &Tensor<E>,
    k: &Tensor<E>,
    p: &AttnConvParams<E>,
) -> Result<Tensor<E>> {
    let [n, c, h, w] = q.dims();
    let dw = |x: &Tensor<E>, cp: &Conv2dParams<E>| -> Tensor<E> {
        let kk = cp.kernel();
        let half = (kk / 2) as i64;
        let mut out = Tensor::zeros([n, c, h, w]);
        for ni in 0..n {
            for ci in 0..c {
                for y in 0..h as i64 {
                    for xw in 0..w as i64 {
                        let mut acc = cp.bias.as_ref().map(|b| b.data()[ci]).unwrap_or_else(E::zero);
                        for dy in -half..=half {
                            for dx in -half..=half {
                                let (sy, sx) = (y + dy, xw + dx);
                                let xv = match cp.pad {
                                    PadMode::Zeros => {
                                        if sy < 0 || sx < 0 || sy >= h as i64 || sx >= w as i64 {
                                            E::zero()
                                        } else {
                                            q_at(x, ni, ci, sy as usize, sx as usize)
                                        }
                                    }
                                    PadMode::Circular => q_at(
                                        x,
                                        ni,
                                        ci,
                                        sy.rem_euclid(h as i64) as usize,
                                        sx.rem_euclid(w as i64) as usize,
                                    ),
                                };
                                acc = acc
                                    + xv * cp.weight.at(
                                        ci,
                                        0,
                                        (dy + half) as usize,
                                        (dx + half) as usize,
                                    );
                            }
                        }
                        *out.at_mut(ni, ci, y as usize, xw as usize) = acc;
                    }
                }
            }
        }
        out
    };
    fn q_at<E: Elem>(t: &Tensor<E>, n: usize, c: usize, h: usize, w: usize) -> E {
        t.at(n, c, h, w)
    }
    let fc = |x: &Tensor<E>, lp: &LinearParams<E>| -> Tensor<E> {
        fully_connected(x, lp).expect("oracle fc")
    };

    let q_l = match &p.dw_q {
        Some(cp) => dw(q, cp),
        None => q.clone(),
    };
    let mut t = if p.opts.use_k {
        let k_l = match &p.dw_k {
            Some(cp) => dw(k, cp),
            None => k.clone(),
        };
        q_l.zip(&k_l, |a, b| a * b)?
    } else {
        q_l
    };
    let nfc = p.fcs.len();
    for (i, lp) in p.fcs.iter().enumerate() {
        t = fc(&t, lp);
        if i + 1 < nfc {
            t = crate::ops::activation(p.opts.inner_act, &t);
        }
    }
    let inv = E::from_f64(1.0 / (p.d as f64).sqrt());
    Ok(crate::ops::activation(p.opts.outer_act, &t.map(|v| v * inv)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn zero_inputs_give_zero_weights() {
        let mut r = rng(1);
        let mut p: AttnConvParams<f64> = AttnConvParams::init(
            LocalKind::Full,
            8,
            3,
            2,
            GateOptions::default(),
            PadMode::Zeros,
            &mut r,
        )
        .unwrap();
        // Zero every bias so the zero input propagates exactly.
        p.visit_mut("local", &mut |name, t| {
            if name.ends_with(".bias") {
                for v in t.data_mut() {
                    *v = 0.0;
                }
            }
        });
        let z = Tensor::<f64>::zeros([1, 8, 4, 4]);
        let w = gen_context_weights(&z, &z, &p).unwrap();
        assert!(w.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_v_annihilates_output() {
        let mut r = rng(2);
        let p: AttnConvParams<f64> = build_local_ablation(
            LocalKind::Full,
            8,
            5,
            2,
            PadMode::Zeros,
            &mut r,
        )
        .unwrap();
        let q = Tensor::rand_uniform([1, 8, 4, 4], -1.0, 1.0, &mut r);
        let k = Tensor::rand_uniform([1, 8, 4, 4], -1.0, 1.0, &mut r);
        let v = Tensor::zeros([1, 8, 4, 4]);
        let out = attnconv_forward(&q, &k, &v, &p).unwrap();
        assert!(out.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn identity_config_reduces_to_closed_form() {
        let mut r = rng(3);
        let p = AttnConvParams::<f64>::identity(4, 3, 2, PadMode::Zeros);
        let q = Tensor::rand_uniform([1, 4, 5, 5], -1.0, 1.0, &mut r);
        let k = Tensor::rand_uniform([1, 4, 5, 5], -1.0, 1.0, &mut r);
        let v = Tensor::rand_uniform([1, 4, 5, 5], -1.0, 1.0, &mut r);
        let out = attnconv_forward(&q, &k, &v, &p).unwrap();
        let d = 2.0f64; // c_l / heads = 4 / 2
        for i in 0..out.len() {
            let expect = ((q.data()[i] * k.data()[i]) / d.sqrt()).tanh() * v.data()[i];
            assert!((out.data()[i] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn gate_is_strictly_bounded() {
        let mut r = rng(4);
        let p: AttnConvParams<f32> = build_local_ablation(
            LocalKind::Full,
            8,
            3,
            2,
            PadMode::Zeros,
            &mut r,
        )
        .unwrap();
        for _ in 0..50 {
            let q = Tensor::rand_uniform([1, 8, 4, 4], -10.0, 10.0, &mut r);
            let k = Tensor::rand_uniform([1, 8, 4, 4], -10.0, 10.0, &mut r);
            let w = gen_context_weights(&q, &k, &p).unwrap();
            assert!(w.data().iter().all(|v| v.abs() < 1.0));
        }
    }

    #[test]
    fn all_kinds_share_output_shape() {
        let mut r = rng(5);
        let q = Tensor::<f32>::rand_uniform([1, 8, 8, 8], -1.0, 1.0, &mut r);
        let k = Tensor::<f32>::rand_uniform([1, 8, 8, 8], -1.0, 1.0, &mut r);
        let v = Tensor::<f32>::rand_uniform([1, 8, 8, 8], -1.0, 1.0, &mut r);
        for kind in [
            LocalKind::SharedOnly,
            LocalKind::ContextOnly,
            LocalKind::WindowAttn,
            LocalKind::WindowAttnPlusShared,
            LocalKind::Full,
        ] {
            let p = build_local_ablation(kind, 8, 3, 2, PadMode::Zeros, &mut r).unwrap();
            let out = attnconv_forward(&q, &k, &v, &p).unwrap();
            assert_eq!(out.dims(), q.dims(), "kind {}", kind.name());
        }
    }

    #[test]
    fn matches_straight_line_oracle() {
        let mut r = rng(6);
        let p: AttnConvParams<f64> = build_local_ablation(
            LocalKind::Full,
            8,
            3,
            2,
            PadMode::Zeros,
            &mut r,
        )
        .unwrap();
        let q = Tensor::rand_uniform([1, 8, 4, 4], -1.0, 1.0, &mut r);
        let k = Tensor::rand_uniform([1, 8, 4, 4], -1.0, 1.0, &mut r);
        let a = gen_context_weights(&q, &k, &p).unwrap();
        let b = gen_context_weights_oracle(&q, &k, &p).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn circular_mode_is_shift_equivariant() {
        let mut r = rng(7);
        let p: AttnConvParams<f64> = build_local_ablation(
            LocalKind::Full,
            8,
            3,
            2,
            PadMode::Circular,
            &mut r,
        )
        .unwrap();
        let q = Tensor::rand_uniform([1, 8, 6, 6], -1.0, 1.0, &mut r);
        let k = Tensor::rand_uniform([1, 8, 6, 6], -1.0, 1.0, &mut r);
        let v = Tensor::rand_uniform([1, 8, 6, 6], -1.0, 1.0, &mut r);
        let base = attnconv_forward(&q, &k, &v, &p).unwrap().circular_shift(2, 3);
        let shifted = attnconv_forward(
            &q.circular_shift(2, 3),
            &k.circular_shift(2, 3),
            &v.circular_shift(2, 3),
            &p,
        )
        .unwrap();
        for (a, b) in base.data().iter().zip(shifted.data()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn unknown_kind_parse_is_argument_error() {
        assert_eq!(
            LocalKind::parse("banana").unwrap_err().category(),
            "argument"
        );
    }
}
