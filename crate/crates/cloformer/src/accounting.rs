//! Parameter and FLOP accounting.
//!
//! FLOPs use the multiply-accumulate convention: one MAC for conv / FC /
//! attention matmuls counts as one FLOP, pooling counts one add per window
//! element, and activations plus normalizations are excluded. Every FLOP is
//! attributed to a named parameter row so the breakdown names coincide
//! exactly with the checkpoint manifest; costs of parameter-free block ops
//! (pooled attention, K/V pooling, window attention) are folded into that
//! block's `qkv.weight` row, and global average pooling into
//! `classifier.weight`.

use crate::attnconv::{AttnConvParams, LocalKind};
use crate::block::{CloBlockParams, ConvFFNParams, FfnVariant};
use crate::error::{Error, Result};
use crate::model::{Model, StemParams, PATCH_EMBED_SIZE};
use crate::tensor::Elem;

/// Cost summary for one built model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CostReport {
    pub total_params: u64,
    pub total_flops: u64,
    /// (dotted parameter name, params, flops); sums equal the totals.
    pub breakdown: Vec<(String, u64, u64)>,
    pub input_size: (usize, usize),
}

impl CostReport {
    /// `name,params,flops` rows plus a trailing total row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("name,params,flops\n");
        for (name, p, f) in &self.breakdown {
            out.push_str(&format!("{name},{p},{f}\n"));
        }
        out.push_str(&format!("total,{},{}\n", self.total_params, self.total_flops));
        out
    }

    /// Aligned human-readable table.
    pub fn to_text(&self) -> String {
        let width = self
            .breakdown
            .iter()
            .map(|(n, _, _)| n.len())
            .max()
            .unwrap_or(4)
            .max(5);
        let mut out = format!(
            "{:<width$}  {:>12}  {:>14}\n",
            "name", "params", "flops"
        );
        for (name, p, f) in &self.breakdown {
            out.push_str(&format!("{name:<width$}  {p:>12}  {f:>14}\n"));
        }
        out.push_str(&format!(
            "{:<width$}  {:>12}  {:>14}\n",
            "total", self.total_params, self.total_flops
        ));
        out.push_str(&format!(
            "input {}x{}: {:.3}M params, {:.3}G flops\n",
            self.input_size.0,
            self.input_size.1,
            self.total_params as f64 / 1e6,
            self.total_flops as f64 / 1e9
        ));
        out
    }
}

struct Rows {
    rows: Vec<(String, u64, u64)>,
}

impl Rows {
    fn push(&mut self, name: String, params: u64, flops: u64) {
        self.rows.push((name, params, flops));
    }

    /// Add FLOPs to an already-emitted row (used for parameter-free ops).
    fn add_flops(&mut self, name: &str, flops: u64) {
        let row = self
            .rows
            .iter_mut()
            .rev()
            .find(|(n, _, _)| n == name)
            .expect("flops attributed to a row that was already emitted");
        row.2 += flops;
    }
}

/// Count every learnable scalar exactly once. Invariant to input size;
/// the report's flops fields are zero.
pub fn count_params<E: Elem>(m: &Model<E>) -> CostReport {
    let mut rows = Vec::new();
    m.visit(&mut |name, t| rows.push((name.to_string(), t.len() as u64, 0)));
    let total_params = rows.iter().map(|r| r.1).sum();
    CostReport {
        total_params,
        total_flops: 0,
        breakdown: rows,
        input_size: (0, 0),
    }
}

fn conv_rows(
    rows: &mut Rows,
    prefix: &str,
    c_out: usize,
    c_in_per_group: usize,
    k: usize,
    has_bias: bool,
    h_out: usize,
    w_out: usize,
) {
    let w_params = (c_out * c_in_per_group * k * k) as u64;
    let macs = (h_out * w_out * c_out * c_in_per_group * k * k) as u64;
    rows.push(format!("{prefix}.weight"), w_params, macs);
    if has_bias {
        rows.push(
            format!("{prefix}.bias"),
            c_out as u64,
            (h_out * w_out * c_out) as u64,
        );
    }
}

fn fc_rows(
    rows: &mut Rows,
    prefix: &str,
    c_out: usize,
    c_in: usize,
    has_bias: bool,
    h: usize,
    w: usize,
) {
    conv_rows(rows, prefix, c_out, c_in, 1, has_bias, h, w);
}

fn norm_rows(rows: &mut Rows, prefix: &str, c: usize) {
    rows.push(format!("{prefix}.gain"), c as u64, 0);
    rows.push(format!("{prefix}.offset"), c as u64, 0);
}

fn local_rows<E: Elem>(
    rows: &mut Rows,
    prefix: &str,
    p: &AttnConvParams<E>,
    c_l: usize,
    h: usize,
    w: usize,
) -> u64 {
    let k = p.kernel();
    let mut dw = |name: &str, conv: &Option<crate::ops::Conv2dParams<E>>| {
        if let Some(c) = conv {
            conv_rows(
                rows,
                &format!("{prefix}.{name}"),
                c_l,
                1,
                k,
                c.bias.is_some(),
                h,
                w,
            );
        }
    };
    dw("dw_q", &p.dw_q);
    dw("dw_k", &p.dw_k);
    dw("dw_v", &p.dw_v);
    for (i, fc) in p.fcs.iter().enumerate() {
        let name = crate::attnconv::fc_name(i, p.fcs.len());
        fc_rows(
            rows,
            &format!("{prefix}.{name}"),
            c_l,
            c_l,
            fc.bias.is_some(),
            h,
            w,
        );
    }
    // Window-attention kinds run attention over k x k token windows:
    // 2 MACs per (token, window token, channel), parameter-free.
    match p.kind {
        LocalKind::WindowAttn | LocalKind::WindowAttnPlusShared => {
            2 * (c_l * h * w * k * k) as u64
        }
        _ => 0,
    }
}

fn block_rows<E: Elem>(
    rows: &mut Rows,
    prefix: &str,
    b: &CloBlockParams<E>,
    h: usize,
    w: usize,
) -> Result<()> {
    let c = b.c_local + b.c_global;
    norm_rows(rows, &format!("{prefix}.norm1"), c);
    fc_rows(
        rows,
        &format!("{prefix}.qkv"),
        3 * c,
        c,
        b.qkv.bias.is_some(),
        h,
        w,
    );
    let mut extra = 0u64;
    if b.c_global > 0 {
        let s = b.pool_stride;
        if h % s != 0 || w % s != 0 {
            return Err(Error::Dimension(format!(
                "{prefix}: pool stride {s} does not divide extents {h}x{w}"
            )));
        }
        let t_kv = (h / s) * (w / s);
        // QK^T plus AV over all global heads; pooling K and V as adds.
        extra += 2 * (b.c_global * h * w * t_kv) as u64;
        if s > 1 {
            extra += 2 * (b.c_global * h * w) as u64;
        }
    }
    if let Some(local) = &b.local {
        extra += local_rows(rows, &format!("{prefix}.local"), local, b.c_local, h, w);
    }
    fc_rows(
        rows,
        &format!("{prefix}.fuse"),
        c,
        c,
        b.fuse.bias.is_some(),
        h,
        w,
    );
    rows.add_flops(&format!("{prefix}.qkv.weight"), extra);
    Ok(())
}

fn ffn_rows<E: Elem>(rows: &mut Rows, prefix: &str, f: &ConvFFNParams<E>, h: usize, w: usize) {
    let c_in = f.fc_in.c_in();
    let hidden = f.fc_in.c_out();
    let c_out = f.fc_out.c_out();
    let k = f.dw.kernel();
    let (ho, wo) = match f.variant {
        FfnVariant::InStage => (h, w),
        FfnVariant::CrossStage => (h / 2, w / 2),
    };
    norm_rows(rows, &format!("{prefix}.norm"), c_in);
    fc_rows(
        rows,
        &format!("{prefix}.fc_in"),
        hidden,
        c_in,
        f.fc_in.bias.is_some(),
        h,
        w,
    );
    conv_rows(
        rows,
        &format!("{prefix}.dw"),
        hidden,
        1,
        k,
        f.dw.bias.is_some(),
        ho,
        wo,
    );
    fc_rows(
        rows,
        &format!("{prefix}.fc_out"),
        c_out,
        hidden,
        f.fc_out.bias.is_some(),
        ho,
        wo,
    );
    if let Some((sdw, sfc)) = &f.skip {
        conv_rows(
            rows,
            &format!("{prefix}.skip_dw"),
            c_in,
            1,
            sdw.kernel(),
            sdw.bias.is_some(),
            ho,
            wo,
        );
        fc_rows(
            rows,
            &format!("{prefix}.skip_fc"),
            c_out,
            c_in,
            sfc.bias.is_some(),
            ho,
            wo,
        );
    }
}

/// Count parameters and FLOPs for a forward pass on one image of the given
/// size. Extents must be divisible by 32.
pub fn count_flops<E: Elem>(m: &Model<E>, input_hw: (usize, usize)) -> Result<CostReport> {
    let (h_in, w_in) = input_hw;
    if h_in % 32 != 0 || w_in % 32 != 0 {
        return Err(Error::Dimension(format!(
            "input extents must be divisible by 32, got {h_in}x{w_in}"
        )));
    }
    let mut rows = Rows { rows: Vec::new() };
    let (mut h, mut w) = (h_in, w_in);
    match &m.stem {
        StemParams::Conv { convs, .. } => {
            for (kidx, conv) in convs.iter().enumerate() {
                h /= conv.stride;
                w /= conv.stride;
                conv_rows(
                    &mut rows,
                    &format!("stem.conv{kidx}"),
                    conv.c_out(),
                    conv.c_in() / conv.groups,
                    conv.kernel(),
                    conv.bias.is_some(),
                    h,
                    w,
                );
            }
            // norms come after convs in visit order
            for (kidx, conv) in convs.iter().take(4).enumerate() {
                norm_rows(&mut rows, &format!("stem.norm{kidx}"), conv.c_out());
            }
        }
        StemParams::Patch { fc } => {
            h /= PATCH_EMBED_SIZE;
            w /= PATCH_EMBED_SIZE;
            fc_rows(
                &mut rows,
                "stem.patch_fc",
                fc.c_out(),
                fc.c_in(),
                fc.bias.is_some(),
                h,
                w,
            );
        }
    }
    debug_assert_eq!((h, w), (h_in / 4, w_in / 4));

    for (i, stage) in m.stages.iter().enumerate() {
        for (j, b) in stage.blocks.iter().enumerate() {
            block_rows(&mut rows, &format!("stage{}.block{j}", i + 1), b, h, w)?;
            let f = &stage.ffns[j];
            ffn_rows(&mut rows, &format!("stage{}.ffn{j}", i + 1), f, h, w);
            if f.variant == FfnVariant::CrossStage {
                h /= 2;
                w /= 2;
            }
        }
    }

    let c_last = m.spec.stages[3].channels;
    norm_rows(&mut rows, "final_norm", c_last);
    fc_rows(
        &mut rows,
        "classifier",
        m.spec.num_classes,
        c_last,
        m.classifier.bias.is_some(),
        1,
        1,
    );
    // Global average pooling: one add per pooled element.
    rows.add_flops("classifier.weight", (c_last * h * w) as u64);

    let breakdown = rows.rows;
    let total_params = breakdown.iter().map(|r| r.1).sum();
    let total_flops = breakdown.iter().map(|r| r.2).sum();
    Ok(CostReport {
        total_params,
        total_flops,
        breakdown,
        input_size: input_hw,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_model, VariantSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model(spec: &VariantSpec) -> Model<f32> {
        build_model(spec, &mut ChaCha8Rng::seed_from_u64(0)).unwrap()
    }

    #[test]
    fn breakdown_names_match_visited_params() {
        for spec in [VariantSpec::xxs(), VariantSpec::xxs64()] {
            let m = model(&spec);
            let report = count_flops(&m, (224, 224)).unwrap();
            let mut visited = Vec::new();
            m.visit(&mut |n, t| visited.push((n.to_string(), t.len() as u64)));
            let from_rows: Vec<(String, u64)> = report
                .breakdown
                .iter()
                .map(|(n, p, _)| (n.clone(), *p))
                .collect();
            assert_eq!(from_rows, visited);
            assert_eq!(report.total_params, m.num_params() as u64);
        }
    }

    #[test]
    fn param_report_matches_flop_report_totals() {
        let m = model(&VariantSpec::xxs64());
        let p = count_params(&m);
        let f = count_flops(&m, (64, 64)).unwrap();
        assert_eq!(p.total_params, f.total_params);
        let sum: u64 = f.breakdown.iter().map(|r| r.2).sum();
        assert_eq!(sum, f.total_flops);
    }

    #[test]
    fn conv_flops_scale_quadratically_with_extent() {
        // Doubling H and W multiplies conv/FC rows by exactly 4; attention
        // rows grow faster (token count is quadratic in extent).
        let m = model(&VariantSpec::xxs());
        let a = count_flops(&m, (224, 224)).unwrap();
        let b = count_flops(&m, (448, 448)).unwrap();
        for ((n1, _, f1), (_, _, f2)) in a.breakdown.iter().zip(&b.breakdown) {
            if n1.contains(".dw") || n1.contains("ffn") || n1.starts_with("stem.conv") {
                if *f1 > 0 {
                    assert_eq!(*f2, 4 * f1, "{n1}");
                }
            }
        }
        assert!(b.total_flops > 4 * a.total_flops);
    }

    #[test]
    fn tiny_fc_row_is_exact() {
        // a 1x1 FC with bias on a 1x1 map costs c_in*c_out MACs + c_out adds
        let mut rows = Rows { rows: Vec::new() };
        fc_rows(&mut rows, "t", 8, 4, true, 1, 1);
        assert_eq!(rows.rows[0], ("t.weight".into(), 32, 32));
        assert_eq!(rows.rows[1], ("t.bias".into(), 8, 8));
    }

    #[test]
    fn table_magnitudes() {
        // Printed for the acceptance suite; here we only pin coarse bounds
        // so regressions in the walk are caught early.
        let xxs = count_flops(&model(&VariantSpec::xxs()), (224, 224)).unwrap();
        assert!(xxs.total_params > 3_000_000 && xxs.total_params < 5_000_000);
        assert!(xxs.total_flops > 450_000_000 && xxs.total_flops < 750_000_000);
    }

    #[test]
    fn indivisible_input_rejected() {
        let m = model(&VariantSpec::xxs64());
        assert_eq!(
            count_flops(&m, (100, 100)).unwrap_err().category(),
            "dimension"
        );
    }

    #[test]
    fn csv_shape() {
        let m = model(&VariantSpec::xxs64());
        let r = count_flops(&m, (64, 64)).unwrap();
        let csv = r.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("name,params,flops"));
        assert!(csv.trim_end().ends_with(&format!(
            "total,{},{}",
            r.total_params, r.total_flops
        )));
    }
}
