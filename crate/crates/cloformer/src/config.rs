//! Plain-text key-value serialization for `VariantSpec`.
//!
//! Grammar: one `key = value` assignment per line, `#` to end of line is a
//! comment, blank lines ignored. Keys are dotted paths such as
//! `stage1.channels` or `ablation.local_kind`; `emit_config` writes every
//! field, and `parse_config` applies assignments on top of a base spec, so
//! partial override files are valid.

use crate::attnconv::LocalKind;
use crate::error::{cfg_err, Result};
use crate::model::{StemKind, VariantSpec};
use crate::ops::{ActKind, PadMode};

/// Serialize every field of a spec; `parse_config(emit_config(s), base)`
/// reproduces `s` for any base.
pub fn emit_config(spec: &VariantSpec) -> String {
    let mut out = String::new();
    out.push_str(&format!("name = {}\n", spec.name));
    out.push_str(&format!("num_classes = {}\n", spec.num_classes));
    out.push_str(&format!("stem_channels = {}\n", spec.stem_channels));
    out.push_str(&format!("drop_path_max = {}\n", spec.drop_path_max));
    out.push_str(&format!(
        "pad = {}\n",
        match spec.pad {
            PadMode::Zeros => "zeros",
            PadMode::Circular => "circular",
        }
    ));
    for (i, s) in spec.stages.iter().enumerate() {
        let p = format!("stage{}", i + 1);
        out.push_str(&format!("{p}.blocks = {}\n", s.blocks));
        out.push_str(&format!("{p}.channels = {}\n", s.channels));
        out.push_str(&format!("{p}.heads = {}\n", s.heads));
        out.push_str(&format!(
            "{p}.channel_split = {},{}\n",
            s.channel_split.0, s.channel_split.1
        ));
        out.push_str(&format!("{p}.attnconv_kernel = {}\n", s.attnconv_kernel));
        out.push_str(&format!("{p}.pool_stride = {}\n", s.pool_stride));
    }
    let a = &spec.ablation;
    out.push_str(&format!("ablation.local_kind = {}\n", a.local_kind.name()));
    out.push_str(&format!("ablation.use_dwconv = {}\n", a.gate.use_dwconv));
    out.push_str(&format!("ablation.use_fc = {}\n", a.gate.use_fc));
    out.push_str(&format!("ablation.use_k = {}\n", a.gate.use_k));
    out.push_str(&format!("ablation.nonlin_depth = {}\n", a.gate.nonlin_depth));
    out.push_str(&format!("ablation.inner_act = {}\n", a.gate.inner_act.name()));
    out.push_str(&format!("ablation.outer_act = {}\n", a.gate.outer_act.name()));
    out.push_str(&format!("ablation.stem = {}\n", a.stem.name()));
    out.push_str(&format!("ablation.ffn_kernel = {}\n", a.ffn_kernel));
    out.push_str(&format!("ablation.only_global = {}\n", a.only_global));
    out.push_str(&format!("ablation.only_local = {}\n", a.only_local));
    out
}

fn parse_usize(key: &str, v: &str, line: usize) -> Result<usize> {
    v.parse()
        .map_err(|_| cfg_err!("line {line}: '{key}' expects an integer, got '{v}'"))
}

fn parse_bool(key: &str, v: &str, line: usize) -> Result<bool> {
    match v {
        "true" | "1" | "on" => Ok(true),
        "false" | "0" | "off" => Ok(false),
        _ => Err(cfg_err!("line {line}: '{key}' expects a boolean, got '{v}'")),
    }
}

/// Apply assignments from `text` on top of `base` and validate the result.
pub fn parse_config(text: &str, base: &VariantSpec) -> Result<VariantSpec> {
    let mut spec = base.clone();
    for (lno, raw) in text.lines().enumerate() {
        let line = lno + 1;
        let stripped = raw.split('#').next().unwrap_or("").trim();
        if stripped.is_empty() {
            continue;
        }
        let (key, value) = stripped
            .split_once('=')
            .ok_or_else(|| cfg_err!("line {line}: expected 'key = value', got '{stripped}'"))?;
        let (key, value) = (key.trim(), value.trim());
        if let Some(rest) = key.strip_prefix("stage") {
            let (idx_s, field) = rest
                .split_once('.')
                .ok_or_else(|| cfg_err!("line {line}: malformed stage key '{key}'"))?;
            let idx: usize = idx_s
                .parse()
                .ok()
                .filter(|i| (1..=4).contains(i))
                .ok_or_else(|| cfg_err!("line {line}: stage index must be 1-4 in '{key}'"))?;
            let s = &mut spec.stages[idx - 1];
            match field {
                "blocks" => s.blocks = parse_usize(key, value, line)?,
                "channels" => s.channels = parse_usize(key, value, line)?,
                "heads" => s.heads = parse_usize(key, value, line)?,
                "channel_split" => {
                    let (l, g) = value
                        .split_once(',')
                        .ok_or_else(|| {
                            cfg_err!("line {line}: channel_split expects 'local,global'")
                        })?;
                    s.channel_split = (
                        parse_usize(key, l.trim(), line)?,
                        parse_usize(key, g.trim(), line)?,
                    );
                }
                "attnconv_kernel" => s.attnconv_kernel = parse_usize(key, value, line)?,
                "pool_stride" => s.pool_stride = parse_usize(key, value, line)?,
                _ => return Err(cfg_err!("line {line}: unknown stage field '{field}'")),
            }
            continue;
        }
        match key {
            "name" => spec.name = value.to_string(),
            "num_classes" => spec.num_classes = parse_usize(key, value, line)?,
            "stem_channels" => spec.stem_channels = parse_usize(key, value, line)?,
            "drop_path_max" => {
                spec.drop_path_max = value.parse().map_err(|_| {
                    cfg_err!("line {line}: 'drop_path_max' expects a number, got '{value}'")
                })?
            }
            "pad" => {
                spec.pad = match value {
                    "zeros" => PadMode::Zeros,
                    "circular" => PadMode::Circular,
                    _ => return Err(cfg_err!("line {line}: pad must be zeros|circular")),
                }
            }
            "ablation.local_kind" => spec.ablation.local_kind = LocalKind::parse(value)?,
            "ablation.use_dwconv" => spec.ablation.gate.use_dwconv = parse_bool(key, value, line)?,
            "ablation.use_fc" => spec.ablation.gate.use_fc = parse_bool(key, value, line)?,
            "ablation.use_k" => spec.ablation.gate.use_k = parse_bool(key, value, line)?,
            "ablation.nonlin_depth" => {
                spec.ablation.gate.nonlin_depth = parse_usize(key, value, line)?
            }
            "ablation.inner_act" => spec.ablation.gate.inner_act = ActKind::parse(value)?,
            "ablation.outer_act" => spec.ablation.gate.outer_act = ActKind::parse(value)?,
            "ablation.stem" => spec.ablation.stem = StemKind::parse(value)?,
            "ablation.ffn_kernel" => spec.ablation.ffn_kernel = parse_usize(key, value, line)?,
            "ablation.only_global" => spec.ablation.only_global = parse_bool(key, value, line)?,
            "ablation.only_local" => spec.ablation.only_local = parse_bool(key, value, line)?,
            _ => return Err(cfg_err!("line {line}: unknown key '{key}'")),
        }
    }
    spec.validate()?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_all_presets() {
        let other = VariantSpec::s();
        for name in ["xxs", "xs", "s", "xxs64"] {
            let spec = VariantSpec::preset(name).unwrap();
            let text = emit_config(&spec);
            // base differs from the target, so every field must be written
            let back = parse_config(&text, &other).unwrap();
            assert_eq!(back, spec);
        }
    }

    #[test]
    fn partial_override_and_comments() {
        let base = VariantSpec::xxs64();
        let text = "# toy override\nnum_classes = 4  # fewer classes\n\nstage1.blocks = 3\n";
        let spec = parse_config(text, &base).unwrap();
        assert_eq!(spec.num_classes, 4);
        assert_eq!(spec.stages[0].blocks, 3);
        assert_eq!(spec.stages[1], base.stages[1]);
    }

    #[test]
    fn errors_name_the_line() {
        let base = VariantSpec::xxs64();
        for (text, needle) in [
            ("bogus_key = 1", "unknown key"),
            ("stage9.blocks = 1", "stage index"),
            ("stage1.channels", "key = value"),
            ("stage1.heads = many", "integer"),
            ("ablation.use_k = maybe", "boolean"),
        ] {
            let err = parse_config(text, &base).unwrap_err();
            assert_eq!(err.category(), "configuration");
            assert!(err.to_string().contains(needle), "{err}");
            assert!(err.to_string().contains("line 1"), "{err}");
        }
    }

    #[test]
    fn invalid_result_fails_validation() {
        let base = VariantSpec::xxs64();
        let err = parse_config("stage1.channels = 20", &base).unwrap_err();
        assert_eq!(err.category(), "configuration");
    }
}
