//! Construct the ablation grid: local-branch kinds, gate variations,
//! K removal, extra nonlinearity depth, activation pairings, and the stem
//! swap. Each variant is built and run forward at 64x64, and parameter
//! counts are compared against the full model.
//!
//!     cargo run --release --example ablations

use cloformer::accounting::count_params;
use cloformer::model::{build_ablation, build_model, model_forward, VariantSpec};
use cloformer::tensor::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn knobs(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
    pairs
        .iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

fn main() -> cloformer::error::Result<()> {
    let base = VariantSpec::preset("xxs64")?;
    let x = Tensor::<f32>::rand_uniform([1, 3, 64, 64], 0.0, 1.0, &mut ChaCha8Rng::seed_from_u64(7));

    let rows: Vec<(&str, Vec<(String, String)>)> = vec![
        ("full AttnConv", vec![]),
        ("shared weights only", knobs(&[("local_kind", "shared_only")])),
        ("context weights only", knobs(&[("local_kind", "context_only")])),
        ("window attention", knobs(&[("local_kind", "window_attn")])),
        (
            "window attn + shared",
            knobs(&[("local_kind", "window_attn_plus_shared")]),
        ),
        ("only global branch", knobs(&[("only_global", "true")])),
        ("only local branch", knobs(&[("only_local", "true")])),
        ("gate without DWconv", knobs(&[("use_dwconv", "false")])),
        ("gate without FC", knobs(&[("use_fc", "false")])),
        ("K removed from gate", knobs(&[("use_k", "false")])),
        ("2 extra FC+Swish pairs", knobs(&[("nonlin_depth", "2")])),
        ("sigmoid outer act", knobs(&[("outer_act", "sigmoid")])),
        ("gelu inner act", knobs(&[("inner_act", "gelu")])),
        ("patch-embed stem", knobs(&[("stem", "patch_embed")])),
        ("3x3 FFN kernel", knobs(&[("ffn_kernel", "3")])),
    ];

    let mut full_params = 0u64;
    for (label, kn) in &rows {
        let spec = build_ablation(&base, kn)?;
        let m = build_model::<f32>(&spec, &mut ChaCha8Rng::seed_from_u64(0))?;
        let params = count_params(&m).total_params;
        let (logits, _) = model_forward(&x, &m, false)?;
        println!("{label:<24} {params:>8} params  logits {:?}", logits.dims());
        if label == &"full AttnConv" {
            full_params = params;
        }
        // Table 6 direction: removing a path can only shed parameters.
        if label == &"only global branch" || label == &"shared weights only" {
            assert!(params < full_params, "{label} must be smaller than full");
        }
    }
    Ok(())
}
