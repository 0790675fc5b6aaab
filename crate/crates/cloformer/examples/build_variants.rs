//! Construct every preset variant, emit its key-value configuration, and
//! demonstrate a round trip through the config parser.
//!
//!     cargo run --release --example build_variants

use cloformer::config::{emit_config, parse_config};
use cloformer::model::{build_model, model_forward, VariantSpec};
use cloformer::tensor::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> cloformer::error::Result<()> {
    for name in ["xxs", "xs", "s"] {
        let spec = VariantSpec::preset(name)?;
        let splits: Vec<String> = spec
            .stages
            .iter()
            .map(|s| format!("[{},{}]", s.channel_split.0, s.channel_split.1))
            .collect();
        println!(
            "{name:>4}: blocks {:?}  channels {:?}  splits {}",
            spec.stages.iter().map(|s| s.blocks).collect::<Vec<_>>(),
            spec.stages.iter().map(|s| s.channels).collect::<Vec<_>>(),
            splits.join(" ")
        );
    }

    // The textual config round-trips exactly: parse(emit(spec)) == spec.
    let spec = VariantSpec::preset("xxs64")?;
    let text = emit_config(&spec);
    let reparsed = parse_config(&text, &VariantSpec::preset("s")?)?;
    assert_eq!(spec, reparsed);
    println!("\nxxs64 config round-trips through the parser:\n\n{text}");

    // A built model runs forward on any input with H and W divisible by 32.
    let m = build_model::<f32>(&spec, &mut ChaCha8Rng::seed_from_u64(0))?;
    let x = Tensor::rand_uniform([2, 3, 64, 64], 0.0, 1.0, &mut ChaCha8Rng::seed_from_u64(1));
    let (logits, feats) = model_forward(&x, &m, true)?;
    println!("logits: {:?}", logits.dims());
    for (i, f) in feats.unwrap().iter().enumerate() {
        println!("stage {} feature tap: {:?}", i + 1, f.dims());
    }
    Ok(())
}
