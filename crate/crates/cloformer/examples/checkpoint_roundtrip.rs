//! Checkpoint persistence: save -> load -> save is byte-identical, the
//! embedded config reconstructs the exact variant, and truncated files fail
//! with a format error instead of a crash.
//!
//!     cargo run --release --example checkpoint_roundtrip

use cloformer::checkpoint::{checkpoint_bytes, model_from_checkpoint_bytes};
use cloformer::model::{build_ablation, build_model, VariantSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> cloformer::error::Result<()> {
    // Round trip an ablated variant to show the config survives too.
    let knobs = vec![("use_k".to_string(), "false".to_string())];
    let spec = build_ablation(&VariantSpec::preset("xxs64")?, &knobs)?;
    let m = build_model::<f32>(&spec, &mut ChaCha8Rng::seed_from_u64(3))?;

    let bytes = checkpoint_bytes(&m);
    let reloaded = model_from_checkpoint_bytes::<f32>(&bytes)?;
    assert_eq!(reloaded.spec, m.spec, "embedded config must reconstruct spec");
    let bytes2 = checkpoint_bytes(&reloaded);
    assert_eq!(bytes, bytes2, "save -> load -> save must be byte-identical");
    println!(
        "round trip ok: {} bytes, spec '{}' with use_k={}",
        bytes.len(),
        reloaded.spec.name,
        reloaded.spec.ablation.gate.use_k
    );

    // Every truncation point yields a format error, never a panic.
    for cut in [3, 17, bytes.len() / 2, bytes.len() - 1] {
        let err = model_from_checkpoint_bytes::<f32>(&bytes[..cut]).unwrap_err();
        println!("truncated at {cut:>6}: ERROR {}: {}", err.category(), err.detail());
    }
    Ok(())
}
