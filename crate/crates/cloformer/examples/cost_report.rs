//! Parameter and FLOP accounting for every preset variant.
//!
//! Prints the one-line totals for all presets, then the full per-parameter
//! breakdown (text and CSV) for the XXS variant at 224x224.
//!
//!     cargo run --release --example cost_report

use cloformer::accounting::count_flops;
use cloformer::model::{build_model, VariantSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> cloformer::error::Result<()> {
    for name in ["xxs", "xs", "s", "xxs64"] {
        let spec = VariantSpec::preset(name)?;
        let m = build_model::<f32>(&spec, &mut ChaCha8Rng::seed_from_u64(0))?;
        let hw = if name == "xxs64" { (64, 64) } else { (224, 224) };
        let r = count_flops(&m, hw)?;
        println!(
            "{name:>6}: {:8.4}M params  {:7.4}G flops @ {}x{}",
            r.total_params as f64 / 1e6,
            r.total_flops as f64 / 1e9,
            hw.0,
            hw.1
        );
    }

    let spec = VariantSpec::preset("xxs")?;
    let m = build_model::<f32>(&spec, &mut ChaCha8Rng::seed_from_u64(0))?;
    let report = count_flops(&m, (224, 224))?;
    println!("\nxxs breakdown (first 20 rows):");
    for line in report.to_text().lines().take(21) {
        println!("{line}");
    }
    println!("\nCSV form (first 5 rows):");
    for line in report.to_csv().lines().take(6) {
        println!("{line}");
    }
    Ok(())
}
