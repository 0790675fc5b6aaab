//! Frequency analysis of the two Clo-block branches. Taps the final block of
//! stage 2, computes radially banded spectra for the shared-weights path, the
//! full local branch, and the global branch, and writes PGM spectrum images
//! plus per-band CSVs to a temp directory.
//!
//!     cargo run --release --example branch_spectra

use cloformer::analysis::branch_spectra;
use cloformer::data::gen_synth_dataset;
use cloformer::model::{build_model, VariantSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> cloformer::error::Result<()> {
    let spec = VariantSpec::preset("xxs64")?;
    let m = build_model::<f32>(&spec, &mut ChaCha8Rng::seed_from_u64(0))?;
    let ds = gen_synth_dataset::<f32>(8, 8, 64, 0)?;
    let (x, _) = ds.batch(&[0]);

    let out = std::env::temp_dir().join("cloformer_spectra");
    std::fs::create_dir_all(&out)?;
    for stage in [2, 3] {
        println!("stage {stage}:");
        for r in branch_spectra(&m, &x, stage)? {
            r.write_pgm(&out.join(format!("{}.pgm", r.source)))?;
            std::fs::write(out.join(format!("{}.csv", r.source)), r.bands_csv())?;
            let bands: Vec<String> = r.bands.iter().map(|b| format!("{b:.3}")).collect();
            println!(
                "  {:<22} high-band mass {:.4}  bands [{}]",
                r.source,
                r.high_band_mass(),
                bands.join(", ")
            );
        }
    }
    println!("\nwrote PGM/CSV artifacts to {}", out.display());
    Ok(())
}
