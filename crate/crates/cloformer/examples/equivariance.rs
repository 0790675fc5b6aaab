//! Translation equivariance of AttnConv: with circular padding, shifting the
//! inputs shifts the output identically; with zero padding, boundary effects
//! break the property. Both modes are demonstrated side by side.
//!
//!     cargo run --release --example equivariance

use cloformer::attnconv::{attnconv_forward, build_local_ablation, AttnConvParams, LocalKind};
use cloformer::ops::PadMode;
use cloformer::tensor::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn worst_shift_error(pad: PadMode) -> cloformer::error::Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut p: AttnConvParams<f64> = build_local_ablation(LocalKind::Full, 8, 3, 2, pad, &mut rng)?;
    // Scale the trunc-normal(0.02) init up so boundary effects are visible at
    // O(1) activation scale.
    p.visit_mut("local", &mut |_, t| {
        for v in t.data_mut() {
            *v *= 20.0;
        }
    });
    let q = Tensor::<f64>::rand_uniform([1, 8, 12, 12], -1.0, 1.0, &mut rng);
    let k = Tensor::<f64>::rand_uniform([1, 8, 12, 12], -1.0, 1.0, &mut rng);
    let v = Tensor::<f64>::rand_uniform([1, 8, 12, 12], -1.0, 1.0, &mut rng);
    let base = attnconv_forward(&q, &k, &v, &p)?;
    let mut worst = 0.0f64;
    for dy in 0..3i64 {
        for dx in 0..3i64 {
            let shifted = attnconv_forward(
                &q.circular_shift(dy, dx),
                &k.circular_shift(dy, dx),
                &v.circular_shift(dy, dx),
                &p,
            )?;
            let expect = base.circular_shift(dy, dx);
            let diff = shifted
                .data()
                .iter()
                .zip(expect.data())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            worst = worst.max(diff);
        }
    }
    Ok(worst)
}

fn main() -> cloformer::error::Result<()> {
    let circular = worst_shift_error(PadMode::Circular)?;
    let zeros = worst_shift_error(PadMode::Zeros)?;
    println!("worst shift error, circular padding: {circular:.3e}");
    println!("worst shift error, zero padding:     {zeros:.3e}");
    assert!(circular < 1e-5, "circular mode must be equivariant");
    assert!(zeros > 1e-3, "zero padding should visibly break the property");
    Ok(())
}
