//! Finite-difference verification of every differentiable operation and of
//! the composite Clo block / ConvFFN forwards, in 64-bit mode.
//!
//!     cargo run --release --example gradient_check

use cloformer::gradcheck::{run_all, TOLERANCE};

fn main() -> cloformer::error::Result<()> {
    let results = run_all(None)?;
    let mut failures = 0;
    for r in &results {
        println!(
            "{:<28} rel_err {:>12.3e}  {}",
            r.name,
            r.rel_err,
            if r.pass { "pass" } else { "FAIL" }
        );
        if !r.pass {
            failures += 1;
        }
    }
    println!(
        "\n{}/{} checks under tolerance {TOLERANCE:e}",
        results.len() - failures,
        results.len()
    );
    assert_eq!(failures, 0, "gradient checks failed");
    Ok(())
}
