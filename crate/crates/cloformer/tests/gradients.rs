//! Gradient correctness suite: every differentiable operation plus the full
//! Clo block and ConvFFN forwards, against 64-bit finite differences
//! (eps 1e-4, relative error < 1e-5) on shapes up to 2x16x8x8.

use cloformer::gradcheck::run_all;

#[test]
fn all_operations_match_finite_differences() {
    let results = run_all(None).unwrap();
    assert!(results.len() >= 30, "expected a full check matrix");
    let failures: Vec<String> = results
        .iter()
        .filter(|r| !r.pass)
        .map(|r| format!("{} rel_err {:e}", r.name, r.rel_err))
        .collect();
    assert!(failures.is_empty(), "failed checks: {failures:?}");
}

#[test]
fn composite_blocks_are_covered() {
    let names: Vec<String> = run_all(None).unwrap().into_iter().map(|r| r.name).collect();
    for required in ["clo_block/x", "clo_block/qkv.weight", "convffn/in_stage/x", "convffn/cross_stage/x", "attnconv/q"] {
        assert!(
            names.iter().any(|n| n == required),
            "missing composite check {required}"
        );
    }
}
