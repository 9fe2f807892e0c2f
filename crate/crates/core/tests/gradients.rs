mod common;

use common::{gradient_check, toy_config};

fn assert_close(report: &[(String, f64)], tol: f64) {
    for (name, rel) in report {
        assert!(*rel < tol, "{name}: relative error {rel:e}");
    }
}

#[test]
fn one_block_without_dropout() {
    assert_close(&gradient_check(toy_config(1, 0.0), 4, 1, 1e-5), 1e-6);
}

#[test]
fn frozen_dropout_masks() {
    assert_close(&gradient_check(toy_config(1, 0.3), 6, 2, 1e-5), 1e-6);
}

#[test]
fn three_blocks() {
    let report = gradient_check(toy_config(3, 0.2), 5, 3, 1e-5);
    assert_eq!(report.len(), 4 + 3 * 6);
    assert_close(&report, 1e-6);
}

#[test]
fn single_sample_single_class() {
    let mut cfg = toy_config(2, 0.0);
    cfg.n_classes = 1;
    assert_close(&gradient_check(cfg, 1, 4, 1e-5), 1e-6);
}
