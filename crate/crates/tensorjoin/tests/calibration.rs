//! Timing-sensitive calibration checks, isolated in their own binary so no
//! sibling tests compete for the cores while the constants are measured.

use tensorjoin::planner::calibrate;

#[test]
fn constants_positive_repeatable_and_ordered() {
    let p1 = calibrate(0.1, 7).unwrap();
    let p2 = calibrate(0.1, 7).unwrap();
    p1.validate().unwrap();
    p2.validate().unwrap();
    // repeated runs on the same machine agree within 50% per constant
    for (a, b, name) in [
        (p1.alpha_scan, p2.alpha_scan, "alpha_scan"),
        (p1.bandwidth_sim, p2.bandwidth_sim, "bandwidth_sim"),
        (p1.peak_dense_flops, p2.peak_dense_flops, "peak_dense_flops"),
        (p1.peak_spmm_flops, p2.peak_spmm_flops, "peak_spmm_flops"),
        (
            p1.peak_blocked_flops,
            p2.peak_blocked_flops,
            "peak_blocked_flops",
        ),
        (p1.beta_hash, p2.beta_hash, "beta_hash"),
    ] {
        let ratio = if a > b { a / b } else { b / a };
        assert!(ratio < 1.5, "{name}: {a} vs {b} (ratio {ratio:.3})");
    }
    // streaming panels through the device adds copy overhead
    assert!(
        p1.peak_blocked_flops <= p1.peak_dense_flops * 1.10,
        "blocked {} vs dense {}",
        p1.peak_blocked_flops,
        p1.peak_dense_flops
    );
}
