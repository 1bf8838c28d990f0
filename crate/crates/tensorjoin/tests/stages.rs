//! Stage accounting: at benchmark dimensions, the named stages (fill, copy,
//! compute, decode) must cover nearly all of the measured wall time. Kept in
//! its own binary so no sibling tests skew the timings.

use tensorjoin::harness::{run_microbench, MicroQuery, MicrobenchSpec};
use tensorjoin::planner::{CalibrationProfile, EngineConfig, PlanMode};

#[test]
fn named_stages_cover_ninety_percent_of_wall_time() {
    let config = EngineConfig::new(CalibrationProfile {
        alpha_scan: 1e-8,
        parallel_width_p: 2048.0,
        bandwidth_sim: 8e9,
        peak_dense_flops: 1e10,
        peak_spmm_flops: 5e9,
        peak_blocked_flops: 8e9,
        beta_hash: 4e-7,
    });
    for query in [MicroQuery::Q1, MicroQuery::Q3] {
        let spec = MicrobenchSpec {
            m: 2048,
            n: 2048,
            k: 32,
            value_range: (0, 100),
            seed: 17,
            query,
        };
        let report = run_microbench(&spec, PlanMode::ForceMatmul, &config).unwrap();
        let named = report.stages.named_total();
        let total = report.measured_total_seconds;
        assert!(
            named >= 0.9 * total,
            "{query:?}: named stages {named:.4}s cover only {:.1}% of {total:.4}s",
            100.0 * named / total
        );
    }
}
