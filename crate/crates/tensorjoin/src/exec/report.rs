//! Execution reports: the result table plus a stage timing breakdown,
//! serialized with stable key names.

use serde::Serialize;

use crate::planner::CostEstimate;
use crate::relational::ResultTable;

#[derive(Debug, Clone, Copy, Default, Serialize, PartialEq)]
pub struct StageTimings {
    pub fill_matrices: f64,
    pub device_copy: f64,
    pub compute: f64,
    pub decode: f64,
    pub other: f64,
}

impl StageTimings {
    pub fn named_total(&self) -> f64 {
        self.fill_matrices + self.device_copy + self.compute + self.decode
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize, PartialEq)]
pub struct KernelCounters {
    /// Matrix-multiplication kernel invocations (dense, sparse, or blocked).
    pub gemm_calls: u64,
    /// 16x16x16 tile products executed by the sparse kernel.
    pub tile_products: u64,
    /// Tile pairs the sparse kernel skipped as all-zero.
    pub skipped_tile_pairs: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExecutionReport {
    pub result: ResultTable,
    pub stages: StageTimings,
    pub kernel: String,
    pub precision: String,
    pub estimated_cost: CostEstimate,
    pub measured_total_seconds: f64,
    pub counters: KernelCounters,
    /// Mean absolute percentage error against an oracle run, when measured.
    pub mape: Option<f64>,
}

impl ExecutionReport {
    pub fn to_json(&self) -> crate::error::Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// JSON with timing fields zeroed, for byte-stable comparisons.
    pub fn to_json_deterministic(&self) -> crate::error::Result<String> {
        let mut clone = self.clone();
        clone.stages = StageTimings::default();
        clone.measured_total_seconds = 0.0;
        let mut est = clone.estimated_cost;
        est.dt = 0.0;
        est.dm = 0.0;
        est.ct = 0.0;
        est.total = 0.0;
        clone.estimated_cost = est;
        Ok(serde_json::to_string_pretty(&clone)?)
    }
}
