//! One-time sampling: times synthetic scans, simulated copies, and each
//! kernel at a few sizes, fits the cost-model constants, and persists them
//! alongside the planner knobs as a JSON config.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::encode::{build_domain, encode_indicator, KeyColumn};
use crate::error::Result;
use crate::kernels::{
    blocked_gemm, gemm, pick_block_size, spmm_tiled, to_csr, DenseMatrix, Precision, SimDevice,
};
use crate::planner::cost::CalibrationProfile;

pub const DEFAULT_DENSITY_THRESHOLD: f64 = 0.0004; // 0.04%
pub const DEFAULT_DEVICE_BUDGET: usize = 256 << 20; // 256 MiB, simulated

/// Planner knobs plus the calibrated constants, persisted as one flat JSON
/// document (`calibration.json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    #[serde(flatten)]
    pub profile: CalibrationProfile,
    pub density_threshold: f64,
    pub device_budget_bytes: usize,
}

impl EngineConfig {
    pub fn new(profile: CalibrationProfile) -> Self {
        Self {
            profile,
            density_threshold: DEFAULT_DENSITY_THRESHOLD,
            device_budget_bytes: DEFAULT_DEVICE_BUDGET,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.profile.validate()?;
        if !(self.density_threshold > 0.0 && self.density_threshold < 1.0) {
            return Err(crate::error::Error::Config(format!(
                "density_threshold must be in (0, 1), got {}",
                self.density_threshold
            )));
        }
        let min_budget = (3 * 16 * 16 * 4) as usize;
        if self.device_budget_bytes < min_budget {
            return Err(crate::error::Error::Config(format!(
                "device_budget_bytes must be at least {min_budget}"
            )));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let config: EngineConfig = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }
}

/// Scale knob for the sampling workloads; 1.0 is the standard run, tests use
/// smaller values.
pub fn calibrate(scale: f64, seed: u64) -> Result<CalibrationProfile> {
    let scale = scale.max(0.05);
    let gemm_edge = ((384.0 * scale.sqrt()) as usize).max(64) / 16 * 16;
    let scan_records = ((200_000.0 * scale) as usize).max(10_000);

    let alpha_scan = measure_alpha(scan_records, seed)?;
    let bandwidth_sim = measure_bandwidth(((32.0 * scale) as usize).max(4))?;
    let peak_dense_flops = measure_dense(gemm_edge, seed)?;
    let peak_spmm_flops = measure_spmm(gemm_edge, seed)?;
    let peak_blocked_flops = measure_blocked(gemm_edge, seed)?;
    let beta_hash = measure_hash(((2048.0 * scale) as usize).max(512), seed)?;

    let profile = CalibrationProfile {
        alpha_scan,
        // Simulated device lanes; the hardware this stands in for runs a few
        // thousand scan threads concurrently.
        parallel_width_p: 2048.0,
        bandwidth_sim,
        peak_dense_flops,
        peak_spmm_flops,
        peak_blocked_flops,
        beta_hash,
    };
    profile.validate()?;
    Ok(profile)
}

// Times `f`, repeating it enough times that each sample spans a measurable
// window, and keeps the best (least noisy) per-call seconds of `reps`
// samples. The first call warms caches and the thread pool untimed. Windows
// are long enough to average across scheduler quota periods.
fn best_of<T>(reps: usize, mut f: impl FnMut() -> Result<T>) -> Result<f64> {
    const MIN_WINDOW: f64 = 0.15;
    std::hint::black_box(f()?);
    let started = Instant::now();
    std::hint::black_box(f()?);
    let once = started.elapsed().as_secs_f64().max(1e-9);
    let inner = (MIN_WINDOW / once).ceil().clamp(1.0, 10_000.0) as usize;

    let mut best = f64::INFINITY;
    for _ in 0..reps {
        let started = Instant::now();
        for _ in 0..inner {
            std::hint::black_box(f()?);
        }
        best = best.min(started.elapsed().as_secs_f64() / inner as f64);
    }
    Ok(best)
}

fn lcg_keys(n: usize, k: usize, seed: u64) -> Vec<i64> {
    let mut s = seed | 1;
    (0..n)
        .map(|_| {
            s = s
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((s >> 33) as usize % k.max(1)) as i64
        })
        .collect()
}

// alpha: seconds per record scanned while filling an indicator matrix.
fn measure_alpha(records: usize, seed: u64) -> Result<f64> {
    let keys = KeyColumn::Int(lcg_keys(records, 64, seed));
    let domain = build_domain(&keys, false)?;
    let seconds = best_of(3, || encode_indicator(&keys, &domain, Precision::F32))?;
    Ok(seconds / records as f64)
}

// bandwidth: bytes per second through the simulated device arena.
fn measure_bandwidth(megabytes: usize) -> Result<f64> {
    let elems = megabytes << 18; // MiB of f32
    let data = vec![1.0f32; elems];
    let mut device = SimDevice::new(usize::MAX);
    let seconds = best_of(3, || {
        let buf = device.copy_in(&data, Precision::F32)?;
        device.free(buf);
        Ok(())
    })?;
    Ok((elems * 4) as f64 / seconds.max(1e-9))
}

fn random_square(edge: usize, seed: u64) -> DenseMatrix {
    DenseMatrix {
        rows: edge,
        cols: edge,
        data: lcg_keys(edge * edge, 256, seed)
            .into_iter()
            .map(|v| (v - 128) as f32)
            .collect(),
        precision: Precision::F32,
    }
}

fn measure_dense(edge: usize, seed: u64) -> Result<f64> {
    let a = random_square(edge, seed);
    let b = random_square(edge, seed ^ 0x9e37);
    let flops = 2.0 * (edge as f64).powi(3);
    let seconds = best_of(3, || gemm(&a, &b))?;
    Ok(flops / seconds.max(1e-9))
}

fn measure_spmm(edge: usize, seed: u64) -> Result<f64> {
    // Half-dense operands: plenty of non-empty tiles, measured as effective
    // dense-equivalent throughput on the executed tile products.
    let mut a = random_square(edge, seed);
    let mut b = random_square(edge, seed ^ 0x51f1);
    let drop = lcg_keys(edge * edge, 2, seed ^ 0xabcd);
    for (i, d) in drop.iter().enumerate() {
        if *d == 0 {
            a.data[i] = 0.0;
            b.data[i] = 0.0;
        }
    }
    let a_csr = to_csr(&a);
    let b_csr = to_csr(&b);
    let seconds = best_of(3, || spmm_tiled(&a_csr, &b_csr))?;
    let flops = 2.0 * (edge as f64).powi(3);
    Ok(flops / seconds.max(1e-9))
}

fn measure_blocked(edge: usize, seed: u64) -> Result<f64> {
    let edge = edge.max(160);
    let a = random_square(edge, seed);
    let b = random_square(edge, seed ^ 0x7777);
    let budget = (3 * (edge / 2).max(16) * (edge / 2).max(16) * 4).max(3 * 16 * 16 * 4);
    let block = pick_block_size(budget, (edge, edge, edge), Precision::F32)?;
    let flops = 2.0 * (edge as f64).powi(3);
    let seconds = best_of(3, || {
        let mut device = SimDevice::new(budget);
        blocked_gemm(&a, &b, block, &mut device)
    })?;
    Ok(flops / seconds.max(1e-9))
}

// beta: seconds per (record + output row) of the classical fallback path,
// end to end, including result-row materialization.
fn measure_hash(records: usize, seed: u64) -> Result<f64> {
    use crate::catalog::{Catalog, ColumnData, ColumnTable, LogicalType};
    use crate::relational::execute_fallback;
    use crate::sql::{parse, resolve};

    let k = 32;
    let mut catalog = Catalog::new();
    for (name, s) in [("A", seed), ("B", seed ^ 0x3333)] {
        catalog.register(
            ColumnTable::new(
                name,
                vec![
                    ("ID".into(), LogicalType::Int64),
                    ("Val".into(), LogicalType::Int64),
                ],
                vec![
                    ColumnData::Int64(lcg_keys(records, k, s)),
                    ColumnData::Int64(lcg_keys(records, 100, s ^ 0x77)),
                ],
            )
            .unwrap(),
        );
    }
    let ast = resolve(
        parse("SELECT A.Val, B.Val FROM A, B WHERE A.ID = B.ID")?,
        &catalog,
    )?;
    let params = std::collections::HashMap::new();
    let seconds = best_of(3, || execute_fallback(&ast, &catalog, &params))?;
    let rows = execute_fallback(&ast, &catalog, &params)?.rows.len();
    let work = (2 * records + rows) as f64;
    Ok(seconds / work)
}
