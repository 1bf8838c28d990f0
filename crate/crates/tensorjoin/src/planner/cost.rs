//! The three-term cost model: data transformation (record scans at the
//! calibrated host rate, divided by the device's parallel width when the
//! transform runs there), data movement (matrix volume over the simulated
//! link for host-side transforms, raw column volume for device-side), and
//! compute (2*M*N*K over the kernel's calibrated peak, scaled by density for
//! the tiled sparse kernel).

use serde::{Deserialize, Serialize};

use crate::kernels::Precision;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelKind {
    DenseGemm,
    SparseTiledSpmm,
    BlockedGemm,
    HashJoinFallback,
}

impl KernelKind {
    /// Tie-break rank: prefer the simpler matmul plan on equal cost.
    pub fn rank(self) -> u8 {
        match self {
            KernelKind::DenseGemm => 0,
            KernelKind::SparseTiledSpmm => 1,
            KernelKind::BlockedGemm => 2,
            KernelKind::HashJoinFallback => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            KernelKind::DenseGemm => "DenseGemm",
            KernelKind::SparseTiledSpmm => "SparseTiledSpmm",
            KernelKind::BlockedGemm => "BlockedGemm",
            KernelKind::HashJoinFallback => "HashJoinFallback",
        }
    }
}

impl std::fmt::Display for KernelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TransformSite {
    Host,
    Device,
}

/// Calibrated machine constants. All strictly positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationProfile {
    /// Seconds per record scanned on the host while filling matrices.
    pub alpha_scan: f64,
    /// Simulated device lanes available for parallel transformation.
    pub parallel_width_p: f64,
    /// Simulated host-to-device copy bandwidth, bytes per second.
    pub bandwidth_sim: f64,
    pub peak_dense_flops: f64,
    pub peak_spmm_flops: f64,
    pub peak_blocked_flops: f64,
    /// Seconds per record+output-row for the classical hash-join fallback.
    pub beta_hash: f64,
}

impl CalibrationProfile {
    pub fn validate(&self) -> crate::error::Result<()> {
        let fields = [
            ("alpha_scan", self.alpha_scan),
            ("parallel_width_p", self.parallel_width_p),
            ("bandwidth_sim", self.bandwidth_sim),
            ("peak_dense_flops", self.peak_dense_flops),
            ("peak_spmm_flops", self.peak_spmm_flops),
            ("peak_blocked_flops", self.peak_blocked_flops),
            ("beta_hash", self.beta_hash),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(crate::error::Error::Config(format!(
                    "calibration constant {name} must be strictly positive, got {v}"
                )));
            }
        }
        Ok(())
    }

    pub fn kernel_peak(&self, kernel: KernelKind) -> f64 {
        match kernel {
            KernelKind::DenseGemm => self.peak_dense_flops,
            KernelKind::SparseTiledSpmm => self.peak_spmm_flops,
            KernelKind::BlockedGemm => self.peak_blocked_flops,
            KernelKind::HashJoinFallback => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostEstimate {
    pub dt: f64,
    pub dm: f64,
    pub ct: f64,
    pub total: f64,
}

impl CostEstimate {
    pub fn new(dt: f64, dm: f64, ct: f64) -> Self {
        Self {
            dt,
            dm,
            ct,
            total: dt + dm + ct,
        }
    }
}

/// Inputs to one operator's cost estimate.
#[derive(Debug, Clone, Copy)]
pub struct CostQuery {
    /// Records scanned to fill each operand.
    pub left_records: usize,
    pub right_records: usize,
    /// Matrix dimensions of the main product: (M, K, N).
    pub dims: (usize, usize, usize),
    /// Storage precision of the operands.
    pub precision: Precision,
    /// Raw bytes per record per side (device-site movement moves raw columns).
    pub raw_bytes_per_record: (f64, f64),
    pub site: TransformSite,
    pub kernel: KernelKind,
    /// Combined operand density; scales the sparse kernel's compute.
    pub density: f64,
}

pub fn estimate_cost(q: &CostQuery, calib: &CalibrationProfile) -> CostEstimate {
    let (m, k, n) = q.dims;
    let records = (q.left_records + q.right_records) as f64;

    let dt = match q.site {
        TransformSite::Host => calib.alpha_scan * records,
        TransformSite::Device => calib.alpha_scan * records / calib.parallel_width_p,
    };

    let dm = match q.site {
        TransformSite::Host => {
            let elem = q.precision.element_bytes();
            ((m * k) as f64 * elem + (k * n) as f64 * elem) / calib.bandwidth_sim
        }
        TransformSite::Device => {
            (q.left_records as f64 * q.raw_bytes_per_record.0
                + q.right_records as f64 * q.raw_bytes_per_record.1)
                / calib.bandwidth_sim
        }
    };

    let flops = 2.0 * m as f64 * n as f64 * k as f64;
    let mut ct = flops / calib.kernel_peak(q.kernel);
    if q.kernel == KernelKind::SparseTiledSpmm {
        ct *= q.density;
    }

    CostEstimate::new(dt, dm, ct)
}

/// Fallback cost: linear in the scanned records plus the estimated output
/// cardinality (uniform-key assumption: |A| * |B| / k).
pub fn estimate_fallback_cost(
    left_records: usize,
    right_records: usize,
    distinct_keys: usize,
    calib: &CalibrationProfile,
) -> CostEstimate {
    let output_est = if distinct_keys == 0 {
        0.0
    } else {
        left_records as f64 * right_records as f64 / distinct_keys as f64
    };
    let ct = calib.beta_hash * (left_records as f64 + right_records as f64 + output_est);
    CostEstimate::new(0.0, 0.0, ct)
}
