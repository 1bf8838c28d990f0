//! Matrix storage and the three multiply backends (dense, tiled-sparse,
//! blocked) under a shared emulated-precision contract.

mod blocked;
mod dense;
mod device;
mod precision;
mod sparse;

pub use blocked::{blocked_gemm, pick_block_size};
pub use dense::{gemm, gemm_accumulate, gemm_accumulate_raw, DenseMatrix, TILE};
pub use device::{accounted_bytes, CopyLedger, DeviceBuffer, SimDevice};
pub use precision::{
    fill_value, quantize_f16, Precision, F32_EXACT_ACCUM, HALF_EXACT_INT, HALF_MAX,
};
pub use sparse::{spmm_tiled, to_csr, CsrMatrix, SpmmStats, TileMask};
