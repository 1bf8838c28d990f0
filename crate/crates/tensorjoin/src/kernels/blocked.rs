//! Out-of-core multiply: streams fixed-size square panels of A and B through
//! the simulated device, accumulating each output panel on the device before
//! writing it back. Three panels (A, B, C) must fit the budget at once.

use crate::error::{Error, Result};
use crate::kernels::dense::{gemm_accumulate_raw, DenseMatrix, TILE};
use crate::kernels::device::{accounted_bytes, SimDevice};
use crate::kernels::precision::Precision;

/// Largest block edge (multiple of 16) such that three square blocks fit the
/// device budget, capped at the problem size rounded up to a tile.
pub fn pick_block_size(
    budget_bytes: usize,
    dims: (usize, usize, usize),
    precision: Precision,
) -> Result<usize> {
    let elem = precision.element_bytes();
    let min_bytes = (3 * TILE * TILE) as f64 * elem;
    if (budget_bytes as f64) < min_bytes {
        return Err(Error::Config(format!(
            "device budget {budget_bytes} B cannot hold three {TILE}x{TILE} blocks"
        )));
    }
    let max_edge = ((budget_bytes as f64 / (3.0 * elem)).sqrt().floor()) as usize;
    let (m, k, n) = dims;
    let need = m.max(k).max(n).div_ceil(TILE) * TILE;
    let edge = (max_edge / TILE) * TILE;
    Ok(edge.min(need).max(TILE))
}

/// C = A x B streamed block-by-block through `device`. Every fetched panel is
/// padded to the full block size so transfers are uniform. Accumulation order
/// per output element is ascending k, matching the in-core kernel.
pub fn blocked_gemm(
    a: &DenseMatrix,
    b: &DenseMatrix,
    block_size: usize,
    device: &mut SimDevice,
) -> Result<DenseMatrix> {
    if a.cols != b.rows {
        return Err(Error::Internal(format!(
            "blocked_gemm dimension mismatch: {}x{} times {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    if block_size == 0 || !block_size.is_multiple_of(TILE) {
        return Err(Error::Config(format!(
            "block size {block_size} must be a positive multiple of {TILE}"
        )));
    }
    let precision = a.precision;
    let block_bytes = accounted_bytes(block_size * block_size, precision);
    if 3 * block_bytes > device.budget_bytes() {
        return Err(Error::Config(format!(
            "three {block_size}x{block_size} blocks ({} B) exceed device budget {}",
            3 * block_bytes,
            device.budget_bytes()
        )));
    }

    let (m, k, n) = (a.rows, a.cols, b.cols);
    let mut c = DenseMatrix::zeros(m, n, Precision::F32);
    let blocks_m = m.div_ceil(block_size);
    let blocks_k = k.div_ceil(block_size);
    let blocks_n = n.div_ceil(block_size);

    let mut panel = vec![0.0f32; block_size * block_size];
    for bi in 0..blocks_m {
        for bj in 0..blocks_n {
            let c_buf = device.alloc_zeroed(block_size * block_size, Precision::F32)?;
            for bk in 0..blocks_k {
                extract_panel(a, bi * block_size, bk * block_size, block_size, &mut panel);
                let a_buf = device.copy_in(&panel, precision)?;
                extract_panel(b, bk * block_size, bj * block_size, block_size, &mut panel);
                let b_buf = device.copy_in(&panel, precision)?;

                // Multiply the two resident panels into the resident C panel.
                let (a_panel, b_panel, c_panel) = device.panels(a_buf, b_buf, c_buf)?;
                gemm_accumulate_raw(
                    a_panel,
                    b_panel,
                    (block_size, block_size, block_size),
                    precision,
                    c_panel,
                );
                device.free(a_buf);
                device.free(b_buf);
            }
            let c_panel = device.copy_out(c_buf)?;
            device.free(c_buf);
            store_panel(&mut c, bi * block_size, bj * block_size, block_size, &c_panel);
        }
    }
    Ok(c)
}

fn extract_panel(src: &DenseMatrix, r0: usize, c0: usize, edge: usize, out: &mut [f32]) {
    out.fill(0.0);
    let r_max = (r0 + edge).min(src.rows);
    let c_max = (c0 + edge).min(src.cols);
    for r in r0..r_max {
        let src_row = &src.data[r * src.cols + c0..r * src.cols + c_max];
        out[(r - r0) * edge..(r - r0) * edge + src_row.len()].copy_from_slice(src_row);
    }
}

fn store_panel(dst: &mut DenseMatrix, r0: usize, c0: usize, edge: usize, panel: &[f32]) {
    let r_max = (r0 + edge).min(dst.rows);
    let c_max = (c0 + edge).min(dst.cols);
    for r in r0..r_max {
        let width = c_max - c0;
        dst.data[r * dst.cols + c0..r * dst.cols + c_max]
            .copy_from_slice(&panel[(r - r0) * edge..(r - r0) * edge + width]);
    }
}
