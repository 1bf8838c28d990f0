//! Precision sweep: the matrix-multiplication query at benchmark dimensions
//! under half-precision emulation, reporting error rates against a 64-bit
//! reference for each (value range, dimension) cell.
//!
//! Inputs are drawn from the non-negative part of each range: accumulation
//! over same-sign terms is the regime where percentage error is meaningful
//! cell-by-cell (symmetric inputs drive the reference sums toward zero and
//! the percentage error diverges regardless of kernel quality).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::harness::oracle::gemm_f64_reference;
use crate::kernels::{fill_value, gemm, DenseMatrix, Precision, HALF_MAX};

/// The standard value-range rows of the sweep.
pub fn standard_ranges() -> Vec<(String, i64, i64)> {
    vec![
        ("x = 0, 1".to_string(), 0, 2),
        ("-2^7 <= x < 2^7".to_string(), -(1 << 7), 1 << 7),
        ("-2^15 <= x < 2^15".to_string(), -(1 << 15), 1 << 15),
        ("-2^31 <= x < 2^31".to_string(), -(1 << 31), 1 << 31),
    ]
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepCell {
    pub range: String,
    pub dim: usize,
    /// None when the range is infeasible for half storage.
    pub mape: Option<f64>,
}

/// Runs the sweep over every (range, dim) pair.
pub fn precision_sweep(
    dims: &[usize],
    ranges: &[(String, i64, i64)],
    seed: u64,
) -> Result<Vec<SweepCell>> {
    let mut out = Vec::new();
    for (label, lo, hi) in ranges {
        for (i, &dim) in dims.iter().enumerate() {
            let cell_seed = seed ^ ((i as u64 + 1) << 32) ^ hash_label(label);
            let mape = sweep_cell(dim, *lo, *hi, cell_seed)?;
            out.push(SweepCell {
                range: label.clone(),
                dim,
                mape,
            });
        }
    }
    Ok(out)
}

fn hash_label(s: &str) -> u64 {
    s.bytes().fold(1469598103934665603u64, |h, b| {
        (h ^ b as u64).wrapping_mul(1099511628211)
    })
}

/// One (range, dim) cell: MAPE of the half-emulated product against the
/// 64-bit reference over all result cells, or None when the inputs cannot be
/// represented in half precision.
pub fn sweep_cell(dim: usize, lo: i64, hi: i64, seed: u64) -> Result<Option<f64>> {
    let draw_lo = lo.max(0);
    if hi <= draw_lo {
        return Err(crate::error::Error::Config(format!(
            "empty sweep range [{lo}, {hi})"
        )));
    }
    if (hi - 1) as f64 > HALF_MAX {
        return Ok(None);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a16 = DenseMatrix::zeros(dim, dim, Precision::Half);
    let mut b16 = DenseMatrix::zeros(dim, dim, Precision::Half);
    let mut a64 = vec![0.0f64; dim * dim];
    let mut b64 = vec![0.0f64; dim * dim];
    for i in 0..dim * dim {
        let x = rng.gen_range(draw_lo..hi) as f64;
        let y = rng.gen_range(draw_lo..hi) as f64;
        a64[i] = x;
        b64[i] = y;
        a16.data[i] = fill_value(x, Precision::Half)?;
        b16.data[i] = fill_value(y, Precision::Half)?;
    }

    let c16 = gemm(&a16, &b16)?;
    let c64 = gemm_f64_reference(&a64, dim, dim, &b64, dim);

    let mut total = 0.0;
    for (got, want) in c16.data.iter().zip(&c64) {
        let x = *want;
        let x_hat = *got as f64;
        if x == 0.0 && x_hat == 0.0 {
            continue;
        }
        let denom = if x == 0.0 { 1.0 } else { x.abs() };
        total += (x - x_hat).abs() / denom;
    }
    Ok(Some(total / (dim * dim) as f64))
}

/// Renders the sweep as an aligned text table, ranges as rows and dimensions
/// as columns.
pub fn format_sweep_table(dims: &[usize], cells: &[SweepCell]) -> String {
    let mut out = String::new();
    out.push_str(&format!("{:24}", "value range"));
    for d in dims {
        out.push_str(&format!("{:>14}", format!("{d}x{d}")));
    }
    out.push('\n');
    let mut ranges = Vec::new();
    for c in cells {
        if !ranges.contains(&c.range) {
            ranges.push(c.range.clone());
        }
    }
    for range in ranges {
        out.push_str(&format!("{range:24}"));
        for d in dims {
            let cell = cells.iter().find(|c| c.range == range && c.dim == *d);
            let text = match cell.and_then(|c| c.mape) {
                Some(m) => {
                    if m == 0.0 {
                        "0".to_string()
                    } else {
                        format!("{:.5}%", m * 100.0)
                    }
                }
                None => "infeasible".to_string(),
            };
            out.push_str(&format!("{text:>14}"));
        }
        out.push('\n');
    }
    out
}
