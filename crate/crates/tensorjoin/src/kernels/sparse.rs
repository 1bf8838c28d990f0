//! CSR storage and the tiled sparse multiply: operands are partitioned into
//! 16x16 tiles, all-zero tiles are skipped, and the remaining tile pairs are
//! multiplied under the same precision contract as the dense kernel. With the
//! fixed ascending-k accumulation order the result is bit-identical to
//! densifying and calling `gemm`.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::kernels::dense::{DenseMatrix, TILE};
use crate::kernels::precision::{quantize_f16, Precision};

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub rows: usize,
    pub cols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f32>,
    pub precision: Precision,
}

impl CsrMatrix {
    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn density(&self) -> f64 {
        if self.rows == 0 || self.cols == 0 {
            return 0.0;
        }
        self.nnz() as f64 / (self.rows as f64 * self.cols as f64)
    }

    /// Builds from coordinate triplets. Duplicates sum; zero values (and
    /// duplicates cancelling to zero) are dropped so stored entries are
    /// genuinely nonzero. Input order does not matter.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f32)>,
        precision: Precision,
    ) -> Result<Self> {
        let mut per_row: Vec<HashMap<usize, f32>> = vec![HashMap::new(); rows];
        for (r, c, v) in triplets {
            if r >= rows || c >= cols {
                return Err(Error::Internal(format!(
                    "triplet ({r}, {c}) outside {rows}x{cols}"
                )));
            }
            *per_row[r].entry(c).or_insert(0.0) += v;
        }
        let mut row_ptr = Vec::with_capacity(rows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for row in &per_row {
            let mut entries: Vec<(&usize, &f32)> = row.iter().filter(|(_, v)| **v != 0.0).collect();
            entries.sort_by_key(|(c, _)| **c);
            for (c, v) in entries {
                col_idx.push(*c);
                values.push(*v);
            }
            row_ptr.push(col_idx.len());
        }
        Ok(Self {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
            precision,
        })
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.rows, self.cols, self.precision);
        for r in 0..self.rows {
            for e in self.row_ptr[r]..self.row_ptr[r + 1] {
                out.data[r * self.cols + self.col_idx[e]] = self.values[e];
            }
        }
        out
    }

    pub fn transposed(&self) -> Result<CsrMatrix> {
        let triplets = (0..self.rows).flat_map(|r| {
            (self.row_ptr[r]..self.row_ptr[r + 1])
                .map(move |e| (self.col_idx[e], r, self.values[e]))
        });
        CsrMatrix::from_triplets(self.cols, self.rows, triplets.collect::<Vec<_>>(), self.precision)
    }
}

/// Converts a dense matrix to CSR, dropping zeros. Round-tripping back to
/// dense reproduces the input values.
pub fn to_csr(dense: &DenseMatrix) -> CsrMatrix {
    let mut row_ptr = Vec::with_capacity(dense.rows + 1);
    let mut col_idx = Vec::new();
    let mut values = Vec::new();
    row_ptr.push(0);
    for r in 0..dense.rows {
        for c in 0..dense.cols {
            let v = dense.at(r, c);
            if v != 0.0 {
                col_idx.push(c);
                values.push(v);
            }
        }
        row_ptr.push(col_idx.len());
    }
    CsrMatrix {
        rows: dense.rows,
        cols: dense.cols,
        row_ptr,
        col_idx,
        values,
        precision: dense.precision,
    }
}

/// Bitmask of non-empty 16x16 tiles.
#[derive(Debug, Clone)]
pub struct TileMask {
    pub tile_size: usize,
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub mask: Vec<bool>,
}

impl TileMask {
    pub fn from_csr(m: &CsrMatrix) -> Self {
        let grid_rows = m.rows.div_ceil(TILE);
        let grid_cols = m.cols.div_ceil(TILE);
        let mut mask = vec![false; grid_rows * grid_cols];
        for r in 0..m.rows {
            for e in m.row_ptr[r]..m.row_ptr[r + 1] {
                mask[(r / TILE) * grid_cols + m.col_idx[e] / TILE] = true;
            }
        }
        Self {
            tile_size: TILE,
            grid_rows,
            grid_cols,
            mask,
        }
    }

    #[inline]
    pub fn non_empty(&self, tr: usize, tc: usize) -> bool {
        self.mask[tr * self.grid_cols + tc]
    }

    pub fn non_empty_count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SpmmStats {
    /// 16x16x16 tile products actually executed.
    pub tile_products: u64,
    /// (I, K, J) tile triples considered; skipped = candidates - products.
    pub candidate_pairs: u64,
}

impl SpmmStats {
    pub fn skipped(&self) -> u64 {
        self.candidate_pairs - self.tile_products
    }
}

// Dense 16x16 tile blocks for the non-empty tiles of a CSR operand.
struct TileBlocks {
    grid_cols: usize,
    blocks: HashMap<usize, Box<[f32; TILE * TILE]>>,
}

impl TileBlocks {
    fn build(m: &CsrMatrix) -> Self {
        let grid_cols = m.cols.div_ceil(TILE);
        let mut blocks: HashMap<usize, Box<[f32; TILE * TILE]>> = HashMap::new();
        for r in 0..m.rows {
            for e in m.row_ptr[r]..m.row_ptr[r + 1] {
                let c = m.col_idx[e];
                let key = (r / TILE) * grid_cols + c / TILE;
                let block = blocks
                    .entry(key)
                    .or_insert_with(|| Box::new([0.0; TILE * TILE]));
                let v = match m.precision {
                    Precision::Half => quantize_f16(m.values[e]),
                    _ => m.values[e],
                };
                block[(r % TILE) * TILE + c % TILE] = v;
            }
        }
        Self { grid_cols, blocks }
    }

    #[inline]
    fn get(&self, tr: usize, tc: usize) -> Option<&[f32; TILE * TILE]> {
        self.blocks.get(&(tr * self.grid_cols + tc)).map(|b| &**b)
    }
}

/// Tiled sparse multiply: C = A x B with B supplied pre-oriented (K x N).
/// Only tile pairs where both operand tiles are non-empty execute.
pub fn spmm_tiled(a: &CsrMatrix, b: &CsrMatrix) -> Result<(DenseMatrix, SpmmStats)> {
    if a.cols != b.rows {
        return Err(Error::Internal(format!(
            "spmm dimension mismatch: {}x{} times {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let precision = a.precision;
    let a_mask = TileMask::from_csr(a);
    let b_mask = TileMask::from_csr(b);
    let a_blocks = TileBlocks::build(a);
    let b_blocks = TileBlocks::build(b);

    let (m, n) = (a.rows, b.cols);
    let grid_m = a_mask.grid_rows;
    let grid_k = a_mask.grid_cols;
    let grid_n = b_mask.grid_cols;
    let mut c = DenseMatrix::zeros(m, n, Precision::F32);
    let mut acc_int = if precision.is_integer() {
        vec![0i64; m * n]
    } else {
        Vec::new()
    };
    let mut stats = SpmmStats {
        tile_products: 0,
        candidate_pairs: (grid_m * grid_k * grid_n) as u64,
    };

    for ti in 0..grid_m {
        for tk in 0..grid_k {
            if !a_mask.non_empty(ti, tk) {
                continue;
            }
            let a_blk = a_blocks.get(ti, tk).expect("masked tile has a block");
            for tj in 0..grid_n {
                if !b_mask.non_empty(tk, tj) {
                    continue;
                }
                let b_blk = b_blocks.get(tk, tj).expect("masked tile has a block");
                stats.tile_products += 1;
                if precision.is_integer() {
                    tile_product_int(a_blk, b_blk, ti, tj, m, n, &mut acc_int);
                } else {
                    tile_product_f32(a_blk, b_blk, ti, tj, m, n, &mut c.data);
                }
            }
        }
    }
    if precision.is_integer() {
        for (cv, &v) in c.data.iter_mut().zip(&acc_int) {
            *cv = v as f32;
        }
    }
    Ok((c, stats))
}

// One 16x16x16 multiply-accumulate; within the tile, k ascends, matching the
// dense kernel's accumulation order exactly.
fn tile_product_f32(
    a_blk: &[f32; TILE * TILE],
    b_blk: &[f32; TILE * TILE],
    ti: usize,
    tj: usize,
    m: usize,
    n: usize,
    c: &mut [f32],
) {
    let i_max = TILE.min(m - ti * TILE);
    let j_max = TILE.min(n - tj * TILE);
    for i in 0..i_max {
        let ci = (ti * TILE + i) * n + tj * TILE;
        for k in 0..TILE {
            let a_ik = a_blk[i * TILE + k];
            if a_ik == 0.0 {
                continue;
            }
            for j in 0..j_max {
                c[ci + j] += a_ik * b_blk[k * TILE + j];
            }
        }
    }
}

fn tile_product_int(
    a_blk: &[f32; TILE * TILE],
    b_blk: &[f32; TILE * TILE],
    ti: usize,
    tj: usize,
    m: usize,
    n: usize,
    c: &mut [i64],
) {
    let i_max = TILE.min(m - ti * TILE);
    let j_max = TILE.min(n - tj * TILE);
    for i in 0..i_max {
        let ci = (ti * TILE + i) * n + tj * TILE;
        for k in 0..TILE {
            let a_ik = a_blk[i * TILE + k] as i64;
            if a_ik == 0 {
                continue;
            }
            for j in 0..j_max {
                c[ci + j] += a_ik * b_blk[k * TILE + j] as i64;
            }
        }
    }
}
