//! Dense matrix type and the dense multiply kernel.
//!
//! The float kernel mimics a tensor-unit contract: operands are stored in
//! the plan's precision (f16 values live on an f32 carrier) and products
//! accumulate in f32, added in ascending-k order per output element. That
//! fixed order is what makes the tiled sparse kernel bit-comparable.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::precision::{quantize_f16, Precision};

pub const TILE: usize = 16;

/// Row-major dense matrix on an f32 carrier.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
    pub precision: Precision,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize, precision: Precision) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
            precision,
        }
    }

    pub fn from_rows(rows: Vec<Vec<f32>>, precision: Precision) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend(row);
        }
        Self {
            rows: r,
            cols: c,
            data,
            precision,
        }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f32 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transposed(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.cols, self.rows, self.precision);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.at(i, j);
            }
        }
        out
    }

    /// All-ones row vector (1 x n).
    pub fn ones_row(n: usize, precision: Precision) -> Self {
        Self {
            rows: 1,
            cols: n,
            data: vec![1.0; n],
            precision,
        }
    }

    /// All-ones column vector (n x 1).
    pub fn ones_col(n: usize, precision: Precision) -> Self {
        Self {
            rows: n,
            cols: 1,
            data: vec![1.0; n],
            precision,
        }
    }

    pub fn logical_bytes(&self) -> f64 {
        self.rows as f64 * self.cols as f64 * self.precision.element_bytes()
    }
}

/// C = A x B under the storage-precision contract. Result carrier is f32.
pub fn gemm(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    if a.cols != b.rows {
        return Err(Error::Internal(format!(
            "gemm dimension mismatch: {}x{} times {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let precision = a.precision;
    let mut c = DenseMatrix::zeros(a.rows, b.cols, Precision::F32);
    if precision.is_integer() {
        gemm_int(&a.data, &b.data, a.rows, a.cols, b.cols, &mut c.data);
    } else {
        let aq = quantized_view(a);
        let bq = quantized_view(b);
        gemm_f32(&aq, a.rows, a.cols, &bq, b.cols, &mut c.data);
    }
    Ok(c)
}

/// Accumulates A x B into an existing f32 buffer (used by the blocked path).
pub fn gemm_accumulate(a: &DenseMatrix, b: &DenseMatrix, c: &mut [f32]) -> Result<()> {
    if a.cols != b.rows {
        return Err(Error::Internal("gemm_accumulate dimension mismatch".into()));
    }
    gemm_accumulate_raw(
        &a.data,
        &b.data,
        (a.rows, a.cols, b.cols),
        a.precision,
        c,
    );
    Ok(())
}

/// Accumulation kernel over raw row-major slices; dimensions are
/// (M, K, N) and `c` has length M*N. Callers guarantee shape agreement.
pub fn gemm_accumulate_raw(
    a: &[f32],
    b: &[f32],
    dims: (usize, usize, usize),
    precision: Precision,
    c: &mut [f32],
) {
    let (m, k, n) = dims;
    if precision.is_integer() {
        gemm_int(a, b, m, k, n, c);
    } else if precision == Precision::Half {
        let aq: Vec<f32> = a.iter().map(|&x| quantize_f16(x)).collect();
        let bq: Vec<f32> = b.iter().map(|&x| quantize_f16(x)).collect();
        gemm_f32(&aq, m, k, &bq, n, c);
    } else {
        gemm_f32(a, m, k, b, n, c);
    }
}

// Fills are already quantized; re-quantizing is idempotent and guards
// matrices constructed directly in tests.
fn quantized_view(m: &DenseMatrix) -> std::borrow::Cow<'_, [f32]> {
    match m.precision {
        Precision::Half => std::borrow::Cow::Owned(m.data.iter().map(|&x| quantize_f16(x)).collect()),
        _ => std::borrow::Cow::Borrowed(&m.data),
    }
}

// f32 kernel: row-tile parallel, k in ascending tile chunks, j vectorized.
// Per output element the additions happen in ascending global k.
fn gemm_f32(a: &[f32], m: usize, k: usize, b: &[f32], n: usize, c: &mut [f32]) {
    if m == 0 || k == 0 || n == 0 {
        return;
    }
    c.par_chunks_mut(TILE * n)
        .enumerate()
        .for_each(|(tile_idx, c_block)| {
            let i0 = tile_idx * TILE;
            let i_max = (i0 + TILE).min(m);
            for kt in (0..k).step_by(TILE) {
                let k_max = (kt + TILE).min(k);
                for i in i0..i_max {
                    let c_row = &mut c_block[(i - i0) * n..(i - i0) * n + n];
                    for kk in kt..k_max {
                        let a_ik = a[i * k + kk];
                        if a_ik == 0.0 {
                            continue; // adding a 0*b_kj product never changes the accumulator
                        }
                        let b_row = &b[kk * n..kk * n + n];
                        for (cv, &bv) in c_row.iter_mut().zip(b_row) {
                            *cv += a_ik * bv;
                        }
                    }
                }
            }
        });
}

// Exact integer kernel: i64 accumulation, result converted to f32.
fn gemm_int(a: &[f32], b: &[f32], m: usize, k: usize, n: usize, c: &mut [f32]) {
    if m == 0 || k == 0 || n == 0 {
        return;
    }
    let ai: Vec<i64> = a.iter().map(|&x| x as i64).collect();
    let bi: Vec<i64> = b.iter().map(|&x| x as i64).collect();
    let acc: Vec<i64> = (0..m)
        .into_par_iter()
        .flat_map_iter(|i| {
            let mut row = vec![0i64; n];
            for kk in 0..k {
                let a_ik = ai[i * k + kk];
                if a_ik == 0 {
                    continue;
                }
                for (r, &bv) in row.iter_mut().zip(&bi[kk * n..kk * n + n]) {
                    *r += a_ik * bv;
                }
            }
            row
        })
        .collect();
    for (cv, &v) in c.iter_mut().zip(&acc) {
        *cv += v as f32;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identity_times_matrix_is_exact() {
        let m = DenseMatrix::from_rows(
            vec![vec![1.5, -2.0], vec![3.25, 4.0]],
            Precision::F32,
        );
        let mut eye = DenseMatrix::zeros(2, 2, Precision::F32);
        eye.data[0] = 1.0;
        eye.data[3] = 1.0;
        let c = gemm(&eye, &m).unwrap();
        assert_eq!(c.data, m.data);
    }

    #[test]
    fn dimension_mismatch_errors() {
        let a = DenseMatrix::zeros(2, 3, Precision::F32);
        let b = DenseMatrix::zeros(4, 2, Precision::F32);
        assert!(gemm(&a, &b).is_err());
    }

    fn schoolbook_i64(a: &DenseMatrix, b: &DenseMatrix) -> Vec<i64> {
        let (m, k, n) = (a.rows, a.cols, b.cols);
        let mut c = vec![0i64; m * n];
        for i in 0..m {
            for j in 0..n {
                let mut s = 0i64;
                for kk in 0..k {
                    s += a.at(i, kk) as i64 * b.at(kk, j) as i64;
                }
                c[i * n + j] = s;
            }
        }
        c
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn f32_gemm_matches_integer_oracle(
            m in 1usize..24, k in 1usize..24, n in 1usize..24,
            seed in 0u64..10_000,
        ) {
            let mut s = seed;
            let mut next = || {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 33) % 201) as i64 - 100
            };
            let a = DenseMatrix {
                rows: m, cols: k,
                data: (0..m * k).map(|_| next() as f32).collect(),
                precision: Precision::F32,
            };
            let b = DenseMatrix {
                rows: k, cols: n,
                data: (0..k * n).map(|_| next() as f32).collect(),
                precision: Precision::F32,
            };
            let c = gemm(&a, &b).unwrap();
            let oracle = schoolbook_i64(&a, &b);
            for (got, want) in c.data.iter().zip(&oracle) {
                prop_assert_eq!(*got as i64, *want);
            }
        }

        #[test]
        fn binary_matrices_are_exact(
            m in 1usize..32, k in 1usize..32, n in 1usize..32,
            seed in 0u64..10_000,
        ) {
            let mut s = seed;
            let mut bit = || {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 40) & 1) as f32
            };
            for precision in [Precision::Half, Precision::F32, Precision::Int8] {
                let a = DenseMatrix {
                    rows: m, cols: k,
                    data: (0..m * k).map(|_| bit()).collect(),
                    precision,
                };
                let b = DenseMatrix {
                    rows: k, cols: n,
                    data: (0..k * n).map(|_| bit()).collect(),
                    precision,
                };
                let c = gemm(&a, &b).unwrap();
                let oracle = schoolbook_i64(&a, &b);
                for (got, want) in c.data.iter().zip(&oracle) {
                    prop_assert_eq!(*got as i64, *want);
                }
            }
        }
    }
}
