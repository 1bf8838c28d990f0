//! Reference computations the benchmark drivers verify against. These stay
//! independent of the kernel module: plain 64-bit arithmetic, simple loops.

use rayon::prelude::*;

/// Schoolbook row-parallel f64 matrix product (row-major operands).
pub fn gemm_f64_reference(a: &[f64], m: usize, k: usize, b: &[f64], n: usize) -> Vec<f64> {
    let mut c = vec![0.0f64; m * n];
    if m == 0 || k == 0 || n == 0 {
        return c;
    }
    c.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        for kk in 0..k {
            let a_ik = a[i * k + kk];
            if a_ik == 0.0 {
                continue;
            }
            let b_row = &b[kk * n..kk * n + n];
            for (cv, &bv) in row.iter_mut().zip(b_row) {
                *cv += a_ik * bv;
            }
        }
    });
    c
}

/// Direct power iteration with the damping recurrence
/// `r'(v) = (1-alpha)/n + alpha * sum over u->v of r(u)/outdeg(u)`;
/// nodes without out-edges simply contribute nothing (their mass is not
/// redistributed, matching the SQL formulation).
pub fn power_iteration_reference(
    edges: &[(usize, usize)],
    n: usize,
    alpha: f64,
    iterations: usize,
) -> Vec<f64> {
    let mut outdeg = vec![0usize; n];
    for &(src, _) in edges {
        outdeg[src] += 1;
    }
    let base = (1.0 - alpha) / n as f64;
    let mut rank = vec![base; n];
    let mut next = vec![0.0f64; n];
    for _ in 0..iterations {
        next.fill(base);
        for &(src, dst) in edges {
            next[dst] += alpha * rank[src] / outdeg[src] as f64;
        }
        std::mem::swap(&mut rank, &mut next);
    }
    rank
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_gemm_two_by_two() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [5.0, 6.0, 7.0, 8.0];
        let c = gemm_f64_reference(&a, 2, 2, &b, 2);
        assert_eq!(c, vec![19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn cycle_ranks_are_uniform_after_convergence() {
        let edges = vec![(0, 1), (1, 2), (2, 0)];
        let ranks = power_iteration_reference(&edges, 3, 0.85, 300);
        for r in &ranks {
            assert!((r - 1.0 / 3.0).abs() < 1e-9, "{ranks:?}");
        }
    }
}
