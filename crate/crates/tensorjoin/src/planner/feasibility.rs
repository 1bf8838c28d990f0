//! Precision feasibility: bounds the largest value the plan's multiply chain
//! can produce (m1 * m2 * n over the widest contraction) and picks the most
//! compact type whose exact range covers the inputs and whose accumulation
//! stays exact for the bound. Inputs beyond the half representable magnitude
//! make the matrix path infeasible.

use crate::error::{Error, Result};
use crate::kernels::{Precision, F32_EXACT_ACCUM, HALF_EXACT_INT, HALF_MAX};

/// Magnitude and integrality of one operand's fill values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperandProfile {
    /// max(|min|, |max|) over the values written into the matrix;
    /// 1.0 for indicator sides.
    pub magnitude: f64,
    pub integral: bool,
}

impl OperandProfile {
    pub const INDICATOR: OperandProfile = OperandProfile {
        magnitude: 1.0,
        integral: true,
    };
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport {
    pub feasible: bool,
    pub chosen_type: Option<Precision>,
    /// Accumulation provably exact at the bound (integer inputs, results
    /// within the 32-bit accumulator's exact-integer range).
    pub exact: bool,
    pub max_result_bound: f64,
    pub reason: Option<String>,
}

impl FeasibilityReport {
    pub fn infeasible(bound: f64, reason: impl Into<String>) -> Self {
        Self {
            feasible: false,
            chosen_type: None,
            exact: false,
            max_result_bound: bound,
            reason: Some(reason.into()),
        }
    }

    /// Precisions usable for this plan, most compact first.
    pub fn candidate_types(&self) -> Vec<Precision> {
        match self.chosen_type {
            None => vec![],
            Some(Precision::Int4) => vec![Precision::Int4, Precision::Int8, Precision::Half],
            Some(Precision::Int8) => vec![Precision::Int8, Precision::Half],
            Some(Precision::Half) => vec![Precision::Half],
            Some(Precision::F32) => vec![Precision::F32],
        }
    }
}

/// `shared_len` is the longest contraction the plan performs (join-domain
/// size for plain joins; the reduction length for aggregate chains).
pub fn feasibility_test(
    left: OperandProfile,
    right: OperandProfile,
    shared_len: usize,
) -> Result<FeasibilityReport> {
    if !left.magnitude.is_finite() || !right.magnitude.is_finite() {
        return Err(Error::Precondition(
            "operand stats missing or non-finite for the feasibility test".into(),
        ));
    }
    let bound = left.magnitude * right.magnitude * shared_len as f64;
    let max_input = left.magnitude.max(right.magnitude);
    let integral = left.integral && right.integral;

    if max_input > HALF_MAX {
        return Ok(FeasibilityReport::infeasible(
            bound,
            format!(
                "input magnitude {max_input} exceeds the half representable magnitude {HALF_MAX}"
            ),
        ));
    }

    let (chosen, exact) = if integral && bound <= F32_EXACT_ACCUM {
        if max_input <= 7.0 {
            (Precision::Int4, true)
        } else if max_input <= 127.0 {
            (Precision::Int8, true)
        } else if max_input <= HALF_EXACT_INT {
            (Precision::Half, true)
        } else {
            (Precision::Half, false)
        }
    } else {
        (Precision::Half, false)
    };
    Ok(FeasibilityReport {
        feasible: true,
        chosen_type: Some(chosen),
        exact,
        max_result_bound: bound,
        reason: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_values_pick_int4() {
        // brute-force max over exhaustive 0/1 products: a length-n
        // accumulation of the largest pairwise product bounds the result
        let n = 4096usize;
        let worst_product: i64 = [0i64, 1]
            .iter()
            .flat_map(|a| [0i64, 1].iter().map(move |b| a * b))
            .max()
            .unwrap();
        let brute_max = n as i64 * worst_product;
        let r = feasibility_test(OperandProfile::INDICATOR, OperandProfile::INDICATOR, n).unwrap();
        assert!(r.feasible);
        assert_eq!(r.chosen_type, Some(Precision::Int4));
        assert!(r.exact);
        assert_eq!(r.max_result_bound, brute_max as f64);
        assert!(r.max_result_bound < F32_EXACT_ACCUM);
    }

    #[test]
    fn wide_integers_are_half_approximate() {
        let p = OperandProfile {
            magnitude: 32768.0,
            integral: true,
        };
        let r = feasibility_test(p, p, 8192).unwrap();
        assert!(r.feasible);
        assert_eq!(r.chosen_type, Some(Precision::Half));
        assert!(!r.exact, "bound {} exceeds exact accumulation", r.max_result_bound);
    }

    #[test]
    fn beyond_half_range_is_infeasible() {
        let p = OperandProfile {
            magnitude: 2f64.powi(31),
            integral: true,
        };
        let r = feasibility_test(p, p, 16).unwrap();
        assert!(!r.feasible);
        assert!(r.reason.unwrap().contains("65504"));
    }

    #[test]
    fn exactness_boundary_at_accumulator_range() {
        let p = OperandProfile {
            magnitude: 100.0,
            integral: true,
        };
        // 100 * 100 * 1024 = 10_240_000 < 2^24: exact int8
        let r = feasibility_test(p, p, 1024).unwrap();
        assert_eq!(r.chosen_type, Some(Precision::Int8));
        assert!(r.exact);
        // 100 * 100 * 4096 = 40_960_000 > 2^24: approximate half
        let r = feasibility_test(p, p, 4096).unwrap();
        assert_eq!(r.chosen_type, Some(Precision::Half));
        assert!(!r.exact);
    }

    #[test]
    fn float_inputs_are_approximate() {
        let p = OperandProfile {
            magnitude: 1.5,
            integral: false,
        };
        let r = feasibility_test(p, OperandProfile::INDICATOR, 16).unwrap();
        assert_eq!(r.chosen_type, Some(Precision::Half));
        assert!(!r.exact);
    }
}
