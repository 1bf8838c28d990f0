//! Storage precisions and the binary16 emulation.
//!
//! Half precision is emulated on a 32-bit carrier: values are rounded to the
//! nearest IEEE binary16 (ties to even) at fill time and products accumulate
//! in 32-bit float. Integer precisions are exact within their declared range
//! and accumulate in 64-bit integers.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    Int4,
    Int8,
    Half,
    F32,
}

/// Largest finite binary16 value.
pub const HALF_MAX: f64 = 65504.0;
/// Integers with |x| <= this are exactly representable in binary16.
pub const HALF_EXACT_INT: f64 = 2048.0;
/// Integer sums up to this bound are exact in a 32-bit float accumulator.
pub const F32_EXACT_ACCUM: f64 = 16_777_216.0; // 2^24

impl Precision {
    pub fn element_bytes(self) -> f64 {
        match self {
            Precision::Int4 => 0.5,
            Precision::Int8 => 1.0,
            Precision::Half => 2.0,
            Precision::F32 => 4.0,
        }
    }

    pub fn is_integer(self) -> bool {
        matches!(self, Precision::Int4 | Precision::Int8)
    }

    pub fn name(self) -> &'static str {
        match self {
            Precision::Int4 => "int4",
            Precision::Int8 => "int8",
            Precision::Half => "half",
            Precision::F32 => "f32",
        }
    }
}

impl std::fmt::Display for Precision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.name())
    }
}

/// Rounds an f32 to the nearest binary16 (round-to-nearest-even) and returns
/// it widened back to f32. Out-of-range magnitudes become infinities.
pub fn quantize_f16(x: f32) -> f32 {
    f16_bits_to_f32(f32_to_f16_bits(x))
}

fn f32_to_f16_bits(x: f32) -> u16 {
    let bits = x.to_bits();
    let sign = ((bits >> 16) & 0x8000) as u16;
    let exp = ((bits >> 23) & 0xff) as i32;
    let mant = bits & 0x007f_ffff;

    if exp == 0xff {
        // Inf / NaN
        return sign | 0x7c00 | if mant != 0 { 0x0200 } else { 0 };
    }

    // Unbiased exponent, then rebias for binary16 (bias 15).
    let unbiased = exp - 127;
    if unbiased > 15 {
        return sign | 0x7c00; // overflow to infinity
    }
    if unbiased >= -14 {
        // Normal range: keep 10 mantissa bits, round to nearest even on the
        // 13 dropped bits.
        let mant16 = mant >> 13;
        let rest = mant & 0x1fff;
        let halfway = 0x1000;
        let mut out = sign | (((unbiased + 15) as u16) << 10) | mant16 as u16;
        if rest > halfway || (rest == halfway && (mant16 & 1) == 1) {
            out = out.wrapping_add(1); // may carry into exponent; that is correct rounding
        }
        return out;
    }
    if unbiased >= -25 {
        // Subnormal half: shift the implicit leading 1 into the mantissa.
        let full = mant | 0x0080_0000;
        let shift = (-14 - unbiased) as u32 + 13;
        let mant16 = (full >> shift) as u16;
        let rest = full & ((1u32 << shift) - 1);
        let halfway = 1u32 << (shift - 1);
        let mut out = sign | mant16;
        if rest > halfway || (rest == halfway && (mant16 & 1) == 1) {
            out = out.wrapping_add(1);
        }
        return out;
    }
    sign // underflow to signed zero
}

fn f16_bits_to_f32(h: u16) -> f32 {
    let sign = ((h as u32) & 0x8000) << 16;
    let exp = ((h >> 10) & 0x1f) as u32;
    let mant = (h & 0x03ff) as u32;
    let bits = match (exp, mant) {
        (0, 0) => sign,
        (0, m) => {
            // subnormal m * 2^-24: normalize the leading bit away
            let shift = m.leading_zeros() - 21; // 10 - position of leading bit
            let mant32 = (m << shift) & 0x03ff;
            let exp32 = 113 - shift; // 127 - 14 - shift
            sign | (exp32 << 23) | (mant32 << 13)
        }
        (0x1f, 0) => sign | 0x7f80_0000,
        (0x1f, m) => sign | 0x7f80_0000 | (m << 13),
        (e, m) => sign | ((e + 127 - 15) << 23) | (m << 13),
    };
    f32::from_bits(bits)
}

/// Converts a source value into the storage precision, failing when the value
/// is outside the precision's representable (or exact-integer) range.
pub fn fill_value(x: f64, precision: Precision) -> Result<f32> {
    match precision {
        Precision::F32 => Ok(x as f32),
        Precision::Half => {
            if x.abs() > HALF_MAX {
                return Err(Error::PrecisionOverflow {
                    message: format!("|{x}| exceeds the half representable magnitude {HALF_MAX}"),
                });
            }
            Ok(quantize_f16(x as f32))
        }
        Precision::Int8 | Precision::Int4 => {
            if x.fract() != 0.0 {
                return Err(Error::PrecisionOverflow {
                    message: format!("{x} is not an integer for {precision} storage"),
                });
            }
            let (lo, hi) = if precision == Precision::Int8 {
                (-128.0, 127.0)
            } else {
                (-8.0, 7.0)
            };
            if x < lo || x > hi {
                return Err(Error::PrecisionOverflow {
                    message: format!("{x} outside {precision} range [{lo}, {hi}]"),
                });
            }
            Ok(x as f32)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn quantize_known_values() {
        assert_eq!(quantize_f16(1.0), 1.0);
        assert_eq!(quantize_f16(-1.0), -1.0);
        assert_eq!(quantize_f16(2048.0), 2048.0);
        // 2049 is not representable: rounds to even 2048
        assert_eq!(quantize_f16(2049.0), 2048.0);
        assert_eq!(quantize_f16(2051.0), 2052.0);
        assert_eq!(quantize_f16(65504.0), 65504.0);
        assert_eq!(quantize_f16(65520.0), f32::INFINITY); // beyond max rounds up
        assert_eq!(quantize_f16(0.0).to_bits(), 0.0f32.to_bits());
        assert_eq!(quantize_f16(-0.0).to_bits(), (-0.0f32).to_bits());
        // smallest positive subnormal half
        assert_eq!(quantize_f16(5.960_464_5e-8), 5.960_464_5e-8);
        // halfway below it rounds to zero (ties to even)
        assert_eq!(quantize_f16(2.980_232_2e-8), 0.0);
    }

    #[test]
    fn integers_up_to_2048_are_exact() {
        for i in 0..=2048i32 {
            let x = i as f32;
            assert_eq!(quantize_f16(x), x, "{i}");
            assert_eq!(quantize_f16(-x), -x, "-{i}");
        }
    }

    #[test]
    fn fill_value_range_checks() {
        assert!(fill_value(127.0, Precision::Int8).is_ok());
        assert!(fill_value(128.0, Precision::Int8).is_err());
        assert!(fill_value(7.0, Precision::Int4).is_ok());
        assert!(fill_value(8.0, Precision::Int4).is_err());
        assert!(fill_value(0.5, Precision::Int8).is_err());
        assert!(fill_value(70000.0, Precision::Half).is_err());
        assert!(fill_value(70000.0, Precision::F32).is_ok());
    }

    proptest! {
        #[test]
        fn quantization_is_idempotent(x in prop::num::f32::NORMAL) {
            let once = quantize_f16(x);
            let twice = quantize_f16(once);
            prop_assert_eq!(once.to_bits(), twice.to_bits());
        }

        #[test]
        fn quantization_error_within_half_ulp(x in -60000.0f32..60000.0) {
            let q = quantize_f16(x);
            // ulp at |x| for binary16, lower-bounded by the subnormal step
            let exp = x.abs().log2().floor().max(-14.0);
            let ulp = 2f32.powf(exp - 10.0);
            prop_assert!((q - x).abs() <= ulp / 2.0 + f32::EPSILON, "x={x} q={q} ulp={ulp}");
        }
    }
}
