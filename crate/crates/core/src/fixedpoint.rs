// SPDX-License-Identifier: Apache-2.0

//! Signed two's-complement fixed-point arithmetic with saturation.
//!
//! Values are stored as an `i64` payload interpreted under a [`QFormat`]
//! (total word bits, fractional bits). Operations mirror a DSP-style
//! datapath: products are formed at double width and truncated by an
//! arithmetic right shift (floor), sums saturate instead of wrapping, and
//! multiply-accumulate keeps the full-width sum until a single readout.
//!
//! The `overflowing_*` methods on [`FxValue`] are pure and report whether
//! saturation happened. [`FxUnit`] wraps them and counts saturation events,
//! one counter per unit instance.

use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::fmt;
use thiserror::Error;

pub const MIN_WORD_BITS: u32 = 8;
pub const MAX_WORD_BITS: u32 = 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FxError {
    #[error("word_bits must be in {MIN_WORD_BITS}..={MAX_WORD_BITS}, got {0}")]
    WordBits(u32),
    #[error("frac_bits ({frac_bits}) must be smaller than word_bits ({word_bits})")]
    FracBits { word_bits: u32, frac_bits: u32 },
    #[error("format mismatch: {0} vs {1}")]
    FormatMismatch(QFormat, QFormat),
    #[error("raw payload {raw} does not fit in {fmt}")]
    RawOutOfRange { raw: i64, fmt: QFormat },
}

/// A signed fixed-point format: `word_bits` total, `frac_bits` of them fractional.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawQFormat", into = "RawQFormat")]
pub struct QFormat {
    word_bits: u32,
    frac_bits: u32,
}

#[derive(Serialize, Deserialize)]
struct RawQFormat {
    word_bits: u32,
    frac_bits: u32,
}

impl TryFrom<RawQFormat> for QFormat {
    type Error = FxError;
    fn try_from(r: RawQFormat) -> Result<Self, FxError> {
        QFormat::new(r.word_bits, r.frac_bits)
    }
}

impl From<QFormat> for RawQFormat {
    fn from(q: QFormat) -> Self {
        RawQFormat {
            word_bits: q.word_bits,
            frac_bits: q.frac_bits,
        }
    }
}

impl QFormat {
    /// Q{32,16}.
    pub const DEFAULT: QFormat = QFormat {
        word_bits: 32,
        frac_bits: 16,
    };

    pub fn new(word_bits: u32, frac_bits: u32) -> Result<Self, FxError> {
        if !(MIN_WORD_BITS..=MAX_WORD_BITS).contains(&word_bits) {
            return Err(FxError::WordBits(word_bits));
        }
        if frac_bits >= word_bits {
            return Err(FxError::FracBits {
                word_bits,
                frac_bits,
            });
        }
        Ok(QFormat {
            word_bits,
            frac_bits,
        })
    }

    pub fn word_bits(self) -> u32 {
        self.word_bits
    }

    pub fn frac_bits(self) -> u32 {
        self.frac_bits
    }

    pub fn max_raw(self) -> i64 {
        ((1i128 << (self.word_bits - 1)) - 1) as i64
    }

    pub fn min_raw(self) -> i64 {
        (-(1i128 << (self.word_bits - 1))) as i64
    }

    /// One unit in the last place, `2^-frac_bits`.
    pub fn ulp(self) -> f64 {
        (-(self.frac_bits as f64)).exp2()
    }

    /// Scale factor `2^frac_bits`.
    fn scale(self) -> f64 {
        (self.frac_bits as f64).exp2()
    }

    pub fn max_value(self) -> f64 {
        self.max_raw() as f64 * self.ulp()
    }

    pub fn min_value(self) -> f64 {
        self.min_raw() as f64 * self.ulp()
    }

    fn clamp_wide(self, raw: i128) -> (i64, bool) {
        let (lo, hi) = (self.min_raw() as i128, self.max_raw() as i128);
        if raw > hi {
            (hi as i64, true)
        } else if raw < lo {
            (lo as i64, true)
        } else {
            (raw as i64, false)
        }
    }

    /// Round-to-nearest encode with saturation. NaN encodes to zero and is
    /// reported as a saturation event.
    pub fn overflowing_encode(self, x: f64) -> (FxValue, bool) {
        if x.is_nan() {
            return (FxValue { raw: 0, fmt: self }, true);
        }
        let scaled = (x * self.scale()).round();
        let (raw, sat) = if scaled >= self.max_raw() as f64 {
            // f64 cannot represent every i64, so compare before converting.
            (self.max_raw(), scaled > self.max_raw() as f64)
        } else if scaled <= self.min_raw() as f64 {
            (self.min_raw(), scaled < self.min_raw() as f64)
        } else {
            self.clamp_wide(scaled as i128)
        };
        (FxValue { raw, fmt: self }, sat)
    }

    pub fn encode(self, x: f64) -> FxValue {
        self.overflowing_encode(x).0
    }

    pub fn zero(self) -> FxValue {
        FxValue { raw: 0, fmt: self }
    }

    pub fn from_raw(self, raw: i64) -> Result<FxValue, FxError> {
        if raw < self.min_raw() || raw > self.max_raw() {
            return Err(FxError::RawOutOfRange { raw, fmt: self });
        }
        Ok(FxValue { raw, fmt: self })
    }
}

impl Default for QFormat {
    fn default() -> Self {
        QFormat::DEFAULT
    }
}

impl fmt::Display for QFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Q{{{},{}}}", self.word_bits, self.frac_bits)
    }
}

/// A fixed-point value: raw two's-complement payload plus its format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FxValue {
    raw: i64,
    fmt: QFormat,
}

impl FxValue {
    pub fn raw(self) -> i64 {
        self.raw
    }

    pub fn format(self) -> QFormat {
        self.fmt
    }

    /// Exact decode, `raw * 2^-frac_bits`. Exact whenever `raw` fits in 53 bits.
    pub fn to_f64(self) -> f64 {
        self.raw as f64 * self.fmt.ulp()
    }

    fn check(self, other: FxValue) -> Result<QFormat, FxError> {
        if self.fmt != other.fmt {
            return Err(FxError::FormatMismatch(self.fmt, other.fmt));
        }
        Ok(self.fmt)
    }

    pub fn overflowing_add(self, rhs: FxValue) -> Result<(FxValue, bool), FxError> {
        let fmt = self.check(rhs)?;
        let (raw, sat) = fmt.clamp_wide(self.raw as i128 + rhs.raw as i128);
        Ok((FxValue { raw, fmt }, sat))
    }

    pub fn overflowing_sub(self, rhs: FxValue) -> Result<(FxValue, bool), FxError> {
        let fmt = self.check(rhs)?;
        let (raw, sat) = fmt.clamp_wide(self.raw as i128 - rhs.raw as i128);
        Ok((FxValue { raw, fmt }, sat))
    }

    /// Double-width product, arithmetic shift right by `frac_bits` (floor), saturate.
    pub fn overflowing_mul(self, rhs: FxValue) -> Result<(FxValue, bool), FxError> {
        let fmt = self.check(rhs)?;
        let wide = (self.raw as i128 * rhs.raw as i128) >> fmt.frac_bits;
        let (raw, sat) = fmt.clamp_wide(wide);
        Ok((FxValue { raw, fmt }, sat))
    }

    pub fn overflowing_neg(self) -> (FxValue, bool) {
        let (raw, sat) = self.fmt.clamp_wide(-(self.raw as i128));
        (FxValue { raw, fmt: self.fmt }, sat)
    }
}

impl PartialOrd for FxValue {
    /// Values in different formats are unordered.
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        (self.fmt == other.fmt).then(|| self.raw.cmp(&other.raw))
    }
}

impl fmt::Display for FxValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_f64())
    }
}

/// Double-width multiply-accumulate register.
///
/// Products are summed at `2 * frac_bits` fractional precision with no
/// intermediate rounding. The register is an `i128`, which holds at least
/// 2^16 full-width products for word lengths up to 56 bits; beyond that the
/// sum saturates at the register's limits and the readout reports it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WideAccumulator {
    sum: i128,
    fmt: QFormat,
    saturated: bool,
}

impl WideAccumulator {
    pub fn new(fmt: QFormat) -> Self {
        WideAccumulator {
            sum: 0,
            fmt,
            saturated: false,
        }
    }

    pub fn format(&self) -> QFormat {
        self.fmt
    }

    /// Raw register contents, `2 * frac_bits` fractional bits.
    pub fn wide_raw(&self) -> i128 {
        self.sum
    }

    fn accumulate(&mut self, term: i128) {
        match self.sum.checked_add(term) {
            Some(s) => self.sum = s,
            None => {
                self.sum = if term > 0 { i128::MAX } else { i128::MIN };
                self.saturated = true;
            }
        }
    }

    /// `acc += a * b` at full precision.
    pub fn mac(&mut self, a: FxValue, b: FxValue) -> Result<(), FxError> {
        a.check(b)?;
        if a.fmt != self.fmt {
            return Err(FxError::FormatMismatch(self.fmt, a.fmt));
        }
        self.accumulate(a.raw as i128 * b.raw as i128);
        Ok(())
    }

    /// `acc += v`, aligned to the double-width fraction (exact).
    pub fn add(&mut self, v: FxValue) -> Result<(), FxError> {
        if v.fmt != self.fmt {
            return Err(FxError::FormatMismatch(self.fmt, v.fmt));
        }
        self.accumulate((v.raw as i128) << self.fmt.frac_bits);
        Ok(())
    }

    /// Single floor shift back to the word format, then saturate.
    pub fn overflowing_readout(&self) -> (FxValue, bool) {
        let (raw, sat) = self.fmt.clamp_wide(self.sum >> self.fmt.frac_bits);
        (FxValue { raw, fmt: self.fmt }, sat || self.saturated)
    }
}

/// Fixed-point arithmetic unit for one format with a saturation counter.
#[derive(Debug, Clone)]
pub struct FxUnit {
    fmt: QFormat,
    overflows: u64,
}

impl FxUnit {
    pub fn new(fmt: QFormat) -> Self {
        FxUnit { fmt, overflows: 0 }
    }

    pub fn format(&self) -> QFormat {
        self.fmt
    }

    /// Number of saturation events seen by this unit.
    pub fn overflow_count(&self) -> u64 {
        self.overflows
    }

    pub fn reset_overflow_count(&mut self) {
        self.overflows = 0;
    }

    fn count<T>(&mut self, (v, sat): (T, bool)) -> T {
        if sat {
            self.overflows += 1;
        }
        v
    }

    pub fn encode(&mut self, x: f64) -> FxValue {
        let r = self.fmt.overflowing_encode(x);
        self.count(r)
    }

    pub fn add_sat(&mut self, a: FxValue, b: FxValue) -> Result<FxValue, FxError> {
        let r = a.overflowing_add(b)?;
        Ok(self.count(r))
    }

    pub fn sub_sat(&mut self, a: FxValue, b: FxValue) -> Result<FxValue, FxError> {
        let r = a.overflowing_sub(b)?;
        Ok(self.count(r))
    }

    pub fn mul(&mut self, a: FxValue, b: FxValue) -> Result<FxValue, FxError> {
        let r = a.overflowing_mul(b)?;
        Ok(self.count(r))
    }

    pub fn accumulator(&self) -> WideAccumulator {
        WideAccumulator::new(self.fmt)
    }

    pub fn readout(&mut self, acc: &WideAccumulator) -> FxValue {
        let r = acc.overflowing_readout();
        self.count(r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const Q16: QFormat = QFormat::DEFAULT;

    #[test]
    fn format_validation() {
        assert!(QFormat::new(7, 0).is_err());
        assert!(QFormat::new(65, 0).is_err());
        assert!(QFormat::new(16, 16).is_err());
        assert!(QFormat::new(64, 63).is_ok());
        let err = QFormat::new(32, 40).unwrap_err();
        assert!(err.to_string().contains("frac_bits"));
    }

    #[test]
    fn range_and_resolution() {
        let q = QFormat::new(8, 4).unwrap();
        assert_eq!(q.max_value(), 8.0 - 1.0 / 16.0);
        assert_eq!(q.min_value(), -8.0);
        assert_eq!(q.ulp(), 1.0 / 16.0);
        let q64 = QFormat::new(64, 0).unwrap();
        assert_eq!(q64.max_raw(), i64::MAX);
        assert_eq!(q64.min_raw(), i64::MIN);
    }

    #[test]
    fn encode_examples() {
        assert_eq!(Q16.encode(0.5).raw(), 32768);
        assert_eq!(Q16.encode(0.0).raw(), 0);
        assert_eq!(QFormat::new(12, 3).unwrap().encode(0.0).raw(), 0);
        let (v, sat) = Q16.overflowing_encode(2f64.powi(20));
        assert_eq!(v.raw(), Q16.max_raw());
        assert!(sat);
        let (v, sat) = Q16.overflowing_encode(-1e30);
        assert_eq!(v.raw(), Q16.min_raw());
        assert!(sat);
        assert!(Q16.overflowing_encode(f64::NAN).1);
    }

    #[test]
    fn encode_at_64_bits_saturates_without_wrapping() {
        let q = QFormat::new(64, 0).unwrap();
        assert_eq!(q.encode(1e300).raw(), i64::MAX);
        assert_eq!(q.encode(-1e300).raw(), i64::MIN);
        assert_eq!(q.encode(-(2f64.powi(63))).raw(), i64::MIN);
    }

    #[test]
    fn decode_examples() {
        assert_eq!(Q16.from_raw(32768).unwrap().to_f64(), 0.5);
        assert_eq!(Q16.from_raw(-65536).unwrap().to_f64(), -1.0);
        assert!(Q16.from_raw(1 << 40).is_err());
    }

    #[test]
    fn round_trip_grid_scan() {
        // Every grid point in the format's range comes back within half an ulp.
        let half = Q16.ulp() / 2.0;
        let mut x = -200.0;
        while x < 200.0 {
            let err = (Q16.encode(x).to_f64() - x).abs();
            assert!(err <= half + f64::EPSILON * 200.0, "x={x} err={err}");
            x += 0.000_731;
        }
        assert!((Q16.encode(0.3).to_f64() - 0.3).abs() <= Q16.ulp());
    }

    #[test]
    fn add_examples() {
        let mut u = FxUnit::new(Q16);
        let q = u.encode(0.25);
        assert_eq!(u.add_sat(q, q).unwrap().to_f64(), 0.5);
        let max = Q16.from_raw(Q16.max_raw()).unwrap();
        let one_ulp = Q16.from_raw(1).unwrap();
        assert_eq!(u.add_sat(max, one_ulp).unwrap(), max);
        assert_eq!(u.overflow_count(), 1);
        assert_eq!(u.add_sat(q, Q16.zero()).unwrap(), q);
        let other = QFormat::new(16, 8).unwrap().encode(0.25);
        assert!(matches!(
            u.add_sat(q, other),
            Err(FxError::FormatMismatch(..))
        ));
    }

    #[test]
    fn mul_examples() {
        let mut u = FxUnit::new(Q16);
        let h = u.encode(0.5);
        assert_eq!(u.mul(h, h).unwrap().to_f64(), 0.25);
        let one = u.encode(1.0);
        for raw in [-77_777i64, -1, 0, 1, 3, 65_535, 1 << 20] {
            let x = Q16.from_raw(raw).unwrap();
            assert_eq!(u.mul(x, one).unwrap(), x);
        }
        let big = u.encode(30000.0);
        u.mul(big, big).unwrap();
        assert_eq!(u.overflow_count(), 1);
    }

    #[test]
    fn mul_floors_negative_products() {
        // -1 ulp * 0.5 = -0.5 ulp, floors to -1 ulp.
        let neg = Q16.from_raw(-1).unwrap();
        let h = Q16.encode(0.5);
        assert_eq!(neg.overflowing_mul(h).unwrap().0.raw(), -1);
        let pos = Q16.from_raw(1).unwrap();
        assert_eq!(pos.overflowing_mul(h).unwrap().0.raw(), 0);
    }

    #[test]
    fn mac_exactness() {
        let mut u = FxUnit::new(Q16);
        let zero = Q16.zero();
        let mut acc = u.accumulator();
        for _ in 0..10 {
            acc.mac(zero, zero).unwrap();
        }
        assert_eq!(u.readout(&acc).raw(), 0);

        // Exact products: two-term mac equals add_sat(mul, mul).
        let (a, b, c, d) = (
            u.encode(0.5),
            u.encode(0.25),
            u.encode(-1.5),
            u.encode(0.125),
        );
        let mut acc = u.accumulator();
        acc.mac(a, b).unwrap();
        acc.mac(c, d).unwrap();
        let ab = u.mul(a, b).unwrap();
        let cd = u.mul(c, d).unwrap();
        assert_eq!(u.readout(&acc), u.add_sat(ab, cd).unwrap());
    }

    #[test]
    fn accumulator_bias_alignment_is_exact() {
        let mut u = FxUnit::new(Q16);
        let mut acc = u.accumulator();
        let b = Q16.from_raw(-12345).unwrap();
        acc.add(b).unwrap();
        assert_eq!(u.readout(&acc), b);
    }

    #[test]
    fn wide_accumulator_saturates_at_64_bits() {
        let q = QFormat::new(64, 0).unwrap();
        let mut u = FxUnit::new(q);
        let m = q.from_raw(i64::MAX).unwrap();
        let mut acc = u.accumulator();
        for _ in 0..4 {
            acc.mac(m, m).unwrap();
        }
        assert_eq!(u.readout(&acc).raw(), i64::MAX);
        assert_eq!(u.overflow_count(), 1);
    }

    #[test]
    fn ordering_requires_same_format() {
        let a = Q16.encode(0.25);
        let b = Q16.encode(0.5);
        assert!(a < b);
        let c = QFormat::new(16, 8).unwrap().encode(0.5);
        assert_eq!(a.partial_cmp(&c), None);
    }

    #[test]
    fn format_serde() {
        let s = serde_json::to_string(&Q16).unwrap();
        assert_eq!(s, r#"{"word_bits":32,"frac_bits":16}"#);
        assert_eq!(serde_json::from_str::<QFormat>(&s).unwrap(), Q16);
        assert!(serde_json::from_str::<QFormat>(r#"{"word_bits":4,"frac_bits":1}"#).is_err());
    }
}
