// SPDX-License-Identifier: Apache-2.0

//! ROM-style activation tables for the logistic sigmoid and its derivative.
//!
//! A table covers `[lo, hi)` with `depth` equal cells. Entry `k` stores the
//! function at the cell's left edge `lo + k * (hi - lo) / depth`; lookups are
//! a direct indexed read with the index clamped to the table, so inputs
//! outside the range return the first or last entry.

use crate::fixedpoint::{FxValue, QFormat};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_LUT_LO: f64 = -8.0;
pub const DEFAULT_LUT_HI: f64 = 8.0;
pub const DEFAULT_LUT_DEPTH: usize = 1024;

/// Smallest fractional width whose grid contains both 0.25 and a value
/// strictly inside (0, 1).
pub const MIN_LUT_FRAC_BITS: u32 = 2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LutError {
    #[error("invalid LUT range [{lo}, {hi})")]
    InvalidRange { lo: f64, hi: f64 },
    #[error("LUT depth must be a power of two >= 2, got {0}")]
    InvalidDepth(usize),
    #[error("LUT format {0} needs at least {MIN_LUT_FRAC_BITS} fractional bits")]
    FormatTooCoarse(QFormat),
}

pub fn exact_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        // Same value, without overflowing exp for very negative x.
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn exact_sigmoid_derivative(x: f64) -> f64 {
    // Even function; evaluating at -|x| keeps it bit-symmetric and avoids 1 - s cancellation.
    let s = exact_sigmoid(-x.abs());
    s * (1.0 - s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LutKind {
    Sigmoid,
    SigmoidDerivative,
}

impl LutKind {
    pub fn exact(self, x: f64) -> f64 {
        match self {
            LutKind::Sigmoid => exact_sigmoid(x),
            LutKind::SigmoidDerivative => exact_sigmoid_derivative(x),
        }
    }

    /// Closed bounds every entry must respect, before quantization.
    fn bounds(self) -> (f64, f64) {
        match self {
            LutKind::Sigmoid => (0.0, 1.0),
            LutKind::SigmoidDerivative => (0.0, 0.25),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Entries {
    Fixed { fmt: QFormat, raw: Vec<i64> },
    Real(Vec<f64>),
}

/// Range, depth and table kind shared by every numeric flavour.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LutParams {
    pub lo: f64,
    pub hi: f64,
    pub depth: usize,
}

impl Default for LutParams {
    fn default() -> Self {
        LutParams {
            lo: DEFAULT_LUT_LO,
            hi: DEFAULT_LUT_HI,
            depth: DEFAULT_LUT_DEPTH,
        }
    }
}

impl LutParams {
    pub fn validate(&self) -> Result<(), LutError> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi) {
            return Err(LutError::InvalidRange {
                lo: self.lo,
                hi: self.hi,
            });
        }
        if self.depth < 2 || !self.depth.is_power_of_two() {
            return Err(LutError::InvalidDepth(self.depth));
        }
        Ok(())
    }

    pub fn cell_width(&self) -> f64 {
        (self.hi - self.lo) / self.depth as f64
    }

    /// Left edge of cell `k`.
    pub fn edge(&self, k: usize) -> f64 {
        self.lo + k as f64 * self.cell_width()
    }

    pub fn index(&self, x: f64) -> usize {
        let pos = ((x - self.lo) * self.depth as f64 / (self.hi - self.lo)).floor();
        if pos.is_nan() || pos <= 0.0 {
            0
        } else if pos >= (self.depth - 1) as f64 {
            self.depth - 1
        } else {
            pos as usize
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActivationLut {
    kind: LutKind,
    params: LutParams,
    entries: Entries,
}

impl ActivationLut {
    /// Fixed-point table: exact function at each left edge, round-to-nearest
    /// into `fmt`, then clamped to the open unit interval (sigmoid) or to
    /// `(0, 0.25]` (derivative) on the format's grid.
    pub fn build_fixed(kind: LutKind, params: LutParams, fmt: QFormat) -> Result<Self, LutError> {
        params.validate()?;
        if fmt.frac_bits() < MIN_LUT_FRAC_BITS {
            return Err(LutError::FormatTooCoarse(fmt));
        }
        let (lo, hi) = kind.bounds();
        let min_raw = 1i64;
        let max_raw = fmt.encode(hi).raw() - i64::from(kind == LutKind::Sigmoid);
        debug_assert!(lo == 0.0 && min_raw <= max_raw);
        let raw = (0..params.depth)
            .map(|k| {
                fmt.encode(kind.exact(params.edge(k)))
                    .raw()
                    .clamp(min_raw, max_raw)
            })
            .collect();
        Ok(ActivationLut {
            kind,
            params,
            entries: Entries::Fixed { fmt, raw },
        })
    }

    /// Unquantized table for the floating-point backend.
    pub fn build_real(kind: LutKind, params: LutParams) -> Result<Self, LutError> {
        params.validate()?;
        let entries = (0..params.depth)
            .map(|k| kind.exact(params.edge(k)))
            .collect();
        Ok(ActivationLut {
            kind,
            params,
            entries: Entries::Real(entries),
        })
    }

    pub fn kind(&self) -> LutKind {
        self.kind
    }

    pub fn params(&self) -> LutParams {
        self.params
    }

    pub fn depth(&self) -> usize {
        self.params.depth
    }

    pub fn format(&self) -> Option<QFormat> {
        match &self.entries {
            Entries::Fixed { fmt, .. } => Some(*fmt),
            Entries::Real(_) => None,
        }
    }

    /// Entry `k` decoded to a real.
    pub fn entry(&self, k: usize) -> f64 {
        match &self.entries {
            Entries::Fixed { fmt, raw } => raw[k] as f64 * fmt.ulp(),
            Entries::Real(v) => v[k],
        }
    }

    pub fn entries(&self) -> Vec<f64> {
        (0..self.depth()).map(|k| self.entry(k)).collect()
    }

    /// Lookup for a real input.
    pub fn eval(&self, x: f64) -> f64 {
        self.entry(self.params.index(x))
    }

    /// Lookup for a fixed-point input; the result is in the table's format.
    ///
    /// Panics if the table was built with `build_real`.
    pub fn eval_fx(&self, x: FxValue) -> FxValue {
        match &self.entries {
            Entries::Fixed { fmt, raw } => {
                let k = self.params.index(x.to_f64());
                fmt.from_raw(raw[k]).expect("table entries are in range")
            }
            Entries::Real(_) => panic!("eval_fx on a real-valued table"),
        }
    }
}

/// A sigmoid table and its derivative table over the same cells.
#[derive(Debug, Clone, PartialEq)]
pub struct LutPair {
    pub sigmoid: ActivationLut,
    pub derivative: ActivationLut,
}

impl LutPair {
    pub fn fixed(params: LutParams, fmt: QFormat) -> Result<Self, LutError> {
        Ok(LutPair {
            sigmoid: ActivationLut::build_fixed(LutKind::Sigmoid, params, fmt)?,
            derivative: ActivationLut::build_fixed(LutKind::SigmoidDerivative, params, fmt)?,
        })
    }

    pub fn real(params: LutParams) -> Result<Self, LutError> {
        Ok(LutPair {
            sigmoid: ActivationLut::build_real(LutKind::Sigmoid, params)?,
            derivative: ActivationLut::build_real(LutKind::SigmoidDerivative, params)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_pair() -> LutPair {
        LutPair::fixed(LutParams::default(), QFormat::DEFAULT).unwrap()
    }

    #[test]
    fn sigmoid_reference_values() {
        assert_eq!(exact_sigmoid(0.0), 0.5);
        for x in [0.1, 1.0, 3.5, 17.0, 700.0] {
            assert!((exact_sigmoid(x) + exact_sigmoid(-x) - 1.0).abs() < 1e-15);
        }
        // 1 / (1 + e^-0.2), evaluated independently by its Taylor series.
        let e_neg: f64 = (0..30)
            .map(|k| (-0.2f64).powi(k) / (1..=k).map(|i| i as f64).product::<f64>())
            .sum();
        let series = 1.0 / (1.0 + e_neg);
        assert!((exact_sigmoid(0.2) - series).abs() < 1e-15);
        assert!((exact_sigmoid(0.2) - 0.549_833_997_312_478).abs() < 1e-14);
        assert_eq!(exact_sigmoid(-1000.0), 0.0);
        assert_eq!(exact_sigmoid(1000.0), 1.0);
    }

    #[test]
    fn derivative_reference_values() {
        assert_eq!(exact_sigmoid_derivative(0.0), 0.25);
        for x in [0.3, 2.0, 6.0] {
            assert_eq!(exact_sigmoid_derivative(x), exact_sigmoid_derivative(-x));
            assert!(exact_sigmoid_derivative(x) < 0.25);
        }
        assert!((exact_sigmoid_derivative(2.0) - 0.104_993_585_403_507_4).abs() < 1e-15);
    }

    #[test]
    fn build_validation() {
        let fmt = QFormat::DEFAULT;
        let bad_range = LutParams {
            lo: 1.0,
            hi: 1.0,
            depth: 4,
        };
        assert!(matches!(
            ActivationLut::build_fixed(LutKind::Sigmoid, bad_range, fmt),
            Err(LutError::InvalidRange { .. })
        ));
        for depth in [0, 1, 3, 1000] {
            let p = LutParams {
                depth,
                ..LutParams::default()
            };
            assert_eq!(
                ActivationLut::build_real(LutKind::Sigmoid, p),
                Err(LutError::InvalidDepth(depth))
            );
        }
        let coarse = QFormat::new(8, 1).unwrap();
        assert!(matches!(
            ActivationLut::build_fixed(LutKind::Sigmoid, LutParams::default(), coarse),
            Err(LutError::FormatTooCoarse(_))
        ));
    }

    #[test]
    fn smallest_table() {
        let p = LutParams {
            lo: -8.0,
            hi: 8.0,
            depth: 2,
        };
        let fmt = QFormat::DEFAULT;
        let lut = ActivationLut::build_fixed(LutKind::Sigmoid, p, fmt).unwrap();
        assert_eq!(lut.entry(0), fmt.encode(exact_sigmoid(-8.0)).to_f64());
        assert_eq!(lut.entry(1), fmt.encode(0.5).to_f64());
    }

    #[test]
    fn entries_within_one_ulp_of_edges() {
        let pair = default_pair();
        let ulp = QFormat::DEFAULT.ulp();
        let p = pair.sigmoid.params();
        for k in 0..p.depth {
            let x = p.edge(k);
            assert!((pair.sigmoid.entry(k) - exact_sigmoid(x)).abs() <= ulp);
            assert!((pair.derivative.entry(k) - exact_sigmoid_derivative(x)).abs() <= ulp);
        }
    }

    #[test]
    fn table_invariants() {
        for fmt in [QFormat::DEFAULT, QFormat::new(16, 2).unwrap(), QFormat::new(12, 6).unwrap()] {
            let pair = LutPair::fixed(LutParams::default(), fmt).unwrap();
            let s = pair.sigmoid.entries();
            let d = pair.derivative.entries();
            assert!(s.windows(2).all(|w| w[0] <= w[1]), "{fmt}");
            assert!(s.iter().all(|&v| v > 0.0 && v < 1.0), "{fmt}");
            let quarter = fmt.encode(0.25).to_f64();
            assert!(d.iter().all(|&v| v > 0.0 && v <= quarter && v <= 0.25), "{fmt}");
        }
    }

    #[test]
    fn lookup_examples() {
        let pair = default_pair();
        let fmt = QFormat::DEFAULT;
        assert_eq!(pair.sigmoid.eval(0.0), 0.5);
        assert_eq!(pair.sigmoid.eval_fx(fmt.encode(0.0)).raw(), 32768);
        let last = pair.sigmoid.entry(1023);
        assert_eq!(pair.sigmoid.eval(100.0), last);
        assert_eq!(pair.sigmoid.eval(8.0), last);
        assert_eq!(pair.sigmoid.eval(-100.0), pair.sigmoid.entry(0));
        assert_eq!(pair.sigmoid.eval(f64::NAN), pair.sigmoid.entry(0));
        assert!((last - exact_sigmoid(8.0)).abs() < 1e-3);
    }

    #[test]
    fn real_table_tracks_fixed_table() {
        let real = LutPair::real(LutParams::default()).unwrap();
        let fixed = default_pair();
        for x in [-9.0, -3.3, 0.0, 0.01, 5.5, 7.99] {
            assert!((real.sigmoid.eval(x) - fixed.sigmoid.eval(x)).abs() <= QFormat::DEFAULT.ulp());
        }
        assert_eq!(real.sigmoid.format(), None);
    }
}
