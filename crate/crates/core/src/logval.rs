//! Log-domain arithmetic.
//!
//! Every likelihood, prior mass, weight and evidence value in the crate is
//! carried as a natural logarithm. Zero is representable as `-inf`; NaN and
//! `+inf` are rejected at construction.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Sub};

use crate::error::{Error, Result};

/// Natural logarithm of a nonnegative real number.
#[derive(Clone, Copy, PartialEq, PartialOrd)]
pub struct LogValue(f64);

impl LogValue {
    /// log 0.
    pub const ZERO: LogValue = LogValue(f64::NEG_INFINITY);
    /// log 1.
    pub const ONE: LogValue = LogValue(0.0);

    pub fn new(v: f64) -> Result<Self> {
        if v.is_nan() || v == f64::INFINITY {
            Err(Error::InvalidLogValue(v))
        } else {
            Ok(LogValue(v))
        }
    }

    /// Wraps `v` without validation. Debug builds still assert the invariant.
    #[inline]
    pub fn from_log_unchecked(v: f64) -> Self {
        debug_assert!(!v.is_nan() && v != f64::INFINITY, "bad log value {v}");
        LogValue(v)
    }

    /// Takes the log of a nonnegative finite linear value.
    pub fn from_linear(x: f64) -> Result<Self> {
        if !(x >= 0.0) || !x.is_finite() {
            return Err(Error::domain(format!("cannot take log of {x}")));
        }
        Ok(LogValue(x.ln()))
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }

    #[inline]
    pub fn to_linear(self) -> f64 {
        self.0.exp()
    }

    #[inline]
    pub fn is_zero(self) -> bool {
        self.0 == f64::NEG_INFINITY
    }

    pub fn total_cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }

    pub fn max(self, other: Self) -> Self {
        if other.0 > self.0 {
            other
        } else {
            self
        }
    }
}

impl fmt::Debug for LogValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "LogValue({})", self.0)
    }
}

impl fmt::Display for LogValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.0, f)
    }
}

impl TryFrom<f64> for LogValue {
    type Error = Error;
    fn try_from(v: f64) -> Result<Self> {
        LogValue::new(v)
    }
}

impl From<LogValue> for f64 {
    fn from(v: LogValue) -> f64 {
        v.0
    }
}

/// Product in the linear domain.
impl Mul for LogValue {
    type Output = LogValue;
    fn mul(self, rhs: LogValue) -> LogValue {
        // -inf + finite stays -inf; -inf + -inf stays -inf
        LogValue(self.0 + rhs.0)
    }
}

/// Quotient in the linear domain. Dividing by zero is a caller bug.
impl Div for LogValue {
    type Output = LogValue;
    fn div(self, rhs: LogValue) -> LogValue {
        assert!(!rhs.is_zero(), "division by a zero LogValue");
        if self.is_zero() {
            return LogValue::ZERO;
        }
        LogValue(self.0 - rhs.0)
    }
}

/// Sum in the linear domain.
impl Add for LogValue {
    type Output = LogValue;
    fn add(self, rhs: LogValue) -> LogValue {
        LogValue(log_add_exp(self.0, rhs.0))
    }
}

/// Difference in the linear domain; panics if `rhs > self`.
impl Sub for LogValue {
    type Output = LogValue;
    fn sub(self, rhs: LogValue) -> LogValue {
        log_diff_exp(self, rhs).expect("LogValue subtraction would go negative")
    }
}

/// `log(e^a + e^b)` on raw log values.
#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// `log Σ exp(v_i)`, shifted by the maximum. An empty or all-zero input yields zero.
pub fn log_sum_exp(vs: &[LogValue]) -> LogValue {
    LogValue(log_sum_exp_raw(vs.iter().map(|v| v.0)))
}

/// [`log_sum_exp`] over raw `f64` log values.
pub fn log_sum_exp_raw<I>(vs: I) -> f64
where
    I: IntoIterator<Item = f64>,
    I::IntoIter: Clone,
{
    let it = vs.into_iter();
    let max = it.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    let s: f64 = it.map(|v| (v - max).exp()).sum();
    max + s.ln()
}

/// `log(e^a - e^b)` computed as `a + log1p(-e^{b-a})`.
pub fn log_diff_exp(a: LogValue, b: LogValue) -> Result<LogValue> {
    if b.0 > a.0 {
        return Err(Error::domain(format!(
            "log_diff_exp needs a >= b, got a={} b={}",
            a.0, b.0
        )));
    }
    if b.is_zero() {
        return Ok(a);
    }
    if a.0 == b.0 {
        return Ok(LogValue::ZERO);
    }
    Ok(LogValue(a.0 + log1mexp(a.0 - b.0)))
}

/// `log(1 - e^{-x})` for `x > 0`, switching branches at log 2 to keep precision.
#[inline]
pub fn log1mexp(x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if x <= std::f64::consts::LN_2 {
        (-(-x).exp_m1()).ln()
    } else {
        (-(-x).exp()).ln_1p()
    }
}

/// Streaming accumulator for `log Σ exp(v_i)` that rescales when a new maximum arrives.
#[derive(Debug, Clone, Copy)]
pub struct LogAccumulator {
    max: f64,
    scaled: f64,
}

impl Default for LogAccumulator {
    fn default() -> Self {
        Self::new()
    }
}

impl LogAccumulator {
    pub fn new() -> Self {
        LogAccumulator {
            max: f64::NEG_INFINITY,
            scaled: 0.0,
        }
    }

    #[inline]
    pub fn push(&mut self, v: f64) {
        if v == f64::NEG_INFINITY {
            return;
        }
        if v > self.max {
            self.scaled = self.scaled * (self.max - v).exp() + 1.0;
            self.max = v;
        } else {
            self.scaled += (v - self.max).exp();
        }
    }

    #[inline]
    pub fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.scaled.ln()
        }
    }

    pub fn log_value(&self) -> LogValue {
        LogValue::from_log_unchecked(self.value())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lv(v: f64) -> LogValue {
        LogValue::new(v).unwrap()
    }

    #[test]
    fn rejects_nan_and_pos_inf() {
        assert!(LogValue::new(f64::NAN).is_err());
        assert!(LogValue::new(f64::INFINITY).is_err());
        assert!(LogValue::new(f64::NEG_INFINITY).is_ok());
    }

    #[test]
    fn log_sum_exp_examples() {
        assert!((log_sum_exp(&[lv(0.0), lv(0.0)]).get() - 2f64.ln()).abs() < 1e-15);
        assert_eq!(log_sum_exp(&[LogValue::ZERO, lv(-3.25)]).get(), -3.25);
        // mpmath: -1000 + log(1 + e^{-0.5})
        let v = log_sum_exp(&[lv(-1000.0), lv(-1000.5)]).get();
        assert!((v - -999.525_923_015_819_9).abs() < 1e-10, "{v}");
        assert!(log_sum_exp(&[LogValue::ZERO, LogValue::ZERO]).is_zero());
    }

    #[test]
    fn log_diff_exp_examples() {
        let v = log_diff_exp(lv(0.0), lv(0.5f64.ln())).unwrap();
        assert!((v.get() - 0.5f64.ln()).abs() < 1e-15);
        assert_eq!(log_diff_exp(lv(-2.0), LogValue::ZERO).unwrap().get(), -2.0);
        // x_0 = 1, x_1 = e^{-1/100}; mpmath: log(1 - e^{-0.01})
        let v = log_diff_exp(lv(0.0), lv(-0.01)).unwrap().get();
        assert!((v - -4.610_166_019_324_897).abs() < 1e-12, "{v}");
        assert!(log_diff_exp(lv(-1.0), lv(0.0)).is_err());
        assert!(log_diff_exp(lv(1.0), lv(1.0)).unwrap().is_zero());
    }

    #[test]
    fn accumulator_matches_batch() {
        let vals = [-3.0, 10.0, -1e3, f64::NEG_INFINITY, 9.5, 11.0];
        let mut acc = LogAccumulator::new();
        for v in vals {
            acc.push(v);
        }
        let batch = log_sum_exp_raw(vals.iter().copied());
        assert!((acc.value() - batch).abs() < 1e-13);
    }

    #[test]
    fn deterministic_weights_telescope() {
        for n in [1usize, 2, 7, 100, 1000] {
            for j in [1usize, 3, 50, 5000] {
                let mut acc = LogAccumulator::new();
                for i in 1..=j {
                    let a = lv(-((i - 1) as f64) / n as f64);
                    let b = lv(-(i as f64) / n as f64);
                    acc.push(log_diff_exp(a, b).unwrap().get());
                }
                let expect = 1.0 - (-(j as f64) / n as f64).exp();
                assert!((acc.value().exp() - expect).abs() < 1e-12, "n={n} j={j}");
            }
        }
    }

    proptest! {
        #[test]
        fn linear_round_trip(v in -700.0f64..700.0) {
            let back = LogValue::from_linear(lv(v).to_linear()).unwrap().get();
            let ulp = f64::EPSILON * v.abs().max(f64::MIN_POSITIVE);
            prop_assert!((back - v).abs() <= 4.0 * ulp.max(f64::EPSILON));
        }

        #[test]
        fn lse_permutation_invariant(mut vs in proptest::collection::vec(-50.0f64..50.0, 1..20)) {
            let a = log_sum_exp_raw(vs.iter().copied());
            vs.reverse();
            let half = vs.len() / 2;
            vs.rotate_left(half);
            let b = log_sum_exp_raw(vs.iter().copied());
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn lse_monotone(vs in proptest::collection::vec(-50.0f64..50.0, 1..20), k in 0usize..20, bump in 0.0f64..5.0) {
            let k = k % vs.len();
            let base = log_sum_exp_raw(vs.iter().copied());
            let mut up = vs.clone();
            up[k] += bump;
            prop_assert!(log_sum_exp_raw(up.iter().copied()) >= base - 1e-12);
        }
    }
}
