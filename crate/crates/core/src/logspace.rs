//! Signed log-space arithmetic. The bound formulas multiply factorials,
//! binomials and powers of mixing rates that overflow `f64` long before the
//! inputs stop being reasonable, so every evaluator works on `LogValue`s and
//! converts back only for reporting.

use serde::{Deserialize, Serialize};

/// A real number stored as `sign * exp(log_abs)`.
///
/// `sign == 0` if and only if the represented value is exactly zero, in which
/// case `log_abs` is `-inf` by convention.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogValue {
    pub sign: i8,
    pub log_abs: f64,
}

impl LogValue {
    pub const ZERO: LogValue = LogValue {
        sign: 0,
        log_abs: f64::NEG_INFINITY,
    };

    pub const ONE: LogValue = LogValue {
        sign: 1,
        log_abs: 0.0,
    };

    pub fn from_f64(x: f64) -> LogValue {
        if x == 0.0 {
            LogValue::ZERO
        } else {
            LogValue {
                sign: if x > 0.0 { 1 } else { -1 },
                log_abs: x.abs().ln(),
            }
        }
    }

    /// Positive value given directly by its natural logarithm.
    pub fn from_ln(log_abs: f64) -> LogValue {
        LogValue { sign: 1, log_abs }
    }

    pub fn to_f64(self) -> f64 {
        match self.sign {
            0 => 0.0,
            s => f64::from(s) * self.log_abs.exp(),
        }
    }

    pub fn is_zero(self) -> bool {
        self.sign == 0
    }

    pub fn abs(self) -> LogValue {
        LogValue {
            sign: self.sign.abs(),
            log_abs: self.log_abs,
        }
    }

    pub fn neg(self) -> LogValue {
        LogValue {
            sign: -self.sign,
            log_abs: self.log_abs,
        }
    }

    pub fn mul(self, other: LogValue) -> LogValue {
        if self.is_zero() || other.is_zero() {
            return LogValue::ZERO;
        }
        LogValue {
            sign: self.sign * other.sign,
            log_abs: self.log_abs + other.log_abs,
        }
    }

    pub fn div(self, other: LogValue) -> LogValue {
        if self.is_zero() {
            return LogValue::ZERO;
        }
        LogValue {
            sign: self.sign * other.sign,
            log_abs: self.log_abs - other.log_abs,
        }
    }

    /// Integer or real power. Powers of negative values are only taken for
    /// integer exponents by the callers in this crate.
    pub fn powf(self, p: f64) -> LogValue {
        if self.is_zero() {
            return if p == 0.0 { LogValue::ONE } else { LogValue::ZERO };
        }
        debug_assert!(self.sign > 0 || p.fract() == 0.0);
        let sign = if self.sign > 0 || (p as i64) % 2 == 0 {
            1
        } else {
            -1
        };
        LogValue {
            sign,
            log_abs: self.log_abs * p,
        }
    }

    pub fn add(self, other: LogValue) -> LogValue {
        if self.is_zero() {
            return other;
        }
        if other.is_zero() {
            return self;
        }
        let (hi, lo) = if self.log_abs >= other.log_abs {
            (self, other)
        } else {
            (other, self)
        };
        let d = lo.log_abs - hi.log_abs; // ≤ 0
        if self.sign == other.sign {
            LogValue {
                sign: hi.sign,
                log_abs: hi.log_abs + d.exp().ln_1p(),
            }
        } else {
            let r = d.exp();
            if r == 1.0 {
                return LogValue::ZERO;
            }
            LogValue {
                sign: hi.sign,
                log_abs: hi.log_abs + (-r).ln_1p(),
            }
        }
    }

    pub fn sub(self, other: LogValue) -> LogValue {
        self.add(other.neg())
    }

    /// Sum of a slice, accumulated in log space.
    pub fn sum(values: &[LogValue]) -> LogValue {
        values.iter().fold(LogValue::ZERO, |acc, v| acc.add(*v))
    }
}

/// ln Γ(x) for x > 0.
pub fn ln_gamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

/// ln(n!) exactly through the gamma function.
pub fn ln_factorial(n: u64) -> f64 {
    ln_gamma(n as f64 + 1.0)
}

/// ln C(n, k).
pub fn ln_binomial(n: u64, k: u64) -> f64 {
    assert!(k <= n, "ln_binomial: k > n");
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

/// x^x with the convention 0^0 = 1, returned in log space. The bound
/// formulas evaluate factors like (2γ)^{2γq} that must specialize
/// continuously to 1 at γ = 0.
pub fn pow_self_ln(x: f64, scale: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        scale * x.ln()
    }
}
