//! Bounded test functions for weak-form audits, with closed-form cell
//! integrals so the audits introduce no quadrature error of their own.
//!
//! Supported family: the constant `1`, indicator windows `1_(lo, hi)`, and
//! `min(v, 1)`. Each provides `int_a^b v^p h(v) dv` in closed form for any
//! exponent `p != -1`, which covers the plain cell mean (`p = 0`) as well as
//! the singular weights `v^-alpha` and `v^(-2 alpha)` used by the
//! equicontinuity and refinement-distance diagnostics.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TestFunction {
    /// Constant 1.
    One,
    /// Indicator of the open window `(lo, hi)`.
    Window { lo: f64, hi: f64 },
    /// `min(v, 1)`.
    MinWithOne,
}

/// `int_a^b v^p dv` for `p != -1`, with the empty-interval convention 0.
fn power_integral(a: f64, b: f64, p: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let q = p + 1.0;
    (b.powf(q) - a.powf(q)) / q
}

impl TestFunction {
    /// The default audit family: `1`, the window `(0.5, 2)`, and `min(v, 1)`.
    pub fn default_family() -> Vec<TestFunction> {
        vec![
            TestFunction::One,
            TestFunction::Window { lo: 0.5, hi: 2.0 },
            TestFunction::MinWithOne,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            TestFunction::Window { lo, hi } => {
                if lo.is_finite() && hi.is_finite() && 0.0 <= *lo && lo < hi {
                    Ok(())
                } else {
                    Err(Error::Config(format!(
                        "window bounds must satisfy 0 <= lo < hi, got ({lo}, {hi})"
                    )))
                }
            }
            _ => Ok(()),
        }
    }

    pub fn eval(&self, v: f64) -> f64 {
        match self {
            TestFunction::One => 1.0,
            TestFunction::Window { lo, hi } => {
                if *lo < v && v < *hi {
                    1.0
                } else {
                    0.0
                }
            }
            TestFunction::MinWithOne => v.min(1.0),
        }
    }

    /// Exact `int_a^b v^p h(v) dv` for `p != -1` and `0 <= a <= b`.
    pub fn weighted_integral(&self, a: f64, b: f64, p: f64) -> Result<f64> {
        if !(a.is_finite() && b.is_finite() && 0.0 <= a && a <= b) {
            return Err(Error::Domain(format!(
                "weighted_integral requires 0 <= a <= b, got ({a}, {b})"
            )));
        }
        if !p.is_finite() || p == -1.0 {
            return Err(Error::Domain(format!(
                "weighted_integral exponent must be finite and != -1, got {p}"
            )));
        }
        let value = match self {
            TestFunction::One => power_integral(a, b, p),
            TestFunction::Window { lo, hi } => power_integral(a.max(*lo), b.min(*hi), p),
            TestFunction::MinWithOne => {
                // Below 1 the integrand is v^(p+1); above it is v^p.
                power_integral(a, b.min(1.0), p + 1.0) + power_integral(a.max(1.0), b, p)
            }
        };
        Ok(value)
    }

    /// Average of `h` over `[a, b]`.
    pub fn cell_mean(&self, a: f64, b: f64) -> Result<f64> {
        if !(b > a) {
            return Err(Error::Domain(format!(
                "cell_mean requires a < b, got ({a}, {b})"
            )));
        }
        Ok(self.weighted_integral(a, b, 0.0)? / (b - a))
    }
}

impl fmt::Display for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TestFunction::One => f.write_str("one"),
            TestFunction::Window { lo, hi } => write!(f, "window:{lo},{hi}"),
            TestFunction::MinWithOne => f.write_str("min-v-1"),
        }
    }
}

impl FromStr for TestFunction {
    type Err = Error;

    /// Parse `"one"` (or `"1"`), `"window:lo,hi"`, `"min-v-1"`.
    fn from_str(s: &str) -> Result<Self> {
        let tf = match s.trim() {
            "one" | "1" => TestFunction::One,
            "min-v-1" => TestFunction::MinWithOne,
            other => {
                let window = other.strip_prefix("window:").and_then(|tail| {
                    let (a, b) = tail.split_once(',')?;
                    Some(TestFunction::Window {
                        lo: a.trim().parse().ok()?,
                        hi: b.trim().parse().ok()?,
                    })
                });
                window.ok_or_else(|| {
                    Error::Config(format!(
                        "unsupported test function {s:?}; supported: \
                         \"one\", \"window:<lo>,<hi>\", \"min-v-1\""
                    ))
                })?
            }
        };
        tf.validate()?;
        Ok(tf)
    }
}
