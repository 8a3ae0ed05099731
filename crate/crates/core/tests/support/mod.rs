//! Quadrature oracles for the integration tests: tanh-sinh quadrature plus a
//! power-substitution wrapper for integrands with an endpoint singularity
//! `v^q`, `q` down to (but excluding) -1.
//!
//! These are deliberately independent of the library's closed forms: they
//! sample the integrand, so a wrong exponent or prefactor in the library
//! cannot cancel out of the comparison.

/// Tanh-sinh quadrature of `f` on `(a, b)` with step 1/16 truncated at
/// `|u| = 6`. Endpoint distances are computed in the stable form
/// `(b - a) / (1 + exp(±2t))`, so integrable endpoint singularities as hard
/// as `x^(-0.9)` keep full relative accuracy; nodes whose weight underflows
/// are skipped (their true contribution is far below 1e-15 relative).
pub fn tanh_sinh(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    assert!(b > a, "empty interval ({a}, {b})");
    let h = 1.0 / 16.0;
    let steps = 96i64; // |u| <= 6
    let span = b - a;
    let mut sum = 0.0;
    for j in -steps..=steps {
        let u = j as f64 * h;
        let t = std::f64::consts::FRAC_PI_2 * u.sinh();
        let from_a = span / (1.0 + (-2.0 * t).exp());
        let from_b = span / (1.0 + (2.0 * t).exp());
        let cosh_t = t.cosh();
        let w = std::f64::consts::FRAC_PI_2 * u.cosh() / (cosh_t * cosh_t);
        if !(w.is_finite() && w > 0.0) || from_a <= 0.0 || from_b <= 0.0 {
            continue;
        }
        let x = if from_a <= from_b { a + from_a } else { b - from_b };
        sum += w * f(x);
    }
    sum * 0.5 * span * h
}

/// `int_0^b v^q f(v) dv` for `q > -1` and `f` bounded near 0 (`f` may be
/// evaluated at `v = 0` when the substituted volume underflows; return the
/// limit value there).
///
/// Substitutes `v = b u^m` with `m = ceil(2 / (q + 1))`, turning the
/// integrand into `m b^(q+1) u^(m(q+1)-1) f(b u^m)` whose exponent
/// `m(q+1)-1 >= 1` is benign. The exponent is computed directly; forming
/// `u^(m-1)` separately would underflow for the strongly singular cases.
pub fn power_singular_integral(q: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    assert!(q > -1.0, "non-integrable exponent {q}");
    assert!(b > 0.0);
    let m = (2.0 / (q + 1.0)).ceil().max(1.0);
    let e = m * (q + 1.0) - 1.0;
    let scale = m * b.powf(q + 1.0);
    scale * tanh_sinh(|u| u.powf(e) * f(b * u.powf(m)), 0.0, 1.0)
}

#[allow(dead_code)]
/// Relative gap `|x - y| / max(|x|, |y|)`, 0 when both vanish.
pub fn rel_gap(x: f64, y: f64) -> f64 {
    let scale = x.abs().max(y.abs());
    if scale == 0.0 {
        0.0
    } else {
        (x - y).abs() / scale
    }
}

#[cfg(test)]
mod self_checks {
    use super::*;

    #[test]
    fn smooth_reference() {
        // int_0^1 e^v dv = e - 1.
        let got = tanh_sinh(|x| x.exp(), 0.0, 1.0);
        assert!(rel_gap(got, std::f64::consts::E - 1.0) < 1e-13);
    }

    #[test]
    fn singular_reference() {
        // int_0^2 v^(-0.98) dv = 2^(0.02) / 0.02.
        let got = power_singular_integral(-0.98, 2.0, |_| 1.0);
        let expect = 2.0f64.powf(0.02) / 0.02;
        assert!(rel_gap(got, expect) < 1e-12, "got {got}, expect {expect}");
    }
}
