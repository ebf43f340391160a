//! Scalar math routed through `libm` so results are bit-identical with and
//! without `std`, plus numerically careful softplus/sigmoid.

#[inline]
pub(crate) fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub(crate) fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub(crate) fn ln_1p(x: f64) -> f64 {
    libm::log1p(x)
}

#[inline]
pub(crate) fn exp_m1(x: f64) -> f64 {
    libm::expm1(x)
}

#[inline]
pub(crate) fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub(crate) fn abs(x: f64) -> f64 {
    libm::fabs(x)
}

#[inline]
pub(crate) fn round(x: f64) -> f64 {
    libm::round(x)
}

#[inline]
pub(crate) fn powf(x: f64, y: f64) -> f64 {
    libm::pow(x, y)
}

/// `ln(1 + eˣ)`, stable on both tails (no overflow for large `x`, no
/// cancellation for very negative `x`).
#[inline]
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + ln_1p(exp(-x))
    } else {
        ln_1p(exp(x))
    }
}

/// Logistic function, the derivative of [`softplus`].
#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + exp(-x))
    } else {
        let e = exp(x);
        e / (1.0 + e)
    }
}

/// Inverse of [`softplus`] on `y > 0`: returns `x` with `softplus(x) = y`.
#[inline]
pub(crate) fn softplus_inv(y: f64) -> f64 {
    if y > 20.0 {
        // exp(y) would overflow long before y does; here softplus(y) ≈ y.
        y + ln_1p(-exp(-y))
    } else {
        ln(exp_m1(y))
    }
}

/// Euclidean norm without intermediate overflow concerns at our scales.
#[inline]
pub(crate) fn norm2(xs: &[f64]) -> f64 {
    sqrt(xs.iter().map(|x| x * x).sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softplus_at_zero_is_ln_two() {
        assert_eq!(softplus(0.0), core::f64::consts::LN_2);
    }

    #[test]
    fn softplus_tails_are_stable() {
        assert_eq!(softplus(800.0), 800.0);
        assert!(softplus(-800.0) >= 0.0);
        assert!(softplus(-800.0) < 1e-300);
        // Mid-range agrees with the naive formula.
        for &x in &[-5.0, -0.3, 0.7, 4.0] {
            assert!((softplus(x) - (1.0 + exp(x)).ln()).abs() < 1e-15);
        }
    }

    #[test]
    fn sigmoid_matches_softplus_derivative() {
        let h = 1e-6;
        for &x in &[-3.0, -0.5, 0.0, 1.2, 8.0] {
            let fd = (softplus(x + h) - softplus(x - h)) / (2.0 * h);
            assert!((sigmoid(x) - fd).abs() < 1e-9);
        }
        assert_eq!(sigmoid(0.0), 0.5);
    }

    #[test]
    fn softplus_inv_round_trips() {
        for &y in &[1e-8, 0.1, core::f64::consts::LN_2, 3.0, 25.0, 700.0] {
            let x = softplus_inv(y);
            assert!((softplus(x) - y).abs() <= 1e-12 * y.max(1.0));
        }
    }
}
