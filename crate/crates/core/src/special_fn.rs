//! Scalar kernels: the real branches of the Lambert W function and the
//! C¹ piecewise-polynomial smoothed indicator.

use crate::error::{JsqError, Result};
use serde::{Deserialize, Serialize};

/// High part of 1/e as the nearest f64.
pub const INV_E: f64 = 0.367_879_441_171_442_33;
/// Low-order correction so that `INV_E + INV_E_LO` is 1/e to ~1e-33.
const INV_E_LO: f64 = -1.242_875_367_278_836_3e-17;
/// Arguments within this distance below -1/e are snapped to the branch point.
pub const BRANCH_GUARD: f64 = 1e-15;

const MAX_ITER: usize = 64;

/// Distance of `x` from the branch point -1/e, computed without cancellation
/// against a rounded 1/e.
fn branch_offset(x: f64) -> f64 {
    (x + INV_E) + INV_E_LO
}

/// Series of W about the branch point in p = ±sqrt(2(e x + 1)).
fn branch_series(p: f64) -> f64 {
    -1.0 + p * (1.0 + p * (-1.0 / 3.0 + p * (11.0 / 72.0 + p * (-43.0 / 540.0))))
}

/// Halley iteration on w e^w - x.
fn halley(x: f64, mut w: f64) -> f64 {
    for _ in 0..MAX_ITER {
        let ew = w.exp();
        let f = w * ew - x;
        let wp1 = w + 1.0;
        if wp1 == 0.0 {
            break;
        }
        let denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        if denom == 0.0 || !denom.is_finite() {
            break;
        }
        let step = f / denom;
        w -= step;
        if step.abs() <= 2.0 * f64::EPSILON * w.abs().max(1e-300) {
            break;
        }
    }
    w
}

/// Newton iteration on w + ln|w| = target, used where |w| > 1 and e^w would
/// lose relative precision or overflow. `sign` is +1 for w > 0, -1 for w < 0.
fn log_newton(target: f64, mut w: f64, sign: f64) -> f64 {
    for _ in 0..MAX_ITER {
        let g = w + (sign * w).ln() - target;
        let step = g / (1.0 + 1.0 / w);
        w -= step;
        if step.abs() <= 2.0 * f64::EPSILON * w.abs() {
            break;
        }
    }
    w
}

/// Principal branch W₀ on [-1/e, ∞).
pub fn lambert_w0(x: f64) -> Result<f64> {
    if x.is_nan() {
        return Err(JsqError::Domain {
            function: "lambert_w0",
            value: x,
        });
    }
    let off = branch_offset(x);
    if off <= 0.0 {
        if off >= -BRANCH_GUARD {
            return Ok(-1.0);
        }
        return Err(JsqError::Domain {
            function: "lambert_w0",
            value: x,
        });
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x.is_infinite() {
        return Ok(f64::INFINITY);
    }
    if x < -0.32 {
        let p = (2.0 * std::f64::consts::E * off).sqrt();
        return Ok(halley(x, branch_series(p)));
    }
    if x <= std::f64::consts::E {
        return Ok(halley(x, x.ln_1p()));
    }
    let l1 = x.ln();
    let l2 = l1.ln();
    Ok(log_newton(l1, l1 - l2 + l2 / l1, 1.0))
}

/// W₀(e^log_x) for arguments whose exponential would overflow.
pub fn lambert_w0_of_exp(log_x: f64) -> Result<f64> {
    if log_x.is_nan() {
        return Err(JsqError::Domain {
            function: "lambert_w0_of_exp",
            value: log_x,
        });
    }
    if log_x < 1.0 {
        return lambert_w0(log_x.exp());
    }
    let l2 = log_x.ln();
    Ok(log_newton(log_x, log_x - l2 + l2 / log_x, 1.0))
}

/// Lower branch W₋₁ on [-1/e, 0).
pub fn lambert_wm1(x: f64) -> Result<f64> {
    if x.is_nan() || x >= 0.0 {
        return Err(JsqError::Domain {
            function: "lambert_wm1",
            value: x,
        });
    }
    let off = branch_offset(x);
    if off <= 0.0 {
        if off >= -BRANCH_GUARD {
            return Ok(-1.0);
        }
        return Err(JsqError::Domain {
            function: "lambert_wm1",
            value: x,
        });
    }
    if x < -0.25 {
        let p = -(2.0 * std::f64::consts::E * off).sqrt();
        return Ok(halley(x, branch_series(p)));
    }
    let l1 = (-x).ln();
    let l2 = (-l1).ln();
    let guess = l1 - l2 + l2 / l1;
    Ok(log_newton(l1, guess, -1.0))
}

/// W₀'(x) = W/(x(1+W)) = e^{-W}/(1+W); equals 1 at the removable point x = 0.
pub fn lambert_w0_deriv(x: f64) -> Result<f64> {
    let w = lambert_w0(x)?;
    if w <= -1.0 {
        return Err(JsqError::Domain {
            function: "lambert_w0_deriv",
            value: x,
        });
    }
    Ok((-w).exp() / (1.0 + w))
}

/// Knots (ℓ, u) of the smoothed indicator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingSpec {
    lower: f64,
    upper: f64,
}

/// Which derivative of the smoothed indicator to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivOrder {
    Value,
    First,
    Second,
}

impl SmoothingSpec {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !(lower < upper) || !lower.is_finite() || !upper.is_finite() {
            return Err(JsqError::ParamOrder(format!(
                "smoothing knots need lower < upper, got ({lower}, {upper})"
            )));
        }
        Ok(Self { lower, upper })
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn value(&self, x: f64) -> f64 {
        let d = self.width();
        let h = 0.5 * d;
        if x <= self.lower {
            0.0
        } else if x < self.mid() {
            let s = x - self.lower;
            s * s * (-s / (h * h * d) + 2.0 / (h * d))
        } else if x < self.upper {
            let s = x - self.upper;
            1.0 - s * s * (s / (h * h * d) + 2.0 / (h * d))
        } else {
            1.0
        }
    }

    pub fn first(&self, x: f64) -> f64 {
        let d = self.width();
        let h = 0.5 * d;
        if x <= self.lower || x >= self.upper {
            0.0
        } else if x < self.mid() {
            let s = x - self.lower;
            -3.0 * s * s / (h * h * d) + 4.0 * s / (h * d)
        } else {
            let s = x - self.upper;
            -3.0 * s * s / (h * h * d) - 4.0 * s / (h * d)
        }
    }

    /// Second derivative; right limits at the three knots.
    pub fn second(&self, x: f64) -> f64 {
        let d = self.width();
        let h = 0.5 * d;
        if x < self.lower || x >= self.upper {
            0.0
        } else if x < self.mid() {
            let s = x - self.lower;
            -6.0 * s / (h * h * d) + 4.0 / (h * d)
        } else {
            let s = x - self.upper;
            -6.0 * s / (h * h * d) - 4.0 / (h * d)
        }
    }

    /// ∫_ℓ^x φ(u) du in closed form (zero for x ≤ ℓ).
    pub fn primitive(&self, x: f64) -> f64 {
        let d = self.width();
        let h = 0.5 * d;
        if x <= self.lower {
            return 0.0;
        }
        if x < self.mid() {
            let s = x - self.lower;
            return -s.powi(4) / (4.0 * h * h * d) + 2.0 * s.powi(3) / (3.0 * h * d);
        }
        let at_mid = 5.0 * d / 48.0;
        if x < self.upper {
            let s = x - self.upper;
            return at_mid + (s + h)
                - (s.powi(4) - h.powi(4)) / (4.0 * h * h * d)
                - 2.0 * (s.powi(3) + h.powi(3)) / (3.0 * h * d);
        }
        0.5 * d + (x - self.upper)
    }

    pub fn eval(&self, x: f64, order: DerivOrder) -> f64 {
        match order {
            DerivOrder::Value => self.value(x),
            DerivOrder::First => self.first(x),
            DerivOrder::Second => self.second(x),
        }
    }
}

/// φ^(ℓ,u) and its first two derivatives.
pub fn smooth_indicator(spec: &SmoothingSpec, x: f64, order: DerivOrder) -> f64 {
    spec.eval(x, order)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        let flo = f(lo);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if (f(mid) > 0.0) == (flo > 0.0) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn w0_special_values() {
        assert_eq!(lambert_w0(0.0).unwrap(), 0.0);
        assert!((lambert_w0(-1.0 / E).unwrap() + 1.0).abs() < 1e-7);
        assert!((lambert_w0(E).unwrap() - 1.0).abs() < 1e-15);
        assert!((lambert_w0(2.0 * E * E).unwrap() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn w0_domain_guard() {
        assert_eq!(lambert_w0(-INV_E - 5e-16).unwrap(), -1.0);
        assert!(matches!(
            lambert_w0(-INV_E - 1e-12),
            Err(JsqError::Domain { .. })
        ));
        assert!(lambert_w0(f64::NAN).is_err());
    }

    #[test]
    fn wm1_special_values() {
        assert!((lambert_wm1(-1.0 / E).unwrap() + 1.0).abs() < 1e-7);
        assert!((lambert_wm1(-2.0 * (-2.0f64).exp()).unwrap() + 2.0).abs() < 1e-13);
        let oracle = bisect(|w| w * w.exp() + 0.1, -10.0, -1.0);
        let got = lambert_wm1(-0.1).unwrap();
        assert!((got - oracle).abs() < 1e-12, "{got} vs {oracle}");
        assert!((got + 3.5772).abs() < 1e-4);
        assert!(lambert_wm1(0.0).is_err());
        assert!(lambert_wm1(-0.5).is_err());
    }

    #[test]
    fn w0_deriv_matches_finite_differences() {
        assert!((lambert_w0_deriv(E).unwrap() - 1.0 / (2.0 * E)).abs() < 1e-15);
        assert!((lambert_w0_deriv(0.0).unwrap() - 1.0).abs() < 1e-15);
        let h = 1e-6;
        let fd0 = (lambert_w0(h).unwrap() - lambert_w0(-h).unwrap()) / (2.0 * h);
        assert!((fd0 - 1.0).abs() < 1e-6);
        for &x in &[-0.3, -0.1, 0.05, 0.7, 3.0, 40.0] {
            let fd = (lambert_w0(x + h).unwrap() - lambert_w0(x - h).unwrap()) / (2.0 * h);
            let d = lambert_w0_deriv(x).unwrap();
            assert!(((fd - d) / d).abs() < 1e-6, "x={x}: {fd} vs {d}");
        }
        assert!(lambert_w0_deriv(-INV_E).is_err());
    }

    #[test]
    fn w0_of_exp_agrees_with_direct() {
        for &l in &[-3.0, 0.0, 0.5, 2.0, 10.0, 300.0] {
            let a = lambert_w0_of_exp(l).unwrap();
            let b = lambert_w0(f64::exp(l)).unwrap();
            assert!(((a - b) / b).abs() < 1e-14);
        }
        let w = lambert_w0_of_exp(5000.0).unwrap();
        assert!((w + w.ln() - 5000.0).abs() < 1e-11);
    }

    #[test]
    fn phi_examples() {
        let s = SmoothingSpec::new(1.0, 3.0).unwrap();
        assert_eq!(s.value(0.5), 0.0);
        assert_eq!(s.value(4.0), 1.0);
        assert!((s.value(2.0) - 0.5).abs() < 1e-15);
        assert!(SmoothingSpec::new(2.0, 2.0).is_err());
    }

    #[test]
    fn phi_primitive_matches_riemann_sum() {
        let s = SmoothingSpec::new(0.3, 1.1).unwrap();
        let steps = 200_000;
        let (a, b) = (0.0, 1.5);
        let dx = (b - a) / steps as f64;
        let mut acc = 0.0;
        for k in 0..steps {
            let x = a + (k as f64 + 0.5) * dx;
            acc += s.value(x) * dx;
            if k % 20_000 == 19_999 {
                let xr = a + (k + 1) as f64 * dx;
                assert!((acc - s.primitive(xr)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn knots_are_continuous() {
        let s = SmoothingSpec::new(-0.7, 2.2).unwrap();
        for knot in [s.lower(), s.mid(), s.upper()] {
            let eps = 1e-13;
            assert!((s.value(knot - eps) - s.value(knot + eps)).abs() < 1e-12);
            assert!((s.first(knot - eps) - s.first(knot + eps)).abs() < 1e-12);
        }
    }
}
