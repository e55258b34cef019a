//! Adaptive Gauss-Kronrod (7, 15) quadrature for vector-valued integrands,
//! and a bracketing Brent root finder.

use crate::error::{JsqError, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const MAX_INTERVALS: usize = 20_000;

fn gk15<const N: usize>(f: &impl Fn(f64) -> [f64; N], a: f64, b: f64) -> ([f64; N], f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = [0.0; N];
    let mut g = [0.0; N];
    for j in 0..N {
        k[j] = WGK[7] * fc[j];
        g[j] = WG[3] * fc[j];
    }
    for i in 0..7 {
        let dx = h * XGK[i];
        let f1 = f(c - dx);
        let f2 = f(c + dx);
        for j in 0..N {
            let s = f1[j] + f2[j];
            k[j] += WGK[i] * s;
            if i % 2 == 1 {
                g[j] += WG[i / 2] * s;
            }
        }
    }
    let mut err: f64 = 0.0;
    for j in 0..N {
        k[j] *= h;
        g[j] *= h;
        err = err.max((k[j] - g[j]).abs());
    }
    (k, err)
}

/// ∫_a^b f for each component of `f`, to absolute error `tol` (max-norm).
pub fn integrate_vec<const N: usize>(
    f: impl Fn(f64) -> [f64; N],
    a: f64,
    b: f64,
    tol: f64,
) -> Result<[f64; N]> {
    if a == b {
        return Ok([0.0; N]);
    }
    if b < a {
        let v = integrate_vec(f, b, a, tol)?;
        return Ok(v.map(|x| -x));
    }
    let total = b - a;
    let mut acc = [0.0; N];
    let mut err_acc = 0.0;
    let mut stack = vec![(a, b)];
    let mut used = 0;
    while let Some((lo, hi)) = stack.pop() {
        used += 1;
        let (val, err) = gk15(&f, lo, hi);
        let share = tol * (hi - lo) / total;
        let tiny = hi - lo <= 1e-13 * (1.0 + lo.abs().max(hi.abs()));
        if err <= share || tiny || used > MAX_INTERVALS {
            if !(err <= share || tiny) {
                err_acc += err;
            }
            for j in 0..N {
                acc[j] += val[j];
            }
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((mid, hi));
            stack.push((lo, mid));
        }
    }
    if err_acc > tol {
        return Err(JsqError::Quadrature {
            tol,
            estimate: err_acc,
        });
    }
    Ok(acc)
}

/// Scalar convenience wrapper around [`integrate_vec`].
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    Ok(integrate_vec(|t| [f(t)], a, b, tol)?[0])
}

/// Integrates over consecutive breakpoints, skipping empty pieces.
pub fn integrate_pieces<const N: usize>(
    f: impl Fn(f64) -> [f64; N],
    breaks: &[f64],
    tol: f64,
) -> Result<[f64; N]> {
    let mut acc = [0.0; N];
    let pieces = breaks.len().saturating_sub(1).max(1) as f64;
    for w in breaks.windows(2) {
        if w[1] > w[0] {
            let v = integrate_vec(&f, w[0], w[1], tol / pieces)?;
            for j in 0..N {
                acc[j] += v[j];
            }
        }
    }
    Ok(acc)
}

/// Brent's method on a sign-changing bracket [a, b].
pub fn brent(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, xtol: f64) -> Result<f64> {
    let mut fa = f(a);
    let mut fb = f(b);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(JsqError::Convergence {
            method: "brent bracket",
            residual: fa.abs().min(fb.abs()),
        });
    }
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..200 {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * xtol;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = f(b);
    }
    Err(JsqError::Convergence {
        method: "brent",
        residual: fb.abs(),
    })
}
