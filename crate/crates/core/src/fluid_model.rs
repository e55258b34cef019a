//! Closed-form fluid model of the scaled (X₁, X₂) process: trajectories,
//! hitting times of the vertical axis, the curves Γ^(κ) and the auxiliary
//! level-crossing time τ̃^(κ).

use crate::error::{JsqError, Result};
use crate::quadrature::{brent, integrate_pieces};
use crate::special_fn::{lambert_w0, lambert_w0_of_exp, BRANCH_GUARD, INV_E};
use serde::{Deserialize, Serialize};

/// Absolute band, in fluid coordinates, inside which a point counts as on Γ^(κ).
pub const ON_CURVE_TOL: f64 = 1e-13;

/// System scale n and slack β, with λ = 1 − β/√n.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub n: u64,
    pub beta: f64,
    pub lambda: f64,
}

impl ModelParams {
    pub fn new(n: u64, beta: f64) -> Result<Self> {
        if n == 0 {
            return Err(JsqError::InvalidParameter("n must be positive".into()));
        }
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(JsqError::InvalidParameter(format!(
                "beta must be positive, got {beta}"
            )));
        }
        let sqrt_n = (n as f64).sqrt();
        if beta >= sqrt_n {
            return Err(JsqError::ParamOrder(format!(
                "need beta < sqrt(n) = {sqrt_n}, got {beta}"
            )));
        }
        Ok(Self {
            n,
            beta,
            lambda: 1.0 - beta / sqrt_n,
        })
    }

    pub fn sqrt_n(&self) -> f64 {
        (self.n as f64).sqrt()
    }

    pub fn n_f64(&self) -> f64 {
        self.n as f64
    }

    /// β/√n, the fluid-scale drift toward the equilibrium.
    pub fn drift(&self) -> f64 {
        self.beta / self.sqrt_n()
    }

    /// κ/√n, a fluid-scale level.
    pub fn level(&self, kappa: f64) -> f64 {
        kappa / self.sqrt_n()
    }

    /// Arrival rate nλ.
    pub fn arrival_rate(&self) -> f64 {
        self.n_f64() * self.lambda
    }
}

/// A point of Ω = (−∞,0] × [0,∞) at fluid scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluidPoint {
    pub x1: f64,
    pub x2: f64,
}

impl FluidPoint {
    pub fn new(x1: f64, x2: f64) -> Result<Self> {
        if !(x1 <= 0.0) || !(x2 >= 0.0) || !x1.is_finite() || !x2.is_finite() {
            return Err(JsqError::InvalidParameter(format!(
                "({x1}, {x2}) is not in the domain"
            )));
        }
        Ok(Self { x1, x2 })
    }

    /// Builds a point without the domain check; used for interior evaluations
    /// such as finite-difference stencils.
    pub const fn raw(x1: f64, x2: f64) -> Self {
        Self { x1, x2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaSolution {
    pub nu_star: f64,
    pub eta_star: f64,
    pub kappa: f64,
    pub x1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CurveSide {
    Below,
    On,
    Above,
}

fn check_kappa(params: &ModelParams, kappa: f64) -> Result<()> {
    if !(kappa >= params.beta) || !kappa.is_finite() {
        return Err(JsqError::ParamOrder(format!(
            "need kappa >= beta, got kappa={kappa}, beta={}",
            params.beta
        )));
    }
    Ok(())
}

/// Residuals of the two equations defining Γ^(κ) at (x₁, ν, η).
pub fn gamma_residuals(params: &ModelParams, kappa: f64, x1: f64, nu: f64, eta: f64) -> (f64, f64) {
    let b = params.drift();
    let e = (-eta).exp();
    let hit = -b + (x1 + b) * e + eta * nu * e;
    let level = nu * e - params.level(kappa);
    (hit, level)
}

/// The unique (ν*, η*) with ν*e^{−η*} = κ/√n such that the trajectory from
/// (x₁, ν*) first reaches the axis at time η*.
pub fn gamma_solve(params: &ModelParams, kappa: f64, x1: f64) -> Result<GammaSolution> {
    check_kappa(params, kappa)?;
    if !(x1 <= 0.0) {
        return Err(JsqError::Domain {
            function: "gamma_solve",
            value: x1,
        });
    }
    let k = params.level(kappa);
    if x1 == 0.0 {
        return Ok(GammaSolution {
            nu_star: k,
            eta_star: 0.0,
            kappa,
            x1,
        });
    }
    let b = params.drift();
    let c = x1 + b;
    // On s = 1/ν the condition reads −ln(sk) + cs = b/k; the left side is
    // decreasing in s on (0, 1/k] because c < k.
    let g = |s: f64| -(s * k).ln() + c * s - b / k;
    let s_hi = 1.0 / k;
    let mut s_lo = 0.5 * s_hi * (-b / k).exp();
    let mut guard = 0;
    while g(s_lo) <= 0.0 {
        s_lo *= 0.5;
        guard += 1;
        if guard > 2000 {
            return Err(JsqError::Convergence {
                method: "gamma_solve bracket",
                residual: g(s_lo),
            });
        }
    }
    let s = brent(g, s_lo, s_hi, 1e-16 * s_hi)?;
    let mut nu = 1.0 / s;
    for _ in 0..3 {
        let hv = (nu / k).ln() + c / nu - b / k;
        let dh = (nu - c) / (nu * nu);
        if dh <= 0.0 {
            break;
        }
        let step = hv / dh;
        nu -= step;
        if step.abs() <= 4.0 * f64::EPSILON * nu {
            break;
        }
    }
    let nu = nu.max(k);
    let eta = (nu / k).ln().max(0.0);
    let (r1, r2) = gamma_residuals(params, kappa, x1, nu, eta);
    let res = r1.abs().max(r2.abs());
    if res > 1e-11 {
        return Err(JsqError::Convergence {
            method: "gamma_solve",
            residual: res,
        });
    }
    Ok(GammaSolution {
        nu_star: nu,
        eta_star: eta,
        kappa,
        x1,
    })
}

/// Position of `x` relative to Γ^(κ), with an absolute band for `On`.
pub fn classify_vs_gamma(params: &ModelParams, kappa: f64, x: FluidPoint) -> Result<CurveSide> {
    let sol = gamma_solve(params, kappa, x.x1)?;
    let diff = x.x2 - sol.nu_star;
    Ok(if diff.abs() <= ON_CURVE_TOL {
        CurveSide::On
    } else if diff > 0.0 {
        CurveSide::Above
    } else {
        CurveSide::Below
    })
}

/// First time the trajectory from `x` reaches {x₁ = 0}; +∞ if it never does.
pub fn hitting_time(params: &ModelParams, x: FluidPoint) -> f64 {
    if x.x1 >= 0.0 {
        return 0.0;
    }
    if x.x2 <= 0.0 {
        return f64::INFINITY;
    }
    let b = params.drift();
    let a = (x.x1 + b) / x.x2;
    let z = (-b / x.x2) * (-a).exp();
    if !z.is_finite() || z < -INV_E - BRANCH_GUARD {
        return f64::INFINITY;
    }
    let w = match lambert_w0(z) {
        Ok(w) => w,
        Err(_) => return f64::INFINITY,
    };
    let mut eta = -a - w;
    if !(eta >= 0.0) {
        return f64::INFINITY;
    }
    // Newton polish on (x₁+b) + ηx₂ − b e^η = 0.
    for _ in 0..3 {
        let be = b * eta.exp();
        let f = x.x1 + b + eta * x.x2 - be;
        let df = x.x2 - be;
        if df.abs() < 1e-8 * x.x2.max(b) {
            break;
        }
        let step = f / df;
        if !step.is_finite() || step.abs() > 1e-6 * (1.0 + eta) {
            break;
        }
        eta -= step;
    }
    eta.max(0.0)
}

/// (τ₁, τ₂) = ∇τ above Γ^(κ) for some κ > β.
pub fn tau_grad(params: &ModelParams, x: FluidPoint) -> Result<(f64, f64)> {
    let tau = hitting_time(params, x);
    tau_grad_at(params, x, tau)
}

pub(crate) fn tau_grad_at(params: &ModelParams, x: FluidPoint, tau: f64) -> Result<(f64, f64)> {
    if !tau.is_finite() {
        return Err(JsqError::Singularity {
            what: "tau_grad (no hitting time)",
            denominator: 0.0,
        });
    }
    let e = (-tau).exp();
    let denom = x.x2 * e - params.drift();
    if denom <= 1e-14 {
        return Err(JsqError::Singularity {
            what: "tau_grad",
            denominator: denom,
        });
    }
    let t1 = -e / denom;
    Ok((t1, t1 * tau))
}

fn check_tilde_domain(params: &ModelParams, kappa: f64, x: FluidPoint) -> Result<()> {
    if !(kappa > params.beta) {
        return Err(JsqError::ParamOrder(format!(
            "need kappa > beta, got kappa={kappa}, beta={}",
            params.beta
        )));
    }
    if x.x1 > -params.level(kappa) + 1e-15 || x.x2 < 0.0 {
        return Err(JsqError::Domain {
            function: "tilde_tau",
            value: x.x1,
        });
    }
    Ok(())
}

/// Time at which the first phase-1 coordinate falls to −κ/√n.
pub fn tilde_tau(params: &ModelParams, kappa: f64, x: FluidPoint) -> Result<f64> {
    check_tilde_domain(params, kappa, x)?;
    let b = params.drift();
    let kp = (kappa - params.beta) / params.sqrt_n();
    let c = x.x1 + b;
    if c + kp >= 0.0 {
        return Ok(0.0);
    }
    let mut eta = if x.x2 == 0.0 {
        (-c / kp).ln()
    } else {
        // τ̃ = −c/x₂ − W(u) = ln(x₂ W(u) / k') with u = (k'/x₂) e^{−c/x₂}.
        let log_u = (kp / x.x2).ln() - c / x.x2;
        let w = lambert_w0_of_exp(log_u)?;
        (x.x2 * w / kp).ln()
    };
    for _ in 0..3 {
        let ke = kp * eta.exp();
        let g = c + x.x2 * eta + ke;
        let step = g / (x.x2 + ke);
        if !step.is_finite() {
            break;
        }
        eta -= step;
        if step.abs() <= 4.0 * f64::EPSILON * (1.0 + eta.abs()) {
            break;
        }
    }
    Ok(eta.max(0.0))
}

/// Gradient of τ̃^(κ); the second component is τ̃₁·τ̃.
pub fn tilde_tau_grad(params: &ModelParams, kappa: f64, x: FluidPoint) -> Result<(f64, f64)> {
    let tt = tilde_tau(params, kappa, x)?;
    let kp = (kappa - params.beta) / params.sqrt_n();
    let e = (-tt).exp();
    let t1 = -e / (x.x2 * e + kp);
    Ok((t1, t1 * tt))
}

/// Phase-1 closed form: the trajectory before it first touches the axis.
pub fn phase_one(params: &ModelParams, x: FluidPoint, t: f64) -> FluidPoint {
    let b = params.drift();
    let e = (-t).exp();
    FluidPoint::raw(-b + (x.x1 + b) * e + t * x.x2 * e, x.x2 * e)
}

/// A trajectory of the fluid model split into its three closed-form phases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FluidTrajectory {
    pub start: FluidPoint,
    /// First time the axis is reached (τ), or +∞.
    pub hit_time: f64,
    /// Time at which the height on the axis has fallen to β/√n, or +∞.
    pub boundary_exit_time: f64,
    /// Point from which the final interior phase restarts.
    pub reentry: FluidPoint,
    drift: f64,
}

impl FluidTrajectory {
    pub fn new(params: &ModelParams, start: FluidPoint) -> Self {
        let b = params.drift();
        let hit_time = hitting_time(params, start);
        if !hit_time.is_finite() {
            return Self {
                start,
                hit_time,
                boundary_exit_time: f64::INFINITY,
                reentry: start,
                drift: b,
            };
        }
        let height = start.x2 * (-hit_time).exp();
        let slide = ((height - b) / b).max(0.0);
        Self {
            start,
            hit_time,
            boundary_exit_time: hit_time + slide,
            reentry: FluidPoint::raw(0.0, height.min(b)),
            drift: b,
        }
    }

    pub fn at(&self, t: f64) -> FluidPoint {
        let b = self.drift;
        let phase1 = |x: FluidPoint, s: f64| {
            let e = (-s).exp();
            FluidPoint::raw(-b + (x.x1 + b) * e + s * x.x2 * e, x.x2 * e)
        };
        if t < self.hit_time {
            return phase1(self.start, t);
        }
        if t < self.boundary_exit_time {
            let height = self.start.x2 * (-self.hit_time).exp();
            return FluidPoint::raw(0.0, height - b * (t - self.hit_time));
        }
        let p = phase1(self.reentry, t - self.boundary_exit_time);
        FluidPoint::raw(p.x1.min(0.0), p.x2)
    }

    /// Times at which the closed form switches phase.
    pub fn junctions(&self) -> Vec<f64> {
        [self.hit_time, self.boundary_exit_time]
            .into_iter()
            .filter(|t| t.is_finite() && *t > 0.0)
            .collect()
    }
}

/// Position at time `t` of the trajectory started at `x`.
pub fn fluid_flow(params: &ModelParams, x: FluidPoint, t: f64) -> FluidPoint {
    FluidTrajectory::new(params, x).at(t)
}

const HORIZON_LIMIT: f64 = 200.0;
const SCAN_STEP: f64 = 0.01;

/// ∫₀^∞ h(v^x(t)) dt over the closed-form trajectory. The integrand must
/// vanish near the equilibrium; the integration horizon is located by scanning.
pub fn value_integral(
    params: &ModelParams,
    h: &dyn Fn(FluidPoint) -> f64,
    x: FluidPoint,
    tol: f64,
) -> Result<f64> {
    let traj = FluidTrajectory::new(params, x);
    let steps = (HORIZON_LIMIT / SCAN_STEP) as usize;
    let nonzero = |t: f64| h(traj.at(t)) != 0.0;
    let mut breaks = vec![0.0];
    let mut prev = nonzero(0.0);
    let mut last_nonzero = if prev { Some(0.0) } else { None };
    for i in 1..=steps {
        let t = i as f64 * SCAN_STEP;
        let cur = nonzero(t);
        if cur != prev {
            // Locate the support switch so each piece is smooth.
            let (mut lo, mut hi) = (t - SCAN_STEP, t);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if nonzero(mid) == prev {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            breaks.push(0.5 * (lo + hi));
        }
        if cur {
            last_nonzero = Some(t);
        }
        prev = cur;
    }
    if prev {
        return Err(JsqError::HorizonDetection {
            horizon: HORIZON_LIMIT,
        });
    }
    let Some(last) = last_nonzero else {
        return Ok(0.0);
    };
    let end = *breaks.last().unwrap_or(&0.0);
    let end = end.max(last);
    breaks.extend(traj.junctions().into_iter().filter(|&t| t < end));
    breaks.push(end);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    Ok(integrate_pieces(|t| [h(traj.at(t))], &breaks, tol)?[0])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p100() -> ModelParams {
        ModelParams::new(100, 1.0).unwrap()
    }

    #[test]
    fn params_validate() {
        assert!(ModelParams::new(4, 2.0).is_err());
        assert!(ModelParams::new(4, -1.0).is_err());
        let p = ModelParams::new(400, 1.0).unwrap();
        assert_eq!(p.lambda, 1.0 - 1.0 / 20.0);
    }

    #[test]
    fn gamma_at_axis() {
        let p = p100();
        let s = gamma_solve(&p, 2.0, 0.0).unwrap();
        assert_eq!((s.nu_star, s.eta_star), (0.2, 0.0));
        let s = gamma_solve(&p, 1.0, 0.0).unwrap();
        assert_eq!((s.nu_star, s.eta_star), (0.1, 0.0));
        assert!(gamma_solve(&p, 0.5, -0.1).is_err());
    }

    #[test]
    fn gamma_matches_closed_form() {
        // s = 1/ν solves −ln(sk) + cs = b/k, so s = −W₀((−c/b)e^K)/c with
        // K = ln(β/κ) − β/κ.
        let p = p100();
        for &(kappa, x1) in &[(2.0, -0.5), (1.0, -0.3), (3.0, -0.05), (2.0, -0.1)] {
            let sol = gamma_solve(&p, kappa, x1).unwrap();
            let b = p.drift();
            let c = x1 + b;
            let kk = (1.0f64 / kappa).ln() - 1.0 / kappa;
            let s = if c == 0.0 {
                kk.exp() / b
            } else {
                -lambert_w0((-c / b) * kk.exp()).unwrap() / c
            };
            assert!(
                (1.0 / s - sol.nu_star).abs() < 1e-11 * sol.nu_star,
                "{kappa} {x1}"
            );
            let (r1, r2) = gamma_residuals(&p, kappa, x1, sol.nu_star, sol.eta_star);
            assert!(r1.abs() <= 1e-11 && r2.abs() <= 1e-11);
        }
    }

    #[test]
    fn classify_examples() {
        let p = p100();
        assert_eq!(
            classify_vs_gamma(&p, 2.0, FluidPoint::raw(0.0, 0.2)).unwrap(),
            CurveSide::On
        );
        assert_eq!(
            classify_vs_gamma(&p, 2.0, FluidPoint::raw(0.0, 1.2)).unwrap(),
            CurveSide::Above
        );
        let g2 = gamma_solve(&p, 3.0, -0.4).unwrap();
        assert_eq!(
            classify_vs_gamma(&p, 2.0, FluidPoint::raw(-0.4, g2.nu_star)).unwrap(),
            CurveSide::Above
        );
    }

    #[test]
    fn hitting_time_examples() {
        let p = p100();
        assert_eq!(hitting_time(&p, FluidPoint::raw(0.0, 0.7)), 0.0);
        assert!(hitting_time(&p, FluidPoint::raw(-1.0, 0.0)).is_infinite());
        let x1 = -0.5;
        let g = gamma_solve(&p, 2.0, x1).unwrap();
        let tau = hitting_time(&p, FluidPoint::raw(x1, g.nu_star));
        assert!((g.nu_star * (-tau).exp() - 0.2).abs() <= 1e-10);
        let hit = fluid_flow(&p, FluidPoint::raw(x1, g.nu_star), tau);
        assert!(hit.x1.abs() < 1e-10);
    }

    #[test]
    fn no_hit_along_dense_scan() {
        let p = p100();
        let x = FluidPoint::raw(-1.0, 0.0);
        for i in 0..20_000 {
            assert!(phase_one(&p, x, i as f64 * 0.01).x1 < 0.0);
        }
    }

    #[test]
    fn tau_grad_matches_finite_differences() {
        let p = p100();
        let h = 1e-6;
        for &(x1, x2) in &[(-0.5, 2.0), (-0.1, 0.6), (-1.5, 4.0), (-0.02, 0.25)] {
            let x = FluidPoint::raw(x1, x2);
            let (t1, t2) = tau_grad(&p, x).unwrap();
            let fd1 = (hitting_time(&p, FluidPoint::raw(x1 + h, x2))
                - hitting_time(&p, FluidPoint::raw(x1 - h, x2)))
                / (2.0 * h);
            let fd2 = (hitting_time(&p, FluidPoint::raw(x1, x2 + h))
                - hitting_time(&p, FluidPoint::raw(x1, x2 - h)))
                / (2.0 * h);
            assert!(((t1 - fd1) / t1).abs() < 1e-6, "{t1} {fd1}");
            assert!(((t2 - fd2) / t2).abs() < 1e-6, "{t2} {fd2}");
        }
        let (_, t2) = tau_grad(&p, FluidPoint::raw(0.0, 1.0)).unwrap();
        assert_eq!(t2, 0.0);
    }

    #[test]
    fn tilde_tau_examples() {
        let p = p100();
        let k = 2.0;
        assert_eq!(tilde_tau(&p, k, FluidPoint::raw(-0.2, 0.9)).unwrap(), 0.0);
        let x = FluidPoint::raw(-1.0, 0.5);
        let t = tilde_tau(&p, k, x).unwrap();
        let b = p.drift();
        let res = -b + (x.x1 + b) * (-t).exp() + x.x2 * t * (-t).exp() + 0.2;
        assert!(res.abs() <= 1e-10);
        let lim = ((10.0f64 - 1.0) / 1.0).ln();
        assert!((tilde_tau(&p, k, FluidPoint::raw(-1.0, 0.0)).unwrap() - lim).abs() < 1e-14);
        assert!((tilde_tau(&p, k, FluidPoint::raw(-1.0, 1e-9)).unwrap() - lim).abs() < 1e-7);
        assert!(tilde_tau(&p, k, FluidPoint::raw(-0.1, 0.5)).is_err());
    }

    #[test]
    fn tilde_tau_grad_matches_finite_differences() {
        let p = p100();
        let h = 1e-6;
        for &(x1, x2) in &[(-1.0, 0.5), (-0.5, 0.05), (-3.0, 2.0), (-0.3, 10.0)] {
            let k = 2.0;
            let (t1, t2) = tilde_tau_grad(&p, k, FluidPoint::raw(x1, x2)).unwrap();
            let f = |a: f64, b: f64| tilde_tau(&p, k, FluidPoint::raw(a, b)).unwrap();
            let fd1 = (f(x1 + h, x2) - f(x1 - h, x2)) / (2.0 * h);
            let fd2 = (f(x1, x2 + h) - f(x1, x2 - h)) / (2.0 * h);
            assert!(((t1 - fd1) / t1).abs() < 1e-6);
            assert!(((t2 - fd2) / t2).abs() < 1e-6, "{t2} vs {fd2}");
            assert!(t1 < 0.0);
        }
    }

    #[test]
    fn equilibrium_is_fixed() {
        let p = p100();
        let eq = FluidPoint::raw(-p.drift(), 0.0);
        for &t in &[0.0, 1.0, 50.0] {
            let v = fluid_flow(&p, eq, t);
            assert!((v.x1 - eq.x1).abs() < 1e-15 && v.x2 == 0.0);
        }
    }

    #[test]
    fn phases_join_continuously() {
        let p = p100();
        let traj = FluidTrajectory::new(&p, FluidPoint::raw(-0.3, 3.0));
        for t in traj.junctions() {
            let l = traj.at(t - 1e-13);
            let r = traj.at(t);
            assert!((l.x1 - r.x1).abs() < 1e-12 && (l.x2 - r.x2).abs() < 1e-12);
        }
    }

    #[test]
    fn value_integral_middle_branch() {
        let p = p100();
        let k = 0.2;
        let h = |v: FluidPoint| (v.x2 - k).max(0.0);
        let x = FluidPoint::raw(-1.0, 0.7);
        let v = value_integral(&p, &h, x, 1e-11).unwrap();
        let exact = 0.7 - k - k * (0.7f64 / k).ln();
        assert!((v - exact).abs() < 1e-9);
        assert_eq!(
            value_integral(&p, &h, FluidPoint::raw(-1.0, 0.1), 1e-11).unwrap(),
            0.0
        );
    }
}
