//! Exponential Lyapunov function built from the two smoothed-indicator
//! solutions, the reflected-diffusion generator, and grid certification of
//! the drift inequality  G_Y V ≤ −αcV + αd.

use crate::error::{JsqError, Result};
use crate::fluid_model::{FluidPoint, ModelParams};
use crate::grid::GridSpec;
use crate::special_fn::SmoothingSpec;
use crate::stein_solutions::{f1_jet, f2_jet, FieldJet};
use serde::{Deserialize, Serialize};

/// A point of Ω at diffusion scale, y = √n·x.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffusionPoint {
    pub y1: f64,
    pub y2: f64,
}

impl DiffusionPoint {
    pub fn new(y1: f64, y2: f64) -> Result<Self> {
        if !(y1 <= 0.0) || !(y2 >= 0.0) || !y1.is_finite() || !y2.is_finite() {
            return Err(JsqError::InvalidParameter(format!(
                "({y1}, {y2}) is not in the domain"
            )));
        }
        Ok(Self { y1, y2 })
    }

    pub fn to_fluid(self, params: &ModelParams) -> FluidPoint {
        let s = params.sqrt_n();
        FluidPoint::raw(self.y1 / s, self.y2 / s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftConstants {
    pub c: f64,
    pub d: f64,
    pub alpha: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    pub beta: f64,
}

/// c and d of the drift inequality for the given smoothing levels and rate α.
pub fn drift_constants(beta: f64, kappa1: f64, kappa2: f64, alpha: f64) -> Result<DriftConstants> {
    if !(beta > 0.0 && beta < kappa1 && kappa1 < kappa2) || !kappa2.is_finite() {
        return Err(JsqError::ParamOrder(format!(
            "need 0 < beta < kappa1 < kappa2, got beta={beta}, kappa1={kappa1}, kappa2={kappa2}"
        )));
    }
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(JsqError::InvalidParameter(format!(
            "alpha must be nonnegative, got {alpha}"
        )));
    }
    let gap = kappa2 - kappa1;
    let lg = ((kappa2 - beta) / (kappa1 - beta)).ln();
    let curvature = 12.0 / (gap * gap) * lg;
    let queue_part = 1.0 / (beta * (kappa1 - beta))
        * (1.0 + kappa1 / (kappa1 - beta) * 4.0 * (kappa1 - beta) / gap);
    let slope = (4.0 / gap * lg + 1.0 / beta).powi(2);
    let c = 1.0 - curvature - queue_part - alpha * slope;
    let d = ((kappa2 - beta) / (kappa1 - beta) * kappa2 / kappa1).powf(alpha)
        * (alpha * gap / beta).exp();
    Ok(DriftConstants {
        c,
        d,
        alpha,
        kappa1,
        kappa2,
        beta,
    })
}

/// Fluid-scale jet of f^(idle) + f^(queue).
pub fn combined_jet(
    params: &ModelParams,
    kappa1: f64,
    kappa2: f64,
    x: FluidPoint,
) -> Result<FieldJet> {
    let a = f1_jet(params, kappa1, kappa2, x)?;
    let (b, _) = f2_jet(params, kappa1, kappa2, x)?;
    Ok(a.add(&b))
}

/// Jet of V(y) = exp(α F(y/√n)) in diffusion coordinates.
pub fn lyapunov_jet(
    params: &ModelParams,
    kappa1: f64,
    kappa2: f64,
    alpha: f64,
    y: DiffusionPoint,
) -> Result<FieldJet> {
    let fj = combined_jet(params, kappa1, kappa2, y.to_fluid(params))?;
    Ok(exp_jet(&fj, alpha, 1.0 / params.sqrt_n()))
}

/// Jet of exp(α g(s·y)) from the jet of g at s·y.
pub fn exp_jet(g: &FieldJet, alpha: f64, s: f64) -> FieldJet {
    let v = (alpha * g.f).exp();
    let s2 = s * s;
    FieldJet {
        f: v,
        f1: alpha * g.f1 * s * v,
        f2: alpha * g.f2 * s * v,
        f11: (alpha * g.f11 + alpha * alpha * g.f1 * g.f1) * s2 * v,
        f12: (alpha * g.f12 + alpha * alpha * g.f1 * g.f2) * s2 * v,
        f22: (alpha * g.f22 + alpha * alpha * g.f2 * g.f2) * s2 * v,
    }
}

pub fn lyapunov_value(
    params: &ModelParams,
    kappa1: f64,
    kappa2: f64,
    alpha: f64,
    y: DiffusionPoint,
) -> Result<f64> {
    Ok(lyapunov_jet(params, kappa1, kappa2, alpha, y)?.f)
}

/// G_Y f(y) = (−y₁ + y₂ − β) f₁ − y₂ f₂ + f₁₁.
pub fn apply_gy(jet: &FieldJet, beta: f64, y: DiffusionPoint) -> f64 {
    (-y.y1 + y.y2 - beta) * jet.f1 - y.y2 * jet.f2 + jet.f11
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftReport {
    pub grid: GridSpec,
    pub constants: DriftConstants,
    pub points: usize,
    /// max over the grid of G_Y V + αcV − αd.
    pub max_gap: f64,
    pub worst_point: (f64, f64),
    /// max |G_Y V/(αV) − (−φ(−y₁/√n) − φ(y₂/√n) + (F₁₁ + αF₁²)/n)|.
    pub chain_rule_residual: f64,
    /// max |V₁ − V₂| along y₁ = 0.
    pub boundary_gap: f64,
    pub min_value: f64,
    pub max_value: f64,
    pub pass: bool,
}

pub const DRIFT_TOL: f64 = 1e-8;

/// Evaluates the drift inequality at every node of a diffusion-scale grid.
pub fn verify_drift(
    params: &ModelParams,
    kappa1: f64,
    kappa2: f64,
    alpha: f64,
    grid: &GridSpec,
) -> Result<DriftReport> {
    grid.validate()?;
    let constants = drift_constants(params.beta, kappa1, kappa2, alpha)?;
    let phi = SmoothingSpec::new(kappa1, kappa2)?;
    let n = params.n_f64();
    let s = 1.0 / params.sqrt_n();
    let mut max_gap = f64::NEG_INFINITY;
    let mut worst_point = (f64::NAN, f64::NAN);
    let mut chain_rule_residual: f64 = 0.0;
    let mut min_value = f64::INFINITY;
    let mut max_value = f64::NEG_INFINITY;
    for (a, b) in grid.points() {
        let y = DiffusionPoint::new(a, b)?;
        let fj = combined_jet(params, kappa1, kappa2, y.to_fluid(params))?;
        let vj = exp_jet(&fj, alpha, s);
        let gv = apply_gy(&vj, params.beta, y);
        let gap = gv + alpha * constants.c * vj.f - alpha * constants.d;
        if gap > max_gap {
            max_gap = gap;
            worst_point = (a, b);
        }
        if alpha > 0.0 {
            let direct = gv / (alpha * vj.f);
            let expected = -phi.value(-a) - phi.value(b) + (fj.f11 + alpha * fj.f1 * fj.f1) / n;
            chain_rule_residual = chain_rule_residual.max((direct - expected).abs());
        }
        min_value = min_value.min(vj.f);
        max_value = max_value.max(vj.f);
    }
    let mut boundary_gap: f64 = 0.0;
    for b in grid.x2_values() {
        let vj = lyapunov_jet(params, kappa1, kappa2, alpha, DiffusionPoint::new(0.0, b)?)?;
        boundary_gap = boundary_gap.max((vj.f1 - vj.f2).abs());
    }
    Ok(DriftReport {
        grid: *grid,
        constants,
        points: grid.len(),
        max_gap,
        worst_point,
        chain_rule_residual,
        boundary_gap,
        min_value,
        max_value,
        pass: max_gap <= DRIFT_TOL,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftScanRow {
    pub alpha: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    pub c: f64,
    pub d: f64,
    pub pass: bool,
}

/// Drift constants and grid verdicts over a parameter sweep. Invalid
/// (κ₁, κ₂) combinations are skipped.
pub fn drift_scan(
    params: &ModelParams,
    alphas: &[f64],
    kappa1s: &[f64],
    kappa2s: &[f64],
    points: usize,
) -> Result<Vec<DriftScanRow>> {
    let mut rows = Vec::new();
    for &alpha in alphas {
        for &k1 in kappa1s {
            for &k2 in kappa2s {
                if !(params.beta < k1 && k1 < k2) {
                    continue;
                }
                let grid =
                    GridSpec::square(-2.0 * k2, 2.0 * k2, points, crate::grid::Scale::Diffusion)?;
                let rep = verify_drift(params, k1, k2, alpha, &grid)?;
                rows.push(DriftScanRow {
                    alpha,
                    kappa1: k1,
                    kappa2: k2,
                    c: rep.constants.c,
                    d: rep.constants.d,
                    pass: rep.pass,
                });
            }
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Scale;

    #[test]
    fn constants_match_direct_evaluation() {
        let c = drift_constants(1.0, 11.0, 21.0, 0.1).unwrap();
        assert!((c.c - 0.2137).abs() < 1e-4, "{}", c.c);
        assert!((c.d - 3.108).abs() < 1e-3, "{}", c.d);
        assert!(drift_constants(1.0, 0.5, 2.0, 0.1).is_err());
    }

    #[test]
    fn c_decreases_in_alpha() {
        let a = drift_constants(1.0, 11.0, 21.0, 0.1).unwrap().c;
        let b = drift_constants(1.0, 11.0, 21.0, 0.2).unwrap().c;
        assert!(b < a);
    }

    #[test]
    fn specialised_c_is_more_conservative() {
        for &beta in &[0.5, 1.0, 2.0] {
            for &eps in &[0.5, 1.0, 5.0, 20.0] {
                for &alpha in &[0.01, 0.1, 1.0] {
                    let general = drift_constants(beta, beta + eps, beta + 2.0 * eps, alpha)
                        .unwrap()
                        .c;
                    let special = 1.0
                        - 12.0 / (eps * eps)
                        - (1.0 + 4.0 * (1.0 + beta / eps)) / (beta * eps)
                        - alpha * (4.0 / eps + 1.0 / beta).powi(2);
                    assert!(special <= general + 1e-12);
                }
            }
        }
    }

    #[test]
    fn generator_on_simple_functions() {
        let y = DiffusionPoint::new(-1.5, 2.0).unwrap();
        let lin = FieldJet {
            f: 2.0,
            f2: 1.0,
            ..FieldJet::ZERO
        };
        assert_eq!(apply_gy(&lin, 1.0, y), -2.0);
        let sq = FieldJet {
            f: 2.25,
            f1: -3.0,
            f11: 2.0,
            ..FieldJet::ZERO
        };
        assert!((apply_gy(&sq, 1.0, y) - ((1.5 + 2.0 - 1.0) * -3.0 + 2.0)).abs() < 1e-15);
    }

    #[test]
    fn value_at_origin_and_lower_bound() {
        let p = ModelParams::new(100, 1.0).unwrap();
        assert_eq!(
            lyapunov_value(&p, 11.0, 21.0, 0.1, DiffusionPoint::new(0.0, 0.0).unwrap()).unwrap(),
            1.0
        );
        let far = lyapunov_value(
            &p,
            11.0,
            21.0,
            0.1,
            DiffusionPoint::new(-400.0, 400.0).unwrap(),
        )
        .unwrap();
        assert!(far > 10.0);
    }

    #[test]
    fn zero_rate_is_trivial() {
        let p = ModelParams::new(100, 1.0).unwrap();
        let g = GridSpec::square(-40.0, 40.0, 8, Scale::Diffusion).unwrap();
        let r = verify_drift(&p, 11.0, 21.0, 0.0, &g).unwrap();
        assert!(r.pass && r.max_gap.abs() < 1e-15);
    }

    #[test]
    fn excess_exponential_chain_rule() {
        use crate::stein_solutions::f_h_jet;
        let p = ModelParams::new(100, 1.0).unwrap();
        let alpha = 0.3;
        let k = p.level(2.0);
        for &(a, b) in &[(-3.0, 4.0), (-0.5, 1.0), (-10.0, 2.5), (0.0, 6.0)] {
            let y = DiffusionPoint::new(a, b).unwrap();
            let x = y.to_fluid(&p);
            let fj = f_h_jet(&p, 2.0, x).unwrap();
            let g = exp_jet(&fj, alpha, 0.1);
            let lhs = apply_gy(&g, 1.0, y);
            let rhs = -(x.x2 - k).max(0.0) * alpha * g.f
                + (alpha * fj.f11 + alpha * alpha * fj.f1 * fj.f1) / 100.0 * g.f;
            assert!((lhs - rhs).abs() < 1e-8);
        }
    }
}
