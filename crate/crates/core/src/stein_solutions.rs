//! Closed-form solutions of the fluid PDE  L f = −h,  f₁(0,·) = f₂(0,·)
//! for three right-hand sides: the excess (x₂ − κ/√n) ∨ 0 and the smoothed
//! indicators φ(−x₁) and φ(x₂). Each solution is returned as a [`FieldJet`].

use crate::error::{JsqError, Result};
use crate::fluid_model::{
    classify_vs_gamma, hitting_time, tau_grad_at, tilde_tau, CurveSide, FluidPoint, ModelParams,
};
use crate::grid::GridSpec;
use crate::quadrature::integrate_pieces;
use crate::registry::JetField;
use crate::special_fn::SmoothingSpec;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Absolute tolerance for every trajectory-time or level integral.
pub const QUAD_TOL: f64 = 1e-12;

/// Value, gradient and Hessian entries of a function at a point.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FieldJet {
    pub f: f64,
    pub f1: f64,
    pub f2: f64,
    pub f11: f64,
    pub f12: f64,
    pub f22: f64,
}

impl FieldJet {
    pub const ZERO: FieldJet = FieldJet {
        f: 0.0,
        f1: 0.0,
        f2: 0.0,
        f11: 0.0,
        f12: 0.0,
        f22: 0.0,
    };

    pub fn is_finite(&self) -> bool {
        [self.f, self.f1, self.f2, self.f11, self.f12, self.f22]
            .iter()
            .all(|v| v.is_finite())
    }

    pub fn add(&self, o: &FieldJet) -> FieldJet {
        FieldJet {
            f: self.f + o.f,
            f1: self.f1 + o.f1,
            f2: self.f2 + o.f2,
            f11: self.f11 + o.f11,
            f12: self.f12 + o.f12,
            f22: self.f22 + o.f22,
        }
    }
}

/// Subdomain of Ω used by the φ(x₂) solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegionLabel {
    S0,
    S1,
    S2,
    S3,
}

/// L f(x) = (−x₁ + x₂ − β/√n) f₁(x) − x₂ f₂(x).
pub fn apply_l(params: &ModelParams, jet: &FieldJet, x: FluidPoint) -> f64 {
    (-x.x1 + x.x2 - params.drift()) * jet.f1 - x.x2 * jet.f2
}

fn require_above_beta(params: &ModelParams, kappa: f64) -> Result<()> {
    if !(kappa > params.beta) || !kappa.is_finite() {
        return Err(JsqError::ParamOrder(format!(
            "need kappa > beta, got kappa={kappa}, beta={}",
            params.beta
        )));
    }
    Ok(())
}

pub(crate) fn require_pair(params: &ModelParams, kappa1: f64, kappa2: f64) -> Result<()> {
    if !(params.beta < kappa1 && kappa1 < kappa2) || !kappa2.is_finite() {
        return Err(JsqError::ParamOrder(format!(
            "need beta < kappa1 < kappa2, got beta={}, kappa1={kappa1}, kappa2={kappa2}",
            params.beta
        )));
    }
    Ok(())
}

/// Smoothing knots (κ₁/√n, κ₂/√n) at fluid scale.
pub fn fluid_smoothing(params: &ModelParams, kappa1: f64, kappa2: f64) -> Result<SmoothingSpec> {
    SmoothingSpec::new(params.level(kappa1), params.level(kappa2))
}

/// Solution for h(x) = (x₂ − κ/√n) ∨ 0.
pub fn f_h_jet(params: &ModelParams, kappa: f64, x: FluidPoint) -> Result<FieldJet> {
    require_above_beta(params, kappa)?;
    let k = params.level(kappa);
    if x.x2 <= k {
        return Ok(FieldJet::ZERO);
    }
    if classify_vs_gamma(params, kappa, x)? != CurveSide::Above {
        return Ok(FieldJet {
            f: x.x2 - k - k * (x.x2 / k).ln(),
            f1: 0.0,
            f2: 1.0 - k / x.x2,
            f11: 0.0,
            f12: 0.0,
            f22: k / (x.x2 * x.x2),
        });
    }
    let b = params.drift();
    let r = 1.0 / b;
    let tau = hitting_time(params, x);
    let (t1, t2) = tau_grad_at(params, x, tau)?;
    let e = (-tau).exp();
    let m = x.x2 * e;
    let slope = (m - b) / x.x2 + tau * e;
    Ok(FieldJet {
        f: x.x2 * (1.0 - e) - k * tau + 0.5 * r * (m - k) * (m - k),
        f1: r * e * (m - k),
        f2: 1.0 - k / x.x2 + r * (m - k) * slope,
        f11: r * e * e * (2.0 * m - k) / (m - b),
        f12: r * (-t2 * e) * (m - k) + r * e * (e - t2 * x.x2 * e),
        f22: k / (x.x2 * x.x2)
            + r * (e - t1 * tau * x.x2 * e) * slope
            + r * (m - k) * (b / (x.x2 * x.x2) - t1 * tau * tau * e),
    })
}

/// Solution for h(x) = φ(−x₁) with knots (κ₁/√n, κ₂/√n).
pub fn f1_jet(params: &ModelParams, kappa1: f64, kappa2: f64, x: FluidPoint) -> Result<FieldJet> {
    require_pair(params, kappa1, kappa2)?;
    let (l1, l2) = (params.level(kappa1), params.level(kappa2));
    if x.x1 >= -l1 {
        return Ok(FieldJet::ZERO);
    }
    let phi = fluid_smoothing(params, kappa1, kappa2)?;
    let b = params.drift();
    let t_hi = tilde_tau(params, kappa1, x)?;
    let (t_lo, base) = if x.x1 <= -l2 {
        let t = tilde_tau(params, kappa2, x)?;
        (t, t)
    } else {
        (0.0, 0.0)
    };
    let mut breaks = vec![t_lo];
    if x.x1 < -phi.mid() {
        let t_mid = tilde_tau(params, 0.5 * (kappa1 + kappa2), x)?;
        if t_mid > t_lo && t_mid < t_hi {
            breaks.push(t_mid);
        }
    }
    breaks.push(t_hi);
    let c = x.x1 + b;
    let integrals = integrate_pieces(
        |t| {
            let e = (-t).exp();
            let psi = b - c * e - x.x2 * t * e;
            let (v, d1, d2) = (phi.value(psi), phi.first(psi), phi.second(psi));
            let e2 = e * e;
            [v, e * d1, t * e * d1, e2 * d2, t * e2 * d2, t * t * e2 * d2]
        },
        &breaks,
        QUAD_TOL,
    )?;
    Ok(FieldJet {
        f: base + integrals[0],
        f1: -integrals[1],
        f2: -integrals[2],
        f11: integrals[3],
        f12: integrals[4],
        f22: integrals[5],
    })
}

/// ∫_{ℓ}^{a} φ(u)/u du for a ≥ ℓ, the knot-to-level integral of the φ(x₂) solution.
fn log_weighted(phi: &SmoothingSpec, a: f64) -> Result<f64> {
    let (lo, hi) = (phi.lower(), phi.upper());
    if a <= lo {
        return Ok(0.0);
    }
    let top = a.min(hi);
    let mut breaks = vec![lo];
    if top > phi.mid() {
        breaks.push(phi.mid());
    }
    breaks.push(top);
    let inner = integrate_pieces(|u| [phi.value(u) / u], &breaks, QUAD_TOL)?[0];
    Ok(inner + (a.max(hi) / hi).ln())
}

/// Region of `x` for the φ(x₂) solution.
pub fn region_label(
    params: &ModelParams,
    kappa1: f64,
    kappa2: f64,
    x: FluidPoint,
) -> Result<RegionLabel> {
    require_pair(params, kappa1, kappa2)?;
    if x.x2 <= params.level(kappa1) {
        return Ok(RegionLabel::S0);
    }
    if classify_vs_gamma(params, kappa1, x)? != CurveSide::Above {
        return Ok(RegionLabel::S1);
    }
    if classify_vs_gamma(params, kappa2, x)? != CurveSide::Above {
        return Ok(RegionLabel::S2);
    }
    Ok(RegionLabel::S3)
}

/// Solution for h(x) = φ(x₂) with knots (κ₁/√n, κ₂/√n).
pub fn f2_jet(
    params: &ModelParams,
    kappa1: f64,
    kappa2: f64,
    x: FluidPoint,
) -> Result<(FieldJet, RegionLabel)> {
    let label = region_label(params, kappa1, kappa2, x)?;
    let phi = fluid_smoothing(params, kappa1, kappa2)?;
    let r = 1.0 / params.drift();
    let x2 = x.x2;
    let jet = match label {
        RegionLabel::S0 => FieldJet::ZERO,
        RegionLabel::S1 => {
            let (p, dp) = (phi.value(x2), phi.first(x2));
            FieldJet {
                f: log_weighted(&phi, x2)?,
                f1: 0.0,
                f2: p / x2,
                f11: 0.0,
                f12: 0.0,
                f22: dp / x2 - p / (x2 * x2),
            }
        }
        RegionLabel::S2 | RegionLabel::S3 => {
            let tau = hitting_time(params, x);
            let (t1, t2) = tau_grad_at(params, x, tau)?;
            let e = (-tau).exp();
            let m = x2 * e;
            if label == RegionLabel::S3 {
                let l2 = phi.upper();
                FieldJet {
                    f: tau + r * (m - l2) + r * phi.primitive(l2),
                    f1: r * e,
                    f2: r * e * (tau + 1.0),
                    f11: -t1 * r * e,
                    f12: -r * t2 * e,
                    f22: -r * e * t1 * tau * tau,
                }
            } else {
                let (px, dpx) = (phi.value(x2), phi.first(x2));
                let (pm, dpm) = (phi.value(m), phi.first(m));
                // dm/dx₂
                let dm = e - t1 * tau * m;
                FieldJet {
                    f: log_weighted(&phi, x2)? - log_weighted(&phi, m)? + r * phi.primitive(m),
                    f1: r * pm * e,
                    f2: (px - pm) / x2 + r * pm * e * (tau + 1.0),
                    f11: -t1 * r * e * (pm + m * dpm),
                    f12: r * (dpm * dm * e - pm * t2 * e),
                    f22: (dpx - dpm * dm) / x2 - (px - pm) / (x2 * x2)
                        + r * (dpm * dm * e * (tau + 1.0) - pm * e * t2 * tau),
                }
            }
        }
    };
    Ok((jet, label))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualReport {
    pub field: String,
    pub grid: GridSpec,
    pub points: usize,
    pub max_residual: f64,
    pub worst_point: (f64, f64),
    pub max_boundary_gap: f64,
    pub worst_boundary_x2: f64,
}

/// Max of |L f + h| over the grid and of |f₁ − f₂| along {x₁ = 0}.
pub fn pde_residual_scan(
    params: &ModelParams,
    field: &dyn JetField,
    grid: &GridSpec,
) -> Result<ResidualReport> {
    grid.validate()?;
    let mut max_residual: f64 = 0.0;
    let mut worst_point = (f64::NAN, f64::NAN);
    for (a, b) in grid.points() {
        let x = FluidPoint::new(a, b)?;
        let jet = field.jet(x)?;
        let h = field.source(x).ok_or_else(|| {
            JsqError::InvalidParameter(format!("field '{}' solves no PDE", field.name()))
        })?;
        let res = (apply_l(params, &jet, x) + h).abs();
        if !(res <= max_residual) {
            max_residual = res;
            worst_point = (a, b);
        }
    }
    let mut max_boundary_gap: f64 = 0.0;
    let mut worst_boundary_x2 = f64::NAN;
    for b in grid.x2_values() {
        let jet = field.jet(FluidPoint::new(0.0, b)?)?;
        let gap = (jet.f1 - jet.f2).abs();
        if !(gap <= max_boundary_gap) {
            max_boundary_gap = gap;
            worst_boundary_x2 = b;
        }
    }
    Ok(ResidualReport {
        field: field.name().to_string(),
        grid: *grid,
        points: grid.len(),
        max_residual,
        worst_point,
        max_boundary_gap,
        worst_boundary_x2,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundTarget {
    Excess { kappa: f64 },
    SmoothPair { kappa1: f64, kappa2: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCheck {
    pub bound: f64,
    pub max_observed: f64,
    pub violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundViolation {
    pub check: String,
    pub x1: f64,
    pub x2: f64,
    pub value: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub target: BoundTarget,
    pub grid: GridSpec,
    pub points: usize,
    pub checks: BTreeMap<String, BoundCheck>,
    pub total_violations: usize,
    /// First violations found, capped for report size.
    pub violations: Vec<BoundViolation>,
}

const MAX_LISTED: usize = 100;
/// Relative slack for bounds that are attained with equality.
const BOUND_REL_SLACK: f64 = 1e-9;
const SIGN_TOL: f64 = 1e-12;

struct BoundTally {
    checks: BTreeMap<String, BoundCheck>,
    total: usize,
    listed: Vec<BoundViolation>,
}

impl BoundTally {
    fn new() -> Self {
        Self {
            checks: BTreeMap::new(),
            total: 0,
            listed: Vec::new(),
        }
    }

    /// Records `value ≤ bound` (with slack) under `name`.
    fn upper(&mut self, name: &str, value: f64, bound: f64, x: FluidPoint) {
        let slack = bound.abs() * BOUND_REL_SLACK + SIGN_TOL;
        let entry = self.checks.entry(name.to_string()).or_insert(BoundCheck {
            bound,
            max_observed: f64::NEG_INFINITY,
            violations: 0,
        });
        entry.max_observed = entry.max_observed.max(value);
        if !(value <= bound + slack) {
            entry.violations += 1;
            self.total += 1;
            if self.listed.len() < MAX_LISTED {
                self.listed.push(BoundViolation {
                    check: name.to_string(),
                    x1: x.x1,
                    x2: x.x2,
                    value,
                    bound,
                });
            }
        }
    }
}

/// Grid certification of the derivative bounds for the excess solution or
/// the pair of smoothed-indicator solutions.
pub fn derivative_bound_report(
    params: &ModelParams,
    target: BoundTarget,
    grid: &GridSpec,
) -> Result<BoundReport> {
    grid.validate()?;
    let mut tally = BoundTally::new();
    let rn = params.sqrt_n();
    let beta = params.beta;
    match target {
        BoundTarget::Excess { kappa } => {
            require_above_beta(params, kappa)?;
            let k = params.level(kappa);
            let b11 = rn / beta * (kappa / (kappa - beta) + 1.0);
            let b22 = rn / beta * (5.0 + 2.0 * kappa / (kappa - beta));
            for (a, b) in grid.points() {
                let x = FluidPoint::new(a, b)?;
                let j = f_h_jet(params, kappa, x)?;
                tally.upper("f11_nonnegative", -j.f11, 0.0, x);
                tally.upper("f12_nonnegative", -j.f12, 0.0, x);
                tally.upper("f22_nonnegative", -j.f22, 0.0, x);
                if b < k {
                    tally.upper("f11_zero_below_level", j.f11.abs(), 0.0, x);
                    tally.upper("f22_zero_below_level", j.f22.abs(), 0.0, x);
                } else {
                    tally.upper("f11_upper", j.f11, b11, x);
                    tally.upper("f22_upper", j.f22, b22, x);
                }
            }
        }
        BoundTarget::SmoothPair { kappa1, kappa2 } => {
            require_pair(params, kappa1, kappa2)?;
            let n = params.n_f64();
            let gap = kappa2 - kappa1;
            let lg = ((kappa2 - beta) / (kappa1 - beta)).ln();
            let b1 = 4.0 * rn / gap * lg;
            let b11 = 12.0 * n / (gap * gap) * lg;
            let c1 = rn / beta;
            let c11 = n / (beta * (kappa1 - beta))
                * (1.0 + kappa1 / (kappa1 - beta) * 4.0 * (kappa1 - beta) / gap);
            let box_edge = params.level(kappa2);
            let box1 = lg;
            let box2 = (kappa2 / kappa1).ln() + gap / beta;
            for (a, b) in grid.points() {
                let x = FluidPoint::new(a, b)?;
                let j1 = f1_jet(params, kappa1, kappa2, x)?;
                let (j2, _) = f2_jet(params, kappa1, kappa2, x)?;
                tally.upper("idle_f1_abs", j1.f1.abs(), b1, x);
                tally.upper("idle_f11_abs", j1.f11.abs(), b11, x);
                tally.upper("queue_f1_abs", j2.f1.abs(), c1, x);
                tally.upper("queue_f11_abs", j2.f11.abs(), c11, x);
                if a >= -box_edge && b <= box_edge {
                    tally.upper("idle_value_box", j1.f, box1, x);
                    tally.upper("queue_value_box", j2.f, box2, x);
                }
            }
        }
    }
    Ok(BoundReport {
        target,
        grid: *grid,
        points: grid.len(),
        checks: tally.checks,
        total_violations: tally.total,
        violations: tally.listed,
    })
}
