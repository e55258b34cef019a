//! Moment identities and steady-state bound checks, uniform over exact
//! solutions and simulation estimates.

use super::exact::ExactDistribution;
use super::simulate::StationaryEstimate;
use crate::error::{JsqError, Result};
use crate::fluid_model::ModelParams;
use crate::stats::{batch_means, Estimate};
use serde::Serialize;

/// Stationary quantities needed by the checks; exact sources report zero
/// half-widths.
pub trait StationaryView {
    fn params(&self) -> ModelParams;
    fn depth(&self) -> usize;
    fn mean_level(&self, i: usize) -> Estimate;
    fn block_prob(&self, k: usize) -> Estimate;
    fn q2_tail(&self, theta: f64) -> Estimate;
    fn q2_excess(&self, level: f64) -> Estimate;
    /// Estimate of E Q_i − nλ P(Q₁ = … = Q_{i−1} = n).
    fn moment_gap(&self, i: usize) -> Estimate;
}

impl StationaryView for ExactDistribution {
    fn params(&self) -> ModelParams {
        self.params
    }
    fn depth(&self) -> usize {
        self.depth
    }
    fn mean_level(&self, i: usize) -> Estimate {
        Estimate::exact(ExactDistribution::mean_level(self, i))
    }
    fn block_prob(&self, k: usize) -> Estimate {
        Estimate::exact(ExactDistribution::block_prob(self, k))
    }
    fn q2_tail(&self, theta: f64) -> Estimate {
        Estimate::exact(ExactDistribution::q2_tail(self, theta))
    }
    fn q2_excess(&self, level: f64) -> Estimate {
        Estimate::exact(ExactDistribution::q2_excess(self, level))
    }
    fn moment_gap(&self, i: usize) -> Estimate {
        let nl = self.params.arrival_rate();
        Estimate::exact(
            ExactDistribution::mean_level(self, i)
                - nl * ExactDistribution::block_prob(self, i - 1),
        )
    }
}

impl StationaryView for StationaryEstimate {
    fn params(&self) -> ModelParams {
        self.params
    }
    fn depth(&self) -> usize {
        self.config.depth
    }
    fn mean_level(&self, i: usize) -> Estimate {
        self.mean_levels
            .get(i.wrapping_sub(1))
            .copied()
            .unwrap_or(Estimate::exact(0.0))
    }
    fn block_prob(&self, k: usize) -> Estimate {
        self.block_probs
            .get(k)
            .copied()
            .unwrap_or(Estimate::exact(0.0))
    }
    fn q2_tail(&self, theta: f64) -> Estimate {
        StationaryEstimate::q2_tail(self, theta)
    }
    fn q2_excess(&self, level: f64) -> Estimate {
        StationaryEstimate::q2_excess(self, level)
    }
    fn moment_gap(&self, i: usize) -> Estimate {
        let nl = self.params.arrival_rate();
        let levels = self.batch_level_means(i);
        let gaps: Vec<f64> = levels
            .iter()
            .zip(self.prefix_rows())
            .map(|(m, r)| m - nl * r[(i - 1).min(r.len())..].iter().sum::<f64>())
            .collect();
        batch_means(&gaps)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentRow {
    pub i: usize,
    pub mean_q: Estimate,
    pub rhs: Estimate,
    /// E Q_i − nλ P(Q₁ = … = Q_{i−1} = n), with its own interval.
    pub discrepancy: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentReport {
    pub n: u64,
    pub beta: f64,
    pub rows: Vec<MomentRow>,
    pub max_abs_discrepancy: f64,
}

/// E Q_i against nλ P(Q₁ = … = Q_{i−1} = n) for i = 1..=max_i.
pub fn moment_identities_check(src: &dyn StationaryView, max_i: usize) -> MomentReport {
    let p = src.params();
    let nl = p.arrival_rate();
    let rows: Vec<MomentRow> = (1..=max_i.min(src.depth()))
        .map(|i| {
            let b = src.block_prob(i - 1);
            MomentRow {
                i,
                mean_q: src.mean_level(i),
                rhs: Estimate {
                    mean: nl * b.mean,
                    half_width: nl * b.half_width,
                },
                discrepancy: src.moment_gap(i),
            }
        })
        .collect();
    let max_abs_discrepancy = rows
        .iter()
        .map(|r| r.discrepancy.mean.abs())
        .fold(0.0, f64::max);
    MomentReport {
        n: p.n,
        beta: p.beta,
        rows,
        max_abs_discrepancy,
    }
}

/// (12 + 6κ/(κ − β)) appearing in every steady-state bound.
fn bound_factor(kappa: f64, beta: f64) -> f64 {
    12.0 + 6.0 * kappa / (kappa - beta)
}

/// (first-bound coefficient multiplying P(X₂ ≥ κ/√n − 1/n), bound on E √n X₂).
pub fn main_bound_rhs(params: &ModelParams, kappa: f64) -> (f64, f64) {
    let beta = params.beta;
    let f = bound_factor(kappa, beta);
    (f / (beta * params.sqrt_n()), 2.0 * kappa + f / beta)
}

pub fn q3_bound_rhs(params: &ModelParams, kappa: f64, kappa_tilde: f64) -> Result<f64> {
    let beta = params.beta;
    if !(kappa > beta) {
        return Err(JsqError::ParamOrder(format!(
            "need kappa > beta, got kappa={kappa}, beta={beta}"
        )));
    }
    let lo = (beta / params.sqrt_n()).max(1.0 / params.n_f64());
    if !(kappa_tilde > lo && kappa_tilde < 1.0) {
        return Err(JsqError::ParamOrder(format!(
            "need {lo} < kappa_tilde < 1, got {kappa_tilde}"
        )));
    }
    let inner = 12.0 + 6.0 * kappa_tilde / (kappa_tilde - beta / params.sqrt_n());
    let (_, tight) = main_bound_rhs(params, kappa);
    Ok(inner / (beta * (1.0 - kappa_tilde)) / (kappa_tilde - 1.0 / params.n_f64()) * tight)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MainBoundMargins {
    pub kappa: f64,
    pub excess: Estimate,
    pub excess_rhs: Estimate,
    /// rhs − lhs; compare against `excess_slack`.
    pub excess_margin: f64,
    pub excess_slack: f64,
    pub scaled_mean: Estimate,
    pub scaled_mean_rhs: f64,
    pub scaled_mean_margin: f64,
    pub excess_holds: bool,
    pub scaled_mean_holds: bool,
}

/// Evaluates E(X₂ − κ/√n)⁺ and E √n X₂ against their bounds. The scaled
/// mean must clear its bound by three half-widths.
pub fn steady_state_bound_check(src: &dyn StationaryView, kappa: f64) -> Result<MainBoundMargins> {
    let p = src.params();
    if !(kappa > p.beta) {
        return Err(JsqError::ParamOrder(format!(
            "need kappa > beta, got kappa={kappa}, beta={}",
            p.beta
        )));
    }
    let k = p.level(kappa);
    let (coef, tight) = main_bound_rhs(&p, kappa);
    let excess = src.q2_excess(k);
    let tail = src.q2_tail(k - 1.0 / p.n_f64());
    let excess_rhs = Estimate {
        mean: coef * tail.mean,
        half_width: coef * tail.half_width,
    };
    let q2 = src.mean_level(2);
    let scaled_mean = Estimate {
        mean: q2.mean / p.sqrt_n(),
        half_width: q2.half_width / p.sqrt_n(),
    };
    let excess_margin = excess_rhs.mean - excess.mean;
    let excess_slack = excess.half_width + excess_rhs.half_width;
    let scaled_mean_margin = tight - scaled_mean.mean;
    Ok(MainBoundMargins {
        kappa,
        excess,
        excess_rhs,
        excess_margin,
        excess_slack,
        scaled_mean,
        scaled_mean_rhs: tight,
        scaled_mean_margin,
        excess_holds: excess_margin >= -excess_slack,
        scaled_mean_holds: scaled_mean_margin >= 3.0 * scaled_mean.half_width,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Q3Margins {
    pub kappa: f64,
    pub kappa_tilde: f64,
    pub mean_q3: Estimate,
    pub rhs: f64,
    pub margin: f64,
    pub holds: bool,
    /// E Q_i ≤ E Q_3 for the tracked levels i > 3.
    pub monotone: bool,
}

pub fn third_level_bound_check(
    src: &dyn StationaryView,
    kappa: f64,
    kappa_tilde: f64,
) -> Result<Q3Margins> {
    let p = src.params();
    let rhs = q3_bound_rhs(&p, kappa, kappa_tilde)?;
    let mean_q3 = src.mean_level(3);
    let margin = rhs - mean_q3.mean;
    let monotone = (4..=src.depth()).all(|i| src.mean_level(i).mean <= mean_q3.mean);
    Ok(Q3Margins {
        kappa,
        kappa_tilde,
        mean_q3,
        rhs,
        margin,
        holds: margin >= -mean_q3.half_width,
        monotone,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scaled_mean_bound_value() {
        let p = ModelParams::new(400, 1.0).unwrap();
        assert_eq!(main_bound_rhs(&p, 2.0).1, 28.0);
    }

    #[test]
    fn q3_bound_specialisation() {
        for &(n, beta, eps) in &[(400u64, 1.0, 1.0), (100, 0.5, 2.0), (10_000, 2.0, 0.3)] {
            let p = ModelParams::new(n, beta).unwrap();
            let s = p.sqrt_n();
            let nf = n as f64;
            let display = 2.0 / beta * (12.0 + 3.0 / (0.5 - beta / s)) / (0.5 - 1.0 / nf)
                * (2.0 * (beta + eps) + (12.0 + 6.0 * (beta + eps) / eps) / beta);
            let got = q3_bound_rhs(&p, beta + eps, 0.5).unwrap();
            assert!((got - display).abs() <= 1e-12 * display);
        }
    }

    #[test]
    fn q3_window_enforced() {
        let p = ModelParams::new(4, 1.0).unwrap();
        assert!(q3_bound_rhs(&p, 2.0, 0.4).is_err());
        assert!(q3_bound_rhs(&p, 2.0, 1.0).is_err());
        assert!(q3_bound_rhs(&p, 0.5, 0.7).is_err());
    }
}
