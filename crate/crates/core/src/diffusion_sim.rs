//! Euler scheme with projection for the reflected diffusion limit, stationary
//! sampling, comparison against scaled chain samples, and a coupling probe.

use crate::error::{JsqError, Result};
use crate::fluid_model::ModelParams;
use crate::jsq_ctmc::{simulate, SimConfig};
use crate::lyapunov_drift::DiffusionPoint;
use crate::stats::{batch_means, marginal_wasserstein, wasserstein1, Estimate};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SdeState {
    pub y: DiffusionPoint,
    /// Cumulative regulator.
    pub u_cum: f64,
}

impl SdeState {
    pub fn at(y: DiffusionPoint) -> Self {
        Self { y, u_cum: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepOutcome {
    pub state: SdeState,
    pub delta_u: f64,
    /// First coordinate before projection.
    pub unconstrained_y1: f64,
}

/// One Euler step followed by projection of the first coordinate onto
/// (−∞, 0]; the overshoot is pushed into the second coordinate.
pub fn step_euler(state: SdeState, beta: f64, h: f64, gaussian: f64) -> Result<StepOutcome> {
    if !(h > 0.0 && h < 1.0) {
        return Err(JsqError::InvalidParameter(format!(
            "Euler step must lie in (0, 1), got {h}"
        )));
    }
    let DiffusionPoint { y1, y2 } = state.y;
    let raw1 = y1 + (-y1 + y2 - beta) * h + (2.0 * h).sqrt() * gaussian;
    let mut y2n = y2 - y2 * h;
    let (y1n, du) = if raw1 > 0.0 { (0.0, raw1) } else { (raw1, 0.0) };
    y2n += du;
    Ok(StepOutcome {
        state: SdeState {
            y: DiffusionPoint {
                y1: y1n,
                y2: y2n.max(0.0),
            },
            u_cum: state.u_cum + du,
        },
        delta_u: du,
        unconstrained_y1: raw1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SdeConfig {
    pub step: f64,
    pub horizon: f64,
    pub burn_in: f64,
    pub seed: u64,
    pub thinning: usize,
    pub batches: usize,
}

impl Default for SdeConfig {
    fn default() -> Self {
        Self {
            step: 1e-3,
            horizon: 5050.0,
            burn_in: 50.0,
            seed: 1,
            thinning: 10,
            batches: 30,
        }
    }
}

impl SdeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step < 1.0) {
            return Err(JsqError::InvalidParameter(format!(
                "Euler step must lie in (0, 1), got {}",
                self.step
            )));
        }
        if !(self.burn_in >= 0.0 && self.horizon > self.burn_in) || !self.horizon.is_finite() {
            return Err(JsqError::InvalidParameter(format!(
                "need horizon > burn_in >= 0, got horizon={}, burn_in={}",
                self.horizon, self.burn_in
            )));
        }
        if self.thinning < 1 || self.batches < 4 {
            return Err(JsqError::InvalidParameter(
                "need thinning >= 1 and at least 4 batches".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SdeRun {
    pub beta: f64,
    pub config: SdeConfig,
    pub steps: u64,
    pub sample_count: usize,
    pub mean_y1: Estimate,
    pub mean_y2: Estimate,
    pub first_half: (Estimate, Estimate),
    pub second_half: (Estimate, Estimate),
    pub u_cum: f64,
    /// Steps with a regulator increment although the unconstrained first
    /// coordinate was nonpositive.
    pub complementarity_violations: u64,
    pub domain_violations: u64,
    #[serde(skip)]
    pub samples: Vec<(f64, f64)>,
}

fn grouped_means(values: &[f64], groups: usize) -> Estimate {
    let size = values.len() / groups;
    if size == 0 {
        return Estimate {
            mean: f64::NAN,
            half_width: f64::NAN,
        };
    }
    let means: Vec<f64> = (0..groups)
        .map(|g| values[g * size..(g + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    batch_means(&means)
}

/// Runs one path from `start` and keeps every `thinning`-th post-burn-in
/// state.
pub fn simulate_stationary(beta: f64, cfg: &SdeConfig, start: DiffusionPoint) -> Result<SdeRun> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let total_steps = (cfg.horizon / cfg.step).round() as u64;
    let burn_steps = (cfg.burn_in / cfg.step).round() as u64;
    let mut s = SdeState::at(start);
    let mut samples =
        Vec::with_capacity(((total_steps - burn_steps) / cfg.thinning as u64) as usize + 1);
    let (mut comp, mut dom) = (0u64, 0u64);
    for k in 1..=total_steps {
        let g: f64 = StandardNormal.sample(&mut rng);
        let out = step_euler(s, beta, cfg.step, g)?;
        if out.delta_u > 0.0 && out.unconstrained_y1 <= 0.0 {
            comp += 1;
        }
        s = out.state;
        if s.y.y1 > 0.0 || s.y.y2 < 0.0 {
            dom += 1;
        }
        if k > burn_steps && (k - burn_steps).is_multiple_of(cfg.thinning as u64) {
            samples.push((s.y.y1, s.y.y2));
        }
    }
    let y1: Vec<f64> = samples.iter().map(|p| p.0).collect();
    let y2: Vec<f64> = samples.iter().map(|p| p.1).collect();
    let half = samples.len() / 2;
    let hb = cfg.batches / 2;
    Ok(SdeRun {
        beta,
        config: *cfg,
        steps: total_steps,
        sample_count: samples.len(),
        mean_y1: grouped_means(&y1, cfg.batches),
        mean_y2: grouped_means(&y2, cfg.batches),
        first_half: (
            grouped_means(&y1[..half], hb),
            grouped_means(&y2[..half], hb),
        ),
        second_half: (
            grouped_means(&y1[half..], hb),
            grouped_means(&y2[half..], hb),
        ),
        u_cum: s.u_cum,
        complementarity_violations: comp,
        domain_violations: dom,
        samples,
    })
}

pub const MIN_COMPARISON_SAMPLES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InterchangeDistance {
    pub w1_y1: f64,
    pub w1_y2: f64,
    pub total: f64,
}

/// Sum of per-coordinate Wasserstein-1 distances between two planar samples.
pub fn interchange_distance(
    ctmc: &[(f64, f64)],
    sde: &[(f64, f64)],
) -> Result<InterchangeDistance> {
    let (a, b) = marginal_wasserstein(ctmc, sde, MIN_COMPARISON_SAMPLES)?;
    Ok(InterchangeDistance {
        w1_y1: a,
        w1_y2: b,
        total: a + b,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InterchangeRow {
    pub n: u64,
    pub samples: usize,
    pub overflow_count: u64,
    pub distance: InterchangeDistance,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InterchangeReport {
    pub beta: f64,
    pub samples: usize,
    pub sample_interval: f64,
    pub burn_in: f64,
    pub seed: u64,
    pub sde: SdeConfig,
    pub rows: Vec<InterchangeRow>,
    /// Both coordinate distances strictly decrease along `rows`.
    pub decreasing: bool,
}

/// Compares √n(X₁, X₂) chain samples for each n with one diffusion sample of
/// the same size.
pub fn interchange_experiment(
    beta: f64,
    ns: &[u64],
    samples: usize,
    interval: f64,
    seed: u64,
) -> Result<InterchangeReport> {
    if samples < MIN_COMPARISON_SAMPLES {
        return Err(JsqError::SampleSize {
            required: MIN_COMPARISON_SAMPLES,
            got: samples,
        });
    }
    let burn_in = 50.0;
    let span = samples as f64 * interval;
    let step = 1e-3;
    let thinning = (interval / step).round().max(1.0) as usize;
    let sde_cfg = SdeConfig {
        step,
        horizon: burn_in + span,
        burn_in,
        seed,
        thinning,
        batches: 30,
    };
    let sde = simulate_stationary(beta, &sde_cfg, DiffusionPoint { y1: 0.0, y2: 0.0 })?;
    let mut rows = Vec::new();
    for (k, &n) in ns.iter().enumerate() {
        let params = ModelParams::new(n, beta)?;
        let mut cfg = SimConfig::new(burn_in + span, burn_in, seed.wrapping_add(1 + k as u64));
        cfg.sample_interval = Some(interval);
        let run = simulate(&params, &cfg)?;
        let mut chain = run.samples;
        chain.truncate(samples);
        let mut diff = sde.samples.clone();
        diff.truncate(samples);
        rows.push(InterchangeRow {
            n,
            samples: chain.len().min(diff.len()),
            overflow_count: run.estimate.overflow_count,
            distance: interchange_distance(&chain, &diff)?,
        });
    }
    let decreasing = rows.windows(2).all(|w| {
        w[1].distance.w1_y1 < w[0].distance.w1_y1 && w[1].distance.w1_y2 < w[0].distance.w1_y2
    });
    Ok(InterchangeReport {
        beta,
        samples,
        sample_interval: interval,
        burn_in,
        seed,
        sde: sde_cfg,
        rows,
        decreasing,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayRow {
    pub t: f64,
    pub distance: f64,
    pub w1_y1: f64,
    pub w1_y2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayTable {
    pub beta: f64,
    pub start_a: DiffusionPoint,
    pub start_b: DiffusionPoint,
    pub replicas: usize,
    pub seed: u64,
    pub step: f64,
    pub common_random_numbers: bool,
    pub rows: Vec<DecayRow>,
    /// Least-squares slope of log distance against time over rows with a
    /// positive distance.
    pub log_slope: Option<f64>,
}

pub const MIN_REPLICAS: usize = 1000;

/// Distance between the empirical laws at each checkpoint of paths started
/// from two points.
#[allow(clippy::too_many_arguments)]
pub fn ergodic_decay_probe(
    beta: f64,
    start_a: DiffusionPoint,
    start_b: DiffusionPoint,
    checkpoints: &[f64],
    replicas: usize,
    seed: u64,
    common_random_numbers: bool,
    step: f64,
) -> Result<DecayTable> {
    if replicas < MIN_REPLICAS {
        return Err(JsqError::SampleSize {
            required: MIN_REPLICAS,
            got: replicas,
        });
    }
    if checkpoints.windows(2).any(|w| w[1] <= w[0]) || checkpoints.first().is_some_and(|&t| t < 0.0)
    {
        return Err(JsqError::InvalidParameter(
            "checkpoints must be nonnegative and increasing".into(),
        ));
    }
    let steps: Vec<u64> = checkpoints
        .iter()
        .map(|t| (t / step).round() as u64)
        .collect();
    let mut at_a = vec![Vec::with_capacity(replicas); checkpoints.len()];
    let mut at_b = vec![Vec::with_capacity(replicas); checkpoints.len()];
    for r in 0..replicas {
        let mut rng_a = ChaCha8Rng::seed_from_u64(seed.wrapping_add(r as u64));
        let mut rng_b =
            ChaCha8Rng::seed_from_u64(seed.wrapping_add(r as u64).wrapping_add(1 << 32));
        let (mut a, mut b) = (SdeState::at(start_a), SdeState::at(start_b));
        let mut k = 0u64;
        for (c, &target) in steps.iter().enumerate() {
            while k < target {
                let ga: f64 = StandardNormal.sample(&mut rng_a);
                let gb: f64 = if common_random_numbers {
                    ga
                } else {
                    StandardNormal.sample(&mut rng_b)
                };
                a = step_euler(a, beta, step, ga)?.state;
                b = step_euler(b, beta, step, gb)?.state;
                k += 1;
            }
            at_a[c].push(a.y);
            at_b[c].push(b.y);
        }
    }
    let rows: Vec<DecayRow> = checkpoints
        .iter()
        .enumerate()
        .map(|(c, &t)| {
            let first = |v: &[DiffusionPoint]| v.iter().map(|p| p.y1).collect::<Vec<_>>();
            let second = |v: &[DiffusionPoint]| v.iter().map(|p| p.y2).collect::<Vec<_>>();
            let d1 = wasserstein1(&first(&at_a[c]), &first(&at_b[c]));
            let d2 = wasserstein1(&second(&at_a[c]), &second(&at_b[c]));
            DecayRow {
                t,
                distance: d1 + d2,
                w1_y1: d1,
                w1_y2: d2,
            }
        })
        .collect();
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.distance > 0.0)
        .map(|r| (r.t, r.distance.ln()))
        .collect();
    let log_slope = if pts.len() >= 2 {
        let m = pts.len() as f64;
        let tx = pts.iter().map(|p| p.0).sum::<f64>() / m;
        let ty = pts.iter().map(|p| p.1).sum::<f64>() / m;
        let sxy: f64 = pts.iter().map(|p| (p.0 - tx) * (p.1 - ty)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - tx).powi(2)).sum();
        (sxx > 0.0).then(|| sxy / sxx)
    } else {
        None
    };
    Ok(DecayTable {
        beta,
        start_a,
        start_b,
        replicas,
        seed,
        step,
        common_random_numbers,
        rows,
        log_slope,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(a: f64, b: f64) -> DiffusionPoint {
        DiffusionPoint { y1: a, y2: b }
    }

    #[test]
    fn step_examples() {
        let h = 0.01;
        let out = step_euler(SdeState::at(pt(0.0, 1.0)), 1.0, h, 0.0).unwrap();
        assert_eq!(out.state.y, pt(0.0, 1.0 - h));
        assert_eq!(out.delta_u, 0.0);
        // Choose the noise so that the unconstrained first coordinate is 0.3.
        let g = (0.3 - (-0.5 + (0.5 + 2.0 - 1.0) * h)) / (2.0 * h).sqrt();
        let out = step_euler(SdeState::at(pt(-0.5, 2.0)), 1.0, h, g).unwrap();
        assert!((out.unconstrained_y1 - 0.3).abs() < 1e-12);
        assert_eq!(out.state.y.y1, 0.0);
        assert!((out.state.y.y2 - (2.0 - 2.0 * h + 0.3)).abs() < 1e-12);
        assert!((out.state.u_cum - 0.3).abs() < 1e-12);
        assert!(step_euler(SdeState::at(pt(0.0, 0.0)), 1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn short_run_stays_in_domain() {
        let cfg = SdeConfig {
            horizon: 60.0,
            burn_in: 10.0,
            ..Default::default()
        };
        let run = simulate_stationary(1.0, &cfg, pt(-1.0, 1.0)).unwrap();
        assert_eq!(run.sample_count, 5000);
        assert_eq!(run.complementarity_violations, 0);
        assert_eq!(run.domain_violations, 0);
        assert!(run.samples.iter().all(|p| p.0 <= 0.0 && p.1 >= 0.0));
        let again = simulate_stationary(1.0, &cfg, pt(-1.0, 1.0)).unwrap();
        assert_eq!(run, again);
    }

    #[test]
    fn distance_basics() {
        let s: Vec<(f64, f64)> = (0..10_000)
            .map(|i| (-(i as f64) / 100.0, (i % 37) as f64))
            .collect();
        assert_eq!(interchange_distance(&s, &s).unwrap().total, 0.0);
        let mut r = s.clone();
        r.reverse();
        assert_eq!(interchange_distance(&s, &r).unwrap().total, 0.0);
        assert!(interchange_distance(&s[..10], &s[..10]).is_err());
    }

    #[test]
    fn probe_requires_replicas() {
        assert!(
            ergodic_decay_probe(1.0, pt(0.0, 0.0), pt(0.0, 0.0), &[1.0], 10, 1, true, 1e-2)
                .is_err()
        );
    }
}
