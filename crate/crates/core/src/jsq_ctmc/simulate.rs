//! Event-driven simulation of the chain with time-weighted batch statistics.

use crate::error::{JsqError, Result};
use crate::fluid_model::ModelParams;
use crate::stats::{batch_means, Estimate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimConfig {
    pub horizon: f64,
    pub burn_in: f64,
    pub seed: u64,
    pub depth: usize,
    pub batches: usize,
    /// Record √n(X₁, X₂) every `sample_interval` time units after burn-in.
    pub sample_interval: Option<f64>,
}

impl SimConfig {
    pub fn new(horizon: f64, burn_in: f64, seed: u64) -> Self {
        Self {
            horizon,
            burn_in,
            seed,
            depth: 12,
            batches: 30,
            sample_interval: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.burn_in > 0.0 && self.horizon > self.burn_in) || !self.horizon.is_finite() {
            return Err(JsqError::InvalidParameter(format!(
                "need horizon > burn_in > 0, got horizon={}, burn_in={}",
                self.horizon, self.burn_in
            )));
        }
        if self.depth < 3 || self.depth > u8::MAX as usize {
            return Err(JsqError::InvalidParameter(format!(
                "truncation depth must be in [3, 255], got {}",
                self.depth
            )));
        }
        if self.batches < 2 {
            return Err(JsqError::InvalidParameter("need at least 2 batches".into()));
        }
        if let Some(dt) = self.sample_interval {
            if !(dt > 0.0) {
                return Err(JsqError::InvalidParameter(format!(
                    "sample interval must be positive, got {dt}"
                )));
            }
        }
        Ok(())
    }
}

/// Time-averaged stationary quantities with batch-means intervals.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationaryEstimate {
    pub params: ModelParams,
    pub config: SimConfig,
    pub events: u64,
    pub arrivals: u64,
    pub overflow_count: u64,
    /// E Q_i for i = 1..=depth.
    pub mean_levels: Vec<Estimate>,
    /// P(Q₁ = … = Q_k = n) for k = 0..=depth.
    pub block_probs: Vec<Estimate>,
    #[serde(skip)]
    batch_levels: Vec<Vec<f64>>,
    #[serde(skip)]
    batch_q2: Vec<Vec<f64>>,
    #[serde(skip)]
    batch_prefix: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimRun {
    pub estimate: StationaryEstimate,
    /// √n(X₁, X₂) at the sampling instants.
    pub samples: Vec<(f64, f64)>,
}

struct Accumulator {
    start: f64,
    batch_len: f64,
    batches: usize,
    levels: Vec<Vec<f64>>,
    q2: Vec<Vec<f64>>,
    prefix: Vec<Vec<f64>>,
}

impl Accumulator {
    fn add(&mut self, from: f64, to: f64, q: &[u32], prefix: usize) {
        let mut a = from.max(self.start);
        while a < to {
            let b_idx = (((a - self.start) / self.batch_len) as usize).min(self.batches - 1);
            let end = if b_idx + 1 == self.batches {
                to
            } else {
                to.min(self.start + (b_idx + 1) as f64 * self.batch_len)
            };
            let w = end - a;
            if w <= 0.0 {
                // Guard against rounding at a batch edge.
                break;
            }
            let lv = &mut self.levels[b_idx];
            for (i, &v) in q.iter().enumerate() {
                if v == 0 {
                    break;
                }
                lv[i] += v as f64 * w;
            }
            self.q2[b_idx][q[1] as usize] += w;
            self.prefix[b_idx][prefix] += w;
            a = end;
        }
    }
}

/// Simulates the chain from the empty state up to `horizon`, averaging over
/// [burn_in, horizon]. Arrivals finding all tracked levels full are dropped
/// and counted.
pub fn simulate(params: &ModelParams, cfg: &SimConfig) -> Result<SimRun> {
    cfg.validate()?;
    let n = params.n;
    let nl = params.arrival_rate();
    let depth = cfg.depth;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut q = vec![0u32; depth];
    let mut prefix = 0usize;
    let mut acc = Accumulator {
        start: cfg.burn_in,
        batch_len: (cfg.horizon - cfg.burn_in) / cfg.batches as f64,
        batches: cfg.batches,
        levels: vec![vec![0.0; depth]; cfg.batches],
        q2: vec![vec![0.0; n as usize + 1]; cfg.batches],
        prefix: vec![vec![0.0; depth + 1]; cfg.batches],
    };
    let sqrt_n = params.sqrt_n();
    let mut samples = Vec::new();
    let mut next_sample = cfg.sample_interval.map(|_| cfg.burn_in);
    let (mut events, mut arrivals, mut overflow) = (0u64, 0u64, 0u64);
    let mut t = 0.0;
    while t < cfg.horizon {
        let total = nl + q[0] as f64;
        let hold: f64 = rng.sample::<f64, _>(Exp1) / total;
        let t_next = (t + hold).min(cfg.horizon);
        if t_next > cfg.burn_in {
            acc.add(t, t_next, &q, prefix);
        }
        if let (Some(ts), Some(dt)) = (next_sample.as_mut(), cfg.sample_interval) {
            while *ts < t_next {
                samples.push(((q[0] as f64 - n as f64) / sqrt_n, q[1] as f64 / sqrt_n));
                *ts += dt;
            }
        }
        t = t_next;
        if t >= cfg.horizon {
            break;
        }
        events += 1;
        if rng.random::<f64>() * total < nl {
            arrivals += 1;
            if prefix >= depth {
                overflow += 1;
                continue;
            }
            q[prefix] += 1;
            if q[prefix] as u64 == n {
                prefix += 1;
            }
        } else {
            // Uniform busy server; it sits at level i when Q_{i+1} ≤ v < Q_i.
            let v = rng.random_range(0..q[0]);
            let i = q.iter().take_while(|&&x| x > v).count() - 1;
            if i < prefix {
                prefix = i;
            }
            q[i] -= 1;
        }
    }

    let len = acc.batch_len;
    let normalise = |rows: &mut Vec<Vec<f64>>| {
        rows.iter_mut()
            .for_each(|r| r.iter_mut().for_each(|v| *v /= len))
    };
    normalise(&mut acc.levels);
    normalise(&mut acc.q2);
    normalise(&mut acc.prefix);
    let column = |rows: &Vec<Vec<f64>>, f: &dyn Fn(&[f64]) -> f64| {
        batch_means(&rows.iter().map(|r| f(r)).collect::<Vec<_>>())
    };
    let mean_levels = (0..depth).map(|i| column(&acc.levels, &|r| r[i])).collect();
    let block_probs = (0..=depth)
        .map(|k| column(&acc.prefix, &|r| r[k..].iter().sum()))
        .collect();
    Ok(SimRun {
        estimate: StationaryEstimate {
            params: *params,
            config: *cfg,
            events,
            arrivals,
            overflow_count: overflow,
            mean_levels,
            block_probs,
            batch_levels: acc.levels,
            batch_q2: acc.q2,
            batch_prefix: acc.prefix,
        },
        samples,
    })
}

impl StationaryEstimate {
    fn per_batch(&self, rows: &[Vec<f64>], f: impl Fn(&[f64]) -> f64) -> Estimate {
        batch_means(&rows.iter().map(|r| f(r)).collect::<Vec<_>>())
    }

    /// P(X₂ ≥ θ) with X₂ = Q₂/n.
    pub fn q2_tail(&self, theta: f64) -> Estimate {
        let nf = self.params.n_f64();
        self.per_batch(&self.batch_q2, |r| {
            r.iter()
                .enumerate()
                .filter(|(j, _)| *j as f64 >= nf * theta - 1e-9)
                .map(|(_, w)| w)
                .sum()
        })
    }

    /// E (X₂ − level)⁺.
    pub fn q2_excess(&self, level: f64) -> Estimate {
        let nf = self.params.n_f64();
        self.per_batch(&self.batch_q2, |r| {
            r.iter()
                .enumerate()
                .map(|(j, w)| w * (j as f64 / nf - level).max(0.0))
                .sum()
        })
    }

    /// Fraction of arrivals dropped at the truncation depth.
    pub fn overflow_fraction(&self) -> f64 {
        if self.arrivals == 0 {
            0.0
        } else {
            self.overflow_count as f64 / self.arrivals as f64
        }
    }

    pub fn batch_level_means(&self, i: usize) -> Vec<f64> {
        self.batch_levels
            .iter()
            .map(|r| r.get(i.wrapping_sub(1)).copied().unwrap_or(0.0))
            .collect()
    }

    pub(crate) fn prefix_rows(&self) -> &[Vec<f64>] {
        &self.batch_prefix
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_server_second_level() {
        let p = ModelParams::new(1, 0.5).unwrap();
        let mut cfg = SimConfig::new(100_000.0, 100.0, 7);
        cfg.depth = 40;
        let run = simulate(&p, &cfg).unwrap();
        let e = run.estimate.mean_levels[1];
        assert!((e.mean - 0.25).abs() <= 3.0 * e.half_width, "{e:?}");
        assert_eq!(run.estimate.overflow_count, 0);
    }

    #[test]
    fn seeded_runs_repeat() {
        let p = ModelParams::new(10, 1.0).unwrap();
        let cfg = SimConfig::new(200.0, 10.0, 3);
        let a = simulate(&p, &cfg).unwrap();
        let b = simulate(&p, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bad_configs_rejected() {
        let p = ModelParams::new(10, 1.0).unwrap();
        assert!(simulate(&p, &SimConfig::new(10.0, 20.0, 1)).is_err());
        let mut c = SimConfig::new(20.0, 10.0, 1);
        c.depth = 2;
        assert!(simulate(&p, &c).is_err());
    }
}
