//! Output analysis: batch-means confidence intervals and empirical
//! Wasserstein-1 distances.

use crate::error::{JsqError, Result};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

/// Point estimate with a two-sided 95% confidence half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub half_width: f64,
}

impl Estimate {
    pub fn exact(mean: f64) -> Self {
        Self {
            mean,
            half_width: 0.0,
        }
    }

    pub fn upper(&self) -> f64 {
        self.mean + self.half_width
    }

    pub fn lower(&self) -> f64 {
        self.mean - self.half_width
    }
}

/// Mean of equally weighted batch values with a Student-t 95% half-width.
pub fn batch_means(values: &[f64]) -> Estimate {
    let k = values.len();
    if k == 0 {
        return Estimate {
            mean: f64::NAN,
            half_width: f64::NAN,
        };
    }
    let mean = values.iter().sum::<f64>() / k as f64;
    if k < 2 {
        return Estimate {
            mean,
            half_width: f64::INFINITY,
        };
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (k - 1) as f64)
        .map(|d| d.inverse_cdf(0.975))
        .unwrap_or(f64::INFINITY);
    Estimate {
        mean,
        half_width: t * (var / k as f64).sqrt(),
    }
}

/// ∫|F_a − F_b| for the empirical distribution functions of two samples.
pub fn wasserstein1(a: &[f64], b: &[f64]) -> f64 {
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(f64::total_cmp);
    xb.sort_by(f64::total_cmp);
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut prev = match (xa.first(), xb.first()) {
        (Some(p), Some(q)) => p.min(*q),
        _ => return 0.0,
    };
    let mut acc = 0.0;
    while i < xa.len() || j < xb.len() {
        let next = match (xa.get(i), xb.get(j)) {
            (Some(p), Some(q)) => p.min(*q),
            (Some(p), None) => *p,
            (None, Some(q)) => *q,
            (None, None) => break,
        };
        acc += (i as f64 / na - j as f64 / nb).abs() * (next - prev);
        while i < xa.len() && xa[i] == next {
            i += 1;
        }
        while j < xb.len() && xb[j] == next {
            j += 1;
        }
        prev = next;
    }
    acc
}

/// Per-coordinate Wasserstein-1 distances between two planar samples.
pub fn marginal_wasserstein(
    a: &[(f64, f64)],
    b: &[(f64, f64)],
    min_samples: usize,
) -> Result<(f64, f64)> {
    let got = a.len().min(b.len());
    if got < min_samples {
        return Err(JsqError::SampleSize {
            required: min_samples,
            got,
        });
    }
    let first = |s: &[(f64, f64)]| s.iter().map(|p| p.0).collect::<Vec<_>>();
    let second = |s: &[(f64, f64)]| s.iter().map(|p| p.1).collect::<Vec<_>>();
    Ok((
        wasserstein1(&first(a), &first(b)),
        wasserstein1(&second(a), &second(b)),
    ))
}
