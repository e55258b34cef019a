//! Stationary distribution of the chain on a finite truncation, used as a
//! brute-force oracle for small n.

use super::{generator_try, QueueState, Truncation};
use crate::error::{JsqError, Result};
use crate::fluid_model::ModelParams;
use crate::registry::JetField;
use crate::stein_solutions::apply_l;
use serde::Serialize;
use std::collections::HashMap;

pub const DENSE_LIMIT: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExactConfig {
    /// Arrivals are blocked once the total count reaches this cap.
    pub cap_c: u64,
    /// Number of levels kept; `None` picks [`auto_depth`].
    pub depth: Option<usize>,
    pub state_limit: usize,
    /// Target for max_j |(πG)_j| in the iterative solver.
    pub residual_target: f64,
    pub max_sweeps: usize,
}

impl ExactConfig {
    pub fn with_cap(cap_c: u64) -> Self {
        Self {
            cap_c,
            depth: None,
            state_limit: 200_000,
            residual_target: 1e-15,
            max_sweeps: 20_000,
        }
    }
}

/// min(⌊C/n⌋, smallest B with λ^{nB} ≤ 1e−14), and at least 1.
pub fn auto_depth(params: &ModelParams, cap_c: u64) -> usize {
    let by_cap = (cap_c / params.n).max(1) as usize;
    let per_level = params.lambda.powi(params.n as i32);
    let mut b = 1usize;
    let mut tail = per_level;
    while tail > 1e-14 && b < by_cap {
        b += 1;
        tail *= per_level;
    }
    b.min(by_cap)
}

#[derive(Debug, Clone)]
pub struct ExactDistribution {
    pub params: ModelParams,
    pub cap_c: u64,
    pub depth: usize,
    states: Vec<u8>,
    probs: Vec<f64>,
    pub residual: f64,
    pub blocking_probability: f64,
    pub max_row_sum: f64,
    pub method: &'static str,
    pub sweeps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExactSummary {
    pub n: u64,
    pub beta: f64,
    pub lambda: f64,
    pub cap_c: u64,
    pub depth: usize,
    pub states: usize,
    pub method: String,
    pub sweeps: usize,
    pub residual: f64,
    pub max_row_sum: f64,
    pub probability_sum: f64,
    pub min_probability: f64,
    pub blocking_probability: f64,
    /// E Q_i for i = 1, 2, …
    pub mean_levels: Vec<f64>,
    /// P(Q₁ = … = Q_k = n) for k = 0, 1, …
    pub block_probs: Vec<f64>,
}

fn count_states(depth: usize, n: u64, cap: u64, limit: usize) -> usize {
    // ways[v][r]: sequences of the remaining length with values ≤ v and sum ≤ r.
    let cap = cap.min(depth as u64 * n) as usize;
    let n = n as usize;
    let mut ways = vec![vec![1usize; cap + 1]; n + 1];
    for _ in 0..depth {
        let mut next = vec![vec![0usize; cap + 1]; n + 1];
        for v in 0..=n {
            for r in 0..=cap {
                let mut s = 0usize;
                for first in 0..=v.min(r) {
                    s = s.saturating_add(ways[first][r - first]);
                }
                next[v][r] = s.min(limit.saturating_add(1));
            }
        }
        ways = next;
    }
    ways[n][cap]
}

fn enumerate(depth: usize, n: u8, cap: u64) -> Vec<u8> {
    fn rec(buf: &mut Vec<u8>, pos: usize, depth: usize, maxv: u8, rem: u64, out: &mut Vec<u8>) {
        if pos == depth {
            out.extend_from_slice(buf);
            return;
        }
        for v in 0..=maxv.min(rem.min(255) as u8) {
            buf[pos] = v;
            rec(buf, pos + 1, depth, v, rem - v as u64, out);
        }
        buf[pos] = 0;
    }
    let mut out = Vec::new();
    let mut buf = vec![0u8; depth];
    rec(&mut buf, 0, depth, n, cap, &mut out);
    out
}

struct Chain {
    out_rate: Vec<f64>,
    in_start: Vec<usize>,
    in_from: Vec<u32>,
    in_rate: Vec<f64>,
    level_start: Vec<usize>,
    up: Vec<f64>,
    down: Vec<f64>,
}

fn build_chain(params: &ModelParams, cap: u64, depth: usize, states: &[u8]) -> Chain {
    let n = params.n as u8;
    let nl = params.arrival_rate();
    let count = states.len() / depth;
    let index: HashMap<&[u8], u32> = (0..count)
        .map(|i| (&states[i * depth..(i + 1) * depth], i as u32))
        .collect();
    let mut edges: Vec<(u32, u32, f64)> = Vec::with_capacity(count * 4);
    let mut out_rate = vec![0.0; count];
    let mut up = vec![0.0; count];
    let mut down = vec![0.0; count];
    let mut buf = vec![0u8; depth];
    let mut level_start = vec![0usize];
    let mut last_total = 0u64;
    for i in 0..count {
        let s = &states[i * depth..(i + 1) * depth];
        let total: u64 = s.iter().map(|&v| v as u64).sum();
        while last_total < total {
            level_start.push(i);
            last_total += 1;
        }
        let target = s.iter().take_while(|&&v| v == n).count();
        if target < depth && total < cap {
            buf.copy_from_slice(s);
            buf[target] += 1;
            edges.push((i as u32, index[buf.as_slice()], nl));
            out_rate[i] += nl;
            up[i] = nl;
        }
        for k in 0..depth {
            let next = if k + 1 < depth { s[k + 1] } else { 0 };
            if s[k] > next {
                buf.copy_from_slice(s);
                buf[k] -= 1;
                let r = (s[k] - next) as f64;
                edges.push((i as u32, index[buf.as_slice()], r));
                out_rate[i] += r;
            }
        }
        down[i] = s[0] as f64;
    }
    level_start.push(count);
    let mut in_start = vec![0usize; count + 1];
    for &(_, to, _) in &edges {
        in_start[to as usize + 1] += 1;
    }
    for j in 0..count {
        in_start[j + 1] += in_start[j];
    }
    let mut fill = in_start.clone();
    let mut in_from = vec![0u32; edges.len()];
    let mut in_rate = vec![0.0; edges.len()];
    for &(from, to, r) in &edges {
        let slot = fill[to as usize];
        in_from[slot] = from;
        in_rate[slot] = r;
        fill[to as usize] += 1;
    }
    Chain {
        out_rate,
        in_start,
        in_from,
        in_rate,
        level_start,
        up,
        down,
    }
}

impl Chain {
    fn len(&self) -> usize {
        self.out_rate.len()
    }

    fn flow_in(&self, pi: &[f64], j: usize) -> f64 {
        (self.in_start[j]..self.in_start[j + 1])
            .map(|e| pi[self.in_from[e] as usize] * self.in_rate[e])
            .sum()
    }

    /// max_j |(πG)_j|.
    fn residual(&self, pi: &[f64]) -> f64 {
        (0..self.len())
            .map(|j| (self.flow_in(pi, j) - pi[j] * self.out_rate[j]).abs())
            .fold(0.0, f64::max)
    }

    fn dense_solve(&self) -> Result<Vec<f64>> {
        let m = self.len();
        let mut a = vec![0.0; m * m];
        for j in 0..m {
            a[j * m + j] -= self.out_rate[j];
            for e in self.in_start[j]..self.in_start[j + 1] {
                a[j * m + self.in_from[e] as usize] += self.in_rate[e];
            }
        }
        for i in 0..m {
            a[(m - 1) * m + i] = 1.0;
        }
        let mut rhs = vec![0.0; m];
        rhs[m - 1] = 1.0;
        for col in 0..m {
            let piv = (col..m)
                .max_by(|&x, &y| a[x * m + col].abs().total_cmp(&a[y * m + col].abs()))
                .unwrap_or(col);
            let pv = a[piv * m + col];
            if pv.abs() < 1e-300 {
                return Err(JsqError::Singularity {
                    what: "dense stationary solve",
                    denominator: pv,
                });
            }
            if piv != col {
                for k in 0..m {
                    a.swap(piv * m + k, col * m + k);
                }
                rhs.swap(piv, col);
            }
            for row in col + 1..m {
                let factor = a[row * m + col] / pv;
                if factor != 0.0 {
                    for k in col..m {
                        a[row * m + k] -= factor * a[col * m + k];
                    }
                    rhs[row] -= factor * rhs[col];
                }
            }
        }
        let mut x = vec![0.0; m];
        for row in (0..m).rev() {
            let s: f64 = (row + 1..m).map(|k| a[row * m + k] * x[k]).sum();
            x[row] = (rhs[row] - s) / a[row * m + row];
        }
        for v in x.iter_mut() {
            *v = v.max(0.0);
        }
        let total: f64 = x.iter().sum();
        Ok(x.into_iter().map(|v| v / total).collect())
    }

    /// Rescales each total-count level so level masses solve the aggregated
    /// birth-death balance.
    fn aggregate(&self, pi: &mut [f64]) {
        let levels = self.level_start.len() - 1;
        let mut mass = vec![0.0; levels];
        let mut up = vec![0.0; levels];
        let mut down = vec![0.0; levels];
        for t in 0..levels {
            for j in self.level_start[t]..self.level_start[t + 1] {
                mass[t] += pi[j];
                up[t] += pi[j] * self.up[j];
                down[t] += pi[j] * self.down[j];
            }
        }
        if mass.iter().any(|&m| !(m > 0.0)) {
            return;
        }
        let mut target = vec![1.0; levels];
        for t in 0..levels - 1 {
            let u = up[t] / mass[t];
            let d = down[t + 1] / mass[t + 1];
            target[t + 1] = target[t] * u / d;
        }
        for t in 0..levels {
            let scale = target[t] / mass[t];
            for p in pi
                .iter_mut()
                .take(self.level_start[t + 1])
                .skip(self.level_start[t])
            {
                *p *= scale;
            }
        }
    }

    fn iterative_solve(&self, cfg: &ExactConfig) -> Result<(Vec<f64>, usize)> {
        let m = self.len();
        let mut pi = vec![1.0 / m as f64; m];
        let mut best = f64::INFINITY;
        let mut stalled = 0;
        for sweep in 1..=cfg.max_sweeps {
            for j in 0..m {
                pi[j] = self.flow_in(&pi, j) / self.out_rate[j];
            }
            self.aggregate(&mut pi);
            let total: f64 = pi.iter().sum();
            pi.iter_mut().for_each(|p| *p /= total);
            let r = self.residual(&pi);
            if r <= cfg.residual_target {
                return Ok((pi, sweep));
            }
            if r < 0.999 * best {
                best = r;
                stalled = 0;
            } else {
                stalled += 1;
                if stalled >= 50 && best <= 1e-12 {
                    return Ok((pi, sweep));
                }
            }
        }
        let r = self.residual(&pi);
        if r <= 1e-10 {
            return Ok((pi, cfg.max_sweeps));
        }
        Err(JsqError::Convergence {
            method: "Gauss-Seidel with level aggregation",
            residual: r,
        })
    }
}

/// Solves πG = 0 on the truncated state space.
pub fn exact_stationary(params: &ModelParams, cfg: &ExactConfig) -> Result<ExactDistribution> {
    if params.n > 6 {
        return Err(JsqError::InvalidParameter(format!(
            "exact solve supports n ≤ 6, got {}",
            params.n
        )));
    }
    if cfg.cap_c < 1 {
        return Err(JsqError::InvalidParameter("cap must be positive".into()));
    }
    let depth = cfg.depth.unwrap_or_else(|| auto_depth(params, cfg.cap_c));
    if depth == 0 {
        return Err(JsqError::InvalidParameter("depth must be positive".into()));
    }
    let count = count_states(depth, params.n, cfg.cap_c, cfg.state_limit);
    if count > cfg.state_limit {
        return Err(JsqError::StateSpaceTooLarge {
            states: count,
            limit: cfg.state_limit,
        });
    }
    let mut states = enumerate(depth, params.n as u8, cfg.cap_c);
    // Group by total count, which the aggregation step relies on.
    let mut order: Vec<usize> = (0..states.len() / depth).collect();
    let total = |i: usize| {
        states[i * depth..(i + 1) * depth]
            .iter()
            .map(|&v| v as u32)
            .sum::<u32>()
    };
    order.sort_by_key(|&i| total(i));
    states = order
        .iter()
        .flat_map(|&i| states[i * depth..(i + 1) * depth].to_vec())
        .collect();

    let chain = build_chain(params, cfg.cap_c, depth, &states);
    let (probs, method, sweeps) = if chain.len() < DENSE_LIMIT {
        (chain.dense_solve()?, "dense", 0)
    } else {
        let (p, s) = chain.iterative_solve(cfg)?;
        (p, "gauss-seidel-aggregation", s)
    };
    let residual = chain.residual(&probs);
    let nl = params.arrival_rate();
    let blocking_probability = (0..chain.len())
        .filter(|&j| chain.up[j] < nl)
        .map(|j| probs[j])
        .sum();
    let mut row = vec![0.0; chain.len()];
    for (e, &from) in chain.in_from.iter().enumerate() {
        row[from as usize] += chain.in_rate[e];
    }
    let max_row_sum = row
        .iter()
        .zip(&chain.out_rate)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(ExactDistribution {
        params: *params,
        cap_c: cfg.cap_c,
        depth,
        states,
        probs,
        residual,
        blocking_probability,
        max_row_sum,
        method,
        sweeps,
    })
}

impl ExactDistribution {
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn state(&self, i: usize) -> QueueState {
        QueueState::from_bytes(&self.states[i * self.depth..(i + 1) * self.depth])
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    fn raw(&self, i: usize) -> &[u8] {
        &self.states[i * self.depth..(i + 1) * self.depth]
    }

    fn expect_raw(&self, f: impl Fn(&[u8]) -> f64) -> f64 {
        (0..self.len())
            .map(|i| self.probs[i] * f(self.raw(i)))
            .sum()
    }

    pub fn expect(&self, f: &dyn Fn(&QueueState) -> f64) -> f64 {
        (0..self.len())
            .map(|i| self.probs[i] * f(&self.state(i)))
            .sum()
    }

    /// E Q_i (i ≥ 1).
    pub fn mean_level(&self, i: usize) -> f64 {
        if i == 0 || i > self.depth {
            return 0.0;
        }
        self.expect_raw(|s| s[i - 1] as f64)
    }

    /// P(Q₁ = … = Q_k = n).
    pub fn block_prob(&self, k: usize) -> f64 {
        if k > self.depth {
            return 0.0;
        }
        let n = self.params.n as u8;
        self.expect_raw(|s| s[..k].iter().all(|&v| v == n) as u8 as f64)
    }

    fn q2(&self, s: &[u8]) -> f64 {
        if self.depth >= 2 {
            s[1] as f64
        } else {
            0.0
        }
    }

    /// P(X₂ ≥ θ) with X₂ = Q₂/n.
    pub fn q2_tail(&self, theta: f64) -> f64 {
        let nf = self.params.n_f64();
        self.expect_raw(|s| (self.q2(s) >= nf * theta - 1e-9) as u8 as f64)
    }

    /// E (X₂ − level)⁺.
    pub fn q2_excess(&self, level: f64) -> f64 {
        let nf = self.params.n_f64();
        self.expect_raw(|s| (self.q2(s) / nf - level).max(0.0))
    }

    /// Σ_q π(q) G f(q) with the blocked generator of the truncated space.
    pub fn bar_residual(&self, f: &dyn Fn(&QueueState) -> f64) -> f64 {
        let trunc = Truncation::Blocked { cap: self.cap_c };
        (0..self.len())
            .map(|i| {
                let g = generator_try(&self.params, &mut |s| Ok(f(s)), &self.state(i), trunc)
                    .unwrap_or(f64::NAN);
                self.probs[i] * g
            })
            .sum()
    }

    /// (E h(X), E(G A f − L f)(X)) for a field with a source term.
    pub fn stein_identity(&self, field: &dyn JetField) -> Result<(f64, f64)> {
        let n = self.params.n;
        let trunc = Truncation::Blocked { cap: self.cap_c };
        let mut eh = 0.0;
        let mut eg = 0.0;
        for i in 0..self.len() {
            let q = self.state(i);
            let x = q.fluid_point(n);
            let h = field.source(x).ok_or_else(|| {
                JsqError::InvalidParameter(format!("field '{}' has no source term", field.name()))
            })?;
            let jet = field.jet(x)?;
            let g = generator_try(
                &self.params,
                &mut |s| Ok(field.jet(s.fluid_point(n))?.f),
                &q,
                trunc,
            )?;
            eh += self.probs[i] * h;
            eg += self.probs[i] * (g - apply_l(&self.params, &jet, x));
        }
        Ok((eh, eg))
    }

    pub fn summary(&self, levels: usize) -> ExactSummary {
        let shown = levels.min(self.depth);
        ExactSummary {
            n: self.params.n,
            beta: self.params.beta,
            lambda: self.params.lambda,
            cap_c: self.cap_c,
            depth: self.depth,
            states: self.len(),
            method: self.method.to_string(),
            sweeps: self.sweeps,
            residual: self.residual,
            max_row_sum: self.max_row_sum,
            probability_sum: self.probs.iter().sum(),
            min_probability: self.probs.iter().copied().fold(f64::INFINITY, f64::min),
            blocking_probability: self.blocking_probability,
            mean_levels: (1..=shown).map(|i| self.mean_level(i)).collect(),
            block_probs: (0..=shown).map(|k| self.block_prob(k)).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn state_counts_match_enumeration() {
        for &(d, n, c) in &[(4usize, 2u64, 5u64), (6, 3, 100), (5, 1, 3), (26, 5, 200)] {
            let listed = enumerate(d, n as u8, c).len() / d;
            assert_eq!(count_states(d, n, c, usize::MAX - 1), listed);
        }
    }

    #[test]
    fn single_server_is_geometric() {
        let p = ModelParams::new(1, 0.5).unwrap();
        let d = exact_stationary(&p, &ExactConfig::with_cap(40)).unwrap();
        assert_eq!(d.depth, 40);
        for i in 1..=5 {
            assert!((d.mean_level(i) - 0.5f64.powi(i as i32)).abs() < 1e-12);
        }
    }

    #[test]
    fn iterative_solver_agrees_with_dense() {
        let p = ModelParams::new(3, 0.5).unwrap();
        let mut cfg = ExactConfig::with_cap(60);
        cfg.depth = Some(8);
        let dense = exact_stationary(&p, &cfg).unwrap();
        assert_eq!(dense.method, "dense");
        let chain = build_chain(&p, cfg.cap_c, 8, &dense.states);
        let (pi, _) = chain.iterative_solve(&cfg).unwrap();
        let diff = pi
            .iter()
            .zip(dense.probabilities())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(diff < 1e-12, "{diff}");
    }

    #[test]
    fn oversize_rejected() {
        let p = ModelParams::new(5, 0.5).unwrap();
        let mut cfg = ExactConfig::with_cap(200);
        cfg.state_limit = 1000;
        assert!(matches!(
            exact_stationary(&p, &cfg),
            Err(JsqError::StateSpaceTooLarge { .. })
        ));
    }
}
