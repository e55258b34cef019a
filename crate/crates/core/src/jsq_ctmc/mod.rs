//! The join-the-shortest-queue chain in occupancy-count form: generator,
//! lifting of planar functions, and the second-order generator expansion.

mod checks;
mod exact;
mod simulate;
mod test_functions;

pub use checks::{
    main_bound_rhs, moment_identities_check, q3_bound_rhs, steady_state_bound_check,
    third_level_bound_check, MainBoundMargins, MomentReport, MomentRow, Q3Margins, StationaryView,
};
pub use exact::{auto_depth, exact_stationary, ExactConfig, ExactDistribution, ExactSummary};
pub use simulate::{simulate, SimConfig, SimRun, StationaryEstimate};
pub use test_functions::{TestFunction, TestFunctionRegistry};

use crate::error::{JsqError, Result};
use crate::fluid_model::{FluidPoint, ModelParams};
use crate::quadrature::integrate_pieces;
use crate::registry::JetField;
use crate::stein_solutions::apply_l;
use serde::Serialize;

/// Occupancy counts (Q₁, …, Q_B): Q_i servers hold at least i customers.
/// Levels beyond the depth are zero.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct QueueState {
    levels: Vec<u32>,
}

impl QueueState {
    pub fn new(levels: Vec<u32>, n: u64) -> Result<Self> {
        if levels.is_empty() {
            return Err(JsqError::InvalidParameter(
                "queue state needs depth at least 1".into(),
            ));
        }
        if levels[0] as u64 > n || levels.windows(2).any(|w| w[1] > w[0]) {
            return Err(JsqError::InvalidParameter(format!(
                "{levels:?} is not a nonincreasing sequence bounded by {n}"
            )));
        }
        Ok(Self { levels })
    }

    pub(crate) fn from_bytes(b: &[u8]) -> Self {
        Self {
            levels: b.iter().map(|&v| v as u32).collect(),
        }
    }

    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    /// Q_i for i ≥ 1.
    pub fn level(&self, i: usize) -> u32 {
        if i == 0 {
            return 0;
        }
        self.levels.get(i - 1).copied().unwrap_or(0)
    }

    pub fn levels(&self) -> &[u32] {
        &self.levels
    }

    /// Total number of customers.
    pub fn total(&self) -> u64 {
        self.levels.iter().map(|&v| v as u64).sum()
    }

    /// Number of leading levels equal to n.
    pub fn full_prefix(&self, n: u64) -> usize {
        self.levels.iter().take_while(|&&v| v as u64 == n).count()
    }

    pub fn fluid_point(&self, n: u64) -> FluidPoint {
        let nf = n as f64;
        FluidPoint::raw((self.level(1) as f64 - nf) / nf, self.level(2) as f64 / nf)
    }

    fn bumped(&self, idx: usize, up: bool) -> Self {
        let mut s = self.clone();
        if up {
            s.levels[idx] += 1;
        } else {
            s.levels[idx] -= 1;
        }
        s
    }
}

/// Arrival handling at the edges of a truncated space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Truncation {
    /// Arrivals beyond the depth are an error.
    Strict,
    /// Arrivals are dropped beyond the depth or when the total reaches `cap`.
    Blocked { cap: u64 },
}

pub(crate) fn generator_try(
    params: &ModelParams,
    f: &mut dyn FnMut(&QueueState) -> Result<f64>,
    q: &QueueState,
    trunc: Truncation,
) -> Result<f64> {
    let n = params.n;
    let fq = f(q)?;
    let mut acc = 0.0;
    let target = q.full_prefix(n);
    let arrival_ok = match trunc {
        Truncation::Strict => {
            if target >= q.depth() {
                return Err(JsqError::TruncationOverflow { depth: q.depth() });
            }
            true
        }
        Truncation::Blocked { cap } => target < q.depth() && q.total() < cap,
    };
    if arrival_ok {
        acc += params.arrival_rate() * (f(&q.bumped(target, true))? - fq);
    }
    for i in 0..q.depth() {
        let next = q.levels.get(i + 1).copied().unwrap_or(0);
        let rate = q.levels[i] - next;
        if rate > 0 {
            acc += rate as f64 * (f(&q.bumped(i, false))? - fq);
        }
    }
    Ok(acc)
}

/// G_Q f(q) with arrivals routed to the first level below n.
pub fn apply_gq(
    params: &ModelParams,
    f: &dyn Fn(&QueueState) -> f64,
    q: &QueueState,
) -> Result<f64> {
    generator_try(params, &mut |s| Ok(f(s)), q, Truncation::Strict)
}

/// (A f)(q) = f((q₁ − n)/n, q₂/n).
pub fn lift<F: Fn(FluidPoint) -> f64>(n: u64, f: F) -> impl Fn(&QueueState) -> f64 {
    move |q| f(q.fluid_point(n))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExpansionGap {
    pub lhs: f64,
    pub rhs: f64,
    /// The seven right-hand terms in display order.
    pub terms: [f64; 7],
}

impl ExpansionGap {
    pub fn gap(&self) -> f64 {
        (self.lhs - self.rhs).abs()
    }
}

/// Points in [a, b] where the field's branch label changes along `path`.
fn branch_breaks(
    field: &dyn JetField,
    a: f64,
    b: f64,
    path: &dyn Fn(f64) -> FluidPoint,
) -> Vec<f64> {
    const SAMPLES: usize = 32;
    let mut out = vec![a];
    let at = |i: usize| {
        if i == SAMPLES {
            b
        } else {
            a + (b - a) * i as f64 / SAMPLES as f64
        }
    };
    let mut prev_t = a;
    let mut prev_k = field.branch_key(path(a));
    for i in 1..=SAMPLES {
        let t = at(i);
        let k = field.branch_key(path(t));
        if k != prev_k {
            let (mut lo, mut hi) = (prev_t, t);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if field.branch_key(path(mid)) == prev_k {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            out.push(0.5 * (lo + hi));
        }
        prev_t = t;
        prev_k = k;
    }
    out.push(b);
    out
}

fn segment_integral(
    field: &dyn JetField,
    a: f64,
    b: f64,
    path: &dyn Fn(f64) -> FluidPoint,
    integrand: &dyn Fn(f64, &crate::stein_solutions::FieldJet) -> f64,
    tol: f64,
) -> Result<f64> {
    let breaks = branch_breaks(field, a, b, path);
    let failed = std::cell::Cell::new(None);
    let v = integrate_pieces(
        |u| match field.jet(path(u)) {
            Ok(j) => [integrand(u, &j)],
            Err(e) => {
                failed.set(Some(e));
                [0.0]
            }
        },
        &breaks,
        tol,
    )?;
    match failed.into_inner() {
        Some(e) => Err(e),
        None => Ok(v[0]),
    }
}

/// Both sides of the second-order expansion of G_X A f − L f at a state.
pub fn expansion_gap_check(
    params: &ModelParams,
    field: &dyn JetField,
    q: &QueueState,
) -> Result<ExpansionGap> {
    let n = params.n;
    let nf = params.n_f64();
    let lam = params.lambda;
    let inv = 1.0 / nf;
    let x = q.fluid_point(n);
    let (x1, x2) = (x.x1, x.x2);
    let jet = field.jet(x)?;

    let lhs = generator_try(
        params,
        &mut |s| Ok(field.jet(s.fluid_point(n))?.f),
        q,
        Truncation::Strict,
    )? - apply_l(params, &jet, x);

    let tol = 1e-13 * inv;
    let (q1, q2, q3) = (q.level(1) as u64, q.level(2) as u64, q.level(3) as u64);
    let horiz = move |u: f64| FluidPoint::raw(u, x2);
    let vert = move |u: f64| FluidPoint::raw(x1, u);
    let mut t = [0.0; 7];
    if q1 == n {
        t[0] = (jet.f2 - jet.f1) * lam;
    }
    if q1 == n && q2 == n {
        t[1] = -jet.f2 * lam;
    }
    if q3 > 0 {
        t[2] = q3 as f64 * segment_integral(field, x2 - inv, x2, &vert, &|_, j| j.f2, tol)?;
    }
    if q1 < n {
        t[3] = nf
            * lam
            * segment_integral(
                field,
                x1,
                x1 + inv,
                &horiz,
                &|u, j| (x1 + inv - u) * j.f11,
                tol,
            )?;
    }
    if q1 == n && q2 < n {
        t[4] = nf
            * lam
            * segment_integral(
                field,
                x2,
                x2 + inv,
                &vert,
                &|u, j| (x2 + inv - u) * j.f22,
                tol,
            )?;
    }
    if q1 > q2 {
        t[5] = (q1 - q2) as f64
            * segment_integral(
                field,
                x1 - inv,
                x1,
                &horiz,
                &|u, j| (u - x1 + inv) * j.f11,
                tol,
            )?;
    }
    if q2 > 0 {
        t[6] = q2 as f64
            * segment_integral(
                field,
                x2 - inv,
                x2,
                &vert,
                &|u, j| (u - x2 + inv) * j.f22,
                tol,
            )?;
    }
    Ok(ExpansionGap {
        lhs,
        rhs: t.iter().sum(),
        terms: t,
    })
}
