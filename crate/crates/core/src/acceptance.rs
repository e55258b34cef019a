//! The twelve acceptance criteria as runnable checks shared by the test
//! suite and the command-line runner.

use crate::diffusion_sim::{interchange_experiment, InterchangeReport};
use crate::error::Result;
use crate::fluid_model::{value_integral, FluidPoint, ModelParams};
use crate::grid::{GridSpec, Scale};
use crate::jsq_ctmc::{
    exact_stationary, expansion_gap_check, moment_identities_check, simulate,
    steady_state_bound_check, third_level_bound_check, ExactConfig, ExactDistribution, QueueState,
    SimConfig, StationaryEstimate, TestFunctionRegistry,
};
use crate::lyapunov_drift::{drift_constants, verify_drift};
use crate::registry::{FieldConfig, FieldRegistry};
use crate::report::to_json;
use crate::special_fn::{lambert_w0, lambert_wm1, INV_E};
use crate::stein_solutions::{derivative_bound_report, pde_residual_scan, BoundTarget};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::sync::OnceLock;
use std::time::Instant;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionOutcome {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl CriterionOutcome {
    pub fn line(&self) -> String {
        format!(
            "[{}] criterion {:>2} {:<28} {:>8.2}s  {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.seconds,
            self.detail
        )
    }
}

pub const SEED: u64 = 20_240_601;

fn timed(
    id: u8,
    name: &'static str,
    body: impl FnOnce() -> Result<(bool, String)>,
) -> CriterionOutcome {
    let t = Instant::now();
    let (passed, detail) = match body() {
        Ok(v) => v,
        Err(e) => (false, format!("error {}: {e}", e.code())),
    };
    CriterionOutcome {
        id,
        name,
        passed,
        detail,
        seconds: t.elapsed().as_secs_f64(),
    }
}

fn base_params() -> Result<ModelParams> {
    ModelParams::new(100, 1.0)
}

/// 10⁴ round trips of each real Lambert-W branch.
pub fn lambert_round_trip() -> Result<(f64, f64)> {
    let lo = -INV_E + 1e-12;
    let count = 10_000;
    let half = count / 2;
    let mut w0_err: f64 = 0.0;
    for i in 0..count {
        let x = if i < half {
            lo + (1.0 - lo) * i as f64 / (half - 1) as f64
        } else {
            10f64.powf(8.0 * (i - half) as f64 / (count - half - 1) as f64)
        };
        if x == 0.0 {
            continue;
        }
        let w = lambert_w0(x)?;
        w0_err = w0_err.max(((w * w.exp() - x) / x).abs());
    }
    let mut wm1_err: f64 = 0.0;
    for i in 0..count {
        let x = if i < half {
            lo + (-0.01 - lo) * i as f64 / (half - 1) as f64
        } else {
            -(10f64.powf(-2.0 - 298.0 * (i - half) as f64 / (count - half - 1) as f64))
        };
        let w = lambert_wm1(x)?;
        wm1_err = wm1_err.max(((w * w.exp() - x) / x).abs());
    }
    Ok((w0_err, wm1_err))
}

pub fn criterion_1() -> CriterionOutcome {
    timed(1, "lambert-w round trip", || {
        let t = Instant::now();
        let (a, b) = lambert_round_trip()?;
        let secs = t.elapsed().as_secs_f64();
        Ok((
            a <= 1e-12 && b <= 1e-11 && secs < 1.0,
            format!("W0 max rel {a:.2e}, W-1 max rel {b:.2e}"),
        ))
    })
}

static EXACT: OnceLock<Result<Vec<ExactDistribution>>> = OnceLock::new();

/// Exact solves for n = 1..=5, β = 0.5, cap 40n, computed once per process.
pub fn exact_solves() -> Result<&'static [ExactDistribution]> {
    EXACT
        .get_or_init(|| {
            (1..=5u64)
                .map(|n| {
                    exact_stationary(&ModelParams::new(n, 0.5)?, &ExactConfig::with_cap(40 * n))
                })
                .collect()
        })
        .as_ref()
        .map(|v| v.as_slice())
        .map_err(Clone::clone)
}

pub fn criterion_2() -> CriterionOutcome {
    timed(2, "exact moment identities", || {
        let mut worst: f64 = 0.0;
        let mut ok = true;
        for d in exact_solves()? {
            let m = moment_identities_check(d, 3);
            worst = worst.max(m.max_abs_discrepancy);
            let total: f64 = d.probabilities().iter().sum();
            ok &= d.residual <= 1e-10
                && (total - 1.0).abs() <= 1e-12
                && d.probabilities().iter().all(|&p| p >= 0.0);
            ok &= d.max_row_sum <= 1e-12;
            if d.params.n == 1 {
                let lam = d.params.lambda;
                for i in 1..=5 {
                    let g = (d.mean_level(i) - lam.powi(i as i32)).abs();
                    worst = worst.max(g);
                }
            }
        }
        Ok((ok && worst <= 1e-8, format!("max identity gap {worst:.2e}")))
    })
}

pub fn criterion_3() -> CriterionOutcome {
    timed(3, "adjoint relation", || {
        let reg = TestFunctionRegistry::with_defaults();
        let mut worst: f64 = 0.0;
        let mut count = 0;
        for d in exact_solves()? {
            for f in reg.build_all(&d.params, d.cap_c)? {
                let r = d.bar_residual(&|q| f.eval(q));
                worst = worst.max(if r.is_nan() { f64::INFINITY } else { r.abs() });
                count += 1;
            }
        }
        Ok((
            worst <= 1e-9 && count == 50,
            format!("{count} expectations, max |E G f| {worst:.2e}"),
        ))
    })
}

fn field_config(params: ModelParams) -> FieldConfig {
    FieldConfig {
        params,
        kappa: 2.0,
        kappa1: 1.5,
        kappa2: 2.5,
    }
}

pub fn criterion_4() -> CriterionOutcome {
    timed(4, "pde residual", || {
        let p = base_params()?;
        let grid = GridSpec::square(-3.0, 3.0, 100, Scale::Fluid)?;
        let reg = FieldRegistry::with_defaults();
        let mut ok = true;
        let mut parts = Vec::new();
        for (name, tol) in [
            ("excess", 1e-8),
            ("smooth-idle", 1e-7),
            ("smooth-queue", 1e-7),
        ] {
            let f = reg.build(name, &field_config(p))?;
            let r = pde_residual_scan(&p, f.as_ref(), &grid)?;
            ok &= r.max_residual <= tol && r.max_boundary_gap <= tol;
            parts.push(format!(
                "{name} {:.1e}/{:.1e}",
                r.max_residual, r.max_boundary_gap
            ));
        }
        Ok((ok, parts.join(", ")))
    })
}

pub fn criterion_5() -> CriterionOutcome {
    timed(5, "value-function oracle", || {
        let p = base_params()?;
        let reg = FieldRegistry::with_defaults();
        let mut rng = ChaCha8Rng::seed_from_u64(SEED);
        let mut worst: f64 = 0.0;
        for name in ["excess", "smooth-queue"] {
            let f = reg.build(name, &field_config(p))?;
            let h = |x: FluidPoint| f.source(x).unwrap_or(f64::NAN);
            for _ in 0..100 {
                let x = FluidPoint::raw(-3.0 * rng.random::<f64>(), 3.0 * rng.random::<f64>());
                let closed = f.jet(x)?.f;
                let integral = value_integral(&p, &h, x, 1e-10)?;
                worst = worst.max((closed - integral).abs());
            }
        }
        Ok((
            worst <= 1e-7,
            format!("max |closed form − integral| {worst:.2e}"),
        ))
    })
}

pub fn criterion_6() -> CriterionOutcome {
    timed(6, "derivative bounds", || {
        let p = base_params()?;
        let grid = GridSpec::square(-3.0, 3.0, 200, Scale::Fluid)?;
        let mut total = 0;
        for target in [
            BoundTarget::Excess { kappa: 2.0 },
            BoundTarget::SmoothPair {
                kappa1: 1.5,
                kappa2: 2.5,
            },
        ] {
            total += derivative_bound_report(&p, target, &grid)?.total_violations;
        }
        Ok((total == 0, format!("{total} violations")))
    })
}

/// Random states of depth 4 with boundary cases over-represented.
pub fn random_states(n: u64, count: usize, seed: u64) -> Vec<QueueState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n32 = n as u32;
    (0..count)
        .map(|_| {
            let q1 = if rng.random_bool(0.3) {
                n32
            } else {
                rng.random_range(0..=n32)
            };
            let q2 = if rng.random_bool(0.3) {
                q1
            } else {
                rng.random_range(0..=q1)
            };
            let q3 = if rng.random_bool(0.2) {
                q2
            } else {
                rng.random_range(0..=q2)
            };
            let q4 = if q3 == n32 {
                0
            } else {
                rng.random_range(0..=q3.min(2))
            };
            QueueState::new(vec![q1, q2, q3, q4], n).expect("valid by construction")
        })
        .collect()
}

pub fn criterion_7() -> CriterionOutcome {
    timed(7, "generator expansion", || {
        let reg = FieldRegistry::with_defaults();
        let mut worst: f64 = 0.0;
        for n in [10u64, 100] {
            let p = ModelParams::new(n, 1.0)?;
            let states = random_states(n, 1000, SEED + n);
            for name in ["excess", "quadratic", "cubic"] {
                let f = reg.build(name, &field_config(p))?;
                for q in &states {
                    worst = worst.max(expansion_gap_check(&p, f.as_ref(), q)?.gap());
                }
            }
        }
        Ok((worst <= 1e-9, format!("max |lhs − rhs| {worst:.2e}")))
    })
}

fn desk_config() -> SimConfig {
    SimConfig::new(21_000.0, 1_000.0, SEED)
}

/// Report for the n = 400 steady-state bound check, rendered as JSON.
pub fn main_bound_report() -> Result<(bool, String, StationaryEstimate)> {
    let p = ModelParams::new(400, 1.0)?;
    let run = simulate(&p, &desk_config())?;
    let est = run.estimate;
    let m = steady_state_bound_check(&est, 2.0)?;
    let pass = m.excess_holds && m.scaled_mean_holds;
    #[derive(Serialize)]
    struct Out<'a> {
        estimate: &'a StationaryEstimate,
        margins: &'a crate::jsq_ctmc::MainBoundMargins,
    }
    Ok((
        pass,
        to_json(&Out {
            estimate: &est,
            margins: &m,
        }),
        est,
    ))
}

static SIM400: OnceLock<Result<(bool, String, StationaryEstimate)>> = OnceLock::new();

fn sim400() -> Result<&'static (bool, String, StationaryEstimate)> {
    SIM400
        .get_or_init(main_bound_report)
        .as_ref()
        .map_err(Clone::clone)
}

pub fn criterion_8() -> CriterionOutcome {
    timed(8, "steady-state bound", || {
        let (sim_ok, _, est) = sim400()?;
        let m = steady_state_bound_check(est, 2.0)?;
        let p = ModelParams::new(4, 0.5)?;
        let d = exact_stationary(&p, &ExactConfig::with_cap(160))?;
        let e = steady_state_bound_check(&d, 1.0)?;
        let exact_ok = e.excess_margin > 0.0 && e.scaled_mean_margin > 0.0;
        Ok((
            *sim_ok && exact_ok,
            format!(
                "E sqrt(n) X2 = {:.4} ± {:.4} (bound {}), excess margin {:.3e}; exact margins {:.3e}, {:.3e}",
                m.scaled_mean.mean, m.scaled_mean.half_width, m.scaled_mean_rhs, m.excess_margin, e.excess_margin, e.scaled_mean_margin
            ),
        ))
    })
}

pub fn criterion_9() -> CriterionOutcome {
    timed(9, "third-level bound", || {
        let (_, _, est400) = sim400()?;
        let p100 = ModelParams::new(100, 1.0)?;
        let est100 = simulate(&p100, &desk_config())?.estimate;
        let mut ok = true;
        let mut parts = Vec::new();
        for est in [est400, &est100] {
            let c = third_level_bound_check(est, 2.0, 0.5)?;
            ok &= c.holds && c.monotone && c.mean_q3.upper() <= 5.0;
            parts.push(format!(
                "n={} E Q3 {:.3e} (bound {:.1})",
                est.params.n, c.mean_q3.mean, c.rhs
            ));
        }
        Ok((ok, parts.join(", ")))
    })
}

pub fn criterion_10() -> CriterionOutcome {
    timed(10, "drift condition", || {
        let p = base_params()?;
        let c = drift_constants(1.0, 11.0, 21.0, 0.1)?;
        let grid = GridSpec::square(-40.0, 40.0, 100, Scale::Diffusion)?;
        let r = verify_drift(&p, 11.0, 21.0, 0.1, &grid)?;
        let ok = r.pass
            && r.chain_rule_residual <= 1e-9
            && r.boundary_gap <= 1e-8
            && (c.c - 0.2137).abs() < 1e-4
            && (c.d - 3.108).abs() < 1e-3;
        Ok((
            ok,
            format!(
                "c={:.5} d={:.4} max gap {:.3e}, chain rule {:.1e}, edge {:.1e}",
                c.c, c.d, r.max_gap, r.chain_rule_residual, r.boundary_gap
            ),
        ))
    })
}

pub const INTERCHANGE_SAMPLES: usize = 100_000;
pub const INTERCHANGE_INTERVAL: f64 = 0.1;

pub fn interchange_report() -> Result<InterchangeReport> {
    interchange_experiment(
        1.0,
        &[100, 10_000],
        INTERCHANGE_SAMPLES,
        INTERCHANGE_INTERVAL,
        SEED,
    )
}

static INTERCHANGE: OnceLock<String> = OnceLock::new();

pub fn criterion_11() -> CriterionOutcome {
    timed(11, "interchange of limits", || {
        let r = interchange_report()?;
        let _ = INTERCHANGE.set(to_json(&r));
        let d: Vec<String> = r
            .rows
            .iter()
            .map(|row| {
                format!(
                    "n={}: {:.4}+{:.4}",
                    row.n, row.distance.w1_y1, row.distance.w1_y2
                )
            })
            .collect();
        Ok((r.decreasing, d.join(", ")))
    })
}

pub fn criterion_12() -> CriterionOutcome {
    timed(12, "determinism", || {
        let first_main = sim400()?.1.clone();
        let second_main = main_bound_report()?.1;
        let first_inter = match INTERCHANGE.get() {
            Some(s) => s.clone(),
            None => to_json(&interchange_report()?),
        };
        let second_inter = to_json(&interchange_report()?);
        let same_main = first_main == second_main;
        let same_inter = first_inter == second_inter;
        Ok((
            same_main && same_inter,
            format!(
                "bound report identical: {same_main}, interchange report identical: {same_inter}"
            ),
        ))
    })
}

pub type Criterion = fn() -> CriterionOutcome;

pub const CRITERIA: [Criterion; 12] = [
    criterion_1,
    criterion_2,
    criterion_3,
    criterion_4,
    criterion_5,
    criterion_6,
    criterion_7,
    criterion_8,
    criterion_9,
    criterion_10,
    criterion_11,
    criterion_12,
];

pub fn run_all() -> Vec<CriterionOutcome> {
    CRITERIA.iter().map(|c| c()).collect()
}
