//! Subcommand bodies. Each fills its defaults into the settings so the
//! report echoes the configuration actually used.

use crate::settings::{parse_list, Settings};
use jsqlab_core::acceptance::{random_states, run_all};
use jsqlab_core::diffusion_sim::{
    ergodic_decay_probe, interchange_experiment, simulate_stationary, SdeConfig,
};
use jsqlab_core::fluid_model::{gamma_residuals, gamma_solve, ModelParams};
use jsqlab_core::grid::{GridSpec, Scale};
use jsqlab_core::jsq_ctmc::{
    auto_depth, exact_stationary, expansion_gap_check, moment_identities_check, simulate,
    steady_state_bound_check, third_level_bound_check, ExactConfig, SimConfig,
    TestFunctionRegistry,
};
use jsqlab_core::lyapunov_drift::{drift_scan, verify_drift, DiffusionPoint};
use jsqlab_core::registry::{FieldConfig, FieldRegistry};
use jsqlab_core::report::{fmt_f64, CsvTable};
use jsqlab_core::stats::Estimate;
use jsqlab_core::stein_solutions::{derivative_bound_report, pde_residual_scan, BoundTarget};
use jsqlab_core::{JsqError, Result};
use serde_json::{json, Value};
use std::path::PathBuf;

pub struct Outcome {
    pub results: Value,
    pub pass: bool,
    pub csv: Option<CsvTable>,
    /// Additional files requested explicitly, written as given.
    pub files: Vec<(PathBuf, String)>,
}

impl Outcome {
    fn new(results: Value, pass: bool) -> Self {
        Self {
            results,
            pass,
            csv: None,
            files: Vec::new(),
        }
    }

    fn with_csv(mut self, csv: CsvTable) -> Self {
        self.csv = Some(csv);
        self
    }
}

fn get<T: Clone>(slot: &mut Option<T>, default: T) -> T {
    slot.get_or_insert(default).clone()
}

fn params(s: &mut Settings, n: u64, beta: f64) -> Result<ModelParams> {
    ModelParams::new(get(&mut s.n, n), get(&mut s.beta, beta))
}

fn field_config(s: &mut Settings, params: ModelParams) -> FieldConfig {
    let b = params.beta;
    FieldConfig {
        params,
        kappa: get(&mut s.kappa, b + 1.0),
        kappa1: get(&mut s.kappa1, b + 0.5),
        kappa2: get(&mut s.kappa2, b + 1.5),
    }
}

fn grid(s: &mut Settings, default: &str) -> Result<GridSpec> {
    get(&mut s.grid, default.to_string()).parse()
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

fn f(x: f64) -> String {
    fmt_f64(x)
}

pub fn verify_pde(s: &mut Settings) -> Result<Outcome> {
    let p = params(s, 100, 1.0)?;
    let cfg = field_config(s, p);
    let g = grid(s, "-3:0:100,0:3:100")?;
    let tol = get(&mut s.tol, 1e-8);
    let reg = FieldRegistry::with_defaults();
    let mut reports = Vec::new();
    let mut csv = CsvTable::new(
        "field, max |L f + h| on the grid, max |f1 - f2| on x1 = 0",
        &["field", "max_residual", "max_boundary_gap"],
    );
    let mut pass = true;
    for name in parse_list::<String>(
        "field",
        &get(&mut s.fields, "excess,smooth-idle,smooth-queue".into()),
    )? {
        let field = reg.build(&name, &cfg)?;
        let r = pde_residual_scan(&p, field.as_ref(), &g)?;
        pass &= r.max_residual <= tol && r.max_boundary_gap <= tol;
        csv.push(vec![name, f(r.max_residual), f(r.max_boundary_gap)]);
        reports.push(r);
    }
    Ok(Outcome::new(json!({ "tol": tol, "fields": reports }), pass).with_csv(csv))
}

pub fn verify_bounds(s: &mut Settings) -> Result<Outcome> {
    let p = params(s, 100, 1.0)?;
    let cfg = field_config(s, p);
    let g = grid(s, "-3:0:200,0:3:200")?;
    let mut reports = Vec::new();
    let mut csv = CsvTable::new(
        "target, check, bound, largest observed value, violating grid points",
        &["target", "check", "bound", "max_observed", "violations"],
    );
    let mut total = 0;
    for name in parse_list::<String>("target", &get(&mut s.fields, "excess,smooth-pair".into()))? {
        let target = match name.as_str() {
            "excess" => BoundTarget::Excess { kappa: cfg.kappa },
            "smooth-pair" => BoundTarget::SmoothPair {
                kappa1: cfg.kappa1,
                kappa2: cfg.kappa2,
            },
            _ => {
                return Err(JsqError::Unknown {
                    kind: "bound target",
                    name,
                })
            }
        };
        let r = derivative_bound_report(&p, target, &g)?;
        for (check, c) in &r.checks {
            csv.push(vec![
                name.clone(),
                check.clone(),
                f(c.bound),
                f(c.max_observed),
                c.violations.to_string(),
            ]);
        }
        total += r.total_violations;
        reports.push(r);
    }
    Ok(Outcome::new(
        json!({ "targets": reports, "total_violations": total }),
        total == 0,
    )
    .with_csv(csv))
}

pub fn verify_drift_cmd(s: &mut Settings) -> Result<Outcome> {
    let p = params(s, 100, 1.0)?;
    let k1 = get(&mut s.kappa1, 11.0);
    let k2 = get(&mut s.kappa2, 21.0);
    let alpha = get(&mut s.alpha, 0.1);
    let g =
        grid(s, &format!("{}:0:100,0:{}:100", -2.0 * k2, 2.0 * k2))?.with_scale(Scale::Diffusion);
    let r = verify_drift(&p, k1, k2, alpha, &g)?;
    let pass = r.pass && r.chain_rule_residual <= 1e-9 && r.boundary_gap <= 1e-8;
    let scanning = s.scan_alpha.is_some() || s.scan_kappa1.is_some() || s.scan_kappa2.is_some();
    if !scanning {
        return Ok(Outcome::new(json!({ "drift": r }), pass));
    }
    let alphas: Vec<f64> = parse_list("alpha", &get(&mut s.scan_alpha, f(alpha)))?;
    let k1s: Vec<f64> = parse_list("kappa1", &get(&mut s.scan_kappa1, f(k1)))?;
    let k2s: Vec<f64> = parse_list("kappa2", &get(&mut s.scan_kappa2, f(k2)))?;
    let rows = drift_scan(&p, &alphas, &k1s, &k2s, get(&mut s.scan_points, 40))?;
    let mut csv = CsvTable::new(
        "alpha, kappa1, kappa2, drift constants c and d, grid verdict",
        &["alpha", "kappa1", "kappa2", "c", "d", "pass"],
    );
    for row in &rows {
        csv.push(vec![
            f(row.alpha),
            f(row.kappa1),
            f(row.kappa2),
            f(row.c),
            f(row.d),
            row.pass.to_string(),
        ]);
    }
    Ok(Outcome::new(json!({ "drift": r, "scan": rows }), pass).with_csv(csv))
}

pub fn verify_expansion(s: &mut Settings) -> Result<Outcome> {
    let p = params(s, 100, 1.0)?;
    let cfg = field_config(s, p);
    let count = get(&mut s.states, 1000);
    let seed = get(&mut s.seed, 1);
    let tol = get(&mut s.tol, 1e-9);
    let states = random_states(p.n, count, seed);
    let reg = FieldRegistry::with_defaults();
    let mut csv = CsvTable::new(
        "field, max |lhs - rhs| over the sampled states",
        &["field", "max_gap"],
    );
    let mut rows = Vec::new();
    let mut pass = true;
    for name in parse_list::<String>(
        "field",
        &get(&mut s.fields, "excess,quadratic,cubic".into()),
    )? {
        let field = reg.build(&name, &cfg)?;
        let mut worst = (0.0f64, None);
        for q in &states {
            let e = expansion_gap_check(&p, field.as_ref(), q)?;
            if e.gap().is_nan() || e.gap() > worst.0 {
                worst = (e.gap(), Some((q.levels().to_vec(), e)));
            }
        }
        pass &= worst.0 <= tol;
        csv.push(vec![name.clone(), f(worst.0)]);
        let (state, gap) = worst
            .1
            .map(|(a, b)| (Some(a), Some(b)))
            .unwrap_or((None, None));
        rows.push(json!({ "field": name, "max_gap": worst.0, "worst_state": state, "worst": gap }));
    }
    Ok(Outcome::new(json!({ "states": count, "tol": tol, "fields": rows }), pass).with_csv(csv))
}

/// The x1 axis of the grid sets the table rows; its x2 axis is ignored.
pub fn gamma_table(s: &mut Settings) -> Result<Outcome> {
    let p = params(s, 100, 1.0)?;
    let kappa = get(&mut s.kappa, p.beta + 1.0);
    let g = grid(s, "-3:0:31,0:1:2")?;
    let mut csv = CsvTable::new(
        "x1, curve height nu*, hitting time eta*, residuals of the two defining equations",
        &[
            "x1",
            "nu_star",
            "eta_star",
            "residual_hit",
            "residual_level",
        ],
    );
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    for x1 in g.x1_values() {
        let sol = gamma_solve(&p, kappa, x1)?;
        let (r1, r2) = gamma_residuals(&p, kappa, x1, sol.nu_star, sol.eta_star);
        worst = worst.max(r1.abs()).max(r2.abs());
        csv.push(vec![f(x1), f(sol.nu_star), f(sol.eta_star), f(r1), f(r2)]);
        rows.push(json!({ "x1": x1, "nu_star": sol.nu_star, "eta_star": sol.eta_star, "residuals": [r1, r2] }));
    }
    Ok(Outcome::new(
        json!({ "kappa": kappa, "rows": rows, "max_residual": worst }),
        worst <= 1e-10,
    )
    .with_csv(csv))
}

pub fn solve_exact(s: &mut Settings) -> Result<Outcome> {
    let p = params(s, 2, 0.5)?;
    let cap = get(&mut s.cap_c, 40 * p.n);
    let depth = get(&mut s.trunc_b, auto_depth(&p, cap));
    let kappa = get(&mut s.kappa, p.beta + 1.0);
    let cfg = ExactConfig {
        depth: Some(depth),
        ..ExactConfig::with_cap(cap)
    };
    let d = exact_stationary(&p, &cfg)?;
    let summary = d.summary(depth);
    let moments = moment_identities_check(&d, depth);
    let reg = TestFunctionRegistry::with_defaults();
    let mut adjoint = serde_json::Map::new();
    let mut worst_adjoint: f64 = 0.0;
    for name in reg.names() {
        let tf = reg.build(name, &p, cap)?;
        let r = d.bar_residual(&|q| tf.eval(q));
        worst_adjoint = worst_adjoint.max(if r.is_finite() {
            r.abs()
        } else {
            f64::INFINITY
        });
        adjoint.insert(name.to_string(), json!(r));
    }
    let bound = steady_state_bound_check(&d, kappa)?;
    let pass = d.residual <= 1e-10
        && (summary.probability_sum - 1.0).abs() <= 1e-12
        && moments.max_abs_discrepancy <= 1e-8
        && worst_adjoint <= 1e-9
        && bound.excess_holds
        && bound.scaled_mean_holds;
    let mut csv = CsvTable::new(
        "level i, E Q_i, P(first i levels full)",
        &["i", "mean_q", "block_prob"],
    );
    for (i, m) in summary.mean_levels.iter().enumerate() {
        csv.push(vec![
            (i + 1).to_string(),
            f(*m),
            f(summary.block_probs[i + 1]),
        ]);
    }
    let results = json!({
        "distribution": summary,
        "moment_identities": moments,
        "adjoint": { "residuals": adjoint, "max_abs": worst_adjoint },
        "bound": bound,
    });
    Ok(Outcome::new(results, pass).with_csv(csv))
}

pub fn simulate_ctmc(s: &mut Settings) -> Result<Outcome> {
    let p = params(s, 100, 1.0)?;
    let mut cfg = SimConfig::new(
        get(&mut s.horizon, 21_000.0),
        get(&mut s.burn_in, 1_000.0),
        get(&mut s.seed, 1),
    );
    cfg.depth = get(&mut s.trunc_b, 12);
    cfg.batches = get(&mut s.batches, 30);
    let kappa = get(&mut s.kappa, p.beta + 1.0);
    let kappa_tilde = get(&mut s.kappa_tilde, 0.5);
    let est = simulate(&p, &cfg)?.estimate;
    let moments = moment_identities_check(&est, cfg.depth);
    let identities_ok = moments
        .rows
        .iter()
        .all(|r| r.discrepancy.mean.abs() <= 3.0 * r.discrepancy.half_width + 1e-12);
    let ordered = est.mean_levels.windows(2).all(|w| w[1].mean <= w[0].mean);
    let overflow_ok = est.overflow_fraction() <= 1e-6;
    let bound = steady_state_bound_check(&est, kappa)?;
    let q3 = third_level_bound_check(&est, kappa, kappa_tilde)?;
    let pass = identities_ok
        && ordered
        && overflow_ok
        && bound.excess_holds
        && bound.scaled_mean_holds
        && q3.holds
        && q3.monotone;
    let mut csv = CsvTable::new(
        "level i, E Q_i, 95% half-width",
        &["i", "mean_q", "half_width"],
    );
    for (i, Estimate { mean, half_width }) in est.mean_levels.iter().enumerate() {
        csv.push(vec![(i + 1).to_string(), f(*mean), f(*half_width)]);
    }
    let results = json!({
        "estimate": est,
        "overflow_fraction": est.overflow_fraction(),
        "moment_identities": moments,
        "identities_within_interval": identities_ok,
        "levels_ordered": ordered,
        "bound": bound,
        "third_level": q3,
    });
    Ok(Outcome::new(results, pass).with_csv(csv))
}

pub fn simulate_diffusion(s: &mut Settings) -> Result<Outcome> {
    let beta = get(&mut s.beta, 1.0);
    let cfg = SdeConfig {
        step: get(&mut s.step, 1e-3),
        horizon: get(&mut s.horizon, 5_050.0),
        burn_in: get(&mut s.burn_in, 50.0),
        seed: get(&mut s.seed, 1),
        thinning: get(&mut s.thinning, 10),
        batches: get(&mut s.batches, 30),
    };
    let run = simulate_stationary(beta, &cfg, DiffusionPoint::new(0.0, 0.0)?)?;
    let agree = |a: Estimate, b: Estimate| (a.mean - b.mean).abs() <= a.half_width + b.half_width;
    let halves_agree =
        agree(run.first_half.0, run.second_half.0) && agree(run.first_half.1, run.second_half.1);
    let pass = run.complementarity_violations == 0 && run.domain_violations == 0;
    let mut results = json!({ "run": run, "halves_agree": halves_agree });
    let mut out = Outcome::new(Value::Null, pass);
    if let Some(path) = s.dump_samples.clone() {
        let mut t = CsvTable::new(
            "time, y1, y2 of the thinned stationary samples",
            &["t", "y1", "y2"],
        );
        let dt = cfg.step * cfg.thinning as f64;
        for (k, (y1, y2)) in run.samples.iter().enumerate() {
            t.push(vec![f(cfg.burn_in + (k + 1) as f64 * dt), f(*y1), f(*y2)]);
        }
        out.files.push((path, t.render()));
    }
    if s.replicas.is_some() {
        let replicas = get(&mut s.replicas, 1000);
        let checkpoints: Vec<f64> = parse_list(
            "checkpoint",
            &get(&mut s.checkpoints, "0,0.5,1,2,4,8".into()),
        )?;
        let table = ergodic_decay_probe(
            beta,
            DiffusionPoint::new(0.0, 0.0)?,
            DiffusionPoint::new(-3.0, 3.0)?,
            &checkpoints,
            replicas,
            cfg.seed,
            true,
            cfg.step,
        )?;
        let mut csv = CsvTable::new(
            "time, W1 between the two laws, per-coordinate parts",
            &["t", "distance", "w1_y1", "w1_y2"],
        );
        for r in &table.rows {
            csv.push(vec![f(r.t), f(r.distance), f(r.w1_y1), f(r.w1_y2)]);
        }
        results["decay"] = to_value(&table);
        out.csv = Some(csv);
    }
    out.results = results;
    Ok(out)
}

pub fn interchange(s: &mut Settings) -> Result<Outcome> {
    let beta = get(&mut s.beta, 1.0);
    let ns: Vec<u64> = parse_list("n", &get(&mut s.ns, "100,10000".into()))?;
    let samples = get(&mut s.samples, 100_000);
    let interval = get(&mut s.interval, 0.1);
    let seed = get(&mut s.seed, 1);
    let r = interchange_experiment(beta, &ns, samples, interval, seed)?;
    let mut csv = CsvTable::new(
        "servers n, marginal W1 distances between scaled chain and diffusion samples",
        &["n", "w1_y1", "w1_y2", "total"],
    );
    for row in &r.rows {
        csv.push(vec![
            row.n.to_string(),
            f(row.distance.w1_y1),
            f(row.distance.w1_y2),
            f(row.distance.total),
        ]);
    }
    Ok(Outcome::new(to_value(&r), r.decreasing).with_csv(csv))
}

type Smoke = (
    &'static str,
    fn(&mut Settings) -> Result<Outcome>,
    fn() -> Settings,
);

/// Light configurations of the other subcommands run by `accept`.
const SMOKE: [Smoke; 8] = [
    ("verify-pde", verify_pde, Settings::default),
    ("verify-bounds", verify_bounds, || Settings {
        grid: Some("-3:0:50,0:3:50".into()),
        ..Default::default()
    }),
    ("verify-drift", verify_drift_cmd, Settings::default),
    ("verify-expansion", verify_expansion, || Settings {
        states: Some(100),
        ..Default::default()
    }),
    ("gamma-table", gamma_table, Settings::default),
    ("solve-exact", solve_exact, || Settings {
        n: Some(1),
        ..Default::default()
    }),
    ("simulate-ctmc", simulate_ctmc, || Settings {
        n: Some(10),
        horizon: Some(2_100.0),
        burn_in: Some(100.0),
        ..Default::default()
    }),
    ("simulate-diffusion", simulate_diffusion, || Settings {
        horizon: Some(550.0),
        ..Default::default()
    }),
];

/// Runs the acceptance criteria, then each other subcommand once. Criterion
/// lines go to stderr as they finish.
pub fn accept(_s: &mut Settings) -> Result<Outcome> {
    let outcomes = run_all();
    for o in &outcomes {
        eprintln!("{}", o.line());
    }
    let mut csv = CsvTable::new(
        "acceptance criterion, verdict, summary",
        &["id", "name", "passed", "detail"],
    );
    let criteria: Vec<Value> = outcomes
        .iter()
        .map(|o| {
            csv.push(vec![
                o.id.to_string(),
                o.name.to_string(),
                o.passed.to_string(),
                format!("\"{}\"", o.detail.replace('"', "'")),
            ]);
            json!({ "id": o.id, "name": o.name, "passed": o.passed, "detail": o.detail })
        })
        .collect();
    let mut smoke = serde_json::Map::new();
    let mut smoke_ok = true;
    for (name, run, make) in SMOKE {
        let mut cfg = make();
        let (passed, detail) = match run(&mut cfg) {
            Ok(o) => (o.pass, String::new()),
            Err(e) => (false, format!("{}: {e}", e.code())),
        };
        eprintln!(
            "[{}] subcommand {name}",
            if passed { "PASS" } else { "FAIL" }
        );
        smoke_ok &= passed;
        smoke.insert(
            name.to_string(),
            json!({ "config": cfg, "passed": passed, "error": detail }),
        );
    }
    let pass = smoke_ok && outcomes.iter().all(|o| o.passed);
    Ok(Outcome::new(json!({ "criteria": criteria, "subcommands": smoke }), pass).with_csv(csv))
}
