use jsqlab_core::fluid_model::{FluidPoint, ModelParams};
use jsqlab_core::jsq_ctmc::{
    apply_gq, exact_stationary, lift, moment_identities_check, simulate, ExactConfig, QueueState,
    SimConfig,
};
use jsqlab_core::registry::{FieldConfig, FieldRegistry, JetField, QuadraticField};
use jsqlab_core::JsqError;
use proptest::prelude::*;

fn cfg(n: u64) -> FieldConfig {
    FieldConfig {
        params: ModelParams::new(n, 1.0).unwrap(),
        kappa: 2.0,
        kappa1: 1.5,
        kappa2: 2.5,
    }
}

#[test]
fn registry_lists_and_rejects_by_name() {
    let reg = FieldRegistry::with_defaults();
    let names = reg.names();
    for n in [
        "excess",
        "smooth-idle",
        "smooth-queue",
        "smooth-sum",
        "quadratic",
        "cubic",
    ] {
        assert!(names.contains(&n), "{n}");
    }
    assert!(matches!(
        reg.build("nope", &cfg(100)),
        Err(JsqError::Unknown { .. })
    ));
    let mut reg = FieldRegistry::empty();
    reg.register("q", |_| Ok(Box::new(QuadraticField)));
    assert_eq!(reg.build("q", &cfg(100)).unwrap().name(), "quadratic");
}

#[test]
fn sum_field_source_adds() {
    let reg = FieldRegistry::with_defaults();
    let c = cfg(100);
    let sum = reg.build("smooth-sum", &c).unwrap();
    let a = reg.build("smooth-idle", &c).unwrap();
    let b = reg.build("smooth-queue", &c).unwrap();
    let x = FluidPoint::new(-0.3, 0.4).unwrap();
    assert_eq!(
        sum.source(x),
        Some(a.source(x).unwrap() + b.source(x).unwrap())
    );
    assert!((sum.jet(x).unwrap().f - a.jet(x).unwrap().f - b.jet(x).unwrap().f).abs() <= 1e-15);
}

fn fd_check(field: &dyn JetField, x1: f64, x2: f64) -> std::result::Result<(), TestCaseError> {
    let h = 1e-6;
    let j = field.jet(FluidPoint::raw(x1, x2)).unwrap();
    let at = |a: f64, b: f64| field.jet(FluidPoint::raw(a, b)).unwrap();
    let keys = [(x1 - h, x2), (x1 + h, x2), (x1, x2 - h), (x1, x2 + h)]
        .map(|(a, b)| field.branch_key(FluidPoint::raw(a, b)));
    // One-sided derivatives across a branch change are not comparable.
    prop_assume!(keys
        .iter()
        .all(|&k| k == field.branch_key(FluidPoint::raw(x1, x2))));
    let d1 = (at(x1 + h, x2).f - at(x1 - h, x2).f) / (2.0 * h);
    let d2 = (at(x1, x2 + h).f - at(x1, x2 - h).f) / (2.0 * h);
    let scale = |v: f64| 1e-6 * (1.0 + v.abs());
    prop_assert!((d1 - j.f1).abs() <= scale(j.f1), "f1 {} vs {}", d1, j.f1);
    prop_assert!((d2 - j.f2).abs() <= scale(j.f2), "f2 {} vs {}", d2, j.f2);
    let d11 = (at(x1 + h, x2).f1 - at(x1 - h, x2).f1) / (2.0 * h);
    let d22 = (at(x1, x2 + h).f2 - at(x1, x2 - h).f2) / (2.0 * h);
    prop_assert!(
        (d11 - j.f11).abs() <= 1e-5 * (1.0 + j.f11.abs()),
        "f11 {} vs {}",
        d11,
        j.f11
    );
    prop_assert!(
        (d22 - j.f22).abs() <= 1e-5 * (1.0 + j.f22.abs()),
        "f22 {} vs {}",
        d22,
        j.f22
    );
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn jets_are_finite_and_match_differences(which in 0usize..4, x1 in -3.0f64..-1e-3, x2 in 1e-3f64..3.0) {
        let reg = FieldRegistry::with_defaults();
        let name = ["excess", "smooth-idle", "smooth-queue", "cubic"][which];
        let field = reg.build(name, &cfg(100)).unwrap();
        prop_assert!(field.jet(FluidPoint::new(x1, x2).unwrap()).unwrap().is_finite());
        fd_check(field.as_ref(), x1, x2)?;
    }

    #[test]
    fn generator_kills_constants(q1 in 0u32..=10, a in 0.0f64..1.0, b in 0.0f64..1.0, c in 0.0f64..1.0) {
        let n = 10u64;
        let q2 = (a * q1 as f64) as u32;
        let q3 = (b * q2 as f64) as u32;
        let q4 = if q3 == n as u32 { 0 } else { (c * q3.min(3) as f64) as u32 };
        let q = QueueState::new(vec![q1, q2, q3, q4], n).unwrap();
        let p = ModelParams::new(n, 1.0).unwrap();
        prop_assert_eq!(apply_gq(&p, &|_| 1.0, &q).unwrap(), 0.0);
        // Total count: arrivals add nλ, departures remove the busy servers q₁.
        let total = apply_gq(&p, &|s: &QueueState| s.total() as f64, &q).unwrap();
        prop_assert!((total - (p.arrival_rate() - q1 as f64)).abs() <= 1e-12);
    }

    #[test]
    fn states_validate_ordering(levels in proptest::collection::vec(0u32..6, 1..5)) {
        let ok = levels.windows(2).all(|w| w[1] <= w[0]) && levels.iter().all(|&v| v <= 5);
        prop_assert_eq!(QueueState::new(levels, 5).is_ok(), ok);
    }
}

#[test]
fn exact_solution_is_a_distribution_and_rows_conserve() {
    let p = ModelParams::new(3, 0.5).unwrap();
    let d = exact_stationary(&p, &ExactConfig::with_cap(120)).unwrap();
    let probs = d.probabilities();
    assert!(probs.iter().all(|&v| v >= 0.0));
    assert!((probs.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    assert!(d.residual <= 1e-10);
    assert!(d.max_row_sum <= 1e-12, "{}", d.max_row_sum);
    assert!(d.bar_residual(&|_| 1.0).abs() <= 1e-15);
}

#[test]
fn exact_stein_identity() {
    // With π stationary, E(G A f) = 0, so E h = E(G A f − L f) − E(L f + h) = E(G A f − L f).
    let p = ModelParams::new(4, 0.5).unwrap();
    let d = exact_stationary(&p, &ExactConfig::with_cap(160)).unwrap();
    let reg = FieldRegistry::with_defaults();
    let c = FieldConfig {
        params: p,
        kappa: 1.0,
        kappa1: 0.75,
        kappa2: 1.25,
    };
    for name in ["excess", "smooth-queue"] {
        let f = reg.build(name, &c).unwrap();
        let (eh, gap) = d.stein_identity(f.as_ref()).unwrap();
        assert!((eh - gap).abs() <= 1e-8, "{name}: {eh} vs {gap}");
        let ef = d.bar_residual(&lift(p.n, |x| f.jet(x).unwrap().f));
        assert!(ef.abs() <= 1e-9);
    }
}

#[test]
fn simulated_means_respect_identities() {
    let p = ModelParams::new(20, 1.0).unwrap();
    let est = simulate(&p, &SimConfig::new(3_100.0, 100.0, 11))
        .unwrap()
        .estimate;
    let q1 = est.mean_levels[0];
    assert!(
        (q1.mean - p.arrival_rate()).abs() <= 3.0 * q1.half_width,
        "{q1:?}"
    );
    assert!(est.mean_levels.windows(2).all(|w| w[1].mean <= w[0].mean));
    assert!(est
        .block_probs
        .iter()
        .all(|b| (0.0..=1.0).contains(&b.mean)));
    let m = moment_identities_check(&est, 3);
    assert!(m
        .rows
        .iter()
        .all(|r| r.discrepancy.mean.abs() <= 3.0 * r.discrepancy.half_width + 1e-12));
}
