use jsqlab_core::diffusion_sim::{
    ergodic_decay_probe, simulate_stationary, step_euler, SdeConfig, SdeState,
};
use jsqlab_core::fluid_model::ModelParams;
use jsqlab_core::lyapunov_drift::{
    apply_gy, drift_constants, lyapunov_jet, lyapunov_value, DiffusionPoint,
};
use jsqlab_core::stats::Estimate;
use proptest::prelude::*;

proptest! {
    #[test]
    fn euler_step_stays_in_domain(y1 in -10.0f64..0.0, y2 in 0.0f64..10.0, u in 0.0f64..5.0,
                                  beta in 0.1f64..3.0, h in 1e-4f64..0.5, g in -6.0f64..6.0) {
        let s = SdeState { y: DiffusionPoint { y1, y2 }, u_cum: u };
        let out = step_euler(s, beta, h, g).unwrap();
        prop_assert!(out.state.y.y1 <= 0.0 && out.state.y.y2 >= 0.0);
        prop_assert!(out.state.u_cum >= u);
        prop_assert!(out.delta_u == 0.0 || out.unconstrained_y1 > 0.0);
        prop_assert!((out.state.u_cum - u - out.delta_u).abs() <= 1e-12 * (1.0 + u));
    }

    #[test]
    fn drift_inequality_at_random_points(y1 in -45.0f64..0.0, y2 in 0.0f64..45.0) {
        let p = ModelParams::new(100, 1.0).unwrap();
        let (k1, k2, alpha) = (11.0, 21.0, 0.1);
        let c = drift_constants(1.0, k1, k2, alpha).unwrap();
        let y = DiffusionPoint::new(y1, y2).unwrap();
        let jet = lyapunov_jet(&p, k1, k2, alpha, y).unwrap();
        prop_assert!(apply_gy(&jet, 1.0, y) + alpha * c.c * jet.f - alpha * c.d <= 1e-8);
    }
}

#[test]
fn step_size_must_be_below_one() {
    let s = SdeState::at(DiffusionPoint { y1: 0.0, y2: 0.0 });
    assert!(step_euler(s, 1.0, 1.0, 0.0).is_err());
    assert!(step_euler(s, 1.0, 0.0, 0.0).is_err());
}

fn agree(a: Estimate, b: Estimate) -> bool {
    (a.mean - b.mean).abs() <= a.half_width + b.half_width
}

#[test]
fn split_halves_and_step_halving_agree() {
    let base = SdeConfig {
        horizon: 1_050.0,
        ..SdeConfig::default()
    };
    let origin = DiffusionPoint::new(0.0, 0.0).unwrap();
    let a = simulate_stationary(1.0, &base, origin).unwrap();
    assert_eq!(a.domain_violations, 0);
    assert_eq!(a.complementarity_violations, 0);
    assert!(agree(a.first_half.0, a.second_half.0) && agree(a.first_half.1, a.second_half.1));
    let halved = SdeConfig {
        step: base.step / 2.0,
        thinning: base.thinning * 2,
        seed: 2,
        ..base
    };
    let b = simulate_stationary(1.0, &halved, origin).unwrap();
    assert!(
        agree(a.mean_y1, b.mean_y1),
        "{:?} {:?}",
        a.mean_y1,
        b.mean_y1
    );
    assert!(
        agree(a.mean_y2, b.mean_y2),
        "{:?} {:?}",
        a.mean_y2,
        b.mean_y2
    );
    assert_eq!(a, simulate_stationary(1.0, &base, origin).unwrap());
}

#[test]
fn decay_probe_from_identical_starts_is_zero() {
    let y = DiffusionPoint::new(-1.0, 1.0).unwrap();
    let t = ergodic_decay_probe(1.0, y, y, &[0.0, 0.5, 1.0], 1000, 5, true, 1e-2).unwrap();
    assert!(t.rows.iter().all(|r| r.distance == 0.0));
}

#[test]
fn decay_probe_distance_shrinks() {
    let a = DiffusionPoint::new(0.0, 0.0).unwrap();
    let b = DiffusionPoint::new(-3.0, 3.0).unwrap();
    let t = ergodic_decay_probe(1.0, a, b, &[0.0, 2.0, 8.0], 1000, 5, true, 1e-2).unwrap();
    assert!(t.rows[0].distance > t.rows[1].distance && t.rows[1].distance > t.rows[2].distance);
    assert!(t.log_slope.unwrap() < 0.0);
}

/// Along the queue axis V passes 10·V(0) within the grid; along the idle
/// axis it grows only like |y₁|^α, so growth there is checked as monotone.
#[test]
fn lyapunov_function_grows_away_from_origin() {
    let p = ModelParams::new(100, 1.0).unwrap();
    let (k1, k2, alpha) = (11.0, 21.0, 0.1);
    let v = |a: f64, b: f64| {
        lyapunov_value(&p, k1, k2, alpha, DiffusionPoint::new(a, b).unwrap()).unwrap()
    };
    assert!(v(0.0, 2.0 * k2) > 10.0 * v(0.0, 0.0));
    let idle: Vec<f64> = [0.0, -40.0, -400.0, -4_000.0, -40_000.0]
        .iter()
        .map(|&a| v(a, 0.0))
        .collect();
    assert!(idle.windows(2).all(|w| w[1] > w[0]), "{idle:?}");
    let queue: Vec<f64> = [0.0, 10.0, 20.0, 40.0, 80.0]
        .iter()
        .map(|&b| v(0.0, b))
        .collect();
    assert!(queue.windows(2).all(|w| w[1] >= w[0]), "{queue:?}");
}

#[test]
fn drift_constants_reject_bad_order() {
    assert!(drift_constants(1.0, 0.5, 2.0, 0.1).is_err());
    assert!(drift_constants(1.0, 3.0, 2.0, 0.1).is_err());
    assert!(drift_constants(1.0, 2.0, 3.0, -0.1).is_err());
}
