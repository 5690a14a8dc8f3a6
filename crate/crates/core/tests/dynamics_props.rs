use netsaddle::dynamics::{
    conservation_residual, field_undirected, integrate, lyapunov_undirected, rk4_step, LyapunovKind, Monitor,
    Provenance,
};
use netsaddle::graph::WeightedDigraph;
use netsaddle::scenarios::random_quadratic_fixture;
use netsaddle::{Flow, IntegratorSettings, ReferencePoint, StackedState};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn connected(n: usize, extra: &[(usize, usize)]) -> WeightedDigraph {
    let mut edges: Vec<(usize, usize, f64)> = (1..n).map(|i| (i - 1, i, 1.0)).collect();
    for &(i, j) in extra {
        let (i, j) = (i % n, j % n);
        let (a, b) = (i.min(j), i.max(j));
        if a != b && !edges.iter().any(|e| e.0 == a && e.1 == b) {
            edges.push((a, b, 0.5));
        }
    }
    WeightedDigraph::undirected(n, &edges).unwrap()
}

fn random_start(n: usize, d: usize, m: usize, e: usize, seed: u64) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = |k| (0..k).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
    (v(n * d), v(n * d), v(m * e), v(m * e))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn undirected_lyapunov_decreases_and_sums_are_conserved(
        n1 in 2usize..6,
        n2 in 2usize..6,
        d1 in 1usize..3,
        d2 in 1usize..3,
        extra in prop::collection::vec((0usize..6, 0usize..6), 0..4),
        seed in any::<u64>(),
    ) {
        let fx = random_quadratic_fixture(connected(n1, &extra), connected(n2, &extra), d1, d2, seed).unwrap();
        let (x1, z1, x2, z2) = random_start(n1, d1, n2, d2, seed);
        let s0 = StackedState { x1, z1, x2, z2, t: 0.0 };
        let reference = ReferencePoint::from_saddle(&fx.game, &fx.saddle.0, &fx.saddle.1, &s0, Provenance::Analytic).unwrap();

        // The reference is an equilibrium.
        let f = field_undirected(&fx.game, &reference.state).unwrap();
        prop_assert!(f.flatten().iter().all(|v| v.abs() < 1e-9));

        let monitor = Monitor { reference, kind: LyapunovKind::Undirected };
        let settings = IntegratorSettings { horizon: 5.0, record_every: 50, stop_tol: 0.0, ..Default::default() };
        let rec = integrate(&fx.game, &s0, Flow::Undirected, &settings, Some(&monitor)).unwrap();
        prop_assert!(rec.max_lyapunov_increase().unwrap() <= 1e-9);
        prop_assert!(rec.lyapunov.last().unwrap() <= &lyapunov_undirected(&s0, &monitor.reference));
        let (c1, c2) = conservation_residual(&rec.final_state(), &s0, &fx.game);
        prop_assert!(c1 < 1e-10 && c2 < 1e-10);
    }
}

#[test]
fn rk4_is_fourth_order() {
    let err = |h: f64| {
        let mut y = vec![1.0, 0.0];
        let steps = (1.0 / h).round() as usize;
        for _ in 0..steps {
            rk4_step::<()>(&mut y, h, |y, dy| {
                dy[0] = y[1];
                dy[1] = -y[0];
                Ok(())
            })
            .unwrap();
        }
        ((y[0] - 1f64.cos()).powi(2) + (y[1] + 1f64.sin()).powi(2)).sqrt()
    };
    let ratio = err(0.02) / err(0.01);
    assert!((ratio - 16.0).abs() < 1.0, "ratio {ratio}");
}

#[test]
fn invalid_settings_are_rejected_before_integrating() {
    let fx = random_quadratic_fixture(connected(3, &[]), connected(2, &[]), 1, 1, 0).unwrap();
    let s0 = StackedState::zeros(&fx.game);
    let bad = IntegratorSettings { h: -1.0, ..Default::default() };
    let err = integrate(&fx.game, &s0, Flow::Undirected, &bad, None).unwrap_err();
    assert!(err.to_string().contains("h must be positive"), "{err}");
    let zero_alpha = integrate(&fx.game, &s0, Flow::Directed { alpha: 0.0 }, &IntegratorSettings::default(), None);
    assert!(zero_alpha.is_err());
}
