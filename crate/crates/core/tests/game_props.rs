use netsaddle::scenarios::{build_channel_game, random_quadratic_fixture, ChannelScenario};
use netsaddle::{Side, StrategySet, WeightedDigraph};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::sync::OnceLock;

fn channel() -> &'static (ChannelScenario, netsaddle::TwoNetworkGame) {
    static GAME: OnceLock<(ChannelScenario, netsaddle::TwoNetworkGame)> = OnceLock::new();
    GAME.get_or_init(|| {
        let p = ChannelScenario::default();
        let g = build_channel_game(&p).unwrap();
        (p, g)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn channel_payoffs_collapse_to_total_capacity(seed in any::<u64>()) {
        let (p, game) = channel();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = p.signal_set().sample_interior(&mut rng, 0.05);
        let y = p.noise_set().sample_interior(&mut rng, 0.05);
        let u = game.reduced_value(&x, &y).unwrap();
        prop_assert!((u - p.total_capacity(&x, &y)).abs() < 1e-12 * u.abs().max(1.0));
        let (bx, by) = (x.repeat(5), y.repeat(5));
        let u1 = game.aggregate_u(Side::First, &bx, &by).unwrap();
        let u2 = game.aggregate_u(Side::Second, &bx, &by).unwrap();
        prop_assert!((u1 - u2).abs() < 1e-12 * u1.abs().max(1.0));
    }

    #[test]
    fn power_set_samples_are_members(seed in any::<u64>(), n in 1usize..12) {
        let set = StrategySet::cube(2, 0.0, 4.0).with_constraint(vec![1.0, 3.0], 4.0).power(n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        prop_assert!(set.contains(&set.sample(&mut rng)));
    }

    #[test]
    fn quadratic_saddle_has_zero_nash_residual(seed in any::<u64>(), d1 in 1usize..4, d2 in 1usize..4) {
        let fx = random_quadratic_fixture(
            WeightedDigraph::bidirected_cycle(4).unwrap(),
            WeightedDigraph::complete(3).unwrap(),
            d1,
            d2,
            seed,
        )
        .unwrap();
        let (r1, r2) = fx.game.nash_residual(&fx.saddle.0, &fx.saddle.1).unwrap();
        prop_assert!(r1 < 1e-9 && r2 < 1e-9, "{r1} {r2}");
    }
}
