use netsaddle::design::{alpha_from_beta, beta_from_alpha, design, find_beta_star, h, DesignInputs, DEFAULT_TOL};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn h_is_negative_below_beta_star(lambda in 0.05f64..10.0, k in 0.05f64..10.0, frac in 0.01f64..0.99) {
        let inputs = DesignInputs::new(lambda, k).unwrap();
        let star = find_beta_star(&inputs, DEFAULT_TOL).unwrap();
        prop_assert!(h(frac * star.value, &inputs).unwrap() < 0.0);
        prop_assert!(h(star.value, &inputs).unwrap().abs() < 1e-6 * k.max(1.0));
    }

    #[test]
    fn designed_alpha_matches_beta(lambda in 0.05f64..10.0, k in 0.05f64..10.0) {
        let inputs = DesignInputs::new(lambda, k).unwrap();
        let d = design(&inputs, None).unwrap();
        prop_assert!((d.beta - d.beta_star / 2.0).abs() <= 1e-12 * d.beta_star);
        prop_assert!(d.h_at_beta < 0.0);
        prop_assert!(d.alpha >= 2.0 * 2f64.sqrt());
        let (lo, hi) = beta_from_alpha(d.alpha).unwrap();
        let back = if (lo - d.beta).abs() < (hi - d.beta).abs() { lo } else { hi };
        prop_assert!((back - d.beta).abs() < 1e-9 * d.beta.max(1.0));
    }

    #[test]
    fn beta_alpha_round_trip(beta in 1e-4f64..1e3) {
        let alpha = alpha_from_beta(beta).unwrap();
        let (lo, hi) = beta_from_alpha(alpha).unwrap();
        prop_assert!((lo * hi - 2.0).abs() < 1e-9);
        let back = if beta <= 2f64.sqrt() { lo } else { hi };
        prop_assert!((back - beta).abs() <= 1e-9 * beta.max(1.0));
    }

    #[test]
    fn beta_star_grows_with_the_spectral_gap(k in 0.1f64..5.0, lambda in 0.1f64..5.0) {
        let a = find_beta_star(&DesignInputs::new(lambda, k).unwrap(), DEFAULT_TOL).unwrap().value;
        let b = find_beta_star(&DesignInputs::new(2.0 * lambda, k).unwrap(), DEFAULT_TOL).unwrap().value;
        prop_assert!(b >= a * (1.0 - 1e-9));
    }
}

#[test]
fn alpha_below_two_root_two_has_no_beta() {
    assert!(beta_from_alpha(2.8).is_err());
    assert!(beta_from_alpha(2.0 * 2f64.sqrt()).is_ok());
}
