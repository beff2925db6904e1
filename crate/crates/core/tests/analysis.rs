use nalgebra::Matrix2;
use ndda::analysis::{check_admissible, fit_rate, max_admissible_a, rho_e, theorem_bound};
use proptest::prelude::*;

fn direct_rho(beta: f64, l: f64, a: f64) -> f64 {
    let m = Matrix2::new(beta, a, l * (beta + 1.0), beta + l * a);
    m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

proptest! {
    #[test]
    fn rho_matches_direct_eigenvalues(beta in 0.0f64..0.99, l in 0.1f64..10.0, frac in 1e-6f64..1.0) {
        let a = frac * (beta + 1.0) / l;
        let closed = rho_e(beta, l, a).unwrap();
        prop_assert!((closed - direct_rho(beta, l, a)).abs() <= 1e-12 * closed.max(1.0));
        if closed < 1.0 {
            prop_assert!(a * l < beta + 1.0);
        }
    }

    #[test]
    fn admissibility_is_monotone(beta in 0.0f64..0.99, l in 0.1f64..10.0, frac in 1e-4f64..1.0, shrink in 0.0f64..1.0) {
        let a = frac * (beta + 1.0) / l;
        if check_admissible(beta, l, a).unwrap().admissible {
            let smaller = a * (1e-6 + shrink * (1.0 - 1e-6));
            prop_assert!(check_admissible(beta, l, smaller).unwrap().admissible);
        }
    }

    #[test]
    fn max_admissible_is_tight(beta in 0.0f64..0.99, l in 0.1f64..1000.0) {
        let a = max_admissible_a(beta, l, 1e-9).unwrap();
        prop_assert!(check_admissible(beta, l, a).unwrap().admissible);
        prop_assert!(!check_admissible(beta, l, a * 1.01).unwrap().admissible);
    }

    #[test]
    fn max_admissible_scales_inversely_with_l(beta in 0.0f64..0.99, l in 0.1f64..100.0, k in 1.5f64..10.0) {
        // ρ and the bound depend on (a, L) only through aL.
        let a1 = max_admissible_a(beta, l, 1e-12).unwrap();
        let a2 = max_admissible_a(beta, k * l, 1e-12).unwrap();
        prop_assert!((a1 * l - a2 * k * l).abs() <= 1e-9 * a1 * l);
    }
}

#[test]
fn larger_beta_allows_smaller_step() {
    let mut prev = f64::INFINITY;
    for beta in [0.0, 0.2, 0.5, 0.8, 0.95] {
        let a = max_admissible_a(beta, 1.0, 1e-10).unwrap();
        assert!(a < prev);
        prev = a;
    }
}

#[test]
fn bound_decays_like_one_over_t() {
    let b1 = theorem_bound(10, 2.0, 0.01, 1).unwrap();
    assert!((b1 - 2000.0).abs() < 1e-9);
    assert!((theorem_bound(10, 2.0, 0.01, 100).unwrap() - 20.0).abs() < 1e-12);
    assert!(theorem_bound(10, 2.0, 0.01, 0).is_err());
}

#[test]
fn fit_recovers_power_laws() {
    for slope in [-0.5, -1.0, -2.0] {
        let s: Vec<(f64, f64)> = (1..=10_000).map(|t| (t as f64, 3.0 * (t as f64).powf(slope))).collect();
        let fit = fit_rate(&s, (100.0, 10_000.0)).unwrap();
        assert!((fit.slope - slope).abs() < 1e-10);
        assert!((fit.intercept - 3.0f64.ln()).abs() < 1e-9);
    }
}
