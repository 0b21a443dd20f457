//! Cross-module invariants and property tests.

use counter_race::bounds::{
    b_star, finite_upper_bound, h_dz, lower_bound_constant, lower_bound_optimize, lower_envelope_db,
};
use counter_race::config_algebra::{
    all_configurations, drift_by_levels, drift_functional, worst_case_reduce, Configuration, TestFunction,
};
use counter_race::dynamics::{
    default_burn_in, empirical_tails, one_step_distribution, simulate_speed, BatchMeans, GapState, Simulator,
};
use counter_race::exact_small::solve_n4;
use counter_race::lp::{build_lp, build_lp_restricted, solve_lp, LpStatus};
use counter_race::meanfield::{integrate, phi2_quadrature};
use counter_race::{Rational, Scalar};
use num_bigint::BigInt;
use num_traits::{One, Zero};
use proptest::prelude::*;

fn q(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

fn configuration() -> impl Strategy<Value = Configuration> {
    (3usize..=12)
        .prop_flat_map(|n| (Just(n), proptest::collection::vec(any::<bool>(), n - 2)))
        .prop_map(|(n, cuts)| {
            // a cut after counter i (i >= 2) starts a new level
            let mut alpha = vec![2];
            for (i, cut) in cuts.into_iter().enumerate() {
                if cut && i + 2 < n {
                    alpha.push(1);
                } else {
                    *alpha.last_mut().unwrap() += 1;
                }
            }
            Configuration::new(alpha).unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn one_step_law_is_a_distribution(gaps in proptest::collection::vec(0u64..=3, 1..=6)) {
        let x = GapState::new(gaps);
        let law = one_step_distribution(&x);
        let total: Rational = law.iter().map(|(_, p)| p.clone()).sum();
        prop_assert_eq!(total, Rational::one());
        for (y, p) in &law {
            prop_assert!(p > &Rational::zero());
            let moved = y.gaps.iter().zip(&x.gaps).filter(|(a, b)| a != b).count();
            prop_assert!(moved <= 2);
            for (a, b) in y.gaps.iter().zip(&x.gaps) {
                prop_assert!(a.abs_diff(*b) <= 1);
            }
        }
    }

    #[test]
    fn drift_routes_agree(c in configuration(), a in -5i64..5, b in -5i64..5, v in 0i64..3) {
        let h = TestFunction::quadratic(c.n(), q(a, 7), q(b, 3));
        let v = Rational::from_integer(v.into());
        prop_assert_eq!(drift_functional(&c, &h, &v).unwrap(), drift_by_levels(&c, &h, &v).unwrap());
    }

    #[test]
    fn simulation_is_bitwise_reproducible(n in 2usize..12, seed in any::<u64>()) {
        let a = simulate_speed(n, 5_000, 100, seed).unwrap();
        let b = simulate_speed(n, 5_000, 100, seed).unwrap();
        prop_assert_eq!(a.mean.to_bits(), b.mean.to_bits());
        prop_assert_eq!(a.stderr.to_bits(), b.stderr.to_bits());
    }
}

#[test]
fn n3_empty_gap_frequency_is_one_quarter() {
    let steps = 2_000_000u64;
    let mut sim = Simulator::new(3, 11).unwrap();
    for _ in 0..default_burn_in(3) {
        sim.step();
    }
    let mut acc = BatchMeans::new(steps, 100);
    for _ in 0..steps {
        sim.step();
        acc.push(if sim.state().gap_state().gaps[0] == 0 { 1.0 } else { 0.0 });
    }
    assert!((acc.mean() - 0.25).abs() < 3.0 * acc.stderr(), "{} +- {}", acc.mean(), acc.stderr());
}

#[test]
fn n4_speed_is_stable_in_the_box() {
    let tol = 1e-12;
    let a = solve_n4(100, tol).unwrap();
    let b = solve_n4(200, tol).unwrap();
    assert!((a.speed - b.speed).abs() < 10.0 * tol, "{} vs {}", a.speed, b.speed);
    assert!((b.pi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn soundness_sandwich() {
    let lower = lower_bound_constant();
    for n in 5..=16 {
        let e = simulate_speed(n, 2_000_000, default_burn_in(n), 7 + n as u64).unwrap();
        let upper = finite_upper_bound(n).unwrap().value;
        assert!(upper >= e.mean - 3.0 * e.stderr, "N={n}: {upper} < {}", e.mean);
        assert!(lower <= e.mean + 3.0 * e.stderr, "N={n}: {lower} > {}", e.mean);
    }
}

#[test]
fn finite_bound_approaches_the_asymptotic_constant() {
    let limit = 34.0 / 27.0;
    let gaps: Vec<f64> = (20..=100)
        .map(|n| (finite_upper_bound(n).unwrap().value - limit).abs())
        .collect();
    assert!(*gaps.last().unwrap() < 0.02);
    // monotone within each residue class of N mod 3
    for r in 0..3 {
        let class: Vec<f64> = gaps.iter().skip(r).step_by(3).copied().collect();
        assert!(class.windows(2).all(|w| w[1] <= w[0]), "residue {r}: {class:?}");
    }
}

#[test]
fn lower_bound_is_stationary() {
    let r = lower_bound_optimize(5_000).unwrap();
    let b = b_star();
    assert!(h_dz(b, 2.0 * (3.0 * b - 1.0)).abs() < 1e-8);
    assert!(lower_envelope_db(b).abs() < 1e-8);
    assert!((r.report.value - lower_bound_constant()).abs() < 1e-9);
}

#[test]
fn restricted_lp_never_exceeds_the_full_lp() {
    for n in 5..=12 {
        let full = solve_lp(&build_lp(n).unwrap()).unwrap();
        let restricted =
            solve_lp(&build_lp_restricted(n, worst_case_reduce(n, &q(1, 2)).unwrap()).unwrap()).unwrap();
        match restricted.status {
            LpStatus::Optimal => assert!(restricted.exact_bound.unwrap() <= full.exact_bound.clone().unwrap()),
            LpStatus::Unbounded => {}
            LpStatus::Infeasible => panic!("N={n}: restricted LP infeasible"),
        }
    }
}

#[test]
fn lp_vertex_is_tight_somewhere_on_every_size() {
    for n in 4..=10 {
        let s = solve_lp(&build_lp(n).unwrap()).unwrap();
        assert_eq!(s.violations, 0);
        assert!(s.active_set.len() >= 2, "N={n}");
        assert_eq!(s.h_values.len(), n - 2);
    }
    assert_eq!(all_configurations(10).len(), 256);
}

/// `phi_3(t) = int_0^t phi_2(s)^2 exp(-int_s^t phi_2) ds`, with `phi_2` from
/// its own quadrature oracle. Cumulative integrals use Simpson's rule on
/// node pairs, so they are available at even nodes; the outer integral is
/// Simpson's rule over those.
fn phi3_oracle(t: f64) -> f64 {
    let m = 2000;
    let h = t / m as f64;
    let phi2: Vec<f64> = (0..=m).map(|i| phi2_quadrature(i as f64 * h, 1e-13)).collect();
    let mut cum = vec![0.0];
    for i in 0..m / 2 {
        let last = *cum.last().unwrap();
        cum.push(last + h / 3.0 * (phi2[2 * i] + 4.0 * phi2[2 * i + 1] + phi2[2 * i + 2]));
    }
    let total = cum[m / 2];
    let g = |k: usize| phi2[2 * k] * phi2[2 * k] * (cum[k] - total).exp();
    (0..m / 4)
        .map(|i| 2.0 * h / 3.0 * (g(2 * i) + 4.0 * g(2 * i + 1) + g(2 * i + 2)))
        .sum()
}

#[test]
fn third_level_matches_integral_recursion() {
    let s = integrate(5, 4.0, 1e-3).unwrap();
    for t in [1.0f64, 2.0, 4.0] {
        let i = s.times.iter().position(|&u| (u - t).abs() < 1e-9).unwrap();
        let oracle = phi3_oracle(t);
        assert!((s.phi[i][3] - oracle).abs() < 1e-6, "t={t}: {} vs {oracle}", s.phi[i][3]);
    }
}

#[test]
fn particles_follow_the_mean_field() {
    let times = [0.5, 1.0, 2.0, 3.0, 4.0];
    let m = empirical_tails(2000, &times, 6, 3).unwrap();
    let s = integrate(8, 8.0, 1e-3).unwrap();
    for &t in &times {
        for k in 1..=6 {
            // psi_k(t) = phi_k(2t)
            let mf = s.at(k, 2.0 * t).unwrap();
            let emp = m.get(k, t).unwrap();
            assert!((mf - emp).abs() < 0.02, "k={k} t={t}: {emp} vs {mf}");
        }
    }
}

#[test]
fn front_spacing_settles_and_profiles_collapse() {
    let s = integrate(200, 400.0, 1e-2).unwrap();
    let w = counter_race::meanfield::wave_speed(&s, (100, 200)).unwrap();
    assert!(w.spacing_drift < 1e-3);
    let c = w.speed_phi;
    let mut worst: f64 = 0.0;
    for x in (-80..=80).map(|i| i as f64 * 0.05) {
        let vals: Vec<f64> = [60usize, 80, 100]
            .iter()
            .map(|&k| s.at(k, (k as f64 + x) / c).unwrap())
            .collect();
        let spread = vals.iter().cloned().fold(f64::MIN, f64::max) - vals.iter().cloned().fold(f64::MAX, f64::min);
        worst = worst.max(spread);
    }
    assert!(worst < 0.01, "profile spread {worst}");
}

#[test]
fn float_and_exact_drift_agree() {
    let c = Configuration::new(vec![3, 2, 1, 1]).unwrap();
    let exact = drift_functional(&c, &TestFunction::quadratic(7, q(-1, 10), q(1, 2)), &Rational::one()).unwrap();
    let float = drift_functional(&c, &TestFunction::quadratic(7, -0.1f64, 0.5), &1.0).unwrap();
    assert!((exact.to_f64_lossy() - float).abs() < 1e-12);
}
