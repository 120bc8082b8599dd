use derangement_core::chains::{
    cycle_statistics, feller_path_probability_closed, marginal_table, path_probability, transition_matrix, ChainKind,
    ChainWord, PreparedChain,
};
use derangement_core::coupling::{
    derangement_cycle_types, erase11, gamma_n, joint_cycle_counts_x, k_distribution, pgf_k, CountKind, EraseHorizon,
    GammaMethod,
};
use derangement_core::oracle::{compare_laws, conditional_law, enumerate_delta, enumerate_feller, exact_law};
use derangement_core::{DistTable, PSequence, TailRule, ThetaSequence};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_theta(rng: &mut ChaCha8Rng, len: usize) -> ThetaSequence {
    let vals = (0..len).map(|_| rng.gen_range(0.05..4.0)).collect();
    ThetaSequence::tabulated(vals, TailRule::ConstantExtend).unwrap()
}

#[test]
fn transition_rows_sum_to_one() {
    let kinds = [
        ChainKind::Eta { theta: 0.4 },
        ChainKind::EtaTilde { theta: 2.5 },
        ChainKind::X { p: PSequence::random(&mut ChaCha8Rng::seed_from_u64(1), 200, 0.01, 0.99).unwrap() },
        ChainKind::Y { theta: ThetaSequence::holst(1.0, 2.0, 1.5).unwrap() },
        ChainKind::XiTilde { theta: 0.3 },
        ChainKind::Signed { p: PSequence::eta(1.0).unwrap(), kappa: 0.8 },
        ChainKind::XinfPrefix { p: PSequence::eta(0.5).unwrap() },
    ];
    for kind in &kinds {
        for n in [2, 3, 17, 200] {
            for r in 1..=n {
                for row in transition_matrix(kind, r, n).unwrap() {
                    assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-14, "{kind:?} r={r} n={n}");
                }
            }
        }
    }
}

#[test]
fn sampled_law_matches_exact_law() {
    let n = 12;
    let kind = ChainKind::Eta { theta: 0.8 };
    let exact = exact_law(&kind, n).unwrap();
    let chain = PreparedChain::new(&kind, n).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let reps = 100_000;
    let mut counts = DistTable::new();
    for _ in 0..reps {
        counts.add(chain.sample(&mut rng), 1.0 / reps as f64);
    }
    let tv = compare_laws(&exact, &counts).tv;
    let sigma: f64 = exact.entries.values().map(|p| (p * (1.0 - p) / reps as f64).sqrt()).sum::<f64>() * 0.5;
    assert!(tv < 4.0 * sigma, "tv {tv} vs bound {}", 4.0 * sigma);
}

#[test]
fn feller_closed_form_matches_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for n in 1..=12 {
        let theta = random_theta(&mut rng, n);
        for w in enumerate_feller(n).unwrap() {
            let a = path_probability(&ChainKind::Y { theta: theta.clone() }, &w).unwrap();
            let b = feller_path_probability_closed(&theta, &w).unwrap();
            assert!((a - b).abs() < 1e-13, "n={n} {w}");
        }
    }
}

#[test]
fn exact_support_is_delta() {
    for n in 2..=14 {
        let law = exact_law(&ChainKind::EtaTilde { theta: 0.9 }, n).unwrap();
        let mut delta = enumerate_delta(n).unwrap();
        delta.sort();
        assert_eq!(law.support(), delta);
        law.check_normalized(1e-12).unwrap();
    }
}

#[test]
fn gamma_three_methods_random() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..20 {
        let theta = random_theta(&mut rng, 200);
        for n in [2, 3, 10, 57, 200] {
            let r = gamma_n(&theta, n, GammaMethod::Recursion).unwrap();
            let g = gamma_n(&theta, n, GammaMethod::GProduct).unwrap();
            let p = gamma_n(&theta, n, GammaMethod::PProduct).unwrap();
            assert!(((g - r) / r).abs() < 1e-12 && ((p - r) / r).abs() < 1e-12, "n={n}: {r} {g} {p}");
        }
    }
}

#[test]
fn k_law_y_matches_enumeration() {
    let theta = ThetaSequence::eta_star(1.3).unwrap();
    for n in [3, 8, 12] {
        let law = exact_law(&ChainKind::Y { theta: theta.clone() }, n).unwrap().map(|w| w.count_ones());
        let pb = k_distribution(CountKind::Y, n, &theta).unwrap();
        assert!(compare_laws(&law, &pb).max_gap < 1e-13);
    }
}

#[test]
fn pgf_identity_up_to_thirty() {
    let theta = ThetaSequence::holst(2.0, 3.0, 1.0).unwrap();
    for n in [4, 9, 18, 30] {
        let law = k_distribution(CountKind::X, n, &theta).unwrap();
        for s in [0.25f64, 0.5, 1.0, 1.5, 2.0] {
            let direct = law.expect(|k| s.powi(*k as i32)) * gamma_n(&theta, n, GammaMethod::Recursion).unwrap();
            let rhs = gamma_n(&theta.scaled(s).unwrap(), n, GammaMethod::Recursion).unwrap()
                * pgf_k(CountKind::Y, s, n, &theta).unwrap();
            assert!((direct - rhs).abs() < 1e-10 * rhs.max(1e-300).max(1.0), "n={n} s={s}");
        }
    }
}

#[test]
fn theta_two_invariance() {
    let base = ThetaSequence::constant(0.6).unwrap();
    let other = base.clone().with_theta2(0.25).unwrap();
    for n in 4..=12 {
        assert!(compare_laws(&conditional_law(n, &base).unwrap(), &conditional_law(n, &other).unwrap()).tv < 1e-12);
        for c in derangement_cycle_types(n).unwrap() {
            let a = joint_cycle_counts_x(&c, &base).unwrap();
            let b = joint_cycle_counts_x(&c, &other).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn marginal_recursion_holds() {
    let p = PSequence::eta_tilde(0.7).unwrap();
    let n = 40;
    let m = marginal_table(&p, n).unwrap();
    for i in 1..n {
        assert_eq!(m[i], p.q(i).unwrap() * (1.0 - m[i + 1]));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn erase11_output_is_clean(tail in proptest::collection::vec(0u8..2, 1..40), n in 2usize..30) {
        let mut y = vec![1u8];
        y.extend(tail);
        let n = n.min(y.len() + 1);
        let w = erase11(&y, EraseHorizon::Finite(n)).unwrap();
        prop_assert!(!w.has_adjacent_ones());
        prop_assert_eq!(w.get(1), 1);
        prop_assert_eq!(w.n(), n);
        prop_assert!(w.is_in_delta());
    }

    #[test]
    fn cycle_statistics_consistent(tail in proptest::collection::vec(0u8..2, 0..60)) {
        let mut bits = vec![1u8];
        bits.extend(tail);
        let w = ChainWord::from_ascending(bits).unwrap();
        let s = cycle_statistics(&w).unwrap();
        let c = s.cycle_type.counts();
        prop_assert_eq!(c.iter().enumerate().map(|(i, v)| (i + 1) * v).sum::<usize>(), w.n());
        prop_assert_eq!(c.iter().sum::<usize>(), s.k);
        prop_assert_eq!(s.k, w.count_ones());
    }
}
