use derangement_core::chains::ChainKind;
use derangement_core::moments::{
    cov_eta, mean_cj, mean_cj_eta, mean_cj_eta_limit, mean_k, mean_k_eta_limit, second_moments, LimitMethod,
};
use derangement_core::oracle::{dp_moments, dp_pair_moments, exact_law, law_pair_moments, MomentTarget};
use derangement_core::{AccuracySpec, PSequence};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn ind(j: usize) -> impl Fn(usize) -> f64 {
    move |l| if l == j { 1.0 } else { 0.0 }
}

#[test]
fn cycle_mass_and_count_conservation() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for n in [2, 3, 7, 31, 60] {
        let p = PSequence::random(&mut rng, n, 0.05, 0.95).unwrap();
        let mass: f64 = (2..=n).map(|j| j as f64 * mean_cj(n, j, &p).unwrap()).sum();
        let count: f64 = (2..=n).map(|j| mean_cj(n, j, &p).unwrap()).sum();
        assert!((mass - n as f64).abs() < 1e-10, "n={n}");
        assert!((count - mean_k(n, &p).unwrap()).abs() < 1e-10, "n={n}");
    }
}

#[test]
fn eta_specialization() {
    for theta in [0.3, 1.0, 2.7] {
        let p = PSequence::eta(theta).unwrap();
        for n in 4..=40 {
            for j in 2..=n {
                let a = mean_cj_eta(n, j, theta).unwrap();
                let b = mean_cj(n, j, &p).unwrap();
                assert!((a - b).abs() < 1e-12, "theta={theta} n={n} j={j}: {a} {b}");
            }
        }
    }
}

#[test]
fn series_brackets_contain_integral() {
    let acc = AccuracySpec::default();
    for j in 2..=7 {
        let integral = mean_cj_eta_limit(0.5, j, LimitMethod::Integral, &acc).unwrap().value;
        for m in 1..=3 {
            let s = mean_cj_eta_limit(0.5, j, LimitMethod::Series { m }, &acc).unwrap();
            assert!((s.value - integral).abs() <= s.error_bound + 1e-8, "j={j} m={m}");
        }
    }
    let integral = mean_k_eta_limit(0.5, LimitMethod::Integral, &acc).unwrap().value;
    for m in 1..=4 {
        let s = mean_k_eta_limit(0.5, LimitMethod::Series { m }, &acc).unwrap();
        assert!((s.value - integral).abs() <= s.error_bound + 1e-8, "m={m}");
    }
}

#[test]
fn formulas_match_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for n in [4, 9, 14] {
        let p = PSequence::random(&mut rng, n, 0.05, 0.95).unwrap();
        let law = exact_law(&ChainKind::X { p: p.clone() }, n).unwrap();
        let k = law_pair_moments(&law, &|_| 1.0, &|_| 1.0).unwrap();
        assert!((k.mean_f - mean_k(n, &p).unwrap()).abs() < 1e-12);
        for j in 2..=n {
            let e = law_pair_moments(&law, &ind(j), &|_| 1.0).unwrap();
            assert!((e.mean_f - mean_cj(n, j, &p).unwrap()).abs() < 1e-12);
            assert!((e.var_f() - second_moments(n, j, &p).unwrap()).abs() < 1e-12, "n={n} j={j}");
        }
    }
}

#[test]
fn dp_matches_closed_forms() {
    let theta = 0.5;
    let kind = ChainKind::Eta { theta };
    let p = PSequence::eta(theta).unwrap();
    for n in [10, 33, 60] {
        let mk = dp_moments(&kind, n, MomentTarget::MeanK).unwrap();
        assert!((mk - mean_k(n, &p).unwrap()).abs() < 1e-12);
        for j in 2..=8 {
            let m = dp_moments(&kind, n, MomentTarget::MeanCj { j }).unwrap();
            assert!((m - mean_cj_eta(n, j, theta).unwrap()).abs() < 1e-12);
            let v = dp_moments(&kind, n, MomentTarget::VarCj { j }).unwrap();
            assert!((v - second_moments(n, j, &p).unwrap()).abs() < 1e-10);
        }
    }
}

#[test]
fn indicator_covariance_matches_display() {
    // with f, g indicators of the marginal events the DP is not applicable, so
    // the display is checked against enumeration of X_i X_j directly
    let theta = 0.9;
    let kind = ChainKind::Eta { theta };
    for n in [8, 12] {
        let law = exact_law(&kind, n).unwrap();
        for j in 4..n - 1 {
            for i in 3..j {
                let e_i = law.expect(|w| w.get(i) as f64);
                let e_j = law.expect(|w| w.get(j) as f64);
                let e_ij = law.expect(|w| (w.get(i) * w.get(j)) as f64);
                let c = cov_eta(n, i, j, theta).unwrap();
                assert!((e_ij - e_i * e_j - c).abs() < 1e-12, "n={n} i={i} j={j}");
            }
        }
    }
}

#[test]
fn dp_pair_is_symmetric() {
    let p = PSequence::eta(1.4).unwrap();
    let a = dp_pair_moments(&p, 50, &ind(3), &ind(5)).unwrap();
    let b = dp_pair_moments(&p, 50, &ind(5), &ind(3)).unwrap();
    assert!((a.cov() - b.cov()).abs() < 1e-15);
}
