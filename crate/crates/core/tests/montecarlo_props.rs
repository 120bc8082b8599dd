use derangement_core::chains::ChainKind;
use derangement_core::moments::mean_k_eta;
use derangement_core::montecarlo::{clt_diagnostic, estimate, gem_diagnostic, with_threads, CltCentering, Statistic};
use derangement_core::oracle::{dp_moments, MomentTarget};
use derangement_core::{PSequence, ThetaSequence};

#[test]
fn report_is_thread_count_independent() {
    let kind = ChainKind::Signed { p: PSequence::eta(0.7).unwrap(), kappa: 0.4 };
    let runs: Vec<_> = [1, 2, 5]
        .into_iter()
        .map(|t| with_threads(t, || estimate(Statistic::CStar { j: 2 }, &kind, 25, 2000, 77).unwrap()).unwrap())
        .collect();
    assert_eq!(runs[0], runs[1]);
    assert_eq!(runs[0], runs[2]);
}

#[test]
fn estimator_consistency_over_seeds() {
    let kind = ChainKind::Eta { theta: 1.0 };
    let n = 10;
    let exact_k = dp_moments(&kind, n, MomentTarget::MeanK).unwrap();
    let exact_c3 = dp_moments(&kind, n, MomentTarget::MeanCj { j: 3 }).unwrap();
    let mut misses = 0;
    for seed in 0..100 {
        let k = estimate(Statistic::K, &kind, n, 1000, seed).unwrap();
        let c = estimate(Statistic::Cj { j: 3 }, &kind, n, 1000, seed + 1000).unwrap();
        misses += usize::from((k.mean - exact_k).abs() >= 4.0 * k.std_error);
        misses += usize::from((c.mean - exact_c3).abs() >= 4.0 * c.std_error);
    }
    assert!(misses <= 2, "{misses} of 200 estimates outside 4 standard errors");
}

#[test]
fn clt_sampler_matches_exact_moments() {
    // The standardized sample is compared with the exact standardized mean and
    // variance; the literal 0/1 targets are reported by the acceptance run.
    let n = 5000;
    let p = PSequence::eta(1.0).unwrap();
    let r = clt_diagnostic(&p, n, 2000, 3, CltCentering::QBar).unwrap();
    let kind = ChainKind::Eta { theta: 1.0 };
    let exact_mean = mean_k_eta(n, 1.0).unwrap();
    let exact_var = dp_moments(&kind, n, MomentTarget::VarK).unwrap();
    assert!((r.report.mean - exact_mean).abs() < 4.0 * r.report.std_error);
    let z_var = exact_var / r.q_bar;
    // sd of a sample variance is about var·√(2/reps) for near-normal data
    assert!((r.standardized_var - z_var).abs() < 4.0 * z_var * (2.0f64 / 2000.0).sqrt());
}

#[test]
fn gem_first_stick_uniform_at_one() {
    let r = gem_diagnostic(&ThetaSequence::constant(1.0).unwrap(), 2000, 1000, 5).unwrap();
    assert!(r.first.ks_p_value.unwrap() > 0.001);
    assert!((r.first.mean - 0.5).abs() < 4.0 * r.first.std_error);
    let e = gem_diagnostic(&ThetaSequence::eta_star(0.7).unwrap(), 3000, 1000, 6).unwrap();
    assert!(e.first.ks_p_value.unwrap() > 0.001);
    assert!(e.joint_z() < 4.0);
}
