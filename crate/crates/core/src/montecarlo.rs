//! Seed-deterministic parallel Monte Carlo: plain estimates, the CLT
//! diagnostic for K_n and the GEM diagnostic for ordered cycle fractions.
//!
//! Replicate r of a run with seed s draws from `ChaCha8Rng::seed_from_u64(substream_seed(s, r))`.
//! Replicates are evaluated in parallel and collected in index order, so the
//! report does not depend on the number of worker threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chains::{cycle_statistics, ChainKind, ChainWord, PreparedChain};
use crate::error::{Error, Result};
use crate::numerics::{normal_cdf, pairwise_sum};
use crate::params::{PSequence, ThetaSequence};
use crate::signed_stats::signed_circle_orientations;

/// Below this many replicates the asymptotic KS p-value is flagged.
pub const KS_RELIABLE_REPS: usize = 500;

/// SplitMix64 finalizer applied to seed ⊕ (r+1)·0x9E3779B97F4A7C15.
pub fn substream_seed(seed: u64, replicate: u64) -> u64 {
    let mut z = seed ^ replicate.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn substream(seed: u64, replicate: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(substream_seed(seed, replicate))
}

/// Evaluates `f` on replicates 0..reps in parallel, returning values in order.
pub fn replicate<T: Send>(reps: usize, seed: u64, f: impl Fn(&mut ChaCha8Rng) -> T + Sync) -> Vec<T> {
    (0..reps).into_par_iter().map(|r| f(&mut substream(seed, r as u64))).collect()
}

/// Statistics that [`estimate`] can average.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "statistic", rename_all = "snake_case")]
pub enum Statistic {
    /// Number of cycles K_n.
    K,
    /// Number of j-cycles.
    Cj { j: usize },
    /// Length of the first (top) cycle.
    FirstCycle,
    /// Number of circles with exactly j children looking in (signed kinds).
    CStar { j: usize },
    /// Number of children looking in (signed kinds).
    LooksIn,
}

impl Statistic {
    fn needs_signs(self) -> bool {
        matches!(self, Statistic::CStar { .. } | Statistic::LooksIn)
    }
}

/// A Monte Carlo summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub statistic: String,
    pub reps: usize,
    pub mean: f64,
    pub std_error: f64,
    pub ks_statistic: Option<f64>,
    pub ks_p_value: Option<f64>,
    pub ks_reliable: Option<bool>,
    pub seed: u64,
    pub parameters: serde_json::Value,
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = pairwise_sum(xs) / n;
    let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&dev) / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn word_statistic(stat: Statistic, w: &ChainWord) -> Result<f64> {
    Ok(match stat {
        Statistic::K => w.count_ones() as f64,
        Statistic::Cj { j } => cycle_statistics(w)?.cycle_type.count(j) as f64,
        Statistic::FirstCycle => cycle_statistics(w)?.lengths[0] as f64,
        Statistic::CStar { .. } | Statistic::LooksIn => unreachable!("signed statistics use signed words"),
    })
}

/// Mean and standard error of a statistic over `reps` independent paths.
pub fn estimate(stat: Statistic, kind: &ChainKind, n: usize, reps: usize, seed: u64) -> Result<EstimateReport> {
    if reps < 2 {
        return Err(Error::invalid("estimate needs reps >= 2"));
    }
    let chain = PreparedChain::new(kind, n)?;
    let values: Vec<Result<f64>> = replicate(reps, seed, |rng| {
        if stat.needs_signs() {
            let w = chain.sample_signed(rng);
            let circles = signed_circle_orientations(&w)?;
            Ok(match stat {
                Statistic::CStar { j } => circles.iter().filter(|c| c.1 == j).count() as f64,
                _ => circles.iter().map(|c| c.1).sum::<usize>() as f64,
            })
        } else {
            word_statistic(stat, &chain.sample(rng))
        }
    });
    let values = values.into_iter().collect::<Result<Vec<f64>>>()?;
    let (mean, std_error) = mean_and_se(&values);
    Ok(EstimateReport {
        statistic: format!("{stat:?}"),
        reps,
        mean,
        std_error,
        ks_statistic: None,
        ks_p_value: None,
        ks_reliable: None,
        seed,
        parameters: serde_json::json!({ "kind": kind, "n": n }),
    })
}

/// Runs `f` inside a rayon pool with a fixed number of threads.
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Asymptotic Kolmogorov tail Q(λ) = 2 Σ (−1)^{j−1} e^{−2j²λ²}.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=100 {
        let jf = j as f64;
        let term = sign * (-2.0 * jf * jf * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-16 * sum.abs().max(1e-300) {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample KS statistic against a continuous CDF.
pub fn ks_statistic(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in xs.iter().enumerate() {
        let f = cdf(*x);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    d
}

/// Asymptotic p-value with the usual (√N + 0.12 + 0.11/√N) correction.
pub fn ks_p_value(d: f64, effective_n: f64) -> f64 {
    let s = effective_n.sqrt();
    kolmogorov_q((s + 0.12 + 0.11 / s) * d)
}

/// Two-sample KS statistic.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut xa = a.to_vec();
    let mut xb = b.to_vec();
    xa.sort_by(f64::total_cmp);
    xb.sort_by(f64::total_cmp);
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < xa.len() && j < xb.len() {
        let x = xa[i].min(xb[j]);
        while i < xa.len() && xa[i] <= x {
            i += 1;
        }
        while j < xb.len() && xb[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Centering used by the CLT diagnostic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "centering", rename_all = "snake_case")]
pub enum CltCentering {
    /// (K_n − q̄_n)/√q̄_n with q̄_n = Σ q_i.
    QBar,
    /// (K_n − θ log n)/√(θ log n).
    ThetaLogN { theta: f64 },
}

/// The CLT diagnostic with its inputs and the standardized-sample summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CltReport {
    pub report: EstimateReport,
    pub q_bar: f64,
    pub q_bar2: f64,
    /// (q̿_n)²/q̄_n.
    pub precondition_ratio: f64,
    pub center: f64,
    pub scale: f64,
    pub standardized_mean: f64,
    pub standardized_var: f64,
}

/// Samples K_n, standardizes it and runs a one-sample KS test against the
/// standard normal.
pub fn clt_diagnostic(p: &PSequence, n: usize, reps: usize, seed: u64, centering: CltCentering) -> Result<CltReport> {
    if reps < 2 {
        return Err(Error::invalid("clt_diagnostic needs reps >= 2"));
    }
    let t = p.table(n)?;
    let q_bar = pairwise_sum(&t.q[1..]);
    let sq: Vec<f64> = t.q[1..].iter().map(|q| q * q).collect();
    let q_bar2 = pairwise_sum(&sq);
    let (center, var) = match centering {
        CltCentering::QBar => (q_bar, q_bar),
        CltCentering::ThetaLogN { theta } => {
            let c = theta * (n as f64).ln();
            (c, c)
        }
    };
    let scale = var.sqrt();
    let chain = PreparedChain::new(&ChainKind::X { p: p.clone() }, n)?;
    let ks: Vec<f64> = replicate(reps, seed, |rng| chain.sample(rng).count_ones() as f64);
    let z: Vec<f64> = ks.iter().map(|k| (k - center) / scale).collect();
    let (mean, se) = mean_and_se(&ks);
    let (zm, zse) = mean_and_se(&z);
    let d = ks_statistic(&z, normal_cdf);
    let report = EstimateReport {
        statistic: "K_n".into(),
        reps,
        mean,
        std_error: se,
        ks_statistic: Some(d),
        ks_p_value: Some(ks_p_value(d, reps as f64)),
        ks_reliable: Some(reps >= KS_RELIABLE_REPS),
        seed,
        parameters: serde_json::json!({ "p": p.to_string(), "n": n, "centering": centering }),
    };
    Ok(CltReport {
        report,
        q_bar,
        q_bar2,
        precondition_ratio: q_bar2 * q_bar2 / q_bar,
        center,
        scale,
        standardized_mean: zm,
        standardized_var: zse * zse * reps as f64,
    })
}

/// The GEM diagnostic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GemReport {
    /// A_1/n against Beta(1, θ).
    pub first: EstimateReport,
    /// A_2/(n − A_1) against Beta(1, θ), over replicates with K ≥ 2.
    pub second: EstimateReport,
    /// Two-sample KS of A_1/n against stick-breaking draws.
    pub two_sample_ks: f64,
    pub two_sample_p: f64,
    /// P(A_1/n ∈ [0.4,0.6], A_2/n ∈ [0.1,0.3]) from the chain and from sticks.
    pub joint_chain: f64,
    pub joint_oracle: f64,
    pub joint_sigma: f64,
}

impl GemReport {
    /// |joint_chain − joint_oracle| in units of the combined standard error.
    pub fn joint_z(&self) -> f64 {
        (self.joint_chain - self.joint_oracle).abs() / self.joint_sigma
    }
}

/// Stick-breaking draws (V_1, (1−V_1)V_2) with V_i ~ Beta(1, θ).
pub fn stick_breaking(theta: f64, reps: usize, seed: u64) -> Result<Vec<(f64, f64)>> {
    let beta = Beta::new(1.0, theta).map_err(|e| Error::invalid(format!("Beta(1, {theta}): {e}")))?;
    Ok(replicate(reps, seed, |rng| {
        let v1 = beta.sample(rng);
        let v2 = beta.sample(rng);
        (v1, (1.0 - v1) * v2)
    }))
}

/// Ordered cycle fractions of the Feller coupling with θ_n → θ, tested
/// against GEM(θ).
pub fn gem_diagnostic(theta: &ThetaSequence, n: usize, reps: usize, seed: u64) -> Result<GemReport> {
    let limit = theta.limit().ok_or_else(|| Error::ConditionNotMet {
        condition: "theta_n converges",
        detail: format!("{theta} has no finite limit"),
    })?;
    if reps < 2 {
        return Err(Error::invalid("gem_diagnostic needs reps >= 2"));
    }
    let chain = PreparedChain::new(&ChainKind::Y { theta: theta.clone() }, n)?;
    let draws: Vec<(usize, Option<usize>)> = replicate(reps, seed, |rng| {
        let w = chain.sample(rng);
        let ones = w.ones_desc();
        let a1 = n + 1 - ones[0];
        let a2 = ones.get(1).map(|b| ones[0] - b);
        (a1, a2)
    });
    let nf = n as f64;
    let cdf = |x: f64| if x <= 0.0 { 0.0 } else if x >= 1.0 { 1.0 } else { 1.0 - (1.0 - x).powf(limit) };
    let x1: Vec<f64> = draws.iter().map(|d| d.0 as f64 / nf).collect();
    let x2: Vec<f64> = draws.iter().filter_map(|d| d.1.map(|a2| a2 as f64 / (n - d.0) as f64)).collect();
    let summarize = |name: &str, xs: &[f64]| {
        let d = ks_statistic(xs, cdf);
        let (mean, se) = if xs.len() >= 2 { mean_and_se(xs) } else { (f64::NAN, f64::NAN) };
        EstimateReport {
            statistic: name.into(),
            reps: xs.len(),
            mean,
            std_error: se,
            ks_statistic: Some(d),
            ks_p_value: Some(ks_p_value(d, xs.len() as f64)),
            ks_reliable: Some(xs.len() >= KS_RELIABLE_REPS),
            seed,
            parameters: serde_json::json!({ "theta": theta.to_string(), "n": n }),
        }
    };
    let first = summarize("A_1/n", &x1);
    let second = summarize("A_2/(n-A_1)", &x2);
    let sticks = stick_breaking(limit, reps.max(KS_RELIABLE_REPS) * 10, seed ^ 0x5EED_0F_57_1C_C5)?;
    let s1: Vec<f64> = sticks.iter().map(|s| s.0).collect();
    let d2 = ks_two_sample(&x1, &s1);
    let ne = (x1.len() * s1.len()) as f64 / (x1.len() + s1.len()) as f64;
    let in_box = |a: f64, b: f64| (0.4..=0.6).contains(&a) && (0.1..=0.3).contains(&b);
    let joint_chain = draws
        .iter()
        .filter(|d| d.1.is_some_and(|a2| in_box(d.0 as f64 / nf, a2 as f64 / nf)))
        .count() as f64
        / reps as f64;
    let joint_oracle = sticks.iter().filter(|s| in_box(s.0, s.1)).count() as f64 / sticks.len() as f64;
    let var = |p: f64, m: usize| p * (1.0 - p) / m as f64;
    let joint_sigma = (var(joint_chain, reps) + var(joint_oracle, sticks.len())).sqrt().max(1e-12);
    Ok(GemReport {
        first,
        second,
        two_sample_ks: d2,
        two_sample_p: ks_p_value(d2, ne),
        joint_chain,
        joint_oracle,
        joint_sigma,
    })
}

/// Monte Carlo estimate of P(A*_1 = a*_1, …, A*_k = a*_k, K > k) for the
/// Feller coupling with binomial(κ) orientations.
pub fn ordered_star_estimate(
    a_star: &[usize],
    n: usize,
    theta: &ThetaSequence,
    kappa: f64,
    reps: usize,
    seed: u64,
) -> Result<EstimateReport> {
    if reps < 2 {
        return Err(Error::invalid("ordered_star_estimate needs reps >= 2"));
    }
    if !(0.0..=1.0).contains(&kappa) {
        return Err(Error::invalid(format!("kappa must lie in [0,1], got {kappa}")));
    }
    let chain = PreparedChain::new(&ChainKind::Y { theta: theta.clone() }, n)?;
    let hits: Vec<Result<f64>> = replicate(reps, seed, |rng| {
        let w = chain.sample(rng);
        let stats = cycle_statistics(&w)?;
        if stats.k <= a_star.len() {
            return Ok(0.0);
        }
        for (len, target) in stats.lengths.iter().zip(a_star) {
            let extra = if *len > 1 {
                Binomial::new((*len - 1) as u64, kappa).map_err(|e| Error::invalid(e.to_string()))?.sample(rng)
            } else {
                0
            };
            if extra as usize + 1 != *target {
                return Ok(0.0);
            }
        }
        Ok(1.0)
    });
    let hits = hits.into_iter().collect::<Result<Vec<f64>>>()?;
    let (mean, std_error) = mean_and_se(&hits);
    Ok(EstimateReport {
        statistic: "ordered_star".into(),
        reps,
        mean,
        std_error,
        ks_statistic: None,
        ks_p_value: None,
        ks_reliable: None,
        seed,
        parameters: serde_json::json!({ "a_star": a_star, "n": n, "theta": theta.to_string(), "kappa": kappa }),
    })
}

/// A uniform draw in [0, 1) from a replicate stream; exposed for tests of
/// stream independence.
pub fn first_uniform(seed: u64, replicate: u64) -> f64 {
    substream(seed, replicate).gen()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn substreams_differ() {
        assert_ne!(substream_seed(1, 0), substream_seed(1, 1));
        assert_ne!(substream_seed(1, 0), substream_seed(2, 0));
        assert_ne!(first_uniform(5, 0), first_uniform(5, 1));
    }

    #[test]
    fn kolmogorov_values() {
        assert!((kolmogorov_q(1.0) - 0.26999967).abs() < 1e-7);
        assert!((kolmogorov_q(1.36) - 0.0494).abs() < 1e-3);
        assert_eq!(kolmogorov_q(0.0), 1.0);
    }

    #[test]
    fn estimate_small() {
        let r = estimate(Statistic::K, &ChainKind::Eta { theta: 1.0 }, 4, 20_000, 11).unwrap();
        assert!((r.mean - 4.0 / 3.0).abs() < 4.0 * r.std_error);
        let c = estimate(Statistic::Cj { j: 2 }, &ChainKind::Eta { theta: 1.0 }, 4, 20_000, 12).unwrap();
        assert!((c.mean - 2.0 / 3.0).abs() < 4.0 * c.std_error);
    }

    #[test]
    fn thread_independence() {
        let kind = ChainKind::Eta { theta: 0.7 };
        let a = with_threads(1, || estimate(Statistic::K, &kind, 30, 3000, 9).unwrap()).unwrap();
        let b = with_threads(4, || estimate(Statistic::K, &kind, 30, 3000, 9).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn degenerate_clt_flagged() {
        let p = PSequence::eta(1.0).unwrap();
        let r = clt_diagnostic(&p, 50, 2, 1, CltCentering::QBar).unwrap();
        assert_eq!(r.report.ks_reliable, Some(false));
    }

    #[test]
    fn two_sample_identical() {
        let a = vec![0.1, 0.2, 0.3];
        assert_eq!(ks_two_sample(&a, &a), 0.0);
        assert_eq!(ks_two_sample(&[0.0, 0.1], &[0.5, 0.6]), 1.0);
    }
}
