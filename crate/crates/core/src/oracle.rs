//! Brute-force ground truth: enumeration of Δ_n, exact laws by exhaustive
//! path probabilities, the conditioned and pushed-forward Feller laws, law
//! comparison, and a distance-state DP for cycle-count moments. Nothing here
//! uses the closed-form moment or coupling formulas it is meant to check.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chains::{cycle_statistics, ChainKind, ChainWord, PreparedChain};
use crate::coupling::{erase11, pgf_k, CountKind, EraseHorizon};
use crate::dist::DistTable;
use crate::error::{Error, Result};
use crate::limitchain::{phi, tv_prefix_direct};
use crate::moments::second_moments;
use crate::numerics::{AccuracySpec, CompensatedSum};
use crate::params::{PSequence, ThetaSequence};

/// Largest n for Δ_n-sized enumerations.
pub const DELTA_LIMIT: usize = 30;
/// Largest n for enumerations of the full Feller-coupling word space.
pub const FULL_LIMIT: usize = 22;
/// Largest n accepted by the DP moment engine.
pub const DP_LIMIT: usize = 5000;
/// Largest n for the all-pairs cycle-count DP.
pub const DP_MATRIX_LIMIT: usize = 200;

fn fib_count(n: usize, with_top_zero: bool) -> u128 {
    // words of length n with w_1 = 1 and no 11 (optionally w_n = 0)
    let (mut end0, mut end1): (u128, u128) = (0, 1);
    for _ in 1..n {
        let next0 = end0 + end1;
        end1 = end0;
        end0 = next0;
    }
    if with_top_zero {
        end0
    } else {
        end0 + end1
    }
}

fn guard(what: &'static str, n: usize, limit: usize, count: u128) -> Result<()> {
    if n > limit {
        return Err(Error::Guard { what, n, limit, count });
    }
    Ok(())
}

fn no11_words(n: usize, top_zero: bool) -> Vec<ChainWord> {
    let mut out = Vec::new();
    let mut bits = vec![0u8; n];
    bits[0] = 1;
    fn rec(bits: &mut Vec<u8>, i: usize, top_zero: bool, out: &mut Vec<ChainWord>) {
        let n = bits.len();
        if i == n {
            if !(top_zero && bits[n - 1] == 1) {
                out.push(ChainWord::from_ascending(bits.clone()).expect("0/1 word"));
            }
            return;
        }
        bits[i] = 0;
        rec(bits, i + 1, top_zero, out);
        if bits[i - 1] == 0 {
            bits[i] = 1;
            rec(bits, i + 1, top_zero, out);
            bits[i] = 0;
        }
    }
    if n == 1 {
        if !top_zero {
            out.push(ChainWord::from_ascending(bits).expect("0/1 word"));
        }
        return out;
    }
    rec(&mut bits, 1, top_zero, &mut out);
    // lexicographic in the displayed order w_n … w_1
    out.sort_by(|a, b| a.ascending().iter().rev().cmp(b.ascending().iter().rev()));
    out
}

/// All words of Δ_n (w_1 = 1, w_n = 0, no adjacent 1s), in lexicographic
/// order of the displayed string w_n … w_1.
pub fn enumerate_delta(n: usize) -> Result<Vec<ChainWord>> {
    if n == 0 {
        return Err(Error::invalid("enumerate_delta needs n >= 1"));
    }
    guard("enumerate_delta", n, DELTA_LIMIT, fib_count(n, true))?;
    Ok(no11_words(n, true))
}

/// All words with w_1 = 1 and no adjacent 1s (w_n free): the support of
/// the X^∞ prefix of length n.
pub fn enumerate_no11(n: usize) -> Result<Vec<ChainWord>> {
    if n == 0 {
        return Err(Error::invalid("enumerate_no11 needs n >= 1"));
    }
    guard("enumerate_no11", n, DELTA_LIMIT, fib_count(n, false))?;
    Ok(no11_words(n, false))
}

/// All 2^{n−1} words with w_1 = 1.
pub fn enumerate_feller(n: usize) -> Result<Vec<ChainWord>> {
    if n == 0 {
        return Err(Error::invalid("enumerate_feller needs n >= 1"));
    }
    guard("enumerate_feller", n, FULL_LIMIT, 1u128 << (n - 1))?;
    Ok((0..(1u64 << (n - 1)))
        .map(|mask| {
            let bits = (0..n).map(|i| if i == 0 { 1 } else { ((mask >> (i - 1)) & 1) as u8 }).collect();
            ChainWord::from_ascending(bits).expect("0/1 word")
        })
        .collect())
}

fn law_over(chain: &PreparedChain, words: Vec<ChainWord>) -> Result<DistTable<ChainWord>> {
    let probs: Vec<Result<f64>> = words.par_iter().map(|w| chain.path_probability(w)).collect();
    let mut law = DistTable::new();
    for (w, p) in words.into_iter().zip(probs) {
        law.add(w, p?);
    }
    Ok(law)
}

/// Exact law of the word of length n under a kind (signed kinds are
/// projected onto their unsigned word).
pub fn exact_law(kind: &ChainKind, n: usize) -> Result<DistTable<ChainWord>> {
    let kind = match kind {
        ChainKind::Signed { p, .. } => ChainKind::X { p: p.clone() },
        k => k.clone(),
    };
    let words = match kind {
        ChainKind::Y { .. } | ChainKind::XiTilde { .. } => enumerate_feller(n)?,
        ChainKind::XinfPrefix { .. } => enumerate_no11(n)?,
        _ => enumerate_delta(n)?,
    };
    let chain = PreparedChain::new(&kind, n)?;
    law_over(&chain, words)
}

/// The Feller-coupling law restricted to Δ_n and renormalized by its mass,
/// which is γ_n.
pub fn conditional_law(n: usize, theta: &ThetaSequence) -> Result<DistTable<ChainWord>> {
    guard("conditional_law", n, FULL_LIMIT, 1u128 << (n.max(1) - 1))?;
    let chain = PreparedChain::new(&ChainKind::Y { theta: theta.clone() }, n)?;
    let restricted = law_over(&chain, enumerate_delta(n)?)?;
    restricted.normalized()
}

/// γ_n(θ) as the Feller-coupling mass of Δ_n, summed over enumerated words.
pub fn gamma_enumerated(n: usize, theta: &ThetaSequence) -> Result<f64> {
    let chain = PreparedChain::new(&ChainKind::Y { theta: theta.clone() }, n)?;
    Ok(law_over(&chain, enumerate_delta(n)?)?.total())
}

/// χ_n pushed through the law of Y_1..Y_{n−1}; Φ_j = 0 for j ≥ n, so the
/// Feller words of length n−1 are the whole input.
pub fn pushforward_law(n: usize, theta: &ThetaSequence) -> Result<DistTable<ChainWord>> {
    if n < 2 {
        return Err(Error::invalid("pushforward_law needs n >= 2"));
    }
    guard("pushforward_law", n, FULL_LIMIT, 1u128 << (n - 2))?;
    let chain = PreparedChain::new(&ChainKind::Y { theta: theta.clone() }, n - 1)?;
    let words = enumerate_feller(n - 1)?;
    let pieces: Vec<Result<(ChainWord, f64)>> = words
        .par_iter()
        .map(|w| Ok((erase11(w.ascending(), EraseHorizon::Finite(n))?, chain.path_probability(w)?)))
        .collect();
    let mut law = DistTable::new();
    for piece in pieces {
        let (w, p) = piece?;
        law.add(w, p);
    }
    Ok(law)
}

/// Two tables on the union of their outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LawPair<K: Ord> {
    pub a: DistTable<K>,
    pub b: DistTable<K>,
    pub tv: f64,
    pub max_gap: f64,
    /// Outcomes whose gap exceeds 1e-12, largest first (at most 20).
    pub offending: Vec<(K, f64)>,
}

/// Total variation and pointwise gaps between two tables.
pub fn compare_laws<K: Ord + Clone>(a: &DistTable<K>, b: &DistTable<K>) -> LawPair<K> {
    let mut keys: Vec<K> = a.entries.keys().cloned().collect();
    keys.extend(b.entries.keys().filter(|k| !a.entries.contains_key(*k)).cloned());
    let mut sum = CompensatedSum::new();
    let mut gaps = Vec::new();
    let mut max_gap: f64 = 0.0;
    for k in keys {
        let d = (a.get(&k) - b.get(&k)).abs();
        sum.add(d);
        max_gap = max_gap.max(d);
        if d > 1e-12 {
            gaps.push((k, d));
        }
    }
    gaps.sort_by(|x, y| y.1.total_cmp(&x.1));
    gaps.truncate(20);
    LawPair { a: a.clone(), b: b.clone(), tv: (0.5 * sum.value()).clamp(0.0, 1.0), max_gap, offending: gaps }
}

/// First and second moments of two additive cycle functionals
/// F = Σ_cycles f(length), G = Σ_cycles g(length).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairMoments {
    pub mean_f: f64,
    pub mean_g: f64,
    pub second_f: f64,
    pub second_g: f64,
    pub cross: f64,
}

impl PairMoments {
    pub fn var_f(&self) -> f64 {
        self.second_f - self.mean_f * self.mean_f
    }

    pub fn var_g(&self) -> f64 {
        self.second_g - self.mean_g * self.mean_g
    }

    pub fn cov(&self) -> f64 {
        self.cross - self.mean_f * self.mean_g
    }
}

#[derive(Clone, Copy, Default)]
struct Acc {
    m0: f64,
    f: f64,
    g: f64,
    ff: f64,
    gg: f64,
    fg: f64,
}

impl Acc {
    fn scaled(self, w: f64) -> Acc {
        Acc { m0: self.m0 * w, f: self.f * w, g: self.g * w, ff: self.ff * w, gg: self.gg * w, fg: self.fg * w }
    }

    fn add(&mut self, o: Acc) {
        self.m0 += o.m0;
        self.f += o.f;
        self.g += o.g;
        self.ff += o.ff;
        self.gg += o.gg;
        self.fg += o.fg;
    }

    /// Adds a closed cycle contributing a to F and b to G.
    fn close(self, a: f64, b: f64) -> Acc {
        Acc {
            m0: self.m0,
            f: self.f + a * self.m0,
            g: self.g + b * self.m0,
            ff: self.ff + 2.0 * a * self.f + a * a * self.m0,
            gg: self.gg + 2.0 * b * self.g + b * b * self.m0,
            fg: self.fg + a * self.g + b * self.f + a * b * self.m0,
        }
    }
}

/// Moments of F and G under the derangement chain X^{n,p}.
///
/// The DP runs downward carrying s = (position of the last 1) − r, starting
/// from the sentinel at n+1. From s ≥ 2 a 1 at r (probability q_r) closes a
/// cycle of length s; s = 1 forces a 0. The 1 at index 1 closes the last
/// cycle. O(n²) time, O(n) memory.
pub fn dp_pair_moments(
    p: &PSequence,
    n: usize,
    f: &dyn Fn(usize) -> f64,
    g: &dyn Fn(usize) -> f64,
) -> Result<PairMoments> {
    if n < 2 {
        return Err(Error::invalid("dp moments need n >= 2"));
    }
    guard("dp_moments", n, DP_LIMIT, (n * n) as u128)?;
    let t = p.table(n)?;
    let fv: Vec<f64> = (0..=n + 1).map(f).collect();
    let gv: Vec<f64> = (0..=n + 1).map(g).collect();
    // state[s] before processing index r; X_n is forced 0, i.e. s = 1 at r = n.
    let mut state = vec![Acc::default(); n + 2];
    state[1] = Acc { m0: 1.0, ..Acc::default() };
    for r in (2..=n).rev() {
        let mut next = vec![Acc::default(); n + 2];
        let q = if r == n { 0.0 } else { t.q[r] };
        for s in 1..=(n + 1 - r) {
            let a = state[s];
            if a.m0 == 0.0 && a.f == 0.0 {
                continue;
            }
            if s == 1 {
                next[2].add(a);
            } else {
                next[s + 1].add(a.scaled(1.0 - q));
                if q > 0.0 {
                    next[1].add(a.scaled(q).close(fv[s], gv[s]));
                }
            }
        }
        state = next;
    }
    let mut total = Acc::default();
    for (s, a) in state.iter().enumerate().skip(2) {
        total.add(a.close(fv[s], gv[s]));
    }
    Ok(PairMoments { mean_f: total.f, mean_g: total.g, second_f: total.ff, second_g: total.gg, cross: total.fg })
}

/// Moment targets for [`dp_moments`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "target", rename_all = "snake_case")]
pub enum MomentTarget {
    MeanK,
    VarK,
    MeanCj { j: usize },
    SecondCj { j: usize },
    VarCj { j: usize },
    CovC { i: usize, j: usize },
}

/// One moment of K_n or the cycle counts under a derangement kind.
pub fn dp_moments(kind: &ChainKind, n: usize, target: MomentTarget) -> Result<f64> {
    if !kind.is_derangement() {
        return Err(Error::invalid("dp_moments needs a derangement chain kind"));
    }
    let p = kind.p_sequence()?.expect("derangement kinds carry p");
    let ind = |j: usize| move |l: usize| if l == j { 1.0 } else { 0.0 };
    let one = |_: usize| 1.0;
    Ok(match target {
        MomentTarget::MeanK => dp_pair_moments(&p, n, &one, &one)?.mean_f,
        MomentTarget::VarK => dp_pair_moments(&p, n, &one, &one)?.var_f(),
        MomentTarget::MeanCj { j } => dp_pair_moments(&p, n, &ind(j), &one)?.mean_f,
        MomentTarget::SecondCj { j } => dp_pair_moments(&p, n, &ind(j), &one)?.second_f,
        MomentTarget::VarCj { j } => dp_pair_moments(&p, n, &ind(j), &one)?.var_f(),
        MomentTarget::CovC { i, j } => dp_pair_moments(&p, n, &ind(i), &ind(j))?.cov(),
    })
}

/// Means E[C_k] (index k) and the covariance matrix Cov(C_k, C_l) of all
/// cycle counts, by the same DP carrying vector accumulators. O(n⁴).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleCountMoments {
    pub n: usize,
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
}

pub fn cycle_count_moments(p: &PSequence, n: usize) -> Result<CycleCountMoments> {
    if n < 2 {
        return Err(Error::invalid("cycle_count_moments needs n >= 2"));
    }
    guard("cycle_count_moments", n, DP_MATRIX_LIMIT, (n as u128).pow(4))?;
    let t = p.table(n)?;
    let dim = n + 1;
    #[derive(Clone)]
    struct V {
        m0: f64,
        m1: Vec<f64>,
        m2: Vec<f64>,
    }
    let zero = V { m0: 0.0, m1: vec![0.0; dim], m2: vec![0.0; dim * dim] };
    let add_scaled = |dst: &mut V, src: &V, w: f64| {
        dst.m0 += w * src.m0;
        for (d, s) in dst.m1.iter_mut().zip(&src.m1) {
            *d += w * s;
        }
        for (d, s) in dst.m2.iter_mut().zip(&src.m2) {
            *d += w * s;
        }
    };
    // closing a cycle of length len adds e_len to the count vector
    let close = |src: &V, len: usize| -> V {
        let mut out = src.clone();
        out.m1[len] += src.m0;
        for k in 0..dim {
            out.m2[len * dim + k] += src.m1[k];
            out.m2[k * dim + len] += src.m1[k];
        }
        out.m2[len * dim + len] += src.m0;
        out
    };
    let mut state = vec![zero.clone(); n + 2];
    state[1].m0 = 1.0;
    for r in (2..=n).rev() {
        let mut next = vec![zero.clone(); n + 2];
        let q = if r == n { 0.0 } else { t.q[r] };
        for s in 1..=(n + 1 - r) {
            if state[s].m0 == 0.0 {
                continue;
            }
            if s == 1 {
                let src = state[1].clone();
                add_scaled(&mut next[2], &src, 1.0);
            } else {
                let src = state[s].clone();
                add_scaled(&mut next[s + 1], &src, 1.0 - q);
                if q > 0.0 {
                    let closed = close(&src, s);
                    add_scaled(&mut next[1], &closed, q);
                }
            }
        }
        state = next;
    }
    let mut total = zero;
    for (s, v) in state.iter().enumerate().skip(2) {
        if v.m0 > 0.0 {
            let closed = close(v, s);
            add_scaled(&mut total, &closed, 1.0);
        }
    }
    let mean = total.m1.clone();
    let cov = (0..dim).map(|k| (0..dim).map(|l| total.m2[k * dim + l] - mean[k] * mean[l]).collect()).collect();
    Ok(CycleCountMoments { n, mean, cov })
}

/// Moments of F and G computed from an enumerated law.
pub fn law_pair_moments(
    law: &DistTable<ChainWord>,
    f: &dyn Fn(usize) -> f64,
    g: &dyn Fn(usize) -> f64,
) -> Result<PairMoments> {
    let mut acc = [CompensatedSum::new(), CompensatedSum::new(), CompensatedSum::new(), CompensatedSum::new(), CompensatedSum::new()];
    for (w, pr) in &law.entries {
        if *pr == 0.0 {
            continue;
        }
        let stats = cycle_statistics(w)?;
        let fv: f64 = stats.lengths.iter().map(|l| f(*l)).sum();
        let gv: f64 = stats.lengths.iter().map(|l| g(*l)).sum();
        for (a, v) in acc.iter_mut().zip([fv, gv, fv * fv, gv * gv, fv * gv]) {
            a.add(pr * v);
        }
    }
    Ok(PairMoments {
        mean_f: acc[0].value(),
        mean_g: acc[1].value(),
        second_f: acc[2].value(),
        second_g: acc[3].value(),
        cross: acc[4].value(),
    })
}

/// One checked identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub label: String,
    /// The discrepancy measured (TV, absolute gap, ...).
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckResult {
    pub fn new(label: impl Into<String>, value: f64, tolerance: f64) -> Self {
        CheckResult { label: label.into(), value, tolerance, passed: value.is_finite() && value < tolerance }
    }
}

/// Outcome of a verification suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub checks: Vec<CheckResult>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn max_value(&self) -> f64 {
        self.checks.iter().map(|c| c.value).fold(0.0, f64::max)
    }
}

/// Names accepted by [`run_suite`].
pub const SUITES: [&str; 5] = ["conditional", "pushforward", "tv", "pgf", "variance-formula"];

/// Exact X-law vs the Δ-conditioned Feller law under the conditional link,
/// for n = 4..=n_max and `trials` random p sequences per n.
pub fn verify_conditional(n_max: usize, trials: usize, seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = Vec::new();
    for n in 4..=n_max {
        for t in 0..trials {
            let p = PSequence::random(&mut rng, n, 0.05, 0.95)?;
            let x = exact_law(&ChainKind::X { p: p.clone() }, n)?;
            let y = conditional_law(n, &ThetaSequence::conditional_from_p(&p))?;
            checks.push(CheckResult::new(format!("n={n} trial={t}"), compare_laws(&x, &y).tv, 1e-12));
        }
    }
    Ok(SuiteReport { suite: "conditional".into(), checks })
}

/// The θ families used by the push-forward suite.
pub fn pushforward_families() -> Result<Vec<ThetaSequence>> {
    Ok(vec![ThetaSequence::constant(0.5)?, ThetaSequence::constant(1.0)?, ThetaSequence::eta_star(0.8)?])
}

/// Exact X-law under the push-forward link vs χ_n of the Feller law.
pub fn verify_pushforward(n_max: usize) -> Result<SuiteReport> {
    let mut checks = Vec::new();
    for theta in pushforward_families()? {
        for n in 4..=n_max {
            let x = exact_law(&ChainKind::X { p: PSequence::from_theta_pushforward(&theta) }, n)?;
            let y = pushforward_law(n, &theta)?;
            checks.push(CheckResult::new(format!("{theta} n={n}"), compare_laws(&x, &y).tv, 1e-12));
        }
    }
    Ok(SuiteReport { suite: "pushforward".into(), checks })
}

/// Enumerated TV between the X^∞ prefix law and the X^n law vs φ_n.
pub fn verify_tv(n_max: usize) -> Result<SuiteReport> {
    let acc = AccuracySpec::default();
    let mut checks = Vec::new();
    for theta in [0.5, 1.0] {
        let p = PSequence::eta(theta)?;
        for n in 3..=n_max {
            let gap = (tv_prefix_direct(n, &p)? - phi(n, &p, &acc)?).abs();
            checks.push(CheckResult::new(format!("eta({theta}) n={n}"), gap, 1e-12));
        }
    }
    Ok(SuiteReport { suite: "tv".into(), checks })
}

/// E[s^{K_n}] from the enumerated X-law (conditional link) vs the pgf
/// identity γ_n(sθ)/γ_n(θ) · E[s^{K̃_n}].
pub fn verify_pgf(ns: &[usize], theta: &ThetaSequence) -> Result<SuiteReport> {
    let mut checks = Vec::new();
    let p = PSequence::from_theta_conditional(theta);
    for &n in ns {
        let law = exact_law(&ChainKind::X { p: p.clone() }, n)?;
        let k_law: DistTable<usize> = law
            .entries
            .iter()
            .map(|(w, pr)| (w.count_ones(), *pr))
            .collect();
        for s in [0.25f64, 0.5, 1.0, 1.5, 2.0] {
            let direct = k_law.expect(|k| s.powi(*k as i32));
            let formula = pgf_k(CountKind::X, s, n, theta)?;
            checks.push(CheckResult::new(format!("n={n} s={s}"), (direct - formula).abs(), 1e-10));
        }
    }
    Ok(SuiteReport { suite: "pgf".into(), checks })
}

/// The variance display vs the DP at θ = 0.5, j = 3..7, n ∈ {20, 50, 100},
/// and the DP vs enumeration for n ≤ 14.
pub fn verify_variance_formula() -> Result<SuiteReport> {
    let p = PSequence::eta(0.5)?;
    let kind = ChainKind::Eta { theta: 0.5 };
    let mut checks = Vec::new();
    for n in [20, 50, 100] {
        for j in 3..=7 {
            let display = second_moments(n, j, &p)?;
            let dp = dp_moments(&kind, n, MomentTarget::VarCj { j })?;
            checks.push(CheckResult::new(format!("display vs dp n={n} j={j}"), (display - dp).abs(), 1e-10));
        }
    }
    for n in [8, 11, 14] {
        let law = exact_law(&kind, n)?;
        for j in 2..=4 {
            let ind = move |l: usize| if l == j { 1.0 } else { 0.0 };
            let e = law_pair_moments(&law, &ind, &|_| 1.0)?;
            let d = dp_pair_moments(&p, n, &ind, &|_| 1.0)?;
            checks.push(CheckResult::new(format!("dp vs enumeration n={n} j={j}"), (e.var_f() - d.var_f()).abs(), 1e-12));
        }
    }
    Ok(SuiteReport { suite: "variance-formula".into(), checks })
}

/// Runs a suite by name with size parameter `n` (the largest n where it applies).
pub fn run_suite(name: &str, n: usize, trials: usize, seed: u64) -> Result<SuiteReport> {
    match name {
        "conditional" => verify_conditional(n, trials, seed),
        "pushforward" => verify_pushforward(n),
        "tv" => verify_tv(n),
        "pgf" => verify_pgf(&[6, 12, 24], &ThetaSequence::constant(1.0)?),
        "variance-formula" => verify_variance_formula(),
        other => Err(Error::invalid(format!("unknown suite {other}; known: {}", SUITES.join(", ")))),
    }
}
