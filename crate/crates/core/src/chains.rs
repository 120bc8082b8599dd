//! Chain definitions: words, cycle extraction, transition matrices, exact path
//! probabilities, marginals and samplers.
//!
//! Words are stored by chain index, `w_1` first. The sentinel `w_{n+1} = 1`
//! is implicit. Display order runs from index n down to 1.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::limitchain;
use crate::numerics::{ln_factorial, AccuracySpec, CompensatedSum};
use crate::params::{PSequence, ThetaSequence};

/// A 0/1 word w_1..w_n.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ChainWord {
    bits: Vec<u8>,
}

impl ChainWord {
    /// Builds a word from bits in ascending index order.
    pub fn from_ascending(bits: Vec<u8>) -> Result<Self> {
        if let Some(b) = bits.iter().find(|b| **b > 1) {
            return Err(Error::invalid(format!("word bit {b} is not 0 or 1")));
        }
        Ok(ChainWord { bits })
    }

    /// Builds a word from the positions (1-based) that carry a 1.
    pub fn from_ones(n: usize, ones: &[usize]) -> Result<Self> {
        let mut bits = vec![0u8; n];
        for &i in ones {
            if i == 0 || i > n {
                return Err(Error::IndexOutOfRange { what: "word position", index: i, allowed: format!("1..={n}") });
            }
            bits[i - 1] = 1;
        }
        Ok(ChainWord { bits })
    }

    pub fn n(&self) -> usize {
        self.bits.len()
    }

    /// w_i for 1 ≤ i ≤ n, the sentinel 1 at n+1 and 0 elsewhere.
    pub fn get(&self, i: usize) -> u8 {
        match i {
            0 => 0,
            _ if i == self.n() + 1 => 1,
            _ => self.bits.get(i - 1).copied().unwrap_or(0),
        }
    }

    pub fn ascending(&self) -> &[u8] {
        &self.bits
    }

    /// Positions carrying a 1, in descending order.
    pub fn ones_desc(&self) -> Vec<usize> {
        (1..=self.n()).rev().filter(|&i| self.bits[i - 1] == 1).collect()
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|b| **b == 1).count()
    }

    /// Membership in Δ_n: w_1 = 1, w_n = 0 and no adjacent 1s.
    pub fn is_in_delta(&self) -> bool {
        let n = self.n();
        n >= 2
            && self.bits[0] == 1
            && self.bits[n - 1] == 0
            && self.bits.windows(2).all(|w| !(w[0] == 1 && w[1] == 1))
    }

    pub fn has_adjacent_ones(&self) -> bool {
        self.bits.windows(2).any(|w| w[0] == 1 && w[1] == 1)
    }
}

impl fmt::Display for ChainWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.bits.iter().rev() {
            f.write_str(if *b == 1 { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for ChainWord {
    type Err = Error;

    /// Parses the display order (index n first).
    fn from_str(s: &str) -> Result<Self> {
        let bits = s
            .chars()
            .rev()
            .map(|c| match c {
                '0' => Ok(0u8),
                '1' => Ok(1u8),
                _ => Err(Error::invalid(format!("word character {c:?} is not 0 or 1"))),
            })
            .collect::<Result<Vec<u8>>>()?;
        Ok(ChainWord { bits })
    }
}

/// Cycle counts c_1..c_n.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CycleType {
    counts: Vec<usize>,
}

impl CycleType {
    /// Builds a cycle type from c_1..c_n; checks Σ i·c_i = n.
    pub fn new(counts: Vec<usize>) -> Result<Self> {
        let n = counts.len();
        let total: usize = counts.iter().enumerate().map(|(i, c)| (i + 1) * c).sum();
        if total != n {
            return Err(Error::invalid(format!("cycle type sums to {total}, expected {n}")));
        }
        Ok(CycleType { counts })
    }

    /// Builds the cycle type of a list of cycle lengths summing to n.
    pub fn from_lengths(n: usize, lengths: &[usize]) -> Result<Self> {
        let mut counts = vec![0; n];
        for &a in lengths {
            if a == 0 || a > n {
                return Err(Error::invalid(format!("cycle length {a} outside 1..={n}")));
            }
            counts[a - 1] += 1;
        }
        Self::new(counts)
    }

    pub fn n(&self) -> usize {
        self.counts.len()
    }

    /// c_j (0 outside 1..=n).
    pub fn count(&self, j: usize) -> usize {
        if j == 0 {
            0
        } else {
            self.counts.get(j - 1).copied().unwrap_or(0)
        }
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    /// ‖c‖ = Σ c_j.
    pub fn norm(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn is_derangement(&self) -> bool {
        self.count(1) == 0
    }

    /// c̄: c_1 copies of 1, then c_2 copies of 2, and so on.
    pub fn expanded(&self) -> Vec<usize> {
        self.counts.iter().enumerate().flat_map(|(i, &c)| std::iter::repeat(i + 1).take(c)).collect()
    }
}

/// Cycle statistics of a word.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleStats {
    pub cycle_type: CycleType,
    pub k: usize,
    /// Ordered cycle lengths A_1..A_K.
    pub lengths: Vec<usize>,
}

/// Cycle lengths are the spacings between consecutive 1s, read from the
/// sentinel at n+1 downward.
pub fn cycle_statistics(word: &ChainWord) -> Result<CycleStats> {
    if word.get(1) != 1 {
        return Err(Error::invalid("cycle extraction needs w_1 = 1"));
    }
    let n = word.n();
    let mut prev = n + 1;
    let mut lengths = Vec::new();
    for i in word.ones_desc() {
        lengths.push(prev - i);
        prev = i;
    }
    let cycle_type = CycleType::from_lengths(n, &lengths)?;
    Ok(CycleStats { k: lengths.len(), cycle_type, lengths })
}

/// One step of a signed word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SignedStep {
    PlusZero,
    MinusZero,
    One,
}

impl SignedStep {
    pub fn projected(self) -> u8 {
        match self {
            SignedStep::One => 1,
            _ => 0,
        }
    }

    fn symbol(self) -> char {
        match self {
            SignedStep::PlusZero => 'i',
            SignedStep::MinusZero => 'o',
            SignedStep::One => '1',
        }
    }
}

/// A word over {+0, −0, 1}, chain-indexed like [`ChainWord`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignedWord {
    pub steps: Vec<SignedStep>,
    pub kappa: f64,
}

impl SignedWord {
    pub fn n(&self) -> usize {
        self.steps.len()
    }

    /// Forgets the ± marks.
    pub fn projection(&self) -> ChainWord {
        ChainWord { bits: self.steps.iter().map(|s| s.projected()).collect() }
    }
}

impl fmt::Display for SignedWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in self.steps.iter().rev() {
            write!(f, "{}", s.symbol())?;
        }
        Ok(())
    }
}

/// Ordered circles of signed labels; positive labels look in.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignedPermutation {
    pub circles: Vec<Vec<i64>>,
}

impl SignedPermutation {
    /// Λ, the number of positive labels.
    pub fn positive_count(&self) -> usize {
        self.circles.iter().flatten().filter(|l| **l > 0).count()
    }

    pub fn circle_sizes(&self) -> Vec<usize> {
        self.circles.iter().map(|c| c.len()).collect()
    }
}

/// The chain families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChainKind {
    /// The derangement chain X^{n,p}.
    X { p: PSequence },
    /// The playground chain, p_i = (i−1)/(θ+i−1).
    Eta { theta: f64 },
    /// The ESF-derangement chain.
    EtaTilde { theta: f64 },
    /// The generalized Feller coupling.
    Y { theta: ThetaSequence },
    /// The classic Feller coupling with constant θ.
    XiTilde { theta: f64 },
    /// The signed chain X̄^{n,p,κ}.
    Signed { p: PSequence, kappa: f64 },
    /// A finite prefix of the limit chain X^∞, run upward from index 1.
    XinfPrefix { p: PSequence },
}

impl ChainKind {
    /// The p sequence behind the kind, for Markov kinds.
    pub fn p_sequence(&self) -> Result<Option<PSequence>> {
        Ok(match self {
            ChainKind::X { p } | ChainKind::Signed { p, .. } | ChainKind::XinfPrefix { p } => Some(p.clone()),
            ChainKind::Eta { theta } => Some(PSequence::eta(*theta)?),
            ChainKind::EtaTilde { theta } => Some(PSequence::eta_tilde(*theta)?),
            ChainKind::Y { .. } | ChainKind::XiTilde { .. } => None,
        })
    }

    /// The θ sequence behind the kind, for Feller-coupling kinds.
    pub fn theta_sequence(&self) -> Result<Option<ThetaSequence>> {
        Ok(match self {
            ChainKind::Y { theta } => Some(theta.clone()),
            ChainKind::XiTilde { theta } => Some(ThetaSequence::constant(*theta)?.with_theta2(*theta)?),
            _ => None,
        })
    }

    /// True for kinds whose words always lie in Δ_n.
    pub fn is_derangement(&self) -> bool {
        matches!(
            self,
            ChainKind::X { .. } | ChainKind::Eta { .. } | ChainKind::EtaTilde { .. } | ChainKind::Signed { .. }
        )
    }

    pub fn kappa(&self) -> Option<f64> {
        match self {
            ChainKind::Signed { kappa, .. } => Some(*kappa),
            _ => None,
        }
    }

    fn validate(&self) -> Result<()> {
        if let ChainKind::Signed { kappa, .. } = self {
            if !(0.0..=1.0).contains(kappa) {
                return Err(Error::invalid(format!("kappa must lie in [0,1], got {kappa}")));
            }
        }
        Ok(())
    }
}

/// Transition matrix at index r for horizon n.
///
/// Markov derangement kinds give the law of state r given state r+1 with
/// states ordered (0, 1), or (+0, −0, 1) for the signed chain. Feller
/// couplings are independent, so both rows equal the Bernoulli law at r.
/// The X^∞ prefix runs upward: row s gives the law of state r+1 given state
/// r = s.
pub fn transition_matrix(kind: &ChainKind, r: usize, n: usize) -> Result<Vec<Vec<f64>>> {
    kind.validate()?;
    if r == 0 || r > n {
        return Err(Error::IndexOutOfRange { what: "transition index", index: r, allowed: format!("1..={n}") });
    }
    match kind {
        ChainKind::Y { .. } | ChainKind::XiTilde { .. } => {
            let th = kind.theta_sequence()?.expect("feller kind");
            let pi = th.prob_one(r)?;
            Ok(vec![vec![1.0 - pi, pi], vec![1.0 - pi, pi]])
        }
        ChainKind::XinfPrefix { p } => {
            let phi = limitchain::phi_table(p, r + 1, &AccuracySpec::default())?;
            // index 1 always carries a 1, so only its second row is reachable
            let t = if r == 1 { 0.0 } else { phi[r + 1] / (1.0 - phi[r]) };
            Ok(vec![vec![1.0 - t, t], vec![1.0, 0.0]])
        }
        ChainKind::Signed { p, kappa } => {
            let k = *kappa;
            if r == 1 {
                return Ok(vec![vec![0.0, 0.0, 1.0]; 3]);
            }
            if r == n {
                return Ok(vec![vec![k, 1.0 - k, 0.0]; 3]);
            }
            let (pr, qr) = (p.p(r)?, p.q(r)?);
            let zero = vec![k * pr, (1.0 - k) * pr, qr];
            Ok(vec![zero.clone(), zero, vec![k, 1.0 - k, 0.0]])
        }
        _ => {
            let p = kind.p_sequence()?.expect("markov kind");
            if r == 1 {
                return Ok(vec![vec![0.0, 1.0], vec![0.0, 1.0]]);
            }
            if r == n {
                return Ok(vec![vec![1.0, 0.0], vec![1.0, 0.0]]);
            }
            Ok(vec![vec![p.p(r)?, p.q(r)?], vec![1.0, 0.0]])
        }
    }
}

/// A chain kind with its per-index probabilities tabulated for horizon n.
#[derive(Debug, Clone)]
pub struct PreparedChain {
    kind: ChainKind,
    n: usize,
    /// Markov kinds: q_i. Feller kinds: P(Y_i = 1). X^∞ prefix: the upward
    /// probability of a 1 at i given a 0 at i−1.
    prob: Vec<f64>,
}

impl PreparedChain {
    pub fn new(kind: &ChainKind, n: usize) -> Result<Self> {
        kind.validate()?;
        if kind.is_derangement() && n < 2 {
            return Err(Error::invalid("derangement chains need n >= 2"));
        }
        if n == 0 {
            return Err(Error::invalid("chains need n >= 1"));
        }
        let prob = match kind {
            ChainKind::Y { .. } | ChainKind::XiTilde { .. } => {
                let th = kind.theta_sequence()?.expect("feller kind").table(n)?;
                (0..=n).map(|i| if i == 0 { 0.0 } else { th[i] / (i as f64 - 1.0 + th[i]) }).collect()
            }
            ChainKind::XinfPrefix { p } => {
                let phi = limitchain::phi_table(p, n, &AccuracySpec::default())?;
                let mut t = vec![0.0; n + 1];
                for i in 2..=n {
                    t[i] = phi[i] / (1.0 - phi[i - 1]);
                }
                t
            }
            _ => kind.p_sequence()?.expect("markov kind").table(n)?.q,
        };
        Ok(PreparedChain { kind: kind.clone(), n, prob })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> &ChainKind {
        &self.kind
    }

    /// The tabulated per-index probabilities (see the field description).
    pub fn probabilities(&self) -> &[f64] {
        &self.prob
    }

    /// Draws an unsigned word (signed kinds are projected).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ChainWord {
        let n = self.n;
        let mut bits = vec![0u8; n];
        match &self.kind {
            ChainKind::Y { .. } | ChainKind::XiTilde { .. } => {
                bits[0] = 1;
                for i in 2..=n {
                    bits[i - 1] = u8::from(rng.gen::<f64>() < self.prob[i]);
                }
            }
            ChainKind::XinfPrefix { .. } => {
                bits[0] = 1;
                for i in 2..=n {
                    if bits[i - 2] == 0 {
                        bits[i - 1] = u8::from(rng.gen::<f64>() < self.prob[i]);
                    }
                }
            }
            ChainKind::Signed { .. } => return self.sample_signed(rng).projection(),
            _ => {
                bits[0] = 1;
                for r in (2..n).rev() {
                    if bits[r] == 0 {
                        bits[r - 1] = u8::from(rng.gen::<f64>() < self.prob[r]);
                    }
                }
            }
        }
        ChainWord { bits }
    }

    /// Draws a signed word. Non-signed kinds use κ = 1.
    pub fn sample_signed<R: Rng + ?Sized>(&self, rng: &mut R) -> SignedWord {
        let kappa = self.kind.kappa().unwrap_or(1.0);
        let n = self.n;
        let mut steps = vec![SignedStep::PlusZero; n];
        let zero = |rng: &mut R| {
            if rng.gen::<f64>() < kappa {
                SignedStep::PlusZero
            } else {
                SignedStep::MinusZero
            }
        };
        steps[n - 1] = zero(rng);
        for r in (2..n).rev() {
            steps[r - 1] = if steps[r] != SignedStep::One && rng.gen::<f64>() < self.prob[r] {
                SignedStep::One
            } else {
                zero(rng)
            };
        }
        steps[0] = SignedStep::One;
        SignedWord { steps, kappa }
    }

    /// Exact probability of a word (0 outside the support).
    pub fn path_probability(&self, word: &ChainWord) -> Result<f64> {
        let n = self.n;
        if word.n() != n {
            return Err(Error::invalid(format!("word has length {}, expected {n}", word.n())));
        }
        if word.get(1) != 1 {
            return Ok(0.0);
        }
        let mut prob = 1.0;
        match &self.kind {
            ChainKind::Y { .. } | ChainKind::XiTilde { .. } => {
                for i in 2..=n {
                    prob *= if word.get(i) == 1 { self.prob[i] } else { 1.0 - self.prob[i] };
                }
            }
            ChainKind::XinfPrefix { .. } => {
                for i in 2..=n {
                    let b = word.get(i);
                    if word.get(i - 1) == 1 {
                        if b == 1 {
                            return Ok(0.0);
                        }
                    } else {
                        prob *= if b == 1 { self.prob[i] } else { 1.0 - self.prob[i] };
                    }
                }
            }
            _ => {
                if !word.is_in_delta() {
                    return Ok(0.0);
                }
                for r in 3..n {
                    if word.get(r + 1) == 0 {
                        prob *= if word.get(r) == 1 { self.prob[r] } else { 1.0 - self.prob[r] };
                    }
                }
            }
        }
        Ok(prob)
    }

    /// Exact probability of a signed word under the signed chain.
    pub fn signed_path_probability(&self, word: &SignedWord) -> Result<f64> {
        let kappa = self.kind.kappa().unwrap_or(1.0);
        if word.n() != self.n {
            return Err(Error::invalid("signed word length does not match the horizon"));
        }
        let base = self.path_probability(&word.projection())?;
        let mut prob = base;
        for s in &word.steps {
            match s {
                SignedStep::PlusZero => prob *= kappa,
                SignedStep::MinusZero => prob *= 1.0 - kappa,
                SignedStep::One => {}
            }
        }
        Ok(prob)
    }
}

/// Draws one word with a seed-determined generator.
pub fn sample_path(kind: &ChainKind, n: usize, seed: u64) -> Result<ChainWord> {
    let prepared = PreparedChain::new(kind, n)?;
    Ok(prepared.sample(&mut ChaCha8Rng::seed_from_u64(seed)))
}

/// Exact probability of a word under a kind.
pub fn path_probability(kind: &ChainKind, word: &ChainWord) -> Result<f64> {
    PreparedChain::new(kind, word.n())?.path_probability(word)
}

/// The closed form of a Feller-coupling path probability:
/// (n−1)!/θ_{<n>} · θ_1 · Π_{i>1, w_i=1} θ_i/(i−1), evaluated in log space.
pub fn feller_path_probability_closed(theta: &ThetaSequence, word: &ChainWord) -> Result<f64> {
    let n = word.n();
    if word.get(1) != 1 {
        return Ok(0.0);
    }
    let th = theta.table(n)?;
    let mut log = ln_factorial(n - 1) + th[1].ln();
    for (i, t) in th.iter().enumerate().skip(1) {
        log -= (t + i as f64 - 1.0).ln();
    }
    for i in 2..=n {
        if word.get(i) == 1 {
            log += (th[i] / (i as f64 - 1.0)).ln();
        }
    }
    Ok(log.exp())
}

/// Finite or infinite horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Horizon {
    Finite(usize),
    Infinite,
}

/// P(X_i = 1) for a Markov derangement chain with finite horizon, as the
/// alternating sum of products of q.
pub fn marginal_one_finite(p: &PSequence, i: usize, n: usize) -> Result<f64> {
    if i == 0 || i > n {
        return Err(Error::IndexOutOfRange { what: "marginal index", index: i, allowed: format!("1..={n}") });
    }
    match i {
        1 => return Ok(1.0),
        2 => return Ok(0.0),
        _ => {}
    }
    let t = p.table(n)?;
    let mut sum = CompensatedSum::new();
    let mut prod = 1.0;
    for j in 0..n.saturating_sub(i) {
        prod *= t.q[i + j];
        sum.add(if j % 2 == 0 { prod } else { -prod });
    }
    Ok(sum.value())
}

/// All finite-horizon marginals P(X_i = 1), i = 0..=n, via the recursion
/// P_i = q_i (1 − P_{i+1}) started from P_n = 0.
pub fn marginal_table(p: &PSequence, n: usize) -> Result<Vec<f64>> {
    let t = p.table(n)?;
    let mut m = vec![0.0; n + 2];
    for i in (1..n).rev() {
        m[i] = t.q[i] * (1.0 - m[i + 1]);
    }
    m.truncate(n + 1);
    Ok(m)
}

/// P(state at index i is 1) for any kind. Feller kinds return their
/// Bernoulli parameter; derangement kinds with an infinite horizon use φ_i.
pub fn marginal_one(kind: &ChainKind, i: usize, horizon: Horizon) -> Result<f64> {
    if let Some(th) = kind.theta_sequence()? {
        return th.prob_one(i);
    }
    let p = kind.p_sequence()?.expect("markov kind");
    match (kind, horizon) {
        (ChainKind::XinfPrefix { .. }, _) | (_, Horizon::Infinite) => {
            limitchain::phi(i, &p, &AccuracySpec::default())
        }
        (_, Horizon::Finite(n)) => marginal_one_finite(&p, i, n),
    }
}

/// E[X_{i_1} ⋯ X_{i_k}] for strictly decreasing indices n ≥ i_1 > … > i_k > 2,
/// as the product of alternating gap sums.
pub fn joint_marginal_product(indices: &[usize], n: usize, p: &PSequence) -> Result<f64> {
    if indices.is_empty() {
        return Ok(1.0);
    }
    for w in indices.windows(2) {
        if w[0] <= w[1] {
            return Err(Error::invalid("joint marginal indices must be strictly decreasing"));
        }
    }
    if indices[0] > n || *indices.last().unwrap() <= 2 {
        return Err(Error::invalid(format!("joint marginal indices must lie in 3..={n}")));
    }
    let t = p.table(n)?;
    let mut upper = n + 1;
    let mut out = 1.0;
    for &i in indices {
        let mut sum = CompensatedSum::new();
        let mut prod = 1.0;
        for r in 0..(upper - i).saturating_sub(1) {
            prod *= t.q[i + r];
            sum.add(if r % 2 == 0 { prod } else { -prod });
        }
        out *= sum.value();
        upper = i;
    }
    Ok(out)
}

/// Samples a signed word and attaches labels: a uniformly random labelling of
/// 1..n read from index n downward, where circle leaders are positive and
/// every other label takes its sign from the preceding ±0 step.
pub fn generate_signed(n: usize, p: &PSequence, kappa: f64, seed: u64) -> Result<(SignedWord, SignedPermutation)> {
    let kind = ChainKind::Signed { p: p.clone(), kappa };
    let prepared = PreparedChain::new(&kind, n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(signed_with_labels(&prepared, &mut rng))
}

/// Signed word plus labelled circles drawn from `rng`.
pub fn signed_with_labels<R: Rng + ?Sized>(prepared: &PreparedChain, rng: &mut R) -> (SignedWord, SignedPermutation) {
    let word = prepared.sample_signed(rng);
    let n = word.n();
    let mut labels: Vec<i64> = (1..=n as i64).collect();
    labels.shuffle(rng);
    let mut circles = Vec::new();
    let mut current = Vec::new();
    let mut prev = SignedStep::One;
    for (slot, i) in (1..=n).rev().enumerate() {
        let label = labels[slot];
        current.push(if prev == SignedStep::MinusZero { -label } else { label });
        prev = word.steps[i - 1];
        if prev == SignedStep::One {
            circles.push(std::mem::take(&mut current));
        }
    }
    (word, SignedPermutation { circles })
}
