//! The generalized Feller coupling: γ_n and G_n, δ_n for the eta_star
//! sequence, laws of K and of the cycle counts, the pgf identity, ordered
//! cycle probabilities and the 11-erasing maps.

use serde::{Deserialize, Serialize};

use crate::chains::{ChainWord, CycleType};
use crate::dist::DistTable;
use crate::error::{Error, Result};
use crate::limitchain::z_roots;
use crate::numerics::{beta_fn, ln_factorial, ln_rising_factorial, CompensatedSum};
use crate::params::{PSequence, ThetaSequence};

/// Largest ‖c‖ for which the permutation sum is evaluated exactly.
pub const MAX_EXACT_CYCLES: usize = 9;

/// θ*_k for k ≥ 3: θ at k = 3, θ(1 + θ/(k−2)) above.
pub(crate) fn eta_star_theta(theta: f64, k: usize) -> f64 {
    if k == 3 {
        theta
    } else {
        theta * (1.0 + theta / (k as f64 - 2.0))
    }
}

/// γ_1..γ_N and G_0..G_N for one θ sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaTable {
    pub theta: ThetaSequence,
    /// γ_i at index i (index 0 unused).
    pub gamma: Vec<f64>,
    /// G_i at index i.
    pub g: Vec<f64>,
}

impl GammaTable {
    /// Builds the table through index n from the recursion
    /// γ_i = (i−1)/(i−1+θ_i) (γ_{i−1} + θ_{i−1}/(i−2+θ_{i−1}) γ_{i−2}),
    /// γ_1 = 0, γ_2 = 1/(1+θ_2), and G_i = G_{i−1} + θ_i/(i−1) G_{i−2}.
    pub fn build(theta: &ThetaSequence, n: usize) -> Result<Self> {
        let n = n.max(2);
        let th = theta.table(n)?;
        let mut gamma = vec![0.0; n + 1];
        gamma[2] = 1.0 / (1.0 + th[2]);
        for i in 3..=n {
            let fi = i as f64;
            gamma[i] = (fi - 1.0) / (fi - 1.0 + th[i])
                * (gamma[i - 1] + th[i - 1] / (fi - 2.0 + th[i - 1]) * gamma[i - 2]);
        }
        let mut g = vec![0.0; n + 1];
        g[1] = 1.0;
        g[2] = 1.0;
        for i in 3..=n {
            g[i] = g[i - 1] + th[i] / (i as f64 - 1.0) * g[i - 2];
        }
        Ok(GammaTable { theta: theta.clone(), gamma, g })
    }

    pub fn n(&self) -> usize {
        self.gamma.len() - 1
    }

    /// Largest relative gap between γ_i and G_{i−1}(i−1)!/θ_{<i>} over the table.
    pub fn product_form_gap(&self) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for i in 2..=self.n() {
            let v = gamma_n(&self.theta, i, GammaMethod::GProduct)?;
            worst = worst.max(((v - self.gamma[i]) / self.gamma[i]).abs());
        }
        Ok(worst)
    }
}

/// Ways to evaluate γ_n(θ).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaMethod {
    Recursion,
    GProduct,
    PProduct,
}

/// ln θ_{<n>} = Σ_{i=1}^n ln(θ_i + i − 1).
pub fn ln_theta_bracket(th: &[f64], n: usize) -> f64 {
    (1..=n).map(|i| (th[i] + i as f64 - 1.0).ln()).collect::<CompensatedSum>().value()
}

/// γ_n(θ) = P(Y^n ∈ Δ_n).
pub fn gamma_n(theta: &ThetaSequence, n: usize, method: GammaMethod) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("gamma_n needs n >= 1"));
    }
    if n == 1 {
        return Ok(0.0);
    }
    match method {
        GammaMethod::Recursion => Ok(GammaTable::build(theta, n)?.gamma[n]),
        GammaMethod::GProduct => {
            let table = GammaTable::build(theta, n)?;
            let th = theta.table(n)?;
            // π_1 = 1 whatever θ_1 is, so the bracket is taken with θ_1 = 1
            Ok((table.g[n - 1].ln() + ln_factorial(n - 1) - ln_theta_bracket(&th, n) + th[1].ln()).exp())
        }
        GammaMethod::PProduct => {
            // γ_n = p_n/(1+θ_2) Π_{j=2}^{n−1} p_j/(p_j p_{j+1} + q_{j+1})
            let t = PSequence::from_theta_conditional(theta).table(n)?;
            let mut ln = t.p[n].ln() - (1.0 + theta.theta(2)?).ln();
            for j in 2..n {
                ln += t.p[j].ln() - (t.p[j] * t.p[j + 1] + t.q[j + 1]).ln();
            }
            Ok(ln.exp())
        }
    }
}

/// δ_n(θ) = γ_n of the eta_star sequence with θ*_2 = `theta2_star`, in
/// closed form: (n−1)!(θ²+θ+2)(θ+2)_{(n−3)} / ((1+θ*_2)(θ+2) Π_{k=1}^{n−2}(k(k+1)+θ(θ+k))).
pub fn delta_n(theta: f64, theta2_star: f64, n: usize) -> Result<f64> {
    if !(theta > 0.0) {
        return Err(Error::invalid("theta must be positive"));
    }
    if !(theta2_star > 0.0 && theta2_star <= 1.0) {
        return Err(Error::invalid("theta2_star must lie in (0,1]"));
    }
    match n {
        0 => Err(Error::invalid("delta_n needs n >= 1")),
        1 => Ok(0.0),
        2 => Ok(1.0 / (1.0 + theta2_star)),
        _ => {
            let mut ln = ln_factorial(n - 1) + (theta * theta + theta + 2.0).ln()
                + ln_rising_factorial(theta + 2.0, n - 3)?.0
                - (1.0 + theta2_star).ln()
                - (theta + 2.0).ln();
            for k in 1..=(n - 2) {
                let kf = k as f64;
                ln -= (kf * (kf + 1.0) + theta * (theta + kf)).ln();
            }
            Ok(ln.exp())
        }
    }
}

/// δ_∞(θ) = (θ²+θ+2)/(1+θ*_2) · B(z_1, z_2).
pub fn delta_inf(theta: f64, theta2_star: f64) -> Result<f64> {
    if !(theta > 0.0) {
        return Err(Error::invalid("theta must be positive"));
    }
    let (z1, z2) = z_roots(theta);
    Ok((theta * theta + theta + 2.0) / (1.0 + theta2_star) * beta_fn(z1, z2)?)
}

/// The eta_star θ sequence with a chosen θ*_2.
pub fn eta_star_sequence(theta: f64, theta2_star: f64) -> Result<ThetaSequence> {
    ThetaSequence::eta_star(theta)?.with_theta2(theta2_star)
}

/// Which process a K law refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountKind {
    /// The derangement chain, through the conditional relation.
    X,
    /// The generalized Feller coupling.
    Y,
}

/// Law of K̃_n (kind Y) or K_n (kind X with θ linked to p by the
/// conditional map).
///
/// Y is the Poisson-binomial law of the independent indicators. X sums the
/// same weights over index sets without neighbours and without n, by a DP
/// that carries the previous bit, then divides by γ_n.
pub fn k_distribution(kind: CountKind, n: usize, theta: &ThetaSequence) -> Result<DistTable<usize>> {
    if n < 2 {
        return Err(Error::invalid("k_distribution needs n >= 2"));
    }
    let th = theta.table(n)?;
    let pi: Vec<f64> = (0..=n).map(|i| if i == 0 { 0.0 } else { th[i] / (i as f64 - 1.0 + th[i]) }).collect();
    match kind {
        CountKind::Y => {
            let mut law = vec![0.0; n + 1];
            law[1] = 1.0;
            for &p in &pi[2..] {
                for k in (1..=n).rev() {
                    law[k] = law[k] * (1.0 - p) + law[k - 1] * p;
                }
            }
            Ok(law.into_iter().enumerate().filter(|(_, v)| *v > 0.0).collect())
        }
        CountKind::X => {
            // zero[k], one[k]: mass with k ones so far and the last bit 0 / 1.
            let mut zero = vec![0.0; n + 1];
            let mut one = vec![0.0; n + 1];
            one[1] = 1.0;
            for (i, &p) in pi.iter().enumerate().skip(2) {
                let mut nz = vec![0.0; n + 1];
                let mut no = vec![0.0; n + 1];
                for k in 0..=n {
                    nz[k] = (zero[k] + one[k]) * (1.0 - p);
                    if k > 0 && i < n {
                        no[k] = zero[k - 1] * p;
                    }
                }
                zero = nz;
                one = no;
            }
            let total: f64 = zero.iter().sum();
            Ok(zero.into_iter().enumerate().filter(|(_, v)| *v > 0.0).map(|(k, v)| (k, v / total)).collect())
        }
    }
}

/// E[s^K] in closed form. Y: (sθ)_{<n>}/θ_{<n>}. X: γ_n(sθ)/γ_n(θ) times the Y pgf.
pub fn pgf_k(kind: CountKind, s: f64, n: usize, theta: &ThetaSequence) -> Result<f64> {
    if !(s > 0.0) {
        if s == 0.0 {
            return Ok(0.0);
        }
        return Err(Error::invalid("pgf argument must be nonnegative"));
    }
    let th = theta.table(n)?;
    let ln_y: f64 = (1..=n)
        .map(|i| (s * th[i] + i as f64 - 1.0).ln() - (th[i] + i as f64 - 1.0).ln())
        .collect::<CompensatedSum>()
        .value();
    let y = ln_y.exp();
    match kind {
        CountKind::Y => Ok(y),
        CountKind::X => {
            let scaled = theta.scaled(s)?;
            Ok(gamma_n(&scaled, n, GammaMethod::Recursion)? / gamma_n(theta, n, GammaMethod::Recursion)? * y)
        }
    }
}

/// All cycle types of size n without fixed points, from partitions of n
/// into parts ≥ 2.
pub fn derangement_cycle_types(n: usize) -> Result<Vec<CycleType>> {
    fn rec(rest: usize, max_part: usize, counts: &mut Vec<usize>, out: &mut Vec<CycleType>) -> Result<()> {
        if rest == 0 {
            out.push(CycleType::new(counts.clone())?);
            return Ok(());
        }
        for part in (2..=max_part.min(rest)).rev() {
            counts[part - 1] += 1;
            rec(rest - part, part, counts, out)?;
            counts[part - 1] -= 1;
        }
        Ok(())
    }
    if n == 0 {
        return Err(Error::invalid("cycle types need n >= 1"));
    }
    let mut out = Vec::new();
    rec(n, n, &mut vec![0; n], &mut out)?;
    Ok(out)
}

/// Visits every distinct ordering of the multiset c̄, passing the running
/// sequence of ε values.
fn for_each_ordering(counts: &mut [usize], n: usize, eps: &mut Vec<usize>, remaining: usize, f: &mut dyn FnMut(&[usize])) {
    if remaining == 0 {
        f(eps);
        return;
    }
    let last = *eps.last().unwrap_or(&(n + 1));
    for len in 1..=counts.len() {
        if counts[len - 1] == 0 {
            continue;
        }
        counts[len - 1] -= 1;
        eps.push(last - len);
        for_each_ordering(counts, n, eps, remaining - 1, f);
        eps.pop();
        counts[len - 1] += 1;
    }
}

fn check_cycle_type(c: &CycleType, n: usize) -> Result<()> {
    if c.n() != n {
        return Err(Error::invalid(format!("cycle type has length {}, expected {n}", c.n())));
    }
    if c.norm() > MAX_EXACT_CYCLES {
        return Err(Error::TooManyCycles { norm: c.norm(), cap: MAX_EXACT_CYCLES });
    }
    Ok(())
}

/// P(C̃_1 = c_1, …, C̃_n = c_n) for the GFC: the permutation sum of the
/// Ewens-type formula, taken over distinct orderings of c̄ (which absorbs
/// the 1/Π c_i! factor).
pub fn joint_cycle_counts_y(c: &CycleType, theta: &ThetaSequence) -> Result<f64> {
    let n = c.n();
    check_cycle_type(c, n)?;
    let th = theta.table(n)?;
    let mut counts = c.counts().to_vec();
    let mut sum = CompensatedSum::new();
    let mut eps = Vec::with_capacity(c.norm());
    for_each_ordering(&mut counts, n, &mut eps, c.norm(), &mut |e| {
        let mut prod = 1.0;
        for &x in &e[..e.len() - 1] {
            prod *= th[x] / (x as f64 - 1.0);
        }
        sum.add(prod);
    });
    Ok((ln_factorial(n - 1) + th[1].ln() - ln_theta_bracket(&th, n)).exp() * sum.value())
}

/// P(C_2 = c_2, …, C_n = c_n) for the derangement chain with θ linked to p by
/// the conditional map: the GFC value divided by γ_n(θ).
pub fn joint_cycle_counts_x(c: &CycleType, theta: &ThetaSequence) -> Result<f64> {
    if !c.is_derangement() {
        return Ok(0.0);
    }
    let y = joint_cycle_counts_y(c, theta)?;
    Ok(y / gamma_n(theta, c.n(), GammaMethod::Recursion)?)
}

/// The p-form of the same probability:
/// (1/c_n!) Π_{i=2}^{n−1} (p_i/c_i!) Σ_σ Π q_ε/(p_ε p_{ε−1}).
pub fn joint_cycle_counts_x_from_p(c: &CycleType, p: &PSequence) -> Result<f64> {
    let n = c.n();
    check_cycle_type(c, n)?;
    if !c.is_derangement() {
        return Ok(0.0);
    }
    let t = p.table(n)?;
    let mut counts = c.counts().to_vec();
    let mut sum = CompensatedSum::new();
    let mut eps = Vec::with_capacity(c.norm());
    for_each_ordering(&mut counts, n, &mut eps, c.norm(), &mut |e| {
        let mut prod = 1.0;
        for &x in &e[..e.len() - 1] {
            prod *= t.q[x] / (t.p[x] * t.p[x - 1]);
        }
        sum.add(prod);
    });
    let mut lead = 1.0;
    for i in 2..n {
        lead *= t.p[i];
    }
    Ok(lead * sum.value())
}

/// Dispatches on the kind.
pub fn joint_cycle_counts(kind: CountKind, c: &CycleType, theta: &ThetaSequence) -> Result<f64> {
    match kind {
        CountKind::X => joint_cycle_counts_x(c, theta),
        CountKind::Y => joint_cycle_counts_y(c, theta),
    }
}

/// P(Ã_1 = a_1, …, Ã_r = a_r, K̃_n > r) for the GFC, in log space:
/// n! θ_{<n−m>} / ((n−m)! θ_{<n>}) · Π θ_{n+1−a_1−…−a_i} / (n(n−a_1)⋯(n−a_1−…−a_{r−1})).
pub fn ordered_cycle_prefix_prob(a: &[usize], n: usize, theta: &ThetaSequence) -> Result<f64> {
    if a.iter().any(|x| *x == 0) {
        return Err(Error::invalid("cycle lengths must be positive"));
    }
    let m: usize = a.iter().sum();
    if m >= n {
        return Err(Error::invalid(format!("ordered prefix needs a_1 + ... + a_r < n, got {m} >= {n}")));
    }
    let th = theta.table(n)?;
    let mut ln = ln_factorial(n) + ln_theta_bracket(&th, n - m) - ln_factorial(n - m) - ln_theta_bracket(&th, n);
    let mut used = 0;
    for &ai in a {
        ln -= ((n - used) as f64).ln();
        used += ai;
        ln += th[n + 1 - used].ln();
    }
    Ok(ln.exp())
}

/// Horizon of an 11-erasing map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EraseHorizon {
    /// χ_n: only y_1..y_{n−1} matter and the output has length n.
    Finite(usize),
    /// χ_∞ on a finite window; the window must end in 0.
    Window,
}

/// The 11-erasing maps. The input is y_1, y_2, … (ascending, y_1 = 1). An
/// index i keeps its 1 iff the run of 1s directly above it has even length;
/// for χ_n the run is cut at n−1, indices 2 and ≥ n are 0.
pub fn erase11(y: &[u8], horizon: EraseHorizon) -> Result<ChainWord> {
    if y.first() != Some(&1) {
        return Err(Error::invalid("erase11 input must start with y_1 = 1"));
    }
    if y.iter().any(|b| *b > 1) {
        return Err(Error::invalid("erase11 input must be 0/1"));
    }
    let (len, top) = match horizon {
        EraseHorizon::Finite(n) => {
            if n < 2 {
                return Err(Error::invalid("erase11 needs n >= 2"));
            }
            if y.len() + 1 < n {
                return Err(Error::WindowTooShort(format!("chi_{n} needs y_1..y_{}, got {} values", n - 1, y.len())));
            }
            (n, n - 1)
        }
        EraseHorizon::Window => {
            if y.last() != Some(&0) {
                return Err(Error::WindowTooShort(
                    "the window ends inside a run of 1s; extend it until a 0 appears".into(),
                ));
            }
            (y.len(), y.len())
        }
    };
    let bit = |i: usize| if i <= top { y[i - 1] } else { 0 };
    let mut out = vec![0u8; len];
    out[0] = 1;
    // run[i] = number of consecutive 1s at i+1, i+2, … (within 1..=top)
    let mut run_above = 0usize;
    for i in (3..=len.min(top)).rev() {
        if bit(i) == 1 && run_above % 2 == 0 {
            out[i - 1] = 1;
        }
        run_above = if bit(i) == 1 { run_above + 1 } else { 0 };
    }
    ChainWord::from_ascending(out)
}
