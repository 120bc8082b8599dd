//! Signed-model statistics built on the unsigned cycle laws: orientation
//! weights ω_{ki}, the counts C_{ki} and C*_j, the number Λ_n of children
//! looking in, and ordered circle probabilities with orientations.

use serde::{Deserialize, Serialize};

use crate::chains::{cycle_statistics, ChainKind, SignedStep, SignedWord};
use crate::coupling::ordered_cycle_prefix_prob;
use crate::dist::DistTable;
use crate::error::{Error, Result};
use crate::numerics::{ln_factorial, CompensatedSum};
use crate::oracle::{exact_law, CycleCountMoments};
use crate::params::ThetaSequence;

fn binom(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    (ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)).exp().round()
}

/// The probability ω_{ki} that a k-circle has exactly i children looking in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum OrientationWeights {
    /// The leader looks in; each other child independently with probability κ.
    Binomial { kappa: f64 },
    /// Rows ω_{k·} for k = 1..; `rows[k-1][i-1]` = ω_{ki}.
    Custom { rows: Vec<Vec<f64>> },
}

impl OrientationWeights {
    pub fn binomial(kappa: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&kappa) {
            return Err(Error::invalid(format!("kappa must lie in [0,1], got {kappa}")));
        }
        Ok(OrientationWeights::Binomial { kappa })
    }

    pub fn custom(rows: Vec<Vec<f64>>) -> Result<Self> {
        for (k, row) in rows.iter().enumerate() {
            if row.len() != k + 1 {
                return Err(Error::invalid(format!("row {} must have {} entries", k + 1, k + 1)));
            }
            if row.iter().any(|w| !(*w >= 0.0)) {
                return Err(Error::invalid(format!("row {} has a negative weight", k + 1)));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-12 {
                return Err(Error::invalid(format!("row {} sums to {s}", k + 1)));
            }
        }
        Ok(OrientationWeights::Custom { rows })
    }

    pub fn kappa(&self) -> Option<f64> {
        match self {
            OrientationWeights::Binomial { kappa } => Some(*kappa),
            OrientationWeights::Custom { .. } => None,
        }
    }
}

/// ω_{ki} for 1 ≤ i ≤ k.
pub fn omega(k: usize, i: usize, weights: &OrientationWeights) -> Result<f64> {
    if i == 0 || i > k {
        return Err(Error::IndexOutOfRange { what: "omega index i", index: i, allowed: format!("1..={k}") });
    }
    match weights {
        OrientationWeights::Binomial { kappa } => {
            Ok(binom(k - 1, i - 1) * kappa.powi(i as i32 - 1) * (1.0 - kappa).powi((k - i) as i32))
        }
        OrientationWeights::Custom { rows } => rows
            .get(k - 1)
            .map(|r| r[i - 1])
            .ok_or_else(|| Error::IndexOutOfRange { what: "omega row k", index: k, allowed: format!("1..={}", rows.len()) }),
    }
}

/// P(C_{ki} = ℓ) = Σ_m C(m,ℓ) ω^ℓ (1−ω)^{m−ℓ} P(C_k = m), zero when kℓ > n.
pub fn cki_distribution(
    k: usize,
    i: usize,
    ell: usize,
    n: usize,
    weights: &OrientationWeights,
    k_law: &DistTable<usize>,
) -> Result<f64> {
    let w = omega(k, i, weights)?;
    if k * ell > n {
        return Ok(0.0);
    }
    let mut s = CompensatedSum::new();
    for (&m, &pm) in &k_law.entries {
        if m < ell || pm == 0.0 {
            continue;
        }
        let tail = if m == ell { 1.0 } else { (1.0 - w).powi((m - ell) as i32) };
        s.add(binom(m, ell) * w.powi(ell as i32) * tail * pm);
    }
    Ok(s.value())
}

/// Exact law of C_k(n) for a derangement kind, by enumeration.
pub fn cycle_count_law(kind: &ChainKind, n: usize, k: usize) -> Result<DistTable<usize>> {
    let law = exact_law(kind, n)?;
    let mut out = DistTable::new();
    for (w, p) in &law.entries {
        out.add(cycle_statistics(w)?.cycle_type.count(k), *p);
    }
    Ok(out)
}

/// Exact law of K_n for a kind, by enumeration.
pub fn k_law_exact(kind: &ChainKind, n: usize) -> Result<DistTable<usize>> {
    Ok(exact_law(kind, n)?.map(|w| w.count_ones()))
}

/// E[C*_j] and Cov(C*_i, C*_j).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CStarMoments {
    pub mean_i: f64,
    pub mean_j: f64,
    pub cov: f64,
}

/// Moments of C*_j = Σ_k C_{kj} from the moments of the C_k.
///
/// The covariance is Σ ω_{ki}ω_{k'j} Cov(C_k, C_{k'}) plus the expected
/// conditional covariance of the multinomial split, which is
/// −Σ ω_{ki}ω_{kj} E C_k off the diagonal and Σ ω_{kj}(1 − ω_{kj}) E C_k on it.
pub fn cstar_moments(i: usize, j: usize, weights: &OrientationWeights, m: &CycleCountMoments) -> Result<CStarMoments> {
    let n = m.n;
    if i == 0 || j == 0 || i > n || j > n {
        return Err(Error::IndexOutOfRange { what: "cstar index", index: i.max(j), allowed: format!("1..={n}") });
    }
    let w = |k: usize, a: usize| if a > k { Ok(0.0) } else { omega(k, a, weights) };
    let mut mean_i = CompensatedSum::new();
    let mut mean_j = CompensatedSum::new();
    let mut cov = CompensatedSum::new();
    for k in 1..=n {
        mean_i.add(w(k, i)? * m.mean[k]);
        mean_j.add(w(k, j)? * m.mean[k]);
        for k2 in 1..=n {
            cov.add(w(k, i)? * w(k2, j)? * m.cov[k][k2]);
        }
        let wi = w(k, i)?;
        let wj = w(k, j)?;
        cov.add(-wi * wj * m.mean[k]);
        if i == j {
            cov.add(wj * m.mean[k]);
        }
    }
    Ok(CStarMoments { mean_i: mean_i.value(), mean_j: mean_j.value(), cov: cov.value() })
}

/// The law of Λ_n and its mean by two routes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaTotal {
    pub law: DistTable<usize>,
    pub mean_from_law: f64,
    /// nκ + (1−κ) E[K_n].
    pub mean_identity: f64,
}

/// P(Λ_n = r) = Σ_k C(n−k, r−k) κ^{r−k} (1−κ)^{n−r} P(K_n = k).
pub fn lambda_total(n: usize, kappa: f64, k_law: &DistTable<usize>) -> Result<LambdaTotal> {
    if !(0.0..=1.0).contains(&kappa) {
        return Err(Error::invalid(format!("kappa must lie in [0,1], got {kappa}")));
    }
    let mut law = DistTable::new();
    for r in 0..=n {
        let mut s = CompensatedSum::new();
        for (&k, &pk) in &k_law.entries {
            if k > r || k > n {
                continue;
            }
            s.add(binom(n - k, r - k) * kappa.powi((r - k) as i32) * (1.0 - kappa).powi((n - r) as i32) * pk);
        }
        if s.value() > 0.0 {
            law.add(r, s.value());
        }
    }
    let mean_from_law = law.mean();
    let mean_identity = n as f64 * kappa + (1.0 - kappa) * k_law.mean();
    Ok(LambdaTotal { law, mean_from_law, mean_identity })
}

/// P(A*_1 = a*_1, …, A*_k = a*_k, K > k) for the Feller coupling with
/// orientations: Σ over r_l ≥ a*_l, Σ r_l < n, of the ordered-cycle
/// probability times Π ω_{r_l a*_l}.
pub fn ordered_star_prob(a_star: &[usize], n: usize, theta: &ThetaSequence, weights: &OrientationWeights) -> Result<f64> {
    if a_star.is_empty() || a_star.iter().any(|a| *a == 0) {
        return Err(Error::invalid("ordered_star_prob needs positive a*"));
    }
    if a_star.iter().sum::<usize>() >= n {
        return Err(Error::invalid("ordered_star_prob needs a*_1 + ... + a*_k < n"));
    }
    fn rec(
        a_star: &[usize],
        n: usize,
        theta: &ThetaSequence,
        weights: &OrientationWeights,
        r: &mut Vec<usize>,
        used: usize,
        sum: &mut CompensatedSum,
    ) -> Result<()> {
        let depth = r.len();
        if depth == a_star.len() {
            let mut w = ordered_cycle_prefix_prob(r, n, theta)?;
            for (rl, al) in r.iter().zip(a_star) {
                w *= omega(*rl, *al, weights)?;
            }
            sum.add(w);
            return Ok(());
        }
        let reserve: usize = a_star[depth + 1..].iter().sum();
        let mut rl = a_star[depth];
        while used + rl + reserve < n {
            r.push(rl);
            rec(a_star, n, theta, weights, r, used + rl, sum)?;
            r.pop();
            rl += 1;
        }
        Ok(())
    }
    let mut sum = CompensatedSum::new();
    rec(a_star, n, theta, weights, &mut Vec::new(), 0, &mut sum)?;
    Ok(sum.value())
}

/// (length, number looking in) for each circle of a signed word, top circle
/// first. A circle's leader looks in; the others look in iff their step is +0.
pub fn signed_circle_orientations(word: &SignedWord) -> Result<Vec<(usize, usize)>> {
    let stats = cycle_statistics(&word.projection())?;
    let mut out = Vec::with_capacity(stats.k);
    let mut top = word.n() + 1;
    for len in stats.lengths {
        let bottom = top - len;
        let inside = ((bottom + 1)..top).filter(|&pos| word.steps[pos - 1] == SignedStep::PlusZero).count();
        out.push((len, inside + 1));
        top = bottom;
    }
    Ok(out)
}
