//! The weak-limit chain X^∞: limiting marginals φ_i, its transitions, the
//! total-variation distance between prefix laws, and γ_{i,∞}/δ_{i,∞}.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::chains::{ChainKind, ChainWord, PreparedChain};
use crate::coupling::{delta_inf, eta_star_theta};
use crate::error::{Error, Result};
use crate::moments::lambda_table;
use crate::numerics::{beta_fn, integrate_power_weighted, kummer_m, AccuracySpec, CompensatedSum};
use crate::oracle::enumerate_no11;
use crate::params::{PFamily, PSequence, ThetaSequence};

/// Default number of terms used when probing limit conditions.
pub const DEFAULT_PROBE_HORIZON: usize = 1_000_000;

/// Numerically established limit conditions, with the horizon used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitFlags {
    pub horizon: usize,
    /// Σ p_j = ∞, judged by the mass Σ_{N/2<j≤N} p_j.
    pub p_sum_diverges: bool,
    pub p_sum_last_half: f64,
    /// q_n → 0, judged by q_N.
    pub q_vanishes: bool,
    pub q_at_horizon: f64,
    /// Σ θ_iθ_{i+1}/((i−1+θ_i)(i+θ_{i+1})) < ∞.
    pub eqcond2: bool,
    pub eqcond2_partial: f64,
    pub eqcond2_last_half: f64,
    /// θ_n/n → 0.
    pub eqcond3: bool,
    /// Σ (θ_i/(i−1+θ_i))² < ∞.
    pub eqcond4: bool,
    pub eqcond4_partial: f64,
    pub eqcond4_last_half: f64,
}

/// Tolerance on the last-half mass of a series for calling it convergent.
const TAIL_SMALL: f64 = 1e-3;

fn theta_flags(theta: &ThetaSequence, horizon: usize) -> Result<(bool, f64, f64, bool, bool, f64, f64)> {
    let th = theta.table(horizon + 1)?;
    let pi = |i: usize| th[i] / (i as f64 - 1.0 + th[i]);
    let (mut c2, mut c2_half, mut c4, mut c4_half) = (CompensatedSum::new(), 0.0, CompensatedSum::new(), 0.0);
    for i in 1..=horizon {
        let a = pi(i) * pi(i + 1);
        let b = pi(i) * pi(i);
        c2.add(a);
        c4.add(b);
        if i > horizon / 2 {
            c2_half += a;
            c4_half += b;
        }
    }
    let eq3 = th[horizon] / horizon as f64 <= TAIL_SMALL;
    Ok((c2_half < TAIL_SMALL, c2.value(), c2_half, eq3, c4_half < TAIL_SMALL, c4.value(), c4_half))
}

/// Limit conditions for a θ sequence alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaProbe {
    pub horizon: usize,
    pub eqcond2: bool,
    pub eqcond2_partial: f64,
    pub eqcond3: bool,
    pub eqcond4: bool,
}

impl ThetaProbe {
    pub fn new(theta: &ThetaSequence, horizon: usize) -> Result<Self> {
        let (eqcond2, eqcond2_partial, _, eqcond3, eqcond4, _, _) = theta_flags(theta, horizon)?;
        Ok(ThetaProbe { horizon, eqcond2, eqcond2_partial, eqcond3, eqcond4 })
    }
}

/// A p sequence, its conditional-linked θ sequence, and probed flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitContext {
    pub p: PSequence,
    pub theta: ThetaSequence,
    pub flags: LimitFlags,
}

impl LimitContext {
    pub fn probe(p: &PSequence, horizon: usize) -> Result<Self> {
        if horizon < 16 {
            return Err(Error::WindowTooShort(format!("probe horizon {horizon} is below 16")));
        }
        let t = p.table(horizon)?;
        let half: f64 = t.p[horizon / 2 + 1..=horizon].iter().sum();
        let theta = ThetaSequence::conditional_from_p(p);
        let (eqcond2, eqcond2_partial, eqcond2_last_half, eqcond3, eqcond4, eqcond4_partial, eqcond4_last_half) =
            theta_flags(&theta, horizon - 1)?;
        let flags = LimitFlags {
            horizon,
            p_sum_diverges: half > 0.1,
            p_sum_last_half: half,
            q_vanishes: t.q[horizon] < TAIL_SMALL,
            q_at_horizon: t.q[horizon],
            eqcond2,
            eqcond2_partial,
            eqcond2_last_half,
            eqcond3,
            eqcond4,
            eqcond4_partial,
            eqcond4_last_half,
        };
        Ok(LimitContext { p: p.clone(), theta, flags })
    }

    fn require(&self, ok: bool, condition: &'static str) -> Result<()> {
        if ok {
            Ok(())
        } else {
            Err(Error::ConditionNotMet { condition, detail: format!("probe horizon {}", self.flags.horizon) })
        }
    }

    /// φ_i; needs Σ p = ∞.
    pub fn phi(&self, i: usize, acc: &AccuracySpec) -> Result<f64> {
        self.require(self.flags.p_sum_diverges, "sum of p_j diverges")?;
        phi(i, &self.p, acc)
    }

    /// TV between prefix laws; needs Σ p = ∞.
    pub fn tv_prefix(&self, n: usize, acc: &AccuracySpec) -> Result<f64> {
        self.require(self.flags.p_sum_diverges, "sum of p_j diverges")?;
        tv_prefix(n, &self.p, acc)
    }

    /// γ_{i,∞} of the linked θ sequence; needs the eqcond2 sum to converge.
    pub fn gamma_inf(&self, i: usize, acc: &AccuracySpec) -> Result<f64> {
        self.require(self.flags.eqcond2, "eqcond2 sum converges")?;
        gamma_inf_unchecked(i, &self.theta, acc)
    }
}

/// φ_i = lim_n P(X^n_i = 1) as the alternating series Σ_j (−1)^j Π_{l=i}^{i+j} q_l.
pub fn phi(i: usize, p: &PSequence, acc: &AccuracySpec) -> Result<f64> {
    match i {
        0 => Err(Error::IndexOutOfRange { what: "phi index", index: 0, allowed: "1..".into() }),
        1 => Ok(1.0),
        2 => Ok(0.0),
        _ => {
            let mut sum = CompensatedSum::new();
            let mut prod = 1.0;
            let stop = acc.abs_tol * 1e-4;
            for j in 0..acc.max_terms {
                prod *= p.q(i + j)?;
                sum.add(if j % 2 == 0 { prod } else { -prod });
                if prod < stop {
                    return Ok(sum.value());
                }
            }
            Err(Error::ConditionNotMet {
                condition: "sum of p_j diverges",
                detail: format!("products of q did not vanish within {} terms (last {prod:e})", acc.max_terms),
            })
        }
    }
}

/// φ_0..=φ_m: the series at the top index, then φ_i = q_i (1 − φ_{i+1})
/// downward (a contraction, since q_i < 1).
pub fn phi_table(p: &PSequence, m: usize, acc: &AccuracySpec) -> Result<Vec<f64>> {
    let mut out = vec![0.0; m.max(2) + 1];
    out[1] = 1.0;
    if m >= 3 {
        let t = p.table(m)?;
        out[m] = phi(m, p, acc)?;
        for i in (3..m).rev() {
            out[i] = t.q[i] * (1.0 - out[i + 1]);
        }
    }
    out.truncate(m + 1);
    Ok(out)
}

/// φ_i for the η chain: θ/(θ+i−1) · M(1, θ+i, −θ).
pub fn phi_eta(i: usize, theta: f64, acc: &AccuracySpec) -> Result<f64> {
    match i {
        1 => Ok(1.0),
        2 => Ok(0.0),
        _ => Ok(theta / (theta + i as f64 - 1.0) * kummer_m(1.0, theta + i as f64, -theta, acc)?),
    }
}

/// φ_i for the η chain by quadrature of θ∫e^{−θu}(1−u)^{θ+i−2} du.
pub fn phi_eta_integral(i: usize, theta: f64, acc: &AccuracySpec) -> Result<f64> {
    match i {
        1 => Ok(1.0),
        2 => Ok(0.0),
        _ => Ok(theta * integrate_power_weighted(|u| (-theta * u).exp(), 0.0, theta + i as f64 - 2.0, acc)?.value),
    }
}

/// φ_i for the η̃ chain: θe^θ λ_{i−1}(θ)/(θ+i−1) · M(θ+1, θ+i, −θ).
pub fn phi_eta_tilde(i: usize, theta: f64, acc: &AccuracySpec) -> Result<f64> {
    match i {
        1 => Ok(1.0),
        2 => Ok(0.0),
        _ => {
            let lam = lambda_table(theta, i);
            Ok(theta * theta.exp() * lam[i - 1] / (theta + i as f64 - 1.0)
                * kummer_m(theta + 1.0, theta + i as f64, -theta, acc)?)
        }
    }
}

/// φ_i using the closed form when the family has one, the series otherwise.
pub fn phi_best(i: usize, p: &PSequence, acc: &AccuracySpec) -> Result<f64> {
    match p.family {
        PFamily::Eta { theta } => phi_eta(i, theta, acc),
        PFamily::EtaTilde { theta } => phi_eta_tilde(i, theta, acc),
        _ => phi(i, p, acc),
    }
}

/// P(X^∞_{i+1} = 1 | X^∞_i = 0) = φ_{i+1}/(1 − φ_i). At i = 1 the state is 1
/// and the next state is 0, so 0 is returned.
pub fn xinf_transition(i: usize, p: &PSequence, acc: &AccuracySpec) -> Result<f64> {
    match i {
        0 => Err(Error::IndexOutOfRange { what: "transition index", index: 0, allowed: "1..".into() }),
        1 => Ok(0.0),
        _ => Ok(phi(i + 1, p, acc)? / (1.0 - phi(i, p, acc)?)),
    }
}

/// d_TV between the length-n prefix law of X^∞ and the law of X^n: φ_n·1{n>1}.
pub fn tv_prefix(n: usize, p: &PSequence, acc: &AccuracySpec) -> Result<f64> {
    if n <= 1 {
        return Ok(0.0);
    }
    phi(n, p, acc)
}

/// The same distance by enumerating both laws over words with w_1 = 1 and
/// no adjacent 1s.
pub fn tv_prefix_direct(n: usize, p: &PSequence) -> Result<f64> {
    if n <= 1 {
        return Ok(0.0);
    }
    let words = enumerate_no11(n)?;
    let prefix = PreparedChain::new(&ChainKind::XinfPrefix { p: p.clone() }, n)?;
    let finite = PreparedChain::new(&ChainKind::X { p: p.clone() }, n)?;
    let mut s = CompensatedSum::new();
    for w in &words {
        s.add((prefix.path_probability(w)? - finite.path_probability(w)?).abs());
    }
    Ok(0.5 * s.value())
}

/// Exact law of the length-m prefix of X^∞ as (word, probability) pairs.
pub fn xinf_prefix_law(m: usize, p: &PSequence) -> Result<Vec<(ChainWord, f64)>> {
    let prefix = PreparedChain::new(&ChainKind::XinfPrefix { p: p.clone() }, m)?;
    enumerate_no11(m)?.into_iter().map(|w| Ok((w.clone(), prefix.path_probability(&w)?))).collect()
}

/// γ_{i,∞}(θ) = P(Y_i = 0, no adjacent 1s above i), with the eqcond2 flag
/// probed first.
pub fn gamma_inf(i: usize, theta: &ThetaSequence, acc: &AccuracySpec) -> Result<f64> {
    let probe = ThetaProbe::new(theta, DEFAULT_PROBE_HORIZON)?;
    if !probe.eqcond2 {
        return Err(Error::ConditionNotMet {
            condition: "eqcond2 sum converges",
            detail: format!("partial sum {} at horizon {}", probe.eqcond2_partial, probe.horizon),
        });
    }
    gamma_inf_unchecked(i, theta, acc)
}

/// Backward iteration of γ_{k,∞} = π̄_k (γ_{k+1,∞} + π_{k+1} γ_{k+2,∞}) from a
/// horizon N, with π̄ = 1 − π. The two starting values use
/// γ_{k,∞} ≈ (1−π_k) exp(−Σ_{l>k} π_l π_{l+1}), whose error is O(N^{-2}).
/// N doubles until successive answers agree.
fn gamma_inf_unchecked(i: usize, theta: &ThetaSequence, acc: &AccuracySpec) -> Result<f64> {
    if i < 2 {
        return Err(Error::IndexOutOfRange { what: "gamma_inf index", index: i, allowed: "2..".into() });
    }
    let mut horizon = (4 * i).max(1024);
    let mut prev = gamma_inf_at(i, theta, horizon)?;
    loop {
        horizon *= 2;
        let next = gamma_inf_at(i, theta, horizon)?;
        if (next - prev).abs() <= acc.tolerance_for(next) {
            return Ok(next);
        }
        if horizon > (1 << 22) {
            return Err(Error::NonConvergence {
                what: "gamma_inf backward iteration",
                terms: horizon,
                partial_sum: next,
                last_term: next - prev,
            });
        }
        prev = next;
    }
}

fn gamma_inf_at(i: usize, theta: &ThetaSequence, horizon: usize) -> Result<f64> {
    let far = 16 * horizon;
    let th = theta.table(far + 1)?;
    let pi = |k: usize| th[k] / (k as f64 - 1.0 + th[k]);
    // T_k = Σ_{l≥k} π_l π_{l+1}, with a c²/far tail for π_l ≈ c/l.
    let c = pi(far) * far as f64;
    let mut tail = CompensatedSum::new();
    tail.add(c * c / far as f64);
    for l in ((horizon + 3)..far).rev() {
        tail.add(pi(l) * pi(l + 1));
    }
    let t_top = tail.value();
    let t_next = t_top + pi(horizon + 2) * pi(horizon + 3);
    let mut g2 = (1.0 - pi(horizon + 2)) * (-t_top).exp();
    let mut g1 = (1.0 - pi(horizon + 1)) * (-t_next).exp();
    for k in (i..=horizon).rev() {
        let g = (1.0 - pi(k)) * (g1 + pi(k + 1) * g2);
        g2 = g1;
        g1 = g;
    }
    Ok(g1)
}

/// z_{1,2}(θ) = (3 + θ ∓ √((1−θ)(1+3θ)))/2, complex conjugates when θ > 1.
pub fn z_roots(theta: f64) -> (Complex64, Complex64) {
    let disc = Complex64::new((1.0 - theta) * (1.0 + 3.0 * theta), 0.0).sqrt();
    let mid = Complex64::new((3.0 + theta) / 2.0, 0.0);
    (mid - disc / 2.0, mid + disc / 2.0)
}

/// δ_{i,∞}(θ) for the eta_star sequence with θ*_2 = `theta2_star`.
///
/// For i ≥ 4 the closed form M(1,θ+i−1,−θ) B(z_1+i−3, z_2+i−3)/B(i−2, θ+i−1);
/// i = 2 is δ_∞, and i = 3 follows from the backward recursion.
pub fn delta_i_inf(theta: f64, i: usize, theta2_star: f64, acc: &AccuracySpec) -> Result<f64> {
    if !(theta > 0.0) {
        return Err(Error::invalid("theta must be positive"));
    }
    match i {
        0 | 1 => Err(Error::IndexOutOfRange { what: "delta_i_inf index", index: i, allowed: "2..".into() }),
        2 => delta_inf(theta, theta2_star),
        3 => {
            let pi = |k: usize| {
                let t = eta_star_theta(theta, k);
                t / (k as f64 - 1.0 + t)
            };
            let d4 = delta_i_inf(theta, 4, theta2_star, acc)?;
            let d5 = delta_i_inf(theta, 5, theta2_star, acc)?;
            Ok((1.0 - pi(3)) * (d4 + pi(4) * d5))
        }
        _ => {
            let fi = i as f64;
            let (z1, z2) = z_roots(theta);
            let shift = Complex64::new(fi - 3.0, 0.0);
            let num = beta_fn(z1 + shift, z2 + shift)?;
            let den = beta_fn(Complex64::new(fi - 2.0, 0.0), Complex64::new(theta + fi - 1.0, 0.0))?;
            Ok(kummer_m(1.0, theta + fi - 1.0, -theta, acc)? * num / den)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn acc() -> AccuracySpec {
        AccuracySpec::default()
    }

    #[test]
    fn phi_examples() {
        let v = 1.0 - 2.0 * (-1.0f64).exp();
        let p = PSequence::eta(1.0).unwrap();
        assert!((phi(3, &p, &acc()).unwrap() - v).abs() < 1e-13);
        assert!((phi_eta(3, 1.0, &acc()).unwrap() - v).abs() < 1e-13);
        assert!((phi_eta_integral(3, 1.0, &acc()).unwrap() - v).abs() < 1e-11);
        let q = 0.3;
        let c = PSequence::tabulated(vec![1.0 - q], crate::params::TailRule::ConstantExtend).unwrap();
        assert!((phi(7, &c, &acc()).unwrap() - q / (1.0 + q)).abs() < 1e-13);
    }

    #[test]
    fn phi_brackets_and_fixed_point() {
        let p = PSequence::eta(0.5).unwrap();
        let t = phi_table(&p, 201, &acc()).unwrap();
        for i in 3..=100 {
            let (q, pn) = (p.q(i).unwrap(), p.p(i + 1).unwrap());
            assert!(q * pn < t[i] && t[i] < q);
        }
        for i in 3..=200 {
            assert!((p.q(i).unwrap() * (1.0 - t[i + 1]) - t[i]).abs() < 1e-12);
            assert!((t[i] - phi(i, &p, &acc()).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn closed_forms_match_series() {
        for &th in &[0.5, 1.0, 2.0] {
            let pe = PSequence::eta(th).unwrap();
            let pt = PSequence::eta_tilde(th).unwrap();
            for i in 3..=100 {
                assert!((phi_eta(i, th, &acc()).unwrap() - phi(i, &pe, &acc()).unwrap()).abs() < 1e-10);
                assert!((phi_eta_tilde(i, th, &acc()).unwrap() - phi(i, &pt, &acc()).unwrap()).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn tv_theorem_small() {
        for &th in &[0.5, 1.0] {
            let p = PSequence::eta(th).unwrap();
            for n in 3..=10 {
                let a = tv_prefix(n, &p, &acc()).unwrap();
                let b = tv_prefix_direct(n, &p).unwrap();
                assert!((a - b).abs() < 1e-12, "theta {th} n {n}: {a} vs {b}");
            }
        }
        assert_eq!(tv_prefix(2, &PSequence::eta(1.0).unwrap(), &acc()).unwrap(), 0.0);
    }

    #[test]
    fn context_flags() {
        let ctx = LimitContext::probe(&PSequence::eta(1.0).unwrap(), 100_000).unwrap();
        assert!(ctx.flags.p_sum_diverges && ctx.flags.q_vanishes && ctx.flags.eqcond2 && ctx.flags.eqcond4);
        let conv = PSequence::tabulated(vec![1e-9], crate::params::TailRule::ConstantExtend).unwrap();
        let ctx = LimitContext::probe(&conv, 1000).unwrap();
        assert!(!ctx.flags.p_sum_diverges);
        assert!(ctx.phi(5, &acc()).is_err());
    }

    #[test]
    fn delta_inf_dual() {
        let th = ThetaSequence::eta_star(0.8).unwrap();
        let a = gamma_inf(5, &th, &acc()).unwrap();
        let b = delta_i_inf(0.8, 5, 1.0, &acc()).unwrap();
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        assert!((b - 0.7064404425).abs() < 1e-9);
        let two = gamma_inf(2, &th, &acc()).unwrap();
        assert!((two - delta_i_inf(0.8, 2, 1.0, &acc()).unwrap()).abs() < 1e-9);
        let three = gamma_inf(3, &th, &acc()).unwrap();
        assert!((three - delta_i_inf(0.8, 3, 1.0, &acc()).unwrap()).abs() < 1e-9);
        let g200 = gamma_inf(200, &ThetaSequence::eta_star(1.0).unwrap(), &acc()).unwrap();
        assert!(g200 > 0.99);
    }
}
