//! Means and variances of cycle counts, their limits, and the ESF
//! derangement probabilities λ_n(θ).

use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use serde::{Deserialize, Serialize};

use crate::chains::marginal_table;
use crate::error::{Error, Result};
use crate::numerics::{
    generalized_pfq, harmonic_h, integrate, integrate_2d, integrate_with_breaks, kummer_m, ln_factorial,
    ln_gamma, ln_rising_factorial, rising_factorial, AccuracySpec, CompensatedSum, Quadrature, EULER_GAMMA,
};
use crate::params::{PSequence, PTable};

/// A limit value with a one-sided error bound and the truncation order used.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitEstimate {
    pub value: f64,
    pub error_bound: f64,
    /// Truncation order of an alternating series, `None` for quadrature.
    pub m: Option<usize>,
}

/// How a limit is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitMethod {
    Integral,
    Series { m: usize },
}

fn lambda_cache() -> &'static RwLock<HashMap<u64, Arc<Vec<f64>>>> {
    static CACHE: OnceLock<RwLock<HashMap<u64, Arc<Vec<f64>>>>> = OnceLock::new();
    CACHE.get_or_init(|| RwLock::new(HashMap::new()))
}

/// λ_0..=λ_n(θ) from the recursion
/// λ_k = (k−1)/(k−1+θ) (λ_{k−1} + θ/(k−2+θ) λ_{k−2}), λ_0 = 1, λ_1 = 0.
///
/// Tables are cached per θ and grown on demand.
pub fn lambda_table(theta: f64, n: usize) -> Arc<Vec<f64>> {
    let key = theta.to_bits();
    if let Some(t) = lambda_cache().read().expect("lambda cache poisoned").get(&key) {
        if t.len() > n {
            return Arc::clone(t);
        }
    }
    let mut guard = lambda_cache().write().expect("lambda cache poisoned");
    let mut table: Vec<f64> = match guard.get(&key) {
        Some(t) if t.len() > n => return Arc::clone(t),
        Some(t) => t.as_ref().clone(),
        None => vec![1.0, 0.0],
    };
    let target = (n + 1).max(table.len() * 2).max(64);
    while table.len() < target {
        let k = table.len() as f64;
        let next = (k - 1.0) / (k - 1.0 + theta) * (table[table.len() - 1] + theta / (k - 2.0 + theta) * table[table.len() - 2]);
        table.push(next);
    }
    let arc = Arc::new(table);
    guard.insert(key, Arc::clone(&arc));
    arc
}

/// λ_n(θ), the probability that an ESF(θ) permutation of size n has no fixed
/// point, from n!/Γ(n+θ) Σ_j (−1)^j θ^j/j! Γ(n+θ−j)/(n−j)!.
///
/// The terms are generated by their ratio, so no Γ value is formed.
pub fn lambda_esf(n: usize, theta: f64) -> Result<f64> {
    if !(theta > 0.0) {
        return Err(Error::invalid("theta must be positive"));
    }
    if n == 0 {
        return Ok(1.0);
    }
    let nf = n as f64;
    let mut term = 1.0;
    let mut sum = CompensatedSum::new();
    sum.add(term);
    for j in 0..n {
        let jf = j as f64;
        term *= -theta * (nf - jf) / ((jf + 1.0) * (nf + theta - jf - 1.0));
        sum.add(term);
    }
    Ok(sum.value().max(0.0))
}

/// E[K_n] as the double alternating sum over products of q.
pub fn mean_k(n: usize, p: &PSequence) -> Result<f64> {
    if n < 2 {
        return Err(Error::invalid("mean_k needs n >= 2"));
    }
    if n <= 3 {
        return Ok(1.0);
    }
    let t = p.table(n)?;
    let mut total = CompensatedSum::new();
    for i in 1..n {
        let mut prod = 1.0;
        for j in 0..(n - i) {
            prod *= t.q[i + j];
            if prod == 0.0 {
                break;
            }
            total.add(if j % 2 == 0 { prod } else { -prod });
        }
    }
    Ok(total.value())
}

const PROBE_HORIZON: usize = 1 << 18;

/// lim E[K_n] − α log n = αγ + ψ_α(p) + Σ_j (−1)^j ā_j, with the alternating
/// tail truncated after 2m−1 terms and bounded by ā_{2m}.
pub fn mean_k_asymptotic(p: &PSequence, alpha: f64, m: usize) -> Result<LimitEstimate> {
    if m == 0 {
        return Err(Error::invalid("truncation order m must be at least 1"));
    }
    let big = 2 * PROBE_HORIZON;
    let t = p.table(big + 2 * m + 2)?;
    let nq = big as f64 * t.q[big];
    if (nq - alpha).abs() > 1e-3 * alpha.max(1.0) {
        return Err(Error::ConditionNotMet {
            condition: "n q_n -> alpha",
            detail: format!("n q_n = {nq} at n = {big}, alpha = {alpha}"),
        });
    }
    let psi = psi_alpha(&t, alpha)?;
    let abar = |j: usize| -> f64 {
        let mut s = CompensatedSum::new();
        for i in 3..=big {
            let mut prod = 1.0;
            for l in i..=i + j {
                prod *= t.q[l];
            }
            s.add(prod);
        }
        // Σ_{i>N} α^{j+1}/i^{j+1} ≈ α^{j+1}/(j N^j)
        s.add(alpha.powi(j as i32 + 1) / (j as f64 * (big as f64).powi(j as i32)));
        s.value()
    };
    let mut tail = CompensatedSum::new();
    for j in 1..2 * m {
        let a = abar(j);
        tail.add(if j % 2 == 0 { a } else { -a });
    }
    Ok(LimitEstimate {
        value: alpha * EULER_GAMMA + psi + tail.value(),
        error_bound: abar(2 * m),
        m: Some(m),
    })
}

/// ψ_α(p) = Σ_i (q_i − α/i), Richardson-extrapolated from two horizons.
fn psi_alpha(t: &PTable, alpha: f64) -> Result<f64> {
    let partial = |n: usize| -> f64 {
        let mut s = CompensatedSum::new();
        for i in 1..=n {
            s.add(t.q[i] - alpha / i as f64);
        }
        s.value()
    };
    let (a, b) = (partial(PROBE_HORIZON), partial(2 * PROBE_HORIZON));
    let est = 2.0 * b - a;
    if (b - a).abs() > 1e-3 {
        return Err(Error::Divergent(format!(
            "psi_alpha partial sums still moving: {a} at {PROBE_HORIZON}, {b} at {}",
            2 * PROBE_HORIZON
        )));
    }
    Ok(est)
}

/// ψ for the η chain: 1 − θH_{θ+1}.
pub fn psi_eta(theta: f64) -> Result<f64> {
    Ok(1.0 - theta * harmonic_h(theta + 1.0)?)
}

/// ā_j for the η chain: θ^{j+1}/(j (θ+2)_{(j)}).
pub fn abar_eta(theta: f64, j: usize) -> Result<f64> {
    Ok(theta.powi(j as i32 + 1) / (j as f64 * rising_factorial(theta + 2.0, j)?))
}

/// E[K_n] for the η chain from its closed form.
pub fn mean_k_eta(n: usize, theta: f64) -> Result<f64> {
    if !(theta > 0.0) {
        return Err(Error::invalid("theta must be positive"));
    }
    if n < 2 {
        return Err(Error::invalid("mean_k_eta needs n >= 2"));
    }
    if n <= 3 {
        return Ok(1.0);
    }
    let mut s = CompensatedSum::new();
    s.add(1.0);
    for i in 3..n {
        s.add(theta / (theta + i as f64 - 1.0));
    }
    for i in 3..=n.saturating_sub(2) {
        // θ^j/(θ+i−1)_{(j)} built up in j
        let mut term = theta / (theta + i as f64 - 1.0);
        for j in 2..=(n - i) {
            term *= theta / (theta + i as f64 + j as f64 - 2.0);
            if j <= n - 3 {
                s.add(if j % 2 == 0 { -term } else { term });
            }
        }
    }
    Ok(s.value())
}

/// lim E[K_n^η] − θ log n.
///
/// The integral method uses 1 − θH_{θ+1} + θγ − θ²∫∫e^{−θxy}(1−x)^{θ+1};
/// the series method truncates Σ(−1)^j ā_j after 2m−1 terms with bound ā_{2m}.
pub fn mean_k_eta_limit(theta: f64, method: LimitMethod, acc: &AccuracySpec) -> Result<LimitEstimate> {
    if !(theta > 0.0) {
        return Err(Error::invalid("theta must be positive"));
    }
    let head = psi_eta(theta)? + theta * EULER_GAMMA;
    match method {
        LimitMethod::Series { m } => {
            if m == 0 {
                return Err(Error::invalid("truncation order m must be at least 1"));
            }
            let mut s = CompensatedSum::new();
            s.add(head);
            for j in 1..2 * m {
                let a = abar_eta(theta, j)?;
                s.add(if j % 2 == 0 { a } else { -a });
            }
            Ok(LimitEstimate { value: s.value(), error_bound: abar_eta(theta, 2 * m)?, m: Some(m) })
        }
        LimitMethod::Integral => {
            let q = integrate_2d(
                |x, y| (-theta * x * y).exp() * (1.0 - x).powf(theta + 1.0),
                (0.0, 1.0),
                (0.0, 1.0),
                acc,
            )?;
            Ok(LimitEstimate { value: head - theta * theta * q.value, error_bound: theta * theta * q.error, m: None })
        }
    }
}

/// The same limit through −θ²/(θ+2) ₂F₂(1,1;2,θ+3;−θ).
pub fn mean_k_eta_limit_hypergeometric(theta: f64, acc: &AccuracySpec) -> Result<f64> {
    let f = generalized_pfq(&[1.0, 1.0], &[2.0, theta + 3.0], -theta, acc)?;
    Ok(psi_eta(theta)? + theta * EULER_GAMMA - theta * theta / (theta + 2.0) * f)
}

/// q_{l−j} Π_{t=l−j+1}^{l−2} p_t, the probability of the j−1 zeros and the
/// closing 1 below a 1 at index l.
fn gap_factor(t: &PTable, j: usize, l: usize) -> f64 {
    let mut g = t.q[l - j];
    for s in (l - j + 1)..=(l - 2) {
        g *= t.p[s];
    }
    g
}

/// E[C_j(n)] from the boundary term plus the double alternating sum.
pub fn mean_cj(n: usize, j: usize, p: &PSequence) -> Result<f64> {
    if j < 2 || j > n {
        return Err(Error::invalid(format!("mean_cj needs 2 <= j <= n, got j = {j}, n = {n}")));
    }
    let t = p.table(n)?;
    let mut total = CompensatedSum::new();
    total.add(gap_factor(&t, j, n + 1));
    for i in (j + 1)..n {
        let g = gap_factor(&t, j, i);
        let mut prod = 1.0;
        for k in 0..(n - i) {
            prod *= t.q[i + k];
            total.add(if k % 2 == 0 { g * prod } else { -g * prod });
        }
    }
    Ok(total.value())
}

fn ratio_rising(a: f64, ma: usize, b: f64, mb: usize) -> Result<f64> {
    let (la, sa) = ln_rising_factorial(a, ma)?;
    let (lb, sb) = ln_rising_factorial(b, mb)?;
    Ok(sa * sb * (la - lb).exp())
}

/// E[C_j(n)] for the η chain from its closed form (with the j = n and
/// j = n−1 special cases).
pub fn mean_cj_eta(n: usize, j: usize, theta: f64) -> Result<f64> {
    if !(theta > 0.0) {
        return Err(Error::invalid("theta must be positive"));
    }
    if j < 2 || j > n {
        return Err(Error::invalid(format!("mean_cj_eta needs 2 <= j <= n, got j = {j}, n = {n}")));
    }
    if j == n {
        if n == 2 {
            return Ok(1.0);
        }
        return Ok((ln_factorial(n - 2) - ln_rising_factorial(theta + 2.0, n - 3)?.0).exp());
    }
    if j == n - 1 {
        return Ok(0.0);
    }
    let (nf, jf) = (n as f64, j as f64);
    let mut s = CompensatedSum::new();
    s.add(theta * ratio_rising(nf - jf + 1.0, j - 2, theta + nf - jf, j - 1)?);
    // (j−2)!/(θ+2)_{(j−3)}, with the j = 2 convention (θ+2)_{(−1)} = 1
    let lead = if j == 2 { 1.0 } else { (ln_factorial(j - 2) - ln_rising_factorial(theta + 2.0, j - 3)?.0).exp() };
    let mut term = lead;
    for k in 1..(n - j) {
        term *= theta / (theta + jf + k as f64 - 1.0);
        s.add(if k % 2 == 1 { term } else { -term });
    }
    for i in (j + 3)..n {
        let fi = i as f64;
        let base = ratio_rising(fi - jf, j - 2, theta + fi - jf - 1.0, j - 1)?;
        // (−θ)^{k+1}/(θ+i−1)_{(k)}
        let mut term = theta * base;
        for k in 1..=(n - i) {
            term *= theta / (theta + fi + k as f64 - 2.0);
            s.add(if k % 2 == 1 { term } else { -term });
        }
    }
    Ok(s.value())
}

/// ∫₀¹ e^{−θx}(1−x)^c dx = M(1, c+2, −θ)/(c+1).
fn exp_power_integral(theta: f64, c: f64, acc: &AccuracySpec) -> Result<f64> {
    Ok(kummer_m(1.0, c + 2.0, -theta, acc)? / (c + 1.0))
}

/// b̄_k(θ, j) of the alternating series for lim E[C_j^η].
pub fn bbar(theta: f64, j: usize, k: usize) -> Result<f64> {
    let (jf, kf) = (j as f64, k as f64);
    let first = theta.powi(k as i32)
        * (ln_factorial(k - 1) - ln_rising_factorial(theta + 1.0, k)?.0 - ln_rising_factorial(jf - 1.0, k + 1)?.0).exp()
        * (kf * (jf - 1.0) + theta * (kf + jf - 1.0));
    let second = theta.powi(k as i32)
        * (ln_factorial(j - 2) - ln_rising_factorial(theta + 1.0, k + j)?.0).exp()
        * ((kf - 1.0 + (theta + 1.0) * jf) * (theta + jf) - kf);
    Ok(first - second)
}

/// lim_{n→∞} E[C_j^η(n)] by the double integral or the alternating series.
pub fn mean_cj_eta_limit(theta: f64, j: usize, method: LimitMethod, acc: &AccuracySpec) -> Result<LimitEstimate> {
    if !(theta > 0.0) {
        return Err(Error::invalid("theta must be positive"));
    }
    if j < 2 {
        return Err(Error::invalid("mean_cj_eta_limit needs j >= 2"));
    }
    let jf = j as f64;
    match method {
        LimitMethod::Series { m } => {
            if m == 0 {
                return Err(Error::invalid("truncation order m must be at least 1"));
            }
            let mut s = CompensatedSum::new();
            if j >= 3 {
                let lead = (ln_factorial(j - 2) - ln_rising_factorial(theta + 2.0, j - 3)?.0).exp();
                s.add(theta * lead * exp_power_integral(theta, theta + jf - 1.0, acc)?);
            } else {
                s.add(theta * exp_power_integral(theta, theta + 1.0, acc)?);
            }
            for k in 1..=2 * m {
                let b = bbar(theta, j, k)?;
                s.add(if k % 2 == 1 { b } else { -b });
            }
            Ok(LimitEstimate { value: s.value(), error_bound: bbar(theta, j, 2 * m + 1)?, m: Some(m) })
        }
        LimitMethod::Integral => {
            let q = limit_cj_double_integral(theta, j, acc)?;
            let mut value = q.value;
            let mut err = q.error;
            if j >= 3 {
                let c = theta + jf - 1.0;
                let pre = theta.powi(3) * (ln_factorial(j - 2) - ln_rising_factorial(theta, j + 1)?.0).exp();
                value += pre * (c - (c * c + jf - 1.0) * exp_power_integral(theta, theta + jf, acc)?);
                err += pre * (c * c + jf) * acc.tolerance_for(1.0);
            } else {
                value -= theta * theta / (theta + 1.0) * exp_power_integral(theta, theta + 2.0, acc)?;
                err += acc.tolerance_for(1.0);
            }
            Ok(LimitEstimate { value, error_bound: err, m: None })
        }
    }
}

/// ∫∫ θ² e^{−θy} x^{θ−1}(1−x)^{j−2}(1−y)^{θ+j−1}/(1−x+xy)^{j−1} dx dy.
///
/// The x^{θ−1} singularity is removed on [0, ½] by s = x^θ; on [½, 1] the
/// substitution x = 1 − v² smooths the (1−x)^{j−2} end. For x near 1 the
/// inner integrand peaks at y ≈ (1−x)/x, so the y axis is split on a
/// geometric grid anchored there.
fn limit_cj_double_integral(theta: f64, j: usize, acc: &AccuracySpec) -> Result<Quadrature> {
    let jf = j as f64;
    let inner_acc = acc.tightened(0.01);
    let inner = |x: f64| -> Result<f64> {
        let eps = (1.0 - x) / x;
        let mut pts = vec![0.0];
        let mut b = eps;
        while b < 1.0 {
            pts.push(b);
            b *= 4.0;
        }
        pts.push(1.0);
        let f = |y: f64| {
            theta * theta * (-theta * y).exp() * (1.0 - y).powf(theta + jf - 1.0) / (1.0 - x + x * y).powf(jf - 1.0)
        };
        Ok(integrate_with_breaks(f, &pts, &inner_acc)?.value)
    };
    let mut failure = None;
    let mut guard = |r: Result<f64>| match r {
        Ok(v) => v,
        Err(e) => {
            failure.get_or_insert(e);
            0.0
        }
    };
    // Left: x = s^{1/θ}, x^{θ−1} dx = ds/θ.
    let upper = 0.5f64.powf(theta);
    let left = integrate(
        |s| {
            if s == 0.0 {
                return 0.0;
            }
            let x = s.powf(1.0 / theta);
            guard(inner(x)) * (1.0 - x).powf(jf - 2.0) / theta
        },
        0.0,
        upper,
        acc,
    )?;
    let mut failure2 = None;
    let mut guard2 = |r: Result<f64>| match r {
        Ok(v) => v,
        Err(e) => {
            failure2.get_or_insert(e);
            0.0
        }
    };
    // Right: x = 1 − v², dx = 2v dv.
    let right = integrate(
        |v| {
            if v == 0.0 {
                return 0.0;
            }
            let x = 1.0 - v * v;
            guard2(inner(x)) * x.powf(theta - 1.0) * v.powf(2.0 * (jf - 2.0)) * 2.0 * v
        },
        0.0,
        0.5f64.sqrt(),
        acc,
    )?;
    if let Some(e) = failure.or(failure2) {
        return Err(e);
    }
    Ok(Quadrature {
        value: left.value + right.value,
        error: left.error + right.error + inner_acc.tolerance_for(left.value + right.value),
        evaluations: left.evaluations + right.evaluations,
    })
}

/// Pattern probability R^{(m)}_{j,l}: a j-cycle closed by 1s at l and l−j in
/// the chain of horizon m. Zero when m < j.
fn pattern_prob(t: &PTable, marg: &[f64], j: usize, m: usize, l: usize) -> f64 {
    if m < j {
        return 0.0;
    }
    if l == m + 1 {
        return gap_factor(t, j, m + 1);
    }
    if l >= j + 1 && l < m {
        return marg[l] * gap_factor(t, j, l);
    }
    0.0
}

/// Var(C_j(n)) assembled from the variance display
/// Σ R(1−R) + 2 Σ_{l ≤ i−j} R^{(n)}_{j,i} R^{(i−j−1)}_{j,l} − 2 Σ_{l<i} R_i R_l,
/// where R^{(m)} is the pattern probability computed with horizon m.
pub fn second_moments(n: usize, j: usize, p: &PSequence) -> Result<f64> {
    if j < 2 || j > n {
        return Err(Error::invalid(format!("second_moments needs 2 <= j <= n, got j = {j}, n = {n}")));
    }
    let t = p.table(n)?;
    let marg_n = marginal_table(p, n)?;
    let r: Vec<f64> = (0..=n + 1).map(|i| if i > j { pattern_prob(&t, &marg_n, j, n, i) } else { 0.0 }).collect();
    let mut var = CompensatedSum::new();
    for &ri in &r[j + 1..] {
        var.add(ri * (1.0 - ri));
    }
    for i in (j + 1)..=(n + 1) {
        if r[i] == 0.0 || i < 2 * j + 1 {
            continue;
        }
        let m = i - j - 1;
        let marg_m = if m >= 2 { marginal_table(p, m)? } else { vec![0.0; m + 1] };
        for l in (j + 1)..=(i - j) {
            var.add(2.0 * r[i] * pattern_prob(&t, &marg_m, j, m, l));
        }
    }
    let mut prefix = 0.0;
    for &ri in &r[j + 1..] {
        var.add(-2.0 * ri * prefix);
        prefix += ri;
    }
    Ok(var.value())
}

/// Cov(η_j, η_i) for 2 < i < j < n−1 from the two-alternating-sum display.
///
/// Each factor Γ(θ+a−1)/θ^{a−1} · Σ_{l≥b}(−1)^l θ^l/Γ(θ+l) is summed as a
/// ratio series so no Γ value is formed.
pub fn cov_eta(n: usize, i: usize, j: usize, theta: f64) -> Result<f64> {
    if !(2 < i && i < j && j + 1 < n) {
        return Err(Error::invalid(format!("cov_eta needs 2 < i < j < n-1, got i = {i}, j = {j}, n = {n}")));
    }
    // Σ_{l=b}^{n−1} (−1)^{l} θ^{l−a+1} Γ(θ+a−1)/Γ(θ+l)
    let scaled = |a: usize, b: usize| -> f64 {
        let (af, bf) = (a as f64, b as f64);
        let ln0 = (bf - af + 1.0) * theta.ln() + ln_gamma(theta + af - 1.0) - ln_gamma(theta + bf);
        let mut term = ln0.exp();
        let mut s = CompensatedSum::new();
        for l in b..n {
            s.add(if l % 2 == 0 { term } else { -term });
            term *= theta / (theta + l as f64);
        }
        s.value()
    };
    let sign = if (i + j + 1) % 2 == 0 { 1.0 } else { -1.0 };
    Ok(sign * scaled(j, j) * scaled(i, j - 1))
}
