//! Parameter sequences θ and p, and the maps that link them.
//!
//! Index conventions are fixed: θ_1 = 1, p_1 = 0 and p_2 = 1. The value θ_2
//! is a free knob (default 1); conditioning on Δ_n forces index 2 to 0, so
//! conditional laws do not depend on it.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moments::lambda_table;

/// What a tabulated sequence does when probed past its stored length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailRule {
    ConstantExtend,
    Reject,
}

/// Families of θ sequences. Tabulated values start at θ_3.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ThetaFamily {
    Constant { theta: f64 },
    EtaStar { theta: f64 },
    Holst { a: f64, b: f64, c: f64 },
    Tabulated { values: Vec<f64>, tail: TailRule },
    /// θ_i = (i−1) q_i / (p_i p_{i−1}).
    ConditionalFromP { p: Box<PSequence> },
    /// θ_i = (i−1) q_i / p_i.
    PushforwardFromP { p: Box<PSequence> },
}

/// A θ sequence with θ_1 = 1, a configurable θ_2, and an optional global
/// scale s that multiplies every entry (θ_1 included).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaSequence {
    pub family: ThetaFamily,
    pub theta2: f64,
    pub scale: f64,
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be positive and finite, got {v}")))
    }
}

fn tab_lookup(values: &[f64], tail: TailRule, offset: usize, i: usize, what: &'static str) -> Result<f64> {
    let k = i - offset;
    match values.get(k) {
        Some(v) => Ok(*v),
        None => match (tail, values.last()) {
            (TailRule::ConstantExtend, Some(v)) => Ok(*v),
            _ => Err(Error::IndexOutOfRange {
                what,
                index: i,
                allowed: format!("{offset}..={}", offset + values.len().saturating_sub(1)),
            }),
        },
    }
}

impl ThetaSequence {
    pub fn new(family: ThetaFamily) -> Self {
        let theta2 = match &family {
            ThetaFamily::Holst { a, b, .. } => a / (b - a + 1.0),
            _ => 1.0,
        };
        ThetaSequence { family, theta2, scale: 1.0 }
    }

    pub fn constant(theta: f64) -> Result<Self> {
        check_positive("theta", theta)?;
        Ok(Self::new(ThetaFamily::Constant { theta }))
    }

    pub fn eta_star(theta: f64) -> Result<Self> {
        check_positive("theta", theta)?;
        Ok(Self::new(ThetaFamily::EtaStar { theta }))
    }

    /// θ_i = a(i−1)/(b−a+(i−1)^c), the GFC version of P(Y_i = 1) = a/(b+(i−1)^c).
    pub fn holst(a: f64, b: f64, c: f64) -> Result<Self> {
        check_positive("a", a)?;
        check_positive("c", c)?;
        if !(b - a + 1.0 > 0.0) {
            return Err(Error::invalid("holst family needs b - a + 1 > 0"));
        }
        Ok(Self::new(ThetaFamily::Holst { a, b, c }))
    }

    pub fn tabulated(values: Vec<f64>, tail: TailRule) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("tabulated theta sequence is empty"));
        }
        for v in &values {
            check_positive("tabulated theta", *v)?;
        }
        Ok(Self::new(ThetaFamily::Tabulated { values, tail }))
    }

    /// The θ sequence for which Δ_n-conditioning reproduces the chain law of `p`.
    pub fn conditional_from_p(p: &PSequence) -> Self {
        Self::new(ThetaFamily::ConditionalFromP { p: Box::new(p.clone()) })
    }

    /// The θ sequence whose 11-erasing push-forward reproduces the chain law of `p`.
    pub fn pushforward_from_p(p: &PSequence) -> Self {
        Self::new(ThetaFamily::PushforwardFromP { p: Box::new(p.clone()) })
    }

    pub fn with_theta2(mut self, theta2: f64) -> Result<Self> {
        check_positive("theta2", theta2)?;
        self.theta2 = theta2;
        Ok(self)
    }

    /// The sequence sθ (every entry scaled, θ_1 included).
    pub fn scaled(&self, s: f64) -> Result<Self> {
        check_positive("scale", s)?;
        let mut out = self.clone();
        out.scale *= s;
        Ok(out)
    }

    /// The limit of θ_n when the family has one in closed form.
    pub fn limit(&self) -> Option<f64> {
        let v = match &self.family {
            ThetaFamily::Constant { theta } | ThetaFamily::EtaStar { theta } => *theta,
            ThetaFamily::Tabulated { values, tail: TailRule::ConstantExtend } => *values.last()?,
            _ => return None,
        };
        Some(v * self.scale)
    }

    fn raw(&self, i: usize) -> Result<f64> {
        match &self.family {
            ThetaFamily::Constant { theta } => Ok(*theta),
            ThetaFamily::EtaStar { theta } => {
                if i == 3 {
                    Ok(*theta)
                } else {
                    Ok(theta * (1.0 + theta / (i as f64 - 2.0)))
                }
            }
            ThetaFamily::Holst { a, b, c } => {
                let m = i as f64 - 1.0;
                Ok(a * m / (b - a + m.powf(*c)))
            }
            ThetaFamily::Tabulated { values, tail } => tab_lookup(values, *tail, 3, i, "tabulated theta sequence"),
            ThetaFamily::ConditionalFromP { p } => {
                let (pi, qi, pm) = (p.p(i)?, p.q(i)?, p.p(i - 1)?);
                Ok((i as f64 - 1.0) * qi / (pi * pm))
            }
            ThetaFamily::PushforwardFromP { p } => Ok((i as f64 - 1.0) * p.q(i)? / p.p(i)?),
        }
    }

    /// θ_i for i ≥ 1.
    pub fn theta(&self, i: usize) -> Result<f64> {
        let v = match i {
            0 => {
                return Err(Error::IndexOutOfRange { what: "theta sequence", index: 0, allowed: "1..".into() })
            }
            1 => 1.0,
            2 => self.theta2,
            _ => self.raw(i)?,
        };
        let v = v * self.scale;
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::invalid(format!("theta_{i} = {v} is not positive")));
        }
        Ok(v)
    }

    /// θ_0..=θ_n (index 0 is unused and set to 0).
    pub fn table(&self, n: usize) -> Result<Vec<f64>> {
        let mut out = vec![0.0; n + 1];
        match &self.family {
            ThetaFamily::ConditionalFromP { p } | ThetaFamily::PushforwardFromP { p } if n >= 3 => {
                let t = p.table(n)?;
                let cond = matches!(self.family, ThetaFamily::ConditionalFromP { .. });
                for i in 1..=n.min(2) {
                    out[i] = self.theta(i)?;
                }
                for i in 3..=n {
                    let raw = if cond {
                        (i as f64 - 1.0) * t.q[i] / (t.p[i] * t.p[i - 1])
                    } else {
                        (i as f64 - 1.0) * t.q[i] / t.p[i]
                    };
                    out[i] = raw * self.scale;
                    if !(out[i] > 0.0 && out[i].is_finite()) {
                        return Err(Error::invalid(format!("theta_{i} = {} is not positive", out[i])));
                    }
                }
            }
            _ => {
                for (i, slot) in out.iter_mut().enumerate().skip(1) {
                    *slot = self.theta(i)?;
                }
            }
        }
        Ok(out)
    }

    /// P(Y_i = 1) = θ_i/(i−1+θ_i).
    pub fn prob_one(&self, i: usize) -> Result<f64> {
        let t = self.theta(i)?;
        Ok(t / (i as f64 - 1.0 + t))
    }
}

impl fmt::Display for ThetaSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.family {
            ThetaFamily::Constant { theta } => write!(f, "constant:{theta}")?,
            ThetaFamily::EtaStar { theta } => write!(f, "eta_star:{theta}")?,
            ThetaFamily::Holst { a, b, c } => write!(f, "holst:{a},{b},{c}")?,
            ThetaFamily::Tabulated { values, .. } => {
                let v: Vec<String> = values.iter().map(|x| x.to_string()).collect();
                write!(f, "tabulated:{}", v.join(","))?
            }
            ThetaFamily::ConditionalFromP { p } => write!(f, "conditional({p})")?,
            ThetaFamily::PushforwardFromP { p } => write!(f, "pushforward({p})")?,
        }
        if self.scale != 1.0 {
            write!(f, "*{}", self.scale)?;
        }
        Ok(())
    }
}

fn parse_values(body: &str) -> Result<Vec<f64>> {
    body.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| Error::invalid(format!("cannot parse number {t:?}"))))
        .collect()
}

impl FromStr for ThetaSequence {
    type Err = Error;

    /// `constant:θ`, `eta_star:θ`, `holst:a,b,c` or `tabulated:v3,v4,...`
    /// (tabulated sequences extend their last value).
    fn from_str(s: &str) -> Result<Self> {
        let (name, body) = s
            .split_once(':')
            .ok_or_else(|| Error::invalid(format!("theta sequence {s:?} needs the form family:values")))?;
        let v = parse_values(body)?;
        let one = |v: &[f64]| -> Result<f64> {
            match v {
                [x] => Ok(*x),
                _ => Err(Error::invalid(format!("{name} takes exactly one value"))),
            }
        };
        match name {
            "constant" => Self::constant(one(&v)?),
            "eta_star" => Self::eta_star(one(&v)?),
            "holst" => match v.as_slice() {
                [a, b, c] => Self::holst(*a, *b, *c),
                _ => Err(Error::invalid("holst takes a,b,c")),
            },
            "tabulated" => Self::tabulated(v, TailRule::ConstantExtend),
            _ => Err(Error::invalid(format!(
                "unknown theta family {name:?} (known: constant, eta_star, holst, tabulated)"
            ))),
        }
    }
}

/// Families of p sequences. Tabulated values start at p_3.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum PFamily {
    /// p_i = (i−1)/(θ+i−1).
    Eta { theta: f64 },
    /// p_r = (θ+r−1)λ_r / ((θ+r−1)λ_r + θλ_{r−1}).
    EtaTilde { theta: f64 },
    /// p_i = G_{i−1}/G_i.
    FromThetaConditional { theta: Box<ThetaSequence> },
    /// p_i = (i−1)/(i−1+θ_i).
    FromThetaPushforward { theta: Box<ThetaSequence> },
    Tabulated { values: Vec<f64>, tail: TailRule },
}

/// A p sequence with p_1 = 0, p_2 = 1 and p_i ∈ (0,1) for i ≥ 3.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PSequence {
    pub family: PFamily,
}

/// p_0..=p_n and q_0..=q_n, indexed directly (index 0 unused).
#[derive(Debug, Clone, PartialEq)]
pub struct PTable {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

impl PTable {
    pub fn n(&self) -> usize {
        self.p.len() - 1
    }
}

impl PSequence {
    pub fn eta(theta: f64) -> Result<Self> {
        check_positive("theta", theta)?;
        Ok(PSequence { family: PFamily::Eta { theta } })
    }

    pub fn eta_tilde(theta: f64) -> Result<Self> {
        check_positive("theta", theta)?;
        Ok(PSequence { family: PFamily::EtaTilde { theta } })
    }

    pub fn from_theta_conditional(theta: &ThetaSequence) -> Self {
        PSequence { family: PFamily::FromThetaConditional { theta: Box::new(theta.clone()) } }
    }

    pub fn from_theta_pushforward(theta: &ThetaSequence) -> Self {
        PSequence { family: PFamily::FromThetaPushforward { theta: Box::new(theta.clone()) } }
    }

    pub fn tabulated(values: Vec<f64>, tail: TailRule) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("tabulated p sequence is empty"));
        }
        if let Some(bad) = values.iter().find(|v| !(**v > 0.0 && **v < 1.0)) {
            return Err(Error::invalid(format!("tabulated p values must lie in (0,1), got {bad}")));
        }
        Ok(PSequence { family: PFamily::Tabulated { values, tail } })
    }

    /// Independent uniform p_3..p_{len+2} in [lo, hi], constant-extended.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, len: usize, lo: f64, hi: f64) -> Result<Self> {
        let values = (0..len.max(1)).map(|_| rng.gen_range(lo..=hi)).collect();
        Self::tabulated(values, TailRule::ConstantExtend)
    }

    /// q_i = 1 − p_i, computed directly where the family allows it.
    pub fn q(&self, i: usize) -> Result<f64> {
        match i {
            0 => Err(Error::IndexOutOfRange { what: "p sequence", index: 0, allowed: "1..".into() }),
            1 => Ok(1.0),
            2 => Ok(0.0),
            _ => {
                let v = match &self.family {
                    PFamily::Eta { theta } => theta / (theta + i as f64 - 1.0),
                    PFamily::EtaTilde { theta } => {
                        let lam = lambda_table(*theta, i);
                        let a = (theta + i as f64 - 1.0) * lam[i];
                        let b = theta * lam[i - 1];
                        b / (a + b)
                    }
                    PFamily::FromThetaConditional { theta } => {
                        let pm = self.p(i - 1)?;
                        let t = theta.theta(i)?;
                        t * pm / (i as f64 - 1.0 + t * pm)
                    }
                    PFamily::FromThetaPushforward { theta } => theta.prob_one(i)?,
                    PFamily::Tabulated { values, tail } => 1.0 - tab_lookup(values, *tail, 3, i, "tabulated p sequence")?,
                };
                if !(v > 0.0 && v < 1.0) {
                    return Err(Error::invalid(format!("q_{i} = {v} is outside (0,1)")));
                }
                Ok(v)
            }
        }
    }

    /// p_i for i ≥ 1.
    pub fn p(&self, i: usize) -> Result<f64> {
        match i {
            1 => Ok(0.0),
            2 => Ok(1.0),
            _ => match &self.family {
                PFamily::Eta { theta } => Ok((i as f64 - 1.0) / (theta + i as f64 - 1.0)),
                PFamily::FromThetaPushforward { theta } => {
                    let t = theta.theta(i)?;
                    Ok((i as f64 - 1.0) / (i as f64 - 1.0 + t))
                }
                PFamily::FromThetaConditional { theta } if i > 2 => {
                    // p_i = G_{i−1}/G_i = (i−1)/(i−1+θ_i p_{i−1}), iterated from p_2 = 1.
                    let mut p = 1.0;
                    for k in 3..=i {
                        let t = theta.theta(k)?;
                        p = (k as f64 - 1.0) / (k as f64 - 1.0 + t * p);
                    }
                    Ok(p)
                }
                PFamily::Tabulated { values, tail } => tab_lookup(values, *tail, 3, i, "tabulated p sequence"),
                _ => Ok(1.0 - self.q(i)?),
            },
        }
    }

    /// p and q for indices 0..=n in O(n).
    pub fn table(&self, n: usize) -> Result<PTable> {
        let mut p = vec![0.0; n + 1];
        let mut q = vec![0.0; n + 1];
        for i in 1..=n.min(2) {
            p[i] = self.p(i)?;
            q[i] = self.q(i)?;
        }
        match &self.family {
            PFamily::FromThetaConditional { theta } => {
                let th = theta.table(n)?;
                for i in 3..=n {
                    let d = i as f64 - 1.0 + th[i] * p[i - 1];
                    p[i] = (i as f64 - 1.0) / d;
                    q[i] = th[i] * p[i - 1] / d;
                }
            }
            PFamily::EtaTilde { theta } => {
                let lam = lambda_table(*theta, n);
                for i in 3..=n {
                    let a = (theta + i as f64 - 1.0) * lam[i];
                    let b = theta * lam[i - 1];
                    p[i] = a / (a + b);
                    q[i] = b / (a + b);
                }
            }
            _ => {
                for i in 3..=n {
                    p[i] = self.p(i)?;
                    q[i] = self.q(i)?;
                }
            }
        }
        if let Some(i) = (3..=n).find(|&i| !(p[i] > 0.0 && p[i] < 1.0 && q[i] > 0.0)) {
            return Err(Error::invalid(format!("p_{i} = {} is outside (0,1)", p[i])));
        }
        Ok(PTable { p, q })
    }

    /// The θ value that makes i·q_i → θ, when the family has one in closed form.
    pub fn alpha(&self) -> Option<f64> {
        match &self.family {
            PFamily::Eta { theta } | PFamily::EtaTilde { theta } => Some(*theta),
            PFamily::FromThetaPushforward { theta } => theta.limit(),
            PFamily::FromThetaConditional { theta } => theta.limit(),
            PFamily::Tabulated { .. } => None,
        }
    }
}

impl fmt::Display for PSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.family {
            PFamily::Eta { theta } => write!(f, "eta:{theta}"),
            PFamily::EtaTilde { theta } => write!(f, "eta_tilde:{theta}"),
            PFamily::FromThetaConditional { theta } => write!(f, "conditional:{theta}"),
            PFamily::FromThetaPushforward { theta } => write!(f, "pushforward:{theta}"),
            PFamily::Tabulated { values, .. } => {
                let v: Vec<String> = values.iter().map(|x| x.to_string()).collect();
                write!(f, "tabulated:{}", v.join(","))
            }
        }
    }
}

impl FromStr for PSequence {
    type Err = Error;

    /// `eta:θ`, `eta_tilde:θ`, `tabulated:p3,p4,...`, `conditional:<theta spec>`
    /// or `pushforward:<theta spec>`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, body) = s
            .split_once(':')
            .ok_or_else(|| Error::invalid(format!("p sequence {s:?} needs the form family:values")))?;
        match name {
            "eta" | "eta_tilde" => {
                let theta: f64 = body
                    .trim()
                    .parse()
                    .map_err(|_| Error::invalid(format!("cannot parse theta {body:?}")))?;
                if name == "eta" {
                    Self::eta(theta)
                } else {
                    Self::eta_tilde(theta)
                }
            }
            "tabulated" => Self::tabulated(parse_values(body)?, TailRule::ConstantExtend),
            "conditional" => Ok(Self::from_theta_conditional(&body.parse()?)),
            "pushforward" => Ok(Self::from_theta_pushforward(&body.parse()?)),
            _ => Err(Error::invalid(format!(
                "unknown p family {name:?} (known: eta, eta_tilde, tabulated, conditional, pushforward)"
            ))),
        }
    }
}

fn require_link_index(i: usize) -> Result<()> {
    if i < 3 {
        return Err(Error::IndexOutOfRange {
            what: "link index (values below 3 are fixed by convention)",
            index: i,
            allowed: "3..".into(),
        });
    }
    Ok(())
}

/// θ_i = (i−1) q_i / (p_i p_{i−1}).
pub fn link_conditional_p_to_theta(p: &PSequence, i: usize) -> Result<f64> {
    require_link_index(i)?;
    Ok((i as f64 - 1.0) * p.q(i)? / (p.p(i)? * p.p(i - 1)?))
}

/// p_i = G_{i−1}(θ)/G_i(θ).
pub fn link_conditional_theta_to_p(theta: &ThetaSequence, i: usize) -> Result<f64> {
    require_link_index(i)?;
    PSequence::from_theta_conditional(theta).p(i)
}

/// θ_i = (i−1) q_i / p_i.
pub fn link_pushforward_p_to_theta(p: &PSequence, i: usize) -> Result<f64> {
    require_link_index(i)?;
    Ok((i as f64 - 1.0) * p.q(i)? / p.p(i)?)
}

/// p_i = (i−1)/(i−1+θ_i).
pub fn link_pushforward_theta_to_p(theta: &ThetaSequence, i: usize) -> Result<f64> {
    require_link_index(i)?;
    PSequence::from_theta_pushforward(theta).p(i)
}
