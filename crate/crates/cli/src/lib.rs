//! Command handling for the `derangement` binary.
//!
//! [`run`] turns a parsed [`Cli`] into a [`Report`]; [`emit`] serializes it.
//! Every report carries the parsed configuration and the library version.

use std::fmt::Write as _;

use clap::{Args, Parser, Subcommand, ValueEnum};
use derangement_core::chains::{
    marginal_one, path_probability, signed_with_labels, ChainKind, ChainWord, CycleType, Horizon, PreparedChain,
};
use derangement_core::coupling::{
    delta_inf, delta_n, gamma_n, joint_cycle_counts, k_distribution, ordered_cycle_prefix_prob, pgf_k, CountKind,
    GammaMethod,
};
use derangement_core::limitchain::{delta_i_inf, gamma_inf, phi, phi_eta, phi_eta_tilde, tv_prefix};
use derangement_core::moments::{
    cov_eta, lambda_esf, mean_cj, mean_cj_eta, mean_cj_eta_limit, mean_k, mean_k_asymptotic, mean_k_eta,
    mean_k_eta_limit, second_moments, LimitEstimate, LimitMethod,
};
use derangement_core::montecarlo::{
    clt_diagnostic, gem_diagnostic, ordered_star_estimate, substream, CltCentering, EstimateReport,
};
use derangement_core::oracle::{cycle_count_moments, dp_moments, exact_law, run_suite, MomentTarget, SUITES};
use derangement_core::signed_stats::{
    cki_distribution, cstar_moments, cycle_count_law, k_law_exact, lambda_total, omega, ordered_star_prob,
    OrientationWeights,
};
use derangement_core::{AccuracySpec, PSequence, ThetaSequence, VERSION};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

/// Significant digits of floating output.
pub const SIG_DIGITS: i32 = 9;
/// Significant digits of the comparison columns of the table commands.
pub const PRINTED_DIGITS: i32 = 6;

pub const EXACT_QUANTITIES: [&str; 27] = [
    "mean_k",
    "mean_k_eta",
    "mean_k_eta_limit",
    "mean_k_asymptotic",
    "mean_cj",
    "mean_cj_eta",
    "mean_cj_eta_limit",
    "second_moments",
    "cov_eta",
    "dp_moments",
    "lambda_esf",
    "gamma_n",
    "delta_n",
    "delta_inf",
    "delta_i_inf",
    "gamma_inf",
    "phi",
    "phi_eta",
    "phi_eta_tilde",
    "tv_prefix",
    "marginal_one",
    "path_probability",
    "exact_law",
    "k_distribution",
    "pgf_k",
    "joint_cycle_counts",
    "ordered_cycle_prefix_prob",
];

pub const SIGNED_QUANTITIES: [&str; 6] = [
    "omega",
    "cki_distribution",
    "cstar_moments",
    "lambda_total",
    "ordered_star_prob",
    "ordered_star_estimate",
];

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("unknown {what} {name:?}; known: {}", known.join(", "))]
    UnknownName {
        what: &'static str,
        name: String,
        known: Vec<String>,
    },
    #[error("missing argument --{0}")]
    Missing(&'static str),
    #[error(transparent)]
    Core(#[from] derangement_core::Error),
    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::UnknownName { .. } => 2,
            CliError::Core(e) if e.is_guard() => 3,
            _ => 1,
        }
    }

    fn unknown(what: &'static str, name: &str, known: &[&str]) -> Self {
        CliError::UnknownName { what, name: name.to_string(), known: known.iter().map(|s| s.to_string()).collect() }
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug, Clone, PartialEq, Serialize, Deserialize)]
#[command(name = "derangement", version, about = "Biased random derangement chains and the generalized Feller coupling")]
pub struct Cli {
    #[arg(long, value_enum, global = true, default_value_t = Format::Text)]
    pub format: Format,
    #[command(flatten)]
    pub accuracy: AccuracyArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
    Text,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyArgs {
    #[arg(long, global = true)]
    pub abs_tol: Option<f64>,
    #[arg(long, global = true)]
    pub rel_tol: Option<f64>,
    #[arg(long, global = true)]
    pub max_terms: Option<usize>,
    #[arg(long, global = true)]
    pub quad_max_depth: Option<u32>,
}

impl AccuracyArgs {
    fn spec(&self) -> Result<AccuracySpec> {
        let d = AccuracySpec::default();
        let spec = AccuracySpec {
            abs_tol: self.abs_tol.unwrap_or(d.abs_tol),
            rel_tol: self.rel_tol.unwrap_or(d.rel_tol),
            max_terms: self.max_terms.unwrap_or(d.max_terms),
            quad_max_depth: self.quad_max_depth.unwrap_or(d.quad_max_depth),
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Parameter sequences. `--p` and `--theta-seq` take `family:values`
/// (for example `eta:0.5`, `holst:1,2,1.5`); a bare `--theta` stands in for
/// `eta:θ` or `constant:θ` where a sequence is needed.
#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamArgs {
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub p: Option<String>,
    #[arg(long)]
    pub theta_seq: Option<String>,
    #[arg(long)]
    pub kappa: Option<f64>,
}

impl ParamArgs {
    fn theta(&self) -> Result<f64> {
        self.theta.ok_or(CliError::Missing("theta"))
    }

    fn p_seq(&self) -> Result<PSequence> {
        match (&self.p, self.theta) {
            (Some(s), _) => Ok(s.parse()?),
            (None, Some(t)) => Ok(PSequence::eta(t)?),
            _ => Err(CliError::Missing("p")),
        }
    }

    fn theta_seq(&self) -> Result<ThetaSequence> {
        match (&self.theta_seq, self.theta) {
            (Some(s), _) => Ok(s.parse()?),
            (None, Some(t)) => Ok(ThetaSequence::constant(t)?),
            _ => Err(CliError::Missing("theta-seq")),
        }
    }

    fn kappa(&self) -> Result<f64> {
        self.kappa.ok_or(CliError::Missing("kappa"))
    }

    fn kind(&self, name: KindName) -> Result<ChainKind> {
        Ok(match name {
            KindName::X => ChainKind::X { p: self.p_seq()? },
            KindName::Eta => ChainKind::Eta { theta: self.theta()? },
            KindName::EtaTilde => ChainKind::EtaTilde { theta: self.theta()? },
            KindName::Y => ChainKind::Y { theta: self.theta_seq()? },
            KindName::XiTilde => ChainKind::XiTilde { theta: self.theta()? },
            KindName::Signed => ChainKind::Signed { p: self.p_seq()?, kappa: self.kappa()? },
            KindName::Xinf => ChainKind::XinfPrefix { p: self.p_seq()? },
        })
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum KindName {
    X,
    Eta,
    EtaTilde,
    Y,
    XiTilde,
    Signed,
    Xinf,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodName {
    Series,
    Integral,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountName {
    X,
    Y,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum GammaMethodName {
    Recursion,
    GProduct,
    PProduct,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Diagnostic {
    Clt,
    Gem,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum CenteringName {
    QBar,
    ThetaLogN,
}

#[derive(Subcommand, Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "subcommand", rename_all = "snake_case")]
pub enum Command {
    /// Sample chain paths (signed kinds also give signed permutations).
    Sample {
        #[arg(long, value_enum)]
        kind: KindName,
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        reps: usize,
        #[arg(long, env = "DERANGEMENT_SEED", default_value_t = 0)]
        seed: u64,
    },
    /// Evaluate a named quantity exactly.
    Exact {
        #[arg(long)]
        quantity: String,
        #[command(flatten)]
        params: ParamArgs,
        #[command(flatten)]
        index: IndexArgs,
        #[arg(long, value_enum, default_value_t = MethodName::Series)]
        method: MethodName,
        #[arg(long, default_value_t = 2)]
        m: usize,
        #[arg(long, value_enum)]
        kind: Option<KindName>,
        #[arg(long, value_enum, default_value_t = CountName::X)]
        count_kind: CountName,
        #[arg(long, value_enum, default_value_t = GammaMethodName::Recursion)]
        gamma_method: GammaMethodName,
        /// MeanK, VarK, MeanCj, SecondCj, VarCj or CovC (dp_moments).
        #[arg(long)]
        target: Option<String>,
        /// A 0/1 word written from index n down to 1.
        #[arg(long)]
        word: Option<String>,
        /// Cycle lengths, comma separated.
        #[arg(long)]
        cycles: Option<String>,
        /// Ordered cycle lengths a_1,a_2,... .
        #[arg(long)]
        a: Option<String>,
        #[arg(long, default_value_t = 1.0)]
        theta2_star: f64,
        #[arg(long)]
        s: Option<f64>,
        /// Use the infinite horizon (marginal_one).
        #[arg(long)]
        infinite: bool,
    },
    /// Limits of E[C_j] for θ = 0.5 and j = 2..7, with error bounds.
    Table1 {
        #[arg(long, default_value_t = 0.5)]
        theta: f64,
        #[arg(long, default_value_t = 2)]
        m: usize,
    },
    /// Var(C_j(n)) for j = 3..7 and n = 20, 50, 100.
    Table2 {
        #[arg(long, default_value_t = 0.5)]
        theta: f64,
    },
    /// Run oracle suites.
    Verify {
        /// A suite name or `all`.
        #[arg(long, default_value = "all")]
        suite: String,
        #[arg(long, default_value_t = 10)]
        n: usize,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        #[arg(long, env = "DERANGEMENT_SEED", default_value_t = 0)]
        seed: u64,
    },
    /// Monte Carlo diagnostics of the limit theorems.
    Diagnose {
        #[arg(value_enum)]
        which: Diagnostic,
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1000)]
        reps: usize,
        #[arg(long, env = "DERANGEMENT_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = CenteringName::QBar)]
        centering: CenteringName,
        /// KS p-values at or below this fail the check.
        #[arg(long, default_value_t = 0.001)]
        alpha: f64,
    },
    /// Quantities of the signed chain.
    Signed {
        #[arg(long)]
        quantity: String,
        #[command(flatten)]
        params: ParamArgs,
        #[command(flatten)]
        index: IndexArgs,
        #[arg(long)]
        ell: Option<usize>,
        #[arg(long)]
        a: Option<String>,
        #[arg(long, default_value_t = 10_000)]
        reps: usize,
        #[arg(long, env = "DERANGEMENT_SEED", default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub i: Option<usize>,
    #[arg(long)]
    pub j: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
}

impl IndexArgs {
    fn n(&self) -> Result<usize> {
        self.n.ok_or(CliError::Missing("n"))
    }
    fn i(&self) -> Result<usize> {
        self.i.ok_or(CliError::Missing("i"))
    }
    fn j(&self) -> Result<usize> {
        self.j.ok_or(CliError::Missing("j"))
    }
    fn k(&self) -> Result<usize> {
        self.k.ok_or(CliError::Missing("k"))
    }
}

/// A named table of JSON cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    fn new(name: &str, columns: &[&str]) -> Self {
        Table { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

/// Everything a command prints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub version: String,
    pub config: Cli,
    /// `None` when the command runs no checks.
    pub passed: Option<bool>,
    pub tables: Vec<Table>,
}

impl Report {
    pub fn exit_code(&self) -> i32 {
        match self.passed {
            Some(false) => 1,
            _ => 0,
        }
    }
}

/// Rounds to `digits` significant digits.
pub fn round_sig(x: f64, digits: i32) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let s = format!("{:.*e}", (digits - 1) as usize, x);
    s.parse().unwrap_or(x)
}

fn num(x: f64) -> Value {
    if x.is_finite() {
        json!(round_sig(x, SIG_DIGITS))
    } else {
        Value::String(x.to_string())
    }
}

fn printed(x: f64) -> Value {
    json!(round_sig(x, PRINTED_DIGITS))
}

fn scalar(name: &str, value: f64) -> Table {
    let mut t = Table::new("result", &["quantity", "value"]);
    t.push(vec![json!(name), num(value)]);
    t
}

fn estimate_table(name: &str, est: &LimitEstimate) -> Table {
    let mut t = Table::new("result", &["quantity", "value", "error_bound", "m"]);
    t.push(vec![json!(name), num(est.value), num(est.error_bound), json!(est.m)]);
    t
}

fn parse_list(s: &Option<String>, what: &'static str) -> Result<Vec<usize>> {
    let s = s.as_ref().ok_or(CliError::Missing(what))?;
    s.split(',')
        .map(|t| {
            t.trim().parse::<usize>().map_err(|_| {
                CliError::Core(derangement_core::Error::InvalidParameter(format!("cannot parse {what} entry {t:?}")))
            })
        })
        .collect()
}

fn limit_method(method: MethodName, m: usize) -> LimitMethod {
    match method {
        MethodName::Series => LimitMethod::Series { m },
        MethodName::Integral => LimitMethod::Integral,
    }
}

fn count_kind(c: CountName) -> CountKind {
    match c {
        CountName::X => CountKind::X,
        CountName::Y => CountKind::Y,
    }
}

fn moment_target(s: &str, idx: &IndexArgs) -> Result<MomentTarget> {
    Ok(match s {
        "MeanK" => MomentTarget::MeanK,
        "VarK" => MomentTarget::VarK,
        "MeanCj" => MomentTarget::MeanCj { j: idx.j()? },
        "SecondCj" => MomentTarget::SecondCj { j: idx.j()? },
        "VarCj" => MomentTarget::VarCj { j: idx.j()? },
        "CovC" => MomentTarget::CovC { i: idx.i()?, j: idx.j()? },
        other => {
            return Err(CliError::unknown(
                "moment target",
                other,
                &["MeanK", "VarK", "MeanCj", "SecondCj", "VarCj", "CovC"],
            ))
        }
    })
}

/// Executes a parsed command.
pub fn run(cli: &Cli) -> Result<Report> {
    let acc = cli.accuracy.spec()?;
    let (passed, tables) = match &cli.command {
        Command::Sample { kind, params, n, reps, seed } => (None, sample(*kind, params, *n, *reps, *seed)?),
        Command::Exact { quantity, .. } => (None, vec![exact(quantity, &cli.command, &acc)?]),
        Command::Table1 { theta, m } => (None, table1(*theta, *m, &acc)?),
        Command::Table2 { theta } => table2(*theta)?,
        Command::Verify { suite, n, trials, seed } => verify(suite, *n, *trials, *seed)?,
        Command::Diagnose { which, params, n, reps, seed, centering, alpha } => {
            diagnose(*which, params, *n, *reps, *seed, *centering, *alpha)?
        }
        Command::Signed { quantity, params, index, ell, a, reps, seed } => {
            (None, vec![signed(quantity, params, index, *ell, a, *reps, *seed)?])
        }
    };
    Ok(Report { version: VERSION.to_string(), config: cli.clone(), passed, tables })
}

fn sample(kind: KindName, params: &ParamArgs, n: usize, reps: usize, seed: u64) -> Result<Vec<Table>> {
    let chain_kind = params.kind(kind)?;
    let chain = PreparedChain::new(&chain_kind, n)?;
    let table = if kind == KindName::Signed {
        let mut t = Table::new("samples", &["replicate", "signed_word", "word", "circles", "looking_in"]);
        for r in 0..reps {
            let (w, perm) = signed_with_labels(&chain, &mut substream(seed, r as u64));
            let circles: Vec<String> = perm
                .circles
                .iter()
                .map(|c| format!("({})", c.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(" ")))
                .collect();
            t.push(vec![
                json!(r),
                json!(w.to_string()),
                json!(w.projection().to_string()),
                json!(circles.join("")),
                json!(perm.positive_count()),
            ]);
        }
        t
    } else {
        let mut t = Table::new("samples", &["replicate", "word", "k"]);
        for r in 0..reps {
            let w = chain.sample(&mut substream(seed, r as u64));
            t.push(vec![json!(r), json!(w.to_string()), json!(w.count_ones())]);
        }
        t
    };
    Ok(vec![table])
}

fn exact(quantity: &str, cmd: &Command, acc: &AccuracySpec) -> Result<Table> {
    let Command::Exact {
        params: pa,
        index: idx,
        method,
        m,
        kind,
        count_kind: ck,
        gamma_method,
        target,
        word,
        cycles,
        a,
        theta2_star,
        s,
        infinite,
        ..
    } = cmd
    else {
        unreachable!("exact called with another subcommand")
    };
    let q = quantity;
    Ok(match q {
        "mean_k" => scalar(q, mean_k(idx.n()?, &pa.p_seq()?)?),
        "mean_k_eta" => scalar(q, mean_k_eta(idx.n()?, pa.theta()?)?),
        "mean_k_eta_limit" => estimate_table(q, &mean_k_eta_limit(pa.theta()?, limit_method(*method, *m), acc)?),
        "mean_k_asymptotic" => {
            let p = pa.p_seq()?;
            let alpha = p.alpha().ok_or_else(|| {
                derangement_core::Error::InvalidParameter("the p sequence has no known tail exponent".into())
            })?;
            estimate_table(q, &mean_k_asymptotic(&p, alpha, *m)?)
        }
        "mean_cj" => scalar(q, mean_cj(idx.n()?, idx.j()?, &pa.p_seq()?)?),
        "mean_cj_eta" => scalar(q, mean_cj_eta(idx.n()?, idx.j()?, pa.theta()?)?),
        "mean_cj_eta_limit" => {
            estimate_table(q, &mean_cj_eta_limit(pa.theta()?, idx.j()?, limit_method(*method, *m), acc)?)
        }
        "second_moments" => scalar(q, second_moments(idx.n()?, idx.j()?, &pa.p_seq()?)?),
        "cov_eta" => scalar(q, cov_eta(idx.n()?, idx.i()?, idx.j()?, pa.theta()?)?),
        "dp_moments" => {
            let k = pa.kind(kind.unwrap_or(KindName::X))?;
            let t = moment_target(target.as_deref().ok_or(CliError::Missing("target"))?, idx)?;
            scalar(q, dp_moments(&k, idx.n()?, t)?)
        }
        "lambda_esf" => scalar(q, lambda_esf(idx.n()?, pa.theta()?)?),
        "gamma_n" => {
            let gm = match gamma_method {
                GammaMethodName::Recursion => GammaMethod::Recursion,
                GammaMethodName::GProduct => GammaMethod::GProduct,
                GammaMethodName::PProduct => GammaMethod::PProduct,
            };
            scalar(q, gamma_n(&pa.theta_seq()?, idx.n()?, gm)?)
        }
        "delta_n" => scalar(q, delta_n(pa.theta()?, *theta2_star, idx.n()?)?),
        "delta_inf" => scalar(q, delta_inf(pa.theta()?, *theta2_star)?),
        "delta_i_inf" => scalar(q, delta_i_inf(pa.theta()?, idx.i()?, *theta2_star, acc)?),
        "gamma_inf" => scalar(q, gamma_inf(idx.i()?, &pa.theta_seq()?, acc)?),
        "phi" => scalar(q, phi(idx.i()?, &pa.p_seq()?, acc)?),
        "phi_eta" => scalar(q, phi_eta(idx.i()?, pa.theta()?, acc)?),
        "phi_eta_tilde" => scalar(q, phi_eta_tilde(idx.i()?, pa.theta()?, acc)?),
        "tv_prefix" => scalar(q, tv_prefix(idx.n()?, &pa.p_seq()?, acc)?),
        "marginal_one" => {
            let horizon = if *infinite { Horizon::Infinite } else { Horizon::Finite(idx.n()?) };
            let k = pa.kind(kind.unwrap_or(KindName::X))?;
            scalar(q, marginal_one(&k, idx.i()?, horizon)?)
        }
        "path_probability" => {
            let k = pa.kind(kind.ok_or(CliError::Missing("kind"))?)?;
            let w: ChainWord = word.as_deref().ok_or(CliError::Missing("word"))?.parse()?;
            scalar(q, path_probability(&k, &w)?)
        }
        "exact_law" => {
            let k = pa.kind(kind.ok_or(CliError::Missing("kind"))?)?;
            let law = exact_law(&k, idx.n()?)?;
            let mut t = Table::new("law", &["word", "probability"]);
            for (w, pr) in &law.entries {
                t.push(vec![json!(w.to_string()), num(*pr)]);
            }
            t
        }
        "k_distribution" => {
            let law = k_distribution(count_kind(*ck), idx.n()?, &pa.theta_seq()?)?;
            let mut t = Table::new("law", &["k", "probability"]);
            for (k, pr) in &law.entries {
                t.push(vec![json!(k), num(*pr)]);
            }
            t
        }
        "pgf_k" => {
            let s = s.ok_or(CliError::Missing("s"))?;
            scalar(q, pgf_k(count_kind(*ck), s, idx.n()?, &pa.theta_seq()?)?)
        }
        "joint_cycle_counts" => {
            let lengths = parse_list(cycles, "cycles")?;
            let n = lengths.iter().sum();
            let c = CycleType::from_lengths(n, &lengths)?;
            scalar(q, joint_cycle_counts(count_kind(*ck), &c, &pa.theta_seq()?)?)
        }
        "ordered_cycle_prefix_prob" => {
            let a = parse_list(a, "a")?;
            scalar(q, ordered_cycle_prefix_prob(&a, idx.n()?, &pa.theta_seq()?)?)
        }
        other => return Err(CliError::unknown("quantity", other, &EXACT_QUANTITIES)),
    })
}

fn table1(theta: f64, m: usize, acc: &AccuracySpec) -> Result<Vec<Table>> {
    let mut shown = Table::new("table1", &["j", "limit", "error_bound", "theta_over_j"]);
    let mut full = Table::new("table1_full_precision", &["j", "limit", "error_bound", "theta_over_j"]);
    for j in 2..=7 {
        let est = mean_cj_eta_limit(theta, j, LimitMethod::Series { m }, acc)?;
        let tj = theta / j as f64;
        shown.push(vec![json!(j), printed(est.value), printed(est.error_bound), printed(tj)]);
        full.push(vec![json!(j), num(est.value), num(est.error_bound), num(tj)]);
    }
    Ok(vec![shown, full])
}

/// The variance display and the DP oracle must agree to this tolerance.
const TABLE2_AGREEMENT: f64 = 1e-10;

fn table2(theta: f64) -> Result<(Option<bool>, Vec<Table>)> {
    let ns = [20, 50, 100];
    let p = PSequence::eta(theta)?;
    let kind = ChainKind::Eta { theta };
    let mut grid = Table::new("table2", &["j", "n=20", "n=50", "n=100"]);
    let mut full = Table::new("table2_full_precision", &["j", "n", "display", "dp_oracle", "gap"]);
    let mut ok = true;
    for j in 3..=7 {
        let mut row = vec![json!(j)];
        for n in ns {
            let display = second_moments(n, j, &p)?;
            let dp = dp_moments(&kind, n, MomentTarget::VarCj { j })?;
            let gap = (display - dp).abs();
            ok &= gap < TABLE2_AGREEMENT;
            row.push(printed(display));
            full.push(vec![json!(j), json!(n), num(display), num(dp), num(gap)]);
        }
        grid.push(row);
    }
    Ok((Some(ok), vec![grid, full]))
}

fn verify(suite: &str, n: usize, trials: usize, seed: u64) -> Result<(Option<bool>, Vec<Table>)> {
    let names: Vec<&str> = match suite {
        "all" => SUITES.to_vec(),
        s if SUITES.contains(&s) => vec![s],
        other => {
            let mut known = SUITES.to_vec();
            known.push("all");
            return Err(CliError::unknown("suite", other, &known));
        }
    };
    let mut summary = Table::new("summary", &["suite", "checks", "max_value", "passed"]);
    let mut checks = Table::new("checks", &["suite", "label", "value", "tolerance", "passed"]);
    let mut ok = true;
    for name in names {
        let r = run_suite(name, n, trials, seed)?;
        ok &= r.passed();
        summary.push(vec![json!(name), json!(r.checks.len()), num(r.max_value()), json!(r.passed())]);
        for c in &r.checks {
            checks.push(vec![json!(name), json!(c.label), num(c.value), num(c.tolerance), json!(c.passed)]);
        }
    }
    Ok((Some(ok), vec![summary, checks]))
}

fn estimate_row(t: &mut Table, label: &str, r: &EstimateReport) {
    t.push(vec![
        json!(label),
        json!(r.reps),
        num(r.mean),
        num(r.std_error),
        r.ks_statistic.map_or(Value::Null, num),
        r.ks_p_value.map_or(Value::Null, num),
        json!(r.ks_reliable),
    ]);
}

const ESTIMATE_COLUMNS: [&str; 7] = ["statistic", "reps", "mean", "std_error", "ks_statistic", "ks_p_value", "ks_reliable"];

fn ks_ok(r: &EstimateReport, alpha: f64) -> bool {
    r.ks_p_value.is_some_and(|p| p > alpha)
}

fn diagnose(
    which: Diagnostic,
    params: &ParamArgs,
    n: usize,
    reps: usize,
    seed: u64,
    centering: CenteringName,
    alpha: f64,
) -> Result<(Option<bool>, Vec<Table>)> {
    let mut est = Table::new("estimates", &ESTIMATE_COLUMNS);
    match which {
        Diagnostic::Clt => {
            let c = match centering {
                CenteringName::QBar => CltCentering::QBar,
                CenteringName::ThetaLogN => CltCentering::ThetaLogN { theta: params.theta()? },
            };
            let r = clt_diagnostic(&params.p_seq()?, n, reps, seed, c)?;
            estimate_row(&mut est, "k", &r.report);
            let mut t = Table::new(
                "clt",
                &["q_bar", "q_bar2", "precondition_ratio", "center", "scale", "standardized_mean", "standardized_var"],
            );
            t.push(vec![
                num(r.q_bar),
                num(r.q_bar2),
                num(r.precondition_ratio),
                num(r.center),
                num(r.scale),
                num(r.standardized_mean),
                num(r.standardized_var),
            ]);
            Ok((Some(ks_ok(&r.report, alpha)), vec![est, t]))
        }
        Diagnostic::Gem => {
            let r = gem_diagnostic(&params.theta_seq()?, n, reps, seed)?;
            estimate_row(&mut est, "first_fraction", &r.first);
            estimate_row(&mut est, "second_fraction", &r.second);
            let mut t = Table::new("gem", &["two_sample_ks", "two_sample_p", "joint_chain", "joint_oracle", "joint_z"]);
            t.push(vec![
                num(r.two_sample_ks),
                num(r.two_sample_p),
                num(r.joint_chain),
                num(r.joint_oracle),
                num(r.joint_z()),
            ]);
            let ok = ks_ok(&r.first, alpha) && r.two_sample_p > alpha && r.joint_z() < 4.0;
            Ok((Some(ok), vec![est, t]))
        }
    }
}

fn signed(
    quantity: &str,
    pa: &ParamArgs,
    idx: &IndexArgs,
    ell: Option<usize>,
    a: &Option<String>,
    reps: usize,
    seed: u64,
) -> Result<Table> {
    let q = quantity;
    let weights = || -> Result<OrientationWeights> { Ok(OrientationWeights::binomial(pa.kappa()?)?) };
    Ok(match q {
        "omega" => scalar(q, omega(idx.k()?, idx.i()?, &weights()?)?),
        "cki_distribution" => {
            let (k, i, n) = (idx.k()?, idx.i()?, idx.n()?);
            let law = cycle_count_law(&ChainKind::X { p: pa.p_seq()? }, n, k)?;
            let w = weights()?;
            let mut t = Table::new("law", &["ell", "probability"]);
            let ells: Vec<usize> = match ell {
                Some(l) => vec![l],
                None => (0..=n / k).collect(),
            };
            for l in ells {
                t.push(vec![json!(l), num(cki_distribution(k, i, l, n, &w, &law)?)]);
            }
            t
        }
        "cstar_moments" => {
            let m = cycle_count_moments(&pa.p_seq()?, idx.n()?)?;
            let r = cstar_moments(idx.i()?, idx.j()?, &weights()?, &m)?;
            let mut t = Table::new("result", &["mean_i", "mean_j", "cov"]);
            t.push(vec![num(r.mean_i), num(r.mean_j), num(r.cov)]);
            t
        }
        "lambda_total" => {
            let n = idx.n()?;
            let k_law = k_law_exact(&ChainKind::X { p: pa.p_seq()? }, n)?;
            let r = lambda_total(n, pa.kappa()?, &k_law)?;
            let mut t = Table::new("law", &["r", "probability"]);
            for (k, pr) in &r.law.entries {
                t.push(vec![json!(k), num(*pr)]);
            }
            t.push(vec![json!("mean_from_law"), num(r.mean_from_law)]);
            t.push(vec![json!("mean_identity"), num(r.mean_identity)]);
            t
        }
        "ordered_star_prob" => {
            let a = parse_list(a, "a")?;
            scalar(q, ordered_star_prob(&a, idx.n()?, &pa.theta_seq()?, &weights()?)?)
        }
        "ordered_star_estimate" => {
            let a = parse_list(a, "a")?;
            let r = ordered_star_estimate(&a, idx.n()?, &pa.theta_seq()?, pa.kappa()?, reps, seed)?;
            let mut t = Table::new("estimates", &ESTIMATE_COLUMNS);
            estimate_row(&mut t, q, &r);
            t
        }
        other => return Err(CliError::unknown("signed quantity", other, &SIGNED_QUANTITIES)),
    })
}

fn cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        Value::Number(x) => match x.as_f64() {
            Some(f) if x.is_f64() => fmt_float(f),
            _ => x.to_string(),
        },
        other => other.to_string(),
    }
}

fn fmt_float(f: f64) -> String {
    let a = f.abs();
    if a != 0.0 && !(1e-5..1e15).contains(&a) {
        format!("{f:e}")
    } else {
        format!("{f}")
    }
}

fn csv_cell(s: String) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s
    }
}

/// Serializes a report. JSON is one object; CSV and text print each table
/// followed by the configuration and version as `#` lines.
pub fn emit(report: &Report, format: Format) -> Result<String> {
    let mut out = String::new();
    match format {
        Format::Json => {
            out = serde_json::to_string_pretty(report)?;
            out.push('\n');
            return Ok(out);
        }
        Format::Csv => {
            for (idx, t) in report.tables.iter().enumerate() {
                if idx > 0 {
                    out.push('\n');
                }
                out.push_str(&t.columns.join(","));
                out.push('\n');
                for row in &t.rows {
                    let cells: Vec<String> = row.iter().map(|v| csv_cell(cell(v))).collect();
                    out.push_str(&cells.join(","));
                    out.push('\n');
                }
            }
        }
        Format::Text => {
            for t in &report.tables {
                let rows: Vec<Vec<String>> = t.rows.iter().map(|r| r.iter().map(cell).collect()).collect();
                let mut widths: Vec<usize> = t.columns.iter().map(|c| c.chars().count()).collect();
                for r in &rows {
                    for (w, c) in widths.iter_mut().zip(r) {
                        *w = (*w).max(c.chars().count());
                    }
                }
                let line = |cells: &[String]| -> String {
                    let padded: Vec<String> =
                        cells.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}", w = *w)).collect();
                    padded.join("  ").trim_end().to_string()
                };
                let _ = writeln!(out, "[{}]", t.name);
                let _ = writeln!(out, "{}", line(&t.columns));
                for r in &rows {
                    let _ = writeln!(out, "{}", line(r));
                }
                out.push('\n');
            }
            if let Some(p) = report.passed {
                let _ = writeln!(out, "checks: {}", if p { "passed" } else { "FAILED" });
            }
        }
    }
    let _ = writeln!(out, "# version: {}", report.version);
    let _ = writeln!(out, "# config: {}", serde_json::to_string(&report.config)?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        let mut v = vec!["derangement"];
        v.extend_from_slice(args);
        Cli::try_parse_from(v).unwrap()
    }

    #[test]
    fn round_sig_digits() {
        assert_eq!(round_sig(0.25531838412, 6), 0.255318);
        assert_eq!(round_sig(123456.789, 3), 123000.0);
        assert_eq!(round_sig(0.0, 9), 0.0);
        assert_eq!(fmt_float(round_sig(1.0 / 3.0, 9)), "0.333333333");
    }

    #[test]
    fn json_round_trips() {
        let cli = parse(&["--format", "json", "exact", "--quantity", "k_distribution", "--theta", "0.7", "--n", "6"]);
        let report = run(&cli).unwrap();
        let text = emit(&report, Format::Json).unwrap();
        let back: Report = serde_json::from_str(&text).unwrap();
        assert_eq!(back, report);
        assert_eq!(emit(&back, Format::Json).unwrap(), text);
    }

    #[test]
    fn every_exact_name_is_dispatched() {
        // a name that is listed but not handled would report itself as unknown
        let cli = parse(&["exact", "--quantity", "x"]);
        for q in EXACT_QUANTITIES {
            let mut c = cli.clone();
            if let Command::Exact { quantity, .. } = &mut c.command {
                *quantity = q.to_string();
            }
            assert!(!matches!(run(&c), Err(CliError::UnknownName { .. })), "{q} is not dispatched");
        }
    }

    #[test]
    fn unknown_names_exit_two() {
        let e = run(&parse(&["exact", "--quantity", "nope"])).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert!(e.to_string().contains("mean_cj_eta_limit"));
        let e = run(&parse(&["signed", "--quantity", "nope"])).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        let e = run(&parse(&["verify", "--suite", "nope"])).unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn guards_exit_three() {
        let e = run(&parse(&["exact", "--quantity", "exact_law", "--kind", "eta", "--theta", "1", "--n", "60"]))
            .unwrap_err();
        assert_eq!(e.exit_code(), 3);
    }

    #[test]
    fn csv_quotes_commas() {
        assert_eq!(csv_cell("a,b".into()), "\"a,b\"");
        assert_eq!(csv_cell("ab".into()), "ab");
    }
}
