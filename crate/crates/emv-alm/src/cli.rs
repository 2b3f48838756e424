//! Command-line front end: configuration, subcommands and run manifests.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::closed_form::{regime_schedule, FrozenPolicy, ProblemSpec};
use crate::data_ingest::{estimate_beta, estimate_params, label_regimes, Frequency, PriceSeries};
use crate::error::{invalid, Error, Result};
use crate::eval::{compare_table, out_of_sample};
use crate::improvement::{improve_once, iterate_from, InitialPolicyFamily, IteratedPolicy};
use crate::market::{Dynamics, MarketConfig, MarketModel, Regime};
use crate::policy::{GaussianPolicy, MeanOnly, SignalKind};
use crate::rl::{study_spec, Algo, Hyperparams, TrainState};
use crate::rng::{stream, subseed};

#[derive(Parser, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[command(name = "emv-alm", version, about = "Exploratory mean-variance asset-liability management")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Common {
    /// JSON run configuration; omitted sections take the simulation-study defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the seed in the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnalyticPolicy {
    CoemvOpt,
    PoemvOpt,
    PoemvSub,
}

impl AnalyticPolicy {
    pub fn build(self, model: &MarketModel, spec: &ProblemSpec) -> Result<FrozenPolicy> {
        match self {
            AnalyticPolicy::CoemvOpt => FrozenPolicy::coemv(model, spec),
            AnalyticPolicy::PoemvOpt => FrozenPolicy::poemv(model, spec),
            AnalyticPolicy::PoemvSub => FrozenPolicy::suboptimal(model, spec),
        }
    }

    /// Complete-information policies run on the market, the others on the filtered model.
    pub fn dynamics(self) -> Dynamics {
        match self {
            AnalyticPolicy::CoemvOpt => Dynamics::Market,
            _ => Dynamics::Filtered(SignalKind::Filter),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            AnalyticPolicy::CoemvOpt => "Optimal-2",
            AnalyticPolicy::PoemvOpt => "Optimal-1",
            AnalyticPolicy::PoemvSub => "Optimal-3",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DynamicsArg {
    Market,
    Filtered,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlgoArg {
    Coemv,
    Poemv1,
    Poemv2,
}

impl From<AlgoArg> for Algo {
    fn from(a: AlgoArg) -> Algo {
        match a {
            AlgoArg::Coemv => Algo::Coemv,
            AlgoArg::Poemv1 => Algo::Poemv1,
            AlgoArg::Poemv2 => Algo::Poemv2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FreqArg {
    Daily,
    Monthly,
}

impl From<FreqArg> for Frequency {
    fn from(f: FreqArg) -> Frequency {
        match f {
            FreqArg::Daily => Frequency::Daily,
            FreqArg::Monthly => Frequency::Monthly,
        }
    }
}

#[derive(Subcommand, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Simulate episodes under an analytic policy.
    Simulate {
        #[arg(long, value_enum, default_value = "poemv-opt")]
        policy: AnalyticPolicy,
        #[arg(long, value_enum, default_value = "market")]
        dynamics: DynamicsArg,
        #[arg(long, default_value_t = 1)]
        episodes: usize,
        /// Execute the policy mean without exploration noise.
        #[arg(long)]
        mean_only: bool,
    },
    /// Train a learner; writes history, checkpoint and manifest.
    Train {
        #[arg(long, value_enum)]
        algo: Option<AlgoArg>,
        /// Total iterations (overrides the configuration).
        #[arg(long)]
        iters: Option<usize>,
        /// Continue from a checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Iterations averaged per history row.
        #[arg(long, default_value_t = 10)]
        every: usize,
    },
    /// Out-of-sample evaluation of a checkpoint or an analytic policy.
    Evaluate {
        #[arg(long, conflicts_with = "policy")]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum)]
        policy: Option<AnalyticPolicy>,
        #[arg(long)]
        paths: Option<usize>,
        #[arg(long)]
        mean_only: bool,
    },
    /// Policy-improvement iterations from a random initial family.
    Improve {
        /// Horizon in periods.
        #[arg(long = "T", default_value_t = 6)]
        horizon: usize,
        #[arg(long, default_value_t = 0)]
        t: usize,
        /// `auto` iterates to convergence; a number runs exactly that many steps.
        #[arg(long, default_value = "auto")]
        iters: String,
    },
    /// Filter, expectation signal and a simulated regime path.
    FilterDemo {
        #[arg(long, default_value_t = 10.0)]
        years: f64,
    },
    /// Label a price series and estimate two-regime parameters.
    Ingest {
        #[arg(long)]
        prices: PathBuf,
        #[arg(long, value_enum, default_value = "daily")]
        freq: FreqArg,
        #[arg(long)]
        label: bool,
        #[arg(long)]
        estimate: bool,
        #[arg(long, default_value_t = 0.24)]
        gamma1: f64,
        #[arg(long, default_value_t = 0.19)]
        gamma2: f64,
        /// Index series for a beta estimate.
        #[arg(long)]
        index: Option<PathBuf>,
    },
    /// Dump the analytic policy coefficients per period.
    PolicyEval {
        #[arg(long, value_enum, default_value = "poemv-opt")]
        policy: AnalyticPolicy,
    },
}

fn default_algo() -> Algo {
    Algo::Poemv1
}

fn default_paths() -> usize {
    1000
}

/// The JSON configuration file. Every section is optional.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "MarketConfig::study_default")]
    pub market: MarketConfig,
    /// Defaults to ten years with `d = w = 8`, `λ = 2`, `x0 = 1`, `l0 = 0.1`.
    #[serde(default)]
    pub problem: Option<ProblemSpec>,
    #[serde(default)]
    pub hyper: Hyperparams,
    #[serde(default = "default_algo")]
    pub algo: Algo,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_paths")]
    pub n_paths: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            market: MarketConfig::study_default(),
            problem: None,
            hyper: Hyperparams::default(),
            algo: default_algo(),
            seed: 0,
            n_paths: default_paths(),
        }
    }
}

/// A validated configuration with every default filled in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Resolved {
    pub config: RunConfig,
    #[serde(skip)]
    pub model: Option<MarketModel>,
    pub spec: ProblemSpec,
    /// Defaults chosen where the model leaves a gap.
    pub notes: Vec<String>,
}

impl Resolved {
    pub fn model(&self) -> &MarketModel {
        self.model.as_ref().expect("resolved models are built")
    }
}

pub fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<Resolved> {
    let mut config: RunConfig = match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::Invalid(format!("cannot read config {}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| Error::Invalid(format!("config {}: {e}", p.display())))?
        }
        None => RunConfig::default(),
    };
    if let Some(s) = seed {
        config.seed = s;
    }
    config.hyper.seed = config.seed;
    config.hyper.validate()?;
    let model = MarketModel::new(config.market.clone())?;
    if (config.hyper.dt - model.dt).abs() > 1e-12 {
        return invalid(format!("hyper.dt {} differs from market dt {}", config.hyper.dt, model.dt));
    }
    let spec = config.problem.unwrap_or_else(|| study_spec(&model));
    spec.validate()?;
    if (spec.lambda - config.hyper.lambda).abs() > 0.0 {
        return invalid(format!("problem lambda {} differs from hyper lambda {}", spec.lambda, config.hyper.lambda));
    }
    if config.n_paths < 2 {
        return invalid("n_paths must be at least 2");
    }
    let mut notes = vec![
        "initial multiplier w0 = d unless hyper.w0 is set".to_string(),
        "learner grids start at zero".to_string(),
        format!("basis time unit {:?}", config.hyper.time_unit),
        format!("gradient clip {:?}", config.hyper.clip),
        format!("no-regime-learning signal {:?}", config.hyper.poemv2_signal),
        "annual-to-period conversion: mean 1 + r dt, variance scaled by dt".to_string(),
    ];
    if config.problem.is_none() {
        notes.push("problem defaults to ten years, d = w = 8, lambda = 2, x0 = 1, l0 = 0.1".to_string());
    }
    Ok(Resolved { config, model: Some(model), spec, notes })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub invocation: Cli,
    pub config: RunConfig,
    pub spec: ProblemSpec,
    pub resolved_defaults: Vec<String>,
    pub config_digest: String,
    pub artifacts: Vec<Artifact>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Digest of the resolved configuration.
pub fn config_digest(r: &Resolved) -> Result<String> {
    Ok(sha256_hex(serde_json::to_string(&(&r.config, &r.spec))?.as_bytes()))
}

struct Output {
    dir: PathBuf,
    artifacts: Vec<Artifact>,
}

impl Output {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Output { dir: dir.to_path_buf(), artifacts: Vec::new() })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        fs::write(self.dir.join(name), bytes)?;
        self.artifacts.push(Artifact { path: name.to_string(), sha256: sha256_hex(bytes) });
        Ok(())
    }

    fn finish(self, cli: &Cli, r: &Resolved) -> Result<()> {
        let manifest = Manifest {
            tool: "emv-alm".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            invocation: cli.clone(),
            config: r.config.clone(),
            spec: r.spec,
            resolved_defaults: r.notes.clone(),
            config_digest: config_digest(r)?,
            artifacts: self.artifacts,
        };
        fs::write(self.dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    }
}

/// Run a parsed command.
pub fn execute(cli: &Cli) -> Result<()> {
    let r = load_config(cli.common.config.as_deref(), cli.common.seed)?;
    let mut out = Output::new(&cli.common.out)?;
    match &cli.command {
        Command::Simulate { policy, dynamics, episodes, mean_only } => {
            cmd_simulate(&r, &mut out, *policy, *dynamics, *episodes, *mean_only)?
        }
        Command::Train { algo, iters, resume, every } => cmd_train(&r, &mut out, *algo, *iters, resume.as_deref(), *every)?,
        Command::Evaluate { checkpoint, policy, paths, mean_only } => {
            cmd_evaluate(&r, &mut out, checkpoint.as_deref(), *policy, *paths, *mean_only)?
        }
        Command::Improve { horizon, t, iters } => cmd_improve(&r, &mut out, *horizon, *t, iters)?,
        Command::FilterDemo { years } => cmd_filter_demo(&r, &mut out, *years)?,
        Command::Ingest { prices, freq, label, estimate, gamma1, gamma2, index } => {
            cmd_ingest(&r, &mut out, prices, (*freq).into(), *label, *estimate, (*gamma1, *gamma2), index.as_deref())?
        }
        Command::PolicyEval { policy } => cmd_policy_eval(&r, &mut out, *policy)?,
    }
    out.finish(cli, &r)
}

fn cmd_simulate(r: &Resolved, out: &mut Output, policy: AnalyticPolicy, dynamics: DynamicsArg, episodes: usize, mean_only: bool) -> Result<()> {
    if episodes == 0 {
        return invalid("episodes must be positive");
    }
    let model = r.model();
    let pol = policy.build(model, &r.spec)?;
    let dynamics = match dynamics {
        DynamicsArg::Market => Dynamics::Market,
        DynamicsArg::Filtered => Dynamics::Filtered(SignalKind::Filter),
    };
    let sim = crate::market::Simulator::new(model, dynamics, r.spec.horizon)?;
    let exec: Box<dyn GaussianPolicy> = if mean_only { Box::new(MeanOnly(&pol)) } else { Box::new(&pol) };
    for i in 0..episodes {
        let mut rng = stream(r.config.seed, i as u64);
        let ep = sim.run(exec.as_ref(), r.spec.x0, r.spec.l0, &mut rng)?;
        let mut buf = Vec::new();
        ep.write_csv(&mut buf)?;
        out.write(&format!("episode_{i}.csv"), &buf)?;
    }
    Ok(())
}

fn cmd_train(r: &Resolved, out: &mut Output, algo: Option<AlgoArg>, iters: Option<usize>, resume: Option<&Path>, every: usize) -> Result<()> {
    let algo = algo.map(Algo::from).unwrap_or(r.config.algo);
    let target = iters.unwrap_or(r.config.hyper.n_iter);
    let mut state = match resume {
        Some(p) => {
            let s = TrainState::load_checkpoint(p)?;
            if s.algo != algo || s.spec != r.spec || s.hyper.seed != r.config.hyper.seed {
                return invalid("checkpoint does not match the configuration (algo, problem or seed)");
            }
            s
        }
        None => {
            let mut hyper = r.config.hyper.clone();
            hyper.n_iter = target;
            TrainState::new(algo, algo.train_dynamics_with(&hyper), hyper, r.spec)?
        }
    };
    state.hyper.n_iter = target;
    state.train_until(r.model(), target)?;
    let mut hist = Vec::new();
    state.write_history_csv(&mut hist, every)?;
    out.write("history.csv", &hist)?;
    out.write("checkpoint.json", serde_json::to_string_pretty(&state)?.as_bytes())?;
    Ok(())
}

fn cmd_evaluate(
    r: &Resolved,
    out: &mut Output,
    checkpoint: Option<&Path>,
    policy: Option<AnalyticPolicy>,
    paths: Option<usize>,
    mean_only: bool,
) -> Result<()> {
    let n = paths.unwrap_or(r.config.n_paths);
    if n < 2 {
        return invalid("need at least two paths");
    }
    let model = r.model();
    let seed = subseed(r.config.seed, 0xE7A1);
    let mut report = match (checkpoint, policy) {
        (Some(p), None) => {
            let s = TrainState::load_checkpoint(p)?;
            if s.spec != r.spec {
                return invalid("checkpoint problem differs from the configuration");
            }
            let pol = s.policy();
            let dynamics = s.algo.eval_dynamics();
            if mean_only {
                out_of_sample(s.algo.label(), &MeanOnly(&pol), model, dynamics, n, &r.spec, seed)?
            } else {
                out_of_sample(s.algo.label(), &pol, model, dynamics, n, &r.spec, seed)?
            }
        }
        (None, Some(a)) => {
            let pol = a.build(model, &r.spec)?;
            if mean_only {
                out_of_sample(a.label(), &MeanOnly(&pol), model, a.dynamics(), n, &r.spec, seed)?
            } else {
                out_of_sample(a.label(), &pol, model, a.dynamics(), n, &r.spec, seed)?
            }
        }
        _ => return invalid("pass exactly one of --checkpoint or --policy"),
    };
    report.digest = Some(config_digest(r)?);
    let (text, csv) = compare_table(std::slice::from_ref(&report));
    print!("{text}");
    out.write("report.csv", csv.as_bytes())?;
    out.write("report.json", serde_json::to_string_pretty(&report)?.as_bytes())?;
    Ok(())
}

fn cmd_improve(r: &Resolved, out: &mut Output, horizon: usize, t: usize, iters: &str) -> Result<()> {
    if t >= horizon {
        return invalid(format!("t={t} must be below T={horizon}"));
    }
    let spec = ProblemSpec { horizon, ..r.spec };
    let schedule = regime_schedule(r.model(), Regime::One, horizon)?;
    let mut rng = stream(r.config.seed, 0);
    let family = InitialPolicyFamily::random(horizon, &mut rng);
    let start = IteratedPolicy::initial(&family, &schedule, &spec)?;
    let trace = if iters == "auto" {
        iterate_from(start, &schedule, &spec, t)?.trace
    } else {
        let n: usize = iters.parse().map_err(|_| Error::Invalid(format!("--iters must be `auto` or a count, got {iters:?}")))?;
        let mut trace = vec![start];
        for _ in 0..n {
            let next = improve_once(trace.last().expect("nonempty"), &schedule, &spec)?;
            trace.push(next);
        }
        trace
    };
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(["n", "t", "k_x", "k_l", "k_w", "k_1", "variance", "objective"])?;
    for it in &trace {
        let p = it.policies[t];
        let obj = it.objective(t, spec.x0, spec.l0, spec.w);
        let row = [it.n as f64, t as f64, p.k[0], p.k[1], p.k[2], p.k[3], p.var, obj];
        wtr.write_record(row.iter().map(|v| v.to_string()))?;
    }
    out.write("improve.csv", &wtr.into_inner().map_err(|e| Error::Io(e.into_error()))?)?;
    Ok(())
}

fn cmd_filter_demo(r: &Resolved, out: &mut Output, years: f64) -> Result<()> {
    let model = r.model();
    let horizon = model.periods(years);
    if horizon == 0 {
        return invalid("years must cover at least one period");
    }
    let paths = crate::filter::SignalPaths::new(model.chain.p0, &model.chain.p, horizon);
    let mut rng = stream(r.config.seed, 0);
    let mut regime = model.chain.initial(&mut rng);
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(["t", "true_regime", "p_hat", "p_tilde"])?;
    for t in 0..=horizon {
        wtr.write_record([t.to_string(), regime.label().to_string(), paths.p_hat[t].to_string(), paths.p_tilde[t].to_string()])?;
        regime = crate::market::step_regime(regime, &model.chain, &mut rng);
    }
    out.write("filter.csv", &wtr.into_inner().map_err(|e| Error::Io(e.into_error()))?)?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_ingest(
    r: &Resolved,
    out: &mut Output,
    prices: &Path,
    freq: Frequency,
    label: bool,
    estimate: bool,
    gammas: (f64, f64),
    index: Option<&Path>,
) -> Result<()> {
    let series = PriceSeries::from_csv(prices, freq)?;
    let labels = label_regimes(&series.closes, gammas.0, gammas.1)?;
    let (label, estimate) = if label || estimate { (label, estimate) } else { (true, true) };
    if label {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        wtr.write_record(["date", "close", "label"])?;
        for ((d, c), l) in series.dates.iter().zip(&series.closes).zip(&labels.labels) {
            let name = match l {
                crate::data_ingest::Phase::Bull => "bull",
                crate::data_ingest::Phase::Bear => "bear",
            };
            wtr.write_record([d.clone(), c.to_string(), name.to_string()])?;
        }
        out.write("labels.csv", &wtr.into_inner().map_err(|e| Error::Io(e.into_error()))?)?;
    }
    if estimate {
        let est = estimate_params(&series.returns(), &labels.return_labels(), freq.periods_per_year() as f64)?;
        let cfg = est.to_market_config(&r.config.market);
        out.write("estimate.json", serde_json::to_string_pretty(&est)?.as_bytes())?;
        out.write("market.json", serde_json::to_string_pretty(&cfg)?.as_bytes())?;
    }
    if let Some(p) = index {
        let idx = PriceSeries::from_csv(p, freq)?;
        let beta = estimate_beta(&series, &idx)?;
        out.write("beta.json", serde_json::to_string_pretty(&serde_json::json!({ "beta": beta }))?.as_bytes())?;
    }
    Ok(())
}

fn cmd_policy_eval(r: &Resolved, out: &mut Output, policy: AnalyticPolicy) -> Result<()> {
    let pol = policy.build(r.model(), &r.spec)?;
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(["t", "row", "k_x", "k_w", "h_l", "variance"])?;
    let rows = if pol.signal == SignalKind::Regime { 2 } else { 1 };
    for (t, pair) in pol.table.iter().enumerate() {
        for (i, c) in pair.iter().take(rows).enumerate() {
            wtr.write_record([t.to_string(), (i + 1).to_string(), c.kx.to_string(), c.kw.to_string(), c.hl.to_string(), c.variance.to_string()])?;
        }
    }
    out.write("policy.csv", &wtr.into_inner().map_err(|e| Error::Io(e.into_error()))?)?;
    Ok(())
}

/// Exit status for an error: 1 for user errors, 2 for internal failures.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Numerical(_) => 2,
        _ => 1,
    }
}

/// Parse `args` and run; returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_resolve() {
        let r = load_config(None, Some(4)).unwrap();
        assert_eq!(r.config.hyper.seed, 4);
        assert_eq!(r.spec.horizon, 2520);
        assert!(r.notes.iter().any(|n| n.contains("w0")));
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        fs::write(&p, r#"{"sed": 3}"#).unwrap();
        assert!(matches!(load_config(Some(&p), None), Err(Error::Invalid(_))));
    }

    #[test]
    fn flags_round_trip_through_json() {
        let cli = Cli::try_parse_from(["emv-alm", "--seed", "3", "train", "--algo", "coemv", "--iters", "5"]).unwrap();
        let text = serde_json::to_string(&cli).unwrap();
        let back: Cli = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cli);
        assert_eq!(serde_json::to_string(&back).unwrap(), text);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Invalid("x".into())), 1);
        assert_eq!(exit_code(&Error::Numerical("x".into())), 2);
        assert_eq!(main_with(["emv-alm", "bogus"]), 1);
        assert_eq!(main_with(["emv-alm", "--help"]), 0);
    }
}
