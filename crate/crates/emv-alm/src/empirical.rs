//! Block-sampled training on price data and the out-of-sample comparison
//! of the filtered learner against a single-regime EMV learner.

use serde::{Deserialize, Serialize};

use crate::closed_form::{FrozenPolicy, ProblemSpec};
use crate::data_ingest::{block_sampler, estimate_params, label_regimes, Phase, RegimeEstimate};
use crate::error::{invalid, numerical, Result};
use crate::eval::{calibrate_multiplier, mean_variance, sharpe, EvalReport};
use crate::market::{Convention, Dynamics, MarketConfig, MarketModel, Regime, ReturnSpec, Simulator};
use crate::policy::{GaussianPolicy, MeanOnly, PolicyKind, SignalKind};
use crate::rl::{Algo, Hyperparams, TrainState};
use crate::rng::{stream, subseed, Stream};

/// One price path with the regime driving each return (known for synthetic data).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PricePath {
    pub closes: Vec<f64>,
    pub regimes: Vec<Regime>,
}

impl PricePath {
    /// Gross returns `c_{t+1}/c_t`.
    pub fn gross_returns(&self, start: usize, len: usize) -> Vec<f64> {
        self.closes[start..=start + len].windows(2).map(|w| w[1] / w[0]).collect()
    }

    /// The observations `[start, end]` as a new path.
    pub fn slice(&self, start: usize, end: usize) -> PricePath {
        PricePath { closes: self.closes[start..=end].to_vec(), regimes: self.regimes[start..end].to_vec() }
    }
}

/// `n` independent paths of `periods` returns each, path `i` on stream `i`.
pub fn synthetic_universe(model: &MarketModel, n: usize, periods: usize, seed: u64) -> Vec<PricePath> {
    (0..n)
        .map(|i| {
            let mut rng = stream(seed, i as u64);
            let (closes, regimes) = crate::data_ingest::synthetic_prices(model, periods, 100.0, &mut rng);
            PricePath { closes, regimes }
        })
        .collect()
}

/// Which learner a block-trained run fits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Learner {
    /// Two regimes with the filter as signal.
    Filtered,
    /// One regime, no filtering.
    SingleRegime,
}

/// Exponentially averaged block estimates.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamTracker {
    pub current: Option<RegimeEstimate>,
    /// Unlabelled annualised mean and variance.
    pub pooled: Option<(f64, f64)>,
}

impl ParamTracker {
    pub fn update(&mut self, new: RegimeEstimate, pooled: (f64, f64), n: usize) -> Result<()> {
        let avg = |o: f64, v: f64| crate::data_ingest::exp_average_update(o, v, n);
        self.current = Some(match self.current.take() {
            None => new,
            Some(old) => RegimeEstimate {
                annual_mean: [avg(old.annual_mean[0], new.annual_mean[0])?, avg(old.annual_mean[1], new.annual_mean[1])?],
                annual_variance: [
                    avg(old.annual_variance[0], new.annual_variance[0])?,
                    avg(old.annual_variance[1], new.annual_variance[1])?,
                ],
                mean_sojourn: new.mean_sojourn,
                p12: avg(old.p12, new.p12)?,
                p21: avg(old.p21, new.p21)?,
                counts: new.counts,
            },
        });
        self.pooled = Some(match self.pooled {
            None => pooled,
            Some((m, v)) => (avg(m, pooled.0)?, avg(v, pooled.1)?),
        });
        Ok(())
    }
}

/// Label one block of closes and estimate both regimes, plus the
/// unlabelled annualised mean and variance.
pub fn block_estimate(closes: &[f64], gamma1: f64, gamma2: f64, periods_per_year: f64) -> Result<(RegimeEstimate, (f64, f64))> {
    let labels = label_regimes(closes, gamma1, gamma2)?;
    let returns: Vec<f64> = closes.windows(2).map(|w| w[1] / w[0] - 1.0).collect();
    let est = estimate_params(&returns, &labels.return_labels(), periods_per_year)?;
    let (m, v) = mean_variance(&returns);
    Ok((est, (m * periods_per_year, v * periods_per_year)))
}

fn mix(a: &ReturnSpec, b: &ReturnSpec, pi: f64) -> ReturnSpec {
    let (sa, sb) = (a.annual_vol, b.annual_vol);
    let mean = pi * a.annual_mean + (1.0 - pi) * b.annual_mean;
    let var = pi * sa * sa + (1.0 - pi) * sb * sb + pi * (1.0 - pi) * (a.annual_mean - b.annual_mean).powi(2);
    if var == 0.0 {
        ReturnSpec::constant(mean, a.convention)
    } else {
        ReturnSpec::normal(mean, var.sqrt(), a.convention)
    }
}

/// A one-regime market: the risk-free rate and liability are weighted by
/// the sojourn shares `φ₂/(φ₁+φ₂)` and `φ₁/(φ₁+φ₂)`, the risky asset has
/// the unlabelled estimate.
pub fn single_regime_config(est: &RegimeEstimate, pooled: (f64, f64), base: &MarketConfig) -> MarketConfig {
    let pi = est.p21 / (est.p12 + est.p21);
    let e0 = mix(&base.e0[0], &base.e0[1], pi);
    let q = mix(&base.q[0], &base.q[1], pi);
    let e1 = ReturnSpec::normal(pooled.0, pooled.1.max(0.0).sqrt(), Convention::Net);
    MarketConfig {
        p0: 0.5,
        p11: 1.0,
        p12: 0.0,
        p21: 0.0,
        p22: 1.0,
        e0: [e0, e0],
        e1: [e1, e1],
        q: [q, q],
        ..base.clone()
    }
}

pub fn learner_model(learner: Learner, tracker: &ParamTracker, base: &MarketConfig) -> Result<MarketModel> {
    let est = tracker.current.as_ref().ok_or_else(|| crate::Error::Invalid("no estimate yet".into()))?;
    let pooled = tracker.pooled.expect("set together with the estimate");
    match learner {
        Learner::Filtered => est.to_model(base),
        Learner::SingleRegime => MarketModel::new(single_regime_config(est, pooled, base)),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub n_train_series: usize,
    pub n_test_series: usize,
    pub train_years: usize,
    pub test_years: usize,
    pub horizon_years: usize,
    pub gamma1: f64,
    pub gamma2: f64,
    /// Exponential-averaging window.
    pub n_avg: usize,
    pub hyper: Hyperparams,
    pub spec: ProblemSpec,
}

impl StudyConfig {
    /// The daily study: 35 training series over 20 years, 10-year blocks.
    pub fn daily(hyper: Hyperparams, spec: ProblemSpec) -> Self {
        StudyConfig {
            n_train_series: 35,
            n_test_series: 126,
            train_years: 20,
            test_years: 10,
            horizon_years: 10,
            gamma1: 0.24,
            gamma2: 0.19,
            n_avg: 6,
            hyper,
            spec,
        }
    }

    fn periods_per_year(&self) -> usize {
        (1.0 / self.hyper.dt).round() as usize
    }
}

/// Block-sampled training: each iteration draws a block, updates the
/// averaged estimate and takes one learning step replaying the block.
/// Blocks in which a regime is missing leave the estimate unchanged.
pub fn train_on_blocks(
    learner: Learner,
    paths: &[PricePath],
    base: &MarketConfig,
    cfg: &StudyConfig,
) -> Result<(TrainState, ParamTracker)> {
    let h = cfg.spec.horizon;
    let ppy = cfg.periods_per_year() as f64;
    let lengths: Vec<usize> = paths.iter().map(|p| p.closes.len() - 1).collect();
    let mut block_rng: Stream = stream(subseed(cfg.hyper.seed, 0xB10C), 0);
    let mut tracker = ParamTracker::default();
    let mut state = TrainState::new(Algo::Poemv1, Dynamics::Market, cfg.hyper.clone(), cfg.spec)?;
    let mut misses = 0usize;
    while state.iteration < cfg.hyper.n_iter {
        let b = block_sampler(&lengths, h, &mut block_rng)?;
        let path = &paths[b.series];
        let closes = &path.closes[b.start..=b.start + h];
        match block_estimate(closes, cfg.gamma1, cfg.gamma2, ppy) {
            Ok((est, pooled)) => tracker.update(est, pooled, cfg.n_avg)?,
            Err(crate::Error::Invalid(_)) => misses += 1,
            Err(e) => return Err(e),
        }
        if tracker.current.is_none() {
            if misses > 1000 {
                return numerical("no block contains both regimes");
            }
            continue;
        }
        let model = learner_model(learner, &tracker, base)?;
        let sim = Simulator::new(&model, Dynamics::Market, h)?;
        let e1 = path.gross_returns(b.start, h);
        let regimes = &path.regimes[b.start..b.start + h];
        let (x0, l0) = (cfg.spec.x0, cfg.spec.l0);
        state.step_with(|policy, rng| sim.run_replay(policy, x0, l0, &e1, regimes, rng))?;
    }
    Ok((state, tracker))
}

/// Replay `policy` on the first horizon of each test path and summarise.
pub fn replay_report(
    name: &str,
    policy: &dyn GaussianPolicy,
    model: &MarketModel,
    tests: &[PricePath],
    spec: &ProblemSpec,
    seed: u64,
) -> Result<EvalReport> {
    if tests.len() < 2 {
        return invalid("need at least two test paths");
    }
    let sim = Simulator::new(model, Dynamics::Market, spec.horizon)?;
    let mut out = Vec::with_capacity(tests.len());
    for (i, p) in tests.iter().enumerate() {
        let mut rng = stream(seed, i as u64);
        let e1 = p.gross_returns(0, spec.horizon);
        let s = match sim.run_replay(policy, spec.x0, spec.l0, &e1, &p.regimes, &mut rng) {
            Ok(ep) => ep.terminal_surplus(),
            Err(crate::Error::Numerical(_)) => f64::NAN,
            Err(e) => return Err(e),
        };
        out.push(s);
    }
    let kept: Vec<f64> = out.iter().copied().filter(|v| v.is_finite()).collect();
    let excluded = out.len() - kept.len();
    if excluded * 100 > out.len() || kept.len() < 2 {
        return numerical(format!("{excluded} of {} test paths ended non-finite", out.len()));
    }
    let (mean, variance) = mean_variance(&kept);
    Ok(EvalReport {
        algo: name.to_string(),
        policy_kind: policy.kind(),
        mean,
        variance,
        sharpe: sharpe(mean, variance),
        n_paths: kept.len(),
        excluded,
        seed,
        digest: None,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    /// Threshold-labelled estimate pooled over all training windows.
    pub labelled: RegimeEstimate,
    /// The same estimator fed the true regimes.
    pub oracle: RegimeEstimate,
    pub filtered: EvalReport,
    pub single_regime: EvalReport,
    pub classical: EvalReport,
}

/// Pooled estimate over whole windows; each path is labelled separately.
pub fn pooled_estimate(paths: &[PricePath], gamma1: f64, gamma2: f64, ppy: f64, use_truth: bool) -> Result<RegimeEstimate> {
    let mut returns = Vec::new();
    let mut labels = Vec::new();
    for p in paths {
        returns.extend(p.closes.windows(2).map(|w| w[1] / w[0] - 1.0));
        if use_truth {
            labels.extend(p.regimes.iter().map(|r| if *r == Regime::One { Phase::Bull } else { Phase::Bear }));
        } else {
            labels.extend(label_regimes(&p.closes, gamma1, gamma2)?.return_labels());
        }
    }
    estimate_params(&returns, &labels, ppy)
}

/// Simulate a universe from `truth`, train both learners on the training
/// windows and replay them, with the analytic policy, on the test windows.
pub fn run_study(truth: &MarketModel, cfg: &StudyConfig) -> Result<StudyReport> {
    let ppy = cfg.periods_per_year();
    let train_len = cfg.train_years * ppy;
    let test_len = cfg.test_years * ppy;
    if cfg.spec.horizon > train_len || cfg.spec.horizon > test_len {
        return invalid("horizon longer than the training or test window");
    }
    let seed = cfg.hyper.seed;
    let train: Vec<PricePath> = synthetic_universe(truth, cfg.n_train_series, train_len, subseed(seed, 1));
    let tests: Vec<PricePath> = synthetic_universe(truth, cfg.n_test_series, test_len, subseed(seed, 2));
    let labelled = pooled_estimate(&train, cfg.gamma1, cfg.gamma2, ppy as f64, false)?;
    let oracle = pooled_estimate(&train, cfg.gamma1, cfg.gamma2, ppy as f64, true)?;

    let eval_seed = subseed(seed, 3);
    let (fs, ft) = train_on_blocks(Learner::Filtered, &train, &truth.config, cfg)?;
    let fmodel = learner_model(Learner::Filtered, &ft, &truth.config)?;
    let filtered = replay_report("PoEMV-1", &fs.policy(), &fmodel, &tests, &cfg.spec, eval_seed)?;

    let (ss, st) = train_on_blocks(Learner::SingleRegime, &train, &truth.config, cfg)?;
    let smodel = learner_model(Learner::SingleRegime, &st, &truth.config)?;
    let single_regime = replay_report("EMV", &ss.policy(), &smodel, &tests, &cfg.spec, eval_seed)?;

    let base = FrozenPolicy::new(PolicyKind::PoemvOpt, SignalKind::Filter, &fmodel, &cfg.spec)?;
    let filt = Dynamics::Filtered(SignalKind::Filter);
    let w = calibrate_multiplier(|w| MeanOnly(base.with_w(w)), &fmodel, filt, 2, &cfg.spec, eval_seed)?;
    let classical = replay_report("Classical", &MeanOnly(base.with_w(w)), &fmodel, &tests, &cfg.spec, eval_seed)?;
    Ok(StudyReport { labelled, oracle, filtered, single_regime, classical })
}
