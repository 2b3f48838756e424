//! Two-regime Markov market, surplus dynamics and episode simulation.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::filter::{filtered_moments, Matrix2, MomentSet, SignalPaths};
use crate::policy::{GaussianPolicy, SignalKind};
use crate::rng::Stream;

/// Market state `ε_t`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Regime {
    One,
    Two,
}

impl Regime {
    pub fn index(self) -> usize {
        match self {
            Regime::One => 0,
            Regime::Two => 1,
        }
    }
    pub fn label(self) -> u8 {
        self.index() as u8 + 1
    }
    pub fn from_index(i: usize) -> Regime {
        if i == 0 {
            Regime::One
        } else {
            Regime::Two
        }
    }
}

impl From<Regime> for u8 {
    fn from(r: Regime) -> u8 {
        r.label()
    }
}

impl TryFrom<u8> for Regime {
    type Error = String;
    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(Regime::One),
            2 => Ok(Regime::Two),
            _ => Err(format!("regime must be 1 or 2, got {v}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeChain {
    pub p: Matrix2,
    pub p0: f64,
}

impl RegimeChain {
    pub fn new(p: Matrix2, p0: f64) -> Result<Self> {
        for (i, row) in p.iter().enumerate() {
            if row.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return invalid(format!("transition row {} has entries outside [0,1]", i + 1));
            }
            if (row[0] + row[1] - 1.0).abs() > 1e-12 {
                return invalid(format!("transition row {} does not sum to 1", i + 1));
            }
        }
        if !(p0 > 0.0 && p0 < 1.0) {
            return invalid(format!("p0 = {p0} must lie in (0,1)"));
        }
        Ok(RegimeChain { p, p0 })
    }

    pub fn initial(&self, rng: &mut Stream) -> Regime {
        if rng.gen::<f64>() < self.p0 {
            Regime::One
        } else {
            Regime::Two
        }
    }
}

/// Draw `ε_{t+1}` given `ε_t`.
pub fn step_regime(current: Regime, chain: &RegimeChain, rng: &mut Stream) -> Regime {
    let stay_in_one = chain.p[current.index()][0];
    if rng.gen::<f64>() < stay_in_one {
        Regime::One
    } else {
        Regime::Two
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReturnKind {
    Constant,
    Normal,
    SkewedT,
}

/// Whether the annual figure is a gross return (1.2) or a net rate (0.2).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    Gross,
    Net,
}

/// Whether the second annual figure is a standard deviation or a variance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SecondParam {
    #[default]
    Std,
    Variance,
}

/// Annual law of one return process in one regime.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReturnSpec {
    pub kind: ReturnKind,
    #[serde(rename = "annualized_return")]
    pub annual_mean: f64,
    #[serde(rename = "volatility", default)]
    pub annual_vol: f64,
    #[serde(rename = "degrees_of_freedom", default, skip_serializing_if = "Option::is_none")]
    pub dof: Option<f64>,
    #[serde(rename = "skewness", default, skip_serializing_if = "Option::is_none")]
    pub skew: Option<f64>,
    pub convention: Convention,
    #[serde(rename = "second_parameter", default)]
    pub second_param: SecondParam,
}

impl ReturnSpec {
    pub fn constant(annual_mean: f64, convention: Convention) -> Self {
        ReturnSpec {
            kind: ReturnKind::Constant,
            annual_mean,
            annual_vol: 0.0,
            dof: None,
            skew: None,
            convention,
            second_param: SecondParam::Std,
        }
    }

    pub fn normal(annual_mean: f64, annual_vol: f64, convention: Convention) -> Self {
        ReturnSpec { kind: ReturnKind::Normal, annual_vol, ..Self::constant(annual_mean, convention) }
    }

    pub fn skewed_t(annual_mean: f64, annual_vol: f64, dof: f64, skew: f64, convention: Convention) -> Self {
        ReturnSpec {
            kind: ReturnKind::SkewedT,
            annual_vol,
            dof: Some(dof),
            skew: Some(skew),
            ..Self::constant(annual_mean, convention)
        }
    }

    fn annual_std(&self) -> f64 {
        match self.second_param {
            SecondParam::Std => self.annual_vol,
            SecondParam::Variance => self.annual_vol.sqrt(),
        }
    }

    /// Per-period law: mean `1 + r·dt` (net) or `1 + (g − 1)·dt` (gross),
    /// variance `annual variance · dt`.
    pub fn per_period(&self, dt: f64) -> Result<PeriodLaw> {
        if !self.annual_mean.is_finite() || !self.annual_vol.is_finite() || self.annual_vol < 0.0 {
            return invalid(format!("bad return spec {self:?}"));
        }
        let mean = match self.convention {
            Convention::Gross => 1.0 + (self.annual_mean - 1.0) * dt,
            Convention::Net => 1.0 + self.annual_mean * dt,
        };
        let std = self.annual_std() * dt.sqrt();
        match self.kind {
            ReturnKind::Constant => {
                if self.annual_vol != 0.0 {
                    return invalid("constant return spec must have zero volatility");
                }
                Ok(PeriodLaw::Constant { value: mean })
            }
            ReturnKind::Normal => Ok(PeriodLaw::Normal { mean, std }),
            ReturnKind::SkewedT => {
                let dof = self.dof.ok_or_else(|| Error::Invalid("skewed_t needs degrees_of_freedom".into()))?;
                let skew = self.skew.ok_or_else(|| Error::Invalid("skewed_t needs skewness".into()))?;
                Ok(PeriodLaw::SkewedT { mean, std, shape: SkewedT::new(dof, skew)? })
            }
        }
    }
}

/// Hansen's standardized skewed-t (mean 0, variance 1) with `ν` degrees of
/// freedom and asymmetry `λ ∈ (−1, 1)`.
#[derive(Clone, Copy, Debug)]
pub struct SkewedT {
    pub dof: f64,
    pub skew: f64,
    a: f64,
    b: f64,
    t: StudentT<f64>,
}

impl SkewedT {
    pub fn new(dof: f64, skew: f64) -> Result<Self> {
        if !(dof > 2.0) {
            return invalid(format!("skewed-t needs dof > 2 for a finite variance, got {dof}"));
        }
        if !(skew > -1.0 && skew < 1.0) {
            return invalid(format!("skewed-t asymmetry must lie in (-1,1), got {skew}"));
        }
        let c = (libm::lgamma((dof + 1.0) / 2.0) - libm::lgamma(dof / 2.0)).exp()
            / (std::f64::consts::PI * (dof - 2.0)).sqrt();
        let a = 4.0 * skew * c * (dof - 2.0) / (dof - 1.0);
        let b = (1.0 + 3.0 * skew * skew - a * a).sqrt();
        let t = StudentT::new(dof).map_err(|e| Error::Invalid(e.to_string()))?;
        Ok(SkewedT { dof, skew, a, b, t })
    }

    /// Draw via the two-sided scaling representation: `y = −(1−λ)|s|` with
    /// probability `(1−λ)/2`, else `(1+λ)|s|`, where `s` is a unit-variance t;
    /// then `z = (y − a)/b`.
    pub fn sample(&self, rng: &mut Stream) -> f64 {
        let s: f64 = self.t.sample(rng) * ((self.dof - 2.0) / self.dof).sqrt();
        let u: f64 = rng.gen();
        let y = if u < (1.0 - self.skew) / 2.0 {
            -(1.0 - self.skew) * s.abs()
        } else {
            (1.0 + self.skew) * s.abs()
        };
        (y - self.a) / self.b
    }
}

impl PartialEq for SkewedT {
    fn eq(&self, o: &Self) -> bool {
        self.dof == o.dof && self.skew == o.skew
    }
}

/// Draw from a skewed-t rescaled to the given mean and standard deviation.
pub fn sample_skewed_t(mean: f64, vol: f64, dof: f64, skew: f64, rng: &mut Stream) -> Result<f64> {
    if vol < 0.0 {
        return invalid("vol must be nonnegative");
    }
    let shape = SkewedT::new(dof, skew)?;
    if vol == 0.0 {
        return Ok(mean);
    }
    Ok(mean + vol * shape.sample(rng))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PeriodLaw {
    Constant { value: f64 },
    Normal { mean: f64, std: f64 },
    SkewedT { mean: f64, std: f64, shape: SkewedT },
}

impl PeriodLaw {
    pub fn mean(&self) -> f64 {
        match *self {
            PeriodLaw::Constant { value } => value,
            PeriodLaw::Normal { mean, .. } | PeriodLaw::SkewedT { mean, .. } => mean,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            PeriodLaw::Constant { .. } => 0.0,
            PeriodLaw::Normal { std, .. } | PeriodLaw::SkewedT { std, .. } => std * std,
        }
    }

    pub fn sample(&self, rng: &mut Stream) -> f64 {
        match *self {
            PeriodLaw::Constant { value } => value,
            PeriodLaw::Normal { mean, std } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + std * z
            }
            PeriodLaw::SkewedT { mean, std, shape } => mean + std * shape.sample(rng),
        }
    }
}

/// On-disk market description; keys follow the simulation-study parameter names.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarketConfig {
    pub dt: f64,
    #[serde(rename = "p_hat_0")]
    pub p0: f64,
    #[serde(rename = "P11")]
    pub p11: f64,
    #[serde(rename = "P12")]
    pub p12: f64,
    #[serde(rename = "P21")]
    pub p21: f64,
    #[serde(rename = "P22")]
    pub p22: f64,
    pub e0: [ReturnSpec; 2],
    pub e1: [ReturnSpec; 2],
    pub q: [ReturnSpec; 2],
}

impl MarketConfig {
    /// The simulation-study market with daily steps.
    pub fn study_default() -> Self {
        MarketConfig {
            dt: 1.0 / 252.0,
            p0: 0.3,
            p11: 0.9986,
            p12: 0.0014,
            p21: 0.0114,
            p22: 0.9886,
            e0: [
                ReturnSpec::constant(1.2, Convention::Gross),
                ReturnSpec::constant(1.05, Convention::Gross),
            ],
            e1: [
                ReturnSpec::skewed_t(0.5, 0.2, 10.0, 0.1, Convention::Net),
                ReturnSpec::skewed_t(0.06, 0.3, 10.0, 0.1, Convention::Net),
            ],
            q: [
                ReturnSpec::normal(0.05, 0.1, Convention::Net),
                ReturnSpec::normal(0.01, 0.2, Convention::Net),
            ],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MarketModel {
    pub chain: RegimeChain,
    pub config: MarketConfig,
    pub dt: f64,
    laws: [[PeriodLaw; 3]; 2],
}

impl MarketModel {
    pub fn new(config: MarketConfig) -> Result<Self> {
        if !(config.dt > 0.0) {
            return invalid("dt must be positive");
        }
        let chain = RegimeChain::new([[config.p11, config.p12], [config.p21, config.p22]], config.p0)?;
        let mut laws = [[PeriodLaw::Constant { value: 1.0 }; 3]; 2];
        for i in 0..2 {
            laws[i] = [
                config.e0[i].per_period(config.dt)?,
                config.e1[i].per_period(config.dt)?,
                config.q[i].per_period(config.dt)?,
            ];
            // E[e e'] for e = (e0, e1) with independent components
            let (m0, v0) = (laws[i][0].mean(), laws[i][0].variance());
            let (m1, v1) = (laws[i][1].mean(), laws[i][1].variance());
            let det = (v0 + m0 * m0) * (v1 + m1 * m1) - (m0 * m1) * (m0 * m1);
            if !(det > 0.0) || !(v0 + m0 * m0 > 0.0) {
                return invalid(format!("second-moment matrix of regime {} is not positive definite", i + 1));
            }
        }
        Ok(MarketModel { chain, dt: config.dt, config, laws })
    }

    pub fn study_default() -> Self {
        Self::new(MarketConfig::study_default()).expect("default market is valid")
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::new(serde_json::from_str(&text)?)
    }

    pub fn laws(&self, regime: Regime) -> &[PeriodLaw; 3] {
        &self.laws[regime.index()]
    }

    /// Per-period moments `(A0, B0, A1, B1, A2, B2)` of one regime.
    pub fn regime_moments(&self, regime: Regime) -> MomentSet {
        let [e0, e1, q] = self.laws(regime);
        MomentSet::from_mean_var(e0.mean(), e0.variance(), e1.mean(), e1.variance(), q.mean(), q.variance())
    }

    pub fn moments_pair(&self) -> (MomentSet, MomentSet) {
        (self.regime_moments(Regime::One), self.regime_moments(Regime::Two))
    }

    /// Number of periods in `years`.
    pub fn periods(&self, years: f64) -> usize {
        (years / self.dt).round() as usize
    }
}

/// Draw `(e⁰, e¹, q)` for one period in `regime`.
pub fn sample_returns(regime: Regime, model: &MarketModel, rng: &mut Stream) -> (f64, f64, f64) {
    let [e0, e1, q] = model.laws(regime);
    let a = e0.sample(rng);
    let b = e1.sample(rng);
    let c = q.sample(rng);
    (a, b, c)
}

/// `x' = e⁰x + (e¹ − e⁰)u`, `l' = q l`, `S' = x' − l'`.
pub fn step_surplus(x: f64, l: f64, u: f64, e0: f64, e1: f64, q: f64) -> Result<(f64, f64, f64)> {
    if [x, l, u, e0, e1, q].iter().any(|v| !v.is_finite()) {
        return invalid("non-finite input to surplus step");
    }
    let x_next = e0 * x + (e1 - e0) * u;
    let l_next = q * l;
    Ok((x_next, l_next, x_next - l_next))
}

/// Which law generates the returns an episode sees.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dynamics {
    /// Regime-dependent random returns.
    Market,
    /// The filtered model: returns replaced by their signal-weighted means,
    /// `ê_t = E[e(1)] w_t + E[e(2)] (1 − w_t)`, with `w_t` the chosen signal.
    Filtered(SignalKind),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub x: f64,
    pub l: f64,
    pub regime: Regime,
    pub p_hat: f64,
    /// Signal the policy observed.
    pub signal: f64,
    pub action: Option<f64>,
    /// Returns applied between `t` and `t+1`.
    pub e0: Option<f64>,
    pub e1: Option<f64>,
    pub q: Option<f64>,
    pub mean: Option<f64>,
    pub variance: Option<f64>,
}

/// A trajectory of `T` decision records plus the terminal record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub steps: Vec<StepRecord>,
}

impl Episode {
    pub fn horizon(&self) -> usize {
        self.steps.len() - 1
    }

    pub fn terminal(&self) -> &StepRecord {
        self.steps.last().expect("episode has a terminal record")
    }

    pub fn terminal_surplus(&self) -> f64 {
        let last = self.terminal();
        last.x - last.l
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "x", "l", "regime", "p_hat", "action"])?;
        for s in &self.steps {
            w.write_record([
                s.t.to_string(),
                s.x.to_string(),
                s.l.to_string(),
                s.regime.label().to_string(),
                s.p_hat.to_string(),
                s.action.map(|a| a.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Precomputed context for running many episodes of one configuration.
#[derive(Clone, Debug)]
pub struct Simulator {
    pub model: MarketModel,
    pub dynamics: Dynamics,
    pub horizon: usize,
    pub signals: SignalPaths,
    filtered: Vec<(f64, f64, f64)>,
}

impl Simulator {
    pub fn new(model: &MarketModel, dynamics: Dynamics, horizon: usize) -> Result<Self> {
        if horizon < 1 {
            return invalid("horizon must be at least one period");
        }
        let signals = SignalPaths::new(model.chain.p0, &model.chain.p, horizon);
        let mut filtered = Vec::new();
        if let Dynamics::Filtered(kind) = dynamics {
            let (r1, r2) = model.moments_pair();
            for t in 0..horizon {
                let w = match kind {
                    SignalKind::Filter => signals.p_hat[t],
                    SignalKind::Expectation => signals.p_tilde[t],
                    SignalKind::Unconditional => signals.p_uncond[t],
                    SignalKind::Regime => return invalid("filtered dynamics need a probability signal"),
                };
                let m = filtered_moments(w, &r1, &r2)?;
                filtered.push((m.a0, m.e1_mean(), m.a2));
            }
        }
        Ok(Simulator { model: model.clone(), dynamics, horizon, signals, filtered })
    }

    pub fn signal(&self, kind: SignalKind, t: usize, regime: Regime) -> f64 {
        match kind {
            SignalKind::Regime => regime.label() as f64,
            SignalKind::Filter => self.signals.p_hat[t],
            SignalKind::Expectation => self.signals.p_tilde[t],
            SignalKind::Unconditional => self.signals.p_uncond[t],
        }
    }

    /// Roll out one episode. Per step the stream is consumed in a fixed
    /// order: action noise, returns, regime transition.
    pub fn run(&self, policy: &dyn GaussianPolicy, x0: f64, l0: f64, rng: &mut Stream) -> Result<Episode> {
        self.rollout(policy, x0, l0, None, rng)
    }

    /// Roll out on a recorded risky-return path: `e1[t]` are gross returns,
    /// while the risk-free and liability factors take their filter-weighted
    /// means. `regimes` is stored for diagnostics only. The stream supplies
    /// action noise alone.
    pub fn run_replay(
        &self,
        policy: &dyn GaussianPolicy,
        x0: f64,
        l0: f64,
        e1: &[f64],
        regimes: &[Regime],
        rng: &mut Stream,
    ) -> Result<Episode> {
        if e1.len() < self.horizon || regimes.len() < self.horizon {
            return invalid(format!("replay path shorter than the horizon {}", self.horizon));
        }
        self.rollout(policy, x0, l0, Some((e1, regimes)), rng)
    }

    fn rollout(
        &self,
        policy: &dyn GaussianPolicy,
        x0: f64,
        l0: f64,
        replay: Option<(&[f64], &[Regime])>,
        rng: &mut Stream,
    ) -> Result<Episode> {
        if !(x0 > 0.0) {
            return invalid("x0 must be positive");
        }
        let kind = policy.signal_kind();
        let pair = self.model.moments_pair();
        let mut regime = match replay {
            Some((_, regimes)) => regimes[0],
            None => self.model.chain.initial(rng),
        };
        let (mut x, mut l) = (x0, l0);
        let mut steps = Vec::with_capacity(self.horizon + 1);
        for t in 0..self.horizon {
            let signal = self.signal(kind, t, regime);
            let (mean, var) = policy.distribution(t, x, l, signal);
            if !mean.is_finite() || !var.is_finite() || var < 0.0 {
                return Err(Error::Numerical(format!(
                    "policy returned mean {mean}, variance {var} at t={t}"
                )));
            }
            let z: f64 = StandardNormal.sample(rng);
            let u = mean + var.sqrt() * z;
            let (e0, e1, q) = match (replay, self.dynamics) {
                (Some((path, _)), _) => {
                    let m = filtered_moments(self.signals.p_hat[t], &pair.0, &pair.1)?;
                    (m.a0, path[t], m.a2)
                }
                (None, Dynamics::Market) => sample_returns(regime, &self.model, rng),
                (None, Dynamics::Filtered(_)) => self.filtered[t],
            };
            let (xn, ln, _) = step_surplus(x, l, u, e0, e1, q)?;
            steps.push(StepRecord {
                t,
                x,
                l,
                regime,
                p_hat: self.signals.p_hat[t],
                signal,
                action: Some(u),
                e0: Some(e0),
                e1: Some(e1),
                q: Some(q),
                mean: Some(mean),
                variance: Some(var),
            });
            if !xn.is_finite() || !ln.is_finite() {
                return Err(Error::Numerical(format!("state diverged after t={t}")));
            }
            x = xn;
            l = ln;
            regime = match replay {
                Some((_, regimes)) => regimes.get(t + 1).copied().unwrap_or(regime),
                None => step_regime(regime, &self.model.chain, rng),
            };
        }
        let t = self.horizon;
        steps.push(StepRecord {
            t,
            x,
            l,
            regime,
            p_hat: self.signals.p_hat[t],
            signal: self.signal(kind, t, regime),
            action: None,
            e0: None,
            e1: None,
            q: None,
            mean: None,
            variance: None,
        });
        Ok(Episode { steps })
    }
}

/// Convenience wrapper building a [`Simulator`] for a single episode.
#[allow(clippy::too_many_arguments)]
pub fn simulate_episode(
    model: &MarketModel,
    dynamics: Dynamics,
    policy: &dyn GaussianPolicy,
    horizon: usize,
    x0: f64,
    l0: f64,
    rng: &mut Stream,
) -> Result<Episode> {
    Simulator::new(model, dynamics, horizon)?.run(policy, x0, l0, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::FnPolicy;
    use crate::rng::stream;

    #[test]
    fn absorbing_and_flipping_chains() {
        let id = RegimeChain::new([[1.0, 0.0], [0.0, 1.0]], 0.5).unwrap();
        let flip = RegimeChain::new([[0.0, 1.0], [1.0, 0.0]], 0.5).unwrap();
        let mut rng = stream(1, 0);
        for _ in 0..1000 {
            assert_eq!(step_regime(Regime::One, &id, &mut rng), Regime::One);
            assert_eq!(step_regime(Regime::One, &flip, &mut rng), Regime::Two);
        }
    }

    #[test]
    fn chain_validation() {
        assert!(RegimeChain::new([[0.5, 0.6], [0.5, 0.5]], 0.3).is_err());
        assert!(RegimeChain::new([[0.5, 0.5], [0.5, 0.5]], 1.0).is_err());
        assert!(RegimeChain::new([[1.5, -0.5], [0.5, 0.5]], 0.3).is_err());
    }

    #[test]
    fn stay_frequency_matches_transition_row() {
        let model = MarketModel::study_default();
        let mut rng = stream(11, 0);
        let n = 1_000_000;
        let stays = (0..n)
            .filter(|_| step_regime(Regime::One, &model.chain, &mut rng) == Regime::One)
            .count();
        let frac = stays as f64 / n as f64;
        let p: f64 = 0.9986;
        let band = 3.0 * (p * (1.0 - p) / n as f64).sqrt();
        assert!((frac - p).abs() < band, "{frac}");
    }

    #[test]
    fn gross_constant_with_unit_step() {
        let law = ReturnSpec::constant(1.2, Convention::Gross).per_period(1.0).unwrap();
        let mut rng = stream(0, 0);
        assert_eq!(law.sample(&mut rng), 1.2);
    }

    #[test]
    fn zero_vol_normal_is_deterministic() {
        let law = ReturnSpec::normal(0.05, 0.0, Convention::Net).per_period(0.5).unwrap();
        let mut rng = stream(0, 0);
        assert_eq!(law.sample(&mut rng), 1.025);
    }

    #[test]
    fn variance_parameter_reading() {
        let mut spec = ReturnSpec::normal(0.05, 0.04, Convention::Net);
        spec.second_param = SecondParam::Variance;
        let law = spec.per_period(1.0).unwrap();
        assert!((law.variance() - 0.04).abs() < 1e-15);
    }

    #[test]
    fn surplus_step_by_hand() {
        let (x, l, s) = step_surplus(1.0, 0.1, 0.0, 1.2, 1.5, 1.05).unwrap();
        assert!((x - 1.2).abs() < 1e-15 && (l - 0.105).abs() < 1e-15 && (s - 1.095).abs() < 1e-15);
        let (x, _, _) = step_surplus(2.0, 0.1, 2.0, 1.1, 1.1, 1.0).unwrap();
        assert_eq!(x, 2.2);
        let (_, l, s) = step_surplus(2.0, 0.0, 1.0, 1.1, 1.3, 1.0).unwrap();
        assert_eq!(l, 0.0);
        assert!((s - 2.4).abs() < 1e-15);
        assert!(step_surplus(f64::NAN, 0.0, 0.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn skewed_t_rejects_infinite_variance() {
        let mut rng = stream(0, 0);
        assert!(sample_skewed_t(0.0, 1.0, 2.0, 0.1, &mut rng).is_err());
        assert_eq!(sample_skewed_t(0.3, 0.0, 10.0, 0.1, &mut rng).unwrap(), 0.3);
    }

    #[test]
    fn skewed_t_moments() {
        let mut rng = stream(5, 0);
        let n = 1_000_000;
        let (mu, sd) = (0.002, 0.0126);
        let xs: Vec<f64> = (0..n).map(|_| sample_skewed_t(mu, sd, 10.0, 0.1, &mut rng).unwrap()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let skew = xs.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / n as f64 / var.powf(1.5);
        assert!((mean - mu).abs() < 0.01 * mu, "mean {mean}");
        assert!((var.sqrt() - sd).abs() < 0.01 * sd, "sd {}", var.sqrt());
        assert!(skew > 0.0, "skew {skew}");
    }

    #[test]
    fn default_market_constructs() {
        let m = MarketModel::study_default();
        let r1 = m.regime_moments(Regime::One);
        assert!((r1.a0 - (1.0 + 0.2 / 252.0)).abs() < 1e-15);
        assert!((r1.e1_mean() - (1.0 + 0.5 / 252.0)).abs() < 1e-15);
        assert!((r1.b2 - r1.a2 * r1.a2 - 0.01 / 252.0).abs() < 1e-15);
        assert_eq!(m.periods(10.0), 2520);
    }

    #[test]
    fn config_round_trip_uses_parameter_names() {
        let cfg = MarketConfig::study_default();
        let text = serde_json::to_string(&cfg).unwrap();
        for key in ["p_hat_0", "P11", "P12", "P21", "P22", "annualized_return", "volatility", "degrees_of_freedom", "skewness"] {
            assert!(text.contains(&format!("\"{key}\"")), "missing {key}");
        }
        let back: MarketConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    fn idle(kind: SignalKind) -> FnPolicy<impl Fn(usize, f64, f64, f64) -> f64, impl Fn(usize, f64) -> f64> {
        FnPolicy { signal: kind, mean: |_, _, _, _| 0.0, var: |_, _| 0.0 }
    }

    #[test]
    fn deterministic_rollout_matches_surplus_iteration() {
        let mut cfg = MarketConfig::study_default();
        cfg.q = [ReturnSpec::constant(0.05, Convention::Net), ReturnSpec::constant(0.01, Convention::Net)];
        let model = MarketModel::new(cfg).unwrap();
        let ep = simulate_episode(&model, Dynamics::Market, &idle(SignalKind::Regime), 50, 1.0, 0.1, &mut stream(3, 0)).unwrap();
        let (mut x, mut l) = (1.0, 0.1);
        for s in &ep.steps[..50] {
            assert_eq!((s.x, s.l), (x, l));
            let [e0, _, q] = model.laws(s.regime);
            let (xn, ln, _) = step_surplus(x, l, 0.0, e0.mean(), 0.0, q.mean()).unwrap();
            x = xn;
            l = ln;
        }
        assert_eq!((ep.terminal().x, ep.terminal().l), (x, l));
    }

    #[test]
    fn default_horizon_has_terminal_record() {
        let model = MarketModel::study_default();
        let ep = simulate_episode(&model, Dynamics::Market, &idle(SignalKind::Filter), 2520, 1.0, 0.1, &mut stream(3, 0)).unwrap();
        assert_eq!(ep.steps.len(), 2521);
        assert!(ep.terminal().action.is_none());
        let mut buf = Vec::new();
        ep.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,x,l,regime,p_hat,action\n"));
        assert_eq!(text.lines().count(), 2522);
        assert!(text.lines().last().unwrap().ends_with(','));
    }

    #[test]
    fn bad_policy_is_reported_with_time() {
        let model = MarketModel::study_default();
        let p = FnPolicy { signal: SignalKind::Filter, mean: |t, _, _, _| if t == 7 { f64::NAN } else { 0.0 }, var: |_, _| 0.1 };
        let err = simulate_episode(&model, Dynamics::Market, &p, 20, 1.0, 0.1, &mut stream(3, 0)).unwrap_err();
        assert!(err.to_string().contains("t=7"), "{err}");
    }

    #[test]
    fn filtered_dynamics_use_mixture_means() {
        let model = MarketModel::study_default();
        let sim = Simulator::new(&model, Dynamics::Filtered(SignalKind::Filter), 30).unwrap();
        let ep = sim.run(&idle(SignalKind::Filter), 1.0, 0.1, &mut stream(9, 0)).unwrap();
        let (r1, r2) = model.moments_pair();
        for s in &ep.steps[..30] {
            let w = s.p_hat;
            let e0 = w * r1.a0 + (1.0 - w) * r2.a0;
            assert!((s.e0.unwrap() - e0).abs() < 1e-15);
        }
    }
}
